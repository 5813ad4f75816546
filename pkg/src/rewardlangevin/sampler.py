"""Reverse-time multi-reward Langevin loop.

Each step: denoise to a clean latent, decode, score every enabled reward
head, fuse per-primitive scores through the adaptive policy, map the fused
image-space gradient back through decoder and denoiser Jacobians, add the
KL tether and backbone score drift, and take one Euler-Maruyama step with
scheduled noise.
"""

from dataclasses import dataclass, field

import numpy as np

from . import policy as pol
from .rewards import SP_FAMILIES, standardize


class SamplerError(ValueError):
    """Invalid sampler configuration or task."""


class DivergenceError(RuntimeError):
    """Sampling diverged; carries the partial trajectory."""

    def __init__(self, message, trajectory=None, step=None):
        super().__init__(message)
        self.trajectory = trajectory
        self.step = step


@dataclass
class TaskSpec:
    """A prompt as structured data."""

    mode: str                      # "editing" | "generation"
    prompt: str = ""
    sps: list = field(default_factory=list)
    intent: pol.IntentMixture = None
    z0: np.ndarray = None

    def __post_init__(self):
        if self.mode not in ("editing", "generation"):
            raise SamplerError(f"unknown task mode {self.mode!r}")
        if self.z0 is not None:
            self.z0 = np.asarray(self.z0, dtype=np.float64)
        if self.mode == "editing" and self.z0 is None:
            raise SamplerError("editing mode requires a source latent z0")


@dataclass
class SamplerConfig:
    steps: int = 35
    lambda_r: float = 1.0
    lambda_kl: float = 1.5
    gamma_min: float = 0.001
    gamma_max: float = 0.05
    rho: float = 2.0               # noise-schedule exponent
    mode: str = "annealed"         # or "fixed_time"
    fixed_t: float = 0.5
    seed: int = 0
    snapshot_stride: int = 0       # 0 disables latent snapshots
    max_latent_norm: float = 1e6   # divergence guard

    def __post_init__(self):
        if self.steps < 0:
            raise SamplerError("steps must be >= 0")
        if self.lambda_r < 0.0 or self.lambda_kl < 0.0:
            raise SamplerError("lambda_r and lambda_kl must be >= 0")
        if not 0.0 < self.gamma_min <= self.gamma_max:
            raise SamplerError("need 0 < gamma_min <= gamma_max")
        if self.rho <= 0.0:
            raise SamplerError("rho must be > 0")
        if self.mode not in ("annealed", "fixed_time"):
            raise SamplerError(f"unknown sampler mode {self.mode!r}")


def gamma_schedule(t, cfg, t_bar):
    """Monotone noise schedule; constant when gamma_min == gamma_max."""
    return cfg.gamma_min + (cfg.gamma_max - cfg.gamma_min) * (t / t_bar) ** cfg.rho


def kl_drift(backbone, z, t, z0, lambda_kl):
    """Tether drift -lambda_kl * J_den^T (denoise(z, t) - z0)."""
    if lambda_kl == 0.0:
        return np.zeros_like(np.asarray(z, dtype=np.float64))
    resid = backbone.denoise(z, t) - z0
    return -lambda_kl * backbone.denoiser_vjp(z, t, resid)


class Trajectory:
    """Per-step records with preallocated columns plus optional snapshots."""

    def __init__(self, families, capacity, latent_dim, snapshot_stride=0):
        self.families = tuple(families)
        n = max(capacity, 1)
        self.k = np.zeros(n, dtype=np.int64)
        self.t = np.zeros(n)
        self.eta = np.zeros(n)
        self.gamma = np.zeros(n)
        self.raw = np.full((n, len(self.families)), np.nan)
        self.std = np.full((n, len(self.families)), np.nan)
        self.weights = np.full((n, len(self.families)), np.nan)
        self.r_tot = np.zeros(n)
        self.norm_f = np.zeros(n)
        self.norm_g_reward = np.zeros(n)
        self.norm_g_kl = np.zeros(n)
        self.n_steps = 0
        self.snapshot_stride = snapshot_stride
        self._snapshots = []
        self._snapshot_steps = []
        self.latent_dim = latent_dim
        self.diverged = False

    def append(self, k, t, eta, gamma, raw, std, weights, r_tot, norm_f,
               norm_g_reward, norm_g_kl):
        i = self.n_steps
        self.k[i] = k
        self.t[i] = t
        self.eta[i] = eta
        self.gamma[i] = gamma
        for j, fam in enumerate(self.families):
            if fam in raw:
                self.raw[i, j] = raw[fam]
                self.std[i, j] = std[fam]
                self.weights[i, j] = weights[fam]
        self.r_tot[i] = r_tot
        self.norm_f[i] = norm_f
        self.norm_g_reward[i] = norm_g_reward
        self.norm_g_kl[i] = norm_g_kl
        self.n_steps += 1

    def maybe_snapshot(self, k, z, force=False):
        if self.snapshot_stride <= 0:
            return
        if force or k % self.snapshot_stride == 0:
            self._snapshots.append(np.array(z, dtype=np.float64))
            self._snapshot_steps.append(k)

    @property
    def snapshots(self):
        if not self._snapshots:
            return np.zeros((0, self.latent_dim))
        return np.stack(self._snapshots)

    @property
    def snapshot_steps(self):
        return np.asarray(self._snapshot_steps, dtype=np.int64)

    def trim(self):
        n = self.n_steps
        for name in ("k", "t", "eta", "gamma", "raw", "std", "weights", "r_tot",
                     "norm_f", "norm_g_reward", "norm_g_kl"):
            setattr(self, name, getattr(self, name)[:n])
        return self


class SamplingEngine:
    """One reverse trajectory: owns the RNG, running stats and policy state."""

    def __init__(self, backbone, bank, policy_params, task, cfg):
        self.backbone = backbone
        self.bank = bank
        self.params = policy_params
        self.task = task
        self.cfg = cfg
        self.t_bar = backbone.schedule.t_bar

        self.intent = task.intent or pol.classify_intent(task.prompt)
        self.tau = pol.base_profile(self.intent, policy_params.profiles)
        self.s_obj = pol.object_direction(self.intent)

        # SPs enabled per family; the object head silently skips SPs that
        # carry no masks.
        self.family_sps = {}
        for fam in bank.enabled:
            if fam not in SP_FAMILIES:
                continue
            sps = task.sps if fam != "oc" else [s for s in task.sps if s.masks]
            if sps:
                self.family_sps[fam] = sps
        self.active = tuple(f for f in bank.enabled
                            if f in self.family_sps or f not in SP_FAMILIES)
        if not self.active:
            raise SamplerError("no active reward families for this task")

        self.rng = np.random.default_rng(cfg.seed)
        self.stats = bank.new_stats()
        self.state = pol.PolicyState()
        self.lambda_kl = cfg.lambda_kl if task.mode == "editing" else 0.0

    # ---- single-step pieces --------------------------------------------

    def reward_drift(self, z, t):
        """Fused reward drift, total reward, and per-family records.

        Policy weights and fusion weights are treated as constants in the
        gradient; the standardization chain factor uses the statistics frozen
        after this step's update.
        """
        z_clean = self.backbone.denoise(z, t)
        image = self.backbone.decode(z_clean)

        raw = {}
        grads = {}
        sp_raw = {}
        for fam in self.active:
            if fam in SP_FAMILIES:
                sps = self.family_sps[fam]
                scores = np.empty(len(sps))
                g_list = []
                for j, sp in enumerate(sps):
                    val, g = self.bank.evaluate(fam, image, sp)
                    if fam == "oc":
                        # prompt-level direction; identical pre or post fusion
                        val, g = self.s_obj * val, self.s_obj * g
                    scores[j] = val
                    g_list.append(g)
                prev = self.state.prev_sp_raw.get(fam)
                deltas = (np.zeros(len(sps)) if prev is None
                          else np.maximum(0.0, prev - scores))
                h = pol.schedule_term(self.params.schedule_modes.get(fam, "flat"),
                                      t, self.t_bar)
                rep, sp_w = pol.fuse_sp_family(scores, self.tau[fam], deltas, h,
                                               self.params)
                raw[fam] = rep
                grads[fam] = sum(w * g for w, g in zip(sp_w, g_list))
                sp_raw[fam] = scores
            else:
                val, g = self.bank.evaluate(fam, image)
                raw[fam] = val
                grads[fam] = g

        std = {}
        scale = {}
        for fam in self.active:
            if self.bank.standardize_enabled:
                std[fam] = standardize(self.stats[fam], raw[fam],
                                       self.bank.eps_norm)
                scale[fam] = 1.0 / (self.stats[fam].std + self.bank.eps_norm)
            else:
                std[fam] = raw[fam]
                scale[fam] = 1.0

        deltas = {fam: pol.feedback_delta(self.state.prev_family_raw.get(fam),
                                          raw[fam]) for fam in self.active}
        hs = {fam: pol.schedule_term(self.params.schedule_modes.get(fam, "flat"),
                                     t, self.t_bar) for fam in self.active}
        weights = pol.compute_weights(self.active, self.tau, deltas, hs,
                                      self.params)

        r_tot = sum(weights[f] * std[f] for f in self.active)
        g_image = sum(weights[f] * scale[f] * grads[f] for f in self.active)
        drift = self.cfg.lambda_r * self.backbone.denoiser_vjp(
            z, t, self.backbone.decoder_vjp(z_clean, g_image))

        self.state.prev_family_raw = dict(raw)
        self.state.prev_sp_raw = sp_raw
        return drift, r_tot, raw, std, weights

    def init_state(self):
        """Noisy initial latent z^(0) = alpha(t_bar) z0 + sigma(t_bar) eps."""
        if self.task.mode == "generation":
            z0 = self.backbone.prior.sample(self.rng)
        else:
            z0 = self.task.z0
            if z0.shape != (self.backbone.prior.dim,):
                raise SamplerError("z0 dimension does not match the prior")
        eps = self.rng.standard_normal(self.backbone.prior.dim)
        sched = self.backbone.schedule
        z = sched.alpha(self.t_bar) * z0 + sched.sigma(self.t_bar) * eps
        t0 = self.cfg.fixed_t if self.cfg.mode == "fixed_time" else self.t_bar
        return z, t0, z0

    def langevin_step(self, z, t, z0, k, traj):
        g_reward, r_tot, raw, std, weights = self.reward_drift(z, t)
        g_kl = kl_drift(self.backbone, z, t, z0, self.lambda_kl)
        f = self.backbone.noisy_marginal_score(z, t)

        eta = pol.step_size(r_tot, self.params)
        if self.cfg.mode == "annealed":
            eta = min(eta, t)   # never step past t = 0
        if self.lambda_kl > 0.0:
            # explicit-Euler stability for the tether: the linearized update
            # multiplies (z - z0) by (1 - eta*lambda_kl*||J||^2); with ||J||
            # bounded by 1 near t = 0, eta <= 1/lambda_kl avoids overshoot
            eta = min(eta, 1.0 / self.lambda_kl)
        gamma = gamma_schedule(t, self.cfg, self.t_bar)
        noise = np.sqrt(2.0 * gamma * eta) * self.rng.standard_normal(z.shape[0])
        z_next = z + eta * (f + g_reward + g_kl) + noise
        t_next = t - eta if self.cfg.mode == "annealed" else t

        traj.append(k, t, eta, gamma, raw, std, weights, r_tot,
                    np.linalg.norm(f), np.linalg.norm(g_reward),
                    np.linalg.norm(g_kl))
        if not np.all(np.isfinite(z_next)) or \
                np.linalg.norm(z_next) > self.cfg.max_latent_norm:
            traj.diverged = True
            raise DivergenceError(
                f"latent diverged at step {k} (t={t:.6g})", traj.trim(), k)
        return z_next, t_next

    def run(self):
        """Full reverse trajectory; returns (final image, trajectory)."""
        traj = Trajectory(self.active, self.cfg.steps,
                          self.backbone.prior.dim, self.cfg.snapshot_stride)
        z, t, z0 = self.init_state()
        traj.maybe_snapshot(0, z, force=True)
        for k in range(self.cfg.steps):
            if self.cfg.mode == "annealed" and t <= 0.0:
                break
            z, t = self.langevin_step(z, t, z0, k, traj)
            traj.maybe_snapshot(k + 1, z)
        if self.cfg.mode == "annealed" and t > 0.0:
            # residual time after K steps: one deterministic jump to t = 0
            z = self.backbone.denoise(z, t)
            t = 0.0
            traj.maybe_snapshot(self.cfg.steps, z, force=True)
        final_t = self.cfg.fixed_t if self.cfg.mode == "fixed_time" else 0.0
        image = self.backbone.decode(self.backbone.denoise(z, final_t))
        traj.final_latent = z
        return image, traj.trim()


def run(backbone, bank, policy_params, task, cfg):
    """Convenience wrapper: build an engine and execute one trajectory."""
    return SamplingEngine(backbone, bank, policy_params, task, cfg).run()
