"""Analytic toy flow-matching backbone.

The latent prior is a diagonal Gaussian mixture, so the noisy marginal
q_t(z) = sum_c pi_c N(alpha(t) m_c, alpha(t)^2 v_c + sigma(t)^2 I) has an
exact score, and the denoiser is the exact posterior mean via Tweedie's
identity. The decoder is a small linear or one-hidden-tanh network with
analytic Jacobians.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels


class BackboneError(ValueError):
    """Invalid input to a backbone operation."""


@dataclass
class GaussianMixturePrior:
    """Diagonal Gaussian mixture over the latent space."""

    weights: np.ndarray    # (C,)
    means: np.ndarray      # (C, D)
    variances: np.ndarray  # (C, D), diagonal entries

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.variances = np.atleast_2d(np.asarray(self.variances, dtype=np.float64))
        if self.weights.ndim != 1 or len(self.weights) != self.means.shape[0]:
            raise BackboneError("component count mismatch between weights and means")
        if self.means.shape != self.variances.shape:
            raise BackboneError("means and variances must have identical shapes")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise BackboneError(f"component weights sum to {self.weights.sum()}, not 1")
        if np.any(self.weights <= 0):
            raise BackboneError("component weights must be positive")
        if np.any(self.variances <= 0):
            raise BackboneError("all diagonal covariance entries must be > 0")
        self.log_weights = np.log(self.weights)

    @property
    def dim(self):
        return self.means.shape[1]

    def sample(self, rng):
        """Draw one clean latent from the mixture."""
        c = rng.choice(len(self.weights), p=self.weights)
        return self.means[c] + np.sqrt(self.variances[c]) * rng.standard_normal(self.dim)


@dataclass
class InterpolationSchedule:
    """Noise interpolation alpha(t), sigma(t) on [0, t_bar]."""

    kind: str = "linear"
    t_bar: float = 0.85

    def __post_init__(self):
        if self.kind not in ("linear", "variance_preserving"):
            raise BackboneError(f"unknown schedule kind {self.kind!r}")
        if not 0.0 < self.t_bar <= 1.0:
            raise BackboneError("t_bar must lie in (0, 1]")

    def alpha(self, t):
        if self.kind == "linear":
            return 1.0 - t
        return np.cos(0.5 * np.pi * t)

    def sigma(self, t):
        if self.kind == "linear":
            return t
        return np.sin(0.5 * np.pi * t)


@dataclass
class ToyDecoder:
    """Deterministic map from latent (D) to image space (P >= D)."""

    kind: str
    weights: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("linear", "one_hidden_tanh"):
            raise BackboneError(f"unknown decoder kind {self.kind!r}")
        for k, v in self.weights.items():
            self.weights[k] = np.asarray(v, dtype=np.float64)
            if not np.all(np.isfinite(self.weights[k])):
                raise BackboneError(f"decoder parameter {k!r} has non-finite entries")

    @classmethod
    def identity(cls, dim):
        return cls("linear", {"w": np.eye(dim), "b": np.zeros(dim)})

    @classmethod
    def from_seed(cls, kind, latent_dim, image_dim, seed, hidden_dim=None):
        """Generate decoder weights from a declared seed."""
        if image_dim < latent_dim:
            raise BackboneError("image dimension must be >= latent dimension")
        rng = np.random.default_rng(seed)
        if kind == "linear":
            w = rng.standard_normal((image_dim, latent_dim)) / np.sqrt(latent_dim)
            return cls(kind, {"w": w, "b": np.zeros(image_dim)})
        hidden_dim = hidden_dim or 2 * image_dim
        w1 = rng.standard_normal((hidden_dim, latent_dim)) / np.sqrt(latent_dim)
        b1 = 0.1 * rng.standard_normal(hidden_dim)
        w2 = rng.standard_normal((image_dim, hidden_dim)) / np.sqrt(hidden_dim)
        b2 = np.zeros(image_dim)
        return cls(kind, {"w1": w1, "b1": b1, "w2": w2, "b2": b2})

    @property
    def latent_dim(self):
        return self.weights["w" if self.kind == "linear" else "w1"].shape[1]

    @property
    def image_dim(self):
        return self.weights["w" if self.kind == "linear" else "w2"].shape[0]

    def decode(self, z):
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.latent_dim,):
            raise BackboneError(
                f"decoder expects latent of dim {self.latent_dim}, got shape {z.shape}")
        if self.kind == "linear":
            return self.weights["w"] @ z + self.weights["b"]
        h = np.tanh(self.weights["w1"] @ z + self.weights["b1"])
        return self.weights["w2"] @ h + self.weights["b2"]

    def vjp(self, z, cotangent):
        """J_dec(z)^T cotangent, exact."""
        z = np.asarray(z, dtype=np.float64)
        cotangent = np.asarray(cotangent, dtype=np.float64)
        if cotangent.shape != (self.image_dim,):
            raise BackboneError(
                f"cotangent must have image dim {self.image_dim}, got {cotangent.shape}")
        if self.kind == "linear":
            return self.weights["w"].T @ cotangent
        pre = self.weights["w1"] @ z + self.weights["b1"]
        gate = 1.0 - np.tanh(pre) ** 2
        return self.weights["w1"].T @ (gate * (self.weights["w2"].T @ cotangent))


class Backbone:
    """Bundles prior, schedule and decoder; all operations are pure."""

    def __init__(self, prior, schedule, decoder):
        if decoder.latent_dim != prior.dim:
            raise BackboneError("decoder latent dim does not match prior dim")
        self.prior = prior
        self.schedule = schedule
        self.decoder = decoder

    def _check(self, z, t):
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.prior.dim,):
            raise BackboneError(f"latent must have dim {self.prior.dim}, got {z.shape}")
        if not np.all(np.isfinite(z)):
            raise BackboneError(f"non-finite latent input: {z}")
        if not 0.0 <= t <= self.schedule.t_bar + 1e-12:
            raise BackboneError(f"time {t} outside [0, {self.schedule.t_bar}]")
        return z

    def log_marginal(self, z, t):
        """log q_t(z) of the noisy mixture marginal (log-sum-exp)."""
        z = self._check(z, t)
        logq, _ = kernels.gmm_logq_score(
            z, self.prior.means, self.prior.variances, self.prior.log_weights,
            self.schedule.alpha(t), self.schedule.sigma(t))
        return logq

    def noisy_marginal_score(self, z, t):
        """grad_z log q_t(z), exact."""
        z = self._check(z, t)
        _, score = kernels.gmm_logq_score(
            z, self.prior.means, self.prior.variances, self.prior.log_weights,
            self.schedule.alpha(t), self.schedule.sigma(t))
        return score

    def denoise(self, z, t):
        """Posterior mean of the clean latent (Tweedie); identity at t = 0."""
        z = self._check(z, t)
        alpha = self.schedule.alpha(t)
        if alpha == 0.0:
            raise BackboneError("degenerate schedule endpoint: alpha(t) = 0")
        if t == 0.0:
            return z.copy()
        return kernels.gmm_denoise(
            z, self.prior.means, self.prior.variances, self.prior.log_weights,
            alpha, self.schedule.sigma(t))

    def denoiser_vjp(self, z, t, cotangent):
        """J_den(z,t)^T cotangent via the analytic posterior-mean Jacobian."""
        z = self._check(z, t)
        cotangent = np.asarray(cotangent, dtype=np.float64)
        alpha = self.schedule.alpha(t)
        if alpha == 0.0:
            raise BackboneError("degenerate schedule endpoint: alpha(t) = 0")
        if t == 0.0:
            return cotangent.copy()
        return kernels.gmm_denoiser_vjp(
            z, self.prior.means, self.prior.variances, self.prior.log_weights,
            alpha, self.schedule.sigma(t), cotangent)

    def decode(self, z_clean):
        return self.decoder.decode(z_clean)

    def decoder_vjp(self, z_clean, cotangent):
        return self.decoder.vjp(z_clean, cotangent)
