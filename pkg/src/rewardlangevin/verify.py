"""Self-verification checks behind the ``verify`` CLI command.

Each check returns machine-readable records ``{id, threshold, measured,
pass}``. The short suite covers gradient checks, fusion equivalence and
policy/schedule properties; ``--long`` adds the stationary tilted-density
test against the conjugate closed form.
"""

import numpy as np

from . import oracle, policy as pol, sampler as smp
from .backbone import (Backbone, GaussianMixturePrior, InterpolationSchedule,
                       ToyDecoder)
from .oracle import gradient_check
from .rewards import HpsParams, RewardBank, SemanticPrimitive, VqaAnswerSpec

GRAD_TOL = 1e-6
FD_STEP = 1e-5
HINGE_EXCLUSION = 1e-4


def _fixture(decoder_kind="one_hidden_tanh", seed=100):
    """Standard small verification setup: D=3 latent, P=6 image, F=4 features."""
    rng = np.random.default_rng(seed)
    prior = GaussianMixturePrior(
        [0.35, 0.4, 0.25],
        rng.standard_normal((3, 3)),
        0.5 + rng.random((3, 3)))
    sched = InterpolationSchedule("linear", 0.85)
    dec = ToyDecoder.from_seed(decoder_kind, 3, 6, seed + 1)
    backbone = Backbone(prior, sched, dec)
    enc = {f: rng.standard_normal((4, 6)) / np.sqrt(6)
           for f in ("glb", "per", "rg", "oc")}
    bank = RewardBank(
        ("glb", "per", "rg", "oc", "hps", "vqa"), enc,
        region_map=[0, 0, 1, 1, 2, 2], tau_rg=0.25, tau_sp=0.5,
        lambda_leak=0.1,
        hps=HpsParams(rng.standard_normal(6), 2.0, 1.5, 0.25),
        vqa=VqaAnswerSpec.from_seed([1, 3, 0], 5, 6, seed + 2))
    sp = SemanticPrimitive(
        "sp0", "verification primitive", rng.standard_normal(4),
        masks=[(rng.random(6), 0.8), (rng.random(6), 0.3)],
        region_bias=np.array([0.1, -0.2, 0.0]))
    return backbone, bank, sp, rng


def _points(rng, dim, n=50, scale=1.0):
    return [scale * rng.standard_normal(dim) for _ in range(n)]


def check_gradcheck_heads():
    backbone, bank, sp, rng = _fixture()
    records = []
    for fam in ("glb", "per", "rg", "oc"):
        rep = gradient_check(
            fam,
            lambda x, f=fam: bank.evaluate(f, x, sp)[0],
            lambda x, f=fam: bank.evaluate(f, x, sp)[1],
            _points(rng, 6), h=FD_STEP, threshold=GRAD_TOL)
        records.append(rep.as_record())
    rep = gradient_check(
        "hps", lambda x: bank.reward_hps(x)[0], lambda x: bank.reward_hps(x)[1],
        _points(rng, 6), h=FD_STEP, threshold=1e-8)
    records.append(rep.as_record())

    # VQA: keep the check away from the hinge kink
    pts = []
    while len(pts) < 50:
        x = rng.standard_normal(6)
        near_kink = False
        for t in range(len(bank.vqa.tokens)):
            logits = bank.vqa.logit_weights[t] @ x + bank.vqa.logit_biases[t]
            a = bank.vqa.tokens[t]
            others = np.delete(logits, a)
            gap = bank.vqa.margin - logits[a] + others.max()
            if abs(gap) < HINGE_EXCLUSION:
                near_kink = True
                break
        if not near_kink:
            pts.append(x)
    rep = gradient_check(
        "vqa", lambda x: bank.reward_vqa(x)[0], lambda x: bank.reward_vqa(x)[1],
        pts, h=FD_STEP, threshold=GRAD_TOL)
    records.append(rep.as_record())
    return records


def check_gradcheck_vjps():
    backbone, bank, sp, rng = _fixture()
    records = []
    cot_img = rng.standard_normal(6)
    rep = gradient_check(
        "decoder_vjp",
        lambda z: float(backbone.decode(z) @ cot_img),
        lambda z: backbone.decoder_vjp(z, cot_img),
        _points(rng, 3), h=FD_STEP, threshold=GRAD_TOL)
    records.append(rep.as_record())

    t = 0.45
    cot = rng.standard_normal(3)
    rep = gradient_check(
        "denoiser_vjp",
        lambda z: float(backbone.denoise(z, t) @ cot),
        lambda z: backbone.denoiser_vjp(z, t, cot),
        _points(rng, 3), h=FD_STEP, threshold=GRAD_TOL)
    records.append(rep.as_record())

    z0 = rng.standard_normal(3)
    lam = 1.5
    rep = gradient_check(
        "kl_drift",
        lambda z: -lam * 0.5 * float(np.sum((backbone.denoise(z, t) - z0) ** 2)),
        lambda z: smp.kl_drift(backbone, z, t, z0, lam),
        _points(rng, 3), h=FD_STEP, threshold=GRAD_TOL)
    records.append(rep.as_record())
    return records


def check_gradcheck_reward_drift():
    """End-to-end composed drift vs finite differences of lambda_r * R_tot.

    Standardization is off and kappa_fb = 0, so policy weights depend only on
    t and the fused total is an exact scalar potential of the latent.
    """
    backbone, bank, sp, rng = _fixture()
    bank.standardize_enabled = False
    params = pol.PolicyParams(kappa_fb=0.0, eta_min=0.01, eta_max=0.05)
    task = smp.TaskSpec("editing", "add a verification object", [sp],
                        pol.IntentMixture(0.6, 0.1, 0.3), np.zeros(3))
    cfg = smp.SamplerConfig(steps=1, lambda_r=0.7, seed=0)
    t = 0.45

    def make_engine():
        return smp.SamplingEngine(backbone, bank, params, task, cfg)

    rep = gradient_check(
        "reward_drift",
        lambda z: cfg.lambda_r * make_engine().reward_drift(z, t)[1],
        lambda z: make_engine().reward_drift(z, t)[0],
        _points(rng, 3), h=FD_STEP, threshold=GRAD_TOL)
    return [rep.as_record()]


def check_fusion_equivalence():
    rng = np.random.default_rng(2024)
    fams = ("glb", "per", "rg", "oc", "hps", "vqa")
    max_err = 0.0
    for _ in range(100):
        params = pol.PolicyParams(beta=float(0.5 + 2 * rng.random()),
                                  beta_sp=float(0.5 + 2 * rng.random()),
                                  kappa_fb=float(rng.random()),
                                  kappa_sch=float(rng.random()),
                                  eta_min=0.01, eta_max=0.05)
        n_sp = int(rng.integers(1, 5))
        tau = {f: float(rng.standard_normal()) for f in fams}
        hs = {f: float(rng.random()) for f in fams}
        fam_deltas = {f: float(rng.random()) for f in fams}
        sp_scores, sp_deltas, reps = {}, {}, {}
        for f in fams:
            if f in ("glb", "per", "rg", "oc"):
                scores = rng.standard_normal(n_sp)
                deltas = rng.random(n_sp)
            else:
                scores = rng.standard_normal(1)
                deltas = np.zeros(1)
            sp_scores[f] = list(scores)
            sp_deltas[f] = list(deltas)
            reps[f], _ = pol.fuse_sp_family(scores, tau[f], deltas, hs[f],
                                            params)
        weights = pol.compute_weights(fams, tau, fam_deltas, hs, params)
        total = sum(weights[f] * reps[f] for f in fams)
        naive_total, _, _ = oracle.naive_fusion(
            sp_scores, sp_deltas, tau, hs, fam_deltas,
            params.beta_sp, params.beta, params.kappa_fb, params.kappa_sch)
        max_err = max(max_err, abs(total - naive_total))
    return [{"id": "fusion.equivalence", "threshold": 1e-10,
             "measured": max_err, "pass": bool(max_err < 1e-10)}]


def check_policy_properties():
    rng = np.random.default_rng(7)
    records = []
    params = pol.PolicyParams(eta_min=0.01, eta_max=0.05)

    # weight simplex
    worst = 0.0
    fams = ("glb", "per", "rg", "oc", "hps", "vqa")
    for _ in range(200):
        tau = {f: float(rng.standard_normal()) for f in fams}
        deltas = {f: float(rng.random()) for f in fams}
        hs = {f: float(rng.random()) for f in fams}
        w = pol.compute_weights(fams, tau, deltas, hs, params)
        vals = np.array(list(w.values()))
        worst = max(worst, abs(vals.sum() - 1.0), float(max(0.0, -vals.min())))
    records.append({"id": "policy.weight_simplex", "threshold": 1e-9,
                    "measured": worst, "pass": bool(worst < 1e-9)})

    # step size: bounds, strict monotonicity, midpoint
    grid = np.linspace(-5.0, 5.0, 100)
    etas = np.array([pol.step_size(r, params) for r in grid])
    in_bounds = bool(np.all(etas >= params.eta_min) and
                     np.all(etas <= params.eta_max))
    monotone = bool(np.all(np.diff(etas) < 0.0))
    mid_err = abs(pol.step_size(params.r0, params)
                  - 0.5 * (params.eta_min + params.eta_max))
    records.append({"id": "policy.step_size_bounds", "threshold": 1.0,
                    "measured": 0.0 if in_bounds else 1.0, "pass": in_bounds})
    records.append({"id": "policy.step_size_monotone", "threshold": 1.0,
                    "measured": 0.0 if monotone else 1.0, "pass": monotone})
    records.append({"id": "policy.step_size_midpoint", "threshold": 1e-12,
                    "measured": mid_err, "pass": bool(mid_err < 1e-12)})

    # object direction bounds and vertices
    worst = 0.0
    for _ in range(100):
        p = rng.dirichlet((1.0, 1.0, 1.0))
        s = pol.object_direction(pol.IntentMixture(*p))
        worst = max(worst, abs(s) - 1.0)
    vertex_err = max(abs(pol.object_direction(pol.IntentMixture(1, 0, 0)) - 1),
                     abs(pol.object_direction(pol.IntentMixture(0, 1, 0)) + 1))
    records.append({"id": "policy.object_direction", "threshold": 1e-12,
                    "measured": max(worst, vertex_err),
                    "pass": bool(max(worst, vertex_err) < 1e-12)})

    # argmax invariance under beta scaling
    stable = True
    for _ in range(50):
        tau = {f: float(rng.standard_normal()) for f in fams}
        deltas = {f: float(rng.random()) for f in fams}
        hs = {f: float(rng.random()) for f in fams}
        args = set()
        for scale in (0.3, 1.0, 4.0):
            p = pol.PolicyParams(beta=2.0 * scale, eta_min=0.01, eta_max=0.05)
            w = pol.compute_weights(fams, tau, deltas, hs, p)
            args.add(max(w, key=w.get))
        stable = stable and len(args) == 1
    records.append({"id": "policy.argmax_invariance", "threshold": 1.0,
                    "measured": 0.0 if stable else 1.0, "pass": stable})
    return records


def check_gamma_schedule():
    cfg = smp.SamplerConfig(gamma_min=0.2, gamma_max=1.7, rho=2.5)
    t_bar = 0.85
    err = max(abs(smp.gamma_schedule(t_bar, cfg, t_bar) - cfg.gamma_max),
              abs(smp.gamma_schedule(0.0, cfg, t_bar) - cfg.gamma_min))
    const_cfg = smp.SamplerConfig(gamma_min=0.5, gamma_max=0.5)
    const_err = max(abs(smp.gamma_schedule(t, const_cfg, t_bar) - 0.5)
                    for t in np.linspace(0, t_bar, 20))
    err = max(err, const_err)
    return [{"id": "schedule.gamma", "threshold": 1e-12, "measured": err,
             "pass": bool(err < 1e-12)}]


def check_vqa_ceiling():
    """Logits with a 50-unit margin for every answer token give R ~ 0."""
    T, V, P = 3, 5, 4
    tokens = [2, 0, 4]
    w = np.zeros((T, V, P))
    b = np.zeros((T, V))
    for t, a in enumerate(tokens):
        b[t, a] = 50.0
    spec = VqaAnswerSpec(tokens, V, w, b, margin=1.0, margin_weight=0.5)
    bank = RewardBank(("vqa",), vqa=spec)
    val, _ = bank.reward_vqa(np.zeros(P))
    return [{"id": "vqa.ceiling", "threshold": 1e-6, "measured": abs(val),
             "pass": bool(abs(val) < 1e-6)}]


def stationarity_config(steps=110_000, eta=0.01, seed=0):
    """Conjugate fixed-time setup whose tilted target is known in closed form."""
    prior = GaussianMixturePrior([1.0], [[0.0]], [[1.0]])
    sched = InterpolationSchedule("linear", 0.85)
    backbone = Backbone(prior, sched, ToyDecoder.identity(1))
    bank = RewardBank(("lin",), lin_coeff=[2.0], standardize=False)
    params = pol.PolicyParams(eta_min=eta, eta_max=eta)
    task = smp.TaskSpec("editing", "", [], pol.IntentMixture(1, 0, 0),
                        np.zeros(1))
    cfg = smp.SamplerConfig(steps=steps, lambda_r=1.0, lambda_kl=0.0,
                            gamma_min=1.0, gamma_max=1.0, rho=1.0,
                            mode="fixed_time", fixed_t=0.5, seed=seed,
                            snapshot_stride=1)
    return backbone, bank, params, task, cfg


def check_stationarity(burn_in=10_000, retained=100_000, seed=0):
    backbone, bank, params, task, cfg = stationarity_config(
        steps=burn_in + retained, seed=seed)
    _, traj = smp.run(backbone, bank, params, task, cfg)
    chain = traj.snapshots[burn_in + 1:, 0]

    spec = oracle.TiltedGaussianSpec([0.0], [1.0], alpha=0.5, sigma=0.5,
                                     decoder_weight=[[1.0]], reward_coeff=[2.0],
                                     lambda_r=1.0)
    mean_true, var_true = oracle.tilted_gaussian_moments(spec)
    est = oracle.empirical_moments(chain)
    mean_err = abs(est["mean"] - mean_true[0])
    var_err = abs(est["var"] - var_true[0])
    return [
        {"id": "stationarity.mean", "threshold": float(3 * est["se_mean"]),
         "measured": float(mean_err),
         "pass": bool(mean_err < 3 * est["se_mean"])},
        {"id": "stationarity.var", "threshold": float(3 * est["se_var"]),
         "measured": float(var_err),
         "pass": bool(var_err < 3 * est["se_var"])},
    ]


SHORT_CHECKS = {
    "gradcheck.heads": check_gradcheck_heads,
    "gradcheck.vjps": check_gradcheck_vjps,
    "gradcheck.reward_drift": check_gradcheck_reward_drift,
    "fusion": check_fusion_equivalence,
    "policy": check_policy_properties,
    "schedule": check_gamma_schedule,
    "vqa.ceiling": check_vqa_ceiling,
}

LONG_CHECKS = {
    "stationarity": check_stationarity,
}


def run_checks(only=None, long=False):
    """Run selected checks; returns (records, all_passed).

    ``only`` selects by record id prefix, e.g. ``gradcheck.vqa`` or ``policy``.
    """
    registry = dict(SHORT_CHECKS)
    if long:
        registry.update(LONG_CHECKS)
    records = []
    for group, fn in registry.items():
        if only is not None and \
                group.split(".")[0] != only.split(".")[0] and \
                not group.startswith(only):
            continue
        group_records = fn()
        if only is not None:
            group_records = [r for r in group_records
                             if r["id"] == only or r["id"].startswith(only)]
        records.extend(group_records)
    if only is not None and not records:
        raise ValueError(f"no verification check matches {only!r}")
    return records, all(r["pass"] for r in records)
