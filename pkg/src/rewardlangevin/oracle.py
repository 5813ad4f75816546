"""Independent verifiers: finite differences, conjugate tilted-Gaussian
moments, batch-means empirical moments, and a naive fusion re-implementation.

Nothing here calls the module it verifies; the duplicate computations are
deliberately written from scratch so agreement is evidence, not tautology.
"""

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class GradCheckReport:
    """Outcome of one finite-difference gradient check."""

    operation: str
    points: int
    max_rel_error: float
    worst_point: np.ndarray
    threshold: float

    @property
    def passed(self):
        return self.max_rel_error < self.threshold

    def as_record(self):
        return {"id": f"gradcheck.{self.operation}", "threshold": self.threshold,
                "measured": self.max_rel_error, "pass": bool(self.passed)}


def finite_diff_gradient(f, x, h=1e-5):
    """Central-difference gradient of a scalar function of a vector."""
    if h <= 0.0:
        raise ValueError("finite-difference step must be > 0")
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty_like(x)
    for j in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        fp = f(xp)
        fm = f(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"non-finite evaluation at coordinate {j}")
        grad[j] = (fp - fm) / (2.0 * h)
    return grad


def gradient_check(name, f, analytic_grad, points, h=1e-5, threshold=1e-6):
    """Compare an analytic gradient against central differences at many points.

    Relative error is ||g_fd - g|| / max(||g_fd||, ||g||, 1e-12) per point.
    """
    max_err = 0.0
    worst = points[0]
    for x in points:
        g_fd = finite_diff_gradient(f, x, h)
        g = analytic_grad(x)
        denom = max(np.linalg.norm(g_fd), np.linalg.norm(g), 1e-12)
        err = np.linalg.norm(g_fd - g) / denom
        if err > max_err:
            max_err = err
            worst = x
    return GradCheckReport(name, len(points), max_err, np.asarray(worst),
                           threshold)


@dataclass
class TiltedGaussianSpec:
    """Conjugate setup: single-Gaussian noisy marginal tilted by a linear
    reward composed through the posterior-mean denoiser and a linear decoder.
    """

    prior_mean: np.ndarray       # (D,) clean-component mean
    prior_var: np.ndarray        # (D,) clean-component diagonal variance
    alpha: float
    sigma: float
    decoder_weight: np.ndarray   # (P, D)
    reward_coeff: np.ndarray     # (P,) linear reward a . I
    lambda_r: float = 1.0

    def __post_init__(self):
        self.prior_mean = np.atleast_1d(np.asarray(self.prior_mean, float))
        self.prior_var = np.atleast_1d(np.asarray(self.prior_var, float))
        self.decoder_weight = np.atleast_2d(np.asarray(self.decoder_weight, float))
        self.reward_coeff = np.atleast_1d(np.asarray(self.reward_coeff, float))
        if np.any(self.prior_var <= 0.0):
            raise ValueError("prior variance must be > 0")


def tilted_gaussian_moments(spec):
    """Mean and variance of q_t tilted by exp(lambda_r * a . Dec(Den(z))).

    The noisy marginal is N(alpha m, s) with s = alpha^2 v + sigma^2. The
    posterior mean is linear, Den(z) = A z + const with A = diag(alpha v / s),
    so the reward is linear in z with coefficient c = A (W^T a). Tilting a
    Gaussian by exp(lambda c . z) shifts the mean by s * lambda * c and leaves
    the variance unchanged.
    """
    s = spec.alpha ** 2 * spec.prior_var + spec.sigma ** 2
    post_slope = spec.alpha * spec.prior_var / s
    c_eff = post_slope * (spec.decoder_weight.T @ spec.reward_coeff)
    mean = spec.alpha * spec.prior_mean + s * spec.lambda_r * c_eff
    return mean, s


def empirical_moments(samples, n_batches=None):
    """Mean, unbiased variance, and batch-means standard errors.

    Batch means absorb autocorrelation of thinned/unthinned chains; the
    effective sample size is inferred from the ratio of the naive and
    batch-means variance of the mean.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    n = x.size
    if n < 2:
        raise ValueError("need at least 2 samples")
    mean = x.mean()
    var = x.var(ddof=1)
    if n_batches is None:
        n_batches = max(2, int(math.sqrt(n)))
    size = n // n_batches
    trimmed = x[: size * n_batches].reshape(n_batches, size)
    bmeans = trimmed.mean(axis=1)
    se_mean = bmeans.std(ddof=1) / math.sqrt(n_batches)
    bvars = trimmed.var(axis=1, ddof=1)
    se_var = bvars.std(ddof=1) / math.sqrt(n_batches)
    ess = var / se_mean ** 2 if se_mean > 0 else float(n)
    return {"mean": mean, "var": var, "se_mean": se_mean, "se_var": se_var,
            "ess": min(ess, float(n))}


def naive_fusion(sp_scores, sp_deltas, family_tau, family_h, family_deltas,
                 beta_sp, beta, kappa_fb, kappa_sch):
    """Single-pass re-implementation of the two-stage reward fusion.

    ``sp_scores``/``sp_deltas`` map family -> list of per-SP values (may be a
    single-element list for prompt-level heads). Written with explicit loops
    and ``math.exp``, sharing no code with the policy module.

    Returns (total, per-family representative dict, per-family weight dict).
    """
    families = list(sp_scores.keys())
    reps = {}
    for fam in families:
        scores = sp_scores[fam]
        deltas = sp_deltas[fam]
        logits = [beta_sp * (family_tau[fam] + kappa_fb * d
                             + kappa_sch * family_h[fam]) for d in deltas]
        mx = max(logits)
        exps = [math.exp(l - mx) for l in logits]
        tot = sum(exps)
        rep = 0.0
        for e, s in zip(exps, scores):
            rep += (e / tot) * s
        reps[fam] = rep
    logits = [beta * (family_tau[fam] + kappa_fb * family_deltas[fam]
                      + kappa_sch * family_h[fam]) for fam in families]
    mx = max(logits)
    exps = [math.exp(l - mx) for l in logits]
    tot = sum(exps)
    weights = {fam: e / tot for fam, e in zip(families, exps)}
    total = 0.0
    for fam in families:
        total += weights[fam] * reps[fam]
    return total, reps, weights
