"""Hot numeric kernels for the Gaussian-mixture backbone.

All mixture math (noisy-marginal log density, score, posterior mean and its
vector-Jacobian product) lives here as plain array functions so the inner
sampling loop never touches Python object machinery.

By default the kernels are JIT-compiled with numba. Set the environment
variable ``REWARDLANGEVIN_NUMBA=0`` before import to force the pure-numpy
fallback (same source, interpreted). ``benchmarks/bench_kernels.py`` compares
the two paths.
"""

import math
import os

import numpy as np

_LOG_2PI = math.log(2.0 * math.pi)


def _numba_enabled():
    flag = os.environ.get("REWARDLANGEVIN_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "off", "no")


def _mixture_logits(z, means, variances, logw, alpha, sigma, logp, us, s):
    """Fill per-component log-probs, score contributions and noisy variances.

    logp[c] = log w_c + log N(z; alpha*m_c, alpha^2 v_c + sigma^2)
    us[c]   = grad_z log N_c = -(z - alpha*m_c) / s_c
    """
    C, D = means.shape
    for c in range(C):
        acc = logw[c]
        for d in range(D):
            sv = alpha * alpha * variances[c, d] + sigma * sigma
            s[c, d] = sv
            diff = z[d] - alpha * means[c, d]
            us[c, d] = -diff / sv
            acc += -0.5 * (_LOG_2PI + math.log(sv)) - 0.5 * diff * diff / sv
        logp[c] = acc


def _gmm_logq_score_impl(z, means, variances, logw, alpha, sigma):
    """Log density and score of the noisy mixture marginal at one point."""
    C, D = means.shape
    logp = np.empty(C)
    us = np.empty((C, D))
    s = np.empty((C, D))
    _mixture_logits(z, means, variances, logw, alpha, sigma, logp, us, s)
    m = logp[0]
    for c in range(1, C):
        if logp[c] > m:
            m = logp[c]
    tot = 0.0
    for c in range(C):
        tot += math.exp(logp[c] - m)
    logq = m + math.log(tot)
    score = np.zeros(D)
    for c in range(C):
        r = math.exp(logp[c] - logq)
        for d in range(D):
            score[d] += r * us[c, d]
    return logq, score


def _gmm_denoise_impl(z, means, variances, logw, alpha, sigma):
    """Posterior mean of the clean latent: (z + sigma^2 * score) / alpha."""
    _, score = _gmm_logq_score_impl(z, means, variances, logw, alpha, sigma)
    D = z.shape[0]
    out = np.empty(D)
    s2 = sigma * sigma
    for d in range(D):
        out[d] = (z[d] + s2 * score[d]) / alpha
    return out


def _gmm_denoiser_vjp_impl(z, means, variances, logw, alpha, sigma, cot):
    """J_den(z,t)^T cot for the posterior-mean denoiser.

    J_den = (I + sigma^2 H) / alpha with H the Hessian of log q_t:
    H w = -sum_c r_c w/s_c + sum_c r_c u_c (u_c.w) - score (score.w).
    H is symmetric, so the VJP equals the JVP.
    """
    C, D = means.shape
    logp = np.empty(C)
    us = np.empty((C, D))
    s = np.empty((C, D))
    _mixture_logits(z, means, variances, logw, alpha, sigma, logp, us, s)
    m = logp[0]
    for c in range(1, C):
        if logp[c] > m:
            m = logp[c]
    tot = 0.0
    for c in range(C):
        tot += math.exp(logp[c] - m)
    logq = m + math.log(tot)

    score = np.zeros(D)
    hw = np.zeros(D)
    for c in range(C):
        r = math.exp(logp[c] - logq)
        uw = 0.0
        for d in range(D):
            uw += us[c, d] * cot[d]
        for d in range(D):
            score[d] += r * us[c, d]
            hw[d] += r * (us[c, d] * uw - cot[d] / s[c, d])
    sw = 0.0
    for d in range(D):
        sw += score[d] * cot[d]
    out = np.empty(D)
    s2 = sigma * sigma
    for d in range(D):
        out[d] = (cot[d] + s2 * (hw[d] - score[d] * sw)) / alpha
    return out


USING_NUMBA = False

if _numba_enabled():
    try:
        from numba import njit

        _mixture_logits = njit(cache=True)(_mixture_logits)
        _gmm_logq_score_impl = njit(cache=True)(_gmm_logq_score_impl)
        _gmm_denoise_impl = njit(cache=True)(_gmm_denoise_impl)
        _gmm_denoiser_vjp_impl = njit(cache=True)(_gmm_denoiser_vjp_impl)
        gmm_logq_score = _gmm_logq_score_impl
        gmm_denoise = _gmm_denoise_impl
        gmm_denoiser_vjp = _gmm_denoiser_vjp_impl
        USING_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a hard dep, but be safe
        gmm_logq_score = _gmm_logq_score_impl
        gmm_denoise = _gmm_denoise_impl
        gmm_denoiser_vjp = _gmm_denoiser_vjp_impl
else:
    gmm_logq_score = _gmm_logq_score_impl
    gmm_denoise = _gmm_denoise_impl
    gmm_denoiser_vjp = _gmm_denoiser_vjp_impl
