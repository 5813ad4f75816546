import numpy as np
import pytest

from rewardlangevin import kernels
from rewardlangevin.backbone import (Backbone, BackboneError,
                                     GaussianMixturePrior,
                                     InterpolationSchedule, ToyDecoder)
from rewardlangevin.oracle import finite_diff_gradient


@pytest.fixture
def backbone():
    prior = GaussianMixturePrior([0.3, 0.7], [[-1.0, 0.2], [0.8, -0.5]],
                                 [[0.5, 0.9], [0.4, 0.6]])
    sched = InterpolationSchedule("linear", 0.85)
    return Backbone(prior, sched, ToyDecoder.from_seed("linear", 2, 4, 5))


def test_prior_validation():
    with pytest.raises(BackboneError):
        GaussianMixturePrior([0.5, 0.6], [[0.0], [1.0]], [[1.0], [1.0]])
    with pytest.raises(BackboneError):
        GaussianMixturePrior([1.0], [[0.0]], [[-1.0]])
    with pytest.raises(BackboneError):
        GaussianMixturePrior([0.5, 0.5], [[0.0], [1.0]], [[1.0]])


def test_prior_sampling_moments():
    prior = GaussianMixturePrior([0.4, 0.6], [[-2.0], [1.0]], [[0.3], [0.5]])
    rng = np.random.default_rng(0)
    xs = np.array([prior.sample(rng)[0] for _ in range(20000)])
    assert abs(xs.mean() - (0.4 * -2.0 + 0.6 * 1.0)) < 0.05


def test_schedule_endpoints():
    lin = InterpolationSchedule("linear", 0.85)
    assert lin.alpha(0.0) == 1.0 and lin.sigma(0.0) == 0.0
    vp = InterpolationSchedule("variance_preserving", 0.85)
    for t in np.linspace(0, 0.85, 7):
        assert vp.alpha(t) ** 2 + vp.sigma(t) ** 2 == pytest.approx(1.0)
    with pytest.raises(BackboneError):
        InterpolationSchedule("cosine", 0.85)
    with pytest.raises(BackboneError):
        InterpolationSchedule("linear", 0.0)


def test_score_matches_log_marginal_fd(backbone):
    rng = np.random.default_rng(1)
    for t in (0.1, 0.45, 0.85):
        for _ in range(5):
            z = rng.standard_normal(2)
            g_fd = finite_diff_gradient(lambda x: backbone.log_marginal(x, t), z)
            g = backbone.noisy_marginal_score(z, t)
            assert np.linalg.norm(g_fd - g) < 1e-6 * max(1, np.linalg.norm(g))


def test_denoise_identity_at_zero(backbone):
    z = np.array([0.3, -0.7])
    np.testing.assert_array_equal(backbone.denoise(z, 0.0), z)
    np.testing.assert_array_equal(backbone.denoiser_vjp(z, 0.0, z), z)


def test_denoise_tweedie_consistency(backbone):
    # posterior mean must equal (z + sigma^2 * score) / alpha
    rng = np.random.default_rng(2)
    for t in (0.2, 0.6):
        a, s = backbone.schedule.alpha(t), backbone.schedule.sigma(t)
        for _ in range(5):
            z = rng.standard_normal(2)
            expect = (z + s ** 2 * backbone.noisy_marginal_score(z, t)) / a
            np.testing.assert_allclose(backbone.denoise(z, t), expect,
                                       rtol=0, atol=1e-12)


def test_single_component_denoiser_jacobian():
    # one Gaussian: J_den = (alpha v / s) I exactly
    prior = GaussianMixturePrior([1.0], [[0.4, -0.2]], [[0.7, 0.7]])
    sched = InterpolationSchedule("linear", 0.85)
    bb = Backbone(prior, sched, ToyDecoder.identity(2))
    t = 0.35
    a, sg = sched.alpha(t), sched.sigma(t)
    slope = a * 0.7 / (a ** 2 * 0.7 + sg ** 2)
    z = np.array([1.1, -0.3])
    for cot in (np.array([1.0, 0.0]), np.array([0.4, -2.0])):
        np.testing.assert_allclose(bb.denoiser_vjp(z, t, cot), slope * cot,
                                   rtol=0, atol=1e-12)


def test_denoiser_vjp_matches_fd(backbone):
    rng = np.random.default_rng(3)
    t = 0.5
    cot = rng.standard_normal(2)
    for _ in range(5):
        z = rng.standard_normal(2)
        g_fd = finite_diff_gradient(
            lambda x: float(backbone.denoise(x, t) @ cot), z)
        g = backbone.denoiser_vjp(z, t, cot)
        assert np.linalg.norm(g_fd - g) < 1e-6 * max(1, np.linalg.norm(g))


def test_decoder_kinds_and_vjp():
    rng = np.random.default_rng(4)
    for kind in ("linear", "one_hidden_tanh"):
        dec = ToyDecoder.from_seed(kind, 3, 5, 9)
        cot = rng.standard_normal(5)
        z = rng.standard_normal(3)
        g_fd = finite_diff_gradient(lambda x: float(dec.decode(x) @ cot), z)
        np.testing.assert_allclose(dec.vjp(z, cot), g_fd, atol=1e-7)
    ident = ToyDecoder.identity(3)
    np.testing.assert_array_equal(ident.decode(np.arange(3.0)), np.arange(3.0))
    with pytest.raises(BackboneError):
        ToyDecoder.from_seed("linear", 4, 3, 0)   # image dim < latent dim
    with pytest.raises(BackboneError):
        ToyDecoder("mlp", {})


def test_input_validation(backbone):
    with pytest.raises(BackboneError):
        backbone.denoise(np.array([1.0, np.nan]), 0.2)
    with pytest.raises(BackboneError):
        backbone.log_marginal(np.zeros(2), 0.9)    # t > t_bar
    with pytest.raises(BackboneError):
        backbone.log_marginal(np.zeros(2), -0.1)
    with pytest.raises(BackboneError):
        backbone.decode(np.zeros(3))


def test_kernel_paths_agree():
    """The jitted kernels and their pure-python sources give identical values."""
    rng = np.random.default_rng(6)
    means = rng.standard_normal((3, 2))
    variances = 0.2 + rng.random((3, 2))
    logw = np.log(np.full(3, 1 / 3))
    alpha, sigma = 0.6, 0.4
    for _ in range(20):
        z = rng.standard_normal(2)
        cot = rng.standard_normal(2)
        for fn in (kernels.gmm_logq_score, kernels.gmm_denoise,
                   kernels.gmm_denoiser_vjp):
            plain = getattr(fn, "py_func", fn)
            args = (z, means, variances, logw, alpha, sigma)
            if fn is kernels.gmm_denoiser_vjp:
                args = args + (cot,)
            a = fn(*args)
            b = plain(*args)
            if isinstance(a, tuple):
                assert a[0] == b[0]
                np.testing.assert_array_equal(a[1], b[1])
            else:
                np.testing.assert_array_equal(a, b)
