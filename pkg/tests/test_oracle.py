import numpy as np
import pytest

from rewardlangevin import oracle


def test_finite_diff_on_quadratic():
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    f = lambda x: 0.5 * float(x @ A @ x)
    x = np.array([0.7, -1.2])
    np.testing.assert_allclose(oracle.finite_diff_gradient(f, x), A @ x,
                               atol=1e-8)
    with pytest.raises(ValueError):
        oracle.finite_diff_gradient(f, x, h=0.0)


def test_gradient_check_detects_wrong_gradient():
    f = lambda x: float(np.sum(x ** 2))
    pts = [np.array([1.0, 2.0]), np.array([-0.5, 0.3])]
    good = oracle.gradient_check("good", f, lambda x: 2 * x, pts)
    bad = oracle.gradient_check("bad", f, lambda x: 3 * x, pts)
    assert good.passed and not bad.passed
    rec = bad.as_record()
    assert rec["id"] == "gradcheck.bad" and rec["pass"] is False


def test_tilted_moments_reference_case():
    # prior N(0,1), alpha = sigma = 0.5, identity decoder, reward 2*I:
    # noisy marginal N(0, 0.5); tilt by exp(z) shifts the mean to 0.5*2*... = 1
    spec = oracle.TiltedGaussianSpec([0.0], [1.0], 0.5, 0.5, [[1.0]], [2.0])
    mean, var = oracle.tilted_gaussian_moments(spec)
    assert mean[0] == pytest.approx(1.0)
    assert var[0] == pytest.approx(0.5)


def test_tilted_moments_against_quadrature():
    """Closed form vs direct numerical integration of the tilted density."""
    rng = np.random.default_rng(0)
    for _ in range(5):
        m = float(rng.standard_normal())
        v = float(0.3 + rng.random())
        alpha = float(0.2 + 0.6 * rng.random())
        sigma = float(0.2 + 0.6 * rng.random())
        w = float(rng.standard_normal())            # 1x1 decoder weight
        a = float(rng.standard_normal())
        lam = float(0.5 * rng.random())
        spec = oracle.TiltedGaussianSpec([m], [v], alpha, sigma, [[w]], [a],
                                         lam)
        mean, var = oracle.tilted_gaussian_moments(spec)

        s = alpha ** 2 * v + sigma ** 2
        slope = alpha * v / s
        z = np.linspace(alpha * m - 12 * np.sqrt(s),
                        alpha * m + 12 * np.sqrt(s), 40001)
        # posterior mean of the clean latent for a single Gaussian
        post_mean = m + slope * (z - alpha * m)
        logp = (-0.5 * (z - alpha * m) ** 2 / s) + lam * a * w * post_mean
        p = np.exp(logp - logp.max())
        p /= np.trapezoid(p, z)
        mu_num = np.trapezoid(z * p, z)
        var_num = np.trapezoid((z - mu_num) ** 2 * p, z)
        assert mu_num == pytest.approx(mean[0], abs=1e-6)
        assert var_num == pytest.approx(var[0], abs=1e-6)


def test_empirical_moments_iid():
    rng = np.random.default_rng(1)
    x = 2.0 + 1.5 * rng.standard_normal(40000)
    est = oracle.empirical_moments(x)
    assert abs(est["mean"] - 2.0) < 4 * est["se_mean"]
    assert abs(est["var"] - 2.25) < 4 * est["se_var"]
    assert est["ess"] > 0.2 * x.size            # iid chain: high ESS
    with pytest.raises(ValueError):
        oracle.empirical_moments([1.0])


def test_naive_fusion_single_family():
    total, reps, weights = oracle.naive_fusion(
        {"glb": [0.7]}, {"glb": [0.0]}, {"glb": 0.3}, {"glb": 0.5},
        {"glb": 0.0}, beta_sp=2.0, beta=2.0, kappa_fb=0.5, kappa_sch=0.5)
    assert total == pytest.approx(0.7)
    assert weights["glb"] == pytest.approx(1.0)
    assert reps["glb"] == pytest.approx(0.7)
