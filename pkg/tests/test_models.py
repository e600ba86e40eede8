import numpy as np
import pytest

from podhess import get_model, simulate_observations
from podhess.models import MODEL_PRESETS
from podhess.oracle import fd_gradient

ALL_MODELS = sorted(MODEL_PRESETS)


def test_builtin_presets(ou, mou, fhn):
    assert np.allclose(ou.theta_true, [0.46, 0.38])
    assert np.allclose(mou.theta_true, [0.48, 0.78, 0.37, 0.32])
    assert np.allclose(fhn.theta_true, [0.89, 0.98, 0.5, 0.79])
    assert (ou.d, ou.d_y, ou.d_theta) == (1, 1, 2)
    assert (mou.d, mou.d_y, mou.d_theta) == (2, 2, 4)
    assert (fhn.d, fhn.d_y, fhn.d_theta) == (2, 2, 4)
    assert np.allclose(mou.sigma, np.diag([0.8, 0.6]))
    assert np.allclose(fhn.sigma, np.diag([0.2, 0.4]))
    assert np.allclose(ou.x_star, [1.0])
    assert np.allclose(mou.x_star, [1.0, 1.0])
    assert np.allclose(fhn.x_star, [0.0, 0.0])


def test_get_model_unknown_name():
    with pytest.raises(ValueError, match="unknown model"):
        get_model("resnet50")


def test_drift_values_frozen(ou, mou, fhn):
    # hand-computed drift values at fixed states
    assert np.allclose(ou.drift(ou.theta_true, np.array([1.0])), [-0.46])
    a = mou.drift(mou.theta_true, np.array([1.0, 1.0]))
    assert np.allclose(a, [0.48 - 0.78, -0.37])
    a = fhn.drift(fhn.theta_true, np.array([0.5, 0.2]))
    assert np.allclose(a, [0.89 * (0.5 - 0.125 - 0.2), 0.98 * 0.5 - 0.2 + 0.5])


def test_girsanov_direction_frozen(ou, mou):
    # b = Sigma^{-1} sigma^T a; diagonal sigma reduces to a_i / sigma_i
    assert np.allclose(ou.b(ou.theta_true, np.array([1.0])), [-0.46])
    b = mou.b(mou.theta_true, np.array([1.0, 1.0]))
    assert np.allclose(b, [-0.3 / 0.8, -0.37 / 0.6])


@pytest.mark.parametrize("name", ALL_MODELS)
def test_drift_jacobian_matches_fd(name):
    model = get_model(name)
    rng = np.random.default_rng(42)
    for _ in range(5):
        x = rng.normal(size=model.d)
        theta = model.theta_true * rng.uniform(0.6, 1.4, size=model.d_theta)
        jac = model.drift_jac_theta(theta, x)
        for i in range(model.d):
            fd = fd_gradient(lambda t: model.drift(t, x)[i], theta, 1e-6)
            assert np.allclose(jac[:, i], fd, atol=1e-6), (name, i)


@pytest.mark.parametrize("name", ALL_MODELS)
def test_drift_hessian_matches_fd(name):
    model = get_model(name)
    rng = np.random.default_rng(3)
    x = rng.normal(size=model.d)
    theta = model.theta_true
    hess = model.drift_hess_theta(theta, x)
    # all built-in drifts are linear in theta, so the Hessian is zero
    assert np.allclose(hess, 0.0)
    for i in range(model.d):
        for j in range(model.d_theta):
            fd = fd_gradient(lambda t: model.drift_jac_theta(t, x)[j, i],
                             theta, 1e-5)
            assert np.allclose(hess[j, :, i], fd, atol=1e-6)


@pytest.mark.parametrize("name", ALL_MODELS)
def test_b_derivatives_match_fd(name):
    model = get_model(name)
    rng = np.random.default_rng(11)
    x = rng.normal(size=(3, model.d))
    theta = model.theta_true
    bj = model.b_jac_theta(theta, x)
    for k in range(3):
        for i in range(model.d):
            fd = fd_gradient(lambda t: model.b(t, x[k])[i], theta, 1e-6)
            assert np.allclose(bj[k, :, i], fd, atol=1e-6)


def test_drift_affine_consistency(ou, mou, fhn):
    rng = np.random.default_rng(5)
    for model in (ou, mou):
        a0, A = model.drift_affine(model.theta_true)
        for _ in range(4):
            x = rng.normal(size=model.d)
            assert np.allclose(a0 + A @ x, model.drift(model.theta_true, x))
    with pytest.raises(NotImplementedError):
        fhn.drift_affine(fhn.theta_true)


def test_obs_logpdf_matches_gaussian(mou):
    theta = mou.theta_true
    x = np.array([0.3, -0.2])
    y = np.array([0.5, 0.1])
    v = theta[-1]
    expect = -0.5 * 2 * np.log(2 * np.pi * v) - np.sum((y - x) ** 2) / (2 * v)
    assert np.allclose(mou.obs_logpdf(theta, x, y), expect)
    g = mou.obs_logpdf_grad(theta, x, y)
    fd = fd_gradient(lambda t: mou.obs_logpdf(t, x, y), theta, 1e-6)
    assert np.allclose(g, fd, atol=1e-6)
    h = mou.obs_logpdf_hess(theta, x, y)
    for j in range(4):
        fd = fd_gradient(lambda t: mou.obs_logpdf_grad(t, x, y)[j], theta, 1e-5)
        assert np.allclose(h[j], fd, atol=1e-5)


@pytest.mark.parametrize("name", ALL_MODELS)
def test_validate_theta_rejects_bad_values(name):
    model = get_model(name)
    good = model.theta_true
    with pytest.raises(ValueError):
        model.validate_theta(np.append(good, 1.0))
    bad = good.copy()
    bad[-1] = 0.0
    with pytest.raises(ValueError, match="positive"):
        model.validate_theta(bad)
    bad[-1] = -0.2
    with pytest.raises(ValueError, match="positive"):
        model.validate_theta(bad)


def test_simulate_observations_shapes_and_determinism(ou, mou):
    ys, path = simulate_observations(mou, mou.theta_true, 7, level=4, rng=99)
    assert ys.shape == (7, 2)
    assert path.values.shape == (7 * 16 + 1, 2)
    assert path.level == 4
    assert np.allclose(path.values[0], mou.x_star)
    ys2, path2 = simulate_observations(mou, mou.theta_true, 7, level=4, rng=99)
    assert np.array_equal(ys, ys2)
    assert np.array_equal(path.values, path2.values)
    # canonical dataset head stays frozen
    ys10, _ = simulate_observations(ou, ou.theta_true, 10, level=10, rng=1234)
    assert np.isclose(ys10[0, 0], 1.548371715963022)
    assert np.isclose(ys10[-1, 0], -0.3560484103824741)


def test_simulate_observations_rejects_bad_theta(ou):
    with pytest.raises(ValueError):
        simulate_observations(ou, np.array([0.46, -1.0]), 5)
