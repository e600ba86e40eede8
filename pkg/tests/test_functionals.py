import numpy as np
import pytest

from podhess import get_model
from podhess.functionals import Bundle, eval_bundle, log_obs_density
from podhess.oracle import fd_gradient, fd_hessian

from conftest import discrete_logrho


def test_bundle_algebra():
    a = Bundle(np.array([1.0]), np.array([[2.0]]), np.array([[3.0]]))
    b = Bundle(np.array([0.5]), np.array([[1.0]]), np.array([[1.0]]))
    s = a + b
    assert np.allclose(s.g, [1.5]) and np.allclose(s.h, [[4.0]])
    d = a - b
    assert np.allclose(d.gg, [[1.0]])
    c = a.scaled(2.0)
    assert np.allclose(c.g, [2.0]) and np.allclose(c.gg, [[4.0]])
    z = Bundle.zeros(3)
    assert z.g.shape == (3,) and z.h.shape == (3, 3)


def test_tiny_ou_path_frozen_values(ou):
    """One level-0 step from 1.0 to 1.3 with y = 1.1, worked by hand."""
    vals = np.array([[1.0], [1.3]])
    ys = np.array([[1.1]])
    b = eval_bundle(ou, ou.theta_true, vals, 0, ys)
    assert np.allclose(b.g, [-0.76, -1.1772853186], atol=1e-9)
    assert np.allclose(b.gg, np.outer(b.g, b.g))
    assert np.allclose(b.h, [[-1.0, 0.0], [0.0, 2.7336346406]], atol=1e-9)


def test_gg_is_pathwise_outer_product(mou):
    rng = np.random.default_rng(70)
    vals = rng.normal(size=(9, 2)) * 0.5
    ys = rng.normal(size=(2, 2))
    b = eval_bundle(mou, mou.theta_true, vals, 2, ys)
    assert np.allclose(b.gg, np.outer(b.g, b.g))


def test_grad_only_skips_hessian(ou):
    rng = np.random.default_rng(17)
    vals = rng.normal(size=(5, 1))
    ys = rng.normal(size=(1, 1))
    full = eval_bundle(ou, ou.theta_true, vals, 2, ys)
    part = eval_bundle(ou, ou.theta_true, vals, 2, ys, grad_only=True)
    assert np.array_equal(part.g, full.g)
    assert np.array_equal(part.gg, full.gg)
    assert np.allclose(part.h, 0.0)


@pytest.mark.parametrize("name", ["ou1d", "mou2d", "fhn"])
def test_gradient_matches_fd_of_logrho(name):
    model = get_model(name)
    rng = np.random.default_rng(hash(name) % 2**32)
    for level, n in ((0, 2), (2, 1), (3, 2)):
        vals = rng.normal(size=(n * 2**level + 1, model.d)) * 0.6
        ys = rng.normal(size=(n, model.d_y))
        b = eval_bundle(model, model.theta_true, vals, level, ys)
        fd = fd_gradient(lambda t: discrete_logrho(model, t, vals, level, ys),
                         model.theta_true, 1e-5)
        assert np.allclose(b.g, fd, rtol=1e-4, atol=1e-6), (name, level)


@pytest.mark.parametrize("name", ["ou1d", "fhn"])
def test_hessian_matches_fd_of_logrho(name):
    model = get_model(name)
    rng = np.random.default_rng(len(name))
    level, n = 2, 2
    vals = rng.normal(size=(n * 2**level + 1, model.d)) * 0.6
    ys = rng.normal(size=(n, model.d_y))
    b = eval_bundle(model, model.theta_true, vals, level, ys)
    fd = fd_hessian(lambda t: discrete_logrho(model, t, vals, level, ys),
                    model.theta_true, 1e-4)
    assert np.allclose(b.h, fd, rtol=1e-4, atol=1e-5)


def test_batched_paths_match_loop(ou):
    rng = np.random.default_rng(90)
    vals = rng.normal(size=(7, 5, 1))
    ys = rng.normal(size=(1, 1))
    batch = eval_bundle(ou, ou.theta_true, vals, 2, ys)
    for k in range(7):
        single = eval_bundle(ou, ou.theta_true, vals[k], 2, ys)
        assert np.allclose(batch.g[k], single.g)
        assert np.allclose(batch.h[k], single.h)


def test_log_obs_density_matches_model(ou):
    rng = np.random.default_rng(44)
    vals = rng.normal(size=(9, 1))
    ys = rng.normal(size=(2, 1))
    lo = log_obs_density(ou, ou.theta_true, vals, 2, ys)
    states = vals[4::4]
    expect = ou.obs_logpdf(ou.theta_true, states, ys).sum()
    assert np.allclose(lo, expect)
