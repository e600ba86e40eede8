import numpy as np
import pytest

from podhess import get_model, simulate_observations


@pytest.fixture(scope="session")
def ou():
    return get_model("ou1d")


@pytest.fixture(scope="session")
def mou():
    return get_model("mou2d")


@pytest.fixture(scope="session")
def fhn():
    return get_model("fhn")


@pytest.fixture(scope="session")
def ou_ys10(ou):
    """The canonical 10-observation OU dataset used across the suite."""
    ys, _ = simulate_observations(ou, ou.theta_true, 10, level=10, rng=1234)
    return ys


@pytest.fixture(scope="session")
def ou_ys3(ou):
    """Three observations, small enough for the tensor-quadrature oracle."""
    ys, _ = simulate_observations(ou, ou.theta_true, 3, level=10, rng=7)
    return ys


def discrete_logrho(model, theta, values, level, ys):
    """Log joint density of an Euler path and its observations.

    Product of Gaussian transition kernels at step size Delta_l plus the
    observation log-densities; the ground truth that the closed-form
    path functionals must differentiate.
    """
    theta = np.asarray(theta, dtype=float)
    values = np.asarray(values, dtype=float)
    dt = 0.5**level
    x = values[:-1]
    inc = values[1:] - x - model.drift(theta, x) * dt
    Sig = model.Sigma * dt
    sol = np.linalg.solve(Sig, inc.T).T
    _, logdet = np.linalg.slogdet(Sig)
    lp = -0.5 * float((inc * sol).sum())
    lp -= 0.5 * len(inc) * (model.d * np.log(2.0 * np.pi) + logdet)
    s = 2**level
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    lp += float(model.obs_logpdf(theta, values[s::s], ys).sum())
    return lp
