"""Reference computations the particle estimators are checked against.

For linear-drift models the unit-time transition is affine Gaussian, both
under the exact dynamics and under any Euler level, so the likelihood is
available from a Kalman filter and score/Hessian references follow by
central finite differences.  Smoothing expectations of the path
functionals at small horizon come from importance-sampled Monte Carlo or
dense Gauss-Hermite quadrature.  Nothing here touches the particle
machinery.
"""

from dataclasses import dataclass

import numpy as np
from scipy import optimize as sp_optimize

from .functionals import Bundle, eval_bundle

__all__ = [
    "fd_gradient",
    "fd_hessian",
    "LinearGaussian",
    "kalman_loglik",
    "oracle_loglik",
    "oracle_score_hessian",
    "oracle_mle",
    "smoothing_moments",
    "quadrature_moments",
]


def fd_gradient(f, theta, h=1e-4):
    """Central-difference gradient; h may be scalar or per-coordinate."""
    theta = np.asarray(theta, dtype=float)
    hs = np.broadcast_to(np.asarray(h, dtype=float), theta.shape)
    g = np.empty(theta.size)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = hs[i]
        g[i] = (f(theta + e) - f(theta - e)) / (2.0 * hs[i])
    return g


def fd_hessian(f, theta, h=1e-4):
    """Central-difference Hessian, symmetrised; h as in fd_gradient."""
    theta = np.asarray(theta, dtype=float)
    hs = np.broadcast_to(np.asarray(h, dtype=float), theta.shape)
    p = theta.size
    H = np.empty((p, p))
    f0 = f(theta)
    for i in range(p):
        ei = np.zeros_like(theta)
        ei[i] = hs[i]
        H[i, i] = (f(theta + ei) - 2.0 * f0 + f(theta - ei)) / (hs[i] * hs[i])
        for j in range(i + 1, p):
            ej = np.zeros_like(theta)
            ej[j] = hs[j]
            H[i, j] = H[j, i] = (
                f(theta + ei + ej)
                - f(theta + ei - ej)
                - f(theta - ei + ej)
                + f(theta - ei - ej)
            ) / (4.0 * hs[i] * hs[j])
    return 0.5 * (H + H.T)


@dataclass
class LinearGaussian:
    """Affine Gaussian unit-time transition x' = c + F x + N(0, Q)."""

    F: np.ndarray
    c: np.ndarray
    Q: np.ndarray

    @classmethod
    def from_exact(cls, model, theta):
        """Exact unit-time transition for a diagonal affine drift a = a0 + A x."""
        a0, A = model.drift_affine(theta)
        if np.any(A - np.diag(np.diag(A))):
            raise ValueError("exact transition implemented for diagonal A only")
        Sig = model.Sigma
        if np.any(Sig - np.diag(np.diag(Sig))):
            raise ValueError("exact transition implemented for diagonal Sigma only")
        lam = -np.diag(A)
        F = np.diag(np.exp(-lam))
        # (1 - e^-lam)/lam and (1 - e^-2lam)/(2 lam), stable as lam -> 0
        with np.errstate(invalid="ignore", divide="ignore"):
            c_fac = np.where(lam != 0.0, -np.expm1(-lam) / lam, 1.0)
            q_fac = np.where(lam != 0.0, -np.expm1(-2.0 * lam) / (2.0 * lam), 1.0)
        return cls(F=F, c=a0 * c_fac, Q=np.diag(np.diag(Sig) * q_fac))

    @classmethod
    def from_euler(cls, model, theta, level):
        """Unit-time transition induced by 2^level Euler steps."""
        a0, A = model.drift_affine(theta)
        d = model.d
        dt = 0.5**level
        M = np.eye(d) + dt * A
        F = np.eye(d)
        c = np.zeros(d)
        Q = np.zeros((d, d))
        for _ in range(2**level):
            F = M @ F
            c = M @ c + dt * a0
            Q = M @ Q @ M.T + dt * model.Sigma
        return cls(F=F, c=c, Q=Q)


def kalman_loglik(trans, obs_var, x0, ys):
    """Log-likelihood of ys under the affine Gaussian state space model.

    The initial state is the known point x0; observations are y_p ~
    N(x_p, obs_var * I) at p = 1..n.
    """
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    d = x0.size
    R = obs_var * np.eye(d)
    m = np.asarray(x0, dtype=float)
    P = np.zeros((d, d))
    ll = 0.0
    for y in ys:
        m = trans.c + trans.F @ m
        P = trans.F @ P @ trans.F.T + trans.Q
        S = P + R
        r = y - m
        sol = np.linalg.solve(S, r)
        _, logdet = np.linalg.slogdet(S)
        ll += -0.5 * (d * np.log(2.0 * np.pi) + logdet + r @ sol)
        K = np.linalg.solve(S.T, P.T).T
        m = m + K @ r
        P = P - K @ S @ K.T
    return float(ll)


def oracle_loglik(model, theta, ys, transition="exact", level=None):
    theta = model.validate_theta(theta)
    if transition == "exact":
        trans = LinearGaussian.from_exact(model, theta)
    elif transition == "euler":
        if level is None:
            raise ValueError("euler transition needs a level")
        trans = LinearGaussian.from_euler(model, theta, level)
    else:
        raise ValueError(f"unknown transition {transition!r}")
    return kalman_loglik(trans, theta[-1], model.x_star, ys)


def oracle_score_hessian(model, theta, ys, transition="exact", level=None, h=1e-4):
    """Finite-difference score and observed-information reference.

    Returns (score, hess) where hess is minus the loglik Hessian, matching
    the sign convention of the particle Hessian estimator.
    """

    def f(t):
        return oracle_loglik(model, t, ys, transition=transition, level=level)

    # probes must keep the observation variance positive, so the step in
    # the last coordinate shrinks when theta[-1] sits near zero
    theta = np.asarray(theta, dtype=float)
    hs = np.full(theta.size, h)
    hs[-1] = min(h, theta[-1] / 2.0)
    return fd_gradient(f, theta, hs), -fd_hessian(f, theta, hs)


def oracle_mle(model, ys, theta0=None, transition="exact", level=None):
    """Maximum-likelihood parameters under the Kalman oracle.

    Nelder-Mead gets within the function-value noise floor of the
    optimum, then Newton steps on the finite-difference score polish the
    point to gradient stationarity, which resolves the argmax far better
    than function values alone can.
    """
    theta0 = np.asarray(theta0 if theta0 is not None else model.theta_true, dtype=float)
    floor = 1e-6

    def neg(t):
        t = np.array(t, dtype=float)
        if t[-1] < floor:
            return np.inf
        try:
            return -oracle_loglik(model, t, ys, transition=transition, level=level)
        except (ValueError, np.linalg.LinAlgError):
            return np.inf

    res = sp_optimize.minimize(neg, theta0, method="Nelder-Mead",
                               options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000})
    if not res.success:
        raise RuntimeError(f"oracle MLE search failed: {res.message}")
    theta = np.asarray(res.x, dtype=float)
    for _ in range(40):
        g, info = oracle_score_hessian(model, theta, ys, transition=transition,
                                       level=level)
        try:
            step = np.linalg.solve(info, g)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        cand = theta + step
        if cand[-1] < floor or not np.isfinite(neg(cand)):
            break
        theta = cand
        if np.linalg.norm(step) < 1e-12:
            break
    return theta


def _prior_paths(model, theta, level, n, size, rng):
    steps = 2**level
    dt = 0.5**level
    m = n * steps
    out = np.empty((size, m + 1, model.d))
    out[:, 0] = model.x_star
    x = out[:, 0]
    sig_t = model.sigma.T
    for k in range(m):
        noise = rng.standard_normal((size, model.d)) * np.sqrt(dt)
        x = x + model.drift(theta, x) * dt + noise @ sig_t
        out[:, k + 1] = x
    return out


def smoothing_moments(model, theta, ys, level, n_samples=1_000_000, rng=None):
    """Importance-sampled smoothing expectations of the path functionals.

    Draws prior Euler paths, weights them by the observation density and
    returns (mean_bundle, se_bundle, ess).  Standard errors use the
    normalised-weight delta method.
    """
    theta = model.validate_theta(theta)
    rng = np.random.default_rng(rng)
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    n = len(ys)
    values = _prior_paths(model, theta, level, n, n_samples, rng)
    s = 2**level
    logw = np.sum(model.obs_logpdf(theta, values[:, s::s], ys), axis=-1)
    logw -= logw.max()
    w = np.exp(logw)
    w /= w.sum()
    ess = 1.0 / np.sum(w * w)
    b = eval_bundle(model, theta, values, level, ys)
    mean = Bundle(g=w @ b.g, gg=np.einsum("s,spq->pq", w, b.gg),
                  h=np.einsum("s,spq->pq", w, b.h))
    se = Bundle(
        g=np.sqrt(np.einsum("s,sp->p", w * w, (b.g - mean.g) ** 2)),
        gg=np.sqrt(np.einsum("s,spq->pq", w * w, (b.gg - mean.gg) ** 2)),
        h=np.sqrt(np.einsum("s,spq->pq", w * w, (b.h - mean.h) ** 2)),
    )
    return mean, se, ess


def quadrature_moments(model, theta, ys, level=0, nodes=80):
    """Dense Gauss-Hermite smoothing expectations for scalar level-0 models.

    Integrates prior times likelihood over the n free path points on a
    tensor grid, so it is limited to d = 1, level 0 and small n.
    """
    if model.d != 1 or level != 0:
        raise ValueError("quadrature oracle covers d=1 at level 0 only")
    theta = model.validate_theta(theta)
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    n = len(ys)
    if n > 4:
        raise ValueError("tensor quadrature grid is impractical beyond n=4")
    t, wq = np.polynomial.hermite.hermgauss(nodes)
    sig = float(model.sigma[0, 0])
    grids = np.meshgrid(*([t] * n), indexing="ij")
    weights = np.ones(grids[0].shape)
    for G in np.meshgrid(*([wq] * n), indexing="ij"):
        weights = weights * G
    values = np.empty(grids[0].shape + (n + 1, 1))
    values[..., 0, 0] = model.x_star[0]
    for k in range(n):
        prev = values[..., k, 0]
        mean = prev + model.drift(theta, prev[..., None])[..., 0]
        values[..., k + 1, 0] = mean + np.sqrt(2.0) * sig * grids[k]
    logw = np.sum(model.obs_logpdf(theta, values[..., 1:, :], ys), axis=-1)
    logw += np.log(weights)
    logw -= logw.max()
    w = np.exp(logw)
    w /= w.sum()
    b = eval_bundle(model, theta, values, level, ys)
    flat = w.ravel()
    return Bundle(
        g=np.einsum("s,sp->p", flat, b.g.reshape(-1, model.d_theta)),
        gg=np.einsum("s,spq->pq", flat, b.gg.reshape(-1, model.d_theta, model.d_theta)),
        h=np.einsum("s,spq->pq", flat, b.h.reshape(-1, model.d_theta, model.d_theta)),
    )
