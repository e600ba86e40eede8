"""Path functionals feeding the score and Hessian estimators.

For a level-l grid path the discretised log-likelihood is

    sum_p log g_theta(y_p | x_p)
    - Delta/2 * sum_k |b_theta(x_k)|^2
    + sum_k b_theta(x_k)^T Sigma^{-1} sigma^T (x_{k+1} - x_k),

with b = Sigma^{-1} sigma^T a and every b-term evaluated at the left grid
endpoint.  The functionals below are its first and second theta-derivative
sums, plus the pointwise product of two first-derivative entries, bundled
together because the estimator always needs all three on the same path.
Paths may carry leading batch axes; everything broadcasts.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["Bundle", "log_obs_density", "loglik_grad", "loglik_hess", "eval_bundle"]


@dataclass
class Bundle:
    """Values of the three functionals on one path.

    g is the gradient sum, gg its outer product with itself (the product
    functional, evaluated pathwise), h the Hessian sum.
    """

    g: np.ndarray
    gg: np.ndarray
    h: np.ndarray

    @classmethod
    def zeros(cls, p):
        return cls(np.zeros(p), np.zeros((p, p)), np.zeros((p, p)))

    def __add__(self, other):
        return Bundle(self.g + other.g, self.gg + other.gg, self.h + other.h)

    def __sub__(self, other):
        return Bundle(self.g - other.g, self.gg - other.gg, self.h - other.h)

    def scaled(self, c):
        return Bundle(c * self.g, c * self.gg, c * self.h)


def _obs_states(values, level, n):
    s = 2**level
    return values[..., s::s, :][..., :n, :]


def log_obs_density(model, theta, values, level, ys):
    """Sum of observation log-densities along the path (batched ok)."""
    x = _obs_states(values, level, len(ys))
    return np.sum(model.obs_logpdf(theta, x, ys), axis=-1)


def _drift_terms(model, theta, values, level):
    dt = 0.5**level
    left = values[..., :-1, :]
    incr = np.diff(values, axis=-2) @ model.gir.T - dt * model.b(theta, left)
    return left, incr, dt


def loglik_grad(model, theta, values, level, ys):
    """Gradient sum G, shape (..., d_theta)."""
    left, incr, _ = _drift_terms(model, theta, values, level)
    bj = model.b_jac_theta(theta, left)
    g = np.einsum("...kpd,...kd->...p", bj, incr)
    x = _obs_states(values, level, len(ys))
    g += model.obs_logpdf_grad(theta, x, ys).sum(axis=-2)
    return g


def loglik_hess(model, theta, values, level, ys):
    """Hessian sum H, shape (..., d_theta, d_theta)."""
    left, incr, dt = _drift_terms(model, theta, values, level)
    bj = model.b_jac_theta(theta, left)
    h = -dt * np.einsum("...kpd,...kqd->...pq", bj, bj)
    bh = model.b_hess_theta(theta, left)
    if np.any(bh):
        h += np.einsum("...kpqd,...kd->...pq", bh, incr)
    x = _obs_states(values, level, len(ys))
    h += model.obs_logpdf_hess(theta, x, ys).sum(axis=-3)
    return h


def eval_bundle(model, theta, values, level, ys, grad_only=False):
    """Evaluate all functionals on one path in a single pass.

    With grad_only the Hessian sum is skipped and h holds zeros; the
    product functional gg is always filled since it costs one outer
    product.
    """
    left, incr, dt = _drift_terms(model, theta, values, level)
    bj = model.b_jac_theta(theta, left)
    g = np.einsum("...kpd,...kd->...p", bj, incr)
    x = _obs_states(values, level, len(ys))
    g = g + model.obs_logpdf_grad(theta, x, ys).sum(axis=-2)
    gg = g[..., :, None] * g[..., None, :]
    if grad_only:
        h = np.zeros_like(gg)
    else:
        h = -dt * np.einsum("...kpd,...kqd->...pq", bj, bj)
        bh = model.b_hess_theta(theta, left)
        if np.any(bh):
            h += np.einsum("...kpqd,...kd->...pq", bh, incr)
        h = h + model.obs_logpdf_hess(theta, x, ys).sum(axis=-3)
    return Bundle(g=g, gg=gg, h=h)
