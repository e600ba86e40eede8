"""Score-driven parameter fitting: gradient ascent and Newton updates.

Both optimisers climb the log-likelihood using derivative callbacks, so
the same drivers run on unbiased particle estimates or on the Kalman
oracle.  The Newton step preconditions the score by the inverse of the
estimated observed information; optional modifications (diagonal
truncation, a ridge on the diagonal, damping of steps taken at small
score norm) follow the variants used for the harder models.  Each
iteration re-derives its estimator seed from (seed, iteration), so whole
fits are reproducible and iterations stay statistically independent.
"""

import time
from dataclasses import dataclass, replace

import numpy as np

from .estimator import estimate_derivatives, estimate_score
from .oracle import oracle_loglik, oracle_score_hessian

__all__ = [
    "FitConfig",
    "FitResult",
    "sgd_fit",
    "newton_fit",
    "estimated_score_fn",
    "estimated_derivative_fn",
    "oracle_score_fn",
    "oracle_derivative_fn",
]


@dataclass
class FitConfig:
    """Optimiser knobs; estimator knobs live in EstimatorConfig."""

    iters: int = 20
    learning_rate: float = 0.005
    diagonal_only: bool = False
    ridge: float = 1e-4
    small_grad_threshold: float = 0.0  # 0 disables step damping
    small_grad_factor: float = 1.0
    var_floor: float = 1e-4

    def __post_init__(self):
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if self.var_floor <= 0:
            raise ValueError("var_floor must be positive")


@dataclass
class FitResult:
    """Iteration trace of one fit; thetas has iters+1 rows."""

    method: str
    thetas: np.ndarray
    grads: np.ndarray
    seconds: float

    def final(self):
        return self.thetas[-1]

    def to_dict(self):
        return {
            "method": self.method,
            "thetas": self.thetas.tolist(),
            "grads": self.grads.tolist(),
            "seconds": self.seconds,
        }


def _iter_seed(seed, t):
    """A fresh 64-bit estimator seed for iteration t of a fit."""
    ss = np.random.SeedSequence(entropy=(int(seed), int(t)))
    return int(ss.generate_state(1, np.uint64)[0])


def estimated_score_fn(model, ys, cfg):
    """Per-iteration unbiased score estimates with rederived seeds."""

    def fn(theta, t):
        c = replace(cfg, seed=_iter_seed(cfg.seed, t))
        return estimate_score(model, theta, ys, c).value

    return fn


def estimated_derivative_fn(model, ys, cfg):
    """Per-iteration joint score/Hessian estimates with rederived seeds."""

    def fn(theta, t):
        c = replace(cfg, seed=_iter_seed(cfg.seed, t))
        score, hess = estimate_derivatives(model, theta, ys, c)
        return score.value, hess.value

    return fn


def oracle_score_fn(model, ys, transition="exact", level=None):
    def fn(theta, t):
        return oracle_score_hessian(model, theta, ys, transition=transition,
                                    level=level)[0]

    return fn


def oracle_derivative_fn(model, ys, transition="exact", level=None):
    def fn(theta, t):
        return oracle_score_hessian(model, theta, ys, transition=transition,
                                    level=level)

    return fn


def _project(theta, fit):
    # the observation variance is the only constrained coordinate
    theta = np.asarray(theta, dtype=float).copy()
    if theta[-1] < fit.var_floor:
        theta[-1] = fit.var_floor
    return theta


def sgd_fit(model, ys, theta0, score_fn, fit):
    """Plain gradient ascent: theta <- theta + eta * score."""
    theta = model.validate_theta(theta0).copy()
    thetas = [theta.copy()]
    grads = []
    t0 = time.perf_counter()
    for t in range(fit.iters):
        g = np.asarray(score_fn(theta, t), dtype=float)
        theta = _project(theta + fit.learning_rate * g, fit)
        thetas.append(theta.copy())
        grads.append(g)
    return FitResult("sgd", np.asarray(thetas), np.asarray(grads),
                     time.perf_counter() - t0)


def newton_fit(model, ys, theta0, derivative_fn, fit):
    """Newton ascent preconditioned by the observed information.

    derivative_fn returns (score, info) with info approximating minus
    the log-likelihood Hessian, so the update solves info step = score.
    """
    theta = model.validate_theta(theta0).copy()
    p = theta.size
    thetas = [theta.copy()]
    grads = []
    t0 = time.perf_counter()
    for t in range(fit.iters):
        g, info = derivative_fn(theta, t)
        g = np.asarray(g, dtype=float)
        info = np.asarray(info, dtype=float)
        if fit.diagonal_only:
            info = np.diag(np.diag(info))
        info = info + fit.ridge * np.eye(p)
        step = np.linalg.solve(info, g)
        if 0.0 < np.linalg.norm(g) < fit.small_grad_threshold:
            step = fit.small_grad_factor * step
        theta = _project(theta + step, fit)
        thetas.append(theta.copy())
        grads.append(g)
    return FitResult("newton", np.asarray(thetas), np.asarray(grads),
                     time.perf_counter() - t0)
