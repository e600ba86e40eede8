"""Diffusion models with Gaussian observations at unit times.

Each model is dX_t = a_theta(X_t) dt + sigma dW_t started from a fixed
point x_star, observed at times 1..n through y_p ~ N(x_p, v I).  The
last entry of theta is always the observation variance v; the remaining
entries parametrise the drift.  Drift callbacks are vectorised over any
leading batch axes of x.
"""

import numpy as np

__all__ = [
    "DiffusionModel",
    "OrnsteinUhlenbeck1D",
    "MultivariateOU2D",
    "FitzHughNagumo",
    "get_model",
    "simulate_observations",
    "MODEL_PRESETS",
]


class DiffusionModel:
    """Base class holding the constant diffusion matrix and observation law.

    Subclasses provide the drift and its first two derivative tensors in
    theta.  The Girsanov direction b = Sigma^{-1} sigma^T a and its
    derivatives are assembled here, so subclasses only ever describe a.
    """

    name = "base"
    d = None
    d_y = None
    d_theta = None
    # integer tag used by the compiled particle sweeps; None means the
    # generic interpreted path is the only one available for this model
    drift_kind = None

    def __init__(self, sigma, x_star, theta_true):
        sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
        if sigma.shape != (self.d, self.d):
            raise ValueError(f"sigma must be ({self.d}, {self.d}), got {sigma.shape}")
        self.sigma = sigma
        self.Sigma = sigma @ sigma.T
        # ellipticity check: Sigma must be well conditioned enough to invert
        w = np.linalg.eigvalsh(self.Sigma)
        if w.min() <= 0 or w.min() / w.max() < 1e-12:
            raise ValueError("sigma sigma^T is singular; model is not elliptic")
        # E = Sigma^{-1} sigma^T maps state increments to Girsanov coordinates
        self.gir = np.linalg.solve(self.Sigma, sigma.T)
        self.x_star = np.asarray(x_star, dtype=float).reshape(self.d)
        self.theta_true = np.asarray(theta_true, dtype=float).reshape(self.d_theta)
        self.validate_theta(self.theta_true)

    # drift interface -------------------------------------------------

    def drift(self, theta, x):
        raise NotImplementedError

    def drift_jac_theta(self, theta, x):
        """d a / d theta_i, shape (..., d_theta, d)."""
        raise NotImplementedError

    def drift_hess_theta(self, theta, x):
        """d^2 a / d theta_i d theta_j, shape (..., d_theta, d_theta, d)."""
        raise NotImplementedError

    def drift_affine(self, theta):
        """Return (a0, A) with a(x) = a0 + A x, for linear-drift models only."""
        raise NotImplementedError(f"{self.name} drift is not affine in x")

    # Girsanov direction ----------------------------------------------

    def b(self, theta, x):
        return self.drift(theta, x) @ self.gir.T

    def b_jac_theta(self, theta, x):
        return self.drift_jac_theta(theta, x) @ self.gir.T

    def b_hess_theta(self, theta, x):
        return self.drift_hess_theta(theta, x) @ self.gir.T

    # observation law -------------------------------------------------

    def obs_logpdf(self, theta, x, y):
        v = theta[-1]
        r2 = np.sum((np.asarray(y) - x) ** 2, axis=-1)
        return -0.5 * self.d_y * np.log(2.0 * np.pi * v) - r2 / (2.0 * v)

    def obs_logpdf_grad(self, theta, x, y):
        v = theta[-1]
        r2 = np.sum((np.asarray(y) - x) ** 2, axis=-1)
        out = np.zeros(r2.shape + (self.d_theta,))
        out[..., -1] = -0.5 * self.d_y / v + r2 / (2.0 * v * v)
        return out

    def obs_logpdf_hess(self, theta, x, y):
        v = theta[-1]
        r2 = np.sum((np.asarray(y) - x) ** 2, axis=-1)
        out = np.zeros(r2.shape + (self.d_theta, self.d_theta))
        out[..., -1, -1] = 0.5 * self.d_y / (v * v) - r2 / v**3
        return out

    def obs_logweight(self, theta, x, y):
        """obs_logpdf up to an x-independent constant; feeds softmax weights."""
        d2 = np.asarray(y) - x
        return np.sum(d2 * d2, axis=-1) / (-2.0 * theta[-1])

    def sample_obs(self, theta, x, rng):
        v = theta[-1]
        return x + np.sqrt(v) * rng.standard_normal(np.shape(x))

    # ------------------------------------------------------------------

    def validate_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.d_theta,):
            raise ValueError(
                f"theta must have shape ({self.d_theta},), got {theta.shape}"
            )
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta must be finite")
        if theta[-1] <= 0:
            raise ValueError("observation variance theta[-1] must be positive")
        return theta

    def __repr__(self):
        return f"{type(self).__name__}()"


class OrnsteinUhlenbeck1D(DiffusionModel):
    """dX = -theta1 X dt + sigma dW, observed through N(x, theta2)."""

    name = "ou1d"
    d = 1
    d_y = 1
    d_theta = 2
    drift_kind = 0

    def __init__(self, sigma=1.0, x_star=1.0, theta_true=(0.46, 0.38)):
        super().__init__(sigma, x_star, theta_true)

    def drift(self, theta, x):
        return -theta[0] * x

    def drift_jac_theta(self, theta, x):
        out = np.zeros(x.shape[:-1] + (self.d_theta, self.d))
        out[..., 0, :] = -x
        return out

    def drift_hess_theta(self, theta, x):
        return np.zeros(x.shape[:-1] + (self.d_theta, self.d_theta, self.d))

    def drift_affine(self, theta):
        return np.zeros(1), np.array([[-theta[0]]])


class MultivariateOU2D(DiffusionModel):
    """Two independent linear channels: a = (theta1 - theta2 x1, -theta3 x2)."""

    name = "mou2d"
    d = 2
    d_y = 2
    d_theta = 4
    drift_kind = 1

    def __init__(
        self,
        sigma=((0.8, 0.0), (0.0, 0.6)),
        x_star=(1.0, 1.0),
        theta_true=(0.48, 0.78, 0.37, 0.32),
    ):
        super().__init__(sigma, x_star, theta_true)

    def drift(self, theta, x):
        out = np.empty_like(x)
        out[..., 0] = theta[0] - theta[1] * x[..., 0]
        out[..., 1] = -theta[2] * x[..., 1]
        return out

    def drift_jac_theta(self, theta, x):
        out = np.zeros(x.shape[:-1] + (self.d_theta, self.d))
        out[..., 0, 0] = 1.0
        out[..., 1, 0] = -x[..., 0]
        out[..., 2, 1] = -x[..., 1]
        return out

    def drift_hess_theta(self, theta, x):
        return np.zeros(x.shape[:-1] + (self.d_theta, self.d_theta, self.d))

    def drift_affine(self, theta):
        a0 = np.array([theta[0], 0.0])
        A = np.diag([-theta[1], -theta[2]])
        return a0, A


class FitzHughNagumo(DiffusionModel):
    """Stochastic FitzHugh-Nagumo neuron with cubic voltage drift."""

    name = "fhn"
    d = 2
    d_y = 2
    d_theta = 4
    drift_kind = 2

    def __init__(
        self,
        sigma=((0.2, 0.0), (0.0, 0.4)),
        x_star=(0.0, 0.0),
        theta_true=(0.89, 0.98, 0.5, 0.79),
    ):
        super().__init__(sigma, x_star, theta_true)

    def drift(self, theta, x):
        u = x[..., 0]
        out = np.empty_like(x)
        out[..., 0] = theta[0] * (u - u * u * u - x[..., 1])
        out[..., 1] = theta[1] * u - x[..., 1] + theta[2]
        return out

    def drift_jac_theta(self, theta, x):
        u = x[..., 0]
        out = np.zeros(x.shape[:-1] + (self.d_theta, self.d))
        out[..., 0, 0] = u - u * u * u - x[..., 1]
        out[..., 1, 1] = u
        out[..., 2, 1] = 1.0
        return out

    def drift_hess_theta(self, theta, x):
        # drift is linear in theta, so the theta-Hessian vanishes identically
        return np.zeros(x.shape[:-1] + (self.d_theta, self.d_theta, self.d))


MODEL_PRESETS = {
    "ou1d": OrnsteinUhlenbeck1D,
    "mou2d": MultivariateOU2D,
    "fhn": FitzHughNagumo,
}


def get_model(name, **overrides):
    """Instantiate a built-in model by name, optionally overriding presets."""
    try:
        cls = MODEL_PRESETS[name]
    except KeyError:
        raise ValueError(
            f"unknown model {name!r}; available: {sorted(MODEL_PRESETS)}"
        ) from None
    return cls(**overrides)


def simulate_observations(model, theta, n, level=10, rng=None):
    """Simulate a latent Euler path at the given level and noisy observations.

    Returns (ys, path) where ys has shape (n, d_y) and path is the GridPath
    of the latent state over [0, n].
    """
    from .discretization import euler_unit, draw_block, GridPath

    theta = model.validate_theta(theta)
    rng = np.random.default_rng(rng)
    steps = 2**level
    m = n * steps
    values = np.empty((m + 1, model.d))
    values[0] = model.x_star
    x = model.x_star.copy()
    for k in range(n):
        block = draw_block(rng, level, model.d)
        sub = euler_unit(model, theta, x, block, level)
        values[k * steps + 1 : (k + 1) * steps + 1] = sub[1:]
        x = sub[-1]
    path = GridPath(level=level, values=values)
    ys = model.sample_obs(theta, values[steps::steps], rng)
    return ys.reshape(n, model.d_y), path
