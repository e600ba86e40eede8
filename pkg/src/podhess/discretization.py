"""Euler discretisation of the diffusion on dyadic grids.

Level l uses step size Delta_l = 2^-l.  All Brownian increments are drawn
at the finest level in play and aggregated by pairwise summation for the
coarse recursions, never the other way round, so fine and coarse chains
can share a single noise source.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError

DIVERGENCE_THRESHOLD = 1e12

__all__ = [
    "GridPath",
    "draw_block",
    "coarsen_block",
    "euler_unit",
    "coupled_pair_unit",
    "coupled_fine_coarse_unit",
    "coupled_four_unit",
]


@dataclass
class GridPath:
    """A path sampled on the dyadic grid of one level over [0, n]."""

    level: int
    values: np.ndarray  # (n * 2^level + 1, d)

    @property
    def d(self):
        return self.values.shape[-1]

    @property
    def n_units(self):
        return (self.values.shape[0] - 1) // 2**self.level

    def obs_states(self):
        """States at the integer observation times 1..n, shape (n, d)."""
        s = 2**self.level
        return self.values[s::s]

    def endpoint(self):
        return self.values[-1]


def draw_block(rng, level, d, lead=()):
    """Draw one unit-interval block of scaled Brownian increments.

    Returns an array of shape lead + (2^level, d) whose entries are
    N(0, Delta_l) increments, Delta_l = 2^-level.
    """
    steps = 2**level
    return rng.standard_normal(lead + (steps, d)) * np.sqrt(0.5**level)


def coarsen_block(block):
    """Aggregate a level-l block to level l-1 by pairwise summation."""
    if block.shape[-2] % 2:
        raise ValueError("block length must be even to coarsen")
    return block[..., 0::2, :] + block[..., 1::2, :]


def _check_finite(x):
    m = np.max(np.abs(x))
    if not m < DIVERGENCE_THRESHOLD:
        raise DivergenceError(f"state magnitude {m!r} exceeds {DIVERGENCE_THRESHOLD:g}")


def euler_unit(model, theta, x0, block, level):
    """Advance one unit of time with 2^level Euler steps.

    x0 has shape (..., d) and block shape (..., 2^level, d); leading axes
    broadcast.  Returns every intermediate state, shape (..., 2^level + 1, d),
    with the start point in slot 0.
    """
    steps = 2**level
    dt = 0.5**level
    noise = block @ model.sigma.T
    x = np.asarray(x0, dtype=float)
    out = np.empty(np.broadcast_shapes(x.shape[:-1], block.shape[:-2]) + (steps + 1, model.d))
    out[..., 0, :] = x
    x = out[..., 0, :]
    for k in range(steps):
        x = x + model.drift(theta, x) * dt + noise[..., k, :]
        out[..., k + 1, :] = x
    _check_finite(out)
    return out


def coupled_pair_unit(model, theta, x0, xbar0, level, rng=None, block=None):
    """Advance two level-l states through one unit sharing the same block."""
    if block is None:
        block = draw_block(rng, level, model.d)
    return (
        euler_unit(model, theta, x0, block, level),
        euler_unit(model, theta, xbar0, block, level),
    )


def coupled_fine_coarse_unit(model, theta, xf0, xc0, level, rng=None, block=None):
    """Advance a level-l state and a level-(l-1) state with common noise.

    The fine recursion consumes the level-l block directly; the coarse one
    consumes its pairwise sums.  Returns (fine_sub, coarse_sub).
    """
    if level < 1:
        raise ValueError("coupled fine/coarse stepping needs level >= 1")
    if block is None:
        block = draw_block(rng, level, model.d)
    fine = euler_unit(model, theta, xf0, block, level)
    coarse = euler_unit(model, theta, xc0, coarsen_block(block), level - 1)
    return fine, coarse


def coupled_four_unit(model, theta, xf0, xbarf0, xc0, xbarc0, level, rng=None, block=None):
    """Advance two fine and two coarse states off a single fine block.

    All four recursions are driven by the same level-l increments; the two
    coarse ones see the pairwise sums.  Returns (fine, fine_bar, coarse,
    coarse_bar) sub-paths.
    """
    if level < 1:
        raise ValueError("coupled four-chain stepping needs level >= 1")
    if block is None:
        block = draw_block(rng, level, model.d)
    cblock = coarsen_block(block)
    return (
        euler_unit(model, theta, xf0, block, level),
        euler_unit(model, theta, xbarf0, block, level),
        euler_unit(model, theta, xc0, cblock, level - 1),
        euler_unit(model, theta, xbarc0, cblock, level - 1),
    )
