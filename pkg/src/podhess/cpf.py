"""Conditional particle filter kernels, single and coupled.

Every kernel freezes the input path(s) in the last particle slot,
propagates the other N-1 slots from x_star with multinomial (or coupled)
resampling at each observation time, and returns one trajectory drawn
from the terminal weights.  Coupled variants run two or four ensembles
off shared Brownian blocks so that equal inputs reproduce equal outputs
bit for bit.  Observation weights use the log-density up to its
x-independent constant, which cancels in the softmax.

Trajectories are raw arrays of shape (n * 2^level + 1, d); ensembles add
a leading particle axis.  Per sweep, all blocks are drawn up front in
one call.  Each kernel has two engines: an interpreted numpy loop (the
reference) and a fused numba sweep for the built-in models.  The engines
sample identical distributions but consume the generator in different
orders, so the engine choice is part of the reproducibility contract.
"""

from dataclasses import dataclass

import numpy as np

from . import _fast
from .coupling import (
    REJECTION_CAP,
    PairCoupling,
    _inv_cdf,
    max_coupling4_n,
    pmf_from_logweights,
)
from .discretization import DIVERGENCE_THRESHOLD, coarsen_block, euler_unit
from .errors import DivergenceError

__all__ = [
    "CostCounter",
    "cpf_kernel",
    "ccpf_kernel0",
    "coupled_cpf_levels",
    "cccpf_kernel",
    "prior_path",
    "coupled_prior_paths",
    "init_pair0",
    "init_level_pairs",
]


@dataclass
class CostCounter:
    """Exact work counters: one euler step = one state update of one particle."""

    euler_steps: int = 0
    resample_draws: int = 0

    def add(self, other):
        self.euler_steps += other.euler_steps
        self.resample_draws += other.resample_draws


_NULL = CostCounter()


def _check_traj(*arrays):
    for a in arrays:
        m = np.max(np.abs(a))
        if not m < DIVERGENCE_THRESHOLD:
            raise DivergenceError(
                f"state magnitude {m!r} exceeds {DIVERGENCE_THRESHOLD:g}"
            )


def _use_jit(model, engine):
    """Resolve the engine choice for one kernel call.

    "auto" takes the compiled path when numba imported and the model
    carries a drift_kind tag; "numpy" forces the interpreted path.
    """
    if engine == "numpy":
        return False
    if engine not in ("auto", "jit"):
        raise ValueError(f"unknown engine {engine!r}")
    ok = _fast.NUMBA_OK and model.drift_kind is not None
    if engine == "jit" and not ok:
        raise ValueError("compiled engine unavailable for this model")
    return ok


def _weights(model, theta, states, y):
    return pmf_from_logweights(model.obs_logweight(theta, states, y))


def _reorder(traj, anc, upto):
    """Reassign the free-slot prefixes to their ancestors' histories."""
    traj[:-1, : upto + 1] = traj[anc, : upto + 1]


def _propagate(model, theta, traj, base, noise, dt):
    """Advance the free slots of traj one unit from index base.

    noise holds sigma-premultiplied increments, shape (..., steps, d)
    matching traj's particle axes minus the frozen slot.
    """
    x = traj[..., :-1, base, :]
    for j in range(noise.shape[-2]):
        x = x + model.drift(theta, x) * dt + noise[..., j, :]
        traj[..., :-1, base + 1 + j, :] = x


def prior_path(model, theta, n, level, rng, cost=_NULL, engine="auto"):
    """One dynamics-only path from x_star over [0, n] at the given level.

    Both engines draw the same increments in the same order, so prior
    paths agree bit for bit across engines.
    """
    s = 2**level
    values = np.empty((n * s + 1, model.d))
    values[0] = model.x_star
    if _use_jit(model, engine):
        theta = np.asarray(theta, dtype=float)
        block = rng.standard_normal((n * s, model.d)) * np.sqrt(0.5**level)
        _fast.path_prop(model.drift_kind, theta, block @ model.sigma.T,
                        0.5**level, values)
        _check_traj(values)
    else:
        for k in range(n):
            block = rng.standard_normal((s, model.d)) * np.sqrt(0.5**level)
            sub = euler_unit(model, theta, values[k * s], block, level)
            values[k * s + 1 : (k + 1) * s + 1] = sub[1:]
    cost.euler_steps += n * s
    return values


def coupled_prior_paths(model, theta, n, level, rng, cost=_NULL, engine="auto"):
    """A fine/coarse prior pair driven by one stream of fine increments."""
    s = 2**level
    fine = np.empty((n * s + 1, model.d))
    coarse = np.empty((n * (s // 2) + 1, model.d))
    fine[0] = model.x_star
    coarse[0] = model.x_star
    if _use_jit(model, engine):
        theta = np.asarray(theta, dtype=float)
        block = rng.standard_normal((n * s, model.d)) * np.sqrt(0.5**level)
        _fast.path_prop(model.drift_kind, theta, block @ model.sigma.T,
                        0.5**level, fine)
        _fast.path_prop(model.drift_kind, theta,
                        coarsen_block(block) @ model.sigma.T,
                        0.5 ** (level - 1), coarse)
        _check_traj(fine, coarse)
    else:
        for k in range(n):
            block = rng.standard_normal((s, model.d)) * np.sqrt(0.5**level)
            sub = euler_unit(model, theta, fine[k * s], block, level)
            fine[k * s + 1 : (k + 1) * s + 1] = sub[1:]
            csub = euler_unit(model, theta, coarse[k * (s // 2)],
                              coarsen_block(block), level - 1)
            coarse[k * (s // 2) + 1 : (k + 1) * (s // 2) + 1] = csub[1:]
    cost.euler_steps += n * s + n * (s // 2)
    return fine, coarse


def _draw_noise(model, rng, n, N, level):
    """All sigma-premultiplied increments for one sweep, (n, N-1, steps, d)."""
    s = 2**level
    block = rng.standard_normal((n, N - 1, s, model.d)) * np.sqrt(0.5**level)
    return block @ model.sigma.T


def cpf_kernel(model, theta, ys, path, level, N, rng, cost=_NULL, engine="auto"):
    """One sweep of the conditional particle filter at a single level."""
    jit = _use_jit(model, engine)
    theta = np.asarray(theta, dtype=float)
    ys = np.asarray(ys, dtype=float)
    n = len(ys)
    s = 2**level
    m = n * s
    if path.shape != (m + 1, model.d):
        raise ValueError(f"path shape {path.shape} does not match n={n}, level={level}")
    traj = np.empty((N, m + 1, model.d))
    traj[:-1, 0] = model.x_star
    traj[-1] = path
    noise = _draw_noise(model, rng, n, N, level)
    dt = 0.5**level
    if jit:
        pick = int(_fast.sweep_single(model.drift_kind, theta, ys, traj, noise,
                                      dt, -2.0 * theta[-1], rng))
    else:
        for k in range(n):
            _propagate(model, theta, traj, k * s, noise[k], dt)
            w = _weights(model, theta, traj[:, (k + 1) * s], ys[k])
            cum = np.cumsum(w)
            if k + 1 < n:
                anc = _inv_cdf(cum, rng.random(N - 1))
                _reorder(traj, anc, (k + 1) * s)
            else:
                pick = int(_inv_cdf(cum, rng.random(1))[0])
    _check_traj(traj)
    cost.euler_steps += n * (N - 1) * s
    cost.resample_draws += (n - 1) * (N - 1) + 1
    return traj[pick].copy()


def ccpf_kernel0(model, theta, ys, x, xbar, N, rng, coupling="inversion", cost=_NULL,
                 engine="auto"):
    """One sweep of the coupled conditional particle filter at level 0.

    Both ensembles share per-particle noise; ancestor pairs and the
    terminal pick come from the pairwise maximal coupling of the two
    weight vectors.  Returns the new (x, xbar).
    """
    jit = _use_jit(model, engine)
    inversion = coupling == "inversion"
    residual = "inversion" if inversion else "independent"
    theta = np.asarray(theta, dtype=float)
    ys = np.asarray(ys, dtype=float)
    n = len(ys)
    if x.shape != (n + 1, model.d) or xbar.shape != (n + 1, model.d):
        raise ValueError("input paths must be level-0 grids over [0, n]")
    tr = np.empty((2, N, n + 1, model.d))
    tr[:, :-1, 0] = model.x_star
    tr[0, -1] = x
    tr[1, -1] = xbar
    noise = _draw_noise(model, rng, n, N, 0)
    if jit:
        i, j = _fast.sweep_pair_same(model.drift_kind, theta, ys, tr, noise,
                                     1.0, -2.0 * theta[-1], inversion, rng)
        out = tr[0, int(i)].copy(), tr[1, int(j)].copy()
    else:
        for k in range(n):
            _propagate(model, theta, tr, k, noise[k], 1.0)
            r1 = _weights(model, theta, tr[0, :, k + 1], ys[k])
            r2 = _weights(model, theta, tr[1, :, k + 1], ys[k])
            pc = PairCoupling(r1, r2, residual)
            if k + 1 < n:
                a1, a2 = pc.draw(N - 1, rng)
                _reorder(tr[0], a1, k + 1)
                _reorder(tr[1], a2, k + 1)
            else:
                i, j = pc.draw(1, rng)
                out = tr[0, int(i[0])].copy(), tr[1, int(j[0])].copy()
    _check_traj(tr)
    cost.euler_steps += 2 * n * (N - 1)
    cost.resample_draws += 2 * ((n - 1) * (N - 1) + 1)
    return out


def coupled_cpf_levels(model, theta, ys, xf, xc, level, N, rng, coupling="inversion",
                       cost=_NULL, engine="auto"):
    """One sweep of two conditional filters at levels l and l-1, coupled.

    The fine ensemble consumes level-l blocks, the coarse one their
    pairwise sums; resampling couples the two weight vectors.  Returns
    the new (fine, coarse) pair.
    """
    jit = _use_jit(model, engine)
    inversion = coupling == "inversion"
    residual = "inversion" if inversion else "independent"
    theta = np.asarray(theta, dtype=float)
    ys = np.asarray(ys, dtype=float)
    n = len(ys)
    s = 2**level
    if level < 1:
        raise ValueError("two-level kernel needs level >= 1")
    trf = np.empty((N, n * s + 1, model.d))
    trc = np.empty((N, n * (s // 2) + 1, model.d))
    trf[:-1, 0] = model.x_star
    trc[:-1, 0] = model.x_star
    trf[-1] = xf
    trc[-1] = xc
    noise = _draw_noise(model, rng, n, N, level)
    cnoise = coarsen_block(noise)
    dt = 0.5**level
    if jit:
        i, j = _fast.sweep_pair_fc(model.drift_kind, theta, ys, trf, trc,
                                   noise, cnoise, dt, -2.0 * theta[-1],
                                   inversion, rng)
        out = trf[int(i)].copy(), trc[int(j)].copy()
    else:
        for k in range(n):
            _propagate(model, theta, trf, k * s, noise[k], dt)
            _propagate(model, theta, trc, k * (s // 2), cnoise[k], 2.0 * dt)
            r1 = _weights(model, theta, trf[:, (k + 1) * s], ys[k])
            r2 = _weights(model, theta, trc[:, (k + 1) * (s // 2)], ys[k])
            pc = PairCoupling(r1, r2, residual)
            if k + 1 < n:
                a1, a2 = pc.draw(N - 1, rng)
                _reorder(trf, a1, (k + 1) * s)
                _reorder(trc, a2, (k + 1) * (s // 2))
            else:
                i, j = pc.draw(1, rng)
                out = trf[int(i[0])].copy(), trc[int(j[0])].copy()
    _check_traj(trf, trc)
    cost.euler_steps += n * (N - 1) * (s + s // 2)
    cost.resample_draws += 2 * ((n - 1) * (N - 1) + 1)
    return out


def cccpf_kernel(model, theta, ys, xf, xbarf, xc, xbarc, level, N, rng,
                 pair_pmf="exact", cost=_NULL, engine="auto"):
    """One sweep of four coupled conditional filters across levels l, l-1.

    Ensembles: fine, barred fine (level l) and coarse, barred coarse
    (level l-1), all driven by one stream of fine blocks per particle.
    Ancestors and the terminal pick come from the four-marginal coupling
    with weight order (fine, coarse, barred fine, barred coarse), which
    preserves fine-pair and coarse-pair equality exactly.  Returns the
    new (xf, xbarf, xc, xbarc).
    """
    jit = _use_jit(model, engine)
    printed = pair_pmf == "printed"
    theta = np.asarray(theta, dtype=float)
    ys = np.asarray(ys, dtype=float)
    n = len(ys)
    s = 2**level
    if level < 1:
        raise ValueError("four-chain kernel needs level >= 1")
    trf = np.empty((2, N, n * s + 1, model.d))
    trc = np.empty((2, N, n * (s // 2) + 1, model.d))
    trf[:, :-1, 0] = model.x_star
    trc[:, :-1, 0] = model.x_star
    trf[0, -1] = xf
    trf[1, -1] = xbarf
    trc[0, -1] = xc
    trc[1, -1] = xbarc
    noise = _draw_noise(model, rng, n, N, level)
    cnoise = coarsen_block(noise)
    dt = 0.5**level
    if jit:
        i1, i2, i3, i4 = _fast.sweep_four(model.drift_kind, theta, ys, trf, trc,
                                          noise, cnoise, dt, -2.0 * theta[-1],
                                          printed, REJECTION_CAP, rng)
        out = (
            trf[0, int(i1)].copy(),
            trf[1, int(i3)].copy(),
            trc[0, int(i2)].copy(),
            trc[1, int(i4)].copy(),
        )
    else:
        for k in range(n):
            _propagate(model, theta, trf, k * s, noise[k], dt)
            _propagate(model, theta, trc, k * (s // 2), cnoise[k], 2.0 * dt)
            r1 = _weights(model, theta, trf[0, :, (k + 1) * s], ys[k])
            r2 = _weights(model, theta, trc[0, :, (k + 1) * (s // 2)], ys[k])
            r3 = _weights(model, theta, trf[1, :, (k + 1) * s], ys[k])
            r4 = _weights(model, theta, trc[1, :, (k + 1) * (s // 2)], ys[k])
            size = N - 1 if k + 1 < n else 1
            a1, a2, a3, a4 = max_coupling4_n(r1, r2, r3, r4, size, rng,
                                             pair_pmf=pair_pmf)
            if k + 1 < n:
                _reorder(trf[0], a1, (k + 1) * s)
                _reorder(trc[0], a2, (k + 1) * (s // 2))
                _reorder(trf[1], a3, (k + 1) * s)
                _reorder(trc[1], a4, (k + 1) * (s // 2))
            else:
                out = (
                    trf[0, int(a1[0])].copy(),
                    trf[1, int(a3[0])].copy(),
                    trc[0, int(a2[0])].copy(),
                    trc[1, int(a4[0])].copy(),
                )
    _check_traj(trf, trc)
    cost.euler_steps += 2 * n * (N - 1) * (s + s // 2)
    cost.resample_draws += 4 * ((n - 1) * (N - 1) + 1)
    return out


def init_pair0(model, theta, ys, N, rng, cost=_NULL, engine="auto"):
    """Initial level-0 chain state: one filter sweep ahead of a prior draw."""
    n = len(ys)
    xprime = prior_path(model, theta, n, 0, rng, cost, engine=engine)
    xbar = prior_path(model, theta, n, 0, rng, cost, engine=engine)
    x = cpf_kernel(model, theta, ys, xprime, 0, N, rng, cost, engine=engine)
    return x, xbar


def init_level_pairs(model, theta, ys, N, level, rng, coupling="inversion", cost=_NULL,
                     engine="auto"):
    """Initial level-l chain state for the four-chain kernel.

    The unbarred fine/coarse pair gets one two-level filter sweep; the
    barred pair stays at its coupled prior draw.
    """
    n = len(ys)
    fprime, cprime = coupled_prior_paths(model, theta, n, level, rng, cost,
                                         engine=engine)
    fbar, cbar = coupled_prior_paths(model, theta, n, level, rng, cost,
                                     engine=engine)
    xf, xc = coupled_cpf_levels(model, theta, ys, fprime, cprime, level, N, rng,
                                coupling=coupling, cost=cost, engine=engine)
    return xf, fbar, xc, cbar
