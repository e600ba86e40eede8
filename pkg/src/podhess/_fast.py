"""Compiled inner loops for the particle sweeps.

Numba mirrors of the hot numpy primitives: Euler propagation for the
built-in drift kinds, softmax observation weights, and the pairwise,
conditional and four-marginal coupling draws.  The compiled samplers
implement the same distributions draw by draw but consume the shared
generator in a different order than the vectorised numpy versions, so
the two engines realise different (identically distributed) chains.
Each engine on its own is deterministic given the seed.

Import of numba is optional; cpf falls back to the numpy path when it
is missing.
"""

import numpy as np

from .errors import CouplingCapError

try:
    from numba import njit

    NUMBA_OK = True
except ImportError:  # pragma: no cover - numba is a hard dep, belt and braces
    NUMBA_OK = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        if args and callable(args[0]):
            return args[0]
        return wrap


# keep in sync with coupling.OVERLAP_TIE
OVERLAP_TIE = 1e-14

__all__ = [
    "NUMBA_OK",
    "euler_prop",
    "obs_weights",
    "pair_draw",
    "four_draw",
    "path_prop",
    "sweep_single",
    "sweep_pair_same",
    "sweep_pair_fc",
    "sweep_four",
]


@njit(cache=True)
def _drift1(kind, theta, x, a):
    # single-state drift for the built-in models; kind matches drift_kind
    if kind == 0:
        a[0] = -theta[0] * x[0]
    elif kind == 1:
        a[0] = theta[0] - theta[1] * x[0]
        a[1] = -theta[2] * x[1]
    else:
        u = x[0]
        a[0] = theta[0] * (u - u * u * u - x[1])
        a[1] = theta[1] * u - x[1] + theta[2]


@njit(cache=True)
def euler_prop(kind, theta, x0, noise, dt, out):
    """Euler steps for a block of particles, writing every substate.

    x0 is (P, d); noise holds sigma-premultiplied increments (P, steps, d)
    and out receives the post-step states in the same shape.  Arithmetic
    matches the numpy path operation for operation.
    """
    P, steps, d = noise.shape
    a = np.empty(d)
    x = np.empty(d)
    for i in range(P):
        for j in range(d):
            x[j] = x0[i, j]
        for s in range(steps):
            _drift1(kind, theta, x, a)
            for j in range(d):
                x[j] = x[j] + a[j] * dt + noise[i, s, j]
                out[i, s, j] = x[j]


@njit(cache=True)
def obs_weights(x, y, neg2v):
    """Softmax weights from logw_i = |y - x_i|^2 / neg2v, neg2v = -2v."""
    N, d = x.shape
    w = np.empty(N)
    mx = -np.inf
    for i in range(N):
        s = 0.0
        for j in range(d):
            r = y[j] - x[i, j]
            s += r * r
        s = s / neg2v
        w[i] = s
        if s > mx:
            mx = s
    tot = 0.0
    for i in range(N):
        wi = np.exp(w[i] - mx)
        w[i] = wi
        tot += wi
    if not (tot > 0.0 and np.isfinite(tot)):
        raise ValueError("all weights vanish or are invalid")
    for i in range(N):
        w[i] /= tot
    return w


@njit(cache=True)
def path_prop(kind, theta, noise, dt, values):
    """Single-path Euler recursion writing into values, start in slot 0."""
    m, d = noise.shape
    a = np.empty(d)
    x = np.empty(d)
    for j in range(d):
        x[j] = values[0, j]
    for t in range(m):
        _drift1(kind, theta, x, a)
        for j in range(d):
            x[j] = x[j] + a[j] * dt + noise[t, j]
            values[t + 1, j] = x[j]


@njit(cache=True)
def _invert(cum, total, z):
    # first index with cum[idx] > z * total, clipped to the last cell
    v = z * total
    lo = 0
    hi = cum.size
    while lo < hi:
        mid = (lo + hi) >> 1
        if cum[mid] > v:
            hi = mid
        else:
            lo = mid + 1
    if lo >= cum.size:
        lo = cum.size - 1
    return lo


@njit(cache=True)
def _pair_setup(r1, r2):
    """Overlap/residual decomposition of a maximal coupling, cdfs included."""
    N = r1.size
    m = np.empty(N)
    cum_m = np.empty(N)
    cum1 = np.empty(N)
    cum2 = np.empty(N)
    om = 0.0
    for i in range(N):
        mi = r1[i] if r1[i] < r2[i] else r2[i]
        m[i] = mi
        om += mi
        cum_m[i] = om
    full = om >= 1.0 - OVERLAP_TIE
    t1 = 0.0
    t2 = 0.0
    for i in range(N):
        t1 += r1[i] - m[i]
        cum1[i] = t1
        t2 += r2[i] - m[i]
        cum2[i] = t2
    res1s = np.zeros(N)
    res2 = np.zeros(N)
    if not full:
        sc = 1.0 / (1.0 - om)
        for i in range(N):
            res1s[i] = (r1[i] - m[i]) * sc
            res2[i] = r2[i] - m[i]
    return m, om, full, cum_m, cum1, t1, cum2, t2, res1s, res2


@njit(cache=True)
def _pair_one(cum_m, om, full, cum1, t1, cum2, t2, inversion, rng):
    u = rng.random()
    if full or u < om:
        z = rng.random()
        k = _invert(cum_m, om, z)
        return k, k
    z1 = rng.random()
    z2 = z1 if inversion else rng.random()
    return _invert(cum1, t1, z1), _invert(cum2, t2, z2)


@njit(cache=True)
def pair_draw(r1, r2, size, inversion, rng):
    """iid maximally coupled index pairs, marginals r1 and r2."""
    _, om, full, cum_m, cum1, t1, cum2, t2, _, _ = _pair_setup(r1, r2)
    i = np.empty(size, dtype=np.int64)
    j = np.empty(size, dtype=np.int64)
    for k in range(size):
        a, b = _pair_one(cum_m, om, full, cum1, t1, cum2, t2, inversion, rng)
        i[k] = a
        j[k] = b
    return i, j


@njit(cache=True)
def _pair_mass(u, v, m, r1, r2, res1s, res2, full, printed):
    # joint pmf of the independent-residual scheme at (u, v); the printed
    # variant swaps the diagonal overlap term for min(r1[u], r2[v])
    tail = 0.0 if full else res1s[u] * res2[v]
    if printed:
        a = r1[u] if r1[u] < r2[v] else r2[v]
        return a + tail
    if u == v:
        return m[u] + tail
    return tail


@njit(cache=True)
def _cond_one(r5, r6, cum6, t6, i5, cap, rng):
    # given i5 ~ r5, complete a maximally coupled draw from r6
    u = rng.random() * r5[i5]
    if u < r6[i5]:
        return i5
    count = 0
    while True:
        count += 1
        if count > cap:
            raise CouplingCapError("conditional coupling exceeded rejection cap")
        cand = _invert(cum6, t6, rng.random())
        if rng.random() * r6[cand] > r5[cand]:
            return cand


@njit(cache=True)
def four_draw(r1, r2, r3, r4, size, printed, cap, rng):
    """iid index quadruples with marginals r1..r4, pairs maximally coupled.

    Same branch structure as the numpy four-marginal coupling: exact
    index equality when r1 == r3 or r2 == r4 componentwise, otherwise a
    per-draw accept/reject between the two pair mass functions.
    """
    N = r1.size
    eq13 = True
    for i in range(N):
        if r1[i] != r3[i]:
            eq13 = False
            break
    eq24 = True
    for i in range(N):
        if r2[i] != r4[i]:
            eq24 = False
            break
    i1 = np.empty(size, dtype=np.int64)
    i2 = np.empty(size, dtype=np.int64)
    i3 = np.empty(size, dtype=np.int64)
    i4 = np.empty(size, dtype=np.int64)
    if eq13 and not eq24:
        _, om, full, cum_m, cum1, t1, cum2, t2, _, _ = _pair_setup(r1, r2)
        cum4 = np.cumsum(r4)
        t4 = cum4[N - 1]
        for k in range(size):
            a, b = _pair_one(cum_m, om, full, cum1, t1, cum2, t2, False, rng)
            i1[k] = a
            i2[k] = b
            i3[k] = a
            i4[k] = _cond_one(r1, r4, cum4, t4, a, cap, rng)
        return i1, i2, i3, i4
    if eq24 and not eq13:
        _, om, full, cum_m, cum1, t1, cum2, t2, _, _ = _pair_setup(r1, r2)
        cum3 = np.cumsum(r3)
        t3 = cum3[N - 1]
        for k in range(size):
            a, b = _pair_one(cum_m, om, full, cum1, t1, cum2, t2, False, rng)
            i1[k] = a
            i2[k] = b
            i3[k] = _cond_one(r2, r3, cum3, t3, b, cap, rng)
            i4[k] = b
        return i1, i2, i3, i4
    m12, om12, full12, cm12, ca12, ta12, cb12, tb12, rs12, rr12 = _pair_setup(r1, r2)
    m34, om34, full34, cm34, ca34, ta34, cb34, tb34, rs34, rr34 = _pair_setup(r3, r4)
    for k in range(size):
        a, b = _pair_one(cm12, om12, full12, ca12, ta12, cb12, tb12, False, rng)
        i1[k] = a
        i2[k] = b
        u = rng.random() * _pair_mass(a, b, m12, r1, r2, rs12, rr12, full12, printed)
        if u < _pair_mass(a, b, m34, r3, r4, rs34, rr34, full34, printed):
            i3[k] = a
            i4[k] = b
        else:
            count = 0
            while True:
                count += 1
                if count > cap:
                    raise CouplingCapError(
                        "four-marginal coupling exceeded rejection cap"
                    )
                c, e = _pair_one(cm34, om34, full34, ca34, ta34, cb34, tb34, False, rng)
                keep = rng.random() * _pair_mass(
                    c, e, m34, r3, r4, rs34, rr34, full34, printed
                ) > _pair_mass(c, e, m12, r1, r2, rs12, rr12, full12, printed)
                if keep:
                    i3[k] = c
                    i4[k] = e
                    break
    return i1, i2, i3, i4


# fused sweeps ---------------------------------------------------------
#
# One call per filter sweep: propagation, weights, coupled resampling and
# the terminal pick all run inside the jit region, with only the block of
# Brownian increments drawn outside.  Reordering copies through a scratch
# buffer to get numpy's gather-then-assign semantics under aliasing.


@njit(cache=True)
def _prop_block(kind, theta, traj, base, noise, dt):
    # advance the free slots (all but the last) of traj from index base
    P, s, d = noise.shape
    a = np.empty(d)
    x = np.empty(d)
    for i in range(P):
        for j in range(d):
            x[j] = traj[i, base, j]
        for t in range(s):
            _drift1(kind, theta, x, a)
            for j in range(d):
                x[j] = x[j] + a[j] * dt + noise[i, t, j]
                traj[i, base + 1 + t, j] = x[j]


@njit(cache=True)
def _step_weights(traj, idx, y, neg2v, w):
    N, _, d = traj.shape
    mx = -np.inf
    for i in range(N):
        ssum = 0.0
        for j in range(d):
            r = y[j] - traj[i, idx, j]
            ssum += r * r
        v = ssum / neg2v
        w[i] = v
        if v > mx:
            mx = v
    tot = 0.0
    for i in range(N):
        wi = np.exp(w[i] - mx)
        w[i] = wi
        tot += wi
    if not (tot > 0.0 and np.isfinite(tot)):
        raise ValueError("all weights vanish or are invalid")
    for i in range(N):
        w[i] /= tot


@njit(cache=True)
def _gather(traj, anc, upto, scratch):
    P = anc.size
    d = traj.shape[2]
    for i in range(P):
        ai = anc[i]
        for t in range(upto + 1):
            for j in range(d):
                scratch[i, t, j] = traj[ai, t, j]
    for i in range(P):
        for t in range(upto + 1):
            for j in range(d):
                traj[i, t, j] = scratch[i, t, j]


@njit(cache=True)
def sweep_single(kind, theta, ys, traj, noise, dt, neg2v, rng):
    """One conditional-filter sweep on traj (N, m+1, d); returns the pick."""
    n = ys.shape[0]
    N = traj.shape[0]
    s = noise.shape[2]
    w = np.empty(N)
    cum = np.empty(N)
    anc = np.empty(N - 1, dtype=np.int64)
    scratch = np.empty((N - 1, traj.shape[1], traj.shape[2]))
    for k in range(n):
        _prop_block(kind, theta, traj, k * s, noise[k], dt)
        _step_weights(traj, (k + 1) * s, ys[k], neg2v, w)
        tot = 0.0
        for i in range(N):
            tot += w[i]
            cum[i] = tot
        if k + 1 < n:
            for i in range(N - 1):
                anc[i] = _invert(cum, tot, rng.random())
            _gather(traj, anc, (k + 1) * s, scratch)
        else:
            return _invert(cum, tot, rng.random())
    return N - 1


@njit(cache=True)
def sweep_pair_same(kind, theta, ys, tr, noise, dt, neg2v, inversion, rng):
    """Coupled sweep of two same-level ensembles tr (2, N, m+1, d)."""
    n = ys.shape[0]
    N = tr.shape[1]
    s = noise.shape[2]
    r1 = np.empty(N)
    r2 = np.empty(N)
    scratch = np.empty((N - 1, tr.shape[2], tr.shape[3]))
    pick = (N - 1, N - 1)
    for k in range(n):
        _prop_block(kind, theta, tr[0], k * s, noise[k], dt)
        _prop_block(kind, theta, tr[1], k * s, noise[k], dt)
        _step_weights(tr[0], (k + 1) * s, ys[k], neg2v, r1)
        _step_weights(tr[1], (k + 1) * s, ys[k], neg2v, r2)
        size = N - 1 if k + 1 < n else 1
        a1, a2 = pair_draw(r1, r2, size, inversion, rng)
        if k + 1 < n:
            _gather(tr[0], a1, (k + 1) * s, scratch)
            _gather(tr[1], a2, (k + 1) * s, scratch)
        else:
            pick = (a1[0], a2[0])
    return pick


@njit(cache=True)
def sweep_pair_fc(kind, theta, ys, trf, trc, noise, cnoise, dt, neg2v,
                  inversion, rng):
    """Coupled sweep of a level-l and a level-(l-1) ensemble."""
    n = ys.shape[0]
    N = trf.shape[0]
    s = noise.shape[2]
    sc = s // 2
    r1 = np.empty(N)
    r2 = np.empty(N)
    scratch = np.empty((N - 1, trf.shape[1], trf.shape[2]))
    pick = (N - 1, N - 1)
    for k in range(n):
        _prop_block(kind, theta, trf, k * s, noise[k], dt)
        _prop_block(kind, theta, trc, k * sc, cnoise[k], 2.0 * dt)
        _step_weights(trf, (k + 1) * s, ys[k], neg2v, r1)
        _step_weights(trc, (k + 1) * sc, ys[k], neg2v, r2)
        size = N - 1 if k + 1 < n else 1
        a1, a2 = pair_draw(r1, r2, size, inversion, rng)
        if k + 1 < n:
            _gather(trf, a1, (k + 1) * s, scratch)
            _gather(trc, a2, (k + 1) * sc, scratch)
        else:
            pick = (a1[0], a2[0])
    return pick


@njit(cache=True)
def sweep_four(kind, theta, ys, trf, trc, noise, cnoise, dt, neg2v, printed,
               cap, rng):
    """Coupled sweep of two fine and two coarse ensembles.

    trf and trc are (2, N, m+1, d); weight order for the four-marginal
    coupling is (fine, coarse, barred fine, barred coarse).
    """
    n = ys.shape[0]
    N = trf.shape[1]
    s = noise.shape[2]
    sc = s // 2
    r1 = np.empty(N)
    r2 = np.empty(N)
    r3 = np.empty(N)
    r4 = np.empty(N)
    scratch = np.empty((N - 1, trf.shape[2], trf.shape[3]))
    pick = (N - 1, N - 1, N - 1, N - 1)
    for k in range(n):
        _prop_block(kind, theta, trf[0], k * s, noise[k], dt)
        _prop_block(kind, theta, trf[1], k * s, noise[k], dt)
        _prop_block(kind, theta, trc[0], k * sc, cnoise[k], 2.0 * dt)
        _prop_block(kind, theta, trc[1], k * sc, cnoise[k], 2.0 * dt)
        _step_weights(trf[0], (k + 1) * s, ys[k], neg2v, r1)
        _step_weights(trc[0], (k + 1) * sc, ys[k], neg2v, r2)
        _step_weights(trf[1], (k + 1) * s, ys[k], neg2v, r3)
        _step_weights(trc[1], (k + 1) * sc, ys[k], neg2v, r4)
        size = N - 1 if k + 1 < n else 1
        a1, a2, a3, a4 = four_draw(r1, r2, r3, r4, size, printed, cap, rng)
        if k + 1 < n:
            _gather(trf[0], a1, (k + 1) * s, scratch)
            _gather(trc[0], a2, (k + 1) * sc, scratch)
            _gather(trf[1], a3, (k + 1) * s, scratch)
            _gather(trc[1], a4, (k + 1) * sc, scratch)
        else:
            pick = (a1[0], a2[0], a3[0], a4[0])
    return pick
