"""Couplings of probability mass functions used for coupled resampling.

Three layers: a pairwise maximal coupling (overlap plus residual), a
conditional coupling that matches a second pmf against an already drawn
index, and a four-marginal coupling built as a maximal coupling of two
pairwise maximal couplings.  All samplers exist in vectorised form (suffix
``_n``) drawing many independent copies at once; the scalar versions are
thin wrappers.  PairCoupling precomputes the cdfs once so rejection loops
and repeated draws stay cheap.
"""

import numpy as np

from .errors import CouplingCapError

REJECTION_CAP = 10_000_000
# overlap mass this close to one counts as total overlap (handles the
# all-weights-equal case without a zero-mass residual division)
OVERLAP_TIE = 1e-14

__all__ = [
    "pmf_from_logweights",
    "PairCoupling",
    "sample_max_coupling",
    "sample_inversion_residual_coupling",
    "sample_conditional_coupling",
    "sample_max_coupling4",
    "max_coupling_n",
    "conditional_coupling_n",
    "max_coupling4_n",
    "pair_sampler",
]


def pmf_from_logweights(logw):
    """Normalise unnormalised log-weights into a pmf, stabilised by the max."""
    logw = np.asarray(logw, dtype=float)
    if logw.size == 0:
        raise ValueError("empty weight vector")
    m = np.max(logw)
    if not np.isfinite(m):
        raise ValueError("all weights vanish or are invalid")
    w = np.exp(logw - m)
    return w / w.sum()


def _inv_cdf(cum, u):
    """Invert a (possibly unnormalised) cdf at uniforms scaled to its total."""
    idx = np.searchsorted(cum, u * cum[-1], side="right")
    return np.minimum(idx, cum.size - 1)


class PairCoupling:
    """Maximal coupling of two pmfs with precomputed overlap and residuals.

    draw() samples (i, j) pairs: with probability sum(min(r1, r2)) both
    indices come from the overlap and agree; otherwise they come from the
    two residuals, either independently or by inverting both residual
    cdfs at one shared uniform (residual="inversion").  mass() evaluates
    the joint pmf of the independent-residual scheme, or the printed
    variant that replaces the diagonal overlap indicator by a mixed-index
    minimum min(r1[u], r2[v]).
    """

    def __init__(self, r1, r2, residual="independent"):
        if residual not in ("independent", "inversion"):
            raise ValueError(f"unknown residual scheme {residual!r}")
        self.r1 = r1 = np.asarray(r1, dtype=float)
        self.r2 = r2 = np.asarray(r2, dtype=float)
        self.residual = residual
        m = np.minimum(r1, r2)
        self.m = m
        self.om = om = float(m.sum())
        self.full_overlap = om >= 1.0 - OVERLAP_TIE
        self.cum_m = np.cumsum(m)
        if not self.full_overlap:
            self.cum_res1 = np.cumsum(r1 - m)
            self.cum_res2 = np.cumsum(r2 - m)
            scale = 1.0 / (1.0 - om)
            self.res1_scaled = (r1 - m) * scale
            self.res2 = r2 - m

    def draw(self, size, rng):
        i = np.empty(size, dtype=np.int64)
        j = np.empty(size, dtype=np.int64)
        u = rng.random(size)
        hit = np.ones(size, dtype=bool) if self.full_overlap else u < self.om
        n_hit = int(hit.sum())
        if n_hit:
            i[hit] = j[hit] = _inv_cdf(self.cum_m, rng.random(n_hit))
        if n_hit < size:
            miss = ~hit
            z1 = rng.random(size - n_hit)
            z2 = z1 if self.residual == "inversion" else rng.random(size - n_hit)
            i[miss] = _inv_cdf(self.cum_res1, z1)
            j[miss] = _inv_cdf(self.cum_res2, z2)
        return i, j

    def mass(self, u, v, variant="exact"):
        """Joint pmf of the independent-residual draw at index pairs (u, v)."""
        if self.full_overlap:
            tail = 0.0
        else:
            tail = self.res1_scaled[u] * self.res2[v]
        if variant == "printed":
            return np.minimum(self.r1[u], self.r2[v]) + tail
        return np.where(u == v, self.m[u], 0.0) + tail


def max_coupling_n(r1, r2, size, rng, residual="independent"):
    """Draw `size` iid maximally coupled pairs (i, j), i ~ r1, j ~ r2."""
    return PairCoupling(r1, r2, residual).draw(size, rng)


def conditional_coupling_n(r5, r6, i5, rng, cap=REJECTION_CAP):
    """Complete maximal-coupling pairs given the first coordinates.

    i5 holds indices already distributed according to r5; the returned i6
    are marginally r6 and maximally coupled with i5 draw by draw.
    """
    r5 = np.asarray(r5, dtype=float)
    r6 = np.asarray(r6, dtype=float)
    i5 = np.asarray(i5, dtype=np.int64)
    p5 = r5[i5]
    if np.any(p5 <= 0.0):
        raise ValueError("conditional coupling given an index with zero mass")
    u = rng.random(i5.size) * p5
    accept = u < r6[i5]
    i6 = np.where(accept, i5, -1)
    pending = np.flatnonzero(~accept)
    cum6 = np.cumsum(r6)
    rounds = 0
    while pending.size:
        rounds += 1
        if rounds > cap:
            raise CouplingCapError("conditional coupling exceeded rejection cap")
        cand = _inv_cdf(cum6, rng.random(pending.size))
        u2 = rng.random(pending.size) * r6[cand]
        ok = u2 > r5[cand]
        i6[pending[ok]] = cand[ok]
        pending = pending[~ok]
    return i6


def max_coupling4_n(r1, r2, r3, r4, size, rng, pair_pmf="exact", cap=REJECTION_CAP):
    """Draw `size` iid index quadruples with marginals r1..r4.

    The (i1, i2) and (i3, i4) pairs are each pairwise maximally coupled
    and the two pairs are coupled with each other so that i1 == i3 and
    i2 == i4 happen as often as possible.  When r1 == r3 componentwise
    the first and third outputs agree surely (likewise r2 == r4 for the
    second and fourth), which is what keeps met chains met.

    Inner pair draws always use the independent-residual scheme, because
    the accept/reject step compares against that scheme's pair mass
    function.
    """
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    r3 = np.asarray(r3, dtype=float)
    r4 = np.asarray(r4, dtype=float)
    eq13 = np.array_equal(r1, r3)
    eq24 = np.array_equal(r2, r4)
    if eq13 and not eq24:
        i1, i2 = PairCoupling(r1, r2).draw(size, rng)
        i4 = conditional_coupling_n(r1, r4, i1, rng, cap)
        return i1, i2, i1.copy(), i4
    if eq24 and not eq13:
        i1, i2 = PairCoupling(r1, r2).draw(size, rng)
        i3 = conditional_coupling_n(r2, r3, i2, rng, cap)
        return i1, i2, i3, i2.copy()

    pc12 = PairCoupling(r1, r2)
    pc34 = PairCoupling(r3, r4)
    i1, i2 = pc12.draw(size, rng)
    u = rng.random(size) * pc12.mass(i1, i2, pair_pmf)
    accept = u < pc34.mass(i1, i2, pair_pmf)
    i3 = np.where(accept, i1, -1)
    i4 = np.where(accept, i2, -1)
    pending = np.flatnonzero(~accept)
    rounds = 0
    while pending.size:
        rounds += 1
        if rounds > cap:
            raise CouplingCapError("four-marginal coupling exceeded rejection cap")
        c3, c4 = pc34.draw(pending.size, rng)
        u2 = rng.random(pending.size) * pc34.mass(c3, c4, pair_pmf)
        ok = u2 > pc12.mass(c3, c4, pair_pmf)
        i3[pending[ok]] = c3[ok]
        i4[pending[ok]] = c4[ok]
        pending = pending[~ok]
    return i1, i2, i3, i4


# scalar wrappers ------------------------------------------------------


def sample_max_coupling(r1, r2, rng):
    """One maximally coupled pair with independent residual draws."""
    i, j = max_coupling_n(r1, r2, 1, rng, residual="independent")
    return int(i[0]), int(j[0])


def sample_inversion_residual_coupling(r1, r2, rng):
    """One maximally coupled pair, residuals inverted at a shared uniform."""
    i, j = max_coupling_n(r1, r2, 1, rng, residual="inversion")
    return int(i[0]), int(j[0])


def sample_conditional_coupling(r5, r6, i5, rng, cap=REJECTION_CAP):
    """Given i5 ~ r5, draw i6 ~ r6 maximally coupled with it."""
    out = conditional_coupling_n(r5, r6, np.array([i5]), rng, cap)
    return int(out[0])


def sample_max_coupling4(r1, r2, r3, r4, rng, pair_pmf="exact", cap=REJECTION_CAP):
    """One index quadruple with marginals r1..r4, see max_coupling4_n."""
    out = max_coupling4_n(r1, r2, r3, r4, 1, rng, pair_pmf=pair_pmf, cap=cap)
    return tuple(int(x[0]) for x in out)


def pair_sampler(kind):
    """Resolve a resampling-coupling name to a vectorised pair sampler."""
    if kind == "maximal":
        residual = "independent"
    elif kind == "inversion":
        residual = "inversion"
    else:
        raise ValueError(f"unknown coupling kind {kind!r}")

    def draw(r1, r2, size, rng):
        return PairCoupling(r1, r2, residual).draw(size, rng)

    return draw
