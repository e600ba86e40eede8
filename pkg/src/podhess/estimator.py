"""Unbiased score and Hessian estimators over randomised levels.

One replicate draws a highest level L from the level distribution, runs
one coupled chain per level 0..L to compute time-averaged functional
increments, divides each by the level's survival probability and sums.
The Hessian replicate combines such a sum with an independent
gradient-only sum so the product of expectations term factorises; minus
the product-functional and Hessian-functional sums gives the observed
information convention (minus the log-likelihood Hessian).
"""

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .cpf import (
    CostCounter,
    ccpf_kernel0,
    cccpf_kernel,
    init_level_pairs,
    init_pair0,
)
from .errors import MeetingTimeoutError
from .functionals import Bundle, eval_bundle

__all__ = [
    "LevelDistribution",
    "EstimatorConfig",
    "unbiased_increment",
    "score_level_sum",
    "hessian_replicate",
    "estimate_score",
    "estimate_hessian",
    "estimate_derivatives",
    "ScoreEstimate",
    "HessianEstimate",
]


class LevelDistribution:
    """Distribution of the randomised discretisation level.

    Modes: "truncated" puts mass proportional to 2^-l on 0..L_max;
    "polylog" uses 2^-l (l+1) log2(2+l)^2 on all levels; "polylog-sqrt"
    replaces 2^-l by 2^-l/2.  The unbounded modes are tabulated far past
    the reach of double-precision uniforms.
    """

    _TAIL = 220

    def __init__(self, mode="truncated", L_max=None):
        if mode == "truncated":
            if L_max is None or L_max < 0:
                raise ValueError("truncated mode needs L_max >= 0")
            w = 0.5 ** np.arange(L_max + 1)
        elif mode in ("polylog", "polylog-sqrt"):
            l = np.arange(self._TAIL, dtype=float)
            decay = 0.5**l if mode == "polylog" else 0.5 ** (l / 2.0)
            w = decay * (l + 1.0) * np.log2(2.0 + l) ** 2
        else:
            raise ValueError(f"unknown level distribution mode {mode!r}")
        self.mode = mode
        self.L_max = L_max
        self.p = w / w.sum()
        self._cum = np.cumsum(self.p)
        # survival P(L >= l); exact 1 at zero by construction
        tail = np.cumsum(self.p[::-1])[::-1]
        tail[0] = 1.0
        self._tail = tail

    def prob(self, l):
        return float(self.p[l])

    def survival(self, l):
        return float(self._tail[l])

    def sample(self, rng):
        return int(np.searchsorted(self._cum, rng.random(), side="right"))


@dataclass
class EstimatorConfig:
    """Knobs shared by every estimator entry point."""

    N: int = 32
    m_star: int = 2
    M: int = 1000
    seed: int = 0
    workers: int = 1
    coupling: str = "inversion"
    pair_pmf: str = "exact"
    level_mode: str = "truncated"
    L_max: int = 5
    chain_cap: int = 100_000
    engine: str = "auto"

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("need at least two particles")
        if self.m_star < 1:
            raise ValueError("m_star must be >= 1")
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.coupling not in ("maximal", "inversion"):
            raise ValueError(f"unknown coupling {self.coupling!r}")
        if self.pair_pmf not in ("exact", "printed"):
            raise ValueError(f"unknown pair_pmf {self.pair_pmf!r}")
        if self.engine not in ("auto", "numpy", "jit"):
            raise ValueError(f"unknown engine {self.engine!r}")

    def level_dist(self):
        return LevelDistribution(self.level_mode, self.L_max)


def unbiased_increment(model, theta, ys, level, cfg, rng, grad_only=False,
                       cost=None):
    """Time-averaged functional increment of one coupled chain.

    Level 0 runs the coupled pair of conditional filters; level >= 1 runs
    the four-chain kernel across (level, level-1) and returns the fine
    average minus the coarse average, each stopped at its own meeting
    time.  Returns (Bundle, diagnostics dict).
    """
    cost = cost if cost is not None else CostCounter()
    if level == 0:
        return _increment0(model, theta, ys, cfg, rng, grad_only, cost)
    return _increment_l(model, theta, ys, level, cfg, rng, grad_only, cost)


def _increment0(model, theta, ys, cfg, rng, grad_only, cost):
    x, xbar = init_pair0(model, theta, ys, cfg.N, rng, cost, engine=cfg.engine)
    acc = None
    met = None
    m = 0
    while True:
        m += 1
        if m > cfg.chain_cap:
            raise MeetingTimeoutError(
                f"level-0 chain unmet after {cfg.chain_cap} sweeps"
            )
        x, xbar = ccpf_kernel0(model, theta, ys, x, xbar, cfg.N, rng,
                               coupling=cfg.coupling, cost=cost,
                               engine=cfg.engine)
        if met is None and np.array_equal(x, xbar):
            met = m
        if m == cfg.m_star:
            acc = eval_bundle(model, theta, x, 0, ys, grad_only)
        elif m > cfg.m_star and met is None:
            acc = acc + (
                eval_bundle(model, theta, x, 0, ys, grad_only)
                - eval_bundle(model, theta, xbar, 0, ys, grad_only)
            )
        if met is not None and m >= cfg.m_star:
            return acc, {"level": 0, "tau": met, "iterations": m}


def _increment_l(model, theta, ys, level, cfg, rng, grad_only, cost):
    xf, xbf, xc, xbc = init_level_pairs(model, theta, ys, cfg.N, level, rng,
                                        coupling=cfg.coupling, cost=cost,
                                        engine=cfg.engine)
    accf = accc = None
    met_f = met_c = None
    m = 0
    while True:
        m += 1
        if m > cfg.chain_cap:
            raise MeetingTimeoutError(
                f"level-{level} chain unmet after {cfg.chain_cap} sweeps "
                f"(fine met at {met_f}, coarse at {met_c})"
            )
        xf, xbf, xc, xbc = cccpf_kernel(model, theta, ys, xf, xbf, xc, xbc,
                                        level, cfg.N, rng,
                                        pair_pmf=cfg.pair_pmf, cost=cost,
                                        engine=cfg.engine)
        if met_f is None and np.array_equal(xf, xbf):
            met_f = m
        if met_c is None and np.array_equal(xc, xbc):
            met_c = m
        if m == cfg.m_star:
            accf = eval_bundle(model, theta, xf, level, ys, grad_only)
            accc = eval_bundle(model, theta, xc, level - 1, ys, grad_only)
        elif m > cfg.m_star:
            if met_f is None:
                accf = accf + (
                    eval_bundle(model, theta, xf, level, ys, grad_only)
                    - eval_bundle(model, theta, xbf, level, ys, grad_only)
                )
            if met_c is None:
                accc = accc + (
                    eval_bundle(model, theta, xc, level - 1, ys, grad_only)
                    - eval_bundle(model, theta, xbc, level - 1, ys, grad_only)
                )
        if met_f is not None and met_c is not None and m >= cfg.m_star:
            diag = {"level": level, "tau": max(met_f, met_c),
                    "tau_fine": met_f, "tau_coarse": met_c, "iterations": m}
            return accf - accc, diag


def score_level_sum(model, theta, ys, cfg, rng, grad_only=False, cost=None):
    """Draw L and sum survival-weighted increments over levels 0..L."""
    cost = cost if cost is not None else CostCounter()
    dist = cfg.level_dist()
    L = dist.sample(rng)
    total = Bundle.zeros(model.d_theta)
    taus = []
    for l in range(L + 1):
        inc, diag = unbiased_increment(model, theta, ys, l, cfg, rng,
                                       grad_only=grad_only, cost=cost)
        total = total + inc.scaled(1.0 / dist.survival(l))
        taus.append(diag["tau"])
    return total, {"L": L, "taus": taus}


def hessian_replicate(model, theta, ys, cfg, rng, rng_tilde):
    """One replicate of the Hessian estimator, shape (d_theta, d_theta).

    The product term pairs gradient entries i <= j across the two
    independent streams and is mirrored to keep the matrix symmetric.
    """
    cost = CostCounter()
    S, diag = score_level_sum(model, theta, ys, cfg, rng, cost=cost)
    T, diag_t = score_level_sum(model, theta, ys, cfg, rng_tilde,
                                grad_only=True, cost=cost)
    prod = np.outer(S.g, T.g)
    prod = np.triu(prod) + np.triu(prod, 1).T
    out = prod - S.gg - S.h
    info = {"L": diag["L"], "L_tilde": diag_t["L"],
            "taus": diag["taus"] + diag_t["taus"], "cost": cost,
            "score": S.g}
    return out, info


def _replicate_seed(seed, k):
    return np.random.SeedSequence(entropy=seed, spawn_key=(k,))


def _score_worker(args):
    model, theta, ys, cfg, k = args
    rng = np.random.default_rng(_replicate_seed(cfg.seed, k))
    cost = CostCounter()
    S, diag = score_level_sum(model, theta, ys, cfg, rng, cost=cost)
    diag["cost"] = cost
    return S.g, diag


def _hessian_worker(args):
    model, theta, ys, cfg, k = args
    ss = _replicate_seed(cfg.seed, k).spawn(2)
    rng = np.random.default_rng(ss[0])
    rng_tilde = np.random.default_rng(ss[1])
    return hessian_replicate(model, theta, ys, cfg, rng, rng_tilde)


def _run_replicates(worker, model, theta, ys, cfg):
    jobs = [(model, theta, ys, cfg, k) for k in range(cfg.M)]
    if cfg.workers <= 1:
        return [worker(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        chunk = max(1, cfg.M // (cfg.workers * 8))
        return list(pool.map(worker, jobs, chunksize=chunk))


def _summarise(diags):
    taus = np.concatenate([np.atleast_1d(d["taus"]) for d in diags])
    cost = CostCounter()
    for d in diags:
        cost.add(d["cost"])
    levels = [d["L"] for d in diags]
    return {
        "euler_steps": cost.euler_steps,
        "resample_draws": cost.resample_draws,
        "mean_meeting_time": float(taus.mean()),
        "max_meeting_time": int(taus.max()),
        "level_counts": {int(l): int(c) for l, c in
                         zip(*np.unique(levels, return_counts=True))},
    }


@dataclass
class ScoreEstimate:
    value: np.ndarray
    se: np.ndarray
    M: int
    config: dict
    diagnostics: dict
    seconds: float

    def to_dict(self):
        return {
            "kind": "score",
            "value": self.value.tolist(),
            "se": self.se.tolist(),
            "M": self.M,
            "config": self.config,
            "diagnostics": self.diagnostics,
            "seconds": self.seconds,
        }


@dataclass
class HessianEstimate:
    value: np.ndarray
    se: np.ndarray
    M: int
    config: dict
    diagnostics: dict
    seconds: float

    def to_dict(self):
        return {
            "kind": "hessian",
            "value": self.value.tolist(),
            "se": self.se.tolist(),
            "M": self.M,
            "config": self.config,
            "diagnostics": self.diagnostics,
            "seconds": self.seconds,
        }


def estimate_score(model, theta, ys, cfg):
    """Average M independent score replicates; SEs are sample-based."""
    theta = model.validate_theta(theta)
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    t0 = time.perf_counter()
    out = _run_replicates(_score_worker, model, theta, ys, cfg)
    vals = np.stack([v for v, _ in out])
    diags = [d for _, d in out]
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / np.sqrt(cfg.M) if cfg.M > 1 else np.full_like(mean, np.nan)
    return ScoreEstimate(mean, se, cfg.M, asdict(cfg), _summarise(diags),
                         time.perf_counter() - t0)


def estimate_hessian(model, theta, ys, cfg):
    """Average M independent Hessian replicates; SEs are entrywise."""
    theta = model.validate_theta(theta)
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    t0 = time.perf_counter()
    out = _run_replicates(_hessian_worker, model, theta, ys, cfg)
    vals = np.stack([v for v, _ in out])
    diags = [d for _, d in out]
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / np.sqrt(cfg.M) if cfg.M > 1 else np.full_like(mean, np.nan)
    return HessianEstimate(mean, se, cfg.M, asdict(cfg), _summarise(diags),
                           time.perf_counter() - t0)


def estimate_derivatives(model, theta, ys, cfg):
    """Score and Hessian estimates sharing one set of Hessian replicates.

    The score replicate is the full-bundle gradient sum already computed
    inside each Hessian replicate, so a Newton step costs one pass.
    Returns (ScoreEstimate, HessianEstimate).
    """
    theta = model.validate_theta(theta)
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    t0 = time.perf_counter()
    out = _run_replicates(_hessian_worker, model, theta, ys, cfg)
    hvals = np.stack([v for v, _ in out])
    gvals = np.stack([d["score"] for _, d in out])
    diags = [d for _, d in out]
    elapsed = time.perf_counter() - t0
    summary = _summarise(diags)
    cfgd = asdict(cfg)

    def _mean_se(vals):
        mean = vals.mean(axis=0)
        if cfg.M > 1:
            se = vals.std(axis=0, ddof=1) / np.sqrt(cfg.M)
        else:
            se = np.full_like(mean, np.nan)
        return mean, se

    gm, gse = _mean_se(gvals)
    hm, hse = _mean_se(hvals)
    return (
        ScoreEstimate(gm, gse, cfg.M, cfgd, summary, elapsed),
        HessianEstimate(hm, hse, cfg.M, cfgd, summary, elapsed),
    )
