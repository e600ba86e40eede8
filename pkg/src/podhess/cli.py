"""Command-line harness around the estimators.

Subcommands:

    simulate   draw one observation sequence and its latent path to CSV
    estimate   score or Hessian estimate on a data file, written as JSON
    sweep      bias / variance / mse statistics across truncation levels
    fit        SGD or Newton parameter search with an iterate trace

Configuration is resolved as CLI flags > JSON config file > built-in
model preset.  Every command writes a manifest JSON next to its output
with the merged configuration, the seed and the package version, which
is enough to reproduce the run bit for bit.  Cost columns count Euler
steps and resampling draws exactly; wall-clock seconds are reported as
auxiliary information only.
"""

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .cpf import CostCounter
from .estimator import (
    EstimatorConfig,
    estimate_hessian,
    estimate_score,
    hessian_replicate,
    unbiased_increment,
)
from .models import MODEL_PRESETS, get_model, simulate_observations
from .optimize import (
    FitConfig,
    estimated_derivative_fn,
    estimated_score_fn,
    newton_fit,
    oracle_derivative_fn,
    oracle_score_fn,
    sgd_fit,
)
from .oracle import oracle_score_hessian

__all__ = ["main", "build_parser"]


class CLIError(Exception):
    """User-facing configuration or runtime failure; exits nonzero."""


# Defaults shared by every model; presets below override per model and
# the paper-scale tier overrides again for full-size runs.
DEFAULTS = {
    "seed": 0,
    "n": 50,
    "data_level": 10,
    "N": 32,
    "m_star": 2,
    "M": 1000,
    "L_max": 5,
    "workers": None,  # resolved to available parallelism
    "coupling": "inversion",
    "pair_pmf": "exact",
    "level_mode": "truncated",
    "chain_cap": 100_000,
    "engine": "auto",
    "iters": 20,
    "learning_rate": 0.005,
    "ridge": 1e-4,
    "diagonal_only": False,
    "small_grad_threshold": 0.0,
    "small_grad_factor": 1.0,
    "var_floor": 1e-4,
}

# Per-model run settings.  The desk tier keeps every command in the
# minutes range; "paper" restores the full-size experiment settings and
# is selected with --paper-scale.
PRESETS = {
    "ou1d": {
        "theta0": [0.1, 0.1],
        "learning_rate": 0.002,
        "levels": [1, 2, 3, 4, 5],
        "paper": {"n": 500, "M": 10_000, "L_max": 8,
                  "levels": [2, 3, 4, 5, 6, 7], "iters": 500},
    },
    "mou2d": {
        "theta0": [0.1, 0.1, 0.1, 0.1],
        "learning_rate": 0.005,
        "levels": [1, 2, 3, 4, 5],
        "paper": {"n": 500, "M": 2000, "L_max": 8,
                  "levels": [2, 3, 4, 5, 6], "iters": 200},
    },
    "fhn": {
        "n": 10,
        "theta0": [0.8, 0.8, 0.8, 0.8],
        "learning_rate": 0.001,
        # the unit-step half of a level-1 pair explodes under the cubic
        # drift, so sweeps start at level 2 for this model
        "levels": [2, 3, 4, 5],
        "diagonal_only": True,
        "small_grad_threshold": 0.1,
        "small_grad_factor": 0.002,
        "paper": {"n": 500, "M": 2000, "L_max": 8,
                  "levels": [2, 3, 4, 5, 6, 7], "iters": 300},
    },
}

_CONFIG_KEYS = sorted(set(DEFAULTS) | {"theta", "theta0", "levels", "ref_level",
                                       "ref_M", "reference"})


def _floats(text):
    return [float(v) for v in text.split(",")]


def _ints(text):
    return [int(v) for v in text.split(",")]


def build_parser():
    p = argparse.ArgumentParser(
        prog="podhess",
        description="Unbiased score/Hessian estimation for partially observed "
                    "diffusions: data simulation, estimation, level sweeps and "
                    "parameter fitting.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", choices=sorted(MODEL_PRESETS),
                        help="built-in model name")
    common.add_argument("--config", metavar="JSON",
                        help="JSON config file; CLI flags override its entries")
    common.add_argument("--theta", type=_floats, metavar="T1,T2,...",
                        help="parameter point (default: the model's true theta)")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", required=True, help="output file path")
    common.add_argument("--paper-scale", action="store_true",
                        help="use the full-size experiment settings")

    est = argparse.ArgumentParser(add_help=False)
    est.add_argument("--N", type=int, dest="N", help="particles per filter")
    est.add_argument("--m-star", type=int, dest="m_star", help="burn-in index")
    est.add_argument("--M", type=int, dest="M", help="replicates")
    est.add_argument("--L-max", type=int, dest="L_max", help="level truncation")
    est.add_argument("--workers", type=int,
                     help="parallel workers (default: all cores)")
    est.add_argument("--coupling", choices=["maximal", "inversion"],
                     help="resampling-coupling variant")
    est.add_argument("--pair-pmf", choices=["exact", "printed"], dest="pair_pmf",
                     help="accept/reject mass for the four-way coupling")
    est.add_argument("--level-mode", dest="level_mode",
                     choices=["truncated", "polylog", "polylog-sqrt"],
                     help="level-randomization distribution")
    est.add_argument("--chain-cap", type=int, dest="chain_cap",
                     help="sweep cap before a chain is declared stuck")
    est.add_argument("--engine", choices=["auto", "numpy", "jit"],
                     help="particle sweep backend")

    sim = sub.add_parser("simulate", parents=[common],
                         help="simulate observations and the latent path")
    sim.add_argument("--n", type=int, help="number of observation times")
    sim.add_argument("--level", type=int, dest="data_level",
                     help="simulation grid level (default 10)")

    cmd = sub.add_parser("estimate", parents=[common, est],
                         help="one score or Hessian estimate, JSON output")
    cmd.add_argument("kind", choices=["score", "hessian"])
    cmd.add_argument("--data", required=True, help="observation CSV from simulate")
    cmd.add_argument("--oracle", action="store_true",
                     help="attach the exact Kalman reference (linear models)")

    cmd = sub.add_parser("sweep", parents=[common, est],
                         help="per-level bias/variance/mse statistics, CSV output")
    cmd.add_argument("kind", choices=["bias", "variance", "mse"])
    cmd.add_argument("--data", required=True)
    cmd.add_argument("--levels", type=_ints, metavar="L1,L2,...",
                     help="levels to sweep (default: model preset)")
    cmd.add_argument("--ref-level", type=int, dest="ref_level",
                     help="pseudo-truth level for models without an oracle")
    cmd.add_argument("--ref-M", type=int, dest="ref_M",
                     help="pseudo-truth replicate count")
    cmd.add_argument("--no-plots", action="store_true",
                     help="skip figure rendering next to the CSV")

    cmd = sub.add_parser("fit", parents=[common, est],
                         help="iterative parameter search, trace CSV output")
    cmd.add_argument("method", choices=["sgd", "newton"])
    cmd.add_argument("--data", required=True)
    cmd.add_argument("--theta0", type=_floats, metavar="T1,T2,...",
                     help="starting point (default: model preset)")
    cmd.add_argument("--iters", type=int)
    cmd.add_argument("--learning-rate", type=float, dest="learning_rate")
    cmd.add_argument("--ridge", type=float, help="diagonal loading for Newton")
    cmd.add_argument("--diagonal-only", action="store_true", default=None,
                     dest="diagonal_only",
                     help="zero the off-diagonal information entries")
    cmd.add_argument("--oracle", action="store_true",
                     help="drive the fit with exact Kalman derivatives")
    cmd.add_argument("--reference", type=_floats, metavar="T1,T2,...",
                     help="reference point for the trace distance column "
                          "(default: the model's true theta)")
    cmd.add_argument("--no-plots", action="store_true")

    return p


# config resolution -----------------------------------------------------


def resolve_config(args):
    """Merge preset, config file and CLI flags into one flat dict."""
    file_cfg = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise CLIError(f"cannot read config file {args.config}: {e}")
        if not isinstance(file_cfg, dict):
            raise CLIError("config file must hold a JSON object")

    model_name = args.model or file_cfg.get("model")
    if model_name is None:
        raise CLIError("no model given (use --model or a config file)")
    if model_name not in PRESETS:
        raise CLIError(f"unknown model {model_name!r}; "
                       f"available: {sorted(PRESETS)}")

    cfg = dict(DEFAULTS)
    preset = PRESETS[model_name]
    cfg.update({k: v for k, v in preset.items() if k != "paper"})
    if getattr(args, "paper_scale", False):
        cfg.update(preset["paper"])
    unknown = set(file_cfg) - set(_CONFIG_KEYS) - {"model"}
    if unknown:
        raise CLIError(f"unknown config file keys: {sorted(unknown)}")
    cfg.update({k: v for k, v in file_cfg.items() if k != "model"})
    for key in _CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    cfg["model"] = model_name
    if cfg["workers"] is None:
        cfg["workers"] = os.cpu_count() or 1
    return cfg


def estimator_config(cfg):
    try:
        return EstimatorConfig(
            N=cfg["N"], m_star=cfg["m_star"], M=cfg["M"], seed=cfg["seed"],
            workers=cfg["workers"], coupling=cfg["coupling"],
            pair_pmf=cfg["pair_pmf"], level_mode=cfg["level_mode"],
            L_max=cfg["L_max"], chain_cap=cfg["chain_cap"],
            engine=cfg["engine"])
    except ValueError as e:
        raise CLIError(str(e))


def fit_config(cfg):
    return FitConfig(
        iters=cfg["iters"], learning_rate=cfg["learning_rate"],
        diagonal_only=cfg["diagonal_only"], ridge=cfg["ridge"],
        small_grad_threshold=cfg["small_grad_threshold"],
        small_grad_factor=cfg["small_grad_factor"],
        var_floor=cfg["var_floor"])


# I/O helpers -----------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def write_manifest(out_path, cfg, argv):
    out_path = Path(out_path)
    manifest = {
        "command": ["podhess"] + list(argv),
        "model": cfg["model"],
        "config": {k: cfg[k] for k in sorted(cfg) if k != "model"},
        "seed": cfg["seed"],
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "version": __version__,
    }
    path = out_path.with_name(out_path.stem + "_manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, default=_jsonable)
        fh.write("\n")
    return path


def _fmt(x):
    # shortest round-trip float text keeps same-seed runs byte-identical
    return str(float(x))


def write_csv(path, header, rows, footer=()):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])
        for line in footer:
            fh.write(line + "\n")


def read_observations(path):
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except OSError as e:
        raise CLIError(f"cannot read data file {path}: {e}")
    except ValueError as e:
        raise CLIError(f"malformed data file {path}: {e}")
    if data.shape[1] < 2:
        raise CLIError(f"data file {path} has no observation columns")
    return data[:, 1:]


def _model_and_theta(cfg):
    model = get_model(cfg["model"])
    theta = np.asarray(cfg.get("theta") or model.theta_true, dtype=float)
    try:
        theta = model.validate_theta(theta)
    except ValueError as e:
        raise CLIError(str(e))
    return model, theta


def _kalman_available(model):
    try:
        model.drift_affine(model.theta_true)
    except NotImplementedError:
        return False
    return True


# entry labelling -------------------------------------------------------


def _pairs(p):
    return [(i, j) for i in range(p) for j in range(i, p)]


def _hess_labels(p):
    return [f"h{i + 1}{j + 1}" for i, j in _pairs(p)]


def _bundle_labels(p):
    return ([f"g{i + 1}" for i in range(p)]
            + [f"gg{i + 1}{j + 1}" for i, j in _pairs(p)]
            + [f"h{i + 1}{j + 1}" for i, j in _pairs(p)])


def _hess_entries(mat, p):
    return np.array([mat[i, j] for i, j in _pairs(p)])


def _bundle_entries(bundle, p):
    return np.concatenate([bundle.g, _hess_entries(bundle.gg, p),
                           _hess_entries(bundle.h, p)])


def _loglog_fit(x, y):
    """Least-squares slope/intercept of log y on log x."""
    if len(x) < 2:
        return float("nan"), float("nan")
    slope, intercept = np.polyfit(np.log(np.asarray(x, dtype=float)),
                                  np.log(np.asarray(y, dtype=float)), 1)
    return float(slope), float(intercept)


# commands --------------------------------------------------------------


def cmd_simulate(args, argv):
    cfg = resolve_config(args)
    model, theta = _model_and_theta(cfg)
    n, level = int(cfg["n"]), int(cfg["data_level"])
    if n < 1:
        raise CLIError("need n >= 1 observations")
    rng = np.random.default_rng(cfg["seed"])
    ys, path = simulate_observations(model, theta, n, level=level, rng=rng)

    out = Path(args.out)
    header = ["t"] + [f"y{j + 1}" for j in range(model.d_y)]
    rows = [[float(k + 1)] + list(ys[k]) for k in range(n)]
    try:
        write_csv(out, header, rows)
    except OSError as e:
        raise CLIError(f"cannot write {out}: {e}")

    latent = out.with_name(out.stem + "_latent.csv")
    dt = 0.5**level
    lat_header = ["t"] + [f"x{j + 1}" for j in range(model.d)]
    lat_rows = [[k * dt] + list(v) for k, v in enumerate(path.values)]
    write_csv(latent, lat_header, lat_rows)
    manifest = write_manifest(out, cfg, argv)
    print(f"simulated {n} observations of {model.name} at level {level} "
          f"-> {out} (latent: {latent.name}, manifest: {manifest.name})")
    return 0


def cmd_estimate(args, argv):
    cfg = resolve_config(args)
    model, theta = _model_and_theta(cfg)
    ys = read_observations(args.data)
    est_cfg = estimator_config(cfg)

    if args.kind == "score":
        est = estimate_score(model, theta, ys, est_cfg)
    else:
        est = estimate_hessian(model, theta, ys, est_cfg)
    payload = est.to_dict()
    payload["model"] = model.name
    payload["theta"] = theta.tolist()
    payload["data"] = str(args.data)

    if args.oracle:
        if not _kalman_available(model):
            raise CLIError(f"no exact Kalman reference for model {model.name!r}")
        g, h = oracle_score_hessian(model, theta, ys, transition="exact")
        payload["oracle"] = {"score": g.tolist(),
                             "observed_information": h.tolist()}

    out = Path(args.out)
    try:
        with open(out, "w") as fh:
            json.dump(payload, fh, indent=2, default=_jsonable)
            fh.write("\n")
    except OSError as e:
        raise CLIError(f"cannot write {out}: {e}")
    manifest = write_manifest(out, cfg, argv)
    val = np.asarray(est.value)
    print(f"{args.kind} estimate for {model.name} (M={est.M}, "
          f"{est.seconds:.1f} s): value norm {np.linalg.norm(val):.6g} "
          f"-> {out} (manifest: {manifest.name})")
    return 0


def _bias_reference(model, theta, ys, cfg, est_cfg):
    """Exact observed information when available, else a fine-level estimate."""
    if _kalman_available(model):
        _, h = oracle_score_hessian(model, theta, ys, transition="exact")
        return h, "kalman-exact"
    ref_level = int(cfg.get("ref_level") or max(cfg["levels"]) + 2)
    ref_M = int(cfg.get("ref_M") or cfg["M"])
    ref_cfg = replace(est_cfg, L_max=ref_level, M=ref_M,
                      seed=_derived_seed(cfg["seed"], 10_001))
    ref = estimate_hessian(model, theta, ys, ref_cfg)
    return np.asarray(ref.value), f"estimate(L_max={ref_level}, M={ref_M})"


def _derived_seed(seed, tag, rep=None):
    key = (seed, tag) if rep is None else (seed, tag, rep)
    return int(np.random.SeedSequence(key).generate_state(1)[0])


def cmd_sweep(args, argv):
    cfg = resolve_config(args)
    model, theta = _model_and_theta(cfg)
    ys = read_observations(args.data)
    est_cfg = estimator_config(cfg)
    levels = [int(l) for l in cfg["levels"]]
    if not levels:
        raise CLIError("empty level list")
    if min(levels) < 0:
        raise CLIError("levels must be non-negative")
    reps = int(cfg["M"])
    p = model.d_theta

    if args.kind == "bias":
        header, rows, footer, summed = _sweep_bias(
            model, theta, ys, cfg, est_cfg, levels, reps, p)
    elif args.kind == "variance":
        if min(levels) < 1:
            raise CLIError("variance sweep needs levels >= 1")
        header, rows, footer, summed = _sweep_variance(
            model, theta, ys, est_cfg, levels, reps, p, cfg["seed"])
    else:
        header, rows, footer, summed = _sweep_mse(
            model, theta, ys, cfg, est_cfg, levels, reps, p)

    out = Path(args.out)
    try:
        write_csv(out, header, rows, footer)
    except OSError as e:
        raise CLIError(f"cannot write {out}: {e}")
    manifest = write_manifest(out, cfg, argv)

    made = [str(out)]
    if not args.no_plots:
        from .plots import cost_mse_figure, sweep_figure

        deltas = [0.5**l for l in levels]
        slope, intercept = _loglog_fit(deltas, summed)
        fig = out.with_suffix(".png")
        sweep_figure(deltas, summed, slope, intercept,
                     f"summed {args.kind}", fig)
        made.append(fig.name)
        if args.kind == "mse":
            per_rep_cost = [float(r[-2]) / reps for r in rows]
            exp, c0 = _loglog_fit(summed, per_rep_cost)
            figc = out.with_name(out.stem + "_cost.png")
            cost_mse_figure(summed, per_rep_cost, exp, c0, figc)
            made.append(figc.name)
    print(f"{args.kind} sweep over levels {levels} for {model.name} "
          f"({reps} replicates/level) -> {', '.join(made)} "
          f"(manifest: {manifest.name})")
    return 0


def _sweep_bias(model, theta, ys, cfg, est_cfg, levels, reps, p):
    ref, ref_kind = _bias_reference(model, theta, ys, cfg, est_cfg)
    ref_entries = _hess_entries(ref, p)
    labels = _hess_labels(p)
    rows, abs_bias, summed = [], [], []
    for L in levels:
        cfgL = replace(est_cfg, L_max=L, seed=_derived_seed(est_cfg.seed, L))
        est = estimate_hessian(model, theta, ys, cfgL)
        b = np.abs(_hess_entries(np.asarray(est.value), p) - ref_entries)
        d = est.diagnostics
        abs_bias.append(b)
        summed.append(float(b.sum()))
        rows.append([float(L), 0.5**L, *b, b.sum(), float(reps),
                     float(d["euler_steps"]), float(d["resample_draws"]),
                     float(d["euler_steps"] + d["resample_draws"]),
                     est.seconds])
    header = (["level", "delta", *[f"abs_bias_{l}" for l in labels],
               "summed_abs_bias", "replicates", "euler_steps",
               "resample_draws", "cost", "seconds"])
    deltas = [0.5**l for l in levels]
    footer = [f"# reference: {ref_kind}"]
    per_entry = np.array(abs_bias)
    for j, lab in enumerate(labels):
        s, c = _loglog_fit(deltas, per_entry[:, j])
        footer.append(f"#fit:abs_bias_{lab},{s!r},{c!r}")
    s, c = _loglog_fit(deltas, summed)
    footer.append(f"#fit:summed_abs_bias,{s!r},{c!r}")
    return header, rows, footer, summed


def _sweep_variance(model, theta, ys, est_cfg, levels, reps, p, seed):
    labels = _bundle_labels(p)
    rows, summed = [], []
    for l in levels:
        cost = CostCounter()
        t0 = time.perf_counter()
        samples = np.empty((reps, len(labels)))
        for k in range(reps):
            rng = np.random.default_rng(
                np.random.SeedSequence((seed, l, k)))
            inc, _ = unbiased_increment(model, theta, ys, l, est_cfg, rng,
                                        cost=cost)
            samples[k] = _bundle_entries(inc, p)
        var = samples.var(axis=0, ddof=1)
        rows.append([float(l), 0.5**l, *var, var.sum(), float(reps),
                     float(cost.euler_steps), float(cost.resample_draws),
                     float(cost.euler_steps + cost.resample_draws),
                     time.perf_counter() - t0])
        summed.append(float(var.sum()))
    header = (["level", "delta", *[f"var_{l}" for l in labels],
               "summed_variance", "replicates", "euler_steps",
               "resample_draws", "cost", "seconds"])
    deltas = [0.5**l for l in levels]
    s, c = _loglog_fit(deltas, summed)
    footer = [f"#fit:summed_variance,{s!r},{c!r}"]
    return header, rows, footer, summed


def _sweep_mse(model, theta, ys, cfg, est_cfg, levels, reps, p):
    ref, ref_kind = _bias_reference(model, theta, ys, cfg, est_cfg)
    ref_entries = _hess_entries(ref, p)
    labels = _hess_labels(p)
    rows, summed, per_rep_cost = [], [], []
    for L in levels:
        cfgL = replace(est_cfg, L_max=L)
        t0 = time.perf_counter()
        cost = CostCounter()
        sq = np.zeros(len(labels))
        for k in range(reps):
            ss = np.random.SeedSequence(
                (est_cfg.seed, L, k)).spawn(2)
            rep, info = hessian_replicate(model, theta, ys, cfgL,
                                          np.random.default_rng(ss[0]),
                                          np.random.default_rng(ss[1]))
            cost.add(info["cost"])
            sq += (_hess_entries(rep, p) - ref_entries) ** 2
        mse = sq / reps
        rows.append([float(L), 0.5**L, *mse, mse.sum(), float(reps),
                     float(cost.euler_steps), float(cost.resample_draws),
                     float(cost.euler_steps + cost.resample_draws),
                     time.perf_counter() - t0])
        summed.append(float(mse.sum()))
        per_rep_cost.append((cost.euler_steps + cost.resample_draws) / reps)
    header = (["level", "delta", *[f"mse_{l}" for l in labels],
               "summed_mse", "replicates", "euler_steps", "resample_draws",
               "cost", "seconds"])
    deltas = [0.5**l for l in levels]
    footer = [f"# reference: {ref_kind}"]
    s, c = _loglog_fit(deltas, summed)
    footer.append(f"#fit:summed_mse,{s!r},{c!r}")
    s, c = _loglog_fit(summed, per_rep_cost)
    footer.append(f"#fit:cost_vs_summed_mse,{s!r},{c!r}")
    return header, rows, footer, summed


def cmd_fit(args, argv):
    cfg = resolve_config(args)
    model, _ = _model_and_theta(cfg)
    ys = read_observations(args.data)
    theta0 = np.asarray(cfg.get("theta0") or model.theta_true, dtype=float)
    reference = np.asarray(cfg.get("reference") or model.theta_true, dtype=float)
    fcfg = fit_config(cfg)

    if args.oracle:
        if not _kalman_available(model):
            raise CLIError(f"no exact Kalman reference for model {model.name!r}")
        score_fn = oracle_score_fn(model, ys)
        deriv_fn = oracle_derivative_fn(model, ys)
    else:
        est_cfg = estimator_config(cfg)
        score_fn = estimated_score_fn(model, ys, est_cfg)
        deriv_fn = estimated_derivative_fn(model, ys, est_cfg)

    if args.method == "sgd":
        result = sgd_fit(model, ys, theta0, score_fn, fcfg)
    else:
        result = newton_fit(model, ys, theta0, deriv_fn, fcfg)

    thetas, grads = result.thetas, result.grads
    dist = np.linalg.norm(thetas - reference, axis=1) / np.linalg.norm(reference)
    out = Path(args.out)
    header = (["iteration"] + [f"theta{j + 1}" for j in range(theta0.size)]
              + ["score_norm", "rel_dist"])
    rows = []
    for t in range(thetas.shape[0]):
        norm = np.linalg.norm(grads[t]) if t < grads.shape[0] else np.nan
        rows.append([float(t), *thetas[t], norm, dist[t]])
    try:
        write_csv(out, header, rows)
    except OSError as e:
        raise CLIError(f"cannot write {out}: {e}")
    manifest = write_manifest(out, cfg, argv)

    made = [str(out)]
    if not args.no_plots:
        from .plots import trace_figure

        fig = out.with_suffix(".png")
        trace_figure(thetas, reference, fig)
        made.append(fig.name)
    final = ", ".join(f"{v:.6g}" for v in thetas[-1])
    print(f"{args.method} fit on {model.name}: {fcfg.iters} iterations, "
          f"final theta ({final}), rel dist {dist[-1]:.4g} "
          f"({result.seconds:.1f} s) -> {', '.join(made)} "
          f"(manifest: {manifest.name})")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "sweep": cmd_sweep,
    "fit": cmd_fit,
}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args, argv)
    except CLIError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
