"""Command-line front end: ``saia tabulate | run | analyze``.

Exit status is 0 on success, 1 for usage errors and 2 for runtime failures.
"""

import argparse
import concurrent.futures
import csv
import json
import logging
import math
import os
import sys

import numpy as np

from . import adapt
from .diagnostics import efficiency_summary, psrf
from .model import (GaussianModel, load_dataset, make_blr_model,
                    make_gaussian_diag_mixture, make_gaussian_wishart)
from .sampler import (INTEGRATOR_LABELS, HmcConfig, config_from_mapping, load_config,
                      make_rng, production, read_trace, stages_of, warm_up, write_trace)

logger = logging.getLogger("saia")

EXIT_USAGE = 1
EXIT_RUNTIME = 2

METRICS = ("AR", "minESS_norm", "minInvMCSE_norm", "maxPSRF")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# Benchmarks
# --------------------------------------------------------------------------

def build_model(benchmark, dim=100, seed=0, prior=1.0, standardize=True, intercept=True,
                labels_first=False):
    """Model for a benchmark name: ``gaussian1``, ``gaussian2`` or ``blr:PATH``."""
    if benchmark == "gaussian1":
        return GaussianModel(make_gaussian_wishart(dim, seed))
    if benchmark == "gaussian2":
        d1 = int(round(0.99 * dim))
        return GaussianModel(make_gaussian_diag_mixture(d1, dim - d1, 1000.0, 10.0,
                                                        4000.0, 40.0, seed))
    if benchmark.startswith("blr:"):
        fmt = "csv_labels_first" if labels_first else "csv_labels_last"
        data = load_dataset(benchmark[4:], fmt, standardize=standardize,
                            intercept=intercept, prior_precision=prior)
        return make_blr_model(data)
    raise UsageError(f"unknown benchmark {benchmark!r}")


# --------------------------------------------------------------------------
# Sweep
# --------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def _run_repetition(model, config, labels, grid, rep, tables, trace_dir, single_step):
    """Warm-up once, then one production chain per (integrator, grid point)."""
    cfg = config
    state = warm_up(model, cfg, stream=(rep,))
    results = []
    for li, label in enumerate(labels):
        k = stages_of(label)
        table = tables.get(k) if label.startswith("sAIA") else None
        for i in range(1, grid + 1):
            if single_step is not None:
                step = single_step
            else:
                step = i * state.stability_limit(k) / grid
            rng = make_rng(cfg.seed, rep, 3, li, i)
            try:
                rec = production(model, state, label, step, cfg, rng, table)
            except Exception as exc:  # a failed point must not sink the sweep
                logger.error("%s point %d rep %d failed: %s", label, i, rep, exc)
                results.append({"label": label, "i": i, "rep": rep, "step": step,
                                "error": str(exc)})
                continue
            rep_summary = efficiency_summary(rec)
            row = {"label": label, "i": i, "rep": rep, "step": step, "l_bar": rec.l_bar,
                   "AR": rep_summary.AR, "minESS_norm": rep_summary.min_ESS_norm,
                   "minInvMCSE_norm": rep_summary.min_inv_MCSE_norm,
                   "divergent": rec.divergent, "clamped": rec.clamped,
                   "samples": rec.samples}
            if trace_dir is not None:
                path = os.path.join(trace_dir, f"{label}_i{i:02d}_rep{rep:02d}.csv")
                write_trace(rec, path, state.preamble())
                row["trace"] = path
            results.append(row)
    return state.preamble(), results


def sweep(model, config, labels, grid, reps, trace_dir=None, single_step=None, workers=1):
    """Run the (integrator x grid point x repetition) protocol.

    Returns ``(preambles, runs, aggregated)``; ``aggregated`` has one row per
    (integrator, grid point) with metrics averaged over repetitions and the
    PSRF taken across the repetition chains.
    """
    tables = {k: adapt.load_or_tabulate(k, config.n_grid_table)
              for k in {stages_of(l) for l in labels if l.startswith("sAIA")}}
    args = [(model, config, labels, grid, rep, tables, trace_dir, single_step)
            for rep in range(reps)]
    if workers > 1 and reps > 1:
        with concurrent.futures.ProcessPoolExecutor(workers) as pool:
            outputs = list(pool.map(_run_repetition, *zip(*args)))
    else:
        outputs = [_run_repetition(*a) for a in args]
    preambles = [p for p, _ in outputs]
    runs = [r for _, rs in outputs for r in rs]

    aggregated = []
    for label in labels:
        k = stages_of(label)
        for i in range(1, grid + 1):
            group = [r for r in runs if r["label"] == label and r["i"] == i and "error" not in r]
            row = {"integrator": label, "k": k, "grid_index": i,
                   "step": float(np.mean([r["step"] for r in runs
                                          if r["label"] == label and r["i"] == i])),
                   "n_reps": len(group)}
            row["step_over_k"] = row["step"] / k
            for name in METRICS[:3]:
                vals = [r[name] for r in group]
                row[name] = float(np.mean(vals)) if vals else math.nan
                row[name + "_sd"] = float(np.std(vals, ddof=1)) if len(vals) > 1 else math.nan
            if len(group) >= 2:
                n = min(len(r["samples"]) for r in group)
                row["maxPSRF"] = psrf(np.stack([r["samples"][:n] for r in group]))[1]
            else:
                row["maxPSRF"] = math.nan
            aggregated.append(row)
    for r in runs:
        r.pop("samples", None)
    return preambles, runs, aggregated


AGG_COLUMNS = ["integrator", "k", "grid_index", "step", "step_over_k", "n_reps", "AR",
               "minESS_norm", "minInvMCSE_norm", "maxPSRF", "AR_sd", "minESS_norm_sd",
               "minInvMCSE_norm_sd"]
RUN_COLUMNS = ["label", "i", "rep", "step", "l_bar", "AR", "minESS_norm", "minInvMCSE_norm",
               "divergent", "clamped", "error", "trace"]


def write_csv(path, rows, columns, preamble_lines=()):
    with open(path, "w", newline="") as fh:
        for line in preamble_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_tabulate(args):
    if args.k not in (2, 3):
        raise UsageError("--k must be 2 or 3")
    if args.n_grid < 10:
        raise UsageError("--n-grid must be >= 10")
    table = adapt.tabulate_bopt(args.k, args.n_grid)
    out = args.out or f"bopt_k{args.k}.csv"
    adapt.save_table(table, out)
    logger.info("wrote %d rows to %s", table.n_grid, out)
    return 0


def _config_from_args(args):
    mapping = load_config(args.config) if args.config else {}
    cfg = config_from_mapping(mapping)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.tau is not None:
        overrides["tau"] = args.tau
    if args.alpha_target is not None:
        overrides["alpha_target"] = args.alpha_target
    if args.i_omega:
        overrides["i_omega"] = True
    for name in ("n_tune", "n_burnin", "n_pr"):
        if getattr(args, name) is not None:
            overrides[name] = getattr(args, name)
    if args.dt_frac is not None:
        overrides["randomization"] = cfg.randomization.__class__(
            cfg.randomization.grid_points, args.dt_frac, cfg.randomization.per_iteration_L)
    return cfg.replace(**overrides)


def cmd_run(args):
    if args.integrators is None:
        if args.k not in (2, 3):
            raise UsageError("--k must be 2 or 3")
        labels = [f"sAIA{args.k}"]
    else:
        labels = [s.strip() for s in args.integrators.split(",") if s.strip()]
    bad = [l for l in labels if l not in INTEGRATOR_LABELS]
    if bad or not labels:
        raise UsageError(f"unknown integrator(s) {bad}; choose from {INTEGRATOR_LABELS}")
    if args.reps < 1 or args.grid < 1:
        raise UsageError("--grid and --reps must be >= 1")
    try:
        config = _config_from_args(args)
    except (ValueError, OSError) as exc:
        raise UsageError(str(exc)) from exc
    model = build_model(args.benchmark, args.dim, config.seed, args.prior,
                        not args.no_standardize, not args.no_intercept, args.labels_first)
    os.makedirs(args.out, exist_ok=True)
    trace_dir = None
    if args.traces:
        trace_dir = os.path.join(args.out, "traces")
        os.makedirs(trace_dir, exist_ok=True)
    preambles, runs, aggregated = sweep(model, config, labels, args.grid, args.reps,
                                        trace_dir, args.step, args.workers)
    lines = [f"benchmark={args.benchmark} seed={config.seed} tau={config.tau} "
             f"grid={args.grid} reps={args.reps}"]
    for rep, pre in enumerate(preambles):
        lines.append(f"rep={rep} " + " ".join(f"{k}={_fmt(v)}" for k, v in pre))
    write_csv(os.path.join(args.out, "aggregated.csv"), aggregated, AGG_COLUMNS, lines)
    write_csv(os.path.join(args.out, "runs.csv"), runs, RUN_COLUMNS)
    failed = [r for r in runs if "error" in r]
    manifest = {"completed": len(runs) - len(failed), "failed": len(failed),
                "errors": [{k: r[k] for k in ("label", "i", "rep", "error")} for r in failed]}
    with open(os.path.join(args.out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    for line in lines:
        print(line)
    if failed:
        logger.error("%d run(s) failed; see manifest.json", len(failed))
        return EXIT_RUNTIME
    return 0


def cmd_analyze(args):
    records = [read_trace(p) for p in args.traces]
    rows = []
    for path, rec in zip(args.traces, records):
        rep = efficiency_summary(rec)
        rows.append({"trace": path, "label": rec.label, "step": rec.step, "AR": rep.AR,
                     "minESS_norm": rep.min_ESS_norm,
                     "minInvMCSE_norm": rep.min_inv_MCSE_norm, "maxPSRF": rep.max_PSRF})
    if len(records) >= 2:
        rep = efficiency_summary(records)
        rows.append({"trace": "combined", "label": ",".join(sorted({r.label for r in records})),
                     "step": float(np.mean([r.step for r in records])), "AR": rep.AR,
                     "minESS_norm": rep.min_ESS_norm,
                     "minInvMCSE_norm": rep.min_inv_MCSE_norm, "maxPSRF": rep.max_PSRF})
    columns = ["trace", "label", "step", *METRICS]
    if args.out:
        write_csv(args.out, rows, columns)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])
    return 0


def build_parser():
    p = _Parser(prog="saia", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("tabulate", help="write the h_bar -> b_opt table as CSV")
    t.add_argument("--k", type=int, required=True)
    t.add_argument("--n-grid", type=int, default=2000)
    t.add_argument("--out")
    t.set_defaults(func=cmd_tabulate)

    r = sub.add_parser("run", help="run the sampling protocol and write metrics")
    r.add_argument("--benchmark", required=True,
                   help="gaussian1, gaussian2 or blr:PATH")
    r.add_argument("--integrators", help="comma-separated labels (default sAIA<k>)")
    r.add_argument("--grid", type=int, default=20)
    r.add_argument("--reps", type=int, default=10)
    r.add_argument("--seed", type=int)
    r.add_argument("--config")
    r.add_argument("--out", default="saia_out")
    r.add_argument("--i-omega", action="store_true")
    r.add_argument("--tau", type=float)
    r.add_argument("--alpha-target", type=float)
    r.add_argument("--k", type=int, default=3, help="stages of the default integrator")
    r.add_argument("--step", type=float, help="fixed nominal step instead of the grid")
    r.add_argument("--dt-frac", type=float)
    r.add_argument("--n-tune", type=int)
    r.add_argument("--n-burnin", type=int)
    r.add_argument("--n-pr", type=int)
    r.add_argument("--dim", type=int, default=100, help="dimension of Gaussian benchmarks")
    r.add_argument("--prior", type=float, default=1.0)
    r.add_argument("--no-standardize", action="store_true")
    r.add_argument("--no-intercept", action="store_true")
    r.add_argument("--labels-first", action="store_true")
    r.add_argument("--traces", action="store_true", help="write one trace per run")
    r.add_argument("--workers", type=int, default=1)
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("analyze", help="recompute metrics from trace files")
    a.add_argument("traces", nargs="+")
    a.add_argument("--out")
    a.set_defaults(func=cmd_analyze)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"saia: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        logger.debug("failure", exc_info=True)
        print(f"saia: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
