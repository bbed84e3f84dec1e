"""Command line: datagen, train, simulate, bench, report.

Exit codes: 0 success, 1 usage error, 2 data error, 3 solver failure.
Every flag can also be given in a ``--config`` file of ``key = value``
lines (dashes or underscores); explicit flags win over the file.
"""

import argparse
import csv
import hashlib
import json
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict

import numpy as np
import scipy

from . import __version__
from . import controller as ctl
from . import datagen, mlcore, online
from . import model as mdl
from . import solver

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3

MODEL_KINDS = ("forest", "boosted")
RMSE_WINDOW = 50


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class SolverError(Exception):
    pass


# ---------------------------------------------------------------------------
# shared helpers

def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, command, args, inputs=(), seeds=()):
    """``manifest.json`` listing the command, its inputs, seeds and versions."""
    info = {
        "command": command,
        "args": {k: v for k, v in sorted(args.items()) if _jsonable(v)},
        "inputs": [{"path": p, "sha256": _sha256(p)} for p in inputs if p and os.path.isfile(p)],
        "seeds": list(seeds),
        "versions": {"mlrelax": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(info, fh, indent=1, sort_keys=True)
    return info


def _jsonable(v):
    try:
        json.dumps(v)
        return True
    except TypeError:
        return False


def build_case(case):
    try:
        return mdl.build_case(case)
    except (KeyError, ValueError):
        raise UsageError(f"unknown case {case!r}; choose from {sorted(mdl.CASES)}") from None


def default_schedule(model, pvi=0.5, steps=25):
    return solver.Schedule.from_pvi(model, pvi, steps)


def load_model_file(path):
    if not path:
        raise UsageError("ml strategies need --model")
    try:
        return mlcore.load(path)
    except FileNotFoundError:
        raise DataError(f"model file {path} not found") from None
    except mlcore.ModelFileError as exc:
        raise DataError(str(exc)) from None


# ---------------------------------------------------------------------------
# datagen

def cmd_datagen(sims=200, seed=0, out="data", steps=5, fraction=0.8, ranges=None, workers=1):
    """Generate the dataset and its simulation-level train/test split."""
    if sims < 1:
        raise UsageError("--sims must be >= 1")
    if not (0 < fraction < 1):
        raise UsageError("--fraction must lie in (0, 1)")
    _ensure_dir(out)
    rng = datagen.ScenarioRanges()
    if ranges:
        try:
            with open(ranges) as fh:
                rng = datagen.ScenarioRanges.loads(fh.read())
        except (OSError, ValueError) as exc:
            raise DataError(f"scenario ranges: {exc}") from None
    path = os.path.join(out, "dataset.csv")
    summary = datagen.generate_dataset(sims, rng, seed, path, n_steps=steps, workers=workers)
    result = {"dataset": path, "summary": datagen.summary_path(path), "rows": summary["n_rows"]}
    with_rows = sum(1 for s in summary["simulations"] if s["n_rows"] > 0)
    if with_rows >= 2:
        tr, te = datagen.split_dataset(path, fraction, seed,
                                       os.path.join(out, "train.csv"), os.path.join(out, "test.csv"))
        result.update(train=tr, test=te)
    write_manifest(out, "datagen", {"sims": sims, "seed": seed, "steps": steps,
                                    "fraction": fraction, "ranges": ranges}, [ranges], [seed])
    return result


# ---------------------------------------------------------------------------
# train

def _read_csv(path):
    try:
        return datagen.read_samples(path)
    except FileNotFoundError:
        raise DataError(f"{path} not found") from None
    except ValueError as exc:
        raise DataError(str(exc)) from None


def train_model(samples, kind="forest", seed=0, **hyper):
    if kind == "forest":
        kw = {k: hyper[k] for k in ("n_trees", "max_depth", "max_features_fraction", "min_leaf")
              if hyper.get(k) is not None}
        return mlcore.fit_forest(samples, seed=seed, **kw)
    if kind == "boosted":
        kw = {k: hyper[k] for k in ("n_rounds", "learning_rate", "max_depth", "min_leaf")
              if hyper.get(k) is not None}
        return mlcore.fit_boosted(samples, seed=seed, **kw)
    raise UsageError(f"unknown model kind {kind!r}; choose from {MODEL_KINDS}")


def cmd_train(train_csv, test_csv=None, kind="forest", out="model", seed=0, verbose=True, **hyper):
    """Fit an ensemble; write ``model.json`` and ``train_report.json``."""
    train = _read_csv(train_csv)
    test = _read_csv(test_csv) if test_csv else []
    if not train:
        raise DataError(f"{train_csv} has no rows")
    _ensure_dir(out)
    t0 = time.perf_counter()
    ens = train_model(train, kind, seed, **hyper)
    fit_time = time.perf_counter() - t0
    model_path = os.path.join(out, "model.json")
    mlcore.save(ens, model_path)
    imp = mlcore.feature_importance(ens)
    report = {
        "kind": kind, "seed": seed, "n_train": len(train), "n_test": len(test),
        "train_rmse": mlcore.rmse(ens, train),
        "test_rmse": mlcore.rmse(ens, test) if test else None,
        "fit_time": fit_time,
        "importance": dict(zip(mlcore.PREDICTOR_NAMES, imp.tolist())),
        "model": model_path,
    }
    with open(os.path.join(out, "train_report.json"), "w") as fh:
        json.dump(report, fh, indent=1)
    if verbose:
        print(f"train RMSE {report['train_rmse']:.4f}"
              + (f"  test RMSE {report['test_rmse']:.4f}" if test else ""))
        for name, v in sorted(report["importance"].items(), key=lambda kv: -kv[1]):
            print(f"  {name:32s} {v:.4f}")
    write_manifest(out, "train", {"kind": kind, "seed": seed, **hyper}, [train_csv, test_csv], [seed])
    return report


# ---------------------------------------------------------------------------
# simulate / bench

def parse_strategy(text):
    """``no-relax``, ``fixed:0.8``, ``fixed-sweep``, ``cfl-dynamic[:a]``,
    ``ml-frozen``, ``ml-online[:W]`` -> list of ``(label, kind, arg)``."""
    name, _, arg = text.partition(":")
    if name == "fixed-sweep":
        return [(f"fixed-{w:.2f}", "fixed", float(w)) for w in ctl.OMEGA_GRID]
    if name == "fixed":
        if not arg:
            raise UsageError("fixed strategy needs a value, e.g. fixed:0.8")
        return [(f"fixed-{float(arg):.2f}", "fixed", float(arg))]
    if name in ("no-relax", "ml-frozen"):
        return [(name, name, None)]
    if name == "cfl-dynamic":
        return [(name, name, float(arg) if arg else None)]
    if name == "ml-online":
        w = float(arg) if arg else 50.0
        if not w >= 1:
            raise UsageError("W must be >= 1")
        return [(f"ml-online-W{w:g}", name, w)]
    raise UsageError(f"unknown strategy {text!r}")


def make_strategy(kind, arg, ensemble=None, seed=0):
    try:
        if kind == "fixed":
            return ctl.Fixed(arg)
        if kind == "cfl-dynamic":
            return ctl.make_controller(kind, a=arg)
        if kind == "ml-online":
            return ctl.make_controller(kind, ensemble=ensemble, W=arg, seed=seed)
        return ctl.make_controller(kind, ensemble=ensemble)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def write_trace(path, records, events=()):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("iteration", "step", "outer", "omega0", "inner", "model_update"))
        for i, r in enumerate(records, 1):
            w.writerow((i, r.step, r.outer, r.omega0, r.inner, int(r.model_update)))


def write_curve(path, report):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("iteration", "cumulative_metric"))
        for i, v in enumerate(report.cumulative_curve(), 1):
            w.writerow((i, repr(float(v))))


def write_rmse(path, windows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("window", "rmse"))
        for i, v in enumerate(windows, 1):
            w.writerow((i, repr(float(v))))


def write_events(path, events):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("index", "n_samples", "rmse_before", "rmse_after", "n_trees"))
        for e in events:
            w.writerow(tuple(asdict(e).values()))


def run_strategy(model, schedule, kind, arg=None, ensemble=None, seed=0, label=None):
    c = make_strategy(kind, arg, ensemble, seed)
    rep = solver.run_simulation(model, c, schedule, strategy=label or c.name)
    return rep, c


def cmd_simulate(case="1", strategy="no-relax", model_path=None, W=None, out="sim", pvi=0.5,
                 steps=25, seed=0):
    """One simulation; writes report, iteration records, relaxation trace."""
    m = build_case(case)
    specs = parse_strategy(strategy if W is None or not strategy.startswith("ml-online")
                           else f"ml-online:{W}")
    if len(specs) != 1:
        raise UsageError("simulate runs exactly one strategy")
    label, kind, arg = specs[0]
    ens = load_model_file(model_path) if kind.startswith("ml-") else None
    _ensure_dir(out)
    rep, c = run_strategy(m, default_schedule(m, pvi, steps), kind, arg, ens, seed, label)
    rep.save(os.path.join(out, "report.json"))
    rep.write_records_csv(os.path.join(out, "records.csv"))
    write_trace(os.path.join(out, "trace.csv"), rep.records)
    write_curve(os.path.join(out, "curve.csv"), rep)
    if kind.startswith("ml-"):
        write_events(os.path.join(out, "updates.csv"), c.events)
        datagen.write_samples(os.path.join(out, "samples.csv"), c.samples)
        n = min(len(c.predicted), len(c.samples))
        write_rmse(os.path.join(out, "rmse.csv"),
                   online.windowed_rmse(c.predicted[:n], [s.inner_iters for s in c.samples[:n]],
                                        RMSE_WINDOW))
    write_manifest(out, "simulate", {"case": case, "strategy": strategy, "W": W, "pvi": pvi,
                                     "steps": steps, "seed": seed}, [model_path], [seed])
    if rep.failed:
        raise SolverError(rep.failed)
    return rep, c


def improvement(baseline, value):
    """Relative reduction ``(baseline - value) / baseline``."""
    return 0.0 if baseline == 0 else (baseline - value) / baseline


def cmd_bench(case="1", strategies=("no-relax", "fixed:1.0"), model_path=None, out="bench",
              pvi=0.5, steps=25, seeds=(0,), baseline="no-relax", parallel=False, workers=None):
    """Run every strategy on the same case and schedule; write the comparison table.

    Each strategy crash or non-converged run becomes a failure row.  With
    ``parallel`` the runs share the machine, so wall times are reported as NaN.
    Returns the table rows as dicts.
    """
    specs = [s for text in strategies for s in parse_strategy(text)]
    if len(specs) < 2:
        raise UsageError("bench needs at least two strategies")
    m = build_case(case)
    sched = default_schedule(m, pvi, steps)
    ens = None
    if any(k.startswith("ml-") for _, k, _ in specs):
        ens = load_model_file(model_path)
    _ensure_dir(out)
    curves = _ensure_dir(os.path.join(out, "curves"))
    traces = _ensure_dir(os.path.join(out, "traces"))
    jobs = []
    for label, kind, arg in specs:
        # only online strategies depend on the seed
        run_seeds = seeds if kind == "ml-online" else seeds[:1]
        for sd in run_seeds:
            name = label if len(run_seeds) == 1 else f"{label}-s{sd}"
            jobs.append((m, sched, kind, arg, ens, sd, name))
    if parallel and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_bench_one, jobs))
    else:
        results = [_bench_one(j) for j in jobs]
    rows = []
    for row, rep, windows in results:
        if rep is not None:
            write_curve(os.path.join(curves, f"{row['strategy']}.csv"), rep)
            write_trace(os.path.join(traces, f"{row['strategy']}.csv"), rep.records)
        if windows is not None:
            write_rmse(os.path.join(_ensure_dir(os.path.join(out, "rmse")), f"{row['strategy']}.csv"),
                       windows)
        if parallel:
            row["wall_time"] = math.nan  # concurrent runs are not comparable
        rows.append(row)
    base = next((r["metric"] for r in rows if r["strategy"] == baseline), math.nan)
    for r in rows:
        r["improvement"] = improvement(base, r["metric"])
    fields = ("strategy", "metric", "outer", "inner", "improvement", "wall_time", "mean_omega",
              "updates", "failed")
    with open(os.path.join(out, "bench.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in fields})
    write_manifest(out, "bench", {"case": case, "strategies": list(strategies), "pvi": pvi,
                                  "steps": steps, "baseline": baseline, "parallel": parallel},
                   [model_path], list(seeds))
    return rows


def _bench_one(job):
    m, sched, kind, arg, ens, sd, name = job
    try:
        rep, c = run_strategy(m, sched, kind, arg, ens, sd, name)
    except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        return ({"strategy": name, "metric": math.nan, "outer": 0, "inner": 0, "wall_time": 0.0,
                 "failed": f"{type(exc).__name__}: {exc}", "mean_omega": math.nan,
                 "updates": 0}, None, None)
    omegas = [r.omega0 for r in rep.records]
    windows = None
    if isinstance(c, ctl.MLSurrogate):
        n = min(len(c.predicted), len(c.samples))
        windows = online.windowed_rmse(c.predicted[:n], [s.inner_iters for s in c.samples[:n]],
                                       RMSE_WINDOW)
    return ({"strategy": name, "metric": rep.total_metric, "outer": rep.total_outer,
             "inner": rep.total_inner, "wall_time": rep.wall_time, "failed": rep.failed,
             "mean_omega": float(np.mean(omegas)) if omegas else math.nan,
             "updates": len(getattr(c, "events", ()))}, rep, windows)


def format_table(rows):
    lines = [f"{'strategy':22s} {'metric':>9s} {'outer':>6s} {'inner':>6s} {'vs base':>8s} {'wall s':>7s}"]
    for r in rows:
        flag = "  FAILED" if r["failed"] else ""
        lines.append(f"{r['strategy']:22s} {r['metric']:9.1f} {r['outer']:6d} {r['inner']:6d} "
                     f"{100 * r['improvement']:7.1f}% {r['wall_time']:7.2f}{flag}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# report (static SVG)

def svg_line_chart(series, title="", xlabel="", ylabel="", width=640, height=400):
    """SVG polyline chart; ``series`` maps label -> (x, y)."""
    pad_l, pad_r, pad_t, pad_b = 60, 150, 30, 40
    xs = np.concatenate([np.asarray(x, float) for x, _ in series.values()]) if series else np.zeros(1)
    ys = np.concatenate([np.asarray(y, float) for _, y in series.values()]) if series else np.zeros(1)
    x0, x1 = float(np.nanmin(xs)), float(np.nanmax(xs))
    y0, y1 = float(np.nanmin(ys)), float(np.nanmax(ys))
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b

    def sx(v):
        return pad_l + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return pad_t + ph - (v - y0) / (y1 - y0) * ph

    palette = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
               "#7f7f7f", "#bcbd22", "#17becf")
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="14">{_esc(title)}</text>',
           f'<line x1="{pad_l}" y1="{pad_t + ph}" x2="{pad_l + pw}" y2="{pad_t + ph}" stroke="black"/>',
           f'<line x1="{pad_l}" y1="{pad_t}" x2="{pad_l}" y2="{pad_t + ph}" stroke="black"/>',
           f'<text x="{pad_l + pw / 2}" y="{height - 8}" text-anchor="middle" font-size="12">{_esc(xlabel)}</text>',
           f'<text x="14" y="{pad_t + ph / 2}" font-size="12" transform="rotate(-90 14 {pad_t + ph / 2})" '
           f'text-anchor="middle">{_esc(ylabel)}</text>',
           f'<text x="{pad_l - 4}" y="{pad_t + ph}" text-anchor="end" font-size="10">{y0:.3g}</text>',
           f'<text x="{pad_l - 4}" y="{pad_t + 10}" text-anchor="end" font-size="10">{y1:.3g}</text>',
           f'<text x="{pad_l}" y="{pad_t + ph + 14}" font-size="10">{x0:.3g}</text>',
           f'<text x="{pad_l + pw}" y="{pad_t + ph + 14}" text-anchor="end" font-size="10">{x1:.3g}</text>']
    for i, (label, (x, y)) in enumerate(series.items()):
        col = palette[i % len(palette)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
        out.append(f'<polyline class="series" data-label="{_esc(label)}" fill="none" stroke="{col}" '
                   f'stroke-width="1.5" points="{pts}"/>')
        ly = pad_t + 14 * i + 10
        out.append(f'<text x="{pad_l + pw + 8}" y="{ly}" font-size="11" fill="{col}">{_esc(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s):
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def _read_xy(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        rows = [row for row in r if row]
    if header is None:
        raise DataError(f"{path} is empty")
    return header, rows


CHARTS = {
    "curves": ("cumulative_metric", "Cumulative nonlinear iterations", "outer iteration",
               "outer + inner/3"),
    "traces": ("omega0", "Relaxation trace", "outer iteration", "initial relaxation"),
    "rmse": ("rmse", "Windowed RMSE", "window", "RMSE"),
}


def cmd_report(bench_dir, out=None):
    """One SVG per curve CSV under ``curves/``, ``traces/`` and ``rmse/``.

    Returns the list of written SVG paths.
    """
    out = out or os.path.join(bench_dir, "plots")
    found = []
    for sub, (col, title, xl, yl) in CHARTS.items():
        d = os.path.join(bench_dir, sub)
        if os.path.isdir(d):
            found += [(sub, os.path.join(d, f)) for f in sorted(os.listdir(d)) if f.endswith(".csv")]
    if not found:
        raise DataError(f"nothing to report in {bench_dir}")
    _ensure_dir(out)
    written = []
    for sub, path in found:
        col, title, xl, yl = CHARTS[sub]
        header, rows = _read_xy(path)
        if col not in header:
            raise DataError(f"{path}: missing column {col!r}")
        j = header.index(col)
        y = [float(row[j]) for row in rows]
        x = list(range(1, len(y) + 1))
        name = os.path.splitext(os.path.basename(path))[0]
        svg = svg_line_chart({name: (x, y)}, f"{title}: {name}", xl, yl)
        target = os.path.join(out, f"{sub}-{name}.svg")
        with open(target, "w") as fh:
            fh.write(svg)
        written.append(target)
    return written


# ---------------------------------------------------------------------------
# argument parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="mlrelax", description="Relaxation control for a two-phase Picard solver.")
    p.add_argument("--config", help="file of 'key = value' lines overriding flag defaults")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("datagen", help="generate and split a training dataset")
    d.add_argument("--sims", type=int, default=200)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--steps", type=int, default=5, help="time-step attempts per simulation")
    d.add_argument("--fraction", type=float, default=0.8)
    d.add_argument("--ranges", help="scenario-range file")
    d.add_argument("--workers", type=int, default=1)
    d.add_argument("--out", default="data")

    t = sub.add_parser("train", help="fit a forest or boosted ensemble")
    t.add_argument("--train", required=True)
    t.add_argument("--test")
    t.add_argument("--kind", choices=MODEL_KINDS, default="forest")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--n-trees", type=int)
    t.add_argument("--n-rounds", type=int)
    t.add_argument("--max-depth", type=int)
    t.add_argument("--max-features", type=float, dest="max_features_fraction")
    t.add_argument("--learning-rate", type=float)
    t.add_argument("--min-leaf", type=int)
    t.add_argument("--out", default="model")

    s = sub.add_parser("simulate", help="run one simulation")
    s.add_argument("--case", default="1")
    s.add_argument("--strategy", default="no-relax")
    s.add_argument("--model")
    s.add_argument("--W", type=float)
    s.add_argument("--pvi", type=float, default=0.5)
    s.add_argument("--steps", type=int, default=25)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="sim")

    b = sub.add_parser("bench", help="compare strategies on one case")
    b.add_argument("--case", default="1")
    b.add_argument("--strategies", default="no-relax,fixed-sweep,cfl-dynamic,ml-frozen,ml-online:50")
    b.add_argument("--baseline", default="no-relax")
    b.add_argument("--model")
    b.add_argument("--pvi", type=float, default=0.5)
    b.add_argument("--steps", type=int, default=25)
    b.add_argument("--seeds", default="0")
    b.add_argument("--parallel", action="store_true",
                   help="run strategies concurrently; wall times are not reported")
    b.add_argument("--workers", type=int)
    b.add_argument("--out", default="bench")

    r = sub.add_parser("report", help="SVG charts from bench outputs")
    r.add_argument("bench_dir")
    r.add_argument("--out")
    return p


def read_config(path):
    vals = {}
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"config: {exc}") from None
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        vals[key.strip().replace("-", "_")] = val.strip()
    return vals


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = read_config(args.config)
        sp = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sp._actions}
        defaults = {}
        for k, v in cfg.items():
            if k not in known:
                raise UsageError(f"config key {k!r} is not a flag of {args.command}")
            a = known[k]
            try:
                if isinstance(a, argparse._StoreTrueAction):
                    if v.lower() not in ("true", "false", "1", "0", "yes", "no"):
                        raise ValueError(v)
                    defaults[k] = v.lower() in ("true", "1", "yes")
                else:
                    defaults[k] = a.type(v) if a.type else v
            except ValueError:
                raise UsageError(f"config key {k!r}: bad value {v!r}") from None
            a.required = False
        sp.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def _int_list(text):
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad integer list {text!r}") from None


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        if args.command == "datagen":
            res = cmd_datagen(args.sims, args.seed, args.out, args.steps, args.fraction,
                              args.ranges, args.workers)
            print(f"{res['rows']} rows -> {res['dataset']}")
        elif args.command == "train":
            cmd_train(args.train, args.test, args.kind, args.out, args.seed,
                      n_trees=args.n_trees, n_rounds=args.n_rounds, max_depth=args.max_depth,
                      max_features_fraction=args.max_features_fraction,
                      learning_rate=args.learning_rate, min_leaf=args.min_leaf)
        elif args.command == "simulate":
            rep, _ = cmd_simulate(args.case, args.strategy, args.model, args.W, args.out,
                                  args.pvi, args.steps, args.seed)
            print(f"{rep.strategy}: metric {rep.total_metric:.1f} "
                  f"({rep.total_outer} outer, {rep.total_inner} inner) in {rep.wall_time:.2f} s")
        elif args.command == "bench":
            rows = cmd_bench(args.case, [s for s in args.strategies.split(",") if s], args.model,
                             args.out, args.pvi, args.steps, _int_list(args.seeds), args.baseline,
                             args.parallel, args.workers)
            print(format_table(rows))
        elif args.command == "report":
            for path in cmd_report(args.bench_dir, args.out):
                print(path)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
