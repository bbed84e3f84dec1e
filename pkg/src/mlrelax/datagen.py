"""Offline training data: perturbed two-layer scenarios run with a fixed relaxation.

Every outer iteration of every run becomes one CSV row (17 features,
the relaxation used, the inner iterations it took).  A JSON summary next
to the CSV records which rows belong to which simulation, so splits can
keep whole runs together.
"""

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace

import numpy as np

from . import model as mdl
from . import solver
from .controller import Fixed
from .features import FEATURE_NAMES
from .mlcore import TrainingSample, derive_seed
from .rockfluid import BrooksCoreyParams

log = logging.getLogger(__name__)

HEADER = FEATURE_NAMES + ("omega", "inner_iters")
LOG_UNIFORM = ("kx_upper", "kx_lower", "kz_ratio")


@dataclass(frozen=True)
class ScenarioRanges:
    """Closed ``(lo, hi)`` intervals; permeabilities in mD, gravity tilt in degrees."""

    kx_upper: tuple = (1.0, 1000.0)
    kx_lower: tuple = (1.0, 1000.0)
    kz_ratio: tuple = (0.01, 1.0)
    phi_upper: tuple = (0.05, 0.35)
    phi_lower: tuple = (0.05, 0.35)
    viscosity_ratio: tuple = (1.0, 20.0)  # displaced / injected
    pe: tuple = (0.0, 5000.0)
    n_exp: tuple = (1.5, 3.0)
    krw_end: tuple = (0.3, 1.0)
    krnw_end: tuple = (0.3, 1.0)
    gravity: tuple = (0.0, 9.81)
    gravity_tilt: tuple = (-20.0, 20.0)
    cfl: tuple = (0.1, 20.0)
    omega: tuple = (0.1, 1.0)

    def __post_init__(self):
        for f in fields(self):
            lo, hi = getattr(self, f.name)
            if not (lo <= hi):
                raise ValueError(f"{f.name}: lower bound above upper bound")
        checks = {
            "kx_upper": lambda lo, hi: lo > 0, "kx_lower": lambda lo, hi: lo > 0,
            "kz_ratio": lambda lo, hi: lo > 0,
            "phi_upper": lambda lo, hi: 0.02 < lo and hi < 0.4,
            "phi_lower": lambda lo, hi: 0.02 < lo and hi < 0.4,
            "viscosity_ratio": lambda lo, hi: lo > 0, "pe": lambda lo, hi: lo >= 0,
            "n_exp": lambda lo, hi: lo > 0,
            "krw_end": lambda lo, hi: 0 < lo and hi <= 1, "krnw_end": lambda lo, hi: 0 < lo and hi <= 1,
            "gravity": lambda lo, hi: lo >= 0, "gravity_tilt": lambda lo, hi: -90 <= lo and hi <= 90,
            "cfl": lambda lo, hi: lo > 0, "omega": lambda lo, hi: 0.1 <= lo and hi <= 1.0,
        }
        for name, ok in checks.items():
            if not ok(*getattr(self, name)):
                raise ValueError(f"{name}: range {getattr(self, name)} is not physical")

    @classmethod
    def base(cls, cfl=(1.0, 1.0), omega=(1.0, 1.0)):
        """Degenerate ranges reproducing the unperturbed two-layer model."""
        return cls(kx_upper=(200.0, 200.0), kx_lower=(100.0, 100.0), kz_ratio=(0.1, 0.1),
                   phi_upper=(0.1, 0.1), phi_lower=(0.2, 0.2), viscosity_ratio=(5.0, 5.0),
                   pe=(1000.0, 1000.0), n_exp=(2.0, 2.0), krw_end=(1.0, 1.0), krnw_end=(1.0, 1.0),
                   gravity=(9.81, 9.81), gravity_tilt=(0.0, 0.0), cfl=cfl, omega=omega)

    def dumps(self):
        return "".join(f"{f.name} = {getattr(self, f.name)[0]!r} {getattr(self, f.name)[1]!r}\n"
                       for f in fields(self))

    @classmethod
    def loads(cls, text):
        kw = {}
        names = {f.name for f in fields(cls)}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            key = key.strip()
            parts = val.split()
            if not sep or key not in names or len(parts) != 2:
                raise ValueError(f"line {n}: expected '<name> = <lo> <hi>'")
            kw[key] = (float(parts[0]), float(parts[1]))
        return cls(**kw)


@dataclass(frozen=True)
class Scenario:
    seed: int
    params: dict
    model: mdl.ReservoirModel
    dt: float
    omega: float


def _draw(rng, rng_range, log_scale=False):
    lo, hi = rng_range
    u = rng.random()
    if lo == hi:
        return float(lo)
    if log_scale:
        return float(math.exp(math.log(lo) + u * (math.log(hi) - math.log(lo))))
    return float(lo + u * (hi - lo))


def dt_for_cfl(model, cfl):
    """Time step giving inflow-cell CFL ``cfl`` for the injection flux."""
    axis = mdl.FACES[model.bc.inflow][0]
    h = model.spacing[axis]
    phi_min = float(model.phi[model.inflow.cells].min())
    return cfl * phi_min * h / model.bc.injection_flux


def sample_scenario(ranges=ScenarioRanges(), seed=0, base=None):
    """Deterministic perturbed two-layer model, time step and fixed relaxation."""
    rng = np.random.default_rng(derive_seed(seed, 0x5EED))
    p = {f.name: _draw(rng, getattr(ranges, f.name), f.name in LOG_UNIFORM) for f in fields(ranges)}
    base = mdl.build_test_case_1() if base is None else base
    nz = base.nz
    upper = np.repeat(np.arange(nz), base.nx * base.ny) >= nz // 2
    kx = np.where(upper, p["kx_upper"], p["kx_lower"]) * mdl.MILLIDARCY
    phi = np.where(upper, p["phi_upper"], p["phi_lower"])
    fl = base.fluid
    fluid = replace(fl, mu_nw=fl.mu_w * p["viscosity_ratio"])
    rfp = base.rock_fluid
    rock_fluid = BrooksCoreyParams(p["krw_end"], p["krnw_end"], p["n_exp"], rfp.Swi, rfp.Snwi,
                                   p["pe"], rfp.a_cap)
    tilt = math.radians(p["gravity_tilt"])
    g = p["gravity"]
    gravity = (g * math.sin(tilt), 0.0, -g * math.cos(tilt))
    if gravity == tuple(base.gravity):
        gravity = base.gravity
    model = base.with_changes(kx=kx, ky=kx.copy(), kz=p["kz_ratio"] * kx, phi=phi, fluid=fluid,
                              rock_fluid=rock_fluid, gravity=gravity)
    return Scenario(seed, p, model, dt_for_cfl(model, p["cfl"]), p["omega"])


def run_scenario(scenario, n_steps=5, config=solver.SolverConfig()):
    """Run ``n_steps`` step attempts; failed attempts halve dt and still yield rows."""
    m = scenario.model
    rec = Fixed(scenario.omega)
    state = solver.initial_state(m, dt=scenario.dt)
    dt = scenario.dt
    for step in range(n_steps):
        state.dt = dt
        ok, _ = solver.advance_timestep(m, state, rec, config, step=step)
        if not ok:
            dt *= 0.5
    return rec.samples


def _run_one(args):
    ranges, seed, n_steps = args
    sc = sample_scenario(ranges, seed)
    try:
        return seed, sc.params, run_scenario(sc, n_steps), ""
    except (FloatingPointError, np.linalg.LinAlgError, ValueError, RuntimeError) as exc:
        return seed, sc.params, [], f"{type(exc).__name__}: {exc}"


def _fmt(x):
    return repr(float(x))


def write_samples(path, samples):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for s in samples:
            w.writerow([_fmt(v) for v in s.features] + [_fmt(s.omega), _fmt(s.inner_iters)])


def read_samples(path):
    """Parse a dataset CSV, checking the header."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = tuple(next(r, ()))
        if header != HEADER:
            raise ValueError(f"{path}: header does not match the dataset schema")
        out = []
        for n, row in enumerate(r, 2):
            if len(row) != len(HEADER):
                raise ValueError(f"{path}:{n}: expected {len(HEADER)} columns")
            v = [float(x) for x in row]
            out.append(TrainingSample(np.array(v[:-2]), v[-2], v[-1]))
    return out


def summary_path(csv_path):
    root, _ = os.path.splitext(csv_path)
    return root + ".summary.json"


def _coverage(params_list, ranges, bins=10):
    cov = {}
    for f in fields(ranges):
        lo, hi = getattr(ranges, f.name)
        vals = np.array([p[f.name] for p in params_list])
        if f.name in LOG_UNIFORM and lo > 0:
            vals, lo, hi = np.log10(vals), math.log10(lo), math.log10(hi)
        if hi > lo:
            counts, _ = np.histogram(vals, bins=bins, range=(lo, hi))
        else:
            counts = np.array([vals.size])
        cov[f.name] = {"min": float(vals.min()) if vals.size else None,
                       "max": float(vals.max()) if vals.size else None,
                       "log10": f.name in LOG_UNIFORM, "counts": counts.tolist()}
    return cov


def generate_dataset(n_sims, ranges=ScenarioRanges(), seed=0, out_path="dataset.csv",
                     n_steps=5, workers=1):
    """Run ``n_sims`` scenarios and write one row per outer iteration.

    Scenario ``i`` uses seed ``derive_seed(seed, i)``; results are written
    in that order whatever ``workers`` is, so output is reproducible.
    """
    if n_sims < 1:
        raise ValueError("n_sims must be >= 1")
    jobs = [(ranges, derive_seed(seed, i), n_steps) for i in range(n_sims)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    sims, rows, all_samples = [], 0, []
    for i, (sd, params, samples, err) in enumerate(results):
        if err:
            log.warning("scenario %d (seed %d) skipped: %s", i, sd, err)
        sims.append({"sim": i, "seed": sd, "first_row": rows, "n_rows": len(samples),
                     "error": err, "params": params})
        rows += len(samples)
        all_samples.extend(samples)
    write_samples(out_path, all_samples)
    summary = {"n_sims": n_sims, "seed": seed, "n_steps": n_steps, "n_rows": rows,
               "ranges": {f.name: list(getattr(ranges, f.name)) for f in fields(ranges)},
               "coverage": _coverage([s["params"] for s in sims], ranges),
               "simulations": sims}
    with open(summary_path(out_path), "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
    return summary


def split_dataset(path, fraction=0.8, seed=0, train_path=None, test_path=None):
    """Split by simulation into train/test CSVs; returns their paths."""
    if not (0 < fraction < 1):
        raise ValueError("fraction must lie in (0, 1)")
    with open(summary_path(path)) as fh:
        sims = [s for s in json.load(fh)["simulations"] if s["n_rows"] > 0]
    if len(sims) < 2:
        raise ValueError("need at least two simulations with rows to split")
    samples = read_samples(path)
    order = np.random.default_rng(seed).permutation(len(sims))
    n_train = min(max(int(round(fraction * len(sims))), 1), len(sims) - 1)
    train_ids = set(order[:n_train].tolist())
    root, ext = os.path.splitext(path)
    train_path = train_path or f"{root}_train{ext}"
    test_path = test_path or f"{root}_test{ext}"
    parts = {True: [], False: []}
    for i, s in enumerate(sims):
        parts[i in train_ids].extend(samples[s["first_row"]:s["first_row"] + s["n_rows"]])
    write_samples(train_path, parts[True])
    write_samples(test_path, parts[False])
    return train_path, test_path
