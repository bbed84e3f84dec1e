"""Structured Cartesian reservoir models and the reference test cases.

Cells are stored flat with ``i`` (x) varying fastest, then ``j`` (y), then
``k`` (z, pointing up). Permeabilities are in m^2.
"""

from dataclasses import dataclass, field, replace, fields
from functools import cached_property

import numpy as np

from .rockfluid import BrooksCoreyParams, CASES_1_2, CASE_4

MILLIDARCY = 9.869233e-16
FORMAT_VERSION = 1

# face name -> (axis, side)
FACES = {"xmin": (0, 0), "xmax": (0, 1), "ymin": (1, 0), "ymax": (1, 1), "zmin": (2, 0), "zmax": (2, 1)}


@dataclass(frozen=True)
class FluidProps:
    mu_w: float = 1e-3
    mu_nw: float = 5e-3
    rho_w: float = 1000.0
    rho_nw: float = 1300.0

    def __post_init__(self):
        if min(self.mu_w, self.mu_nw, self.rho_w, self.rho_nw) <= 0:
            raise ValueError("viscosities and densities must be positive")


@dataclass(frozen=True)
class BoundaryConditions:
    """Wetting-phase injection through one face, fixed pressure on another."""

    inflow: str = "xmin"
    injection_flux: float = 1e-6
    outflow: str = "xmax"
    p_out: float = 0.0

    def __post_init__(self):
        if self.inflow not in FACES or self.outflow not in FACES:
            raise ValueError(f"unknown boundary face (valid: {sorted(FACES)})")
        if self.inflow == self.outflow:
            raise ValueError("inflow and outflow must be distinct faces")
        if self.injection_flux < 0:
            raise ValueError("injection flux must be non-negative")


@dataclass(frozen=True)
class Connectivity:
    """Interior faces of a structured grid as parallel arrays."""

    a: np.ndarray
    b: np.ndarray
    axis: np.ndarray
    area: np.ndarray
    dist: np.ndarray
    trans: np.ndarray  # geometric: harmonic k * area / dist
    dgrav: np.ndarray  # g . (x_b - x_a)


@dataclass(frozen=True)
class BoundaryFaces:
    cells: np.ndarray
    area: np.ndarray
    half_dist: np.ndarray
    trans: np.ndarray
    dgrav: np.ndarray  # g . (x_face - x_cell)
    axis: int


@dataclass(frozen=True, eq=False)
class ReservoirModel:
    nx: int
    ny: int
    nz: int
    dx: float
    dy: float
    dz: float
    kx: np.ndarray
    ky: np.ndarray
    kz: np.ndarray
    phi: np.ndarray
    fluid: FluidProps = field(default_factory=FluidProps)
    rock_fluid: BrooksCoreyParams = CASES_1_2
    bc: BoundaryConditions = field(default_factory=BoundaryConditions)
    gravity: tuple = (0.0, 0.0, -9.81)
    name: str = "custom"

    def __post_init__(self):
        if min(self.nx, self.ny, self.nz) < 1 or min(self.dx, self.dy, self.dz) <= 0:
            raise ValueError("grid dimensions must be positive")
        n = self.n_cells
        for key in ("kx", "ky", "kz", "phi"):
            arr = np.array(getattr(self, key), dtype=float).ravel()
            if arr.size == 1:
                arr = np.full(n, arr[0])
            if arr.size != n:
                raise ValueError(f"{key} has {arr.size} values for {n} cells")
            arr.setflags(write=False)
            object.__setattr__(self, key, arr)
        if np.any(self.kx <= 0) or np.any(self.ky <= 0) or np.any(self.kz <= 0):
            raise ValueError("permeabilities must be positive")
        if np.any(self.phi <= 0) or np.any(self.phi >= 1):
            raise ValueError("porosity must lie in (0, 1)")
        object.__setattr__(self, "gravity", tuple(float(g) for g in self.gravity))

    @property
    def n_cells(self):
        return self.nx * self.ny * self.nz

    @property
    def shape(self):
        return (self.nx, self.ny, self.nz)

    @property
    def spacing(self):
        return (self.dx, self.dy, self.dz)

    @property
    def lengths(self):
        return (self.nx * self.dx, self.ny * self.dy, self.nz * self.dz)

    @property
    def cell_volume(self):
        return self.dx * self.dy * self.dz

    @property
    def pore_volume(self):
        return self.phi * self.cell_volume

    def cell_index(self, i, j, k):
        return i + self.nx * (j + self.ny * k)

    def ijk(self, idx):
        idx = np.asarray(idx)
        return idx % self.nx, (idx // self.nx) % self.ny, idx // (self.nx * self.ny)

    @cached_property
    def centers(self):
        i, j, k = self.ijk(np.arange(self.n_cells))
        return np.column_stack(((i + 0.5) * self.dx, (j + 0.5) * self.dy, (k + 0.5) * self.dz))

    def perm(self, axis):
        return (self.kx, self.ky, self.kz)[axis]

    def face_area(self, axis):
        d = self.spacing
        return d[(axis + 1) % 3] * d[(axis + 2) % 3]

    def face_transmissibility(self, cell_a, cell_b):
        """Geometric TPFA transmissibility between two adjacent cells [m^3]."""
        ia, ja, ka = (int(v) for v in self.ijk(cell_a))
        ib, jb, kb = (int(v) for v in self.ijk(cell_b))
        diff = (abs(ia - ib), abs(ja - jb), abs(ka - kb))
        if sorted(diff) != [0, 0, 1]:
            raise ValueError(f"cells {cell_a} and {cell_b} are not face neighbours")
        axis = diff.index(1)
        k = self.perm(axis)
        return harmonic_mean(k[cell_a], k[cell_b]) * self.face_area(axis) / self.spacing[axis]

    @cached_property
    def connectivity(self):
        idx = np.arange(self.n_cells).reshape(self.nz, self.ny, self.nx)
        g = np.asarray(self.gravity)
        parts = []
        for axis, sl_a, sl_b in (
            (0, np.s_[:, :, :-1], np.s_[:, :, 1:]),
            (1, np.s_[:, :-1, :], np.s_[:, 1:, :]),
            (2, np.s_[:-1, :, :], np.s_[1:, :, :]),
        ):
            a = idx[sl_a].ravel()
            b = idx[sl_b].ravel()
            if a.size == 0:
                continue
            k = self.perm(axis)
            d = self.spacing[axis]
            area = self.face_area(axis)
            parts.append((a, b, np.full(a.size, axis),
                          np.full(a.size, area), np.full(a.size, d),
                          harmonic_mean(k[a], k[b]) * area / d,
                          np.full(a.size, g[axis] * d)))
        if not parts:
            empty = np.zeros(0)
            return Connectivity(empty.astype(int), empty.astype(int), empty.astype(int),
                                empty, empty, empty, empty)
        cols = [np.concatenate(c) for c in zip(*parts)]
        return Connectivity(*cols)

    def boundary_faces(self, name):
        axis, side = FACES[name]
        i, j, k = self.ijk(np.arange(self.n_cells))
        pos = (i, j, k)[axis]
        last = self.shape[axis] - 1
        cells = np.flatnonzero(pos == (last if side else 0))
        area = self.face_area(axis)
        half = 0.5 * self.spacing[axis]
        sign = 1.0 if side else -1.0
        return BoundaryFaces(
            cells=cells,
            area=np.full(cells.size, area),
            half_dist=np.full(cells.size, half),
            trans=self.perm(axis)[cells] * area / half,
            dgrav=np.full(cells.size, self.gravity[axis] * sign * half),
            axis=axis,
        )

    @cached_property
    def inflow(self):
        return self.boundary_faces(self.bc.inflow)

    @cached_property
    def outflow(self):
        return self.boundary_faces(self.bc.outflow)

    @property
    def injection_rate(self):
        """Total injected wetting volume rate [m^3/s]."""
        return self.bc.injection_flux * float(self.inflow.area.sum())

    def with_changes(self, **kw):
        return replace(self, **kw)


def harmonic_mean(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    s = a + b
    return np.divide(2.0 * a * b, s, out=np.zeros_like(s), where=s > 0)


def build_grid(nx, ny, nz, dx, dy, dz, **kw):
    """Uniform model with placeholder properties (100 mD, 20% porosity)."""
    if min(nx, ny, nz) < 1 or min(dx, dy, dz) <= 0:
        raise ValueError("grid dimensions must be positive")
    n = nx * ny * nz
    k = np.full(n, 100 * MILLIDARCY)
    kw.setdefault("kx", k)
    kw.setdefault("ky", k)
    kw.setdefault("kz", k)
    kw.setdefault("phi", np.full(n, 0.2))
    return ReservoirModel(nx, ny, nz, dx, dy, dz, **kw)


def _two_d(nx, nz, lx, lz):
    return dict(nx=nx, ny=1, nz=nz, dx=lx / nx, dy=1.0, dz=lz / nz)


def build_test_case_1(nx=50, nz=20, lx=100.0, lz=40.0, injection_flux=1e-6):
    """Two-layer 2D vertical slice used for offline training."""
    geo = _two_d(nx, nz, lx, lz)
    k_idx = np.repeat(np.arange(nz), nx)
    upper = k_idx >= nz // 2
    kx = np.where(upper, 200.0, 100.0) * MILLIDARCY
    phi = np.where(upper, 0.10, 0.20)
    fluid = FluidProps(mu_w=1e-3, mu_nw=5e-3, rho_w=1000.0, rho_nw=1300.0)
    return ReservoirModel(**geo, kx=kx, ky=kx, kz=0.1 * kx, phi=phi, fluid=fluid,
                          rock_fluid=CASES_1_2,
                          bc=BoundaryConditions("xmin", injection_flux, "xmax", 0.0),
                          name="case1")


def build_test_case_2(nx=50, nz=20, lx=100.0, lz=40.0, injection_flux=1e-6):
    """2D model with four permeability quadrants (200/20 over 10/100 mD)."""
    geo = _two_d(nx, nz, lx, lz)
    i_idx = np.tile(np.arange(nx), nz)
    k_idx = np.repeat(np.arange(nz), nx)
    upper = k_idx >= nz // 2
    left = i_idx < nx // 2
    kx = np.select([upper & left, upper & ~left, ~upper & left], [200.0, 20.0, 10.0], 100.0) * MILLIDARCY
    fluid = FluidProps(mu_w=1e-3, mu_nw=5e-3, rho_w=1000.0, rho_nw=1300.0)
    return ReservoirModel(**geo, kx=kx, ky=kx, kz=kx, phi=np.full(nx * nz, 0.2), fluid=fluid,
                          rock_fluid=CASES_1_2,
                          bc=BoundaryConditions("xmin", injection_flux, "xmax", 0.0),
                          name="case2")


def build_layered_3d(nx=20, ny=10, nz=8, lx=100.0, ly=50.0, lz=16.0, injection_flux=1e-6):
    """Alternating mudstone (1 mD) / sandstone (1000 mD) layers in 3D."""
    n = nx * ny * nz
    k_idx = np.arange(n) // (nx * ny)
    sand = (k_idx // 2) % 2 == 1
    kx = np.where(sand, 1000.0, 1.0) * MILLIDARCY
    phi = np.where(sand, 0.10, 0.20)
    fluid = FluidProps(mu_w=1e-3, mu_nw=5e-3, rho_w=1000.0, rho_nw=1300.0)
    return ReservoirModel(nx, ny, nz, lx / nx, ly / ny, lz / nz, kx=kx, ky=kx, kz=kx, phi=phi,
                          fluid=fluid, rock_fluid=CASE_4,
                          bc=BoundaryConditions("xmin", injection_flux, "xmax", 0.0),
                          name="layered3d")


CASES = {"1": build_test_case_1, "2": build_test_case_2, "3d": build_layered_3d}


def build_case(case_id):
    try:
        return CASES[str(case_id)]()
    except KeyError:
        raise ValueError(f"unknown case id {case_id!r} (known: {sorted(CASES)})") from None


# ---------------------------------------------------------------------------
# text import / export

_SCALARS = ("name", "nx", "ny", "nz", "dx", "dy", "dz")
_ARRAYS = ("kx", "ky", "kz", "phi")


def dumps(model):
    lines = [f"# mlrelax reservoir model", f"version = {FORMAT_VERSION}"]
    for key in _SCALARS:
        lines.append(f"{key} = {getattr(model, key)!r}" if key != "name" else f"name = {model.name}")
    for prefix, obj in (("fluid", model.fluid), ("rock_fluid", model.rock_fluid), ("bc", model.bc)):
        for f in fields(obj):
            val = getattr(obj, f.name)
            lines.append(f"{prefix}.{f.name} = {val if isinstance(val, str) else repr(float(val))}")
    lines.append("gravity = " + " ".join(repr(g) for g in model.gravity))
    for key in _ARRAYS:
        lines.append(f"{key} = " + " ".join(repr(float(v)) for v in getattr(model, key)))
    return "\n".join(lines) + "\n"


def loads(text):
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        raw[key] = val
    try:
        if int(raw.pop("version")) != FORMAT_VERSION:
            raise ValueError("unsupported model file version")
        sub = {"fluid": {}, "rock_fluid": {}, "bc": {}}
        for key in list(raw):
            if "." in key:
                prefix, name = key.split(".", 1)
                sub[prefix][name] = raw.pop(key)
        fluid = FluidProps(**{k: float(v) for k, v in sub["fluid"].items()})
        rf = BrooksCoreyParams(**{k: float(v) for k, v in sub["rock_fluid"].items()})
        bc_raw = sub["bc"]
        bc = BoundaryConditions(bc_raw["inflow"], float(bc_raw["injection_flux"]),
                                bc_raw["outflow"], float(bc_raw["p_out"]))
        kw = {k: np.array(raw[k].split(), dtype=float) for k in _ARRAYS}
        return ReservoirModel(
            int(raw["nx"]), int(raw["ny"]), int(raw["nz"]),
            float(raw["dx"]), float(raw["dy"]), float(raw["dz"]),
            fluid=fluid, rock_fluid=rf, bc=bc,
            gravity=tuple(float(g) for g in raw["gravity"].split()),
            name=raw.get("name", "custom"), **kw)
    except KeyError as exc:
        raise ValueError(f"model file missing field {exc}") from None


def save_model(model, path):
    with open(path, "w") as fh:
        fh.write(dumps(model))


def load_model(path):
    with open(path) as fh:
        return loads(fh.read())
