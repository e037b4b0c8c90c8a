"""Offline tilt-angle optimization and the tilt lookup table.

For a required force set (RFS) the tilt vector is chosen by minimizing::

    -(number of RFS vertices inside the HFS) + |gamma|^2 / (N gamma_max^2 + eps)

with a particle swarm. The penalty is always below 1, so an objective below
``-N_R + 1`` certifies that every vertex (hence the whole convex RFS) is inside
the HFS.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .forceset import HfsQuery, RfsSpec, count_included
from .geom import Array
from .platform import PlatformParams

log = logging.getLogger(__name__)

TABLE_FORMAT = "tiltshape.tilt-table"
TABLE_VERSION = 1


@dataclass(frozen=True)
class PsoConfig:
    particles: int = 40
    iterations: int = 120
    inertia: float = 0.729
    cognitive: float = 1.49445
    social: float = 1.49445
    seed: int = 0

    def __post_init__(self):
        if self.particles < 1 or self.iterations < 1:
            raise ValueError("particles and iterations must be at least 1")


BRANCHES = ("negative", "positive", "free")


@dataclass(frozen=True)
class OptimConfig:
    """Tilt search settings.

    ``branch`` picks the sign orthant searched. Uniform-sign tilts pointing
    one way or the other give near-equal objectives, so an unrestricted swarm
    lands on either from cell to cell and the table stops interpolating
    meaningfully. ``"free"`` searches the whole box.
    """

    gamma_max: float = math.pi / 4
    eps: float = 1e-6
    rfs_half_width: float = 1.0
    pso: PsoConfig = field(default_factory=PsoConfig)
    branch: str = "negative"

    def __post_init__(self):
        if self.branch not in BRANCHES:
            raise ValueError(f"branch must be one of {BRANCHES}")
        if not 0 < self.gamma_max <= math.pi / 2:
            raise ValueError("gamma_max must lie in (0, pi/2]")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.rfs_half_width < 0:
            raise ValueError("rfs_half_width must be non-negative")


@dataclass(frozen=True)
class ObjectiveValue:
    count: int
    penalty: float

    @property
    def value(self) -> float:
        return -self.count + self.penalty


def objective_terms(params: PlatformParams, gamma, rfs: RfsSpec, cfg: OptimConfig) -> ObjectiveValue:
    g = np.asarray(gamma, dtype=float)
    if np.any(np.abs(g) > cfg.gamma_max + 1e-12):
        raise ValueError("gamma outside the optimization box")
    count = count_included(HfsQuery.at(params, g), rfs)
    penalty = float(g @ g) / (params.n_uavs * cfg.gamma_max**2 + cfg.eps)
    assert 0 <= count <= rfs.n_vertices
    assert 0.0 <= penalty < 1.0
    return ObjectiveValue(count, penalty)


def objective(params: PlatformParams, gamma, rfs: RfsSpec, cfg: OptimConfig) -> float:
    return objective_terms(params, gamma, rfs, cfg).value


def is_certified(value: float, n_vertices: int) -> bool:
    return value < -n_vertices + 1


def pso_minimize(fun, lower: Array, upper: Array, cfg: PsoConfig, seeds=()):
    """Global-best particle swarm over a box. Returns ``(x_best, f_best)``.

    ``seeds`` replace the first particles' random starting positions. Ties
    keep the earliest best found.
    """
    rng = np.random.default_rng(cfg.seed)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    span = upper - lower
    dim = lower.size
    x = lower + rng.random((cfg.particles, dim)) * span
    for k, s in enumerate(list(seeds)[: cfg.particles]):
        x[k] = np.clip(s, lower, upper)
    v = (rng.random((cfg.particles, dim)) * 2.0 - 1.0) * span
    f = np.array([fun(xi) for xi in x])
    p_best, f_best = x.copy(), f.copy()
    g = int(np.argmin(f))
    g_x, g_f = x[g].copy(), float(f[g])
    for _ in range(cfg.iterations):
        r1 = rng.random((cfg.particles, dim))
        r2 = rng.random((cfg.particles, dim))
        v = cfg.inertia * v + cfg.cognitive * r1 * (p_best - x) + cfg.social * r2 * (g_x - x)
        v = np.clip(v, -span, span)
        x = np.clip(x + v, lower, upper)
        for k in range(cfg.particles):
            fk = fun(x[k])
            if fk < f_best[k]:
                f_best[k] = fk
                p_best[k] = x[k]
                if fk < g_f:
                    g_f = fk
                    g_x = x[k].copy()
    return g_x, g_f


@dataclass(frozen=True)
class TiltResult:
    gamma: Array
    objective: float
    certified: bool


def search_box(n: int, cfg: OptimConfig) -> tuple[Array, Array]:
    lo = 0.0 if cfg.branch == "positive" else -cfg.gamma_max
    hi = 0.0 if cfg.branch == "negative" else cfg.gamma_max
    return np.full(n, lo), np.full(n, hi)


def optimize(params: PlatformParams, rfs: RfsSpec, cfg: OptimConfig, seeds=()) -> TiltResult:
    n = params.n_uavs
    lower, upper = search_box(n, cfg)

    def fun(gamma):
        return objective(params, gamma, rfs, cfg)

    # The untilted platform is always a sensible starting particle.
    seeds = [np.zeros(n), *seeds]
    gamma, value = pso_minimize(fun, lower, upper, cfg.pso, seeds=seeds)
    return TiltResult(gamma, float(value), is_certified(value, rfs.n_vertices))


# -- symmetry ---------------------------------------------------------------


@dataclass(frozen=True)
class Symmetry:
    """A map of the default 4-UAV layout onto itself.

    ``perm`` gives the new tilt vector as ``gamma[perm]``; ``force`` is the 2x2
    action on lateral force components.
    """

    name: str
    perm: tuple[int, ...]
    force: tuple[tuple[float, float], tuple[float, float]]

    def apply_gamma(self, gamma) -> Array:
        return np.asarray(gamma, dtype=float)[list(self.perm)]

    def apply_center(self, x: float, y: float) -> tuple[float, float]:
        (a, b), (c, d) = self.force
        return a * x + b * y + 0.0, c * x + d * y + 0.0


def rotate_gamma(gamma, quarter_turns: int) -> Array:
    """Tilt vector of the platform turned by ``quarter_turns * pi/2`` about Z_p."""
    return np.roll(np.asarray(gamma, dtype=float), quarter_turns)


def rotate_center(x: float, y: float, quarter_turns: int) -> tuple[float, float]:
    for _ in range(quarter_turns % 4):
        x, y = -y, x
    return x + 0.0, y + 0.0


def mirror_gamma_x(gamma) -> Array:
    """Tilt vector of the platform mirrored across the X_p axis (y -> -y).

    UAVs 1 and 3 stay, 2 and 4 swap. Hinge angles keep their sign: a tilt
    towards or away from the payload centre looks the same in the mirror.
    """
    return np.asarray(gamma, dtype=float)[[0, 3, 2, 1]]


def _rot(k: int) -> Symmetry:
    c, s = [(1, 0), (0, 1), (-1, 0), (0, -1)][k % 4]
    return Symmetry(f"rot{k}", tuple((i - k) % 4 for i in range(4)), ((c, -s), (s, c)))


def _compose(outer: Symmetry, inner: Symmetry, name: str) -> Symmetry:
    perm = tuple(inner.perm[p] for p in outer.perm)
    (a, b), (c, d) = outer.force
    (e, f), (g, h) = inner.force
    force = ((a * e + b * g, a * f + b * h), (c * e + d * g, c * f + d * h))
    return Symmetry(name, perm, force)


MIRROR_X = Symmetry("mirror_x", (0, 3, 2, 1), ((1, 0), (0, -1)))

# Identity first; it is skipped when looking for twins.
SYMMETRIES: tuple[Symmetry, ...] = (
    _rot(0),
    MIRROR_X,
    _compose(MIRROR_X, _rot(2), "mirror_y"),
    _rot(2),
    _rot(1),
    _rot(3),
    _compose(MIRROR_X, _rot(1), "mirror_antidiag"),
    _compose(MIRROR_X, _rot(3), "mirror_diag"),
)


def has_quarter_turn_symmetry(params: PlatformParams) -> bool:
    if params.n_uavs != 4:
        return False
    expected = [i * math.pi / 2 for i in range(4)]
    return (
        np.allclose(params.arm_angle, expected)
        and len(set(params.arm_len)) == 1
        and len(set(params.joint_inertia)) == 1
    )


def canonical_gamma(params: PlatformParams, gamma, center, cfg: OptimConfig) -> Array:
    """Pick one representative among symmetric twins that serve the same cell.

    Twins come from symmetries that fix the cell center; they share the
    objective value, so the lexicographically largest verified twin is kept.
    """
    gamma = np.asarray(gamma, dtype=float)
    x, y = float(center[0]), float(center[1])
    rfs = RfsSpec.cuboid(center, cfg.rfs_half_width)
    count = count_included(HfsQuery.at(params, gamma), rfs)
    best = gamma
    for sym in SYMMETRIES[1:]:
        sx, sy = sym.apply_center(x, y)
        if not (math.isclose(sx, x, abs_tol=1e-12) and math.isclose(sy, y, abs_tol=1e-12)):
            continue
        twin = sym.apply_gamma(gamma)
        if tuple(twin) > tuple(best) and count_included(HfsQuery.at(params, twin), rfs) == count:
            best = twin
    return best


# -- table ------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Uniform axis ``start, start + step, ..., stop`` (inclusive)."""

    start: float
    stop: float
    step: float

    def values(self) -> Array:
        if self.step <= 0 or self.stop < self.start:
            raise ValueError("grid needs step > 0 and stop >= start")
        n = int(round((self.stop - self.start) / self.step))
        if not math.isclose(self.start + n * self.step, self.stop, abs_tol=1e-9):
            raise ValueError("grid step must divide the range")
        return np.round(self.start + self.step * np.arange(n + 1), 12)

    @classmethod
    def parse(cls, text: str) -> GridSpec:
        try:
            a, b, s = (float(t) for t in text.split(":"))
        except ValueError as exc:
            raise ValueError(f"bad grid axis {text!r}, expected start:stop:step") from exc
        return cls(a, b, s)


@dataclass(eq=False)
class TiltTable:
    fx: Array
    fy: Array
    fz: float
    gamma: Array  # (len(fx), len(fy), N)
    objective: Array  # (len(fx), len(fy))
    certified: Array  # (len(fx), len(fy)) bool
    params_digest: str
    gamma_max: float
    eps: float
    branch: str
    half_width: float
    n_vertices: int
    origin: list = field(default_factory=list)  # row-major per-cell provenance tags

    def __post_init__(self):
        for name in ("fx", "fy"):
            ax = np.asarray(getattr(self, name), dtype=float)
            setattr(self, name, ax)
            if len(ax) > 1:
                steps = np.diff(ax)
                if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
                    raise ValueError(f"axis {name} must be strictly increasing and uniform")
        self.gamma = np.asarray(self.gamma, dtype=float)
        self.objective = np.asarray(self.objective, dtype=float)
        self.certified = np.asarray(self.certified, dtype=bool)

    @property
    def n_cells(self) -> int:
        return self.certified.size

    @property
    def all_certified(self) -> bool:
        return bool(self.certified.all())

    def index(self, fx: float, fy: float) -> tuple[int, int]:
        ix = int(np.argmin(np.abs(self.fx - fx)))
        iy = int(np.argmin(np.abs(self.fy - fy)))
        if not (math.isclose(self.fx[ix], fx, abs_tol=1e-9) and math.isclose(self.fy[iy], fy, abs_tol=1e-9)):
            raise KeyError(f"({fx}, {fy}) is not a grid node")
        return ix, iy

    def at(self, fx: float, fy: float) -> Array:
        ix, iy = self.index(fx, fy)
        return self.gamma[ix, iy]

    def center(self, ix: int, iy: int) -> Array:
        return np.array([self.fx[ix], self.fy[iy], self.fz])

    def to_json(self) -> str:
        header = {
            "format": TABLE_FORMAT,
            "version": TABLE_VERSION,
            "params_digest": self.params_digest,
            "fx": self.fx.tolist(),
            "fy": self.fy.tolist(),
            "fz": self.fz,
            "gamma_max": self.gamma_max,
            "eps": self.eps,
            "branch": self.branch,
            "half_width": self.half_width,
            "n_vertices": self.n_vertices,
        }
        entries = []
        for ix in range(len(self.fx)):
            for iy in range(len(self.fy)):
                k = ix * len(self.fy) + iy
                entries.append(
                    {
                        "gamma": self.gamma[ix, iy].tolist(),
                        "objective": float(self.objective[ix, iy]),
                        "certified": bool(self.certified[ix, iy]),
                        "origin": self.origin[k] if self.origin else "",
                    }
                )
        return json.dumps({"header": header, "entries": entries}, indent=1) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def from_json(cls, text: str) -> TiltTable:
        doc = json.loads(text)
        h = doc["header"]
        if h.get("format") != TABLE_FORMAT:
            raise ValueError("not a tilt table file")
        if h.get("version") != TABLE_VERSION:
            raise ValueError(f"unsupported tilt table version {h.get('version')}")
        nx, ny = len(h["fx"]), len(h["fy"])
        entries = doc["entries"]
        if len(entries) != nx * ny:
            raise ValueError("entry count does not match the grid")
        gamma = np.array([e["gamma"] for e in entries], dtype=float).reshape(nx, ny, -1)
        obj = np.array([e["objective"] for e in entries], dtype=float).reshape(nx, ny)
        cert = np.array([e["certified"] for e in entries], dtype=bool).reshape(nx, ny)
        return cls(
            fx=np.array(h["fx"], dtype=float),
            fy=np.array(h["fy"], dtype=float),
            fz=h["fz"],
            gamma=gamma,
            objective=obj,
            certified=cert,
            params_digest=h["params_digest"],
            gamma_max=h["gamma_max"],
            eps=h["eps"],
            branch=h["branch"],
            half_width=h["half_width"],
            n_vertices=h["n_vertices"],
            origin=[e.get("origin", "") for e in entries],
        )

    @classmethod
    def load(cls, path) -> TiltTable:
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def _cell_seed(base: int, fx: float, fy: float) -> int:
    # Stable across processes and grid sizes: keyed by the center, not the index.
    ss = np.random.SeedSequence([base, int(round(fx * 1e6)) & 0xFFFFFFFF, int(round(fy * 1e6)) & 0xFFFFFFFF])
    return int(ss.generate_state(1)[0])


def _optimize_cell(args) -> TiltResult:
    params, cfg, center, seeds = args
    rfs = RfsSpec.cuboid(center, cfg.rfs_half_width)
    pso = PsoConfig(**{**cfg.pso.__dict__, "seed": _cell_seed(cfg.pso.seed, center[0], center[1])})
    cell_cfg = OptimConfig(cfg.gamma_max, cfg.eps, cfg.rfs_half_width, pso, cfg.branch)
    return optimize(params, rfs, cell_cfg, seeds=seeds)


def _map_cells(jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [_optimize_cell(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_optimize_cell, jobs))


def recheck(params: PlatformParams, gamma, center, cfg: OptimConfig) -> tuple[float, bool]:
    """Objective and certificate recomputed from scratch for one cell."""
    rfs = RfsSpec.cuboid(center, cfg.rfs_half_width)
    value = objective(params, gamma, rfs, cfg)
    return value, is_certified(value, rfs.n_vertices)


def _mirror_axis(axis: Array) -> Array:
    return np.concatenate([-axis[:0:-1], axis]) + 0.0


def _plan_cells(xs: Array, ys: Array, use_symmetry: bool):
    """Split the grid into optimized cells and cells filled by a symmetry.

    Returns ``(representatives, filled)`` with ``filled`` mapping a cell to
    ``(source cell, symmetry)``. Cells in the first quadrant below the
    diagonal are preferred as representatives.
    """
    cells = [(float(fx), float(fy)) for fx in xs for fy in ys]
    if not use_symmetry:
        return cells, {}
    order = sorted(cells, key=lambda c: (c[0] < 0 or c[1] < 0, c[1] > c[0], -c[0], -c[1]))
    reps: list[tuple[float, float]] = []
    filled = {}
    for cell in order:
        for rep in reps:
            sym = next((s for s in SYMMETRIES[1:] if np.allclose(s.apply_center(*rep), cell, atol=1e-9)), None)
            if sym is not None:
                filled[cell] = (rep, sym)
                break
        else:
            reps.append(cell)
    return [c for c in cells if c in reps], filled


def build_table(
    params: PlatformParams,
    x_axis: GridSpec,
    y_axis: GridSpec,
    cfg: OptimConfig,
    *,
    complete_symmetry: bool = True,
    workers: int = 1,
) -> TiltTable:
    """Optimize the tilt vector for every grid cell.

    With the square four-UAV layout, axes starting at 0 are first mirrored to
    cover the full range, and only one cell per symmetry orbit is optimized.
    The other cells get the mapped tilt vector, re-checked by direct vertex
    counting and re-optimized if the check fails.
    """
    xs, ys = x_axis.values(), y_axis.values()
    fz = params.weight
    n_r = RfsSpec.cuboid([0.0, 0.0, fz], cfg.rfs_half_width).n_vertices
    use_symmetry = complete_symmetry and has_quarter_turn_symmetry(params)
    if use_symmetry and xs[0] == 0 and ys[0] == 0:
        xs, ys = _mirror_axis(xs), _mirror_axis(ys)
    reps, filled = _plan_cells(xs, ys, use_symmetry)

    jobs = [(params, cfg, (fx, fy, fz), ()) for fx, fy in reps]
    computed = {}
    for (fx, fy), res in zip(reps, _map_cells(jobs, workers)):
        g = canonical_gamma(params, res.gamma, (fx, fy, fz), cfg) if use_symmetry else res.gamma
        computed[(fx, fy)] = (g, res.objective, res.certified)

    nx, ny, n = len(xs), len(ys), params.n_uavs
    gamma = np.zeros((nx, ny, n))
    obj = np.zeros((nx, ny))
    cert = np.zeros((nx, ny), dtype=bool)
    origin = [""] * (nx * ny)

    redo = []
    for ix, fx in enumerate(xs):
        for iy, fy in enumerate(ys):
            flat = ix * ny + iy
            key = (float(fx), float(fy))
            if key in computed:
                gamma[ix, iy], obj[ix, iy], cert[ix, iy] = computed[key]
                origin[flat] = "optimized"
                continue
            src, sym = filled[key]
            g = sym.apply_gamma(computed[src][0])
            v, c = recheck(params, g, (fx, fy, fz), cfg)
            if c or not computed[src][2]:
                gamma[ix, iy], obj[ix, iy], cert[ix, iy] = g, v, c
                origin[flat] = sym.name
            else:
                log.warning("symmetric entry at (%g, %g) failed re-check; re-optimizing", fx, fy)
                redo.append((ix, iy))

    if redo:
        jobs = [(params, cfg, (float(xs[ix]), float(ys[iy]), fz), ()) for ix, iy in redo]
        for (ix, iy), res in zip(redo, _map_cells(jobs, workers)):
            gamma[ix, iy], obj[ix, iy], cert[ix, iy] = res.gamma, res.objective, res.certified
            origin[ix * ny + iy] = "reoptimized"

    return TiltTable(
        fx=xs,
        fy=ys,
        fz=fz,
        gamma=gamma,
        objective=obj,
        certified=cert,
        params_digest=params.digest(),
        gamma_max=cfg.gamma_max,
        eps=cfg.eps,
        branch=cfg.branch,
        half_width=cfg.rfs_half_width,
        n_vertices=n_r,
        origin=origin,
    )
