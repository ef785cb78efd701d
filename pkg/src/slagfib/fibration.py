"""Families of solved fibres: parameter sweeps, tangent map, chart overlaps, export."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import spectral
from .ambient import (
    DefiningPolynomial, FamilyParams, PartitionedIndex, RegionConstants, ToricPotential,
    classify_region, project_z0,
)
from .errors import ConvergenceError, ParameterError, SlagError
from .geometry import Geometry
from .local_model import (
    FibreEmbedding, ModelParams, infer_winding, lagrangian_residual, model_torus, phase_residual,
)
from .solver import SolverConfig, SolverContext, moduli_coordinate

log = logging.getLogger(__name__)


class OutputExistsError(ParameterError):
    """Refusal to overwrite an existing export."""


@dataclass(frozen=True)
class Thresholds:
    phase: float = 1e-8
    lagrangian: float = 1e-8
    min_diag: float = 0.5


@dataclass(frozen=True)
class ChartSpec:
    """Partition, potential, polynomial and t, plus the solver settings used in this chart."""

    part: PartitionedIndex
    pot: ToricPotential
    p: DefiningPolynomial
    t: float
    solver: SolverConfig = field(default_factory=SolverConfig)
    region: RegionConstants = field(default_factory=RegionConstants)
    thresholds: Thresholds = field(default_factory=Thresholds)

    def geometry(self) -> Geometry:
        return Geometry(self.part, self.pot, self.p, self.t)

    def params(self, r, c) -> ModelParams:
        return ModelParams(tuple(r), tuple(c), self.part, FamilyParams(self.t))

    def with_part(self, part: PartitionedIndex) -> "ChartSpec":
        return replace(self, part=part)

    def describe(self) -> dict:
        return {
            "n": self.part.n,
            "small": list(self.part.small),
            "large": list(self.part.large),
            "t": self.t,
            "grid": list(self.solver.shape),
            "flow_steps": self.solver.flow_steps,
            "tol": self.solver.tol,
        }


@dataclass(frozen=True)
class ParamPoint:
    """Normalised fibre label: xi_k = c_k / nu_k^2 (k in the small block, k >= 1), log r_j."""

    xi: tuple
    log_r: tuple

    def to_params(self, spec: ChartSpec, nu) -> ModelParams:
        small = [k for k in spec.part.small if k]
        c = [0.0] + [float(x) * float(nu[k]) ** 2 for x, k in zip(self.xi, small)]
        r = [math.exp(v) for v in self.log_r]
        return spec.params(r, c)

    def vector(self, part: PartitionedIndex) -> np.ndarray:
        """Coordinates indexed 1..n in the order of the ambient index."""
        out = np.zeros(part.n)
        small = [k for k in part.small if k]
        for x, k in zip(self.xi, small):
            out[k - 1] = x
        for v, j in zip(self.log_r, part.large):
            out[j - 1] = v
        return out

    @classmethod
    def from_vector(cls, part: PartitionedIndex, v) -> "ParamPoint":
        small = [k for k in part.small if k]
        return cls(tuple(float(v[k - 1]) for k in small), tuple(float(v[j - 1]) for j in part.large))


def param_point_of(params: ModelParams, nu) -> ParamPoint:
    small = [k for k in params.part.small if k]
    xi = tuple(params.c[i + 1] / nu[k] ** 2 for i, k in enumerate(small))
    return ParamPoint(xi, tuple(math.log(v) for v in params.r))


def grid_around(center: ParamPoint, part: PartitionedIndex, offsets) -> list[ParamPoint]:
    """Tensor grid of parameter points; ``offsets[k-1]`` lists the steps for coordinate k."""
    base = center.vector(part)
    axes = [np.asarray(o, float) for o in offsets]
    pts = []
    for combo in np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, part.n):
        pts.append(ParamPoint.from_vector(part, base + combo))
    return pts


# -- single fibres -------------------------------------------------------------

@dataclass
class FibreRecord:
    """Outcome of one solve; ``points`` is None unless the solve succeeded."""

    index: int
    label: dict
    status: str
    message: str = ""
    points: np.ndarray | None = None
    verification: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    h_coeffs: np.ndarray | None = None
    moduli: list | None = None

    @property
    def ok(self) -> bool:
        return self.status == "verified"


def region_gate(spec: ChartSpec, params: ModelParams, shape=(8, 8)) -> tuple[bool, str]:
    """All nodes of a coarse model torus must be normal."""
    emb = model_torus(params, spec.pot, spec.p, shape)
    for z in emb.points.reshape(-1, spec.part.n + 1):
        rep = classify_region(z, spec.part, spec.p, spec.region)
        if not rep.normal:
            bad = [k for k in ("p_bounded", "epsilon_small", "refined_small_coords", "refined_large_coords")
                   if not getattr(rep, k)]
            return False, "not normal: " + ", ".join(bad)
    return True, ""


def verify_solution(ctx: SolverContext, h, emb: FibreEmbedding, thresholds: Thresholds) -> dict:
    geom = ctx.geom
    fam = FamilyParams(geom.t, 1.0)
    phase = phase_residual(emb, geom.part, geom.p, fam)
    lag = lagrangian_residual(emb, geom.form("final"))
    basis = ctx.deformation_one_forms(h, 1.0)
    graph_moduli = moduli_coordinate(h.gradient(), ctx.nu).coords
    out = {
        "phase_residual": phase,
        "lagrangian_residual": lag,
        "min_diag": [float(v) for v in basis.min_diag],
        "deformation_residual": basis.residual,
        "graph_moduli": [float(v) for v in graph_moduli],
        "sup_h": h.sup(),
        "tail_fraction": h.tail_fraction(),
    }
    out["passed"] = bool(
        phase <= thresholds.phase and lag <= thresholds.lagrangian and min(out["min_diag"]) >= thresholds.min_diag
    )
    return out


@dataclass
class SolvedFibre:
    ctx: SolverContext
    steps: list
    emb: FibreEmbedding
    verification: dict

    @property
    def h(self):
        return self.steps[-1].h


def solve_fibre(spec: ChartSpec, params: ModelParams, verify: bool = True) -> SolvedFibre:
    ctx = SolverContext(spec.geometry(), params, spec.solver)
    steps = ctx.continuation()
    emb = ctx.embed(steps[-1].h, 1.0)
    ver = verify_solution(ctx, steps[-1].h, emb, spec.thresholds) if verify else {}
    return SolvedFibre(ctx, steps, emb, ver)


def _label(params: ModelParams, point: ParamPoint | None) -> dict:
    d = {"r": list(params.r), "c": list(params.c)}
    if point is not None:
        d["xi"] = list(point.xi)
        d["log_r"] = list(point.log_r)
    return d


def _solve_point(args) -> FibreRecord:
    index, spec, point, nu, gate = args
    params = point.to_params(spec, nu)
    label = _label(params, point)
    if gate:
        ok, why = region_gate(spec, params)
        if not ok:
            return FibreRecord(index, label, "skipped", why)
    try:
        sol = solve_fibre(spec, params)
    except SlagError as exc:
        return FibreRecord(index, label, "failed", f"{type(exc).__name__}: {exc}")
    status = "verified" if sol.verification["passed"] else "unverified"
    hist = [{"s": st.s, "residual": st.residual, "newton_steps": st.newton_steps} for st in sol.steps]
    return FibreRecord(index, label, status, "", sol.emb.points, sol.verification, hist, sol.h.coeffs)


# -- atlas ---------------------------------------------------------------------

@dataclass
class AtlasChart:
    spec: ChartSpec
    center: ParamPoint
    nu: np.ndarray
    fibres: list

    def verified(self) -> list:
        return [f for f in self.fibres if f.ok]


@dataclass
class OverlapRecord:
    distance: float
    distance_unmatched: float
    matched_c: list
    initial_c: list
    moduli_mismatch: float
    iterations: int
    chart_a: dict
    chart_b: dict

    def to_json(self) -> dict:
        return {
            "distance": self.distance,
            "distance_unmatched": self.distance_unmatched,
            "matched_c": self.matched_c,
            "initial_c": self.initial_c,
            "moduli_mismatch": self.moduli_mismatch,
            "iterations": self.iterations,
            "chart_a": self.chart_a,
            "chart_b": self.chart_b,
        }


@dataclass
class FibrationAtlas:
    charts: list = field(default_factory=list)
    overlaps: list = field(default_factory=list)


def scale_nu(spec: ChartSpec, center: ParamPoint) -> np.ndarray:
    """nu of the c = 0 fibre with the centre's radii; fixes the normalisation xi = c / nu^2."""
    c0 = ParamPoint(tuple(0.0 for _ in center.xi), center.log_r).to_params(spec, np.ones(spec.part.n + 1))
    return c0.nu(spec.pot)


def sweep(spec: ChartSpec, center: ParamPoint, points: list, workers: int = 1, gate: bool = True) -> AtlasChart:
    """Solve every grid point; failures are recorded and do not stop the sweep."""
    nu = scale_nu(spec, center)
    jobs = [(i, spec, pt, nu, gate) for i, pt in enumerate(points)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            recs = list(pool.map(_solve_point, jobs))
    else:
        recs = [_solve_point(j) for j in jobs]
    chart = AtlasChart(spec, center, nu, recs)
    base = SolverContext(spec.geometry(), center.to_params(spec, nu), spec.solver)
    for rec in recs:
        if rec.points is not None:
            try:
                rec.moduli = [float(v) for v in base.moduli_of_fibre(rec.points).coords]
            except SlagError as exc:
                rec.moduli = None
                rec.message = f"moduli unavailable: {exc}"
        log.info("fibre %d: %s", rec.index, rec.status)
    return chart


# -- comparisons between tori ----------------------------------------------------

def resample_on_angles(points, shape, ps: DefiningPolynomial, t: float, tol: float = 1e-13, maxit: int = 30):
    """Re-parametrise a torus by the angles (arg z_1..arg z_n) on a uniform grid.

    The embedding must be a graph over the angle torus (true near a model fibre).
    Returns points of shape ``shape + (n+1,)`` with z_0 recomputed on the hypersurface.
    """
    emb = FibreEmbedding(points, infer_winding(points))
    n = emb.n
    W = emb.winding[:, 1:].T.astype(float)  # arg z_k = (W xi)_k + periodic
    per = emb.log_periodic()[..., 1:]
    target = spectral.grid(shape).reshape(-1, n)
    xi = np.linalg.solve(W, target.T).T
    grads = [spectral.derivative(per, a) for a in range(n)]
    for _ in range(maxit):
        val = spectral.trig_eval(per, xi)
        jac = np.stack([spectral.trig_eval(g, xi) for g in grads], axis=-1)
        th = xi @ W.T + np.imag(val)
        r = np.angle(np.exp(1j * (th - target)))
        if np.max(np.abs(r)) < tol:
            break
        Jth = W[None] + np.imag(jac)
        xi = xi - np.linalg.solve(Jth, r[..., None])[..., 0]
    else:
        raise ConvergenceError("angle resampling did not converge")
    val = spectral.trig_eval(per, xi)
    zr = np.exp(np.real(val) + 1j * target)
    return project_z0(zr, t, ps).reshape(tuple(shape) + (n + 1,))


def torus_distance(points_a, points_b, shape, ps: DefiningPolynomial, t: float) -> float:
    """Largest distance between the two tori at common angle nodes."""
    a = resample_on_angles(points_a, shape, ps, t)
    b = resample_on_angles(points_b, shape, ps, t)
    return float(np.max(np.linalg.norm(a - b, axis=-1)))


def min_separation(points_a, points_b, shape, ps: DefiningPolynomial, t: float) -> float:
    """Smallest distance at common angle nodes; positive for disjoint graphs over the angles."""
    a = resample_on_angles(points_a, shape, ps, t)
    b = resample_on_angles(points_b, shape, ps, t)
    return float(np.min(np.linalg.norm(a - b, axis=-1)))


def pairwise_separation(chart: AtlasChart, shape=None) -> float:
    fib = [f for f in chart.fibres if f.points is not None]
    if len(fib) < 2:
        return math.inf
    shape = shape or chart.spec.solver.shape
    p, t = chart.spec.p, chart.spec.t
    res = [resample_on_angles(f.points, shape, p, t) for f in fib]
    best = math.inf
    for i in range(len(res)):
        for j in range(i + 1, len(res)):
            best = min(best, float(np.min(np.linalg.norm(res[i] - res[j], axis=-1))))
    return best


# -- tangent map -------------------------------------------------------------

@dataclass
class TangentMap:
    matrix: np.ndarray
    sigma_min: float
    cond: float
    delta: np.ndarray

    def to_json(self) -> dict:
        return {
            "matrix": self.matrix.tolist(),
            "sigma_min": self.sigma_min,
            "cond": self.cond,
            "delta": self.delta.tolist(),
        }


def tangent_map(spec: ChartSpec, center: ParamPoint, delta, nu=None, cache: dict | None = None) -> TangentMap:
    """Central difference of base-chart moduli over normalised parameters.

    ``cache`` maps rounded parameter vectors to solved points and is filled as
    solves happen, so sweeps and repeated calls share work.
    """
    part = spec.part
    n = part.n
    if nu is None:
        nu = scale_nu(spec, center)
    cache = {} if cache is None else cache
    delta = np.broadcast_to(np.asarray(delta, float), (n,)).copy()
    base = SolverContext(spec.geometry(), center.to_params(spec, nu), spec.solver)
    # periods are normalised by the base fibre's scale; re-express them in the parameter scale
    rescale = base.nu ** 2 / np.asarray(nu, float)[1:] ** 2
    v0 = center.vector(part)
    M = np.zeros((n, n))
    for k in range(n):
        cols = []
        for sgn in (1.0, -1.0):
            v = v0.copy()
            v[k] += sgn * delta[k]
            key = tuple(np.round(v, 12))
            if key not in cache:
                pt = ParamPoint.from_vector(part, v)
                try:
                    cache[key] = solve_fibre(spec, pt.to_params(spec, nu), verify=False).emb.points
                except SlagError as exc:
                    raise type(exc)(f"stencil solve failed at {list(key)}: {exc}") from exc
            cols.append(base.moduli_of_fibre(cache[key]).coords * rescale)
        M[:, k] = (cols[0] - cols[1]) / (2 * delta[k])
    sv = np.linalg.svd(M, compute_uv=False)
    return TangentMap(M, float(sv[-1]), float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf, delta)


def records_cache(chart: AtlasChart) -> dict:
    part = chart.spec.part
    out = {}
    for f in chart.fibres:
        if f.points is not None and "xi" in f.label:
            pt = ParamPoint(tuple(f.label["xi"]), tuple(f.label["log_r"]))
            out[tuple(np.round(pt.vector(part), 12))] = f.points
    return out


# -- chart overlap ----------------------------------------------------------

def overlap_initial_guess(spec_a: ChartSpec, params_a: ModelParams, part_b: PartitionedIndex):
    """Starting label in chart B: c unchanged on the shared small block, c_k = lambda_k r_k^2
    on indices that move from large to small (lambda_k at the model fibre's mean z'),
    radii unchanged on the shared large block."""
    pa = spec_a.part
    if not set(pa.small) <= set(part_b.small) or not set(part_b.large) <= set(pa.large):
        raise ParameterError("chart B must enlarge the small block of chart A")
    moved = [k for k in part_b.small if k in pa.large]
    if not moved:
        raise ParameterError("charts share the same partition; nothing to compare")
    emb = model_torus(params_a, spec_a.pot, spec_a.p, (8,) * pa.n)
    u = np.mean(np.abs(emb.points) ** 2, axis=tuple(range(pa.n)))
    u_prime = np.zeros(pa.n + 1)
    u_prime[list(part_b.large)] = u[list(part_b.large)]
    ra = dict(zip(pa.large, params_a.r))
    ca = dict(zip(pa.small, params_a.c))
    c_b = []
    for k in part_b.small:
        if k in ca:
            c_b.append(ca[k])
        else:
            lam = spec_a.pot.lam(part_b, k).value(u_prime)
            c_b.append(float(lam) * ra[k] ** 2)
    r_b = [ra[j] for j in part_b.large]
    return r_b, c_b


def chart_overlap_compare(spec_a: ChartSpec, params_a: ModelParams, part_b: PartitionedIndex,
                          match: bool = True, tol: float = 1e-10, maxit: int = 6, min_iter: int = 1,
                          fd_rel: float = 1e-3, compare_shape=None) -> OverlapRecord:
    """Solve one fibre in each chart and measure how far apart they are.

    Chart B's label is refined by Newton so that the two tori have the same
    periods in chart A's Darboux coordinates.
    """
    spec_b = spec_a.with_part(part_b)
    sol_a = solve_fibre(spec_a, params_a, verify=False)
    ctx_a = sol_a.ctx
    target = ctx_a.moduli_of_fibre(sol_a.emb.points).coords
    r_b, c_b0 = overlap_initial_guess(spec_a, params_a, part_b)
    shape = compare_shape or spec_a.solver.shape
    ps, t = spec_a.p, spec_a.t

    # unknowns: c_k for small k >= 1 and log r_j for the large block of chart B
    small_b = [k for k in part_b.small if k]
    scale = np.zeros(spec_a.part.n)
    scale[[k - 1 for k in small_b]] = np.array(c_b0[1:])
    scale = np.where(scale > 0, scale, 1.0)

    def unpack(v):
        c = [0.0] + [float(v[k - 1]) for k in small_b]
        r = [math.exp(v[j - 1]) for j in part_b.large]
        return r, c

    v = np.zeros(spec_a.part.n)
    for i, k in enumerate(small_b):
        v[k - 1] = c_b0[i + 1]
    for rj, j in zip(r_b, part_b.large):
        v[j - 1] = math.log(rj)

    def evaluate(v):
        r, c = unpack(v)
        pts = solve_fibre(spec_b, spec_b.params(r, c), verify=False).emb.points
        return pts, ctx_a.moduli_of_fibre(pts).coords - target

    pts, G = evaluate(v)
    dist0 = torus_distance(sol_a.emb.points, pts, shape, ps, t)
    it = 0
    if match:
        while it < min_iter or np.max(np.abs(G)) > tol:
            if it >= maxit:
                raise ConvergenceError(f"moduli matching did not converge (mismatch {np.max(np.abs(G)):.3e})")
            J = np.zeros((len(v), len(v)))
            for k in range(len(v)):
                dv = np.zeros_like(v)
                dv[k] = fd_rel * scale[k]
                _, Gp = evaluate(v + dv)
                _, Gm = evaluate(v - dv)
                J[:, k] = (Gp - Gm) / (2 * dv[k])
            v = v - np.linalg.solve(J, G)
            pts, G = evaluate(v)
            it += 1
            log.info("overlap matching iteration %d: mismatch %.3e", it, float(np.max(np.abs(G))))
    dist = torus_distance(sol_a.emb.points, pts, shape, ps, t) if match else dist0
    r, c = unpack(v)
    return OverlapRecord(
        distance=dist,
        distance_unmatched=dist0,
        matched_c=list(c),
        initial_c=list(c_b0),
        moduli_mismatch=float(np.max(np.abs(G))),
        iterations=it,
        chart_a={**spec_a.describe(), **_label(params_a, None)},
        chart_b={**spec_b.describe(), "r": list(r)},
    )


# -- export ------------------------------------------------------------------

def _fmt(obj) -> str:
    """Deterministic JSON text with sorted keys and 17 significant digits."""
    if isinstance(obj, dict):
        items = sorted((str(k), v) for k, v in obj.items())
        return "{" + ", ".join(json.dumps(k) + ": " + _fmt(v) for k, v in items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in obj) + "]"
    if isinstance(obj, np.ndarray):
        return _fmt(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return "null"
        return format(v, ".17g")
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def dumps(obj) -> str:
    return _fmt(obj) + "\n"


def atlas_index(atlas: FibrationAtlas) -> dict:
    charts = []
    for ci, ch in enumerate(atlas.charts):
        fibres = []
        for f in ch.fibres:
            fibres.append({
                "index": f.index,
                "label": f.label,
                "status": f.status,
                "message": f.message,
                "verification": f.verification,
                "moduli": f.moduli,
                "history": f.history,
                "csv": f"chart{ci}_fibre{f.index:03d}.csv" if f.points is not None else None,
            })
        charts.append({
            "spec": ch.spec.describe(),
            "center": {"xi": list(ch.center.xi), "log_r": list(ch.center.log_r)},
            "nu": list(ch.nu),
            "fibres": fibres,
        })
    return {"charts": charts, "overlaps": [o.to_json() for o in atlas.overlaps], "fibre_count": sum(
        1 for ch in atlas.charts for f in ch.fibres if f.points is not None)}


def export_atlas(atlas: FibrationAtlas, path, force: bool = False) -> list[Path]:
    """Write ``index.json`` and one CSV per solved fibre into directory ``path``."""
    path = Path(path)
    index = path / "index.json"
    if index.exists() and not force:
        raise OutputExistsError(f"{index} exists; pass --force to overwrite")
    try:
        path.mkdir(parents=True, exist_ok=True)
        written = []
        for ci, ch in enumerate(atlas.charts):
            for f in ch.fibres:
                if f.points is None:
                    continue
                emb = FibreEmbedding(f.points, infer_winding(f.points))
                out = path / f"chart{ci}_fibre{f.index:03d}.csv"
                emb.to_csv(out)
                written.append(out)
        index.write_text(dumps(atlas_index(atlas)))
    except OSError as exc:
        raise SlagError(f"cannot write atlas to {path}: {exc}") from exc
    return [index] + written


def read_index(path) -> dict:
    return json.loads((Path(path) / "index.json").read_text())
