"""Command line interface: model checks, single solves, sweeps, overlaps, flows, diagnostics."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import report
from .ambient import FamilyParams, PartitionedIndex
from .config import load_config
from .darboux import DarbouxChart
from .errors import ParameterError, SlagError, VerificationError
from .fibration import (
    FibrationAtlas, OutputExistsError, atlas_index, chart_overlap_compare, dumps, export_atlas,
    grid_around, pairwise_separation, solve_fibre, sweep,
)
from .flows import Flow
from .local_model import lagrangian_residual, model_torus, phase_residual
from .tbound import envelope_growth, envelope_sweep

log = logging.getLogger("slagfib")


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _guard(path: Path, force: bool) -> Path:
    if path.exists() and not force:
        raise OutputExistsError(f"{path} exists; pass --force to overwrite")
    return path


def _write_json(path: Path, doc, force: bool) -> None:
    _guard(path, force).write_text(dumps(doc))


def cmd_model_check(args, cfg) -> int:
    out = _outdir(args)
    spec = cfg.chart()
    r, c = cfg.fibre(args.r, args.c)
    params = spec.params(r, c)
    geom = spec.geometry()
    fam = FamilyParams(spec.t, 0.0)
    rows = []
    emb = None
    for shape in cfg.raw["model_check"]["grids"]:
        emb = model_torus(params, spec.pot, spec.p, shape)
        rows.append({
            "grid": list(shape),
            "N": int(max(shape)),
            "lagrangian_residual": lagrangian_residual(emb, geom.form("check", params.c_arr)),
            "phase_residual": phase_residual(emb, spec.part, spec.p, fam),
        })
    last = rows[-1]
    ok = last["lagrangian_residual"] <= 1e-6 and last["phase_residual"] <= 1e-6
    _write_json(out / "model_check.json", {"params": {"r": list(r), "c": list(c)}, "rows": rows, "passed": ok},
                args.force)
    emb.to_csv(_guard(out / "model_fibre.csv", args.force))
    report.plot_convergence(rows, out / "model_check.png", "N", ["lagrangian_residual", "phase_residual"])
    for row in rows:
        print(f"grid={row['grid']} lagrangian={row['lagrangian_residual']:.3e} phase={row['phase_residual']:.3e}")
    if not ok:
        raise VerificationError("model torus residuals above 1e-6")
    return 0


def cmd_solve_fibre(args, cfg) -> int:
    grid = args.grid * cfg.n if args.grid and len(args.grid) == 1 else args.grid
    spec = cfg.chart(grid=grid, tol=args.tol)
    r, c = cfg.fibre(args.r, args.c)
    params = spec.params(r, c)
    out_arg = Path(args.out)
    if out_arg.suffix == ".json":
        out_arg.parent.mkdir(parents=True, exist_ok=True)
        stem = out_arg.with_suffix("")
    else:
        stem = _outdir(args) / "fibre"
    sol = solve_fibre(spec, params)
    hist = [{"s": st.s, "residual": st.residual, "newton_steps": st.newton_steps, "iterates": st.history}
            for st in sol.steps]
    h = sol.h
    doc = {
        "params": {"r": list(r), "c": list(c), "t": spec.t},
        "grid": list(spec.solver.shape),
        "h_spectrum": {"real": h.coeffs.real.tolist(), "imag": h.coeffs.imag.tolist()},
        "history": hist,
        "verification": sol.verification,
    }
    _write_json(stem.with_suffix(".json"), doc, args.force)
    sol.emb.to_csv(_guard(stem.with_suffix(".csv"), args.force))
    report.plot_fibre(sol.emb.points, stem.parent / (stem.name + "_embedding.png"))
    report.plot_history(hist, stem.parent / (stem.name + "_history.png"))
    if args.dump_chart:
        chart = sol.ctx.chart
        _write_json(stem.parent / (stem.name + "_chart.json"), {
            "calibration": chart.calibration,
            "offset": chart.offset.tolist(),
            "nu": chart.nu.tolist(),
        }, args.force)
    v = sol.verification
    print(f"phase={v['phase_residual']:.3e} lagrangian={v['lagrangian_residual']:.3e} "
          f"min_diag={min(v['min_diag']):.4f} sup_h={v['sup_h']:.3e}")
    if not v["passed"]:
        raise VerificationError("solved fibre failed verification")
    return 0


def cmd_sweep(args, cfg) -> int:
    sec = cfg.raw["sweep"]
    spec = cfg.chart(grid=sec.get("grid"))
    center = cfg.sweep_center()
    pts = grid_around(center, spec.part, sec["offsets"])
    chart = sweep(spec, center, pts, workers=args.threads)
    atlas = FibrationAtlas([chart])
    out = Path(args.out)
    export_atlas(atlas, out, force=args.force)
    idx = atlas_index(atlas)
    report.plot_moduli(idx["charts"][0], out / "moduli.png")
    sep = pairwise_separation(chart)
    nver = len(chart.verified())
    print(f"fibres={len(chart.fibres)} verified={nver} min_separation={sep:.3e}")
    if nver != len(chart.fibres):
        raise VerificationError(f"{len(chart.fibres) - nver} fibres not verified")
    return 0


def cmd_overlap(args, cfg) -> int:
    sec = cfg.raw["overlap"]
    spec = cfg.chart(grid=sec.get("grid"))
    fib = sec["fibre"]
    params = spec.params(fib["r"], fib["c"])
    part_b = PartitionedIndex(cfg.n, tuple(sec["small"]), tuple(sec["large"]))
    rec = chart_overlap_compare(spec, params, part_b, match=not args.no_match)
    out = _outdir(args)
    _write_json(out / "overlap.json", rec.to_json(), args.force)
    print(f"distance={rec.distance:.3e} unmatched={rec.distance_unmatched:.3e} iterations={rec.iterations}")
    if rec.distance > float(sec["distance_max"]):
        raise VerificationError("overlap distance above tolerance")
    return 0


def cmd_flow(args, cfg) -> int:
    spec = cfg.chart()
    r, c = cfg.fibre(args.r, args.c)
    params = spec.params(r, c)
    geom = spec.geometry()
    emb = model_torus(params, spec.pot, spec.p, cfg.raw["flow"]["grid"])
    z0 = emb.points
    if args.perturb:
        rng = np.random.default_rng(args.seed)
        chart = DarbouxChart(params, geom)
        x, _ = chart.forward(z0)
        y = args.perturb * chart.nu[1:] ** 2 * rng.uniform(-1, 1, size=x.shape)
        z0 = chart.inverse(x, y, z_guess=z0)
    steps = args.steps or int(cfg.raw["flow"]["steps"])
    flow = Flow(geom, params.c, args.kind)
    z1, trace = flow.run(z0, 0.0, 1.0, steps, record=True)
    doc = {"kind": args.kind, "steps": steps, "trace": trace.to_json(),
           "displacement": float(np.max(np.abs(z1 - z0)))}
    out = _outdir(args)
    if args.dump_trace:
        _write_json(Path(args.dump_trace), doc, args.force)
    _write_json(out / f"flow_{args.kind}.json", doc, args.force)
    report.plot_trace(doc["trace"], out / f"flow_{args.kind}.png")
    print(f"kind={args.kind} steps={steps} displacement={doc['displacement']:.3e} "
          f"residual_max={max(trace.residual_max):.3e}")
    return 0


def cmd_tbound(args, cfg) -> int:
    sec = cfg.raw["tbound"]
    spec = cfg.chart()
    r, c = cfg.fibre(args.r, args.c)
    params = spec.params(r, c)
    rows = envelope_sweep(spec.geometry(), params, sec["t_values"], tuple(sec["grid"]))
    out = _outdir(args)
    path = _guard(out / "tbound.csv", args.force)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        w.writeheader()
        for row in rows:
            w.writerow({k: f"{v:.17g}" for k, v in row.items()})
    growth = envelope_growth(rows)
    _write_json(out / "tbound.json", {"rows": rows, "growth": growth}, args.force)
    report.plot_convergence(rows, out / "tbound.png", "t",
                            ["metric_total", "inverse_total", "jacobian", "jacobian_inverse"], logx=True)
    for k, v in growth.items():
        print(f"{k}: max growth {v:.4f}")
    if max(growth.values()) > float(sec["growth_max"]):
        raise VerificationError("envelope constants grow along the t-sequence")
    return 0


def _floats(s):
    return [float(v) for v in s.split(",")] if s else None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="slagfib", description=__doc__)
    ap.add_argument("--config", help="JSON configuration (default: built-in desk configuration)")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--force", action="store_true", help="overwrite existing outputs")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def fibre_args(p):
        p.add_argument("--r", type=_floats, help="comma separated radii")
        p.add_argument("--c", type=_floats, help="comma separated offsets (c_0 = 0 first)")

    p = sub.add_parser("model-check", help="residuals of the explicit model torus")
    fibre_args(p)
    p.set_defaults(func=cmd_model_check)

    p = sub.add_parser("solve-fibre", help="solve one fibre by Newton continuation")
    fibre_args(p)
    p.add_argument("--grid", type=int, nargs="+")
    p.add_argument("--tol", type=float)
    p.add_argument("--dump-chart", action="store_true")
    p.set_defaults(func=cmd_solve_fibre)

    p = sub.add_parser("sweep", help="solve a grid of fibres and export the atlas")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("overlap-check", help="compare fibres built in two charts")
    p.add_argument("--no-match", action="store_true", help="skip the moduli matching")
    p.set_defaults(func=cmd_overlap)

    p = sub.add_parser("flow", help="integrate one flow from the model fibre")
    fibre_args(p)
    p.add_argument("--kind", choices=["varphi", "phi"], default="varphi")
    p.add_argument("--steps", type=int)
    p.add_argument("--perturb", type=float, default=0.0, help="random y-offset as a fraction of nu^2")
    p.add_argument("--dump-trace")
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("diagnostics", help="numerical diagnostics")
    dsub = p.add_subparsers(dest="diag", required=True)
    q = dsub.add_parser("tbound", help="envelope constants across t")
    fibre_args(q)
    q.set_defaults(func=cmd_tbound)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except SlagError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ParameterError.exit_code


if __name__ == "__main__":
    sys.exit(main())
