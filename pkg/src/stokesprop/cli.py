"""Command-line front end.

Every command prints a key-sorted JSON document to stdout that embeds the
resolved configuration and the tool version. ``--out DIR`` additionally
writes ``<command>.json`` and, where a table exists, ``<command>.csv``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .bem import richardson
from .oracles import ellipsoid_resistance
from .dynamics import delta_sweep, integrate_periodic, integrate_translation_only
from .errors import NumericalError, ValidationError
from .config import RunConfig
from .propulsion import (evaluate_propulsion, find_non_propelling_r, leading_average_velocity,
                         offcenter_discrepancy, offcenter_sphere_tensors, sphere_tensors,
                         translation_only_velocity, Forcing)

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3


def _clean(x):
    """JSON-safe copy: numpy to builtins, non-finite floats to None."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def dump_json(payload: dict) -> str:
    return json.dumps(_clean(payload), sort_keys=True, indent=2, ensure_ascii=False,
                      allow_nan=False) + "\n"


def _rows_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


# --------------------------------------------------------------------------
# argument parsing

def _add_common(p):
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out", help="directory for <command>.json / <command>.csv")
    g = p.add_argument_group("body")
    shape = g.add_mutually_exclusive_group()
    shape.add_argument("--sphere", type=float, metavar="A")
    shape.add_argument("--ellipsoid", type=float, nargs=3, metavar=("A", "B", "C"))
    shape.add_argument("--offcenter-sphere", type=float, nargs=2, metavar=("A", "D"))
    shape.add_argument("--stl", metavar="PATH")
    g.add_argument("--sub", type=int, action="append", help="subdivision level (repeatable)")
    g.add_argument("--tensors", choices=("auto", "analytic", "bem"))
    g = p.add_argument_group("inertia and fluid")
    g.add_argument("--mass", type=float)
    g.add_argument("--inertia", type=float, nargs="+", metavar="I")
    g.add_argument("--solid-density", type=float)
    g.add_argument("--r", type=float, nargs=3, metavar=("X", "Y", "Z"))
    g.add_argument("--solve-r", action="store_true", help="use the offset that cancels propulsion")
    g.add_argument("--viscosity", type=float)
    g.add_argument("--fluid-density", type=float)
    g = p.add_argument_group("forcing")
    g.add_argument("--period", type=float)
    g.add_argument("--delta", type=float)
    g.add_argument("--deltas", type=float, nargs="+")
    g.add_argument("--mean", type=float)
    g.add_argument("--cos", type=float, nargs="*")
    g.add_argument("--sin", type=float, nargs="*")
    g.add_argument("--direction", type=float, nargs=3, metavar=("X", "Y", "Z"))
    g = p.add_argument_group("solver")
    g.add_argument("--blob-coeff", type=float)
    g.add_argument("--steps", type=int, dest="steps_per_period")
    g.add_argument("--orbit-tol", type=float)
    g.add_argument("--max-periods", type=int)
    g.add_argument("--max-panels", type=int)
    g.add_argument("--propulsion-tol", type=float)
    g.add_argument("--translation-only", action="store_true", default=None)
    g.add_argument("--sym-tol", type=float)
    g.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stokesprop",
                                     description="Resistance tensors and periodic-force propulsion "
                                                 "of rigid bodies in Stokes flow")
    parser.add_argument("--version", action="version", version=f"stokesprop {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("resistance", "resistance tensors (and a convergence table for several --sub)"),
        ("check", "order-delta propulsion verdict"),
        ("simulate", "periodic orbit of the forced body"),
        ("sweep", "gamma_bar/delta against the leading-order prediction over decreasing delta"),
        ("sphere-demo", "homogeneous and off-centre sphere verdicts"),
    ]:
        _add_common(sub.add_parser(name, help=help_text))
    return parser


def overrides_from_args(args) -> dict:
    o: dict = {"body": {}, "inertia": {}, "fluid": {}, "forcing": {}, "solver": {}}
    if args.sphere is not None:
        o["body"].update(shape="sphere", radius=args.sphere)
    if args.ellipsoid is not None:
        o["body"].update(shape="ellipsoid", semi_axes=list(args.ellipsoid))
    if args.offcenter_sphere is not None:
        o["body"].update(shape="offcenter-sphere", radius=args.offcenter_sphere[0],
                         offset=args.offcenter_sphere[1])
    if args.stl is not None:
        o["body"].update(shape="stl", path=args.stl)
    if args.sub:
        o["body"]["subdivisions"] = list(args.sub)
    if args.tensors:
        o["body"]["tensors"] = args.tensors
    if args.mass is not None:
        o["inertia"]["mass"] = args.mass
    if args.inertia is not None:
        o["inertia"]["inertia"] = (list(args.inertia) if len(args.inertia) != 9
                                   else np.reshape(args.inertia, (3, 3)).tolist())
    if args.solid_density is not None:
        o["inertia"]["density"] = args.solid_density
    if args.r is not None:
        o["inertia"]["r"] = list(args.r)
    if args.solve_r:
        o["inertia"]["r"] = "solve"
    if args.viscosity is not None:
        o["fluid"]["viscosity"] = args.viscosity
    if args.fluid_density is not None:
        o["fluid"]["density"] = args.fluid_density
    for key in ("period", "delta", "mean"):
        if getattr(args, key) is not None:
            o["forcing"][key] = getattr(args, key)
    for key in ("deltas", "cos", "sin", "direction"):
        if getattr(args, key) is not None:
            o["forcing"][key] = list(getattr(args, key))
    for key in ("blob_coeff", "steps_per_period", "orbit_tol", "max_periods", "max_panels",
                "propulsion_tol", "translation_only", "sym_tol", "workers"):
        if getattr(args, key) is not None:
            o["solver"][key] = getattr(args, key)
    return {k: v for k, v in o.items() if v}


# --------------------------------------------------------------------------
# commands; each returns (json payload, csv text or None)

def cmd_resistance(cfg: RunConfig):
    if cfg.data["body"]["tensors"] == "auto":
        data = cfg.to_dict()
        data["body"]["tensors"] = "bem"
        cfg = RunConfig(data)
    subs = sorted(set(cfg.data["body"]["subdivisions"]))
    s = cfg.data["solver"]
    levels = {sub: cfg.resistance(sub) for sub in subs}
    R = levels[subs[-1]]
    payload = {"resistance": R.to_dict(), "defects": R.check(s["sym_tol"])}
    table = None
    if len(subs) > 1:
        rows = [[sub, Rs.panel_count, float(Rs.K[0, 0]), float(Rs.Theta[0, 0]),
                 float(np.linalg.norm(Rs.C))] for sub, Rs in levels.items()]
        table = _rows_csv(["subdivisions", "panels", "K11", "Theta11", "C_norm"], rows)
        exact = _analytic_diagonals(cfg)
        if exact is not None:
            k11, t11 = exact
            k_err = [row[2] / k11 - 1.0 for row in rows]
            extrap, order = richardson([row[2] for row in rows]) if len(rows) >= 2 else (None, None)
            payload["convergence"] = {
                "K11_exact": k11,
                "K11_errors": k_err,
                "Theta11_errors": [row[3] / t11 - 1.0 for row in rows],
                "extrapolated_K11": extrap,
                "extrapolated_error": extrap / k11 - 1.0,
                "observed_order": order,
                "monotone": all(abs(b) < abs(a) for a, b in zip(k_err, k_err[1:])),
            }
    return payload, table


def _analytic_diagonals(cfg: RunConfig):
    b = cfg.data["body"]
    if b["shape"] == "sphere":
        a = b["radius"]
        return 6.0 * math.pi * cfg.viscosity * a, 8.0 * math.pi * cfg.viscosity * a ** 3
    if b["shape"] == "ellipsoid":
        k, t = ellipsoid_resistance(b["semi_axes"], cfg.viscosity)
        return float(k[0]), float(t[0])
    return None


def cmd_check(cfg: RunConfig):
    R = cfg.resistance()
    r = cfg.offset(R)
    forcing = cfg.forcing()
    tol = cfg.propulsion_tol(R)
    report = evaluate_propulsion(R, forcing, r, tol)
    return {"report": report.to_dict(), "r": r, "resistance": R.to_dict()}, None


def cmd_simulate(cfg: RunConfig):
    R = cfg.resistance()
    r = cfg.offset(R)
    body = cfg.body(r)
    forcing = cfg.forcing()
    s = cfg.data["solver"]
    if s["translation_only"]:
        orbit = integrate_translation_only(body, R.K, forcing, s["steps_per_period"],
                                           s["max_periods"], s["orbit_tol"])
        predicted = translation_only_velocity(R, forcing)
    else:
        orbit = integrate_periodic(body, R, forcing, s["steps_per_period"], s["max_periods"],
                                   s["orbit_tol"])
        predicted = leading_average_velocity(R, forcing, r)
    summary = orbit.summary()
    summary["gamma_bar_leading"] = predicted
    summary["defect_history"] = orbit.defect_history
    return {"orbit": summary, "r": r}, orbit.to_csv()


def cmd_sweep(cfg: RunConfig):
    R = cfg.resistance()
    r = cfg.offset(R)
    body = cfg.body(r)
    s = cfg.data["solver"]
    result = delta_sweep(body, R, cfg.forcing(), cfg.deltas, s["steps_per_period"],
                         s["max_periods"], s["orbit_tol"], s["translation_only"], s["workers"])
    verdict = result.to_dict()
    verdict["max_ratio"] = max(result.ratios) if result.ratios else None
    verdict["periodicity_defects"] = [row.periodicity_defect for row in result.rows]
    return {"sweep": verdict, "r": r}, result.to_csv()


def cmd_sphere_demo(cfg: RunConfig):
    a = float(cfg.data["body"]["radius"])
    d = float(cfg.data["body"]["offset"]) if cfg.data["body"]["shape"] == "offcenter-sphere" else 0.5 * a
    nu = cfg.viscosity
    rng = np.random.default_rng(0)
    Rs = sphere_tensors(a, nu)
    homogeneous = []
    for _ in range(100):
        b = rng.normal(size=3)
        b /= np.linalg.norm(b)
        r = rng.uniform(-a, a, size=3) / math.sqrt(3.0)
        rep = evaluate_propulsion(Rs, Forcing(1.0, 1.0, 1.0, b), r)
        homogeneous.append(rep.propelling)
    Ro = offcenter_sphere_tensors(a, d, nu)
    b = np.array([0.0, 1.0, 0.0])
    r1 = find_non_propelling_r(Ro, b)
    off = evaluate_propulsion(Ro, Forcing(1.0, 1.0, 1.0, b), r1)
    grid = []
    for ai in (0.5, 1.0, 2.0):
        for frac in (0.1, 0.3, 0.5, 0.7, 0.9):
            rep = offcenter_discrepancy(ai, frac * ai, nu)
            grid.append({"a": ai, "d": frac * ai, "r1": rep["r1_solved"],
                         "interior": rep["r1_solved_is_interior"]})
    lines = [
        f"homogeneous sphere: propelling in {sum(homogeneous)}/100 random (b_hat, r)",
        f"off-centre sphere a={a!r} d={d!r}: r1={float(r1[0])!r}, |xi0|={np.linalg.norm(off.xi0):.3e}, "
        f"|zeta0|={np.linalg.norm(off.zeta0):.3e}, propelling={off.propelling}",
        f"non-propelling offset inside the body for any sampled (a, d): "
        f"{any(g['interior'] for g in grid)}",
    ]
    payload = {
        "homogeneous": {"samples": 100, "propelling": int(sum(homogeneous))},
        "offcenter": {"a": a, "d": d, "b_hat": b, "r_solved": r1, "report": off.to_dict()},
        "discrepancy": offcenter_discrepancy(a, d, nu),
        "interior_scan": grid,
        "summary": lines,
    }
    table = _rows_csv(["a", "d", "r1", "interior"],
                      [[g["a"], g["d"], g["r1"], g["interior"]] for g in grid])
    return payload, table


COMMANDS = {
    "resistance": cmd_resistance,
    "check": cmd_check,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "sphere-demo": cmd_sphere_demo,
}


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config, overrides_from_args(args))
        payload, table = COMMANDS[args.command](cfg)
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_INPUT
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=stderr)
        return EXIT_NUMERICAL
    payload = dict(payload, command=args.command, config=cfg.to_dict(), version=__version__)
    text = dump_json(payload)
    stdout.write(text)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, f"{args.command}.json"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        if table is not None:
            with open(os.path.join(args.out, f"{args.command}.csv"), "w", encoding="utf-8", newline="") as fh:
                fh.write(table)
    return EXIT_OK


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
