"""Command-line front end.

Subcommands ``phase``, ``sweep``, ``chern``, ``evolve`` and ``classify``.
Exit codes: 0 success, 1 usage, 2 validation or degeneracy, 3 convergence.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from dataclasses import replace
from itertools import combinations

import numpy as np

from .dynamics import DriveSchedule, propagate
from .errors import (
    ConvergenceError,
    DegeneratePointError,
    InvalidArgumentError,
    InvalidSpecError,
    LocusDegenerateError,
    RefineError,
    ResonantPhaseError,
    ValidationError,
    WindingUndefinedError,
)
from .geometry import classify_path, sample_loop
from .holonomy import (
    Method,
    PhaseResult,
    SphereMesh,
    axis_singular_states,
    berry_phase_discrete,
    berry_phase_line_quadrature,
    berry_phase_spherical,
    chern_sum_surface,
    chern_trace_plaquette,
    delta_gamma_path,
    sum_rule_residual,
)
from .scenario import Scenario, load_scenario

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_CONVERGENCE = 0, 1, 2, 3
SWEEP_AXES = ("N", "T", "radius", "Z")
SWEEP_COLUMNS = ["value", "re_gamma1", "im_gamma1", "re_gamma2", "im_gamma2", "sum_residual",
                 "class_W", "class_L", "method", "wall_ms", "discrepancy", "error"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --- serialisation -----------------------------------------------------------------


def _plain(obj):
    """Convert results to JSON-ready values: complex -> [re, im], non-finite -> null."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return [_plain(float(obj.real)), _plain(float(obj.imag))]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    return obj


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def to_csv(rows, columns) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def to_json(obj) -> str:
    return json.dumps(_plain(obj), indent=2) + "\n"


# --- computations ------------------------------------------------------------------


def _check_samples(loop, tol):
    v = loop.R - 0.5j * loop.gamma
    eps2 = np.sum(v * v, axis=1)
    hnorm2 = 2 * np.sum(np.abs(v) ** 2, axis=1) + 2 * abs(loop.E_offset) ** 2
    bad = np.flatnonzero(np.abs(eps2) <= tol * hnorm2)
    if bad.size:
        raise DegeneratePointError(
            f"sample {bad[0]} is degenerate (R^2 = Gamma^2/4 and R.Gamma = 0 to tolerance {tol})"
        )


def _classification(loop):
    try:
        c = classify_path(loop)
    except (WindingUndefinedError, LocusDegenerateError, RefineError) as exc:
        return None, str(exc)
    return c, None


def _states_dict(gamma, states):
    return {s: gamma[s] for s in states if s in gamma}


def _axis_fallback(loop, states, rtol, reason) -> PhaseResult:
    """Line quadrature in place of the spherical form, state by state.

    A state whose line connection is singular on the Gamma axis is taken
    from the discrete Wilson loop instead, and the notice says so.
    """
    singular = axis_singular_states(loop) & set(states)
    regular = [s for s in states if s not in singular]
    note = f"spherical form not applicable ({reason}); used line quadrature"
    gamma = {}
    if regular:
        res = berry_phase_line_quadrature(loop, regular, rtol)
        gamma.update(res.gamma)
    if singular:
        disc = berry_phase_discrete(loop, sorted(singular))
        gamma.update(disc.gamma)
        which = ", ".join(str(s) for s in sorted(singular))
        note += f"; state {which} from the discrete Wilson loop (line connection singular on the axis)"
        if not regular:
            res = disc
    gamma = {s: gamma[s] for s in states}
    return replace(res, gamma=gamma, method=Method.LINE_QUADRATURE,
                   diagnostics=replace(res.diagnostics, notice=note))


def run_phase(scenario: Scenario, notices=None):
    """Run every requested method on the scenario loop and assemble the report."""
    notices = notices if notices is not None else []
    loop = sample_loop(scenario.loop_spec(), scenario.N, scenario.min_dist)
    _check_samples(loop, scenario.tolerances.degeneracy_tol)
    cls, cls_error = _classification(loop)
    rtol = scenario.tolerances.quad_rtol
    states = scenario.states
    entries = []
    for method in scenario.methods:
        entry = {"method": method.value}
        if method is Method.DISCRETE_WILSON:
            res = berry_phase_discrete(loop, states)
        elif method is Method.LINE_QUADRATURE:
            res = berry_phase_line_quadrature(loop, states, rtol)
        elif method is Method.SPHERICAL_QUADRATURE:
            try:
                res = berry_phase_spherical(loop, states, rtol)
            except WindingUndefinedError as exc:
                res = _axis_fallback(loop, states, rtol, exc)
        else:
            delta = delta_gamma_path(loop, rtol)
            entry["delta_gamma"] = delta
            if cls is None:
                raise WindingUndefinedError(f"delta-gamma needs the winding number: {cls_error}")
            base = -np.pi * cls.winding
            gamma = {1: base + delta, 2: base - delta}
            entry.update(used=method.value, N=loop.N, gamma=_states_dict(gamma, states), diagnostics={})
            entries.append(entry)
            continue
        d = res.diagnostics
        entry.update(
            used=res.method.value,
            N=res.N,
            gamma=dict(res.gamma),
            diagnostics={"branch_flips": d.branch_flips, "min_eps_abs": d.min_eps_abs,
                         "closure_defect": d.closure_defect, "evaluations": d.evaluations},
        )
        if d.notice:
            entry["notice"] = d.notice
            notices.append(f"{method.value}: {d.notice}")
        entries.append(entry)

    for entry in entries:
        g = entry["gamma"]
        if cls is not None and 1 in g and 2 in g:
            entry["sum_residual"] = sum_rule_residual(g[1], g[2], cls.winding)
    residuals = [e["sum_residual"] for e in entries if "sum_residual" in e]
    discrepancy = None
    for a, b in combinations(entries, 2):
        for s in set(a["gamma"]) & set(b["gamma"]):
            gap = abs(a["gamma"][s] - b["gamma"][s])
            discrepancy = gap if discrepancy is None else max(discrepancy, gap)
    report = {
        "scenario": scenario.name,
        "config": scenario.resolved(),
        "classification": None if cls is None else {
            "winding": cls.winding, "linking": cls.linking, "label": cls.label.value},
        "min_degeneracy_distance": loop.min_degeneracy_distance,
        "results": entries,
        "sum_rule_residual": max(residuals) if residuals else None,
        "cross_method_max_discrepancy": discrepancy,
    }
    if cls is None:
        report["classification_error"] = cls_error
    return report


def reference_phase(scenario: Scenario, spec, state):
    """Holonomy value used to judge a dynamical run (line quadrature when possible)."""
    loop = sample_loop(spec, scenario.N, scenario.min_dist)
    if np.linalg.norm(loop.gamma) > 0:
        try:
            return berry_phase_line_quadrature(loop, state, scenario.tolerances.quad_rtol)[state]
        except ValidationError:
            pass
    return berry_phase_discrete(loop, state)[state]


def run_evolve(scenario: Scenario, notices=None):
    notices = notices if notices is not None else []
    if scenario.dynamics is None:
        raise InvalidSpecError("scenario has no 'dynamics' section")
    dyn = scenario.dynamics
    spec = scenario.loop_spec()
    schedule = DriveSchedule(spec, dyn.T, dyn.hbar, dyn.steps)
    runs = {}
    for s in scenario.states:
        res = propagate(schedule, s)
        ref = reference_phase(scenario, spec, s)
        runs[s] = {
            "extracted_gamma": res.extracted_gamma,
            "holonomy_gamma": ref,
            "discrepancy": abs(res.extracted_gamma - ref),
            "leakage": res.leakage,
            "adiabaticity_max": res.adiabaticity_max,
            "adiabatic": res.adiabatic,
        }
        if not res.adiabatic:
            notices.append(f"state {s}: leakage {res.leakage:.3g} >= 0.05, drive is not adiabatic")
    config = scenario.resolved()
    config["dynamics"]["steps"] = schedule.steps
    return {"scenario": scenario.name, "config": config, "states": runs}


def run_classify(scenario: Scenario):
    loop = sample_loop(scenario.loop_spec(), scenario.N, scenario.min_dist)
    c = classify_path(loop)
    return {"scenario": scenario.name, "winding": c.winding, "linking": c.linking,
            "label": c.label.value, "min_degeneracy_distance": loop.min_degeneracy_distance,
            "N": loop.N}


def _swept(scenario: Scenario, axis, value):
    loop = dict(scenario.loop)
    if axis == "N":
        if value != int(value) or value < 1:
            raise InvalidArgumentError(f"N must be a positive integer, got {value}")
        return scenario.with_changes(N=int(value))
    if axis == "T":
        dyn = scenario.dynamics
        return scenario.with_changes(dynamics=type(dyn)(float(value), dyn.steps, dyn.hbar))
    g = np.linalg.norm(scenario.gamma)
    g_hat = scenario.gamma / g if g > 0 else np.array([0.0, 0.0, 1.0])
    if axis == "radius":
        loop["radius"] = float(value)
    elif loop["kind"] == "Circle3D":
        c = np.asarray(loop["center"], dtype=float)
        loop["center"] = (c - (c @ g_hat) * g_hat + value * g_hat).tolist()
    else:
        loop["vertices"] = (np.asarray(loop["vertices"], dtype=float) + value * g_hat).tolist()
    return scenario.with_changes(loop=loop)


def _check_axis(scenario: Scenario, axis):
    kind = scenario.loop.get("kind") if isinstance(scenario.loop, dict) else None
    if axis == "T" and scenario.dynamics is None:
        raise InvalidSpecError("a T sweep needs a 'dynamics' section")
    if axis == "radius" and kind != "Circle3D":
        raise InvalidSpecError("a radius sweep needs a Circle3D loop")
    if axis == "Z" and kind not in ("Circle3D", "PolyPath"):
        raise InvalidSpecError("a Z sweep needs a Circle3D or PolyPath loop")


def sweep_row(scenario: Scenario, axis, value):
    row = {"value": value}
    if axis == "T":
        report = run_evolve(scenario)
        runs = report["states"]
        for s, run in runs.items():
            row[f"re_gamma{s}"] = run["extracted_gamma"].real
            row[f"im_gamma{s}"] = run["extracted_gamma"].imag
        row["discrepancy"] = max(run["discrepancy"] for run in runs.values())
        row["method"] = "Dynamics"
        loop = sample_loop(scenario.loop_spec(), scenario.N, scenario.min_dist)
        cls, _ = _classification(loop)
        if cls is not None:
            row["class_W"], row["class_L"] = cls.winding, cls.linking
            if 1 in runs and 2 in runs:
                row["sum_residual"] = sum_rule_residual(runs[1]["extracted_gamma"],
                                                        runs[2]["extracted_gamma"], cls.winding)
        return row
    report = run_phase(scenario)
    primary = report["results"][0]
    for s, g in primary["gamma"].items():
        row[f"re_gamma{s}"] = g.real
        row[f"im_gamma{s}"] = g.imag
    row["sum_residual"] = primary.get("sum_residual")
    row["discrepancy"] = report["cross_method_max_discrepancy"]
    row["method"] = primary["used"]
    if report["classification"] is not None:
        row["class_W"] = report["classification"]["winding"]
        row["class_L"] = report["classification"]["linking"]
    return row


def run_sweep(scenario: Scenario, axis, values, timing=True):
    """One row per value, in input order; failures land in the ``error`` column."""
    if axis not in SWEEP_AXES:
        raise InvalidArgumentError(f"axis must be one of {', '.join(SWEEP_AXES)}")
    _check_axis(scenario, axis)
    rows, failures = [], []
    for value in values:
        start = time.perf_counter()
        try:
            row = sweep_row(_swept(scenario, axis, value), axis, value)
        except ResonantPhaseError as exc:
            row = {"value": value, "error": f"{type(exc).__name__}: {exc}"}
            failures.append(exc)
        if timing:
            row["wall_ms"] = round((time.perf_counter() - start) * 1e3, 3)
        rows.append(row)
    return rows, failures


def parse_triple(text):
    try:
        parts = [float(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"expected three comma-separated numbers, got {text!r}") from None
    if len(parts) != 3:
        raise UsageError(f"expected three comma-separated numbers, got {text!r}")
    return np.array(parts)


def parse_mesh(text):
    try:
        nt, nph = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"mesh must look like 64x128, got {text!r}") from None
    return nt, nph


def run_chern(gamma, radius, n_theta, n_phi):
    mesh = SphereMesh(radius, n_theta, n_phi)
    try:
        plaquette = chern_trace_plaquette(mesh, gamma)
    except RefineError as exc:
        raise RefineError(f"{exc} (try --mesh {2 * n_theta}x{2 * n_phi})") from None
    surface = chern_sum_surface(mesh, gamma)
    return {
        "gamma": gamma.tolist(),
        "radius": radius,
        "mesh": [n_theta, n_phi],
        "c1": plaquette.c1,
        "c1_raw": plaquette.raw,
        "per_state": {s: v.real for s, v in plaquette.per_state.items()},
        "surface_sum": surface,
        "consistency_residual": abs(surface + 2 * np.pi * plaquette.c1),
    }


# --- argument handling -------------------------------------------------------------


GLOBAL_DEFAULTS = {"out": None, "format": None, "quiet": False, "no_timing": False}


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--out", default=argparse.SUPPRESS, help="output file (default: standard output)")
    common.add_argument("--format", choices=("csv", "json"), default=argparse.SUPPRESS)
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS,
                        help="suppress notices on standard error")
    common.add_argument("--no-timing", action="store_true", default=argparse.SUPPRESS,
                        help="omit wall-clock timings so output is reproducible")

    parser = _Parser(prog="resonant-phase", parents=[common],
                     description="Complex geometric phases of driven two-level resonances.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("phase", parents=[common], help="run the requested phase methods on a scenario")
    p.add_argument("scenario")
    p = sub.add_parser("sweep", parents=[common], help="repeat a scenario over a list of values")
    p.add_argument("scenario")
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", required=True, help="comma-separated values")
    p = sub.add_parser("chern", parents=[common], help="Chern number and surface sum on a sphere")
    p.add_argument("--gamma", required=True, help="x,y,z")
    p.add_argument("--radius", required=True, type=float)
    p.add_argument("--mesh", default="64x128", help="n_theta x n_phi (default 64x128)")
    p = sub.add_parser("evolve", parents=[common], help="propagate the scenario drive")
    p.add_argument("scenario")
    p = sub.add_parser("classify", parents=[common], help="winding and linking of the scenario loop")
    p.add_argument("scenario")
    return parser


def _flat(report):
    """Single CSV row for reports that are naturally one record."""
    return {k: v for k, v in report.items() if not isinstance(v, (dict, list))}


def _render(args, notices):
    fmt = args.format
    if args.command == "sweep":
        scenario = load_scenario(args.scenario)
        try:
            values = [float(v) for v in args.values.split(",") if v.strip()]
        except ValueError:
            raise UsageError(f"--values must be comma-separated numbers, got {args.values!r}") from None
        if not values:
            raise UsageError("--values is empty")
        rows, failures = run_sweep(scenario, args.axis, values, timing=not args.no_timing)
        if len(failures) == len(rows):
            raise failures[0]
        for row in rows:
            if "error" in row:
                notices.append(f"value {row['value']}: {row['error']}")
        if fmt == "json":
            return to_json(rows)
        return to_csv(rows, SWEEP_COLUMNS)

    start = time.perf_counter()
    if args.command == "phase":
        report = run_phase(load_scenario(args.scenario), notices)
    elif args.command == "evolve":
        report = run_evolve(load_scenario(args.scenario), notices)
    elif args.command == "classify":
        report = run_classify(load_scenario(args.scenario))
    else:
        n_theta, n_phi = parse_mesh(args.mesh)
        report = run_chern(parse_triple(args.gamma), args.radius, n_theta, n_phi)
    if not args.no_timing:
        report["timing"] = {"wall_ms": round((time.perf_counter() - start) * 1e3, 3)}

    if fmt == "csv":
        if args.command == "phase":
            rows = []
            for e in report["results"]:
                row = {"scenario": report["scenario"], "method": e["method"], "used": e["used"], "N": e["N"],
                       "sum_residual": e.get("sum_residual"), "notice": e.get("notice")}
                for s, g in e["gamma"].items():
                    row[f"re_gamma{s}"], row[f"im_gamma{s}"] = g.real, g.imag
                if report["classification"]:
                    row["class_W"] = report["classification"]["winding"]
                    row["class_L"] = report["classification"]["linking"]
                rows.append(row)
            return to_csv(rows, ["scenario", "method", "used", "N", "re_gamma1", "im_gamma1", "re_gamma2",
                                 "im_gamma2", "sum_residual", "class_W", "class_L", "notice"])
        if args.command == "evolve":
            rows = [dict(state=s, **run) for s, run in report["states"].items()]
            for row in rows:
                for key in ("extracted_gamma", "holonomy_gamma"):
                    g = row.pop(key)
                    row[f"re_{key}"], row[f"im_{key}"] = g.real, g.imag
            return to_csv(rows, ["state", "re_extracted_gamma", "im_extracted_gamma", "re_holonomy_gamma",
                                 "im_holonomy_gamma", "discrepancy", "leakage", "adiabaticity_max",
                                 "adiabatic"])
        flat = _flat(report)
        if args.command == "chern":
            flat["re_surface_sum"] = report["surface_sum"].real
            flat["im_surface_sum"] = report["surface_sum"].imag
            flat.pop("surface_sum", None)
        return to_csv([flat], list(flat))
    return to_json(report)


def _join_values(argv):
    """Glue ``--values -0.3,0.1`` into one token so negative lists parse."""
    out = list(argv)
    for i, tok in enumerate(out[:-1]):
        if tok == "--values":
            out[i:i + 2] = [f"--values={out[i + 1]}"]
            break
    return out


def main(argv=None) -> int:
    parser = build_parser()
    notices = []
    try:
        args = parser.parse_args(_join_values(sys.argv[1:] if argv is None else argv))
        # global flags are shared with every subparser and default to SUPPRESS,
        # so they may appear on either side of the subcommand
        for key, value in GLOBAL_DEFAULTS.items():
            if not hasattr(args, key):
                setattr(args, key, value)
        text = _render(args, notices)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    if not args.quiet:
        for note in notices:
            print(f"notice: {note}", file=sys.stderr)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
