"""Command line interface: problem files in, schema-versioned reports out.

A problem file is a JSON document declaring a chart and exactly one of a
metric or a Lagrange function, both written in the expression DSL, plus
optional vector fields, an immersion, solver parameters, and sampling
parameters.  Reports are JSON documents printed to stdout with sorted keys,
so a fixed seed reproduces them byte for byte.  Exit status 0 means every
requested check passed, 1 means a mathematical check failed and the payload
carries a witness, 2 means the input could not be used.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .charts import AdaptedChart, ChartError, JetChart
from .equivalents import (Lagrangian, caratheodory, euler_lagrange,
                          fundamental, fundamental_homogeneous,
                          hilbert_caratheodory, poincare_cartan)
from .expr import (ONE, Expr, ExprError, ParseError, PointAssignment, parse,
                   to_dsl, to_latex)
from .forms import (DiffForm, FormError, Immersion, VectorField, contract,
                    ext_d, form_equal, form_to_json, horizontalize,
                    pullback_immersion, volume_form, zero_form)
from .homogeneity import grassmann_form, zermelo_residuals
from .minimal import (BUILTIN_SURFACES, GridField, MetricSpec,
                      conservation_residuals, krupka_form, minimal_lagrangian,
                      reconstruct_and_check, solve_minimal_surface)
from .variation import VectorFieldSpec, noether_current, noether_residual
from .acceptance import run_all

__all__ = ["ProblemError", "ProblemSpec", "load_problem", "main"]

PROBLEM_SCHEMA = "lepage-problem/1"
REPORT_SCHEMA = "lepage-report/1"

_PROBLEM_KEYS = {"schema", "chart", "metric", "lagrangian", "fields",
                 "immersion", "solver", "seed", "tol", "trials"}
_SOLVER_KEYS = {"grid", "domain", "boundary", "tol", "max_iter"}


class ProblemError(Exception):
    """Raised when a problem file or command input cannot be used."""


@dataclass(frozen=True)
class ProblemSpec:
    """Validated problem file: chart, integrand, and optional geometry."""

    chart: JetChart
    lagrangian: Lagrangian
    metric: MetricSpec | None
    fields: tuple[VectorFieldSpec, ...]
    immersion: Immersion | None
    solver: dict
    seed: int
    tol: float
    trials: int


# ---------------------------------------------------------------------------
# problem ingestion
# ---------------------------------------------------------------------------

def _expect(condition: bool, message: str) -> None:
    if not condition:
        raise ProblemError(message)


def _parse_expr(text: object, chart: JetChart, where: str) -> Expr:
    _expect(isinstance(text, str), f"{where} must be a DSL string")
    try:
        return parse(text, chart)
    except ParseError as ex:
        raise ProblemError(f"{where}: {ex}") from ex


def _parse_metric(obj: object, chart: JetChart) -> MetricSpec:
    _expect(isinstance(obj, dict), "metric must be an object")
    kind = obj.get("kind")
    try:
        if kind == "euclidean":
            _expect(set(obj) == {"kind", "dim"}, "euclidean metric takes only 'dim'")
            _expect(obj["dim"] == chart.M,
                    f"metric dimension {obj.get('dim')} does not match the "
                    f"chart fiber dimension {chart.M}")
            return MetricSpec.euclidean(chart.M)
        if kind == "diagonal":
            entries = obj.get("entries")
            _expect(isinstance(entries, list) and len(entries) == chart.M,
                    f"diagonal metric needs {chart.M} entries")
            return MetricSpec.diagonal(*[
                _parse_expr(e, chart, "metric entry") for e in entries])
        if kind == "matrix":
            entries = obj.get("entries")
            _expect(isinstance(entries, list) and len(entries) == chart.M,
                    f"matrix metric needs {chart.M} rows")
            rows = []
            for row in entries:
                _expect(isinstance(row, list) and len(row) == chart.M,
                        f"matrix metric rows need {chart.M} entries")
                rows.append(tuple(_parse_expr(e, chart, "metric entry")
                                  for e in row))
            return MetricSpec(tuple(rows))
    except (ChartError, ExprError) as ex:
        raise ProblemError(f"metric: {ex}") from ex
    raise ProblemError(f"unknown metric kind {kind!r}")


def load_problem(path: str | Path) -> ProblemSpec:
    """Read and validate a problem file."""
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as ex:
        raise ProblemError(f"cannot read problem file: {ex}") from ex
    except json.JSONDecodeError as ex:
        raise ProblemError(f"problem file is not valid JSON: {ex}") from ex
    _expect(isinstance(raw, dict), "problem file must hold a JSON object")
    unknown = set(raw) - _PROBLEM_KEYS
    _expect(not unknown, f"unknown problem keys: {sorted(unknown)}")
    schema = raw.get("schema", PROBLEM_SCHEMA)
    _expect(schema == PROBLEM_SCHEMA, f"unsupported problem schema {schema!r}")

    chart_obj = raw.get("chart")
    _expect(isinstance(chart_obj, dict) and set(chart_obj) == {"n", "m"},
            "problem file must declare a chart object with keys 'n' and 'm'")
    try:
        chart = JetChart(int(chart_obj["n"]), int(chart_obj["m"]), 1)
    except (ChartError, TypeError, ValueError) as ex:
        raise ProblemError(f"chart: {ex}") from ex

    has_metric = "metric" in raw
    has_lagrangian = "lagrangian" in raw
    _expect(has_metric != has_lagrangian,
            "problem file must declare exactly one of 'metric' or 'lagrangian'")
    metric: MetricSpec | None = None
    if has_metric:
        metric = _parse_metric(raw["metric"], chart)
        try:
            lagrangian = minimal_lagrangian(metric, chart.n)
        except (ChartError, ExprError) as ex:
            raise ProblemError(f"metric: {ex}") from ex
    else:
        lagrangian = Lagrangian(chart, _parse_expr(raw["lagrangian"], chart,
                                                   "lagrangian"))

    fields: list[VectorFieldSpec] = []
    for pos, comps in enumerate(raw.get("fields", ())):
        _expect(isinstance(comps, list) and len(comps) == chart.M,
                f"field {pos} needs {chart.M} components")
        try:
            fields.append(VectorFieldSpec(chart, tuple(
                _parse_expr(c, chart, f"field {pos} component") for c in comps)))
        except ChartError as ex:
            raise ProblemError(f"field {pos}: {ex}") from ex

    immersion: Immersion | None = None
    if "immersion" in raw:
        comps = raw["immersion"]
        _expect(isinstance(comps, list) and len(comps) == chart.M,
                f"immersion needs {chart.M} components")
        try:
            immersion = Immersion(chart, tuple(
                _parse_expr(c, chart, "immersion component") for c in comps))
        except (ChartError, FormError) as ex:
            raise ProblemError(f"immersion: {ex}") from ex

    solver = raw.get("solver", {})
    _expect(isinstance(solver, dict) and set(solver) <= _SOLVER_KEYS,
            f"solver block accepts keys {sorted(_SOLVER_KEYS)}")

    seed = raw.get("seed", 0)
    tol = raw.get("tol", 1e-9)
    trials = raw.get("trials", 20)
    _expect(isinstance(seed, int), "seed must be an integer")
    _expect(isinstance(tol, (int, float)) and tol > 0, "tol must be positive")
    _expect(isinstance(trials, int) and trials > 0,
            "trials must be a positive integer")
    return ProblemSpec(chart, lagrangian, metric, tuple(fields), immersion,
                       dict(solver), int(seed), float(tol), int(trials))


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

_COVECTOR_LATEX = {
    "dx": "\\mathrm{{d}}x^{{{a}}}",
    "dy": "\\mathrm{{d}}y^{{{a}}}",
    "dy1": "\\mathrm{{d}}y^{{{a}}}_{{{b}}}",
    "om": "\\omega^{{{a}}}",
    "om1": "\\omega^{{{a}}}_{{{b}}}",
    "dw": "\\mathrm{{d}}w^{{{a}}}",
    "dw1": "\\mathrm{{d}}w^{{{a}}}_{{{b}}}",
    "omt": "\\tilde{{\\omega}}^{{{a}}}",
}


def _form_to_latex(a: DiffForm) -> str:
    if a.is_zero:
        return "0"
    parts = []
    for word, coeff in sorted(a.items(), key=lambda t: tuple(c.key for c in t[0])):
        factors = " \\wedge ".join(
            _COVECTOR_LATEX[c.kind].format(a=c.a, b=c.b) for c in word)
        if not factors:
            parts.append(to_latex(coeff))
        else:
            parts.append(f"\\left({to_latex(coeff)}\\right) {factors}")
    return " + ".join(parts)


def _point_json(assign: PointAssignment) -> dict:
    return {str(s): v for s, v in sorted(assign.symbols.items(),
                                         key=lambda kv: str(kv[0]))}


def _witness_json(obj: object) -> object:
    if obj is None:
        return None
    if isinstance(obj, PointAssignment):
        return _point_json(obj)
    if isinstance(obj, tuple):
        return [getattr(c, "name", lambda: str(c))() for c in obj]
    return str(obj)


def _report(command: str, **payload: object) -> dict:
    return {"schema": REPORT_SCHEMA, "command": command, **payload}


def _json_default(obj: object) -> object:
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True, default=_json_default))


# ---------------------------------------------------------------------------
# equivalent constructors by kind
# ---------------------------------------------------------------------------

_KIND_ALIASES = {
    "theta": "poincare-cartan",
    "z": "fundamental",
    "w": "fundamental-homogeneous",
    "omega": "krupka",
}
_KINDS = ("poincare-cartan", "fundamental", "caratheodory",
          "fundamental-homogeneous", "hilbert-caratheodory", "krupka")


def _build_equivalent(kind: str, prob: ProblemSpec, *, seed: int, tol: float,
                      trials: int) -> tuple[str, DiffForm]:
    kind = _KIND_ALIASES.get(kind, kind)
    lam = prob.lagrangian
    if kind == "poincare-cartan":
        return kind, poincare_cartan(lam)
    if kind == "fundamental":
        return kind, fundamental(lam)
    if kind == "caratheodory":
        return kind, caratheodory(lam)
    if kind == "fundamental-homogeneous":
        return kind, fundamental_homogeneous(lam, trials=trials, tol=tol,
                                             seed=seed)
    if kind == "hilbert-caratheodory":
        return kind, hilbert_caratheodory(lam, trials=trials, tol=tol,
                                          seed=seed)
    if kind == "krupka":
        if prob.metric is None:
            raise ProblemError("kind 'krupka' needs a metric problem")
        return kind, krupka_form(prob.metric, prob.chart.n).form
    raise ProblemError(f"unknown equivalent kind {kind!r}")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _sampling(args: argparse.Namespace, prob: ProblemSpec) -> tuple[int, float, int]:
    seed = prob.seed if args.seed is None else args.seed
    tol = prob.tol if args.tol is None else args.tol
    trials = prob.trials if args.trials is None else args.trials
    return seed, tol, trials


def _cmd_derive_el(args: argparse.Namespace) -> int:
    prob = load_problem(args.problem)
    components = euler_lagrange(prob.lagrangian)
    if args.format == "latex":
        for e in components:
            print(to_latex(e))
        return 0
    _emit(_report("derive-el",
                  chart={"n": prob.chart.n, "m": prob.chart.m},
                  components=[to_dsl(e) for e in components]))
    return 0


def _cmd_lepage(args: argparse.Namespace) -> int:
    prob = load_problem(args.problem)
    seed, tol, trials = _sampling(args, prob)
    kind, rho = _build_equivalent(args.kind, prob, seed=seed, tol=tol,
                                  trials=trials)
    if args.format == "latex":
        print(_form_to_latex(rho))
        return 0
    _emit(_report("lepage", kind=kind,
                  chart={"n": prob.chart.n, "m": prob.chart.m},
                  form=form_to_json(rho)))
    return 0


def _cmd_check_lepage(args: argparse.Namespace) -> int:
    prob = load_problem(args.problem)
    seed, tol, trials = _sampling(args, prob)
    kind, rho = _build_equivalent(args.kind, prob, seed=seed, tol=tol,
                                  trials=trials)
    chart = prob.chart
    lam = prob.lagrangian
    guards = [lam.L]
    carried = form_equal(horizontalize(rho),
                         volume_form(chart).scale(lam.L),
                         trials=trials, tol=tol, seed=seed, guards=guards)
    # the defining property: horizontalized contractions of the differential
    # vanish along every vertical direction, and contraction is pointwise
    # linear in the field, so the jet-direction basis decides all of them
    drho = ext_d(rho)
    witness = None
    for s in chart.jet1_symbols():
        defect = horizontalize(contract(VectorField(chart, {s: ONE}), drho))
        res = form_equal(defect, zero_form(chart, chart.n, defect.mode),
                         trials=trials, tol=tol, seed=seed, guards=guards)
        if res.verdict != "equal":
            witness = {"direction": str(s), "word": _witness_json(res.word)}
            if res.detail is not None:
                witness["values"] = list(res.detail.witness_values)
                witness["point"] = _witness_json(res.detail.witness)
            break
    passed = witness is None and carried.verdict == "equal"
    payload = _report("check-lepage", kind=kind, passed=passed,
                      vertical_contractions_vanish=witness is None,
                      carries_lagrangian=carried.verdict == "equal")
    if witness is not None:
        payload["witness"] = witness
    elif carried.verdict != "equal":
        payload["witness"] = {"detail": "horizontal part differs from the "
                                        "Lagrangian volume form",
                              "word": _witness_json(carried.word)}
    _emit(payload)
    return 0 if passed else 1


def _cmd_check_zermelo(args: argparse.Namespace) -> int:
    prob = load_problem(args.problem)
    seed, tol, trials = _sampling(args, prob)
    report = zermelo_residuals(prob.lagrangian.L, prob.chart, trials=trials,
                               tol=tol, seed=seed)
    verdicts = {f"{i},{j}": res.verdict
                for (i, j), res in sorted(report.verdicts.items())}
    payload = _report("check-zermelo", passed=report.passed, verdicts=verdicts)
    if not report.passed:
        (i, j), res = next(((ij, r) for ij, r in sorted(report.verdicts.items())
                            if r.verdict != "equal"))
        payload["witness"] = {
            "index": [i, j],
            "residual": to_dsl(report.residuals[(i, j)]),
            "values": list(res.witness_values),
            "point": _witness_json(res.witness),
        }
    _emit(payload)
    return 0 if report.passed else 1


def _cmd_noether(args: argparse.Namespace) -> int:
    prob = load_problem(args.problem)
    if prob.metric is None:
        raise ProblemError("noether needs a metric problem")
    if not prob.fields:
        raise ProblemError("noether needs at least one entry under 'fields'")
    adapted = AdaptedChart(prob.chart, tuple(range(1, prob.chart.n + 1)))
    WG = grassmann_form(krupka_form(prob.metric, prob.chart.n), adapted)
    entries = []
    currents = []
    witness = None
    for pos, xi in enumerate(prob.fields):
        residual = noether_residual(xi, WG)
        current = noether_current(xi, WG)
        currents.append(current)
        entry = {
            "components": [to_dsl(c) for c in xi.components],
            "invariant": residual.is_zero,
            "current": form_to_json(current),
        }
        if prob.immersion is not None:
            pulled = pullback_immersion(current, prob.immersion)
            entry["closed_along_immersion"] = ext_d(pulled).is_zero
        if not residual.is_zero and witness is None:
            witness = {"field": pos, "residual": form_to_json(residual)}
        entries.append(entry)
    passed = all(e["invariant"] for e in entries)
    if args.format == "latex":
        for current in currents:
            print(_form_to_latex(current))
        return 0 if passed else 1
    payload = _report("noether", passed=passed, currents=entries)
    if witness is not None:
        payload["witness"] = witness
    _emit(payload)
    return 0 if passed else 1


def _domain(text: str) -> tuple[float, float, float, float]:
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("domain takes four numbers a,b,c,d")
    try:
        a, b, c, d = (float(p) for p in parts)
    except ValueError as ex:
        raise argparse.ArgumentTypeError(str(ex)) from ex
    return a, b, c, d


def _load_grid_values(path: Path) -> np.ndarray:
    try:
        if path.suffix.lower() == ".csv":
            values = np.loadtxt(path, delimiter=",", dtype=float)
        else:
            values = np.asarray(json.loads(path.read_text()), dtype=float)
    except OSError as ex:
        raise ProblemError(f"cannot read boundary file: {ex}") from ex
    except (json.JSONDecodeError, ValueError) as ex:
        raise ProblemError(f"boundary file is not a numeric grid: {ex}") from ex
    if values.ndim != 2 or min(values.shape) < 3:
        raise ProblemError("boundary file must hold a 2D grid, at least 3x3")
    return values


def _cmd_minsurf(args: argparse.Namespace) -> int:
    solver = {}
    if args.problem is not None:
        solver = load_problem(args.problem).solver
    grid = args.grid if args.grid is not None else solver.get("grid")
    rect = args.domain if args.domain is not None else \
        tuple(solver.get("domain", (-1.0, 1.0, -1.0, 1.0)))
    if len(rect) != 4:
        raise ProblemError("solver domain takes four numbers a,b,c,d")
    boundary = args.boundary if args.boundary is not None else \
        solver.get("boundary", "scherk")
    tol = args.tol if args.tol is not None else solver.get("tol", 1e-10)
    max_iter = args.max_iter if args.max_iter is not None else \
        solver.get("max_iter", 20)

    if boundary in BUILTIN_SURFACES:
        n = int(grid) if grid is not None else 33
        if n < 3:
            raise ProblemError("grid must be at least 3")
        start = GridField.dirichlet(rect, (n, n), BUILTIN_SURFACES[boundary])
    else:
        path = Path(boundary)
        if not path.exists():
            raise ProblemError(
                f"boundary {boundary!r} is neither a builtin "
                f"({', '.join(sorted(BUILTIN_SURFACES))}) nor a file")
        values = _load_grid_values(path)
        if grid is not None and values.shape != (int(grid), int(grid)):
            raise ProblemError(f"boundary file shape {values.shape} does not "
                               f"match --grid {grid}")
        start = GridField(rect, values)

    try:
        result = solve_minimal_surface(start, tol=float(tol),
                                       max_iter=int(max_iter))
    except ValueError as ex:
        raise ProblemError(str(ex)) from ex
    cons = conservation_residuals(result.field)
    rec = reconstruct_and_check(result.field)
    payload = _report(
        "minsurf",
        grid={"nx": result.field.nx, "ny": result.field.ny,
              "domain": list(result.field.rect)},
        boundary=boundary if boundary in BUILTIN_SURFACES else "file",
        converged=result.converged,
        iterations=result.iterations,
        message=result.message,
        convergence=list(result.history),
        residuals={"equation": result.final_residual,
                   "relation": rec.rovnice_residual,
                   "reconstruction_stage": rec.stage},
        circulations={**{name: float(np.max(np.abs(cells)))
                         for name, cells in sorted(cons.circulations.items())},
                      "gate": cons.gate(10.0)},
    )
    _emit(payload)
    if args.csv is not None:
        np.savetxt(args.csv, result.field.values, delimiter=",")
    return 0 if result.converged else 1


def _cmd_selftest(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else 0
    results = run_all(seed=seed)
    passed = sum(r.passed for r in results)
    if args.format == "json":
        _emit(_report("selftest", seed=seed,
                      passed=passed == len(results),
                      criteria=[{"number": r.number, "title": r.title,
                                 "passed": r.passed, "detail": r.detail}
                                for r in results]))
    else:
        for r in results:
            print(r.line())
        print(f"{passed}/{len(results)} criteria passed")
    return 0 if passed == len(results) else 1


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lepage",
        description="Equivalents, extremal equations, invariants, and a "
                    "minimal-surface workbench over jet charts.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--problem", required=True, help="problem JSON file")
    common.add_argument("--format", choices=("json", "latex"), default="json")
    common.add_argument("--seed", type=int, default=None,
                        help="sampling seed (overrides the problem file)")
    common.add_argument("--tol", type=float, default=None,
                        help="comparison tolerance (overrides the problem file)")
    common.add_argument("--trials", type=int, default=None,
                        help="sample count (overrides the problem file)")

    p = sub.add_parser("derive-el", parents=[common],
                       help="source expressions of the extremal equations")
    p.set_defaults(handler=_cmd_derive_el)

    p = sub.add_parser("lepage", parents=[common],
                       help="construct an equivalent of the problem integrand")
    p.add_argument("--kind", required=True,
                   choices=sorted(set(_KINDS) | set(_KIND_ALIASES)))
    p.set_defaults(handler=_cmd_lepage)

    p = sub.add_parser("check-lepage", parents=[common],
                       help="verify the constructed equivalent")
    p.add_argument("--kind", required=True,
                   choices=sorted(set(_KINDS) | set(_KIND_ALIASES)))
    p.set_defaults(handler=_cmd_check_lepage)

    p = sub.add_parser("check-zermelo", parents=[common],
                       help="homogeneity residuals of the problem integrand")
    p.set_defaults(handler=_cmd_check_zermelo)

    p = sub.add_parser("noether", parents=[common],
                       help="currents and invariance residuals of the "
                            "declared fields")
    p.set_defaults(handler=_cmd_noether)

    p = sub.add_parser("minsurf",
                       help="solve the graph equation on a rectangle")
    p.add_argument("--problem", default=None,
                   help="problem JSON file supplying solver defaults")
    p.add_argument("--grid", type=int, default=None, help="grid points per axis")
    p.add_argument("--domain", type=_domain, default=None,
                   help="rectangle a,b,c,d")
    p.add_argument("--boundary", default=None,
                   help="builtin surface name or grid file (.csv or JSON)")
    p.add_argument("--tol", type=float, default=None,
                   help="Newton residual target")
    p.add_argument("--max-iter", type=int, default=None,
                   help="Newton step limit")
    p.add_argument("--csv", default=None,
                   help="write the solved grid to this CSV file")
    p.set_defaults(handler=_cmd_minsurf)

    p = sub.add_parser("selftest", help="run every registered criterion")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(handler=_cmd_selftest)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point; returns the process exit status."""
    args = _build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ProblemError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 2
    except (ChartError, ExprError, FormError, ParseError, OSError) as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
