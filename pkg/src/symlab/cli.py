"""Command-line front end: verify, solve, simulate, export, errata.

Verification runs every residual check against a built-in or manifest model
and emits a deterministic report (text or versioned JSON, schema
``symlab-report/1``).  Exit status 0 means every check passed; errata are
informational and do not affect the status.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import random
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from . import expr as ex
from .expr import Expr, is_zero, differentiate, parse
from . import geometry
from .geometry import (
    Coframe,
    Metric,
    VectorField,
    jacobi_residual,
    killing_residual,
    metric_from_coframe,
    structure_constants_from_frame,
)
from .emfield import (
    KgfChecker,
    Potential,
    SymmetryIntegral,
    admissibility_residual,
    algebraic_constraint_residual,
    bianchi_residual,
    compatibility_residual,
    field_from_potential,
    gamma_of,
)
from . import catalog
from .catalog import BianchiModel, get_model, random_model_assignment
from . import solver
from . import dynamics

__all__ = [
    "Report",
    "CheckResult",
    "ManifestError",
    "run_verification",
    "load_manifest",
    "export_manifest",
    "emit_report",
    "main",
]

REPORT_SCHEMA = "symlab-report/1"
NUMERIC_TOL = 1e-9  # algebraic / Killing numeric checks
KGF_TOL = 1e-8  # second-order scalar conditions and dynamics drift


class ManifestError(Exception):
    pass


@dataclass
class CheckResult:
    name: str
    mode: str  # "symbolic" | "numeric"
    residual: str  # "zero" or formatted max-abs
    verdict: str  # "pass" | "fail"
    detail: str = ""

    def as_dict(self):
        d = {
            "name": self.name,
            "mode": self.mode,
            "residual": self.residual,
            "verdict": self.verdict,
        }
        if self.detail:
            d["detail"] = self.detail
        return d


@dataclass
class Report:
    model: str
    params: Dict[str, str]
    checks: List[CheckResult] = field(default_factory=list)
    errata: List[Dict[str, str]] = field(default_factory=list)
    solver_output: Optional[str] = None
    seed: int = 0
    samples: int = 0
    timing_seconds: Optional[float] = None

    @property
    def passed(self) -> bool:
        return all(c.verdict == "pass" for c in self.checks)

    def as_dict(self):
        return {
            "schema": REPORT_SCHEMA,
            "model": self.model,
            "params": self.params,
            "seed": self.seed,
            "samples": self.samples,
            "checks": [c.as_dict() for c in self.checks],
            "errata": self.errata,
            "solver_output": self.solver_output,
            "passed": self.passed,
            # kept null so identical inputs give byte-identical documents
            "timing_seconds": None,
        }


def _sym_check(name: str, residual_exprs, detail: str = "") -> CheckResult:
    bad = []
    for label, e in residual_exprs:
        if not is_zero(e):
            bad.append(f"{label}: {e}")
    if bad:
        return CheckResult(name, "symbolic", bad[0], "fail", detail)
    return CheckResult(name, "symbolic", "zero", "pass", detail)


def run_verification(model: BianchiModel, samples: int = 100, seed: int = 0) -> Report:
    """Run every residual check on a model; failures become report entries."""
    t0 = time.perf_counter()
    rng = random.Random(seed)
    report = Report(
        model=model.type_tag,
        params={k: str(v) for k, v in model.params.items()},
        seed=seed,
        samples=samples,
    )
    checks = report.checks

    # frame closure and the Jacobi identity
    try:
        derived = structure_constants_from_frame(model.frame)
        closure = CheckResult(
            "frame closure",
            "symbolic",
            "zero",
            "pass" if derived == model.constants else "fail",
            str(derived),
        )
    except geometry.GeometryError as err:
        closure = CheckResult("frame closure", "symbolic", str(err), "fail")
        derived = None
    checks.append(closure)
    if derived is not None:
        jac = jacobi_residual(derived)
        entries = [
            (f"[{a + 1}{b + 1}{g + 1}]^{s + 1}", jac[a][b][g][s])
            for a in range(3)
            for b in range(3)
            for g in range(3)
            for s in range(3)
        ]
        checks.append(_sym_check("jacobi identity", entries))

    # Killing equations, symbolically
    for a, X in enumerate(model.frame):
        res = killing_residual(model.metric, X)
        entries = [(f"g[{i}{j}]", res[i][j]) for i in range(4) for j in range(i, 4)]
        checks.append(_sym_check(f"killing equations, generator {a + 1}", entries))

    # field consistency and closure
    rebuilt = field_from_potential(model.potential)
    entries = [
        (f"F[{i}{j}]", rebuilt[i, j] - model.field[i, j])
        for i in range(4)
        for j in range(i + 1, 4)
    ]
    checks.append(_sym_check("field equals exterior derivative of potential", entries))
    checks.append(
        _sym_check(
            "closure identity",
            [(f"B[{i}{j}{k}]", v) for (i, j, k), v in bianchi_residual(model.field).items()],
        )
    )

    # admissibility, algebraic constraints, invariance of F
    for a, X in enumerate(model.frame):
        res = admissibility_residual(model.potential, model.field, X)
        checks.append(
            _sym_check(
                f"admissibility, generator {a + 1}",
                [(f"R[{i}]", res[i]) for i in range(4)],
            )
        )
    acr = algebraic_constraint_residual(model.potential, model.frame, model.constants)
    checks.append(
        _sym_check(
            "algebraic constraints",
            [(f"[{a + 1}{b + 1}]", acr[a][b]) for a in range(3) for b in range(3)],
        )
    )
    for a, X in enumerate(model.frame):
        comp = compatibility_residual(model.field, X)
        checks.append(
            _sym_check(
                f"field invariance, generator {a + 1}",
                [(f"F[{i}{j}]", comp[i][j]) for i in range(4) for j in range(i + 1, 4)],
            )
        )

    # second-order scalar conditions, numerically
    checker = KgfChecker(model.metric, model.potential)
    worst = 0.0
    for _ in range(samples):
        point = random_model_assignment(model, rng, symbols=checker.required_symbols())
        for X in model.frame:
            r1, r2 = checker.residuals(X, point)
            worst = max(worst, abs(r1), abs(r2))
    checks.append(
        CheckResult(
            "second-order scalar conditions",
            "numeric",
            f"{worst:.3e}",
            "pass" if worst < KGF_TOL else "fail",
            f"max over {samples} points x 3 generators",
        )
    )

    # gamma reduction: d_i gamma = xi^j F_ji
    entries = []
    for a, integral in enumerate(model.integrals):
        gam = gamma_of(integral.xi, model.potential)
        entries.append((f"gamma[{a + 1}] definition", gam - integral.gamma))
        for i in range(4):
            lhs = differentiate(gam, i)
            rhs = sum(
                (integral.xi[j] * model.field[j, i] for j in range(4)), ex.number(0)
            )
            entries.append((f"gamma[{a + 1}], d_{i}", lhs - rhs))
    checks.append(_sym_check("integral correction reduction", entries))

    for note in model.errata:
        report.errata.append(
            {
                "location": note.location,
                "printed_form": note.printed_form,
                "consistent_form": note.consistent_form,
                "evidence": note.evidence,
            }
        )
    report.timing_seconds = time.perf_counter() - t0
    return report


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

_MANIFEST_HEADER = "# symlab manifest 1"


def export_manifest(model: BianchiModel, bindings: Optional[Dict[str, Expr]] = None) -> str:
    lines = [_MANIFEST_HEADER, "", "[model]", f"name = {model.type_tag}", "", "[params]"]
    for k, v in model.params.items():
        lines.append(f"{k} = {v}")
    lines += ["", "[frame]"]
    for a, f in enumerate(model.frame):
        comps = ", ".join(str(c) for c in f)
        lines.append(f"xi{a + 1} = {comps}")
    lines += ["", "[coframe]"]
    for a, form in enumerate(model.coframe.forms):
        comps = ", ".join(str(c) for c in form)
        lines.append(f"s{a + 1} = {comps}")
    lines += ["", "[potential]"]
    for i in range(4):
        lines.append(f"A{i} = {model.potential[i]}")
    if bindings:
        lines += ["", "[bindings]"]
        for k, v in bindings.items():
            lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def _parse_sections(text: str) -> Dict[str, List[Tuple[str, str, int]]]:
    sections: Dict[str, List[Tuple[str, str, int]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            sections.setdefault(current, [])
            continue
        if current is None:
            raise ManifestError(f"line {lineno}: content before any section")
        if "=" not in line:
            raise ManifestError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        sections[current].append((key.strip(), value.strip(), lineno))
    return sections


def _section_dict(entries) -> Dict[str, str]:
    return {k: v for k, v, _ln in entries}


def _parse_expr_at(value: str, lineno: int, parameters) -> Expr:
    try:
        return parse(value, parameters=parameters)
    except ex.ParseError as err:
        raise ManifestError(f"line {lineno}: {err}") from None


def load_manifest(path: str) -> Tuple[BianchiModel, Dict[str, Expr]]:
    """Build a model from a manifest file.

    Returns the model together with any [bindings] section entries (used by
    the simulate command).  Structure constants are always derived from the
    declared frame; a frame that does not close is a load error.
    """
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    sections = _parse_sections(text)
    for required in ("model", "frame", "potential"):
        if required not in sections:
            raise ManifestError(f"missing required section [{required}]")
    meta = _section_dict(sections["model"])
    name = meta.get("name", "custom")
    params_raw = _section_dict(sections.get("params", []))
    parameters = set(ex.DEFAULT_PARAMETERS) | set(params_raw)

    frame_entries = _section_dict(sections["frame"])
    fields = []
    for a in range(1, 4):
        key = f"xi{a}"
        if key not in frame_entries:
            raise ManifestError(f"missing frame component {key}")
        comps = [s.strip() for s in frame_entries[key].split(",")]
        if len(comps) != 4:
            raise ManifestError(f"{key} needs four components")
        fields.append(
            VectorField(tuple(_parse_expr_at(c, 0, parameters) for c in comps))
        )
    frame = tuple(fields)
    try:
        constants = structure_constants_from_frame(frame)
    except geometry.GeometryError as err:
        raise ManifestError(f"frame does not define an algebra: {err}") from None

    coframe = None
    if "coframe" in sections:
        cof_entries = _section_dict(sections["coframe"])
        forms = []
        for a in range(1, 4):
            key = f"s{a}"
            if key not in cof_entries:
                raise ManifestError(f"missing coframe form {key}")
            comps = [s.strip() for s in cof_entries[key].split(",")]
            if len(comps) != 3:
                raise ManifestError(f"{key} needs three components")
            forms.append(tuple(_parse_expr_at(c, 0, parameters) for c in comps))
        coframe = Coframe(tuple(forms))
        metric = metric_from_coframe(coframe)
    elif "metric" in sections:
        m_entries = _section_dict(sections["metric"])
        entries = [[ex.number(0)] * 4 for _ in range(4)]
        for i in range(4):
            for j in range(i, 4):
                key = f"g{i}{j}"
                if key in m_entries:
                    v = _parse_expr_at(m_entries[key], 0, parameters)
                    entries[i][j] = v
                    entries[j][i] = v
        metric = Metric(entries, entries[0][0])
    else:
        raise ManifestError("need a [coframe] or [metric] section")
    if coframe is None:
        try:
            coframe = geometry.invariant_coframe(frame)
        except geometry.GeometryError:
            coframe = Coframe(
                tuple(
                    tuple(ex.number(1 if i == a else 0) for i in range(3))
                    for a in range(3)
                )
            )

    pot_entries = _section_dict(sections["potential"])
    comps = []
    for i in range(4):
        key = f"A{i}"
        if key not in pot_entries:
            raise ManifestError(f"missing potential component {key}")
        comps.append(_parse_expr_at(pot_entries[key], 0, parameters))
    potential = Potential(tuple(comps))
    field_tensor = field_from_potential(potential)
    integrals = tuple(
        SymmetryIntegral(xi=frame[a], gamma=gamma_of(frame[a], potential))
        for a in range(3)
    )
    params: Dict[str, object] = {}
    for k, v in params_raw.items():
        try:
            params[k] = Fraction(v)
        except ValueError:
            params[k] = v
    model = BianchiModel(
        type_tag=name,
        params=params,
        frame=frame,
        constants=constants,
        coframe=coframe,
        metric=metric,
        potential=potential,
        field=field_tensor,
        integrals=integrals,
        errata=(),
    )
    bindings = {}
    for k, v, ln in sections.get("bindings", []):
        bindings[k] = _parse_expr_at(v, ln, parameters)
    return model, bindings


# ---------------------------------------------------------------------------
# report rendering
# ---------------------------------------------------------------------------


def emit_report(report: Report, fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps(report.as_dict(), indent=2) + "\n"
    lines = [f"model {report.model}  (seed={report.seed}, samples={report.samples})"]
    if report.params:
        lines.append("  params: " + ", ".join(f"{k}={v}" for k, v in report.params.items()))
    for c in report.checks:
        status = "PASS" if c.verdict == "pass" else "FAIL"
        lines.append(f"  [{status}] {c.name} ({c.mode}): {c.residual}")
        if c.detail and c.verdict != "pass":
            lines.append(f"         {c.detail}")
    if report.errata:
        lines.append("  errata:")
        for note in report.errata:
            lines.append(f"    - {note['location']}")
            lines.append(f"      printed:    {note['printed_form']}")
            lines.append(f"      consistent: {note['consistent_form']}")
            lines.append(f"      evidence:   {note['evidence']}")
    if report.solver_output:
        lines.append("  solver:")
        for ln in report.solver_output.splitlines():
            lines.append("    " + ln)
    if report.timing_seconds is not None:
        lines.append(f"  time: {report.timing_seconds:.2f} s")
    lines.append("  result: " + ("PASS" if report.passed else "FAIL"))
    return "\n".join(lines) + "\n"


def _emit_many(reports: Sequence[Report], fmt: str) -> str:
    if fmt == "json":
        doc = {
            "schema": REPORT_SCHEMA,
            "reports": [r.as_dict() for r in reports],
            "passed": all(r.passed for r in reports),
        }
        return json.dumps(doc, indent=2) + "\n"
    return "\n".join(emit_report(r, "text") for r in reports)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _cmd_verify(args) -> int:
    if args.manifest:
        model, _bindings = load_manifest(args.manifest)
        models = [model]
    elif args.group.lower() == "all":
        models = [get_model(tag) for tag in catalog.TAGS]
    else:
        models = [get_model(args.group)]
    if len(models) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=4) as pool:
            futures = [
                pool.submit(run_verification, m, args.samples, args.seed + i)
                for i, m in enumerate(models)
            ]
            reports = [f.result() for f in futures]
    else:
        reports = [run_verification(models[0], args.samples, args.seed)]
    sys.stdout.write(_emit_many(reports, args.format))
    return 0 if all(r.passed for r in reports) else 1


def _cmd_solve(args) -> int:
    try:
        fam = solver.solve_solvable(args.group, q=args.q)
        reduced = solver.apply_algebraic_constraints(fam)
    except solver.UnsupportedGroupError as err:
        sys.stderr.write(f"error: {err}\n")
        return 2
    if args.format == "json":
        doc = {
            "schema": REPORT_SCHEMA,
            "model": reduced.type_tag,
            "family": {f"F{i}{j}": str(reduced.components[(i, j)]) for (i, j) in solver.PAIRS},
            "free_functions": list(reduced.free_functions),
            "free_constants": list(reduced.free_constants),
            "pre_constraint_constants": list(fam.free_constants),
        }
        sys.stdout.write(json.dumps(doc, indent=2) + "\n")
    else:
        sys.stdout.write(str(reduced) + "\n")
        if fam.free_constants:
            sys.stdout.write(
                "constants eliminated by the algebraic constraints: "
                + ", ".join(fam.free_constants)
                + "\n"
            )
    return 0


def load_bindings(path: str) -> Dict[str, Expr]:
    """Read a [bindings] section from a manifest or a bindings-only file."""
    with open(path, "r", encoding="utf-8") as fh:
        sections = _parse_sections(fh.read())
    if "bindings" not in sections:
        raise ManifestError(f"{path}: no [bindings] section")
    out = {}
    for k, v, ln in sections["bindings"]:
        out[k] = _parse_expr_at(v, ln, ex.DEFAULT_PARAMETERS)
    return out


def _cmd_simulate(args) -> int:
    bindings = {}
    if args.bindings:
        bindings = load_bindings(args.bindings)
    model = get_model(args.group)
    inst = dynamics.standard_instance(model, bindings=bindings or None)
    states = dynamics.random_initial_states(model, 1, seed=args.seed)
    try:
        traj = dynamics.integrate(inst, states[0], (0.0, args.tau), args.tol)
    except dynamics.IntegrationError as err:
        sys.stderr.write(f"error: {err}\n")
        return 2
    rows = dynamics.trajectory_rows(traj, inst)
    out = sys.stdout if not args.out else open(args.out, "w", encoding="utf-8")
    try:
        out.write("# tau u0 u1 u2 u3 p0 p1 p2 p3 H Y1 Y2 Y3\n")
        for row in rows:
            out.write(" ".join(repr(v) for v in row) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    drifts = dynamics.conserved_drift(traj, inst)
    sys.stderr.write(
        "drift: " + ", ".join(f"{k}={v:.3e}" for k, v in drifts.items()) + "\n"
    )
    return 0


def _cmd_export(args) -> int:
    model = get_model(args.group)
    text = export_manifest(model)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_errata(args) -> int:
    notes = catalog.printed_vs_consistent(args.group)
    if args.format == "json":
        doc = {
            "schema": REPORT_SCHEMA,
            "model": args.group.upper(),
            "errata": [
                {
                    "location": n.location,
                    "printed_form": n.printed_form,
                    "consistent_form": n.consistent_form,
                    "evidence": n.evidence,
                    "reproduced": n.reproduce(),
                }
                for n in notes
            ],
        }
        sys.stdout.write(json.dumps(doc, indent=2) + "\n")
    else:
        if not notes:
            sys.stdout.write(f"type {args.group.upper()}: no divergences recorded\n")
        for n in notes:
            ok = "reproduced" if n.reproduce() else "NOT reproduced"
            sys.stdout.write(f"{n.location} [{ok}]\n")
            sys.stdout.write(f"  printed:    {n.printed_form}\n")
            sys.stdout.write(f"  consistent: {n.consistent_form}\n")
            sys.stdout.write(f"  evidence:   {n.evidence}\n")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="symlab",
        description="verify, solve and simulate the built-in homogeneous models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run the residual checks")
    p.add_argument("--group", default="all", help="I..IX or 'all'")
    p.add_argument("--manifest", help="verify a manifest file instead of a built-in")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("solve", help="closed-form field family for a solvable type")
    p.add_argument("--group", required=True, help="I..VII")
    p.add_argument("--q", type=Fraction, default=None, help="free constant of type VI")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("simulate", help="integrate a charged test particle")
    p.add_argument("--group", required=True)
    p.add_argument("--tau", type=float, default=10.0)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bindings", help="manifest whose [bindings] section overrides the standard ones")
    p.add_argument("--out", help="write the trajectory table to this file")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("export", help="write a built-in model as a manifest")
    p.add_argument("--group", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("errata", help="printed-versus-consistent divergences")
    p.add_argument("--group", required=True)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=_cmd_errata)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
