"""Command-line front end: ``preduce check|classify|dirac|reduce|flow <file>``.

Problem definitions are JSON files (``"schema": 1``); every expression is a
string in the expression grammar.  Exit codes: 0 all checks pass, 1 a
validation check failed, 2 the input could not be used.
"""
from __future__ import annotations

import argparse
import hashlib
import io
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .dirac import (
    DiracContext, SingularConstraintError, dirac_bracket_expr, dirac_bracket_value, dirac_vector_field,
    leaf_orthogonality_check, reduced_tensor,
)
from .expr import Chart, ChartMismatchError, EvaluationError, Expression, ParseError, simplify
from .flows import IntegrationError, IntegratorConfig, conservation_report, integrate, integrate_constrained, write_csv
from .poisson import NotPoissonError, PoissonStructure, SmoothMap, box_samples, is_casimir, jacobi_residual
from .quotient import (
    QuotientError, QuotientSpec, action_family, build_reduced, pullback_identity_check,
    reduce_hamiltonian, verify_closure, verify_invariance,
)
from .report import Report, Worst
from .submanifold import (
    ConstraintSet, PreconditionError, RankDeficiencyError, SamplingError, classify, sample_surface,
)

SCHEMA = 1
DEFAULT_SEED = 42
DEFAULT_TOLERANCES = {
    "antisymmetry": 1e-12, "jacobi": 1e-9, "casimir": 1e-10, "invariance": 1e-10,
    "closure": 1e-10, "pullback": 1e-10, "drift": 1e-7, "dirac": 1e-10, "bracket_preservation": 1e-5,
}


class InputError(ValueError):
    """Unusable definition file or arguments (exit code 2)."""


# ------------------------------------------------------------------ definitions

def _line_of(text: str, needle: str) -> int | None:
    pos = text.find(json.dumps(needle))
    return text.count("\n", 0, pos) + 1 if pos >= 0 else None


@dataclass
class ProblemDefinition:
    path: Path
    raw: dict
    text: str
    chart: Chart
    structure: PoissonStructure

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()

    @property
    def box(self) -> tuple[float, float]:
        return tuple(self.raw.get("sample_box", (-2.0, 2.0)))

    def tol(self, key: str) -> float:
        return float(self.raw.get("tolerances", {}).get(key, DEFAULT_TOLERANCES[key]))

    def expr(self, text: Any, chart: Chart | None = None, where: str = "") -> Expression:
        chart = chart or self.chart
        if isinstance(text, (int, float)):
            text = repr(float(text))
        if not isinstance(text, str):
            raise InputError(f"{where}: expected an expression string")
        try:
            return chart.parse(text)
        except ParseError as exc:
            line = _line_of(self.text, text)
            at = f" (line {line})" if line else ""
            raise InputError(f"{where}{at}: {exc}") from exc

    def named(self, section: str) -> dict[str, Any]:
        value = self.raw.get(section, {})
        if isinstance(value, list):
            return {f"{section}{i}": v for i, v in enumerate(value)}
        if not isinstance(value, dict):
            raise InputError(f"{section}: expected an object or a list")
        return value

    def casimirs(self) -> dict[str, Expression]:
        return {k: self.expr(v, where=f"casimirs.{k}") for k, v in self.named("casimirs").items()}

    def tracked(self) -> dict[str, Expression]:
        out = self.casimirs()
        out.update({k: self.expr(v, where=f"tracked_quantities.{k}")
                    for k, v in self.named("tracked_quantities").items()})
        return out

    def hamiltonian(self, override: str | None = None) -> Expression:
        named = self.named("hamiltonians")
        if override is not None:
            if override in named:
                return self.expr(named[override], where=f"hamiltonians.{override}")
            return self.expr(override, where="--hamiltonian")
        if "hamiltonian" in self.raw:
            return self.expr(self.raw["hamiltonian"], where="hamiltonian")
        if len(named) == 1:
            (k, v), = named.items()
            return self.expr(v, where=f"hamiltonians.{k}")
        raise InputError("no hamiltonian given (use --hamiltonian or the 'hamiltonian' field)")

    def constraint_set(self, name: str | None) -> ConstraintSet:
        sets = self.named("constraints")
        if not sets:
            raise InputError("definition has no constraints section")
        if name is None:
            if len(sets) != 1:
                raise InputError(f"choose a constraint set with --constraints: {sorted(sets)}")
            name = next(iter(sets))
        if name not in sets:
            raise InputError(f"unknown constraint set {name!r}; available: {sorted(sets)}")
        exprs = [self.expr(e, where=f"constraints.{name}") for e in sets[name]]
        seeds = self.raw.get("seeds", {}).get(name) if isinstance(self.raw.get("seeds"), dict) else None
        if seeds is not None:
            seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
            if seeds.shape[1] != self.chart.dim:
                raise InputError(f"seeds.{name}: points must have {self.chart.dim} coordinates")
        return ConstraintSet(self.structure, exprs, seeds=seeds, name=name)


def _tensor_entries(raw: Any, chart: Chart) -> dict[tuple[str, str], str]:
    if not isinstance(raw, dict):
        raise InputError("poisson_tensor: expected an object {row: {column: expression}}")
    out = {}
    for a, row in raw.items():
        if not isinstance(row, dict):
            raise InputError(f"poisson_tensor.{a}: expected an object")
        for b, v in row.items():
            for name in (a, b):
                if name not in chart.names:
                    raise InputError(f"poisson_tensor: unknown coordinate {name!r}")
            if chart.index(a) >= chart.index(b):
                raise InputError(f"poisson_tensor.{a}.{b}: give upper-triangle entries only")
            out[(a, b)] = v
    return out


def load_definition(path: str | Path) -> ProblemDefinition:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path.name}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise InputError("top level must be an object")
    if raw.get("schema") != SCHEMA:
        raise InputError(f"unsupported schema {raw.get('schema')!r}; expected {SCHEMA}")
    try:
        chart = Chart(raw["chart"])
    except KeyError:
        raise InputError("missing 'chart'") from None
    except (TypeError, ValueError) as exc:
        raise InputError(f"chart: {exc}") from exc
    defn = ProblemDefinition(path, raw, text, chart, None)  # type: ignore[arg-type]
    entries = {k: defn.expr(v, where=f"poisson_tensor.{k[0]}.{k[1]}")
               for k, v in _tensor_entries(raw.get("poisson_tensor", {}), chart).items()}
    defn.structure = PoissonStructure.from_upper(chart, entries, validate=False,
                                                 box=tuple(raw.get("sample_box", (-2.0, 2.0))))
    return defn


def _quotient(defn: ProblemDefinition) -> tuple[QuotientSpec, dict]:
    q = defn.raw.get("quotient")
    if not isinstance(q, dict):
        raise InputError("definition has no quotient section")
    chart = defn.chart
    maps: list[SmoothMap] = []
    act = q.get("action")
    if act is not None:
        comps = act.get("components")
        if not isinstance(comps, list) or len(comps) != chart.dim:
            raise InputError(f"quotient.action.components: need {chart.dim} expressions")
        try:
            maps += action_family(chart, comps, act.get("parameter", "t"), act.get("values"))
        except ParseError as exc:
            raise InputError(f"quotient.action: {exc}") from exc
    for k, comps in enumerate(q.get("maps", [])):
        if not isinstance(comps, list) or len(comps) != chart.dim:
            raise InputError(f"quotient.maps[{k}]: need {chart.dim} expressions")
        maps.append(SmoothMap(chart, chart, tuple(defn.expr(c, where=f"quotient.maps[{k}]") for c in comps)))
    gens = q.get("generators")
    if not isinstance(gens, dict) or not gens:
        raise InputError("quotient.generators: expected a non-empty object {name: expression}")
    try:
        red = Chart(tuple(gens))
    except ValueError as exc:
        raise InputError(f"quotient.generators: {exc}") from exc
    generators = tuple(defn.expr(v, where=f"quotient.generators.{k}") for k, v in gens.items())
    lam = {}
    for a, row in q.get("closure", {}).items():
        for b, v in row.items():
            if a not in red.names or b not in red.names:
                raise InputError(f"quotient.closure: unknown generator in ({a}, {b})")
            i, j = red.index(a), red.index(b)
            e = defn.expr(v, red, where=f"quotient.closure.{a}.{b}")
            if i == j:
                raise InputError(f"quotient.closure.{a}.{b}: diagonal entry")
            if i > j:
                i, j, e = j, i, simplify(-e)
            lam[(i, j)] = e
    relations = tuple(defn.expr(r, red, where="quotient.relations") for r in q.get("relations", []))
    return QuotientSpec(defn.structure, tuple(maps), generators, red, lam, relations), q


# ------------------------------------------------------------------ reports

@dataclass
class RunReport:
    command: str
    input: str
    digest: str
    seed: int
    checks: list[Report] = field(default_factory=list)
    results: dict[str, Any] = field(default_factory=dict)
    artifacts: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed or r.skipped for r in self.checks)

    def to_dict(self) -> dict:
        from .report import _plain
        return {"command": self.command, "input": self.input, "input_sha256": self.digest,
                "seed": self.seed, "passed": self.passed,
                "checks": [r.to_dict() for r in self.checks],
                "results": _plain(self.results), "artifacts": list(self.artifacts)}

    def to_text(self) -> str:
        out = io.StringIO()
        out.write(f"preduce {self.command} {self.input}\n")
        out.write(f"input sha256 {self.digest}\nseed {self.seed}\n")
        for key, value in self.results.items():
            out.write(f"{key}: {_fmt(value)}\n")
        for r in self.checks:
            status = "SKIP" if r.skipped else ("PASS" if r.passed else "FAIL")
            line = f"[{status}] {r.name}: worst residual {r.worst_residual:.3e}"
            if not r.passed and r.witness is not None:
                line += " at (" + ", ".join(f"{x:.17g}" for x in r.witness) + ")"
            out.write(line + "\n")
            for note in r.notes:
                out.write(f"    note: {note}\n")
        for a in self.artifacts:
            out.write(f"wrote {a}\n")
        out.write(f"RESULT {'PASS' if self.passed else 'FAIL'}\n")
        return out.getvalue()


def _fmt(value: Any) -> str:
    from .report import _plain
    return json.dumps(_plain(value), sort_keys=True)


def _samples(defn: ProblemDefinition, count: int, seed: int) -> np.ndarray:
    return box_samples(defn.chart.dim, count, defn.box, seed)


# ------------------------------------------------------------------ commands

def cmd_check(defn: ProblemDefinition, args) -> RunReport:
    rep = RunReport("check", defn.path.name, defn.digest, args.seed)
    P = defn.structure
    bad = P.antisymmetry_defects()
    rep.checks.append(Report("antisymmetry", not bad, float(len(bad)), None,
                             {"defects": [[P.chart.names[i], P.chart.names[j]] for i, j in bad]}))
    pts = _samples(defn, args.samples, args.seed)
    worst = Worst()
    skipped = 0
    for z in pts:
        try:
            worst.update(jacobi_residual(P, z) / P.jacobi_scale(z), z)
        except EvaluationError:
            skipped += 1
    jac = Report("jacobi", worst.value <= defn.tol("jacobi"), worst.value, worst.witness,
                 {"points": len(pts) - skipped, "relative_to": "max(1, |B| |dB|)"})
    if skipped:
        jac.notes.append(f"{skipped} sample points outside the domain were skipped")
    rep.checks.append(jac)
    if not bad:
        rep.results["jacobi_symbolic"] = P.jacobi_symbolic()
    for name, c in defn.casimirs().items():
        r = is_casimir(P, c, pts, tol=defn.tol("casimir"))
        r.name = f"casimir {name}"
        rep.checks.append(r)
    if "hamiltonian" in defn.raw:
        defn.hamiltonian()
    return rep


def cmd_classify(defn: ProblemDefinition, args) -> RunReport:
    rep = RunReport("classify", defn.path.name, defn.digest, args.seed)
    C = defn.constraint_set(args.constraints)
    try:
        samples = sample_surface(C, args.samples, seed=args.seed)
        cl = classify(C, samples, seed=args.seed)
    except SamplingError as exc:
        rep.checks.append(Report("sampling", False, exc.best_residual, None, {}, [str(exc)]))
        return rep
    except RankDeficiencyError as exc:
        rep.checks.append(Report("regularity", False, 0.0, exc.witness, {}, [str(exc)]))
        return rep
    rep.results["constraint_set"] = C.name
    rep.results["classification"] = cl.label
    rep.results["samples"] = len(samples)
    rep.results["max_condition_number"] = cl.max_condition
    rep.results["warnings"] = list(cl.warnings)
    rep.checks.append(Report("regularity", True, 0.0, None, {"samples": len(samples)}))
    if cl.decomposition is not None:
        rep.checks.append(cl.decomposition)
    return rep


def _pairs(defn: ProblemDefinition, args) -> list[tuple[str, str]]:
    raw = args.pairs if args.pairs else defn.raw.get("pairs", [])
    out = []
    for p in raw:
        parts = p.split(",") if isinstance(p, str) else list(p)
        if len(parts) != 2:
            raise InputError(f"pair {p!r}: expected two expressions 'f,g'")
        out.append((parts[0].strip(), parts[1].strip()))
    return out


def cmd_dirac(defn: ProblemDefinition, args) -> RunReport:
    rep = RunReport("dirac", defn.path.name, defn.digest, args.seed)
    C = defn.constraint_set(args.constraints)
    samples = sample_surface(C, args.samples, seed=args.seed)
    D = DiracContext(C, samples, seed=args.seed)
    tol = defn.tol("dirac")
    rep.results["constraint_set"] = C.name
    rep.results["classification"] = D.classification.label
    pairs = _pairs(defn, args)
    if pairs:
        values = {}
        for f_s, g_s in pairs:
            f, g = defn.expr(f_s, where="--pairs"), defn.expr(g_s, where="--pairs")
            entry = {"values": [dirac_bracket_value(D, f, g, s) for s in samples[:5]]}
            if D.symbolic:
                entry["expression"] = str(dirac_bracket_expr(D, f, g))
            values[f"{{{f_s}, {g_s}}}"] = entry
        rep.results["dirac_brackets"] = values
    else:
        dump = []
        for s in samples[:5]:
            t = reduced_tensor(D, s)
            dump.append({"point": s.point, "tangent_basis": t.tangent, "tangential_tensor": t.tangential})
        rep.results["reduced_tensors"] = dump
    # constraints are Casimirs of the Dirac bracket; Dirac fields are tangent to S
    cas, tan = Worst(), Worst()
    coords = defn.chart.coordinates()
    for s in samples:
        for psi in C.constraints:
            for x in coords:
                cas.update(abs(dirac_bracket_value(D, psi, x, s)), s.point)
        for x in coords:
            v = dirac_vector_field(D, x, s)
            tan.update(np.abs(C.jacobian(s.point) @ v).max(), s.point)
    rep.checks.append(Report("constraints_are_casimirs", cas.value <= tol, cas.value, cas.witness))
    rep.checks.append(Report("dirac_field_tangency", tan.value <= tol, tan.value, tan.witness))
    leaf = [leaf_orthogonality_check(D, s, tol) for s in samples]
    worst = max(leaf, key=lambda r: r.worst_residual)
    rep.checks.append(Report("leaf_orthogonality", all(leaf), worst.worst_residual, worst.witness,
                             {"samples": len(leaf)}))
    if args.out:
        out = Path(args.out)
        payload = {k: v for k, v in rep.to_dict()["results"].items()}
        out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        rep.artifacts.append(str(out))
    return rep


def _reduced_definition(defn: ProblemDefinition, Q: QuotientSpec, q: dict, args) -> dict:
    red = Q.reduced_chart
    tensor: dict[str, dict[str, str]] = {}
    for (a, b), e in sorted(Q.closure.items()):
        if not e.is_const(0.0):
            tensor.setdefault(red.names[a], {})[red.names[b]] = str(e)
    out: dict[str, Any] = {"schema": SCHEMA, "chart": list(red.names), "poisson_tensor": tensor}
    if "hamiltonian" in q:
        out["hamiltonian"] = q["hamiltonian"]
    if "casimirs" in q:
        out["casimirs"] = q["casimirs"]
    if "relations" in q:
        out["relations"] = q["relations"]
    if "z0" in defn.raw:
        out["z0"] = [float(v) for v in Q.image(np.asarray(defn.raw["z0"], dtype=float))[0]]
    for key in ("T", "dt"):
        if key in defn.raw:
            out[key] = defn.raw[key]
    out["sample_box"] = [float(v) for v in defn.box]
    return out


def cmd_reduce(defn: ProblemDefinition, args) -> RunReport:
    rep = RunReport("reduce", defn.path.name, defn.digest, args.seed)
    Q, q = _quotient(defn)
    pts = _samples(defn, args.samples, args.seed)
    inv = verify_invariance(Q, pts, defn.tol("invariance"))
    clo = verify_closure(Q, pts, defn.tol("closure"))
    rep.checks += [inv, clo]
    rep.results["reduced_chart"] = list(Q.reduced_chart.names)
    rep.results["action_maps"] = len(Q.actions)
    if not (inv and clo):
        return rep
    red = build_reduced(Q, pts, tol=max(defn.tol("invariance"), defn.tol("closure")))
    rep.checks.append(pullback_identity_check(Q, pts, seed=args.seed, tol=defn.tol("pullback"), structure=red))
    if "hamiltonian" in q:
        h_red = defn.expr(q["hamiltonian"], Q.reduced_chart, where="quotient.hamiltonian")
        h = defn.hamiltonian()
        try:
            R = reduce_hamiltonian(Q, h, h_red, pts, structure=red)
            rep.checks.append(Report("hamiltonian_descent", True, R.descent_residual, None,
                                     {"reduced_hamiltonian": str(h_red)}))
        except QuotientError as exc:
            rep.checks.append(Report("hamiltonian_descent", False, float("nan"), exc.witness, {}, [str(exc)]))
    if rep.passed:
        out = Path(args.out) if args.out else defn.path.with_name(f"{defn.path.stem}_reduced.json")
        out.write_text(json.dumps(_reduced_definition(defn, Q, q, args), indent=2) + "\n")
        rep.artifacts.append(out.name if not args.out else str(out))
    return rep


def _floats(text: str, n: int, what: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise InputError(f"{what}: expected {n} comma-separated numbers") from None
    if len(vals) != n:
        raise InputError(f"{what}: expected {n} numbers, got {len(vals)}")
    return vals


def cmd_flow(defn: ProblemDefinition, args) -> RunReport:
    rep = RunReport("flow", defn.path.name, defn.digest, args.seed)
    h = defn.hamiltonian(args.hamiltonian)
    if args.z0 is not None:
        z0 = _floats(args.z0, defn.chart.dim, "--z0")
    elif "z0" in defn.raw:
        z0 = defn.raw["z0"]
    else:
        raise InputError("no initial point (use --z0 or the 'z0' field)")
    try:
        z0 = defn.chart.point(z0)
    except ChartMismatchError as exc:
        raise InputError(f"z0: {exc}") from exc
    T = float(args.T if args.T is not None else defn.raw.get("T", 1.0))
    dt = float(args.dt if args.dt is not None else defn.raw.get("dt", 1e-3))
    tracked = defn.tracked()
    structure_ok = True
    try:
        defn.structure.validate()
    except NotPoissonError as exc:
        rep.checks.append(Report("poisson_structure", False, float("nan"), exc.witness, {}, [str(exc)]))
        structure_ok = False
    try:
        if args.constraints:
            C = defn.constraint_set(args.constraints)
            D = DiracContext(C, seed=args.seed)
            cfg = IntegratorConfig(method="projected-rk4", dt=dt, T=T)
            traj = integrate_constrained(D, h, z0, cfg, tracked=tracked)
            rep.results["max_constraint_residual"] = float(traj.constraint_residuals.max(initial=0.0))
            rep.results["max_tangency_defect"] = float(traj.tangency.max(initial=0.0))
        else:
            cfg = IntegratorConfig(dt=dt, T=T)
            traj = integrate(defn.structure, h, z0, cfg, tracked=tracked)
    except IntegrationError as exc:
        rep.checks.append(Report("integration", False, float("nan"), None,
                                 {"last_valid_time": exc.last_valid_time}, [str(exc)]))
        traj = exc.trajectory
        if traj is None:
            return rep
    rep.results["steps"] = len(traj.t) - 1
    rep.results["dt"] = cfg.step
    rep.results["T"] = T
    rep.results["final_state"] = traj.final
    rep.results["energy_drift"] = float(np.abs(traj.energy - traj.energy[0]).max())
    if structure_ok:
        rep.checks.append(conservation_report(traj, tracked, drift_tol=defn.tol("drift")))
    out = Path(args.out) if args.out else defn.path.with_name(f"{defn.path.stem}_trajectory.csv")
    with out.open("w", newline="") as fh:
        write_csv(traj, fh, list(tracked))
    rep.artifacts.append(out.name if not args.out else str(out))
    return rep


COMMANDS = {"check": cmd_check, "classify": cmd_classify, "dirac": cmd_dirac,
            "reduce": cmd_reduce, "flow": cmd_flow}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="preduce", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("file", help="problem definition (JSON, schema 1)")
    parser.add_argument("--constraints", help="name of the constraint set")
    parser.add_argument("--pairs", nargs="+", metavar="F,G", help="function pairs for dirac")
    parser.add_argument("--hamiltonian", help="expression or name from 'hamiltonians'")
    parser.add_argument("--z0", help="initial point, comma-separated")
    parser.add_argument("--dt", type=float)
    parser.add_argument("--T", type=float)
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
    parser.add_argument("--samples", type=int, default=None, help="number of sample points")
    parser.add_argument("--json", action="store_true", help="print the report as JSON")
    parser.add_argument("--out", help="output path for the command's artifact")
    return parser


DEFAULT_SAMPLES = {"check": 100, "classify": 20, "dirac": 20, "reduce": 100, "flow": 0}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.samples is None:
        args.samples = DEFAULT_SAMPLES[args.command]
    try:
        defn = load_definition(args.file)
        rep = COMMANDS[args.command](defn, args)
    except InputError as exc:
        print(f"preduce: input error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, TypeError, ChartMismatchError) as exc:
        if isinstance(exc, (PreconditionError, QuotientError, NotPoissonError)):
            print(f"preduce: {exc}", file=sys.stderr)
            return 1
        print(f"preduce: input error: {exc}", file=sys.stderr)
        return 2
    except (SingularConstraintError, SamplingError, RankDeficiencyError, EvaluationError) as exc:
        print(f"preduce: {exc}", file=sys.stderr)
        return 1
    if args.json:
        sys.stdout.write(json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(rep.to_text())
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
