"""Acceptance suite: one check per criterion, each at its stated tolerance.

Run ``pytest tests/test_acceptance.py`` (the per-criterion PASS/FAIL lines are
printed in the terminal summary) or ``python tests/test_acceptance.py``.
"""
import math
import shutil
import tempfile
from contextlib import redirect_stdout
from io import StringIO
from pathlib import Path

import numpy as np
import pytest

from preduce.cli import main as cli_main
from preduce.dirac import (
    DiracContext, dirac_bracket_expr, dirac_bracket_value, dirac_vector_field, leaf_orthogonality_check,
    reduced_tensor,
)
from preduce.expr import Chart, compile_vector, substitute
from preduce.flows import IntegratorConfig, bracket_preservation_check, integrate, integrate_constrained
from preduce.poisson import PoissonStructure, box_samples, bracket, is_casimir, random_polynomial
from preduce.quotient import (
    QuotientSpec, action_family, build_reduced, compare_dynamics, pullback_identity_check,
    reduce_hamiltonian, verify_closure, verify_invariance,
)
from preduce.submanifold import ConstraintSet, classify, coisotropic_equivalences_test, sample_surface

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
RESULTS: dict[int, tuple[bool, str]] = {}


def _record(n: int, checks: dict[str, tuple], extra: dict[str, bool] | None = None):
    """checks maps a label to (observed, limit) or (observed, limit, ">=")."""
    def ok_one(c):
        return c[0] >= c[1] if c[2:] == (">=",) else c[0] <= c[1]

    ok = all(ok_one(c) for c in checks.values()) and all((extra or {}).values())
    parts = [f"{k}={c[0]:.2e}{c[2] if c[2:] else '<='}{c[1]:g}" for k, c in checks.items()]
    parts += [f"{k}={'ok' if v else 'FAILED'}" for k, v in (extra or {}).items()]
    RESULTS[n] = (ok, "; ".join(parts))
    return ok


def _vals(fn, z):
    return np.array(fn(z))


# ---------------------------------------------------------------- fixtures

def _structures():
    return {
        "canonical R2": PoissonStructure.canonical(1),
        "canonical R4": PoissonStructure.canonical(2),
        "so3*": PoissonStructure.so3(),
        "canonical x trivial R5": PoissonStructure.product(PoissonStructure.canonical(2),
                                                           PoissonStructure.trivial(Chart(["c"]))),
    }


def _flat_dirac(count=20, seed=1):
    P = PoissonStructure.canonical(2)
    C = ConstraintSet(P, ["q2", "p2"], seeds=[[0.5, 0.0, 0.3, 0.0]])
    return DiracContext(C, sample_surface(C, count, seed=seed))


def _curved_dirac(count=20, seed=2):
    P = PoissonStructure.product(PoissonStructure.so3(), PoissonStructure.canonical(1))
    C = ConstraintSet(P, ["q - x3", "p - x1"], seeds=[[0.5, 0.2, 0.3, 0.3, 0.5]])
    return DiracContext(C, sample_surface(C, count, seed=seed))


def _resonance():
    P = PoissonStructure.canonical(2)
    rot = ["q1*cos(t) + p1*sin(t)", "q2*cos(t) + p2*sin(t)", "-q1*sin(t) + p1*cos(t)", "-q2*sin(t) + p2*cos(t)"]
    gens = {"s0": "(q1^2 + p1^2 + q2^2 + p2^2)/2", "w1": "q1*q2 + p1*p2", "w2": "q1*p2 - q2*p1",
            "w3": "(q1^2 + p1^2 - q2^2 - p2^2)/2"}
    closure = {("w1", "w2"): "2*w3", ("w2", "w3"): "2*w1", ("w3", "w1"): "2*w2"}
    return QuotientSpec.from_strings(P, action_family(P.chart, rot), gens, closure, ["w1^2 + w2^2 + w3^2 - s0^2"])


# ---------------------------------------------------------------- criteria

def criterion_1():
    rng = np.random.default_rng(2024)
    worst_anti = worst_leib = worst_tensor = worst_nested = 0.0
    for P in _structures().values():
        f, g, h = (random_polynomial(P.chart, rng, 2) for _ in range(3))
        fg, gf = bracket(P, f, g), bracket(P, g, f)
        exprs = [fg + gf,
                 bracket(P, f, g * h) - fg * h - g * bracket(P, f, h),
                 bracket(P, f, bracket(P, g, h)) + bracket(P, g, bracket(P, h, f)) + bracket(P, h, fg)]
        fn = compile_vector(exprs, P.dim)
        for z in box_samples(P.dim, 100, seed=int(rng.integers(1 << 30))):
            a, l, j = np.abs(_vals(fn, z))
            worst_anti, worst_leib, worst_nested = max(worst_anti, a), max(worst_leib, l), max(worst_nested, j)
            worst_tensor = max(worst_tensor, np.abs(P.jacobi_tensor(z)).max(initial=0.0))
    return _record(1, {"antisymmetry": (worst_anti, 1e-12), "leibniz": (worst_leib, 1e-12),
                       "jacobi_tensor": (worst_tensor, 1e-12), "nested_jacobi": (worst_nested, 1e-9)})


def criterion_2():
    so3, c2 = PoissonStructure.so3(), PoissonStructure.canonical(1)
    r1 = is_casimir(so3, so3.chart.parse("x1^2 + x2^2 + x3^2"), box_samples(3, 100, seed=1), tol=1e-14)
    r2 = is_casimir(c2, c2.chart.parse("q"), box_samples(2, 100, seed=1), tol=1e-14)
    return _record(2, {"norm2_on_so3": (r1.worst_residual, 1e-14),
                       "|q_residual - 1|": (abs(r2.worst_residual - 1.0), 1e-14)},
                   {"q_fails": not r2.passed, "norm2_passes": r1.passed})


def criterion_3():
    c4, so3 = PoissonStructure.canonical(2), PoissonStructure.so3()
    cases = [(c4, ["q2", "p2"], None, "cosymplectic"), (c4, ["p1", "p2"], None, "coisotropic"),
             (c4, ["q2"], None, "coisotropic"),
             (so3, ["x1^2 + x2^2 + x3^2 - 1"], [[1, 0, 0]], "poisson-submanifold")]
    extra = {}
    for P, cons, seeds, want in cases:
        C = ConstraintSet(P, cons, seeds=seeds)
        samples = sample_surface(C, 20, seed=42)
        cl = classify(C, samples)
        name = ",".join(cons) if len(cons) < 3 else "sphere"
        ok = cl.label == want and len(samples) >= 20
        if want == "cosymplectic":
            ok = ok and cl.decomposition.passed and cl.decomposition.details["samples"] >= 20
        else:
            ok = ok and coisotropic_equivalences_test(C, samples).passed
        if want == "poisson-submanifold":
            ok = ok and max(e["leaf_residual"] for e in cl.samples) <= 1e-10
        extra[f"({name})->{cl.label}"] = ok
    return _record(3, {}, extra)


def criterion_4():
    D = _flat_dirac(100, seed=4)
    c2 = PoissonStructure.canonical(1)
    plane = c2.chart
    sub = {0: plane.var(0), 2: plane.var(1), 1: plane.parse("0"), 3: plane.parse("0")}
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(10):
        f = random_polynomial(D.structure.chart, rng, 2)
        g = random_polynomial(D.structure.chart, rng, 2)
        oracle = compile_vector([bracket(c2, substitute(f, sub), substitute(g, sub))], 2)
        for s in D.samples:
            want = oracle([s.point[0], s.point[2]])[0]
            worst = max(worst, abs(dirac_bracket_value(D, f, g, s) - want))
    return _record(4, {"max_deviation": (worst, 1e-10)}, {"points>=100": len(D.samples) >= 100})


def _dirac_properties(D, rng):
    c = D.structure.chart
    out = dict(ext=0.0, cas=0.0, tan=0.0, jac=0.0, tensor=0.0)
    x = c.coordinates()
    triples = [(x[0], x[1], x[0] * x[1]), (x[0], x[-1], x[1] * x[-1])]
    nested = []
    for f, g, h in triples:
        fg, gh, hf = (dirac_bracket_expr(D, a, b) for a, b in ((f, g), (g, h), (h, f)))
        nested.append(dirac_bracket_expr(D, f, gh) + dirac_bracket_expr(D, g, hf) + dirac_bracket_expr(D, h, fg))
    nested_fn = compile_vector(nested, D.structure.dim)
    for _ in range(3):
        f, g = random_polynomial(c, rng, 2), random_polynomial(c, rng, 2)
        bump = sum((psi * random_polynomial(c, rng, 1) for psi in D.constraints.constraints), c.parse("0"))
        for s in D.samples:
            base = dirac_bracket_value(D, f, g, s)
            out["ext"] = max(out["ext"], abs(dirac_bracket_value(D, f + bump, g - bump, s) - base))
            for psi in D.constraints.constraints:
                out["cas"] = max(out["cas"], abs(dirac_bracket_value(D, psi, f, s)))
            v = dirac_vector_field(D, f, s)
            out["tan"] = max(out["tan"], np.abs(D.constraints.jacobian(s.point) @ v).max())
            t = reduced_tensor(D, s)
            out["tensor"] = max(out["tensor"], abs(D._grad(f, s.point) @ t.ambient @ D._grad(g, s.point) - base))
    for s in D.samples:
        out["jac"] = max(out["jac"], np.abs(nested_fn(s.point)).max())
    return out


def criterion_5():
    rng = np.random.default_rng(5)
    checks = {}
    for name, D in (("flat", _flat_dirac()), ("curved", _curved_dirac())):
        r = _dirac_properties(D, rng)
        checks[f"{name}.extension"] = (r["ext"], 1e-10)
        checks[f"{name}.casimir"] = (r["cas"], 1e-10)
        checks[f"{name}.tangency"] = (r["tan"], 1e-10)
        checks[f"{name}.nested_jacobi"] = (r["jac"], 1e-8)
        checks[f"{name}.tensor_agreement"] = (r["tensor"], 1e-10)
    return _record(5, checks)


def criterion_6():
    checks, extra = {}, {}
    for name, D in (("flat", _flat_dirac()), ("curved", _curved_dirac())):
        reports = [leaf_orthogonality_check(D, s, 1e-10) for s in D.samples]
        checks[f"{name}.pairing"] = (max(r.worst_residual for r in reports), 1e-10)
        extra[f"{name}.nondegenerate"] = all(r.details["omega_on_conormal_image_min_sv"] > 1e-10 for r in reports)
        extra[f"{name}.all_pass"] = all(r.passed for r in reports)
    return _record(6, checks, extra)


def criterion_7():
    Q = _resonance()
    pts = box_samples(4, 100, seed=7)
    inv = verify_invariance(Q, pts, 1e-12)
    clo = verify_closure(Q, pts, 1e-10)
    red = build_reduced(Q, pts)
    master = pullback_identity_check(Q, pts, n_pairs=10, seed=7, tol=1e-10, structure=red)
    h = Q.ambient.chart.parse("(q1^2 + p1^2 + q2^2 + p2^2)/2 + 0.25*((q1^2 + p1^2 - q2^2 - p2^2)/2)^2")
    R = reduce_hamiltonian(Q, h, Q.reduced_chart.parse("s0 + 0.25*w3^2"), pts, structure=red)
    dyn = compare_dynamics(Q, R, [0.3, -0.5, 0.7, 0.2], T=10, dt=1e-3)
    return _record(7, {"invariance": (inv.worst_residual, 1e-12), "closure": (clo.worst_residual, 1e-10),
                       "master_identity": (master.worst_residual, 1e-10),
                       "compare_dynamics": (dyn.worst_residual, 1e-6)},
                   {"symbolic_closure": clo.details["symbolic_identity"] is True})


def criterion_8():
    osc = PoissonStructure.canonical(1)
    h = osc.chart.parse("(q^2 + p^2)/2")
    ret = integrate(osc, h, [1.0, 0.0], IntegratorConfig(dt=1e-3, T=2 * math.pi))
    period_err = float(np.abs(ret.final - [1.0, 0.0]).max())
    # frequency 4: the finest step stays above the roundoff floor
    h4 = osc.chart.parse("2*(q^2 + p^2)")
    dts = [4e-3, 2e-3, 1e-3, 5e-4]
    errs = [np.abs(integrate(osc, h4, [1.0, 0.0], IntegratorConfig(dt=dt, T=math.pi)).final - [1.0, 0.0]).max()
            for dt in dts]
    order = float(np.polyfit(np.log(dts), np.log(errs), 1)[0])
    so3 = PoissonStructure.so3()
    hr = so3.chart.parse("x1^2/2 + x2^2/4 + x3^2/6")
    cas = so3.chart.parse("x1^2 + x2^2 + x3^2")
    rb = integrate(so3, hr, [1.0, 0.01, 0.0], IntegratorConfig(dt=1e-3, T=100), tracked={"C": cas})
    drift = float(np.abs(rb.tracked["C"] - rb.tracked["C"][0]).max())
    bp1 = bracket_preservation_check(osc, h, [1.0, 0.0], 1.0)
    bp2 = bracket_preservation_check(so3, hr, [1.0, 0.01, 0.0], 1.0)
    return _record(8, {"period_return": (period_err, 1e-10), "rk4_order": (order, 3.8, ">="),
                       "casimir_drift": (drift, 1e-8), "bracket_pres.oscillator": (bp1.worst_residual, 1e-5),
                       "bracket_pres.rigid_body": (bp2.worst_residual, 1e-5)})


def criterion_9():
    D = _flat_dirac()
    h = D.structure.chart.parse("(q1^2 + p1^2)/2 + q2^2")
    traj = integrate_constrained(D, h, [1.0, 0.0, 0.0, 0.0], IntegratorConfig(method="projected-rk4", dt=1e-3, T=10))
    osc = PoissonStructure.canonical(1)
    plain = integrate(osc, osc.chart.parse("(q^2 + p^2)/2"), [1.0, 0.0], IntegratorConfig(dt=1e-3, T=10))
    dev = float(np.abs(traj.states[:, [0, 2]] - plain.states).max())
    return _record(9, {"max_constraint_residual": (float(traj.constraint_residuals.max()), 1e-12),
                       "oscillator_deviation": (dev, 1e-10)})


GOLDEN = [
    ("check", "so3.json", []),
    ("classify", "canonical4.json", ["--constraints", "second_class"]),
    ("dirac", "canonical4.json", ["--constraints", "second_class", "--pairs", "q1,p1"]),
    ("reduce", "resonance.json", []),
    ("flow", "harmonic.json", []),
]


def _cli(*argv):
    buf = StringIO()
    with redirect_stdout(buf):
        code = cli_main([str(a) for a in argv])
    return code, buf.getvalue()


def criterion_10():
    extra = {}
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        for command, fixture, flags in GOLDEN:
            runs = []
            for k in range(2):
                d = tmp / f"{command}{k}"
                d.mkdir()
                shutil.copy(FIXTURES / fixture, d / fixture)
                code, out = _cli(command, d / fixture, "--seed", "42", *flags)
                arts = {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != fixture}
                runs.append((code, out, arts))
            extra[f"{command}.identical"] = runs[0] == runs[1]
            extra[f"{command}.exit0"] = runs[0][0] == 0
        code, _ = _cli("check", tmp / "reduce0" / "resonance_reduced.json")
        extra["reduced_passes_check"] = code == 0
    return _record(10, {}, extra)


CRITERIA = {n: globals()[f"criterion_{n}"] for n in range(1, 11)}


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n):
    ok = CRITERIA[n]()
    assert ok, f"criterion {n}: {RESULTS[n][1]}"


def format_results() -> list[str]:
    return [f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}" for n, (ok, detail) in sorted(RESULTS.items())]


if __name__ == "__main__":
    for fn in CRITERIA.values():
        fn()
    print("\n".join(format_results()))
