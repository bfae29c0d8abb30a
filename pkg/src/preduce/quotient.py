"""Reduction of canonical group actions through invariant generators.

The quotient M/G is represented by the image of the invariant map
p = (p_1..p_m): M -> R^m.  The reduced bracket is given on a chart y_1..y_m by
closure relations {p_a, p_b} = L_ab(p), so that for functions f, g of y

    {f, g}_red(p(z)) = {f∘p, g∘p}(z).

Group actions are finite families of maps; a one-parameter group is sampled at
a handful of parameter values.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .expr import ZERO, Chart, Expression, compile_vector, simplify, substitute, to_polynomial
from .flows import IntegratorConfig, integrate
from .poisson import (
    PoissonStructure, SmoothMap, box_samples, bracket, jacobi_residual, random_polynomial,
)
from .report import Report, Worst

__all__ = [
    "QuotientSpec", "ReducedSystem", "QuotientError", "ClosureError", "DescentError",
    "action_family", "verify_invariance", "verify_closure", "build_reduced", "reduce_hamiltonian",
    "pullback_identity_check", "casimir_descent_check", "compare_dynamics", "default_samples",
]

N_ANGLES = 8


class QuotientError(ValueError):
    def __init__(self, message: str, witness=None):
        self.witness = witness
        super().__init__(message)


class ClosureError(QuotientError):
    pass


class DescentError(QuotientError):
    pass


def action_family(chart: Chart, components: Sequence[str | Expression], parameter: str = "t",
                  values: Sequence[float] | None = None) -> list[SmoothMap]:
    """Maps z -> Phi_t(z) for each sampled t (default: 8 equispaced angles in [0, 2pi))."""
    if values is None:
        values = [2 * math.pi * k / N_ANGLES for k in range(N_ANGLES)]
    ext = Chart(chart.names + (parameter,))
    exprs = [ext.parse(c) if isinstance(c, str) else c for c in components]
    maps = []
    for t in values:
        sub = {chart.dim: ZERO + float(t)}
        maps.append(SmoothMap(chart, chart, tuple(simplify(substitute(e, sub)) for e in exprs)))
    return maps


@dataclass(frozen=True)
class QuotientSpec:
    ambient: PoissonStructure
    actions: tuple[SmoothMap, ...]
    generators: tuple[Expression, ...]
    reduced_chart: Chart
    closure: Mapping[tuple[int, int], Expression]  # upper triangle, a < b, over reduced_chart
    relations: tuple[Expression, ...] = ()

    def __post_init__(self):
        if len(self.generators) != self.reduced_chart.dim:
            raise ValueError("need one reduced coordinate per generator")
        for g in self.generators:
            self.ambient.chart.check(g)
        for (a, b), e in self.closure.items():
            if not a < b:
                raise ValueError(f"closure entry ({a}, {b}) is not above the diagonal")
            self.reduced_chart.check(e)
        for r in self.relations:
            self.reduced_chart.check(r)

    @classmethod
    def from_strings(cls, ambient: PoissonStructure, actions: Sequence[SmoothMap],
                     generators: Mapping[str, str], closure: Mapping[tuple[str, str], str],
                     relations: Sequence[str] = ()) -> "QuotientSpec":
        """Generators keyed by reduced coordinate name; closure keyed by name pairs."""
        red = Chart(tuple(generators))
        gens = tuple(ambient.chart.parse(v) for v in generators.values())
        lam = {}
        for (a, b), v in closure.items():
            i, j = red.index(a), red.index(b)
            e = red.parse(v)
            if i > j:
                i, j, e = j, i, simplify(-e)
            lam[(i, j)] = e
        return cls(ambient, tuple(actions), gens, red, lam, tuple(red.parse(r) for r in relations))

    @property
    def m(self) -> int:
        return self.reduced_chart.dim

    def closure_matrix(self) -> list[list[Expression]]:
        m = self.m
        out = [[ZERO] * m for _ in range(m)]
        for (a, b), e in self.closure.items():
            out[a][b] = e
            out[b][a] = simplify(-e)
        return out

    def invariant_map(self) -> SmoothMap:
        return SmoothMap(self.ambient.chart, self.reduced_chart, self.generators)

    def image(self, samples) -> np.ndarray:
        fn = compile_vector(self.generators, self.ambient.dim)
        return np.array([fn(z) for z in np.atleast_2d(samples)])

    def lift(self, f: Expression) -> Expression:
        """f∘p over the ambient chart."""
        return self.invariant_map().pullback(f)


@dataclass(frozen=True)
class ReducedSystem:
    structure: PoissonStructure
    hamiltonian: Expression
    ambient_hamiltonian: Expression
    spec: QuotientSpec
    descent_residual: float = 0.0
    reports: dict = field(default_factory=dict)


def default_samples(Q: QuotientSpec, count: int = 100, seed: int = 0) -> np.ndarray:
    return box_samples(Q.ambient.dim, count, Q.ambient.box, seed)


def verify_invariance(Q: QuotientSpec, samples, tol: float = 1e-10) -> Report:
    """max |p_a(Phi(z)) - p_a(z)| over generators, maps and samples."""
    fn = compile_vector(Q.generators, Q.ambient.dim)
    worst = Worst()
    worst_gen = worst_map = None
    for k, phi in enumerate(Q.actions):
        for z in np.atleast_2d(samples):
            d = np.abs(np.array(fn(phi(z))) - np.array(fn(z)))
            a = int(np.argmax(d)) if d.size else 0
            before = worst.witness
            worst.update(d.max(initial=0.0), z)
            if worst.witness is not before:
                worst_gen, worst_map = a, k
    details = {"maps": len(Q.actions), "generators": len(Q.generators), "tolerance": tol}
    if worst_gen is not None:
        details["worst_generator"] = Q.reduced_chart.names[worst_gen]
        details["worst_map"] = worst_map
    return Report("invariance", worst.value <= tol, worst.value, worst.witness, details)


def _reduced_structure(Q: QuotientSpec, **kw) -> PoissonStructure:
    return PoissonStructure(Q.reduced_chart, Q.closure_matrix(), **kw)


def verify_closure(Q: QuotientSpec, samples, tol: float = 1e-10) -> Report:
    """{p_a, p_b}(z) = L_ab(p(z)) at samples, reduced Jacobi at image points,
    and a polynomial normal-form identity when everything is polynomial."""
    P, m = Q.ambient, Q.m
    lam = Q.closure_matrix()
    pairs = list(itertools.combinations(range(m), 2))
    brackets = [bracket(P, Q.generators[a], Q.generators[b]) for a, b in pairs]
    lhs = compile_vector(brackets, P.dim)
    rhs = compile_vector([lam[a][b] for a, b in pairs], m)
    gen = compile_vector(Q.generators, P.dim)
    worst = Worst()
    worst_pair = None
    for z in np.atleast_2d(samples):
        d = np.abs(np.array(lhs(z)) - np.array(rhs(gen(z))))
        if d.size:
            before = worst.witness
            worst.update(d.max(), z)
            if worst.witness is not before:
                worst_pair = pairs[int(np.argmax(d))]
    red = _reduced_structure(Q, validate=False)
    jac = Worst()
    for y in Q.image(samples):
        jac.update(jacobi_residual(red, y), y)

    symbolic = True
    for (a, b), br in zip(pairs, brackets):
        diff = to_polynomial(simplify(br - substitute(lam[a][b], dict(enumerate(Q.generators)))))
        if diff is None:
            symbolic = None
            break
        if any(abs(c) > 1e-12 for c in diff.values()):
            symbolic = False
            worst_pair = worst_pair or (a, b)
            break
    names = Q.reduced_chart.names
    passed = worst.value <= tol and jac.value <= tol and symbolic is not False
    details = {"closure_residual": worst.value, "reduced_jacobi_residual": jac.value,
               "reduced_jacobi_witness": jac.witness, "symbolic_identity": symbolic, "tolerance": tol}
    if worst_pair is not None:
        details["worst_pair"] = [names[worst_pair[0]], names[worst_pair[1]]]
    return Report("closure", passed, max(worst.value, jac.value), worst.witness, details)


def build_reduced(Q: QuotientSpec, samples=None, *, tol: float = 1e-10, seed: int = 0) -> PoissonStructure:
    """Reduced Poisson structure B_red = L, Jacobi-validated at image points only."""
    samples = default_samples(Q, seed=seed) if samples is None else np.atleast_2d(samples)
    inv = verify_invariance(Q, samples, tol)
    if not inv:
        raise QuotientError(f"generators are not invariant (residual {inv.worst_residual:.3e})", inv.witness)
    clo = verify_closure(Q, samples, tol)
    if not clo:
        raise ClosureError(f"closure fails for pair {clo.details.get('worst_pair')} "
                           f"(residual {clo.worst_residual:.3e})", clo.witness)
    return _reduced_structure(Q, validation_points=Q.image(samples), box=Q.ambient.box)


def reduce_hamiltonian(Q: QuotientSpec, h: Expression, h_red: Expression, samples=None, *,
                       tol: float = 1e-10, seed: int = 0,
                       structure: PoissonStructure | None = None) -> ReducedSystem:
    """Check [h]∘p = h at samples and bundle the reduced system."""
    samples = default_samples(Q, seed=seed) if samples is None else np.atleast_2d(samples)
    P = Q.ambient
    P.chart.check(h)
    Q.reduced_chart.check(h_red)
    red = structure if structure is not None else build_reduced(Q, samples, tol=tol)
    hf = compile_vector([h], P.dim)
    hr = compile_vector([h_red], Q.m)
    gen = compile_vector(Q.generators, P.dim)
    worst = Worst()
    for z in samples:
        worst.update(abs(hf(z)[0] - hr(gen(z))[0]), z)
    if not worst.value <= tol:
        raise DescentError(f"h does not descend: |[h](p(z)) - h(z)| = {worst.value:.3e}", worst.witness)
    return ReducedSystem(red, h_red, h, Q, worst.value)


def pullback_identity_check(Q: QuotientSpec, samples, *, n_pairs: int = 10, degree: int = 2,
                            seed: int = 0, tol: float = 1e-10,
                            structure: PoissonStructure | None = None) -> Report:
    """{f, g}_red(p(z)) = {f∘p, g∘p}(z) for random polynomial pairs over the reduced chart.

    Residuals are relative to max(1, |value|).
    """
    red = structure if structure is not None else _reduced_structure(Q, validate=False)
    rng = np.random.default_rng(seed)
    pairs = [(random_polynomial(Q.reduced_chart, rng, degree), random_polynomial(Q.reduced_chart, rng, degree))
             for _ in range(n_pairs)]
    lhs = compile_vector([bracket(red, f, g) for f, g in pairs], Q.m)
    rhs = compile_vector([bracket(Q.ambient, Q.lift(f), Q.lift(g)) for f, g in pairs], Q.ambient.dim)
    gen = compile_vector(Q.generators, Q.ambient.dim)
    worst = Worst()
    for z in np.atleast_2d(samples):
        a = np.array(lhs(gen(z)))
        b = np.array(rhs(z))
        worst.update(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b)), initial=0.0), z)
    return Report("pullback_identity", worst.value <= tol, worst.value, worst.witness,
                  {"pairs": [[str(f), str(g)] for f, g in pairs], "tolerance": tol})


def casimir_descent_check(Q: QuotientSpec, c: Expression, samples, *, n_random: int = 5,
                          seed: int = 0, tol: float = 1e-10) -> Report:
    """c∘p commutes with the lifts of random reduced functions."""
    rng = np.random.default_rng(seed)
    cl = Q.lift(c)
    tests = [Q.lift(random_polynomial(Q.reduced_chart, rng, 2)) for _ in range(n_random)]
    fn = compile_vector([bracket(Q.ambient, cl, g) for g in tests], Q.ambient.dim)
    worst = Worst()
    for z in np.atleast_2d(samples):
        worst.update(np.abs(fn(z)).max(initial=0.0), z)
    return Report("casimir_descent", worst.value <= tol, worst.value, worst.witness,
                  {"casimir": str(c), "tolerance": tol})


def compare_dynamics(Q: QuotientSpec, R: ReducedSystem, z0, T: float = 10.0, dt: float = 1e-3,
                     tol: float = 1e-6) -> Report:
    """sup_t |p(ambient flow) - reduced flow| (Euclidean norm on the reduced chart)."""
    z0 = Q.ambient.chart.point(z0)
    cfg = IntegratorConfig(dt=dt, T=T)
    full = integrate(Q.ambient, R.ambient_hamiltonian, z0, cfg)
    y0 = Q.image(z0)[0]
    red = integrate(R.structure, R.hamiltonian, y0, cfg)
    dev = np.linalg.norm(Q.image(full.states) - red.states, axis=1)
    k = int(np.argmax(dev))
    return Report("compare_dynamics", float(dev[k]) <= tol, float(dev[k]), tuple(z0.tolist()),
                  {"T": T, "dt": cfg.step, "time_of_worst": float(full.t[k]), "tolerance": tol})
