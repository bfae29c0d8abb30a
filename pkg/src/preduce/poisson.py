"""Poisson structures on a coordinate chart.

Sign convention: the tensor matrix is ``B[i][j] = {x_i, x_j}`` and the
Hamiltonian vector field of ``h`` has components ``X_h^i = sum_j B[i][j] dh/dx_j``,
so that ``X_h[f] = {f, h}``.  For canonical coordinates (q, p) this gives
``dq/dt = dh/dp`` and ``dp/dt = -dh/dq``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import qmc

from .expr import (
    ONE, ZERO, Chart, ChartMismatchError, EvaluationError, Expression, compile_vector,
    differentiate, gradient, is_zero, simplify, substitute, to_polynomial,
)
from .linalg import RANK_RTOL, null_space, numerical_rank
from .report import Report, Worst

__all__ = [
    "PoissonStructure", "VectorFieldExpr", "SmoothMap", "NotPoissonError",
    "bracket", "hamiltonian_vector_field", "jacobi_residual", "is_casimir",
    "characteristic_rank", "check_poisson_map", "check_canonical_action",
    "check_poisson_distribution", "box_samples", "random_polynomial", "monomials",
]

DEFAULT_BOX = (-2.0, 2.0)


class NotPoissonError(ValueError):
    def __init__(self, message: str, witness=None):
        self.witness = witness
        super().__init__(message)


def box_samples(dim: int, count: int, box=DEFAULT_BOX, seed: int = 0) -> np.ndarray:
    """Seeded uniform points in ``[lo, hi]^dim`` (rows)."""
    rng = np.random.default_rng(seed)
    lo, hi = box
    return rng.uniform(lo, hi, size=(count, dim))


def _halton(dim: int, count: int, box) -> np.ndarray:
    lo, hi = box
    pts = qmc.Halton(d=dim, scramble=False).random(count + 1)[1:]
    return lo + (hi - lo) * pts


def monomials(chart: Chart, degree: int, include_constant: bool = False) -> list[Expression]:
    out = [ONE] if include_constant else []
    xs = chart.coordinates()
    for d in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(chart.dim), d):
            term = xs[combo[0]]
            for i in combo[1:]:
                term = term * xs[i]
            out.append(term)
    return out


def random_polynomial(chart: Chart, rng: np.random.Generator, degree: int = 2,
                      include_constant: bool = True) -> Expression:
    """Polynomial with standard normal coefficients, rounded to 3 decimals."""
    terms = monomials(chart, degree, include_constant)
    coeffs = np.round(rng.normal(size=len(terms)), 3)
    e: Expression = ZERO
    for c, m in zip(coeffs, terms):
        if c != 0.0:
            e = e + float(c) * m
    return e


@dataclass(frozen=True)
class VectorFieldExpr:
    chart: Chart
    components: tuple[Expression, ...]

    def __post_init__(self):
        if len(self.components) != self.chart.dim:
            raise ValueError("vector field needs one component per coordinate")

    def __call__(self, z) -> np.ndarray:
        return np.array(compile_vector(self.components, self.chart.dim)(z))

    def apply(self, f: Expression) -> Expression:
        """Directional derivative X[f] as an expression."""
        self.chart.check(f)
        out: Expression = ZERO
        for i, c in enumerate(self.components):
            if not c.is_const(0.0):
                d = differentiate(f, i)
                if not d.is_const(0.0):
                    out = out + c * d
        return simplify(out)


@dataclass(frozen=True)
class SmoothMap:
    """Map from ``source`` to ``target`` given by one expression per target coordinate."""

    source: Chart
    target: Chart
    components: tuple[Expression, ...]

    def __post_init__(self):
        if len(self.components) != self.target.dim:
            raise ValueError("need one component per target coordinate")
        for c in self.components:
            self.source.check(c)

    @classmethod
    def identity(cls, chart: Chart) -> "SmoothMap":
        return cls(chart, chart, tuple(chart.coordinates()))

    def __call__(self, z) -> np.ndarray:
        return np.array(compile_vector(self.components, self.source.dim)(z))

    def pullback(self, g: Expression) -> Expression:
        """g∘φ as an expression over the source chart."""
        self.target.check(g)
        return simplify(substitute(g, dict(enumerate(self.components))))

    def jacobian(self, z) -> np.ndarray:
        exprs = [differentiate(c, i) for c in self.components for i in range(self.source.dim)]
        vals = compile_vector(exprs, self.source.dim)(z)
        return np.array(vals).reshape(self.target.dim, self.source.dim)


class PoissonStructure:
    """Antisymmetric matrix of expressions satisfying the Jacobi identity.

    The constructor checks antisymmetry symbolically and the Jacobi identity
    numerically at quasi-random points of ``box``; polynomial tensors of degree
    at most 4 also get a symbolic Jacobi check (``jacobi_proven``).
    """

    def __init__(self, chart: Chart, matrix: Sequence[Sequence[Expression | str | float]], *,
                 validate: bool = True, box=DEFAULT_BOX, n_validation: int = 50,
                 validation_points: np.ndarray | None = None,
                 rank_rtol: float = RANK_RTOL, jacobi_tol: float = 1e-9):
        n = chart.dim
        rows = []
        if len(matrix) != n or any(len(r) != n for r in matrix):
            raise ValueError(f"tensor must be {n}x{n}")
        for r in matrix:
            row = []
            for v in r:
                if isinstance(v, str):
                    v = chart.parse(v)
                elif not isinstance(v, Expression):
                    v = ONE * float(v)
                chart.check(v)
                row.append(v)
            rows.append(tuple(row))
        self.chart = chart
        self.matrix: tuple[tuple[Expression, ...], ...] = tuple(rows)
        self.box = tuple(box)
        self.rank_rtol = rank_rtol
        self.jacobi_tol = jacobi_tol
        self._flat = compile_vector([e for r in rows for e in r], n)
        self._dflat = None
        self.jacobi_proven: bool | None = None
        if validate:
            self.validate(n_validation, validation_points)

    # -- construction helpers
    @classmethod
    def from_upper(cls, chart: Chart, entries: Mapping[tuple, Expression | str | float], **kw):
        """Build from upper-triangle entries keyed by (name_i, name_j) or indices."""
        n = chart.dim
        m: list[list[Expression]] = [[ZERO] * n for _ in range(n)]
        for (a, b), v in entries.items():
            i = chart.index(a) if isinstance(a, str) else int(a)
            j = chart.index(b) if isinstance(b, str) else int(b)
            if i >= j:
                raise ValueError(f"entry ({a}, {b}) is not above the diagonal")
            e = chart.parse(v) if isinstance(v, str) else (v if isinstance(v, Expression) else ONE * float(v))
            m[i][j] = e
            m[j][i] = simplify(-e)
        return cls(chart, m, **kw)

    @classmethod
    def canonical(cls, dof: int, q: str = "q", p: str = "p", **kw) -> "PoissonStructure":
        """Canonical structure on (q1..qn, p1..pn) with {qi, pi} = 1."""
        if dof == 1:
            names = [q, p]
        else:
            names = [f"{q}{i + 1}" for i in range(dof)] + [f"{p}{i + 1}" for i in range(dof)]
        return cls.from_upper(Chart(names), {(i, i + dof): 1.0 for i in range(dof)}, **kw)

    @classmethod
    def so3(cls, names=("x1", "x2", "x3"), **kw) -> "PoissonStructure":
        """Lie-Poisson structure {x_i, x_j} = -eps_ijk x_k."""
        c = Chart(names)
        x = c.coordinates()
        return cls.from_upper(c, {(0, 1): -x[2], (0, 2): x[1], (1, 2): -x[0]}, **kw)

    @classmethod
    def trivial(cls, chart: Chart, **kw) -> "PoissonStructure":
        return cls.from_upper(chart, {}, **kw)

    @classmethod
    def product(cls, first: "PoissonStructure", second: "PoissonStructure", **kw) -> "PoissonStructure":
        chart = Chart(first.chart.names + second.chart.names)
        shift = {i: chart.var(first.dim + i) for i in range(second.dim)}
        n = chart.dim
        m = [[ZERO] * n for _ in range(n)]
        for i in range(first.dim):
            for j in range(first.dim):
                m[i][j] = substitute(first.matrix[i][j], {k: chart.var(k) for k in range(first.dim)})
        for i in range(second.dim):
            for j in range(second.dim):
                m[first.dim + i][first.dim + j] = substitute(second.matrix[i][j], shift)
        return cls(chart, m, **kw)

    @property
    def dim(self) -> int:
        return self.chart.dim

    def entry(self, i: int, j: int) -> Expression:
        return self.matrix[i][j]

    def __call__(self, z) -> np.ndarray:
        """Numeric tensor matrix B(z)."""
        return np.array(self._flat(z)).reshape(self.dim, self.dim)

    matrix_at = __call__

    def upper_entries(self) -> dict[tuple[str, str], Expression]:
        out = {}
        for i in range(self.dim):
            for j in range(i + 1, self.dim):
                if not self.matrix[i][j].is_const(0.0):
                    out[(self.chart.names[i], self.chart.names[j])] = self.matrix[i][j]
        return out

    # -- checks
    def antisymmetry_defects(self) -> list[tuple[int, int]]:
        bad = []
        for i in range(self.dim):
            for j in range(i, self.dim):
                if not is_zero(self.matrix[i][j] + self.matrix[j][i]):
                    bad.append((i, j))
        return bad

    def _derivatives(self):
        if self._dflat is None:
            n = self.dim
            exprs = [differentiate(self.matrix[j][k], l)
                     for j in range(n) for k in range(n) for l in range(n)]
            self._dflat = compile_vector(exprs, n)
        return self._dflat

    def jacobi_tensor(self, z) -> np.ndarray:
        """Cyclic sum J[i,j,k] = sum_l B^il d_l B^jk + B^jl d_l B^ki + B^kl d_l B^ij."""
        n = self.dim
        b = self(z)
        d = np.array(self._derivatives()(z)).reshape(n, n, n)
        t = np.einsum("il,jkl->ijk", b, d)
        return t + np.einsum("jki->ijk", t) + np.einsum("kij->ijk", t)

    def jacobi_scale(self, z) -> float:
        n = self.dim
        b = np.abs(self(z)).max(initial=0.0)
        d = np.abs(np.array(self._derivatives()(z))).max(initial=0.0)
        return 1.0 + 3.0 * n * b * d

    def jacobi_symbolic(self) -> bool | None:
        """Exact Jacobi check for polynomial tensors of degree <= 4, else None."""
        for row in self.matrix:
            for e in row:
                poly = to_polynomial(e)
                if poly is None or any(sum(k for _, k in m) > 4 for m in poly):
                    return None
        n = self.dim
        xs = self.chart.coordinates()
        for i, j, k in itertools.combinations(range(n), 3):
            total = (bracket(self, xs[i], self.matrix[j][k])
                     + bracket(self, xs[j], self.matrix[k][i])
                     + bracket(self, xs[k], self.matrix[i][j]))
            if not is_zero(total):
                return False
        return True

    def validate(self, n_points: int = 50, points: np.ndarray | None = None) -> None:
        bad = self.antisymmetry_defects()
        if bad:
            i, j = bad[0]
            raise NotPoissonError(
                f"tensor is not antisymmetric: B[{self.chart.names[i]}][{self.chart.names[j]}]")
        if points is None:
            points = _halton(self.dim, n_points, self.box)
        checked = 0
        for z in points:
            try:
                r = float(np.abs(self.jacobi_tensor(z)).max(initial=0.0))
                scale = self.jacobi_scale(z)
            except EvaluationError:
                continue
            checked += 1
            if not r <= self.jacobi_tol * scale:
                raise NotPoissonError(f"Jacobi identity fails: residual {r:.3e}",
                                      tuple(float(x) for x in z))
        if checked == 0 and len(points):
            raise NotPoissonError("tensor could not be evaluated at any validation point")
        self.jacobi_proven = self.jacobi_symbolic()
        if self.jacobi_proven is False:
            raise NotPoissonError("Jacobi identity fails symbolically")

    def __repr__(self):
        return f"PoissonStructure({self.chart.names}, {self.upper_entries()})"


# ----------------------------------------------------------------------- operations

def _check(chart: Chart, *exprs: Expression) -> None:
    for e in exprs:
        chart.check(e)


def bracket(P: PoissonStructure, f: Expression, g: Expression) -> Expression:
    """{f, g} = sum_ij B^ij d_i f d_j g, simplified."""
    _check(P.chart, f, g)
    df = gradient(f, P.chart)
    dg = gradient(g, P.chart)
    out: Expression = ZERO
    for i, dfi in enumerate(df):
        if dfi.is_const(0.0):
            continue
        for j, dgj in enumerate(dg):
            bij = P.matrix[i][j]
            if dgj.is_const(0.0) or bij.is_const(0.0):
                continue
            out = out + bij * dfi * dgj
    return simplify(out)


def hamiltonian_vector_field(P: PoissonStructure, h: Expression) -> VectorFieldExpr:
    _check(P.chart, h)
    dh = gradient(h, P.chart)
    comps = []
    for i in range(P.dim):
        c: Expression = ZERO
        for j, dhj in enumerate(dh):
            bij = P.matrix[i][j]
            if not (bij.is_const(0.0) or dhj.is_const(0.0)):
                c = c + bij * dhj
        comps.append(simplify(c))
    return VectorFieldExpr(P.chart, tuple(comps))


def jacobi_residual(P: PoissonStructure, z) -> float:
    z = P.chart.point(z)
    return float(np.abs(P.jacobi_tensor(z)).max(initial=0.0))


def characteristic_rank(P: PoissonStructure, z, rtol: float | None = None) -> int:
    z = P.chart.point(z)
    return numerical_rank(P(z), P.rank_rtol if rtol is None else rtol)


def is_casimir(P: PoissonStructure, f: Expression, samples, tol: float = 1e-10) -> Report:
    """f is Casimir iff every {x_i, f} vanishes at every sample."""
    field = hamiltonian_vector_field(P, f)
    fn = compile_vector(field.components, P.dim)
    worst = Worst()
    for z in np.atleast_2d(samples):
        worst.update(np.abs(fn(z)).max(initial=0.0), z)
    return Report("casimir", worst.value <= tol, worst.value, worst.witness,
                  {"function": str(f), "tolerance": tol})


def _test_functions(chart: Chart, rng: np.random.Generator, n_random: int) -> list[Expression]:
    fs = list(chart.coordinates())
    fs += [random_polynomial(chart, rng, 2, include_constant=False) for _ in range(n_random)]
    return fs


def check_poisson_map(phi: SmoothMap, P1: PoissonStructure, P2: PoissonStructure, samples, *,
                      tol: float = 1e-10, n_random: int = 3, seed: int = 0) -> Report:
    """Pullback test φ*{g,h}_2 = {φ*g, φ*h}_1 plus the field relation Tφ X_{h∘φ} = X_h∘φ."""
    if phi.source != P1.chart or phi.target != P2.chart:
        raise ChartMismatchError("map charts do not match the Poisson structures")
    rng = np.random.default_rng(seed)
    tests = _test_functions(P2.chart, rng, n_random)
    pulled = [phi.pullback(g) for g in tests]
    pairs = list(itertools.combinations(range(len(tests)), 2))
    lhs = compile_vector([bracket(P2, tests[a], tests[b]) for a, b in pairs], P2.dim)
    rhs = compile_vector([bracket(P1, pulled[a], pulled[b]) for a, b in pairs], P1.dim)
    fields1 = [compile_vector(hamiltonian_vector_field(P1, g).components, P1.dim) for g in pulled]
    fields2 = [compile_vector(hamiltonian_vector_field(P2, g).components, P2.dim) for g in tests]
    wb, wf = Worst(), Worst()
    for z in np.atleast_2d(samples):
        w = phi(z)
        a = np.array(lhs(w))
        b = np.array(rhs(z))
        wb.update(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a)), initial=0.0), z)
        jac = phi.jacobian(z)
        for f1, f2 in zip(fields1, fields2):
            x1 = jac @ np.array(f1(z))
            x2 = np.array(f2(w))
            wf.update(np.max(np.abs(x1 - x2) / np.maximum(1.0, np.abs(x2)), initial=0.0), z)
    worst = max(wb.value, wf.value)
    witness = wb.witness if wb.value >= wf.value else wf.witness
    return Report("poisson_map", worst <= tol, worst, witness,
                  {"bracket_residual": wb.value, "field_residual": wf.value,
                   "test_functions": [str(g) for g in tests], "tolerance": tol})


def check_canonical_action(maps: Sequence[SmoothMap], P: PoissonStructure, samples, **kw) -> Report:
    reports = [check_poisson_map(m, P, P, samples, **kw) for m in maps]
    worst = max(reports, key=lambda r: r.worst_residual)
    failed = [k for k, r in enumerate(reports) if not r.passed]
    return Report("canonical_action", not failed, worst.worst_residual, worst.witness,
                  {"maps": len(reports), "failed_maps": failed})


def check_poisson_distribution(P: PoissonStructure, spanning_fields: Sequence[VectorFieldExpr],
                               samples, *, degree: int = 2, n_pairs: int = 5, seed: int = 0,
                               tol: float = 1e-8) -> Report:
    """Sampled evidence that a distribution is Poisson.

    Polynomials of the given degree whose differentials annihilate the span at
    every sample are found by solving the linear conditions on their
    coefficients; for random pairs (f, g) of them, d{f,g} must annihilate the
    span too.  A pass means "consistent", not proven.
    """
    samples = np.atleast_2d(samples)
    basis = monomials(P.chart, degree)
    grads = compile_vector([d for m in basis for d in gradient(m, P.chart)], P.dim)
    fields = [compile_vector(X.components, P.dim) for X in spanning_fields]
    rows, ranks = [], []
    for z in samples:
        g = np.array(grads(z)).reshape(len(basis), P.dim)
        xs = np.array([f(z) for f in fields]).reshape(len(fields), P.dim)
        ranks.append(numerical_rank(xs) if len(fields) else 0)
        rows.extend(xs @ g.T)
    details = {"span_ranks": sorted(set(ranks)), "rank_varies": len(set(ranks)) > 1}
    notes = ["sampled certificate: consistent with a Poisson distribution, not a proof"]
    if details["rank_varies"]:
        notes.append("span rank varies across samples")
    coeff_space = null_space(np.array(rows)) if rows else np.eye(len(basis))
    details["annihilating_functions"] = coeff_space.shape[1]
    if coeff_space.shape[1] == 0:
        notes.append("only constants annihilate the span; check is vacuous")
        return Report("poisson_distribution", True, 0.0, None, details, notes)
    rng = np.random.default_rng(seed)

    def combo(c):
        e: Expression = ZERO
        for a, m in zip(c, basis):
            if abs(a) > 1e-14:
                e = e + float(a) * m
        return e

    worst = Worst()
    for _ in range(n_pairs):
        f = combo(coeff_space @ rng.normal(size=coeff_space.shape[1]))
        g = combo(coeff_space @ rng.normal(size=coeff_space.shape[1]))
        dfg = compile_vector(gradient(bracket(P, f, g), P.chart), P.dim)
        for z in samples:
            d = np.array(dfg(z))
            for fx in fields:
                worst.update(abs(float(d @ np.array(fx(z)))), z)
    return Report("poisson_distribution", worst.value <= tol, worst.value, worst.witness,
                  details, notes)
