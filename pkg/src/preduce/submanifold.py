"""Regular level sets S = F^{-1}(0) inside a Poisson chart.

Samples on S are found by Newton iteration with pseudo-inverse steps.  The
classification is pointwise at those samples and reports witnesses; a label
is evidence gathered at finitely many points.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .expr import Expression, compile_vector, differentiate
from .linalg import column_span, numerical_rank, null_space, smallest_singular_value, span_intersection
from .poisson import PoissonStructure, VectorFieldExpr, bracket, hamiltonian_vector_field, random_polynomial
from .report import Report, Worst

__all__ = [
    "ConstraintSet", "SurfaceSample", "Classification", "SamplingError", "RankDeficiencyError",
    "PreconditionError", "sample_surface", "make_sample", "constraint_matrix", "classify",
    "coisotropic_equivalences_test", "regular_reducibility_check", "conormal_hamiltonian_fields",
    "LABELS",
]

LABELS = ("poisson-submanifold", "coisotropic", "cosymplectic", "mixed")

NEWTON_MAX_ITER = 50
NEWTON_TOL = 1e-13
SURFACE_TOL = 1e-12
PERTURBATION = 0.3
REGULARITY_ATOL = 1e-6


class SamplingError(RuntimeError):
    def __init__(self, message: str, best_residual: float):
        self.best_residual = best_residual
        super().__init__(f"{message} (best residual {best_residual:.3e})")


class RankDeficiencyError(RuntimeError):
    def __init__(self, message: str, witness=None):
        self.witness = witness
        super().__init__(message)


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class SurfaceSample:
    point: np.ndarray
    tangent: np.ndarray  # n x (n-k), orthonormal columns
    conormal: np.ndarray  # k x n, rows dF^a(s)


class ConstraintSet:
    """Ordered constraint functions F^1..F^k on the chart of a Poisson structure."""

    def __init__(self, structure: PoissonStructure, constraints: Sequence[Expression | str],
                 seeds: Sequence[Sequence[float]] | None = None, name: str = "S"):
        chart = structure.chart
        exprs = [chart.parse(c) if isinstance(c, str) else c for c in constraints]
        if not exprs:
            raise ValueError("need at least one constraint")
        if len(exprs) > chart.dim:
            raise ValueError("more constraints than coordinates")
        for e in exprs:
            chart.check(e)
        self.structure = structure
        self.constraints: tuple[Expression, ...] = tuple(exprs)
        self.name = name
        self.seeds = [chart.point(s) for s in seeds] if seeds is not None and len(seeds) else [np.zeros(chart.dim)]
        n = chart.dim
        self._values = compile_vector(self.constraints, n)
        self._jac = compile_vector([differentiate(e, i) for e in self.constraints for i in range(n)], n)

    @property
    def k(self) -> int:
        return len(self.constraints)

    @property
    def n(self) -> int:
        return self.structure.dim

    def values(self, z) -> np.ndarray:
        return np.array(self._values(z))

    def jacobian(self, z) -> np.ndarray:
        return np.array(self._jac(z)).reshape(self.k, self.n)

    def is_regular(self, z, atol: float = REGULARITY_ATOL) -> bool:
        s = np.linalg.svd(self.jacobian(z), compute_uv=False)
        return bool(s[-1] > atol and s[-1] > 1e-10 * s[0])

    def project(self, z, *, max_iter: int = NEWTON_MAX_ITER, tol: float = NEWTON_TOL):
        """Newton iteration onto S; returns (point, max |F|, iterations)."""
        z = np.array(z, dtype=float)
        r = np.abs(self.values(z)).max()
        it = 0
        while r > tol and it < max_iter:
            step = np.linalg.lstsq(self.jacobian(z), self.values(z), rcond=None)[0]
            z = z - step
            r = np.abs(self.values(z)).max()
            it += 1
            if not np.isfinite(r):
                break
        return z, float(r), it

    def __repr__(self):
        return f"ConstraintSet({self.name!r}, {[str(c) for c in self.constraints]})"


def make_sample(C: ConstraintSet, z) -> SurfaceSample:
    z = np.asarray(z, dtype=float)
    jac = C.jacobian(z)
    if not C.is_regular(z):
        raise RankDeficiencyError(f"constraint Jacobian is rank deficient at {z.tolist()}",
                                  tuple(z.tolist()))
    tangent = null_space(jac)
    if tangent.shape[1] != C.n - C.k:
        raise RankDeficiencyError(f"tangent space has dimension {tangent.shape[1]}", tuple(z.tolist()))
    return SurfaceSample(z, tangent, jac)


def sample_surface(C: ConstraintSet, count: int, *, seed: int = 0,
                   perturbation: float = PERTURBATION, max_attempts: int | None = None) -> list[SurfaceSample]:
    """Points of S reached by Newton from randomly perturbed seeds."""
    rng = np.random.default_rng(seed)
    max_attempts = max_attempts or 10 * count + 10
    out: list[SurfaceSample] = []
    best = np.inf
    for attempt in range(max_attempts):
        if len(out) >= count:
            break
        base = C.seeds[attempt % len(C.seeds)]
        start = base + perturbation * rng.normal(size=C.n)
        try:
            z, r, _ = C.project(start)
        except (ArithmeticError, np.linalg.LinAlgError):
            continue
        best = min(best, r)
        if r <= SURFACE_TOL:
            out.append(make_sample(C, z))
    if not out:
        raise SamplingError(f"Newton did not converge onto {C.name} from any seed", best)
    return out


def constraint_matrix(C: ConstraintSet, s: SurfaceSample | np.ndarray) -> np.ndarray:
    """C^ij(s) = {F^i, F^j}(s)."""
    z = s.point if isinstance(s, SurfaceSample) else np.asarray(s, dtype=float)
    jac = C.jacobian(z)
    return jac @ C.structure(z) @ jac.T


def conormal_hamiltonian_fields(C: ConstraintSet) -> list[VectorFieldExpr]:
    """X_{F^a}; at points of S they span B#((TS)°)."""
    return [hamiltonian_vector_field(C.structure, f) for f in C.constraints]


@dataclass
class Classification:
    label: str
    samples: list[dict]
    warnings: list[str] = field(default_factory=list)
    decomposition: Report | None = None
    quasi_poisson: dict = field(default_factory=dict)

    @property
    def max_condition(self) -> float:
        return max((s["condition"] for s in self.samples), default=np.inf)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "samples": len(self.samples),
            "max_condition": float(self.max_condition),
            "warnings": list(self.warnings),
            "decomposition": None if self.decomposition is None else self.decomposition.to_dict(),
            "quasi_poisson": self.quasi_poisson,
        }


def _sample_evidence(C: ConstraintSet, s: SurfaceSample, tol: float) -> dict:
    n, k = C.n, C.k
    b = C.structure(s.point)
    bscale = max(1.0, float(np.linalg.norm(b, 2)))
    norms = np.linalg.norm(s.conormal, axis=1)
    nrm = s.conormal / norms[:, None]
    c = nrm @ b @ nrm.T
    sv = np.linalg.svd(c, compute_uv=False)
    c_rank = 0 if sv[0] <= tol * bscale else int(np.sum(sv > 1e-10 * sv[0]))
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    transversal = numerical_rank(np.hstack([s.tangent, column_span(b)]))
    return {
        "point": s.point.tolist(),
        "c_max": float(np.abs(c).max() / bscale),
        "c_rank": c_rank,
        "condition": cond,
        "transversal_rank": transversal,
        "leaf_residual": float(np.abs(b @ nrm.T).max() / bscale),
        "ambient_rank": numerical_rank(b),
    }


def _decomposition(C: ConstraintSet, samples: Sequence[SurfaceSample]) -> Report:
    """Pointwise rank statements that hold for cosymplectic S."""
    n, k = C.n, C.k
    min_sigma, witness = np.inf, None
    failures: list[str] = []
    for s in samples:
        b = C.structure(s.point)
        nrm = s.conormal / np.linalg.norm(s.conormal, axis=1)[:, None]
        image = b @ nrm.T  # B#(conormal)
        sigma = smallest_singular_value(image) / max(1.0, float(np.linalg.norm(b, 2)))
        if sigma < min_sigma:
            min_sigma, witness = sigma, tuple(s.point.tolist())
        checks = {
            "conormal_kernel_trivial": sigma > 1e-10,
            "whitney_sum_full_rank": numerical_rank(np.hstack([image, s.tangent])) == n,
            "leaves_transverse": numerical_rank(np.hstack([s.tangent, column_span(b)])) == n,
            "leaf_splitting": span_intersection(s.tangent, column_span(b)).shape[1] + k == numerical_rank(b),
        }
        failures += [f"{name} at {s.point.tolist()}" for name, ok in checks.items() if not ok]
    return Report("cosymplectic_decomposition", not failures, 0.0, witness,
                  {"samples": len(samples), "min_conormal_singular_value": float(min_sigma),
                   "failures": len(failures)}, failures[:5])


def classify(C: ConstraintSet, samples: Sequence[SurfaceSample], *, tol: float = 1e-10,
             cond_max: float = 1e8, n_functions: int = 4, seed: int = 0) -> Classification:
    if not samples:
        raise ValueError("classification needs at least one sample")
    n, k = C.n, C.k
    ev = [_sample_evidence(C, s, tol) for s in samples]
    warnings: list[str] = []
    if all(e["leaf_residual"] <= tol for e in ev):
        label = "poisson-submanifold"
    elif all(e["c_max"] <= tol for e in ev):
        label = "coisotropic"
    elif all(e["c_rank"] == k and e["condition"] <= cond_max and e["transversal_rank"] == n for e in ev):
        label = "cosymplectic"
    else:
        label = "mixed"
        if any(e["c_rank"] == k and e["condition"] > cond_max for e in ev):
            warnings.append(f"constraint bracket matrix condition number exceeds {cond_max:g}")
        if any(e["c_rank"] == k and e["transversal_rank"] < n for e in ev):
            warnings.append("symplectic leaves are not transverse to S at some samples")
    # quasi-Poisson surrogate: X_f(s) tangent to S for sampled f
    rng = np.random.default_rng(seed)
    tangent_all = True
    for _ in range(n_functions):
        f = random_polynomial(C.structure.chart, rng, 2)
        xf = compile_vector(hamiltonian_vector_field(C.structure, f).components, n)
        for s in samples:
            v = np.array(xf(s.point))
            nrm = s.conormal / np.linalg.norm(s.conormal, axis=1)[:, None]
            if np.abs(nrm @ v).max() > 1e-9 * max(1.0, np.abs(v).max()):
                tangent_all = False
    quasi = {"sampled_functions": n_functions, "all_fields_tangent": tangent_all,
             "note": "sampled surrogate; weaker than the all-local-functions definition"}
    if tangent_all and label != "poisson-submanifold":
        warnings.append("quasi-Poisson evidence without the Poisson-submanifold property")
    decomposition = _decomposition(C, samples) if label == "cosymplectic" else None
    return Classification(label, ev, warnings, decomposition, quasi)


def coisotropic_equivalences_test(C: ConstraintSet, samples: Sequence[SurfaceSample], *,
                                  n_functions: int = 4, seed: int = 0, tol: float = 1e-9) -> Report:
    """Independent routes to coisotropy: Hamiltonian fields of functions vanishing
    on S are tangent to S, and such functions are closed under the bracket."""
    cls = classify(C, samples)
    if cls.label not in ("coisotropic", "poisson-submanifold"):
        raise PreconditionError(f"{C.name} is {cls.label}, not coisotropic")
    P = C.structure
    rng = np.random.default_rng(seed)

    def vanishing():
        f = None
        for F in C.constraints:
            term = random_polynomial(P.chart, rng, 2) * F
            f = term if f is None else f + term
        return f

    fs = [vanishing() for _ in range(n_functions)]
    w_field, w_bracket = Worst(), Worst()
    fields = [compile_vector(hamiltonian_vector_field(P, f).components, P.dim) for f in fs]
    brackets = compile_vector([bracket(P, fs[a], fs[b]) for a in range(len(fs))
                               for b in range(a + 1, len(fs))], P.dim)
    for s in samples:
        nrm = s.conormal / np.linalg.norm(s.conormal, axis=1)[:, None]
        for fx in fields:
            w_field.update(np.abs(nrm @ np.array(fx(s.point))).max(), s.point)
        w_bracket.update(np.abs(np.array(brackets(s.point))).max(initial=0.0), s.point)
    ok_field = w_field.value <= tol
    ok_bracket = w_bracket.value <= tol
    worst = max(w_field.value, w_bracket.value)
    return Report("coisotropic_equivalences", ok_field and ok_bracket, worst,
                  w_field.witness if w_field.value >= w_bracket.value else w_bracket.witness,
                  {"vanishing_fields_tangent": ok_field, "field_residual": w_field.value,
                   "vanishing_ideal_closed": ok_bracket, "bracket_residual": w_bracket.value,
                   "agrees_with_classification": ok_field and ok_bracket})


def regular_reducibility_check(P: PoissonStructure, C: ConstraintSet, D_basis: Sequence[VectorFieldExpr],
                               samples: Sequence[SurfaceSample], *, tol: float = 1e-9) -> Report:
    """Pointwise test of B#(D°) ⊂ TS + D."""
    fields = [compile_vector(X.components, P.dim) for X in D_basis]
    worst = Worst()
    ranks = []
    for s in samples:
        d = np.array([f(s.point) for f in fields]).reshape(len(fields), P.dim).T
        ranks.append(numerical_rank(d) if len(fields) else 0)
        ann = null_space(d.T) if len(fields) else np.eye(P.dim)
        image = P(s.point) @ ann
        q = column_span(np.hstack([s.tangent, d]))
        resid = image - q @ (q.T @ image)
        scale = max(1.0, float(np.abs(image).max(initial=0.0)))
        worst.update(float(np.abs(resid).max(initial=0.0)) / scale, s.point)
    notes = []
    if len(set(ranks)) > 1:
        notes.append(f"distribution rank jumps across samples: {sorted(set(ranks))}")
    return Report("regular_reducibility", worst.value <= tol, worst.value, worst.witness,
                  {"distribution_ranks": sorted(set(ranks))}, notes)
