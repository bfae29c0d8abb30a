"""Dirac brackets on cosymplectic level sets (second-class constraints).

For constraints psi^1..psi^k with invertible bracket matrix C^ij = {psi^i, psi^j}
and C_ij the entries of its inverse, arbitrary extensions F, G of functions
on S give

    {f, g}_S(s) = {F, G}(s) - sum_ij {F, psi^i}(s) C_ij(s) {psi^j, G}(s)
    X_f(s)      = X_F(s)    - sum_ij {F, psi^i}(s) C_ij(s) X_{psi^j}(s)

Pointwise values use an LU solve with C(s).  ``dirac_bracket_expr`` builds the
same formula symbolically through adj(C)/det(C), capped at k <= 4.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .expr import ONE, ZERO, Expression, compile_vector, gradient, simplify
from .linalg import column_span, numerical_rank, span_intersection
from .poisson import PoissonStructure, bracket
from .report import Report
from .submanifold import (
    Classification, ConstraintSet, PreconditionError, SurfaceSample, classify, make_sample,
    sample_surface,
)

__all__ = [
    "DiracContext", "ProjectedTensor", "SingularConstraintError", "NotCosymplecticError",
    "dirac_bracket_value", "dirac_bracket_expr", "dirac_vector_field", "projection_pi_S",
    "reduced_tensor", "leaf_orthogonality_check", "reduced_leaf_dimension", "SYMBOLIC_MAX_K",
]

SYMBOLIC_MAX_K = 4
DET_TOL = 1e-12


class SingularConstraintError(ArithmeticError):
    def __init__(self, message: str, witness=None):
        self.witness = witness
        super().__init__(message)


class NotCosymplecticError(PreconditionError):
    pass


def _det(m: list[list[Expression]]) -> Expression:
    n = len(m)
    if n == 1:
        return m[0][0]
    if n == 2:
        return m[0][0] * m[1][1] - m[0][1] * m[1][0]
    out: Expression = ZERO
    for j in range(n):
        if m[0][j].is_const(0.0):
            continue
        minor = [row[:j] + row[j + 1:] for row in m[1:]]
        term = m[0][j] * _det(minor)
        out = out + term if j % 2 == 0 else out - term
    return out


def _adjugate(m: list[list[Expression]]) -> list[list[Expression]]:
    n = len(m)
    if n == 1:
        return [[ONE]]
    adj = [[ZERO] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [row[:i] + row[i + 1:] for r, row in enumerate(m) if r != j]
            cof = _det(minor)
            adj[i][j] = simplify(cof if (i + j) % 2 == 0 else -cof)
    return adj


@functools.lru_cache(maxsize=4096)
def _grad_fn(e: Expression, names: tuple[str, ...]):
    from .expr import Chart
    return compile_vector(gradient(e, Chart(names)), len(names))


def _scaled_det(c: np.ndarray) -> float:
    norms = np.linalg.norm(c, axis=1)
    if np.any(norms == 0.0):
        return 0.0
    return float(abs(np.linalg.det(c / norms[:, None])))


@dataclass(frozen=True)
class ProjectedTensor:
    ambient: np.ndarray  # n x n, pi_S B pi_S^T
    tangential: np.ndarray  # (n-k) x (n-k) in the tangent basis
    tangent: np.ndarray  # n x (n-k)


class DiracContext:
    """Poisson structure plus second-class constraints, with cached symbolic C data."""

    def __init__(self, constraints: ConstraintSet, samples: Sequence[SurfaceSample] | None = None, *,
                 n_samples: int = 20, seed: int = 0, symbolic: bool | None = None):
        self.constraints = constraints
        self.structure: PoissonStructure = constraints.structure
        self.samples = list(samples) if samples is not None else sample_surface(constraints, n_samples, seed=seed)
        self.classification: Classification = classify(constraints, self.samples)
        if self.classification.label != "cosymplectic":
            raise NotCosymplecticError(
                f"{constraints.name} is {self.classification.label}, not cosymplectic")
        k = constraints.k
        if k % 2:
            raise NotCosymplecticError("an invertible antisymmetric constraint matrix needs even k")
        P = self.structure
        psi = constraints.constraints
        self.c_exprs = [[bracket(P, psi[i], psi[j]) for j in range(k)] for i in range(k)]
        if symbolic is None:
            symbolic = k <= SYMBOLIC_MAX_K
        if symbolic and k > SYMBOLIC_MAX_K:
            raise ValueError(f"symbolic mode supports at most {SYMBOLIC_MAX_K} constraints")
        self.symbolic = symbolic
        if symbolic:
            self.det_expr = simplify(_det(self.c_exprs))
            self.adj_exprs = _adjugate(self.c_exprs)
        else:
            self.det_expr = None
            self.adj_exprs = None
        for s in self.samples:
            self.c_matrix(s.point)

    @property
    def k(self) -> int:
        return self.constraints.k

    def _grad(self, e: Expression, z) -> np.ndarray:
        return np.array(_grad_fn(e, self.structure.chart.names)(z))

    def c_matrix(self, z) -> np.ndarray:
        """C(z), raising when its row-scaled determinant is at most DET_TOL."""
        jac = self.constraints.jacobian(z)
        c = jac @ self.structure(z) @ jac.T
        if _scaled_det(c) <= DET_TOL:
            raise SingularConstraintError(f"constraint matrix is singular at {np.asarray(z).tolist()}",
                                          tuple(np.asarray(z, dtype=float).tolist()))
        return c

    def frame(self, z):
        """(B(z), constraint Jacobian, C(z)) at a point."""
        b = self.structure(z)
        jac = self.constraints.jacobian(z)
        c = jac @ b @ jac.T
        if _scaled_det(c) <= DET_TOL:
            raise SingularConstraintError(f"constraint matrix is singular at {np.asarray(z).tolist()}",
                                          tuple(np.asarray(z, dtype=float).tolist()))
        return b, jac, c

    def field_from_gradient(self, b, jac, c, grad) -> np.ndarray:
        x_f = b @ grad
        x_psi = b @ jac.T  # columns X_{psi^j}
        b_f = grad @ x_psi  # {F, psi^i}
        return x_f - x_psi @ np.linalg.solve(c.T, b_f)


def _point(s) -> np.ndarray:
    return s.point if isinstance(s, SurfaceSample) else np.asarray(s, dtype=float)


def dirac_bracket_value(D: DiracContext, F: Expression, G: Expression, s) -> float:
    z = _point(s)
    b, jac, c = D.frame(z)
    gf, gg = D._grad(F, z), D._grad(G, z)
    f_psi = gf @ b @ jac.T  # {F, psi^i}
    psi_g = jac @ b @ gg  # {psi^j, G}
    return float(gf @ b @ gg - f_psi @ np.linalg.solve(c, psi_g))


def dirac_bracket_expr(D: DiracContext, F: Expression, G: Expression) -> Expression:
    """Ambient expression whose restriction to S is the Dirac bracket of F and G."""
    if not D.symbolic:
        raise ValueError(f"symbolic Dirac brackets need k <= {SYMBOLIC_MAX_K}; "
                         "use dirac_bracket_value pointwise")
    P = D.structure
    psi = D.constraints.constraints
    f_psi = [bracket(P, F, p) for p in psi]
    psi_g = [bracket(P, p, G) for p in psi]
    corr: Expression = ZERO
    for i in range(D.k):
        if f_psi[i].is_const(0.0):
            continue
        for j in range(D.k):
            a = D.adj_exprs[i][j]
            if a.is_const(0.0) or psi_g[j].is_const(0.0):
                continue
            corr = corr + f_psi[i] * a * psi_g[j]
    return simplify(bracket(P, F, G) - simplify(corr) / D.det_expr)


def dirac_vector_field(D: DiracContext, F: Expression, s) -> np.ndarray:
    z = _point(s)
    b, jac, c = D.frame(z)
    return D.field_from_gradient(b, jac, c, D._grad(F, z))


def projection_pi_S(D: DiracContext, s) -> np.ndarray:
    """Projector onto T_sS along B#(s)((T_sS)°), from the two bases."""
    sample = s if isinstance(s, SurfaceSample) else make_sample(D.constraints, s)
    b = D.structure(sample.point)
    v = b @ sample.conormal.T
    m = np.hstack([sample.tangent, v])
    if numerical_rank(m) < D.structure.dim:
        raise SingularConstraintError("T_sS and B#(conormal) do not span the tangent space",
                                      tuple(sample.point.tolist()))
    select = np.zeros_like(m)
    r = sample.tangent.shape[1]
    select[:, :r] = sample.tangent
    # pi = M diag(I, 0) M^{-1}
    return np.linalg.solve(m.T, select.T).T


def reduced_tensor(D: DiracContext, s) -> ProjectedTensor:
    sample = s if isinstance(s, SurfaceSample) else make_sample(D.constraints, s)
    pi = projection_pi_S(D, sample)
    amb = pi @ D.structure(sample.point) @ pi.T
    t = sample.tangent
    return ProjectedTensor(amb, t.T @ amb @ t, t)


def leaf_orthogonality_check(D: DiracContext, s, tol: float = 1e-10) -> Report:
    """B#((T_sS)°) is the leaf-form orthogonal of T_sS ∩ im B#(s), and symplectic."""
    sample = s if isinstance(s, SurfaceSample) else make_sample(D.constraints, s)
    b = D.structure(sample.point)
    image = column_span(b)
    u = b @ sample.conormal.T
    w = span_intersection(sample.tangent, image)
    if w.shape[1] and np.linalg.cond(w) > 1e8:
        raise SingularConstraintError("intersection basis is ill-conditioned", tuple(sample.point.tolist()))

    def preimage(vectors):
        return np.linalg.lstsq(b, vectors, rcond=None)[0]

    au, aw = preimage(u), preimage(w)
    omega_uw = au.T @ b @ aw  # leaf form between the two subspaces
    omega_uu = au.T @ b @ au
    scale = max(1.0, float(np.linalg.norm(b, 2)))
    pairing = float(np.abs(omega_uw).max(initial=0.0)) / scale
    sv = np.linalg.svd(omega_uu, compute_uv=False)
    sigma = float(sv[-1]) / scale if sv.size else 0.0
    dims_ok = numerical_rank(u) + w.shape[1] == numerical_rank(b)
    passed = pairing <= tol and sigma > 1e-10 and dims_ok
    return Report("leaf_orthogonality", passed, pairing, tuple(sample.point.tolist()),
                  {"pairing": pairing, "omega_on_conormal_image_min_sv": sigma,
                   "omega_on_conormal_image_det": float(np.linalg.det(omega_uu)) if omega_uu.size else 0.0,
                   "dim_conormal_image": numerical_rank(u), "dim_tangent_leaf": int(w.shape[1]),
                   "ambient_rank": numerical_rank(b)})


def reduced_leaf_dimension(D: DiracContext, s) -> int:
    return numerical_rank(reduced_tensor(D, s).tangential)
