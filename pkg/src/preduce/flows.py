"""Fixed-step RK4 flows of Poisson and Dirac vector fields, with diagnostics."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import IO, Callable, Mapping, Sequence

import numpy as np

from .dirac import DiracContext, SingularConstraintError, _grad_fn
from .expr import EvaluationError, Expression, compile_vector
from .poisson import PoissonStructure, bracket, hamiltonian_vector_field
from .report import Report
from .submanifold import PreconditionError, SurfaceSample

__all__ = [
    "IntegratorConfig", "Trajectory", "IntegrationError", "integrate", "integrate_constrained",
    "flow_map", "bracket_preservation_check", "conservation_report", "write_csv",
]

METHODS = ("rk4", "projected-rk4")


class IntegrationError(RuntimeError):
    """Integration stopped early; ``trajectory`` holds the steps computed so far."""

    def __init__(self, message: str, trajectory: "Trajectory | None" = None):
        self.trajectory = trajectory
        self.last_valid_time = float(trajectory.t[-1]) if trajectory is not None and len(trajectory.t) else 0.0
        super().__init__(f"{message} (last valid time {self.last_valid_time:.17g})")


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk4"
    dt: float = 1e-3
    T: float = 1.0
    projection_tol: float = 1e-13
    max_projection_iter: int = 50

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.T >= 0:
            raise ValueError("T must be nonnegative")

    @property
    def steps(self) -> int:
        """Number of uniform steps; the step is T/steps <= dt so the grid ends at T."""
        if self.T == 0:
            return 0
        return max(1, math.ceil(self.T / self.dt - 1e-9))

    @property
    def step(self) -> float:
        return self.T / self.steps if self.steps else self.dt


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    states: np.ndarray
    energy: np.ndarray
    tracked: dict[str, np.ndarray] = field(default_factory=dict)
    constraint_residuals: np.ndarray | None = None  # steps x k, max |psi| per constraint
    tangency: np.ndarray | None = None  # |<dpsi, zdot>| before projection
    coordinates: tuple[str, ...] = ()
    structure: PoissonStructure | None = None
    hamiltonian: Expression | None = None

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _rk4_step(f: Callable, z: list[float], h: float) -> list[float]:
    k1 = f(z)
    k2 = f([a + 0.5 * h * b for a, b in zip(z, k1)])
    k3 = f([a + 0.5 * h * b for a, b in zip(z, k2)])
    k4 = f([a + h * b for a, b in zip(z, k3)])
    return [a + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
            for a, b1, b2, b3, b4 in zip(z, k1, k2, k3, k4)]


def _named(tracked) -> dict[str, Expression]:
    if tracked is None:
        return {}
    if isinstance(tracked, Mapping):
        return dict(tracked)
    return {f"f{i}": e for i, e in enumerate(tracked)}


def _diagnostics(h: Expression, tracked: dict[str, Expression], dim: int):
    return compile_vector([h, *tracked.values()], dim)


def flow_map(P: PoissonStructure, h: Expression, z0, t: float, dt: float = 1e-3) -> np.ndarray:
    """State at time t (no diagnostics)."""
    cfg = IntegratorConfig(dt=dt, T=t)
    f = compile_vector(hamiltonian_vector_field(P, h).components, P.dim)
    z = [float(v) for v in z0]
    for _ in range(cfg.steps):
        z = _rk4_step(f, z, cfg.step)
    return np.array(z)


def integrate(P: PoissonStructure, h: Expression, z0, cfg: IntegratorConfig | None = None,
              tracked=None) -> Trajectory:
    """Classical RK4 on dz/dt = X_h(z)."""
    cfg = cfg or IntegratorConfig()
    if cfg.method != "rk4":
        raise ValueError("use integrate_constrained for projected-rk4")
    z = [float(v) for v in P.chart.point(z0)]
    tracked = _named(tracked)
    f = compile_vector(hamiltonian_vector_field(P, h).components, P.dim)
    diag = _diagnostics(h, tracked, P.dim)
    n, step = cfg.steps, cfg.step
    states = [z]
    values = []
    times = [0.0]

    def build():
        arr = np.array(values)
        return Trajectory(np.array(times), np.array(states), arr[:, 0],
                          {name: arr[:, 1 + i] for i, name in enumerate(tracked)},
                          coordinates=P.chart.names, structure=P, hamiltonian=h)

    try:
        values.append(diag(z))
        for i in range(1, n + 1):
            z = _rk4_step(f, z, step)
            d = diag(z)
            states.append(z)
            values.append(d)
            times.append(i * step)
    except (EvaluationError, OverflowError) as exc:
        if len(states) > len(values):
            states.pop()
            times.pop()
        raise IntegrationError(str(exc), build() if values else None) from exc
    return build()


def integrate_constrained(D: DiracContext, h: Expression, s0, cfg: IntegratorConfig | None = None,
                          tracked=None) -> Trajectory:
    """RK4 on the Dirac vector field of h, optionally projected back onto S each step."""
    cfg = cfg or IntegratorConfig(method="projected-rk4")
    P, C = D.structure, D.constraints
    z0 = np.array(s0.point if isinstance(s0, SurfaceSample) else P.chart.point(s0), dtype=float)
    r0 = float(np.abs(C.values(z0)).max())
    if r0 > 1e-10:
        raise PreconditionError(f"initial point is off the constraint surface (residual {r0:.3e})")
    tracked = _named(tracked)
    grad_h = _grad_fn(h, P.chart.names)
    diag = _diagnostics(h, tracked, P.dim)

    def field_at(z):
        b, jac, c = D.frame(z)
        return D.field_from_gradient(b, jac, c, np.array(grad_h(z)))

    n, step = cfg.steps, cfg.step
    z = z0
    times, states, values, resid, tang = [0.0], [z0], [], [], []

    def build():
        arr = np.array(values)
        return Trajectory(np.array(times), np.array(states), arr[:, 0],
                          {name: arr[:, 1 + i] for i, name in enumerate(tracked)},
                          np.array(resid), np.array(tang), P.chart.names, P, h)

    try:
        values.append(diag(z))
        resid.append(np.abs(C.values(z)))
        for i in range(1, n + 1):
            k1 = field_at(z)
            tang.append(float(np.abs(C.jacobian(z) @ k1).max()))
            k2 = field_at(z + 0.5 * step * k1)
            k3 = field_at(z + 0.5 * step * k2)
            k4 = field_at(z + step * k3)
            z = z + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if cfg.method == "projected-rk4":
                z, r, _ = C.project(z, max_iter=cfg.max_projection_iter, tol=cfg.projection_tol)
                if not r <= max(cfg.projection_tol, 1e-12):
                    raise IntegrationError(f"projection onto S diverged (residual {r:.3e})", build())
            states.append(z)
            times.append(i * step)
            values.append(diag(z))
            resid.append(np.abs(C.values(z)))
    except (EvaluationError, SingularConstraintError, np.linalg.LinAlgError) as exc:
        while len(states) > len(values):
            states.pop()
            times.pop()
        while len(tang) >= len(states):
            tang.pop()
        raise IntegrationError(str(exc), build()) from exc
    tang.append(float(np.abs(C.jacobian(z) @ field_at(z)).max()) if n else 0.0)
    return build()


def _fd_jacobian(P, h, z0, t, dt, probe):
    n = len(z0)
    cols = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = probe
        cols.append((flow_map(P, h, z0 + e, t, dt) - flow_map(P, h, z0 - e, t, dt)) / (2 * probe))
    return np.array(cols).T


def bracket_preservation_check(P: PoissonStructure, h: Expression, z0, t: float, dt: float = 1e-3,
                               probe_scale: float = 1e-5, tol: float = 1e-5) -> Report:
    """The time-t flow is a Poisson map: J B(z0) J^T = B(phi_t(z0))."""
    z0 = P.chart.point(z0)
    end = flow_map(P, h, z0, t, dt)
    target = P(end)
    jac = _fd_jacobian(P, h, z0, t, dt, probe_scale)
    if np.linalg.norm(jac, 2) > 1e6:
        return Report("bracket_preservation", False, float("nan"), tuple(z0.tolist()),
                      {"jacobian_norm": float(np.linalg.norm(jac, 2))},
                      ["flow Jacobian norm exceeds 1e6; check skipped"], skipped=True)
    residual = float(np.abs(jac @ P(z0) @ jac.T - target).max())
    method = "central"
    if residual > 0.1 * tol:
        half = _fd_jacobian(P, h, z0, t, dt, probe_scale / 2)
        rich = (4.0 * half - jac) / 3.0
        r2 = float(np.abs(rich @ P(z0) @ rich.T - target).max())
        if r2 < residual:
            jac, residual, method = rich, r2, "richardson"
    return Report("bracket_preservation", residual <= tol, residual, tuple(z0.tolist()),
                  {"t": t, "dt": dt, "probe": probe_scale, "differences": method,
                   "jacobian_norm": float(np.linalg.norm(jac, 2))})


def conservation_report(traj: Trajectory, tracked, *, drift_tol: float = 1e-7,
                        involution_tol: float = 1e-12) -> Report:
    """Drift of each tracked function, paired with |{f, h}| at the initial point."""
    tracked = _named(tracked)
    quantities = {}
    worst = 0.0
    passed = True
    z0 = traj.states[0]
    for name, f in tracked.items():
        fn = compile_vector([f], traj.states.shape[1])
        vals = np.array([fn(z)[0] for z in traj.states])
        drift = float(np.abs(vals - vals[0]).max(initial=0.0))
        entry = {"expression": str(f), "drift": drift}
        if traj.structure is not None and traj.hamiltonian is not None:
            a_priori = abs(compile_vector([bracket(traj.structure, f, traj.hamiltonian)],
                                          traj.states.shape[1])(z0)[0])
            entry["bracket_with_h_at_start"] = a_priori
            if a_priori <= involution_tol:
                entry["status"] = "integral of motion ({f,h} = 0 at start)"
                if drift > drift_tol:
                    passed = False
            else:
                entry["status"] = ("numerically conserved" if drift <= drift_tol
                                   else "not conserved")
        quantities[name] = entry
        worst = max(worst, drift)
    return Report("conservation", passed, worst, tuple(z0.tolist()),
                  {"quantities": quantities, "drift_tolerance": drift_tol})


def write_csv(traj: Trajectory, stream: IO[str], tracked_names: Sequence[str] | None = None) -> None:
    """CSV with columns t, coordinates..., tracked...; 17 significant digits."""
    names = list(traj.tracked) if tracked_names is None else list(tracked_names)
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["t", *traj.coordinates, *names])
    fmt = "{:.17g}".format
    for i, t in enumerate(traj.t):
        row = [fmt(t), *(fmt(v) for v in traj.states[i]), *(fmt(traj.tracked[n][i]) for n in names)]
        writer.writerow(row)
