import numpy as np
import pytest

from preduce.expr import Chart
from preduce.poisson import PoissonStructure, SmoothMap
from preduce.quotient import (
    ClosureError, DescentError, QuotientSpec, action_family, build_reduced, casimir_descent_check,
    compare_dynamics, default_samples, pullback_identity_check, reduce_hamiltonian, verify_closure,
    verify_invariance,
)

ROTATION = ["q1*cos(t) + p1*sin(t)", "q2*cos(t) + p2*sin(t)",
            "-q1*sin(t) + p1*cos(t)", "-q2*sin(t) + p2*cos(t)"]
GENERATORS = {
    "s0": "(q1^2 + p1^2 + q2^2 + p2^2)/2",
    "w1": "q1*q2 + p1*p2",
    "w2": "q1*p2 - q2*p1",
    "w3": "(q1^2 + p1^2 - q2^2 - p2^2)/2",
}
CLOSURE = {("w1", "w2"): "2*w3", ("w2", "w3"): "2*w1", ("w3", "w1"): "2*w2"}


@pytest.fixture(scope="module")
def resonance(canon4):
    return QuotientSpec.from_strings(canon4, action_family(canon4.chart, ROTATION), GENERATORS, CLOSURE,
                                     ["w1^2 + w2^2 + w3^2 - s0^2"])


@pytest.fixture(scope="module")
def samples(resonance):
    return default_samples(resonance, 100, seed=3)


def test_invariance(resonance, samples):
    r = verify_invariance(resonance, samples)
    assert r.passed and r.worst_residual <= 1e-12
    assert r.details["maps"] == 8


def test_coordinate_not_invariant(canon4, samples):
    Q = QuotientSpec.from_strings(canon4, action_family(canon4.chart, ROTATION), {"y": "q1"}, {})
    r = verify_invariance(Q, samples)
    assert not r.passed and r.witness is not None


def test_closure_and_symbolic_identity(resonance, samples):
    r = verify_closure(resonance, samples)
    assert r.passed and r.details["symbolic_identity"] is True


def test_sign_flip_breaks_closure(canon4, resonance, samples):
    flipped = dict(CLOSURE)
    flipped[("w1", "w2")] = "-2*w3"
    Q = QuotientSpec.from_strings(canon4, resonance.actions, GENERATORS, flipped)
    r = verify_closure(Q, samples)
    assert not r.passed
    assert r.details["worst_pair"] == ["w1", "w2"]
    # residual is |2 w3 - (-2 w3)| = 4 |w3| at the witness
    w3 = Q.image(np.array(r.witness))[0][3]
    assert r.details["closure_residual"] == pytest.approx(4 * abs(w3), rel=1e-12)
    with pytest.raises(ClosureError):
        build_reduced(Q, samples)


def test_reduced_structure_is_so3_type(resonance, samples):
    red = build_reduced(resonance, samples)
    y = red.chart
    assert red.chart.names == ("s0", "w1", "w2", "w3")
    assert str(red.matrix[1][2]) == "2*w3"
    assert all(e.is_const(0.0) for e in red.matrix[0])
    assert red.jacobi_proven


def test_master_identity(resonance, samples):
    r = pullback_identity_check(resonance, samples, n_pairs=10, seed=1)
    assert r.passed, r.worst_residual


def test_casimir_descent(resonance, samples):
    y = resonance.reduced_chart
    assert casimir_descent_check(resonance, y.parse("w1^2 + w2^2 + w3^2"), samples).passed
    assert casimir_descent_check(resonance, y.parse("s0"), samples).passed


def test_descent_failure(canon4, resonance, samples):
    with pytest.raises(DescentError) as info:
        reduce_hamiltonian(resonance, canon4.chart.parse("q1"), resonance.reduced_chart.parse("w1"), samples)
    assert info.value.witness is not None


def test_compare_dynamics(canon4, resonance, samples):
    h = canon4.chart.parse("(q1^2 + p1^2 + q2^2 + p2^2)/2 + 0.25*((q1^2 + p1^2 - q2^2 - p2^2)/2)^2")
    R = reduce_hamiltonian(resonance, h, resonance.reduced_chart.parse("s0 + 0.25*w3^2"), samples)
    r = compare_dynamics(resonance, R, [0.3, -0.5, 0.7, 0.2], T=10, dt=1e-3)
    assert r.passed and r.worst_residual <= 1e-6
    eq = compare_dynamics(resonance, R, [0, 0, 0, 0], T=1)
    assert eq.worst_residual == 0.0


def test_identity_reduction(so3):
    c = so3.chart
    Q = QuotientSpec.from_strings(so3, [SmoothMap.identity(c)], {"y1": "x1", "y2": "x2", "y3": "x3"},
                                  {("y1", "y2"): "-y3", ("y1", "y3"): "y2", ("y2", "y3"): "-y1"})
    pts = default_samples(Q, 50)
    red = build_reduced(Q, pts)
    assert red(np.array([0.1, 0.2, 0.3])) == pytest.approx(so3(np.array([0.1, 0.2, 0.3])))
    h = c.parse("x1^2/2 + x2^2/4")
    R = reduce_hamiltonian(Q, h, Q.reduced_chart.parse("y1^2/2 + y2^2/4"), pts)
    assert compare_dynamics(Q, R, [1, 0.2, 0.1], T=1).worst_residual == 0.0


def test_translation_reduction(canon4):
    c = canon4.chart
    acts = action_family(c, ["q1", "q2 + t", "p1", "p2"], values=[-1.0, 0.5, 2.0])
    Q = QuotientSpec.from_strings(canon4, acts, {"q1": "q1", "p1": "p1", "p2": "p2"}, {("q1", "p1"): "1"})
    pts = default_samples(Q, 50)
    red = build_reduced(Q, pts)
    y = red.chart
    assert casimir_descent_check(Q, y.parse("p2"), pts).passed
    R = reduce_hamiltonian(Q, c.parse("q1*p1 + p2^2"), y.parse("q1*p1 + p2^2"), pts)
    assert compare_dynamics(Q, R, [0.4, 1.0, -0.3, 0.7], T=5).worst_residual <= 1e-6
