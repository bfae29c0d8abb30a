import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from preduce.expr import Chart, evaluate, simplify
from preduce.poisson import (
    NotPoissonError, PoissonStructure, SmoothMap, box_samples, bracket, characteristic_rank,
    check_canonical_action, check_poisson_distribution, check_poisson_map, hamiltonian_vector_field,
    is_casimir, jacobi_residual, random_polynomial,
)


def test_so3_convention(so3):
    x1, x2, x3 = so3.chart.coordinates()
    assert str(bracket(so3, x1, x2)) == "-x3"
    assert str(bracket(so3, x2, x3)) == "-x1"
    assert so3.jacobi_proven


def test_canonical_sign(canon2):
    q, p = canon2.chart.coordinates()
    assert evaluate(bracket(canon2, q, p), [0.3, 0.4]) == 1.0
    field = hamiltonian_vector_field(canon2, canon2.chart.parse("(q^2 + p^2)/2"))
    # dq/dt = dh/dp, dp/dt = -dh/dq
    assert field([1.0, 2.0]) == pytest.approx([2.0, -1.0])


def test_rigid_body_field_matches_hand_derivation(so3):
    h = so3.chart.parse("x1^2/2 + x2^2/4 + x3^2/6")
    field = hamiltonian_vector_field(so3, h)
    z = np.array([0.7, -1.1, 0.4])
    # X_h = x × ∇h with I = (1, 2, 3)
    omega = z / np.array([1.0, 2.0, 3.0])
    assert field(z) == pytest.approx(np.cross(z, omega), abs=1e-15)


def test_non_antisymmetric_rejected():
    c = Chart(["a", "b"])
    with pytest.raises(NotPoissonError):
        PoissonStructure(c, [["0", "a"], ["a", "0"]])


def test_perturbed_so3_fails_jacobi(so3):
    bad = PoissonStructure.from_upper(so3.chart, {("x1", "x2"): "-x3 + x1*x3", ("x1", "x3"): "x2",
                                                  ("x2", "x3"): "-x1"}, validate=False)
    with pytest.raises(NotPoissonError) as info:
        bad.validate()
    assert info.value.witness is not None
    res = [jacobi_residual(bad, z) for z in box_samples(3, 20, seed=3)]
    assert max(res) > 0.1


def test_characteristic_rank(so3, canon4):
    assert characteristic_rank(so3, [0, 0, 0]) == 0
    assert characteristic_rank(so3, [1, 0, 0]) == 2
    assert characteristic_rank(canon4, [0.1, 0.2, 0.3, 0.4]) == 4


def test_casimir(so3, canon2):
    pts = box_samples(3, 100, seed=7)
    assert is_casimir(so3, so3.chart.parse("x1^2 + x2^2 + x3^2"), pts, tol=1e-14)
    r = is_casimir(canon2, canon2.chart.parse("q"), box_samples(2, 100, seed=7), tol=1e-14)
    assert not r
    assert r.worst_residual == pytest.approx(1.0, abs=1e-14)


def test_poisson_map_scaling(canon2):
    c = canon2.chart
    good = SmoothMap(c, c, (c.parse("2*q"), c.parse("p/2")))
    bad = SmoothMap(c, c, (c.parse("2*q"), c.parse("2*p")))
    pts = box_samples(2, 30, seed=1)
    assert check_poisson_map(good, canon2, canon2, pts)
    r = check_poisson_map(bad, canon2, canon2, pts)
    assert not r and r.witness is not None


def test_canonical_action_rotations(canon2):
    c = canon2.chart
    maps = []
    for t in (0.3, 1.1, 2.5):
        cs, sn = float(np.cos(t)), float(np.sin(t))
        maps.append(SmoothMap(c, c, (c.parse(f"{cs!r}*q + {sn!r}*p"), c.parse(f"{-sn!r}*q + {cs!r}*p"))))
    assert check_canonical_action(maps, canon2, box_samples(2, 20, seed=2))


def test_poisson_distribution(canon4):
    c = canon4.chart
    fields = [hamiltonian_vector_field(canon4, c.parse(s)) for s in ("q2", "p2")]
    r = check_poisson_distribution(canon4, fields, box_samples(4, 20, seed=3))
    assert r.passed


def test_product_structure(so3_r2):
    assert so3_r2.chart.names == ("x1", "x2", "x3", "q", "p")
    c = so3_r2.chart
    assert bracket(so3_r2, c.parse("x1"), c.parse("q")).is_const(0.0)
    assert str(bracket(so3_r2, c.parse("q"), c.parse("p"))) == "1"


STRUCTURES = {
    "canonical2": PoissonStructure.canonical(1),
    "canonical4": PoissonStructure.canonical(2),
    "so3": PoissonStructure.so3(),
    "canonical_x_trivial": PoissonStructure.product(PoissonStructure.canonical(2),
                                                    PoissonStructure.trivial(Chart(["c"]))),
}


@pytest.mark.parametrize("name", sorted(STRUCTURES))
def test_bracket_axioms_random(name):
    P = STRUCTURES[name]
    rng = np.random.default_rng(11)
    f, g, h = (random_polynomial(P.chart, rng, 2) for _ in range(3))
    anti = bracket(P, f, g) + bracket(P, g, f)
    leib = bracket(P, f, g * h) - bracket(P, f, g) * h - g * bracket(P, f, h)
    jac = (bracket(P, f, bracket(P, g, h)) + bracket(P, g, bracket(P, h, f))
           + bracket(P, h, bracket(P, f, g)))
    for z in box_samples(P.dim, 50, seed=5):
        assert abs(evaluate(anti, z)) <= 1e-12
        assert abs(evaluate(leib, z)) <= 1e-12 * max(1.0, abs(evaluate(g * h, z)) * 100)
        assert abs(evaluate(jac, z)) <= 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_jacobi_cyclic_sum_so3(seed):
    P = STRUCTURES["so3"]
    rng = np.random.default_rng(seed)
    f, g, h = (random_polynomial(P.chart, rng, 2) for _ in range(3))
    jac = (bracket(P, f, bracket(P, g, h)) + bracket(P, g, bracket(P, h, f))
           + bracket(P, h, bracket(P, f, g)))
    z = rng.uniform(-2, 2, 3)
    assert abs(evaluate(jac, z)) <= 1e-9
