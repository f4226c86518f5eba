import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from attention_transport.errors import (DimensionMismatch, NonUniformWeights, ProductTooLarge,
                                        UnequalSizes)
from attention_transport.measures import DiscreteMeasure, dirac, empirical
from attention_transport.transport import (MASS_SCALE, certificate_ok, certificate_violations,
                                           check_tensorization, integer_masses, product_measure,
                                           solve_transportation, w1, w1_assignment, w1_exact)

from oracles import w1_lp, w1_permutations


def test_dirac_distance():
    assert w1(dirac([1, 2]), dirac([4, 6])) == 7.0


def test_identical_measures():
    mu = empirical([[0.0], [1.0]])
    assert w1(mu, mu) == 0.0


def test_split_mass():
    mu = DiscreteMeasure([[0.0], [2.0]], [0.5, 0.5])
    assert w1(mu, dirac([1.0])) == pytest.approx(1.0, abs=1e-12)


def test_assignment_examples():
    a, b = empirical([[0.0], [2.0]]), empirical([[1.0], [3.0]])
    assert w1_assignment(a, b) == pytest.approx(w1_permutations(a.points, b.points)) == pytest.approx(1.0)
    assert w1_assignment(a, a) == 0.0
    c, d = empirical([(0, 0), (1, 0)]), empirical([(0, 1), (1, 1)])
    assert w1_assignment(c, d) == pytest.approx(1.0)


def test_assignment_preconditions():
    with pytest.raises(UnequalSizes):
        w1_assignment(empirical([[0.0]]), empirical([[0.0], [1.0]]))
    with pytest.raises(NonUniformWeights):
        w1_assignment(DiscreteMeasure([[0.0], [1.0]], [0.3, 0.7]), empirical([[0.0], [1.0]]))
    with pytest.raises(DimensionMismatch):
        w1(dirac([0.0]), dirac([0.0, 1.0]))


def test_integer_masses_remainder_to_heaviest():
    m = integer_masses(np.array([1 / 3, 1 / 3, 1 / 3 + 1e-15]))
    assert m.sum() == MASS_SCALE


def test_plan_json_shape():
    mu = DiscreteMeasure([[0.0], [2.0]], [0.5, 0.5])
    _, plan = w1_exact(mu, dirac([1.0]))
    obj = plan.to_json()
    assert obj["shape"] == [2, 1]
    assert sorted((i, j) for i, j, _ in obj["coupling"]) == [(0, 0), (1, 0)]


def test_degenerate_problem_terminates():
    # many ties and zero-cost cells
    cost = np.zeros((8, 8))
    flow, u, v = solve_transportation(np.full(8, 5), np.full(8, 5), cost)
    assert flow.sum() == 40


def test_tensorization_examples():
    a, b = empirical([[0.0], [1.0]]), empirical([[2.0, 1.0]])
    lhs, rhs, holds = check_tensorization(a, b, a, b)
    assert (lhs, rhs, holds) == (0.0, 0.0, True)
    lhs, rhs, holds = check_tensorization(dirac([0.0]), dirac([1.0, 1.0]), dirac([2.0]), dirac([0.0, 3.0]))
    assert lhs == rhs == 2.0 + 3.0 and holds


def test_product_cap():
    big = empirical(np.arange(101.0))
    with pytest.raises(ProductTooLarge):
        product_measure(big, big)


def test_tensorization_seeded_3_atom_pairs():
    for seed in range(1000):
        rng = np.random.default_rng(seed)
        ms = [DiscreteMeasure(rng.normal(size=(3, 2)), rng.dirichlet(np.ones(3))) for _ in range(4)]
        assert check_tensorization(*ms)[2]


@st.composite
def measure(draw, d, n=None):
    n = n or draw(st.integers(1, 7))
    pts = draw(arrays(float, (n, d), elements=st.floats(-5, 5, allow_nan=False)))
    uniform = draw(st.booleans())
    if uniform:
        return empirical(pts)
    raw = draw(arrays(float, n, elements=st.floats(0.0, 1.0)).filter(lambda r: r.sum() > 0.01))
    return DiscreteMeasure(pts, raw / raw.sum())


@given(st.data())
def test_metric_axioms_and_certificates(data):
    d = data.draw(st.integers(1, 3))
    a, b, c = (data.draw(measure(d)) for _ in range(3))
    ab, plan = w1_exact(a, b)
    assert certificate_ok(a, b, plan)
    assert all(v <= 1e-9 for v in certificate_violations(a, b, plan).values())
    assert abs(ab - w1(b, a)) <= 1e-9
    assert w1(a, c) <= ab + w1(b, c) + 1e-9
    assert w1(a, a) <= 1e-9
    assert ab == pytest.approx(w1_lp(a.points, a.weights, b.points, b.weights), abs=1e-9)


@given(st.data())
def test_assignment_agrees_with_exact(data):
    d = data.draw(st.integers(1, 3))
    n = data.draw(st.integers(1, 6))
    pts = st.floats(-5, 5, allow_nan=False)
    a = empirical(data.draw(arrays(float, (n, d), elements=pts)))
    b = empirical(data.draw(arrays(float, (n, d), elements=pts)))
    assert w1_assignment(a, b) == pytest.approx(w1(a, b), abs=1e-9)
    if n <= 5:
        assert w1_assignment(a, b) == pytest.approx(w1_permutations(a.points, b.points), abs=1e-9)


@given(arrays(float, 3, elements=st.floats(-1e3, 1e3, allow_nan=False)),
       arrays(float, 3, elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_dirac_exact(x, y):
    assert w1(dirac(x), dirac(y)) == float(np.abs(x - y).sum())


@given(arrays(float, (6, 2), elements=st.floats(-5, 5)), st.permutations(range(6)))
def test_reordered_atoms_are_at_distance_zero(pts, perm):
    a = empirical(pts)
    assert w1(a, empirical(pts[list(perm)])) <= 1e-12
