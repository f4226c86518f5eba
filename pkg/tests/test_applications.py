import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from attention_transport.applications import (composed_bound, contractive_scale, default_box,
                                              fixed_point_iterate, negate_token, neighborhood_gap,
                                              sequence_perturbation)
from attention_transport.attention import AttentionSpec, Head, TransformerSpec, transformer_step
from attention_transport.errors import IndexOutOfRange, TNotInNeighborhood
from attention_transport.kernels import ExpDot, Gaussian, Scale
from attention_transport.measures import Box, dirac, empirical
from attention_transport.transport import w1

GAUSS = AttentionSpec(Gaussian())


def _contractive(mu, potential=Gaussian()):
    box = default_box(mu)
    alpha = contractive_scale(potential, box)
    return TransformerSpec.single(AttentionSpec(potential, Scale(alpha)), mu.dim), box, alpha


def test_neighborhood_identical_sets():
    X = np.random.default_rng(0).normal(size=(5, 2))
    res = neighborhood_gap(X, 2, [0, 2, 4], [4, 2, 0], GAUSS)
    assert (res["lhs"], res["rhs"], res["ratio"]) == (0.0, 0.0, 0.0)


def test_neighborhood_swap_respects_bound():
    X = np.random.default_rng(8).uniform(-1, 1, size=(8, 2))
    res = neighborhood_gap(X, 0, [0, 1, 2, 3], [0, 1, 2, 5], GAUSS)
    assert res["lhs"] == pytest.approx(res["lhs_transport"], abs=1e-10)
    assert 0 < res["lhs"] <= res["rhs"]


@given(st.integers(0, 2**31 - 1), st.sampled_from([Gaussian(), ExpDot(0.5)]))
def test_neighborhood_bound_property(seed, P):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(7, 2))
    N = [0] + list(rng.choice(np.arange(1, 7), 3, replace=False))
    M = [0] + list(rng.choice(np.arange(1, 7), 3, replace=False))
    res = neighborhood_gap(X, 0, N, M, AttentionSpec(P))
    assert res["lhs"] <= res["rhs"] * (1 + 1e-9) + 1e-12


def test_neighborhood_errors():
    X = np.zeros((3, 1))
    with pytest.raises(IndexOutOfRange):
        neighborhood_gap(X, 0, [0, 3], [0], GAUSS)
    with pytest.raises(IndexOutOfRange):
        neighborhood_gap(X, 5, [0], [0], GAUSS)
    with pytest.raises(TNotInNeighborhood):
        neighborhood_gap(X, 0, [0, 1], [1, 2], GAUSS)
    with pytest.raises(ValueError):
        neighborhood_gap(X, 0, [], [0], GAUSS)


def test_fixed_point_single_atom():
    res = fixed_point_iterate(dirac([0.3, 0.4]), TransformerSpec.single(GAUSS, 2))
    assert res.converged and res.iterations == 1 and res.history == [0.0]
    two = fixed_point_iterate(empirical([[1.0], [1.0]]), TransformerSpec.single(GAUSS, 1))
    assert two.converged and two.history == [0.0]


def test_fixed_point_contractive_case():
    mu = empirical(np.random.default_rng(2).uniform(-1, 1, size=(6, 2)))
    tspec, box, alpha = _contractive(mu)
    assert 0 < alpha < 1
    res = fixed_point_iterate(mu, tspec, box=box)
    assert res.q == pytest.approx(0.5, rel=1e-12)
    assert res.converged and res.box_ok and res.decay_ok
    assert all(r <= 0.5 + 1e-9 for r in res.step_ratios)


def test_fixed_point_is_deterministic():
    mu = empirical(np.random.default_rng(3).normal(size=(5, 3)))
    tspec = TransformerSpec.single(AttentionSpec(ExpDot(0.3), Scale(0.5)), 3)
    a = fixed_point_iterate(mu, tspec, max_iter=50)
    b = fixed_point_iterate(mu, tspec, max_iter=50)
    assert a.history == b.history and np.array_equal(a.final.points, b.final.points)


def test_fixed_point_argument_checks():
    with pytest.raises(ValueError):
        fixed_point_iterate(dirac([0.0]), TransformerSpec.single(GAUSS, 1), tol=0)
    with pytest.raises(ValueError):
        fixed_point_iterate(dirac([0.0]), TransformerSpec.single(GAUSS, 1), max_iter=0)


@settings(max_examples=30)
@given(st.integers(0, 2**31 - 1))
def test_contraction_between_pairs_in_box(seed):
    rng = np.random.default_rng(seed)
    box = Box([-1.0, -1.0], [1.0, 1.0])
    alpha = contractive_scale(Gaussian(), box)
    tspec = TransformerSpec.single(AttentionSpec(Gaussian(), Scale(alpha)), 2)
    assert composed_bound(tspec, box) == pytest.approx(0.5, rel=1e-12)
    mu = empirical(rng.uniform(-1, 1, size=(4, 2)))
    nu = empirical(rng.uniform(-1, 1, size=(5, 2)))
    before = w1(mu, nu)
    after = w1(transformer_step(mu, tspec), transformer_step(nu, tspec))
    assert after <= 0.5 * before + 1e-9


def test_composed_bound_sums_heads():
    box = Box([0.0], [1.0])
    one = composed_bound(TransformerSpec.single(GAUSS, 1), box)
    two = TransformerSpec((Head(GAUSS, np.array([[2.0]])), Head(GAUSS, np.array([[-1.0]]))))
    assert composed_bound(two, box) == pytest.approx(3 * one, rel=1e-15)


def test_sequence_symmetry_and_permutation():
    rng = np.random.default_rng(4)
    A, B = rng.normal(size=(4, 2)), rng.normal(size=(6, 2))
    tspec = TransformerSpec.single(GAUSS, 2)
    ab = sequence_perturbation(A, B, tspec, 2)
    ba = sequence_perturbation(B, A, tspec, 2)
    assert ab["output_w1"] == pytest.approx(ba["output_w1"], abs=1e-12)
    perm = sequence_perturbation(A, A[::-1], tspec, 3)
    assert perm["input_w1"] == 0.0 and perm["output_w1"] <= 1e-12
    assert not perm["amplification_defined"] and perm["amplification"] is None


@settings(max_examples=25)
@given(st.integers(0, 2**31 - 1), st.integers(1, 3))
def test_deletion_amplification_below_bound(seed, depth):
    rng = np.random.default_rng(seed)
    A = rng.uniform(-1, 1, size=(6, 2))
    B = np.delete(A, int(rng.integers(6)), axis=0)
    res = sequence_perturbation(A, B, TransformerSpec.single(GAUSS, 2), depth)
    assert res["bound"] is not None
    if res["amplification_defined"]:
        assert res["amplification"] <= res["bound"]


def test_negation_and_bound_availability():
    A = np.array([[1.0, -2.0], [0.5, 0.0]])
    neg = negate_token(A, 0)
    assert neg.tolist() == [[-1.0, 2.0], [0.5, 0.0]] and A[0, 0] == 1.0
    res = sequence_perturbation(A, neg, TransformerSpec.single(AttentionSpec(ExpDot(1.0)), 2), 1)
    assert res["input_w1"] == pytest.approx(3.0) and res["bound"] is None
    with pytest.raises(ValueError):
        sequence_perturbation(A, neg, TransformerSpec.single(GAUSS, 2), 0)


@given(arrays(float, (3, 2), elements=st.floats(-3, 3)))
def test_default_box_contains_origin_and_support(X):
    mu = empirical(X)
    box = default_box(mu)
    assert box.contains(X, 0.0) and box.contains(np.zeros((1, 2)), 0.0)
