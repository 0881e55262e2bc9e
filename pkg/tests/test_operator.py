import numpy as np
import pytest
from hypothesis import given, strategies as st

from matfree.baseline import assemble_csr, assemble_dense
from matfree.materials import KINDS, MaterialField
from matfree.mesh import GridSpec, decode_vertex
from matfree.operator import (STRATEGIES, SystemOperator, apply_coalesced_dbd, apply_flexible_dbd,
                              apply_singlepass_dbd, jacobi_diagonal)

from conftest import make_field

MESHES = [(1, 1, 1), (2, 2, 2), (3, 3, 2), (4, 2, 3)]


def _rel(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)


@pytest.mark.parametrize("strategy", STRATEGIES)
@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("mode", ["A", "L"])
def test_matches_csr_oracle(strategy, kind, mode, rng):
    for C in MESHES:
        spec = GridSpec((0, 0, 0), (1.0, 1.5, 1.2), C)
        op = SystemOperator(spec, make_field(kind), 0.5, 0.01, mode, strategy)
        A = assemble_csr(op)
        for _ in range(3):
            x = rng.standard_normal(spec.n_vertices)
            assert _rel(op.apply(x), A @ x) <= 1e-12


def test_csr_matches_dense_assembly():
    spec = GridSpec((0, 0, 0), (1, 1, 1), (3, 3, 3))
    for mode in "AL":
        op = SystemOperator(spec, make_field("functional"), 0.5, 0.01, mode, "flexible")
        np.testing.assert_allclose(assemble_csr(op).toarray(), assemble_dense(op), rtol=0,
                                   atol=1e-12 * np.abs(assemble_dense(op)).max())


@pytest.mark.parametrize("strategy", STRATEGIES)
def test_zero_and_ones(strategy):
    spec = GridSpec((0, 0, 0), (1, 1, 1), (2, 2, 2))
    op = SystemOperator(spec, make_field("two_layer"), 0.5, 0.01, "A", strategy)
    assert np.all(op.apply(np.zeros(spec.n_vertices)) == 0)
    ones = np.ones(spec.n_vertices)
    mass = SystemOperator(spec, make_field("two_layer"), 0.5, 0.0, "A", "flexible")
    np.testing.assert_allclose(op.apply(ones), assemble_dense(mass) @ ones, rtol=1e-12)
    # K annihilates constants, so A and L agree on them
    np.testing.assert_allclose(op.apply(ones), op.with_mode("L").apply(ones), rtol=1e-12)


@pytest.mark.parametrize("strategy", STRATEGIES)
def test_fused_form(strategy, rng):
    spec = GridSpec((0, 0, 0), (1, 1, 1), (3, 3, 2))
    op = SystemOperator(spec, make_field("smoothed_layer"), 0.5, 0.01, "A", strategy)
    x, b = rng.standard_normal((2, spec.n_vertices))
    np.testing.assert_allclose(op.apply(x, -1.0, b), b - op.apply(x), rtol=1e-13, atol=1e-13)
    np.testing.assert_allclose(op.apply(x, 2.5, b), 2.5 * op.apply(x) + b, rtol=1e-13, atol=1e-13)


@given(st.sampled_from(STRATEGIES), st.sampled_from(KINDS), st.integers(0, 2**31 - 1))
def test_symmetry(strategy, kind, seed):
    spec = GridSpec((0, 0, 0), (1, 1, 1), (3, 2, 3))
    op = SystemOperator(spec, make_field(kind), 0.5, 0.05, "A", strategy)
    r = np.random.default_rng(seed)
    x, y = r.standard_normal((2, spec.n_vertices))
    lhs, rhs = y @ op.apply(x), x @ op.apply(y)
    assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), np.abs(op.apply(x)).max())


@pytest.mark.parametrize("strategy", STRATEGIES)
def test_deterministic(strategy, rng):
    spec = GridSpec((0, 0, 0), (1, 1, 1), (5, 4, 3))
    op = SystemOperator(spec, make_field("functional"), 0.5, 0.01, "A", strategy)
    x = rng.standard_normal(spec.n_vertices)
    first = op.apply(x)
    for _ in range(3):
        assert np.array_equal(op.apply(x), first)


@pytest.mark.parametrize("strategy", STRATEGIES)
def test_write_sets_are_exclusive(strategy):
    spec = GridSpec((0, 0, 0), (1, 1, 1), (4, 3, 3))
    op = SystemOperator(spec, make_field("two_layer"), strategy=strategy)
    for name, (targets, n_slots) in op.write_sets().items():
        assert len(np.unique(targets)) == len(targets), name
        assert targets.min() >= 0 and targets.max() < n_slots


def test_coalesced_stores_cover_every_vertex_slot():
    spec = GridSpec((0, 0, 0), (1, 1, 1), (3, 3, 2))
    op = SystemOperator(spec, make_field("two_layer"), strategy="coalesced")
    targets, n_slots = op.write_sets()["pass1"]
    assert n_slots == 4 * spec.n_vertices
    assert op.plan.group_size == 186 and op.plan.block_len == 31 and op.plan.split_slots == 4


def test_plans():
    spec = GridSpec((0, 0, 0), (1, 1, 1), (3, 3, 3))
    f = make_field("two_layer")
    assert SystemOperator(spec, f, strategy="flexible").plan.group_size == 24
    assert SystemOperator(spec, f, strategy="flexible").plan.split_slots == 24
    sp = SystemOperator(spec, f, strategy="singlepass").plan
    assert sp.group_size == 64 and sp.split_slots == 0


@pytest.mark.parametrize("strategy", STRATEGIES)
def test_jacobi_diagonal(strategy):
    spec = GridSpec((0, 0, 0), (1, 1, 1), (3, 3, 3))
    op = SystemOperator(spec, make_field("corrosion"), 0.5, 0.01, "A", strategy)
    d = jacobi_diagonal(op)
    A = assemble_csr(op)
    assert _rel(d, A.diagonal()) <= 1e-12
    assert np.all(d > 0)
    with pytest.raises(ValueError):
        jacobi_diagonal(op.with_mode("L"))


def test_jacobi_homogeneous_interior_equal():
    spec = GridSpec((0, 0, 0), (4, 4, 4), (4, 4, 4))
    op = SystemOperator(spec, MaterialField("two_layer", {"z_threshold": 100.0}), strategy="coalesced")
    i, j, k = decode_vertex(spec, np.arange(spec.n_vertices))
    inner = (i > 0) & (i < 4) & (j > 0) & (j < 4) & (k > 0) & (k < 4)
    d = op.jacobi_diagonal()[inner]
    np.testing.assert_allclose(d, d[0], rtol=1e-14)


def test_jacobi_jumps_across_layer():
    spec = GridSpec((0, 0, 0), (1, 1, 1), (3, 3, 4))
    op = SystemOperator(spec, MaterialField("two_layer", {"z_threshold": 0.5}), strategy="singlepass")
    d = op.jacobi_diagonal().reshape(5, 4, 4)
    assert d[1, 1, 1] > 1.5 * d[3, 1, 1]


def test_module_level_helpers(rng):
    spec = GridSpec((0, 0, 0), (1, 1, 1), (2, 3, 2))
    op = SystemOperator(spec, make_field("functional"), strategy="flexible")
    x = rng.standard_normal(spec.n_vertices)
    ref = apply_flexible_dbd(op, x)
    assert _rel(apply_singlepass_dbd(op, x), ref) <= 1e-12
    assert _rel(apply_coalesced_dbd(op, x), ref) <= 1e-12


def test_single_precision_close(rng):
    spec = GridSpec((0, 0, 0), (1, 1, 1), (3, 3, 3))
    for s in STRATEGIES:
        op64 = SystemOperator(spec, make_field("functional"), strategy=s)
        op32 = SystemOperator(spec, make_field("functional"), strategy=s, precision="single")
        x = rng.standard_normal(spec.n_vertices)
        y = op32.apply(x)
        assert y.dtype == np.float32
        assert _rel(y, op64.apply(x)) < 1e-5


def test_bad_arguments():
    spec = GridSpec((0, 0, 0), (1, 1, 1), (1, 1, 1))
    f = make_field("two_layer")
    with pytest.raises(ValueError):
        SystemOperator(spec, f, strategy="fastest")
    with pytest.raises(ValueError):
        SystemOperator(spec, f, mode="B")
    with pytest.raises(ValueError):
        SystemOperator(spec, f, theta=1.5)
    with pytest.raises(ValueError):
        SystemOperator(spec, f).apply(np.zeros(3))
