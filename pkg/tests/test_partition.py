import numpy as np
import pytest
from hypothesis import given, strategies as st

from matfree.errors import PartitionError
from matfree.mesh import GridSpec
from matfree.operator import SystemOperator
from matfree.partition import (exchange_halos, gather, merged_dot, pcg_partitioned, scatter,
                               split_domain)
from matfree.solver import PcgConfig, dot, pcg

from conftest import make_field


def test_split_example():
    plan = split_domain(GridSpec((0, 0, 0), (1, 1, 1), (2, 2, 10)), 0.5)
    lens = [hi - lo for lo, hi in plan.stored]
    assert lens == [7, 7]
    assert plan.owned == ((0, 6), (6, 11))


@given(st.integers(3, 20), st.floats(0.01, 0.99))
def test_plan_invariants(cz, m):
    spec = GridSpec((0, 0, 0), (1, 1, 1), (1, 1, cz))
    plan = split_domain(spec, m)
    L = cz + 1
    owned = [set(range(*r)) for r in plan.owned]
    assert not owned[0] & owned[1] and owned[0] | owned[1] == set(range(L))
    for w in range(2):
        lo, hi = plan.stored[w]
        stored = set(range(lo, hi))
        assert all({l - 1, l + 1} & set(range(L)) <= stored for l in owned[w])
        assert hi - lo >= 3
    assert all(hi - lo >= 2 for lo, hi in plan.owned)
    if not plan.clamped:
        assert plan.owned[0][1] == int(np.ceil(m * L))
        assert plan.stored[0][1] - plan.stored[0][0] == int(np.ceil(m * L)) + 1
        assert plan.stored[1][1] - plan.stored[1][0] == L - int(np.ceil(m * L)) + 2


def test_degenerate_guards():
    with pytest.raises(PartitionError):
        split_domain(GridSpec((0, 0, 0), (1, 1, 1), (2, 2, 2)), 0.5)
    with pytest.raises(PartitionError):
        split_domain(GridSpec((0, 0, 0), (1, 1, 1), (2, 2, 6)), 1.0)
    plan = split_domain(GridSpec((0, 0, 0), (1, 1, 1), (2, 2, 6)), 0.01)
    assert plan.clamped and plan.owned[0] == (0, 2)


def test_exchange_semantics(rng):
    spec = GridSpec((0, 0, 0), (1, 1, 1), (3, 2, 6))
    plan = split_domain(spec, 0.5)
    d = rng.standard_normal(spec.n_vertices)
    parts = exchange_halos(plan, scatter(plan, d))
    for w in range(2):
        np.testing.assert_array_equal(parts[w], d[plan.stored_slice(w)])
    # perturb worker 0's boundary layer and watch it arrive in worker 1's halo
    parts[0][plan._local_layer(0, plan.send_layer(0))] += 1.0
    out = exchange_halos(plan, parts)
    np.testing.assert_array_equal(out[1][plan._local_layer(1, plan.halo_layer(1))],
                                  parts[0][plan._local_layer(0, plan.send_layer(0))])


def test_merged_dot(rng):
    spec = GridSpec((0, 0, 0), (1, 1, 1), (4, 3, 8))
    x, y = rng.standard_normal((2, spec.n_vertices))
    ones = np.ones(spec.n_vertices)
    vals = []
    for m in (0.3, 0.5):
        plan = split_domain(spec, m)
        assert merged_dot(plan, scatter(plan, ones), scatter(plan, ones)) == spec.n_vertices
        v = merged_dot(plan, scatter(plan, x), scatter(plan, y))
        assert abs(v - dot(x, y)) <= 1e-14 * np.abs(x * y).sum()
        vals.append(v)
    assert abs(vals[0] - vals[1]) <= 1e-14 * np.abs(x * y).sum()


def test_gather_inverts_scatter(rng):
    spec = GridSpec((0, 0, 0), (1, 1, 1), (2, 2, 5))
    plan = split_domain(spec, 0.4)
    v = rng.standard_normal(spec.n_vertices)
    np.testing.assert_array_equal(gather(plan, scatter(plan, v)), v)


@pytest.mark.parametrize("m", [0.3, 0.5, 0.7])
def test_iterates_match_monolithic(m, rng):
    spec = GridSpec((-15, -15, 0), (15, 15, 10), (5, 4, 6))
    op = SystemOperator(spec, make_field("functional"), 0.5, 0.01)
    b = rng.standard_normal(spec.n_vertices)
    cfg = PcgConfig(tol=1e-8)
    mono = []
    ref = pcg(op.apply, b, np.zeros_like(b), op.jacobi_diagonal(), cfg,
              residual=lambda v: op.apply(v, -1.0, b),
              callback=lambda i, x, r, d: mono.append((x.copy(), r.copy(), d.copy())))
    res = pcg_partitioned(op, b, np.zeros_like(b), split_domain(spec, m), cfg, trace=True)
    assert res.iterations == ref.iterations == len(res.trace)
    for (x, r, d), (px, pr, pd) in zip(mono, res.trace):
        for a, c in ((x, px), (r, pr), (d, pd)):
            assert np.max(np.abs(a - c)) <= 1e-12 * max(np.abs(a).max(), 1.0)
    assert np.max(np.abs(res.x - ref.x)) <= 1e-10
    assert res.audit.per_iteration == [(1, 1, 2, 2)] * res.iterations
    assert res.audit.bytes_per_exchange == 2 * 6 * 5 * 8


def test_requires_A_mode():
    spec = GridSpec((0, 0, 0), (1, 1, 1), (2, 2, 4))
    op = SystemOperator(spec, make_field("two_layer"), mode="L")
    with pytest.raises(ValueError):
        pcg_partitioned(op, np.ones(spec.n_vertices), np.zeros(spec.n_vertices),
                        split_domain(spec, 0.5))


def test_worker_errors_propagate():
    spec = GridSpec((0, 0, 0), (1, 1, 1), (2, 2, 4))
    op = SystemOperator(spec, make_field("two_layer"), 0.5, 1.0)
    b = np.random.default_rng(0).standard_normal(spec.n_vertices)
    from matfree.errors import NonConvergenceError
    with pytest.raises(NonConvergenceError):
        pcg_partitioned(op, b, np.zeros_like(b), split_domain(spec, 0.5), PcgConfig(i_max=1))
