import numpy as np
import pytest
from hypothesis import given, strategies as st

from matfree.elements import fixed_grid_matrices, local_matrices, local_matrices_batch
from matfree.errors import DegenerateElementError
from matfree.mesh import CORNER_OFFSETS, TET_CORNERS, GridSpec

from oracles import quadrature_matrices, random_tet

UNIT_TET = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)


def _rotation(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def test_unit_tet_values():
    em = local_matrices(*UNIT_TET)
    V = 1 / 6
    assert np.isclose(em.volume, V)
    np.testing.assert_allclose(np.diag(em.M), V / 10)
    off = em.M[~np.eye(4, dtype=bool)]
    np.testing.assert_allclose(off, V / 20)
    np.testing.assert_allclose(em.K.sum(axis=1), 0, atol=1e-15)
    M, K, vol = quadrature_matrices(UNIT_TET)
    np.testing.assert_allclose(em.M, M, rtol=1e-12)
    np.testing.assert_allclose(em.K, K, rtol=1e-10, atol=1e-12)


def test_matrix_invariants(rng):
    for _ in range(20):
        em = local_matrices(*random_tet(rng))
        assert np.allclose(em.M, em.M.T) and np.allclose(em.K, em.K.T)
        assert np.all(em.M > 0)
        assert np.isclose(em.M.sum(), em.volume)
        assert np.linalg.eigvalsh(em.M).min() > 0
        assert np.linalg.eigvalsh(em.K).min() > -1e-12 * np.abs(em.K).max()


def test_rotation_and_translation_invariance(rng):
    for _ in range(10):
        v = random_tet(rng)
        base = local_matrices(*v)
        R = _rotation(rng)
        rot = local_matrices(*(v @ R.T + rng.uniform(-100, 100, 3)))
        np.testing.assert_allclose(rot.K, base.K, rtol=1e-9, atol=1e-12 * np.abs(base.K).max())
        np.testing.assert_allclose(rot.M, base.M, rtol=1e-9)


@given(st.tuples(*[st.floats(-50, 50)] * 3))
def test_translation_invariance_property(c):
    base = local_matrices(*UNIT_TET)
    moved = local_matrices(*(UNIT_TET + np.array(c)))
    np.testing.assert_allclose(moved.K, base.K, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(moved.M, base.M, rtol=1e-8)


def test_degenerate_raises():
    flat = UNIT_TET.copy()
    flat[3] = [0.5, 0.5, 0.0]
    with pytest.raises(DegenerateElementError):
        local_matrices(*flat)


def test_batch_matches_single(rng):
    verts = np.stack([random_tet(rng) for _ in range(8)])
    M, K, vol = local_matrices_batch(verts)
    for e in range(8):
        em = local_matrices(*verts[e])
        np.testing.assert_array_equal(M[e], em.M)
        np.testing.assert_array_equal(K[e], em.K)


def test_fixed_grid_cubic_cells_coincide():
    fg = fixed_grid_matrices(GridSpec((0, 0, 0), (3, 3, 3), (3, 3, 3)))
    vols = [m.volume for m in fg.per_shape]
    np.testing.assert_allclose(vols, 1 / 6)
    assert np.isclose(fg.M.sum(), 1.0)
    # compare in lattice-path order: the corner reached after two steps comes third
    ref = None
    for t, m in enumerate(fg.per_shape):
        steps = CORNER_OFFSETS[TET_CORNERS[t]].sum(axis=1)
        order = np.argsort(steps)
        K = m.K[np.ix_(order, order)]
        ref = K if ref is None else ref
        np.testing.assert_allclose(K, ref, atol=1e-14)
        np.testing.assert_allclose(m.M, fg.per_shape[0].M, atol=1e-15)


def test_fixed_grid_anisotropic_matches_quadrature():
    spec = GridSpec((0, 0, 0), (1, 2, 1), (1, 1, 1))
    fg = fixed_grid_matrices(spec)
    h = spec.spacing
    for t, m in enumerate(fg.per_shape):
        M, K, _ = quadrature_matrices(CORNER_OFFSETS[TET_CORNERS[t]] * h)
        np.testing.assert_allclose(m.M, M, rtol=1e-12)
        np.testing.assert_allclose(m.K, K, rtol=1e-9, atol=1e-12)
    # tets whose paths take different first steps see different spacings
    assert not np.allclose(fg.per_shape[0].K, fg.per_shape[2].K)
