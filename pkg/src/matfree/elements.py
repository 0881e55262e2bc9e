"""Local mass and stiffness matrices for linear tetrahedra."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateElementError
from .mesh import CORNER_OFFSETS, TET_CORNERS, GridSpec

_MASS_PATTERN = (np.ones((4, 4)) + np.eye(4)) / 20.0


@dataclass(frozen=True)
class ElementMatrices:
    M: np.ndarray  # unscaled by rhoC
    K: np.ndarray  # unscaled by k
    volume: float


@dataclass(frozen=True)
class FixedGridMatrices:
    per_shape: tuple[ElementMatrices, ...]

    @property
    def M(self) -> np.ndarray:
        return np.stack([m.M for m in self.per_shape])

    @property
    def K(self) -> np.ndarray:
        return np.stack([m.K for m in self.per_shape])


def local_matrices_batch(verts: np.ndarray):
    """Vectorised form of :func:`local_matrices`.

    ``verts`` has shape (E, 4, 3). Returns ``(M, K, volume)`` with shapes
    (E, 4, 4), (E, 4, 4), (E,).
    """
    verts = np.asarray(verts, dtype=float)
    J = np.transpose(verts[:, 1:, :] - verts[:, :1, :], (0, 2, 1))  # columns are edges
    det = np.linalg.det(J)
    vol = np.abs(det) / 6.0
    edge = np.linalg.norm(verts[:, 1:, :] - verts[:, :1, :], axis=2).max(axis=1)
    bad = vol <= 1e-12 * edge**3
    if np.any(bad):
        raise DegenerateElementError(f"{int(bad.sum())} degenerate tetrahedra (volume ~ 0)")
    Jinv = np.linalg.inv(J)  # row a = gradient of barycentric coordinate a+1
    grads = np.concatenate([-Jinv.sum(axis=1, keepdims=True), Jinv], axis=1)
    K = vol[:, None, None] * np.einsum("eak,ebk->eab", grads, grads)
    M = vol[:, None, None] * _MASS_PATTERN
    return M, K, vol


def local_matrices(v0, v1, v2, v3) -> ElementMatrices:
    M, K, vol = local_matrices_batch(np.array([[v0, v1, v2, v3]], dtype=float))
    return ElementMatrices(M[0], K[0], float(vol[0]))


def fixed_grid_matrices(spec: GridSpec) -> FixedGridMatrices:
    # Reference cube [0,h0]x[0,h1]x[0,h2]; one matrix pair per Kuhn tet.
    corners = CORNER_OFFSETS * spec.spacing
    M, K, vol = local_matrices_batch(corners[TET_CORNERS])
    return FixedGridMatrices(tuple(ElementMatrices(M[t], K[t], float(vol[t])) for t in range(6)))
