"""Fixed-grid box mesh: cubes split into six Kuhn tetrahedra.

Vertices are numbered x-fastest, ``idx = i + nx*(j + ny*k)`` with
``nx = C[0]+1`` and ``ny = C[1]+1``. Elements are numbered six per cube,
cubes x-fastest as well, so element ``e`` lives in cube ``e // 6`` and is
tetrahedron ``e % 6`` of that cube.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

# corner id c = di + 2*dj + 4*dk
CORNER_OFFSETS = np.array([[c & 1, (c >> 1) & 1, (c >> 2) & 1] for c in range(8)], dtype=np.int64)


def _kuhn_table():
    # One tetrahedron per axis permutation, vertices along the monotone
    # lattice path (0,0,0) -> e_a -> e_a + e_b -> (1,1,1). Odd permutations
    # give a left-handed path, so their last two vertices are swapped to keep
    # every stored orientation positive.
    rows = []
    for perm in permutations(range(3)):
        path = [0]
        c = 0
        for axis in perm:
            c |= 1 << axis
            path.append(c)
        if np.linalg.det(np.eye(3)[list(perm)]) < 0:
            path[2], path[3] = path[3], path[2]
        rows.append(path)
    return np.array(rows, dtype=np.int64)


TET_CORNERS = _kuhn_table()  # (6, 4) cube-corner ids


def _corner_incidence():
    # For every corner, the (tet, local dof) pairs touching it, tet-ascending.
    out = []
    for c in range(8):
        out.append([(t, int(np.nonzero(TET_CORNERS[t] == c)[0][0]))
                    for t in range(6) if c in TET_CORNERS[t]])
    return out


CORNER_INCIDENCE = _corner_incidence()

# Flat list of the 24 (corner, tet, local dof) patterns a vertex can take part
# in; the list position is the vertex's private slot id.
SLOT_PATTERNS = np.array([(c, t, j) for c in range(8) for (t, j) in CORNER_INCIDENCE[c]],
                         dtype=np.int64)
SLOTS_PER_VERTEX = len(SLOT_PATTERNS)
assert SLOTS_PER_VERTEX == 24

# slot id for (tet, local dof)
SLOT_OF = np.empty((6, 4), dtype=np.int64)
for _s, (_c, _t, _j) in enumerate(SLOT_PATTERNS):
    SLOT_OF[_t, _j] = _s


@dataclass(frozen=True)
class GridSpec:
    bounds_min: tuple[float, float, float]
    bounds_max: tuple[float, float, float]
    divisions: tuple[int, int, int]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.bounds_min)
        hi = tuple(float(v) for v in self.bounds_max)
        C = tuple(int(v) for v in self.divisions)
        if len(lo) != 3 or len(hi) != 3 or len(C) != 3:
            raise ValueError("bounds and divisions must have length 3")
        if any(h <= l for l, h in zip(lo, hi)):
            raise ValueError(f"bounds_max must exceed bounds_min on every axis: {lo} {hi}")
        if any(c < 1 for c in C):
            raise ValueError(f"divisions must be positive: {C}")
        object.__setattr__(self, "bounds_min", lo)
        object.__setattr__(self, "bounds_max", hi)
        object.__setattr__(self, "divisions", C)

    @property
    def spacing(self) -> np.ndarray:
        return (np.array(self.bounds_max) - np.array(self.bounds_min)) / np.array(self.divisions)

    @property
    def vertex_dims(self) -> tuple[int, int, int]:
        C = self.divisions
        return (C[0] + 1, C[1] + 1, C[2] + 1)

    @property
    def n_vertices(self) -> int:
        nx, ny, nz = self.vertex_dims
        return nx * ny * nz

    @property
    def n_cubes(self) -> int:
        C = self.divisions
        return C[0] * C[1] * C[2]

    @property
    def n_elements(self) -> int:
        return 6 * self.n_cubes

    def to_dict(self) -> dict:
        return {"bounds": [list(self.bounds_min), list(self.bounds_max)],
                "divisions": list(self.divisions)}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        lo, hi = d["bounds"]
        return cls(tuple(lo), tuple(hi), tuple(d["divisions"]))


def vertex_index(spec: GridSpec, i, j, k):
    nx, ny, _ = spec.vertex_dims
    return i + nx * (j + ny * k)


def decode_vertex(spec: GridSpec, idx):
    nx, ny, _ = spec.vertex_dims
    return idx % nx, (idx // nx) % ny, idx // (nx * ny)


def vertex_position(spec: GridSpec, idx: int) -> np.ndarray:
    if not 0 <= idx < spec.n_vertices:
        raise IndexError(f"vertex index {idx} out of range [0, {spec.n_vertices})")
    ijk = np.array(decode_vertex(spec, int(idx)), dtype=float)
    return np.array(spec.bounds_min) + ijk * spec.spacing


def vertex_positions(spec: GridSpec) -> np.ndarray:
    """All vertex coordinates, shape (N, 3), in index order."""
    idx = np.arange(spec.n_vertices)
    ijk = np.stack(decode_vertex(spec, idx), axis=1).astype(float)
    return np.array(spec.bounds_min) + ijk * spec.spacing


def element_vertices(spec: GridSpec, e: int) -> np.ndarray:
    if not 0 <= e < spec.n_elements:
        raise IndexError(f"element index {e} out of range [0, {spec.n_elements})")
    cube, t = divmod(int(e), 6)
    C = spec.divisions
    ci, cj, ck = cube % C[0], (cube // C[0]) % C[1], cube // (C[0] * C[1])
    off = CORNER_OFFSETS[TET_CORNERS[t]]
    return vertex_index(spec, ci + off[:, 0], cj + off[:, 1], ck + off[:, 2])


def element_vertex_table(spec: GridSpec) -> np.ndarray:
    """Vertex indices of every element, shape (E, 4), TetTable order."""
    C = spec.divisions
    cube = np.arange(spec.n_cubes)
    ci, cj, ck = cube % C[0], (cube // C[0]) % C[1], cube // (C[0] * C[1])
    origin = vertex_index(spec, ci, cj, ck)
    nx, ny, _ = spec.vertex_dims
    corner_shift = CORNER_OFFSETS @ np.array([1, nx, nx * ny])
    return (origin[:, None, None] + corner_shift[TET_CORNERS][None, :, :]).reshape(-1, 4)


@dataclass(frozen=True)
class PaddedSpace:
    """Cube index space extended by one cube layer in +x and +y.

    Padded cube ``c`` has its first corner at vertex ``c`` of the original
    numbering, which is how the coalesced kernel addresses cubes.
    """

    spec: GridSpec
    cube_dims: tuple[int, int, int]
    cube_mask: np.ndarray     # True where the padded cube is non-physical
    element_mask: np.ndarray  # cube_mask repeated for the six tets

    @property
    def n_cubes(self) -> int:
        return int(np.prod(self.cube_dims))

    @property
    def padding_fraction(self) -> float:
        return float(self.cube_mask.mean())


def padded_spec(spec: GridSpec) -> PaddedSpace:
    C = spec.divisions
    dims = (C[0] + 1, C[1] + 1, C[2])
    c = np.arange(dims[0] * dims[1] * dims[2])
    i, j = c % dims[0], (c // dims[0]) % dims[1]
    mask = (i == C[0]) | (j == C[1])
    return PaddedSpace(spec, dims, mask, np.repeat(mask, 6))
