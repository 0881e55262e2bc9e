"""Assembly-free application of ``A = M + theta*dt*K`` and ``L = M - (1-theta)*dt*K``.

Three DoF-by-DoF strategies share one operator description:

``flexible``
    Per-element scaled matrices are precomputed. Pass 1 gives every
    (element, local dof) pair one length-4 dot product written to a private
    slot (24 per vertex); pass 2 sums each vertex's slots.
``singlepass``
    One work item per output entry loops over the vertex's (up to) 24
    element contributions using the six fixed-grid matrices, scaling by the
    material coefficients in-loop, and stores once.
``coalesced``
    Work groups of 186 items cover 31 consecutive cubes of the padded index
    space, loaded as four 32-entry strips. Each item applies its whole
    tetrahedron, partial sums go to a 12-slot scratch per local vertex, and
    only the 30 interior vertices of each strip are stored, into one of four
    quadrant slots. Pass 2 sums the four slots.

No global matrix is ever formed.
"""
from __future__ import annotations

import numpy as np

from .elements import fixed_grid_matrices, local_matrices_batch
from . import materials
from .materials import MaterialField, element_coefficients_all
from .mesh import (CORNER_OFFSETS, SLOT_OF, SLOT_PATTERNS, SLOTS_PER_VERTEX, TET_CORNERS,
                   GridSpec, element_vertex_table, vertex_positions)
from .schedule import WorkGroupPlan, run_pass

STRATEGIES = ("flexible", "singlepass", "coalesced")
PRECISIONS = {"double": np.float64, "single": np.float32}

# coalesced geometry
STRIP = 32                 # vertices per coalesced load
CUBES_PER_GROUP = STRIP - 1
STORED_PER_STRIP = STRIP - 2
ITEMS_PER_GROUP = 6 * CUBES_PER_GROUP   # 186
SCRATCH_SLOTS = 12         # 2 x-neighbour cubes * 6 tets
SINGLEPASS_ROW = 64

_CORNER = CORNER_OFFSETS[TET_CORNERS]           # (6, 4, 3)
_STRIP_OF = _CORNER[..., 1] + 2 * _CORNER[..., 2]  # quadrant/strip id of each tet corner
_DI = _CORNER[..., 0]
_SCRATCH_SLOT = _DI * 6 + np.arange(6)[:, None]


class SystemOperator:
    """Implicit ``A`` (mode ``"A"``) or ``L`` (mode ``"L"``) for one material field.

    ``vertex_fraction`` overrides the per-vertex altered-material fraction;
    partition workers use it to evaluate the global field on a sub-grid.
    ``k_sign`` exists for fault injection in verification runs only.
    """

    def __init__(self, spec: GridSpec, field: MaterialField, theta: float = 0.5,
                 dt: float = 0.01, mode: str = "A", strategy: str = "coalesced",
                 precision: str = "double", vertex_fraction=None, k_sign: float = 1.0):
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
        if mode not in ("A", "L"):
            raise ValueError(f"mode must be 'A' or 'L', got {mode!r}")
        if not 0.0 <= theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if precision not in PRECISIONS:
            raise ValueError(f"precision must be one of {tuple(PRECISIONS)}")
        self.spec, self.field = spec, field
        self.theta, self.dt, self.mode = float(theta), float(dt), mode
        self.strategy, self.precision = strategy, precision
        self.dtype = PRECISIONS[precision]
        self.k_sign = float(k_sign)
        self.k_scale = self.theta * self.dt if mode == "A" else -(1.0 - self.theta) * self.dt

        vf = vertex_fraction if vertex_fraction is not None else materials.vertex_fraction(field, spec)
        self.vfrac = np.ascontiguousarray(vf, dtype=self.dtype)
        c = field.coefficients
        self._rho0, self._drho = c.rhoC[0], c.rhoC[1] - c.rhoC[0]
        self._k0, self._dk = c.k[0], c.k[1] - c.k[0]
        self.n = spec.n_vertices

        getattr(self, f"_setup_{strategy}")()

    # -- public ---------------------------------------------------------
    def apply(self, x, c: float = 1.0, b=None) -> np.ndarray:
        """``c * (op @ x) + b``; the fused form replaces a separate AXPY."""
        x = np.ascontiguousarray(x, dtype=self.dtype)
        if x.shape != (self.n,):
            raise ValueError(f"expected vector of length {self.n}, got {x.shape}")
        return getattr(self, f"_apply_{self.strategy}")(x, c, b, diag=False)

    def jacobi_diagonal(self) -> np.ndarray:
        return getattr(self, f"_apply_{self.strategy}")(None, 1.0, None, diag=True)

    def __call__(self, x):
        return self.apply(x)

    def with_mode(self, mode: str) -> "SystemOperator":
        return SystemOperator(self.spec, self.field, self.theta, self.dt, mode, self.strategy,
                              self.precision, self.vfrac, self.k_sign)

    # -- flexible DbD ---------------------------------------------------
    def _setup_flexible(self):
        spec = self.spec
        ev = element_vertex_table(spec)
        M, K, _ = local_matrices_batch(vertex_positions(spec)[ev])
        rho, k = element_coefficients_all(self.field, spec, self.vfrac.astype(float))
        Ae = rho[:, None, None] * M + (self.k_sign * self.k_scale) * k[:, None, None] * K
        self._ev = ev
        self._Ae = Ae.astype(self.dtype)
        self._Ae_diag = np.ascontiguousarray(np.diagonal(self._Ae, axis1=1, axis2=2))
        tet = np.arange(spec.n_elements) % 6
        self._slot_target = ev * SLOTS_PER_VERTEX + SLOT_OF[tet]
        self.plan = WorkGroupPlan("flexible_dbd", 24, 1, SLOTS_PER_VERTEX, spec.n_cubes)

    def _apply_flexible(self, x, c, b, diag):
        n, split = self.n, np.zeros(self.n * SLOTS_PER_VERTEX, dtype=self.dtype)

        def pass1(c0, c1):
            e0, e1 = 6 * c0, 6 * c1
            if diag:
                contrib = self._Ae_diag[e0:e1]
            else:
                contrib = np.einsum("eij,ej->ei", self._Ae[e0:e1], x[self._ev[e0:e1]])
            split[self._slot_target[e0:e1]] = contrib

        run_pass(self.spec.n_cubes, pass1)
        return self._sum_slots(split.reshape(n, SLOTS_PER_VERTEX), c, b)

    def _sum_slots(self, split, c, b):
        out = np.empty(self.n, dtype=self.dtype)

        def pass2(v0, v1):
            acc = split[v0:v1, 0].copy()
            for s in range(1, split.shape[1]):
                acc += split[v0:v1, s]
            if c != 1.0:
                acc *= c
            if b is not None:
                acc += b[v0:v1]
            out[v0:v1] = acc

        run_pass(self.n, pass2, max_chunk=1 << 16)
        return out

    # -- single-pass FG DbD --------------------------------------------
    def _setup_singlepass(self):
        spec = self.spec
        nx, ny, nz = spec.vertex_dims
        fg = fixed_grid_matrices(spec)
        self._M = fg.M.astype(self.dtype)
        self._K = (self.k_sign * fg.K).astype(self.dtype)
        Fp = np.zeros((nz + 2, ny + 2, nx + 2), dtype=self.dtype)
        Fp[1:-1, 1:-1, 1:-1] = self.vfrac.reshape(nz, ny, nx)
        Vp = np.zeros((nz + 1, ny + 1, nx + 1), dtype=self.dtype)
        Vp[1:-1, 1:-1, 1:-1] = 1.0
        self._Fp, self._Vp = Fp, Vp
        per_row = -(-nx // SINGLEPASS_ROW)
        self.plan = WorkGroupPlan("singlepass_dbd", SINGLEPASS_ROW, min(nx, SINGLEPASS_ROW), 0,
                                  per_row * ny * nz)

    def _apply_singlepass(self, x, c, b, diag):
        nx, ny, nz = self.spec.vertex_dims
        Fp, Vp, M, K, ks = self._Fp, self._Vp, self._M, self._K, self.k_scale
        if not diag:
            Xp = np.zeros_like(Fp)
            Xp[1:-1, 1:-1, 1:-1] = x.reshape(nz, ny, nx)
        out = np.empty((nz, ny, nx), dtype=self.dtype)
        bb = None if b is None else np.asarray(b, dtype=self.dtype).reshape(nz, ny, nx)

        def kernel(k0, k1):
            acc = np.zeros((k1 - k0, ny, nx), dtype=self.dtype)
            for corner, t, jj in SLOT_PATTERNS:
                d = CORNER_OFFSETS[corner]
                valid = Vp[k0 + 1 - d[2]:k1 + 1 - d[2], 1 - d[1]:1 - d[1] + ny, 1 - d[0]:1 - d[0] + nx]
                slices = []
                for m in range(4):
                    o = CORNER_OFFSETS[TET_CORNERS[t, m]] - d + 1
                    slices.append((slice(k0 + o[2], k1 + o[2]), slice(o[1], o[1] + ny),
                                   slice(o[0], o[0] + nx)))
                fbar = (Fp[slices[0]] + Fp[slices[1]] + Fp[slices[2]] + Fp[slices[3]]) * 0.25
                rho = (self._rho0 + self._drho * fbar) * valid
                kk = (self._k0 + self._dk * fbar) * valid
                if diag:
                    acc += rho * M[t, jj, jj] + ks * kk * K[t, jj, jj]
                    continue
                xs = [Xp[s] for s in slices]
                mx = M[t, jj, 0] * xs[0] + M[t, jj, 1] * xs[1] + M[t, jj, 2] * xs[2] + M[t, jj, 3] * xs[3]
                kx = K[t, jj, 0] * xs[0] + K[t, jj, 1] * xs[1] + K[t, jj, 2] * xs[2] + K[t, jj, 3] * xs[3]
                acc += rho * mx + ks * kk * kx
            if c != 1.0:
                acc *= c
            if bb is not None:
                acc += bb[k0:k1]
            out[k0:k1] = acc

        run_pass(nz, kernel, max_chunk=max(1, (1 << 18) // (nx * ny)))
        return out.reshape(-1)

    # -- coalesced FG DbD ----------------------------------------------
    def _setup_coalesced(self):
        spec = self.spec
        C = spec.divisions
        nx, ny, _ = spec.vertex_dims
        fg = fixed_grid_matrices(spec)
        self._M = fg.M.astype(self.dtype)
        self._K = (self.k_sign * fg.K).astype(self.dtype)

        n_orig = (C[0] + 1) * (C[1] + 1) * C[2]
        G = -(-n_orig // STORED_PER_STRIP)
        base = STORED_PER_STRIP * np.arange(G) - 1
        self._strip_offsets = np.array([0, nx, nx * ny, nx + nx * ny])
        p = np.arange(STRIP)
        # +1: the load buffer carries one leading zero for the first group's halo
        self._load_idx = (1 + base[:, None, None] + self._strip_offsets[None, :, None] + p).astype(np.intp)
        self._buf_len = int(self._load_idx.max()) + 1

        origin = base[:, None] + np.arange(CUBES_PER_GROUP)
        oi, oj = origin % nx, (origin // nx) % ny
        self._pad = (origin < 0) | (origin >= n_orig) | (oi == C[0]) | (oj == C[1])

        v = base[:, None, None] + self._strip_offsets[None, :, None] + np.arange(1, STRIP - 1)
        self._store_ok = v < self.n
        self._store_dst = np.where(self._store_ok, v * 4 + np.arange(4)[None, :, None], 0)

        cp = np.arange(CUBES_PER_GROUP)[:, None, None]
        self._g_strip = np.broadcast_to(_STRIP_OF, (CUBES_PER_GROUP, 6, 4))
        self._g_pos = cp + _DI
        self._g_slot = np.broadcast_to(_SCRATCH_SLOT, (CUBES_PER_GROUP, 6, 4))

        self._fbuf = self._load_buffer(self.vfrac)
        self.padded_origins = n_orig
        self.plan = WorkGroupPlan("coalesced_dbd", ITEMS_PER_GROUP, CUBES_PER_GROUP, 4, G)

    def _load_buffer(self, x):
        buf = np.zeros(self._buf_len, dtype=self.dtype)
        buf[1:1 + self.n] = x
        return buf

    def _coalesced_pass1(self, xbuf, diag):
        split = np.zeros(self.n * 4, dtype=self.dtype)
        M, K, ks = self._M, self._K, self.k_scale

        def kernel(g0, g1):
            idx = self._load_idx[g0:g1]
            f_loc = self._fbuf[idx]                                         # (g, 4, 32)
            f_el = f_loc[:, self._g_strip, self._g_pos]                    # (g, 31, 6, 4)
            fbar = (f_el[..., 0] + f_el[..., 1] + f_el[..., 2] + f_el[..., 3]) * 0.25
            live = ~self._pad[g0:g1, :, None]
            rho = (self._rho0 + self._drho * fbar) * live
            kk = (self._k0 + self._dk * fbar) * live
            if diag:
                contrib = (rho[..., None] * np.diagonal(M, axis1=1, axis2=2)
                           + ks * kk[..., None] * np.diagonal(K, axis1=1, axis2=2))
            else:
                x_el = xbuf[idx][:, self._g_strip, self._g_pos]
                contrib = (rho[..., None] * np.einsum("tij,gctj->gcti", M, x_el)
                           + ks * kk[..., None] * np.einsum("tij,gctj->gcti", K, x_el))
            scratch = np.zeros((g1 - g0, 4, STRIP, SCRATCH_SLOTS), dtype=self.dtype)
            scratch[:, self._g_strip, self._g_pos, self._g_slot] = contrib
            red = scratch[..., 0].copy()
            for s in range(1, SCRATCH_SLOTS):
                red += scratch[..., s]
            ok = self._store_ok[g0:g1]
            split[self._store_dst[g0:g1][ok]] = red[:, :, 1:STRIP - 1][ok]

        run_pass(self.plan.n_groups, kernel, max_chunk=256)
        return split.reshape(self.n, 4)

    def _apply_coalesced(self, x, c, b, diag):
        xbuf = None if diag else self._load_buffer(x)
        return self._sum_slots(self._coalesced_pass1(xbuf, diag), c, b)

    # -- write-set audit ------------------------------------------------
    def write_sets(self) -> dict:
        """Output slots written by every work item, per pass (for race audits).

        Returns ``{pass_name: (flat_targets, n_slots)}``; a pass is race free
        when ``flat_targets`` has no duplicates.
        """
        if self.strategy == "flexible":
            return {"pass1": (self._slot_target.ravel(), self.n * SLOTS_PER_VERTEX),
                    "pass2": (np.arange(self.n), self.n)}
        if self.strategy == "singlepass":
            return {"pass1": (np.arange(self.n), self.n)}
        scratch = (self._g_strip * STRIP + self._g_pos) * SCRATCH_SLOTS + self._g_slot
        return {"scratch": (scratch.ravel(), 4 * STRIP * SCRATCH_SLOTS),
                "pass1": (self._store_dst[self._store_ok], self.n * 4),
                "pass2": (np.arange(self.n), self.n)}


def apply_flexible_dbd(op: SystemOperator, x):
    return _as(op, "flexible").apply(x)


def apply_singlepass_dbd(op: SystemOperator, x):
    return _as(op, "singlepass").apply(x)


def apply_coalesced_dbd(op: SystemOperator, x, c: float = 1.0, b=None):
    return _as(op, "coalesced").apply(x, c, b)


def jacobi_diagonal(op: SystemOperator):
    if op.mode != "A":
        raise ValueError("Jacobi diagonal is defined for the A-mode operator")
    return op.jacobi_diagonal()


def _as(op, strategy):
    if op.strategy == strategy:
        return op
    return SystemOperator(op.spec, op.field, op.theta, op.dt, op.mode, strategy,
                          op.precision, op.vfrac, op.k_sign)
