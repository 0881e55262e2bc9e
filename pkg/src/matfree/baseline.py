"""Sparse-matrix comparator: CSR assembly, threshold incomplete Cholesky, serial PCG.

This is both the correctness oracle for the matrix-free strategies and the
CPU baseline they are benchmarked against.
"""
from __future__ import annotations

import logging

import numba
import numpy as np
import scipy.sparse as sp

from .elements import local_matrices
from .errors import FactorizationError
from .materials import element_coefficients_all
from .mesh import element_vertex_table, vertex_positions
from .elements import local_matrices_batch
from .solver import PcgConfig, pcg

log = logging.getLogger(__name__)


def _scaled_element_matrices(op):
    spec = op.spec
    ev = element_vertex_table(spec)
    M, K, _ = local_matrices_batch(vertex_positions(spec)[ev])
    rho, k = element_coefficients_all(op.field, spec, np.asarray(op.vfrac, dtype=float))
    Ae = rho[:, None, None] * M + (op.k_sign * op.k_scale) * k[:, None, None] * K
    return ev, Ae


def assemble_csr(op) -> sp.csr_matrix:
    """Scatter-add of the scaled element matrices of ``op`` (A or L mode)."""
    ev, Ae = _scaled_element_matrices(op)
    rows = np.repeat(ev, 4, axis=1).ravel()
    cols = np.tile(ev, (1, 4)).ravel()
    n = op.spec.n_vertices
    A = sp.coo_matrix((Ae.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def assemble_dense(op, max_n: int = 1000) -> np.ndarray:
    """Element loop into a dense array, one element at a time.

    Independent of the CSR path; limited to small meshes.
    """
    spec = op.spec
    n = spec.n_vertices
    if n > max_n:
        raise ValueError(f"dense assembly limited to {max_n} vertices, mesh has {n}")
    pos = vertex_positions(spec)
    rho, k = element_coefficients_all(op.field, spec, np.asarray(op.vfrac, dtype=float))
    A = np.zeros((n, n))
    for e, verts in enumerate(element_vertex_table(spec)):
        em = local_matrices(*pos[verts])
        Ae = rho[e] * em.M + op.k_sign * op.k_scale * k[e] * em.K
        for a in range(4):
            for b in range(4):
                A[verts[a], verts[b]] += Ae[a, b]
    return A


# ---------------------------------------------------------------------------
# incomplete Cholesky with threshold dropping (left-looking, column-wise)

@numba.njit(cache=True)
def _ict(n, indptr, indices, data, droptol, shift):
    # A given as lower triangle in CSC (column j holds rows >= j, sorted).
    cap = max(4 * len(data), 16)
    Lp = np.zeros(n + 1, dtype=np.int64)
    Li = np.empty(cap, dtype=np.int64)
    Lx = np.empty(cap, dtype=np.float64)
    w = np.zeros(n)
    marked = np.zeros(n, dtype=np.bool_)
    rows = np.empty(n, dtype=np.int64)
    # linked lists of columns k whose next pending row is r
    head = -np.ones(n, dtype=np.int64)
    nxt = -np.ones(n, dtype=np.int64)
    pos = np.zeros(n, dtype=np.int64)
    nnz = 0
    for j in range(n):
        nr = 0
        colnorm = 0.0
        for p in range(indptr[j], indptr[j + 1]):
            i = indices[p]
            v = data[p]
            if i == j:
                v += shift
            w[i] = v
            colnorm += abs(v)
            if not marked[i]:
                marked[i] = True
                rows[nr] = i
                nr += 1
        if not marked[j]:
            marked[j] = True
            w[j] = shift
            rows[nr] = j
            nr += 1
        k = head[j]
        while k != -1:
            knext = nxt[k]
            p0 = pos[k]
            ljk = Lx[p0]
            for p in range(p0, Lp[k + 1]):
                i = Li[p]
                if not marked[i]:
                    marked[i] = True
                    w[i] = 0.0
                    rows[nr] = i
                    nr += 1
                w[i] -= Lx[p] * ljk
            pos[k] = p0 + 1
            if p0 + 1 < Lp[k + 1]:
                r = Li[p0 + 1]
                nxt[k] = head[r]
                head[r] = k
            k = knext
        head[j] = -1
        diag = w[j]
        if not diag > 0.0:
            return Lp, Li, Lx, j
        ljj = np.sqrt(diag)
        thresh = droptol * colnorm
        if nnz + nr > cap:
            cap = 2 * (nnz + nr) + cap
            Li2 = np.empty(cap, dtype=np.int64)
            Lx2 = np.empty(cap, dtype=np.float64)
            Li2[:nnz] = Li[:nnz]
            Lx2[:nnz] = Lx[:nnz]
            Li, Lx = Li2, Lx2
        kept = np.sort(rows[:nr])
        Li[nnz] = j
        Lx[nnz] = ljj
        nnz += 1
        for q in range(nr):
            i = kept[q]
            if i != j and abs(w[i]) >= thresh and w[i] != 0.0:
                Li[nnz] = i
                Lx[nnz] = w[i] / ljj
                nnz += 1
            w[i] = 0.0
            marked[i] = False
        Lp[j + 1] = nnz
        pos[j] = Lp[j] + 1
        if pos[j] < nnz:
            r = Li[pos[j]]
            nxt[j] = head[r]
            head[r] = j
    return Lp, Li[:nnz], Lx[:nnz], -1


@numba.njit(cache=True)
def _lower_solve(n, Lp, Li, Lx, b):
    x = b.copy()
    for j in range(n):
        x[j] /= Lx[Lp[j]]
        xj = x[j]
        for p in range(Lp[j] + 1, Lp[j + 1]):
            x[Li[p]] -= Lx[p] * xj
    return x


@numba.njit(cache=True)
def _upper_solve(n, Lp, Li, Lx, b):
    # solves L^T x = b with L stored by columns
    x = b.copy()
    for j in range(n - 1, -1, -1):
        s = x[j]
        for p in range(Lp[j] + 1, Lp[j + 1]):
            s -= Lx[p] * x[Li[p]]
        x[j] = s / Lx[Lp[j]]
    return x


class IncompleteCholesky:
    """Lower factor ``L`` with ``A ~ L L^T``; :meth:`solve` applies ``(L L^T)^-1``."""

    def __init__(self, Lp, Li, Lx, n, shift=0.0):
        self.Lp, self.Li, self.Lx, self.n, self.shift = Lp, Li, Lx, n, shift

    @property
    def L(self) -> sp.csc_matrix:
        return sp.csc_matrix((self.Lx, self.Li, self.Lp), shape=(self.n, self.n))

    def solve(self, r):
        y = _lower_solve(self.n, self.Lp, self.Li, self.Lx, np.asarray(r, dtype=np.float64))
        return _upper_solve(self.n, self.Lp, self.Li, self.Lx, y)

    __call__ = solve


def icholt(A, droptol: float = 1e-3, max_retries: int = 5) -> IncompleteCholesky:
    """Threshold IC; entries below ``droptol * ||A[j:, j]||_1`` are dropped.

    On a non-positive pivot the factorisation restarts with a diagonal shift,
    starting at ``1e-12 * trace / n`` and doubling each retry.
    """
    A = sp.csr_matrix(A)
    n = A.shape[0]
    low = sp.tril(A, format="csc")
    low.sort_indices()
    args = (n, low.indptr.astype(np.int64), low.indices.astype(np.int64),
            low.data.astype(np.float64), float(droptol))
    shift = 0.0
    step = 1e-12 * A.diagonal().sum() / n
    for attempt in range(max_retries + 1):
        Lp, Li, Lx, bad = _ict(*args, shift)
        if bad < 0:
            return IncompleteCholesky(Lp, Li, Lx, n, shift)
        if attempt == max_retries:
            break
        shift = step if shift == 0.0 else 2 * shift
        log.warning("IC pivot breakdown at column %d; retrying with diagonal shift %.3e", bad, shift)
    raise FactorizationError(f"incomplete Cholesky failed after {max_retries} shifted retries")


class JacobiPreconditioner:
    def __init__(self, A):
        self.diag = sp.csr_matrix(A).diagonal()

    def solve(self, r):
        return r / self.diag

    __call__ = solve


def pcg_sparse(A, b, x0, preconditioner="jacobi", cfg: PcgConfig | None = None, callback=None):
    """Serial PCG with an explicit SpMV; ``preconditioner`` is ``"jacobi"``,
    ``"ic"`` or an object with ``solve``."""
    A = sp.csr_matrix(A)
    if isinstance(preconditioner, str):
        if preconditioner == "jacobi":
            preconditioner = JacobiPreconditioner(A)
        elif preconditioner == "ic":
            preconditioner = icholt(A, 1e-3)
        else:
            raise ValueError(f"unknown preconditioner {preconditioner!r}")
    if isinstance(preconditioner, JacobiPreconditioner):
        return pcg(A.dot, b, x0, preconditioner.diag, cfg, callback=callback)
    return pcg(A.dot, b, x0, None, cfg, precond=preconditioner.solve,
               a_scale=float(np.abs(A.diagonal()).max()), callback=callback)
