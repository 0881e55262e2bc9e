"""Jacobi-preconditioned CG, the vector kernels it is built from, and the
theta-scheme time stepper."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import BreakdownError, ContractViolation, NonConvergenceError
from .mesh import GridSpec, decode_vertex, vertex_positions

MAX_WORKGROUP = 256


# ---------------------------------------------------------------------------
# vector kernels

def _tree_level(v: np.ndarray, group: int) -> np.ndarray:
    n_groups = -(-v.size // group)
    buf = np.zeros(n_groups * group, dtype=v.dtype)
    buf[:v.size] = v
    buf = buf.reshape(n_groups, group)
    w = group
    while w > 1:
        w //= 2
        buf[:, :w] += buf[:, w:2 * w]
    return buf[:, 0].copy()


def dot(x, y, group_size: int = MAX_WORKGROUP) -> float:
    """Dot product summed by a fixed-shape tree: pairwise halving inside
    groups of ``group_size`` (a power of two), repeated on the group sums."""
    x, y = np.asarray(x), np.asarray(y)
    if x.shape != y.shape:
        raise ContractViolation(f"length mismatch: {x.shape} vs {y.shape}")
    if group_size & (group_size - 1):
        raise ValueError("group_size must be a power of two")
    partial = x * y
    if partial.size == 0:
        return 0.0
    while partial.size > 1:
        partial = _tree_level(partial, group_size)
    return float(partial[0])


def axpy(x, y, a):
    """``x + a*y``"""
    if np.shape(x) != np.shape(y):
        raise ContractViolation(f"length mismatch: {np.shape(x)} vs {np.shape(y)}")
    return x + a * y


def dimvm(P_diag, x):
    if np.shape(P_diag) != np.shape(x):
        raise ContractViolation(f"length mismatch: {np.shape(P_diag)} vs {np.shape(x)}")
    return x / P_diag


def beta_update(delta_new: float, delta_old: float):
    """Returns ``(beta, delta_old')``; the stored delta becomes ``delta_new``."""
    return delta_new / delta_old, delta_new


def extrapolate_guess(u0_prev_guess, u_solved):
    """Linear extrapolation for the next step's initial guess."""
    return u_solved + (u_solved - u0_prev_guess)


# ---------------------------------------------------------------------------
# PCG

@dataclass(frozen=True)
class PcgConfig:
    tol: float = 1e-6
    i_max: int | None = None      # None: 10*sqrt(N)
    recompute_period: int = 50
    group_size: int = MAX_WORKGROUP
    floor: float = 1e-14          # also stop once sqrt(delta) is this small relative to b


    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.recompute_period < 1:
            raise ValueError("recompute_period must be >= 1")

    def max_iterations(self, n: int) -> int:
        return self.i_max if self.i_max is not None else max(1, int(10 * math.sqrt(n)))


@dataclass
class PcgResult:
    x: np.ndarray
    iterations: int
    delta: float
    delta0: float


def pcg(apply_A, b, x0, P_diag, cfg: PcgConfig | None = None, *, residual=None, precond=None,
        a_scale=None, callback=None) -> PcgResult:
    """Preconditioned CG.

    Converged when ``delta_new <= tol**2 * delta_0`` with ``delta = r^T P^-1 r``,
    or when ``delta_new <= floor**2 * b^T P^-1 b`` (the residual is roundoff,
    e.g. after an exact initial guess).
    ``residual(x)`` may supply a fused ``b - A x``; ``precond`` replaces the
    diagonal solve. ``callback(i, x, r, d)`` runs after every iteration.
    """
    cfg = cfg or PcgConfig()
    b = np.asarray(b)
    i_max = cfg.max_iterations(b.size)
    gs = cfg.group_size
    if residual is None:
        def residual(v):
            return axpy(b, apply_A(v), -1.0)
    if precond is None:
        def precond(v):
            return dimvm(P_diag, v)
    if a_scale is None and P_diag is not None:
        a_scale = float(np.max(np.abs(P_diag)))

    x = np.array(x0, dtype=b.dtype, copy=True)
    r = residual(x)
    d = precond(r)
    delta = dot(r, d, gs)
    delta0 = delta
    stop = max(cfg.tol**2 * delta0, cfg.floor**2 * dot(b, precond(b), gs))
    i = 0
    while i < i_max and delta > stop:
        q = apply_A(d)
        dq = dot(d, q, gs)
        if not dq > 0 or (a_scale and dq <= 1e-14 * a_scale * float(np.dot(d, d))):
            raise BreakdownError(f"d^T A d = {dq:.3e} at iteration {i}; operator not SPD")
        alpha = delta / dq
        x = axpy(x, d, alpha)
        if i % cfg.recompute_period == 0:
            r = residual(x)
        else:
            r = axpy(r, q, -alpha)
        s = precond(r)
        delta_new = dot(r, s, gs)
        beta, delta = beta_update(delta_new, delta)
        d = axpy(s, d, beta)
        i += 1
        if callback is not None:
            callback(i, x, r, d)
    if delta > stop:
        raise NonConvergenceError(i, delta, x)
    return PcgResult(x, i, delta, delta0)


# ---------------------------------------------------------------------------
# loads

FACES = {"xmin": (0, 0), "xmax": (0, 1), "ymin": (1, 0), "ymax": (1, 1), "zmin": (2, 0), "zmax": (2, 1)}


def uniform_flux(value: float = 1.0):
    def f(x, y, z):
        return np.full(np.shape(x), float(value))
    return f


def gaussian_beam(power: float, sigma: float, center=(0.0, 0.0)):
    """Flux ``P/(2 pi s^2) exp(-r^2 / 2 s^2)`` in the face plane (x, y)."""
    cx, cy = center

    def f(x, y, z):
        r2 = (x - cx) ** 2 + (y - cy) ** 2
        return power / (2 * np.pi * sigma**2) * np.exp(-r2 / (2 * sigma**2))
    return f


def face_triangles(spec: GridSpec, face: str = "zmin"):
    """Boundary triangles on one face, split along the Kuhn diagonal.

    Returns ``(tri, area)``: vertex indices (T, 3) and the common area.
    """
    axis, side = FACES[face]
    p, q = [a for a in range(3) if a != axis]
    nx, ny, nz = spec.vertex_dims
    dims = (nx, ny, nz)
    C = spec.divisions
    a = np.arange(C[p])[:, None]
    c = np.arange(C[q])[None, :]
    a, c = np.broadcast_arrays(a, c)
    a, c = a.ravel(), c.ravel()
    fixed = 0 if side == 0 else dims[axis] - 1
    strides = (1, nx, nx * ny)

    def vid(da, dc):
        return (a + da) * strides[p] + (c + dc) * strides[q] + fixed * strides[axis]

    v00, v10, v11, v01 = vid(0, 0), vid(1, 0), vid(1, 1), vid(0, 1)
    tri = np.concatenate([np.stack([v00, v10, v11], 1), np.stack([v00, v01, v11], 1)])
    h = spec.spacing
    return tri, 0.5 * h[p] * h[q]


def boundary_load(spec: GridSpec, f, dt: float, face: str = "zmin") -> np.ndarray:
    """``dt * int f phi ds`` over one face by centroid quadrature per triangle."""
    tri, area = face_triangles(spec, face)
    pos = vertex_positions(spec)
    cen = pos[tri].mean(axis=1)
    val = dt * area / 3.0 * f(cen[:, 0], cen[:, 1], cen[:, 2])
    return np.bincount(tri.ravel(), weights=np.repeat(val, 3), minlength=spec.n_vertices)


# ---------------------------------------------------------------------------
# time stepping

@dataclass
class TransientProblem:
    op_A: object
    op_L: object
    F: np.ndarray           # already multiplied by dt
    T_ambient: float = 0.0
    n_steps: int = 1
    dt: float = 0.01
    theta: float = 0.5
    _diag: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        for op in (self.op_A, self.op_L):
            if op.theta != self.theta or op.dt != self.dt:
                raise ValueError("operators must share the problem's theta and dt")

    @property
    def diag(self) -> np.ndarray:
        if self._diag is None:
            self._diag = self.op_A.jacobi_diagonal()
        return self._diag

    @property
    def n(self) -> int:
        return self.op_A.spec.n_vertices


def step(problem: TransientProblem, U_prev, x_guess, cfg: PcgConfig | None = None, solve=None):
    """One time step; returns the ``PcgResult`` whose ``x`` is ``U^{i}``."""
    b = problem.op_L.apply(U_prev, 1.0, problem.F)
    if solve is not None:
        return solve(b, x_guess)
    op = problem.op_A
    return pcg(op.apply, b, x_guess, problem.diag, cfg,
               residual=lambda v: op.apply(v, -1.0, b))


@dataclass
class SimulationResult:
    final: np.ndarray
    iterations: list[int]
    pcg_seconds: list[float]
    snapshots: list[np.ndarray] | None = None

    @property
    def total_iterations(self) -> int:
        return int(sum(self.iterations))

    @property
    def seconds_per_iteration(self) -> float:
        it = self.total_iterations
        return sum(self.pcg_seconds) / it if it else float("nan")


def simulate(problem: TransientProblem, cfg: PcgConfig | None = None, U0=None,
             keep_snapshots: bool = False, solve=None) -> SimulationResult:
    U = (np.full(problem.n, problem.T_ambient, dtype=problem.op_A.dtype) if U0 is None
         else np.array(U0, dtype=problem.op_A.dtype))
    guess = U.copy()
    its, secs = [], []
    snaps = [U.copy()] if keep_snapshots else None
    problem.diag  # preconditioner is set-up work, not PCG time
    for _ in range(problem.n_steps):
        t0 = time.perf_counter()
        res = step(problem, U, guess, cfg, solve)
        secs.append(time.perf_counter() - t0)
        its.append(res.iterations)
        guess = extrapolate_guess(guess, res.x)
        U = res.x
        if keep_snapshots:
            snaps.append(U.copy())
    return SimulationResult(U, its, secs, snaps)


def face_mean(spec: GridSpec, field_values, face: str = "zmin") -> float:
    axis, side = FACES[face]
    ijk = decode_vertex(spec, np.arange(spec.n_vertices))
    target = 0 if side == 0 else spec.vertex_dims[axis] - 1
    return float(np.mean(np.asarray(field_values)[ijk[axis] == target]))
