"""Two-worker additive Schwarz execution of PCG, split along z.

Layer bookkeeping (``L = C[2] + 1`` vertex layers, ``n1 = ceil(m L)``):

* worker 0 owns layers ``[0, n1)`` and stores ``[0, n1]``; layer ``n1`` is its halo.
* worker 1 owns ``[n1, L)`` and stores ``[n1 - 2, L)``; layer ``n1 - 1`` is its
  halo and layer ``n1 - 2`` is the second overlap layer, which it never
  needs refreshed because it only feeds halo outputs.

Each iteration the workers swap one layer of ``d`` in each direction and two
partial dot products (for ``alpha`` and ``delta``); everything else is
worker-private. Dots use owned vertices only, so summing the two partials
gives the global value without double counting.
"""
from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import BreakdownError, ContractViolation, NonConvergenceError, PartitionError
from .mesh import GridSpec
from .operator import SystemOperator
from .solver import PcgConfig, axpy, beta_update, dimvm, dot

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PartitionPlan:
    spec: GridSpec
    m: float
    owned: tuple[tuple[int, int], tuple[int, int]]    # half-open layer ranges
    stored: tuple[tuple[int, int], tuple[int, int]]
    clamped: bool = False

    @property
    def n_layers(self) -> int:
        return self.spec.divisions[2] + 1

    @property
    def layer_size(self) -> int:
        nx, ny, _ = self.spec.vertex_dims
        return nx * ny

    @property
    def n_workers(self) -> int:
        return len(self.owned)

    def stored_slice(self, w: int) -> slice:
        lo, hi = self.stored[w]
        return slice(lo * self.layer_size, hi * self.layer_size)

    def owned_slice(self, w: int) -> slice:
        lo, hi = self.owned[w]
        return slice(lo * self.layer_size, hi * self.layer_size)

    def owned_local(self, w: int) -> slice:
        """Owned vertices inside worker ``w``'s stored vector."""
        s0 = self.stored[w][0]
        lo, hi = self.owned[w]
        return slice((lo - s0) * self.layer_size, (hi - s0) * self.layer_size)

    def sub_spec(self, w: int) -> GridSpec:
        """Stored range as its own grid, shifted in z so positions stay global."""
        lo, hi = self.stored[w]
        h = self.spec.spacing[2]
        bmin, bmax = list(self.spec.bounds_min), list(self.spec.bounds_max)
        z0 = self.spec.bounds_min[2]
        bmin[2] = z0 + lo * h
        bmax[2] = z0 + (hi - 1) * h
        C = self.spec.divisions
        return GridSpec(tuple(bmin), tuple(bmax), (C[0], C[1], hi - 1 - lo))

    def send_layer(self, w: int) -> int:
        """Global layer worker ``w`` sends each exchange (its boundary owned layer)."""
        return self.owned[0][1] - 1 if w == 0 else self.owned[1][0]

    def halo_layer(self, w: int) -> int:
        return self.send_layer(1 - w)

    def _local_layer(self, w: int, layer: int) -> slice:
        i = layer - self.stored[w][0]
        return slice(i * self.layer_size, (i + 1) * self.layer_size)


def split_domain(spec: GridSpec, m: float) -> PartitionPlan:
    L = spec.divisions[2] + 1
    if spec.divisions[2] < 3:
        raise PartitionError(f"need at least 3 z divisions to partition, got {spec.divisions[2]}")
    if not 0.0 < m < 1.0:
        raise PartitionError(f"split fraction must lie in (0, 1), got {m}")
    n1 = math.ceil(m * L)
    clamped = False
    if n1 < 2 or n1 > L - 2:
        n1 = min(max(n1, 2), L - 2)
        clamped = True
        log.warning("split fraction %.3f leaves a worker with < 2 owned layers; clamped to %d/%d",
                    m, n1, L)
    return PartitionPlan(spec, m, ((0, n1), (n1, L)), ((0, n1 + 1), (n1 - 2, L)), clamped)


def scatter(plan: PartitionPlan, v) -> list[np.ndarray]:
    """Global vector -> per-worker stored copies."""
    return [np.array(v[plan.stored_slice(w)]) for w in range(plan.n_workers)]


def gather(plan: PartitionPlan, parts) -> np.ndarray:
    """Per-worker vectors -> global vector from owned portions."""
    out = np.empty(plan.spec.n_vertices, dtype=parts[0].dtype)
    for w, p in enumerate(parts):
        out[plan.owned_slice(w)] = p[plan.owned_local(w)]
    return out


def exchange_halos(plan: PartitionPlan, d) -> list[np.ndarray]:
    out = [np.array(v) for v in d]
    for w in range(2):
        layer = plan.send_layer(w)
        out[1 - w][plan._local_layer(1 - w, layer)] = d[w][plan._local_layer(w, layer)]
    return out


def merged_dot(plan: PartitionPlan, x, y, group_size: int = 256) -> float:
    partial = [dot(x[w][plan.owned_local(w)], y[w][plan.owned_local(w)], group_size)
               for w in range(plan.n_workers)]
    return partial[0] + partial[1]


@dataclass
class TransferAudit:
    itemsize: int
    layer_size: int
    setup_layers: int = 0
    setup_scalars: int = 0
    # per PCG iteration: [layers sent w0->w1, w1->w0, scalars w0->w1, w1->w0]
    per_iteration: list = field(default_factory=list)

    @property
    def bytes_per_exchange(self) -> int:
        return 2 * self.layer_size * self.itemsize


class _Link:
    """Rendezvous buffers between the two workers."""

    def __init__(self, audit: TransferAudit):
        self.barrier = threading.Barrier(2)
        self.scalars = [0.0, 0.0]
        self.layers = [None, None]
        self.audit = audit
        self.counts = [[0, 0], [0, 0]]  # [worker][layers, scalars] sent since last mark

    def allreduce(self, w, partial):
        self.scalars[w] = partial
        self.barrier.wait()
        total = self.scalars[0] + self.scalars[1]
        self.counts[w][1] += 1
        self.barrier.wait()
        return total

    def swap(self, w, outgoing):
        self.layers[w] = outgoing.copy()
        self.barrier.wait()
        incoming = self.layers[1 - w]
        self.counts[w][0] += 1
        self.barrier.wait()
        return incoming

    def mark(self, w, setup=False):
        # both workers reach here in lockstep; worker 0 books the tally
        self.barrier.wait()
        if w == 0:
            (l0, s0), (l1, s1) = self.counts
            if setup:
                self.audit.setup_layers += l0 + l1
                self.audit.setup_scalars += s0 + s1
            else:
                self.audit.per_iteration.append((l0, l1, s0, s1))
            self.counts = [[0, 0], [0, 0]]
        self.barrier.wait()


@dataclass
class PartitionedResult:
    x: np.ndarray
    iterations: int
    delta: float
    audit: TransferAudit
    trace: list | None = None


def pcg_partitioned(op: SystemOperator, b, x0, plan: PartitionPlan,
                    cfg: PcgConfig | None = None, trace: bool = False) -> PartitionedResult:
    """Lockstep PCG on two workers; returns the reassembled global solution.

    Both workers always run the coalesced strategy. ``trace`` records the
    owned portions of (x, r, d) after every iteration, reassembled.
    """
    cfg = cfg or PcgConfig()
    if op.mode != "A":
        raise ValueError("pcg_partitioned needs the A-mode operator")
    n = op.spec.n_vertices
    i_max = cfg.max_iterations(n)
    gs = cfg.group_size
    audit = TransferAudit(np.dtype(op.dtype).itemsize, plan.layer_size)
    link = _Link(audit)
    b = np.asarray(b, dtype=op.dtype)
    x0 = np.asarray(x0, dtype=op.dtype)
    results: list = [None, None]
    errors: list = [None, None]
    traces: list = [[], []]

    def worker(w):
        try:
            sub = SystemOperator(plan.sub_spec(w), op.field, op.theta, op.dt, "A", "coalesced",
                                 op.precision, op.vfrac[plan.stored_slice(w)], op.k_sign)
            own = plan.owned_local(w)
            send = plan._local_layer(w, plan.send_layer(w))
            halo = plan._local_layer(w, plan.halo_layer(w))
            P = sub.jacobi_diagonal()
            bw = b[plan.stored_slice(w)].copy()
            x = x0[plan.stored_slice(w)].copy()

            def refresh(v):
                v[halo] = link.swap(w, v[send])

            def mdot(u, v):
                return link.allreduce(w, dot(u[own], v[own], gs))

            r = sub.apply(x, -1.0, bw)
            d = dimvm(P, r)
            refresh(d)
            delta = mdot(r, d)
            stop = max(cfg.tol**2 * delta, cfg.floor**2 * mdot(bw, dimvm(P, bw)))
            link.mark(w, setup=True)
            i = 0
            while i < i_max and delta > stop:
                q = sub.apply(d)
                dq = mdot(d, q)
                if not dq > 0:
                    raise BreakdownError(f"d^T A d = {dq:.3e} at iteration {i}")
                alpha = delta / dq
                x = axpy(x, d, alpha)
                if i % cfg.recompute_period == 0:
                    r = sub.apply(x, -1.0, bw)
                else:
                    r = axpy(r, q, -alpha)
                s = dimvm(P, r)
                delta_new = mdot(r, s)
                beta, delta = beta_update(delta_new, delta)
                d = axpy(s, d, beta)
                refresh(d)
                link.mark(w)
                i += 1
                if trace:
                    traces[w].append((x[own].copy(), r[own].copy(), d[own].copy()))
            results[w] = (x, i, delta, delta > stop)
        except BaseException as exc:  # noqa: BLE001 - re-raised on the caller's thread
            errors[w] = exc
            link.barrier.abort()

    threads = [threading.Thread(target=worker, args=(w,), name=f"partition-{w}") for w in range(2)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    primary = [e for e in errors if e is not None and not isinstance(e, threading.BrokenBarrierError)]
    if primary:
        raise primary[0]
    if any(e is not None for e in errors):
        raise errors[0] or errors[1]

    (x0w, it0, d0, fail0), (x1w, it1, d1, fail1) = results
    if it0 != it1 or d0 != d1:
        raise ContractViolation(f"workers disagree: iterations {it0}/{it1}, delta {d0}/{d1}")
    x = gather(plan, [x0w, x1w])
    if fail0:
        raise NonConvergenceError(it0, d0, x)
    tr = None
    if trace:
        tr = [tuple(np.concatenate([traces[0][i][k], traces[1][i][k]]) for k in range(3))
              for i in range(it0)]
    return PartitionedResult(x, it0, d0, audit, tr)
