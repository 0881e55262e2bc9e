"""Benchmark sweep: time per PCG iteration over mesh sizes and strategies."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from .materials import MaterialField
from .mesh import GridSpec
from .operator import SystemOperator
from .partition import pcg_partitioned, split_domain
from .solver import PcgConfig, TransientProblem, boundary_load, simulate

log = logging.getLogger(__name__)

RECORD_FIELDS = ("dofs", "divisions", "strategy", "precision", "partitions", "total_iterations",
                 "seconds_per_iteration", "total_seconds", "status")
PHASE_FIELDS = ("dofs", "strategy", "partitions", "phase", "seconds")


@dataclass
class BenchRecord:
    dofs: int
    divisions: str
    strategy: str
    precision: str
    partitions: int
    total_iterations: int = 0
    seconds_per_iteration: float = float("nan")
    total_seconds: float = float("nan")
    status: str = "ok"
    setup_seconds: float = 0.0
    pcg_seconds: float = 0.0

    def row(self):
        d = asdict(self)
        return [d[k] for k in RECORD_FIELDS]

    def phases(self):
        other = max(self.total_seconds - self.setup_seconds - self.pcg_seconds, 0.0)
        return [[self.dofs, self.strategy, self.partitions, name, secs]
                for name, secs in (("setup", self.setup_seconds), ("pcg", self.pcg_seconds),
                                   ("other", other))]


def scaled_spec(base: GridSpec, divisions) -> GridSpec:
    return GridSpec(base.bounds_min, base.bounds_max, tuple(divisions))


def run_case(spec: GridSpec, field: MaterialField, flux, strategy: str, precision: str = "double",
             partitions: int = 1, split_fraction: float = 0.5, dt: float = 0.01, theta: float = 0.5,
             n_steps: int = 5, cfg: PcgConfig | None = None, face: str = "zmin") -> BenchRecord:
    """One benchmark cell. Mesh and fixed-grid matrix set-up is timed
    separately from the PCG solves."""
    rec = BenchRecord(spec.n_vertices, "x".join(map(str, spec.divisions)), strategy, precision,
                      partitions)
    t0 = time.perf_counter()
    try:
        op_A = SystemOperator(spec, field, theta, dt, "A", strategy, precision)
        op_L = op_A.with_mode("L")
        F = boundary_load(spec, flux, dt, face)
        problem = TransientProblem(op_A, op_L, F, 0.0, n_steps, dt, theta)
        problem.diag
        solve = None
        if partitions == 2:
            plan = split_domain(spec, split_fraction)

            def solve(b, x0):
                return pcg_partitioned(op_A, b, x0, plan, cfg)
        rec.setup_seconds = time.perf_counter() - t0
        res = simulate(problem, cfg, solve=solve)
    except MemoryError:
        log.warning("out of memory at %d DoF (%s, %d partitions); skipped",
                    spec.n_vertices, strategy, partitions)
        rec.status = "skipped"
        return rec
    rec.total_seconds = time.perf_counter() - t0
    rec.total_iterations = res.total_iterations
    rec.pcg_seconds = float(sum(res.pcg_seconds))
    rec.seconds_per_iteration = res.seconds_per_iteration
    return rec


def sweep(base: GridSpec, field: MaterialField, flux, sizes, strategies, partitions=(1,),
          precision: str = "double", **kwargs) -> list[BenchRecord]:
    records = []
    for divisions in sizes:
        spec = scaled_spec(base, divisions)
        for strategy in strategies:
            for parts in partitions:
                if parts == 2 and spec.divisions[2] < 3:
                    log.warning("mesh %s too thin to partition; skipped", divisions)
                    records.append(BenchRecord(spec.n_vertices, "x".join(map(str, divisions)),
                                               strategy, precision, parts, status="skipped"))
                    continue
                rec = run_case(spec, field, flux, strategy, precision, parts, **kwargs)
                log.info("%s %s p=%d: %.3e s/iter", rec.divisions, strategy, parts,
                         rec.seconds_per_iteration)
                records.append(rec)
    return records


def loglog_slope(dofs, seconds) -> float:
    """Least-squares slope of log(seconds) against log(dofs)."""
    x = np.log(np.asarray(dofs, dtype=float))
    y = np.log(np.asarray(seconds, dtype=float))
    if x.size < 2:
        return math.nan
    return float(np.polyfit(x, y, 1)[0])


def slopes(records, largest: int | None = None) -> dict:
    """Slope and DoF span per (strategy, partitions), fitted over the ``largest``
    completed sizes (all of them by default)."""
    out = {}
    keys = sorted({(r.strategy, r.partitions) for r in records})
    for key in keys:
        done = sorted((r for r in records if (r.strategy, r.partitions) == key and r.status == "ok"),
                      key=lambda r: r.dofs)[-(largest or 0):]
        span = done[-1].dofs / done[0].dofs if done else math.nan
        out[key] = (loglog_slope([r.dofs for r in done], [r.seconds_per_iteration for r in done]), span)
    return out
