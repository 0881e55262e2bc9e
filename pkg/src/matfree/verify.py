"""Self-checks run by ``matfree verify``.

Each suite returns a :class:`SuiteResult` naming the module it exercises, so a
failure report points at the code that broke.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from .baseline import assemble_csr
from .materials import KINDS, MaterialField
from .mesh import GridSpec
from .operator import STRATEGIES, SystemOperator
from .partition import pcg_partitioned, split_domain
from .solver import (PcgConfig, TransientProblem, boundary_load, dot, pcg, simulate, uniform_flux)

log = logging.getLogger(__name__)

SOFT_BUDGET_SECONDS = 300.0

DEMO_PARAMS = {"two_layer": {"z_threshold": 0.5}, "smoothed_layer": {"z_center": 0.5, "width": 0.4},
               "functional": {}, "corrosion": {"depth": 0.4}}


@dataclass
class SuiteResult:
    name: str
    module: str
    passed: bool
    detail: str
    seconds: float = 0.0


def demo_field(kind: str) -> MaterialField:
    return MaterialField(kind, dict(DEMO_PARAMS[kind]))


def check_oracle(k_sign: float = 1.0, meshes=((2, 2, 2), (3, 3, 2)), n_vectors: int = 3) -> SuiteResult:
    """Every strategy, mode and material kind against the CSR matrix."""
    worst, where = 0.0, ""
    rng = np.random.default_rng(0)
    for C in meshes:
        spec = GridSpec((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), C)
        for kind in KINDS:
            field = demo_field(kind)
            for mode in ("A", "L"):
                A = assemble_csr(SystemOperator(spec, field, 0.5, 0.01, mode, "flexible"))
                for strategy in STRATEGIES:
                    op = SystemOperator(spec, field, 0.5, 0.01, mode, strategy, k_sign=k_sign)
                    for _ in range(n_vectors):
                        x = rng.standard_normal(spec.n_vertices)
                        ref = A @ x
                        err = np.max(np.abs(op.apply(x) - ref)) / np.max(np.abs(ref))
                        if err > worst:
                            worst, where = err, f"{strategy}/{mode}/{kind}/C={C}"
    ok = worst <= 1e-12
    return SuiteResult("oracle", "operator", ok, f"max rel error {worst:.2e} ({where})")


def check_nullspace(n_steps: int = 20) -> SuiteResult:
    spec = GridSpec((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (4, 4, 4))
    op = SystemOperator(spec, demo_field("functional"), 0.5, 0.01)
    problem = TransientProblem(op, op.with_mode("L"), np.zeros(spec.n_vertices), 0.0, n_steps,
                               0.01, 0.5)
    U0 = np.full(spec.n_vertices, 21.5)
    res = simulate(problem, PcgConfig(tol=1e-12), U0=U0)
    err = float(np.max(np.abs(res.final - U0)))
    return SuiteResult("nullspace", "solver", err <= 1e-10, f"max drift {err:.2e}")


def energy_residuals(spec: GridSpec, field: MaterialField, dt: float = 0.01, n_steps: int = 50,
                     cfg: PcgConfig | None = None, strategy: str = "coalesced"):
    """Per step ``|1^T M dU - 1^T F|`` and ``||b||``, for uniform unit flux on z = min."""
    cfg = cfg or PcgConfig()
    op_A = SystemOperator(spec, field, 0.5, dt, "A", strategy)
    op_M = SystemOperator(spec, field, 0.5, 0.0, "A", strategy)
    F = boundary_load(spec, uniform_flux(1.0), dt)
    problem = TransientProblem(op_A, op_A.with_mode("L"), F, 0.0, n_steps, dt, 0.5)
    res = simulate(problem, cfg, keep_snapshots=True)
    ones = np.ones(spec.n_vertices)
    mis, bnorm = [], []
    for U0, U1 in zip(res.snapshots[:-1], res.snapshots[1:]):
        mis.append(abs(float(ones @ op_M.apply(U1 - U0)) - float(F.sum())))
        bnorm.append(float(np.linalg.norm(problem.op_L.apply(U0, 1.0, F))))
    return np.array(mis), np.array(bnorm)


def check_energy(tol: float = 1e-6) -> SuiteResult:
    spec = GridSpec((-15.0, -15.0, 0.0), (15.0, 15.0, 10.0), (6, 6, 4))
    field = MaterialField("two_layer", {"z_threshold": 5.0})
    mis, bnorm = energy_residuals(spec, field, n_steps=10, cfg=PcgConfig(tol=tol))
    ratio = float(np.max(mis / (10 * tol * bnorm)))
    return SuiteResult("energy", "solver", ratio <= 1.0,
                       f"worst |1'M dU - 1'F| / (10 tol ||b||) = {ratio:.3f}")


def check_partition() -> SuiteResult:
    spec = GridSpec((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (4, 4, 6))
    op = SystemOperator(spec, demo_field("functional"), 0.5, 0.01)
    b = np.random.default_rng(1).random(spec.n_vertices)
    cfg = PcgConfig(tol=1e-8)
    mono = pcg(op.apply, b, np.zeros_like(b), op.jacobi_diagonal(), cfg,
               residual=lambda v: op.apply(v, -1.0, b))
    worst, iters_ok, audit_ok = 0.0, True, True
    for m in (0.3, 0.5, 0.7):
        res = pcg_partitioned(op, b, np.zeros_like(b), split_domain(spec, m), cfg)
        worst = max(worst, float(np.max(np.abs(res.x - mono.x))))
        iters_ok &= res.iterations == mono.iterations
        audit_ok &= all(t == (1, 1, 2, 2) for t in res.audit.per_iteration)
    ok = worst <= 1e-10 and iters_ok and audit_ok
    return SuiteResult("partition", "partition", ok,
                       f"max diff {worst:.2e}, iterations match {iters_ok}, audit {audit_ok}")


def check_reduction() -> SuiteResult:
    rng = np.random.default_rng(2)
    x, y = rng.standard_normal(100_003), rng.standard_normal(100_003)
    first = dot(x, y)
    repeat = all(dot(x, y) == first for _ in range(5))
    exact = math.fsum((x * y).tolist())
    err = abs(first - exact) / math.fsum(np.abs(x * y).tolist())
    ok = repeat and err <= 1e-13
    return SuiteResult("reduction", "solver", ok, f"bitwise repeatable {repeat}, rel error {err:.1e}")


SUITES = {"oracle": check_oracle, "nullspace": check_nullspace, "energy": check_energy,
          "partition": check_partition, "reduction": check_reduction}


def run_all(k_sign: float = 1.0) -> list[SuiteResult]:
    results = []
    t_start = time.perf_counter()
    for name, fn in SUITES.items():
        t0 = time.perf_counter()
        try:
            r = fn(k_sign) if name == "oracle" else fn()
        except Exception as exc:  # a crash is a failure of that suite, not of the report
            r = SuiteResult(name, "?", False, f"raised {type(exc).__name__}: {exc}")
        r.seconds = time.perf_counter() - t0
        results.append(r)
    total = time.perf_counter() - t_start
    if total > SOFT_BUDGET_SECONDS:
        log.warning("verify took %.0f s, over the %.0f s budget", total, SOFT_BUDGET_SECONDS)
    return results
