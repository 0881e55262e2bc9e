"""Command line entry point: ``matfree bench|simulate|invert|verify``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import verify as verify_mod
from .baseline import assemble_csr
from .config import ConfigError, RunConfig, load_config
from .errors import ContractViolation, MatfreeError
from .inverse import (WATT, ForwardModel, corrupt, load_image, make_loglik, metropolis_hastings,
                      save_image)
from .io import export_vtk, write_csv, write_matrix_csv
from .operator import SystemOperator
from .partition import pcg_partitioned, split_domain
from .solver import TransientProblem, boundary_load, face_mean, simulate

log = logging.getLogger("matfree")


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    solver = {}
    if getattr(args, "strategy", None):
        solver["strategy"] = args.strategy
    if getattr(args, "precision", None):
        solver["precision"] = args.precision
    if getattr(args, "partitions", None):
        solver["partitions"] = args.partitions
    if getattr(args, "split_fraction", None) is not None:
        solver["split_fraction"] = args.split_fraction
    data = cfg.model_dump()
    data["solver"].update(solver)
    if getattr(args, "out", None):
        data["output"]["dir"] = args.out
    return RunConfig.model_validate(data)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_bench(cfg: RunConfig, args) -> int:
    spec = cfg.grid.spec()
    b = cfg.bench
    strategies = [args.strategy] if args.strategy else b.strategies
    parts = [args.partitions] if args.partitions else b.partitions
    precision = args.precision or b.precision
    records = bench_mod.sweep(spec, cfg.material.field(), cfg.load.flux(spec), b.sizes, strategies,
                              parts, precision, split_fraction=cfg.solver.split_fraction,
                              dt=cfg.time.dt, theta=cfg.time.theta,
                              n_steps=b.n_steps or cfg.time.n_steps, cfg=cfg.solver.pcg(),
                              face=cfg.load.face)
    out = _out_dir(cfg)
    write_csv(out / "bench.csv", bench_mod.RECORD_FIELDS, [r.row() for r in records])
    write_csv(out / "phases.csv", bench_mod.PHASE_FIELDS,
              [p for r in records if r.status == "ok" for p in r.phases()])
    for (strategy, p), (slope, span) in bench_mod.slopes(records).items():
        print(f"{strategy:<11} partitions={p}  log-log slope {slope:.3f} over {span:.1f}x DoF")
    print(f"wrote {out / 'bench.csv'} and {out / 'phases.csv'}")
    return 0


def cmd_simulate(cfg: RunConfig, args) -> int:
    spec = cfg.grid.spec()
    s, t = cfg.solver, cfg.time
    op_A = SystemOperator(spec, cfg.material.field(), t.theta, t.dt, "A", s.strategy, s.precision)
    F = boundary_load(spec, cfg.load.flux(spec), t.dt, cfg.load.face)
    problem = TransientProblem(op_A, op_A.with_mode("L"), F, 0.0, t.n_steps, t.dt, t.theta)
    solve = None
    if s.partitions == 2:
        plan = split_domain(spec, s.split_fraction)

        def solve(b, x0):
            return pcg_partitioned(op_A, b, x0, plan, s.pcg())
    res = simulate(problem, s.pcg(), solve=solve)
    out = _out_dir(cfg)
    export_vtk(res.final, spec, out / "final.vtk")
    write_csv(out / "iterations.csv", ["step", "iterations"],
              [[i + 1, n] for i, n in enumerate(res.iterations)])
    summary = {"dofs": spec.n_vertices, "strategy": s.strategy, "partitions": s.partitions,
               "total_iterations": res.total_iterations,
               "seconds_per_iteration": res.seconds_per_iteration,
               "front_face_mean": face_mean(spec, res.final, cfg.load.face),
               "max_temperature": float(np.max(res.final))}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    if args.dump_matrix:
        write_matrix_csv(out / "A.csv", assemble_csr(op_A))
    print(json.dumps(summary, indent=2))
    return 0


def inversion_setup(cfg: RunConfig, seed: int):
    """Forward model, data-noise seed and chain seed for ``invert``."""
    if cfg.inverse is None:
        raise ConfigError("config has no 'inverse' section")
    ld = cfg.load
    if ld.kind != "gaussian_beam" or ld.face != "zmin":
        raise ConfigError("invert needs a gaussian_beam load on the zmin face")
    data_seed, chain_seed = (int(s) for s in np.random.SeedSequence(seed).generate_state(2))
    camera = cfg.inverse.camera.model(data_seed)
    model = ForwardModel(cfg.grid.spec(), cfg.material.field(), camera, ld.power_watts * WATT,
                         ld.sigma, ld.center, cfg.time.dt, cfg.time.n_steps, cfg.time.theta,
                         cfg.solver.strategy, cfg.solver.pcg())
    return model, chain_seed


def run_inversion(cfg: RunConfig, seed: int, data=None):
    """Synthesises data (unless given) and runs the chain; returns ``(chain, data, model)``."""
    inv = cfg.inverse
    model, chain_seed = inversion_setup(cfg, seed)
    if data is None:
        data = corrupt(model.image(inv.theta_true), model.camera)
    chain = metropolis_hastings(make_loglik(model, data, inv.likelihood), cfg.prior_bounds(),
                                inv.chain.model(), chain_seed)
    return chain, data, model


def cmd_invert(cfg: RunConfig, args) -> int:
    inv = cfg.inverse
    data = load_image(inv.data) if inv is not None and inv.data else None
    chain, data, model = run_inversion(cfg, args.seed, data)
    out = _out_dir(cfg)
    if not inv.data:
        save_image(out / "data.csv", data)
    chain.write_csv(out / "chain.csv")
    summary = chain.summary() | {"theta_true": inv.theta_true, "forward_solves": model.solves,
                                 "seed": args.seed}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(summary, indent=2))
    return 0


def cmd_verify(args) -> int:
    results = verify_mod.run_all(k_sign=-1.0 if args.inject_k_sign_flip else 1.0)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<10} [{r.module}]  {r.detail}  ({r.seconds:.1f} s)")
    failed = [r for r in results if not r.passed]
    if failed:
        print("failed: " + ", ".join(f"{r.name} ({r.module})" for r in failed))
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="matfree", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=False):
        sp.add_argument("--config", required=True,
                        help="JSON config path, or a bundled name: laminate, corrosion")
        sp.add_argument("--strategy", choices=("flexible", "singlepass", "coalesced"))
        sp.add_argument("--precision", choices=("double", "single"))
        sp.add_argument("--partitions", type=int, choices=(1, 2))
        sp.add_argument("--split-fraction", type=float)
        sp.add_argument("--out", help="output directory (overrides output.dir)")
        if seed:
            sp.add_argument("--seed", type=int, default=0)

    common(sub.add_parser("bench", help="time per PCG iteration over a size sweep"))
    sim = sub.add_parser("simulate", help="run one transient simulation")
    common(sim)
    sim.add_argument("--dump-matrix", action="store_true", help="also write A as CSV triplets")
    common(sub.add_parser("invert", help="MCMC corrosion-depth inversion"), seed=True)
    ver = sub.add_parser("verify", help="run the self-check suites")
    ver.add_argument("--inject-k-sign-flip", action="store_true", help=argparse.SUPPRESS)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "verify":
            return cmd_verify(args)
        cfg = _apply_overrides(load_config(args.config), args)
        return {"bench": cmd_bench, "simulate": cmd_simulate, "invert": cmd_invert}[args.command](cfg, args)
    except (ConfigError, ContractViolation, MatfreeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
