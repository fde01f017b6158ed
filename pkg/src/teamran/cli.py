"""Command-line entry point.

Subcommands:
  run        one scenario -> per-slot CSV + manifest
  sweep      traffic or speed grid, paired TDL/IDL -> summary CSV + manifest
  gradcheck  finite-difference check of the TD-loss gradients
  oracle     brute-force equivalence suites for the PHY and state math

Output directory resolution: --out flag, else the TEAMRAN_OUT environment
variable, else ./teamran_out.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, parse_config
from .experiment import (
    CSV_SCHEMA_RUN,
    CSV_SCHEMA_SWEEP,
    run_scenario,
    summarize_sweep,
    sweep,
    write_manifest,
    write_run_csv,
    write_sweep_csv,
)
from .oracles import run_phy_suite, run_state_suite
from .rl import Experience, QNetwork, TrainConfig, td_gradients, td_objective

GRADCHECK_TOLERANCE = 1e-4
ORACLE_PHY_TOLERANCE = 1e-12
ORACLE_STATE_TOLERANCE = 1e-9


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("TEAMRAN_OUT") or "teamran_out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_scenario(args):
    scenario = parse_config(args.config, args.set)
    if args.seed is not None:
        scenario = dataclasses.replace(scenario, master_seed=args.seed)
    if args.mode is not None:
        scenario = dataclasses.replace(scenario, mode=args.mode)
    if args.slots is not None:
        scenario = dataclasses.replace(scenario, n_slots=args.slots)
    return scenario


def _progress(label):
    def report(done):
        print(f"{label}: {done} slots", file=sys.stderr)
    return report


def cmd_run(args) -> int:
    scenario = _load_scenario(args)
    out = _out_dir(args)
    metrics = run_scenario(scenario, progress=_progress("run"))
    run_csv = out / "run.csv"
    write_run_csv(run_csv, metrics)
    manifest = out / "run_manifest.json"
    write_manifest(manifest, scenario, [run_csv.name], CSV_SCHEMA_RUN,
                   extra={"env_trace_hash": metrics.env_trace_hash,
                          "pdr_final": metrics.pdr_final,
                          "throughput_tail_mean": metrics.throughput_tail_mean})
    print(f"tail throughput {metrics.throughput_tail_mean:.3e} bits/s, "
          f"final PDR {metrics.pdr_final:.4f}")
    print(f"wrote {run_csv} and {manifest}")
    return 0


def cmd_sweep(args) -> int:
    scenario = _load_scenario(args)
    out = _out_dir(args)
    values = [float(v) for v in args.values.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]

    def report(cell):
        print(f"sweep: {cell.axis}={cell.value:g} seed={cell.seed} "
              f"{cell.mode} tail={cell.tail_throughput:.3e}", file=sys.stderr)

    cells = sweep(scenario, args.axis, values, seeds, progress=report)
    sweep_csv = out / "sweep.csv"
    write_sweep_csv(sweep_csv, cells)
    manifest = out / "sweep_manifest.json"
    write_manifest(manifest, scenario, [sweep_csv.name], CSV_SCHEMA_SWEEP,
                   extra={"axis": args.axis, "values": values, "seeds": seeds})
    for row in summarize_sweep(cells):
        print(f"{args.axis}={row['value']:g} {row['mode']}: "
              f"tail {row['tail_throughput_mean']:.3e} "
              f"(+/- {row['tail_throughput_std']:.2e}), "
              f"PDR {row['pdr_mean']:.4f}, gain {row['relative_gain']:+.2%}")
    print(f"wrote {sweep_csv} and {manifest}")
    return 0


def gradcheck_max_error(n_networks: int = 20, seed: int = 0,
                        h: float = 1e-5) -> float:
    """Largest relative disagreement between analytic TD-loss gradients and
    central finite differences over random tiny networks."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_networks):
        sizes = [int(rng.integers(2, 5)) for _ in range(4)]
        net = QNetwork(sizes, rng)
        # random biases keep pre-activations off the ReLU kink, where a
        # central difference would be one-sided
        for b in net.biases:
            b[:] = rng.uniform(-0.5, 0.5, size=b.shape)
        batch = [
            Experience(
                state=rng.standard_normal(sizes[0]),
                action=int(rng.integers(sizes[-1])),
                reward=float(rng.standard_normal()),
                next_state=rng.standard_normal(sizes[0]),
            )
            for _ in range(int(rng.integers(1, 6)))
        ]
        discount = 0.2
        # freeze the bootstrap target: the analytic update is a
        # semi-gradient, so the finite-difference objective must treat the
        # next-state values as constants
        frozen = net.copy()
        _, grads_w, grads_b = td_gradients(net, batch, discount, frozen)
        params = net.weights + net.biases
        grads = grads_w + grads_b
        for p, g in zip(params, grads):
            flat_p = p.reshape(-1)
            flat_g = g.reshape(-1)
            for i in range(flat_p.size):
                orig = flat_p[i]
                flat_p[i] = orig + h
                plus = td_objective(net, batch, discount, frozen)
                flat_p[i] = orig - h
                minus = td_objective(net, batch, discount, frozen)
                flat_p[i] = orig
                numeric = (plus - minus) / (2.0 * h)
                if abs(flat_g[i]) < 1e-8 and abs(numeric) < 1e-8:
                    continue
                denom = max(abs(numeric), abs(flat_g[i]), 1e-12)
                worst = max(worst, abs(numeric - flat_g[i]) / denom)
    return worst


def cmd_gradcheck(args) -> int:
    err = gradcheck_max_error(n_networks=args.networks, seed=args.seed or 0)
    print(f"max relative gradient error: {err:.3e} "
          f"(tolerance {GRADCHECK_TOLERANCE:.0e})")
    return 0 if err < GRADCHECK_TOLERANCE else 1


def cmd_oracle(args) -> int:
    phy_err = run_phy_suite(n_instances=args.instances)
    state_err = run_state_suite(n_instances=args.instances)
    print(f"phy suite max relative error: {phy_err:.3e} "
          f"(tolerance {ORACLE_PHY_TOLERANCE:.0e})")
    print(f"state suite max relative error: {state_err:.3e} "
          f"(tolerance {ORACLE_STATE_TOLERANCE:.0e})")
    ok = phy_err < ORACLE_PHY_TOLERANCE and state_err < ORACLE_STATE_TOLERANCE
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="teamran",
        description="Multi-cell downlink simulator with cooperating DQN xAPPs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML scenario file")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--mode", choices=["tdl", "idl"])
        p.add_argument("--slots", type=int, help="number of slots override")
        p.add_argument("--out", help="output directory (default $TEAMRAN_OUT)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any config key, e.g. params.n_bs=2")

    p_run = sub.add_parser("run", help="run one scenario")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="paired TDL/IDL grid")
    common(p_sweep)
    p_sweep.add_argument("--axis", choices=["traffic", "speed"],
                         required=True)
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated axis values")
    p_sweep.add_argument("--seeds", default="1,2,3,4,5",
                         help="comma-separated master seeds")
    p_sweep.set_defaults(func=cmd_sweep)

    p_grad = sub.add_parser("gradcheck",
                            help="finite-difference gradient check")
    p_grad.add_argument("--networks", type=int, default=20)
    p_grad.add_argument("--seed", type=int)
    p_grad.set_defaults(func=cmd_gradcheck)

    p_oracle = sub.add_parser("oracle",
                              help="brute-force equivalence suites")
    p_oracle.add_argument("--instances", type=int, default=1000)
    p_oracle.set_defaults(func=cmd_oracle)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
