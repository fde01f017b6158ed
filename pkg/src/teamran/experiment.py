"""Scenario runner, metric aggregation and the team-vs-independent sweeps.

A Scenario pins everything needed to reproduce a run from its master
seed. Sweeps pair the two modes on identical environment randomness so
the comparison isolates the protocol difference.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .environment import Environment, MobilityParams, RandomStreams
from .phy import SimParams
from .rl import TrainConfig
from .xapps import SlotRunner

CSV_SCHEMA_RUN = "run-1"
CSV_SCHEMA_SWEEP = "sweep-1"
RUN_CSV_COLUMNS = ["slot", "throughput_bps", "reward", "cumulative_pdr"]
SWEEP_CSV_COLUMNS = ["axis", "value", "mode", "seed",
                     "tail_throughput_bps", "pdr"]


@dataclass
class Scenario:
    params: SimParams = field(default_factory=SimParams)
    mobility: MobilityParams = field(default_factory=MobilityParams)
    traffic_mean: float = 4e6     # bits/s per user
    n_slots: int = 20000
    mode: str = "tdl"
    master_seed: int = 1
    train_cfg: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.n_slots < 1:
            raise ValueError("n_slots must be >= 1")
        if self.mode not in ("tdl", "idl"):
            raise ValueError(f"mode must be 'tdl' or 'idl', got {self.mode!r}")
        if self.traffic_mean < 0:
            raise ValueError("traffic_mean must be >= 0")


def desk_scale_scenario(**overrides) -> Scenario:
    """Small configuration that runs in minutes: 2 BSs, 10 users, 6 RBGs,
    5000 slots. Keyword overrides replace top-level Scenario fields."""
    params = overrides.pop("params", SimParams(n_bs=2, n_users=10, n_rbg=6))
    n_slots = overrides.pop("n_slots", 5000)
    # adam is the config-gated optimizer extension; at this scale it is
    # what makes 5000 slots enough for the agents to converge
    train_cfg = overrides.pop(
        "train_cfg",
        TrainConfig(epsilon_decay_slots=n_slots // 2, train_every=1,
                    optimizer="adam"))
    return Scenario(params=params, n_slots=n_slots, train_cfg=train_cfg,
                    **overrides)


@dataclass
class RunMetrics:
    throughput_series: np.ndarray  # bits/s per slot
    reward_series: np.ndarray
    pdr_series: np.ndarray         # cumulative packet drop rate per slot
    pdr_final: float
    throughput_tail_mean: float    # mean over the last 10% of slots
    env_trace_hash: str


def tail_slice(n_slots: int) -> slice:
    """The last 10% of slots (at least one)."""
    k = max(1, n_slots // 10)
    return slice(n_slots - k, n_slots)


def run_scenario(s: Scenario, train: bool = True,
                 trace_path=None, progress=None) -> RunMetrics:
    """Execute one full run; bit-reproducible from the scenario alone.

    train=False freezes the randomly initialized agents (no learning),
    used by the load-monotonicity checks. trace_path, when given, receives
    one JSON record per slot. ``progress`` is an optional callable taking
    the current slot index.
    """
    streams = RandomStreams.from_seed(s.master_seed)
    env = Environment(s.params, s.mobility, s.traffic_mean, streams)
    runner = SlotRunner(env, s.train_cfg, s.mode)

    throughput = np.empty(s.n_slots)
    reward = np.empty(s.n_slots)
    pdr = np.empty(s.n_slots)
    trace_file = open(trace_path, "w") if trace_path else None
    try:
        for t in range(s.n_slots):
            result = runner.step(train=train)
            throughput[t] = result.outcome.total_throughput
            reward[t] = result.reward
            pdr[t] = env.packet_drop_rate()
            if trace_file:
                trace_file.write(json.dumps(result.trace) + "\n")
            if progress and (t + 1) % 1000 == 0:
                progress(t + 1)
    finally:
        if trace_file:
            trace_file.close()

    return RunMetrics(
        throughput_series=throughput,
        reward_series=reward,
        pdr_series=pdr,
        pdr_final=float(pdr[-1]),
        throughput_tail_mean=float(throughput[tail_slice(s.n_slots)].mean()),
        env_trace_hash=env.trace_hash(),
    )


def convergence_stats(m: RunMetrics, window: int = 100):
    """(early_var, late_var, tail_mean) of the moving-average throughput.

    Variances are taken over the first and last 10% of slots of the
    ``window``-slot moving average.
    """
    series = m.throughput_series
    n = len(series)
    if n < window:
        raise ValueError(f"need at least {window} slots")
    ma = np.convolve(series, np.ones(window) / window, mode="valid")
    k = max(1, n // 10)
    early = float(ma[:k].var())
    late = float(ma[-k:].var())
    return early, late, float(series[tail_slice(n)].mean())


@dataclass
class SweepCell:
    axis: str
    value: float
    mode: str
    seed: int
    tail_throughput: float
    pdr: float
    env_trace_hash: str


def _scenario_for(base: Scenario, axis: str, value: float, seed: int,
                  mode: str) -> Scenario:
    s = dataclasses.replace(base, master_seed=seed, mode=mode)
    if axis == "traffic":
        return dataclasses.replace(s, traffic_mean=value)
    if axis == "speed":
        return dataclasses.replace(
            s, mobility=dataclasses.replace(base.mobility, speed=value))
    raise ValueError(f"axis must be 'traffic' or 'speed', got {axis!r}")


def sweep(base: Scenario, axis: str, values, seeds,
          progress=None) -> list[SweepCell]:
    """Run the TDL/IDL comparison grid.

    For every (value, seed) both modes run with the same master seed, so
    they see identical traffic and mobility traces.
    """
    if not values:
        raise ValueError("values must be nonempty")
    cells = []
    for value in values:
        for seed in seeds:
            for mode in ("tdl", "idl"):
                s = _scenario_for(base, axis, value, seed, mode)
                m = run_scenario(s)
                cells.append(SweepCell(
                    axis=axis, value=float(value), mode=mode, seed=int(seed),
                    tail_throughput=m.throughput_tail_mean,
                    pdr=m.pdr_final, env_trace_hash=m.env_trace_hash))
                if progress:
                    progress(cells[-1])
    return cells


def summarize_sweep(cells: list[SweepCell]) -> list[dict]:
    """Per (value, mode) mean and spread, plus the paired TDL-IDL relative
    throughput gain per value."""
    rows = []
    values = sorted({c.value for c in cells})
    for value in values:
        by_mode = {}
        for mode in ("tdl", "idl"):
            sel = [c for c in cells if c.value == value and c.mode == mode]
            tp = np.array([c.tail_throughput for c in sel])
            pdr = np.array([c.pdr for c in sel])
            by_mode[mode] = tp.mean()
            rows.append({
                "value": value, "mode": mode,
                "tail_throughput_mean": float(tp.mean()),
                "tail_throughput_std": float(tp.std()),
                "pdr_mean": float(pdr.mean()),
                "pdr_std": float(pdr.std()),
            })
        gain = (by_mode["tdl"] - by_mode["idl"]) / by_mode["idl"]
        for row in rows[-2:]:
            row["relative_gain"] = float(gain)
    return rows


def write_run_csv(path, metrics: RunMetrics) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(RUN_CSV_COLUMNS)
        for t in range(len(metrics.throughput_series)):
            w.writerow([t,
                        repr(float(metrics.throughput_series[t])),
                        repr(float(metrics.reward_series[t])),
                        repr(float(metrics.pdr_series[t]))])


def write_sweep_csv(path, cells: list[SweepCell]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(SWEEP_CSV_COLUMNS)
        for c in cells:
            w.writerow([c.axis, repr(c.value), c.mode, c.seed,
                        repr(c.tail_throughput), repr(c.pdr)])


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "params": dataclasses.asdict(s.params),
        "mobility": dataclasses.asdict(s.mobility),
        "train": dataclasses.asdict(s.train_cfg),
        "traffic_mean": s.traffic_mean,
        "n_slots": s.n_slots,
        "mode": s.mode,
        "master_seed": s.master_seed,
    }


def write_manifest(path, scenario: Scenario, outputs: list[str],
                   kind: str, extra: dict | None = None) -> None:
    """Record everything needed to reproduce the emitted CSVs."""
    manifest = {
        "schema": kind,
        "scenario": scenario_to_dict(scenario),
        "outputs": sorted(outputs),
    }
    if extra:
        manifest.update(extra)
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
