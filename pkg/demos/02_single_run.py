"""One short training run, narrated.

Two DQN agents control the downlink of a 2-cell network: the power xAPP
picks a transmit power per (BS, RBG) and the RRA xAPP picks which user
holds each RBG. In team mode ("tdl") they exchange intended actions
inside each slot. This demo runs 1500 slots at desk scale and prints the
throughput trend.

Run with: python3 demos/02_single_run.py
"""

import numpy as np

from teamran.experiment import desk_scale_scenario, run_scenario, tail_slice

scenario = desk_scale_scenario(mode="tdl", master_seed=1,
                               traffic_mean=4e6, n_slots=1500)
print(f"mode={scenario.mode}, {scenario.params.n_bs} BSs, "
      f"{scenario.params.n_users} users, {scenario.params.n_rbg} RBGs, "
      f"{scenario.n_slots} slots at "
      f"{scenario.traffic_mean / 1e6:.0f} Mbit/s per user")
print("training...")

metrics = run_scenario(scenario, progress=lambda t: print(f"  slot {t}"))

series = metrics.throughput_series
block = len(series) // 5
print()
print("mean throughput per fifth of the run:")
for i in range(5):
    chunk = series[i * block:(i + 1) * block]
    bar = "#" * int(chunk.mean() / 1e6)
    print(f"  slots {i * block:4d}-{(i + 1) * block:4d}: "
          f"{chunk.mean() / 1e6:6.2f} Mbit/s {bar}")

print()
print(f"tail mean (last 10%): {metrics.throughput_tail_mean / 1e6:.2f} Mbit/s")
print(f"final packet drop rate: {metrics.pdr_final:.4f}")
print(f"environment trace hash: {metrics.env_trace_hash[:16]}...")
print()
print("The same scenario rerun with the same master seed reproduces these")
print("numbers bit for bit; change the seed to get a fresh network.")
