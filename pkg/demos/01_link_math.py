"""A walk through the link math: path loss, SINR, capacity and rate.

Run with: python3 demos/01_link_math.py
"""

import numpy as np

from teamran.phy import (
    SimParams,
    compute_sinr,
    dbm_to_watts,
    path_gain,
    rbg_capacity,
    transmission_rate,
)

params = SimParams()

print("== Propagation ==")
print("The model is log-distance: 120.9 + 37.6*log10(d_km) dB.")
for d in [50, 100, 250, 500, 1000]:
    loss_db = -10 * np.log10(path_gain(d))
    print(f"  {d:5d} m -> {loss_db:6.1f} dB loss "
          f"(gain {path_gain(d):.3e})")

print()
print("== A two-cell interference scene ==")
print("BS 0 serves user 0 at 150 m; BS 1 serves user 1 at 200 m on the")
print("same RBG. Each BS also leaks power toward the other cell's user.")
# gains[n, k]: channel from BS n to user k
gains = np.array([
    [path_gain(150.0), path_gain(700.0)],
    [path_gain(800.0), path_gain(200.0)],
])
alpha = np.zeros((2, 1, 2))
alpha[0, 0, 0] = 1
alpha[1, 0, 1] = 1

for p_dbm in [1.0, 13.0, 25.0, 38.0]:
    power = np.full((2, 1), float(dbm_to_watts(p_dbm)))
    eta = compute_sinr(alpha, power, gains, params.noise_watts)
    cap = rbg_capacity(eta.sum(axis=2), params.bandwidth_rbg)
    print(f"  both at {p_dbm:4.0f} dBm: "
          f"SINR {10 * np.log10(eta[0, 0, 0]):6.1f} / "
          f"{10 * np.log10(eta[1, 0, 1]):6.1f} dB, "
          f"capacity {cap[0, 0] / 1e6:6.2f} / {cap[1, 0] / 1e6:6.2f} Mbit/s")

print()
print("Raising everyone's power raises interference too, so the SINR of")
print("the victim link barely moves -- this coupling is exactly what the")
print("power xAPP has to learn to manage.")

print()
print("== Buffer-limited transmission ==")
cap = 5e6  # bits/s
for queued in [0, 200_000, 500_000, 2_000_000]:
    r = transmission_rate(cap, queued, params.slot_duration)
    kind = "buffer-limited" if queued <= cap * params.slot_duration \
        else "capacity-limited"
    print(f"  queue {queued / 1e3:7.0f} kbit -> rate {r / 1e6:5.2f} Mbit/s "
          f"({kind})")
