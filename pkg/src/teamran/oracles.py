"""Brute-force reference implementations and equivalence suites.

Everything here is written as plain triple loops straight from the model
definitions, independent of the vectorized production code, and exists
only to check that code. Keep it naive on purpose.
"""

from __future__ import annotations

import math

import numpy as np

from . import phy, xapps
from .phy import SimParams
from .xapps import EnvSnapshot, FeatureScales


def sinr_reference(alpha, power, gains, noise_watts):
    n_bs, n_rbg, n_users = alpha.shape
    eta = np.zeros((n_bs, n_rbg, n_users))
    for n in range(n_bs):
        for m in range(n_rbg):
            for k in range(n_users):
                interference = 0.0
                for n2 in range(n_bs):
                    if n2 == n:
                        continue
                    for k2 in range(n_users):
                        interference += (alpha[n2, m, k2] * gains[n2, k]
                                         * power[n2, m])
                eta[n, m, k] = (alpha[n, m, k] * gains[n, k] * power[n, m]
                                / (interference + noise_watts))
    return eta


def capacity_reference(eta, bandwidth_rbg):
    n_bs, n_rbg, n_users = eta.shape
    cap = np.zeros((n_bs, n_rbg))
    for n in range(n_bs):
        for m in range(n_rbg):
            total = 0.0
            for k in range(n_users):
                total += eta[n, m, k]
            cap[n, m] = bandwidth_rbg * math.log2(1.0 + total)
    return cap


def rate_reference(capacity, queued_bits, slot):
    if capacity * slot < queued_bits:
        return capacity
    return queued_bits / slot


def _own_gain(alpha, gains, n, m):
    total = 0.0
    for k in range(alpha.shape[2]):
        total += alpha[n, m, k] * gains[n, k]
    return total


def csi_reference(alpha, gains, n, m):
    out = []
    for n2 in range(alpha.shape[0]):
        if n2 == n:
            continue
        out.append(math.log2(1.0 + _own_gain(alpha, gains, n2, m)
                             / _own_gain(alpha, gains, n, m)))
    return out


def round1_state_reference(snap: EnvSnapshot, m, scales: FeatureScales):
    feats = []
    for n in range(snap.alpha.shape[0]):
        feats.extend(csi_reference(snap.alpha, snap.gains, n, m))
        feats.append(snap.rates[n, m] / scales.rate_scale)
        feats.append(snap.power[n, m] / scales.power_scale)
        queued = 0.0
        for k in range(snap.alpha.shape[2]):
            queued += snap.alpha[n, m, k] * snap.queued[k]
        feats.append(queued / scales.buffer_scale)
    return np.array(feats)


def round2_state_reference(snap: EnvSnapshot, chosen_user, m,
                           scales: FeatureScales):
    n_bs = snap.alpha.shape[0]
    feats = []
    for n in range(n_bs):
        k = int(np.argmax(snap.alpha[n, m]))
        m2 = None
        for cand in range(chosen_user.shape[1]):
            if chosen_user[n, cand] == k:
                m2 = cand
                break
        block_dim = 2 * (n_bs - 1) + 5
        if m2 is None:
            feats.extend([0.0] * block_dim)
            feats.append(1.0)
            continue
        feats.extend(csi_reference(snap.alpha, snap.gains, n, m2))
        feats.append(snap.rates[n, m2] / scales.rate_scale)
        feats.append(snap.power[n, m2] / scales.power_scale)
        feats.extend(csi_reference(snap.alpha, snap.gains, n, m2))
        feats.append(snap.rates[n, m2] / scales.rate_scale)
        feats.append(snap.power[n, m2] / scales.power_scale)
        queued = 0.0
        for kk in range(snap.alpha.shape[2]):
            queued += snap.alpha[n, m2, kk] * snap.queued[kk]
        feats.append(queued / scales.buffer_scale)
        feats.append(0.0)
    return np.array(feats)


def rra_state_reference(snap: EnvSnapshot, next_power, n,
                        scales: FeatureScales, user_slots):
    if next_power is None:
        next_power = snap.power
    feats = []
    for m in range(snap.alpha.shape[1]):
        feats.extend(csi_reference(snap.alpha, snap.gains, n, m))
        feats.append(snap.rates[n, m] / scales.rate_scale)
        feats.append(snap.power[n, m] / scales.power_scale)
        queued = 0.0
        for k in range(snap.alpha.shape[2]):
            queued += snap.alpha[n, m, k] * snap.queued[k]
        feats.append(queued / scales.buffer_scale)
        feats.append(next_power[n, m] / scales.power_scale)
        k = int(np.argmax(snap.alpha[n, m]))
        for slot_user in user_slots:
            feats.append(1.0 if slot_user == k else 0.0)
    return np.array(feats)


def random_instance(rng, n_bs, n_rbg, n_users):
    """A random valid (snapshot, params-free) scenario for the suites."""
    alpha = np.zeros((n_bs, n_rbg, n_users), dtype=np.int8)
    for n in range(n_bs):
        for m in range(n_rbg):
            alpha[n, m, rng.integers(n_users)] = 1
    power = rng.uniform(0.01, 6.0, size=(n_bs, n_rbg))
    gains = 10.0 ** rng.uniform(-13.0, -7.0, size=(n_bs, n_users))
    return alpha, power, gains


def _rel_err(a, b):
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-300)
    return float(np.max(np.abs(a - b) / denom))


def run_phy_suite(n_instances: int = 1000, seed: int = 0) -> float:
    """Max relative error of the vectorized SINR/capacity/rate path against
    the loops above, over random small instances."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    noise = 1e-14
    for _ in range(n_instances):
        n_bs = int(rng.integers(1, 4))
        n_rbg = int(rng.integers(1, 4))
        n_users = int(rng.integers(1, 6))
        alpha, power, gains = random_instance(rng, n_bs, n_rbg, n_users)
        eta = phy.compute_sinr(alpha, power, gains, noise)
        eta_ref = sinr_reference(alpha, power, gains, noise)
        worst = max(worst, _rel_err(eta, eta_ref))
        cap = phy.rbg_capacity(eta.sum(axis=2), 1.6667e6)
        worst = max(worst, _rel_err(cap, capacity_reference(eta_ref, 1.6667e6)))
        queued = float(rng.integers(0, 2_000_000))
        r = phy.transmission_rate(cap[0, 0], queued, 0.1)
        worst = max(worst, _rel_err(np.array(r),
                                    np.array(rate_reference(cap[0, 0],
                                                            queued, 0.1))))
    return worst


def _random_snapshot(rng, n_bs, n_rbg, n_users):
    alpha, power, gains = random_instance(rng, n_bs, n_rbg, n_users)
    return EnvSnapshot(
        alpha=alpha, power=power, gains=gains,
        rates=rng.uniform(0.0, 5e7, size=(n_bs, n_rbg)),
        queued=rng.integers(0, 2_000_000, size=n_users).astype(np.int64),
    )


def run_state_suite(n_instances: int = 1000, seed: int = 1) -> float:
    """Max relative error of the three state builders against the loop
    references, over random small instances."""
    rng = np.random.default_rng(seed)
    scales = FeatureScales(rate_scale=5e7, power_scale=6.3, buffer_scale=2.4e6)
    worst = 0.0
    for _ in range(n_instances):
        n_bs = int(rng.integers(1, 4))
        n_rbg = int(rng.integers(1, 4))
        n_users = int(rng.integers(1, 6))
        snap = _random_snapshot(rng, n_bs, n_rbg, n_users)
        chosen = rng.integers(n_users, size=(n_bs, n_rbg))
        d_max = max(2, n_users)
        slots = -np.ones(d_max, dtype=np.int64)
        slots[:n_users] = np.arange(n_users)
        for m in range(n_rbg):
            got = xapps.build_power_state_round1(snap, m, scales)
            worst = max(worst, _rel_err(
                got, round1_state_reference(snap, m, scales)))
            got = xapps.build_power_state_round2(snap, chosen, m, scales)
            worst = max(worst, _rel_err(
                got, round2_state_reference(snap, chosen, m, scales)))
        for n in range(n_bs):
            got = xapps.build_rra_state(snap, None, n, scales, slots)
            worst = max(worst, _rel_err(
                got, rra_state_reference(snap, None, n, scales, slots)))
    return worst
