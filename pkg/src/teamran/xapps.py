"""The two resource-allocation agents and the team protocol.

The power xAPP picks a transmit power level per (BS, RBG); the radio
resource allocation (RRA) xAPP picks, per BS, which associated user holds
each RBG. In team mode the power xAPP first announces an intended power
choice, the RRA xAPP decides with that intention in its state, and a
second power network then commits the actual powers after seeing the RRA
decision. In independent mode both act simultaneously from
environment-only observations.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .environment import Environment
from .phy import Allocation, SimParams, compute_sinr, dbm_to_watts, rbg_capacity
from .rl import DqnAgent, Experience, TrainConfig, epsilon_at

POWER_HIDDEN = (256, 128)
RRA_HIDDEN = (512, 256)


def power_ladder(params: SimParams) -> np.ndarray:
    """The discrete power grid in watts: equally spaced dBm levels from
    p_min to p_max."""
    if params.n_power_levels < 2:
        raise ValueError("need at least 2 power levels")
    levels_dbm = np.linspace(params.p_min_dbm, params.p_max_dbm,
                             params.n_power_levels)
    return dbm_to_watts(levels_dbm)


def encode_power_action(levels: np.ndarray, n_levels: int) -> int:
    """Pack per-BS level indices into one joint action index (mixed radix,
    BS 0 most significant)."""
    idx = 0
    for lv in levels:
        if not 0 <= lv < n_levels:
            raise ValueError("level index out of range")
        idx = idx * n_levels + int(lv)
    return idx


def decode_power_action(index: int, n_bs: int, n_levels: int) -> np.ndarray:
    """Inverse of encode_power_action."""
    if not 0 <= index < n_levels ** n_bs:
        raise ValueError("joint action index out of range")
    out = np.empty(n_bs, dtype=np.int64)
    for n in reversed(range(n_bs)):
        out[n] = index % n_levels
        index //= n_levels
    return out


@dataclass(frozen=True)
class FeatureScales:
    """Normalizers that bring raw features to comparable magnitude."""

    rate_scale: float   # bits/s, per-RBG capacity at the best startup SNR
    power_scale: float  # watts
    buffer_scale: float  # bits

    @classmethod
    def from_gains(cls, params: SimParams, gains: np.ndarray) -> "FeatureScales":
        snr_max = params.p_max_watts * float(np.max(gains)) / params.noise_watts
        return cls(
            rate_scale=params.bandwidth_rbg * math.log2(1.0 + snr_max),
            power_scale=params.p_max_watts,
            buffer_scale=float(max(params.buffer_bits, 1)),
        )


@dataclass(frozen=True)
class EnvSnapshot:
    """Immutable observation handed to the agents at decision time: the
    allocation currently in force plus the channel, last-slot rates and
    queue lengths."""

    alpha: np.ndarray     # [n_bs, n_rbg, n_users]
    power: np.ndarray     # [n_bs, n_rbg] watts
    gains: np.ndarray     # [n_bs, n_users]
    rates: np.ndarray     # [n_bs, n_rbg] bits/s (previous slot)
    queued: np.ndarray    # [n_users] bits


def csi_features(alpha: np.ndarray, gains: np.ndarray) -> np.ndarray:
    """Log-normalized interference-to-signal features, [n_bs, n_rbg, n_bs-1].

    Entry (n, m, j) is log2(1 + G_{n_j}/G_n) where G_x is the channel gain
    of BS x toward the user it schedules on RBG m, and n_j runs over the
    other BSs in increasing index order.
    """
    own = np.einsum("nmk,nk->nm", alpha.astype(float), gains)  # [n_bs, n_rbg]
    n_bs = alpha.shape[0]
    if n_bs == 1:
        return np.zeros((1, alpha.shape[1], 0))
    ratio = own[None, :, :] / own[:, None, :]   # [n, n', m] = own[n']/own[n]
    feats = np.log2(1.0 + ratio)
    mask = ~np.eye(n_bs, dtype=bool)
    return feats[mask].reshape(n_bs, n_bs - 1, -1).transpose(0, 2, 1)


def queued_per_rbg(alpha: np.ndarray, queued: np.ndarray) -> np.ndarray:
    """Queued bits of the user scheduled on each (bs, rbg), [n_bs, n_rbg]."""
    return np.einsum("nmk,k->nm", alpha.astype(float),
                     np.asarray(queued, dtype=float))


def power_round1_states(snap: EnvSnapshot, scales: FeatureScales) -> np.ndarray:
    """First-round power states for all RBGs, shape [n_rbg, dim].

    Per RBG, the per-BS blocks are (CSI features, normalized rate,
    normalized power, normalized queue).
    """
    n_bs, n_rbg, _ = snap.alpha.shape
    gamma = csi_features(snap.alpha, snap.gains)         # [n, m, n-1]
    queued = queued_per_rbg(snap.alpha, snap.queued)     # [n, m]
    blocks = np.concatenate([
        gamma,
        (snap.rates / scales.rate_scale)[:, :, None],
        (snap.power / scales.power_scale)[:, :, None],
        (queued / scales.buffer_scale)[:, :, None],
    ], axis=2)                                           # [n, m, n+2]
    return blocks.transpose(1, 0, 2).reshape(n_rbg, -1)


def build_power_state_round1(snap: EnvSnapshot, m: int,
                             scales: FeatureScales) -> np.ndarray:
    return power_round1_states(snap, scales)[m]


def resolve_follow_location(chosen_user: np.ndarray, alpha: np.ndarray,
                            n: int, m: int) -> tuple[int, int] | None:
    """Where the user currently served on (n, m) lands under the intended
    next-slot schedule; None if it is unscheduled there. Association is
    frozen, so the BS is always n; ties go to the lowest RBG.
    """
    k = int(alpha[n, m].argmax())
    hits = np.flatnonzero(chosen_user[n] == k)
    if hits.size == 0:
        return None
    return n, int(hits[0])


def power_round2_states(snap: EnvSnapshot, chosen_user: np.ndarray,
                        scales: FeatureScales) -> np.ndarray:
    """Second-round power states for all RBGs, shape [n_rbg, dim].

    For each (n, m) the block holds the own-cell features at the RBG m'
    where (n, m)'s current user will be served under the RRA intention,
    the cross features (CSI, rate, power, queue) at that location, and an
    absent flag set when the user is not scheduled next slot (in which
    case the other entries are zero).
    """
    n_bs, n_rbg, _ = snap.alpha.shape
    gamma = csi_features(snap.alpha, snap.gains)
    queued = queued_per_rbg(snap.alpha, snap.queued)
    block_dim = 2 * (n_bs - 1) + 5 + 1
    out = np.zeros((n_rbg, n_bs, block_dim))
    for m in range(n_rbg):
        for n in range(n_bs):
            loc = resolve_follow_location(chosen_user, snap.alpha, n, m)
            if loc is None:
                out[m, n, -1] = 1.0
                continue
            n2, m2 = loc
            own = np.concatenate([
                gamma[n, m2],
                [snap.rates[n, m2] / scales.rate_scale,
                 snap.power[n, m2] / scales.power_scale],
            ])
            cross = np.concatenate([
                gamma[n2, m2],
                [snap.rates[n2, m2] / scales.rate_scale,
                 snap.power[n2, m2] / scales.power_scale,
                 queued[n2, m2] / scales.buffer_scale],
            ])
            out[m, n, :-1] = np.concatenate([own, cross])
    return out.reshape(n_rbg, -1)


def build_power_state_round2(snap: EnvSnapshot, chosen_user: np.ndarray,
                             m: int, scales: FeatureScales) -> np.ndarray:
    return power_round2_states(snap, chosen_user, scales)[m]


def build_rra_state(snap: EnvSnapshot, next_power: np.ndarray | None, n: int,
                    scales: FeatureScales, user_slots: np.ndarray) -> np.ndarray:
    """State of the RRA agent of BS n.

    Per RBG: scheduled-user-masked CSI, rate, power and queue features,
    the intended next-slot power for that RBG, and a one-hot over the
    BS's user slots marking who currently holds the RBG. ``next_power``
    None substitutes the current powers (independent mode).
    """
    if next_power is None:
        next_power = snap.power
    n_bs, n_rbg, _ = snap.alpha.shape
    d_max = len(user_slots)
    gamma = csi_features(snap.alpha, snap.gains)
    queued = queued_per_rbg(snap.alpha, snap.queued)
    blocks = np.zeros((n_rbg, (n_bs - 1) + 4 + d_max))
    for m in range(n_rbg):
        k = int(snap.alpha[n, m].argmax())
        onehot = np.zeros(d_max)
        slot_idx = np.flatnonzero(user_slots == k)
        if slot_idx.size:
            onehot[slot_idx[0]] = 1.0
        blocks[m] = np.concatenate([
            gamma[n, m],
            [snap.rates[n, m] / scales.rate_scale,
             snap.power[n, m] / scales.power_scale,
             queued[n, m] / scales.buffer_scale,
             next_power[n, m] / scales.power_scale],
            onehot,
        ])
    return blocks.reshape(-1)


def d_max_slots(params: SimParams) -> int:
    """Fixed per-BS user-slot count; covers uneven association."""
    return 2 * math.ceil(params.n_users / params.n_bs)


class PowerAgent(DqnAgent):
    """One DQN shared across all RBGs; the per-RBG action is a joint
    choice of one power level per BS (action space n_levels**n_bs)."""

    def __init__(self, params: SimParams, state_dim: int, cfg: TrainConfig,
                 rng: np.random.Generator):
        self.params = params
        self.ladder = power_ladder(params)
        n_actions = params.n_power_levels ** params.n_bs
        super().__init__(
            [state_dim, POWER_HIDDEN[0], POWER_HIDDEN[1], n_actions], cfg, rng)

    def select_powers(self, states: np.ndarray, epsilon: float,
                      rng: np.random.Generator):
        """Pick one joint action per RBG; returns (actions [n_rbg],
        level indices [n_bs, n_rbg], watts [n_bs, n_rbg])."""
        n_rbg = states.shape[0]
        actions = np.empty(n_rbg, dtype=np.int64)
        explore = rng.random(n_rbg) < epsilon
        randoms = rng.integers(self.net.output_size, size=n_rbg)
        greedy = self.net.forward_batch(states).argmax(axis=1)
        actions[:] = np.where(explore, randoms, greedy)
        levels = np.empty((self.params.n_bs, n_rbg), dtype=np.int64)
        for m in range(n_rbg):
            levels[:, m] = decode_power_action(
                int(actions[m]), self.params.n_bs, self.params.n_power_levels)
        return actions, levels, self.ladder[levels]


class RraAgent(DqnAgent):
    """Per-BS agent; the network output is n_rbg heads of d_max user-slot
    values and each RBG's user is the masked argmax of its head."""

    def __init__(self, params: SimParams, cfg: TrainConfig,
                 rng: np.random.Generator, user_slots: np.ndarray):
        self.params = params
        self.user_slots = np.asarray(user_slots)
        self.d_max = len(self.user_slots)
        valid = self.user_slots >= 0
        if not valid.any():
            raise ValueError("RRA agent needs at least one associated user")
        self.head_valid = valid
        state_dim = params.n_rbg * ((params.n_bs - 1) + 4 + self.d_max)
        super().__init__(
            [state_dim, RRA_HIDDEN[0], RRA_HIDDEN[1],
             params.n_rbg * self.d_max], cfg, rng)

    def head_mask(self, m: int) -> np.ndarray:
        """Flat output mask selecting RBG m's head, valid slots only."""
        mask = np.zeros(self.net.output_size, dtype=bool)
        mask[m * self.d_max:(m + 1) * self.d_max] = self.head_valid
        return mask

    def select_users(self, state: np.ndarray, epsilon: float,
                     rng: np.random.Generator):
        """Per-RBG user choice; returns (slot indices [n_rbg],
        user ids [n_rbg])."""
        q = self.net.forward(state).reshape(self.params.n_rbg, self.d_max)
        q = np.where(self.head_valid, q, -np.inf)
        slots = q.argmax(axis=1)
        explore = rng.random(self.params.n_rbg) < epsilon
        valid_slots = np.flatnonzero(self.head_valid)
        randoms = valid_slots[rng.integers(valid_slots.size,
                                           size=self.params.n_rbg)]
        slots = np.where(explore, randoms, slots)
        return slots, self.user_slots[slots]


def _user_slot_table(association: np.ndarray, n_bs: int, d_max: int) -> np.ndarray:
    """[n_bs, d_max] global user ids per BS slot, padded with -1."""
    table = -np.ones((n_bs, d_max), dtype=np.int64)
    for n in range(n_bs):
        users = np.flatnonzero(association == n)
        if users.size > d_max:
            raise ValueError("association exceeds the per-BS slot budget")
        table[n, :users.size] = users
    return table


def _initial_allocation(params: SimParams, association: np.ndarray,
                        ladder: np.ndarray) -> Allocation:
    """Round-robin each BS's users over its RBGs at the mid power level."""
    alpha = np.zeros((params.n_bs, params.n_rbg, params.n_users), dtype=np.int8)
    for n in range(params.n_bs):
        users = np.flatnonzero(association == n)
        for m in range(params.n_rbg):
            alpha[n, m, users[m % users.size]] = 1
    power = np.full((params.n_bs, params.n_rbg),
                    ladder[len(ladder) // 2])
    return Allocation(alpha=alpha, power=power)


def _state_digest(arr: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()[:16]


@dataclass
class SlotResult:
    allocation: Allocation
    outcome: object
    reward: float
    trace: dict


class SlotRunner:
    """Drives one environment with either the team or the independent
    protocol, owning the agents, their pending transitions and training.

    mode "tdl": round-1 power intention -> RRA (sees intention) -> round-2
    actual power (sees RRA choice) -> commit.
    mode "idl": single power DQN and RRA act simultaneously from
    environment-only states; the RRA state carries current powers in
    place of an intention.
    """

    def __init__(self, env: Environment, cfg: TrainConfig, mode: str,
                 scales: FeatureScales | None = None):
        if mode not in ("tdl", "idl"):
            raise ValueError(f"mode must be 'tdl' or 'idl', got {mode!r}")
        self.env = env
        self.cfg = cfg
        self.mode = mode
        params = env.params
        self.params = params
        self.scales = scales or FeatureScales.from_gains(params, env.gains)

        rng_w = env.streams.weights
        d_max = d_max_slots(params)
        self.slot_table = _user_slot_table(env.topology.association,
                                           params.n_bs, d_max)
        r1_dim = params.n_bs * ((params.n_bs - 1) + 3)
        self.power1 = PowerAgent(params, r1_dim, cfg, rng_w)
        if mode == "tdl":
            r2_dim = params.n_bs * (2 * (params.n_bs - 1) + 6)
            self.power2 = PowerAgent(params, r2_dim, cfg, rng_w)
        else:
            self.power2 = None
        self.rra = [RraAgent(params, cfg, rng_w, self.slot_table[n])
                    for n in range(params.n_bs)]

        self.alloc = _initial_allocation(params, env.topology.association,
                                         self.power1.ladder)
        # normalizes the shared team reward to O(1): aggregate system
        # capacity with everyone at max power, computed once at startup
        full_power = np.full((params.n_bs, params.n_rbg), params.p_max_watts)
        eta = compute_sinr(self.alloc.alpha, full_power, env.gains,
                           params.noise_watts)
        self.reward_scale = float(
            rbg_capacity(eta.sum(axis=2), params.bandwidth_rbg).sum())
        self._pending = None
        self.slot = 0

    def _snapshot(self) -> EnvSnapshot:
        return EnvSnapshot(
            alpha=self.alloc.alpha,
            power=self.alloc.power,
            gains=self.env.gains,
            rates=self.env.last_rates,
            queued=self.env.queued_bits(),
        )

    def _complete_pending(self, key: str, next_states) -> None:
        """Turn last slot's (state, action, reward) into experiences now
        that the follow-up states exist."""
        if self._pending is None:
            return
        states, actions, reward = self._pending[key]
        if key == "rra":
            for n, agent in enumerate(self.rra):
                for m in range(self.params.n_rbg):
                    a = int(m * agent.d_max + actions[n][m])
                    agent.remember(Experience(
                        state=states[n], action=a, reward=reward,
                        next_state=next_states[n],
                        next_mask=agent.head_mask(m)))
        else:
            agent = self.power1 if key == "power1" else self.power2
            for m in range(self.params.n_rbg):
                agent.remember(Experience(
                    state=states[m], action=int(actions[m]), reward=reward,
                    next_state=next_states[m]))

    def step(self, epsilon: float | None = None, train: bool = True) -> SlotResult:
        """Run one slot: decide, commit, record experiences, train."""
        if epsilon is None:
            epsilon = epsilon_at(self.slot, self.cfg)
        rng = self.env.streams.exploration
        snap = self._snapshot()

        s1 = power_round1_states(snap, self.scales)
        self._complete_pending("power1", s1)
        a1, _, intended_power = self.power1.select_powers(s1, epsilon, rng)

        rra_next_power = intended_power if self.mode == "tdl" else None
        s_rra = [build_rra_state(snap, rra_next_power, n, self.scales,
                                 self.slot_table[n])
                 for n in range(self.params.n_bs)]
        self._complete_pending("rra", s_rra)
        rra_slots, chosen_user = [], np.empty(
            (self.params.n_bs, self.params.n_rbg), dtype=np.int64)
        for n, agent in enumerate(self.rra):
            slots, users = agent.select_users(s_rra[n], epsilon, rng)
            rra_slots.append(slots)
            chosen_user[n] = users

        if self.mode == "tdl":
            s2 = power_round2_states(snap, chosen_user, self.scales)
            self._complete_pending("power2", s2)
            a2, _, actual_power = self.power2.select_powers(s2, epsilon, rng)
        else:
            s2, a2, actual_power = None, None, intended_power

        alpha = np.zeros_like(self.alloc.alpha)
        for n in range(self.params.n_bs):
            alpha[n, np.arange(self.params.n_rbg), chosen_user[n]] = 1
        alloc = Allocation(alpha=alpha, power=actual_power.copy())

        outcome = self.env.step(alloc)
        reward = outcome.total_throughput / self.reward_scale

        pending = {
            "power1": (s1, a1, reward),
            "rra": (s_rra, rra_slots, reward),
        }
        if self.mode == "tdl":
            pending["power2"] = (s2, a2, reward)
        self._pending = pending
        self.alloc = alloc

        if train and self.slot % self.cfg.train_every == 0:
            for agent in self._agents():
                agent.train_if_ready(rng)

        trace = {
            "slot": self.slot,
            "mode": self.mode,
            "state_hashes": {
                "power1": _state_digest(s1),
                "rra": [_state_digest(s) for s in s_rra],
                **({"power2": _state_digest(s2)} if s2 is not None else {}),
            },
            "actions": {
                "power1": [int(a) for a in a1],
                "rra": [[int(s) for s in slots] for slots in rra_slots],
                **({"power2": [int(a) for a in a2]} if a2 is not None else {}),
            },
            "reward": reward,
        }
        self.slot += 1
        return SlotResult(allocation=alloc, outcome=outcome, reward=reward,
                          trace=trace)

    def _agents(self):
        agents = [self.power1, *self.rra]
        if self.power2 is not None:
            agents.append(self.power2)
        return agents

    def save_checkpoints(self, directory) -> None:
        from pathlib import Path
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        self.power1.net.save(d / "power1.npz")
        if self.power2 is not None:
            self.power2.net.save(d / "power2.npz")
        for n, agent in enumerate(self.rra):
            agent.net.save(d / f"rra{n}.npz")
