"""Mutable world state: topology, mobility, traffic, buffers, channel.

The Environment owns everything that changes slot to slot and advances by
exactly one slot per call to step(). All randomness is drawn from named
sub-streams derived from a single master seed, so traffic and mobility
traces can be reproduced independently of agent behaviour.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .phy import (
    MIN_LINK_DISTANCE_M,
    Allocation,
    SimParams,
    compute_sinr,
    path_gain,
    rbg_capacity,
    transmission_rate,
)


@dataclass
class RandomStreams:
    """Named RNG sub-streams, all derived from one master seed.

    Spawn order is fixed (traffic, mobility, shadowing, exploration,
    weights) and must not change: it defines reproducibility.
    """

    traffic: np.random.Generator
    mobility: np.random.Generator
    shadowing: np.random.Generator
    exploration: np.random.Generator
    weights: np.random.Generator

    @classmethod
    def from_seed(cls, master_seed: int) -> "RandomStreams":
        children = np.random.SeedSequence(master_seed).spawn(5)
        return cls(*(np.random.default_rng(c) for c in children))


@dataclass
class MobilityParams:
    speed: float = 20.0           # m/s
    turn_probability: float = 0.3  # per slot
    region_radius: float = 250.0   # m, home circle around the initial position

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError("speed must be >= 0")
        if not 0.0 <= self.turn_probability <= 1.0:
            raise ValueError("turn_probability must be in [0, 1]")
        if self.region_radius <= 0:
            raise ValueError("region_radius must be > 0")


@dataclass
class NetworkTopology:
    bs_positions: np.ndarray    # [n_bs, 2] m
    user_positions: np.ndarray  # [n_users, 2] m
    association: np.ndarray     # [n_users] BS index, frozen after init
    home_centers: np.ndarray    # [n_users, 2] m
    home_radius: float

    def users_of(self, n: int) -> np.ndarray:
        return np.flatnonzero(self.association == n)

    def distances(self) -> np.ndarray:
        """[n_bs, n_users] euclidean distances."""
        diff = self.bs_positions[:, None, :] - self.user_positions[None, :, :]
        return np.linalg.norm(diff, axis=2)


@dataclass
class UserBuffer:
    """Per-user transmit queue with exact integer-bit accounting."""

    capacity: int
    queued: int = 0
    total_arrived: int = 0
    total_served: int = 0
    total_dropped: int = 0

    def serve(self, bits: int) -> int:
        """Debit up to ``bits`` from the queue; returns bits actually served."""
        served = min(int(bits), self.queued)
        self.queued -= served
        self.total_served += served
        return served

    def arrive(self, bits: int) -> int:
        """Credit an arrival, truncating to capacity; returns bits dropped."""
        bits = int(bits)
        self.total_arrived += bits
        self.queued += bits
        dropped = max(0, self.queued - self.capacity)
        self.queued -= dropped
        self.total_dropped += dropped
        return dropped

    def check_conservation(self) -> None:
        if self.total_arrived != self.total_served + self.total_dropped + self.queued:
            raise AssertionError("buffer conservation violated")


@dataclass
class SlotOutcome:
    rates: np.ndarray        # [n_bs, n_rbg] bits/s
    served_bits: np.ndarray  # [n_users] int
    dropped_bits: np.ndarray  # [n_users] int
    arrived_bits: np.ndarray  # [n_users] int
    total_throughput: float   # bits/s, sum of rates


def generate_arrivals(rng: np.random.Generator, mean_rate: float, slot: float,
                      n_users: int, packet_bits: int) -> np.ndarray:
    """Poisson packet arrivals per user, returned as integer bits.

    Packet counts are Poisson with mean mean_rate*slot/packet_bits, so the
    expected bit total per user and slot is mean_rate*slot.
    """
    if mean_rate < 0:
        raise ValueError("mean_rate must be >= 0")
    lam = mean_rate * slot / packet_bits
    counts = rng.poisson(lam, size=n_users)
    return counts.astype(np.int64) * packet_bits


def step_mobility(rng: np.random.Generator, topology: NetworkTopology,
                  params: MobilityParams, slot: float,
                  headings: np.ndarray) -> np.ndarray:
    """Advance all users one slot in place; returns the updated headings.

    Constant speed; with turn_probability a fresh uniform heading is drawn
    before moving. Users leaving their home circle are reflected radially
    back inside and their heading velocity is mirrored about the boundary
    tangent, so speed is preserved and the home region is never left.
    """
    k = topology.user_positions.shape[0]
    turn = rng.random(k) < params.turn_probability
    new_heading = rng.uniform(0.0, 2.0 * math.pi, size=k)
    headings = np.where(turn, new_heading, headings)
    if params.speed == 0.0:
        return headings
    step = params.speed * slot
    pos = topology.user_positions
    pos += step * np.stack([np.cos(headings), np.sin(headings)], axis=1)
    # reflect back into the home circle
    offset = pos - topology.home_centers
    dist = np.linalg.norm(offset, axis=1)
    outside = dist > topology.home_radius
    if outside.any():
        radial = offset[outside] / dist[outside, None]
        pos[outside] = (
            topology.home_centers[outside]
            + (2.0 * topology.home_radius - dist[outside, None]) * radial
        )
        vx, vy = np.cos(headings[outside]), np.sin(headings[outside])
        dot = vx * radial[:, 0] + vy * radial[:, 1]
        vx -= 2.0 * dot * radial[:, 0]
        vy -= 2.0 * dot * radial[:, 1]
        headings[outside] = np.arctan2(vy, vx)
    return headings


def refresh_channel(topology: NetworkTopology, params: SimParams,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """Channel gain matrix [n_bs, n_users] from current positions.

    Log-normal shadowing (shadow_sigma_db) and Rayleigh block fading are
    both disabled by default; when enabled they consume ``rng``.
    """
    d = np.maximum(topology.distances(), MIN_LINK_DISTANCE_M)
    shadow = 1.0
    if params.shadow_sigma_db > 0.0:
        if rng is None:
            raise ValueError("shadowing enabled but no rng given")
        shadow = 10.0 ** (params.shadow_sigma_db * rng.standard_normal(d.shape) / 10.0)
    g = path_gain(d, shadow)
    if params.rayleigh_fading:
        if rng is None:
            raise ValueError("fading enabled but no rng given")
        g = g * rng.exponential(1.0, size=g.shape)
    return g


def apply_allocation(alloc: Allocation, gains: np.ndarray,
                     buffers: list[UserBuffer], params: SimParams,
                     arrivals: np.ndarray,
                     association: np.ndarray | None = None) -> SlotOutcome:
    """Serve one slot under ``alloc``, then credit arrivals and drops.

    Rates follow the capacity/buffer-limited rule per RBG; buffer debits
    are floored to whole bits so the conservation ledger stays exact. When
    one user holds several RBGs of its BS, RBGs are processed in (n, m)
    order and each sees the queue as already drained by earlier ones.
    """
    if association is not None:
        alloc.validate(params, association)
    eta = compute_sinr(alloc.alpha, alloc.power, gains, params.noise_watts)
    cap = rbg_capacity(eta.sum(axis=2), params.bandwidth_rbg)
    scheduled = alloc.scheduled_user()
    t = params.slot_duration

    n_users = len(buffers)
    rates = np.zeros((params.n_bs, params.n_rbg))
    served = np.zeros(n_users, dtype=np.int64)
    for n in range(params.n_bs):
        for m in range(params.n_rbg):
            k = int(scheduled[n, m])
            queued = buffers[k].queued
            rates[n, m] = transmission_rate(cap[n, m], queued, t)
            served[k] += buffers[k].serve(int(math.floor(cap[n, m] * t)))

    dropped = np.zeros(n_users, dtype=np.int64)
    arrivals = np.asarray(arrivals, dtype=np.int64)
    for k in range(n_users):
        dropped[k] = buffers[k].arrive(int(arrivals[k]))

    return SlotOutcome(
        rates=rates,
        served_bits=served,
        dropped_bits=dropped,
        arrived_bits=arrivals.copy(),
        total_throughput=float(rates.sum()),
    )


def packet_drop_rate(buffers: list[UserBuffer]) -> float:
    """Dropped bits over arrived bits across all users; 0 before any arrival."""
    arrived = sum(b.total_arrived for b in buffers)
    if arrived == 0:
        return 0.0
    return sum(b.total_dropped for b in buffers) / arrived


def _bs_grid(n_bs: int, spacing: float) -> np.ndarray:
    """BS positions on a square-ish grid with the given spacing."""
    cols = math.ceil(math.sqrt(n_bs))
    pts = [(spacing * (i % cols), spacing * (i // cols)) for i in range(n_bs)]
    return np.array(pts, dtype=float)


def build_topology(params: SimParams, mobility: MobilityParams,
                   rng: np.random.Generator) -> NetworkTopology:
    """Place BSs on a grid and users uniformly inside the cells.

    Each user is dropped in a disk of radius inter_site_distance/2 around
    a uniformly chosen BS, then associated to its nearest BS and frozen
    there (no handover). Every BS is guaranteed at least one user.
    """
    bs = _bs_grid(params.n_bs, params.inter_site_distance)
    cell_r = params.inter_site_distance / 2.0
    home = rng.integers(params.n_bs, size=params.n_users)
    r = cell_r * np.sqrt(rng.random(params.n_users))
    ang = rng.uniform(0.0, 2.0 * math.pi, size=params.n_users)
    pos = bs[home] + np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1)

    d = np.linalg.norm(bs[:, None, :] - pos[None, :, :], axis=2)
    association = d.argmin(axis=0)
    # keep every BS non-empty: steal the nearest user from a BS that can spare one
    for n in range(params.n_bs):
        if (association == n).sum() == 0:
            counts = np.bincount(association, minlength=params.n_bs)
            spare = np.flatnonzero(counts[association] >= 2)
            k = spare[d[n, spare].argmin()]
            association[k] = n

    return NetworkTopology(
        bs_positions=bs,
        user_positions=pos,
        association=association,
        home_centers=pos.copy(),
        home_radius=mobility.region_radius,
    )


class Environment:
    """One simulated network instance, advanced one slot at a time."""

    def __init__(self, params: SimParams, mobility: MobilityParams,
                 traffic_mean: float, streams: RandomStreams):
        self.params = params
        self.mobility = mobility
        self.traffic_mean = traffic_mean
        self.streams = streams
        self.topology = build_topology(params, mobility, streams.mobility)
        self.headings = streams.mobility.uniform(0.0, 2.0 * math.pi,
                                                 size=params.n_users)
        self.gains = refresh_channel(self.topology, params, streams.shadowing)
        self.buffers = [UserBuffer(capacity=params.buffer_bits)
                        for _ in range(params.n_users)]
        self.last_rates = np.zeros((params.n_bs, params.n_rbg))
        self._trace = hashlib.sha256()

    def queued_bits(self) -> np.ndarray:
        return np.array([b.queued for b in self.buffers], dtype=np.int64)

    def step(self, alloc: Allocation) -> SlotOutcome:
        """Apply one allocation, then move users and refresh the channel."""
        arrivals = generate_arrivals(
            self.streams.traffic, self.traffic_mean,
            self.params.slot_duration, self.params.n_users,
            self.params.packet_bits,
        )
        outcome = apply_allocation(alloc, self.gains, self.buffers,
                                   self.params, arrivals,
                                   self.topology.association)
        self.last_rates = outcome.rates
        self._trace.update(outcome.arrived_bits.tobytes())
        self.headings = step_mobility(self.streams.mobility, self.topology,
                                      self.mobility,
                                      self.params.slot_duration,
                                      self.headings)
        self._trace.update(np.ascontiguousarray(
            self.topology.user_positions).tobytes())
        self.gains = refresh_channel(self.topology, self.params,
                                     self.streams.shadowing)
        return outcome

    def trace_hash(self) -> str:
        """Digest of the traffic and mobility trace consumed so far."""
        return self._trace.hexdigest()

    def packet_drop_rate(self) -> float:
        return packet_drop_rate(self.buffers)
