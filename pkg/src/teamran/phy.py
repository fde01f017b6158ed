"""Downlink PHY math: path loss, SINR, Shannon capacity and achieved rate.

Everything here is a pure function of its arguments. All link math is done
in linear watts; dBm only appears at the configuration boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Users closer than this to a BS are treated as being at this distance,
# which keeps the log-distance path loss finite.
MIN_LINK_DISTANCE_M = 10.0


def dbm_to_watts(p_dbm):
    """Convert a power level from dBm to watts."""
    return 10.0 ** ((np.asarray(p_dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(p_watts):
    """Convert a power level from watts to dBm."""
    return 10.0 * np.log10(np.asarray(p_watts, dtype=float)) + 30.0


@dataclass(frozen=True)
class SimParams:
    """Static network and radio configuration.

    Power bounds are stored in dBm (as configured); ``p_min_watts`` /
    ``p_max_watts`` give the linear equivalents used by the link math.
    """

    n_bs: int = 4
    n_users: int = 30
    n_rbg: int = 12
    bandwidth_total: float = 20e6
    p_min_dbm: float = 1.0
    p_max_dbm: float = 38.0
    n_power_levels: int = 4
    noise_dbm: float = -114.0
    slot_duration: float = 0.1
    inter_site_distance: float = 1000.0
    shadow_sigma_db: float = 0.0
    rayleigh_fading: bool = False
    packet_bits: int = 4000
    buffer_bits: int = 2_400_000

    def __post_init__(self):
        if self.n_bs < 1:
            raise ValueError("n_bs must be >= 1")
        if self.n_users < 1:
            raise ValueError("n_users must be >= 1")
        if self.n_rbg < 1:
            raise ValueError("n_rbg must be >= 1")
        if not self.p_min_dbm < self.p_max_dbm:
            raise ValueError("p_min_dbm must be < p_max_dbm")
        if self.n_power_levels < 2:
            raise ValueError("n_power_levels must be >= 2")
        if self.slot_duration <= 0:
            raise ValueError("slot_duration must be > 0")
        if self.bandwidth_total <= 0:
            raise ValueError("bandwidth_total must be > 0")
        if self.packet_bits < 1:
            raise ValueError("packet_bits must be >= 1")
        if self.buffer_bits < 0:
            raise ValueError("buffer_bits must be >= 0")

    @property
    def bandwidth_rbg(self) -> float:
        """Bandwidth of a single resource block group in Hz."""
        return self.bandwidth_total / self.n_rbg

    @property
    def noise_watts(self) -> float:
        return float(dbm_to_watts(self.noise_dbm))

    @property
    def p_min_watts(self) -> float:
        return float(dbm_to_watts(self.p_min_dbm))

    @property
    def p_max_watts(self) -> float:
        return float(dbm_to_watts(self.p_max_dbm))


@dataclass
class Allocation:
    """A committed scheduling decision for one slot.

    alpha  -- binary tensor [n_bs, n_rbg, n_users]; alpha[n, m, k] == 1 means
              BS n serves user k on RBG m.
    power  -- transmit power matrix [n_bs, n_rbg] in watts.
    """

    alpha: np.ndarray
    power: np.ndarray

    def validate(self, params: SimParams, association=None) -> None:
        """Check the scheduling constraints; raise ValueError on violation."""
        if self.alpha.shape != (params.n_bs, params.n_rbg, params.n_users):
            raise ValueError(f"alpha has shape {self.alpha.shape}")
        if self.power.shape != (params.n_bs, params.n_rbg):
            raise ValueError(f"power has shape {self.power.shape}")
        if not np.isin(self.alpha, (0, 1)).all():
            raise ValueError("alpha entries must be 0 or 1")
        per_rbg = self.alpha.sum(axis=2)
        if not (per_rbg == 1).all():
            raise ValueError("exactly one user must hold each (bs, rbg)")
        # tolerance covers dBm->watts round trips at the ladder endpoints
        lo, hi = params.p_min_watts, params.p_max_watts
        if (self.power < lo * (1 - 1e-9)).any() or (self.power > hi * (1 + 1e-9)).any():
            raise ValueError("power outside [p_min, p_max]")
        if association is not None:
            scheduled = self.alpha.argmax(axis=2)  # [n_bs, n_rbg]
            for n in range(params.n_bs):
                if not (np.asarray(association)[scheduled[n]] == n).all():
                    raise ValueError(
                        f"BS {n} schedules a user not associated to it"
                    )

    def scheduled_user(self) -> np.ndarray:
        """User id holding each (bs, rbg), shape [n_bs, n_rbg]."""
        return self.alpha.argmax(axis=2)


def path_gain(distance_m, shadow=1.0):
    """Linear power gain of the log-distance propagation model.

    Loss in dB is 120.9 + 37.6*log10(d_km) + 10*log10(shadow); the return
    value is 10**(-loss/10). ``shadow`` is a linear shadowing factor
    (1.0 disables shadowing). Accepts scalars or arrays.
    """
    d = np.asarray(distance_m, dtype=float)
    z = np.asarray(shadow, dtype=float)
    if (d <= 0).any():
        raise ValueError("distance must be > 0 (clamp to MIN_LINK_DISTANCE_M first)")
    if (z <= 0).any():
        raise ValueError("shadow factor must be > 0")
    loss_db = 120.9 + 37.6 * np.log10(d / 1000.0) + 10.0 * np.log10(z)
    return 10.0 ** (-loss_db / 10.0)


def compute_sinr(alpha: np.ndarray, power: np.ndarray, gains: np.ndarray,
                 noise_watts: float) -> np.ndarray:
    """Per-link SINR tensor [n_bs, n_rbg, n_users] (linear).

    Entry (n, m, k) is the scheduled-link SINR: alpha*g*P over the sum of
    co-channel interference from every other BS transmitting on RBG m
    toward user k, plus the noise power. Zero wherever alpha is zero.
    """
    alpha = np.asarray(alpha, dtype=float)
    power = np.asarray(power, dtype=float)
    gains = np.asarray(gains, dtype=float)
    # rx[n, m, k]: power user k receives from BS n's transmission on RBG m
    occupied = alpha.sum(axis=2)  # == 1 under the scheduling constraint
    rx = occupied[:, :, None] * power[:, :, None] * gains[:, None, :]
    # sum rx over every other BS; the explicit mask avoids the cancellation
    # a total-minus-own formulation would introduce
    n_bs = alpha.shape[0]
    others = 1.0 - np.eye(n_bs)
    interference = np.einsum("on,nmk->omk", others, rx)
    signal = alpha * power[:, :, None] * gains[:, None, :]
    return signal / (interference + noise_watts)


def rbg_capacity(sinr_sum, bandwidth_rbg):
    """Shannon capacity of one RBG in bits/s given its summed SINR."""
    return bandwidth_rbg * np.log2(1.0 + np.asarray(sinr_sum, dtype=float))


def transmission_rate(capacity, queued_bits, slot):
    """Achieved rate in bits/s: capacity-limited or buffer-limited.

    If capacity*slot < queued_bits the link is capacity-limited and the
    full capacity is achieved; otherwise (including equality) the buffer
    drains completely and the rate is queued_bits/slot.
    """
    capacity = np.asarray(capacity, dtype=float)
    queued = np.asarray(queued_bits, dtype=float)
    return np.where(capacity * slot < queued, capacity, queued / slot)
