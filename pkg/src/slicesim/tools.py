"""Action-step capabilities: channel synthesis, zero-forcing rate caps, and
handover execution.

The channel model is a standard distance pathloss with i.i.d. complex
Gaussian small-scale fading; the precoder is the textbook zero-forcing
pseudo-inverse with per-user power normalization. Caps floor to integer Mb/s
so channel limits stay on the RB grid.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .domain import NetworkState, Position, rbs_for_rate


class RankDeficient(Exception):
    pass


class TooManyUsers(Exception):
    pass


class StalePlan(Exception):
    pass


@dataclass(frozen=True)
class ChannelModel:
    """Channel and link-budget parameters for the beamforming tool."""

    antennas: int = 4
    pathloss_exp: float = 3.5
    ref_distance: float = 1.0
    noise_power: float = 1e-9
    tx_power: float = 1.0
    bandwidth_factor: float = 40.0

    def __post_init__(self):
        if self.antennas < 1:
            raise ValueError("antennas must be at least 1")
        if self.pathloss_exp <= 2:
            raise ValueError("pathloss exponent must exceed 2")
        if self.noise_power <= 0:
            raise ValueError("noise power must be positive")


def _float_bits(value: float) -> int:
    return int.from_bytes(struct.pack("<d", value), "little")


def gen_channel(pos: Position, bs: Position, model: ChannelModel,
                seed: int) -> np.ndarray:
    """Draw the complex channel vector for a user at ``pos``.

    h = sqrt(PL(d)) * g with PL(d) = (max(d, d0)/d0)^(-alpha) and g i.i.d.
    standard complex normal; deterministic per (pos, seed).
    """
    d = pos.distance_to(bs)
    pl = (max(d, model.ref_distance) / model.ref_distance) ** (-model.pathloss_exp)
    rng = np.random.default_rng([seed, _float_bits(pos.x), _float_bits(pos.y)])
    g = (rng.standard_normal(model.antennas)
         + 1j * rng.standard_normal(model.antennas)) / np.sqrt(2.0)
    return np.sqrt(pl) * g


def zf_precoder(H: np.ndarray, power: float = 1.0) -> np.ndarray:
    """Zero-forcing precoder W = H^H (H H^H)^-1, columns scaled to ``power``.

    H is S x M with one row per user; requires S <= M and a well-conditioned
    H H^H. H @ W is diagonal to numerical precision.
    """
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2:
        raise ValueError("H must be a 2-D matrix")
    n_users, n_antennas = H.shape
    if n_users > n_antennas:
        raise TooManyUsers(f"{n_users} users exceed {n_antennas} antennas")
    gram = H @ H.conj().T
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond >= 1e8:
        raise RankDeficient(f"H H* condition number {cond:.3g}")
    W = H.conj().T @ np.linalg.inv(gram)
    norms = np.linalg.norm(W, axis=0)
    return W * (np.sqrt(power) / norms)


def rate_cap(H: np.ndarray, W: np.ndarray, model: ChannelModel) -> list[int]:
    """Integer Mb/s cap per user: floor(B * log2(1 + |h_u w_u|^2 / sigma^2)).

    Cross-terms are nulled by the precoder, so the denominator is noise only.
    """
    H = np.asarray(H, dtype=complex)
    W = np.asarray(W, dtype=complex)
    effective = H @ W
    caps = []
    for u in range(H.shape[0]):
        sinr = abs(effective[u, u]) ** 2 / model.noise_power
        caps.append(math.floor(model.bandwidth_factor * math.log2(1.0 + sinr)))
    return caps


def single_user_cap(pos: Position, bs: Position, model: ChannelModel,
                    seed: int) -> int:
    """Rate cap for one user served alone (the simulator's per-arrival path)."""
    h = gen_channel(pos, bs, model, seed)
    H = h.conj().reshape(1, -1)
    W = zf_precoder(H, power=model.tx_power)
    return rate_cap(H, W, model)[0]


def apply_handover(state: NetworkState, plan) -> NetworkState:
    """Execute a handover plan as release-then-admit at the same rate, in order.

    The plan is re-validated against the current state first (users present
    at the planned rates, destination ranges and capacity honored move by
    move); a mismatch raises StalePlan and leaves the state untouched.
    """
    location = dict(state.admitted)
    rates = {user: state.slices[kind].allocations[user].rate
             for user, kind in state.admitted.items()}
    running_free = {k: ledger.free_rbs for k, ledger in state.slices.items()}
    for m in plan.moves:
        src = state.slices.get(m.src)
        dst = state.slices.get(m.dst)
        if src is None or dst is None or m.src == m.dst:
            raise StalePlan(f"bad move endpoints {m.src}->{m.dst}")
        if location.get(m.user) != m.src:
            raise StalePlan(f"user {m.user} no longer in {m.src}")
        if rates.get(m.user) != m.rate:
            raise StalePlan(f"user {m.user} rate changed: {rates.get(m.user)} != {m.rate}")
        if not dst.config.decision_range.contains(m.rate):
            raise StalePlan(f"rate {m.rate} outside {m.dst} decision range")
        need = rbs_for_rate(m.rate, dst.config.rb_rate)
        if running_free[m.dst] < need:
            raise StalePlan(f"{m.dst} lacks {need} free RBs for user {m.user}")
        running_free[m.dst] -= need
        running_free[m.src] += rbs_for_rate(m.rate, src.config.rb_rate)
        location[m.user] = m.dst
    for m in plan.moves:
        state.release_user(m.user)
        state.admit_user(m.user, m.dst, m.rate)
        state.slices[m.src].check()
        state.slices[m.dst].check()
    return state
