"""Link-level radio model: path loss, SINR, capacity and its spatial harmonic mean.

Cells are pointy-top hexagons (vertices at 30 + 60k degrees) with the base
station at the center. The in-cell user density is uniform and realized by a
fixed, unscrambled Halton point set, so every run integrates over the same
locations.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy.stats import qmc

if TYPE_CHECKING:
    from .scenario import OverlapIndex, Scenario


class DegenerateCapacityError(ArithmeticError):
    """A quadrature point has zero capacity, so the harmonic mean is undefined."""


@dataclass(frozen=True)
class RadioParams:
    pathloss_a_db: float = 128.1
    pathloss_b: float = 37.6
    carrier_hz: float = 2.0e9
    noise_psd_dbm_hz: float = -174.0
    eta1: float = 0.63
    eta2: float = 0.4
    power_bandwidth_hz: float = 72e6
    integration_points: int = 4096
    min_distance_m: float = 1.0
    zero_interference: bool = False


def dbm_to_watt(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def path_loss_db(d_km, a_db: float = 128.1, b: float = 37.6):
    d = np.asarray(d_km, dtype=float)
    if np.any(d <= 0):
        raise ValueError("path loss needs a positive distance")
    out = a_db + b * np.log10(d)
    return float(out) if out.ndim == 0 else out


def in_hexagon(points: np.ndarray, center: Sequence[float], radius: float) -> np.ndarray:
    x = np.abs(points[:, 0] - center[0])
    y = np.abs(points[:, 1] - center[1])
    half_w = math.sqrt(3) / 2 * radius
    return (x <= half_w) & (y <= radius - x / math.sqrt(3))


@lru_cache(maxsize=64)
def _unit_hexagon_grid(n: int) -> np.ndarray:
    """First ``n`` Halton points falling inside the unit-radius hexagon."""
    sampler = qmc.Halton(d=2, scramble=False)
    half_w = math.sqrt(3) / 2
    pts = np.empty((0, 2))
    while len(pts) < n:
        raw = sampler.random(2 * n)
        cand = np.column_stack([(2 * raw[:, 0] - 1) * half_w, 2 * raw[:, 1] - 1])
        pts = np.vstack([pts, cand[in_hexagon(cand, (0.0, 0.0), 1.0)]])
    pts = pts[:n]
    pts.setflags(write=False)
    return pts


def hexagon_grid(center: Sequence[float], radius: float, n: int) -> np.ndarray:
    return np.asarray(center, dtype=float) + radius * _unit_hexagon_grid(n)


class LinkModel:
    """Received powers on every quadrature point for every slice channel.

    For the global channel ``ch`` of slice ``s`` in cell ``b``:

    * ``signal[ch]``: P^SI at each point of cell ``b`` (watts),
    * ``interference[ch]``: (points x overlaps) matrix of P^IN from each
      overlapping channel, PSD of the interfering BS times the overlapped
      bandwidth,
    * ``noise[ch]``: thermal noise over ``w_s``.
    """

    def __init__(self, sc: Scenario, overlap: OverlapIndex):
        self.sc = sc
        self.overlap = overlap
        r = sc.radio
        n0 = float(dbm_to_watt(r.noise_psd_dbm_hz))
        grids = [hexagon_grid(c.center, c.hex_radius, r.integration_points) for c in sc.cells]
        psd = [float(dbm_to_watt(c.bs_power_dbm)) / r.power_bandwidth_hz for c in sc.cells]
        # gains[b_tx][b_rx]: path gain from BS b_tx to every point of cell b_rx
        gains = [[self._gain(np.asarray(tx.center), grids[b_rx]) for b_rx in range(len(sc.cells))]
                 for tx in sc.cells]
        self.signal, self.interference, self.noise, self.bandwidth = [], [], [], []
        for ch, (s, q) in enumerate(overlap.channel_of):
            sl = sc.slices[s]
            b = sl.cell
            self.signal.append(psd[b] * sl.channel_bw_hz * gains[b][b])
            cols = []
            for other, hz in zip(overlap.overlaps[ch], overlap.overlap_hz[ch]):
                b2 = sc.slices[overlap.channel_of[other][0]].cell
                cols.append(psd[b2] * hz * gains[b2][b])
            m = np.column_stack(cols) if cols else np.zeros((r.integration_points, 0))
            if r.zero_interference:
                m = np.zeros_like(m)
            self.interference.append(m)
            self.noise.append(n0 * sl.channel_bw_hz)
            self.bandwidth.append(sl.channel_bw_hz)

    def _gain(self, bs: np.ndarray, pts: np.ndarray) -> np.ndarray:
        r = self.sc.radio
        d_m = np.maximum(np.hypot(pts[:, 0] - bs[0], pts[:, 1] - bs[1]), r.min_distance_m)
        return 10.0 ** (-path_loss_db(d_m / 1000.0, r.pathloss_a_db, r.pathloss_b) / 10.0)

    def capacity_field(self, ch: int, activity) -> np.ndarray:
        """Capacity at every quadrature point for activities of the overlapping channels.

        ``activity`` is usually a 0/1 interference vector; fractional values
        scale the interfering powers (used by the averaged-interference method).
        """
        r = self.sc.radio
        act = np.asarray(activity, dtype=float)
        den = self.noise[ch] + self.interference[ch] @ act
        gamma = self.signal[ch] / den
        return r.eta1 * self.bandwidth[ch] * np.log2(1.0 + r.eta2 * gamma)

    def harmonic_capacity(self, ch: int, activity) -> float:
        return harmonic_mean(self.capacity_field(ch, activity))


def harmonic_mean(values: np.ndarray) -> float:
    """Order-independent harmonic mean (exactly rounded sum of reciprocals)."""
    v = np.asarray(values, dtype=float)
    if np.any(v <= 0):
        raise DegenerateCapacityError("capacity is zero at a quadrature point")
    return len(v) / math.fsum((1.0 / v).tolist())


def code_bits(code: int, m: int) -> np.ndarray:
    return np.array([(code >> j) & 1 for j in range(m)], dtype=float)


def bits_code(bits: Sequence[int]) -> int:
    return sum(int(b) << j for j, b in enumerate(bits))


class CapacityTable:
    """Memoized location-averaged capacity C_{s,q,u}(Delta) per channel.

    An interference vector is encoded as an integer whose bit ``j`` is the
    activity of ``overlap.overlaps[ch][j]``. All SPs are uniform inside a
    cell, so the value does not depend on ``u`` beyond the serving slice.
    """

    def __init__(self, link: LinkModel):
        self.link = link
        self.overlap = link.overlap
        self._full: dict[int, np.ndarray] = {}

    @classmethod
    def for_scenario(cls, sc: Scenario, overlap: OverlapIndex | None = None) -> CapacityTable:
        from .scenario import build_overlap_index
        return cls(LinkModel(sc, overlap or build_overlap_index(sc)))

    def num_overlaps(self, ch: int) -> int:
        return len(self.overlap.overlaps[ch])

    def table(self, ch: int) -> np.ndarray:
        """Capacities for every interference code of channel ``ch``."""
        got = self._full.get(ch)
        if got is None:
            m = self.num_overlaps(ch)
            got = np.array([self.link.harmonic_capacity(ch, code_bits(c, m))
                            for c in range(1 << m)])
            got.setflags(write=False)
            self._full[ch] = got
        return got

    def capacity(self, ch: int, code: int) -> float:
        return float(self.table(ch)[code])

    def rows(self):
        for ch, (s, q) in enumerate(self.overlap.channel_of):
            m = self.num_overlaps(ch)
            sl = self.link.sc.slices[s]
            for code, cap in enumerate(self.table(ch)):
                bits = "".join(str((code >> j) & 1) for j in range(m))
                yield sl.id, q + 1, self.link.sc.sps[sl.sp].id, bits, float(cap)

    def dump_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["slice", "channel", "sp", "delta_bits", "capacity_bps"])
            w.writerows(self.rows())


# -- scalar point evaluations (debugging and cross-checks) --------------------


def sinr(s: int, q: int, location, delta: Sequence[int], sc: Scenario,
         overlap: OverlapIndex) -> float:
    """SINR of channel q of slice s at one location for an interference vector."""
    r = sc.radio
    sl = sc.slices[s]
    ch = overlap.channel(s, q)
    loc = np.asarray(location, dtype=float)

    def rx(cell_idx: int, hz: float) -> float:
        c = sc.cells[cell_idx]
        d = max(math.dist(loc, c.center), r.min_distance_m) / 1000.0
        psd = float(dbm_to_watt(c.bs_power_dbm)) / r.power_bandwidth_hz
        return psd * hz * 10.0 ** (-path_loss_db(d, r.pathloss_a_db, r.pathloss_b) / 10.0)

    interference = 0.0
    if not r.zero_interference:
        for bit, other, hz in zip(delta, overlap.overlaps[ch], overlap.overlap_hz[ch]):
            if bit:
                interference += rx(sc.slices[overlap.channel_of[other][0]].cell, hz)
    noise = float(dbm_to_watt(r.noise_psd_dbm_hz)) * sl.channel_bw_hz
    return rx(sl.cell, sl.channel_bw_hz) / (interference + noise)


def link_capacity(gamma: float, bandwidth_hz: float, eta1: float = 0.63, eta2: float = 0.4) -> float:
    return eta1 * bandwidth_hz * math.log2(1.0 + eta2 * gamma)


def avg_capacity(s: int, q: int, delta: Sequence[int], capacity: CapacityTable) -> float:
    """C_{s,q,u}(Delta): location-averaged capacity of channel q of slice s."""
    ch = capacity.overlap.channel(s, q)
    if len(delta) != capacity.num_overlaps(ch):
        raise ValueError(f"interference vector needs {capacity.num_overlaps(ch)} entries")
    return capacity.capacity(ch, bits_code(delta))
