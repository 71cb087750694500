"""State space and state-dependent rates of one interacting component.

A component is a set of slices closed under the "interact" relation. Its
state is the vector of customer counts ``n_RH``; the remaining buffer
``n_LH = Q^max - n_RH`` is implied. States are enumerated lexicographically
with the first slice as the most significant digit.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .radio import CapacityTable
from .scenario import OverlapIndex, Scenario, slice_arrival_rates

if TYPE_CHECKING:
    from .allocation import LookupTable

DEFAULT_MAX_STATES = 4_000_000


class StateSpaceTooLarge(RuntimeError):
    pass


class StateSpace:
    """Mixed-radix enumeration of the occupancy vectors of a component."""

    def __init__(self, slices: Sequence[int], qmax: Sequence[int],
                 max_states: int = DEFAULT_MAX_STATES):
        if not slices:
            raise ValueError("component must contain at least one slice")
        self.slices = tuple(int(s) for s in slices)
        self.qmax = np.asarray(qmax, dtype=np.int64)
        self.radix = self.qmax + 1
        size = math.prod(int(r) for r in self.radix)
        if size > max_states:
            raise StateSpaceTooLarge(
                f"state space of {size:,} states exceeds the limit of {max_states:,}")
        self.size = size
        strides = np.ones(len(self.slices), dtype=np.int64)
        for i in range(len(self.slices) - 2, -1, -1):
            strides[i] = strides[i + 1] * self.radix[i + 1]
        self.strides = strides
        self._digits = None

    def __len__(self) -> int:
        return self.size

    @property
    def dim(self) -> int:
        return len(self.slices)

    @property
    def digits(self) -> np.ndarray:
        """(dim, size) array of n_RH for every state, in state order."""
        if self._digits is None:
            dtype = np.int8 if self.qmax.max() < 127 else np.int32
            idx = np.arange(self.size, dtype=np.int64)
            d = np.empty((self.dim, self.size), dtype=dtype)
            for i in range(self.dim):
                d[i] = (idx // self.strides[i]) % self.radix[i]
            d.setflags(write=False)
            self._digits = d
        return self._digits

    def index(self, n_rh: Sequence[int]) -> int:
        return int(np.dot(np.asarray(n_rh, dtype=np.int64), self.strides))

    def state(self, index: int) -> tuple[int, ...]:
        return tuple(int((index // st) % r) for st, r in zip(self.strides, self.radix))

    def states(self):
        return itertools.product(*(range(int(r)) for r in self.radix))

    def left(self, n_rh: Sequence[int]) -> np.ndarray:
        return self.qmax - np.asarray(n_rh, dtype=np.int64)


def enumerate_states(sc: Scenario, slices: Sequence[int],
                     max_states: int = DEFAULT_MAX_STATES) -> StateSpace:
    return StateSpace(slices, [sc.slices[s].queue_cap for s in slices], max_states)


def e_vector(x_lh: Sequence[int], x_rh: Sequence[int], qmax: Sequence[int]):
    """Movement indicator e(x): zero left part, 1 where x_LH + x_RH != Q^max."""
    lh = np.asarray(x_lh)
    rh = np.asarray(x_rh)
    e_rh = (lh + rh != np.asarray(qmax)).astype(int)
    return np.zeros_like(e_rh), e_rh


def subvector_prob(dim: int, norm: int, n: int, q: int, qmax: int) -> float:
    """Probability that ``dim`` given channels of a slice with ``n`` customers
    and ``q`` channels show ``norm`` active ones in one specific pattern, under
    uniformly random channel allocation."""
    if dim == norm and qmax >= n > q:
        return 1.0
    if 0 <= n - norm <= q - dim:
        return math.comb(q - dim, n - norm) / math.comb(q, n)
    return 0.0


@dataclass(frozen=True)
class RatePolicy:
    """Channel allocation assumed when deriving service rates."""

    kind: str = "random"  # "random" or "lookup"
    table: LookupTable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("random", "lookup"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "lookup" and self.table is None:
            raise ValueError("lookup policy needs a lookup table")


RANDOM = RatePolicy()


def birth_death_distribution(lam: float, service: Sequence[float]) -> np.ndarray:
    """Stationary law of a finite birth-death chain.

    ``service[k]`` is the departure rate in state ``k + 1``.
    """
    logp = np.concatenate([[0.0], np.cumsum(math.log(lam) - np.log(np.asarray(service)))])
    p = np.exp(logp - logp.max())
    return p / p.sum()


class ComponentRates:
    """Arrival and service rates of one component under a rate policy.

    Slices are addressed by their position ``i`` inside the component and
    occupancy vectors ``n_rh`` are aligned with ``space.slices``.
    """

    def __init__(self, sc: Scenario, overlap: OverlapIndex, capacity: CapacityTable,
                 space: StateSpace, policy: RatePolicy = RANDOM):
        self.sc = sc
        self.overlap = overlap
        self.capacity = capacity
        self.space = space
        self.policy = policy
        if policy.kind == "lookup" and policy.table.space.slices != space.slices:
            raise ValueError("lookup table was built for another component")
        glob = space.slices
        self.local = {s: i for i, s in enumerate(glob)}
        self.lam = slice_arrival_rates(sc)[list(glob)]
        if np.any(self.lam <= 0):
            bad = [sc.slices[glob[i]].id for i in np.flatnonzero(self.lam <= 0)]
            raise ValueError(f"slices {bad} receive no traffic")
        self.omega = np.array([sc.sps[sc.slices[s].sp].mean_flow_bits for s in glob])
        self.nchan = np.array([sc.slices[s].num_channels for s in glob])
        self.qmax = space.qmax
        # interfering channels of every channel, grouped per interfering slice
        self._groups = {}
        for s in glob:
            for q in range(sc.slices[s].num_channels):
                ch = overlap.channel(s, q)
                groups: dict[int, int] = {}
                for j, other in enumerate(overlap.overlaps[ch]):
                    sp = self.local[overlap.channel_of[other][0]]
                    groups[sp] = groups.get(sp, 0) | (1 << j)
                self._groups[ch] = groups
        self._log_m = None
        self._log_beta = None

    # -- scalar rate layer ----------------------------------------------------

    def arrival_rate(self, i: int, k: int) -> float:
        return float(self.lam[i]) if 0 <= k < self.qmax[i] else 0.0

    def _lookup_row(self, n_rh) -> int:
        return self.policy.table.row(self.space.index(n_rh))

    def _lt_code(self, ch: int, row: int) -> int:
        tab = self.policy.table
        code = 0
        for j, other in enumerate(self.overlap.overlaps[ch]):
            if (row >> tab.bit_of[other]) & 1:
                code |= 1 << j
        return code

    def interference_vector_prob(self, i: int, q: int, code: int, n_rh) -> float:
        """Pr(Delta_{s,q} = code) in state n_rh."""
        s = self.space.slices[i]
        ch = self.overlap.channel(s, q)
        if self.policy.kind == "lookup":
            return 1.0 if code == self._lt_code(ch, self._lookup_row(n_rh)) else 0.0
        p = 1.0
        for sp, mask in self._groups[ch].items():
            dim = mask.bit_count()
            norm = (code & mask).bit_count()
            p *= subvector_prob(dim, norm, int(n_rh[sp]), int(self.nchan[sp]), int(self.qmax[sp]))
        return p

    def channel_capacity(self, i: int, q: int, n_rh) -> float:
        """C_{s,q,u}(n_RH): harmonic mixture over interference vectors."""
        s = self.space.slices[i]
        ch = self.overlap.channel(s, q)
        caps = self.capacity.table(ch)
        if self.policy.kind == "lookup":
            return float(caps[self._lt_code(ch, self._lookup_row(n_rh))])
        inv = 0.0
        for code in range(len(caps)):
            p = self.interference_vector_prob(i, q, code, n_rh)
            if p:
                inv += p / caps[code]
        return 1.0 / inv

    def channel_probs(self, i: int, n_rh) -> np.ndarray:
        """Pr(q): probability that a tagged flow of slice i sits on channel q."""
        Q = int(self.nchan[i])
        if self.policy.kind == "random":
            return np.full(Q, 1.0 / Q)
        k = min(int(n_rh[i]), Q)
        row = self._lookup_row(n_rh)
        tab = self.policy.table
        s = self.space.slices[i]
        out = np.zeros(Q)
        if k == 0:
            return out
        for q in range(Q):
            if (row >> tab.bit_of[self.overlap.channel(s, q)]) & 1:
                out[q] = 1.0 / k
        return out

    def equivalent_capacity(self, i: int, n_rh) -> float:
        """C_{s,u}(n_RH) of the equivalent homogeneous slice."""
        pr = self.channel_probs(i, n_rh)
        acc = 0.0
        for q in range(int(self.nchan[i])):
            if pr[q]:
                acc += pr[q] * self.channel_capacity(i, q, n_rh)
        return acc

    def service_rate(self, i: int, n_rh) -> float:
        """M_{s,u}(n_RH); the neutral value 1 for an empty slice."""
        n = int(n_rh[i])
        if not 0 < n <= self.qmax[i]:
            return 1.0
        k = min(n, int(self.nchan[i]))
        return self.equivalent_capacity(i, n_rh) / self.omega[i] * k

    # -- vectorized tables ----------------------------------------------------

    def signature(self, i: int) -> tuple[int, ...]:
        """Slices whose occupancy can change the service rate of slice i."""
        s = self.space.slices[i]
        return tuple(sorted({i} | {self.local[t] for t in self.overlap.neighbors[s]}))

    def _random_log_m(self, i: int) -> np.ndarray:
        sig = self.signature(i)
        dims = [int(self.qmax[t]) + 1 for t in sig]
        sub = np.empty(dims)
        n = np.zeros(self.space.dim, dtype=np.int64)
        for combo in itertools.product(*(range(d) for d in dims)):
            n[list(sig)] = combo
            sub[combo] = self.service_rate(i, n)
        sub_strides = np.ones(len(sig), dtype=np.int64)
        for k in range(len(sig) - 2, -1, -1):
            sub_strides[k] = sub_strides[k + 1] * dims[k + 1]
        digits = self.space.digits
        idx = np.zeros(self.space.size, dtype=np.int64)
        for k, t in enumerate(sig):
            idx += digits[t].astype(np.int64) * sub_strides[k]
        return np.log(sub.ravel())[idx]

    def _lookup_log_m(self, i: int) -> np.ndarray:
        tab = self.policy.table
        rows = tab.rows()
        s = self.space.slices[i]
        n = self.space.digits[i].astype(np.int64)
        k = np.minimum(n, int(self.nchan[i]))
        kf = np.where(k > 0, k, 1).astype(float)
        acc = np.zeros(self.space.size)
        for q in range(int(self.nchan[i])):
            ch = self.overlap.channel(s, q)
            permitted = ((rows >> np.uint64(tab.bit_of[ch])) & np.uint64(1)).astype(bool)
            code = np.zeros(self.space.size, dtype=np.int64)
            for j, other in enumerate(self.overlap.overlaps[ch]):
                bit = (rows >> np.uint64(tab.bit_of[other])) & np.uint64(1)
                code |= bit.astype(np.int64) << j
            cap = self.capacity.table(ch)[code]
            pr = np.where(permitted, 1.0 / kf, 0.0)
            acc = np.where(permitted, acc + pr * cap, acc)
        m = acc / self.omega[i] * k
        return np.log(np.where(n > 0, m, 1.0))

    @property
    def log_m(self) -> np.ndarray:
        """(dim, size) array of log M_s(n) over all states."""
        if self._log_m is None:
            out = np.empty((self.space.dim, self.space.size))
            for i in range(self.space.dim):
                if self.policy.kind == "random":
                    out[i] = self._random_log_m(i)
                else:
                    out[i] = self._lookup_log_m(i)
            out.setflags(write=False)
            self._log_m = out
        return self._log_m

    @property
    def log_beta(self) -> np.ndarray:
        """(dim, size) array of log beta(n, s); NaN where arrivals are blocked.

        With the neutral convention M = 1 for empty slices,
        log beta(n, s) = L(n) - L(n + 1_s) + log M_s(n + 1_s), L = sum_s log M_s.
        """
        if self._log_beta is None:
            lm = self.log_m
            total = lm.sum(axis=0)
            out = np.full((self.space.dim, self.space.size), np.nan)
            digits = self.space.digits
            for i in range(self.space.dim):
                ok = np.flatnonzero(digits[i] < self.qmax[i])
                up = ok + self.space.strides[i]
                out[i, ok] = total[ok] - total[up] + lm[i, up]
            out.setflags(write=False)
            self._log_beta = out
        return self._log_beta

    def drop_caches(self) -> None:
        self._log_m = None
        self._log_beta = None


def arrival_rate_Lambda(lam: float, n: int, qmax: int) -> float:
    return lam if 0 <= n < qmax else 0.0
