"""Channel allocation tables: greedy interference-aware, exhaustive, and their cost.

A lookup table holds, for every state of a component, the set of channels
each slice may use. Rows are stored as 64-bit masks; bit ``b`` refers to the
component channel ``channels[b]`` (global channel numbers in ascending order).
"""

from __future__ import annotations

import itertools
import math
import random
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .markov import StateSpace
from .radio import CapacityTable
from .scenario import Scenario

MAGIC = b"SWLT"
FORMAT_VERSION = 1
EXHAUSTIVE_BUDGET = 50_000_000
_M64 = (1 << 64) - 1


class BudgetExceeded(RuntimeError):
    pass


@dataclass
class LookupTable:
    space: StateSpace
    channels: tuple[int, ...]
    data: np.ndarray  # uint64, one row per state
    seed: int | None = None
    kind: str = "algorithm2"
    bit_of: dict[int, int] = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.channels) > 64:
            raise ValueError("a component may have at most 64 channels")
        if len(self.data) != self.space.size:
            raise ValueError("lookup table does not cover every state")
        self.bit_of = {ch: b for b, ch in enumerate(self.channels)}

    def row(self, index: int) -> int:
        return int(self.data[index])

    def rows(self) -> np.ndarray:
        return self.data

    def permitted(self, index: int, ch: int) -> bool:
        return bool((self.row(index) >> self.bit_of[ch]) & 1)

    def __eq__(self, other):
        return (isinstance(other, LookupTable) and self.channels == other.channels
                and self.space.slices == other.space.slices
                and np.array_equal(self.data, other.data))


def component_channels(space: StateSpace, capacity: CapacityTable) -> tuple[int, ...]:
    ov = capacity.overlap
    return tuple(sorted(ov.channel(s, q) for s in space.slices
                        for q in range(len(_channels_of(ov, s)))))


def _channels_of(ov, s: int) -> list[int]:
    start = ov.first_channel[s]
    end = ov.first_channel[s + 1] if s + 1 < len(ov.first_channel) else len(ov.channel_of)
    return list(range(start, end))


def _code(row: int, ch: int, ov, bit_of: dict[int, int]) -> int:
    code = 0
    for j, other in enumerate(ov.overlaps[ch]):
        if (row >> bit_of[other]) & 1:
            code |= 1 << j
    return code


# -- priority ----------------------------------------------------------------------


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _M64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _M64
    return x ^ (x >> 31)


def _splitmix64_np(x: np.ndarray) -> np.ndarray:
    x = x + np.uint64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def tie_key(seed: int, index: int, i: int) -> int:
    """Pseudo-random tie-break key of slice position i in state ``index``."""
    return splitmix64((splitmix64((seed ^ index) & _M64) + i) & _M64)


def priority_order(space: StateSpace, nchan, index: int, seed: int) -> list[int]:
    """Processing order of the slice positions in one state.

    Higher n_RH(s) / Q_s first; equal ratios are ordered by a seeded hash of
    (seed XOR state index, slice), i.e. a reproducible random shuffle.
    """
    n = space.state(index)
    return sorted(range(space.dim),
                  key=lambda i: (-Fraction(n[i], int(nchan[i])), tie_key(seed, index, i)))


# -- Algorithm 2 ----------------------------------------------------------------------


def _slice_channels(space: StateSpace, sc: Scenario, capacity: CapacityTable):
    ov = capacity.overlap
    return [[ov.channel(s, q) for q in range(sc.slices[s].num_channels)] for s in space.slices]


def lookup_row(space: StateSpace, sc: Scenario, capacity: CapacityTable, index: int,
               seed: int = 0) -> int:
    """One table row computed state by state (reference implementation)."""
    ov = capacity.overlap
    chans = _slice_channels(space, sc, capacity)
    nchan = [len(c) for c in chans]
    bit_of = {ch: b for b, ch in enumerate(component_channels(space, capacity))}
    n = space.state(index)
    row = 0
    for i in priority_order(space, nchan, index, seed):
        k = min(n[i], nchan[i])
        if k == 0:
            continue
        caps = [capacity.capacity(ch, _code(row, ch, ov, bit_of)) for ch in chans[i]]
        ranked = sorted(range(nchan[i]), key=lambda q: (-caps[q], q))
        for q in ranked[:k]:
            row |= 1 << bit_of[chans[i][q]]
    return row


def build_lookup_table_reference(space: StateSpace, sc: Scenario, capacity: CapacityTable,
                                 seed: int = 0) -> LookupTable:
    data = np.array([lookup_row(space, sc, capacity, i, seed) for i in range(space.size)],
                    dtype=np.uint64)
    return LookupTable(space, component_channels(space, capacity), data, seed, "algorithm2")


def build_lookup_table(space: StateSpace, sc: Scenario, capacity: CapacityTable,
                       seed: int = 0, chunk: int = 262_144) -> LookupTable:
    """Greedy interference-aware table, vectorized over chunks of states."""
    ov = capacity.overlap
    chans = _slice_channels(space, sc, capacity)
    channels = component_channels(space, capacity)
    bit_of = {ch: b for b, ch in enumerate(channels)}
    dim = space.dim
    nchan = np.array([len(c) for c in chans], dtype=np.int64)
    scale = np.array([math.lcm(*nchan.tolist()) // q for q in nchan], dtype=np.int64)
    digits = space.digits
    out = np.zeros(space.size, dtype=np.uint64)
    over_bits = {ch: [(j, np.uint64(bit_of[o])) for j, o in enumerate(ov.overlaps[ch])]
                 for c in chans for ch in c}
    caps = {ch: capacity.table(ch) for c in chans for ch in c}
    one = np.uint64(1)
    for start in range(0, space.size, chunk):
        stop = min(start + chunk, space.size)
        idx = np.arange(start, stop, dtype=np.uint64)
        n = digits[:, start:stop].astype(np.int64)  # (dim, B)
        ratio = n * scale[:, None]
        base = _splitmix64_np(np.uint64(seed & _M64) ^ idx)
        ties = np.stack([_splitmix64_np(base + np.uint64(i)) for i in range(dim)])
        order = np.lexsort((ties.T, -ratio.T), axis=-1)  # (B, dim)
        row = np.zeros(stop - start, dtype=np.uint64)
        for p in range(dim):
            for i in range(dim):
                sel = np.flatnonzero(order[:, p] == i)
                if not len(sel):
                    continue
                k = np.minimum(n[i, sel], nchan[i])
                live = k > 0
                sel, k = sel[live], k[live]
                if not len(sel):
                    continue
                r = row[sel]
                c = np.empty((len(sel), nchan[i]))
                for q, ch in enumerate(chans[i]):
                    code = np.zeros(len(sel), dtype=np.int64)
                    for j, b in over_bits[ch]:
                        code |= ((r >> b) & one).astype(np.int64) << j
                    c[:, q] = caps[ch][code]
                ranked = np.argsort(-c, axis=1, kind="stable")
                for rank in range(nchan[i]):
                    q_sel = ranked[:, rank]
                    bits = np.array([bit_of[ch] for ch in chans[i]], dtype=np.uint64)[q_sel]
                    r = np.where(rank < k, r | (one << bits), r)
                row[sel] = r
        out[start:stop] = row
    return LookupTable(space, channels, out, seed, "algorithm2")


# -- exhaustive benchmark ------------------------------------------------------------


def row_objective(row: int, space: StateSpace, sc: Scenario, capacity: CapacityTable) -> float:
    """Sum of C_{s,q,u}(Delta) over the active channels of a row."""
    ov = capacity.overlap
    bit_of = {ch: b for b, ch in enumerate(component_channels(space, capacity))}
    total = 0.0
    for ch, b in bit_of.items():
        if (row >> b) & 1:
            total += capacity.capacity(ch, _code(row, ch, ov, bit_of))
    return total


def _joint_masks(n, chans, bit_of) -> np.ndarray:
    masks = np.zeros(1, dtype=np.uint64)
    for i, c in enumerate(chans):
        k = min(n[i], len(c))
        opts = np.array([sum(1 << bit_of[ch] for ch in combo)
                         for combo in itertools.combinations(c, k)], dtype=np.uint64)
        masks = (masks[:, None] | opts[None, :]).ravel()
    return masks


def exhaustive_choices(space: StateSpace, sc: Scenario) -> int:
    """Number of joint channel-subset choices summed over all states."""
    total = 1
    for s in space.slices:
        Q = sc.slices[s].num_channels
        total *= sum(math.comb(Q, min(n, Q)) for n in range(sc.slices[s].queue_cap + 1))
    return total


def build_exhaustive_table(space: StateSpace, sc: Scenario, capacity: CapacityTable,
                           budget: int = EXHAUSTIVE_BUDGET, objective=None) -> LookupTable:
    """Best joint choice per state; ties go to the first choice enumerated.

    ``objective(masks, state)`` may replace the default total-capacity score;
    it receives the candidate rows and returns one score per row.
    """
    need = exhaustive_choices(space, sc)
    if need > budget:
        raise BudgetExceeded(f"exhaustive search needs {need:,} joint choices (budget {budget:,})")
    ov = capacity.overlap
    chans = _slice_channels(space, sc, capacity)
    channels = component_channels(space, capacity)
    bit_of = {ch: b for b, ch in enumerate(channels)}
    one = np.uint64(1)
    out = np.zeros(space.size, dtype=np.uint64)
    for index, n in enumerate(space.states()):
        masks = _joint_masks(n, chans, bit_of)
        if objective is None:
            score = np.zeros(len(masks))
            for ch in channels:
                active = ((masks >> np.uint64(bit_of[ch])) & one).astype(bool)
                code = np.zeros(len(masks), dtype=np.int64)
                for j, o in enumerate(ov.overlaps[ch]):
                    code |= ((masks >> np.uint64(bit_of[o])) & one).astype(np.int64) << j
                score += np.where(active, capacity.table(ch)[code], 0.0)
        else:
            score = np.asarray(objective(masks, n))
        out[index] = masks[int(np.argmax(score))]
    return LookupTable(space, channels, out, None, "exhaustive")


# -- complexity ----------------------------------------------------------------------


@dataclass(frozen=True)
class Complexity:
    proposed: int
    exhaustive: int


def _slice_sums(Q: int, qmax: int) -> tuple[int, int, int]:
    """(states, sum of binomials, sum of k * binomial) over n = 0..Q^max."""
    a = sum(math.comb(Q, min(n, Q)) for n in range(qmax + 1))
    b = sum(min(n, Q) * math.comb(Q, min(n, Q)) for n in range(qmax + 1))
    return qmax + 1, a, b


def complexity_counts(sc: Scenario, slices=None) -> Complexity:
    """Capacity evaluations needed to build the greedy and the exhaustive table.

    Both sums over the state space factorize per slice, so they are evaluated
    in closed form with exact integers.
    """
    slices = range(sc.num_slices) if slices is None else slices
    params = [(sc.slices[s].num_channels, sc.slices[s].queue_cap) for s in slices]
    sums = [_slice_sums(Q, qm) for Q, qm in params]
    size = math.prod(r for r, _, _ in sums)
    proposed = sum(Q * (size // (qm + 1)) * qm for Q, qm in params)
    exhaustive = 0
    for k, (_, _, b) in enumerate(sums):
        exhaustive += b * math.prod(a for j, (_, a, _) in enumerate(sums) if j != k)
    return Complexity(proposed, exhaustive)


def _state_cost(n, params) -> tuple[int, int]:
    ks = [min(x, Q) for x, (Q, _) in zip(n, params)]
    proposed = sum(Q for x, (Q, _) in zip(n, params) if x > 0)
    exhaustive = sum(ks) * math.prod(math.comb(Q, k) for k, (Q, _) in zip(ks, params))
    return proposed, exhaustive


def complexity_brute_force(sc: Scenario, slices=None, max_states: int = 1_000_000) -> Complexity:
    slices = list(range(sc.num_slices) if slices is None else slices)
    params = [(sc.slices[s].num_channels, sc.slices[s].queue_cap) for s in slices]
    if math.prod(qm + 1 for _, qm in params) > max_states:
        raise BudgetExceeded("state space too large for brute-force counting")
    p = e = 0
    for n in itertools.product(*(range(qm + 1) for _, qm in params)):
        a, b = _state_cost(n, params)
        p += a
        e += b
    return Complexity(p, e)


def complexity_monte_carlo(sc: Scenario, samples: int = 20_000, seed: int = 0,
                           slices=None) -> dict[str, tuple[float, float]]:
    """Estimates (value, standard error) from uniformly sampled states."""
    slices = list(range(sc.num_slices) if slices is None else slices)
    params = [(sc.slices[s].num_channels, sc.slices[s].queue_cap) for s in slices]
    size = math.prod(qm + 1 for _, qm in params)
    rng = random.Random(seed)
    vals = np.array([_state_cost([rng.randint(0, qm) for _, qm in params], params)
                     for _ in range(samples)], dtype=float)
    mean = vals.mean(axis=0) * size
    se = vals.std(axis=0, ddof=1) / math.sqrt(samples) * size
    return {"proposed": (float(mean[0]), float(se[0])),
            "exhaustive": (float(mean[1]), float(se[1]))}


# -- binary dump -----------------------------------------------------------------------

_HEADER = struct.Struct("<4sHHHHqQ")  # magic, version, dim, nbits, kind, seed, states


def dump_table(table: LookupTable, path) -> None:
    """Write a table as: header, slice positions and Q^max (u16 pairs),
    global channel numbers (u16), then one little-endian u64 row per state."""
    kind = 0 if table.kind == "algorithm2" else 1
    seed = -1 if table.seed is None else int(table.seed)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, table.space.dim, len(table.channels),
                              kind, seed, table.space.size))
        for s, q in zip(table.space.slices, table.space.qmax):
            fh.write(struct.pack("<HH", s, int(q)))
        fh.write(struct.pack(f"<{len(table.channels)}H", *table.channels))
        fh.write(np.ascontiguousarray(table.data, dtype="<u8").tobytes())


def load_table(path) -> LookupTable:
    raw = Path(path).read_bytes()
    magic, version, dim, nbits, kind, seed, size = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a lookup-table file")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    off = _HEADER.size
    pairs = struct.unpack_from(f"<{2 * dim}H", raw, off)
    off += 4 * dim
    channels = struct.unpack_from(f"<{nbits}H", raw, off)
    off += 2 * nbits
    data = np.frombuffer(raw, dtype="<u8", count=size, offset=off).astype(np.uint64)
    space = StateSpace(pairs[0::2], pairs[1::2], max_states=max(size, 1))
    if space.size != size:
        raise ValueError(f"{path}: header does not match its state count")
    return LookupTable(space, tuple(channels), data, None if seed < 0 else seed,
                       "algorithm2" if kind == 0 else "exhaustive")
