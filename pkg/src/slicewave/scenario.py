"""Slicing scenarios: cells, slices, SPs, MVNOs and the traffic split between them.

A scenario is stored as JSON (see ``docs/scenario_schema.md``). Identifiers in
the file are the 1-based ids used in figures and tables; inside the package
slices, cells, SPs and MVNOs are addressed by their 0-based position.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .radio import RadioParams

PROB_TOL = 1e-12


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario file."""


@dataclass(frozen=True)
class CellSpec:
    id: int
    center: tuple[float, float]
    hex_radius: float
    bs_power_dbm: float


@dataclass(frozen=True)
class SliceSpec:
    id: int
    cell: int  # cell position
    mvno: int  # MVNO position
    sp: int  # SP position (single class per slice)
    num_channels: int
    queue_cap: int
    channel_bw_hz: float
    channel_bands: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class SpSpec:
    id: int
    flow_rate: float
    mean_flow_bits: float
    density: tuple[float, ...]  # probability of being in each cell


@dataclass(frozen=True)
class MvnoSpec:
    id: int
    name: str = ""


@dataclass(frozen=True)
class Scenario:
    cells: tuple[CellSpec, ...]
    slices: tuple[SliceSpec, ...]
    sps: tuple[SpSpec, ...]
    mvnos: tuple[MvnoSpec, ...]
    radio: RadioParams
    sp_to_mvno: np.ndarray  # (U, V)
    mvno_assign: np.ndarray  # (U, V, S)
    name: str = ""
    description: str = ""

    def __post_init__(self):
        for arr in (self.sp_to_mvno, self.mvno_assign):
            arr.setflags(write=False)

    # hashing on arrays is not meaningful; identity is the scenario hash
    __hash__ = object.__hash__

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return to_dict(self) == to_dict(other)

    @property
    def num_slices(self) -> int:
        return len(self.slices)

    def slice_index(self, slice_id: int) -> int:
        for i, sl in enumerate(self.slices):
            if sl.id == slice_id:
                return i
        raise KeyError(slice_id)

    def slices_in(self, cell: int, mvno: int | None = None) -> list[int]:
        return [i for i, sl in enumerate(self.slices)
                if sl.cell == cell and (mvno is None or sl.mvno == mvno)]

    def digest(self) -> str:
        """Short content hash used to tag every output row."""
        blob = json.dumps(to_dict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    # -- variants used by sweeps and checks ---------------------------------

    def with_bs_power(self, dbm: float) -> Scenario:
        cells = tuple(dataclasses.replace(c, bs_power_dbm=float(dbm)) for c in self.cells)
        return dataclasses.replace(self, cells=cells)

    def with_flow_rate(self, sp: int, rate: float) -> Scenario:
        sps = list(self.sps)
        sps[sp] = dataclasses.replace(sps[sp], flow_rate=float(rate))
        return dataclasses.replace(self, sps=tuple(sps))

    def with_radio(self, **changes) -> Scenario:
        return dataclasses.replace(self, radio=dataclasses.replace(self.radio, **changes))

    def zero_interference(self) -> Scenario:
        """Same state space, all inter-cell interference powers forced to zero."""
        return self.with_radio(zero_interference=True)

    def without_overlap(self, spacing_hz: float = 1e9) -> Scenario:
        """Shift each cell's spectrum into its own band so no two slices overlap."""
        slices = []
        for sl in self.slices:
            off = sl.cell * spacing_hz
            bands = tuple((a + off, b + off) for a, b in sl.channel_bands)
            slices.append(dataclasses.replace(sl, channel_bands=bands))
        return dataclasses.replace(self, slices=tuple(slices))


# -- (de)serialization ----------------------------------------------------


def to_dict(sc: Scenario) -> dict:
    cell_ids = [c.id for c in sc.cells]
    sp_ids = [u.id for u in sc.sps]
    mvno_ids = [v.id for v in sc.mvnos]
    return {
        "name": sc.name,
        "description": sc.description,
        "radio": dataclasses.asdict(sc.radio),
        "cells": [{"id": c.id, "center": list(c.center), "hex_radius": c.hex_radius,
                   "bs_power_dbm": c.bs_power_dbm} for c in sc.cells],
        "mvnos": [{"id": v.id, "name": v.name} for v in sc.mvnos],
        "sps": [{"id": u.id, "flow_rate": u.flow_rate, "mean_flow_bits": u.mean_flow_bits,
                 "density": list(u.density)} for u in sc.sps],
        "slices": [{"id": s.id, "cell": cell_ids[s.cell], "mvno": mvno_ids[s.mvno],
                    "sp": sp_ids[s.sp], "num_channels": s.num_channels,
                    "queue_cap": s.queue_cap, "channel_bw_hz": s.channel_bw_hz,
                    "channel_bands": [list(b) for b in s.channel_bands]}
                   for s in sc.slices],
        "sp_to_mvno": sc.sp_to_mvno.tolist(),
        "mvno_assign": sc.mvno_assign.tolist(),
    }


def _lookup(ids: list[int], value, what: str) -> int:
    try:
        return ids.index(value)
    except ValueError:
        raise ScenarioError(f"{what}: unknown id {value!r}") from None


def from_dict(data: dict) -> Scenario:
    try:
        radio = RadioParams(**data.get("radio", {}))
        cells = tuple(CellSpec(int(c["id"]), (float(c["center"][0]), float(c["center"][1])),
                               float(c["hex_radius"]), float(c["bs_power_dbm"]))
                      for c in data["cells"])
        mvnos = tuple(MvnoSpec(int(v["id"]), str(v.get("name", ""))) for v in data["mvnos"])
        sps = tuple(SpSpec(int(u["id"]), float(u["flow_rate"]), float(u["mean_flow_bits"]),
                           tuple(float(x) for x in u["density"]))
                    for u in data["sps"])
        cell_ids = [c.id for c in cells]
        mvno_ids = [v.id for v in mvnos]
        sp_ids = [u.id for u in sps]
        slices = []
        for k, s in enumerate(data["slices"]):
            where = f"slices[{k}]"
            slices.append(SliceSpec(
                id=int(s["id"]),
                cell=_lookup(cell_ids, s["cell"], f"{where}.cell"),
                mvno=_lookup(mvno_ids, s["mvno"], f"{where}.mvno"),
                sp=_lookup(sp_ids, s["sp"], f"{where}.sp"),
                num_channels=int(s["num_channels"]),
                queue_cap=int(s["queue_cap"]),
                channel_bw_hz=float(s["channel_bw_hz"]),
                channel_bands=tuple((float(a), float(b)) for a, b in s["channel_bands"]),
            ))
        sp_to_mvno = np.array(data["sp_to_mvno"], dtype=float)
        mvno_assign = np.array(data["mvno_assign"], dtype=float)
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ScenarioError(f"malformed scenario: {exc!r}") from exc
    sc = Scenario(cells=cells, slices=tuple(slices), sps=sps, mvnos=mvnos, radio=radio,
                  sp_to_mvno=sp_to_mvno, mvno_assign=mvno_assign,
                  name=str(data.get("name", "")), description=str(data.get("description", "")))
    validate(sc)
    return sc


def load_scenario(path) -> Scenario:
    """Load and validate a scenario file.

    ``path`` may also be the bare name of a bundled scenario
    (``"single_mvno"`` or ``"multi_mvno"``).
    """
    p = Path(path)
    if not p.exists() and p.suffix in ("", ".json") and len(p.parts) == 1:
        bundled = resources.files("slicewave") / "scenarios" / (p.stem + ".json")
        if bundled.is_file():
            text = bundled.read_text()
            return _parse(text, str(path))
    text = p.read_text()  # OSError propagates as an I/O failure
    return _parse(text, str(path))


def _parse(text: str, origin: str) -> Scenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{origin}: not valid JSON ({exc})") from exc
    return from_dict(data)


def save_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(json.dumps(to_dict(sc), indent=2) + "\n")


def bundled_scenarios() -> list[str]:
    root = resources.files("slicewave") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


# -- validation -------------------------------------------------------------


def _overlap_hz(a: tuple[float, float], b: tuple[float, float]) -> float:
    return max(0.0, min(a[1], b[1]) - max(a[0], b[0]))


def validate(sc: Scenario) -> None:
    U, V, S, B = len(sc.sps), len(sc.mvnos), len(sc.slices), len(sc.cells)
    if not (U and V and S and B):
        raise ScenarioError("scenario needs at least one cell, slice, SP and MVNO")
    for name, ids in (("cells", [c.id for c in sc.cells]), ("slices", [s.id for s in sc.slices]),
                      ("sps", [u.id for u in sc.sps]), ("mvnos", [v.id for v in sc.mvnos])):
        if len(set(ids)) != len(ids):
            raise ScenarioError(f"{name}: duplicate ids")
    for b, c in enumerate(sc.cells):
        if not c.hex_radius > 0:
            raise ScenarioError(f"cells[{b}].hex_radius must be > 0")
        if not (math.isfinite(c.bs_power_dbm) and all(map(math.isfinite, c.center))):
            raise ScenarioError(f"cells[{b}]: non-finite power or center")
    r = sc.radio
    if not (0 < r.eta1 <= 1 and 0 < r.eta2 <= 1):
        raise ScenarioError("radio.eta1/eta2 must lie in (0, 1]")
    if r.integration_points < 64:
        raise ScenarioError("radio.integration_points must be >= 64")

    for k, u in enumerate(sc.sps):
        if not (u.flow_rate > 0 and u.mean_flow_bits > 0):
            raise ScenarioError(f"sps[{k}]: flow_rate and mean_flow_bits must be > 0")
        if len(u.density) != B or min(u.density) < 0:
            raise ScenarioError(f"sps[{k}].density must hold {B} non-negative entries")
        if abs(sum(u.density) - 1.0) > PROB_TOL:
            raise ScenarioError(f"sps[{k}].density must sum to 1")

    for k, s in enumerate(sc.slices):
        where = f"slices[{k}]"
        if s.num_channels < 1 or s.queue_cap < s.num_channels:
            raise ScenarioError(f"{where}: need queue_cap >= num_channels >= 1")
        if len(s.channel_bands) != s.num_channels:
            raise ScenarioError(f"{where}.channel_bands: expected {s.num_channels} bands")
        for q, (lo, hi) in enumerate(s.channel_bands):
            if not math.isclose(hi - lo, s.channel_bw_hz, rel_tol=1e-9):
                raise ScenarioError(f"{where}.channel_bands[{q}]: width != channel_bw_hz")
        bands = sorted(s.channel_bands)
        for a, b in zip(bands, bands[1:]):
            if _overlap_hz(a, b) > 0:
                raise ScenarioError(f"{where}.channel_bands: bands overlap inside the slice")
    for i in range(S):
        for j in range(i + 1, S):
            si, sj = sc.slices[i], sc.slices[j]
            if si.cell != sj.cell:
                continue
            if any(_overlap_hz(a, b) > 0 for a in si.channel_bands for b in sj.channel_bands):
                raise ScenarioError(
                    f"slices[{i}] and slices[{j}]: slices of one cell must not overlap")

    P = sc.sp_to_mvno
    if P.shape != (U, V):
        raise ScenarioError(f"sp_to_mvno: expected shape {(U, V)}, got {P.shape}")
    if (P < 0).any():
        raise ScenarioError("sp_to_mvno: negative probability")
    for u in range(U):
        if abs(P[u].sum() - 1.0) > PROB_TOL:
            raise ScenarioError(f"sp_to_mvno row {sc.sps[u].id} sums to {P[u].sum():.12g}, not 1")

    A = sc.mvno_assign
    if A.shape != (U, V, S):
        raise ScenarioError(f"mvno_assign: expected shape {(U, V, S)}, got {A.shape}")
    if (A < 0).any():
        raise ScenarioError("mvno_assign: negative probability")
    for u in range(U):
        for s, sl in enumerate(sc.slices):
            for v in range(V):
                if A[u, v, s] > 0 and (v != sl.mvno or u != sl.sp):
                    raise ScenarioError(
                        f"mvno_assign[{sc.sps[u].id}][{sc.mvnos[v].id}]: slice {sl.id} "
                        f"belongs to MVNO {sc.mvnos[sl.mvno].id} / SP {sc.sps[sl.sp].id}")
        for v in range(V):
            for b in range(B):
                members = sc.slices_in(b, v)
                total = A[u, v, members].sum() if members else 0.0
                if total != 0 and abs(total - 1.0) > PROB_TOL:
                    raise ScenarioError(
                        f"mvno_assign[{sc.sps[u].id}][{sc.mvnos[v].id}] in cell "
                        f"{sc.cells[b].id} sums to {total:.12g}, not 0 or 1")


# -- overlap structure ------------------------------------------------------


@dataclass(frozen=True)
class OverlapIndex:
    """Frequency-overlap sets for every slice channel.

    Channels are numbered globally in (slice, channel) order; ``channel_of``
    maps a global channel number back to its ``(slice, channel)`` pair.
    ``overlaps[ch]`` lists the *other* channels that overlap ``ch`` in
    ascending global order, which is the bit order of interference vectors.
    """

    channel_of: tuple[tuple[int, int], ...]
    first_channel: tuple[int, ...]
    overlaps: tuple[tuple[int, ...], ...]
    overlap_hz: tuple[tuple[float, ...], ...]
    neighbors: tuple[tuple[int, ...], ...]  # slices overlapping any channel of s, s excluded
    components: tuple[tuple[int, ...], ...]

    def channel(self, s: int, q: int) -> int:
        return self.first_channel[s] + q

    def overlap_set(self, s: int, q: int) -> list[tuple[int, int]]:
        """N_{s,q} as (slice, channel) pairs, including (s, q) itself."""
        ch = self.channel(s, q)
        return sorted([(s, q)] + [self.channel_of[c] for c in self.overlaps[ch]])

    def channel_neighbors(self, s: int, q: int) -> tuple[int, ...]:
        ch = self.channel(s, q)
        return tuple(sorted({self.channel_of[c][0] for c in self.overlaps[ch]}))

    def component_of(self, s: int) -> int:
        for k, comp in enumerate(self.components):
            if s in comp:
                return k
        raise KeyError(s)


def build_overlap_index(sc: Scenario) -> OverlapIndex:
    channel_of = []
    first = []
    bands = []
    for s, sl in enumerate(sc.slices):
        first.append(len(channel_of))
        for q, band in enumerate(sl.channel_bands):
            channel_of.append((s, q))
            bands.append(band)
    C = len(channel_of)
    overlaps: list[list[int]] = [[] for _ in range(C)]
    hz: list[list[float]] = [[] for _ in range(C)]
    for i in range(C):
        for j in range(C):
            if i == j or channel_of[i][0] == channel_of[j][0]:
                continue
            w = _overlap_hz(bands[i], bands[j])
            if w > 0:
                overlaps[i].append(j)
                hz[i].append(w)
    S = sc.num_slices
    neighbors = []
    rows, cols = [], []
    for s in range(S):
        nb = set()
        for q in range(sc.slices[s].num_channels):
            nb.update(channel_of[c][0] for c in overlaps[first[s] + q])
        neighbors.append(tuple(sorted(nb)))
        rows.extend([s] * len(nb))
        cols.extend(nb)
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(S, S))
    _, labels = connected_components(graph, directed=False)
    comps: dict[int, list[int]] = {}
    for s, lab in enumerate(labels):
        comps.setdefault(int(lab), []).append(s)
    components = tuple(sorted(tuple(v) for v in comps.values()))
    return OverlapIndex(tuple(channel_of), tuple(first), tuple(map(tuple, overlaps)),
                        tuple(map(tuple, hz)), tuple(neighbors), components)


# -- traffic ------------------------------------------------------------------


def arrival_rates(sc: Scenario) -> np.ndarray:
    """Flow arrival rate lambda_{s,u} for every (slice, SP), shape (S, U)."""
    S, U = sc.num_slices, len(sc.sps)
    lam = np.zeros((S, U))
    for s, sl in enumerate(sc.slices):
        for u, sp in enumerate(sc.sps):
            lam[s, u] = (sp.flow_rate * sc.sp_to_mvno[u, sl.mvno] * sp.density[sl.cell]
                         * sc.mvno_assign[u, sl.mvno, s])
    return lam


def slice_arrival_rates(sc: Scenario) -> np.ndarray:
    """Arrival rate of each slice from the single SP it serves."""
    lam = arrival_rates(sc)
    return np.array([lam[s, sl.sp] for s, sl in enumerate(sc.slices)])
