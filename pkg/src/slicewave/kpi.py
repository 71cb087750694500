"""Slice and operator KPIs, and isolation metrics over traffic sweeps."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from .scenario import Scenario, arrival_rates


class UndefinedDelayError(ZeroDivisionError):
    pass


def slice_marginal(pi: np.ndarray, digits_i: np.ndarray, qmax: int) -> np.ndarray:
    """pi_s(n) from a joint distribution and the occupancy digits of slice s."""
    return np.bincount(digits_i, weights=pi, minlength=qmax + 1)


@dataclass(frozen=True)
class SliceKpi:
    blocking: float
    throughput: float  # bit/s
    delay: float       # s
    sojourn: float     # waiting in the buffer, s
    service: float     # s
    mean_customers: float


def slice_kpis(marginal: Sequence[float], num_channels: int, lam: float, omega: float) -> SliceKpi:
    p = np.asarray(marginal, dtype=float)
    n = np.arange(len(p))
    pb = float(p[-1])
    admitted = lam * (1.0 - pb)
    if admitted <= 0:
        raise UndefinedDelayError("slice admits no traffic, delay is undefined")
    wait = float(p @ np.maximum(n - num_channels, 0))
    serve = float(p @ np.minimum(n, num_channels))
    return SliceKpi(pb, admitted * omega, (wait + serve) / admitted, wait / admitted,
                    serve / admitted, wait + serve)


@dataclass(frozen=True)
class NetworkKpi:
    throughput: float
    delay: float
    sojourn: float
    service: float
    weight: float  # served fraction of the (u, v) traffic; < 1 flags unserved mass


def network_kpis(slices: Sequence[SliceKpi | None], sc: Scenario) -> dict[tuple[int, int], NetworkKpi]:
    """Aggregate per (SP, MVNO); positions are 0-based."""
    out = {}
    for u, sp in enumerate(sc.sps):
        for v in range(len(sc.mvnos)):
            if sc.sp_to_mvno[u, v] <= 0:
                continue
            t = d = sj = sv = w = 0.0
            for s, sl in enumerate(sc.slices):
                if sl.mvno != v or sl.sp != u:
                    continue
                weight = sp.density[sl.cell] * sc.mvno_assign[u, v, s]
                k = slices[s]
                if weight <= 0 or k is None:
                    continue
                t += k.throughput
                d += weight * k.delay
                sj += weight * k.sojourn
                sv += weight * k.service
                w += weight
            if w > 0:
                out[(u, v)] = NetworkKpi(t, d, sj, sv, w)
    return out


@dataclass
class KpiReport:
    slices: list[SliceKpi | None]
    network: dict[tuple[int, int], NetworkKpi]
    meta: dict = field(default_factory=dict)


def report_from_marginals(sc: Scenario, marginals: Sequence[np.ndarray], **meta) -> KpiReport:
    lam = arrival_rates(sc)
    ks = []
    for s, sl in enumerate(sc.slices):
        rate = lam[s, sl.sp]
        if rate <= 0:
            ks.append(None)
            continue
        ks.append(slice_kpis(marginals[s], sl.num_channels, rate, sc.sps[sl.sp].mean_flow_bits))
    meta.setdefault("scenario", sc.digest())
    return KpiReport(ks, network_kpis(ks, sc), meta)


def report(solution, **meta) -> KpiReport:
    """KPIs of a solver.NetworkSolution."""
    meta.setdefault("policy", solution.policy)
    meta.setdefault("method", solution.method)
    return report_from_marginals(solution.sc, solution.marginals, **meta)


SLICE_METRICS = ("blocking", "throughput", "delay", "sojourn", "service")
NETWORK_METRICS = ("throughput", "delay", "sojourn", "service")


def report_rows(rep: KpiReport, sc: Scenario) -> list[dict]:
    """Long-form rows: one metric per row, keyed by level and 1-based ids."""
    rows = []
    for s, k in enumerate(rep.slices):
        if k is None:
            continue
        sl = sc.slices[s]
        for m in SLICE_METRICS:
            rows.append({"level": "slice", "slice": sl.id, "sp": sc.sps[sl.sp].id,
                         "mvno": sc.mvnos[sl.mvno].id, "metric": m, "value": getattr(k, m)})
    for (u, v), k in sorted(rep.network.items()):
        for m in NETWORK_METRICS:
            rows.append({"level": "network", "slice": "", "sp": sc.sps[u].id,
                         "mvno": sc.mvnos[v].id, "metric": m, "value": getattr(k, m)})
    return rows


# -- isolation ----------------------------------------------------------------------


@dataclass(frozen=True)
class Deviation:
    add: float
    vdd: float
    atd: float
    vtd: float


def _mean_var(x: np.ndarray, r: np.ndarray) -> tuple[float, float]:
    """Mean and variance of the piecewise-linear interpolant of r over [x0, xN].

    The mean is the trapezoid rule; the variance integrates the squared
    deviation of the interpolant exactly, segment by segment.
    """
    h = np.diff(x)
    span = x[-1] - x[0]
    mean = float(np.sum(h * (r[1:] + r[:-1]) / 2) / span)
    a = r[:-1] - mean
    b = r[1:] - mean
    var = float(np.sum(h * (a * a + a * b + b * b) / 3) / span)
    return mean, max(var, 0.0)


def isolation_metrics(grid: Sequence[float], delay, delay_zi, throughput, throughput_zi) -> Deviation:
    """ADD/VDD from D / D^ZI and ATD/VTD from T^ZI / T along one sweep."""
    x = np.asarray(grid, dtype=float)
    if len(x) < 2 or np.any(np.diff(x) <= 0):
        raise ValueError("sweep grid must be strictly increasing with at least two points")
    if len(x) < 3:
        warnings.warn("isolation metrics on fewer than 3 grid points are coarse", stacklevel=2)
    dr = np.asarray(delay, dtype=float) / np.asarray(delay_zi, dtype=float)
    tr = np.asarray(throughput_zi, dtype=float) / np.asarray(throughput, dtype=float)
    add, vdd = _mean_var(x, dr)
    atd, vtd = _mean_var(x, tr)
    return Deviation(add, vdd, atd, vtd)


def combine(per_source: dict[int, Deviation], target_sp: int) -> Deviation:
    """Average the deviations caused by every other SP.

    With a single SP in the scenario the only sweep is of its own traffic,
    which is then used as is.
    """
    others = [d for u, d in per_source.items() if u != target_sp] or list(per_source.values())
    return Deviation(*(float(np.mean([getattr(d, f) for d in others]))
                       for f in ("add", "vdd", "atd", "vtd")))


@dataclass
class SweepResult:
    sp: int                        # swept SP position
    grid: np.ndarray
    reports: list[KpiReport]
    zero_interference: list[KpiReport]
    policy: str
    method: str

    def curve(self, key: tuple[int, int], metric: str, zi: bool = False) -> np.ndarray:
        reps = self.zero_interference if zi else self.reports
        return np.array([getattr(r.network[key], metric) for r in reps])

    def isolation(self) -> dict[tuple[int, int], Deviation]:
        out = {}
        for key in self.reports[0].network:
            out[key] = isolation_metrics(self.grid, self.curve(key, "delay"),
                                         self.curve(key, "delay", True),
                                         self.curve(key, "throughput"),
                                         self.curve(key, "throughput", True))
        return out


def sweep(sc: Scenario, sp: int, grid: Sequence[float], policy: str = "random",
          method: str = "algorithm1", seed: int = 0, max_states: int | None = None,
          **solver_kw) -> SweepResult:
    """Solve the network along a sweep of one SP's flow rate, with and without
    interference (the reference keeps the state space and zeroes P^IN)."""
    from . import solver

    kw = dict(solver_kw)
    if max_states is not None:
        kw["max_states"] = max_states
    reps, zis = [], []
    for lam in grid:
        point = sc.with_flow_rate(sp, float(lam))
        for target, scen in ((reps, point), (zis, point.zero_interference())):
            sol = solver.solve_network(scen, policy, method, seed=seed, **kw)
            target.append(report(sol, lam=float(lam)))
    return SweepResult(sp, np.asarray(grid, dtype=float), reps, zis, policy, method)


def relative_gap(a: float, b: float) -> float:
    return abs(a - b) / abs(b) if b else math.inf


def as_dict(k) -> dict:
    return asdict(k)
