"""Flow-level discrete-event simulation of the whole network.

Flows arrive as one merged Poisson stream, have exponential sizes and are
served by one channel each. A served flow drains at the location-averaged
capacity of its channel for the interference vector currently in force;
the remaining bits of every flow are updated at each event, so rate changes
are exact.

The event loop is compiled with numba. Arrival times, target slices and
flow sizes are drawn beforehand with numpy; the loop itself only draws the
channel placements, from its own seeded generator.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import kpi
from .radio import CapacityTable
from .scenario import Scenario, build_overlap_index, slice_arrival_rates

POLICY_CODES = {"random": 0, "lookup": 1, "lookup-sticky": 2}


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    num_flows: int = 300_000  # per replication
    warmup_fraction: float = 0.1
    replications: int = 10
    trace_capacity: int = 0
    sticky_lookup: bool = False

    def __post_init__(self):
        if self.num_flows <= 0:
            raise ValueError("num_flows must be positive")
        if not 0.0 <= self.warmup_fraction <= 0.5:
            raise ValueError("warmup_fraction must lie in [0, 0.5]")
        if self.replications < 1:
            raise ValueError("need at least one replication")


def threads() -> int:
    env = os.environ.get("SLICEWAVE_THREADS")
    n = int(env) if env else (os.cpu_count() or 1)
    return max(1, n)


# -- channel rate ---------------------------------------------------------------


def rate_of_flow(capacity: CapacityTable, active, ch: int) -> float:
    """Current rate (bit/s) of a flow on channel ``ch`` given the set of
    active global channels."""
    act = set(int(c) for c in active)
    code = 0
    for j, other in enumerate(capacity.overlap.overlaps[ch]):
        if other in act:
            code |= 1 << j
    return capacity.capacity(ch, code)


@njit(cache=True)
def _channel_rate(ch, chan_flow, over_ptr, over_idx, cap_ptr, cap_flat):
    code = 0
    for j in range(over_ptr[ch + 1] - over_ptr[ch]):
        if chan_flow[over_idx[over_ptr[ch] + j]] >= 0:
            code |= 1 << j
    return cap_flat[cap_ptr[ch] + code]


@njit(cache=True)
def _place_lookup(c, comp_slices_ptr, comp_slices, comp_index, lt_rows, lt_off, lt_bit,
                  Q, chan_start, chan_flow, sticky, tmp_f, tmp_c):
    """Re-place the in-service flows of component c onto its permitted channels."""
    row = lt_rows[lt_off[c] + comp_index[c]]
    for k in range(comp_slices_ptr[c], comp_slices_ptr[c + 1]):
        s = comp_slices[k]
        nf = 0
        npm = 0
        for q in range(Q[s]):
            ch = chan_start[s] + q
            allowed = (row >> np.uint64(lt_bit[ch])) & np.uint64(1)
            f = chan_flow[ch]
            if sticky and f >= 0 and allowed:
                continue
            if f >= 0:
                tmp_f[nf] = f
                nf += 1
                chan_flow[ch] = -1
            if allowed:
                tmp_c[npm] = ch
                npm += 1
        if nf != npm:
            return False
        # random matching of the displaced flows onto the open permitted channels
        for i in range(nf - 1, 0, -1):
            j = np.random.randint(0, i + 1)
            tmp = tmp_f[i]
            tmp_f[i] = tmp_f[j]
            tmp_f[j] = tmp
        for i in range(nf):
            chan_flow[tmp_c[i]] = tmp_f[i]
    return True


@njit(cache=True, nogil=True)
def _simulate(arr_t, arr_s, sizes, Q, Qmax, chan_start, over_ptr, over_idx, cap_ptr, cap_flat,
              policy, comp_of, stride, comp_slices_ptr, comp_slices, lt_rows, lt_off, lt_bit,
              warm_idx, seed, trace_cap):
    np.random.seed(seed)
    S = Q.shape[0]
    K = cap_ptr.shape[0]
    N = arr_t.shape[0]
    C = comp_slices_ptr.shape[0] - 1
    maxq = 1
    for s in range(S):
        if Qmax[s] > maxq:
            maxq = Qmax[s]
    n = np.zeros(S, np.int64)
    qbuf = np.zeros((S, maxq), np.int64)
    qhead = np.zeros(S, np.int64)
    qlen = np.zeros(S, np.int64)
    chan_flow = -np.ones(K, np.int64)
    rate = np.zeros(K)
    rem = sizes.copy()
    served = np.zeros(N)
    start = np.full(N, np.nan)
    done = np.zeros(N, np.bool_)
    comp_index = np.zeros(C, np.int64)
    tmp_f = np.zeros(K, np.int64)
    tmp_c = np.zeros(K, np.int64)

    area_n = np.zeros(S)
    area_wait = np.zeros(S)
    area_serve = np.zeros(S)
    arrivals = np.zeros(S, np.int64)
    blocked = np.zeros(S, np.int64)
    completed = np.zeros(S, np.int64)
    delay_sum = np.zeros(S)
    wait_sum = np.zeros(S)
    tot_blocked = 0
    tot_completed = 0
    status = 0

    tr_t = np.zeros(trace_cap)
    tr_kind = np.zeros(trace_cap, np.int64)
    tr_s = np.zeros(trace_cap, np.int64)
    tr_f = np.zeros(trace_cap, np.int64)
    tr_n = 0

    t_warm = arr_t[warm_idx] if warm_idx < N else arr_t[N - 1]
    t_end = arr_t[N - 1]
    t = 0.0
    k = 0
    while True:
        # next completion
        t_dep = np.inf
        ch_dep = -1
        for ch in range(K):
            f = chan_flow[ch]
            if f >= 0:
                td = t + rem[f] / rate[ch]
                if td < t_dep:
                    t_dep = td
                    ch_dep = ch
        t_arr = arr_t[k] if k < N else np.inf
        t_next = t_arr if t_arr <= t_dep else t_dep
        finished = t_next > t_end
        if finished:
            t_next = t_end
        # elapse
        dt = t_next - t
        if dt > 0:
            for ch in range(K):
                f = chan_flow[ch]
                if f >= 0:
                    served[f] += dt * rate[ch]
                    rem[f] -= dt * rate[ch]
            lo = t if t > t_warm else t_warm
            if t_next > lo:
                w = t_next - lo
                for s in range(S):
                    area_n[s] += w * n[s]
                    if n[s] > Q[s]:
                        area_wait[s] += w * (n[s] - Q[s])
                        area_serve[s] += w * Q[s]
                    else:
                        area_serve[s] += w * n[s]
        t = t_next
        if finished:
            break
        changed = -1
        if t_arr <= t_dep:
            f = k
            s = arr_s[f]
            k += 1
            counted = f >= warm_idx
            if counted:
                arrivals[s] += 1
            if n[s] >= Qmax[s]:
                tot_blocked += 1
                if counted:
                    blocked[s] += 1
                kind = 2
            else:
                n[s] += 1
                comp_index[comp_of[s]] += stride[s]
                busy = n[s] - 1 - qlen[s]
                if busy < Q[s]:
                    free = Q[s] - busy
                    pick = np.random.randint(0, free) if policy == 0 else 0
                    for q in range(Q[s]):
                        ch = chan_start[s] + q
                        if chan_flow[ch] < 0:
                            if pick == 0:
                                chan_flow[ch] = f
                                break
                            pick -= 1
                    start[f] = t
                else:
                    qbuf[s, (qhead[s] + qlen[s]) % Qmax[s]] = f
                    qlen[s] += 1
                changed = s
                kind = 0
        else:
            ch = ch_dep
            f = chan_flow[ch]
            s = arr_s[f]
            served[f] += rem[f]
            rem[f] = 0.0
            done[f] = True
            chan_flow[ch] = -1
            tot_completed += 1
            if f >= warm_idx:
                completed[s] += 1
                delay_sum[s] += t - arr_t[f]
                wait_sum[s] += start[f] - arr_t[f]
            n[s] -= 1
            comp_index[comp_of[s]] -= stride[s]
            if qlen[s] > 0:
                g = qbuf[s, qhead[s]]
                qhead[s] = (qhead[s] + 1) % Qmax[s]
                qlen[s] -= 1
                chan_flow[ch] = g
                start[g] = t
            changed = s
            kind = 1
        if changed >= 0 and policy != 0:
            ok = _place_lookup(comp_of[changed], comp_slices_ptr, comp_slices, comp_index,
                               lt_rows, lt_off, lt_bit, Q, chan_start, chan_flow, policy == 2,
                               tmp_f, tmp_c)
            if not ok:
                status = 1
                break
        for ch in range(K):
            if chan_flow[ch] >= 0:
                rate[ch] = _channel_rate(ch, chan_flow, over_ptr, over_idx, cap_ptr, cap_flat)
        if tr_n < trace_cap:
            tr_t[tr_n] = t
            tr_kind[tr_n] = kind
            tr_s[tr_n] = s
            tr_f[tr_n] = f
            tr_n += 1
    inflight = 0
    for s in range(S):
        inflight += n[s]
    counts = np.array([k, tot_completed, tot_blocked, inflight, status])
    return (area_n, area_wait, area_serve, arrivals, blocked, completed, delay_sum, wait_sum,
            t_end - t_warm, counts, served, done, tr_t[:tr_n], tr_kind[:tr_n], tr_s[:tr_n],
            tr_f[:tr_n])


# -- python driver ------------------------------------------------------------------


@dataclass
class Replication:
    mean_customers: np.ndarray
    mean_waiting: np.ndarray
    mean_served: np.ndarray
    arrivals: np.ndarray
    blocked: np.ndarray
    completed: np.ndarray
    flow_delay: np.ndarray   # mean delay of completed post-warmup flows
    duration: float
    counts: dict
    slices: list            # kpi.SliceKpi per slice (None without traffic)
    served_bits: np.ndarray | None = None
    sizes: np.ndarray | None = None
    done: np.ndarray | None = None
    trace: dict | None = None


@dataclass
class DesReport:
    replications: list[Replication]
    sc: Scenario
    policy: str
    config: SimConfig
    mean: kpi.KpiReport = field(init=False)
    stderr: kpi.KpiReport = field(init=False)

    def __post_init__(self):
        self.mean, self.stderr = _summarize(self.replications, self.sc)

    def ci(self, s: int, metric: str) -> tuple[float, float]:
        m = getattr(self.mean.slices[s], metric)
        e = getattr(self.stderr.slices[s], metric)
        return m - 1.96 * e, m + 1.96 * e


class _Model:
    """Flattened arrays describing the network for the compiled loop."""

    def __init__(self, sc: Scenario, policy: str, tables=None, capacity: CapacityTable | None = None):
        ov = build_overlap_index(sc)
        self.capacity = capacity or CapacityTable.for_scenario(sc, ov)
        ov = self.capacity.overlap
        self.sc = sc
        self.lam = slice_arrival_rates(sc)
        self.Q = np.array([s.num_channels for s in sc.slices], dtype=np.int64)
        self.Qmax = np.array([s.queue_cap for s in sc.slices], dtype=np.int64)
        self.omega = np.array([sc.sps[s.sp].mean_flow_bits for s in sc.slices])
        self.chan_start = np.array(ov.first_channel, dtype=np.int64)
        K = len(ov.channel_of)
        self.over_ptr = np.zeros(K + 1, dtype=np.int64)
        idx, cap_ptr, caps = [], [], []
        pos = 0
        for ch in range(K):
            idx.extend(ov.overlaps[ch])
            self.over_ptr[ch + 1] = len(idx)
            cap_ptr.append(pos)
            tab = self.capacity.table(ch)
            caps.append(tab)
            pos += len(tab)
        self.over_idx = np.array(idx, dtype=np.int64)
        self.cap_ptr = np.array(cap_ptr, dtype=np.int64)
        self.cap_flat = np.concatenate(caps)
        comps = ov.components
        self.comp_of = np.zeros(len(sc.slices), dtype=np.int64)
        self.stride = np.zeros(len(sc.slices), dtype=np.int64)
        ptr, members = [0], []
        for c, comp in enumerate(comps):
            size = 1
            for s in reversed(comp):
                self.comp_of[s] = c
                self.stride[s] = size
                size *= self.Qmax[s] + 1
            members.extend(comp)
            ptr.append(len(members))
        self.comp_slices_ptr = np.array(ptr, dtype=np.int64)
        self.comp_slices = np.array(members, dtype=np.int64)
        self.policy = POLICY_CODES[policy]
        self.lt_bit = np.zeros(K, dtype=np.int64)
        if self.policy == 0:
            self.lt_rows = np.zeros(1, dtype=np.uint64)
            self.lt_off = np.zeros(len(comps), dtype=np.int64)
        else:
            if tables is None or len(tables) != len(comps):
                raise SimulationError("lookup policy needs one table per component")
            rows, off = [], []
            o = 0
            for comp, tab in zip(comps, tables):
                if tuple(tab.space.slices) != tuple(comp):
                    raise SimulationError("lookup table does not match its component")
                off.append(o)
                rows.append(tab.rows())
                o += len(tab.rows())
                for ch, b in tab.bit_of.items():
                    self.lt_bit[ch] = b
            self.lt_rows = np.concatenate(rows).astype(np.uint64)
            self.lt_off = np.array(off, dtype=np.int64)

    def arrivals(self, rng: np.random.Generator, num_flows: int):
        total = float(self.lam.sum())
        arr_t = np.cumsum(rng.exponential(1.0 / total, size=num_flows))
        arr_s = rng.choice(len(self.lam), size=num_flows, p=self.lam / total).astype(np.int64)
        sizes = rng.exponential(1.0, size=num_flows) * self.omega[arr_s]
        return arr_t, arr_s, sizes

    def run(self, seed_seq: np.random.SeedSequence, cfg: SimConfig) -> Replication:
        rng = np.random.default_rng(seed_seq)
        arr_t, arr_s, sizes = self.arrivals(rng, cfg.num_flows)
        loop_seed = int(rng.integers(0, 2**31 - 1))
        warm = int(math.floor(cfg.warmup_fraction * cfg.num_flows))
        out = _simulate(arr_t, arr_s, sizes, self.Q, self.Qmax, self.chan_start, self.over_ptr,
                        self.over_idx, self.cap_ptr, self.cap_flat, self.policy, self.comp_of,
                        self.stride, self.comp_slices_ptr, self.comp_slices, self.lt_rows,
                        self.lt_off, self.lt_bit, warm, loop_seed, cfg.trace_capacity)
        (area_n, area_wait, area_serve, arrivals, blocked, completed, delay_sum, wait_sum,
         duration, counts, served, done, tr_t, tr_kind, tr_s, tr_f) = out
        if counts[4] != 0:
            raise SimulationError("lookup table row does not match the occupancy")
        counts = dict(zip(("arrivals", "completed", "blocked", "in_flight"), map(int, counts[:4])))
        en, ew, es = area_n / duration, area_wait / duration, area_serve / duration
        slices = []
        for s in range(len(self.lam)):
            if arrivals[s] == 0 or arrivals[s] == blocked[s]:
                slices.append(None)
                continue
            admitted = (arrivals[s] - blocked[s]) / duration
            slices.append(kpi.SliceKpi(blocked[s] / arrivals[s], admitted * self.omega[s],
                                       en[s] / admitted, ew[s] / admitted, es[s] / admitted, en[s]))
        with np.errstate(invalid="ignore", divide="ignore"):
            flow_delay = delay_sum / completed
        trace = None
        if cfg.trace_capacity:
            trace = {"time": tr_t, "kind": tr_kind, "slice": tr_s, "flow": tr_f}
        return Replication(en, ew, es, arrivals, blocked, completed, flow_delay, duration, counts,
                           slices, served, sizes, done, trace)


def _summarize(reps: list[Replication], sc: Scenario):
    S = sc.num_slices
    mean_sl, se_sl = [], []
    fields = ("blocking", "throughput", "delay", "sojourn", "service", "mean_customers")
    for s in range(S):
        vals = [r.slices[s] for r in reps if r.slices[s] is not None]
        if not vals:
            mean_sl.append(None)
            se_sl.append(None)
            continue
        arr = np.array([[getattr(v, f) for f in fields] for v in vals])
        mean_sl.append(kpi.SliceKpi(*arr.mean(axis=0)))
        se = arr.std(axis=0, ddof=1) / math.sqrt(len(vals)) if len(vals) > 1 else np.full(len(fields), np.nan)
        se_sl.append(kpi.SliceKpi(*se))
    nets = [kpi.network_kpis(r.slices, sc) for r in reps]
    mean_net, se_net = {}, {}
    for key in nets[0]:
        arr = np.array([[x[key].throughput, x[key].delay, x[key].sojourn, x[key].service,
                         x[key].weight] for x in nets if key in x])
        mean_net[key] = kpi.NetworkKpi(*arr.mean(axis=0))
        se = arr.std(axis=0, ddof=1) / math.sqrt(len(arr)) if len(arr) > 1 else np.full(5, np.nan)
        se_net[key] = kpi.NetworkKpi(*se)
    return (kpi.KpiReport(mean_sl, mean_net, {"scenario": sc.digest()}),
            kpi.KpiReport(se_sl, se_net, {"scenario": sc.digest()}))


def run_des(sc: Scenario, policy: str = "random", config: SimConfig = SimConfig(),
            tables=None, capacity: CapacityTable | None = None, keep_flows: bool = False) -> DesReport:
    """Simulate ``config.replications`` independent replications.

    ``policy`` is "random" or "lookup"; the lookup policy needs ``tables``,
    one LookupTable per interacting component in component order.
    """
    if policy not in ("random", "lookup"):
        raise ValueError(f"unknown simulation policy {policy!r}")
    code = "lookup-sticky" if policy == "lookup" and config.sticky_lookup else policy
    model = _Model(sc, code, tables, capacity)
    seeds = np.random.SeedSequence(config.seed).spawn(config.replications)
    workers = min(threads(), config.replications)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            reps = list(ex.map(lambda ss: model.run(ss, config), seeds))
    else:
        reps = [model.run(ss, config) for ss in seeds]
    if not keep_flows:
        for r in reps:
            r.served_bits = r.sizes = r.done = None
    return DesReport(reps, sc, policy, config)
