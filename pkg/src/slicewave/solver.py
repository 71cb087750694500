"""Steady-state solvers for one interacting component and for a whole network.

``solve_algorithm1`` is the approximate product-form method: Phi is built from
modified arrival rates lambda / beta_hat and beta_hat is refitted by weighted
least squares until it settles. ``solve_exact`` solves the true CTMC and is
the oracle for small spaces. ``solve_averaged_interference`` is the older
baseline that replaces the state-dependent interference by its mean.

All measures are handled in the log domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .markov import (DEFAULT_MAX_STATES, RANDOM, ComponentRates, RatePolicy, birth_death_distribution,
                     e_vector, enumerate_states)
from .radio import CapacityTable
from .scenario import Scenario, build_overlap_index

EXACT_MAX_STATES = 20_000
BETA_FLOOR = 1e-300


class DivergenceError(ArithmeticError):
    """beta_hat left the representable range."""


class SolverError(RuntimeError):
    pass


# -- scalar Phi / Psi / beta ----------------------------------------------------


def _lambda_fn(rates: ComponentRates, beta_hat=None) -> Callable[[int, int], float]:
    if beta_hat is None:
        return rates.arrival_rate
    return lambda i, k: rates.arrival_rate(i, k) / beta_hat[i][k] if k < rates.qmax[i] else 0.0


def phi(x_rh: Sequence[int], rates: ComponentRates, beta_hat=None) -> float:
    """log Phi(x) for a proper state (x_LH = Q^max - x_RH, so e(x) = 0)."""
    lam = _lambda_fn(rates, beta_hat)
    out = 0.0
    for i, n in enumerate(x_rh):
        for k in range(int(n), int(rates.qmax[i])):
            out -= math.log(lam(i, k))
        if n != 0:
            out -= math.log(rates.service_rate(i, x_rh))
    return out


def psi(x_lh: Sequence[int], x_rh: Sequence[int], rates: ComponentRates, beta_hat=None) -> float:
    """log Psi(x) for x = n - a; -inf where the blocking factor vanishes."""
    lam = _lambda_fn(rates, beta_hat)
    x_lh = np.asarray(x_lh, dtype=np.int64)
    x_rh = np.asarray(x_rh, dtype=np.int64)
    _, e = e_vector(x_lh, x_rh, rates.qmax)
    if np.any(x_lh == -1):
        # 1 - (1 - Lambda(Q^max)) * delta(0) with Lambda(Q^max) = 0
        return -math.inf
    y = x_rh + e
    out = 0.0
    for i in range(len(y)):
        for k in range(int(y[i]), int(rates.qmax[i])):
            out -= math.log(lam(i, k))
    for i in range(len(y)):
        if e[i] != 1 and y[i] != 0:
            out -= math.log(rates.service_rate(i, y))
    return out


def beta(n_rh: Sequence[int], i: int, rates: ComponentRates) -> float:
    """Arrival-side correction coefficient for an arrival to slice i in n."""
    n = np.asarray(n_rh, dtype=np.int64)
    if n[i] >= rates.qmax[i]:
        raise ValueError("arrival is blocked in this state")
    up = n.copy()
    up[i] += 1
    out = rates.service_rate(i, n)
    for j in range(len(n)):
        if j != i and n[j] > 0:
            out *= rates.service_rate(j, n) / rates.service_rate(j, up)
    return out


# -- distributions --------------------------------------------------------------


@dataclass
class Distribution:
    rates: ComponentRates
    pi: np.ndarray
    method: str

    @property
    def space(self):
        return self.rates.space

    def marginal(self, i: int) -> np.ndarray:
        q = int(self.space.qmax[i])
        return np.bincount(self.space.digits[i], weights=self.pi, minlength=q + 1)


@dataclass
class StationaryMeasure(Distribution):
    log_phi: np.ndarray = None
    beta_hat: list[np.ndarray] = None
    iterations_run: int = 0
    residuals: list[float] = field(default_factory=list)


@dataclass
class AveragedSolution(Distribution):
    marginals: list[np.ndarray] = None
    capacities: list[float] = None  # equivalent per-channel capacity per slice
    iterations_run: int = 0
    residuals: list[float] = field(default_factory=list)

    def marginal(self, i: int) -> np.ndarray:
        return self.marginals[i]


def _normalize(log_w: np.ndarray) -> np.ndarray:
    w = np.exp(log_w - log_w.max())
    return w / w.sum()


# -- Algorithm 1 ------------------------------------------------------------------


def log_phi_vector(rates: ComponentRates, beta_hat: Sequence[np.ndarray]) -> np.ndarray:
    """log Phi over the whole space for Lambda_hat = lambda / beta_hat."""
    digits = rates.space.digits
    out = -rates.log_m.sum(axis=0)
    for i in range(rates.space.dim):
        terms = np.log(beta_hat[i]) - math.log(rates.lam[i])
        tail = np.concatenate([np.cumsum(terms[::-1])[::-1], [0.0]])
        out += tail[digits[i]]
    return out


def _refit(rates: ComponentRates, log_phi: np.ndarray, old: list[np.ndarray]) -> list[np.ndarray]:
    digits = rates.space.digits
    w = np.exp(log_phi - log_phi.max())
    new = []
    for i in range(rates.space.dim):
        q = int(rates.qmax[i])
        m = digits[i]
        ok = m < q
        b = np.exp(rates.log_beta[i, ok])
        ww = w[ok]
        num = np.bincount(m[ok], weights=ww * b * b, minlength=q)
        den = np.bincount(m[ok], weights=ww * b, minlength=q)
        with np.errstate(invalid="ignore", divide="ignore"):
            nb = np.where(den > 0, num / den, old[i])
        if not np.all(np.isfinite(nb)) or np.any(nb <= BETA_FLOOR):
            raise DivergenceError(f"beta_hat of slice position {i} left the valid range")
        new.append(nb)
    return new


def solve_algorithm1(rates: ComponentRates, max_iter: int = 20, tol: float = 1e-8) -> StationaryMeasure:
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    beta_hat = [np.ones(int(q)) for q in rates.qmax]
    residuals = []
    it = 0
    for it in range(1, max_iter + 1):
        log_phi = log_phi_vector(rates, beta_hat)
        new = _refit(rates, log_phi, beta_hat)
        res = max((float(np.max(np.abs(n / o - 1.0))) if len(n) else 0.0)
                  for n, o in zip(new, beta_hat))
        residuals.append(res)
        beta_hat = new
        if res < tol:
            break
    log_phi = log_phi_vector(rates, beta_hat)
    return StationaryMeasure(rates, _normalize(log_phi), "algorithm1", log_phi=log_phi,
                             beta_hat=beta_hat, iterations_run=it, residuals=residuals)


def weighted_cost(measure: StationaryMeasure, i: int, m: int, b_hat: float | None = None) -> float:
    """sum Phi_hat (1 - beta / b_hat)^2 over COND(i, m), weights normalized."""
    _, b, w = _cond(measure, i, m)
    if b_hat is None:
        b_hat = measure.beta_hat[i][m]
    return float(np.sum(w * (1.0 - b / b_hat) ** 2))


def _cond(measure: StationaryMeasure, i: int, m: int):
    sel = np.flatnonzero(measure.space.digits[i] == m)
    b = np.exp(measure.rates.log_beta[i, sel])
    lw = measure.log_phi[sel]
    w = np.exp(lw - lw.max())
    return sel, b, w / w.sum()


def min_cost_diagnostic(measure: StationaryMeasure, i: int, m: int) -> float:
    """Var[beta] / E[beta^2] under the Phi_hat weights of COND(i, m)."""
    if not 0 <= m < measure.rates.qmax[i]:
        raise ValueError("COND set needs 0 <= m < Q^max")
    _, b, w = _cond(measure, i, m)
    e1 = float(np.sum(w * b))
    e2 = float(np.sum(w * b * b))
    return max(0.0, (e2 - e1 * e1) / e2)


# -- exact CTMC -------------------------------------------------------------------


def generator(rates: ComponentRates, arrival_scale: np.ndarray | None = None) -> sparse.csr_matrix:
    """Generator of the true chain: arrivals at Lambda, departures at M.

    ``arrival_scale`` (dim, size) multiplies the arrival rates, e.g. by beta
    for the chain whose stationary measure is Phi.
    """
    space = rates.space
    digits = space.digits
    rows, cols, vals = [], [], []
    lm = rates.log_m
    for i in range(space.dim):
        up = np.flatnonzero(digits[i] < space.qmax[i])
        r = np.full(len(up), rates.lam[i])
        if arrival_scale is not None:
            r = r * arrival_scale[i, up]
        rows.append(up)
        cols.append(up + space.strides[i])
        vals.append(r)
        down = np.flatnonzero(digits[i] > 0)
        rows.append(down)
        cols.append(down - space.strides[i])
        vals.append(np.exp(lm[i, down]))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    off = sparse.coo_matrix((vals, (rows, cols)), shape=(space.size, space.size)).tocsr()
    diag = np.asarray(off.sum(axis=1)).ravel()
    return (off - sparse.diags(diag)).tocsr()


def stationary_of(gen: sparse.spmatrix) -> np.ndarray:
    n = gen.shape[0]
    a = gen.T.tolil()
    a[n - 1, :] = np.ones(n)
    rhs = np.zeros(n)
    rhs[n - 1] = 1.0
    pi = spsolve(a.tocsc(), rhs)
    if not np.all(np.isfinite(pi)):
        raise SolverError("singular generator")
    pi = np.maximum(pi, 0.0)
    return pi / pi.sum()


def solve_exact(rates: ComponentRates, max_states: int = EXACT_MAX_STATES) -> Distribution:
    if rates.space.size > max_states:
        raise SolverError(f"exact solver is capped at {max_states:,} states "
                          f"(space has {rates.space.size:,})")
    return Distribution(rates, stationary_of(generator(rates)), "exact")


# -- averaged-interference baseline ------------------------------------------------


def solve_averaged_interference(rates: ComponentRates, max_iter: int = 200,
                                tol: float = 1e-10) -> AveragedSolution:
    """Decouple the slices by averaging interfering powers.

    Each channel of slice s' is taken to be active with probability
    E[min(n_s', Q_s')] / Q_s' under the current marginals, the interfering
    powers are scaled by those activities, and every slice becomes an
    independent M/M/Q/Q^max queue with the resulting capacity. Starts from
    uniform marginals.
    """
    if rates.policy.kind != "random":
        raise ValueError("the averaged-interference baseline assumes random allocation")
    link = rates.capacity.link
    ov = rates.overlap
    space = rates.space
    dim = space.dim
    marg = [np.full(int(q) + 1, 1.0 / (int(q) + 1)) for q in space.qmax]
    residuals = []
    caps = [0.0] * dim
    it = 0
    for it in range(1, max_iter + 1):
        act = {}
        for i in range(dim):
            Q = int(rates.nchan[i])
            busy = np.minimum(np.arange(len(marg[i])), Q)
            act[space.slices[i]] = float(marg[i] @ busy) / Q
        new = []
        for i, s in enumerate(space.slices):
            Q = int(rates.nchan[i])
            cq = []
            for q in range(Q):
                ch = ov.channel(s, q)
                a = [act[ov.channel_of[o][0]] for o in ov.overlaps[ch]]
                cq.append(link.harmonic_capacity(ch, a))
            caps[i] = float(np.mean(cq))
            mu = caps[i] / rates.omega[i]
            k = np.arange(1, int(space.qmax[i]) + 1)
            new.append(birth_death_distribution(float(rates.lam[i]), mu * np.minimum(k, Q)))
        res = max(float(np.max(np.abs(a - b))) for a, b in zip(new, marg))
        residuals.append(res)
        marg = new
        if res < tol:
            break
    pi = marg[0]
    for m in marg[1:]:
        pi = np.kron(pi, m)
    return AveragedSolution(rates, pi, "averaged-interference", marginals=marg, capacities=caps,
                            iterations_run=it, residuals=residuals)


# -- network level ------------------------------------------------------------------

POLICIES = ("random", "interference-aware", "exhaustive")
METHODS = ("algorithm1", "exact", "averaged-interference")


@dataclass
class NetworkSolution:
    sc: Scenario
    policy: str
    method: str
    components: list[Distribution]
    marginals: list[np.ndarray]  # indexed by global slice position

    @property
    def converged(self) -> bool:
        return all(not hasattr(c, "residuals") or not c.residuals or c.residuals[-1] < 1e-6
                   for c in self.components)


def component_rates(sc: Scenario, policy: str = "random", seed: int = 0,
                    max_states: int = DEFAULT_MAX_STATES, overlap=None, capacity=None,
                    tables=None) -> list[ComponentRates]:
    """Rates of every interacting component of ``sc`` under ``policy``.

    ``tables`` may supply prebuilt lookup tables, one per component.
    """
    from . import allocation

    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    overlap = overlap or build_overlap_index(sc)
    capacity = capacity or CapacityTable.for_scenario(sc, overlap)
    out = []
    for k, comp in enumerate(overlap.components):
        space = enumerate_states(sc, comp, max_states)
        rp = RANDOM
        if policy != "random":
            if tables is not None:
                table = tables[k]
            elif policy == "interference-aware":
                table = allocation.build_lookup_table(space, sc, capacity, seed=seed)
            else:
                table = allocation.build_exhaustive_table(space, sc, capacity)
            rp = RatePolicy("lookup", table)
        out.append(ComponentRates(sc, overlap, capacity, space, rp))
    return out


def solve_network(sc: Scenario, policy: str = "random", method: str = "algorithm1",
                  max_iter: int = 20, tol: float = 1e-8, seed: int = 0,
                  max_states: int = DEFAULT_MAX_STATES, rates: list[ComponentRates] | None = None
                  ) -> NetworkSolution:
    """Solve every component and collect per-slice marginals.

    Components do not interact, so the network distribution is the product
    of the component distributions.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if method == "averaged-interference" and policy != "random":
        raise ValueError("the averaged-interference baseline only exists for random allocation")
    if rates is None:
        rates = component_rates(sc, policy, seed=seed, max_states=max_states)
    comps = []
    marg: list[np.ndarray | None] = [None] * sc.num_slices
    for r in rates:
        if method == "algorithm1":
            d = solve_algorithm1(r, max_iter=max_iter, tol=tol)
        elif method == "exact":
            d = solve_exact(r)
        else:
            d = solve_averaged_interference(r)
        comps.append(d)
        for i, s in enumerate(r.space.slices):
            marg[s] = d.marginal(i)
    return NetworkSolution(sc, policy, method, comps, marg)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())
