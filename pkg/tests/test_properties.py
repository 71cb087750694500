"""Randomized invariants; runnable on their own with ``pytest tests/test_properties.py``."""

import math

import numpy as np
from hypothesis import given, settings, strategies as st

from slicewave.allocation import build_lookup_table, lookup_row
from slicewave.kpi import slice_kpis
from slicewave.markov import ComponentRates, RatePolicy, enumerate_states, subvector_prob
from slicewave.radio import CapacityTable
from slicewave.scenario import build_overlap_index, load_scenario

SETTINGS = settings(max_examples=60, deadline=None)

_SC = load_scenario("single_mvno")
_OV = build_overlap_index(_SC)
_CAP = CapacityTable.for_scenario(_SC, _OV)
_SPACE = enumerate_states(_SC, _OV.components[0])
_RANDOM = ComponentRates(_SC, _OV, _CAP, _SPACE)
_LOOKUP = ComponentRates(_SC, _OV, _CAP, _SPACE,
                         RatePolicy("lookup", build_lookup_table(_SPACE, _SC, _CAP, seed=0)))
_MULTI = load_scenario("multi_mvno")
_MULTI_OV = build_overlap_index(_MULTI)
_MULTI_SPACE = enumerate_states(_MULTI, _MULTI_OV.components[0])
_MULTI_CAP = CapacityTable.for_scenario(_MULTI, _MULTI_OV)


@st.composite
def occupancy(draw):
    Q = draw(st.integers(1, 6))
    qmax = draw(st.integers(Q, Q + 4))
    dim = draw(st.integers(0, Q))
    n = draw(st.integers(0, qmax))
    return dim, n, Q, qmax


@SETTINGS
@given(occupancy())
def test_delta_probability_normalization(case):
    dim, n, Q, qmax = case
    total = sum(math.comb(dim, k) * subvector_prob(dim, k, n, Q, qmax) for k in range(dim + 1))
    assert math.isclose(total, 1.0, abs_tol=1e-12)


@SETTINGS
@given(st.integers(0, 1330), st.sampled_from([_RANDOM, _LOOKUP]))
def test_channel_probability_normalization(k, rates):
    n = rates.space.state(k)
    for i in range(3):
        pr = rates.channel_probs(i, n)
        assert np.all(pr >= 0)
        if n[i] > 0:
            assert math.isclose(pr.sum(), 1.0, abs_tol=1e-12)
        else:
            assert pr.sum() in (0.0, 1.0)


@SETTINGS
@given(st.integers(0, _MULTI_SPACE.size - 1), st.integers(0, 2**32))
def test_lookup_row_sums(k, seed):
    row = lookup_row(_MULTI_SPACE, _MULTI, _MULTI_CAP, k, seed=seed)
    n = _MULTI_SPACE.state(k)
    for i, s in enumerate(_MULTI_SPACE.slices):
        sl = _MULTI.slices[s]
        bits = sum(row >> _MULTI_OV.channel(s, q) & 1 for q in range(sl.num_channels))
        assert bits == min(n[i], sl.num_channels)


@SETTINGS
@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=12), st.integers(1, 5),
       st.floats(0.01, 50.0), st.floats(1e3, 1e9))
def test_delay_decomposition(w, Q, lam, omega):
    p = np.asarray(w) + 1e-3
    p /= p.sum()
    Q = min(Q, len(p) - 1)
    k = slice_kpis(p, Q, lam, omega)
    assert math.isclose(k.delay, k.sojourn + k.service, rel_tol=1e-9)
    assert 0 <= k.blocking <= 1


@SETTINGS
@given(st.floats(20.0, 50.0), st.sampled_from(["single_mvno", "multi_mvno", "toy_triple"]),
       st.data())
def test_capacity_interference_monotone(power, name, data):
    sc = load_scenario(name).with_bs_power(power).with_radio(integration_points=256)
    cap = CapacityTable.for_scenario(sc)
    ch = data.draw(st.integers(0, len(cap.overlap.channel_of) - 1))
    m = cap.num_overlaps(ch)
    code = data.draw(st.integers(0, (1 << m) - 1))
    j = data.draw(st.integers(0, m - 1))
    lo, hi = code & ~(1 << j), code | (1 << j)
    assert cap.capacity(ch, hi) < cap.capacity(ch, lo)


@SETTINGS
@given(st.integers(0, 1330), st.integers(0, 2), st.integers(0, 2))
def test_service_rate_monotone(k, i, j):
    if i == j:
        return
    n = np.array(_SPACE.state(k))
    if n[j] == 10:
        return
    up = n.copy()
    up[j] += 1
    assert _RANDOM.service_rate(i, up) <= _RANDOM.service_rate(i, n) * (1 + 1e-12)
