"""Small scenario builders shared by the tests."""

import math

from slicewave.scenario import from_dict

MHZ = 1e6
R = 200.0
CENTERS = [(R * math.cos(math.radians(a)), R * math.sin(math.radians(a))) for a in (90, 210, 330)]


def make_scenario(slices, flow_rate=2.0, mean_bits=20e6, power=40.0, points=512, radio=None,
                  ncells=None):
    """One MVNO, one SP, one slice per listed spec.

    Each slice spec is (cell, num_channels, queue_cap, bw_mhz, [band start MHz per channel]).
    """
    ncells = ncells or max(c for c, *_ in slices)
    cells = [{"id": b + 1, "center": list(CENTERS[b]), "hex_radius": R, "bs_power_dbm": power}
             for b in range(ncells)]
    sl = []
    for k, (cell, q, qmax, bw, starts) in enumerate(slices):
        sl.append({"id": k + 1, "cell": cell, "mvno": 1, "sp": 1, "num_channels": q,
                   "queue_cap": qmax, "channel_bw_hz": bw * MHZ,
                   "channel_bands": [[x * MHZ, (x + bw) * MHZ] for x in starts]})
    per_cell = {}
    for cell, *_ in slices:
        per_cell[cell] = per_cell.get(cell, 0) + 1
    assign = []
    for cell, *_ in slices:
        assign.append(1.0 / per_cell[cell])
    return from_dict({
        "name": "test",
        "radio": {"integration_points": points, **(radio or {})},
        "cells": cells,
        "mvnos": [{"id": 1, "name": "m"}],
        "sps": [{"id": 1, "flow_rate": flow_rate, "mean_flow_bits": mean_bits,
                 "density": [1.0 / ncells] * ncells}],
        "slices": sl,
        "sp_to_mvno": [[1.0]],
        "mvno_assign": [[assign]],
    })


def isolated_slice(q=5, qmax=10, bw=20, flow_rate=3.0, mean_bits=80e6, power=40.0):
    return make_scenario([(1, q, qmax, bw, [bw * k for k in range(q)])], flow_rate=flow_rate,
                         mean_bits=mean_bits, power=power)
