"""Regenerate the bundled scenario files and their copies under repro/scenarios.

Three pointy-top hexagonal cells of radius 200 m meet at the origin, so every
pair of cells shares an edge.

single_mvno: one MVNO, one SP, one slice per cell with five 20 MHz channels
laid out identically in every cell (channel q of each slice overlaps channel q
of the other two).

toy_pair and toy_triple: small coupled instances used as exact-solver and
identity-test fixtures (4 and 64 states).

multi_mvno: two MVNOs, two SPs, four slices per cell tiling 72 MHz. The band
positions are a reconstruction (only the slice parameters and the
SP/MVNO assignment are published); they are chosen so that

* slices 7 and 8 (same cell) interact only through slice 12,
* all twelve slices form one interacting component,
* the SP 2 slices of MVNO 2 overlap fewer SP 1 channels than those of MVNO 1,
  and the SP 1 slices of MVNO 1 overlap fewer SP 2 channels than those of
  MVNO 2.
"""

import json
import math
from pathlib import Path

R = 200.0
CENTERS = [(R * math.cos(math.radians(a)), R * math.sin(math.radians(a))) for a in (90, 210, 330)]
OUT = Path(__file__).resolve().parents[1] / "src" / "slicewave" / "scenarios"
COPIES = Path(__file__).resolve().parent / "scenarios"
MHZ = 1e6


def cells(power_dbm):
    return [{"id": b + 1, "center": [round(x, 6), round(y, 6)], "hex_radius": R,
             "bs_power_dbm": power_dbm} for b, (x, y) in enumerate(CENTERS)]


def single_mvno():
    slices = []
    for b in range(3):
        slices.append({
            "id": b + 1, "cell": b + 1, "mvno": 1, "sp": 1,
            "num_channels": 5, "queue_cap": 10, "channel_bw_hz": 20 * MHZ,
            "channel_bands": [[20 * MHZ * q, 20 * MHZ * (q + 1)] for q in range(5)],
        })
    return {
        "name": "single_mvno",
        "description": "Single MVNO, single SP, symmetric three-cell layout.",
        "radio": {},
        "cells": cells(33.0),
        "mvnos": [{"id": 1, "name": "MVNO 1"}],
        "sps": [{"id": 1, "flow_rate": 3.0, "mean_flow_bits": 80e6, "density": [1 / 3] * 3}],
        "slices": slices,
        "sp_to_mvno": [[1.0]],
        "mvno_assign": [[[1.0, 1.0, 1.0]]],
    }


# slice id -> (cell, mvno, sp, 6 MHz units occupied)
MULTI_LAYOUT = {
    1: (1, 1, 1, [0, 1, 2]),
    2: (1, 2, 2, [3, 4, 5]),
    3: (1, 1, 2, [6, 7, 8]),
    4: (1, 2, 1, [9, 10, 11]),
    5: (2, 2, 1, [6, 7, 8]),
    6: (2, 1, 2, [9, 10, 11]),
    7: (2, 1, 1, [0, 1, 2]),
    8: (2, 2, 2, [3, 4, 5]),
    9: (3, 1, 1, [0, 1, 9]),
    10: (3, 2, 2, [5, 6, 7]),
    11: (3, 2, 1, [8, 10, 11]),
    12: (3, 1, 2, [2, 3, 4]),
}


def multi_mvno():
    unit = 6 * MHZ
    slices = []
    assign = [[[0.0] * 12 for _ in range(2)] for _ in range(2)]
    for sid, (cell, mvno, sp, units) in MULTI_LAYOUT.items():
        if sp == 1:
            spec = {"num_channels": 3, "queue_cap": 3, "channel_bw_hz": unit,
                    "channel_bands": [[unit * k, unit * (k + 1)] for k in units]}
        else:
            spec = {"num_channels": 1, "queue_cap": 2, "channel_bw_hz": 3 * unit,
                    "channel_bands": [[unit * units[0], unit * (units[-1] + 1)]]}
        slices.append({"id": sid, "cell": cell, "mvno": mvno, "sp": sp, **spec})
        assign[sp - 1][mvno - 1][sid - 1] = 1.0
    return {
        "name": "multi_mvno",
        "description": "Two MVNOs, two SPs, twelve slices; band layout reconstructed.",
        "radio": {},
        "cells": cells(45.0),
        "mvnos": [{"id": 1, "name": "MVNO 1"}, {"id": 2, "name": "MVNO 2"}],
        "sps": [
            {"id": 1, "flow_rate": 2.0, "mean_flow_bits": 8e6, "density": [1 / 3] * 3},
            {"id": 2, "flow_rate": 0.6, "mean_flow_bits": 80e6, "density": [1 / 3] * 3},
        ],
        "slices": slices,
        "sp_to_mvno": [[0.5, 0.5], [0.5, 0.5]],
        "mvno_assign": assign,
    }


def toy_pair():
    """Two cells, one single-channel bufferless slice each, same 10 MHz band."""
    slices = [{"id": b + 1, "cell": b + 1, "mvno": 1, "sp": 1, "num_channels": 1, "queue_cap": 1,
               "channel_bw_hz": 10 * MHZ, "channel_bands": [[0.0, 10 * MHZ]]} for b in range(2)]
    return {
        "name": "toy_pair",
        "description": "Two mutually interfering single-channel slices (4 states).",
        "radio": {"integration_points": 1024},
        "cells": cells(40.0)[:2],
        "mvnos": [{"id": 1, "name": "MVNO 1"}],
        "sps": [{"id": 1, "flow_rate": 4.0, "mean_flow_bits": 10e6, "density": [0.5, 0.5]}],
        "slices": slices,
        "sp_to_mvno": [[1.0]],
        "mvno_assign": [[[1.0, 1.0]]],
    }


def toy_triple():
    """Three cells, two 10 MHz channels per slice, bands offset by 5 MHz per cell."""
    slices = []
    for b in range(3):
        lo = 5 * MHZ * b
        slices.append({"id": b + 1, "cell": b + 1, "mvno": 1, "sp": 1, "num_channels": 2,
                       "queue_cap": 3, "channel_bw_hz": 10 * MHZ,
                       "channel_bands": [[lo, lo + 10 * MHZ], [lo + 10 * MHZ, lo + 20 * MHZ]]})
    return {
        "name": "toy_triple",
        "description": "Three slices with partial band overlaps (64 states).",
        "radio": {"integration_points": 1024},
        "cells": cells(40.0),
        "mvnos": [{"id": 1, "name": "MVNO 1"}],
        "sps": [{"id": 1, "flow_rate": 6.0, "mean_flow_bits": 20e6, "density": [1 / 3] * 3}],
        "slices": slices,
        "sp_to_mvno": [[1.0]],
        "mvno_assign": [[[1.0, 1.0, 1.0]]],
    }


if __name__ == "__main__":
    for folder in (OUT, COPIES):
        folder.mkdir(parents=True, exist_ok=True)
        for data in (single_mvno(), multi_mvno(), toy_pair(), toy_triple()):
            path = folder / f"{data['name']}.json"
            path.write_text(json.dumps(data, indent=2) + "\n")
            print("wrote", path)
