"""Command-line front end.

    slicewave solve single_mvno --policy random --bs-power 33
    slicewave simulate single_mvno --policy interference-aware --replications 10
    slicewave sweep multi_mvno --sweep lambda_1=2:10:5 --policy interference-aware --allow-large
    slicewave compare single_mvno --bs-power 48
    slicewave lookup-table single_mvno --out lt.bin
    slicewave complexity multi_mvno

Scenarios are file paths or bundled names. Results are long-form CSV written
to ``--out`` or stdout. Exit codes: 1 configuration, 2 solver, 3 I/O.
"""

from __future__ import annotations

import argparse
import csv
import functools
import io
import json
import subprocess
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, allocation, des, kpi, solver
from .markov import DEFAULT_MAX_STATES, StateSpaceTooLarge
from .scenario import Scenario, ScenarioError, build_overlap_index, load_scenario

MODES = ("solve", "simulate", "sweep", "lookup-table", "complexity", "compare")
CLI_POLICIES = ("random", "interference-aware", "exhaustive", "averaged-interference")
SAFE_MAX_STATES = 200_000

EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 1, 2, 3


class ConfigError(ValueError):
    pass


@functools.lru_cache(maxsize=1)
def build_id() -> str:
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def parse_sweep(text: str) -> tuple[str, np.ndarray]:
    try:
        name, rng = text.split("=", 1)
        a, b, n = rng.split(":")
        grid = np.linspace(float(a), float(b), int(n))
    except ValueError as exc:
        raise ConfigError(f"bad --sweep {text!r}; expected param=start:stop:count") from exc
    if len(grid) > 1 and np.any(np.diff(grid) <= 0):
        raise ConfigError("sweep grid must be strictly increasing")
    return name.strip(), grid


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slicewave", description="Interference-coupled RAN slicing "
                                "solver and simulator.")
    p.add_argument("positional", nargs="*", metavar="[MODE] SCENARIO",
                   help="mode (" + " | ".join(MODES) + ") and scenario file or bundled name")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--scenario")
    p.add_argument("--policy", choices=CLI_POLICIES, default="random")
    p.add_argument("--exact", action="store_true", help="solve the full CTMC instead of Algorithm 1")
    p.add_argument("--sweep", help="param=start:stop:count, param is lambda_<sp id> or bs_power_dbm")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iters", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out")
    p.add_argument("--allow-large", action="store_true")
    p.add_argument("--replications", type=int, default=10)
    p.add_argument("--warmup", type=float, default=0.1)
    p.add_argument("--flows", type=int, default=300_000, help="flows per replication")
    p.add_argument("--bs-power", type=float, help="override every cell's power (dBm)")
    p.add_argument("--lambda", dest="lambdas", action="append", default=[], metavar="SP=RATE",
                   help="override an SP flow rate, e.g. --lambda 1=4.0")
    p.add_argument("--sticky", action="store_true", help="keep LT flows on their channel")
    return p


class Runner:
    def __init__(self, args):
        self.args = args
        pos = list(args.positional)
        mode = args.mode or (pos.pop(0) if pos else None)
        scen = args.scenario or (pos.pop(0) if pos else None)
        if pos:
            raise ConfigError(f"unexpected arguments: {' '.join(pos)}")
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}")
        if not scen:
            raise ConfigError("no scenario given")
        self.mode = mode
        self.sc = self._scenario(scen)
        self.max_states = DEFAULT_MAX_STATES if args.allow_large else SAFE_MAX_STATES

    def _scenario(self, ref: str) -> Scenario:
        sc = load_scenario(ref)
        if self.args.bs_power is not None:
            sc = sc.with_bs_power(self.args.bs_power)
        for item in self.args.lambdas:
            try:
                sp_id, rate = item.split("=")
                sc = sc.with_flow_rate(_sp_pos(sc, int(sp_id)), float(rate))
            except ValueError as exc:
                raise ConfigError(f"bad --lambda {item!r}") from exc
        return sc

    # -- helpers --

    def meta(self, policy: str | None = None, method: str = "") -> dict:
        return {"scenario": self.sc.name, "scenario_hash": self.sc.digest(), "seed": self.args.seed,
                "policy": policy or self.args.policy, "method": method, "build": build_id()}

    def policy_method(self, policy: str | None = None) -> tuple[str, str]:
        policy = policy or self.args.policy
        if policy == "averaged-interference":
            return "random", "averaged-interference"
        return policy, ("exact" if self.args.exact else "algorithm1")

    def solve(self, sc: Scenario, policy: str | None = None, rates=None):
        pol, method = self.policy_method(policy)
        return solver.solve_network(sc, pol, method, max_iter=self.args.iters, tol=self.args.tol,
                                    seed=self.args.seed, max_states=self.max_states, rates=rates)

    def sim_config(self) -> des.SimConfig:
        return des.SimConfig(seed=self.args.seed, num_flows=self.args.flows,
                             warmup_fraction=self.args.warmup, replications=self.args.replications,
                             sticky_lookup=self.args.sticky)

    def simulate(self, sc: Scenario, policy: str, rates=None) -> des.DesReport:
        if policy in ("random", "averaged-interference"):
            return des.run_des(sc, "random", self.sim_config())
        if rates is None:
            rates = solver.component_rates(sc, policy, seed=self.args.seed, max_states=self.max_states)
        return des.run_des(sc, "lookup", self.sim_config(), tables=[r.policy.table for r in rates])

    # -- modes --

    def run(self) -> list[dict]:
        return getattr(self, "cmd_" + self.mode.replace("-", "_"))()

    def cmd_solve(self) -> list[dict]:
        sol = self.solve(self.sc)
        meta = self.meta(method=sol.method)
        rows = [{**meta, **r} for r in kpi.report_rows(kpi.report(sol), self.sc)]
        for c, comp in enumerate(sol.components):
            for it, res in enumerate(getattr(comp, "residuals", []), 1):
                rows.append({**meta, "level": "solver", "slice": "", "sp": "", "mvno": "",
                             "metric": f"residual[{c}][{it}]", "value": res})
        return rows

    def cmd_simulate(self) -> list[dict]:
        if self.args.policy == "exhaustive":
            raise ConfigError("simulate supports the random and interference-aware policies")
        rep = self.simulate(self.sc, self.args.policy)
        meta = self.meta(method="des")
        err = {(r["level"], r["slice"], r["sp"], r["mvno"], r["metric"]): r["value"]
               for r in kpi.report_rows(rep.stderr, self.sc)}
        rows = []
        for r in kpi.report_rows(rep.mean, self.sc):
            key = (r["level"], r["slice"], r["sp"], r["mvno"], r["metric"])
            rows.append({**meta, **r, "stderr": err.get(key, "")})
        return rows

    def cmd_sweep(self) -> list[dict]:
        if not self.args.sweep:
            raise ConfigError("sweep mode needs --sweep")
        name, grid = parse_sweep(self.args.sweep)
        pol, method = self.policy_method()
        rows = []
        if name == "bs_power_dbm":
            for p in grid:
                sol = self.solve(self.sc.with_bs_power(float(p)))
                meta = {**self.meta(method=method), "sweep": name, "x": float(p)}
                rows += [{**meta, **r} for r in kpi.report_rows(kpi.report(sol), self.sc)]
            return rows
        sp = _sweep_sp(self.sc, name)
        if len(grid) < 3:
            raise ConfigError("isolation metrics need a sweep grid of at least 3 points")
        res = kpi.sweep(self.sc, sp, grid, pol, method, seed=self.args.seed,
                        max_states=self.max_states, max_iter=self.args.iters, tol=self.args.tol)
        for x, rep, zi in zip(grid, res.reports, res.zero_interference):
            for tag, r in (("interference", rep), ("zero-interference", zi)):
                meta = {**self.meta(method=method), "sweep": name, "x": float(x), "reference": tag}
                rows += [{**meta, **row} for row in kpi.report_rows(r, self.sc)]
        for (u, v), dev in sorted(res.isolation().items()):
            meta = {**self.meta(method=method), "sweep": name, "x": "", "reference": "isolation"}
            for m in ("add", "vdd", "atd", "vtd"):
                rows.append({**meta, "level": "isolation", "slice": "", "sp": self.sc.sps[u].id,
                             "mvno": self.sc.mvnos[v].id, "metric": m.upper(),
                             "value": getattr(dev, m)})
        return rows

    def cmd_lookup_table(self) -> list[dict]:
        if self.args.policy not in ("interference-aware", "exhaustive", "random"):
            raise ConfigError("lookup tables exist for the interference-aware and exhaustive policies")
        policy = "interference-aware" if self.args.policy == "random" else self.args.policy
        rates = solver.component_rates(self.sc, policy, seed=self.args.seed, max_states=self.max_states)
        rows = []
        for c, r in enumerate(rates):
            tab = r.policy.table
            if self.args.out:
                path = self.args.out if len(rates) == 1 else f"{self.args.out}.{c}"
                allocation.dump_table(tab, path)
            busy = np.array([bin(int(x)).count("1") for x in tab.rows()])
            rows.append({**self.meta(policy=policy, method=tab.kind), "component": c,
                         "states": tab.space.size, "channels": len(tab.channels),
                         "mean_active": float(busy.mean())})
        self.args.out = None  # the binary dump replaces the CSV
        return rows

    def cmd_complexity(self) -> list[dict]:
        meta = self.meta(method="closed-form")
        rows = []
        ov = build_overlap_index(self.sc)
        mc_meta = {**meta, "method": "monte-carlo"}
        for c, comp in enumerate(ov.components):
            cnt = allocation.complexity_counts(self.sc, comp)
            mc = allocation.complexity_monte_carlo(self.sc, seed=self.args.seed, slices=comp)
            for m in ("proposed", "exhaustive"):
                rows.append({**meta, "component": c, "metric": m, "value": getattr(cnt, m),
                             "stderr": ""})
                rows.append({**mc_meta, "component": c, "metric": m, "value": mc[m][0],
                             "stderr": mc[m][1]})
        return rows

    def cmd_compare(self) -> list[dict]:
        policy = self.args.policy
        if policy in ("averaged-interference", "exhaustive"):
            policy = "random"
        pol, method = self.policy_method(policy)
        rates = solver.component_rates(self.sc, pol, seed=self.args.seed, max_states=self.max_states)
        analytic = kpi.report(self.solve(self.sc, policy, rates=rates))
        sim = self.simulate(self.sc, policy, rates=rates)
        base = None
        if pol == "random":
            base = kpi.report(self.solve(self.sc, "averaged-interference"))
        cols = {"analytic": analytic, "des": sim.mean, "des_stderr": sim.stderr}
        if base is not None:
            cols["baseline"] = base
        tables = {name: {_key(r): r["value"] for r in kpi.report_rows(rep, self.sc)}
                  for name, rep in cols.items()}
        rows = []
        for r in kpi.report_rows(analytic, self.sc):
            k = _key(r)
            row = {**self.meta(policy=policy, method=method), **{f: r[f] for f in
                   ("level", "slice", "sp", "mvno", "metric")}}
            for name, tab in tables.items():
                row[name] = tab.get(k, "")
            rows.append(row)
        return rows


def _key(r: dict) -> tuple:
    return (r["level"], r["slice"], r["sp"], r["mvno"], r["metric"])


def _sp_pos(sc: Scenario, sp_id: int) -> int:
    for u, sp in enumerate(sc.sps):
        if sp.id == sp_id:
            return u
    raise ConfigError(f"scenario has no SP {sp_id}")


def _sweep_sp(sc: Scenario, name: str) -> int:
    if name == "lambda_u":
        if len(sc.sps) != 1:
            raise ConfigError("lambda_u is ambiguous with several SPs; use lambda_<sp id>")
        return 0
    if name.startswith("lambda_"):
        try:
            return _sp_pos(sc, int(name.split("_", 1)[1]))
        except ValueError as exc:
            raise ConfigError(f"unknown sweep parameter {name!r}") from exc
    raise ConfigError(f"unknown sweep parameter {name!r}")


def write_rows(rows: list[dict], out) -> None:
    fields: list[str] = []
    for r in rows:
        for k in r:
            if k not in fields:
                fields.append(k)
    w = csv.DictWriter(out, fieldnames=fields, restval="", lineterminator="\n")
    w.writeheader()
    w.writerows(rows)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        runner = Runner(args)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            rows = runner.run()
    except (ConfigError, ScenarioError, json.JSONDecodeError) as exc:
        print(f"slicewave: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"slicewave: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (StateSpaceTooLarge, solver.SolverError, solver.DivergenceError,
            allocation.BudgetExceeded, des.SimulationError) as exc:
        print(f"slicewave: solver error: {exc}", file=sys.stderr)
        if isinstance(exc, StateSpaceTooLarge) and not args.allow_large:
            print("slicewave: pass --allow-large to lift the state-space cap", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"slicewave: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"slicewave: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.out:
            with open(args.out, "w", newline="") as fh:
                write_rows(rows, fh)
        else:
            buf = io.StringIO()
            write_rows(rows, buf)
            sys.stdout.write(buf.getvalue())
    except OSError as exc:
        print(f"slicewave: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
