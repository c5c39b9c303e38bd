"""Command line entry point.

    netselect run <scenario|preset> --out DIR --seeds N --par P [--policy NAME ...]
    netselect trace <trace.csv> --policy NAME [--seeds N] [--out DIR]
    netselect ne <b1,...,bk> <n>
    netselect bounds --k K --beta B [--td S --tau S --T S --gamma G --l L --mu-d D --mu-g G --gmax G]

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
``NETSELECT_OUT`` sets the default output directory.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import bounds as B
from . import metrics as M
from .core import GB, MB, ConfigurationError, InvalidInputError, MEGABIT_BYTES
from .engine import POLICY_NAMES, RunResult, Scenario, run_batch, trace_scenario
from .environment import load_trace_csv
from .scenario import resolve_scenario

log = logging.getLogger("netselect")

DEFAULT_OUT = "netselect-out"

SUMMARY_FIELDS = ["scenario", "policy", "seed", "median_download_bytes", "mean_download_bytes",
                  "fairness_stddev_bytes", "median_switches", "total_switches", "total_resets",
                  "stable_slot", "stable_at_ne", "fraction_at_ne", "fraction_at_eps",
                  "mean_distance_to_ne", "unutilized_bytes"]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6f}"
    return str(v)


def _homogeneous(scenario: Scenario) -> bool:
    return all(g.networks is None or set(g.networks) == {n.id for n in scenario.networks}
               for g in scenario.device_groups) and not any(e.action == "set_networks" for e in scenario.events)


def _availability(scenario: Scenario):
    """availability(t, device) -> network ids, replaying set_networks events."""
    base: List[tuple] = []
    group_of: List[str] = []
    for g in scenario.device_groups:
        nets = tuple(g.networks) if g.networks is not None else tuple(n.id for n in scenario.networks)
        base += [nets] * g.count
        group_of += [g.name] * g.count
    moves = sorted((e for e in scenario.events if e.action == "set_networks"), key=lambda e: e.at_slot)

    def availability(t: int, d: int):
        nets = base[d]
        for e in moves:
            if e.at_slot <= t and e.group == group_of[d]:
                nets = e.networks
        return nets
    return availability


def run_metrics(run: RunResult, scenario: Scenario) -> Dict[str, object]:
    static = not scenario.events and all(g.active for g in scenario.device_groups) and _homogeneous(scenario)
    row: Dict[str, object] = {
        "scenario": scenario.name,
        "policy": "+".join(dict.fromkeys(run.policies)),
        "seed": run.seed,
        "median_download_bytes": run.median_download(),
        "mean_download_bytes": float(run.download_bytes.mean()),
        "fairness_stddev_bytes": M.fairness_stddev(run.download_bytes) if run.n_devices > 1 else 0.0,
        "median_switches": float(np.median(run.switches)),
        "total_switches": int(run.switches.sum()),
        "total_resets": int(run.resets.sum()),
        "stable_slot": M.detect_stable_state(run.probs),
    }
    dist = M.distance_series(run, availability=None if _homogeneous(scenario) else _availability(scenario))
    row["mean_distance_to_ne"] = float(dist.mean())
    if static:
        ne = M.enumerate_nash(run.bandwidth[0], run.n_devices)
        row["stable_at_ne"] = M.stable_at_ne(run.probs, ne)
        row.update(M.time_at_ne(run.allocation, ne, scenario.epsilon))
    else:
        row["stable_at_ne"] = None
        row["fraction_at_ne"] = float(np.mean(dist == 0.0))
        row["fraction_at_eps"] = float(np.mean(dist <= scenario.epsilon))
    row["unutilized_bytes"] = M.unutilized_resources(run)
    row["_distance"] = dist
    return row


def _write_dat(path: Path, xs, ys) -> None:
    with path.open("w") as fh:
        for x, y in zip(xs, ys):
            fh.write(f"{x} {float(y):.6f}\n")


def _write_gnuplot(path: Path, series: Dict[str, str], title: str, ylabel: str) -> None:
    lines = [
        "set terminal pngcairo size 900,500",
        f"set output '{path.stem}.png'",
        f"set title '{title}'",
        "set xlabel 'time slot'",
        f"set ylabel '{ylabel}'",
        "set key outside",
    ]
    plots = [f"'{dat}' using 1:2 with lines title '{label}'" for label, dat in series.items()]
    lines.append("plot " + ", \\\n     ".join(plots))
    path.write_text("\n".join(lines) + "\n")


def cmd_run(scenario_arg: str, out_dir: Path, seeds: Optional[int] = None, parallelism: int = 1,
            policies: Optional[List[str]] = None) -> Dict[str, List[Dict[str, object]]]:
    scenario = resolve_scenario(scenario_arg)
    seed_list = list(range(seeds)) if seeds is not None else (scenario.seeds or [0])
    variants = [(p, scenario.with_policy(p)) for p in policies] if policies else \
        [("+".join(dict.fromkeys(g.policy for g in scenario.device_groups)), scenario)]
    base = out_dir / scenario.name
    base.mkdir(parents=True, exist_ok=True)
    bundle: Dict[str, List[Dict[str, object]]] = {}
    dat_files: Dict[str, str] = {}
    summary_rows = []
    for label, sc in variants:
        runs = run_batch(sc, seed_list, parallelism)
        pdir = base / label
        pdir.mkdir(exist_ok=True)
        rows = []
        for r in runs:
            with (pdir / f"run_{r.seed}.csv").open("w", newline="") as fh:
                r.write_csv(fh)
            rows.append(run_metrics(r, sc))
        mean_dist = np.mean([row.pop("_distance") for row in rows], axis=0)
        _write_dat(pdir / "distance_to_ne.dat", range(1, len(mean_dist) + 1), mean_dist)
        dat_files[label] = f"{label}/distance_to_ne.dat"
        summary_rows += rows
        bundle[label] = rows
        med_sw = float(np.median([row["median_switches"] for row in rows]))
        med_dl = float(np.mean([row["median_download_bytes"] for row in rows])) / GB
        print(f"{scenario.name} {label}: runs={len(rows)} median switches={med_sw:g} "
              f"mean per-run median download={med_dl:.3f} GB")
    with (base / "summary.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for row in summary_rows:
            w.writerow([_fmt(row[k]) for k in SUMMARY_FIELDS])
    _write_gnuplot(base / "distance_to_ne.gp", dat_files, f"{scenario.name}: distance to equilibrium",
                   "distance to NE (%)")
    return bundle


def cmd_trace(trace_csv: str, policy: str, seeds: int = 1, out_dir: Optional[Path] = None) -> List[Dict[str, float]]:
    trace = load_trace_csv(trace_csv)
    sc = trace_scenario(trace, policy, name=Path(trace_csv).stem)
    runs = run_batch(sc, list(range(seeds)))
    rows = []
    for r in runs:
        full = float(r.bitrate[:, 0].sum()) * r.slot_seconds * MEGABIT_BYTES
        rows.append({"seed": r.seed, "download_mb": r.download_bytes[0] / MB,
                     "switching_cost_mb": (full - r.download_bytes[0]) / MB,
                     "switches": int(r.switches[0])})
    if out_dir is not None:
        pdir = Path(out_dir) / sc.name / policy
        pdir.mkdir(parents=True, exist_ok=True)
        for r in runs:
            with (pdir / f"run_{r.seed}.csv").open("w", newline="") as fh:
                r.write_csv(fh)
        with (pdir / "summary.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["seed", "download_mb", "switching_cost_mb", "switches"])
            for row in rows:
                w.writerow([_fmt(row[k]) for k in ("seed", "download_mb", "switching_cost_mb", "switches")])
        cum = np.cumsum(runs[0].bitrate[:, 0] * (runs[0].slot_seconds - runs[0].delay[:, 0]) * MEGABIT_BYTES) / MB
        _write_dat(pdir / "cumulative_download.dat", range(1, len(cum) + 1), cum)
        _write_gnuplot(pdir / "cumulative_download.gp", {policy: "cumulative_download.dat"},
                       f"{sc.name}: cumulative download", "MB")
    dl = float(np.median([row["download_mb"] for row in rows]))
    cost = float(np.median([row["switching_cost_mb"] for row in rows]))
    print(f"{sc.name} {policy}: median cumulative download {dl:.1f} MB, switching cost {cost:.1f} MB "
          f"over {len(trace)} slots and {len(rows)} seed(s)")
    return rows


def cmd_ne(bandwidths: List[float], n: int) -> List[M.NashAllocation]:
    nes = M.enumerate_nash(bandwidths, n)
    for ne in nes:
        print("(" + ",".join(str(c) for c in ne.counts) + ")" + ("" if ne.exhaustive else "  [water-filling only]"))
    return nes


def cmd_bounds(k: int, beta: float, t_d: float, tau: float, T: float, gamma: float = 1.0, l: float = 1.0,
               mu_d: float = 0.0, mu_g: float = 0.0, G_max_tau: float = 0.0) -> Dict[str, float]:
    inp = B.BoundInputs(k=k, beta=beta, t_d=t_d, tau=tau, T=T, gamma=gamma, l=l, mu_d=mu_d, mu_g=mu_g,
                        G_max_tau=G_max_tau)
    out = {"switch_bound": B.switch_bound(inp), "regret_bound": B.regret_bound(inp)}
    print(f"switch_bound {out['switch_bound']:.6f}")
    print(f"regret_bound {out['regret_bound']:.6f}")
    return out


def cmd_check_bounds(scenario_arg: str, beta: float = 0.1, seeds: Optional[int] = None) -> bool:
    """Dominance of measured switches and regret by the bounds, one line per run."""
    scenario = resolve_scenario(scenario_arg)
    seed_list = list(range(seeds)) if seeds is not None else (scenario.seeds or [0])
    all_ok = True
    for run in run_batch(scenario, seed_list):
        checks = B.check_dominance(run, scenario, beta)
        ok = all(c.ok for c in checks)
        all_ok &= ok
        worst_sw = max(c.switches / c.switch_bound for c in checks)
        worst_rg = max(c.regret_bytes / c.regret_bound_bytes for c in checks)
        print(f"seed {run.seed}: {'PASS' if ok else 'FAIL'} max switches/bound={worst_sw:.3f} "
              f"max regret/bound={worst_rg:.3f}")
    return all_ok


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="netselect", description="Smart EXP3 network selection simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario file or preset over many seeds")
    r.add_argument("scenario", help="scenario file, or preset name (setting1, dynamic2, ...)")
    r.add_argument("--out", default=None, help="output directory (default $NETSELECT_OUT or ./netselect-out)")
    r.add_argument("--seeds", type=int, default=None, help="number of seeds 0..N-1 (default: from the scenario)")
    r.add_argument("--par", type=int, default=1, help="worker processes")
    r.add_argument("--policy", action="append", choices=POLICY_NAMES,
                   help="force this policy on every device; repeat to compare several")

    t = sub.add_parser("trace", help="replay a wifi/cellular trace for one device")
    t.add_argument("csv")
    t.add_argument("--policy", default="smart_exp3", choices=POLICY_NAMES)
    t.add_argument("--seeds", type=int, default=1)
    t.add_argument("--out", default=None)

    n = sub.add_parser("ne", help="list pure Nash equilibria of equal-share networks")
    n.add_argument("bandwidths", help="comma separated Mbps, e.g. 4,7,22")
    n.add_argument("n", type=int)

    b = sub.add_parser("bounds", help="evaluate the switch and regret bounds")
    b.add_argument("--k", type=int, required=True)
    b.add_argument("--beta", type=float, required=True)
    b.add_argument("--td", type=float, default=1.0, help="slot seconds")
    b.add_argument("--T", type=float, default=1200.0, help="horizon seconds")
    b.add_argument("--tau", type=float, default=None, help="reset period seconds (default T)")
    b.add_argument("--gamma", type=float, default=1.0)
    b.add_argument("--l", type=float, default=1.0, help="largest block length")
    b.add_argument("--mu-d", type=float, default=0.0, help="mean delay seconds")
    b.add_argument("--mu-g", type=float, default=0.0, help="mean scaled gain")
    b.add_argument("--gmax", type=float, default=0.0, help="best-in-hindsight gain over one reset period")
    b.add_argument("--check", metavar="SCENARIO", default=None,
                   help="also run a scenario and check every run against the bounds with measured inputs")
    b.add_argument("--seeds", type=int, default=None, help="seeds for --check (default: from the scenario)")
    return p


def _out_dir(arg: Optional[str]) -> Path:
    return Path(arg or os.environ.get("NETSELECT_OUT") or DEFAULT_OUT)


def main(argv: Optional[List[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            if args.seeds is not None and args.seeds < 1:
                raise ConfigurationError("--seeds must be at least 1")
            cmd_run(args.scenario, _out_dir(args.out), args.seeds, max(args.par, 1), args.policy)
        elif args.command == "trace":
            cmd_trace(args.csv, args.policy, args.seeds, _out_dir(args.out) if args.out or os.environ.get("NETSELECT_OUT") else None)
        elif args.command == "ne":
            try:
                bws = [float(x) for x in args.bandwidths.split(",") if x.strip()]
            except ValueError:
                raise ConfigurationError(f"bandwidths must be comma separated numbers, got {args.bandwidths!r}") from None
            cmd_ne(bws, args.n)
        else:
            cmd_bounds(args.k, args.beta, args.td, args.tau if args.tau is not None else args.T, args.T,
                       args.gamma, args.l, args.mu_d, args.mu_g, args.gmax)
            if args.check:
                if not cmd_check_bounds(args.check, args.beta, args.seeds):
                    return 1
    except (ConfigurationError, InvalidInputError, FileNotFoundError) as exc:
        print(f"netselect: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"netselect: runtime failure: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
