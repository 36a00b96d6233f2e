"""Command-line front end.

Subcommands: threshold, plr-curve, optimize, sim-mac, sim-phy, tables.
Configuration comes from defaults, an optional JSON config file, then
explicit flags, in that order.  Artifacts embed the resolved config in
a header line; report-path commands also render a figure next to the
CSV unless --no-plot is given.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import report
from .de_core import DeConfig, plr_curve, threshold
from .degree_dist import parse_distribution
from .errors import IrsaError
from .mac_sim import PeelMode, run_campaign
from .opt import OptConfig, optimize
from .params import SystemParams
from .phy_sim import DecodeCriterion, SicMode, run_phy_campaign
from .slot_models import Collision, OrthogonalResources, RealisticPhy

TABLE1_DISTRIBUTIONS = (
    "x^2",
    "x^3",
    "x^4",
    "x^5",
    "0.55*x^2+0.26*x^3+0.19*x^6",
    "0.50*x^2+0.50*x^3",
    "0.51*x^2+0.27*x^3+0.22*x^8",
    "0.55*x^2+0.16*x^3+0.29*x^6",
)
TABLE2_ANTENNAS = (8, 16, 32, 64, 128, 256)

_SYSTEM_FLAGS = {
    "antennas": int,
    "pilots": int,
    "payload_symbols": int,
    "correction_capability": int,
    "latency_budget": float,
    "symbol_rate": float,
    "n_slots": int,
    "noise_variance": float,
}
_DE_FLAGS = {"max_iterations": int, "convergence_plr": float}


def _parse_loads(text: str) -> list[float]:
    """Either "lo:hi:step" (inclusive of hi up to rounding) or "a,b,c"."""
    if ":" in text:
        lo, hi, step = (float(x) for x in text.split(":"))
        if step <= 0:
            raise ValueError("load step must be positive")
        out = []
        value = lo
        while value <= hi + 1e-9:
            out.append(round(value, 12))
            value += step
        return out
    return [float(x) for x in text.split(",")]


def _parse_degrees(text: str) -> list[int]:
    """Either "2-8" or "2,3,6"."""
    if "-" in text:
        lo, hi = (int(x) for x in text.split("-"))
        return list(range(lo, hi + 1))
    return [int(x) for x in text.split(",")]


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--jobs", type=int, default=None, help="worker processes")
    parser.add_argument("--out", help="output artifact path")
    parser.add_argument("--no-plot", action="store_true", help="skip figure rendering")
    for name, typ in _SYSTEM_FLAGS.items():
        parser.add_argument(f"--{name.replace('_', '-')}", type=typ, default=None)
    for name, typ in _DE_FLAGS.items():
        parser.add_argument(f"--{name.replace('_', '-')}", type=typ, default=None)


def _resolve(args: argparse.Namespace, required: dict, optional: dict | None = None) -> dict:
    """Merge defaults, config file, and flags into one resolved dict.

    `required` maps keys to flag values that must come from a flag or the
    config file; `optional` maps keys to (flag value, default).
    """
    config: dict = {}
    if args.config:
        config = json.loads(Path(args.config).read_text(encoding="utf-8"))
    system = dict(config.get("system", {}))
    for name in _SYSTEM_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            system[name] = value
    de = dict(config.get("de", {}))
    for name in _DE_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            de[name] = value
    resolved = {
        "command": args.command,
        "system": SystemParams.from_dict(system).to_dict(),
        "de": {**{"max_iterations": 5000, "convergence_plr": 1e-4}, **de},
        "seed": args.seed if args.seed is not None else config.get("seed", 1),
        "jobs": args.jobs if args.jobs is not None else config.get("jobs", 1),
    }
    for key, value in required.items():
        flag = value if value is not None else config.get(key)
        if flag is None:
            raise IrsaError(f"missing required option --{key.replace('_', '-')}")
        resolved[key] = flag
    for key, (value, default) in (optional or {}).items():
        resolved[key] = value if value is not None else config.get(key, default)
    return resolved


def _system(resolved: dict) -> SystemParams:
    return SystemParams.from_dict(resolved["system"])


def _de_config(resolved: dict) -> DeConfig:
    return DeConfig(
        max_iterations=int(resolved["de"]["max_iterations"]),
        convergence_plr=float(resolved["de"]["convergence_plr"]),
    )


def _model(resolved: dict):
    name = resolved["model"]
    system = _system(resolved)
    if name == "collision":
        return Collision()
    if name == "resources":
        return OrthogonalResources(pilots=system.pilots)
    if name == "realistic":
        return RealisticPhy(params=system.phy_failure_params())
    raise IrsaError(f"unknown model {name!r}; pick collision, resources or realistic")


def _emit_json(args, payload: dict, resolved: dict) -> None:
    if args.out:
        report.write_json(args.out, payload, resolved)
        print(args.out)
    else:
        print(json.dumps({"config": resolved, **payload}, indent=2, sort_keys=True))


def _cmd_threshold(args) -> int:
    resolved = _resolve(
        args,
        {"dist": args.dist, "model": args.model},
        {"g_lo": (args.g_lo, 0.01), "g_hi": (args.g_hi, None), "tol": (args.tol, 1e-3)},
    )
    dist = parse_distribution(resolved["dist"])
    result = threshold(
        dist,
        _model(resolved),
        _de_config(resolved),
        g_lo=resolved["g_lo"],
        g_hi=resolved["g_hi"],
        tol=resolved["tol"],
    )
    _emit_json(
        args,
        {
            "g_star": result.g_star,
            "bracket": list(result.bracket),
            "bisection_tol": result.bisection_tol,
            "model": result.model,
            "dist": resolved["dist"],
        },
        resolved,
    )
    return 0


def _cmd_plr_curve(args) -> int:
    resolved = _resolve(args, {"dist": args.dist, "model": args.model, "loads": args.loads})
    dist = parse_distribution(resolved["dist"])
    loads = (
        _parse_loads(resolved["loads"])
        if isinstance(resolved["loads"], str)
        else list(resolved["loads"])
    )
    points = plr_curve(dist, _model(resolved), _de_config(resolved), loads, jobs=resolved["jobs"])
    if args.out:
        report.write_curve_csv(args.out, points, resolved)
        print(args.out)
        if not args.no_plot:
            report.render_curve_figure(
                report.figure_path(args.out), points, title=resolved["dist"]
            )
    else:
        print(report.config_header(resolved))
        print("G,Q_limit")
        for g, q in points:
            print(f"{report.fmt(g)},{report.fmt(q)}")
    return 0


def _cmd_optimize(args) -> int:
    resolved = _resolve(
        args,
        {"model": args.model, "target_mean": args.target_mean, "degrees": args.degrees},
        {
            "population": (args.population, 40),
            "generations": (args.generations, 200),
            "mutation_factor": (args.mutation_factor, 0.5),
            "crossover_rate": (args.crossover_rate, 0.9),
            "threshold_tol": (args.threshold_tol, 5e-3),
        },
    )
    degrees = (
        _parse_degrees(resolved["degrees"])
        if isinstance(resolved["degrees"], str)
        else list(resolved["degrees"])
    )
    cfg = OptConfig(
        target_mean=float(resolved["target_mean"]),
        allowed_degrees=tuple(degrees),
        population=int(resolved["population"]),
        generations=int(resolved["generations"]),
        mutation_factor=float(resolved["mutation_factor"]),
        crossover_rate=float(resolved["crossover_rate"]),
        threshold_tol=float(resolved["threshold_tol"]),
        seed=int(resolved["seed"]),
    )
    result = optimize(_model(resolved), cfg, _de_config(resolved), jobs=resolved["jobs"])
    payload = {
        "best": result.best.to_json_entries(),
        "best_text": str(result.best),
        "g_star": result.g_star,
        "history": result.history,
        "evaluations": result.evaluations,
    }
    _emit_json(args, payload, resolved)
    if args.out and not args.no_plot:
        report.render_history_figure(
            report.figure_path(args.out), result.history, title="optimizer progress"
        )
    return 0


_PEEL_MODES = {mode.value: mode for mode in PeelMode}


def _cmd_sim_mac(args) -> int:
    resolved = _resolve(
        args,
        {"dist": args.dist, "mode": args.mode, "ka": args.ka, "trials": args.trials},
        {
            "poisson_arrivals": (args.poisson, False),
            "residual_interference": (args.residual_n, False),
        },
    )
    system = _system(resolved)
    dist = parse_distribution(resolved["dist"])
    loads = (
        [int(k) for k in _parse_loads(resolved["ka"])]
        if isinstance(resolved["ka"], str)
        else [int(k) for k in resolved["ka"]]
    )
    mode = _PEEL_MODES.get(resolved["mode"])
    if mode is None:
        raise IrsaError(f"unknown peel mode {resolved['mode']!r}")
    stats = run_campaign(
        loads,
        dist,
        mode,
        system.phy_failure_params(),
        int(resolved["trials"]),
        int(resolved["seed"]),
        n_slots=system.n_slots,
        n_pilots=system.pilots,
        jobs=int(resolved["jobs"]),
        poisson_arrivals=resolved["poisson_arrivals"],
        residual_interference=resolved["residual_interference"],
    )
    markers = _threshold_markers(args, resolved, dist, system, mode)
    _emit_simstats(args, stats, resolved, markers)
    return 0


def _cmd_sim_phy(args) -> int:
    resolved = _resolve(
        args,
        {"dist": args.dist, "ka": args.ka, "trials": args.trials},
        {"sic_mode": (args.sic_mode, "re-estimate"), "criterion": (args.criterion, "bits")},
    )
    system = _system(resolved)
    dist = parse_distribution(resolved["dist"])
    loads = (
        [int(k) for k in _parse_loads(resolved["ka"])]
        if isinstance(resolved["ka"], str)
        else [int(k) for k in resolved["ka"]]
    )
    stats, traces = run_phy_campaign(
        loads,
        dist,
        system,
        int(resolved["trials"]),
        int(resolved["seed"]),
        mode=SicMode(resolved["sic_mode"]),
        criterion=DecodeCriterion(resolved["criterion"]),
        jobs=int(resolved["jobs"]),
        keep_trace=args.trace is not None,
    )
    if args.trace:
        Path(args.trace).write_text(
            json.dumps(traces, indent=2) + "\n", encoding="utf-8"
        )
    markers = _threshold_markers(args, resolved, dist, system, PeelMode.STOCHASTIC_PHY)
    _emit_simstats(args, stats, resolved, markers)
    return 0


def _threshold_markers(args, resolved: dict, dist, system, mode):
    """Dashed marker at n_slots * G* for the model matching the campaign."""
    if not getattr(args, "mark_threshold", False) or args.no_plot or not args.out:
        return None
    if mode is PeelMode.IDEAL_COLLISION:
        model = Collision()
    elif mode is PeelMode.IDEAL_RESOURCES:
        model = OrthogonalResources(pilots=system.pilots)
    else:
        model = RealisticPhy(params=system.phy_failure_params())
    g_star = threshold(dist, model, _de_config(resolved)).g_star
    return [(f"G*={g_star:.3f}", system.n_slots * g_star)]


def _emit_simstats(args, stats, resolved: dict, markers=None) -> None:
    if args.out:
        report.write_simstats_csv(args.out, stats, resolved)
        print(args.out)
        if not args.no_plot:
            report.render_plr_figure(
                report.figure_path(args.out),
                stats,
                thresholds=markers,
                title=f"{resolved.get('dist', '')} {resolved['command']}",
            )
    else:
        print(report.config_header(resolved))
        print("K_a,trials,plr,ci_lo,ci_hi,seed")
        for r in stats.rows:
            print(
                ",".join(
                    report.fmt(v)
                    for v in (r.k_a, r.trials, r.plr, r.ci_lo, r.ci_hi, r.seed)
                )
            )


def _cmd_tables(args) -> int:
    resolved = _resolve(args, {"table": args.table}, {"tol": (args.tol, 1e-3)})
    de_cfg = _de_config(resolved)
    system = _system(resolved)
    if int(resolved["table"]) == 1:
        rows = []
        for text in TABLE1_DISTRIBUTIONS:
            dist = parse_distribution(text)
            model = RealisticPhy(params=system.phy_failure_params())
            res = threshold(dist, model, de_cfg, tol=resolved["tol"])
            rows.append((text, dist.mean_degree(), res.g_star))
        columns = ["distribution", "mean_degree", "g_star"]
        figure = None
    elif int(resolved["table"]) == 2:
        rows = []
        for antennas in TABLE2_ANTENNAS:
            params = SystemParams.from_dict({**system.to_dict(), "antennas": antennas})
            model = RealisticPhy(params=params.phy_failure_params())
            res = threshold(parse_distribution("x^3"), model, de_cfg, tol=resolved["tol"])
            rows.append((antennas, res.g_star, res.g_star / antennas))
        columns = ["antennas", "g_star", "g_star_per_antenna"]
        figure = report.render_table2_figure
    else:
        raise IrsaError("table must be 1 or 2")
    if args.out:
        report.write_table_csv(args.out, columns, rows, resolved)
        print(args.out)
        if figure is not None and not args.no_plot:
            figure(report.figure_path(args.out), rows, title="threshold vs antennas")
    else:
        print(report.config_header(resolved))
        print(",".join(columns))
        for row in rows:
            print(",".join(report.fmt(v) for v in row))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="irsa",
        description="Density evolution analysis, optimization and simulation "
        "for repetition-based random access",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("threshold", help="bisect the load threshold of a distribution")
    p.add_argument("--dist", help='distribution text, e.g. "0.5*x^2+0.5*x^3"')
    p.add_argument("--model", help="collision | resources | realistic")
    p.add_argument("--g-lo", type=float, default=None, dest="g_lo")
    p.add_argument("--g-hi", type=float, default=None, dest="g_hi")
    p.add_argument("--tol", type=float, default=None)
    _add_common(p)
    p.set_defaults(handler=_cmd_threshold)

    p = sub.add_parser("plr-curve", help="limiting packet loss over a load sweep")
    p.add_argument("--dist")
    p.add_argument("--model")
    p.add_argument("--loads", help='"lo:hi:step" or comma list')
    _add_common(p)
    p.set_defaults(handler=_cmd_plr_curve)

    p = sub.add_parser("optimize", help="search the best distribution for a model")
    p.add_argument("--model")
    p.add_argument("--target-mean", type=float, dest="target_mean")
    p.add_argument("--degrees", help='"2-8" or "2,3,6"')
    p.add_argument("--population", type=int, default=None)
    p.add_argument("--generations", type=int, default=None)
    p.add_argument("--mutation-factor", type=float, default=None, dest="mutation_factor")
    p.add_argument("--crossover-rate", type=float, default=None, dest="crossover_rate")
    p.add_argument("--threshold-tol", type=float, default=None, dest="threshold_tol")
    _add_common(p)
    p.set_defaults(handler=_cmd_optimize)

    p = sub.add_parser("sim-mac", help="graph-level Monte Carlo campaign")
    p.add_argument("--dist")
    p.add_argument("--mode", help="ideal-collision | ideal-resources | stochastic-phy")
    p.add_argument("--ka", help='user counts, "lo:hi:step" or comma list')
    p.add_argument("--trials", type=int)
    p.add_argument(
        "--poisson",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="Poisson user arrivals",
    )
    p.add_argument(
        "--residual-n",
        action=argparse.BooleanOptionalAction,
        default=None,
        dest="residual_n",
        help="recompute interference from residual occupancy",
    )
    p.add_argument(
        "--mark-threshold",
        action="store_true",
        dest="mark_threshold",
        help="draw the n_slots * G* marker on the figure",
    )
    _add_common(p)
    p.set_defaults(handler=_cmd_sim_mac)

    p = sub.add_parser("sim-phy", help="symbol-level Monte Carlo campaign")
    p.add_argument("--dist")
    p.add_argument("--ka")
    p.add_argument("--trials", type=int)
    p.add_argument("--sic-mode", default=None, dest="sic_mode")
    p.add_argument("--criterion", default=None, help="bits | symbols")
    p.add_argument("--trace", help="write per-frame trace JSON here")
    p.add_argument(
        "--mark-threshold",
        action="store_true",
        dest="mark_threshold",
        help="draw the n_slots * G* marker on the figure",
    )
    _add_common(p)
    p.set_defaults(handler=_cmd_sim_phy)

    p = sub.add_parser("tables", help="reproduce the benchmark threshold tables")
    p.add_argument("--table", type=int)
    p.add_argument("--tol", type=float, default=None)
    _add_common(p)
    p.set_defaults(handler=_cmd_tables)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except IrsaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
