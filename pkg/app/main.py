#!/usr/bin/env python3
"""
Command-line surface of the BSC QoE toolkit.

    python -m app.main analyze --lambda 0.95 -N 1000 -x 40 --phi 50
    python -m app.main simulate --runs 4000 --sweep N=200:1500:100 --format csv --out curve.csv

Exit codes: 0 success, 2 configuration error, 3 regime error, 4 budget error.
"""

import argparse
import json
import logging
import math
import sys
from typing import Any, Dict, List, Optional, Sequence, Tuple

from pydantic import ValidationError

from app.ballot_analysis import pgf_evaluate, starvation_count_pmf, starvation_prob
from app.config import Config
from app.des_simulator import replicate, simulate_session, write_trace_csv
from app.models import (
    ArrivalKind,
    BudgetError,
    ConfigError,
    OutputFormat,
    RegimeError,
    RunConfig,
    SessionParams,
)
from app.path_oracle import enumerate_paths
from app.qoe_planner import (
    LadderPlan,
    baseline_starvation_prob,
    compare_ladder,
    dash_selection,
    rebuffering_delay,
    select_offset,
)
from app.quality_markov import busy_period_stats, quality_times
from app.reporting import write_output
from app.stream_model import event_probs

logger = logging.getLogger("app.main")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_REGIME = 3
EXIT_BUDGET = 4

# sweep field -> (config path, integer valued)
SWEEP_FIELDS: Dict[str, Tuple[Tuple[str, ...], bool]] = {
    "N": (("session", "file_size_N"), True),
    "file_size_N": (("session", "file_size_N"), True),
    "x": (("session", "startup_x"), True),
    "startup_x": (("session", "startup_x"), True),
    "phi": (("session", "offset_phi"), True),
    "offset_phi": (("session", "offset_phi"), True),
    "lambda": (("session", "lambda"), False),
    "mu": (("session", "mu"), False),
    "rho": (("session", "rho"), False),
    "throughput": (("throughput_kbps",), False),
    "throughput_kbps": (("throughput_kbps",), False),
}


def parse_sweep(text: str) -> Tuple[str, List[float]]:
    """FIELD=START:STOP:STEP with STOP included when it lies on the grid."""
    try:
        name, bounds = text.split("=", 1)
        start, stop, step = (float(part) for part in bounds.split(":"))
    except ValueError:
        raise ConfigError(f"sweep: expected FIELD=START:STOP:STEP, got {text!r}")
    name = name.strip()
    if name not in SWEEP_FIELDS:
        raise ConfigError(f"sweep: unknown field {name!r}; choose from {', '.join(sorted(SWEEP_FIELDS))}")
    if step <= 0 or stop < start:
        raise ConfigError(f"sweep: need STEP > 0 and STOP >= START, got {bounds!r}")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    values = [start + i * step for i in range(count)]
    if SWEEP_FIELDS[name][1]:
        values = [int(round(v)) for v in values]
    return name, values


def parse_ladder(text: str) -> List[Dict]:
    """'240p:400,360p:750' or with weights '240p:400:0.1,...'."""
    levels = []
    for item in filter(None, (part.strip() for part in text.split(","))):
        parts = item.split(":")
        if len(parts) not in (2, 3):
            raise ConfigError(f"ladder: expected LABEL:KBPS[:WEIGHT], got {item!r}")
        level = {"label": parts[0], "bitrate_kbps": float(parts[1])}
        if len(parts) == 3:
            level["weight"] = float(parts[2])
        levels.append(level)
    return levels


def _merge(base: Dict, update: Dict) -> Dict:
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _format_validation_error(error: ValidationError) -> str:
    problems = []
    for item in error.errors():
        where = ".".join(str(part) for part in item["loc"]) or "config"
        problems.append(f"{where}: {item['msg']}")
    return "; ".join(problems)


def _flag_overrides(args: argparse.Namespace) -> Dict:
    """Translate parsed flags into the RunConfig layout; unset flags are left out."""
    session = {
        "lambda": args.lam,
        "mu": args.mu,
        "file_size_N": args.file_size,
        "startup_x": args.startup_x,
        "offset_phi": args.phi,
    }
    top = {
        "out": args.out,
        "output_format": args.format,
        "seed": args.seed,
        "runs": args.runs,
        "workers": args.workers,
        "sweep": args.sweep,
        "phi_bound": args.phi_bound,
        "j_max": args.j_max,
        "eps_trunc": args.eps_trunc,
    }
    command_flags = {
        "baseline": getattr(args, "baseline", None),
        "pgf_points": getattr(args, "pgf_points", None),
        "b_low_kbps": getattr(args, "b_low", None),
        "b_high_kbps": getattr(args, "b_high", None),
        "arrival_kind": getattr(args, "arrivals", None),
        "trace_out": getattr(args, "trace_out", None),
        "throughput_kbps": getattr(args, "throughput", None),
        "frame_rate": getattr(args, "frame_rate", None),
        "pair_conversion": getattr(args, "conversion", None),
        "svc_overhead": getattr(args, "svc_overhead", None),
        "weighting": getattr(args, "weighting", None),
        "quality_mode": getattr(args, "quality_mode", None),
        "rational": getattr(args, "rational", None),
        "risk_threshold": getattr(args, "risk", None),
    }
    top.update(command_flags)
    overrides: Dict[str, Any] = {k: v for k, v in top.items() if v is not None}
    session = {k: v for k, v in session.items() if v is not None}
    if session:
        overrides["session"] = session
    weights = {
        name: getattr(args, name, None) for name in ("gamma1", "gamma2", "gamma3")
        if getattr(args, name, None) is not None
    }
    if weights:
        overrides["weights"] = weights
    if getattr(args, "ladder", None):
        overrides["ladder"] = {"levels": parse_ladder(args.ladder)}
    return overrides


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the JSON config file, then flags; flags win."""
    document: Dict = {"session": RunConfig(command=args.command).session.model_dump(by_alias=True)}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as f:
                from_file = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"config: cannot read {args.config}: {e}")
        if not isinstance(from_file, dict):
            raise ConfigError(f"config: {args.config} must hold a JSON object")
        document = _merge(document, from_file)
    document = _merge(document, _flag_overrides(args))
    document["command"] = args.command
    try:
        run_config = RunConfig.model_validate(document)
    except ValidationError as e:
        raise ConfigError(_format_validation_error(e))
    if run_config.sweep:
        parse_sweep(run_config.sweep)
    return run_config


def session_points(run_config: RunConfig) -> List[Tuple[SessionParams, float]]:
    """(session, throughput) for every sweep point, in sweep order."""
    if not run_config.sweep:
        return [(run_config.session, run_config.throughput_kbps)]
    name, values = parse_sweep(run_config.sweep)
    path, _ = SWEEP_FIELDS[name]
    points = []
    for value in values:
        session, throughput = run_config.session, run_config.throughput_kbps
        try:
            if path == ("throughput_kbps",):
                throughput = float(value)
            elif path[1] == "rho":
                session = session.with_changes(lam=value * session.mu)
            elif path[1] == "lambda":
                session = session.with_changes(lam=value)
            else:
                session = session.with_changes(**{path[1]: value})
        except ValidationError as e:
            raise ConfigError(f"sweep {name}={value}: {_format_validation_error(e)}")
        points.append((session, throughput))
    return points


def _session_columns(params: SessionParams) -> Dict:
    return {
        "N": params.file_size_N,
        "lambda": params.lam,
        "mu": params.mu,
        "rho": params.rho,
        "x": params.startup_x,
        "phi": params.offset_phi,
    }


def cmd_analyze(run_config: RunConfig) -> int:
    points = session_points(run_config)
    logger.info(f"analyze: {len(points)} point(s)")
    rows = []
    for params, _ in points:
        pmf = starvation_count_pmf(params, run_config.j_max, run_config.eps_trunc, run_config.phi_bound)
        row = _session_columns(params)
        row["P_starv"] = starvation_prob(params, run_config.phi_bound)
        if run_config.baseline:
            p, q = event_probs(params)
            row["P_baseline"] = baseline_starvation_prob(params.file_size_N, params.startup_x, p, q)
        row["E_starvations"] = pmf.expected_count()
        row["Var_starvations"] = pmf.variance()
        row["J"] = pmf.truncation_J
        for j in range(run_config.j_max + 1):
            row[f"P_s{j}"] = float(pmf.probs[j]) if j < len(pmf) else 0.0
        for z in run_config.pgf_points:
            row[f"G({z:g})"] = pgf_evaluate(pmf, z)
        rows.append(row)
    columns = ["N", "lambda", "mu", "rho", "x", "phi", "P_starv"]
    if run_config.baseline:
        columns.append("P_baseline")
    columns += ["E_starvations", "Var_starvations", "J"]
    columns += [f"P_s{j}" for j in range(run_config.j_max + 1)]
    columns += [f"G({z:g})" for z in run_config.pgf_points]
    write_output(run_config, columns, rows)
    return EXIT_OK


def cmd_quality(run_config: RunConfig) -> int:
    rows = []
    for params, _ in session_points(run_config):
        times = quality_times(
            params.startup_x, params.offset_phi, params.lam, params.mu,
            run_config.b_low_kbps, run_config.b_high_kbps,
        )
        busy = busy_period_stats(params.lam, params.mu)
        row = _session_columns(params)
        row.update({
            "b_low": run_config.b_low_kbps,
            "b_high": run_config.b_high_kbps,
            "T_low": times.T_low,
            "T_high": times.T_high,
            "low_fraction": times.low_fraction,
            "b_avg": times.b_avg,
            "E_tau": times.E_tau,
            "busy_mean": busy.mean,
            "busy_variance": busy.variance,
        })
        rows.append(row)
    columns = ["N", "lambda", "mu", "rho", "x", "phi", "b_low", "b_high", "T_low", "T_high",
               "low_fraction", "b_avg", "E_tau", "busy_mean", "busy_variance"]
    write_output(run_config, columns, rows)
    return EXIT_OK


def _simulate_row(label: str, params: SessionParams, run_config: RunConfig, analytic: bool) -> Dict:
    process = run_config.arrival_process(params.lam)
    stats = replicate(params, process, run_config.runs, run_config.seed, run_config.workers)
    row = {"config": label, "arrivals": process.kind.value, "runs": stats.runs}
    row.update(_session_columns(params))
    row["arrival_rate"] = process.mean_rate
    estimates = {
        "P_starv": stats.starvation_prob_hat,
        "P0": stats.pmf_hat[0] if stats.pmf_hat else None,
        "P_ge2": stats.at_least(2),
        "E_starvations": stats.mean_starvations,
        "quality_fraction": stats.mean_quality_fraction,
        "rebuffer_time": stats.mean_rebuffer_time,
        "initial_delay": stats.mean_initial_delay,
    }
    for name, estimate in estimates.items():
        row[f"{name}_hat"] = estimate.value
        row[f"{name}_se"] = estimate.stderr
    if analytic:
        pmf = starvation_count_pmf(params, run_config.j_max, run_config.eps_trunc, run_config.phi_bound)
        row["P_starv_analytic"] = starvation_prob(params, run_config.phi_bound)
        row["P0_analytic"] = float(pmf.probs[0])
        row["P_ge2_analytic"] = pmf.at_least(2)
        row["E_starvations_analytic"] = pmf.expected_count()
    return row


def cmd_simulate(run_config: RunConfig) -> int:
    notes = []
    process = run_config.arrival_process(run_config.session.lam)
    analytic = process.kind == ArrivalKind.POISSON
    if process.assumed_shape:
        logger.warning(f"{process.kind.value} arrivals use assumed default shape parameters")
        notes.append(f"{process.kind.value} arrival shape parameters are assumed experiment defaults")
    if not analytic:
        notes.append("analytic columns omitted: closed forms assume Poisson arrivals")
    if run_config.arrivals is not None and (
        run_config.sweep or not math.isclose(run_config.arrivals.mean_rate, run_config.session.lam, rel_tol=1e-12)
    ):
        logger.info("Explicit arrival process rescaled to the lambda of each session point")
        notes.append("explicit arrival process keeps its shape and is rescaled to each row's lambda")
    if run_config.baseline:
        notes.append("no_bsc and phi_1 rows share one frame model (phi = 1) and therefore agree")

    rows = []
    for params, _ in session_points(run_config):
        rows.append(_simulate_row("bsc", params, run_config, analytic))
        if run_config.baseline:
            plain = params.with_changes(offset_phi=1)
            rows.append(_simulate_row("no_bsc", plain, run_config, analytic))
            rows.append(_simulate_row("phi_1", plain, run_config, analytic))

    if run_config.trace_out:
        trace = simulate_session(run_config.session, process, run_config.seed)
        write_trace_csv(trace, run_config.trace_out)
        logger.info(f"Wrote trace of {len(trace.records)} events to {run_config.trace_out}")

    columns = ["config", "arrivals", "runs", "N", "lambda", "mu", "rho", "x", "phi", "arrival_rate"]
    for name in ("P_starv", "P0", "P_ge2", "E_starvations", "quality_fraction", "rebuffer_time", "initial_delay"):
        columns += [f"{name}_hat", f"{name}_se"]
    if analytic:
        columns += ["P_starv_analytic", "P0_analytic", "P_ge2_analytic", "E_starvations_analytic"]
    write_output(run_config, columns, rows, notes=notes)
    return EXIT_OK


def cmd_compare(run_config: RunConfig) -> int:
    rows = []
    notes = []
    for params, throughput in session_points(run_config):
        plan = LadderPlan(
            file_size_N=params.file_size_N,
            startup_x=params.startup_x,
            offset_phi=params.offset_phi,
            weights=run_config.weights,
            frame_rate=run_config.frame_rate,
            conversion=run_config.pair_conversion,
            svc_overhead=run_config.svc_overhead,
            weighting=run_config.weighting,
            quality_mode=run_config.quality_mode,
            phi_bound=run_config.phi_bound,
            j_max=run_config.j_max,
            eps_trunc=run_config.eps_trunc,
            seed=run_config.seed,
        )
        ranked = compare_ladder(run_config.ladder, throughput, plan)
        selected = dash_selection(run_config.ladder, throughput)
        notes.append(f"throughput {throughput:g} Kbps: rate-based DASH selects {selected.label}")
        for config in ranked:
            row = {"throughput": throughput, "N": params.file_size_N}
            row.update(config.to_row())
            rows.append(row)
    columns = ["throughput", "N", "rank", "label", "kind", "b_low", "b_high", "phi", "lambda", "rho",
               "initial_delay", "rebuffer_delay", "starvation_prob", "expected_starvations",
               "low_fraction", "quality_term", "quality_source", "cost"]
    write_output(run_config, columns, rows, notes=notes)
    return EXIT_OK


def cmd_oracle(run_config: RunConfig) -> int:
    params = run_config.session
    result = enumerate_paths(params)
    data = result.to_dict(rational=run_config.rational)
    fmt = str if run_config.rational else float
    rows = [{"j": j, "probability": fmt(prob)} for j, prob in enumerate(result.pmf_list())]
    write_output(run_config, ["j", "probability"], rows, data=data)
    return EXIT_OK


def cmd_offset(run_config: RunConfig) -> int:
    rows = []
    for params, _ in session_points(run_config):
        phi = select_offset(
            params.file_size_N, params.startup_x, params.rho,
            run_config.risk_threshold, params.mu, run_config.phi_bound,
        )
        chosen = params.with_changes(offset_phi=phi)
        row = _session_columns(chosen)
        row.update({
            "risk_threshold": run_config.risk_threshold,
            "P_starv": starvation_prob(chosen, run_config.phi_bound),
            "rebuffer_delay": rebuffering_delay(chosen.startup_x, phi, chosen.lam),
        })
        rows.append(row)
    columns = ["N", "lambda", "mu", "rho", "x", "phi", "risk_threshold", "P_starv", "rebuffer_delay"]
    write_output(run_config, columns, rows)
    return EXIT_OK


HANDLERS = {
    "analyze": cmd_analyze,
    "quality": cmd_quality,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "oracle": cmd_oracle,
    "offset": cmd_offset,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration; flags override it")
    common.add_argument("--out", help="Output path (default: stdout)")
    common.add_argument("--format", choices=[f.value for f in OutputFormat])
    common.add_argument("--seed", type=int)
    common.add_argument("--runs", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--sweep", help="FIELD=START:STOP:STEP, STOP inclusive")
    common.add_argument("--phi-bound", choices=["display", "proof"])
    common.add_argument("--log-level", default=Config.LOG_LEVEL)
    common.add_argument("--lambda", dest="lam", type=float, help="Frame arrival rate")
    common.add_argument("--mu", type=float, help="Frame playback rate")
    common.add_argument("-N", "--file-size", dest="file_size", type=int, help="Frames in the file")
    common.add_argument("-x", "--startup-x", dest="startup_x", type=int, help="Prefetch threshold")
    common.add_argument("--phi", type=int, help="BSC offset")
    common.add_argument("--j-max", type=int)
    common.add_argument("--eps-trunc", type=float)

    parser = argparse.ArgumentParser(prog="bsc-qoe", description="BSC video streaming QoE analysis and simulation")
    sub = parser.add_subparsers(dest="command", required=True)

    analyze = sub.add_parser("analyze", parents=[common], help="Starvation probability and count distribution")
    analyze.add_argument("--baseline", action="store_true", default=None, help="Add the no-BSC column")
    analyze.add_argument("--pgf-points", type=float, nargs="+")

    quality = sub.add_parser("quality", parents=[common], help="Time in each quality level")
    quality.add_argument("--b-low", type=float)
    quality.add_argument("--b-high", type=float)

    simulate = sub.add_parser("simulate", parents=[common], help="Monte Carlo replication")
    simulate.add_argument("--arrivals", choices=[k.value for k in ArrivalKind])
    simulate.add_argument("--baselines", dest="baseline", action="store_true", default=None,
                          help="Add no_bsc and phi_1 rows")
    simulate.add_argument("--trace-out", help="Write the event trace of one session as CSV")

    compare = sub.add_parser("compare", parents=[common], help="DASH vs BSC ladder ranking")
    compare.add_argument("--throughput", type=float)
    compare.add_argument("--frame-rate", type=float)
    compare.add_argument("--conversion", choices=["aggregate", "layered"])
    compare.add_argument("--svc-overhead", action="store_true", default=None)
    compare.add_argument("--weighting", choices=["kbps", "proportional"])
    compare.add_argument("--quality-mode", choices=["fraction", "absolute"])
    compare.add_argument("--ladder", help="LABEL:KBPS[:WEIGHT],...")
    for name in ("gamma1", "gamma2", "gamma3"):
        compare.add_argument(f"--{name}", type=float)

    oracle = sub.add_parser("oracle", parents=[common], help="Exact small-N enumeration")
    oracle.add_argument("--rational", action="store_true", default=None)

    offset = sub.add_parser("offset", parents=[common], help="Largest offset within a starvation risk")
    offset.add_argument("--risk", type=float)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK

    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format='%(asctime)s - %(levelname)s - %(message)s',
    )
    try:
        Config.validate_config()
        run_config = build_run_config(args)
        logger.info(f"Starting {run_config.command}")
        code = HANDLERS[run_config.command](run_config)
        logger.info(f"Finished {run_config.command}")
        return code
    except (ConfigError, ValidationError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except RegimeError as e:
        logger.error(f"Regime error: {e}")
        return EXIT_REGIME
    except BudgetError as e:
        logger.error(f"Budget exceeded: {e}")
        return EXIT_BUDGET
    except ValueError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
