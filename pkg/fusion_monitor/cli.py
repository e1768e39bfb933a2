"""
Command-line entry point

    python main.py run --config scenarios/example.yaml --out results/run1
    python main.py sweep --config ... --param energy.ops_per_bit=1000,3000 --jobs 2
    python main.py ekf --input fixtures/ekf_20.csv --out results/ekf
    python main.py fusvaf --input a.csv --input b.csv --out results/fusvaf
    python main.py consensus --graph fixtures/k3.yaml --out results/consensus
    python main.py validate --config scenarios/example.yaml

Exit codes: 0 success, 2 configuration error, 3 data/numeric/runtime error.
"""

import argparse
import itertools
import logging
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd
import yaml
from pydantic import ValidationError

from fusion_monitor import __version__, settings
from fusion_monitor.core.errors import ConfigError, FusionError
from fusion_monitor.core.models import SensorKind
from fusion_monitor.core.traces import load_trace
from fusion_monitor.filters import consensus as consensus_mod
from fusion_monitor.filters import ekf, fusvaf
from fusion_monitor.sim.config import build_config, load_config, parse_override, read_config_file
from fusion_monitor.sim.report import write_outputs
from fusion_monitor.sim.runner import RunMetrics, simulate

logger = logging.getLogger("fusion_monitor.cli")


# ============ HELPERS ============

def _configure_logging(quiet: bool) -> None:
    level = logging.WARNING if quiet else getattr(logging, settings.LOG_LEVEL, logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        force=True,
    )


def _say(args: argparse.Namespace, text: str) -> None:
    if not args.quiet:
        print(text)


def _database_url(args: argparse.Namespace) -> Optional[str]:
    return getattr(args, "db", None) or settings.DATABASE_URL


def _record(url: Optional[str], runs: Sequence[Tuple[RunMetrics, Any]]) -> None:
    if not url:
        return
    from fusion_monitor.database import record_run, session_scope

    with session_scope(url) as db:
        for metrics, config in runs:
            record_run(db, metrics, config)
    logger.info("recorded %d run(s) in %s", len(runs), url)


def parse_param(text: str) -> Tuple[str, List[Any]]:
    """`key=v1,v2,...` → (key, [values]) with YAML scalar values"""
    key, raw = parse_override(text)
    if isinstance(raw, (list, tuple)):
        values = list(raw)
    else:
        values = [parse_override(f"{key}={part}")[1] for part in str(raw).split(",")]
    if not values or any(v == "" for v in values):
        raise ConfigError(f"--param {text!r} needs at least one value")
    return key, values


def _scalar(value: Any) -> str:
    return yaml.safe_dump(value, default_flow_style=True).splitlines()[0]


def _combination_dir(combination: Sequence[Tuple[str, Any]]) -> str:
    name = "__".join(f"{key}={value}" for key, value in combination)
    return re.sub(r"[^A-Za-z0-9_.=+-]", "_", name)


def _sweep_one(job: Tuple[Dict[str, Any], List[str], Optional[int], str]) -> Dict[str, Any]:
    """Worker: run one sweep combination, errors come back as data"""
    data, overrides, seed, out_dir = job
    try:
        config = build_config(data, overrides, seed)
        result = simulate(config)
        write_outputs(result, out_dir)
        return {"row": result.metrics.summary_row(), "metrics": result.metrics, "config": config}
    except FusionError as exc:
        return {"error": str(exc), "category": exc.category, "exit_code": exc.exit_code}


# ============ COMMANDS ============

def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config, args.override, args.seed)
    out = Path(args.out)
    result = simulate(config)
    files = write_outputs(result, out)
    _record(_database_url(args), [(result.metrics, config)])
    _say(args, files["summary"].read_text(encoding="utf-8"))
    _say(args, f"✨ Artifacts written to {out}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    data = read_config_file(args.config)
    params = [parse_param(p) for p in args.param]
    if not params:
        raise ConfigError("sweep needs at least one --param key=v1,v2,...")

    combinations = [
        tuple(zip([key for key, _ in params], values))
        for values in itertools.product(*[values for _, values in params])
    ]
    out = Path(args.out)
    jobs = []
    for combination in combinations:
        overrides = list(args.override) + [f"{key}={_scalar(value)}" for key, value in combination]
        # fail fast on invalid combinations before any run starts
        build_config(data, overrides, args.seed)
        jobs.append((data, overrides, args.seed, str(out / _combination_dir(combination))))

    workers = max(1, args.jobs)
    _say(args, f"🚀 Sweep over {len(jobs)} combination(s) with {workers} worker(s)")
    if workers == 1:
        results = [_sweep_one(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_one, jobs))

    rows = []
    for combination, outcome in zip(combinations, results):
        if "error" in outcome:
            print(f"❌ {_combination_dir(combination)}: {outcome['error']}", file=sys.stderr)
            return outcome["exit_code"]
        row = {key: value for key, value in combination}
        row["run_dir"] = _combination_dir(combination)
        row.update(outcome["row"])
        rows.append(row)

    out.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows).to_csv(out / "sweep_metrics.csv", index=False, encoding="utf-8")
    _record(_database_url(args), [(o["metrics"], o["config"]) for o in results])
    _say(args, f"✅ sweep_metrics.csv written to {out}")
    return 0


def cmd_ekf(args: argparse.Namespace) -> int:
    trace = load_trace(args.input, args.node, args.kind)
    x0 = float(trace.values[0]) if args.x0 is None else args.x0
    model = ekf.ProcessModel.random_walk(args.q, args.r)
    states = ekf.run_filter(model, ekf.FilterState.scalar(x0, args.p0), trace)
    path = ekf.write_filter_csv(Path(args.out) / "ekf.csv", trace, states)
    _say(args, f"✅ {len(states)} estimates written to {path}")
    return 0


def cmd_fusvaf(args: argparse.Namespace) -> int:
    traces = [load_trace(path, Path(path).stem, args.kind) for path in args.input]
    params = fusvaf.FusionParams(
        alpha=args.alpha,
        omega=args.omega,
        alpha_mode=args.alpha_mode,
        alpha_floor=args.alpha_floor,
    )
    adaptation = fusvaf.GateAdaptation(
        k_sigma=args.k_sigma,
        w_min=args.w_min,
        w_max=args.w_max,
        window=args.window,
        initial_width=args.initial_width,
    )
    samples = fusvaf.fusvaf_stream(traces, params, args.predictor, adaptation)
    sources = [t.node_id for t in traces]
    path = fusvaf.write_fused_csv(Path(args.out) / "fused.csv", samples, sources)
    _say(args, f"✅ {len(samples)} fused ticks from {len(traces)} sensors written to {path}")
    return 0


def _read_graph(path: str) -> Tuple[consensus_mod.CommGraph, List[float]]:
    try:
        with Path(path).open("r", encoding="utf-8") as handle:
            data = yaml.safe_load(handle)
    except FileNotFoundError:
        raise ConfigError(f"graph file {path} does not exist") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"graph file {path} is not valid YAML: {exc}") from None
    if not isinstance(data, dict) or not {"n", "edges", "values"} <= set(data):
        raise ConfigError(f"graph file {path} must define n, edges and values")
    try:
        graph = consensus_mod.graph_from_edges(int(data["n"]), data["edges"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"graph file {path}: {exc}", [("edges", str(exc))]) from None
    try:
        values = [float(v) for v in data["values"]]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"graph file {path}: {exc}", [("values", str(exc))]) from None
    return graph, values


def cmd_consensus(args: argparse.Namespace) -> int:
    graph, values = _read_graph(args.graph)
    result = consensus_mod.run_consensus(
        consensus_mod.ConsensusState(estimates=values),
        graph,
        tol=args.tol,
        max_iter=args.max_iter,
    )
    history = result.mse_history
    if args.pairwise:
        history = [2.0 * mse for mse in history]
    path = consensus_mod.write_mse_csv(Path(args.out) / "consensus_mse.csv", history)
    status = "✅" if result.converged else "⚠️ "
    _say(
        args,
        f"{status} agreed value {result.agreed_value:.12g} after {result.iterations} iteration(s); "
        f"history written to {path}",
    )
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    config = load_config(args.config, args.override, args.seed)
    nodes = sum(len(c.nodes) for c in config.topology.clusters)
    _say(
        args,
        f"✅ {args.config}: scenario {config.name!r} is valid "
        f"({nodes} nodes, {len(config.topology.clusters)} clusters, {len(config.events)} events)",
    )
    return 0


# ============ PARSER ============

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--quiet", action="store_true", help="Only warnings and errors")


def _add_scenario(parser: argparse.ArgumentParser, out: bool = True) -> None:
    parser.add_argument("--config", required=True, help="Scenario YAML file")
    parser.add_argument("--seed", type=int, default=None, help="Override the scenario seed")
    parser.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Dotted config override, repeatable (e.g. energy.ops_per_bit=3000)",
    )
    if out:
        parser.add_argument("--out", default=settings.OUTPUT_DIR, help="Output directory")
        parser.add_argument("--db", default=None, help="Run registry URL (default FUSION_DATABASE_URL)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fusion-monitor",
        description="Multi-level data fusion for pipeline-monitoring sensor networks",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Simulate one scenario")
    _add_scenario(run)
    _add_common(run)
    run.set_defaults(handler=cmd_run)

    sweep = sub.add_parser("sweep", help="Simulate every combination of parameter values")
    _add_scenario(sweep)
    sweep.add_argument(
        "--param",
        action="append",
        default=[],
        metavar="KEY=V1,V2",
        help="Swept config key and its values, repeatable",
    )
    sweep.add_argument("--jobs", type=int, default=settings.WORKERS, help="Worker processes")
    _add_common(sweep)
    sweep.set_defaults(handler=cmd_sweep)

    ekf_cmd = sub.add_parser("ekf", help="Replay a trace through the scalar EKF")
    ekf_cmd.add_argument("--input", required=True, help="timestamp,value CSV")
    ekf_cmd.add_argument("--node", default="node", help="Node id of the trace")
    ekf_cmd.add_argument("--kind", default=SensorKind.TEMPERATURE.value, choices=[k.value for k in SensorKind])
    ekf_cmd.add_argument("--q", type=float, default=0.1, help="Process noise variance")
    ekf_cmd.add_argument("--r", type=float, default=0.1, help="Measurement noise variance")
    ekf_cmd.add_argument("--p0", type=float, default=1.0, help="Initial variance")
    ekf_cmd.add_argument("--x0", type=float, default=None, help="Initial estimate (default: first reading)")
    ekf_cmd.add_argument("--out", default=settings.OUTPUT_DIR, help="Output directory")
    _add_common(ekf_cmd)
    ekf_cmd.set_defaults(handler=cmd_ekf)

    fus = sub.add_parser("fusvaf", help="Fuse time-aligned same-kind traces with FUSVAF")
    fus.add_argument("--input", action="append", required=True, help="timestamp,value CSV, repeatable; node id = file stem")
    fus.add_argument("--kind", default=SensorKind.TEMPERATURE.value, choices=[k.value for k in SensorKind])
    fus.add_argument("--alpha", type=float, default=1.0)
    fus.add_argument("--omega", type=float, default=1.0)
    fus.add_argument("--alpha-mode", default="adaptive", choices=["adaptive", "constant"])
    fus.add_argument("--alpha-floor", type=float, default=0.0, help="Lower bound on the adaptive alpha")
    fus.add_argument("--predictor", default="ekf", choices=sorted(fusvaf.PREDICTORS))
    fus.add_argument("--k-sigma", type=float, default=3.0)
    fus.add_argument("--w-min", type=float, default=0.1)
    fus.add_argument("--w-max", type=float, default=100.0)
    fus.add_argument("--window", type=int, default=10)
    fus.add_argument("--initial-width", type=float, default=5.0)
    fus.add_argument("--out", default=settings.OUTPUT_DIR, help="Output directory")
    _add_common(fus)
    fus.set_defaults(handler=cmd_fusvaf)

    cons = sub.add_parser("consensus", help="Run average consensus on a graph file")
    cons.add_argument("--graph", required=True, help="YAML with n, edges, values")
    cons.add_argument("--tol", type=float, default=1e-12)
    cons.add_argument("--max-iter", type=int, default=1000)
    cons.add_argument("--pairwise", action="store_true", help="Report the mean squared pairwise difference")
    cons.add_argument("--out", default=settings.OUTPUT_DIR, help="Output directory")
    _add_common(cons)
    cons.set_defaults(handler=cmd_consensus)

    validate = sub.add_parser("validate", help="Check a scenario without running it")
    _add_scenario(validate, out=False)
    _add_common(validate)
    validate.set_defaults(handler=cmd_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.quiet)
    try:
        return args.handler(args)
    except ValidationError as exc:
        error: FusionError = ConfigError.from_validation(exc)
    except FusionError as exc:
        error = exc
    except ValueError as exc:
        # parameter checks inside the filters
        error = ConfigError(str(exc))
    print(f"❌ error[{error.category}]: {error}", file=sys.stderr)
    return error.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
