"""
Run artifacts: CSV tables, the scenario actually used and a text summary
"""

import logging
from pathlib import Path
from typing import Dict, List, Union

import numpy as np
import pandas as pd

from fusion_monitor.filters.fusvaf import fused_frame
from fusion_monitor.sim.config import dump_config
from fusion_monitor.sim.runner import RunMetrics, SimulationResult

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _write_csv(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, encoding="utf-8")
    return path


def metrics_frame(rows: List[RunMetrics]) -> pd.DataFrame:
    return pd.DataFrame([m.summary_row() for m in rows])


def rmse_frame(metrics: RunMetrics) -> pd.DataFrame:
    rows = [{"stream": k, "level": "node", "rmse": v} for k, v in metrics.rmse.items()]
    rows += [{"stream": k, "level": "fused", "rmse": v} for k, v in metrics.fused_rmse.items()]
    return pd.DataFrame(rows, columns=["stream", "level", "rmse"])


def stream_frame(result: SimulationResult, key) -> pd.DataFrame:
    report = result.nodes[key]
    estimates = report.estimates if report.estimates is not None else np.full(report.ticks.size, np.nan)
    return pd.DataFrame(
        {
            "tick": report.ticks,
            "truth": result.world.truth[key],
            "measurement": report.measurements,
            "estimate": estimates,
            "reported": report.reported,
            "sent": report.sent.astype(int),
        }
    )


def aggregates_frame(result: SimulationResult) -> pd.DataFrame:
    rows = []
    for cluster_id, report in result.clusters.items():
        for kind, summary in report.kinds.items():
            for window, value in zip(summary.windows, summary.window_values):
                rows.append(
                    {
                        "cluster": cluster_id,
                        "kind": kind.value,
                        "start": window.start,
                        "end": window.end,
                        "count": window.count,
                        "avg": window.avg,
                        "max": window.max,
                        "min": window.min,
                        "value": float(value),
                    }
                )
    return pd.DataFrame(rows, columns=["cluster", "kind", "start", "end", "count", "avg", "max", "min", "value"])


def consensus_frame(result: SimulationResult) -> pd.DataFrame:
    rows = []
    for run, outcome in enumerate(result.consensus):
        for iteration, mse in enumerate(outcome.mse_history):
            rows.append(
                {
                    "run": run,
                    "tick": outcome.tick,
                    "reason": outcome.reason,
                    "iteration": iteration,
                    "mse": mse,
                    "agreed": outcome.agreed,
                    "converged": int(outcome.converged),
                }
            )
    return pd.DataFrame(rows, columns=["run", "tick", "reason", "iteration", "mse", "agreed", "converged"])


def detections_frame(metrics: RunMetrics) -> pd.DataFrame:
    columns = ["kind", "cluster_id", "tick", "window_start", "event", "latency", "validated", "validation_tick"]
    return pd.DataFrame([d.model_dump() for d in metrics.detections], columns=columns)


def render_summary(metrics: RunMetrics, files: List[Path]) -> str:
    lines = [
        f"✅ Scenario {metrics.scenario} (seed {metrics.seed}, {metrics.horizon} ticks)",
        "",
        "📡 Traffic",
        f"   - node level:      {metrics.messages_node} messages, {metrics.bits_node} bits",
        f"   - cluster level:   {metrics.messages_cluster} messages, {metrics.bits_cluster} bits",
        f"   - consensus:       {metrics.messages_consensus} messages, {metrics.bits_consensus} bits",
        f"   - gateway alerts:  {metrics.messages_gateway} messages, {metrics.bits_gateway} bits",
        f"   - total:           {metrics.messages_total} messages, {metrics.bits_total} bits",
        "",
        "🔋 Energy",
        f"   - radio:   {metrics.radio_energy:.6g} ({metrics.ops_per_bit} ops/bit)",
        f"   - compute: {metrics.compute_energy:.6g} ({metrics.compute_ops} ops)",
        "",
        "📈 Estimation",
        f"   - mean RMSE over {len(metrics.rmse)} streams: {metrics.rmse_mean:.6g}",
    ]
    if metrics.suspected_faulty:
        lines.append(f"   - suspected faulty: {', '.join(metrics.suspected_faulty)}")
    lines += [
        "",
        "🚨 Detection",
        f"   - events detected: {metrics.events_detected}/{len(metrics.events)}",
        f"   - detections: {len(metrics.detections)} ({metrics.detections_validated} validated, "
        f"{metrics.false_positives} false positives)",
    ]
    for event in metrics.events:
        status = f"tick {event.detected_tick}, latency {event.latency}" if event.detected else "missed"
        lines.append(f"   - event {event.index} ({event.kind}): {status}")
    lines += ["", "📝 Files"]
    lines += [f"   - {path.name}" for path in files]
    return "\n".join(lines) + "\n"


def write_outputs(result: SimulationResult, out_dir: PathLike) -> Dict[str, Path]:
    """Write every run artifact under `out_dir`; returns name -> path"""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics = result.metrics
    files: Dict[str, Path] = {}

    files["metrics"] = _write_csv(metrics_frame([metrics]), out / "metrics.csv")
    files["rmse"] = _write_csv(rmse_frame(metrics), out / "rmse.csv")
    files["aggregates"] = _write_csv(aggregates_frame(result), out / "aggregates.csv")
    files["consensus_mse"] = _write_csv(consensus_frame(result), out / "consensus_mse.csv")
    files["detections"] = _write_csv(detections_frame(metrics), out / "detections.csv")

    for (node_id, kind) in result.nodes:
        _write_csv(stream_frame(result, (node_id, kind)), out / "streams" / f"{node_id}_{kind.value}.csv")
    for cluster_id, report in result.clusters.items():
        for kind, summary in report.kinds.items():
            if summary.samples:
                frame = fused_frame(summary.samples, summary.members)
            else:
                frame = pd.DataFrame({"tick": summary.ticks, "fused": summary.fused})
            _write_csv(frame, out / "fused" / f"{cluster_id}_{kind.value}.csv")

    config_path = out / "config_used.yaml"
    config_path.write_text(dump_config(result.config), encoding="utf-8")
    files["config"] = config_path

    summary_path = out / "summary.txt"
    summary_path.write_text(render_summary(metrics, list(files.values())), encoding="utf-8")
    files["summary"] = summary_path
    logger.info("wrote %d artifacts to %s", len(files), out)
    return files
