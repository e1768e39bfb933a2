import numpy as np
import pytest

from fusion_monitor.core.errors import DimensionMismatchError
from fusion_monitor.core.models import SensorKind, Trace
from fusion_monitor.sim.stages import (
    aggregate,
    cluster_stage,
    consensus_stage,
    node_stage,
    report_on_change,
    sample_and_hold,
)
from fusion_monitor.sim.topology import GATEWAY, Topology
from fusion_monitor.sim.world import generate_world

P, T, PIR = SensorKind.PRESSURE, SensorKind.TEMPERATURE, SensorKind.PIR


def _cluster_reports(config, cluster="c1"):
    topology = Topology.from_config(config)
    world = generate_world(config, topology)
    reports = [
        node_stage(world.trace(node.node_id, kind), config, dst=cluster)
        for node in topology.members(cluster)
        for kind in node.sensors
    ]
    return reports, topology, world


def test_report_on_change():
    values = np.array([0.0, 0.5, 1.2, 1.3, 0.1, 0.1])
    assert report_on_change(values, 1.0).tolist() == [True, False, True, False, True, False]
    assert report_on_change(values, 0.0).tolist() == [True, True, True, True, True, False]
    held = sample_and_hold(values, report_on_change(values, 1.0))
    assert held.tolist() == [0.0, 0.0, 1.2, 1.2, 0.1, 0.1]


def test_constant_stream_sends_once(quiet_config):
    trace = Trace.from_arrays("a1", P, np.arange(50), np.full(50, 500.0))
    report = node_stage(trace, quiet_config(), delta=0.5)
    assert len(report.messages) == 1
    assert report.messages[0].tick == 0
    assert (report.reported == 500.0).all()
    assert report.ops == (20 + 2) * 50


def test_raw_forwarding_sends_every_reading(make_config):
    config = make_config(fusion={"node_ekf": False})
    rng = np.random.default_rng(3)
    trace = Trace.from_arrays("a1", P, np.arange(100), 500.0 + rng.normal(size=100))
    report = node_stage(trace, config)
    assert len(report.messages) == 100
    assert report.estimates is None
    assert report.ops == 0
    assert {m.kind for m in report.messages} == {"raw"}
    np.testing.assert_array_equal(report.reported, trace.values)


def test_filtered_reporting_suppresses_noise(make_config):
    config = make_config()
    rng = np.random.default_rng(5)
    trace = Trace.from_arrays("a1", P, np.arange(1000), 500.0 + rng.normal(size=1000))
    report = node_stage(trace, config, delta=3.0)
    assert len(report.messages) < 1000
    assert len(report.messages) < 100


def test_wider_deadband_sends_less(make_config):
    config = make_config()
    rng = np.random.default_rng(9)
    trace = Trace.from_arrays("a1", P, np.arange(1000), 500.0 + rng.normal(size=1000))
    counts = [len(node_stage(trace, config, delta=d).messages) for d in (0.0, 0.5, 1.0, 2.0, 4.0)]
    assert counts == sorted(counts, reverse=True)
    assert counts[0] == 1000


def test_binary_stream_reports_transitions(make_config):
    values = np.zeros(40)
    values[10:20] = 1.0
    trace = Trace.from_arrays("a1", PIR, np.arange(40), values)
    report = node_stage(trace, make_config())
    assert [m.tick for m in report.messages] == [0, 10, 20]
    assert report.estimates is None
    np.testing.assert_array_equal(report.reported, values)


def test_aggregate():
    summary = aggregate([1.0, 2.0, 3.0, 4.0], 0, 3)
    assert (summary.count, summary.avg, summary.max, summary.min) == (4, 2.5, 4.0, 1.0)
    with pytest.raises(ValueError):
        aggregate([])


def test_single_constant_member_is_passed_through(quiet_config):
    config = quiet_config(topology={"clusters": [{"id": "c1", "nodes": [{"id": "a1", "position": 0}]}]})
    reports, topology, _ = _cluster_reports(config)
    report = cluster_stage(reports, config, "c1", topology)
    summary = report.kinds[P]
    np.testing.assert_array_equal(summary.fused, np.full(100, 500.0))
    assert len(summary.windows) == 10
    assert summary.windows[0].count == 10
    assert report.suspected == {}


def test_cluster_messages_per_window(quiet_config):
    config = quiet_config()
    reports, topology, _ = _cluster_reports(config)
    report = cluster_stage(reports, config, "c1", topology)
    kinds = [m.kind for m in report.messages]
    assert kinds.count("aggregated") == 10 * 5
    assert kinds.count("fused") == 10 * 3
    assert {m.dst for m in report.messages} == {GATEWAY}
    aggregated = next(m for m in report.messages if m.kind == "aggregated")
    assert aggregated.payload_bits == 4 * 32
    assert aggregated.tick == 9
    assert report.ops > 0


def test_relay_without_fusion(make_config):
    config = make_config(fusion={"cluster_fusvaf": False})
    reports, topology, _ = _cluster_reports(config)
    report = cluster_stage(reports, config, "c1", topology)
    member_messages = sum(len(r.messages) for r in reports)
    assert sum(1 for m in report.messages if m.kind == "raw") == member_messages
    assert not any(m.kind == "fused" for m in report.messages)
    held = report.kinds[T].held
    np.testing.assert_allclose(report.kinds[T].fused, held.mean(axis=1))


def test_binary_window_value_is_the_max(quiet_config):
    config = quiet_config(events=[{"kind": "intrusion", "start": 33, "end": 35, "location": 50}])
    reports, topology, _ = _cluster_reports(config)
    summary = cluster_stage(reports, config, "c1", topology).kinds[PIR]
    assert summary.window_values.tolist() == [0, 0, 0, 1, 0, 0, 0, 0, 0, 0]


def test_stuck_member_is_suspected(quiet_config):
    config = quiet_config(
        faults=[{"node": "a3", "sensor": "pressure", "mode": "stuck", "start": 0, "end": 99, "value": 560.0}]
    )
    reports, topology, _ = _cluster_reports(config)
    report = cluster_stage(reports, config, "c1", topology)
    assert report.suspected == {("a3", P): 29}
    np.testing.assert_allclose(report.kinds[P].fused, 500.0)


def test_fused_values_stay_inside_member_envelope(make_config):
    config = make_config()
    reports, topology, _ = _cluster_reports(config)
    summary = cluster_stage(reports, config, "c1", topology).kinds[T]
    for sample in summary.samples:
        pool = list(sample.measurements.values()) + [sample.prediction]
        assert min(pool) - 1e-9 <= sample.fused <= max(pool) + 1e-9


def test_misaligned_members_are_rejected(make_config):
    config = make_config()
    a = node_stage(Trace.from_arrays("a1", T, [0, 1, 2], [20.0, 20.0, 20.0]), config)
    b = node_stage(Trace.from_arrays("a2", T, [0, 1, 3], [20.0, 20.0, 20.0]), config)
    with pytest.raises(DimensionMismatchError):
        cluster_stage([a, b], config)


def _triangle(make_config):
    config = make_config(
        topology={
            "clusters": [
                {"id": "c1", "nodes": [{"id": "a1", "position": 0}]},
                {"id": "c2", "nodes": [{"id": "b1", "position": 500}]},
                {"id": "c3", "nodes": [{"id": "d1", "position": 1000}]},
            ],
            "peer_links": [["c1", "c2"], ["c2", "c3"], ["c1", "c3"]],
        },
        consensus={"tol": 1e-12},
    )
    return config, Topology.from_config(config)


def test_consensus_on_a_triangle(make_config):
    config, topology = _triangle(make_config)
    outcome = consensus_stage({"c1": 1.0, "c2": 2.0, "c3": 3.0}, topology, config, tick=9)
    assert outcome.converged and not outcome.skipped
    assert outcome.rounds == 1
    assert outcome.agreed == pytest.approx(2.0)
    assert len(outcome.messages) == 6
    assert {m.kind for m in outcome.messages} == {"consensus"}
    assert outcome.ops == 2 * 6


def test_consensus_needs_two_heads(make_config):
    config, topology = _triangle(make_config)
    outcome = consensus_stage({"c1": 4.0}, topology, config)
    assert outcome.skipped
    assert outcome.messages == ()
    assert outcome.agreed == 4.0


def test_agreeing_heads_exchange_nothing(make_config):
    config, topology = _triangle(make_config)
    outcome = consensus_stage({"c1": 5.0, "c2": 5.0, "c3": 5.0}, topology, config)
    assert outcome.rounds == 0
    assert outcome.messages == ()
