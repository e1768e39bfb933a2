import pytest
import yaml

from fusion_monitor.core.errors import EXIT_CONFIG, ConfigError
from fusion_monitor.core.models import SensorKind
from fusion_monitor.sim.config import build_config, dump_config, load_config, parse_override


def _paths(error: ConfigError):
    return [path for path, _ in error.problems]


def test_defaults_fill_missing_sections(make_config):
    config = make_config()
    assert config.horizon == 100
    assert config.fusion.window == 10
    assert config.fusion.node_ekf and config.fusion.cluster_fusvaf
    assert config.energy.ops_per_bit == 2000
    assert config.consensus.trigger == "on_suspicion"
    assert config.signals.pressure.baseline == 500.0
    assert config.topology.clusters[0].nodes[0].sensors == tuple(SensorKind)
    assert config.peer_links == (("c1", "c2"),)


def test_scenario_files_load(scenarios_dir):
    config = load_config(scenarios_dir / "pipeline_10n2c.yaml")
    assert config.name == "pipeline_10n2c"
    assert len(config.events) == 2
    assert sum(len(c.nodes) for c in config.topology.clusters) == 10
    assert load_config(scenarios_dir / "example.yaml", seed=11).seed == 11


def test_missing_seed(scenario_data):
    data = scenario_data()
    del data["seed"]
    with pytest.raises(ConfigError) as info:
        build_config(data)
    assert "seed" in _paths(info.value)
    assert info.value.exit_code == EXIT_CONFIG


def test_unknown_key_rejected(scenario_data):
    with pytest.raises(ConfigError) as info:
        build_config(scenario_data(fusion={"windw": 5}))
    assert "fusion.windw" in _paths(info.value)


def test_event_outside_horizon_names_the_field(make_config):
    with pytest.raises(ConfigError) as info:
        make_config(events=[{"kind": "leak", "start": 10, "end": 500, "location": 0}])
    assert "events.0.end" in _paths(info.value)
    assert "events.0.end" in str(info.value)


def test_every_problem_is_reported(make_config):
    with pytest.raises(ConfigError) as info:
        make_config(
            events=[{"kind": "leak", "start": 200, "end": 300, "location": 0}],
            faults=[{"node": "zz", "sensor": "pressure", "mode": "stuck", "start": 0, "end": 5}],
        )
    paths = _paths(info.value)
    assert {"events.0.start", "events.0.end", "faults.0.node"} <= set(paths)


def test_ops_per_bit_band(make_config):
    with pytest.raises(ConfigError) as info:
        make_config(energy={"ops_per_bit": 5000})
    assert "energy.ops_per_bit" in _paths(info.value)


def test_reserved_ids(scenario_data):
    data = scenario_data()
    data["topology"]["clusters"][0]["id"] = "gateway"
    with pytest.raises(ConfigError, match="reserved"):
        build_config(data)


def test_node_in_two_clusters(scenario_data):
    data = scenario_data()
    data["topology"]["clusters"][1]["nodes"][0]["id"] = "a1"
    with pytest.raises(ConfigError, match="one cluster"):
        build_config(data)


def test_disconnected_peer_links(scenario_data):
    data = scenario_data()
    data["topology"]["clusters"].append({"id": "c3", "nodes": [{"id": "d1", "position": 2000}]})
    data["topology"]["peer_links"] = [["c1", "c2"]]
    with pytest.raises(ConfigError) as info:
        build_config(data)
    assert "topology.peer_links" in _paths(info.value)


def test_faults_only_on_analog_sensors(make_config):
    with pytest.raises(ConfigError):
        make_config(faults=[{"node": "a1", "sensor": "pir", "mode": "stuck", "start": 0, "end": 5}])


def test_overrides(make_config):
    config = make_config(
        ["energy.ops_per_bit=3000", "fusion.node_ekf=false", "detection.leak_threshold=7.5"],
        events=[{"kind": "leak", "start": 10, "end": 20, "location": 0, "magnitude": 5}],
    )
    assert config.energy.ops_per_bit == 3000
    assert config.fusion.node_ekf is False
    assert config.detection.leak_threshold == 7.5

    config = make_config(
        ["events.0.magnitude=40"],
        events=[{"kind": "leak", "start": 10, "end": 20, "location": 0, "magnitude": 5}],
    )
    assert config.events[0].magnitude == 40.0


def test_cluster_fusion_floors_alpha(make_config):
    assert make_config().fusion.params.alpha_floor == 1.0
    assert make_config(fusion={"params": {"alpha": 0.5}}).fusion.params.alpha_floor == 1.0
    assert make_config(["fusion.params.alpha_floor=0"]).fusion.params.alpha_floor == 0.0
    assert make_config(["detection.leak_min_members=2"]).detection.leak_min_members == 2


def test_unknown_override_rejected(make_config):
    with pytest.raises(ConfigError, match="fusion.nope"):
        make_config(["fusion.nope=1"])
    with pytest.raises(ConfigError):
        make_config(["events.3.magnitude=1"])


def test_parse_override():
    assert parse_override("energy.ops_per_bit=3000") == ("energy.ops_per_bit", 3000)
    assert parse_override("name=a=b") == ("name", "a=b")
    with pytest.raises(ConfigError):
        parse_override("energy.ops_per_bit")


def test_deadband_resolution(make_config):
    config = make_config(fusion={"deadband": {"pressure": 0.25}, "deadband_sigmas": 2.0})
    assert config.deadband_for(SensorKind.PRESSURE) == 0.25
    assert config.deadband_for(SensorKind.HUMIDITY) == pytest.approx(1.0)
    assert config.deadband_for(SensorKind.PIR) == 0.0


def test_dump_reloads_to_the_same_config(make_config):
    config = make_config(
        events=[{"kind": "intrusion", "start": 10, "end": 20, "location": 50}],
        topology={
            "clusters": [{"id": "c1", "nodes": [{"id": "a1", "position": 0, "sensors": ["pressure", "pir"]}]}],
            "uav": {"patrol": [{"start": 0, "end": 30, "cluster": "c1"}], "relay": True},
        },
    )
    assert build_config(yaml.safe_load(dump_config(config))) == config
