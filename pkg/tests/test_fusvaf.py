import math

import hypothesis.strategies as st
import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from pydantic import ValidationError

from fusion_monitor.core.errors import DegenerateDenominatorError
from fusion_monitor.core.models import Trace
from fusion_monitor.core.traces import load_trace
from fusion_monitor.filters.fusvaf import (
    FusionParams,
    FusvafStream,
    GateAdaptation,
    SmoothingPredictor,
    ValidationGate,
    adapt_gate,
    confidence,
    fuse,
    fusvaf_stream,
    make_predictor,
    write_fused_csv,
)


@st.composite
def gates(draw):
    x_hat = draw(st.floats(-1e3, 1e3))
    w_l = draw(st.floats(1e-2, 1e3))
    w_r = draw(st.floats(1e-2, 1e3))
    a_l = w_l * draw(st.floats(0.05, 20.0))
    a_r = w_r * draw(st.floats(0.05, 20.0))
    return ValidationGate(x_hat=x_hat, v_l=x_hat - w_l, v_r=x_hat + w_r, a_l=a_l, a_r=a_r)


measurement_sets = st.lists(st.floats(-2e3, 2e3), min_size=0, max_size=8)


def test_confidence_peak_and_boundaries():
    gate = ValidationGate.symmetric(10.0, 2.0)
    assert confidence(gate, 10.0) == 1.0
    assert confidence(gate, 8.0) == 0.0
    assert confidence(gate, 12.0) == 0.0
    assert confidence(gate, 7.0) == 0.0
    assert confidence(gate, 13.5) == 0.0
    assert 0.0 < confidence(gate, 9.0) < 1.0
    assert confidence(gate, 9.0) == pytest.approx(confidence(gate, 11.0))


def test_gate_requires_ordering():
    with pytest.raises(ValidationError):
        ValidationGate(x_hat=1.0, v_l=2.0, v_r=3.0, a_l=1.0, a_r=1.0)
    with pytest.raises(ValidationError):
        ValidationGate(x_hat=1.0, v_l=0.0, v_r=3.0, a_l=0.0, a_r=1.0)


@pytest.mark.slow
@settings(max_examples=10_000, deadline=None)
@given(gates(), st.floats(-3e3, 3e3))
def test_confidence_range_and_shape(gate, z):
    sigma = confidence(gate, z)
    assert 0.0 <= sigma <= 1.0
    if z <= gate.v_l or z >= gate.v_r:
        assert sigma == 0.0
    # each side is non-increasing away from the prediction
    if z < gate.x_hat:
        assert confidence(gate, (z + gate.x_hat) / 2) >= sigma
    elif z > gate.x_hat:
        assert confidence(gate, (z + gate.x_hat) / 2) >= sigma


@settings(max_examples=500, deadline=None)
@given(gates())
def test_confidence_is_continuous_at_peak_and_edges(gate):
    w_l = gate.x_hat - gate.v_l
    w_r = gate.v_r - gate.x_hat
    assert confidence(gate, gate.x_hat) == 1.0
    assert confidence(gate, gate.x_hat - 1e-9 * w_l) >= 1.0 - 1e-6
    assert confidence(gate, gate.x_hat + 1e-9 * w_r) >= 1.0 - 1e-6
    assert confidence(gate, gate.v_l + 1e-9 * w_l) <= 1e-6
    assert confidence(gate, gate.v_r - 1e-9 * w_r) <= 1e-6


@settings(max_examples=1000, deadline=None)
@given(gates(), measurement_sets, st.floats(1e-3, 10.0), st.floats(0.1, 10.0))
def test_fused_value_is_a_convex_combination(gate, measurements, alpha, omega):
    params = FusionParams(alpha=alpha, omega=omega)
    fused = fuse(gate, params, measurements)
    pool = measurements + [gate.x_hat]
    span = max(pool) - min(pool)
    slack = 1e-9 * max(1.0, span, max(abs(v) for v in pool))
    assert min(pool) - slack <= fused <= max(pool) + slack


@settings(max_examples=500, deadline=None)
@given(gates(), measurement_sets, st.randoms(use_true_random=False))
def test_fusion_ignores_measurement_order(gate, measurements, random):
    params = FusionParams(alpha=1.0)
    shuffled = list(measurements)
    random.shuffle(shuffled)
    assert fuse(gate, params, shuffled) == fuse(gate, params, measurements)


@pytest.mark.parametrize("x_hat", [3.0, 0.1, 499.93, -1e-7])
@pytest.mark.parametrize("alpha", [1.0, 3.0, 0.7])
def test_empty_or_rejected_set_returns_prediction(x_hat, alpha):
    gate = ValidationGate.symmetric(x_hat, 1.0)
    params = FusionParams(alpha=alpha)
    assert fuse(gate, params, []) == x_hat
    assert fuse(gate, params, [x_hat + 10.0, x_hat - 10.0]) == x_hat


def test_symmetric_pair_fuses_to_the_centre():
    gate = ValidationGate(x_hat=0.0, v_l=-10.0, v_r=10.0, a_l=4.0, a_r=4.0)
    assert fuse(gate, FusionParams(alpha=0.0), [-1.0, 1.0]) == 0.0


def test_large_alpha_pulls_towards_the_prediction():
    gate = ValidationGate.symmetric(5.0, 3.0)
    measurements = [6.0, 6.5, 7.2]
    distances = [
        abs(fuse(gate, FusionParams(alpha=alpha), measurements) - 5.0)
        for alpha in (0.0, 0.1, 1.0, 10.0, 100.0, 1e4, 1e8)
    ]
    assert all(a >= b for a, b in zip(distances, distances[1:]))
    assert distances[0] > 0.1
    assert distances[-1] < 1e-7


def test_zero_alpha_without_valid_measurements_fails():
    gate = ValidationGate.symmetric(3.0, 1.0)
    with pytest.raises(DegenerateDenominatorError):
        fuse(gate, FusionParams(alpha=0.0), [10.0])
    with pytest.raises(DegenerateDenominatorError):
        fuse(gate, FusionParams(alpha=0.0), [])
    assert fuse(gate, FusionParams(alpha=0.0), [3.0, 10.0]) == 3.0


def test_adapt_gate_uses_median_residual():
    adaptation = GateAdaptation(k_sigma=3.0, w_min=0.1, w_max=100.0)
    gate = adapt_gate(ValidationGate.symmetric(0.0, 1.0), [1.0, -2.0, 3.0], 10.0, adaptation)
    assert gate.x_hat == 10.0
    assert gate.v_l == pytest.approx(4.0)
    assert gate.v_r == pytest.approx(16.0)
    assert gate.a_l == pytest.approx(3.0)
    narrow = adapt_gate(gate, [0.0, 0.0], 10.0, adaptation)
    assert narrow.half_width == pytest.approx(0.1)
    wide = adapt_gate(gate, [1e6], 10.0, adaptation)
    assert wide.half_width == pytest.approx(100.0)
    with pytest.raises(ValueError):
        adapt_gate(gate, [], 10.0, adaptation)


def test_doubling_residuals_doubles_the_gate():
    adaptation = GateAdaptation(k_sigma=3.0, w_min=0.1, w_max=100.0)
    gate = ValidationGate.symmetric(0.0, 1.0)
    residuals = [0.5, 1.0, 2.0, 0.25]
    single = adapt_gate(gate, residuals, 0.0, adaptation)
    double = adapt_gate(gate, [2 * r for r in residuals], 0.0, adaptation)
    assert double.half_width == pytest.approx(2 * single.half_width)
    assert single.half_width == pytest.approx(3.0 * 0.75)


def test_adaptation_band_validated():
    with pytest.raises(ValidationError):
        GateAdaptation(w_min=5.0, w_max=1.0)
    with pytest.raises(ValidationError):
        FusionParams(alpha=1.0, beta=2.0)


def test_predictors():
    smoothing = SmoothingPredictor(10.0, beta=0.5)
    assert smoothing.predict() == 10.0
    smoothing.observe(12.0)
    assert smoothing.predict() == 11.0

    ekf = make_predictor("ekf", 5.0, q=0.1, r=0.1)
    assert ekf.predict() == 5.0
    ekf.observe(6.0)
    assert 5.0 < ekf.predict() < 6.0
    with pytest.raises(ValueError):
        make_predictor("kalman", 0.0)


def test_stream_warmup_and_adaptive_alpha():
    stream = FusvafStream(adaptation=GateAdaptation(window=3), params=FusionParams(alpha=0.5))
    samples = [stream.push(t, {"a": 20.0, "b": 20.0}) for t in range(5)]
    assert [s.warmup for s in samples] == [True, True, True, False, False]
    assert samples[0].alpha == 0.5
    # two fully confident measurements at the previous tick
    assert samples[1].alpha == pytest.approx(2.0)
    assert samples[0].gate.half_width == pytest.approx(5.0)
    assert samples[4].gate.half_width == pytest.approx(0.1)
    assert all(s.fused == pytest.approx(20.0) for s in samples)


def test_constant_alpha_mode():
    stream = FusvafStream(params=FusionParams(alpha=0.5, alpha_mode="constant"))
    samples = [stream.push(t, {"a": 1.0, "b": 1.2}) for t in range(4)]
    assert {s.alpha for s in samples} == {0.5}


def test_adaptive_alpha_is_the_previous_confidence_sum():
    stream = FusvafStream(params=FusionParams(alpha=1.0))
    # 24.0 sits inside the warm-up gate with low confidence, 27.0 outside it
    readings = [20.0, 20.4, 19.7, 24.0, 20.2, 27.0, 20.1]
    samples = [stream.push(t, {"a": z, "b": z + 0.3}) for t, z in enumerate(readings)]
    assert samples[0].alpha == 1.0
    for previous, sample in zip(samples, samples[1:]):
        total = math.fsum(previous.confidences.values())
        assert sample.alpha == (total if total > 0 else 1.0)
    assert 0.0 < samples[4].alpha < 1.0
    assert samples[6].alpha == 1.0


def test_alpha_floor_bounds_the_adaptive_alpha():
    stream = FusvafStream(params=FusionParams(alpha=1.0, alpha_floor=1.5))
    samples = [stream.push(t, {"a": z}) for t, z in enumerate([5.0, 5.0, 5.2, 4.9])]
    assert all(s.alpha >= 1.5 for s in samples[1:])


def test_identical_traces_fuse_to_their_value():
    ticks = np.arange(30)
    values = np.full(30, 21.5)
    traces = [Trace.from_arrays(name, "temperature", ticks, values) for name in ("n1", "n2")]
    for sample in fusvaf_stream(traces, adaptation=GateAdaptation(window=5)):
        assert sample.fused == pytest.approx(21.5, abs=1e-12)
        assert sample.confidences == pytest.approx({"n1": 1.0, "n2": 1.0})


def test_identical_copies_of_a_recorded_trace_get_equal_confidences(fixtures_dir):
    trace = load_trace(fixtures_dir / "temp_node1.csv", "n1", "temperature")
    copy = Trace.from_arrays("n2", "temperature", trace.timestamps, trace.values)
    for sample in fusvaf_stream([trace, copy]):
        assert sample.confidences["n1"] == sample.confidences["n2"]
        z = sample.measurements["n1"]
        low, high = sorted((z, sample.prediction))
        assert low - 1e-9 <= sample.fused <= high + 1e-9


def test_spike_is_rejected():
    affected = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        values = 20.0 + rng.normal(0.0, 0.05, size=(3, 30))
        ticks = np.arange(30)
        clean = [Trace.from_arrays(f"n{i}", "temperature", ticks, values[i]) for i in range(3)]
        reference = fusvaf_stream(clean)[20]

        spiked_values = values.copy()
        spiked_values[0, 20] = reference.prediction + 5.0 * reference.gate.half_width + 0.5
        spiked = [Trace.from_arrays(f"n{i}", "temperature", ticks, spiked_values[i]) for i in range(3)]
        sample = fusvaf_stream(spiked)[20]

        assert sample.confidences["n0"] == 0.0
        if abs(sample.fused - reference.fused) / abs(reference.fused) >= 0.01:
            affected += 1
    assert affected == 0


def test_fixture_streams(fixtures_dir, tmp_path):
    traces = [
        load_trace(fixtures_dir / "temp_node1.csv", "temp_node1", "temperature"),
        load_trace(fixtures_dir / "temp_node2.csv", "temp_node2", "temperature"),
    ]
    samples = fusvaf_stream(traces)
    assert len(samples) == 30
    spike = next(s for s in samples if s.tick == 15)
    assert spike.confidences["temp_node2"] == 0.0
    for s in samples:
        pool = list(s.measurements.values()) + [s.prediction]
        assert min(pool) - 1e-9 <= s.fused <= max(pool) + 1e-9

    path = write_fused_csv(tmp_path / "fused.csv", samples, ["temp_node1", "temp_node2"])
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["tick", "fused", "pred", "z_1", "sigma_1", "z_2", "sigma_2", "warmup"]
    assert frame["warmup"].sum() == 10
    assert math.isclose(frame.loc[15, "z_2"], 26.40)
