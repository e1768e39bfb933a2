"""
Fuzzy Sensor Validation and Fusion (FUSVAF)

Each measurement z gets a confidence from a piece-wise bell validation gate
centred on the prediction x_hat:

    sigma(z) = 0                                              z <= v_l
             = (e^-((x-z)/a_l)^2 - e^-((x-v_l)/a_l)^2) / (1 - e^-((x-v_l)/a_l)^2)   v_l < z <= x
             = (e^-((x-z)/a_r)^2 - e^-((x-v_r)/a_r)^2) / (1 - e^-((x-v_r)/a_r)^2)   x < z <= v_r
             = 0                                              z > v_r

and the fused value is the confidence-weighted mean with the prediction
weighted by alpha / omega:

    x_f = (sum z_i sigma_i + alpha x_hat / omega) / (sum sigma_i + alpha / omega)
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Literal, Optional, Protocol, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from fusion_monitor.core.errors import DegenerateDenominatorError, NumericError
from fusion_monitor.core.models import Trace
from fusion_monitor.core.traces import merge_traces
from fusion_monitor.filters import ekf

logger = logging.getLogger(__name__)

# Below this (half-width / shape)^2 the bell is evaluated by its quadratic limit
_SMALL_EXPONENT = 1e-8


# ============ GATE AND PARAMETERS ============

class ValidationGate(BaseModel):
    """Validation gate (v_l, v_r) around the prediction x_hat"""

    model_config = ConfigDict(frozen=True)

    x_hat: float = Field(..., description="Predicted value")
    v_l: float = Field(..., description="Left gate boundary")
    v_r: float = Field(..., description="Right gate boundary")
    a_l: float = Field(..., gt=0, description="Left shape parameter")
    a_r: float = Field(..., gt=0, description="Right shape parameter")

    @model_validator(mode="after")
    def _ordered(self) -> "ValidationGate":
        values = (self.x_hat, self.v_l, self.v_r, self.a_l, self.a_r)
        if not all(math.isfinite(v) for v in values):
            raise ValueError("gate parameters must be finite")
        if not self.v_l < self.x_hat < self.v_r:
            raise ValueError(f"gate requires v_l < x_hat < v_r, got {self.v_l}, {self.x_hat}, {self.v_r}")
        return self

    @classmethod
    def symmetric(cls, x_hat: float, half_width: float) -> "ValidationGate":
        """Gate of half-width w around x_hat with shape parameters w/2"""
        return cls(
            x_hat=x_hat,
            v_l=x_hat - half_width,
            v_r=x_hat + half_width,
            a_l=half_width / 2.0,
            a_r=half_width / 2.0,
        )

    @property
    def half_width(self) -> float:
        return max(self.x_hat - self.v_l, self.v_r - self.x_hat)

    def confidence(self, z: float) -> float:
        return confidence(self, z)


class FusionParams(BaseModel):
    """Weight alpha of the prediction and scaling factor omega"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    alpha: float = Field(default=1.0, ge=0, description="Adaptive weight of the prediction")
    omega: float = Field(default=1.0, gt=0, description="Constant scaling factor")
    alpha_mode: Literal["adaptive", "constant"] = Field(
        default="adaptive",
        description="adaptive: alpha_k = sum of the previous tick's confidences, alpha when that is 0 or absent",
    )
    alpha_floor: float = Field(default=0.0, ge=0, description="Adaptive mode: lower bound on alpha_k")


class GateAdaptation(BaseModel):
    """Median-absolute-residual gate adaptation"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    k_sigma: float = Field(default=3.0, gt=0)
    w_min: float = Field(default=0.1, gt=0, description="Minimum half-width, sensor units")
    w_max: float = Field(default=100.0, gt=0, description="Maximum half-width, sensor units")
    window: int = Field(default=10, ge=1, description="Residual window / warm-up length, ticks")
    initial_width: float = Field(default=5.0, gt=0, description="Half-width during warm-up")

    @model_validator(mode="after")
    def _band(self) -> "GateAdaptation":
        if self.w_min > self.w_max:
            raise ValueError("w_min must not exceed w_max")
        return self


# ============ CONFIDENCE AND FUSION ============

def _bell(deviation: float, edge: float, shape: float) -> float:
    """One side of the gate; deviation and edge are non-negative distances from x_hat"""
    edge_exponent = (edge / shape) ** 2
    if edge_exponent < _SMALL_EXPONENT:
        ratio = deviation / edge
        return 1.0 - ratio * ratio
    floor = math.exp(-edge_exponent)
    return (math.exp(-((deviation / shape) ** 2)) - floor) / (1.0 - floor)


def confidence(gate: ValidationGate, z: float) -> float:
    """Confidence in [0, 1] of measurement z; zero at and beyond the boundaries"""
    if z <= gate.v_l or z > gate.v_r:
        return 0.0
    if z <= gate.x_hat:
        sigma = _bell(gate.x_hat - z, gate.x_hat - gate.v_l, gate.a_l)
    else:
        sigma = _bell(z - gate.x_hat, gate.v_r - gate.x_hat, gate.a_r)
    return min(1.0, max(0.0, sigma))


def _weighted_fusion(
    values: Sequence[float],
    sigmas: Sequence[float],
    x_hat: float,
    alpha: float,
    omega: float,
) -> float:
    order = np.argsort(np.asarray(values, dtype=float), kind="stable")
    z = np.asarray(values, dtype=float)[order]
    s = np.asarray(sigmas, dtype=float)[order]
    prior_weight = alpha / omega
    sigma_sum = math.fsum(s)
    if sigma_sum + prior_weight <= 0.0:
        raise DegenerateDenominatorError(
            "every measurement was invalidated and alpha = 0; no information to fuse"
        )
    if sigma_sum == 0.0:
        return float(x_hat)
    denominator = sigma_sum + prior_weight
    numerator = math.fsum(z * s) + prior_weight * x_hat
    return numerator / denominator


def fuse(gate: ValidationGate, params: FusionParams, measurements: Iterable[float]) -> float:
    """
    Fused estimate of a measurement set

    Returns x_hat when the set is empty or fully invalidated and alpha > 0.
    Raises DegenerateDenominatorError when nothing is valid and alpha = 0.
    """
    values = [float(z) for z in measurements]
    sigmas = [confidence(gate, z) for z in values]
    return _weighted_fusion(values, sigmas, gate.x_hat, params.alpha, params.omega)


def adapt_gate(
    gate: ValidationGate,
    recent_residuals: Sequence[float],
    new_prediction: float,
    adaptation: Optional[GateAdaptation] = None,
) -> ValidationGate:
    """
    Re-centre the gate on `new_prediction`

    Half-width w = clamp(k_sigma * median|residual|, w_min, w_max);
    v_l, v_r = x_hat -/+ w; a_l = a_r = w / 2.
    """
    adaptation = adaptation or GateAdaptation()
    residuals = np.abs(np.asarray(list(recent_residuals), dtype=float))
    if residuals.size == 0:
        raise ValueError("residual window must not be empty")
    if not math.isfinite(new_prediction):
        raise ValueError("prediction must be finite")
    spread = float(np.median(residuals))
    width = min(adaptation.w_max, max(adaptation.w_min, adaptation.k_sigma * spread))
    return ValidationGate.symmetric(new_prediction, width)


# ============ PREDICTORS ============

class Predictor(Protocol):
    """Source of the prediction x_hat for the next tick"""

    def predict(self) -> float: ...

    def observe(self, fused: float) -> None: ...


class EkfPredictor:
    """Random-walk EKF over the fused output; prediction is the EKF prior"""

    def __init__(self, initial: float, q: float = 0.1, r: float = 0.1, p0: float = 1.0):
        self.model = ekf.ProcessModel.random_walk(q, r)
        self.state = ekf.FilterState.scalar(initial, p0)
        self._prior: Optional[ekf.FilterState] = None

    def predict(self) -> float:
        self._prior = ekf.predict(self.state, self.model)
        return self._prior.estimate

    def observe(self, fused: float) -> None:
        prior = self._prior or ekf.predict(self.state, self.model)
        self.state = ekf.update(prior, [fused], self.model)
        self._prior = None


class SmoothingPredictor:
    """Exponential smoothing: next = beta * fused + (1 - beta) * previous"""

    def __init__(self, initial: float, beta: float = 0.5):
        if not 0.0 < beta <= 1.0:
            raise ValueError("beta must be in (0, 1]")
        self.beta = beta
        self.value = float(initial)

    def predict(self) -> float:
        return self.value

    def observe(self, fused: float) -> None:
        self.value = self.beta * fused + (1.0 - self.beta) * self.value


PREDICTORS = {
    "ekf": EkfPredictor,
    "smoothing": SmoothingPredictor,
}


def make_predictor(name: str, initial: float, **kwargs) -> Predictor:
    try:
        factory = PREDICTORS[name]
    except KeyError:
        raise ValueError(f"unknown predictor {name!r}; choose from {sorted(PREDICTORS)}") from None
    return factory(initial, **kwargs)


# ============ STREAM ============

@dataclass(frozen=True)
class FusedSample:
    """Result of one fusion tick"""

    tick: int
    fused: float
    prediction: float
    gate: ValidationGate
    measurements: Dict[str, float]
    confidences: Dict[str, float]
    warmup: bool = False
    alpha: float = 0.0


@dataclass
class FusvafStream:
    """
    Stateful per-tick fusion over one group of same-kind sensors

    Single owner: keeps the gate, residual window, predictor and alpha state.
    """

    params: FusionParams = field(default_factory=FusionParams)
    adaptation: GateAdaptation = field(default_factory=GateAdaptation)
    predictor_name: str = "ekf"
    predictor_options: dict = field(default_factory=dict)

    predictor: Optional[Predictor] = field(default=None, init=False)
    gate: Optional[ValidationGate] = field(default=None, init=False)
    residuals: List[float] = field(default_factory=list, init=False)
    ticks_seen: int = field(default=0, init=False)
    last_confidence_sum: Optional[float] = field(default=None, init=False)

    def _alpha(self) -> float:
        """Previous tick's confidence sum; the configured alpha when there is none"""
        previous = self.last_confidence_sum
        if self.params.alpha_mode == "constant" or not previous:
            return self.params.alpha
        return max(self.params.alpha_floor, previous)

    def push(self, tick: int, measurements: Dict[str, float]) -> FusedSample:
        """Fuse one tick of {source id: value}; empty input falls back to the prediction"""
        values = list(measurements.values())
        if self.predictor is None:
            if not values:
                raise ValueError("first fusion tick needs at least one measurement")
            self.predictor = make_predictor(
                self.predictor_name, float(np.median(values)), **self.predictor_options
            )

        prediction = self.predictor.predict()
        warmup = self.ticks_seen < self.adaptation.window
        if warmup or not self.residuals:
            self.gate = ValidationGate.symmetric(prediction, self.adaptation.initial_width)
        else:
            self.gate = adapt_gate(self.gate, self.residuals, prediction, self.adaptation)

        sigmas = {source: confidence(self.gate, z) for source, z in measurements.items()}
        alpha = self._alpha()
        try:
            fused = _weighted_fusion(
                values, list(sigmas.values()), prediction, alpha, self.params.omega
            )
        except NumericError as exc:
            raise exc.at_tick(tick)

        valid = [z for source, z in measurements.items() if sigmas[source] > 0.0]
        pool = valid or values
        if pool:
            self.residuals.append(float(np.median(np.abs(np.asarray(pool) - fused))))
            del self.residuals[: -self.adaptation.window]

        self.predictor.observe(fused)
        self.last_confidence_sum = math.fsum(sigmas.values())
        self.ticks_seen += 1
        return FusedSample(
            tick=tick,
            fused=fused,
            prediction=prediction,
            gate=self.gate,
            measurements=dict(measurements),
            confidences=sigmas,
            warmup=warmup,
            alpha=alpha,
        )


def fusvaf_stream(
    traces: Sequence[Trace],
    params: Optional[FusionParams] = None,
    predictor: str = "ekf",
    adaptation: Optional[GateAdaptation] = None,
    **predictor_options,
) -> List[FusedSample]:
    """
    Replay time-aligned traces through FUSVAF

    Per tick: predict, gate, assign confidences, fuse, then feed the residual
    window used to adapt the gate for the next tick.
    """
    if not traces:
        raise ValueError("at least one trace is required")
    stream = FusvafStream(
        params=params or FusionParams(),
        adaptation=adaptation or GateAdaptation(),
        predictor_name=predictor,
        predictor_options=predictor_options,
    )
    samples = []
    for tick_set in merge_traces(traces):
        samples.append(stream.push(tick_set.tick, tick_set.by_node()))
    logger.debug("fused %d ticks from %d traces", len(samples), len(traces))
    return samples


def fused_frame(samples: Sequence[FusedSample], sources: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """Table `tick,fused,pred,z_1,sigma_1,...,z_n,sigma_n,warmup`"""
    if sources is None:
        seen: Dict[str, None] = {}
        for sample in samples:
            for source in sample.measurements:
                seen.setdefault(source, None)
        sources = list(seen)

    columns: Dict[str, list] = {
        "tick": [s.tick for s in samples],
        "fused": [s.fused for s in samples],
        "pred": [s.prediction for s in samples],
    }
    for index, source in enumerate(sources, start=1):
        columns[f"z_{index}"] = [s.measurements.get(source, np.nan) for s in samples]
        columns[f"sigma_{index}"] = [s.confidences.get(source, np.nan) for s in samples]
    columns["warmup"] = [int(s.warmup) for s in samples]
    return pd.DataFrame(columns)


def write_fused_csv(path, samples: Sequence[FusedSample], sources: Optional[Sequence[str]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fused_frame(samples, sources).to_csv(path, index=False, encoding="utf-8")
    return path
