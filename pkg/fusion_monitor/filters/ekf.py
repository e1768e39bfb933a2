"""
Extended Kalman filter

Prediction:
    x(k+1|k) = f(x(k|k)),  P(k+1|k) = F P F^T + Q,  F = df/dx at x(k|k)
Measurement update:
    K = P H^T [H P H^T + R]^-1,  H = dh/dx at x(k+1|k)
    x(k+1|k+1) = x(k+1|k) + K [y - h(x(k+1|k))]
    P(k+1|k+1) = (I - K H) P(k+1|k)

Covariances are symmetrized after every step; the simple (I - KH)P form is
kept (no Joseph form).
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from fusion_monitor.core.errors import (
    DimensionMismatchError,
    NumericError,
    NumericFailureError,
    SingularBracketError,
)
from fusion_monitor.core.models import Trace

logger = logging.getLogger(__name__)

# Tolerance on negative eigenvalues of a covariance
EPS_SYM = 1e-9

VectorFn = Callable[[np.ndarray], np.ndarray]


def _as_vector(value) -> np.ndarray:
    return np.atleast_1d(np.asarray(value, dtype=float)).reshape(-1)


def _as_matrix(value, rows: int, cols: int, name: str) -> np.ndarray:
    matrix = np.atleast_2d(np.asarray(value, dtype=float))
    if matrix.shape != (rows, cols):
        raise ValueError(f"{name} must be {rows}x{cols}, got {matrix.shape[0]}x{matrix.shape[1]}")
    return matrix


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return (P + P.T) / 2.0


def _check_finite(array: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(array)):
        raise NumericFailureError(f"{what} produced non-finite values")
    return array


def numeric_jacobian(fn: VectorFn, x, eps: Union[float, np.ndarray, None] = None) -> np.ndarray:
    """
    Central-difference Jacobian of `fn` at `x`

    Column j is (fn(x + eps_j e_j) - fn(x - eps_j e_j)) / (2 eps_j). With
    eps=None the step is 1e-6 * max(1, |x_j|).
    """
    x = _as_vector(x)
    if eps is None:
        steps = 1e-6 * np.maximum(1.0, np.abs(x))
    else:
        steps = np.broadcast_to(np.asarray(eps, dtype=float), x.shape).astype(float)
        if np.any(steps <= 0):
            raise ValueError("eps must be positive")

    columns = []
    for j in range(x.size):
        delta = np.zeros_like(x)
        delta[j] = steps[j]
        upper = _as_vector(fn(x + delta))
        lower = _as_vector(fn(x - delta))
        columns.append((upper - lower) / (2.0 * steps[j]))

    jacobian = np.column_stack(columns) if columns else np.zeros((0, 0))
    return _check_finite(jacobian, "numeric Jacobian")


@dataclass(frozen=True, eq=False)
class ProcessModel:
    """
    Nonlinear state-space model x(k+1) = f(x(k)) + w, y(k) = h(x(k)) + v

    Q is the process-noise covariance, R the measurement-noise covariance
    (R must be positive definite). Jacobians are optional; missing ones are
    computed by central differences.
    """

    state_dim: int
    f: VectorFn
    h: VectorFn
    Q: np.ndarray
    R: np.ndarray
    F_jac: Optional[Callable[[np.ndarray], np.ndarray]] = None
    H_jac: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.state_dim < 1:
            raise ValueError("state_dim must be positive")
        Q = _as_matrix(self.Q, self.state_dim, self.state_dim, "Q")
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if R.shape[0] != R.shape[1]:
            raise ValueError("R must be square")
        for name, matrix in (("Q", Q), ("R", R)):
            if not np.all(np.isfinite(matrix)):
                raise ValueError(f"{name} must be finite")
            if not np.allclose(matrix, matrix.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
        if np.min(np.linalg.eigvalsh(Q)) < -EPS_SYM:
            raise ValueError("Q must be positive semi-definite")
        if np.min(np.linalg.eigvalsh(R)) <= 0:
            raise ValueError("R must be positive definite")
        object.__setattr__(self, "Q", _frozen(Q))
        object.__setattr__(self, "R", _frozen(R))

    @property
    def obs_dim(self) -> int:
        return self.R.shape[0]

    def transition_jacobian(self, x: np.ndarray) -> np.ndarray:
        if self.F_jac is not None:
            return np.atleast_2d(np.asarray(self.F_jac(x), dtype=float))
        return numeric_jacobian(self.f, x)

    def observation_jacobian(self, x: np.ndarray) -> np.ndarray:
        if self.H_jac is not None:
            return np.atleast_2d(np.asarray(self.H_jac(x), dtype=float))
        return numeric_jacobian(self.h, x)

    @classmethod
    def random_walk(cls, q: float = 0.1, r: float = 0.1) -> "ProcessModel":
        """Scalar random walk observed directly (f(x) = x, h(x) = x)"""
        return cls(
            state_dim=1,
            f=lambda x: x,
            h=lambda x: x,
            Q=[[q]],
            R=[[r]],
            F_jac=lambda x: np.eye(1),
            H_jac=lambda x: np.eye(1),
        )

    @classmethod
    def linear(cls, A, H, Q, R) -> "ProcessModel":
        """Linear model x' = A x, y = H x with analytic Jacobians"""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        H = np.atleast_2d(np.asarray(H, dtype=float))
        return cls(
            state_dim=A.shape[0],
            f=lambda x: A @ x,
            h=lambda x: H @ x,
            Q=Q,
            R=R,
            F_jac=lambda x: A,
            H_jac=lambda x: H,
        )


@dataclass(frozen=True, eq=False)
class FilterState:
    """
    Estimate x_hat with covariance P at `tick`

    `innovation` is y - h(x_prior) of the update that produced this state
    (None for priors and initial states).
    """

    x_hat: np.ndarray
    P: np.ndarray
    tick: int = 0
    innovation: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        x_hat = _as_vector(self.x_hat)
        P = _as_matrix(self.P, x_hat.size, x_hat.size, "P")
        if self.tick < 0:
            raise ValueError("tick must be non-negative")
        if not np.allclose(P, P.T, atol=EPS_SYM, rtol=1e-9):
            raise ValueError("P must be symmetric")
        if np.any(np.diag(P) < -EPS_SYM):
            raise ValueError("P diagonal must be non-negative")
        if P.shape[0] > 1 and np.min(np.linalg.eigvalsh(P)) < -EPS_SYM * max(1.0, np.max(np.abs(P))):
            raise ValueError("P must be positive semi-definite")
        object.__setattr__(self, "x_hat", _frozen(x_hat))
        object.__setattr__(self, "P", _frozen(P))
        if self.innovation is not None:
            object.__setattr__(self, "innovation", _frozen(_as_vector(self.innovation)))

    @classmethod
    def scalar(cls, x0: float, p0: float = 1.0, tick: int = 0) -> "FilterState":
        return cls(x_hat=[x0], P=[[p0]], tick=tick)

    @property
    def estimate(self) -> float:
        """First state component (the value itself for scalar models)"""
        return float(self.x_hat[0])

    @property
    def variance(self) -> float:
        return float(self.P[0, 0])

    @property
    def innovation_magnitude(self) -> Optional[float]:
        if self.innovation is None:
            return None
        return float(np.linalg.norm(self.innovation))


def predict(state: FilterState, model: ProcessModel) -> FilterState:
    """Prediction step; returns the prior at tick + 1"""
    x = state.x_hat
    F = _check_finite(model.transition_jacobian(x), "transition Jacobian")
    x_prior = _check_finite(_as_vector(model.f(x)), "state transition f")
    if x_prior.size != model.state_dim or F.shape != (model.state_dim, model.state_dim):
        raise DimensionMismatchError("transition output does not match state_dim")
    P_prior = _check_finite(F @ state.P @ F.T + model.Q, "prior covariance")
    return FilterState(x_hat=x_prior, P=_symmetrize(P_prior), tick=state.tick + 1)


def update(prior: FilterState, y, model: ProcessModel) -> FilterState:
    """Measurement update; the posterior keeps the prior's tick"""
    y = _as_vector(y)
    x = prior.x_hat
    predicted = _check_finite(_as_vector(model.h(x)), "observation h")
    if y.size != predicted.size or y.size != model.obs_dim:
        raise DimensionMismatchError(
            f"measurement has dimension {y.size}, observation model expects {predicted.size}"
        )
    H = _check_finite(model.observation_jacobian(x), "observation Jacobian")
    innovation = y - predicted

    S = H @ prior.P @ H.T + model.R
    try:
        # K = P H^T S^-1, solved as S^T K^T = (P H^T)^T
        K = np.linalg.solve(S.T, (prior.P @ H.T).T).T
    except np.linalg.LinAlgError:
        raise SingularBracketError("H P H^T + R is singular; check R") from None
    if not np.all(np.isfinite(K)):
        raise SingularBracketError("H P H^T + R is ill-conditioned; check R")

    x_post = _check_finite(x + K @ innovation, "posterior state")
    identity = np.eye(model.state_dim)
    P_post = _check_finite((identity - K @ H) @ prior.P, "posterior covariance")
    return FilterState(
        x_hat=x_post,
        P=_symmetrize(P_post),
        tick=prior.tick,
        innovation=innovation,
    )


def step(state: FilterState, y, model: ProcessModel) -> FilterState:
    """Predict then update"""
    return update(predict(state, model), y, model)


def run_filter(
    model: ProcessModel,
    init: FilterState,
    measurements: Union[Trace, Sequence],
) -> List[FilterState]:
    """
    Filter a measurement sequence, one posterior per measurement

    Errors are re-raised with the failing measurement tick attached.
    """
    if isinstance(measurements, Trace):
        observations = [(r.timestamp, r.value) for r in measurements.readings]
    else:
        observations = list(enumerate(measurements))
    if not observations:
        raise ValueError("measurement sequence must not be empty")

    states: List[FilterState] = []
    state = init
    for tick, y in observations:
        try:
            state = step(state, y, model)
        except NumericError as exc:
            raise exc.at_tick(tick)
        states.append(state)
    return states


def filter_frame(measurements: Trace, states: Iterable[FilterState]) -> pd.DataFrame:
    """Per-tick table: tick, measurement, estimate, variance, innovation"""
    states = list(states)
    return pd.DataFrame(
        {
            "tick": measurements.timestamps,
            "measurement": measurements.values,
            "estimate": [s.estimate for s in states],
            "variance": [s.variance for s in states],
            "innovation": [s.innovation_magnitude for s in states],
        }
    )


def write_filter_csv(path, measurements: Trace, states: Iterable[FilterState]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    filter_frame(measurements, states).to_csv(path, index=False, encoding="utf-8")
    return path


__all__ = [
    "EPS_SYM",
    "FilterState",
    "ProcessModel",
    "filter_frame",
    "numeric_jacobian",
    "predict",
    "run_filter",
    "step",
    "update",
    "write_filter_csv",
]
