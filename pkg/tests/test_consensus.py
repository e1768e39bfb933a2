import numpy as np
import pandas as pd
import pytest

from fusion_monitor.core.errors import DimensionMismatchError, DisconnectedGraphError
from fusion_monitor.filters.consensus import (
    CommGraph,
    ConsensusState,
    graph_from_edges,
    metropolis_weights,
    mse_dispersion,
    run_consensus,
    write_mse_csv,
)


def test_metropolis_weights_are_doubly_stochastic():
    W = metropolis_weights(CommGraph.path(4))
    np.testing.assert_allclose(W, W.T)
    np.testing.assert_allclose(W.sum(axis=0), 1.0)
    np.testing.assert_allclose(W.sum(axis=1), 1.0)
    assert (W >= 0).all()
    assert W[0, 1] == pytest.approx(1 / 3)
    assert W[0, 0] == pytest.approx(2 / 3)
    assert W[0, 2] == 0.0


def test_triangle_agrees_in_one_round():
    graph = graph_from_edges(3, [(0, 1), (1, 2), (0, 2)])
    result = run_consensus(ConsensusState([1.0, 2.0, 3.0]), graph, tol=1e-12)
    assert result.converged
    assert result.iterations == 1
    assert result.mse_history[0] == pytest.approx(2 / 3)
    assert result.mse_history[1] < 1e-12
    np.testing.assert_allclose(result.estimates, 2.0, atol=1e-12)
    assert result.agreed_value == pytest.approx(2.0)


def test_identical_estimates_need_no_rounds():
    result = run_consensus(ConsensusState([4.0, 4.0]), CommGraph.complete(2))
    assert result.iterations == 0
    assert result.mse_history == [0.0]


def test_random_graphs_reach_the_average():
    for seed in range(50):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 21))
        graph = CommGraph.random_connected(n, 0.3, rng)
        values = rng.normal(20.0, 3.0, size=n)
        result = run_consensus(ConsensusState(values), graph, tol=1e-14, max_iter=20_000)
        assert result.converged
        np.testing.assert_allclose(result.estimates, values.mean(), atol=1e-6)
        assert result.agreed_value == pytest.approx(values.mean(), abs=1e-9)
        history = np.asarray(result.mse_history)
        assert (np.diff(history) <= 1e-15).all()


def test_disconnected_graph_is_rejected():
    graph = graph_from_edges(4, [(0, 1), (2, 3)])
    assert not graph.is_connected
    with pytest.raises(DisconnectedGraphError):
        run_consensus(ConsensusState([1.0, 2.0, 3.0, 4.0]), graph)


def test_estimate_count_must_match_graph():
    with pytest.raises(DimensionMismatchError):
        run_consensus(ConsensusState([1.0, 2.0]), CommGraph.complete(3))


def test_invalid_edges():
    with pytest.raises(ValueError):
        graph_from_edges(2, [(1, 1)])
    with pytest.raises(ValueError):
        graph_from_edges(2, [(0, 5)])


def test_round_limit_reports_non_convergence():
    result = run_consensus(ConsensusState([0.0, 0.0, 0.0, 0.0, 10.0]), CommGraph.path(5), max_iter=1)
    assert not result.converged
    assert result.iterations == 1
    assert len(result.mse_history) == 2


def test_pairwise_dispersion_doubles():
    state = ConsensusState([1.0, 3.0])
    assert mse_dispersion(state) == pytest.approx(1.0)
    assert mse_dispersion(state, pairwise=True) == pytest.approx(2.0)


def test_write_mse_csv(tmp_path):
    result = run_consensus(ConsensusState([1.0, 2.0, 3.0]), CommGraph.path(3), tol=1e-6)
    frame = pd.read_csv(write_mse_csv(tmp_path / "mse.csv", result.mse_history))
    assert list(frame.columns) == ["iteration", "mse"]
    assert list(frame["iteration"]) == list(range(result.iterations + 1))
