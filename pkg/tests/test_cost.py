import numpy as np
import pytest

import oracles
from admitlearn.admittance import ErrorState
from admitlearn.cost import CostWeights, batch_cost, fitave, itae, trajectory_cost
from admitlearn.errors import DomainError


def states(e, e_dot):
    return [ErrorState(np.atleast_1d(a), np.atleast_1d(b)) for a, b in zip(e, e_dot)]


def test_zero_trajectory():
    assert trajectory_cost(states([0.0] * 10, [0.0] * 10), 0.01, CostWeights()) == 0.0


def test_unit_error_integrates_to_half():
    dt = 1e-3
    n = 1001  # t in [0, 1]
    got = trajectory_cost(states([1.0] * n, [0.0] * n), dt, CostWeights(w=1.0))
    assert abs(got - 0.5) <= dt * 1.0


def test_hand_example():
    # 0*(...) + 1*(0.4*1 + 0.6*0) + 2*(0.4*2 + 0.6*1) = 3.2
    got = trajectory_cost(states([0.0, 1.0, 2.0], [0.0, 0.0, 1.0]), 1.0, CostWeights(w=0.4))
    assert got == pytest.approx(3.2, abs=1e-15)


def test_tuple_input_matches_states():
    e = np.array([0.0, 1.0, 2.0])
    v = np.array([0.0, 0.0, 1.0])
    assert trajectory_cost((e, v), 1.0, CostWeights(w=0.4)) == trajectory_cost(states(e, v), 1.0, CostWeights(w=0.4))


def test_projections():
    rng = np.random.default_rng(0)
    s = states(rng.normal(size=50), rng.normal(size=50))
    assert trajectory_cost(s, 0.01, CostWeights(w=1.0)) == itae(s, 0.01)
    assert trajectory_cost(s, 0.01, CostWeights(w=0.0)) == fitave(s, 0.01)


def test_matches_oracle_multi_axis():
    rng = np.random.default_rng(1)
    e = rng.normal(size=(40, 3))
    v = rng.normal(size=(40, 3))
    want = oracles.cost(e.tolist(), v.tolist(), 0.01, 0.3)
    assert trajectory_cost((e, v), 0.01, CostWeights(w=0.3)) == pytest.approx(want, rel=1e-12)


def test_batch_matches_scalar():
    rng = np.random.default_rng(2)
    e = rng.normal(size=(4, 30, 2))
    v = rng.normal(size=(4, 30, 2))
    got = batch_cost(e, v, 0.01, 0.4)
    for b in range(4):
        assert got[b] == pytest.approx(trajectory_cost((e[b], v[b]), 0.01, CostWeights(w=0.4)), rel=1e-13)


def test_axis_scale():
    e = np.ones((3, 2))
    v = np.zeros((3, 2))
    plain = trajectory_cost((e, v), 1.0, CostWeights(w=1.0))
    scaled = trajectory_cost((e, v), 1.0, CostWeights(w=1.0, axis_scale=(1.0, 0.0)))
    assert scaled == pytest.approx(plain / 2)


def test_later_pulse_costs_more():
    early = np.zeros(100)
    late = np.zeros(100)
    early[10:15] = 1.0
    late[60:65] = 1.0
    w = CostWeights(w=0.5)
    assert trajectory_cost((late, late), 0.01, w) > trajectory_cost((early, early), 0.01, w)


@pytest.mark.parametrize("bad", [[], (np.zeros(0), np.zeros(0))])
def test_empty_sequence(bad):
    with pytest.raises(DomainError):
        trajectory_cost(bad, 0.01, CostWeights())


@pytest.mark.parametrize("kwargs", [{"w": -0.1}, {"w": 1.1}, {"horizon_T": 0.0}])
def test_weight_validation(kwargs):
    with pytest.raises(DomainError):
        CostWeights(**kwargs)
