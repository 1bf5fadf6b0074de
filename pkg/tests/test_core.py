import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aui.core import (
    ImaginedTrajectory,
    ReplayBuffer,
    Transition,
    buffer_bootstrap_sample,
    buffer_push,
    euclidean_error,
    trajectory_advance,
)
from aui.errors import EmptyBufferError, ExhaustedTrajectoryError, InvalidArgumentError

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_euclidean_examples():
    assert euclidean_error([0, 0], [3, 4]) == 5.0
    s = np.array([0.3, -1.2, 7.0])
    assert euclidean_error(s, s) == 0.0
    assert euclidean_error([1, 2, 3], [1, 2, 4]) == 1.0


def test_euclidean_dimension_mismatch():
    with pytest.raises(InvalidArgumentError):
        euclidean_error([1, 2], [1, 2, 3])
    with pytest.raises(InvalidArgumentError):
        euclidean_error([np.nan, 0], [0, 0])


@given(arrays(np.float64, 3, elements=finite), arrays(np.float64, 3, elements=finite),
       arrays(np.float64, 3, elements=finite))
def test_euclidean_is_a_metric(x, y, z):
    assert euclidean_error(x, y) == euclidean_error(y, x)
    assert euclidean_error(x, y) >= 0
    assert euclidean_error(x, z) <= euclidean_error(x, y) + euclidean_error(y, z) + 1e-9


def _traj(H=4, d_s=2, d_a=1):
    rng = np.random.default_rng(3)
    return ImaginedTrajectory(
        np.zeros(d_s), rng.normal(size=(H, d_a)), rng.normal(size=(H, d_s)),
        rng.uniform(size=(H, d_s)), rng.normal(size=H),
    )


def test_trajectory_advance_yields_stored_sequence_then_errors():
    traj = _traj()
    for i in range(traj.horizon):
        a, s, sig = trajectory_advance(traj)
        np.testing.assert_array_equal(a, traj.actions[i])
        np.testing.assert_array_equal(s, traj.pred_states[i])
        np.testing.assert_array_equal(sig, traj.pred_sigmas[i])
        assert traj.cursor == i + 1
    assert traj.exhausted
    with pytest.raises(ExhaustedTrajectoryError):
        trajectory_advance(traj)


def test_trajectory_validation():
    with pytest.raises(InvalidArgumentError):
        ImaginedTrajectory(np.zeros(2), np.zeros((3, 1)), np.zeros((2, 2)), np.zeros((3, 2)), np.zeros(3))
    with pytest.raises(InvalidArgumentError):
        ImaginedTrajectory(np.zeros(2), np.zeros((1, 1)), np.zeros((1, 2)), -np.ones((1, 2)), np.zeros(1))


def _tr(v):
    return Transition(np.array([v, v + 1.0]), np.array([0.5 * v]), np.array([v + 2.0, v]), -v)


def test_buffer_push_and_capacity():
    buf = ReplayBuffer()
    buffer_push(buf, _tr(1.0))
    assert len(buf) == 1
    assert buf[0] == _tr(1.0)

    small = ReplayBuffer(capacity=2)
    for v in (1.0, 2.0, 3.0):
        small.push(_tr(v))
    assert len(small) == 2
    assert small[0] == _tr(2.0)
    assert small[1] == _tr(3.0)


def test_buffer_rejects_bad_dimensions():
    buf = ReplayBuffer(2, 1)
    with pytest.raises(InvalidArgumentError):
        buf.push(Transition(np.zeros(3), np.zeros(1), np.zeros(3), 0.0))


def test_bootstrap_sample():
    buf = ReplayBuffer()
    buf.push(_tr(4.0))
    assert buffer_bootstrap_sample(buf, np.random.default_rng(0), 3) == [_tr(4.0)] * 3

    for v in range(10):
        buf.push(_tr(float(v)))
    a = buf.bootstrap_sample(np.random.default_rng(11), 7)
    b = buf.bootstrap_sample(np.random.default_rng(11), 7)
    assert a == b

    with pytest.raises(EmptyBufferError):
        ReplayBuffer(2, 1).bootstrap_sample(np.random.default_rng(0), 1)


def test_bootstrap_distinct_fraction():
    # oracle: simulate bootstrap draws directly, compare with 1 - 1/e
    n = 20000
    buf = ReplayBuffer(1, 1)
    rows = np.zeros((n, 4), np.float32)
    rows[:, 0] = np.arange(n)
    for r in rows:
        buf.push_row(r)
    idx = buf.bootstrap_indices(np.random.default_rng(5), n)
    frac = len(np.unique(idx)) / n
    assert abs(frac - (1 - np.exp(-1))) < 0.01


@settings(max_examples=25)
@given(arrays(np.float32, (5, 7), elements=st.floats(-1e6, 1e6, width=32)))
def test_buffer_rows_round_trip(rows):
    buf = ReplayBuffer(3, 0 + 1)
    for r in rows:
        buf.push(Transition(r[:3], r[3:4], r[4:7], 0.0))
    s, a, s2, _ = buf.arrays()
    np.testing.assert_array_equal(s, rows[:, :3])
    np.testing.assert_array_equal(a, rows[:, 3:4])
    np.testing.assert_array_equal(s2, rows[:, 4:7])
