import numpy as np
import pytest

from model.errors import DomainError, GridError
from model.trace import SignalTrace, grid_length, resample, zero_like
from model.types import PulseSpec


def test_pulse_covers_partial_intervals():
    trace = SignalTrace.from_pulse(PulseSpec(50.0, 2.5, start=1.0), 5, 1.0)
    assert trace.values.tolist() == [0.0, 50.0, 50.0, 25.0, 0.0]
    assert trace.values.sum() == pytest.approx(50.0 * 2.5)


def test_release_rate_scales_the_dose():
    slow = SignalTrace.from_pulse(PulseSpec(50.0, 10.0, release_rate=0.1), 20, 1.0)
    assert slow.values.sum() == pytest.approx(50.0)


def test_trace_is_read_only():
    trace = SignalTrace([1.0, 2.0], 0.5)
    with pytest.raises(ValueError):
        trace.values[0] = 3.0


def test_negative_residue_is_clamped():
    trace = SignalTrace([1.0, -1e-15, 2.0], 1.0)
    assert trace.values.min() == 0.0


def test_negative_values_rejected_without_clamp():
    with pytest.raises(DomainError):
        SignalTrace([1.0, -0.5], 1.0, clamp=False)


def test_addition_needs_the_same_grid():
    a = SignalTrace([1.0, 2.0], 1.0)
    b = SignalTrace([1.0, 2.0], 0.5)
    with pytest.raises(GridError):
        a + b
    assert (a + a).values.tolist() == [2.0, 4.0]
    assert sum([a, a, a]).values.tolist() == [3.0, 6.0]


def test_delay_keeps_length():
    trace = SignalTrace([1.0, 2.0, 3.0], 1.0).delayed(2)
    assert trace.values.tolist() == [0.0, 0.0, 1.0]


def test_index_of_and_peak():
    trace = SignalTrace([0.0, 4.0, 1.0], 0.5, t0=10.0)
    assert trace.index_of(10.6) == 1
    assert trace.peak() == (10.5, 4.0)
    with pytest.raises(DomainError):
        trace.index_of(11.5)


def test_grid_length_rounds_up():
    assert grid_length(10.0, 3.0) == 4
    assert grid_length(3600.0, 0.1) == 36000


def test_resample_refine_keeps_shared_points():
    trace = SignalTrace([1.0, 3.0, 2.0], 1.0)
    fine = resample(trace, 0.25)
    assert len(fine) == 12
    assert fine.values[::4].tolist() == trace.values.tolist()
    assert fine.values[2] == pytest.approx(2.0)


def test_resample_coarsen_takes_left_points():
    trace = SignalTrace(np.arange(6.0), 0.5)
    assert resample(trace, 1.0).values.tolist() == [0.0, 2.0, 4.0]
    with pytest.raises(GridError):
        resample(trace, 0.75)


def test_zero_like_matches_grid():
    trace = SignalTrace([1.0, 2.0], 0.5, t0=1.0)
    assert zero_like(trace).same_grid(trace)
