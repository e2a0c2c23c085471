import numpy as np
import pytest

from engines.cascade import (
    Cascade,
    bits_to_symbols,
    check_horizon,
    compose_bcsk,
    evaluate,
    pulse_train,
    sample_and_decide,
    sample_counts,
    symbols_to_bits,
)
from model.errors import ConfigError, DomainError, GridError
from model.trace import SignalTrace
from model.units import concentration_to_count
from synthesis.layout import bcsk_layout

TS = 1.0
HORIZON = 1800.0


@pytest.fixture(scope="module")
def bcsk(species, geometry):
    return Cascade(bcsk_layout(geometry), species, TS, HORIZON)


def bit_one(cascade, start=60.0):
    return pulse_train([1], 0, 50.0, 10.0, HORIZON, cascade.n, TS, start)


def test_silent_source_releases_nothing(bcsk):
    result = bcsk.evaluate({})
    assert not np.any(result.released("tx0").values)
    assert not np.any(result.transmitted())


def test_operator_composition_matches_sweep(bcsk):
    source = bit_one(bcsk)
    result = bcsk.evaluate({0: source})
    composed = compose_bcsk(bcsk, source)
    np.testing.assert_allclose(composed["tx"].values, result.released("tx0").values, rtol=1e-12, atol=0)
    np.testing.assert_allclose(composed["rx"].values, result.sinks[0].values, rtol=1e-9, atol=1e-15)


def test_transmitter_answers_after_the_pulse(bcsk):
    result = bcsk.evaluate({0: bit_one(bcsk)})
    tx = result.released("tx0").values
    assert tx[:61].max() <= 1e-9 * tx.max()
    assert tx.max() > 0
    assert result.molecules("tx0").sum() > 0


def test_delaying_the_input_delays_the_transmitter(bcsk):
    early = bcsk.evaluate({0: bit_one(bcsk, start=60.0)}).released("tx0").values
    late = bcsk.evaluate({0: bit_one(bcsk, start=300.0)}).released("tx0").values
    scale = early.max()
    np.testing.assert_allclose(late[240:], early[:-240], rtol=0, atol=1e-9 * scale)


def test_results_do_not_share_state(bcsk):
    first = bcsk.evaluate({0: bit_one(bcsk)})
    peak = first.released("tx0").values.max()
    bcsk.evaluate({})
    assert first.released("tx0").values.max() == peak


def test_input_on_another_grid_is_rejected(bcsk):
    with pytest.raises(GridError):
        bcsk.evaluate({0: SignalTrace.zeros(10, TS)})


def test_undefined_species(species, geometry):
    partial = {k: v for k, v in species.items() if k != "Repressor-TetR"}
    with pytest.raises(ConfigError, match="Repressor-TetR"):
        Cascade(bcsk_layout(geometry), partial, TS, 60.0)


def test_evaluate_shortcut_returns_sink_traces(species, geometry):
    layout = bcsk_layout(geometry)
    sinks = evaluate(layout, {}, 120.0, species, TS)
    assert list(sinks) == [0]
    assert len(sinks[0]) == 120


def test_sample_counts_window():
    trace = SignalTrace(np.full(20, 2.0), 1.0)
    volume = 10.0
    single = sample_counts(trace, [3.0], volume)
    windowed = sample_counts(trace, [3.0], volume, window=5.0)
    assert single[0] == pytest.approx(concentration_to_count(2.0, volume))
    assert windowed[0] == pytest.approx(5 * single[0])
    with pytest.raises(DomainError):
        sample_counts(trace, [18.0], volume, window=5.0)


def test_sample_and_decide():
    trace = SignalTrace([0.0, 1.0, 10.0, 0.5], 1.0)
    volume = 1.0 / concentration_to_count(1.0, 1.0)
    assert sample_and_decide(trace, [0.0, 1.0, 2.0, 3.0], 0.9, volume) == [0, 1, 1, 0]
    assert sample_and_decide(trace, [1.0, 2.0], 0.0, volume) == [1, 1]
    with pytest.raises(DomainError):
        sample_and_decide(trace, [0.0], -1.0, volume)


def test_pulse_train_follows_the_bits():
    dose = pulse_train([1, 0, 3, 2], 0, 50.0, 10.0, 100.0, 400, 1.0)
    assert dose.values.sum() == pytest.approx(2 * 50.0 * 10.0)
    assert dose.values[0] == 50.0
    assert dose.values[100] == 0.0
    assert dose.values[200] == 50.0
    upper = pulse_train([1, 0, 3, 2], 1, 50.0, 10.0, 100.0, 400, 1.0)
    assert upper.values[200] == 50.0 and upper.values[300] == 50.0 and upper.values[0] == 0.0


def test_bits_and_symbols():
    bits = [1, 0, 0, 1, 1, 1]
    assert bits_to_symbols(bits, 2) == [2, 1, 3]
    assert symbols_to_bits([2, 1, 3], 2) == bits
    with pytest.raises(DomainError):
        bits_to_symbols(bits, 4)


def test_horizon_must_cover_the_last_sample():
    check_horizon(3 * 3600 + 1, 1, 3600.0, 3 * 3600.0)
    with pytest.raises(ConfigError, match="too short"):
        check_horizon(10 * 3600, 2, 5 * 3600.0, 5 * 3600.0, window=600.0)
