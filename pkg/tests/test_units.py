import math

import pytest

from model.errors import ConfigError, DomainError
from model.units import (
    concentration_to_count,
    count_to_concentration,
    format_quantity,
    parse_quantity,
    per_minute_to_per_second,
    per_second_to_per_minute,
)


@pytest.mark.parametrize(
    "text, dimension, expected",
    [
        ("0.05 /min", "rate", 0.05 / 60),
        ("0.05/min", "rate", 0.05 / 60),
        ("89 um^2/s", "diffusivity", 89.0),
        ("89 µm²/s", "diffusivity", 89.0),
        ("9 um/s", "velocity", 9.0),
        ("0.0369 nM/min", "production", 0.0369 / 60),
        ("1550 /uM", "affinity", 1.55),
        ("0.26 /nM", "affinity", 0.26),
        ("2 uM", "concentration", 2000.0),
        ("10 h", "time", 36000.0),
        ("30 min", "time", 1800.0),
        ("1.6605 um", "length", 1.6605),
        ("1 /(nM s)", "bimolecular", 1.0),
    ],
)
def test_parse_quantity_converts_to_canonical_units(text, dimension, expected):
    assert parse_quantity(text, dimension) == pytest.approx(expected, rel=1e-12)


def test_bare_number_is_rejected():
    with pytest.raises(ConfigError, match="no unit"):
        parse_quantity(0.01, "time")


def test_unknown_unit_is_rejected():
    with pytest.raises(ConfigError, match="unknown unit"):
        parse_quantity("3 parsecs", "length")


def test_dimension_mismatch_reports_location():
    with pytest.raises(ConfigError) as excinfo:
        parse_quantity("5 um", "time", source="run.json", line=7)
    assert excinfo.value.line == 7
    assert str(excinfo.value).startswith("run.json:7:")


def test_format_quantity_parses_back():
    text = format_quantity(0.125, "rate")
    assert parse_quantity(text, "rate") == 0.125


def test_rate_conversions_are_inverse():
    assert per_second_to_per_minute(per_minute_to_per_second(0.15)) == pytest.approx(0.15)


def test_one_nanomolar_in_one_cubic_micrometer():
    assert concentration_to_count(1.0, 1.0) == pytest.approx(0.602214076, rel=1e-9)
    assert count_to_concentration(concentration_to_count(3.5, 24.9), 24.9) == pytest.approx(3.5)


def test_volume_must_be_positive():
    with pytest.raises(DomainError):
        count_to_concentration(10, 0.0)
    assert math.isfinite(count_to_concentration(0, 1e-6))
