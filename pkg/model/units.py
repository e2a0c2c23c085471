"""
Canonical units (seconds, micrometers, nanomolar) and the quantity parser used
by every scenario file.

Quantities are written as strings with an explicit unit, e.g. "0.05/min",
"89 um^2/s" or "10 h". Only the units appearing in the channel and cell
parameter tables are known; anything else is rejected.
"""

import math
import re

from model.errors import ConfigError, DomainError

AVOGADRO = 6.02214076e23
# 1 um^3 = 1e-15 L and 1 nM = 1e-9 mol/L
_NM_UM3_PER_COUNT = 1e24 / AVOGADRO

SECONDS_PER_MINUTE = 60.0
SECONDS_PER_HOUR = 3600.0

# unit string -> (factor to canonical, dimension)
UNITS = {
    "s": (1.0, "time"),
    "min": (SECONDS_PER_MINUTE, "time"),
    "h": (SECONDS_PER_HOUR, "time"),
    "um": (1.0, "length"),
    "um^2": (1.0, "area"),
    "um^3": (1.0, "volume"),
    "nm": (1.0, "concentration"),
    "um_conc": (1e3, "concentration"),
    "um^2/s": (1.0, "diffusivity"),
    "um/s": (1.0, "velocity"),
    "/s": (1.0, "rate"),
    "/min": (1.0 / SECONDS_PER_MINUTE, "rate"),
    "/h": (1.0 / SECONDS_PER_HOUR, "rate"),
    "nm/s": (1.0, "production"),
    "nm/min": (1.0 / SECONDS_PER_MINUTE, "production"),
    "/nm": (1.0, "affinity"),
    "/um_conc": (1e-3, "affinity"),
    "/(nms)": (1.0, "bimolecular"),
    "/(nmmin)": (1.0 / SECONDS_PER_MINUTE, "bimolecular"),
    "molecules": (1.0, "count"),
}

_QUANTITY = re.compile(
    r"^\s*(?P<value>[-+]?(\d+(\.\d*)?|\.\d+)([eE][-+]?\d+)?)\s*(?P<unit>.*?)\s*$"
)


def _normalize_unit(unit: str) -> str:
    u = unit.strip()
    u = u.replace("µ", "u").replace("μ", "u").replace("²", "^2").replace("³", "^3")
    u = u.replace("*", "").replace(" ", "").replace("·", "")
    if u.startswith("1/"):
        u = u[1:]
    if u.endswith("^-1") and not u.startswith("/"):
        u = "/" + u[: -len("^-1")]
    low = u.lower()
    # "uM" (micromolar) and "um" (micrometer) only differ by case
    if u in ("uM", "/uM"):
        return u.lower().replace("um", "um_conc")
    return low


def parse_quantity(text, dimension=None, source=None, line=None) -> float:
    """
    Parse "<number> <unit>" into the canonical unit of its dimension.

    Args:
        text (str): The quantity, unit required.
        dimension (str): Expected dimension; a mismatch raises ConfigError.

    Returns:
        float: The value in s, um, nM (or their products/quotients).
    """
    if not isinstance(text, str):
        raise ConfigError(
            f"quantity {text!r} has no unit; write it as e.g. \"{text} /s\"",
            source,
            line,
        )
    match = _QUANTITY.match(text)
    if not match or not match.group("unit"):
        raise ConfigError(f"cannot parse quantity {text!r} (unit required)", source, line)
    unit = _normalize_unit(match.group("unit"))
    if unit not in UNITS:
        raise ConfigError(f"unknown unit {match.group('unit')!r} in {text!r}", source, line)
    factor, dim = UNITS[unit]
    if dimension is not None and dim != dimension:
        raise ConfigError(
            f"{text!r} is a {dim}, expected a {dimension}", source, line
        )
    return float(match.group("value")) * factor


def format_quantity(value: float, dimension: str) -> str:
    """Render a canonical value back into the string form used by scenario files."""
    canonical = {
        "time": "s",
        "length": "um",
        "area": "um^2",
        "volume": "um^3",
        "concentration": "nM",
        "diffusivity": "um^2/s",
        "velocity": "um/s",
        "rate": "/s",
        "production": "nM/s",
        "affinity": "/nM",
        "bimolecular": "/(nM s)",
        "count": "molecules",
    }[dimension]
    return f"{value!r} {canonical}"


def per_minute_to_per_second(rate: float) -> float:
    return rate / SECONDS_PER_MINUTE


def per_second_to_per_minute(rate: float) -> float:
    return rate * SECONDS_PER_MINUTE


def count_to_concentration(count: float, volume: float) -> float:
    """
    Molecule count in a volume (um^3) expressed as nM.
    """
    if not volume > 0:
        raise DomainError(f"volume must be positive, got {volume}")
    return count * _NM_UM3_PER_COUNT / volume


def concentration_to_count(concentration: float, volume: float) -> float:
    """
    Inverse of count_to_concentration: nM in a volume (um^3) as a molecule count.
    """
    if not volume > 0:
        raise DomainError(f"volume must be positive, got {volume}")
    return concentration * volume / _NM_UM3_PER_COUNT


def volume_for(count: float, concentration: float) -> float:
    """Volume (um^3) in which `count` molecules amount to `concentration` nM."""
    if not concentration > 0 or count < 0:
        raise DomainError("need a positive concentration and a non-negative count")
    return count * _NM_UM3_PER_COUNT / concentration


def is_close_relative(a: float, b: float, rel: float = 1e-12) -> bool:
    return math.isclose(a, b, rel_tol=rel, abs_tol=0.0)
