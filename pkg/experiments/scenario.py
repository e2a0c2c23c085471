"""
Scenario resolution: preset file, then a user config deep-merged over it,
then command-line flags. Every physical quantity carries its unit; errors
point at the line of the offending key in the file it came from.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

from blocks.propagation import RELATIVE_CUTOFF
from engines.cascade import CellConstants
from model.errors import ConfigError, DomainError
from model.types import ChannelGeometry, SpeciesParams, Surface
from model.units import format_quantity, parse_quantity
from synthesis.layout import (
    BCSK_THRESHOLD,
    DEFAULT_SPECIES,
    QCSK_PRODUCTION_FACTOR,
    bcsk_layout,
    default_thresholds,
    synthesize_layout,
)
from utils import utils

KINDS = ("impulse", "bcsk", "qcsk", "ber")
ENGINES = ("analytic", "stochastic", "both")

_SPECIES_FIELDS = {
    "beta": "production",
    "theta": "affinity",
    "k_d": "rate",
    "D": "diffusivity",
    "k_a": "velocity",
}
_GEOMETRY_FIELDS = {"H": "length", "R": "length", "u": "velocity", "slab_depth": "length", "agent_radius": "length"}


@dataclass(frozen=True)
class ImpulseSetup:
    """A single release of particles from one surface, watched at several others."""

    species: str
    distance: float
    emit: Surface
    surfaces: tuple
    particles: int


@dataclass
class Scenario:
    name: str
    kind: str
    engine: str
    geometry: ChannelGeometry
    species: dict
    ts: float
    horizon: float
    m: int = 1
    seed: int | None = None
    realizations: int = 1
    substeps: int = 1
    lumped_agents: bool = False
    amplitude: float = 50.0
    duration: float = 10.0
    start: float = 0.0
    release_rate: float = 1.0
    interval: float = 0.0
    sample_delay: float = 0.0
    window: float | None = None
    symbols: tuple = ()
    bits: int = 0
    n_d: tuple = ()
    error_free_n_d: tuple = ()
    intervals: tuple = ()
    thresholds: dict = field(default_factory=dict)
    production_factor: float = 1.0
    lane_width: float = 5.0
    wiring: tuple = DEFAULT_SPECIES
    constants: CellConstants = CellConstants()
    impulse: ImpulseSetup | None = None
    kernel_options: dict = field(default_factory=dict)
    source: str = ""
    resolved: dict = field(default_factory=dict, repr=False)

    def layout(self):
        """The circuit this scenario runs on."""
        if self.kind == "bcsk":
            return bcsk_layout(
                self.geometry, self.lane_width, self.thresholds.get(0, BCSK_THRESHOLD), self.wiring
            )
        return synthesize_layout(
            self.m,
            self.geometry,
            self.wiring,
            self.thresholds or None,
            None if self.m == 2 else self.lane_width,
            self.production_factor,
        )


class _Locator:
    """Maps a key to the file and line it was last set in."""

    def __init__(self):
        self.sources = []

    def add(self, name, text):
        self.sources.append((name, text.splitlines()))

    def __call__(self, key):
        for name, lines in reversed(self.sources):
            for number, line in enumerate(lines, 1):
                if f'"{key}"' in line:
                    return name, number
        return (self.sources[-1][0], None) if self.sources else (None, None)

    def error(self, key, message):
        source, line = self(key)
        return ConfigError(message, source, line)


def deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def load_document(path) -> tuple:
    """Read a JSON scenario; syntax errors become line-anchored ConfigErrors."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    text = utils.read_file(path)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e.msg}", str(path), e.lineno) from e
    if not isinstance(data, dict):
        raise ConfigError("a scenario must be a JSON object", str(path), 1)
    # a run manifest carries its scenario under "scenario"
    if "version" in data and isinstance(data.get("scenario"), dict):
        data = data["scenario"]
    return data, text


def _quantity(doc, key, dimension, locate, default=None):
    if key not in doc:
        if default is None:
            raise locate.error(key, f"missing required quantity {key!r}")
        return default
    source, line = locate(key)
    return parse_quantity(doc[key], dimension, source, line)


def _number(doc, key, locate, default, kind=float):
    value = doc.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)) and value is not None:
        raise locate.error(key, f"{key!r} must be a plain number, got {value!r}")
    return value if value is None else kind(value)


def _table(spec, folder, locate, key):
    """A data table given by name, inline, or as {"table": name, ...overrides}."""
    if isinstance(spec, str):
        spec = {"table": spec}
    if not isinstance(spec, dict):
        raise locate.error(key, f"{key!r} must be a table name or an object")
    base = {}
    if "table" in spec:
        base = utils.load_file_info(folder, spec["table"])
        if not base:
            raise locate.error(key, f"unknown {folder} table {spec['table']!r}")
        locate.add(f"{folder}/{spec['table']}.json", json.dumps(base, indent=2))
    return deep_merge(base, {k: v for k, v in spec.items() if k != "table"})


def parse_species(table: dict, locate) -> dict:
    species = {}
    for name, entry in table.items():
        if not isinstance(entry, dict):
            raise locate.error(name, f"species {name!r} must be an object")
        values = {}
        for attr, dim in _SPECIES_FIELDS.items():
            if attr in entry:
                source, line = locate(name)
                values[attr] = parse_quantity(entry[attr], dim, source, line)
        n = entry.get("n", 1.0)
        if isinstance(n, bool) or not isinstance(n, (int, float)):
            raise locate.error(name, f"{name}: Hill coefficient n must be a plain number")
        try:
            species[name] = SpeciesParams(name, n=float(n), **values)
        except DomainError as e:
            raise locate.error(name, str(e)) from e
    return species


def parse_geometry(table: dict, locate) -> ChannelGeometry:
    values = {}
    for key in ("L", "W"):
        if not isinstance(table.get(key), list):
            raise locate.error(key, f"geometry {key!r} must be a list of lengths")
        source, line = locate(key)
        values[key] = tuple(parse_quantity(v, "length", source, line) for v in table[key])
    for key, dim in _GEOMETRY_FIELDS.items():
        if key in table:
            values[key] = _quantity(table, key, dim, locate)
    try:
        return ChannelGeometry(**values)
    except (DomainError, TypeError) as e:
        raise locate.error("geometry", f"invalid geometry: {e}") from e


def _surface(pair, locate, key):
    if not isinstance(pair, list) or len(pair) != 2:
        raise locate.error(key, f"{key!r} surfaces are [y_lo, y_hi] pairs")
    source, line = locate(key)
    try:
        return Surface(*(parse_quantity(v, "length", source, line) for v in pair))
    except DomainError as e:
        raise ConfigError(str(e), source, line) from e


def _thresholds(doc, locate) -> dict:
    out = {}
    for key, value in doc.get("thresholds", {}).items():
        index = key[1:] if key.startswith("B") else key
        if not index.isdigit():
            raise locate.error(key, f"threshold keys are B0, B1, ..., got {key!r}")
        source, line = locate(key)
        level = parse_quantity(value, "concentration", source, line)
        if level < 0:
            raise ConfigError(f"threshold {key} must be >= 0", source, line)
        out[int(index)] = level
    return out


def build_scenario(doc: dict, locate, name="") -> Scenario:
    kind = doc.get("kind", "bcsk")
    if kind not in KINDS:
        raise locate.error("kind", f"kind must be one of {', '.join(KINDS)}, got {kind!r}")
    engine = doc.get("engine", "analytic")
    if engine not in ENGINES:
        raise locate.error("engine", f"engine must be one of {', '.join(ENGINES)}, got {engine!r}")
    species = parse_species(_table(doc.get("species", "standard"), "species", locate, "species"), locate)
    geometry = parse_geometry(_table(doc.get("geometry", "standard"), "geometry", locate, "geometry"), locate)
    ts = _quantity(doc, "ts", "time", locate, 0.01)
    horizon = _quantity(doc, "horizon", "time", locate)
    if not ts > 0 or not horizon > 0:
        raise locate.error("ts", "ts and horizon must be positive")

    wiring = tuple(doc.get("wiring", DEFAULT_SPECIES))
    for s in wiring:
        if s not in species:
            raise locate.error("wiring", f"wiring species {s!r} is not defined")
    m = _number(doc, "m", locate, 1 if kind == "bcsk" else 2, int)
    thresholds = _thresholds(doc, locate)
    if kind in ("qcsk", "ber") and not thresholds:
        thresholds = default_thresholds(m)

    interval = _quantity(doc, "interval", "time", locate, 0.0)
    intervals = tuple(parse_quantity(v, "time", *locate("intervals")) for v in doc.get("intervals", []))
    if kind == "ber" and not (intervals or interval > 0):
        raise locate.error("intervals", "a BER run needs a bit interval T_b > 0")
    if any(t <= 0 for t in intervals) or interval < 0:
        raise locate.error("interval", "bit intervals must be positive")

    symbols = tuple(doc.get("symbols", ()))
    if any(not isinstance(s, int) or not 0 <= s < 2**m for s in symbols):
        raise locate.error("symbols", f"symbols must be integers in [0, {2**m})")
    bits = _number(doc, "bits", locate, 0, int)
    if kind == "ber" and bits < 16:
        raise locate.error("bits", f"a BER run needs at least 16 bits, got {bits}")
    n_d = tuple(float(v) for v in doc.get("n_d", ()))
    if any(v < 0 for v in n_d):
        raise locate.error("n_d", "detection thresholds N_d must be >= 0")
    error_free = tuple(float(v) for v in doc.get("error_free_n_d", ()))
    if error_free and (len(error_free) != 2 or not 0 <= error_free[0] <= error_free[1]):
        raise locate.error("error_free_n_d", "error_free_n_d must be [low, high] with 0 <= low <= high")

    impulse = None
    if kind == "impulse":
        spec = doc.get("impulse")
        if not isinstance(spec, dict):
            raise locate.error("impulse", "an impulse scenario needs an 'impulse' object")
        if spec.get("species") not in species:
            raise locate.error("species", f"impulse species {spec.get('species')!r} is not defined")
        impulse = ImpulseSetup(
            spec["species"],
            _quantity(spec, "distance", "length", locate),
            _surface(spec.get("emit"), locate, "emit"),
            tuple(_surface(p, locate, "surfaces") for p in spec.get("surfaces", [])),
            _number(spec, "particles", locate, 500, int),
        )
        if not impulse.surfaces:
            raise locate.error("surfaces", "an impulse scenario needs at least one absorbing surface")

    cells = doc.get("cells", {})
    constants = CellConstants(
        xi=_quantity(cells, "xi", "rate", locate, CellConstants.xi),
        eta=_number(cells, "eta", locate, CellConstants.eta),
        k_f=_quantity(cells, "k_f", "bimolecular", locate, CellConstants.k_f),
    )
    realizations = _number(doc, "realizations", locate, 1, int)
    substeps = _number(doc, "substeps", locate, 1, int)
    if realizations < 1 or substeps < 1:
        raise locate.error("realizations", "realizations and substeps must be >= 1")
    seed = _number(doc, "seed", locate, None, int)
    window = _quantity(doc, "window", "time", locate, 0.0) or None

    kernel = doc.get("kernel", {})
    kernel_options = {}
    if "rel_tol" in kernel:
        kernel_options["rel_tol"] = _number(kernel, "rel_tol", locate, RELATIVE_CUTOFF)
    if "resolution" in kernel:
        kernel_options["resolution"] = _quantity(kernel, "resolution", "time", locate)

    source, _ = locate("kind")
    return Scenario(
        name=doc.get("name", name),
        kind=kind,
        engine=engine,
        geometry=geometry,
        species=species,
        ts=ts,
        horizon=horizon,
        m=m,
        seed=seed,
        realizations=realizations,
        substeps=substeps,
        lumped_agents=bool(doc.get("lumped_agents", False)),
        amplitude=_quantity(doc, "amplitude", "concentration", locate, 50.0),
        duration=_quantity(doc, "duration", "time", locate, 10.0),
        start=_quantity(doc, "start", "time", locate, 0.0),
        release_rate=_quantity(doc, "release_rate", "rate", locate, 1.0),
        interval=interval,
        sample_delay=_quantity(doc, "sample_delay", "time", locate, 0.0),
        window=window,
        symbols=symbols,
        bits=bits,
        n_d=n_d,
        error_free_n_d=error_free,
        intervals=intervals,
        thresholds=thresholds,
        production_factor=_number(
            doc, "production_factor", locate, QCSK_PRODUCTION_FACTOR if kind in ("qcsk", "ber") else 1.0
        ),
        lane_width=_quantity(doc, "lane_width", "length", locate, 5.0),
        wiring=wiring,
        constants=constants,
        impulse=impulse,
        kernel_options=kernel_options,
        source=source or "",
        resolved=doc,
    )


def load_scenario(preset: str | None = None, config=None, overrides: dict | None = None) -> Scenario:
    """
    Resolve a scenario.

    Args:
        preset (str): Name of a file in presets/ (e.g. "fig10").
        config (str | Path): JSON file deep-merged over the preset.
        overrides (dict): Flag values (already in scenario syntax) applied last.
    """
    locate = _Locator()
    doc = {}
    if preset:
        doc = utils.load_file_info("presets", preset)
        if not doc:
            raise ConfigError(f"unknown preset {preset!r}")
        locate.add(f"presets/{preset}.json", json.dumps(doc, indent=2))
    if config:
        data, text = load_document(config)
        doc = deep_merge(doc, data)
        locate.add(str(config), text)
    if not doc:
        raise ConfigError("nothing to run: give --preset or --config")
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    if overrides:
        doc = deep_merge(doc, overrides)
        locate.add("command line", json.dumps(overrides, indent=2))
    return build_scenario(doc, locate, name=preset or Path(config).stem)


def species_table(species: dict) -> dict:
    """Species as an inline scenario table with explicit units."""
    return {
        name: {
            **{attr: format_quantity(getattr(p, attr), dim) for attr, dim in _SPECIES_FIELDS.items()},
            "n": p.n,
        }
        for name, p in sorted(species.items())
    }


def geometry_table(geometry: ChannelGeometry) -> dict:
    """Geometry as an inline scenario table with explicit units."""
    table = {key: [format_quantity(v, "length") for v in getattr(geometry, key)] for key in ("L", "W")}
    table.update({key: format_quantity(getattr(geometry, key), dim) for key, dim in _GEOMETRY_FIELDS.items()})
    return table


def run_manifest(scenario: Scenario, extra: dict | None = None) -> dict:
    """
    Everything needed to rerun a scenario, plus what the run resolved it to.

    Species and geometry are written out as values, so the manifest reruns
    the same channel even if the data tables change later.
    """
    g = scenario.geometry
    manifest = {
        "version": utils.get_version(),
        "scenario": {
            **scenario.resolved,
            "species": species_table(scenario.species),
            "geometry": geometry_table(g),
        },
        "resolved": {
            "kind": scenario.kind,
            "engine": scenario.engine,
            "m": scenario.m,
            "ts_s": scenario.ts,
            "horizon_s": scenario.horizon,
            "seed": scenario.seed,
            "realizations": scenario.realizations,
            "substeps": scenario.substeps,
            "geometry": {
                "L_um": list(g.L),
                "W_um": list(g.W),
                "H_um": g.H,
                "R_um": g.R,
                "u_um_per_s": g.u,
                "slab_depth_um": g.slab_depth,
                "agent_radius_um": g.agent_radius,
            },
            "species": {
                name: {"beta_nM_per_s": p.beta, "theta_per_nM": p.theta, "n": p.n, "k_d_per_s": p.k_d,
                       "D_um2_per_s": p.D, "k_a_um_per_s": p.k_a}
                for name, p in sorted(scenario.species.items())
            },
            "thresholds_nM": {f"B{j}": v for j, v in sorted(scenario.thresholds.items())},
            "production_factor": scenario.production_factor,
            "cells": {"xi_per_s": scenario.constants.xi, "eta": scenario.constants.eta,
                      "k_f_per_nM_s": scenario.constants.k_f},
        },
    }
    if extra:
        manifest.update(extra)
    return manifest


def load_geometry(name: str = "standard") -> ChannelGeometry:
    """A geometry table from geometry/ by name."""
    locate = _Locator()
    return parse_geometry(_table(name, "geometry", locate, "geometry"), locate)


def load_species(name: str = "standard") -> dict:
    """A species table from species/ by name."""
    locate = _Locator()
    return parse_species(_table(name, "species", locate, "species"), locate)
