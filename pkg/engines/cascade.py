"""
Analytic end-to-end evaluation of a circuit layout.

Populations are evaluated in topological order over whole traces: each one
sums what its incoming edges deliver (propagation operator per edge), runs its
block operator and hands the released trace to its outgoing edges. Every
operator is causal, so this gives the same samples as stepping all nodes
through time together.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from blocks.kinetics import BlockKind, CellBlockConfig, constant_threshold, run_block
from blocks.propagation import KernelCache, propagate
from model.errors import ConfigError, DomainError, GridError
from model.trace import SignalTrace, grid_length
from model.types import PulseSpec
from model.units import concentration_to_count
from synthesis.layout import ID, NOT, SINK, SOURCE, THRESHOLD, CircuitLayout, Population
from utils import utils

DEFAULT_XI = 20.0
DEFAULT_ETA = 1.0
DEFAULT_KF = 1.0

_KINDS = {ID: BlockKind.ID, NOT: BlockKind.NOT, THRESHOLD: BlockKind.THRESHOLD}


@dataclass(frozen=True)
class CellConstants:
    """Release rate xi (1/s), exchange multiplier eta and reaction rate k_f (1/(nM s))."""

    xi: float = DEFAULT_XI
    eta: float = DEFAULT_ETA
    k_f: float = DEFAULT_KF


@dataclass
class CascadeNode:
    population: Population
    config: CellBlockConfig | None = None
    incoming: list = field(default_factory=list)
    absorbed: SignalTrace | None = None
    released: SignalTrace | None = None


@dataclass
class CascadeResult:
    """Per-population absorbed and released traces plus the detection traces by bit."""

    layout: CircuitLayout
    nodes: dict
    sinks: dict

    def released(self, name: str) -> SignalTrace:
        return self.nodes[name].released

    def molecules(self, name: str, trace: SignalTrace | None = None) -> np.ndarray:
        """A population's trace (released by default) as molecule counts in its lane."""
        pop = self.layout.populations[name]
        trace = trace if trace is not None else self.nodes[name].released
        volume = self.layout.geometry.region_volume(pop.lane)
        return concentration_to_count(trace.values, volume)

    def transmitted(self) -> np.ndarray:
        """Molecules released by the modulator populations per interval, summed."""
        names = [e.target for s in self.layout.sources for e in self.layout.outgoing(s.name)]
        return sum(self.molecules(n) for n in dict.fromkeys(names))

    def sink_molecules(self, bit: int) -> np.ndarray:
        sink = self.layout.sinks[bit]
        return self.molecules(sink.name, self.sinks[bit])


def block_config(
    population: Population, species: dict, grid: SignalTrace, production_factor: float, constants: CellConstants
) -> CellBlockConfig:
    """
    Kinetic configuration of one population.

    Output and repressor production rates are scaled by the layout factor; the
    threshold inducer is not, so the threshold levels keep their meaning.
    """
    try:
        inp = species[population.input_species]
        out = species[population.output_species].scaled(production_factor)
        rep = species[population.repressor].scaled(production_factor) if population.repressor else None
        inducer = species[population.inducer] if population.inducer else None
    except KeyError as e:
        raise ConfigError(f"{population.name}: species {e.args[0]!r} is not defined") from e
    kind = _KINDS[population.kind]
    return CellBlockConfig(
        kind,
        inp,
        out,
        repressor=rep,
        inducer=inducer,
        eta=constants.eta,
        xi=constants.xi,
        k_f=constants.k_f,
        c_th=constant_threshold(population.threshold, grid) if kind == BlockKind.THRESHOLD else None,
        weight=population.weight,
    )


class Cascade:
    """
    A layout with its kernels built for one time grid.

    Args:
        layout (CircuitLayout): Validated layout.
        species (dict): Species name -> SpeciesParams.
        ts (float): Sampling step (s).
        horizon (float): Duration covered by every trace (s).
        cache (KernelCache): Kernel store shared across runs.
    """

    def __init__(
        self,
        layout: CircuitLayout,
        species: dict,
        ts: float,
        horizon: float,
        constants: CellConstants = CellConstants(),
        cache: KernelCache | None = None,
        log_file=None,
        verbose=False,
        **kernel_options,
    ):
        self.layout = layout.validate()
        self.species = species
        self.ts = ts
        self.horizon = horizon
        self.n = grid_length(horizon, ts)
        self.constants = constants
        self.cache = cache or KernelCache()
        self.grid = SignalTrace.zeros(self.n, ts)
        self.order = layout.topological_order()
        self.nodes = {}
        for name in self.order:
            pop = layout.populations[name]
            node = CascadeNode(pop)
            if pop.kind not in (SOURCE, SINK):
                node.config = block_config(pop, species, self.grid, layout.production_factor, constants)
            for edge in layout.incoming(name):
                src = layout.populations[edge.source]
                if edge.species not in species:
                    raise ConfigError(f"edge {edge.source} -> {name}: species {edge.species!r} is not defined")
                kernel = self.cache.get(
                    layout.distance(edge),
                    src.lane,
                    pop.lane,
                    species[edge.species],
                    layout.geometry,
                    horizon,
                    ts,
                    **kernel_options,
                )
                node.incoming.append((edge, kernel))
                if verbose:
                    utils.log(
                        f"{edge.source} -> {name}: L={layout.distance(edge):g} um, "
                        f"{kernel.eigenvalues.size} axial / {kernel.gammas.size} lateral terms, "
                        f"{kernel.truncation} samples",
                        log_file,
                        when="kernel",
                        severity="DEBUG",
                    )
            self.nodes[name] = node

    def evaluate(self, inputs: dict) -> CascadeResult:
        """
        Run every population over the full grid.

        Args:
            inputs (dict): Source bit -> dose trace on the cascade grid; missing
                bits transmit nothing.
        """
        for name in self.order:
            node = self.nodes[name]
            pop = node.population
            if pop.kind == SOURCE:
                trace = inputs.get(pop.bit)
                if trace is None:
                    trace = self.grid
                if not trace.same_grid(self.grid):
                    raise GridError(f"input for S{pop.bit} is {trace!r}, cascade grid is {self.grid!r}")
                node.released = trace
                continue
            absorbed = sum(
                (propagate(self.nodes[edge.source].released, kernel) for edge, kernel in node.incoming),
                self.grid,
            )
            node.absorbed = absorbed
            node.released = absorbed if pop.kind == SINK else run_block(node.config, absorbed)
        sinks = {s.bit: self.nodes[s.name].absorbed for s in self.layout.sinks}
        return CascadeResult(self.layout, {n: replace(node) for n, node in self.nodes.items()}, sinks)


def evaluate(layout: CircuitLayout, inputs: dict, horizon: float, species: dict, ts: float, **options) -> dict:
    """Detection trace per sink bit for the given source inputs."""
    return Cascade(layout, species, ts, horizon, **options).evaluate(inputs).sinks


def sample_counts(trace: SignalTrace, sample_times, volume: float, window: float | None = None) -> np.ndarray:
    """
    Molecules absorbed by a detection surface in [t, t + window) for each sample time.

    A missing window counts the single interval containing t.
    """
    width = 1 if window is None else max(1, int(round(window / trace.ts)))
    values = trace.values
    counts = []
    for t in sample_times:
        k = trace.index_of(t)
        if k + width > len(trace):
            raise DomainError(f"detection window at {t} s runs past the trace end {trace.horizon} s")
        counts.append(concentration_to_count(float(values[k : k + width].sum()), volume))
    return np.asarray(counts)


def sample_and_decide(trace: SignalTrace, sample_times, n_d: float, volume: float, window: float | None = None) -> list:
    """Bit 1 wherever the absorbed count exceeds the detection threshold n_d (molecules)."""
    if n_d < 0:
        raise DomainError(f"detection threshold must be >= 0, got {n_d}")
    return [int(c > n_d) for c in sample_counts(trace, sample_times, volume, window)]


def compose_bcsk(cascade: Cascade, source: SignalTrace) -> dict:
    """
    The BCSK link written out operator by operator:
    P[T[P[I[P[source]]]]], with the kernels and configurations of `cascade`.
    """
    layout = cascade.layout
    if layout.m != 1:
        raise ConfigError("compose_bcsk needs the single-lane BCSK layout")
    (_, k_mod), = cascade.nodes["tx0"].incoming
    (_, k_front), = cascade.nodes["B0"].incoming
    (_, k_detect), = cascade.nodes["Y0"].incoming
    c_tx = run_block(cascade.nodes["tx0"].config, propagate(source, k_mod))
    c_th = run_block(cascade.nodes["B0"].config, propagate(c_tx, k_front))
    return {"tx": c_tx, "rx": propagate(c_th, k_detect)}


def pulse_train(
    symbols, bit: int, amplitude: float, duration: float, interval: float, n: int, ts: float,
    start: float = 0.0, release_rate: float = 1.0,
) -> SignalTrace:
    """
    Dose trace of source `bit` for a symbol sequence: one rectangular bath per
    symbol whose bit is set, the k-th starting at start + k * interval.
    """
    dose = np.zeros(n)
    for k, s in enumerate(symbols):
        if (s >> bit) & 1:
            pulse = PulseSpec(amplitude, duration, start + k * interval, release_rate)
            dose += SignalTrace.from_pulse(pulse, n, ts).values
    return SignalTrace(dose, ts)


def bits_to_symbols(bits, m: int) -> list:
    """Group a bit sequence into m-bit symbols, first bit most significant."""
    bits = list(bits)
    if len(bits) % m:
        raise DomainError(f"{len(bits)} bits do not split into {m}-bit symbols")
    return [int("".join(str(int(b)) for b in bits[k : k + m]), 2) for k in range(0, len(bits), m)]


def symbols_to_bits(symbols, m: int) -> list:
    return [(s >> i) & 1 for s in symbols for i in range(m - 1, -1, -1)]


def required_horizon(symbols: int, interval: float, sample_delay: float, start: float = 0.0, window: float = 0.0) -> float:
    """End of the last detection window."""
    return start + max(symbols - 1, 0) * interval + sample_delay + window


def check_horizon(horizon: float, symbols: int, interval: float, sample_delay: float, start=0.0, window=0.0):
    needed = required_horizon(symbols, interval, sample_delay, start, window)
    short = horizon < needed - 1e-9 if window else horizon <= needed
    if short:
        raise ConfigError(
            f"horizon {horizon:g} s is too short for {symbols} symbols at {interval:g} s "
            f"sampled {sample_delay:g} s later (needs more than {math.ceil(needed)} s)"
        )
