"""
Particle-based simulation of a circuit layout.

Every (emitting population, distance) pair gets its own compartment: a box
[0, L] x [0, W] x [0, H] whose x = 0 plane and side walls reflect and whose
x = L plane absorbs with the Erban-Chapman probability. Particles absorbed at
x = L are handed to the agent strip (or detection surface) of the target lane
they landed in; anything outside a target lane is lost. Agents run the same
block recursions as the analytic engine on the dose they absorbed and emit
whole particles, carrying the fractional remainder to the next interval.

Emission happens at the end of an interval, so molecules released during
interval k are first absorbed during interval k + 1, matching the analytic
kernel whose first sample is zero.
"""

import math
import os
from dataclasses import dataclass, field

import numpy as np

from blocks.kinetics import BlockState, CellBlockConfig, block_step
from blocks.propagation import PropagationKernel
from engines.cascade import CellConstants, block_config
from model.errors import CskError, GridError, LayoutError
from model.trace import SignalTrace, grid_length
from model.types import ParticleCensus, SpeciesParams, Surface
from model.units import concentration_to_count, count_to_concentration
from synthesis.layout import SINK, SOURCE, CircuitLayout
from utils import utils


def absorption_probability(k_a: float, D: float, dt: float) -> float:
    """Erban-Chapman probability k_a sqrt(pi dt / D) that a particle crossing x = L is absorbed."""
    if D <= 0:
        raise CskError("absorption probability needs D > 0")
    return k_a * math.sqrt(math.pi * dt / D)


@dataclass(frozen=True)
class Channel:
    """
    One compartment's box for one species. A length of inf removes the
    absorbing plane.
    """

    length: float
    width: float
    height: float
    species: SpeciesParams
    u: float = 0.0

    def p_absorb(self, dt: float) -> float:
        return min(1.0, absorption_probability(self.species.k_a, self.species.D, dt))


@dataclass
class ParticleState:
    """Positions (N x 3: x, y, z in um) of the live particles of one species."""

    positions: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))

    def __len__(self):
        return self.positions.shape[0]

    def add(self, positions: np.ndarray):
        if positions.size:
            self.positions = np.concatenate((self.positions, positions)) if len(self) else positions


def emit_particles(count: int, strip: Surface, height: float, rng: np.random.Generator) -> np.ndarray:
    """`count` particles at x = 0, uniform over the strip and the channel height."""
    out = np.zeros((count, 3))
    if count:
        out[:, 1] = rng.uniform(strip.y_lo, strip.y_hi, count)
        out[:, 2] = rng.uniform(0.0, height, count)
    return out


def _fold(v: np.ndarray, upper: float) -> np.ndarray:
    """Reflect coordinates into [0, upper] off both walls."""
    v = np.mod(v, 2.0 * upper)
    return np.where(v > upper, 2.0 * upper - v, v)


def step_particles(particles: ParticleState, channel: Channel, dt: float, rng: np.random.Generator, p_absorb=None):
    """
    Advance every particle by dt: degradation, then a Gaussian step with drift.

    Returns:
        tuple: (ParticleState, ParticleCensus, y of the particles absorbed at x = L).
    """
    n = len(particles)
    if n == 0:
        return particles, ParticleCensus(), np.empty(0)
    species = channel.species
    keep = rng.random(n) >= -math.expm1(-species.k_d * dt)
    pos = particles.positions[keep]
    degraded = n - pos.shape[0]
    pos = pos + rng.normal(0.0, math.sqrt(2.0 * species.D * dt), pos.shape)
    pos[:, 0] += channel.u * dt
    pos[:, 0] = np.abs(pos[:, 0])
    pos[:, 1] = _fold(pos[:, 1], channel.width)
    pos[:, 2] = _fold(pos[:, 2], channel.height)
    absorbed_y = np.empty(0)
    if math.isfinite(channel.length):
        p = channel.p_absorb(dt) if p_absorb is None else p_absorb
        crossed = pos[:, 0] >= channel.length
        if crossed.any():
            hit = crossed & (rng.random(pos.shape[0]) < p)
            absorbed_y = pos[hit, 1]
            pos = pos[~hit]
            back = pos[:, 0] >= channel.length
            pos[back, 0] = np.abs(2.0 * channel.length - pos[back, 0])
    census = ParticleCensus(alive=pos.shape[0], degraded=degraded, absorbed=absorbed_y.size)
    return ParticleState(pos), census, absorbed_y


@dataclass
class CellAgent:
    """
    One strip of a population's lane acting as a single cell block.

    Absorbed particles become a dose in nM over the strip volume; the released
    concentration becomes whole particles with the remainder carried over.
    """

    population: str
    strip: Surface
    volume: float
    config: CellBlockConfig
    compartments: tuple = ()
    state: BlockState = field(default_factory=BlockState)
    absorbed: int = 0
    residual: float = 0.0

    def step(self, ts: float) -> int:
        dose = count_to_concentration(self.absorbed, self.volume)
        self.absorbed = 0
        released = block_step(self.state, dose, self.config, ts)
        exact = concentration_to_count(released, self.volume) + self.residual
        count = int(math.floor(exact))
        self.residual = exact - count
        return count


def step_agents(agents: list, absorbed: np.ndarray, ts: float) -> list:
    """Hand each agent its absorbed count and step it; returns the particles each one emits."""
    out = []
    for agent, count in zip(agents, absorbed.tolist()):
        agent.absorbed += int(count)
        out.append(agent.step(ts))
    return out


@dataclass(frozen=True)
class Collector:
    """A y-strip at the end of a compartment and who it belongs to."""

    population: str
    strip: Surface
    kind: str
    bit: int = -1


@dataclass(frozen=True)
class CompartmentSpec:
    source: str
    distance: float
    channel: Channel
    edges: np.ndarray = field(repr=False)
    owners: np.ndarray = field(repr=False)

    def credit(self, absorbed_y: np.ndarray, n_collectors: int) -> np.ndarray:
        """Absorbed particles per collector; particles outside every strip are dropped."""
        idx = np.searchsorted(self.edges, absorbed_y, side="right") - 1
        idx = idx[(idx >= 0) & (idx < self.owners.size)]
        owners = self.owners[idx]
        return np.bincount(owners[owners >= 0], minlength=n_collectors)


@dataclass
class RealizationRecord:
    """Per-interval particle counts of one run."""

    sinks: dict
    released: dict
    census: ParticleCensus
    stray: int


@dataclass
class StochasticResult:
    """
    Means and standard errors over the realizations, in molecules per interval.
    """

    layout: CircuitLayout
    ts: float
    realizations: int
    sink_mean: dict
    sink_stderr: dict
    released_mean: dict
    released_stderr: dict
    census: ParticleCensus
    stray: int

    def sink_trace(self, bit: int) -> SignalTrace:
        """Mean detection concentration (nM) of sink `bit`, comparable with the analytic trace."""
        sink = self.layout.sinks[bit]
        volume = self.layout.geometry.region_volume(sink.lane)
        return SignalTrace(count_to_concentration(self.sink_mean[bit], volume), self.ts)

    def transmitted(self) -> np.ndarray:
        names = [e.target for s in self.layout.sources for e in self.layout.outgoing(s.name)]
        return sum(self.released_mean[n] for n in dict.fromkeys(names))


def _strips(lane: Surface, radius: float, lumped: bool) -> list:
    if lumped:
        return [lane]
    count = max(1, int(round(lane.width / (2.0 * radius))))
    cuts = np.linspace(lane.y_lo, lane.y_hi, count + 1)
    return [Surface(float(a), float(b)) for a, b in zip(cuts[:-1], cuts[1:])]


class StochasticModel:
    """
    Everything a realization needs that does not change between realizations.

    Args:
        layout (CircuitLayout): Validated layout.
        species (dict): Species name -> SpeciesParams.
        inputs (dict): Source bit -> dose trace (nM) on the ts grid.
        substeps (int): Particle moves per sampling interval.
        lumped_agents (bool): One agent per population instead of one per strip.
    """

    def __init__(
        self,
        layout: CircuitLayout,
        species: dict,
        ts: float,
        horizon: float,
        inputs: dict,
        constants: CellConstants = CellConstants(),
        substeps: int = 1,
        lumped_agents: bool = False,
        log_file=None,
        verbose=False,
    ):
        if substeps < 1:
            raise CskError(f"substeps must be >= 1, got {substeps}")
        self.layout = layout.validate()
        self.species = species
        self.ts = ts
        self.n = grid_length(horizon, ts)
        self.dt = ts / substeps
        self.substeps = substeps
        self.lumped = lumped_agents
        geometry = layout.geometry
        grid = SignalTrace.zeros(self.n, ts)

        self.doses = {}
        for src in layout.sources:
            trace = inputs.get(src.bit, grid)
            if not trace.same_grid(grid):
                raise GridError(f"input for S{src.bit} is {trace!r}, simulation grid is {grid!r}")
            self.doses[src.name] = trace.values

        self.collectors = []
        self.agents = []
        index = {}
        for name in layout.topological_order():
            pop = layout.populations[name]
            if pop.kind == SOURCE:
                continue
            if pop.kind == SINK:
                strips = [pop.lane]
            else:
                strips = _strips(pop.lane, geometry.agent_radius, lumped_agents)
                config = block_config(pop, species, grid, layout.production_factor, constants)
            index[name] = []
            for strip in strips:
                index[name].append(len(self.collectors))
                self.collectors.append(Collector(name, strip, pop.kind, pop.bit))
                if pop.kind != SINK:
                    self.agents.append((len(self.collectors) - 1, name, strip, geometry.region_volume(strip), config))

        self.compartments = []
        self.p_absorb = []
        self.routes = {}
        for name, pop in layout.populations.items():
            if pop.kind == SINK:
                continue
            by_distance = {}
            for edge in layout.outgoing(name):
                by_distance.setdefault(layout.distance(edge), []).append(edge)
            self.routes[name] = []
            for distance, edges in sorted(by_distance.items()):
                params = species[edges[0].species]
                channel = Channel(distance, geometry.width, geometry.H, params, geometry.u)
                spec = self._compartment(name, distance, channel, [c for e in edges for c in index[e.target]])
                raw = absorption_probability(params.k_a, params.D, self.dt)
                if raw > 1.0:
                    utils.log(
                        f"{name} -> L={distance:g} um: absorption probability {raw:.3f} clamped to 1, "
                        f"use more substeps",
                        log_file,
                        when="stochastic",
                        severity="WARNING",
                    )
                self.routes[name].append(len(self.compartments))
                self.compartments.append(spec)
                self.p_absorb.append(min(1.0, raw))
                if verbose:
                    utils.log(
                        f"compartment {name} -> L={distance:g} um, {len(edges)} target(s), p_a={min(1.0, raw):.4f}",
                        log_file,
                        when="stochastic",
                        severity="DEBUG",
                    )

    def _compartment(self, source, distance, channel, collector_ids) -> CompartmentSpec:
        strips = sorted(((self.collectors[i].strip, i) for i in collector_ids), key=lambda s: s[0].y_lo)
        edges, owners = [], []
        for strip, i in strips:
            if edges and strip.y_lo < edges[-1] - 1e-12:
                raise LayoutError(f"{source}: target strips overlap at y={strip.y_lo:g} um")
            if edges and strip.y_lo > edges[-1] + 1e-12:
                owners.append(-1)
                edges.append(strip.y_lo)
            elif not edges:
                edges.append(strip.y_lo)
            owners.append(i)
            edges.append(strip.y_hi)
        return CompartmentSpec(source, distance, channel, np.asarray(edges), np.asarray(owners, dtype=int))

    def fresh_agents(self) -> list:
        return [
            CellAgent(name, strip, volume, config, tuple(self.routes.get(name, ())))
            for _, name, strip, volume, config in self.agents
        ]


def _check_census(k, particles, emitted, degraded, absorbed) -> int:
    """Particles alive after step k; every emitted particle is alive, degraded or absorbed."""
    alive = sum(len(p) for p in particles)
    if alive != emitted - degraded - absorbed:
        raise CskError(
            f"particle census broken at step {k}: {alive} alive, {emitted} emitted, "
            f"{degraded} degraded, {absorbed} absorbed"
        )
    return alive


def run_realization(model: StochasticModel, seed) -> RealizationRecord:
    """One independent run from zero state; `seed` is anything default_rng accepts."""
    rng = np.random.default_rng(seed)
    layout = model.layout
    H = layout.geometry.H
    n_collectors = len(model.collectors)
    particles = [ParticleState() for _ in model.compartments]
    agents = model.fresh_agents()
    agent_ids = np.asarray([a[0] for a in model.agents], dtype=int)
    sink_ids = [(i, c.bit) for i, c in enumerate(model.collectors) if c.kind == SINK]
    sources = [
        (s.name, s.lane, layout.geometry.region_volume(s.lane), model.routes.get(s.name, ()))
        for s in layout.sources
    ]
    residual = {name: 0.0 for name, *_ in sources}

    sinks = {bit: np.zeros(model.n, dtype=np.int64) for _, bit in sink_ids}
    released = {name: np.zeros(model.n, dtype=np.int64) for name in layout.populations}
    degraded = absorbed_total = emitted = stray = alive = 0

    for k in range(model.n):
        absorbed = np.zeros(n_collectors, dtype=np.int64)
        for c, spec in enumerate(model.compartments):
            for _ in range(model.substeps):
                particles[c], census, ys = step_particles(particles[c], spec.channel, model.dt, rng, model.p_absorb[c])
                degraded += census.degraded
                absorbed_total += census.absorbed
                if ys.size:
                    credited = spec.credit(ys, n_collectors)
                    stray += ys.size - int(credited.sum())
                    absorbed += credited

        counts = step_agents(agents, absorbed[agent_ids], model.ts) if agents else []
        for agent, count in zip(agents, counts):
            released[agent.population][k] += count
            for c in agent.compartments:
                particles[c].add(emit_particles(count, agent.strip, H, rng))
                emitted += count
        for i, bit in sink_ids:
            sinks[bit][k] = absorbed[i]
        for name, lane, volume, routes in sources:
            exact = concentration_to_count(model.doses[name][k], volume) + residual[name]
            count = int(math.floor(exact))
            residual[name] = exact - count
            released[name][k] = count
            for c in routes:
                particles[c].add(emit_particles(count, lane, H, rng))
                emitted += count

        alive = _check_census(k, particles, emitted, degraded, absorbed_total)

    return RealizationRecord(sinks, released, ParticleCensus(alive, degraded, absorbed_total, emitted), stray)


class RunningMoments:
    """Per-sample running mean and standard error of the mean over realizations."""

    def __init__(self):
        self.count = 0
        self.total = {}
        self.squares = {}

    def add(self, values: dict):
        for key, v in values.items():
            v = v.astype(float)
            if key in self.total:
                self.total[key] += v
                self.squares[key] += v * v
            else:
                self.total[key] = v.copy()
                self.squares[key] = v * v

    def mean(self) -> dict:
        return {k: v / self.count for k, v in self.total.items()}

    def stderr(self) -> dict:
        if self.count < 2:
            return {k: np.zeros_like(v) for k, v in self.total.items()}
        out = {}
        for k, v in self.total.items():
            mean = v / self.count
            var = np.maximum(self.squares[k] / self.count - mean * mean, 0.0) * self.count / (self.count - 1)
            out[k] = np.sqrt(var / self.count)
        return out


def run_realizations(
    model: StochasticModel,
    realizations: int,
    seed=None,
    max_workers: int | None = None,
    log_file=None,
    verbose=False,
) -> StochasticResult:
    """
    Independent realizations from one seed, averaged.

    Each realization draws from its own child of SeedSequence(seed), so the
    result does not depend on the worker count.
    """
    if realizations < 1:
        raise CskError(f"need at least one realization, got {realizations}")
    children = np.random.SeedSequence(seed).spawn(realizations)
    batch = max(1, max_workers or os.cpu_count() or 1)
    sinks, released = RunningMoments(), RunningMoments()
    census = ParticleCensus()
    stray = 0
    for start in range(0, realizations, batch):
        records = utils.run_parallel(run_realization_for, children[start : start + batch], model, max_workers=max_workers)
        for record in records:
            sinks.add(record.sinks)
            released.add(record.released)
            census = census + record.census
            stray += record.stray
        sinks.count = released.count = start + len(records)
        if verbose:
            utils.log(f"{sinks.count}/{realizations} realizations done", log_file, when="stochastic", severity="DEBUG")
    return StochasticResult(
        model.layout,
        model.ts,
        realizations,
        sinks.mean(),
        sinks.stderr(),
        released.mean(),
        released.stderr(),
        census,
        stray,
    )


def run_realization_for(seed, model: StochasticModel) -> RealizationRecord:
    return run_realization(model, seed)


def impulse_response(
    channel: Channel,
    emit: Surface,
    surfaces: list,
    particles: int,
    ts: float,
    steps: int,
    rng: np.random.Generator,
    substeps: int = 1,
) -> np.ndarray:
    """
    Particles absorbed by each surface per interval after `particles` are
    released at once from `emit`; column k + 1 holds absorptions during step k,
    on the indexing of the analytic kernel samples.
    """
    dt = ts / substeps
    p = channel.p_absorb(dt)
    state = ParticleState(emit_particles(particles, emit, channel.height, rng))
    counts = np.zeros((len(surfaces), steps + 1), dtype=np.int64)
    for k in range(steps):
        for _ in range(substeps):
            state, _, ys = step_particles(state, channel, dt, rng, p)
            for j, s in enumerate(surfaces):
                counts[j, k + 1] += int(np.count_nonzero((ys >= s.y_lo) & (ys < s.y_hi)))
        if not len(state):
            break
    return counts


def expected_impulse_counts(kernel: PropagationKernel, particles: int) -> np.ndarray:
    """Analytic counterpart of impulse_response: particles * k_a ts h2 / (H emit width)."""
    emit = kernel.emit.width
    if emit == 0:
        return np.zeros_like(kernel.samples)
    return particles * kernel.species.k_a * kernel.ts * kernel.samples / (kernel.geometry.H * emit)


def calibrate_absorption(kernel: PropagationKernel, particles: int, seed=None, substeps: int = 1) -> dict:
    """
    Total absorbed by the kernel's surface, particle run against the analytic
    kernel, over the kernel's span.
    """
    geometry = kernel.geometry
    channel = Channel(kernel.distance, geometry.width, geometry.H, kernel.species, geometry.u)
    steps = kernel.truncation - 1
    counts = impulse_response(
        channel, kernel.emit, [kernel.absorb], particles, kernel.ts, steps, np.random.default_rng(seed), substeps
    )
    simulated = float(counts.sum())
    analytic = float(expected_impulse_counts(kernel, particles).sum())
    return {
        "dt": kernel.ts / substeps,
        "p_absorb": channel.p_absorb(kernel.ts / substeps),
        "simulated": simulated,
        "analytic": analytic,
        "relative_error": (simulated - analytic) / analytic if analytic > 0 else math.nan,
    }
