# experiments/simulate.py
from engines.stochastic import StochasticModel, run_realizations
from experiments.common import SECTION, RunResult, symbol_inputs
from model.errors import ConfigError
from model.trace import grid_length


def run_simulation(scenario, log, verbose=False, max_workers=None) -> RunResult:
    """
    Particle/agent run of a circuit for the scenario's symbol sequence: mean
    and standard error of every sink and of the transmitter release.
    """
    if scenario.kind not in ("bcsk", "qcsk"):
        raise ConfigError(f"the particle engine runs circuit scenarios, not {scenario.kind!r}", scenario.source)
    log(
        SECTION
        + f"\nRunning particle simulation ({scenario.realizations} realizations, "
        f"{'lumped' if scenario.lumped_agents else 'per-strip'} agents)..."
    )
    result = RunResult(scenario.name or "simulate")
    layout = scenario.layout()
    n = grid_length(scenario.horizon, scenario.ts)
    symbols = list(scenario.symbols) or [2**scenario.m - 1]
    inputs = symbol_inputs(scenario, layout, symbols, n)
    model = StochasticModel(
        layout, scenario.species, scenario.ts, scenario.horizon, inputs, scenario.constants,
        scenario.substeps, scenario.lumped_agents, verbose=verbose,
    )
    stoch = run_realizations(model, scenario.realizations, scenario.seed, max_workers=max_workers, verbose=verbose)
    for sink in layout.sinks:
        volume = layout.geometry.region_volume(sink.lane)
        result.add_counts(f"Y{sink.bit}", stoch.sink_mean[sink.bit], volume, scenario.ts, stoch.sink_stderr[sink.bit])
    tx_names = [e.target for s in layout.sources for e in layout.outgoing(s.name)]
    for name in dict.fromkeys(tx_names):
        volume = layout.geometry.region_volume(layout.populations[name].lane)
        result.add_counts(name, stoch.released_mean[name], volume, scenario.ts, stoch.released_stderr[name])
    census = stoch.census
    result.check(
        "particle census",
        census.alive == census.emitted - census.degraded - census.absorbed,
        f"{census.emitted} emitted, {census.degraded} degraded, {census.absorbed} absorbed, {census.alive} alive",
        log,
    )
    result.summary = {
        "realizations": stoch.realizations,
        "census": {
            "emitted": census.emitted,
            "degraded": census.degraded,
            "absorbed": census.absorbed,
            "alive": census.alive,
        },
        "stray_particles": stoch.stray,
    }
    return result
