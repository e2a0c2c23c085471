# experiments/bcsk.py
import numpy as np

from blocks.propagation import KernelCache
from engines.cascade import Cascade, compose_bcsk
from engines.stochastic import StochasticModel, run_realizations
from experiments.common import SECTION, RunResult, TraceOutput, symbol_inputs, within_standard_errors
from model.trace import grid_length
from model.units import concentration_to_count

# bit 1 must deliver at least this many times the molecules bit 0 leaks to the receiver
BIT_SEPARATION = 10.0


def bin_sums(values, every) -> np.ndarray:
    """Sums over consecutive runs of `every` samples; a short tail is dropped."""
    values = np.asarray(values, dtype=float)
    n = values.size // every * every
    return values[:n].reshape(-1, every).sum(axis=1)


def compare_stochastic(result, key, analytic_molecules, mean, stderr, log, every=10, floor=1.0, carry=0):
    """
    3-standard-error agreement at every `every`-th sample.

    With `carry` > 0 the trace comes from agents that emit whole molecules and
    carry the fraction, so single samples are quantized; the comparison then
    runs on sums over `every` samples, each off by less than `carry` molecules.
    The summed standard errors bound the standard error of each sum.
    """
    if carry:
        ok = within_standard_errors(
            bin_sums(mean, every), bin_sums(stderr, every), bin_sums(analytic_molecules, every), floor=floor + carry
        )
        unit = f"sums of {every} samples"
    else:
        ok = within_standard_errors(mean[::every], stderr[::every], analytic_molecules[::every], floor=floor)
        unit = "decimated samples"
    return result.check(
        f"{key} within 3 standard errors",
        ok.all(),
        f"{int(ok.sum())}/{ok.size} {unit}",
        log,
    )


def run_bcsk(scenario, log, verbose=False, cache=None, max_workers=None) -> RunResult:
    """On-off keying link: transmitter release and detection trace for bit 1 and bit 0."""
    log(SECTION + "\nRunning BCSK link (source -> ID -> threshold -> detection)...")
    result = RunResult(scenario.name or "bcsk")
    layout = scenario.layout()
    n = grid_length(scenario.horizon, scenario.ts)
    cascade = Cascade(
        layout, scenario.species, scenario.ts, scenario.horizon, scenario.constants,
        cache or KernelCache(), log_file=None, verbose=verbose, **scenario.kernel_options,
    )
    inputs = symbol_inputs(scenario, layout, [1], n)
    on = cascade.evaluate(inputs)
    off = cascade.evaluate({})
    tx_volume = layout.geometry.region_volume(layout.populations["tx0"].lane)
    rx_volume = layout.geometry.region_volume(layout.sinks[0].lane)

    result.traces["source"] = TraceOutput(inputs[0], layout.geometry.region_volume(layout.sources[0].lane))
    result.traces["tx_bit1"] = TraceOutput(on.released("tx0"), tx_volume)
    result.traces["rx_bit1"] = TraceOutput(on.sinks[0], rx_volume)
    result.traces["tx_bit0"] = TraceOutput(off.released("tx0"), tx_volume)
    result.traces["rx_bit0"] = TraceOutput(off.sinks[0], rx_volume)

    composed = compose_bcsk(cascade, inputs[0])
    result.check(
        "operator composition matches the cascade",
        np.allclose(composed["rx"].values, on.sinks[0].values, rtol=1e-9, atol=1e-15),
        "P[T[P[I[P[source]]]]] against the topological sweep",
        log,
    )
    result.check(
        "bit 0 releases nothing",
        not np.any(off.released("tx0").values),
        f"max Tx {off.released('tx0').values.max(initial=0.0):.3g} nM",
        log,
    )
    t_peak, peak = on.released("tx0").peak()
    result.summary = {
        "tx_peak_time_s": t_peak,
        "tx_peak_molecules": concentration_to_count(peak, tx_volume),
        "tx_total_molecules": float(on.molecules("tx0").sum()),
        "rx_total_molecules": float(on.sink_molecules(0).sum()),
        "rx_bit0_total_molecules": float(off.sink_molecules(0).sum()),
    }
    rx1, rx0 = result.summary["rx_total_molecules"], result.summary["rx_bit0_total_molecules"]
    result.check(
        "bit 1 separates from bit 0 at the receiver",
        rx1 > BIT_SEPARATION * rx0,
        f"{rx1:.4g} molecules for bit 1 against {rx0:.4g} for bit 0",
        log,
        required=True,
    )
    result.check(
        "transmitter answers after the input",
        t_peak >= scenario.start,
        f"peak {result.summary['tx_peak_molecules']:.3g} molecules at {t_peak:g} s",
        log,
    )

    if scenario.engine == "analytic":
        return result

    model = StochasticModel(
        layout, scenario.species, scenario.ts, scenario.horizon, inputs, scenario.constants,
        scenario.substeps, scenario.lumped_agents, verbose=verbose,
    )
    stoch = run_realizations(model, scenario.realizations, scenario.seed, max_workers=max_workers, verbose=verbose)
    result.add_counts("stochastic_tx_bit1", stoch.released_mean["tx0"], tx_volume, scenario.ts, stoch.released_stderr["tx0"])
    result.add_counts("stochastic_rx_bit1", stoch.sink_mean[0], rx_volume, scenario.ts, stoch.sink_stderr[0])
    agents = sum(1 for c in model.collectors if c.population == "tx0")
    compare_stochastic(
        result, "Tx", on.molecules("tx0"), stoch.released_mean["tx0"], stoch.released_stderr["tx0"], log, carry=agents
    )
    compare_stochastic(result, "Rx", on.sink_molecules(0), stoch.sink_mean[0], stoch.sink_stderr[0], log)
    census = stoch.census
    result.check(
        "particle census",
        census.alive == census.emitted - census.degraded - census.absorbed,
        f"{census.emitted} emitted, {census.degraded} degraded, {census.absorbed} absorbed, {census.alive} alive",
        log,
    )
    result.summary["stray_particles"] = stoch.stray
    return result
