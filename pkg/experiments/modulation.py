# experiments/modulation.py
from blocks.propagation import KernelCache
from engines.cascade import Cascade
from experiments.common import SECTION, RunResult, symbol_inputs


def symbol_label(s: int, m: int) -> str:
    return format(s, f"0{m}b")


def transmitter_levels(cascade: Cascade, scenario, symbols) -> tuple:
    """Peak molecules released by the modulator per interval, and the release series, for each symbol sent alone."""
    layout = cascade.layout
    levels = {}
    traces = {}
    for s in symbols:
        res = cascade.evaluate(symbol_inputs(scenario, layout, [s], cascade.n))
        tx = res.transmitted()
        levels[s] = float(tx.max(initial=0.0))
        traces[s] = tx
    return levels, traces


def run_modulation(scenario, log, verbose=False, cache=None) -> RunResult:
    """
    QCSK transmitter: released molecules for every symbol. Bit i drives a
    modulator lane 2^i times as wide, so the levels step as 0, 1, 2, 3.
    """
    log(SECTION + f"\nRunning CSK modulation (m={scenario.m})...")
    result = RunResult(scenario.name or "modulation")
    layout = scenario.layout()
    cascade = Cascade(
        layout, scenario.species, scenario.ts, scenario.horizon, scenario.constants,
        cache or KernelCache(), verbose=verbose, **scenario.kernel_options,
    )
    symbols = list(scenario.symbols) or list(range(2**scenario.m))
    levels, traces = transmitter_levels(cascade, scenario, symbols)
    volume = sum(layout.geometry.region_volume(layout.populations[f"tx{i}"].lane) for i in range(scenario.m))
    for s in symbols:
        label = symbol_label(s, scenario.m)
        result.add_counts(f"tx_{label}", traces[s], volume, scenario.ts)
        result.summary[label] = {"peak_molecules": levels[s]}
        if verbose:
            log(f"symbol {label}: peak {levels[s]:.4g} molecules per interval", when=result.name, severity="DEBUG")

    ordered = [levels[s] for s in sorted(levels)]
    if 0 in levels:
        result.check("symbol 0 releases nothing", levels[0] == 0.0, f"{levels[0]:.3g} molecules", log)
    result.check(
        "levels increase with the symbol",
        all(b > a for a, b in zip(ordered, ordered[1:])),
        ", ".join(f"{symbol_label(s, scenario.m)}={levels[s]:.3g}" for s in sorted(levels)),
        log,
    )
    if scenario.m == 2 and levels.get(1, 0) > 0 and 2 in levels:
        ratio = levels[2] / levels[1]
        result.summary["ratio_10_01"] = ratio
        result.check("level(10) / level(01) near 2", 1.8 <= ratio <= 2.2, f"ratio {ratio:.3f}", log)
    return result
