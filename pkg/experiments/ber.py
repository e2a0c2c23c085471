"""
Bit error rate of the CSK link over a random bit sequence, swept over the
detection threshold N_d and the bit interval T_b.
"""

from dataclasses import dataclass

import numpy as np

from blocks.propagation import KernelCache
from engines.cascade import Cascade, bits_to_symbols, check_horizon, required_horizon, sample_counts
from experiments.common import SECTION, RunResult, symbol_inputs
from model.errors import ConfigError


@dataclass(frozen=True)
class BerRow:
    n_d: float
    interval: float
    errors: int
    bits: int

    @property
    def ber(self) -> float:
        return self.errors / self.bits

    def as_row(self):
        return [self.n_d, self.interval, self.errors, self.bits, self.ber]


BER_HEADER = ["N_d", "T_b_s", "errors", "bits", "ber"]


def random_bits(count: int, seed=None) -> list:
    return np.random.default_rng(seed).integers(0, 2, count).tolist()


def detection_matrix(scenario, layout, symbols, interval, cache=None, verbose=False) -> np.ndarray:
    """
    Molecules counted by every sink for every symbol, sampled sample_delay after
    its transmission; row i holds sink Y_i.
    """
    window = scenario.window or 0.0
    needed = required_horizon(len(symbols), interval, scenario.sample_delay, scenario.start, window)
    check_horizon(scenario.horizon, len(symbols), interval, scenario.sample_delay, scenario.start, window)
    horizon = min(scenario.horizon, needed + 2 * scenario.ts)
    cascade = Cascade(
        layout, scenario.species, scenario.ts, horizon, scenario.constants,
        cache or KernelCache(), verbose=verbose, **scenario.kernel_options,
    )
    res = cascade.evaluate(symbol_inputs(scenario, layout, symbols, cascade.n, interval))
    times = [scenario.start + k * interval + scenario.sample_delay for k in range(len(symbols))]
    counts = np.zeros((scenario.m, len(symbols)))
    for sink in layout.sinks:
        volume = layout.geometry.region_volume(sink.lane)
        counts[sink.bit] = sample_counts(res.sinks[sink.bit], times, volume, scenario.window)
    return counts


def count_errors(counts: np.ndarray, symbols, n_d: float) -> int:
    """Bits decided wrongly when a count above n_d means 1."""
    m = counts.shape[0]
    sent = np.array([[(s >> i) & 1 for s in symbols] for i in range(m)])
    return int(np.count_nonzero((counts > n_d).astype(int) != sent))


def ber_experiment(scenario, log, verbose=False, bits=None, seed=None, n_d=None, intervals=None, cache=None) -> tuple:
    """
    Transmit a random bit sequence at each T_b and count decision errors at
    each N_d.

    Returns:
        tuple: (BerRow per (T_b, N_d), T_b outermost, the transmitted bits). Each
        T_b ends with one row at an N_d above every count.
    """
    bits = bits or scenario.bits
    if bits < 16:
        raise ConfigError(f"a BER run needs at least 16 bits, got {bits}")
    if bits % scenario.m:
        raise ConfigError(f"{bits} bits do not split into {scenario.m}-bit symbols")
    grid = tuple(n_d if n_d is not None else scenario.n_d) or (0.0,)
    intervals = tuple(intervals or scenario.intervals or (scenario.interval,))
    sequence = random_bits(bits, scenario.seed if seed is None else seed)
    symbols = bits_to_symbols(sequence, scenario.m)
    layout = scenario.layout()
    cache = cache or KernelCache()
    rows = []
    for interval in intervals:
        counts = detection_matrix(scenario, layout, symbols, interval, cache, verbose)
        if verbose:
            log(
                f"T_b={interval:g} s: counts {counts.min():.3g}..{counts.max():.3g} molecules",
                when="ber",
                severity="DEBUG",
            )
        for level in grid:
            rows.append(BerRow(float(level), interval, count_errors(counts, symbols, level), bits))
        above = float(np.floor(counts.max())) + 1.0
        rows.append(BerRow(above, interval, count_errors(counts, symbols, above), bits))
    return rows, sequence


def run_ber(scenario, log, verbose=False, cache=None) -> RunResult:
    log(SECTION + f"\nRunning BER sweep ({scenario.bits} bits, m={scenario.m})...")
    result = RunResult(scenario.name or "ber")
    rows, sequence = ber_experiment(scenario, log, verbose, cache=cache)
    result.tables["ber"] = (BER_HEADER, [r.as_row() for r in rows])
    zeros = sequence.count(0) / len(sequence)
    ones = 1.0 - zeros
    for interval in sorted({r.interval for r in rows}):
        sweep = [r for r in rows if r.interval == interval]
        for r in sweep:
            log(f"T_b={interval / 3600:g} h, N_d={r.n_d:g}: {r.errors}/{r.bits} errors, BER={r.ber:.4f}", when="ber", severity="INFO")
        at_zero = [r for r in sweep if r.n_d == 0.0]
        if at_zero:
            result.check(
                f"T_b={interval / 3600:g} h: N_d=0 decides every bit as 1",
                abs(at_zero[0].ber - zeros) < 1e-12,
                f"BER {at_zero[0].ber:.4f}, share of 0-bits {zeros:.4f}",
                log,
            )
        top = sweep[-1]
        result.check(
            f"T_b={interval / 3600:g} h: N_d above every response decides every bit as 0",
            abs(top.ber - ones) < 1e-12,
            f"BER {top.ber:.4f} at N_d={top.n_d:g}, share of 1-bits {ones:.4f}",
            log,
        )
    intervals = sorted({r.interval for r in rows})
    if len(intervals) >= 2:
        short, long = intervals[0], intervals[-1]
        grid = [r.n_d for r in rows if r.interval == short][:-1]
        by = {(r.interval, r.n_d): r.ber for r in rows}
        worse = [n for n in grid if (long, n) in by and by[(long, n)] > by[(short, n)]]
        result.check(
            "longer bit interval never raises the BER",
            not worse,
            f"T_b {long / 3600:g} h vs {short / 3600:g} h" + (f", worse at N_d={worse}" if worse else ""),
            log,
            required=True,
        )
    if scenario.error_free_n_d and intervals:
        lo, hi = scenario.error_free_n_d
        longest = intervals[-1]
        band = [r for r in rows if r.interval == longest and lo <= r.n_d <= hi]
        failing = [r.n_d for r in band if r.errors]
        result.check(
            f"T_b={longest / 3600:g} h decodes without error for N_d in [{lo:g}, {hi:g}]",
            band and not failing,
            f"{len(band)} threshold(s) in the band" + (f", errors at N_d={failing}" if failing else ""),
            log,
            required=True,
        )
    result.summary = {"bits": len(sequence), "share_of_ones": ones}
    return result
