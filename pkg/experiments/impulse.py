# experiments/impulse.py
import numpy as np

from blocks.propagation import build_kernel
from engines.stochastic import Channel, calibrate_absorption, expected_impulse_counts, impulse_response
from experiments.common import SECTION, RunResult, within_standard_errors
from model.trace import grid_length
from utils import utils


def _run_one(seed, channel, emit, surfaces, particles, ts, steps, substeps):
    return impulse_response(channel, emit, list(surfaces), particles, ts, steps, np.random.default_rng(seed), substeps)


def run_impulse(scenario, log, verbose=False, max_workers=None) -> RunResult:
    """
    One release of particles from the emitting surface, absorbed counts at each
    watched surface: analytic kernels and, for the stochastic engine, the
    average over independent releases.
    """
    log(SECTION + "\nRunning impulse response (channel kernel vs particle releases)...")
    setup = scenario.impulse
    geometry = scenario.geometry
    params = scenario.species[setup.species]
    ts = scenario.ts
    result = RunResult(scenario.name or "impulse")

    expected = []
    for k, surface in enumerate(setup.surfaces, 1):
        kernel = build_kernel(
            setup.distance, setup.emit, surface, params, geometry, scenario.horizon, ts, **scenario.kernel_options
        )
        counts = np.zeros(grid_length(scenario.horizon, ts))
        tab = expected_impulse_counts(kernel, setup.particles)[: counts.size]
        counts[: tab.size] = tab
        expected.append(counts)
        result.add_counts(f"analytic_S{k}", counts, geometry.region_volume(surface), ts)
        peak = int(np.argmax(counts))
        result.summary[f"S{k}"] = {"peak_time_s": peak * ts, "peak_molecules": float(counts[peak]), "total": float(counts.sum())}
        if verbose:
            log(
                f"S{k} [{surface.y_lo:g}, {surface.y_hi:g}] um: peak {counts[peak]:.4g} molecules at {peak * ts:g} s, "
                f"{kernel.eigenvalues.size} axial / {kernel.gammas.size} lateral terms",
                when=result.name,
                severity="DEBUG",
            )

    if len(expected) >= 2:
        first, last = result.summary["S1"], result.summary[f"S{len(expected)}"]
        result.check(
            "far surface peaks later and lower",
            last["peak_time_s"] > first["peak_time_s"] and last["peak_molecules"] < first["peak_molecules"],
            f"S1 {first['peak_molecules']:.3g} at {first['peak_time_s']:g} s, "
            f"S{len(expected)} {last['peak_molecules']:.3g} at {last['peak_time_s']:g} s",
            log,
        )

    if scenario.engine == "analytic":
        return result

    channel = Channel(setup.distance, geometry.width, geometry.H, params, geometry.u)
    steps = len(expected[0]) - 1
    seeds = np.random.SeedSequence(scenario.seed).spawn(scenario.realizations)
    runs = utils.run_parallel(
        _run_one, seeds, channel, setup.emit, setup.surfaces, setup.particles, ts, steps, scenario.substeps,
        max_workers=max_workers,
    )
    stack = np.stack(runs).astype(float)
    mean = stack.mean(axis=0)
    stderr = stack.std(axis=0, ddof=1) / np.sqrt(len(runs)) if len(runs) > 1 else np.zeros_like(mean)
    for k, surface in enumerate(setup.surfaces, 1):
        result.add_counts(f"stochastic_S{k}", mean[k - 1], geometry.region_volume(surface), ts, stderr[k - 1])
        analytic = expected[k - 1]
        # bins carrying the signal; the far tail is zero in both
        live = analytic > 1e-3 * analytic.max(initial=0.0)
        # Poisson floor so empty bins near the front do not get a zero error bar
        floor = np.sqrt(analytic / len(runs))
        ok = within_standard_errors(mean[k - 1], np.maximum(stderr[k - 1], floor), analytic)[live]
        share = float(ok.mean()) if ok.size else 1.0
        result.check(
            f"S{k} within 3 standard errors",
            share >= 0.95,
            f"{share:.1%} of {ok.size} bins, {len(runs)} releases of {setup.particles}",
            log,
        )
    total = stack.sum(axis=2).mean(axis=0)
    result.summary["stochastic_totals"] = total.tolist()

    kernel = build_kernel(
        setup.distance, setup.emit, setup.surfaces[0], params, geometry, scenario.horizon, ts, **scenario.kernel_options
    )
    report = calibrate_absorption(kernel, setup.particles * max(1, scenario.realizations), scenario.seed, scenario.substeps)
    result.summary["calibration"] = report
    result.check(
        "absorption calibration",
        abs(report["relative_error"]) <= 0.1,
        f"p_a={report['p_absorb']:.4f}, simulated {report['simulated']:.0f} vs analytic {report['analytic']:.1f}",
        log,
    )
    return result
