import argparse
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from blocks.propagation import KernelCache
from experiments import (
    export_result,
    load_scenario,
    run_bcsk,
    run_ber,
    run_demodulation,
    run_impulse,
    run_manifest,
    run_modulation,
    run_simulation,
    run_validate,
)
from experiments.export import write_json
from experiments.scenario import load_geometry
from model.errors import ConfigError, CskError
from synthesis.layout import export_layout_dot, synthesize_layout
from utils import utils

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_VALIDATION = 3

PRESETS = ("fig9", "fig10", "fig11", "fig12", "fig13")


def parse_args(argv=None):
    parser = argparse.ArgumentParser(
        prog=os.path.basename(__file__),
        description="Simulates concentration shift keying links built from engineered cell populations",
        usage="python %(prog)s {synth,analytic,simulate,validate,ber} [options]",
        epilog="Quantities take explicit units, e.g. --ts '0.01 s' or --Tb '10 h'.\n"
        "Scenario files are JSON; --config is merged over --preset and flags are applied last.\n"
        "A manifest.json written by a previous run can be passed back with --config.\n",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument(
        "command",
        choices=("synth", "analytic", "simulate", "validate", "ber"),
        help="synth: emit the layout for --m; analytic: cascade evaluation; simulate: particle engine; "
        "validate: analytic vs particle comparison; ber: bit error rate sweep",
    )
    parser.add_argument("--preset", choices=PRESETS, help="Built-in experiment")
    parser.add_argument("--config", type=str, help="Scenario JSON file")
    parser.add_argument("--out", type=str, default="results", help="Output directory (default: results)")
    parser.add_argument("--seed", type=int, help="Random seed")
    parser.add_argument("--realizations", type=int, help="Number of particle realizations")
    parser.add_argument("--ts", type=str, help="Sampling step with unit, e.g. '0.01 s'")
    parser.add_argument("--m", type=int, help="Bits per symbol")
    parser.add_argument("--Tb", type=str, help="Bit interval with unit, e.g. '10 h'")
    parser.add_argument("--workers", type=int, help="Parallel realizations (default: one per CPU)")
    parser.add_argument(
        "-v",
        "--verbose",
        action="store_true",
        required=False,
        help="Outputs verbose information",
    )
    parser.add_argument(
        "--no-file",
        action="store_true",
        help="Do not write a result log; log only to console.",
    )
    return parser.parse_args(argv)


def open_output_file(out_dir, no_file):
    """
    Opens the result log in the output directory unless disabled.
    """
    output_file = None
    file_handle = None

    if not no_file:
        output_file = str(Path(out_dir) / "csk_simulator_result.txt")
        try:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            file_handle = open(output_file, "w", encoding="utf-8")
        except Exception as e:
            utils.log(
                f"Failed to open result file '{output_file}' for writing: {e}. "
                f"Continuing without file output.",
                severity="WARNING",
            )
            output_file = None
            file_handle = None

    return output_file, file_handle


def flag_overrides(args) -> dict:
    overrides = {"seed": args.seed, "realizations": args.realizations, "ts": args.ts, "m": args.m}
    if args.Tb:
        overrides["interval"] = args.Tb
        overrides["intervals"] = [args.Tb]
    return overrides


def synth(args, log):
    if args.preset or args.config:
        layout = load_scenario(args.preset, args.config, flag_overrides(args)).layout()
    else:
        layout = synthesize_layout(args.m or 2, load_geometry())
    out = Path(args.out)
    write_json(out / f"layout_m{layout.m}.json", layout.to_dict())
    (out / f"layout_m{layout.m}.dot").write_text(export_layout_dot(layout), encoding="utf-8")
    kinds = {}
    for p in layout.populations.values():
        kinds[p.kind] = kinds.get(p.kind, 0) + 1
    log(
        f"m={layout.m}: " + ", ".join(f"{v} {k}" for k, v in sorted(kinds.items()))
        + f", {len(layout.edges)} edges -> {out / f'layout_m{layout.m}.json'}",
        when="synth",
        severity="INFO",
    )
    return EXIT_OK


def run(args, log) -> int:
    if args.command == "synth":
        return synth(args, log)

    scenario = load_scenario(args.preset, args.config, flag_overrides(args))
    log(f"Scenario '{scenario.name}' ({scenario.kind}, m={scenario.m}, ts={scenario.ts:g} s, horizon={scenario.horizon:g} s)")
    cache = KernelCache(Path(args.out) / "kernels")

    if args.command == "analytic":
        scenario = replace(scenario, engine="analytic")
        if scenario.kind == "impulse":
            result = run_impulse(scenario, log, args.verbose)
        elif scenario.kind == "bcsk":
            result = run_bcsk(scenario, log, args.verbose, cache=cache)
        elif scenario.kind == "qcsk":
            runner = run_demodulation if scenario.sample_delay > 0 else run_modulation
            result = runner(scenario, log, args.verbose, cache=cache)
        else:
            result = run_ber(scenario, log, args.verbose, cache=cache)
    elif args.command == "simulate":
        scenario = replace(scenario, engine="stochastic")
        if scenario.kind == "impulse":
            result = run_impulse(scenario, log, args.verbose, max_workers=args.workers)
        else:
            result = run_simulation(scenario, log, args.verbose, max_workers=args.workers)
    elif args.command == "validate":
        result = run_validate(scenario, log, args.verbose, max_workers=args.workers)
    else:
        if scenario.kind != "ber":
            raise ConfigError(f"'ber' needs a BER scenario, got {scenario.kind!r}", scenario.source)
        result = run_ber(scenario, log, args.verbose, cache=cache)

    extra = {"command": args.command, "kernels": list(cache.keys)}
    if args.config:
        extra["config_md5"] = utils.calculate_file_hash(args.config)
    written = export_result(result, args.out, run_manifest(scenario, extra))
    log(f"{len(written)} file(s) written to {args.out}")
    failed = result.failed_required
    if failed:
        log(f"required check(s) failed: {', '.join(c.name for c in failed)}", when=args.command, severity="ERROR")
        return EXIT_VALIDATION
    if args.command == "validate" and not result.passed:
        return EXIT_VALIDATION
    return EXIT_OK


def main(argv=None) -> int:
    """
    Runs one subcommand; logs to console and, unless --no-file, to a result
    file in the output directory.
    """
    build_version = utils.get_version()
    utils.log(f"Script version: {build_version}")

    args = parse_args(argv)
    output_file, file_handle = open_output_file(args.out, args.no_file)

    def log(message, when="", severity=""):
        utils.log(message, log_file=file_handle, when=when, severity=severity)

    code = EXIT_OK
    try:
        start_time = time.time()
        code = run(args, log)
        end_time = time.time()
        log("─" * 80 + f"\n'{args.command}' completed in {end_time - start_time:.2f} seconds.")

    except ConfigError as e:
        utils.log(f"Configuration error: {e}", log_file=file_handle, severity="ERROR")
        code = EXIT_CONFIG
    except CskError as e:
        utils.log(f"Simulation error: {e}", log_file=file_handle, severity="ERROR")
        code = EXIT_FAILURE
    except Exception as e:
        utils.log(f"An unexpected error occurred: {str(e)}", log_file=file_handle, severity="ERROR")
        code = EXIT_FAILURE

    finally:
        if file_handle:
            try:
                file_handle.close()
            except Exception:
                pass

    if output_file:
        utils.log(f"Results have been saved to {output_file}\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
