import sys

from blocks.propagation import build_kernel
from engines.stochastic import calibrate_absorption
from experiments.scenario import load_geometry, load_species
from model.types import Surface
from model.units import parse_quantity
from utils import utils

TOLERANCE = 0.10


def get_settings(argv):
    """
    Optional positional arguments: species, distance, timestep, particles, substeps.
    Defaults reproduce the DOX channel of the impulse preset.
    """
    species = argv[1] if len(argv) > 1 else "DOX"
    distance = parse_quantity(argv[2] if len(argv) > 2 else "10 um", "length")
    ts = parse_quantity(argv[3] if len(argv) > 3 else "0.01 s", "time")
    particles = int(argv[4]) if len(argv) > 4 else 2000
    substeps = int(argv[5]) if len(argv) > 5 else 4
    return species, distance, ts, particles, substeps


def main():
    species_name, distance, ts, particles, substeps = get_settings(sys.argv)
    species = load_species()
    if species_name not in species:
        utils.log(f"Unknown species '{species_name}', choose one of {', '.join(species)}", severity="ERROR")
        sys.exit(2)
    geometry = load_geometry()

    utils.log(
        "This script compares the particle absorption rule against the analytic kernel",
        severity="INFO",
    )
    utils.log(
        f"{species_name} over {distance:g} um, ts={ts:g} s, {substeps} substep(s), {particles} particles"
    )

    full = geometry.full_width()
    kernel = build_kernel(distance, full, full, species[species_name], geometry, 60.0, ts)
    report = calibrate_absorption(kernel, particles, seed=2024, substeps=substeps)

    status = "Calibration:"
    for key in ("dt", "p_absorb", "simulated", "analytic", "relative_error"):
        status += f"\n - {key}: {report[key]:.6g}"
    utils.log(status, severity="INFO")

    if abs(report["relative_error"]) <= TOLERANCE:
        utils.log(f"Absorbed totals agree within {TOLERANCE:.0%}", severity="INFO")
    else:
        utils.log(
            f"Absorbed totals differ by {report['relative_error']:+.1%}; increase the substeps",
            severity="WARNING",
        )
        sys.exit(1)


if __name__ == "__main__":
    main()
