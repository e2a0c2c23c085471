import sys
from pathlib import Path

from experiments.scenario import load_geometry
from synthesis.layout import export_layout_dot, synthesize_layout
from utils import utils


def main():
    m = int(sys.argv[1]) if len(sys.argv) > 1 else 2
    out = Path(sys.argv[2]) if len(sys.argv) > 2 else Path(f"layout_m{m}.dot")

    layout = synthesize_layout(m, load_geometry())
    out.write_text(export_layout_dot(layout), encoding="utf-8")

    status = f"Layout for m={m}:"
    for pop in sorted(layout.populations.values(), key=lambda p: (p.station, -p.lane.y_hi)):
        status += f"\n - {pop.name}: {pop.label} at L{pop.station}, y=[{pop.lane.y_lo:g}, {pop.lane.y_hi:g}] um"
    utils.log(status, severity="INFO")
    utils.log(f"Graphviz file written to {out}")


if __name__ == "__main__":
    main()
