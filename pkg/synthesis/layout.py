"""
Spatial layout of a CSK consortium: which cell populations sit in which lane
at which station, and which propagation edges connect them.

Every population absorbs at its station L[k] and re-emits from the next
station L[k+1] (the far face of the cell column). Sources emit from their own
station, sinks only absorb.
"""

import json
from dataclasses import asdict, dataclass, field, replace

from model.errors import LayoutError, SynthesisError, WiringError
from model.types import ChannelGeometry, Surface
from synthesis import logic

SOURCE = "Source"
SINK = "Sink"
ID = "ID"
NOT = "NOT"
THRESHOLD = "Threshold"
BLOCK_KINDS = (ID, NOT, THRESHOLD)

DEFAULT_SPECIES = ("aCa", "DOX", "aSc")
NOT_REPRESSOR = "Repressor-LacI"
THRESHOLD_REPRESSOR = "Repressor-TetR"
# induces the thresholding repressor; not amplified by the production factor
THRESHOLD_INDUCER = "Inducer-TetR"

# station indices of the standard channel
TX_STATION = 0
MOD_STATION = 1
FRONT_STATION = 3
BACK_STATION = 5
MERGE_STATION = 7
DETECT_STATION = 9

BCSK_THRESHOLD = 0.01
QCSK_THRESHOLDS = {0: 0.1, 1: 0.45, 2: 0.7}
QCSK_PRODUCTION_FACTOR = 40.0


@dataclass(frozen=True)
class Population:
    """One cell population (or a source / detection surface)."""

    name: str
    kind: str
    lane: Surface
    station: int
    input_species: str = ""
    output_species: str = ""
    weight: float = 1.0
    repressor: str = ""
    inducer: str = ""
    threshold: float = 0.0
    threshold_index: int = -1
    bit: int = -1

    @property
    def label(self) -> str:
        if self.kind == SOURCE:
            return f"S{self.bit}({self.output_species})"
        if self.kind == SINK:
            return f"Y{self.bit}({self.input_species})"
        if self.kind == THRESHOLD:
            return f"T{self.threshold_index}({self.input_species}->{self.output_species})"
        return f"{self.kind}({self.input_species}->{self.output_species})"


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    species: str


@dataclass
class CircuitLayout:
    """Populations by name plus the propagation edges between them."""

    m: int
    geometry: ChannelGeometry
    populations: dict = field(default_factory=dict)
    edges: list = field(default_factory=list)
    production_factor: float = 1.0

    def add(self, population: Population) -> Population:
        if population.name in self.populations:
            raise LayoutError(f"duplicate population name {population.name!r}")
        self.geometry.check_surface(population.lane)
        if not 0 <= population.station < len(self.geometry.L):
            raise LayoutError(f"{population.name}: station {population.station} outside L")
        self.populations[population.name] = population
        return population

    def connect(self, source: str, target: str):
        src = self.populations[source]
        dst = self.populations[target]
        if src.output_species != dst.input_species:
            raise WiringError(
                f"{source} emits {src.output_species} but {target} senses {dst.input_species}"
            )
        self.edges.append(Edge(source, target, src.output_species))

    def emit_station(self, population: Population) -> int:
        return population.station if population.kind == SOURCE else population.station + 1

    def distance(self, edge: Edge) -> float:
        src = self.populations[edge.source]
        dst = self.populations[edge.target]
        return self.geometry.L[dst.station] - self.geometry.L[self.emit_station(src)]

    def incoming(self, name: str) -> list:
        return [e for e in self.edges if e.target == name]

    def outgoing(self, name: str) -> list:
        return [e for e in self.edges if e.source == name]

    def of_kind(self, kind: str) -> list:
        return [p for p in self.populations.values() if p.kind == kind]

    @property
    def sources(self) -> list:
        return sorted(self.of_kind(SOURCE), key=lambda p: p.bit)

    @property
    def sinks(self) -> list:
        return sorted(self.of_kind(SINK), key=lambda p: p.bit)

    def topological_order(self) -> list:
        """Population names, every edge pointing forward; LayoutError on a cycle."""
        indegree = {name: 0 for name in self.populations}
        for e in self.edges:
            if e.source not in indegree or e.target not in indegree:
                raise LayoutError(f"dangling edge {e.source} -> {e.target}")
            indegree[e.target] += 1
        ready = [n for n, d in indegree.items() if d == 0]
        order = []
        while ready:
            name = ready.pop(0)
            order.append(name)
            for e in self.outgoing(name):
                indegree[e.target] -= 1
                if indegree[e.target] == 0:
                    ready.append(e.target)
        if len(order) != len(self.populations):
            stuck = sorted(n for n, d in indegree.items() if d > 0)
            raise LayoutError(f"layout contains a cycle through {', '.join(stuck)}")
        return order

    def validate(self):
        """Structural checks: DAG, wiring, positive distances and orthogonal emitters."""
        self.topological_order()
        for e in self.edges:
            src = self.populations[e.source]
            dst = self.populations[e.target]
            if e.species != dst.input_species:
                raise WiringError(f"{e.source} -> {e.target}: {dst.label} does not sense {e.species}")
            if src.kind == SINK or dst.kind == SOURCE:
                raise LayoutError(f"edge {e.source} -> {e.target} runs against the channel")
            if not self.distance(e) > 0:
                raise LayoutError(f"edge {e.source} -> {e.target} has non-positive distance")
        check_orthogonality(self)
        return self

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "production_factor": self.production_factor,
            "geometry": {
                "L": list(self.geometry.L),
                "W": list(self.geometry.W),
                "H": self.geometry.H,
                "R": self.geometry.R,
                "u": self.geometry.u,
                "slab_depth": self.geometry.slab_depth,
                "agent_radius": self.geometry.agent_radius,
            },
            "populations": [
                {**asdict(p), "lane": p.lane.as_list()} for p in self.populations.values()
            ],
            "edges": [
                {**asdict(e), "distance": self.distance(e)} for e in self.edges
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict, geometry: ChannelGeometry | None = None) -> "CircuitLayout":
        if geometry is None:
            g = data["geometry"]
            geometry = ChannelGeometry(**g)
        layout = cls(data["m"], geometry, production_factor=data.get("production_factor", 1.0))
        for p in data["populations"]:
            layout.add(Population(**{**p, "lane": Surface(*p["lane"])}))
        for e in data["edges"]:
            layout.connect(e["source"], e["target"])
        return layout.validate()


def check_orthogonality(layout: CircuitLayout):
    """
    Two populations emitting the same species from the same station must use
    disjoint lanes; otherwise their signals could not be told apart.
    """
    emitters = [p for p in layout.populations.values() if p.kind != SINK]
    for k, a in enumerate(emitters):
        for b in emitters[k + 1 :]:
            if (
                a.output_species == b.output_species
                and layout.emit_station(a) == layout.emit_station(b)
                and a.lane.overlaps(b.lane)
            ):
                raise LayoutError(
                    f"{a.name} and {b.name} both emit {a.output_species} into overlapping lanes"
                )


def _pool(species):
    distinct = list(dict.fromkeys(species))
    if len(distinct) < len(DEFAULT_SPECIES):
        raise SynthesisError(
            f"layout needs {len(DEFAULT_SPECIES)} orthogonal signalling species, "
            f"got {len(distinct)} ({', '.join(distinct) or 'none'}); "
            f"short by {len(DEFAULT_SPECIES) - len(distinct)}"
        )
    return distinct[:3]


def bcsk_layout(geometry: ChannelGeometry, lane_width=5.0, threshold=BCSK_THRESHOLD, species=DEFAULT_SPECIES):
    """Single-lane on-off keying link: source -> ID -> threshold -> detection."""
    carrier, tx, rx = _pool(species)
    geometry = replace(geometry, W=(0.0, float(lane_width)))
    lane = geometry.full_width()
    layout = CircuitLayout(1, geometry)
    layout.add(Population("S0", SOURCE, lane, TX_STATION, output_species=carrier, bit=0))
    layout.add(Population("tx0", ID, lane, MOD_STATION, carrier, tx))
    layout.add(
        Population(
            "B0", THRESHOLD, lane, FRONT_STATION, tx, rx,
            repressor=THRESHOLD_REPRESSOR, inducer=THRESHOLD_INDUCER, threshold=threshold, threshold_index=0,
        )
    )
    layout.add(Population("Y0", SINK, lane, BACK_STATION, input_species=rx, bit=0))
    layout.connect("S0", "tx0")
    layout.connect("tx0", "B0")
    layout.connect("B0", "Y0")
    return layout.validate()


def _lane_groups(m):
    """
    Threshold lanes top-down: Y_{m-1} first, then for each lower Y_i the B_q lane
    followed by (ID, NOT) lanes of every summand.
    """
    groups = []
    for i in range(m - 1, -1, -1):
        q = logic.ilf_top_index(m, i)
        if i == m - 1:
            groups.append((i, [("top", q)]))
            continue
        entries = [("top", q)]
        for a, b in logic.ilf_pairs(m, i):
            entries += [("id", a), ("not", b)]
        groups.append((i, entries))
    return groups


def lane_count(m: int) -> int:
    return sum(len(entries) for _, entries in _lane_groups(m))


def default_thresholds(m: int) -> dict:
    if m == 2:
        return dict(QCSK_THRESHOLDS)
    levels = 2**m - 1
    lo, hi = QCSK_THRESHOLDS[0], QCSK_THRESHOLDS[2]
    return {j: lo + (hi - lo) * j / (levels - 1) for j in range(levels)}


def _qcsk_geometry(geometry: ChannelGeometry, m: int, lane_width):
    """Channel lanes for order m; m = 2 keeps the standard lane boundaries."""
    if m == 2:
        if len(geometry.W) != 5:
            raise SynthesisError("the QCSK layout needs five lane boundaries W0..W4")
        return geometry, [geometry.lane(3, 4), geometry.lane(2, 3), geometry.lane(1, 2), geometry.lane(0, 1)]
    count = lane_count(m)
    width = lane_width if lane_width else geometry.width / count
    if width < 2 * geometry.agent_radius:
        raise SynthesisError(
            f"m={m} needs {count} lanes; {width:.3g} um per lane is narrower than a cell "
            f"({2 * geometry.agent_radius} um), pass a wider lane_width"
        )
    total = width * count
    geometry = replace(geometry, W=tuple(width * k for k in range(count + 1)))
    lanes = [Surface(total - width * (k + 1), total - width * k) for k in range(count)]
    return geometry, lanes


def _tx_lanes(geometry: ChannelGeometry, m: int) -> list:
    """
    Modulator lanes indexed by bit, widths proportional to 2^i from the top of
    the channel down. The cell count, and with it the released amount, scales
    with the lane width; for m = 2 this gives S0 on W3..W4 and S1 on W0..W3.
    """
    unit = geometry.width / (2**m - 1)
    lanes = []
    top = geometry.width
    for i in range(m):
        lo = 0.0 if i == m - 1 else top - unit * 2**i
        lanes.append(Surface(lo, top))
        top -= unit * 2**i
    return lanes


def synthesize_layout(
    m: int,
    geometry: ChannelGeometry,
    species=DEFAULT_SPECIES,
    thresholds: dict | None = None,
    lane_width: float | None = None,
    production_factor: float | None = None,
) -> CircuitLayout:
    """
    Modulator, thresholding front-end and ILF back-end for CSK order m.

    Args:
        m (int): Bits per symbol; 1 gives the BCSK link, 2 the QCSK circuit.
        geometry (ChannelGeometry): Stations L0..L9 and, for m = 2, lanes W0..W4.
        species (tuple): Carrier, transmitted and receiver-side species.
        thresholds (dict): Threshold-molecule level (nM) per index j.
        lane_width (float): Front-end lane width for m >= 3; defaults to an
            equal split of the channel width.

    Returns:
        CircuitLayout: A validated layout.
    """
    logic._check_order(m)
    if len(geometry.L) <= DETECT_STATION:
        raise SynthesisError(f"layout needs {DETECT_STATION + 1} stations, geometry has {len(geometry.L)}")
    if m == 1:
        t = (thresholds or {}).get(0, BCSK_THRESHOLD)
        return bcsk_layout(geometry, threshold=t, species=species)

    carrier, tx, rx = _pool(species)
    levels = thresholds or default_thresholds(m)
    missing = [j for j in range(2**m - 1) if j not in levels]
    if missing:
        raise SynthesisError(f"no threshold level for B{', B'.join(map(str, missing))}")
    geometry, lanes = _qcsk_geometry(geometry, m, lane_width)
    layout = CircuitLayout(
        m,
        geometry,
        production_factor=QCSK_PRODUCTION_FACTOR if production_factor is None else production_factor,
    )

    tx_names = []
    for i, lane in enumerate(_tx_lanes(geometry, m)):
        layout.add(Population(f"S{i}", SOURCE, lane, TX_STATION, output_species=carrier, bit=i))
        layout.add(Population(f"tx{i}", ID, lane, MOD_STATION, carrier, tx))
        layout.connect(f"S{i}", f"tx{i}")
        tx_names.append(f"tx{i}")

    lane_iter = iter(lanes)
    for i, entries in _lane_groups(m):
        group_lanes = []
        merge_inputs = []
        for role, j in entries:
            lane = next(lane_iter)
            group_lanes.append(lane)
            thr = layout.add(
                Population(
                    f"B{j}_y{i}", THRESHOLD, lane, FRONT_STATION, tx, rx,
                    repressor=THRESHOLD_REPRESSOR, inducer=THRESHOLD_INDUCER,
                    threshold=float(levels[j]), threshold_index=j,
                )
            )
            for name in tx_names:
                layout.connect(name, thr.name)
            kind = NOT if role in ("top", "not") else ID
            first = layout.add(
                Population(
                    f"{kind.lower()}{j}_y{i}", kind, lane, BACK_STATION, rx, carrier,
                    repressor=NOT_REPRESSOR if kind == NOT else "",
                )
            )
            layout.connect(thr.name, first.name)
            if role == "top":
                second = layout.add(
                    Population(f"inv{j}_y{i}", NOT, lane, MERGE_STATION, carrier, rx, repressor=NOT_REPRESSOR)
                )
                layout.connect(first.name, second.name)
                merge_inputs.append(second.name)
            elif role == "id":
                pending = first.name
            else:
                merged = layout.add(
                    Population(
                        f"merge{j}_y{i}", NOT, lane.union(group_lanes[-2]), MERGE_STATION,
                        carrier, rx, repressor=NOT_REPRESSOR,
                    )
                )
                layout.connect(pending, merged.name)
                layout.connect(first.name, merged.name)
                merge_inputs.append(merged.name)
        sink_lane = group_lanes[0]
        for lane in group_lanes[1:]:
            sink_lane = sink_lane.union(lane)
        layout.add(Population(f"Y{i}", SINK, sink_lane, DETECT_STATION, input_species=rx, bit=i))
        for name in merge_inputs:
            layout.connect(name, f"Y{i}")
    return layout.validate()


def evaluate_backend(layout: CircuitLayout, code: tuple) -> tuple:
    """
    Push a thermometer code (B_{2^m-2}..B_0) through the layout as pure logic.

    Thresholding populations output their B_j, ID passes the OR of its inputs,
    NOT negates it and a sink reports the OR of its inputs.

    Returns:
        tuple: (Y_{m-1}, ..., Y_0).
    """
    bits = logic.as_bit_vector(code)
    value = {}
    for name in layout.topological_order():
        pop = layout.populations[name]
        inputs = [value[e.source] for e in layout.incoming(name)]
        if pop.kind == SOURCE:
            value[name] = 0
        elif pop.kind == THRESHOLD:
            value[name] = int(bits[pop.threshold_index])
        elif pop.kind == NOT:
            value[name] = 1 - int(any(inputs))
        else:
            value[name] = int(any(inputs))
    return tuple(value[s.name] for s in reversed(layout.sinks))


def export_layout_dot(layout: CircuitLayout) -> str:
    """Graphviz description: one node per population, edges labelled species and distance."""
    shapes = {SOURCE: "invhouse", SINK: "house", THRESHOLD: "diamond", ID: "box", NOT: "box"}
    lines = [f"digraph csk_m{layout.m} {{", "  rankdir=LR;"]
    for p in layout.populations.values():
        x = layout.geometry.L[p.station]
        lane = f"[{p.lane.y_lo:g}, {p.lane.y_hi:g}]"
        extra = f"\\nC_th={p.threshold:g} nM" if p.kind == THRESHOLD else ""
        extra += f"\\nx{p.weight:g}" if p.weight != 1.0 else ""
        lines.append(
            f'  "{p.name}" [shape={shapes[p.kind]}, label="{p.label}\\nL={x:g} y={lane}{extra}"];'
        )
    for e in layout.edges:
        lines.append(f'  "{e.source}" -> "{e.target}" [label="{e.species} {layout.distance(e):g} um"];')
    lines.append("}")
    return "\n".join(lines) + "\n"

