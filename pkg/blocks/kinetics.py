"""
ID, NOT and thresholding cell blocks.

Every block turns a per-interval input dose (nM delivered during [t, t+ts])
into the net output concentration it releases during the same interval.
ID and NOT are linear exponential filters wrapped around pointwise Hill maps,
so they run over whole traces with `lfilter`, on a grid refined to at most
BLOCK_RESOLUTION per step. The thresholding block carries a bimolecular
reaction and is advanced one interval at a time, either with the coupled
update (reaction solved together with production and degradation, sub-stepped
where the reactants cross over) or with the plain operator-splitting update
(production, degradation, then reaction).

The same recursions are exposed as streaming `*_block_step` functions that
advance a BlockState by one interval; both paths agree sample for sample.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.signal import lfilter

from model.errors import ConfigError, DomainError
from model.trace import SignalTrace, clamp_nonnegative
from model.types import SpeciesParams

EQUAL_REACTANT_RTOL = 1e-9
# longest internal step of the ID/NOT recursions (s)
BLOCK_RESOLUTION = 0.1
# drift of I - R allowed per coupled sub-step, relative to the reaction scale
DRIFT_PER_SUBSTEP = 0.2
MIN_SUBSTEP = 0.01
# refined samples handled per lfilter call
CHUNK_SAMPLES = 1 << 20


class BlockKind(str, Enum):
    ID = "ID"
    NOT = "NOT"
    THRESHOLD = "Threshold"


class ThresholdScheme(str, Enum):
    COUPLED = "coupled"
    SPLIT = "split"


@dataclass(frozen=True)
class CellBlockConfig:
    """
    One engineered-cell population.

    eta: exchange multiplier applied to the absorbed dose, xi: release rate (1/s),
    k_f: input/repressor reaction rate (1/(nM s), thresholding only),
    c_th: threshold-molecule concentration trace (nM, thresholding only),
    inducer: Hill parameters turning c_th into repressor production
    (the repressor's own parameters when absent),
    weight: output multiplier standing in for the population size.
    """

    kind: BlockKind
    input_species: SpeciesParams
    output_species: SpeciesParams
    repressor: SpeciesParams | None = None
    eta: float = 1.0
    xi: float = 20.0
    k_f: float = 1.0
    c_th: SignalTrace | None = None
    weight: float = 1.0
    inducer: SpeciesParams | None = None
    scheme: ThresholdScheme = ThresholdScheme.COUPLED

    def __post_init__(self):
        if self.eta <= 0 or self.xi <= 0:
            raise ConfigError(f"{self.kind.value} block needs eta > 0 and xi > 0")
        if self.weight < 0:
            raise ConfigError("population weight must be >= 0")
        if self.kind in (BlockKind.NOT, BlockKind.THRESHOLD) and self.repressor is None:
            raise ConfigError(f"{self.kind.value} block needs repressor parameters")
        if self.kind == BlockKind.THRESHOLD:
            if self.k_f <= 0:
                raise ConfigError("thresholding block needs k_f > 0")
            if self.c_th is None:
                raise ConfigError("thresholding block needs a threshold-molecule trace")
        try:
            object.__setattr__(self, "scheme", ThresholdScheme(self.scheme))
        except ValueError as e:
            raise ConfigError(f"unknown thresholding scheme {self.scheme!r}") from e

    @property
    def label(self) -> str:
        return f"{self.kind.value}({self.input_species.name}->{self.output_species.name})"

    @property
    def induction(self) -> SpeciesParams:
        return self.inducer if self.inducer is not None else self.repressor


@dataclass
class BlockState:
    """Mutable per-population state; all concentrations in nM."""

    c_iin: float = 0.0
    c_r: float = 0.0
    c_oin: float = 0.0
    c_o_accum: float = 0.0
    step: int = 0


def _decay(k: float, ts: float) -> float:
    return math.exp(-k * ts)


def _hold_gain(k: float, ts: float) -> float:
    """Integral of exp(-k s) over one interval; ts when k = 0."""
    return ts if k == 0 else -math.expm1(-k * ts) / k


def substeps(ts: float) -> int:
    """Equal sub-intervals per sampling interval for the ID/NOT recursions."""
    return max(1, math.ceil(ts / BLOCK_RESOLUTION - 1e-9))


def hill_activation(x, params: SpeciesParams):
    """
    beta * x^n / (1 + (theta x)^n), written as beta/theta^n * r/(1+r) with r = (theta x)^n.
    """
    x = np.asarray(x, dtype=float)
    r = np.power(params.theta * np.maximum(x, 0.0), params.n)
    with np.errstate(divide="ignore", over="ignore"):
        frac = np.where(r > 1.0, 1.0 / (1.0 + 1.0 / r), r / (1.0 + r))
    return params.beta / params.theta**params.n * frac


def hill_repression(c_r, repressor: SpeciesParams):
    """1 / (1 + (theta_R c_R)^n_R)."""
    r = np.power(repressor.theta * np.maximum(np.asarray(c_r, dtype=float), 0.0), repressor.n)
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + r)


def _repressed(c_r: float, repressor: SpeciesParams) -> float:
    try:
        return 1.0 / (1.0 + (repressor.theta * max(c_r, 0.0)) ** repressor.n)
    except OverflowError:
        return 0.0


def threshold_rate(cfg: CellBlockConfig, c_th):
    """Repressor production f_R (nM/s) induced by the threshold molecule."""
    return hill_activation(c_th, cfg.induction)


def exchange_impulse(species: SpeciesParams, t: float, eta: float = 1.0) -> float:
    """Impulse response of the molecule exchange: eta * exp(-k_d t)."""
    if t < 0:
        raise DomainError(f"impulse response undefined for t = {t} < 0")
    return eta * math.exp(-species.k_d * t)


def steady_state_output(cfg: CellBlockConfig, saturated: bool) -> float:
    """
    Intracellular output concentration at equilibrium.

    ID: saturated input gives beta/(theta^n (k_d + xi)); NOT/threshold: the
    unrepressed level beta/(k_d + xi) when saturated is False.
    """
    out = cfg.output_species
    a = out.k_d + cfg.xi
    if cfg.kind == BlockKind.ID:
        return out.beta / out.theta**out.n / a if saturated else 0.0
    if saturated:
        c_r = cfg.repressor.beta / cfg.repressor.theta**cfg.repressor.n / cfg.repressor.k_d
        return out.beta * float(hill_repression(c_r, cfg.repressor)) / a
    return out.beta / a


def thresholding_value(cfg: CellBlockConfig, c_th: float) -> float:
    """Repressor equilibrium f_R / k_d without consumption by the input."""
    f_r = float(threshold_rate(cfg, c_th))
    k_d = cfg.repressor.k_d
    return f_r / k_d if k_d > 0 else math.inf


def _output_coefficients(cfg: CellBlockConfig, ts: float):
    a = cfg.output_species.k_d + cfg.xi
    e = math.exp(-a * ts)
    g = -math.expm1(-a * ts) / a
    return e, g, (ts - g) / a


def _release(cfg, c_oin_start, production, ts):
    """Released concentration over one interval for held production, plus the end state."""
    e, g, h = _output_coefficients(cfg, ts)
    released = cfg.xi * (c_oin_start * g + production * h)
    return released * cfg.weight, c_oin_start * e + production * g


def _check_dose(dose: float):
    if dose < 0:
        raise DomainError(f"input dose must be non-negative, got {dose}")


def _advance_input(state: BlockState, dose: float, cfg: CellBlockConfig, ts: float):
    """Uniform influx eta*dose over the interval with first-order loss."""
    k = cfg.input_species.k_d
    c_start = state.c_iin
    c_end = c_start * _decay(k, ts) + cfg.eta * dose * _hold_gain(k, ts) / ts
    return c_start, c_end


def id_block_step(state: BlockState, dose: float, cfg: CellBlockConfig, ts: float) -> float:
    """Advance an ID block by one interval and return the net released output (nM)."""
    _check_dose(dose)
    m = substeps(ts)
    h = ts / m
    out = cfg.output_species
    released = 0.0
    for _ in range(m):
        c_start, c_end = _advance_input(state, dose / m, cfg, h)
        production = 0.5 * float(hill_activation(c_start, out) + hill_activation(c_end, out))
        part, state.c_oin = _release(cfg, state.c_oin, production, h)
        state.c_iin = c_end
        released += part
    state.c_o_accum += released
    state.step += 1
    return released


def not_block_step(state: BlockState, dose: float, cfg: CellBlockConfig, ts: float) -> float:
    """Advance a NOT block by one interval and return the net released output (nM)."""
    _check_dose(dose)
    rep = cfg.repressor
    m = substeps(ts)
    h = ts / m
    released = 0.0
    for _ in range(m):
        c_start, c_end = _advance_input(state, dose / m, cfg, h)
        p_r = 0.5 * float(hill_activation(c_start, rep) + hill_activation(c_end, rep))
        r_start = state.c_r
        r_end = r_start * _decay(rep.k_d, h) + p_r * _hold_gain(rep.k_d, h)
        production = (
            cfg.output_species.beta
            * 0.5
            * float(hill_repression(r_start, rep) + hill_repression(r_end, rep))
        )
        part, state.c_oin = _release(cfg, state.c_oin, production, h)
        state.c_iin, state.c_r = c_end, r_end
        released += part
    state.c_o_accum += released
    state.step += 1
    return released


def bimolecular_update(x0: float, y0: float, k_f: float, ts: float) -> float:
    """
    Species x after reacting with y (x + y -> 0, rate k_f) for ts, from x0 and y0.

    Three cases: nothing to react, unequal reactants, equal reactants (relative
    tolerance EQUAL_REACTANT_RTOL, the analytic limit of the unequal case).
    """
    if x0 < 0 or y0 < 0:
        raise DomainError("reactant concentrations must be non-negative")
    if x0 == 0.0 or y0 == 0.0:
        return x0
    k = k_f * ts
    if abs(x0 - y0) <= EQUAL_REACTANT_RTOL * max(x0, y0):
        return x0 / (1.0 + k * x0)
    delta = abs(x0 - y0)
    em1 = math.expm1(-k * delta)
    if x0 > y0:
        return x0 * delta / (delta - y0 * em1)
    return x0 * delta * math.exp(-k * delta) / (delta - x0 * em1)


def _split_start(c_prev: float, source: float, k_d: float, ts: float) -> float:
    """Production then degradation over one interval: (source + c_prev) e^{-k_d ts}."""
    return (source + c_prev) * _decay(k_d, ts)


def threshold_repressor_step(c_r_prev, c_iin_prev, f_r_prev, cfg: CellBlockConfig, ts, dose=0.0):
    """
    Repressor after one interval: production (ts f_R) and degradation, then reaction
    with the intracellular input.
    """
    if min(c_r_prev, c_iin_prev, f_r_prev, dose) < 0:
        raise DomainError("threshold update needs non-negative inputs")
    c_r0 = _split_start(c_r_prev, ts * f_r_prev, cfg.repressor.k_d, ts)
    c_i0 = _split_start(c_iin_prev, cfg.eta * dose, cfg.input_species.k_d, ts)
    return bimolecular_update(c_r0, c_i0, cfg.k_f, ts)


def threshold_input_step(c_iin_prev, c_r_prev, f_r_prev, cfg: CellBlockConfig, ts, dose=0.0):
    """Mirror of threshold_repressor_step for the intracellular input molecules."""
    if min(c_r_prev, c_iin_prev, f_r_prev, dose) < 0:
        raise DomainError("threshold update needs non-negative inputs")
    c_r0 = _split_start(c_r_prev, ts * f_r_prev, cfg.repressor.k_d, ts)
    c_i0 = _split_start(c_iin_prev, cfg.eta * dose, cfg.input_species.k_d, ts)
    return bimolecular_update(c_i0, c_r0, cfg.k_f, ts)


def _riccati(x0: float, gap: float, source: float, k_d: float, k_f: float, t: float) -> float:
    """
    x after t under x' = source - k_f x (x + gap) - k_d x, gap held fixed.

    x + gap is the other reactant; x relaxes towards the non-negative root.
    """
    b = k_f * gap + k_d
    root = math.sqrt(b * b + 4.0 * k_f * source)
    x_star = 2.0 * source / (b + root) if b > 0 else (root - b) / (2.0 * k_f)
    y0 = x0 - x_star
    return x_star + y0 * math.exp(-root * t) / (1.0 + y0 * k_f * _hold_gain(root, t))


def coupled_reaction_step(c_r, c_iin, f_r, influx, cfg: CellBlockConfig, h):
    """
    Repressor and input after h, with production, degradation and the reaction
    solved together.

    The scarcer reactant follows the exact solution for the difference I - R
    held at its mid-step value; the other one follows from that difference,
    which only production and degradation move.

    Args:
        f_r (float): Repressor production (nM/s).
        influx (float): Input entering the cell (nM/s).

    Returns:
        tuple: (c_r, c_iin, repressor at mid-step)
    """
    if min(c_r, c_iin, f_r, influx) < 0:
        raise DomainError("threshold update needs non-negative inputs")
    kd_r, kd_i, k_f = cfg.repressor.k_d, cfg.input_species.k_d, cfg.k_f
    gap = c_iin - c_r
    gap_mid = gap + 0.5 * h * (influx - f_r - kd_i * c_iin + kd_r * c_r)
    if gap_mid >= 0:
        r_mid = _riccati(c_r, gap_mid, f_r, kd_r, k_f, 0.5 * h)
        r_end = _riccati(c_r, gap_mid, f_r, kd_r, k_f, h)
        i_mid = r_mid + gap_mid
    else:
        i_mid = _riccati(c_iin, -gap_mid, influx, kd_i, k_f, 0.5 * h)
        i_end = _riccati(c_iin, -gap_mid, influx, kd_i, k_f, h)
        r_mid = i_mid - gap_mid
    gap_end = gap + h * (influx - f_r - kd_i * i_mid + kd_r * r_mid)
    if gap_mid >= 0:
        i_end = r_end + gap_end
    else:
        r_end = i_end - gap_end
    return max(r_end, 0.0), max(i_end, 0.0), r_mid


def _coupled_substeps(c_r, c_iin, f_r, influx, cfg: CellBlockConfig, ts) -> int:
    """Sub-steps so that I - R moves little against the reaction scale sqrt(gap^2 + 4 f_R/k_f)."""
    if f_r == 0.0 and c_r == 0.0:
        return 1
    drift = abs(influx - f_r) * ts
    if drift == 0.0:
        return 1
    gap = c_iin - c_r
    gap_end = gap + (influx - f_r) * ts
    nearest = 0.0 if gap * gap_end <= 0 else min(abs(gap), abs(gap_end))
    scale = math.sqrt(nearest * nearest + 4.0 * f_r / cfg.k_f)
    limit = max(1, math.ceil(ts / MIN_SUBSTEP - 1e-9))
    if scale == 0.0:
        return limit
    return min(limit, max(1, math.ceil(drift / (DRIFT_PER_SUBSTEP * scale))))


def _advance_threshold(state: BlockState, dose: float, f_r: float, cfg: CellBlockConfig, ts: float) -> float:
    rep, beta = cfg.repressor, cfg.output_species.beta
    if cfg.scheme == ThresholdScheme.SPLIT:
        r_start = state.c_r
        r_end = threshold_repressor_step(state.c_r, state.c_iin, f_r, cfg, ts, dose)
        i_end = threshold_input_step(state.c_iin, state.c_r, f_r, cfg, ts, dose)
        production = beta * 0.5 * (_repressed(r_start, rep) + _repressed(r_end, rep))
        released, state.c_oin = _release(cfg, state.c_oin, production, ts)
        state.c_r, state.c_iin = r_end, i_end
        return released
    influx = cfg.eta * dose / ts
    n = _coupled_substeps(state.c_r, state.c_iin, f_r, influx, cfg, ts)
    h = ts / n
    released = 0.0
    for _ in range(n):
        r_start = state.c_r
        state.c_r, state.c_iin, r_mid = coupled_reaction_step(state.c_r, state.c_iin, f_r, influx, cfg, h)
        # Simpson over the sub-step
        production = (
            beta * (_repressed(r_start, rep) + 4.0 * _repressed(r_mid, rep) + _repressed(state.c_r, rep)) / 6.0
        )
        part, state.c_oin = _release(cfg, state.c_oin, production, h)
        released += part
    return released


def threshold_block_step(state: BlockState, dose: float, cfg: CellBlockConfig, ts: float) -> float:
    """Advance a thresholding block by one interval and return the net released output (nM)."""
    _check_dose(dose)
    if cfg.c_th is None:
        raise ConfigError("thresholding block needs a threshold-molecule trace")
    c_th = cfg.c_th.values
    f_r = float(threshold_rate(cfg, c_th[min(state.step, c_th.size - 1)]))
    released = _advance_threshold(state, dose, f_r, cfg, ts)
    state.c_o_accum += released
    state.step += 1
    return released


STEP_FUNCTIONS = {
    BlockKind.ID: id_block_step,
    BlockKind.NOT: not_block_step,
    BlockKind.THRESHOLD: threshold_block_step,
}


def block_step(state: BlockState, dose: float, cfg: CellBlockConfig, ts: float) -> float:
    return STEP_FUNCTIONS[cfg.kind](state, dose, cfg, ts)


def _starts(ends: np.ndarray, previous: float) -> np.ndarray:
    """Values at the start of each step, given the ends and the value before the first."""
    out = np.empty_like(ends)
    out[0] = previous
    out[1:] = ends[:-1]
    return out


def _carry_filter(gain: float, decay: float, x: np.ndarray, y_prev: float) -> np.ndarray:
    """y[k] = decay * y[k-1] + gain * x[k], continuing from y_prev."""
    y, _ = lfilter([gain], [1.0, -decay], x, zi=[decay * y_prev])
    return y


def _refined(doses: np.ndarray, m: int):
    """Chunks (first interval, per-sub-interval doses) of the grid refined m times."""
    per_chunk = max(1, CHUNK_SAMPLES // m)
    for lo in range(0, doses.size, per_chunk):
        yield lo, np.repeat(doses[lo : lo + per_chunk] / m, m)


class _RefinedRun:
    """Input and output recursions of an ID/NOT block on the refined grid, state carried across chunks."""

    def __init__(self, cfg: CellBlockConfig, ts: float):
        self.cfg = cfg
        self.m = substeps(ts)
        self.h = ts / self.m
        k = cfg.input_species.k_d
        self.input_gain = cfg.eta * _hold_gain(k, self.h) / self.h
        self.input_decay = _decay(k, self.h)
        self.c_iin = 0.0
        self.c_oin = 0.0

    def inputs(self, fine: np.ndarray):
        c_end = _carry_filter(self.input_gain, self.input_decay, fine, self.c_iin)
        c_start = _starts(c_end, self.c_iin)
        self.c_iin = float(c_end[-1])
        return c_start, c_end

    def release(self, production: np.ndarray) -> np.ndarray:
        """Released output per sampling interval for held production per sub-interval."""
        cfg = self.cfg
        e, g, hc = _output_coefficients(cfg, self.h)
        c_oin_end = _carry_filter(g, e, production, self.c_oin)
        fine = cfg.weight * cfg.xi * (_starts(c_oin_end, self.c_oin) * g + production * hc)
        self.c_oin = float(c_oin_end[-1])
        return fine.reshape(-1, self.m).sum(axis=1)


def _run_id(doses, cfg, ts):
    run = _RefinedRun(cfg, ts)
    out = cfg.output_species
    released = np.empty(doses.size)
    for lo, fine in _refined(doses, run.m):
        c_start, c_end = run.inputs(fine)
        production = 0.5 * (hill_activation(c_start, out) + hill_activation(c_end, out))
        part = run.release(production)
        released[lo : lo + part.size] = part
    return released


def _run_not(doses, cfg, ts):
    run = _RefinedRun(cfg, ts)
    rep = cfg.repressor
    r_gain, r_decay = _hold_gain(rep.k_d, run.h), _decay(rep.k_d, run.h)
    c_r = 0.0
    released = np.empty(doses.size)
    for lo, fine in _refined(doses, run.m):
        c_start, c_end = run.inputs(fine)
        p_r = 0.5 * (hill_activation(c_start, rep) + hill_activation(c_end, rep))
        r_end = _carry_filter(r_gain, r_decay, p_r, c_r)
        production = (
            cfg.output_species.beta
            * 0.5
            * (hill_repression(_starts(r_end, c_r), rep) + hill_repression(r_end, rep))
        )
        c_r = float(r_end[-1])
        part = run.release(production)
        released[lo : lo + part.size] = part
    return released


def _run_threshold(doses, cfg, ts):
    f_r = threshold_rate(cfg, cfg.c_th.values).tolist()
    state = BlockState()
    released = np.empty(doses.size)
    for m, dose in enumerate(doses.tolist()):
        released[m] = _advance_threshold(state, dose, f_r[m], cfg, ts)
    return released


def run_block(cfg: CellBlockConfig, doses: SignalTrace) -> SignalTrace:
    """
    Net released output of a block, per interval, for a whole input trace.

    The ID/NOT/thresholding operators; the block starts from zero state.
    """
    x = np.asarray(doses.values, dtype=float)
    if x.size and x.min() < 0:
        raise DomainError("input doses must be non-negative")
    if cfg.kind == BlockKind.THRESHOLD:
        cfg.c_th.check_grid(doses)
        values = _run_threshold(x, cfg, doses.ts)
    elif cfg.kind == BlockKind.NOT:
        values = _run_not(x, cfg, doses.ts)
    else:
        values = _run_id(x, cfg, doses.ts)
    return doses.with_values(clamp_nonnegative(values, what=f"in {cfg.label}"))


def stream_block(cfg: CellBlockConfig, doses: SignalTrace) -> SignalTrace:
    """Same as run_block but through the streaming step functions."""
    state = BlockState()
    ts = doses.ts
    values = [block_step(state, float(d), cfg, ts) for d in doses.values]
    return doses.with_values(values)


def constant_threshold(value: float, like: SignalTrace) -> SignalTrace:
    """A threshold-molecule trace held at `value` nM on the grid of `like`."""
    return like.with_values(np.full(len(like), float(value)))
