"""
Continuous-time reference for the cell blocks.

Integrates the exchange, production, reaction and release ODEs with an
adaptive solver, the input dose of each interval entering as a constant influx
over that interval. Used to check the discrete block operators.
"""

import numpy as np
from scipy.integrate import solve_ivp

from blocks.kinetics import BlockKind, CellBlockConfig, hill_activation, hill_repression, threshold_rate
from model.errors import CskError
from model.trace import SignalTrace


def _rhs(cfg: CellBlockConfig):
    out, inp, rep = cfg.output_species, cfg.input_species, cfg.repressor
    a_out = out.k_d + cfg.xi

    if cfg.kind == BlockKind.ID:

        def fun(t, y, influx, f_r):
            c_i, c_oin, _ = y
            return [
                cfg.eta * influx - inp.k_d * c_i,
                float(hill_activation(c_i, out)) - a_out * c_oin,
                cfg.xi * c_oin,
            ]

        return fun, 3

    if cfg.kind == BlockKind.NOT:

        def fun(t, y, influx, f_r):
            c_i, c_r, c_oin, _ = y
            return [
                cfg.eta * influx - inp.k_d * c_i,
                float(hill_activation(c_i, rep)) - rep.k_d * c_r,
                out.beta * float(hill_repression(c_r, rep)) - a_out * c_oin,
                cfg.xi * c_oin,
            ]

        return fun, 4

    def fun(t, y, influx, f_r):
        c_i, c_r, c_oin, _ = y
        reaction = cfg.k_f * c_i * c_r
        return [
            cfg.eta * influx - reaction - inp.k_d * c_i,
            f_r - reaction - rep.k_d * c_r,
            out.beta * float(hill_repression(c_r, rep)) - a_out * c_oin,
            cfg.xi * c_oin,
        ]

    return fun, 4


def _segments(doses, c_th):
    """Runs of intervals sharing the same dose and threshold level."""
    n = doses.size
    if n == 0:
        return []
    change = np.nonzero((np.diff(doses) != 0) | (np.diff(c_th) != 0))[0] + 1
    bounds = np.concatenate(([0], change, [n]))
    return list(zip(bounds[:-1], bounds[1:]))


def reference_block(
    cfg: CellBlockConfig, doses: SignalTrace, rtol: float = 1e-10, atol: float = 1e-14
) -> SignalTrace:
    """
    Net released output per interval from the continuous ODEs.

    Returns:
        SignalTrace: On the grid of `doses`, comparable with run_block.
    """
    fun, size = _rhs(cfg)
    ts = doses.ts
    x = np.asarray(doses.values, dtype=float)
    if cfg.kind == BlockKind.THRESHOLD:
        c_th = np.asarray(cfg.c_th.values, dtype=float)
        f_r = threshold_rate(cfg, c_th)
    else:
        c_th = np.zeros_like(x)
        f_r = np.zeros_like(x)
    y = np.zeros(size)
    released = np.empty(x.size)
    for lo, hi in _segments(x, c_th):
        edges = ts * np.arange(lo, hi + 1)
        sol = solve_ivp(
            fun,
            (edges[0], edges[-1]),
            y,
            method="LSODA",
            t_eval=edges,
            args=(x[lo] / ts, float(f_r[lo])),
            rtol=rtol,
            atol=atol,
            max_step=ts,
        )
        if not sol.success:
            raise CskError(f"reference integration failed: {sol.message}")
        released[lo:hi] = np.diff(sol.y[-1]) * cfg.weight
        y = sol.y[:, -1]
    return doses.with_values(released)
