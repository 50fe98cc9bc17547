"""Single-user GOP planning: MRT + water-filling transmission, then
globally optimal encoding rates for the pp, ip and up cases.

Inside the rate programs every rate is expressed as a fraction of the top
ladder rate ``D_L``, so the variables live in ``[rate_floor, 1]``.  Tiles
covered by a single candidate FoV carry that FoV's rate (the optimal tile
rate is the largest covering FoV rate), which removes them from the
program; tiles shared by several FoVs keep an epigraph variable bounded by
the covering FoV rates from below and by those rates plus ``delta`` from
above.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelBlock
from .convex_kernel import (ConvexProgram, ProgramBuilder, SolverOptions, SolverReport,
                            solve_convex, waterfill)
from .model import ProbabilityCase, StreamingModel, UserFovSet, metric_eval

__all__ = [
    "RateBlock",
    "RatePlan",
    "SuGopPlan",
    "add_rate_block",
    "assemble_su_pp",
    "assemble_su_ip",
    "assemble_su_up",
    "assemble_su",
    "solve_rate_program",
    "tile_rates_from_fov_rates",
    "mrt_beamformers",
    "slot_rate_su",
    "plan_gop_su",
]

log = logging.getLogger(__name__)

# barrier centering then primal-dual polish; pure primal-dual steps can stall on ip programs
RATE_OPTIONS = SolverOptions(tolerance=1e-9, gap_tolerance=1e-11)


@dataclass
class RateBlock:
    """Where one user's encoding variables sit inside an assembled program."""

    fov_set: UserFovSet
    case: ProbabilityCase
    r: np.ndarray
    R: np.ndarray
    var_tiles: np.ndarray
    load_idx: np.ndarray
    load_coef: np.ndarray
    extras: dict = field(default_factory=dict)
    utility_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def load(self, x) -> float:
        """Sum of tile rates implied by ``x`` (normalized)."""
        return float(self.load_coef @ x[self.load_idx])


def _dual_bound(model: StreamingModel) -> float:
    # utilities of feasible rates span a * ln(1 / floor); optimal dual
    # variables of the worst-case LP never exceed that range
    return model.utility_scale * np.log(1.0 / model.rate_floor) + 1.0


def add_rate_block(b: ProgramBuilder, fov_set: UserFovSet, case: ProbabilityCase,
                   model: StreamingModel, reduced: bool = True, prefix: str = "") -> RateBlock:
    """Add FoV/tile rate variables, smoothness rows and the case objective.

    Parameters
    ----------
    b : ProgramBuilder
    fov_set : UserFovSet
    case : ProbabilityCase
        Must match ``fov_set.size``.
    model : StreamingModel
    reduced : bool
        Drop tiles covered by a single FoV (their rate equals that FoV's).
        With ``False`` every tile of the union keeps its own variable.
    prefix : str
        Prefix for the variable block names.
    """
    if case.size != fov_set.size:
        raise ValueError("probability case does not match the candidate set")
    I = fov_set.size
    counts = fov_set.cover_count
    delta = model.delta / model.top_rate
    var_tiles = np.flatnonzero(counts >= 2) if reduced else np.arange(len(fov_set.tiles))
    r = b.add_variables(prefix + "r", I, lower=model.rate_floor, upper=1.0)
    R = b.add_variables(prefix + "R", var_tiles.size, upper=1.0)
    for j, t in enumerate(var_tiles):
        for i in np.flatnonzero(fov_set.cover[:, t]):
            b.add_row([r[i], R[j]], [1.0, -1.0], 0.0, tag="smooth")
            b.add_row([R[j], r[i]], [1.0, -1.0], -delta, tag="smooth")
    if reduced:
        own = fov_set.cover[:, counts == 1].sum(axis=1).astype(float)
        load_idx = np.concatenate((r, R))
        load_coef = np.concatenate((own, np.ones(R.size)))
    else:
        load_idx, load_coef = R, np.ones(R.size)
    keep = load_coef != 0
    block = RateBlock(fov_set, case, r, R, var_tiles, load_idx[keep], load_coef[keep])

    a = model.utility_scale
    u0 = a * np.log(model.utility_gain)
    if case.tag == "pp":
        b.add_objective(log_vars=r, log_coefs=a * case.p, const=u0 * case.p.sum())
    elif case.tag == "ip":
        bound = _dual_bound(model)
        lam = b.add_variables(prefix + "lam", I, lower=0.0, upper=bound)
        tau = b.add_variables(prefix + "tau", I, lower=0.0, upper=bound)
        gam = b.add_variables(prefix + "gamma", 1)
        b.add_objective(np.concatenate((tau, lam, gam)),
                        np.concatenate((case.lower, -case.upper, [-1.0])))
        rows = [b.add_row([lam[i], tau[i], gam[0]], [-1.0, 1.0, -1.0], -u0,
                          log_var=r[i], log_coef=a, tag="utility") for i in range(I)]
        block.extras = {"lam": lam, "tau": tau, "gamma": gam}
        block.utility_rows = np.array(rows)
    elif case.tag == "up":
        y = b.add_variables(prefix + "y", 1)
        b.add_objective(y, 1.0)
        rows = [b.add_row([y[0]], [1.0], -u0, log_var=r[i], log_coef=a, tag="utility")
                for i in range(I)]
        block.extras = {"y": y}
        block.utility_rows = np.array(rows)
    else:
        raise ValueError(f"unknown case {case.tag!r}")
    return block


def rate_block_start(block: RateBlock, x: np.ndarray, capacity: float, model: StreamingModel) -> bool:
    """Write a strictly feasible start for ``block`` into ``x``.

    All FoVs get the same rate, using at most about 91% of the normalized
    ``capacity``.  Returns ``False`` when the capacity cannot even carry the
    rate floor.
    """
    n_tiles = len(block.fov_set.tiles)
    r0 = min(0.5, 0.9 * capacity / n_tiles)
    if r0 <= 1.05 * model.rate_floor:
        return False
    delta = model.delta / model.top_rate
    off = 0.01 * min(delta, r0, 1.0 - r0)
    x[block.r] = r0
    x[block.R] = r0 + off
    u = model.utility_scale * np.log(model.utility_gain * r0)
    if "lam" in block.extras:
        half = 0.5 * _dual_bound(model)
        x[block.extras["lam"]] = half
        x[block.extras["tau"]] = half
        x[block.extras["gamma"]] = 1.0 - u
    if "y" in block.extras:
        x[block.extras["y"]] = u - 1.0
    return True


def tile_rates_from_fov_rates(fov_set: UserFovSet, r) -> np.ndarray:
    """Tile rate = largest rate among the FoVs covering the tile."""
    r = np.asarray(r, dtype=float)
    return np.max(np.where(fov_set.cover, r[:, None], -np.inf), axis=0)


def assemble_su(case: ProbabilityCase, model: StreamingModel, fov_set: UserFovSet,
                capacity: float, reduced: bool = True) -> ConvexProgram:
    """Rate program of one user under a transmission budget ``capacity`` (bits/s).

    The returned program carries ``meta['block']`` (a :class:`RateBlock`)
    and, when one exists, a strictly feasible ``meta['start']``.
    """
    b = ProgramBuilder()
    block = add_rate_block(b, fov_set, case, model, reduced=reduced)
    c_hat = capacity / model.top_rate
    b.add_row(block.load_idx, block.load_coef, -c_hat, tag="capacity")
    prog = b.build()
    x0 = np.zeros(prog.n)
    prog.meta["block"] = block
    prog.meta["start"] = x0 if rate_block_start(block, x0, c_hat, model) else None
    return prog


def assemble_su_pp(p, model: StreamingModel, fov_set: UserFovSet, capacity: float,
                   reduced: bool = True) -> ConvexProgram:
    """Maximize ``sum_i p_i U(r_i)`` under smoothness and the budget."""
    return assemble_su(ProbabilityCase.pp(p), model, fov_set, capacity, reduced)


def assemble_su_ip(p_hat, eps, model: StreamingModel, fov_set: UserFovSet, capacity: float,
                   reduced: bool = True) -> ConvexProgram:
    """Worst case over the probability box, written through its LP dual.

    Variables ``(r, lam >= 0, tau >= 0, gamma)``; objective
    ``sum_i (tau_i p_lo_i - lam_i p_hi_i) - gamma`` with
    ``U(r_i) + lam_i - tau_i + gamma >= 0``.
    """
    return assemble_su(ProbabilityCase.ip(p_hat, eps), model, fov_set, capacity, reduced)


def assemble_su_up(model: StreamingModel, fov_set: UserFovSet, capacity: float,
                   reduced: bool = True) -> ConvexProgram:
    """Hypograph form: maximize ``y`` with ``y <= U(r_i)`` for every FoV."""
    return assemble_su(ProbabilityCase.up(fov_set.size), model, fov_set, capacity, reduced)


@dataclass
class RatePlan:
    """Encoding rates of one user (bits/s) with solver diagnostics."""

    case: ProbabilityCase
    fov_set: UserFovSet
    fov_rates: np.ndarray
    tile_rates: np.ndarray
    objective: float
    report: SolverReport | None
    status: str
    x: np.ndarray | None = field(default=None, repr=False)


def _zero_plan(case, fov_set, status="degenerate") -> RatePlan:
    r = np.zeros(fov_set.size)
    return RatePlan(case, fov_set, r, np.zeros(len(fov_set.tiles)), 0.0, None, status)


def solve_rate_program(case: ProbabilityCase, model: StreamingModel, fov_set: UserFovSet,
                       capacity: float, options: SolverOptions | None = None,
                       reduced: bool = True) -> RatePlan:
    """Solve the case-specific rate program to global optimality.

    When the budget cannot carry the rate floor on every tile, all rates
    are zero (status ``degenerate``).  When it carries ``D_L`` on every tile,
    every FoV streams at ``D_L`` (status ``saturated``): that plan attains the
    utility ceiling in every case, and it also settles FoVs of zero weight,
    which the program leaves undetermined.
    """
    if capacity >= len(fov_set.tiles) * model.top_rate:
        r = np.full(fov_set.size, model.top_rate)
        R = np.full(len(fov_set.tiles), model.top_rate)
        return RatePlan(case, fov_set, r, R, metric_eval(r, case, model.utility), None, "saturated")
    prog = assemble_su(case, model, fov_set, capacity, reduced=reduced)
    if prog.meta["start"] is None:
        return _zero_plan(case, fov_set)
    x, report = solve_convex(prog, prog.meta["start"], options or RATE_OPTIONS)
    block = prog.meta["block"]
    r = np.clip(x[block.r], model.rate_floor, 1.0) * model.top_rate
    if reduced:
        R = tile_rates_from_fov_rates(fov_set, r)
    else:
        R = np.zeros(len(fov_set.tiles))
        R[block.var_tiles] = np.clip(x[block.R], 0.0, 1.0) * model.top_rate
    objective = metric_eval(r, case, model.utility)
    return RatePlan(case, fov_set, r, R, objective, report, report.status, x)


def mrt_beamformers(h, v) -> np.ndarray:
    """Maximum-ratio beamformers ``w_n = h_n / ||h_n|| * sqrt(v_n)``.

    Parameters
    ----------
    h : ndarray, shape (N, M)
    v : ndarray, shape (N,)
        Power per subcarrier.
    """
    h = np.atleast_2d(np.asarray(h, dtype=complex))
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise ValueError("powers must be nonnegative")
    norms = np.linalg.norm(h, axis=1)
    if np.any((norms == 0) & (v > 0)):
        raise ValueError("positive power on a zero channel")
    w = np.zeros_like(h)
    on = v > 0
    w[on] = h[on] / norms[on, None] * np.sqrt(v[on])[:, None]
    return w


def slot_rate_su(block: ChannelBlock, power: float, user: int = 0):
    """Maximum transmission rate of one slot.

    Returns
    -------
    capacity : float
        bits/s
    w : ndarray, shape (N, M)
        MRT beamformers.
    v : ndarray, shape (N,)
        Water-filling power split.
    """
    h = block.h[user]
    gains = np.sum(np.abs(h) ** 2, axis=1)
    v, capacity, _ = waterfill(gains, power, block.params.noise, block.params.bandwidth)
    return capacity, mrt_beamformers(h, v), v


@dataclass
class SuGopPlan:
    """Slot-1 plan of one user: encoding rates plus beamformers."""

    case: ProbabilityCase
    fov_set: UserFovSet
    tile_rates: np.ndarray
    fov_rates: np.ndarray
    beamformers: np.ndarray
    power_split: np.ndarray
    capacity: float
    objective: float
    report: SolverReport | None
    status: str

    @property
    def total_rate(self) -> float:
        return float(np.sum(self.tile_rates))

    def to_dict(self) -> dict:
        return {
            "case": self.case.to_dict(),
            "candidates": list(self.fov_set.candidates),
            "tiles": [list(t) for t in self.fov_set.tiles],
            "tile_rates": self.tile_rates.tolist(),
            "fov_rates": self.fov_rates.tolist(),
            "power_split": self.power_split.tolist(),
            "capacity": self.capacity,
            "objective": self.objective,
            "status": self.status,
            "report": None if self.report is None else self.report.to_dict(),
        }


def plan_gop_su(case: ProbabilityCase, model: StreamingModel, fov_set: UserFovSet,
                block: ChannelBlock, power: float, user: int = 0,
                options: SolverOptions | None = None) -> SuGopPlan:
    """Water-fill the slot-1 channel, steer with MRT, then plan encoding rates."""
    capacity, w, v = slot_rate_su(block, power, user)
    plan = solve_rate_program(case, model, fov_set, capacity, options)
    return SuGopPlan(case, fov_set, plan.tile_rates, plan.fov_rates, w, v, capacity,
                     plan.objective, plan.report, plan.status)
