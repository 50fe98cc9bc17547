"""GOP/slot simulation over viewing traces and channel realizations.

Each GOP is planned on its first slot's channel, quantized onto the encoding
ladder, and then delivered over the GOP's ``T`` slots.  Metrics are the
realized utility of the FoV the trace actually visits next, its GOP-to-GOP
variation, and rebuffering time.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import ChannelBlock, sample_block
from .config import RunConfig
from .model import (ProbabilityCase, StreamingModel, TilingGrid, UserFovSet, candidate_fovs,
                    estimate_probabilities, fov_tiles, metric_eval, quantize_plan)
from .solver_mu import cccp_plan_gop, slot_adapt
from .solver_su import slot_rate_su, solve_rate_program, tile_rates_from_fov_rates

log = logging.getLogger(__name__)

__all__ = [
    "ViewTrace",
    "GopResult",
    "RunReport",
    "run_single_user",
    "run_multi_user",
    "baseline_equal_power",
    "baseline_bier",
    "baseline_sdma",
    "bier_rates",
    "equal_power_capacity",
    "rebuffering_time",
    "cdf",
    "run_scheme",
    "gop_users",
    "trace_for",
]

# errors that mark a GOP as failed instead of aborting the run
GOP_ERRORS = (ValueError, ArithmeticError, np.linalg.LinAlgError, RuntimeError)


# ---------------------------------------------------------------------------
# traces


@dataclass(frozen=True)
class ViewTrace:
    """Viewpoint sequences of a viewer population, one viewpoint per GOP.

    Attributes
    ----------
    grid : TilingGrid
    ids : tuple of int
        Viewer ids, aligned with the rows of ``paths``.
    paths : ndarray, shape (viewers, gops)
        1-based viewpoint indices.
    """

    grid: TilingGrid
    ids: tuple[int, ...]
    paths: np.ndarray = field(repr=False)
    wrap_horizontal: bool = True

    def __post_init__(self):
        paths = np.asarray(self.paths, dtype=np.int64)
        if paths.ndim != 2 or paths.shape[0] != len(self.ids) or paths.shape[0] == 0:
            raise ValueError("paths must have one row per viewer id")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("duplicate viewer id")
        if paths.size and (paths.min() < 1 or paths.max() > self.grid.num_viewpoints):
            raise ValueError("viewpoint index outside the grid")
        paths.setflags(write=False)
        object.__setattr__(self, "paths", paths)

    @property
    def gops(self) -> int:
        return self.paths.shape[1]

    def row(self, viewer: int) -> int:
        try:
            return self.ids.index(viewer)
        except ValueError:
            raise ValueError(f"viewer {viewer} not in trace") from None

    def viewpoint(self, viewer: int, gop: int) -> int:
        return int(self.paths[self.row(viewer), gop])

    def candidates(self, viewer: int, gop: int) -> tuple[int, ...]:
        return candidate_fovs(self.viewpoint(viewer, gop), self.grid, self.wrap_horizontal)

    def transition_counts(self, current: int, gop: int | None, candidates) -> np.ndarray:
        """Population viewers moving from ``current`` to each candidate.

        ``gop=None`` pools the transitions of every GOP.
        """
        src = self.paths[:, :-1] if gop is None else self.paths[:, gop:gop + 1]
        dst = self.paths[:, 1:] if gop is None else self.paths[:, gop + 1:gop + 2]
        moved = dst[src == current]
        return np.array([np.count_nonzero(moved == c) for c in candidates], dtype=float)

    def probabilities(self, viewer: int, gop: int):
        """Candidates of ``viewer`` at ``gop`` and their estimated probabilities.

        Counts come from the population's transitions out of the viewer's
        current viewpoint at this GOP; with none observed they are pooled
        over all GOPs, and failing that the estimate is uniform.

        Returns
        -------
        candidates : tuple of int
        p : ndarray
        source : str
            ``"gop"``, ``"pooled"`` or ``"uniform"``.
        """
        if not 0 <= gop < self.gops - 1:
            raise ValueError("probabilities need a following GOP")
        cands = self.candidates(viewer, gop)
        current = self.viewpoint(viewer, gop)
        for source, g in (("gop", gop), ("pooled", None)):
            counts = self.transition_counts(current, g, cands)
            if counts.sum() > 0:
                return cands, estimate_probabilities(counts), source
        return cands, np.full(len(cands), 1.0 / len(cands)), "uniform"

    # io
    @classmethod
    def from_csv(cls, path, grid: TilingGrid, wrap_horizontal: bool = True) -> "ViewTrace":
        """Read ``user_id, gop_index, viewpoint_tile_x, viewpoint_tile_y`` rows.

        Every viewer must cover the same GOPs ``0..G-1``.
        """
        rows: dict[int, dict[int, int]] = {}
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            need = {"user_id", "gop_index", "viewpoint_tile_x", "viewpoint_tile_y"}
            if reader.fieldnames is None or not need <= set(reader.fieldnames):
                raise ValueError(f"trace CSV needs columns {sorted(need)}")
            for rec in reader:
                u, g = int(rec["user_id"]), int(rec["gop_index"])
                tile = (int(rec["viewpoint_tile_x"]), int(rec["viewpoint_tile_y"]))
                if g in rows.setdefault(u, {}):
                    raise ValueError(f"duplicate row for viewer {u}, GOP {g}")
                rows[u][g] = grid.index_of(tile)
        if not rows:
            raise ValueError("empty trace")
        ids = tuple(sorted(rows))
        gops = len(rows[ids[0]])
        paths = np.empty((len(ids), gops), dtype=np.int64)
        for j, u in enumerate(ids):
            if sorted(rows[u]) != list(range(gops)):
                raise ValueError(f"viewer {u} does not cover GOPs 0..{gops - 1}")
            paths[j] = [rows[u][g] for g in range(gops)]
        return cls(grid, ids, paths, wrap_horizontal)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["user_id", "gop_index", "viewpoint_tile_x", "viewpoint_tile_y"])
            for u, row in zip(self.ids, self.paths):
                for g, idx in enumerate(row):
                    out.writerow([u, g, *self.grid.tile_of(int(idx))])

    @classmethod
    def synthetic(cls, grid: TilingGrid, viewers: int, gops: int, seed: int,
                  stay_probability: float = 0.5, wrap_horizontal: bool = True) -> "ViewTrace":
        """Seeded random walk: stay put or step to a uniformly chosen neighbour."""
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7ACE]))
        paths = np.empty((viewers, gops), dtype=np.int64)
        paths[:, 0] = rng.integers(1, grid.num_viewpoints + 1, size=viewers)
        for g in range(1, gops):
            for j in range(viewers):
                cur = int(paths[j, g - 1])
                moves = [c for c in candidate_fovs(cur, grid, wrap_horizontal) if c != cur]
                if not moves or rng.random() < stay_probability:
                    paths[j, g] = cur
                else:
                    paths[j, g] = moves[rng.integers(len(moves))]
        return cls(grid, tuple(range(viewers)), paths, wrap_horizontal)


def trace_for(cfg: RunConfig, seed: int) -> ViewTrace:
    """Trace named by the config, or a synthetic one long enough for the run."""
    grid = TilingGrid(*cfg.model.grid)
    if cfg.trace.path is not None:
        return ViewTrace.from_csv(cfg.trace.path, grid, cfg.model.wrap_horizontal)
    viewers = max(cfg.trace.viewers, cfg.users)
    return ViewTrace.synthetic(grid, viewers, cfg.gops + 1, seed, cfg.trace.stay_probability,
                               cfg.model.wrap_horizontal)


# ---------------------------------------------------------------------------
# metrics


def rebuffering_time(required_bits, delivered_bits, gop_duration: float):
    """Stall time to fetch the missing fraction at playback pacing.

    ``gop_duration * max(0, required - delivered) / required``, and 0 when
    nothing is required.  Broadcasts over arrays.
    """
    req = np.asarray(required_bits, dtype=float)
    dlv = np.asarray(delivered_bits, dtype=float)
    if np.any(req < 0) or np.any(dlv < 0) or gop_duration < 0:
        raise ValueError("bits and duration must be nonnegative")
    safe = np.where(req > 0, req, 1.0)
    out = np.where(req > 0, gop_duration * np.maximum(req - dlv, 0.0) / safe, 0.0)
    return float(out) if out.ndim == 0 else out


def cdf(series) -> list[tuple[float, float]]:
    """Empirical CDF as sorted ``(value, P[X <= value])`` steps of ``1/n``.

    Tied values collapse onto one step carrying their combined mass.
    """
    x = np.sort(np.asarray(series, dtype=float).ravel())
    n = x.size
    if n == 0:
        return []
    last = np.append(np.flatnonzero(np.diff(x) != 0), n - 1)
    return [(float(x[i]), (i + 1) / n) for i in last]


def realized_utility(model: StreamingModel, fov_set: UserFovSet, tile_q, fov_q, viewed: int) -> float:
    """Utility of the FoV actually viewed at the quantized rates.

    A viewed FoV outside the candidates plays at the lowest quantized rate
    among its tiles, with unplanned tiles at 0.
    """
    if viewed in fov_set.candidates:
        return float(model.utility(fov_q[fov_set.candidates.index(viewed)]))
    pos = {t: i for i, t in enumerate(fov_set.tiles)}
    tiles = fov_tiles(viewed, model.grid, model.geometry)
    rate = min(float(tile_q[pos[t]]) if t in pos else 0.0 for t in tiles)
    return float(model.utility(rate))


def equal_power_capacity(block: ChannelBlock, power: float, user: int = 0) -> float:
    """Slot rate with ``v_n = P/N`` and MRT on every subcarrier (bits/s)."""
    prm = block.params
    gains = np.sum(np.abs(block.h[user]) ** 2, axis=1)
    v = power / gains.size
    return float(prm.bandwidth * np.sum(np.log2(1.0 + v * gains / prm.noise)))


def bier_rates(model: StreamingModel, fov_set: UserFovSet, current: int, capacity: float):
    """Pin non-current FoVs at ``D_1`` and give the current FoV the most rate.

    Tile rates are the largest covering FoV rate, so the load is piecewise
    linear in the current rate ``x``: tiles of other FoVs cost ``D_1`` and
    the current FoV's tiles cost ``max(x, D_1)`` if shared, ``x`` if not.
    ``x`` is the largest value within capacity, capped by ``D_L`` and, when
    another FoV overlaps the current one, by ``D_1 + delta``.

    Returns
    -------
    fov_rates, tile_rates : ndarray
    pin_feasible : bool
        False when the pinned rates alone exceed the capacity; ``x`` is then
        the rate floor.
    """
    d1 = model.ladder.rates[0]
    floor = model.rate_floor * model.top_rate
    cur = fov_set.candidates.index(current)
    others = np.delete(fov_set.cover, cur, axis=0)
    in_cur = fov_set.cover[cur]
    shared = others.any(axis=0) if len(others) else np.zeros_like(in_cur)
    pinned = float(np.count_nonzero(shared)) * d1
    exclusive = np.count_nonzero(in_cur & ~shared)
    cap = model.top_rate
    if len(others) and np.any(shared & in_cur):
        cap = min(cap, d1 + model.delta)
    pin_feasible = capacity >= pinned * (1 - 1e-12)
    if not pin_feasible:
        x = floor
    else:
        outside = float(np.count_nonzero(shared & ~in_cur)) * d1
        x = (capacity - outside) / np.count_nonzero(in_cur)
        if x < d1:
            # current rate below D_1: only exclusive tiles follow it
            x = (capacity - pinned) / exclusive if exclusive else d1
        x = float(np.clip(x, floor, cap))
    r = np.full(fov_set.size, d1)
    r[cur] = x
    return r, tile_rates_from_fov_rates(fov_set, r), bool(pin_feasible)


# ---------------------------------------------------------------------------
# results


@dataclass
class GopResult:
    """Outcome of one GOP; per-user fields are lists aligned with users."""

    gop: int
    case: str
    status: str
    objective: float
    quantized_objective: float
    realized_utility: list
    delivered_bits: list
    required_bits: list
    channel_bits: list
    rebuffering: list
    viewpoints: list
    viewed: list
    candidates: list
    fov_rates: list
    tile_rates: list
    slot_rates: list
    notes: dict = field(default_factory=dict)

    @property
    def total_utility(self) -> float:
        return float(np.sum(self.realized_utility))

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class RunReport:
    scheme: str
    scenario: str
    case: str
    seed: int
    config: dict
    gops: list

    @property
    def total_utility(self) -> np.ndarray:
        return np.array([g.total_utility for g in self.gops])

    @property
    def utility_variation(self) -> np.ndarray:
        """``|U_g - U_{g-1}|`` of the total utility for GOPs after the first."""
        return np.abs(np.diff(self.total_utility))

    @property
    def rebuffering(self) -> np.ndarray:
        """Total rebuffering time of each GOP (summed over users)."""
        return np.array([float(np.sum(g.rebuffering)) for g in self.gops])

    def summary(self) -> dict:
        util, reb = self.total_utility, self.rebuffering
        return {
            "gops": len(self.gops),
            "failed_gops": sum(g.status == "failed" for g in self.gops),
            "utility_mean": float(util.mean()) if util.size else 0.0,
            "utility_var": float(util.var()) if util.size else 0.0,
            "variation_mean": float(self.utility_variation.mean()) if util.size > 1 else 0.0,
            "rebuffering_mean": float(reb.mean()) if reb.size else 0.0,
            "rebuffering_var": float(reb.var()) if reb.size else 0.0,
            "objective_mean": float(np.mean([g.objective for g in self.gops])) if self.gops else 0.0,
        }

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme, "scenario": self.scenario, "case": self.case,
            "seed": self.seed, "config": self.config, "summary": self.summary(),
            "cdf_utility": cdf(self.total_utility), "cdf_variation": cdf(self.utility_variation),
            "gops": [g.to_dict() for g in self.gops],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def metric_rows(self):
        """One row per (GOP, user); variation is blank on the first GOP."""
        prev = None
        for g in self.gops:
            for k, u in enumerate(g.realized_utility):
                var = "" if prev is None else abs(u - prev.realized_utility[k])
                yield [g.gop, k, g.case, g.status, g.objective, u, var, g.rebuffering[k]]
            prev = g

    def write(self, out_dir) -> dict:
        """Write report.json, metrics.csv, cdf_utility.csv and cdf_variation.csv."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {name: out / name for name in
                 ("report.json", "metrics.csv", "cdf_utility.csv", "cdf_variation.csv")}
        paths["report.json"].write_text(self.to_json() + "\n")
        with open(paths["metrics.csv"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["gop_index", "user", "case", "status", "objective", "realized_utility",
                        "utility_variation", "rebuffering_s"])
            w.writerows(self.metric_rows())
        for name, series in (("cdf_utility.csv", self.total_utility),
                             ("cdf_variation.csv", self.utility_variation)):
            with open(paths[name], "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["value", "cumulative_probability"])
                w.writerows(cdf(series))
        return paths


# ---------------------------------------------------------------------------
# simulation loop


@dataclass
class _Users:
    viewers: list
    viewpoints: list
    viewed: list
    fov_sets: list
    cases: list
    sources: list


def _probability_case(kind: str, p, eps: float) -> ProbabilityCase:
    if kind == "pp":
        return ProbabilityCase.pp(p)
    if kind == "ip":
        return ProbabilityCase.ip(p, eps)
    return ProbabilityCase.up(len(p))


def gop_users(cfg: RunConfig, model: StreamingModel, trace: ViewTrace, gop: int) -> _Users:
    viewers = list(cfg.trace.stream_users or trace.ids[:cfg.users])
    if len(viewers) < cfg.users:
        raise ValueError("trace has fewer viewers than streaming users")
    out = _Users(viewers, [], [], [], [], [])
    for k, v in enumerate(viewers):
        cands, p, source = trace.probabilities(v, gop)
        out.viewpoints.append(trace.viewpoint(v, gop))
        out.viewed.append(trace.viewpoint(v, gop + 1))
        out.fov_sets.append(model.fov_set(cands, k))
        out.cases.append(_probability_case(cfg.case, p, cfg.epsilon))
        out.sources.append(source)
    return out


def required_rate(model: StreamingModel, fov_set: UserFovSet, tile_q) -> float:
    """Playback rate owed for a quantized plan (bits/s).

    A plan with nothing playable still owes the lowest rung on every tile.
    """
    need = float(np.sum(tile_q))
    return need if need > 0 else model.ladder.rates[0] * len(fov_set.tiles)


def _finish(cfg, model, g, users: _Users, objective, fov_rates, tile_rates, slot_rates,
            status, notes) -> GopResult:
    gop_s = model.gop.gop_duration
    dt = model.gop.slot_duration
    fov_q, tile_q, required, util = [], [], [], []
    for k, fs in enumerate(users.fov_sets):
        Rq, rq = quantize_plan(tile_rates[k], fov_rates[k], model.ladder)
        fov_q.append(rq)
        tile_q.append(Rq)
        required.append(required_rate(model, fs, Rq) * gop_s)
        util.append(realized_utility(model, fs, Rq, rq, users.viewed[k]))
    slot_rates = np.asarray(slot_rates, dtype=float).reshape(model.gop.slots, len(users.viewers))
    channel = slot_rates.sum(axis=0) * dt
    delivered = np.minimum(np.asarray(required), channel)
    reb = rebuffering_time(required, delivered, gop_s)
    qobj = metric_eval(fov_q, users.cases, model.utility)
    return GopResult(
        gop=g, case=cfg.case, status=status, objective=float(objective),
        quantized_objective=float(qobj), realized_utility=util,
        delivered_bits=delivered.tolist(), required_bits=required, channel_bits=channel.tolist(),
        rebuffering=np.atleast_1d(reb).tolist(), viewpoints=list(users.viewpoints),
        viewed=list(users.viewed), candidates=[list(f.candidates) for f in users.fov_sets],
        fov_rates=[q.tolist() for q in fov_q], tile_rates=[q.tolist() for q in tile_q],
        slot_rates=slot_rates.tolist(), notes={**notes, "probability_source": users.sources},
    )


def _failed(cfg, model, g, users: _Users, err: Exception) -> GopResult:
    K = len(users.viewers)
    d1 = model.ladder.rates[0]
    gop_s = model.gop.gop_duration
    required = [d1 * len(fs.tiles) * gop_s for fs in users.fov_sets]
    zeros = [0.0] * K
    return GopResult(
        gop=g, case=cfg.case, status="failed", objective=0.0, quantized_objective=0.0,
        realized_utility=zeros, delivered_bits=zeros, required_bits=required, channel_bits=zeros,
        rebuffering=[gop_s] * K, viewpoints=list(users.viewpoints), viewed=list(users.viewed),
        candidates=[list(f.candidates) for f in users.fov_sets],
        fov_rates=[[0.0] * f.size for f in users.fov_sets],
        tile_rates=[[0.0] * len(f.tiles) for f in users.fov_sets],
        slot_rates=[zeros] * model.gop.slots, notes={"error": f"{type(err).__name__}: {err}"},
    )


def _su_gop(capacity_fn, encoder):
    """Single-user GOP: plan on slot 1, then deliver at each slot's capacity."""

    def gop(cfg, model, params, seed, g, users):
        T, P = model.gop.slots, cfg.channel.power
        caps = [capacity_fn(sample_block(seed, g * T + t, params), P) for t in range(T)]
        fs, case = users.fov_sets[0], users.cases[0]
        r, R, objective, status, notes = encoder(model, fs, case, caps[0], users.viewpoints[0])
        return objective, [r], [R], np.array(caps)[:, None], status, notes

    return gop


def _waterfill_capacity(block, power):
    return slot_rate_su(block, power, 0)[0]


def _optimal_encoding(model, fs, case, capacity, current):
    plan = solve_rate_program(case, model, fs, capacity)
    return plan.fov_rates, plan.tile_rates, plan.objective, plan.status, {"capacity": capacity}


def _bier_encoding(model, fs, case, capacity, current):
    r, R, ok = bier_rates(model, fs, current, capacity)
    notes = {"capacity": capacity, "pin_feasible": ok}
    return r, R, metric_eval(r, case, model.utility), "pinned" if ok else "infeasible_pin", notes


def _mu_gop(rate_splitting: bool):
    def gop(cfg, model, params, seed, g, users):
        T, P = model.gop.slots, cfg.channel.power
        opts = cfg.cccp_options(rate_splitting)
        slot_opts = cfg.slot_options(rate_splitting)
        block = sample_block(seed, g * T, params)
        plan, _ = cccp_plan_gop(users.cases, model, users.fov_sets, block, P, opts)
        if plan.status == "subproblem_failed":
            raise RuntimeError("GOP plan subproblem failed")
        K = len(users.viewers)
        rates = np.zeros((T, K))
        req = np.array([required_rate(model, fs, quantize_plan(R, r, model.ladder)[0])
                        for fs, R, r in zip(users.fov_sets, plan.tile_rates, plan.fov_rates)])
        warm = plan.transmission
        residual = []
        # slot 1 replays the plan unless the owed rung exceeds what it carries
        first = 0 if np.any(warm.delivered < req * (1 - 1e-9)) else 1
        rates[0] = warm.delivered
        for t in range(first, T):
            blk = block if t == 0 else sample_block(seed, g * T + t, params)
            ad = slot_adapt(req, blk, P, model, slot_opts, warm)
            rates[t] = ad.delivered
            residual.append(ad.residual)
            if ad.transmission.power > 0:
                warm = ad.transmission
        notes = {"cccp_iterations": 0 if plan.state is None else plan.state.total_iterations,
                 "slot_shortfall": residual}
        return plan.objective, plan.fov_rates, plan.tile_rates, rates, plan.status, notes

    return gop


SCHEMES = {
    "proposed_su": ("single", _su_gop(_waterfill_capacity, _optimal_encoding)),
    "equal_power": ("single", _su_gop(equal_power_capacity, _optimal_encoding)),
    "bier": ("single", _su_gop(equal_power_capacity, _bier_encoding)),
    "proposed_mu": ("multi", _mu_gop(True)),
    "sdma": ("multi", _mu_gop(False)),
}


def run_scheme(scheme: str, config: RunConfig, trace: ViewTrace | None = None,
               seed: int | None = None) -> RunReport:
    """Simulate ``config.gops`` GOPs (bounded by the trace length) under ``scheme``."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    scenario, gop_fn = SCHEMES[scheme]
    if scenario == "single" and config.users != 1:
        raise ValueError("single-user schemes need users = 1")
    seed = config.seed if seed is None else int(seed)
    model = config.streaming_model()
    params = config.channel_params()
    trace = trace if trace is not None else trace_for(config, seed)
    if trace.grid != model.grid:
        raise ValueError("trace grid does not match the model grid")
    n = min(config.gops, trace.gops - 1)
    if n < 1:
        raise ValueError("trace needs at least two GOPs")
    results = []
    for g in range(n):
        users = gop_users(config, model, trace, g)
        try:
            out = gop_fn(config, model, params, seed, g, users)
        except GOP_ERRORS as err:
            log.warning("GOP %d failed: %s", g, err)
            results.append(_failed(config, model, g, users, err))
            continue
        results.append(_finish(config, model, g, users, *out))
        log.info("%s GOP %d: objective %.6g", scheme, g, results[-1].objective)
    return RunReport(scheme, scenario, config.case, seed, config.model_dump(mode="json"), results)


def run_single_user(config: RunConfig, trace: ViewTrace | None = None, seed: int | None = None) -> RunReport:
    """Water-filling + MRT planner with the case-specific encoding program."""
    return run_scheme("proposed_su", config, trace, seed)


def run_multi_user(config: RunConfig, trace: ViewTrace | None = None, seed: int | None = None) -> RunReport:
    """Rate-splitting CCCP planner with per-slot shortfall minimization."""
    return run_scheme("proposed_mu", config, trace, seed)


def baseline_equal_power(config: RunConfig, trace: ViewTrace | None = None,
                         seed: int | None = None) -> RunReport:
    """Single-user pipeline with ``v_n = P/N`` in every slot."""
    return run_scheme("equal_power", config, trace, seed)


def baseline_bier(config: RunConfig, trace: ViewTrace | None = None, seed: int | None = None) -> RunReport:
    """Equal power; non-current FoVs pinned at ``D_1``, current FoV maximized."""
    return run_scheme("bier", config, trace, seed)


def baseline_sdma(config: RunConfig, trace: ViewTrace | None = None, seed: int | None = None) -> RunReport:
    """Multi-user pipeline without the common stream."""
    return run_scheme("sdma", config, trace, seed)
