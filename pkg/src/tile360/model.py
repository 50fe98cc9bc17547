"""Tiling, FoV geometry, viewing probabilities, utility and rate quantization.

Tiles are addressed by 1-based ``(x, y)`` pairs, ``x`` the row and ``y`` the
column.  A viewpoint index ``i`` (also 1-based) maps to the tile
``((i - 1) // Y + 1, (i - 1) % Y + 1)`` and the FoV with index ``i`` is the
block of tiles centered on that viewpoint.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "TilingGrid",
    "EncodingLadder",
    "FovGeometry",
    "UserFovSet",
    "ProbabilityCase",
    "UtilityCurve",
    "GopSpec",
    "StreamingModel",
    "LADDERS_KBPS",
    "fov_tiles",
    "build_user_fov_set",
    "candidate_fovs",
    "estimate_probabilities",
    "utility_eval",
    "worst_case_distribution",
    "metric_eval",
    "quantize_plan",
    "smoothness_feasible",
]

Tile = tuple[int, int]

# Encoding ladders of the three-, five- and seven-level setups, in kbit/s.
LADDERS_KBPS = {
    3: (500, 3000, 8000),
    5: (500, 1000, 3000, 6000, 8000),
    7: (500, 1000, 2000, 3000, 4000, 6000, 8000),
}


@dataclass(frozen=True)
class TilingGrid:
    """Grid of ``rows`` x ``cols`` tiles covering the equirectangular frame."""

    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid dimensions must be positive")

    @property
    def num_viewpoints(self) -> int:
        return self.rows * self.cols

    def contains(self, tile: Tile) -> bool:
        x, y = tile
        return 1 <= x <= self.rows and 1 <= y <= self.cols

    def tile_of(self, index: int) -> Tile:
        """Tile of the 1-based viewpoint ``index``."""
        if not 1 <= index <= self.num_viewpoints:
            raise ValueError(f"viewpoint index {index} outside 1..{self.num_viewpoints}")
        return ((index - 1) // self.cols + 1, (index - 1) % self.cols + 1)

    def index_of(self, tile: Tile) -> int:
        if not self.contains(tile):
            raise ValueError(f"tile {tile} outside the {self.rows}x{self.cols} grid")
        return (tile[0] - 1) * self.cols + tile[1]


@dataclass(frozen=True)
class EncodingLadder:
    """Strictly increasing encoding rates ``D_1 < ... < D_L`` in bits/s."""

    rates: tuple[float, ...]

    def __post_init__(self):
        rates = tuple(float(d) for d in self.rates)
        if not rates or rates[0] <= 0 or any(b <= a for a, b in zip(rates, rates[1:])):
            raise ValueError("ladder rates must be positive and strictly increasing")
        object.__setattr__(self, "rates", rates)

    @classmethod
    def from_kbps(cls, rates_kbps: Sequence[float]) -> "EncodingLadder":
        return cls(tuple(1e3 * float(d) for d in rates_kbps))

    @classmethod
    def preset(cls, levels: int) -> "EncodingLadder":
        return cls.from_kbps(LADDERS_KBPS[levels])

    @property
    def top(self) -> float:
        return self.rates[-1]

    @property
    def levels(self) -> np.ndarray:
        """Quantization domain ``{0, D_1, ..., D_L}``."""
        return np.concatenate(([0.0], self.rates))

    @property
    def max_gap(self) -> float:
        return float(np.max(np.diff(self.levels)))

    def floor(self, values) -> np.ndarray:
        """Round each value down to the nearest ladder point (0 included)."""
        levels = self.levels
        v = np.asarray(values, dtype=float)
        # small relative slack so that a rate sitting on a rung up to
        # solver round-off is not pushed to the rung below
        idx = np.searchsorted(levels, v * (1 + 1e-9) + 1e-9, side="right") - 1
        return levels[np.clip(idx, 0, len(levels) - 1)]


@dataclass(frozen=True)
class FovGeometry:
    fov_rows: int = 3
    fov_cols: int = 3
    wrap_horizontal: bool = True

    def __post_init__(self):
        if self.fov_rows < 1 or self.fov_cols < 1:
            raise ValueError("FoV dimensions must be positive")


def fov_tiles(viewpoint, grid: TilingGrid, geom: FovGeometry) -> frozenset:
    """Tiles of the FoV centered on ``viewpoint``.

    Parameters
    ----------
    viewpoint : int or tuple of int
        1-based viewpoint index or the ``(x, y)`` tile itself.
    grid, geom
        Tiling and FoV block size.

    Returns
    -------
    frozenset of (x, y)
        Columns wrap modulo ``grid.cols`` when ``geom.wrap_horizontal``;
        rows are clamped to ``1..grid.rows`` so FoVs at the poles may hold
        fewer distinct tiles.
    """
    if geom.fov_rows > grid.rows or geom.fov_cols > grid.cols:
        raise ValueError("FoV larger than the grid")
    if isinstance(viewpoint, (int, np.integer)):
        cx, cy = grid.tile_of(int(viewpoint))
    else:
        cx, cy = (int(v) for v in viewpoint)
        if not grid.contains((cx, cy)):
            raise ValueError(f"viewpoint {viewpoint} outside the grid")
    # block offsets; even sizes lean towards the top-left
    row_off = range(-((geom.fov_rows - 1) // 2), geom.fov_rows // 2 + 1)
    col_off = range(-((geom.fov_cols - 1) // 2), geom.fov_cols // 2 + 1)
    tiles = set()
    for dx in row_off:
        x = min(max(cx + dx, 1), grid.rows)
        for dy in col_off:
            y = cy + dy
            if geom.wrap_horizontal:
                y = (y - 1) % grid.cols + 1
            else:
                y = min(max(y, 1), grid.cols)
            tiles.add((x, y))
    return frozenset(tiles)


@dataclass(frozen=True)
class UserFovSet:
    """Candidate FoVs of one user with union and exclusive tile sets.

    ``tiles`` orders the union of all candidate FoVs; ``cover[i, t]`` is true
    when FoV ``candidates[i]`` contains ``tiles[t]``.
    """

    user: int
    candidates: tuple[int, ...]
    fovs: tuple[frozenset, ...]
    tiles: tuple[Tile, ...]
    cover: np.ndarray = field(repr=False)
    exclusive: tuple[frozenset, ...]

    @property
    def size(self) -> int:
        return len(self.candidates)

    @property
    def union(self) -> frozenset:
        return frozenset(self.tiles)

    @property
    def cover_count(self) -> np.ndarray:
        return self.cover.sum(axis=0)

    def tile_position(self, tile: Tile) -> int:
        return self.tiles.index(tile)


def build_user_fov_set(candidates: Sequence[int], grid: TilingGrid, geom: FovGeometry,
                       user: int = 0) -> UserFovSet:
    """Collect tile sets of the candidate FoVs.

    The exclusive set of FoV ``i`` holds the tiles of ``i`` that no other
    candidate covers.
    """
    cands = tuple(int(c) for c in candidates)
    if not cands:
        raise ValueError("candidate FoV set is empty")
    fovs = tuple(fov_tiles(c, grid, geom) for c in cands)
    tiles = tuple(sorted(set().union(*fovs)))
    pos = {t: j for j, t in enumerate(tiles)}
    cover = np.zeros((len(cands), len(tiles)), dtype=bool)
    for i, f in enumerate(fovs):
        cover[i, [pos[t] for t in f]] = True
    exclusive = []
    for i, f in enumerate(fovs):
        others = set().union(*(g for j, g in enumerate(fovs) if j != i))
        exclusive.append(frozenset(f - others))
    cover.setflags(write=False)
    return UserFovSet(user, cands, fovs, tiles, cover, tuple(exclusive))


def candidate_fovs(index: int, grid: TilingGrid, wrap_horizontal: bool = True) -> tuple[int, ...]:
    """Current FoV plus its up, left, right and down neighbours.

    On the 8x8 grid and interior viewpoints this is ``{i-8, i-1, i, i+1, i+8}``.
    Left/right neighbours wrap horizontally; missing rows at the poles are
    dropped, so border viewpoints get fewer candidates.
    """
    x, y = grid.tile_of(index)
    out = [index]
    for dx, dy in ((-1, 0), (0, -1), (0, 1), (1, 0)):
        nx, ny = x + dx, y + dy
        if not 1 <= nx <= grid.rows:
            continue
        if wrap_horizontal:
            ny = (ny - 1) % grid.cols + 1
        elif not 1 <= ny <= grid.cols:
            continue
        out.append(grid.index_of((nx, ny)))
    return tuple(sorted(set(out)))


@dataclass(frozen=True)
class ProbabilityCase:
    """Viewing-probability information of one user.

    Use the constructors :meth:`pp`, :meth:`ip` and :meth:`up`.
    """

    tag: str
    size: int
    p: np.ndarray | None = None
    p_hat: np.ndarray | None = None
    eps: np.ndarray | None = None

    @classmethod
    def pp(cls, p) -> "ProbabilityCase":
        p = np.asarray(p, dtype=float)
        if np.any(p < 0) or abs(p.sum() - 1) > 1e-9:
            raise ValueError("pp case needs a probability vector")
        return cls("pp", p.size, p=p)

    @classmethod
    def ip(cls, p_hat, eps) -> "ProbabilityCase":
        p_hat = np.asarray(p_hat, dtype=float)
        eps = np.broadcast_to(np.asarray(eps, dtype=float), p_hat.shape).copy()
        if np.any(p_hat < 0) or abs(p_hat.sum() - 1) > 1e-9:
            raise ValueError("ip case needs a probability estimate")
        if np.any(eps < 0) or np.any(eps > 1):
            raise ValueError("error bounds must lie in [0, 1]")
        return cls("ip", p_hat.size, p_hat=p_hat, eps=eps)

    @classmethod
    def up(cls, size: int) -> "ProbabilityCase":
        return cls("up", int(size))

    @property
    def lower(self) -> np.ndarray:
        if self.tag == "pp":
            return self.p
        if self.tag == "ip":
            return np.maximum(self.p_hat - self.eps, 0.0)
        return np.zeros(self.size)

    @property
    def upper(self) -> np.ndarray:
        if self.tag == "pp":
            return self.p
        if self.tag == "ip":
            return np.minimum(self.p_hat + self.eps, 1.0)
        return np.ones(self.size)

    def to_dict(self) -> dict:
        out = {"tag": self.tag, "size": self.size}
        for name in ("p", "p_hat", "eps"):
            val = getattr(self, name)
            if val is not None:
                out[name] = val.tolist()
        return out


@dataclass(frozen=True)
class UtilityCurve:
    """``U(r) = scale * ln(gain * r / top_rate)`` with ``U(0) = 0``."""

    top_rate: float
    scale: float = 0.6
    gain: float = 1000.0

    def __call__(self, r):
        return utility_eval(r, self)

    def of_normalized(self, r_hat):
        """Utility of rates expressed as fractions of ``top_rate`` (no zero rule)."""
        return self.scale * np.log(self.gain * np.asarray(r_hat, dtype=float))


def utility_eval(r, curve: UtilityCurve):
    """Evaluate the utility elementwise; zero rate maps to zero utility."""
    r_arr = np.asarray(r, dtype=float)
    tol = 1e-9 * curve.top_rate
    if np.any(r_arr < -tol) or np.any(r_arr > curve.top_rate + tol):
        raise ValueError("rate outside [0, D_L]")
    out = np.zeros_like(r_arr)
    pos = r_arr > 0
    out[pos] = curve.scale * np.log(curve.gain * r_arr[pos] / curve.top_rate)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class GopSpec:
    gop_duration: float = 1.0
    slots: int = 200
    delta: float = 2.5e6

    def __post_init__(self):
        if self.slots < 1 or self.gop_duration <= 0 or self.delta <= 0:
            raise ValueError("invalid GOP timing or smoothness tolerance")

    @property
    def slot_duration(self) -> float:
        return self.gop_duration / self.slots


@dataclass(frozen=True)
class StreamingModel:
    """Everything the planners need to know about the video side."""

    grid: TilingGrid = TilingGrid(8, 8)
    ladder: EncodingLadder = EncodingLadder.preset(3)
    geometry: FovGeometry = FovGeometry()
    gop: GopSpec = GopSpec()
    utility_scale: float = 0.6
    utility_gain: float = 1000.0
    rate_floor: float = 1e-6

    @property
    def utility(self) -> UtilityCurve:
        return UtilityCurve(self.ladder.top, self.utility_scale, self.utility_gain)

    @property
    def top_rate(self) -> float:
        return self.ladder.top

    @property
    def delta(self) -> float:
        return self.gop.delta

    def fov_set(self, candidates, user: int = 0) -> UserFovSet:
        return build_user_fov_set(candidates, self.grid, self.geometry, user)


def estimate_probabilities(counts) -> np.ndarray:
    """Normalize nonnegative transition counts into a probability vector."""
    c = np.asarray(counts, dtype=float)
    if np.any(c < 0):
        raise ValueError("counts must be nonnegative")
    total = c.sum()
    if total <= 0:
        raise ValueError("no transitions observed")
    p = c / total
    # push the rounding residue onto the largest entry
    p[np.argmax(p)] += 1.0 - p.sum()
    return p


def worst_case_distribution(u, lower, upper):
    """Minimize ``sum(p * u)`` over ``lower <= p <= upper``, ``sum(p) = 1``.

    Starting from the lower bounds, the remaining mass is poured onto the
    smallest utilities first, each up to its upper bound.

    Returns
    -------
    p : ndarray
        A minimizing distribution.
    value : float
        ``p @ u``.
    """
    u = np.asarray(u, dtype=float)
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    if u.shape != lo.shape or u.shape != hi.shape:
        raise ValueError("dimension mismatch")
    if np.any(lo > hi + 1e-12) or lo.sum() > 1 + 1e-12 or hi.sum() < 1 - 1e-12:
        raise ValueError("probability box does not meet the simplex")
    p = lo.copy()
    remaining = 1.0 - lo.sum()
    for i in np.argsort(u, kind="stable"):
        if remaining <= 0:
            break
        add = min(hi[i] - lo[i], remaining)
        p[i] += add
        remaining -= add
    return p, float(p @ u)


def metric_eval(rates, cases, curve: UtilityCurve) -> float:
    """Total utility over users for their probability cases.

    Parameters
    ----------
    rates : sequence of array_like
        FoV rates (bits/s) per user, aligned with each case.
    cases : sequence of ProbabilityCase
    curve : UtilityCurve
    """
    if isinstance(cases, ProbabilityCase):
        cases, rates = [cases], [rates]
    total = 0.0
    for r, case in zip(rates, cases, strict=True):
        u = np.atleast_1d(utility_eval(r, curve))
        if u.size != case.size:
            raise ValueError("rate vector does not match the probability case")
        if case.tag == "pp":
            total += float(case.p @ u)
        elif case.tag == "ip":
            total += worst_case_distribution(u, case.lower, case.upper)[1]
        else:
            total += float(u.min())
    return total


def quantize_plan(R, r, ladder: EncodingLadder):
    """Round tile and FoV rates down onto ``{0, D_1, ..., D_L}``."""
    return ladder.floor(R), ladder.floor(r)


def smoothness_feasible(R, r, delta: float, fov_set: UserFovSet, tol: float = 1e-9):
    """Check ``r_i <= R_t <= r_i + delta`` on every tile of every FoV.

    ``R`` is aligned with ``fov_set.tiles`` and ``r`` with the candidates.
    ``tol`` is relative to the largest rate involved.

    Returns
    -------
    ok : bool
    violations : list of (fov_index, tile, kind, amount)
    """
    R = np.asarray(R, dtype=float)
    r = np.asarray(r, dtype=float)
    scale = tol * max(1.0, float(np.max(np.abs(R), initial=0)), float(np.max(np.abs(r), initial=0)))
    violations = []
    for i, cand in enumerate(fov_set.candidates):
        for t in np.flatnonzero(fov_set.cover[i]):
            low = r[i] - R[t]
            high = R[t] - r[i] - delta
            if low > scale:
                violations.append((cand, fov_set.tiles[t], "below_fov_rate", float(low)))
            if high > scale:
                violations.append((cand, fov_set.tiles[t], "spread_exceeds_delta", float(high)))
    return not violations, violations
