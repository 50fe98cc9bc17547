"""Multi-user rate-splitting planner.

Each user's message is split into a common part, carried by one jointly
decoded stream per subcarrier, and a private part on its own beamformer.
GOP planning and per-slot adaptation are nonconvex; both are written as
difference-of-convex programs and solved by the concave-convex procedure
(CCCP): each iteration linearizes the concave part of the SINR constraints
at the current point and solves the resulting convex program.

Internally the channel is scaled by ``sqrt(P) / sigma`` so that noise power
and the power budget are both 1, and all rates are fractions of the top
ladder rate ``D_L``.  Stream index ``j`` runs over the ``K`` private streams
followed, under rate splitting, by the common stream.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .channel import ChannelBlock
from .convex_kernel import (ConvexProgram, ProgramBuilder, SolverOptions, SolverReport,
                            kkt_residual, solve_convex)
from .model import ProbabilityCase, StreamingModel, UserFovSet, metric_eval
from .solver_su import add_rate_block, rate_block_start, tile_rates_from_fov_rates

__all__ = [
    "RsTransmission",
    "CccpOptions",
    "CccpState",
    "MuGopPlan",
    "SlotAdaptation",
    "common_sinr",
    "private_sinr",
    "sinr_tables",
    "achievable_rates",
    "rs_rate_feasible",
    "dc_common",
    "dc_private",
    "linearize_L",
    "linearize_G",
    "feasible_init",
    "cccp_plan_gop",
    "slot_adapt",
    "max_sum_rate",
]

log = logging.getLogger(__name__)

INIT_SLACK = 1e-3
# slot programs stop once the total shortfall is this fraction of the requirement
SLOT_MET = 1e-6
# relative slack left on the rows of a lifted SDMA point
LIFT_MARGIN = 1e-9
# weight of the term that spreads an unavoidable slot shortfall in
# proportion to the requirements; it makes the split unique
SHORTFALL_SPREAD = 1e-3


# ---------------------------------------------------------------------------
# rate model


@dataclass
class RsTransmission:
    """Beamformers (W^(1/2) units) and message rates (bits/s) of one slot."""

    w_common: np.ndarray
    w_private: np.ndarray
    d_common: np.ndarray
    d_private: np.ndarray

    @property
    def users(self) -> int:
        return self.w_private.shape[0]

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.w_common) ** 2) + np.sum(np.abs(self.w_private) ** 2))

    @property
    def delivered(self) -> np.ndarray:
        return self.d_common + self.d_private

    @classmethod
    def zeros(cls, K: int, N: int, M: int) -> "RsTransmission":
        return cls(np.zeros((N, M), complex), np.zeros((K, N, M), complex), np.zeros(K), np.zeros(K))

    def to_dict(self) -> dict:
        def cplx(a):
            return {"real": a.real.tolist(), "imag": a.imag.tolist()}
        return {"w_common": cplx(self.w_common), "w_private": cplx(self.w_private),
                "d_common": self.d_common.tolist(), "d_private": self.d_private.tolist(),
                "power": self.power}


def _projections(h, w_private, w_common):
    """``z[k, n, j] = h_{k,n}^H w_{j,n}`` with the common stream last."""
    w = np.concatenate((w_private, w_common[None]), axis=0)
    return np.einsum("knm,jnm->knj", np.conj(h), w)


def sinr_tables(w_private, w_common, h, noise: float):
    """Common and private SINR of every user and subcarrier, shape ``(K, N)``."""
    K = w_private.shape[0]
    p = np.abs(_projections(h, w_private, w_common)) ** 2
    private_total = p[:, :, :K].sum(axis=2)
    common = p[:, :, K] / (private_total + noise)
    own = p[:, :, :K][np.arange(K), :, np.arange(K)]
    private = own / (private_total - own + noise)
    return common, private


def common_sinr(k: int, n: int, w_private, w_common, h, noise: float) -> float:
    """Common-stream SINR at user ``k``, all private streams acting as noise."""
    z_c = np.vdot(h[k, n], w_common[n])
    interf = sum(abs(np.vdot(h[k, n], w_private[j, n])) ** 2 for j in range(w_private.shape[0]))
    return float(abs(z_c) ** 2 / (interf + noise))


def private_sinr(k: int, n: int, w_private, h, noise: float) -> float:
    """Private-stream SINR of user ``k`` after removing the common stream."""
    own = abs(np.vdot(h[k, n], w_private[k, n])) ** 2
    interf = sum(abs(np.vdot(h[k, n], w_private[j, n])) ** 2
                 for j in range(w_private.shape[0]) if j != k)
    return float(own / (interf + noise))


def achievable_rates(w_private, w_common, h, noise: float, bandwidth: float):
    """Common rate every user can decode and per-user private rates (bits/s)."""
    common, private = sinr_tables(w_private, w_common, h, noise)
    c_rate = bandwidth * np.log2(1.0 + common).sum(axis=1)
    p_rate = bandwidth * np.log2(1.0 + private).sum(axis=1)
    return float(c_rate.min()), p_rate


def rs_rate_feasible(d_common, d_private, w_private, w_common, h, noise: float, bandwidth: float,
                     rtol: float = 1e-9):
    """Check message rates against the achievable common and private rates.

    Returns
    -------
    ok : bool
    margins : dict
        ``common``: achievable common rate minus ``sum(d_common)``;
        ``private``: per-user achievable private rate minus ``d_private``.
    """
    c_rate, p_rate = achievable_rates(w_private, w_common, h, noise, bandwidth)
    margins = {"common": c_rate - float(np.sum(d_common)),
               "private": p_rate - np.asarray(d_private, dtype=float)}
    scale = rtol * max(1.0, c_rate, float(np.max(p_rate, initial=0.0)))
    ok = margins["common"] >= -scale and bool(np.all(margins["private"] >= -scale))
    return ok, margins


# ---------------------------------------------------------------------------
# DC constraints and their convex majorants (one user, one subcarrier)
#
# ``w`` stacks the K private beamformers followed by the common one.


def dc_common(h, w, u, noise: float = 1.0) -> float:
    """Private interference plus noise minus (all streams plus noise) / u.

    Nonpositive iff ``u <= 1 + common SINR``.
    """
    p = np.abs(np.conj(h) @ w.T) ** 2
    return float(p[:-1].sum() + noise - (p.sum() + noise) / u)


def dc_private(k: int, h, w, u, noise: float = 1.0) -> float:
    """Interference from other private streams plus noise minus
    (all private streams plus noise) / u.  Nonpositive iff
    ``u <= 1 + private SINR`` of user ``k``."""
    p = np.abs(np.conj(h) @ w[:-1].T) ** 2
    return float(p.sum() - p[k] + noise - (p.sum() + noise) / u)


def _majorant(quad_part, h, w_anchor, u_anchor, streams, noise):
    if u_anchor <= 1.0:
        raise ValueError("anchor needs u > 1")
    z_anchor = np.conj(h) @ w_anchor[streams].T
    level = float(np.sum(np.abs(z_anchor) ** 2)) + noise

    def oracle(w, u):
        z = np.conj(h) @ w[streams].T
        cross = float(np.real(np.sum(np.conj(z_anchor) * z)))
        return (quad_part(w) + noise - (2.0 * cross + 2.0 * noise) / u_anchor
                + level * u / u_anchor ** 2)

    return oracle


def linearize_L(h, w_anchor, u_anchor, noise: float = 1.0):
    """Convex majorant of :func:`dc_common` tangent at ``(w_anchor, u_anchor)``.

    The concave term ``-(sum_j |h^H w_j|^2 + noise) / u`` is replaced by its
    first-order expansion, giving::

        sum_{j private} |h^H w_j|^2 + noise
            - (2 Re sum_j conj(h^H w~_j) h^H w_j + 2 noise) / u~
            + (sum_j |h^H w~_j|^2 + noise) u / u~^2

    Returns a callable ``(w, u) -> value``.
    """
    J = w_anchor.shape[0]

    def quad(w):
        return float(np.sum(np.abs(np.conj(h) @ w[:-1].T) ** 2))

    return _majorant(quad, h, w_anchor, u_anchor, np.arange(J), noise)


def linearize_G(k: int, h, w_anchor, u_anchor, noise: float = 1.0):
    """Convex majorant of :func:`dc_private` for user ``k``, tangent at the anchor."""
    K = w_anchor.shape[0] - 1

    def quad(w):
        p = np.abs(np.conj(h) @ w[:K].T) ** 2
        return float(p.sum() - p[k])

    return _majorant(quad, h, w_anchor, u_anchor, np.arange(K), noise)


# ---------------------------------------------------------------------------
# program assembly


@dataclass
class CccpOptions:
    """Outer-loop settings.

    ``tolerance`` bounds the normalized iterate distance
    ``||x_i - x_{i-1}|| / max(1, ||x_{i-1}||)``; the loop also keeps going
    while the KKT residual of the original program exceeds ``kkt_target``.
    With ``rate_splitting`` and ``sdma_first`` the multi-start runs solve
    the SDMA program and the best SDMA point starts two rate-splitting
    runs, lifted onto a common stream carrying ``lift_share`` and
    ``common_share`` of its power.  ``common_share`` is also the
    common-stream power share of the plain rate-splitting starts.  Subproblems are solved to a duality gap of
    ``solver.gap_tolerance``; an ascent failure triggers one retry with
    ``exact_solver``.
    """

    tolerance: float = 1e-4
    max_iter: int = 100
    multi_start: int = 3
    seed: int = 0
    kkt_target: float = 1e-4
    common_share: float = 0.2
    rate_splitting: bool = True
    sdma_first: bool = True
    lift_share: float = 1e-9
    solver: SolverOptions = field(default_factory=lambda: SolverOptions(
        tolerance=1e-8, gap_tolerance=1e-7, polish=False, max_iter=600))
    exact_solver: SolverOptions = field(default_factory=lambda: SolverOptions(
        tolerance=1e-8, gap_tolerance=1e-11, max_iter=600))

    def __post_init__(self):
        if self.tolerance <= 0 or self.max_iter < 1 or self.multi_start < 1:
            raise ValueError("need a positive tolerance, max_iter >= 1 and multi_start >= 1")
        if not 0 < self.common_share < 1 or not 0 < self.lift_share < 1:
            raise ValueError("power shares must lie in (0, 1)")


class _Assembly:
    """Static description of one multi-user program (everything but the anchor).

    ``mode`` is ``plan`` (encoding rates with case objectives), ``slot``
    (sum of infeasibilities for fixed required rates) or ``sumrate``.
    """

    def __init__(self, block: ChannelBlock, power: float, rs: bool, mode: str,
                 model: StreamingModel, fov_sets=None, cases=None, required=None):
        self.params = block.params
        self.power = power
        self.h_raw = block.h
        self.h = block.h * np.sqrt(power / block.params.noise)
        self.K, self.N, self.M = block.h.shape
        self.rs = rs
        self.J = self.K + 1 if rs else self.K
        self.mode = mode
        self.model = model
        self.fov_sets = fov_sets
        self.cases = cases
        self.required = None if required is None else np.asarray(required, float) / model.top_rate
        self.kappa = model.top_rate * np.log(2.0) / block.params.bandwidth
        self._static()

    # variable layout and anchor-independent rows
    def _static(self):
        K, N, M, J = self.K, self.N, self.M, self.J
        b = ProgramBuilder()
        self.w = b.add_variables("w", J * N * M * 2).reshape(J, N, M, 2)
        # v = ln(u) = ln(1 + SINR); spectral efficiency of stream j on n is v / ln 2
        self.v = b.add_variables("log_sinr", J * N, lower=0.0).reshape(J, N)
        self.dp = b.add_variables("d_private", K, lower=0.0)
        self.dc = b.add_variables("d_common", K, lower=0.0) if self.rs else None
        self.blocks = []
        self.s = self.y = None
        if self.mode == "plan":
            for k in range(K):
                self.blocks.append(add_rate_block(b, self.fov_sets[k], self.cases[k], self.model,
                                                  prefix=f"user{k}_"))
        elif self.mode == "slot":
            self.s = b.add_variables("s", K, lower=0.0)
            b.add_objective(self.s, -1.0)
            # headroom y_k <= 2 R_k - s_k under a log bonus: among splits with the
            # same total shortfall the proportional one wins
            self.spread_users = np.flatnonzero(self.required > 0)
            self.y = b.add_variables("headroom", len(self.spread_users), lower=0.0)
            for y, k in zip(self.y, self.spread_users):
                b.add_row([y, self.s[k]], [1.0, 1.0], -2.0 * self.required[k], tag="headroom")
            b.add_objective(log_vars=self.y,
                            log_coefs=SHORTFALL_SPREAD * self.required[self.spread_users])
        elif self.mode == "sumrate":
            b.add_objective(self.dp, 1.0)
            if self.rs:
                b.add_objective(self.dc, 1.0)
        else:
            raise ValueError(f"unknown mode {self.mode!r}")
        per_stream = -np.ones(N) / self.kappa
        if self.rs:
            b.add_row(np.concatenate((self.dc, self.v[K])),
                      np.concatenate((np.ones(K), per_stream)), tag="common_sum")
        for k in range(K):
            b.add_row(np.concatenate(([self.dp[k]], self.v[k])),
                      np.concatenate(([1.0], per_stream)), tag="private_sum")
        flat = self.w.reshape(-1)
        b.add_row(const=-1.0, quad=[([i], [1.0]) for i in flat], tag="power")
        for k in range(K):
            own = [self.dp[k]] + ([self.dc[k]] if self.rs else [])
            if self.mode == "plan":
                blk = self.blocks[k]
                b.add_row(np.concatenate((blk.load_idx, own)),
                          np.concatenate((blk.load_coef, -np.ones(len(own)))), tag="rate_link")
            elif self.mode == "slot":
                b.add_row(own + [self.s[k]], -np.ones(len(own) + 1), self.required[k],
                          tag="requirement")
        self._builder_state = b
        # real linear forms of z[k, n, j] = h^H w_j: rows over (w_re, w_im)
        hr, hi = self.h.real, self.h.imag
        self.z_idx = np.concatenate((self.w[..., 0], self.w[..., 1]), axis=-1)  # (J, N, 2M)
        self.z_re = np.concatenate((hr, hi), axis=-1)  # (K, N, 2M)
        self.z_im = np.concatenate((-hi, hr), axis=-1)

    def beamformers(self, x) -> np.ndarray:
        """Normalized complex beamformers, shape ``(J, N, M)``."""
        return x[self.w[..., 0]] + 1j * x[self.w[..., 1]]

    def projections(self, x) -> np.ndarray:
        """``z[k, n, j]`` for all users, subcarriers and streams."""
        return np.einsum("knm,jnm->knj", np.conj(self.h), self.beamformers(x))

    def build(self, anchor) -> ConvexProgram:
        """Convex program with the DC rows majorized at ``anchor``."""
        import copy
        b = copy.deepcopy(self._builder_state)
        K, N = self.K, self.N
        z = self.projections(anchor)
        ua = np.exp(anchor[self.v])
        for k in range(K):
            for n in range(N):
                if self.rs:
                    self._add_majorant(b, k, n, z, ua[K, n], self.v[K, n],
                                       quad_streams=range(K), lin_streams=range(K + 1), tag="L")
                self._add_majorant(b, k, n, z, ua[k, n], self.v[k, n],
                                   quad_streams=[j for j in range(K) if j != k],
                                   lin_streams=range(K), tag="G")
        prog = b.build()
        prog.meta["row_tags"] = list(b.row_tags)
        return prog

    def _add_majorant(self, b, k, n, z, u_anchor, v_var, quad_streams, lin_streams, tag):
        # tangent of -(q + 1) / u at the anchor, with u = exp(v) kept exact
        lin_idx, lin_val, quad = [], [], []
        for j in quad_streams:
            quad.append((self.z_idx[j, n], self.z_re[k, n]))
            quad.append((self.z_idx[j, n], self.z_im[k, n]))
        level = 1.0
        for j in lin_streams:
            zj = z[k, n, j]
            level += abs(zj) ** 2
            lin_idx.append(self.z_idx[j, n])
            lin_val.append(-(2.0 / u_anchor) * (zj.real * self.z_re[k, n] + zj.imag * self.z_im[k, n]))
        b.add_row(np.concatenate(lin_idx), np.concatenate(lin_val), 1.0 - 2.0 / u_anchor,
                  quad=quad, tag=tag, exp_var=v_var, exp_coef=level / u_anchor ** 2)

    # the nonconvex program the CCCP iterates converge for
    def original(self, sub: ConvexProgram) -> ConvexProgram:
        tags = np.array(sub.meta["row_tags"])
        rows_L = np.flatnonzero(tags == "L")
        rows_G = np.flatnonzero(tags == "G")
        K, N, J = self.K, self.N, self.J

        def constraints(x):
            g, Jac = sub.constraints(x)
            Jac = np.array(Jac.toarray() if hasattr(Jac, "toarray") else Jac)
            z = self.projections(x)
            p = np.abs(z) ** 2
            u = np.exp(x[self.v])
            # d|z|^2 / d(w_re, w_im) = 2 (Re z, Im z) applied to the z forms
            for k in range(K):
                for n in range(N):
                    if self.rs:
                        row = rows_L[k * N + n]
                        total = p[k, n].sum() + 1.0
                        g[row] = p[k, n, :K].sum() + 1.0 - total / u[K, n]
                        self._dc_grad(Jac, row, k, n, z, range(K), range(J), u[K, n], total, self.v[K, n])
                    row = rows_G[k * N + n]
                    total = p[k, n, :K].sum() + 1.0
                    g[row] = total - p[k, n, k] - total / u[k, n]
                    self._dc_grad(Jac, row, k, n, z, [j for j in range(K) if j != k], range(K),
                                  u[k, n], total, self.v[k, n])
            return g, Jac

        return ConvexProgram(sub.n, sub.objective, constraints, lower=sub.lower, upper=sub.upper,
                             in_domain=sub.in_domain, names=sub.names, meta=dict(sub.meta))

    def _dc_grad(self, Jac, row, k, n, z, plus, minus, u, total, v_var):
        Jac[row, self.z_idx[:, n].ravel()] = 0.0
        for sign, streams in ((1.0, plus), (-1.0 / u, minus)):
            for j in streams:
                zj = z[k, n, j]
                Jac[row, self.z_idx[j, n]] += sign * 2.0 * (zj.real * self.z_re[k, n] + zj.imag * self.z_im[k, n])
        Jac[row, v_var] = total / u

    # starting points
    def start(self, w_hat) -> np.ndarray | None:
        """Strictly feasible point built around the beamformers ``w_hat`` (J, N, M).

        Returns ``None`` when the resulting rates cannot carry the rate floor.
        """
        K, N, J = self.K, self.N, self.J
        total = np.sum(np.abs(w_hat) ** 2)
        if total <= 0:
            return None
        w_hat = w_hat * np.sqrt((1.0 - INIT_SLACK) / total)
        x = np.zeros(self._builder_state.n)
        x[self.w[..., 0]] = w_hat.real
        x[self.w[..., 1]] = w_hat.imag
        z = self.projections(x)
        p = np.abs(z) ** 2
        private_total = p[:, :, :K].sum(axis=2)
        own = p[:, :, :K][np.arange(K), :, np.arange(K)]
        sinr = np.empty((J, N))
        sinr[:K] = own / (private_total - own + 1.0)
        if self.rs:
            sinr[K] = np.min(p[:, :, K] / (private_total + 1.0), axis=0)
        v = np.log1p(sinr * (1.0 - INIT_SLACK))
        if np.any(v <= 1e-12):
            return None
        x[self.v] = v
        e = v / self.kappa * (1.0 - INIT_SLACK)
        x[self.dp] = (1.0 - INIT_SLACK) * e[:K].sum(axis=1)
        delivered = x[self.dp].copy()
        if self.rs:
            x[self.dc] = (1.0 - INIT_SLACK) * e[K].sum() / K
            delivered += x[self.dc]
        if self.mode == "plan":
            for k, blk in enumerate(self.blocks):
                if not rate_block_start(blk, x, 0.99 * delivered[k], self.model):
                    return None
        elif self.mode == "slot":
            need = self.required
            x[self.s] = np.maximum(need - delivered, 0.0) + INIT_SLACK * need + 1e-9
            self._fill_headroom(x, INIT_SLACK)
        return x

    def _fill_headroom(self, x, margin):
        k = self.spread_users
        x[self.y] = (2.0 * self.required[k] - x[self.s[k]]) * (1.0 - margin)

    def initial_beamformers(self, start: int, seed: int, common_share: float) -> np.ndarray:
        """MRT privates (start 0) or randomized directions and power splits."""
        K, N, M, J = self.K, self.N, self.M, self.J
        h = self.h
        norms = np.linalg.norm(h, axis=2, keepdims=True)
        unit = np.divide(h, norms, out=np.zeros_like(h), where=norms > 0)
        if start == 0:
            priv = unit * np.sqrt((1.0 - common_share * self.rs) / (K * N))
            share_c = np.full(N, common_share / N)
        else:
            rng = np.random.default_rng([seed, start])
            noise = (rng.standard_normal((K, N, M)) + 1j * rng.standard_normal((K, N, M))) / np.sqrt(2)
            mix = unit + rng.uniform(0.2, 1.0) * noise / np.sqrt(M)
            mix /= np.linalg.norm(mix, axis=2, keepdims=True)
            split = rng.dirichlet(np.ones(K * N)).reshape(K, N)
            cs = rng.uniform(0.05, 0.5) if self.rs else 0.0
            priv = mix * np.sqrt((1.0 - cs) * split)[..., None]
            share_c = np.full(N, cs / N)
        w = np.zeros((J, N, M), complex)
        w[:K] = priv
        if self.rs:
            direction = unit.sum(axis=0)
            dn = np.linalg.norm(direction, axis=1, keepdims=True)
            direction = np.where(dn > 1e-12, direction / np.maximum(dn, 1e-300), unit[0])
            w[K] = direction * np.sqrt(share_c)[:, None]
        return w

    def warm_beamformers(self, tx: "RsTransmission", common_share: float) -> np.ndarray:
        """Normalized beamformers of a previous transmission, topping up the
        common stream when it carries no power."""
        scale = np.sqrt(self.power)
        w = np.zeros((self.J, self.N, self.M), complex)
        w[: self.K] = tx.w_private / scale
        if self.rs:
            wc = tx.w_common / scale
            if np.sum(np.abs(wc) ** 2) <= 1e-12 * max(np.sum(np.abs(w) ** 2), 1e-300):
                ref = self.initial_beamformers(0, 0, common_share)
                w[: self.K] *= np.sqrt(1.0 - common_share)
                wc = ref[self.K]
            w[self.K] = wc
        return w

    def lift(self, x_src: np.ndarray, src: "_Assembly", share: float) -> np.ndarray | None:
        """Rate-splitting point that nearly dominates the SDMA point ``x_src``.

        Private beamformers keep a fraction ``1 - share`` of their power and
        the common stream takes the rest along the sum of the channel
        directions, so total power is unchanged.  SINRs, message rates and
        FoV rates are then shrunk just enough to stay strictly feasible; the
        objective loses about ``utility_scale * share``.  Returns ``None``
        when the result is not strictly feasible.
        """
        if not self.rs or src.rs or src.mode != self.mode:
            raise ValueError("lift maps an SDMA point onto the rate-splitting program")
        K, N = self.K, self.N
        w_src = src.beamformers(x_src)
        p_src = float(np.sum(np.abs(w_src) ** 2))
        direction = self.initial_beamformers(0, 0, 0.5)[K]
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        w = np.zeros((self.J, N, self.M), complex)
        w[:K] = w_src * np.sqrt(1.0 - share)
        w[K] = direction * np.sqrt(share * p_src / N)
        x = np.zeros(self._builder_state.n)
        x[self.w[..., 0]] = w.real
        x[self.w[..., 1]] = w.imag
        p = np.abs(self.projections(x)) ** 2
        private_total = p[:, :, :K].sum(axis=2)
        own = p[:, :, :K][np.arange(K), :, np.arange(K)]
        v_priv = np.log1p(own / (private_total - own + 1.0))
        v_common = np.log1p(np.min(p[:, :, K] / (private_total + 1.0), axis=0))
        x[self.v[:K]] = np.minimum(x_src[src.v], v_priv) * (1.0 - LIFT_MARGIN)
        # the common SINR can be ~1e-10, below what a relative 1e-6 slack survives in rounding
        x[self.v[K]] = 0.5 * v_common
        x[self.dp] = np.minimum(x_src[src.dp], x[self.v[:K]].sum(axis=1) / self.kappa) * (1.0 - LIFT_MARGIN)
        x[self.dc] = x[self.v[K]].sum() / self.kappa * (1.0 - 1e-9) / K
        delivered = x[self.dp] + x[self.dc]
        if self.mode == "plan":
            a = self.model.utility_scale
            for k, (blk, blk_src) in enumerate(zip(self.blocks, src.blocks)):
                load = blk_src.load(x_src)
                theta = min(1.0, delivered[k] / load) * (1.0 - LIFT_MARGIN) if load > 0 else 1.0
                # FoV rates shrink a little more so that tight R >= r rows turn strict
                theta_r = theta * (1.0 - LIFT_MARGIN)
                x[blk.r] = np.maximum(x_src[blk_src.r] * theta_r, self.model.rate_floor * (1.0 + LIFT_MARGIN))
                x[blk.R] = x_src[blk_src.R] * theta
                shift = -a * np.log(theta_r)
                for name, idx in blk.extras.items():
                    x[idx] = x_src[blk_src.extras[name]]
                if "gamma" in blk.extras:
                    x[blk.extras["gamma"]] += shift
                if "y" in blk.extras:
                    x[blk.extras["y"]] -= shift
        elif self.mode == "slot":
            lost = np.maximum(x_src[src.dp] - delivered, 0.0)
            x[self.s] = x_src[src.s] + lost * (1.0 + 1e-9) + 1e-15
            self._fill_headroom(x, LIFT_MARGIN)
        # the subproblem at x must be strictly feasible, not just the original rows
        prog = self.build(x) if np.all(x[self.v] > 0) else None
        if prog is None or not prog.feasible(x):
            return None
        return x

    # results
    def transmission(self, x) -> RsTransmission:
        w = self.beamformers(x) * np.sqrt(self.power)
        top = self.model.top_rate
        dc = x[self.dc] * top if self.rs else np.zeros(self.K)
        wc = w[self.K] if self.rs else np.zeros((self.N, self.M), complex)
        return RsTransmission(wc, w[: self.K].copy(), dc, x[self.dp] * top)


# ---------------------------------------------------------------------------
# CCCP


@dataclass
class CccpState:
    """Iterate of one CCCP run (normalized coordinates) and its history."""

    x: np.ndarray = field(repr=False)
    iteration: int
    trace: list
    kkt_residual: float = np.nan
    status: str = "init"
    start: int = 0
    distances: list = field(default_factory=list)
    warmup: int = 0

    @property
    def total_iterations(self) -> int:
        """Outer iterations including the SDMA stage that produced the start."""
        return self.iteration + self.warmup

    def to_dict(self) -> dict:
        return {"iteration": self.iteration, "warmup": self.warmup, "trace": list(self.trace),
                "kkt_residual": self.kkt_residual, "status": self.status, "start": self.start,
                "distances": list(self.distances)}


def _run_cccp(asm: _Assembly, x0: np.ndarray, opts: CccpOptions, start: int = 0, stop=None):
    """One CCCP run from the strictly feasible point ``x0``.

    Every iteration solves the subproblem majorized at the current anchor
    and moves the anchor to its solution.  A solution worth less than the
    anchor (inexact inner solve) is retried with ``opts.exact_solver``; if
    the exact solve still cannot ascend, the run stops as ``stalled``.
    Once the step falls below the tolerance, the KKT residual of the
    original program (with the subproblem multipliers) decides
    convergence; if it misses the target, the subproblem is re-solved with
    ``exact_solver``, which is then kept for the remaining iterations.  ``stop(x)`` ends the run early with status ``satisfied``.
    """
    x = x0
    f = asm.build(x).value(x)
    state = CccpState(x, 0, [f], start=start)
    report = None
    prog = None
    inner = opts.solver
    for it in range(1, opts.max_iter + 1):
        prog = asm.build(x)
        anchor = x
        try:
            x_new, report = solve_convex(prog, x, inner)
            f_new = prog.value(x_new)
            if f_new < f:
                x_new, report = solve_convex(prog, x, opts.exact_solver)
                f_new = prog.value(x_new)
        except (ValueError, np.linalg.LinAlgError) as exc:
            log.warning("CCCP subproblem failed at iteration %d: %s", it, exc)
            state.status = "subproblem_failed"
            break
        if f_new < f:
            state.kkt_residual = kkt_residual(asm.original(prog), x, report.multipliers)
            state.status = "converged" if state.kkt_residual <= opts.kkt_target else "stalled"
            break
        dist = float(np.linalg.norm(x_new - x) / max(1.0, np.linalg.norm(x)))
        x, f = x_new, f_new
        state.x, state.iteration = x, it
        state.trace.append(f)
        state.distances.append(dist)
        log.debug("cccp %d: f=%.12g dist=%.3e inner=%d", it, f, dist, report.iterations)
        if stop is not None and stop(x):
            state.status = "satisfied"
            break
        if dist <= opts.tolerance:
            state.kkt_residual = kkt_residual(asm.original(prog), x, report.multipliers)
            if state.kkt_residual > opts.kkt_target and inner is opts.solver:
                # the loose inner gap can dominate the residual; certify with an exact solve
                inner = opts.exact_solver
                try:
                    x_ex, rep_ex = solve_convex(prog, anchor, inner)
                except (ValueError, np.linalg.LinAlgError):
                    x_ex = None
                if x_ex is not None and prog.value(x_ex) >= f:
                    x, f, report = x_ex, prog.value(x_ex), rep_ex
                    state.x, state.trace[-1] = x, f
                    state.kkt_residual = kkt_residual(asm.original(prog), x, report.multipliers)
            if state.kkt_residual <= opts.kkt_target:
                state.status = "converged"
                break
    else:
        state.status = "max_iter"
    if report is not None and np.isnan(state.kkt_residual):
        state.kkt_residual = kkt_residual(asm.original(prog), state.x, report.multipliers)
    return state


def _rank(state: CccpState):
    """Runs whose subproblems all solved win over failed ones, then by objective."""
    return state.status != "subproblem_failed", state.trace[-1]


def _optimize(make, opts: CccpOptions, warm: RsTransmission | None = None, stop=None):
    """Multi-start CCCP, optionally through the SDMA stage.

    ``make(rs)`` builds the assembly; ``stop(asm, x)`` ends runs early.
    Returns ``(assembly, best_state, runs)``; the state is ``None`` when no
    start is strictly feasible.
    """
    staged = opts.rate_splitting and opts.sdma_first
    first = make(opts.rate_splitting and not staged)
    bound_stop = None if stop is None else (lambda x, a=first: stop(a, x))
    starts = []
    for s in range(opts.multi_start):
        xs = first.start(first.initial_beamformers(s, opts.seed, opts.common_share))
        if xs is not None:
            starts.append(xs)
    if warm is not None:
        xw = first.start(first.warm_beamformers(warm, opts.common_share))
        if xw is not None:
            starts.append(xw)
    runs = [_run_cccp(first, x, opts, start=i, stop=bound_stop) for i, x in enumerate(starts)]
    if not runs:
        return first, None, runs
    best = max(runs, key=_rank)
    if not staged or (stop is not None and stop(first, best.x)):
        return first, best, runs
    asm = make(True)
    # a near-silent common stream is stationary for the rate-splitting program,
    # so a second lift hands the common stream a real power share
    lifts = [asm.lift(best.x, first, share) for share in (opts.lift_share, opts.common_share)]
    lifts = [x for x in lifts if x is not None]
    if not lifts:
        log.warning("lifting the SDMA point failed; starting rate splitting from scratch")
        x_lift = asm.start(asm.initial_beamformers(0, opts.seed, opts.common_share))
        if x_lift is None:
            return first, best, runs
        lifts = [x_lift]
    rs_runs = []
    for x_lift in lifts:
        rs_state = _run_cccp(asm, x_lift, opts, start=len(runs),
                             stop=None if stop is None else (lambda x: stop(asm, x)))
        rs_state.warmup = best.iteration
        runs.append(rs_state)
        rs_runs.append(rs_state)
        if rs_state.status == "satisfied":
            break
    return asm, max(rs_runs, key=_rank), runs


@dataclass
class MuGopPlan:
    """Slot-1 plan of all users."""

    cases: list
    fov_sets: list
    fov_rates: list
    tile_rates: list
    transmission: RsTransmission
    objective: float
    per_user_objective: np.ndarray
    state: CccpState | None
    status: str
    rate_splitting: bool = True
    runs: list = field(default_factory=list)

    @property
    def required(self) -> np.ndarray:
        """Sum of tile rates per user (bits/s)."""
        return np.array([float(np.sum(R)) for R in self.tile_rates])

    def to_dict(self) -> dict:
        return {
            "cases": [c.to_dict() for c in self.cases],
            "candidates": [list(f.candidates) for f in self.fov_sets],
            "fov_rates": [r.tolist() for r in self.fov_rates],
            "tile_rates": [R.tolist() for R in self.tile_rates],
            "transmission": self.transmission.to_dict(),
            "objective": self.objective,
            "per_user_objective": self.per_user_objective.tolist(),
            "status": self.status,
            "rate_splitting": self.rate_splitting,
            "cccp": None if self.state is None else self.state.to_dict(),
            "runs": [r.to_dict() for r in self.runs],
        }


def feasible_init(block: ChannelBlock, power: float, model: StreamingModel, fov_sets, cases,
                  options: CccpOptions | None = None, start: int = 0):
    """Strictly feasible CCCP start for GOP planning.

    Private beamformers are per-user MRT with equal power on every
    subcarrier; under rate splitting the common stream takes
    ``options.common_share`` of the budget along the sum of the users'
    channel directions.  SINR-derived ``u`` values, exponents and message
    rates each keep a 1e-3 multiplicative slack, and FoV rates use at most
    99% of each user's message rate.

    Returns
    -------
    x : ndarray or None
        ``None`` when the power is zero or the rates cannot carry the floor.
    assembly : _Assembly
    """
    opts = options or CccpOptions()
    asm = _Assembly(block, power, opts.rate_splitting, "plan", model, fov_sets, cases)
    if power <= 0:
        return None, asm
    w = asm.initial_beamformers(start, opts.seed, opts.common_share)
    return asm.start(w), asm


def _plan_from_state(asm: _Assembly, state: CccpState | None, status: str) -> MuGopPlan:
    model = asm.model
    K = asm.K
    if state is None:
        fov_rates = [np.zeros(f.size) for f in asm.fov_sets]
        tile_rates = [np.zeros(len(f.tiles)) for f in asm.fov_sets]
        tx = RsTransmission.zeros(K, asm.N, asm.M)
        per_user = np.zeros(K)
    else:
        x = state.x
        fov_rates, tile_rates = [], []
        for blk in asm.blocks:
            r = np.clip(x[blk.r], model.rate_floor, 1.0) * model.top_rate
            fov_rates.append(r)
            tile_rates.append(tile_rates_from_fov_rates(blk.fov_set, r))
        tx = asm.transmission(x)
        per_user = np.array([metric_eval(r, c, model.utility) for r, c in zip(fov_rates, asm.cases)])
    return MuGopPlan(list(asm.cases), list(asm.fov_sets), fov_rates, tile_rates, tx,
                     float(per_user.sum()), per_user, state, status, asm.rs)


def cccp_plan_gop(cases, model: StreamingModel, fov_sets, block: ChannelBlock, power: float,
                  options: CccpOptions | None = None, warm: RsTransmission | None = None):
    """Plan encoding rates, beamformers and message rates of all users.

    Runs the CCCP from ``options.multi_start`` feasible starts (plus the
    ``warm`` transmission when given) and keeps the run with the best final
    objective.  Under rate splitting with ``sdma_first`` those runs solve
    the SDMA program and the winner starts two rate-splitting runs: one
    lifted onto a weak common stream (``lift_share`` of the power) and one
    whose common stream gets ``common_share``.  The better run is kept, so
    the result is never worse than the best SDMA point by more than about
    ``utility_scale * lift_share``.

    Returns
    -------
    plan : MuGopPlan
    state : CccpState or None
        State of the winning run; ``None`` for the all-zero plan.
    """
    opts = options or CccpOptions()
    K = block.h.shape[0]
    if len(cases) != K or len(fov_sets) != K:
        raise ValueError("one case and one FoV set per user expected")

    def make(rs):
        return _Assembly(block, power, rs, "plan", model, fov_sets, cases)

    if power <= 0:
        return _plan_from_state(make(opts.rate_splitting), None, "degenerate"), None
    asm, best, runs = _optimize(make, opts, warm)
    if best is None:
        return _plan_from_state(asm, None, "degenerate"), None
    plan = _plan_from_state(asm, best, best.status)
    plan.runs = runs
    return plan, best


# ---------------------------------------------------------------------------
# per-slot adaptation


@dataclass
class SlotAdaptation:
    t: int
    transmission: RsTransmission
    slack: np.ndarray
    required: np.ndarray
    state: CccpState | None = None

    @property
    def residual(self) -> float:
        return float(np.sum(self.slack))

    @property
    def delivered(self) -> np.ndarray:
        return self.transmission.delivered

    def to_dict(self) -> dict:
        return {"t": self.t, "slack": self.slack.tolist(), "residual": self.residual,
                "required": self.required.tolist(),
                "transmission": self.transmission.to_dict(),
                "cccp": None if self.state is None else self.state.to_dict()}


def _slot_met(asm: _Assembly, x) -> bool:
    # zero shortfall is the global optimum of the slot program
    return float(np.sum(x[asm.s])) <= SLOT_MET * float(np.sum(asm.required))


def slot_adapt(required, block: ChannelBlock, power: float, model: StreamingModel,
               options: CccpOptions | None = None, warm: RsTransmission | None = None) -> SlotAdaptation:
    """Minimize the total rate shortfall ``sum_k s_k`` in slot ``block.t``.

    Parameters
    ----------
    required : array_like
        Required rate per user (bits/s), i.e. the planned tile-rate sums.
    warm : RsTransmission, optional
        Previous transmission used as an extra CCCP start.

    Runs stop as soon as the shortfall is at most ``SLOT_MET`` of the
    requirement, which is globally optimal.
    """
    opts = options or CccpOptions()
    req = np.asarray(required, dtype=float)
    K, N, M = block.h.shape
    if np.all(req <= 0) or power <= 0:
        return SlotAdaptation(block.t, RsTransmission.zeros(K, N, M), np.maximum(req, 0.0), req)

    def make(rs):
        return _Assembly(block, power, rs, "slot", model, required=req)

    asm, state, _ = _optimize(make, opts, warm, stop=_slot_met)
    if state is None:
        return SlotAdaptation(block.t, RsTransmission.zeros(K, N, M), req.copy(), req)
    tx = asm.transmission(state.x)
    slack = np.maximum(req - tx.delivered, 0.0)
    return SlotAdaptation(block.t, tx, slack, req, state)


def max_sum_rate(block: ChannelBlock, power: float, model: StreamingModel,
                 options: CccpOptions | None = None, warm: RsTransmission | None = None):
    """Maximize ``sum_k (d_common_k + d_private_k)`` by CCCP.

    Returns
    -------
    transmission : RsTransmission
    state : CccpState or None
    """
    opts = options or CccpOptions()
    K, N, M = block.h.shape
    if power <= 0:
        return RsTransmission.zeros(K, N, M), None
    def make(rs):
        return _Assembly(block, power, rs, "sumrate", model)

    asm, state, _ = _optimize(make, opts, warm)
    if state is None:
        return RsTransmission.zeros(K, N, M), None
    return asm.transmission(state.x), state
