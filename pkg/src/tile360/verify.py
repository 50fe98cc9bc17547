"""Self-check suites run by ``tile360 verify``.

Each check compares a solver against an independent route (grid search,
vertex enumeration, sampling) on small seeded instances and reports its
worst residual against a threshold.  ``fast`` finishes in seconds; ``full``
uses more instances and adds a Monte-Carlo check of the channel covariance.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .channel import OneRingParams, one_ring_covariance, sample_block
from .convex_kernel import waterfill
from .model import ProbabilityCase, StreamingModel, TilingGrid, worst_case_distribution
from .solver_mu import CccpOptions, cccp_plan_gop, dc_common, dc_private, linearize_G, linearize_L
from .solver_su import assemble_su, mrt_beamformers, solve_rate_program

__all__ = ["CheckResult", "run_suite", "check_waterfill", "check_mrt", "check_inner_lp",
           "check_dual", "check_ordering", "check_majorization", "check_cccp", "check_covariance"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    residual: float
    threshold: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.residual) and self.residual <= self.threshold)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{tag} {self.name}: residual {self.residual:.3e} <= {self.threshold:.1e}{extra}"


def _rng(seed, tag):
    return np.random.default_rng(np.random.SeedSequence([seed, tag]))


def check_waterfill(instances: int = 20, seed: int = 0) -> CheckResult:
    """Two-subcarrier water-filling against a dense grid over the power split."""
    rng = _rng(seed, 1)
    worst = 0.0
    frac = np.linspace(0.0, 1.0, 200001)
    for _ in range(instances):
        g = rng.exponential(size=2)
        P, noise = rng.uniform(0.1, 10.0), 1.0
        _, cap, _ = waterfill(g, P, noise, 1.0)
        grid = np.log2(1 + g[0] * frac * P / noise) + np.log2(1 + g[1] * (1 - frac) * P / noise)
        worst = max(worst, abs(cap - grid.max()) / grid.max())
    return CheckResult("waterfill_grid", worst, 1e-5, f"{instances} instances")


def check_mrt(channels: int = 10, draws: int = 200, seed: int = 0) -> CheckResult:
    """MRT alignment is Cauchy-Schwarz tight and beats random same-power beams."""
    rng = _rng(seed, 2)
    worst = 0.0
    losses = 0
    for _ in range(channels):
        M = int(rng.integers(2, 6))
        h = rng.standard_normal(M) + 1j * rng.standard_normal(M)
        w = mrt_beamformers(h[None], np.array([1.0]))[0]
        gain = abs(np.vdot(h, w)) ** 2
        bound = np.vdot(h, h).real * np.vdot(w, w).real
        worst = max(worst, abs(gain - bound) / bound)
        rnd = rng.standard_normal((draws, M)) + 1j * rng.standard_normal((draws, M))
        rnd /= np.linalg.norm(rnd, axis=1, keepdims=True)
        losses += int(np.sum(np.abs(rnd @ np.conj(h)) ** 2 > gain * (1 + 1e-12)))
    return CheckResult("mrt_alignment", worst + losses, 1e-10, f"{losses} random beams won")


def _vertices(lo, hi):
    """Vertices of ``{lo <= p <= hi, sum p = 1}``: all but one coordinate at a bound."""
    n = lo.size
    out = []
    for free in range(n):
        rest = [j for j in range(n) if j != free]
        for bits in itertools.product((0, 1), repeat=n - 1):
            p = np.empty(n)
            p[rest] = np.where(bits, hi[rest], lo[rest])
            p[free] = 1.0 - p[rest].sum()
            if lo[free] - 1e-12 <= p[free] <= hi[free] + 1e-12:
                out.append(p)
    return out


def check_inner_lp(instances: int = 30, seed: int = 0) -> CheckResult:
    """Greedy worst-case distribution against vertex enumeration and scipy's LP."""
    rng = _rng(seed, 3)
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(2, 6))
        p_hat = rng.dirichlet(np.ones(n))
        eps = rng.uniform(0.0, 0.5, n)
        case = ProbabilityCase.ip(p_hat, eps)
        u = rng.normal(size=n)
        _, val = worst_case_distribution(u, case.lower, case.upper)
        brute = min(float(p @ u) for p in _vertices(case.lower, case.upper))
        lp = linprog(u, A_eq=np.ones((1, n)), b_eq=[1.0],
                     bounds=list(zip(case.lower, case.upper)), method="highs")
        worst = max(worst, abs(val - brute), abs(val - lp.fun))
    return CheckResult("inner_lp_vertices", worst, 1e-9, f"{instances} instances")


def _small_model(rng) -> StreamingModel:
    return StreamingModel(grid=TilingGrid(8, 8))


def _random_instance(rng, model: StreamingModel):
    idx = int(rng.integers(9, 57))
    cands = sorted({idx, idx - 1, idx + 1, idx - 8, idx + 8})
    fs = model.fov_set(cands)
    top = model.top_rate * len(fs.tiles)
    capacity = float(rng.uniform(0.1, 0.9)) * top
    return fs, capacity


def check_dual(instances: int = 10, seed: int = 0) -> CheckResult:
    """ip optimum of the dual program equals the max-min objective at its rates."""
    rng = _rng(seed, 4)
    model = _small_model(rng)
    worst = 0.0
    for _ in range(instances):
        fs, cap = _random_instance(rng, model)
        case = ProbabilityCase.ip(rng.dirichlet(np.ones(fs.size)), rng.uniform(0, 0.3, fs.size))
        plan = solve_rate_program(case, model, fs, cap)
        blk = assemble_su(case, model, fs, cap).meta["block"]
        x, ex = plan.x, blk.extras
        dual = float(case.lower @ x[ex["tau"]] - case.upper @ x[ex["lam"]] - x[ex["gamma"]][0])
        _, inner = worst_case_distribution(model.utility(plan.fov_rates), case.lower, case.upper)
        worst = max(worst, abs(dual - inner) / max(1.0, abs(inner)))
    return CheckResult("ip_dual_equivalence", worst, 1e-6, f"{instances} instances")


def check_ordering(instances: int = 10, seed: int = 0) -> CheckResult:
    """pp >= ip >= up optimal values and tile rates equal the largest covering FoV rate."""
    rng = _rng(seed, 5)
    model = _small_model(rng)
    worst = 0.0
    for _ in range(instances):
        fs, cap = _random_instance(rng, model)
        p = rng.dirichlet(np.ones(fs.size))
        vals = []
        for case in (ProbabilityCase.pp(p), ProbabilityCase.ip(p, 0.1), ProbabilityCase.up(fs.size)):
            plan = solve_rate_program(case, model, fs, cap)
            vals.append(plan.objective)
            cover_max = np.max(np.where(fs.cover, plan.fov_rates[:, None], -np.inf), axis=0)
            worst = max(worst, float(np.max(np.abs(plan.tile_rates - cover_max))) / model.top_rate)
        worst = max(worst, vals[1] - vals[0], vals[2] - vals[1])
    return CheckResult("probability_ordering", worst, 1e-8, f"{instances} instances")


def check_majorization(points: int = 200, instances: int = 5, seed: int = 0,
                       common=linearize_L, private=linearize_G) -> CheckResult:
    """Linearized DC constraints are tangent at the anchor and lie above the originals.

    ``common`` and ``private`` are injectable so a mutated linearization can
    be shown to fail.
    """
    rng = _rng(seed, 6)
    worst = 0.0
    for _ in range(instances):
        K, M = int(rng.integers(1, 4)), int(rng.integers(1, 5))
        h = (rng.standard_normal(M) + 1j * rng.standard_normal(M)) / np.sqrt(2)
        wa = (rng.standard_normal((K + 1, M)) + 1j * rng.standard_normal((K + 1, M))) / np.sqrt(2)
        k = int(rng.integers(K))
        ua = 1.0 + rng.exponential()
        pairs = [(common(h, wa, ua), lambda w, u: dc_common(h, w, u)),
                 (private(k, h, wa, ua), lambda w, u: dc_private(k, h, w, u))]
        for maj, orig in pairs:
            scale = 1.0 + abs(orig(wa, ua))
            worst = max(worst, abs(maj(wa, ua) - orig(wa, ua)) / scale)
            for _ in range(points):
                w = wa + rng.normal(scale=1.0, size=wa.shape) + 1j * rng.normal(scale=1.0, size=wa.shape)
                u = 1.0 + rng.exponential(2.0)
                gap = orig(w, u) - maj(w, u)
                worst = max(worst, gap / (1.0 + abs(orig(w, u))))
    return CheckResult("linearization_majorization", worst, 1e-10, f"{instances} anchors")


def check_cccp(instances: int = 2, seed: int = 0) -> CheckResult:
    """CCCP objective traces never decrease (small multi-user instances)."""
    worst = 0.0
    model = StreamingModel(grid=TilingGrid(8, 8))
    rng = _rng(seed, 7)
    iters = 0
    for i in range(instances):
        params = OneRingParams(angles=(-0.5, 0.5), antennas=2, subcarriers=2, noise=1e-9,
                               bandwidth=624e3, path_gain=(10 ** -6.5,) * 2)
        block = sample_block(seed + i, 0, params)
        fsets, cases = [], []
        for k in range(2):
            fs, _ = _random_instance(rng, model)
            fsets.append(model.fov_set(fs.candidates, k))
            cases.append(ProbabilityCase.pp(rng.dirichlet(np.ones(fs.size))))
        plan, _ = cccp_plan_gop(cases, model, fsets, block, 1.0, CccpOptions(multi_start=1, seed=seed))
        for run in plan.runs:
            tr = np.asarray(run.trace)
            iters += len(tr)
            if tr.size > 1:
                worst = max(worst, float(np.max(tr[:-1] - tr[1:])))
    return CheckResult("cccp_monotone", worst, 1e-9, f"{iters} iterates")


def check_covariance(samples: int = 4000, seed: int = 0) -> CheckResult:
    """Sample covariance of generated channels against the one-ring covariance."""
    params = OneRingParams(angles=(0.3,), antennas=4, subcarriers=8)
    h = np.concatenate([sample_block(seed, t, params).h[0] for t in range(samples // 8)])
    S = h.T @ np.conj(h) / h.shape[0]
    R = one_ring_covariance(params, 0)
    err = np.linalg.norm(S - R) / np.linalg.norm(R)
    # sampling error shrinks as 1/sqrt(n); allow four standard errors
    return CheckResult("channel_covariance", float(err), 4.0 * params.antennas / np.sqrt(h.shape[0]),
                       f"{h.shape[0]} draws")


def run_suite(level: str = "fast", seed: int = 0) -> list[CheckResult]:
    if level not in ("fast", "full"):
        raise ValueError("level must be 'fast' or 'full'")
    n = 1 if level == "fast" else 5
    out = [
        check_waterfill(20 * n, seed),
        check_mrt(10 * n, 200, seed),
        check_inner_lp(30 * n, seed),
        check_dual(5 * n, seed),
        check_ordering(5 * n, seed),
        check_majorization(200 * n, 5, seed),
        check_cccp(1 if level == "fast" else 3, seed),
    ]
    if level == "full":
        out.append(check_covariance(8000, seed))
    return out
