"""Independent reference computations used by the tests.

None of these call the solvers they check; they enumerate, grid-search or
difference numerically.
"""
from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import minimize


def grid_waterfill(gains, power, noise, bandwidth, step_frac=1e-6):
    """Best two-subcarrier split on a grid with step ``step_frac * P``."""
    g = np.asarray(gains, dtype=float)
    assert g.size == 2
    a = np.arange(0.0, 1.0 + step_frac / 2, step_frac) * power
    rate = np.log2(1 + g[0] * a / noise) + np.log2(1 + g[1] * (power - a) / noise)
    return float(bandwidth * rate.max())


def slsqp_capacity(gains, power, noise, bandwidth):
    """Capacity by a general-purpose optimizer (independent of water-filling)."""
    n = gains.size
    res = minimize(lambda v: -np.sum(np.log2(1 + gains * v / noise)), np.full(n, power / n),
                   jac=lambda v: -gains / ((noise + gains * v) * np.log(2)), method="SLSQP",
                   bounds=[(0, power)] * n,
                   constraints=[{"type": "eq", "fun": lambda v: v.sum() - power}],
                   options={"ftol": 1e-14, "maxiter": 500})
    return capacity_of(gains, np.clip(res.x, 0, None) * power / np.clip(res.x, 0, None).sum(),
                       noise, bandwidth)


def capacity_of(gains, v, noise, bandwidth):
    return float(bandwidth * np.sum(np.log2(1 + np.asarray(gains) * np.asarray(v) / noise)))


def box_simplex_vertices(lo, hi):
    """All vertices of ``{lo <= p <= hi, sum p = 1}``."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
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
    return np.array(out)


def vertex_min(u, lo, hi):
    V = box_simplex_vertices(lo, hi)
    return float(np.min(V @ np.asarray(u, float)))


def _case_vertices(case):
    if case.tag == "pp":
        return case.p[None, :]
    if case.tag == "up":
        return np.eye(case.size)
    return box_simplex_vertices(case.lower, case.upper)


def rate_program_bruteforce(case, model, fov_set, capacity, step=1e-3, refine=20):
    """Optimal value of the single-user rate program by exhaustive search.

    Rates are normalized by the top ladder rate.  The first ``I - 1`` FoV
    rates range over a grid of step ``step``; for each grid point the last
    rate is the largest value meeting the capacity and smoothness rows
    (the objective never decreases in any single rate).  Tiles take the
    largest covering rate, the cheapest choice meeting ``R >= r``; the
    smoothness rows then require the covering rates of every tile to
    spread by at most ``delta``.  The inner minimum over distributions is
    taken over the vertices of the probability set.  A second grid
    ``refine`` times finer is searched around the best coarse point.

    Returns
    -------
    value : float
    rates : ndarray
        FoV rates (bits/s) of the best grid point.
    """
    lo = model.rate_floor
    axis = np.unique(np.append(np.arange(lo, 1.0, step), 1.0))
    I = fov_set.size
    val, r = _grid_search(case, model, fov_set, capacity, [axis] * (I - 1))
    if refine and I > 1 and np.isfinite(val):
        fine = step / refine
        axes = [np.clip(np.arange(x - 2 * step, x + 2 * step + fine / 2, fine), lo, 1.0)
                for x in r[:-1]]
        val2, r2 = _grid_search(case, model, fov_set, capacity, [np.unique(a) for a in axes])
        if val2 > val:
            val, r = val2, r2
    return val, r * model.top_rate


def _grid_search(case, model, fov_set, capacity, axes):
    cover = np.asarray(fov_set.cover, bool)
    I, T = cover.shape
    lo = model.rate_floor
    delta = model.delta / model.top_rate
    C = capacity / model.top_rate
    a, g = model.utility_scale, model.utility_gain
    V = _case_vertices(case)
    if I > 1:
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, I - 1)
    else:
        mesh = np.zeros((1, 0))
    share = cover[:, None, :] & cover[None, :, :]
    overlap = share.any(axis=2)
    # smoothness among the fixed rates
    ok = np.ones(len(mesh), bool)
    for i in range(I - 1):
        for j in range(i + 1, I - 1):
            if overlap[i, j]:
                ok &= np.abs(mesh[:, i] - mesh[:, j]) <= delta + 1e-12
    # largest fixed covering rate per tile (0 if none)
    if I > 1:
        m = np.where(cover[:-1][None, :, :], mesh[:, :, None], 0.0).max(axis=1)
    else:
        m = np.zeros((1, T))
    last = cover[-1]
    base = m[:, ~last].sum(axis=1)
    m_last = m[:, last]
    # interval allowed for the last rate by smoothness
    r_lo = np.full(len(mesh), lo)
    r_hi = np.ones(len(mesh))
    for j in range(I - 1):
        if overlap[j, -1]:
            r_lo = np.maximum(r_lo, mesh[:, j] - delta)
            r_hi = np.minimum(r_hi, mesh[:, j] + delta)

    def load(r):
        return base + np.maximum(m_last, r[:, None]).sum(axis=1)

    ok &= (r_lo <= r_hi) & (load(r_lo) <= C + 1e-12)
    a_, b_ = r_lo.copy(), r_hi.copy()
    full = load(b_) <= C
    for _ in range(60):
        mid = 0.5 * (a_ + b_)
        fits = load(mid) <= C
        a_ = np.where(fits, mid, a_)
        b_ = np.where(fits, b_, mid)
    r = np.column_stack((mesh, np.where(full, r_hi, a_)))
    vals = np.min((a * np.log(g * r)) @ V.T, axis=1)
    vals = np.where(ok, vals, -np.inf)
    best = int(np.argmax(vals))
    return float(vals[best]), r[best]


def bier_bisection(model, fov_set, current, capacity, iters=200):
    """Current-FoV rate of the pinned scheme by bisection on the tile load."""
    d1 = model.ladder.rates[0]
    cover = np.asarray(fov_set.cover, bool)
    cur = fov_set.candidates.index(current)
    others = np.delete(cover, cur, axis=0)

    def load(x):
        r_other = np.where(others, d1, 0.0).max(axis=0) if len(others) else 0.0
        return float(np.sum(np.maximum(r_other, np.where(cover[cur], x, 0.0))))

    floor = model.rate_floor * model.top_rate
    cap = model.top_rate
    if len(others) and np.any(others.any(axis=0) & cover[cur]):
        cap = min(cap, d1 + model.delta)
    if load(floor) > capacity:
        return None
    if load(cap) <= capacity:
        return cap
    lo, hi = floor, cap
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if load(mid) <= capacity:
            lo = mid
        else:
            hi = mid
    return lo


def central_gradient(f, x, h=1e-6):
    """Central differences of a scalar function."""
    x = np.asarray(x, float)
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h * max(1.0, abs(x[i]))
        out[i] = (f(x + e) - f(x - e)) / (2 * e[i])
    return out


def central_jacobian(F, x, h=1e-6):
    x = np.asarray(x, float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h * max(1.0, abs(x[i]))
        cols.append((np.asarray(F(x + e)) - np.asarray(F(x - e))) / (2 * e[i]))
    return np.column_stack(cols) if cols else np.zeros((0, 0))


def loop_rates(w_private, w_common, h, noise, bandwidth):
    """Common and private rates with explicit loops over users and subcarriers."""
    K, N, _ = h.shape
    common = np.zeros(K)
    private = np.zeros(K)
    for k in range(K):
        for n in range(N):
            hk = h[k, n]
            pw = [abs(np.vdot(hk, w_private[j, n])) ** 2 for j in range(K)]
            c = abs(np.vdot(hk, w_common[n])) ** 2
            common[k] += np.log2(1 + c / (sum(pw) + noise))
            private[k] += np.log2(1 + pw[k] / (sum(pw) - pw[k] + noise))
    return bandwidth * common.min(), bandwidth * private


def empirical_cdf_at(series, x):
    s = np.asarray(series, float)
    return float(np.mean(s <= x))
