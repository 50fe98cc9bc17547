"""Bisection, water-filling and an interior-point solver.

Programs are posed as *maximize* a concave objective subject to convex
inequalities ``g_j(x) <= 0``, optional linear equalities and box bounds.  The
default is the log-barrier method with Newton centering, polished by
primal-dual steps (Newton on the perturbed KKT system, backtracking on the
residual norm) once the duality gap is small.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sp

__all__ = [
    "bisect",
    "waterfill",
    "ConvexProgram",
    "SolverOptions",
    "SolverReport",
    "ProgramBuilder",
    "InfeasibleStartError",
    "solve_convex",
    "kkt_residual",
]

log = logging.getLogger(__name__)

# duality gap at which the barrier method hands over to primal-dual steps
BARRIER_HANDOFF = 1e-4


def bisect(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12,
           max_iter: int = 200) -> float:
    """Root of a monotone scalar function on ``[lo, hi]``.

    Stops when ``|f(root)| <= tol`` or the bracket is narrower than
    ``tol * max(1, |root|)``.
    """
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise ValueError("f(lo) and f(hi) do not bracket a root")
    mid = 0.5 * (lo + hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if abs(f_mid) <= tol or hi - lo < tol * max(1.0, abs(mid)):
            return mid
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return mid


def waterfill(gains, power: float, noise: float, bandwidth: float, tol: float = 1e-12):
    """Capacity-achieving power split over parallel channels.

    Parameters
    ----------
    gains : array_like
        Channel power gains ``||h_n||^2``.
    power : float
        Total power budget ``P``.
    noise : float
        Noise power per subcarrier.
    bandwidth : float
        Bandwidth per subcarrier in Hz.

    Returns
    -------
    v : ndarray
        Power per subcarrier, ``v_n = max(0, mu - noise / g_n)``.
    capacity : float
        ``sum_n B log2(1 + g_n v_n / noise)`` in bits/s.
    rho : float
        Multiplier of the power constraint; the water level is
        ``mu = 1 / (rho ln 2)``.
    """
    g = np.asarray(gains, dtype=float)
    if np.any(g < 0):
        raise ValueError("gains must be nonnegative")
    if not np.any(g > 0):
        raise ValueError("all channel gains are zero")
    if power <= 0:
        return np.zeros_like(g), 0.0, np.inf
    floor = np.full_like(g, np.inf)
    floor[g > 0] = noise / g[g > 0]

    def excess(level):
        return np.maximum(level - floor, 0.0).sum() - power

    base = floor.min()
    # excess(base + P) >= 0 holds only up to rounding, so bracket with 2P
    level = bisect(excess, base, base + 2.0 * power, tol=tol * power)
    # refine on the active set so the budget is met to rounding
    active = floor < level
    level = (power + floor[active].sum()) / active.sum()
    v = np.maximum(level - floor, 0.0)
    v *= power / v.sum()
    capacity = float(bandwidth * np.sum(np.log2(1.0 + g * v / noise)))
    rho = 1.0 / (level * np.log(2.0))
    return v, capacity, rho


# ---------------------------------------------------------------------------
# program representation


def _as_matrix(J):
    return J.toarray() if sp.issparse(J) else np.asarray(J)


@dataclass
class ConvexProgram:
    """Smooth program ``max f(x)`` s.t. ``g(x) <= 0``, ``A x = b``, box.

    Parameters
    ----------
    n : int
        Number of variables.
    objective : callable
        ``x -> (f, grad)``; concave, maximized.
    constraints : callable, optional
        ``x -> (g, J)`` with ``g`` of shape ``(m,)`` and the Jacobian ``J``
        of shape ``(m, n)`` (dense or sparse).
    objective_hessian, constraints_hessian : callable, optional
        ``x -> H_f`` and ``(x, lam) -> sum_j lam_j H_{g_j}``.  When missing
        the solver falls back to central differences of the gradients.
    A, b : ndarray, optional
        Linear equality rows.
    lower, upper : ndarray, optional
        Box bounds (``-inf``/``inf`` where absent).
    in_domain : callable, optional
        ``x -> bool``; false where the oracles are undefined.
    constraint_values : callable, optional
        ``x -> g`` without the Jacobian, used inside line searches.
    names : dict
        Variable blocks by name (index arrays).
    meta : dict
        Free-form assembly data such as a strictly feasible start.
    """

    n: int
    objective: Callable
    constraints: Callable | None = None
    objective_hessian: Callable | None = None
    constraints_hessian: Callable | None = None
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    in_domain: Callable | None = None
    constraint_values: Callable | None = None
    names: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        lo = np.full(self.n, -np.inf) if self.lower is None else np.asarray(self.lower, float)
        hi = np.full(self.n, np.inf) if self.upper is None else np.asarray(self.upper, float)
        self.lower, self.upper = lo, hi
        self._lo_idx = np.flatnonzero(np.isfinite(lo))
        self._hi_idx = np.flatnonzero(np.isfinite(hi))
        nl, nh = self._lo_idx.size, self._hi_idx.size
        self._box_J = sp.vstack([
            sp.csr_matrix((-np.ones(nl), (np.arange(nl), self._lo_idx)), shape=(nl, self.n)),
            sp.csr_matrix((np.ones(nh), (np.arange(nh), self._hi_idx)), shape=(nh, self.n)),
        ]).tocsr()
        if self.A is not None:
            self.A = np.atleast_2d(np.asarray(self.A, float))
            self.b = np.asarray(self.b, float)

    @property
    def num_box(self) -> int:
        return self._lo_idx.size + self._hi_idx.size

    def general(self, x):
        if self.constraints is None:
            return np.zeros(0), sp.csr_matrix((0, self.n))
        g, J = self.constraints(x)
        return np.asarray(g, float), J

    def _box_values(self, x):
        return np.concatenate((self.lower[self._lo_idx] - x[self._lo_idx],
                               x[self._hi_idx] - self.upper[self._hi_idx]))

    def inequality_values(self, x):
        """Values of :meth:`inequalities` without the Jacobian."""
        if self.constraints is None:
            g = np.zeros(0)
        elif self.constraint_values is not None:
            g = np.asarray(self.constraint_values(x), float)
        else:
            g = self.general(x)[0]
        return np.concatenate((g, self._box_values(x)))

    def rows(self, x) -> "_Rows":
        g, J = self.general(x)
        return _Rows(self, np.concatenate((g, self._box_values(x))), J)

    def inequalities(self, x):
        """All inequality values and Jacobian, box rows appended last."""
        g, J = self.general(x)
        box = np.concatenate((self.lower[self._lo_idx] - x[self._lo_idx],
                              x[self._hi_idx] - self.upper[self._hi_idx]))
        if sp.issparse(J):
            J_all = sp.vstack([J, self._box_J]).tocsr()
        else:
            J_all = np.vstack([np.asarray(J).reshape(-1, self.n), self._box_J.toarray()])
        return np.concatenate((g, box)), J_all

    def feasible(self, x, strict: bool = True) -> bool:
        if self.in_domain is not None and not self.in_domain(x):
            return False
        g = self.inequality_values(x)
        ok = np.all(g < 0) if strict else np.all(g <= 0)
        return bool(ok) and np.all(np.isfinite(g))

    def value(self, x) -> float:
        return float(self.objective(x)[0])


class _Rows:
    """Inequality values with the general Jacobian; box rows stay implicit."""

    def __init__(self, program: ConvexProgram, g, J):
        self.g = g
        self.J = J
        self.lo = program._lo_idx
        self.hi = program._hi_idx
        self.n = program.n
        self.m_gen = g.size - self.lo.size - self.hi.size

    def tmul(self, lam):
        """``J_all^T lam``."""
        out = np.zeros(self.n)
        if self.m_gen:
            out += self.J.T @ lam[: self.m_gen]
        nl = self.lo.size
        np.subtract.at(out, self.lo, lam[self.m_gen: self.m_gen + nl])
        np.add.at(out, self.hi, lam[self.m_gen + nl:])
        return out

    def mul(self, dx):
        """``J_all @ dx``."""
        gen = self.J @ dx if self.m_gen else np.zeros(0)
        return np.concatenate((gen, -dx[self.lo], dx[self.hi]))

    def gram(self, d):
        """Dense ``J_all^T diag(d) J_all``."""
        if self.m_gen:
            J = self.J
            if sp.issparse(J):
                H = (J.T @ J.multiply(d[: self.m_gen, None])).toarray()
            else:
                H = J.T @ (J * d[: self.m_gen, None])
        else:
            H = np.zeros((self.n, self.n))
        nl = self.lo.size
        diag = np.zeros(self.n)
        np.add.at(diag, self.lo, d[self.m_gen: self.m_gen + nl])
        np.add.at(diag, self.hi, d[self.m_gen + nl:])
        H[np.diag_indices(self.n)] += diag
        return H


@dataclass
class SolverOptions:
    """Interior-point settings.

    ``tolerance`` bounds the KKT residual, ``gap_tolerance`` the duality
    gap ``m / t``.  ``method`` picks the log-barrier method (Newton
    centering, ``t`` grown by ``mu``) or the primal-dual method.
    ``initial_t`` is the first barrier weight; ``None`` derives it from the
    start.  With ``polish`` the barrier method stops at a gap of
    ``BARRIER_HANDOFF`` and primal-dual steps take it to ``gap_tolerance``,
    which gives much smaller stationarity residuals.  A centering ends when
    half the squared Newton decrement is below ``centering * m / t``.
    ``alpha``/``beta`` are the backtracking parameters.
    """

    tolerance: float = 1e-8
    gap_tolerance: float = 1e-10
    max_iter: int = 200
    initial_t: float | None = None
    mu: float = 10.0
    alpha: float = 0.01
    beta: float = 0.5
    phase_one: bool = True
    method: str = "barrier"
    polish: bool = True
    centering: float = 1e-6

    def __post_init__(self):
        if self.tolerance <= 0 or self.gap_tolerance <= 0 or self.mu <= 1:
            raise ValueError("tolerance must be positive and mu > 1")
        if self.method not in ("barrier", "primal_dual"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class SolverReport:
    objective: float
    iterations: int
    kkt_residual: float
    status: str
    multipliers: np.ndarray = field(default=None, repr=False)
    eq_multipliers: np.ndarray = field(default=None, repr=False)
    gap: float = np.nan

    def to_dict(self) -> dict:
        return {"objective": self.objective, "iterations": self.iterations,
                "kkt_residual": self.kkt_residual, "status": self.status, "gap": self.gap}


class InfeasibleStartError(ValueError):
    """No strictly feasible starting point is available."""


def kkt_residual(program: ConvexProgram, x, multipliers, eq_multipliers=None) -> float:
    """Largest of the stationarity, feasibility and complementarity residuals.

    ``multipliers`` covers the general inequalities followed by the finite
    lower and upper box bounds, in the order of
    :meth:`ConvexProgram.inequalities`.  Stationarity is measured as
    ``||grad f - J^T lam - A^T nu||_inf / (1 + ||grad f||_inf)``.
    """
    x = np.asarray(x, float)
    lam = np.asarray(multipliers, float)
    _, grad = program.objective(x)
    g, J = program.inequalities(x)
    stat = grad - J.T @ lam
    feas = max(0.0, float(np.max(g, initial=0.0)))
    if program.A is not None:
        nu = np.zeros(program.A.shape[0]) if eq_multipliers is None else eq_multipliers
        stat = stat - program.A.T @ nu
        feas = max(feas, float(np.max(np.abs(program.A @ x - program.b), initial=0.0)))
    stat_res = float(np.max(np.abs(stat), initial=0.0)) / (1.0 + float(np.max(np.abs(grad), initial=0.0)))
    comp = float(np.max(np.abs(lam * g), initial=0.0))
    dual = max(0.0, -float(np.min(lam, initial=0.0)))
    return max(stat_res, feas, comp, dual)


# ---------------------------------------------------------------------------
# Hessian helpers


def _fd_jacobian(fun, x, step=1e-6):
    n = x.size
    cols = []
    for i in range(n):
        h = step * max(1.0, abs(x[i]))
        e = np.zeros(n)
        e[i] = h
        cols.append((fun(x + e) - fun(x - e)) / (2 * h))
    H = np.array(cols).T
    return 0.5 * (H + H.T)


def _lagrangian_hessian(program, x, lam_general):
    """Hessian of ``-f + sum lam_j g_j`` (box rows are linear)."""
    if program.objective_hessian is not None:
        H = -np.array(_as_matrix(program.objective_hessian(x)), dtype=float)
    else:
        H = -_fd_jacobian(lambda z: program.objective(z)[1], x)
    if program.constraints is not None and lam_general.size:
        if program.constraints_hessian is not None:
            H = H + _as_matrix(program.constraints_hessian(x, lam_general))
        else:
            H = H + _fd_jacobian(lambda z: _as_matrix(program.general(z)[1]).T @ lam_general, x)
    return H


# ---------------------------------------------------------------------------
# solver


def _newton_solve(H, rhs, A=None, r_pri=None):
    n = H.shape[0]
    if A is None:
        scale = np.sqrt(np.maximum(np.abs(np.diag(H)), 1e-300))
        Hs = H / scale[:, None] / scale[None, :]
        try:
            c = scipy.linalg.cho_factor(Hs, check_finite=False)
            return scipy.linalg.cho_solve(c, rhs / scale, check_finite=False) / scale, None
        except (np.linalg.LinAlgError, ValueError):
            reg = 1e-12 * np.eye(n)
            sol = np.linalg.lstsq(Hs + reg, rhs / scale, rcond=None)[0]
            return sol / scale, None
    p = A.shape[0]
    K = np.block([[H, A.T], [A, np.zeros((p, p))]])
    full = np.concatenate((rhs, -r_pri))
    try:
        sol = np.linalg.solve(K, full)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, full, rcond=None)[0]
    return sol[:n], sol[n:]


def _primal_dual(program: ConvexProgram, x, opts: SolverOptions, stop=None, lam=None):
    rows = program.rows(x)
    g = rows.g
    m = g.size
    if lam is None:
        lam = 1.0 / ((opts.initial_t or 1.0) * -g) if m else np.zeros(0)
    A, b = program.A, program.b
    nu = np.zeros(A.shape[0]) if A is not None else None
    f, grad = program.objective(x)
    status = "max_iter"
    it = 0
    short_steps = 0

    def residuals(x_, lam_, nu_, t_, rows_, grad_):
        r_dual = -grad_ + rows_.tmul(lam_)
        if A is not None:
            r_dual = r_dual + A.T @ nu_
        r_cent = -lam_ * rows_.g - 1.0 / t_
        r_pri = A @ x_ - b if A is not None else np.zeros(0)
        return r_dual, r_cent, r_pri

    for it in range(1, opts.max_iter + 1):
        eta = float(-g @ lam) if m else 0.0
        t = opts.mu * m / eta if m and eta > 0 else 1e16
        r_dual, r_cent, r_pri = residuals(x, lam, nu, t, rows, grad)
        dual_ok = np.max(np.abs(r_dual), initial=0.0) <= opts.tolerance * (1 + np.max(np.abs(grad), initial=0.0))
        pri_ok = np.max(np.abs(r_pri), initial=0.0) <= opts.tolerance
        if dual_ok and pri_ok and eta <= opts.gap_tolerance:
            status = "optimal"
            break
        if stop is not None and stop(x):
            status = "stopped"
            break
        H = _lagrangian_hessian(program, x, lam[: rows.m_gen])
        if m:
            H += rows.gram(lam / -g)
            rhs = -(r_dual + rows.tmul(r_cent / g))
        else:
            rhs = -r_dual
        dx, dnu = _newton_solve(H, rhs, A, r_pri)
        if m:
            dlam = -(lam / g) * rows.mul(dx) + r_cent / g
            neg = dlam < 0
            s = min(1.0, float(np.min(-lam[neg] / dlam[neg]))) if np.any(neg) else 1.0
            s *= 0.99
        else:
            dlam = np.zeros(0)
            s = 1.0
        norm0 = np.sqrt(r_dual @ r_dual + r_cent @ r_cent + r_pri @ r_pri)
        accepted = False
        while s > 1e-16:
            x_new = x + s * dx
            if (program.in_domain is None or program.in_domain(x_new)) and np.all(program.inequality_values(x_new) < 0):
                rows_new = program.rows(x_new)
                lam_new = lam + s * dlam
                nu_new = nu + s * dnu if A is not None else None
                f_new, grad_new = program.objective(x_new)
                rd, rc, rp = residuals(x_new, lam_new, nu_new, t, rows_new, grad_new)
                norm1 = np.sqrt(rd @ rd + rc @ rc + rp @ rp)
                if norm1 <= (1 - opts.alpha * s) * norm0 or s < 1e-10:
                    accepted = True
                    break
            s *= opts.beta
        if not accepted:
            status = "stalled"
            break
        x, lam, nu = x_new, lam_new, nu_new
        rows, f, grad = rows_new, f_new, grad_new
        g = rows.g
        # tiny steps on a flat optimal face: no further progress possible
        short_steps = short_steps + 1 if s < 1e-6 else 0
        if short_steps >= 3:
            status = "stalled"
            break
    eta = float(-g @ lam) if m else 0.0
    return x, lam, nu, it, status, eta


def _barrier(program: ConvexProgram, x, opts: SolverOptions, stop=None, gap: float | None = None):
    """Log-barrier method: maximize ``f + (1/t) sum ln(-g)`` for growing ``t``.

    Each centering runs damped Newton steps until half the squared Newton
    decrement drops below ``opts.centering * m / t``; the loop ends once ``m / t`` is
    at most ``gap`` (default ``opts.gap_tolerance``).  Newton steps are
    counted against ``opts.max_iter``.
    """
    gap = opts.gap_tolerance if gap is None else gap
    rows = program.rows(x)
    g = rows.g
    m = g.size
    A, b = program.A, program.b
    f, grad = program.objective(x)
    if m == 0:
        t = 1.0
    elif opts.initial_t is not None:
        t = opts.initial_t
    else:
        t = max(1.0, m / max(1.0, abs(f)))
    it = 0
    status = "max_iter"
    while True:
        # centering at the current t
        while it < opts.max_iter:
            lam = 1.0 / (t * -g) if m else np.zeros(0)
            H = _lagrangian_hessian(program, x, lam[: rows.m_gen])
            rhs = grad.copy()
            if m:
                H += rows.gram(lam / -g)
                rhs -= rows.tmul(lam)
            r_pri = A @ x - b if A is not None else None
            dx, _ = _newton_solve(H, rhs, A, r_pri)
            it += 1
            dec = float(rhs @ dx)
            phi = f + (float(np.sum(np.log(-g))) / t if m else 0.0)
            if dec / 2.0 <= max(opts.centering * m / t, 1e-14 * (1.0 + abs(phi))):
                break
            s = 1.0
            accepted = False
            while s > 1e-12:
                x_new = x + s * dx
                if program.in_domain is None or program.in_domain(x_new):
                    g_new = program.inequality_values(x_new)
                    if np.all(g_new < 0):
                        f_new = program.value(x_new)
                        phi_new = f_new + (float(np.sum(np.log(-g_new))) / t if m else 0.0)
                        if phi_new >= phi + opts.alpha * s * dec:
                            accepted = True
                            break
                s *= opts.beta
            if not accepted:
                # no ascent left at working precision
                break
            x = x_new
            rows = program.rows(x)
            g = rows.g
            f, grad = program.objective(x)
        else:
            break
        log.debug("barrier t=%.3g newton=%d f=%.12g", t, it, f)
        if stop is not None and stop(x):
            status = "stopped"
            break
        if m == 0 or m / t <= gap:
            status = "optimal"
            break
        t *= opts.mu
    lam = 1.0 / (t * -g) if m else np.zeros(0)
    nu = None
    if A is not None:
        # least-squares equality multipliers from stationarity
        nu = np.linalg.lstsq(A.T, grad - rows.tmul(lam), rcond=None)[0]
    return x, lam, nu, it, status, (m / t if m else 0.0)


def _phase_one(program: ConvexProgram, x0, opts: SolverOptions):
    """Find a strictly feasible point by minimizing the largest violation."""
    n = program.n
    g0, _ = program.inequalities(x0)
    s0 = float(np.max(g0)) + 1.0

    def objective(z):
        grad = np.zeros(n + 1)
        grad[-1] = -1.0
        return -z[-1], grad

    def constraints(z):
        g, J = program.inequalities(z[:n])
        J = sp.csr_matrix(J) if not sp.issparse(J) else J
        col = sp.csr_matrix(-np.ones((g.size, 1)))
        return g - z[-1], sp.hstack([J, col]).tocsr()

    def constraints_hessian(z, lam):
        lam_gen = lam[: lam.size - program.num_box]
        H = np.zeros((n + 1, n + 1))
        if program.constraints is not None and lam_gen.size:
            if program.constraints_hessian is not None:
                H[:n, :n] = _as_matrix(program.constraints_hessian(z[:n], lam_gen))
            else:
                H[:n, :n] = _fd_jacobian(lambda y: _as_matrix(program.general(y)[1]).T @ lam_gen, z[:n])
        return H

    lower = np.full(n + 1, -np.inf)
    lower[-1] = -1.0
    aux = ConvexProgram(
        n + 1, objective, constraints,
        objective_hessian=lambda z: np.zeros((n + 1, n + 1)),
        constraints_hessian=constraints_hessian,
        A=None if program.A is None else np.hstack([program.A, np.zeros((program.A.shape[0], 1))]),
        b=program.b, lower=lower,
        in_domain=None if program.in_domain is None else (lambda z: program.in_domain(z[:n])),
    )
    z0 = np.concatenate((x0, [s0]))

    def found(z):
        return z[-1] < 0 and program.feasible(z[:n])

    z, *_ = _primal_dual(aux, z0, opts, stop=found)
    if not program.feasible(z[:n]):
        raise InfeasibleStartError("phase I found no strictly feasible point")
    return z[:n]


def solve_convex(program: ConvexProgram, x0, options: SolverOptions | None = None):
    """Maximize a smooth concave program from a strictly feasible start.

    Parameters
    ----------
    program : ConvexProgram
    x0 : array_like
        Starting point.  When not strictly feasible and
        ``options.phase_one`` is set, an auxiliary program minimizing the
        largest constraint value is solved first.
    options : SolverOptions, optional

    Returns
    -------
    x : ndarray
    report : SolverReport
        Status is ``optimal`` when the KKT residual meets the tolerance.
    """
    opts = options or SolverOptions()
    x = np.array(x0, dtype=float)
    if x.shape != (program.n,):
        raise ValueError("initial point has the wrong dimension")
    if program.in_domain is not None and not program.in_domain(x):
        raise InfeasibleStartError("initial point outside the oracle domain")
    if not program.feasible(x):
        if not opts.phase_one:
            raise InfeasibleStartError("initial point is not strictly feasible")
        x = _phase_one(program, x, opts)
    if opts.method == "barrier":
        first_gap = max(opts.gap_tolerance, BARRIER_HANDOFF) if opts.polish else opts.gap_tolerance
        x, lam, nu, it, status, eta = _barrier(program, x, opts, gap=first_gap)
        if status == "optimal" and eta > opts.gap_tolerance:
            # hand the central point to the primal-dual iteration for the tail
            x, lam, nu, it2, status, eta = _primal_dual(program, x, replace(opts, max_iter=opts.max_iter - it),
                                                        lam=lam)
            it += it2
    else:
        x, lam, nu, it, status, eta = _primal_dual(program, x, opts)
    res = kkt_residual(program, x, lam, nu)
    if res <= opts.tolerance:
        status = "optimal"
    elif status == "optimal":
        status = "inaccurate"
    return x, SolverReport(program.value(x), it, res, status, lam, nu, eta)


# ---------------------------------------------------------------------------
# structured assembly


class ProgramBuilder:
    """Assemble programs whose rows mix linear, log and squared-linear terms.

    Every inequality row has the form::

        a @ x + c - w * ln(x[j]) + v * exp(x[i]) + sum_q (p_q @ x)**2 <= 0

    with ``w, v >= 0`` so that each row is convex; the objective is
    ``c @ x + c0 + sum_i w_i ln(x[j_i])`` with ``w_i >= 0`` (concave).
    """

    def __init__(self):
        self.n = 0
        self.blocks: dict[str, np.ndarray] = {}
        self._lower: list[np.ndarray] = []
        self._upper: list[np.ndarray] = []
        self._lin = ([], [], [])  # row, col, val
        self._const: list[float] = []
        self._log = ([], [], [])  # row, var, coef
        self._exp = ([], [], [])
        self._quad = ([], [], [])  # quad row, col, val
        self._quad_owner: list[int] = []
        self._obj_lin = np.zeros(0)
        self._obj_log: dict[int, float] = {}
        self._obj_const = 0.0
        self.row_tags: list[str] = []

    @property
    def m(self) -> int:
        return len(self._const)

    def add_variables(self, name: str, size: int, lower=-np.inf, upper=np.inf) -> np.ndarray:
        idx = np.arange(self.n, self.n + size)
        self.n += size
        self.blocks[name] = idx
        self._lower.append(np.broadcast_to(np.asarray(lower, float), (size,)).copy())
        self._upper.append(np.broadcast_to(np.asarray(upper, float), (size,)).copy())
        self._obj_lin = np.concatenate((self._obj_lin, np.zeros(size)))
        return idx

    def add_row(self, idx=(), vals=(), const: float = 0.0, log_var: int | None = None,
                log_coef: float = 0.0, quad=(), tag: str = "", exp_var: int | None = None,
                exp_coef: float = 0.0) -> int:
        """Append one inequality row; ``quad`` is a list of ``(idx, vals)`` forms."""
        row = self.m
        idx = np.atleast_1d(np.asarray(idx, dtype=int))
        vals = np.broadcast_to(np.asarray(vals, dtype=float), idx.shape)
        self._lin[0].extend([row] * idx.size)
        self._lin[1].extend(idx.tolist())
        self._lin[2].extend(vals.tolist())
        self._const.append(float(const))
        if log_var is not None:
            if log_coef < 0:
                raise ValueError("log coefficient must be nonnegative for convexity")
            self._log[0].append(row)
            self._log[1].append(int(log_var))
            self._log[2].append(float(log_coef))
        if exp_var is not None:
            if exp_coef < 0:
                raise ValueError("exponential coefficient must be nonnegative for convexity")
            self._exp[0].append(row)
            self._exp[1].append(int(exp_var))
            self._exp[2].append(float(exp_coef))
        for q_idx, q_vals in quad:
            q = len(self._quad_owner)
            q_idx = np.atleast_1d(np.asarray(q_idx, dtype=int))
            self._quad[0].extend([q] * q_idx.size)
            self._quad[1].extend(q_idx.tolist())
            self._quad[2].extend(np.broadcast_to(np.asarray(q_vals, float), q_idx.shape).tolist())
            self._quad_owner.append(row)
        self.row_tags.append(tag)
        return row

    def add_objective(self, idx=(), vals=(), log_vars=(), log_coefs=(), const: float = 0.0):
        idx = np.atleast_1d(np.asarray(idx, dtype=int))
        np.add.at(self._obj_lin, idx, np.broadcast_to(np.asarray(vals, float), idx.shape))
        for j, w in zip(np.atleast_1d(log_vars), np.atleast_1d(log_coefs)):
            if w < 0:
                raise ValueError("objective log weights must be nonnegative")
            self._obj_log[int(j)] = self._obj_log.get(int(j), 0.0) + float(w)
        self._obj_const += const

    def rows_tagged(self, prefix: str) -> np.ndarray:
        return np.array([i for i, t in enumerate(self.row_tags) if t.startswith(prefix)], dtype=int)

    def build(self) -> ConvexProgram:
        """Dense oracles; every quadratic form contributes through precomputed
        scatter indices so no sparse matrices are formed per evaluation."""
        n, m = self.n, self.m
        G = np.zeros((m, n))
        np.add.at(G, (np.asarray(self._lin[0], int), np.asarray(self._lin[1], int)), self._lin[2])
        c0 = np.array(self._const)
        log_rows = np.array(self._log[0], dtype=int)
        log_vars = np.array(self._log[1], dtype=int)
        log_coef = np.array(self._log[2])
        exp_rows = np.array(self._exp[0], dtype=int)
        exp_vars = np.array(self._exp[1], dtype=int)
        exp_coef = np.array(self._exp[2])
        nq = len(self._quad_owner)
        q_of = np.asarray(self._quad[0], dtype=int)
        q_col = np.asarray(self._quad[1], dtype=int)
        q_val = np.asarray(self._quad[2], dtype=float)
        owner = np.asarray(self._quad_owner, dtype=int)
        P = sp.csr_matrix((q_val, (q_of, q_col)), shape=(nq, n))
        jac_flat = owner[q_of] * n + q_col if nq else np.zeros(0, int)
        pair_q, pair_flat, pair_val = _form_pairs(q_of, q_col, q_val, nq, n)
        c_obj = self._obj_lin.copy()
        o_vars = np.array(list(self._obj_log.keys()), dtype=int)
        o_coef = np.array(list(self._obj_log.values()))
        o_const = self._obj_const
        pos_vars = np.unique(np.concatenate((log_vars, o_vars)))

        def objective(x):
            val = c_obj @ x + o_const
            grad = c_obj.copy()
            if o_vars.size:
                val += o_coef @ np.log(x[o_vars])
                grad[o_vars] += o_coef / x[o_vars]
            return float(val), grad

        def objective_hessian(x):
            H = np.zeros((n, n))
            np.add.at(H, (o_vars, o_vars), -o_coef / x[o_vars] ** 2)
            return H

        def values(x, z=None):
            g = G @ x + c0
            if log_rows.size:
                np.subtract.at(g, log_rows, log_coef * np.log(x[log_vars]))
            if exp_rows.size:
                np.add.at(g, exp_rows, exp_coef * np.exp(x[exp_vars]))
            if nq:
                z = P @ x if z is None else z
                g += np.bincount(owner, z * z, minlength=m)
            return g

        def constraints(x):
            z = P @ x if nq else None
            g = values(x, z)
            J = G.copy()
            if nq:
                J += np.bincount(jac_flat, 2.0 * z[q_of] * q_val, minlength=m * n).reshape(m, n)
            if log_rows.size:
                np.subtract.at(J, (log_rows, log_vars), log_coef / x[log_vars])
            if exp_rows.size:
                np.add.at(J, (exp_rows, exp_vars), exp_coef * np.exp(x[exp_vars]))
            return g, J

        def constraints_hessian(x, lam):
            if nq:
                w = 2.0 * lam[owner[pair_q]] * pair_val
                H = np.bincount(pair_flat, w, minlength=n * n).reshape(n, n)
            else:
                H = np.zeros((n, n))
            if log_rows.size:
                np.add.at(H, (log_vars, log_vars), lam[log_rows] * log_coef / x[log_vars] ** 2)
            if exp_rows.size:
                np.add.at(H, (exp_vars, exp_vars), lam[exp_rows] * exp_coef * np.exp(x[exp_vars]))
            return H

        def in_domain(x):
            return bool(np.all(x[pos_vars] > 0)) if pos_vars.size else True

        prog = ConvexProgram(
            n, objective, constraints if m else None,
            objective_hessian=objective_hessian,
            constraints_hessian=constraints_hessian,
            lower=np.concatenate(self._lower) if self._lower else None,
            upper=np.concatenate(self._upper) if self._upper else None,
            in_domain=in_domain,
            constraint_values=values if m else None,
            names=dict(self.blocks),
        )
        prog.meta["row_tags"] = list(self.row_tags)
        return prog


def _form_pairs(q_of, q_col, q_val, nq, n):
    """Entry pairs ``(i, j)`` of every squared form, for Hessian scatters."""
    if nq == 0:
        return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
    sizes = np.bincount(q_of, minlength=nq)
    order = np.argsort(q_of, kind="stable")
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    out_q, out_flat, out_val = [], [], []
    for size in np.unique(sizes[sizes > 0]):
        forms = np.flatnonzero(sizes == size)
        ent = order[starts[forms][:, None] + np.arange(size)]
        cols, vals = q_col[ent], q_val[ent]
        out_flat.append((cols[:, :, None] * n + cols[:, None, :]).ravel())
        out_val.append((vals[:, :, None] * vals[:, None, :]).ravel())
        out_q.append(np.repeat(forms, size * size))
    return np.concatenate(out_q), np.concatenate(out_flat), np.concatenate(out_val)
