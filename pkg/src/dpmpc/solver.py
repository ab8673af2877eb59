"""NLP solvers for the multiple-shooting swing-up OCP: trajectory
linearization, full SQP with an L1-merit line search, the real-time
iteration split (prepare/feedback), and an iLQR-style DDP backend.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from numba import njit

from .ocp import OcpProblem
from .ocpqp import QpData, QpSolution, QpStatus, qp_solve

SQP = "SQP"
SQP_RTI = "SQP_RTI"
DDP = "DDP"
BACKENDS = (SQP, SQP_RTI, DDP)


class SolverStatus(Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    INFEASIBLE = "infeasible"
    TIMEOUT = "timeout"


@dataclass
class SolverSettings:
    backend: str = SQP_RTI
    max_iter: int = 500
    kkt_tol: float = 1e-6
    qp_tol: float = 1e-3
    max_solve_time: float = 1.0
    levenberg_marquardt: float = 1e-8
    line_search_c1: float = 1e-4
    line_search_min_step: float = 2.0 ** -24
    qp_max_iter: int = 100
    qp_tau_frac: float = 0.95

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")
        if self.max_iter < 0:
            raise ValueError("max_iter must be >= 0")
        if self.kkt_tol <= 0.0 or self.qp_tol <= 0.0:
            raise ValueError("tolerances must be positive")


@dataclass
class Solution:
    """Trajectories plus solver diagnostics for one OCP solve."""

    xs: np.ndarray
    us: np.ndarray
    status: SolverStatus
    kkt_residual: float = np.inf
    iterations: int = 0
    prepare_time: float = 0.0
    feedback_time: float = 0.0
    total_time: float = 0.0
    cost: float = np.nan
    merit_history: list = field(default_factory=list)
    qp: QpSolution | None = None

    def copy(self) -> "Solution":
        return replace(self, xs=self.xs.copy(), us=self.us.copy(),
                       merit_history=list(self.merit_history))


def initial_guess(ocp: OcpProblem, x0: np.ndarray) -> Solution:
    """Zero-input rollout from x0 as a cold-start guess."""
    N = ocp.N
    us = np.zeros((N, ocp.dynamics.n_u))
    xs = ocp.dynamics.rollout(np.asarray(x0, dtype=np.float64), us, ocp.grid.dts)
    return Solution(xs=xs, us=us, status=SolverStatus.MAX_ITER)


def shift_warm_start(prev: Solution, grid) -> Solution:
    """Receding-horizon shift: drop the first node, duplicate the last state,
    append a zero input."""
    xs = np.empty_like(prev.xs)
    us = np.empty_like(prev.us)
    xs[:-1] = prev.xs[1:]
    xs[-1] = prev.xs[-1]
    us[:-1] = prev.us[1:]
    us[-1] = 0.0
    return Solution(xs=xs, us=us, status=prev.status)


# ---------------------------------------------------------------------------
# linearization
# ---------------------------------------------------------------------------

def linearize(ocp: OcpProblem, guess: Solution,
              lm_reg: float = 1e-8) -> QpData:
    """Build the QP subproblem around the guess trajectory.

    Sensitivities are exact derivatives of the RK4 shooting map; the cost
    blocks are Gauss-Newton with Levenberg-Marquardt damping, and the input
    Hessian is floored at 1e-8. Bounds are shifted into delta space.
    """
    xs, us = guess.xs, guess.us
    N = ocp.N
    grid = ocp.grid
    if xs.shape != (N + 1, ocp.dynamics.n_x) or us.shape != (N, ocp.dynamics.n_u):
        raise ValueError("guess dimensions do not match the grid")

    As, Bs, fs = ocp.dynamics.linearize_horizon(xs, us, grid.dts)
    ds = fs - xs[1:]

    cost = ocp.cost
    scaling = cost.scaling_for(N)
    from .ocp import _cost_derivs_kernel
    qx, Qh, ru, Rh = _cost_derivs_kernel(xs, us, cost.target, cost.Q, cost.R,
                                         cost.Qf, scaling, cost.variant_code,
                                         cost.energy_weight, cost.packed_model())
    n_x = ocp.dynamics.n_x
    n_u = ocp.dynamics.n_u
    Qh += lm_reg * np.eye(n_x)[None, :, :]
    Rh = np.maximum(Rh, 1e-8) + lm_reg * np.eye(n_u)[None, :, :]
    Sh = np.zeros((N, n_u, n_x))

    b = ocp.bounds
    lbu = np.broadcast_to(b.u_lo, (N, n_u)) - us
    ubu = np.broadcast_to(b.u_hi, (N, n_u)) - us
    lbx = np.empty((N + 1, n_x))
    ubx = np.empty((N + 1, n_x))
    lbx[:] = b.x_lo[None, :] - xs
    ubx[:] = b.x_hi[None, :] - xs
    lbx[N] = np.maximum(b.x_lo, b.xf_lo) - xs[N]
    ubx[N] = np.minimum(b.x_hi, b.xf_hi) - xs[N]
    return QpData(As=As, Bs=Bs, ds=ds, Qh=Qh, qx=qx, Rh=Rh, ru=ru, Sh=Sh,
                  lbu=lbu, ubu=ubu, lbx=lbx, ubx=ubx)


def _constraint_violation(ocp: OcpProblem, xs, us, x0) -> float:
    fs = ocp.dynamics.shoot(xs, us, ocp.grid.dts)
    viol = float(np.sum(np.abs(fs - xs[1:])))
    viol += float(np.sum(np.abs(x0 - xs[0])))
    return viol


def _nlp_kkt(qp: QpData, sol: QpSolution | None, dx0) -> float:
    """Stationarity/feasibility residual of the NLP at the linearization
    point, using the multipliers of the last QP solve."""
    N, n_x, n_u = qp.Bs.shape
    kkt = float(np.abs(qp.ds).max()) if N > 0 else 0.0
    kkt = max(kkt, float(np.abs(dx0).max()))
    if sol is None:
        lam = np.zeros((N + 1, n_x))
        zul = zuu = np.zeros((N, n_u))
        zxl = zxu = np.zeros((N + 1, n_x))
    else:
        lam, zul, zuu, zxl, zxu = sol.lam, sol.zul, sol.zuu, sol.zxl, sol.zxu
    for n in range(N + 1):
        g = qp.qx[n].copy()
        if n < N:
            g += qp.As[n].T @ lam[n + 1]
        g -= lam[n]
        g -= np.where(np.isfinite(qp.lbx[n]), zxl[n], 0.0)
        g += np.where(np.isfinite(qp.ubx[n]), zxu[n], 0.0)
        kkt = max(kkt, float(np.abs(g).max()))
        for i in range(n_x):
            if n > 0 and np.isfinite(qp.lbx[n, i]):
                kkt = max(kkt, abs(zxl[n, i] * qp.lbx[n, i]))
            if n > 0 and np.isfinite(qp.ubx[n, i]):
                kkt = max(kkt, abs(zxu[n, i] * qp.ubx[n, i]))
    for n in range(N):
        g = qp.ru[n] + qp.Bs[n].T @ lam[n + 1]
        g -= np.where(np.isfinite(qp.lbu[n]), zul[n], 0.0)
        g += np.where(np.isfinite(qp.ubu[n]), zuu[n], 0.0)
        kkt = max(kkt, float(np.abs(g).max()))
        # bound complementarity in delta space (current point has delta 0)
        for j in range(n_u):
            if np.isfinite(qp.lbu[n, j]):
                kkt = max(kkt, abs(zul[n, j] * qp.lbu[n, j]))
            if np.isfinite(qp.ubu[n, j]):
                kkt = max(kkt, abs(zuu[n, j] * qp.ubu[n, j]))
    return kkt


# ---------------------------------------------------------------------------
# full SQP with L1 merit line search
# ---------------------------------------------------------------------------

def sqp_solve(ocp: OcpProblem, x0: np.ndarray, guess: Solution | None = None,
              settings: SolverSettings | None = None) -> Solution:
    """Full SQP: linearize, solve the structured QP, globalize with a
    backtracking Armijo search on an L1 merit function."""
    if settings is None:
        settings = SolverSettings(backend=SQP)
    x0 = np.asarray(x0, dtype=np.float64)
    if guess is None:
        guess = initial_guess(ocp, x0)
    xs = guess.xs.copy()
    us = guess.us.copy()

    t_start = time.perf_counter()
    sol = Solution(xs=xs, us=us, status=SolverStatus.MAX_ITER)
    if settings.max_iter == 0:
        sol.total_time = time.perf_counter() - t_start
        return sol

    lm = settings.levenberg_marquardt
    nu_pen = 10.0
    qp_sol: QpSolution | None = None
    qp_tol = min(settings.qp_tol, 0.01 * settings.kkt_tol)
    merit_history: list[float] = []
    iters = 0
    status = SolverStatus.MAX_ITER

    qp = linearize(ocp, sol, lm)
    while True:
        dx0 = x0 - sol.xs[0]
        kkt = _nlp_kkt(qp, qp_sol, dx0)
        if kkt <= settings.kkt_tol:
            status = SolverStatus.CONVERGED
            break
        if iters >= settings.max_iter:
            status = SolverStatus.MAX_ITER
            break
        if time.perf_counter() - t_start > settings.max_solve_time:
            status = SolverStatus.TIMEOUT
            break

        qp_sol = qp_solve(qp, dx0, tol=qp_tol, max_iter=settings.qp_max_iter,
                          tau_frac=settings.qp_tau_frac)
        if qp_sol.status == QpStatus.INFEASIBLE or \
                not (np.isfinite(qp_sol.dxs).all() and np.isfinite(qp_sol.dus).all()):
            status = SolverStatus.INFEASIBLE
            break

        nu_pen = max(nu_pen, 2.0 * float(np.abs(qp_sol.lam).max()))
        cost0 = ocp.total_cost(sol.xs, sol.us)
        viol0 = _constraint_violation(ocp, sol.xs, sol.us, x0)
        merit0 = cost0 + nu_pen * viol0
        # directional derivative bound for the Armijo condition
        grad_dot = float(np.sum(qp.qx * qp_sol.dxs) + np.sum(qp.ru * qp_sol.dus))
        ddir = grad_dot - nu_pen * viol0

        alpha = 1.0
        accepted = False
        while alpha >= settings.line_search_min_step:
            xs_try = sol.xs + alpha * qp_sol.dxs
            us_try = sol.us + alpha * qp_sol.dus
            merit_try = ocp.total_cost(xs_try, us_try) \
                + nu_pen * _constraint_violation(ocp, xs_try, us_try, x0)
            if merit_try <= merit0 + settings.line_search_c1 * alpha * min(ddir, 0.0):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            # stall: escalate damping and retry once per level
            lm *= 10.0
            if lm > 1e6:
                status = SolverStatus.MAX_ITER
                break
            qp = linearize(ocp, sol, lm)
            continue

        sol.xs = xs_try
        sol.us = us_try
        iters += 1
        merit_history.append(merit_try)
        qp = linearize(ocp, sol, lm)

    sol.status = status
    sol.kkt_residual = _nlp_kkt(qp, qp_sol, x0 - sol.xs[0])
    sol.iterations = iters
    sol.cost = ocp.total_cost(sol.xs, sol.us)
    sol.merit_history = merit_history
    sol.qp = qp_sol
    sol.total_time = time.perf_counter() - t_start
    return sol


# ---------------------------------------------------------------------------
# real-time iteration
# ---------------------------------------------------------------------------

@dataclass
class RtiPrepared:
    """State-independent work of one SQP iteration, cached for the feedback
    phase: the linearization point and the assembled QP."""

    ocp: OcpProblem
    qp: QpData
    xs: np.ndarray
    us: np.ndarray
    warm: QpSolution | None
    prepare_time: float


def rti_prepare(ocp: OcpProblem, guess: Solution,
                settings: SolverSettings | None = None) -> RtiPrepared:
    """Preparation phase: everything that does not need the measured state
    (sensitivities, cost expansion, bound shifts)."""
    if settings is None:
        settings = SolverSettings()
    t0 = time.perf_counter()
    qp = linearize(ocp, guess, settings.levenberg_marquardt)
    return RtiPrepared(ocp=ocp, qp=qp, xs=guess.xs.copy(), us=guess.us.copy(),
                       warm=guess.qp, prepare_time=time.perf_counter() - t0)


def rti_feedback(prepared: RtiPrepared, x0: np.ndarray,
                 settings: SolverSettings | None = None) -> Solution:
    """Feedback phase: inject the measured state, finish the QP solve and
    apply the full step (single SQP iteration, no line search)."""
    if settings is None:
        settings = SolverSettings()
    t0 = time.perf_counter()
    x0 = np.asarray(x0, dtype=np.float64)
    dx0 = x0 - prepared.xs[0]
    qp_sol = qp_solve(prepared.qp, dx0, tol=settings.qp_tol,
                      max_iter=settings.qp_max_iter,
                      tau_frac=settings.qp_tau_frac, warm=prepared.warm)
    fb_time = time.perf_counter() - t0
    bad_step = not (np.isfinite(qp_sol.dxs).all() and np.isfinite(qp_sol.dus).all())
    if qp_sol.status == QpStatus.INFEASIBLE or bad_step:
        return Solution(xs=prepared.xs.copy(), us=prepared.us.copy(),
                        status=SolverStatus.INFEASIBLE, kkt_residual=np.inf,
                        prepare_time=prepared.prepare_time,
                        feedback_time=fb_time,
                        total_time=prepared.prepare_time + fb_time)
    xs = prepared.xs + qp_sol.dxs
    us = prepared.us + qp_sol.dus
    return Solution(xs=xs, us=us, status=SolverStatus.CONVERGED,
                    kkt_residual=qp_sol.kkt, iterations=1,
                    prepare_time=prepared.prepare_time, feedback_time=fb_time,
                    total_time=prepared.prepare_time + fb_time, qp=qp_sol)


# ---------------------------------------------------------------------------
# DDP / iLQR backend
# ---------------------------------------------------------------------------

@njit(cache=True)
def _ddp_backward(As, Bs, qx, Qh, ru, Rh, lm):
    """Gauss-Newton value recursion; returns gains, feedforward and the
    expected cost decrease terms. ok=False when a regularized input Hessian
    fails positivity."""
    N, nx, nu = Bs.shape
    Ks = np.empty((N, nu, nx))
    ks = np.empty((N, nu))
    Vx = qx[N].copy()
    Vxx = Qh[N].copy()
    dv1 = 0.0
    dv2 = 0.0
    for n in range(N - 1, -1, -1):
        A = As[n]
        B = Bs[n]
        Qx = qx[n] + A.T @ Vx
        Qu = ru[n] + B.T @ Vx
        VxxA = Vxx @ A
        Qxx = Qh[n] + A.T @ VxxA
        Qux = B.T @ VxxA
        Quu = Rh[n] + B.T @ (Vxx @ B)
        for j in range(nu):
            Quu[j, j] += lm
        # positivity check via Cholesky
        ok = True
        L = np.zeros((nu, nu))
        for i in range(nu):
            s = Quu[i, i]
            for k in range(i):
                s -= L[i, k] * L[i, k]
            if s <= 0.0:
                ok = False
                break
            L[i, i] = np.sqrt(s)
            for j in range(i + 1, nu):
                t = Quu[j, i]
                for k in range(i):
                    t -= L[j, k] * L[i, k]
                L[j, i] = t / L[i, i]
        if not ok:
            return Ks, ks, dv1, dv2, False
        k_n = -np.linalg.solve(Quu, Qu)
        K_n = -np.linalg.solve(Quu, Qux)
        Ks[n] = K_n
        ks[n] = k_n
        Vx = Qx + K_n.T @ (Quu @ k_n) + K_n.T @ Qu + Qux.T @ k_n
        Vxx = Qxx + K_n.T @ (Quu @ K_n) + K_n.T @ Qux + Qux.T @ K_n
        Vxx = 0.5 * (Vxx + Vxx.T)
        dv1 += k_n @ Qu
        dv2 += 0.5 * k_n @ (Quu @ k_n)
    return Ks, ks, dv1, dv2, True


def ddp_solve(ocp: OcpProblem, x0: np.ndarray, guess: Solution | None = None,
              settings: SolverSettings | None = None) -> Solution:
    """iLQR-style DDP: Gauss-Newton backward pass with Levenberg-Marquardt
    damping, line-searched forward rollout with input clamping."""
    if settings is None:
        settings = SolverSettings(backend=DDP)
    x0 = np.asarray(x0, dtype=np.float64)
    if guess is None:
        guess = initial_guess(ocp, x0)
    t_start = time.perf_counter()

    dyn = ocp.dynamics
    dts = ocp.grid.dts
    b = ocp.bounds
    u_lo, u_hi = float(b.u_lo), float(b.u_hi)
    us = np.clip(guess.us.copy(), u_lo, u_hi)
    xs = dyn.rollout(x0, us, dts)
    cost = ocp.total_cost(xs, us)

    sol = Solution(xs=xs, us=us, status=SolverStatus.MAX_ITER, cost=cost)
    if settings.max_iter == 0:
        sol.total_time = time.perf_counter() - t_start
        return sol

    from .ocp import _cost_derivs_kernel
    cfg = ocp.cost
    scaling = cfg.scaling_for(ocp.N)
    lm = max(settings.levenberg_marquardt, 1e-8)
    status = SolverStatus.MAX_ITER
    iters = 0
    grad_norm = np.inf
    merit_history = [cost]

    while iters < settings.max_iter:
        if time.perf_counter() - t_start > settings.max_solve_time:
            status = SolverStatus.TIMEOUT
            break
        As, Bs, _ = dyn.linearize_horizon(xs, us, dts)
        qx, Qh, ru, Rh = _cost_derivs_kernel(xs, us, cfg.target, cfg.Q, cfg.R,
                                             cfg.Qf, scaling, cfg.variant_code,
                                             cfg.energy_weight,
                                             cfg.packed_model())
        Ks, ks, dv1, dv2, ok = _ddp_backward(As, Bs, qx, Qh, ru, Rh, lm)
        if not ok:
            lm *= 10.0
            if lm > 1e8:
                break
            continue
        grad_norm = float(np.abs(ks).max())

        improved = False
        alpha = 1.0
        for _ in range(12):
            xs_try, us_try = dyn.rollout_feedback(x0, xs, us, Ks, ks, alpha,
                                                  dts, u_lo, u_hi)
            cost_try = ocp.total_cost(xs_try, us_try)
            if cost_try < cost:
                improved = True
                break
            alpha *= 0.5
        if not improved:
            lm *= 10.0
            if lm > 1e8:
                break
            continue

        decrease = cost - cost_try
        xs, us, cost = xs_try, us_try, cost_try
        iters += 1
        merit_history.append(cost)
        lm = max(lm * 0.5, 1e-8)
        if decrease < settings.kkt_tol * max(1.0, abs(cost)):
            status = SolverStatus.CONVERGED
            break

    if iters >= settings.max_iter:
        status = SolverStatus.MAX_ITER
    sol.xs, sol.us = xs, us
    sol.status = status
    sol.cost = cost
    sol.kkt_residual = grad_norm
    sol.iterations = iters
    sol.merit_history = merit_history
    sol.total_time = time.perf_counter() - t_start
    return sol


def solve(ocp: OcpProblem, x0: np.ndarray, guess: Solution | None = None,
          settings: SolverSettings | None = None) -> Solution:
    """Dispatch to the configured backend (RTI runs prepare + feedback)."""
    if settings is None:
        settings = SolverSettings()
    if settings.backend == DDP:
        return ddp_solve(ocp, x0, guess, settings)
    if settings.backend == SQP_RTI:
        if guess is None:
            guess = initial_guess(ocp, np.asarray(x0, dtype=np.float64))
        prepared = rti_prepare(ocp, guess, settings)
        return rti_feedback(prepared, x0, settings)
    return sqp_solve(ocp, x0, guess, settings)
