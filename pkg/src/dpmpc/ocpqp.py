"""Box-constrained QP solver for optimal-control-structured problems.

The QP carries the block-banded structure of a multiple-shooting OCP:
per-node Hessian blocks, affine dynamics couplings and box bounds on inputs
and states. It is solved with a primal-dual interior-point method whose
Newton systems are factorized by a backward Riccati recursion, so each
iteration costs O(N) small-matrix operations instead of a dense
factorization. A Mehrotra predictor-corrector step and a fraction-to-boundary
rule give the usual fast, conservative path-following behaviour.

All quantities live in delta space: bounds are already shifted by the current
trajectory, and the solution is the step to add to it. The inner loops are
written out elementwise on purpose: the blocks are 4x4 and smaller, where
BLAS/LAPACK call overhead would dominate the actual arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from numba import njit


class QpStatus(Enum):
    CONVERGED = 0
    MAX_ITER = 1
    INFEASIBLE = 2


# width below which an input box degenerates to an equality and the variable
# is pinned instead of handled by the barrier
_PIN_WIDTH = 1e-12


@dataclass
class QpData:
    """OCP-structured QP data (delta space).

    Shapes: As (N,nx,nx), Bs (N,nx,nu), ds (N,nx) dynamics defects,
    Qh/qx over nodes 0..N, Rh/ru/Sh over nodes 0..N-1, bounds lbu/ubu
    (N,nu) and lbx/ubx (N+1,nx) with +-inf marking absent bounds.
    """

    As: np.ndarray
    Bs: np.ndarray
    ds: np.ndarray
    Qh: np.ndarray
    qx: np.ndarray
    Rh: np.ndarray
    ru: np.ndarray
    Sh: np.ndarray
    lbu: np.ndarray
    ubu: np.ndarray
    lbx: np.ndarray
    ubx: np.ndarray

    @property
    def N(self) -> int:
        return self.As.shape[0]

    @property
    def n_x(self) -> int:
        return self.As.shape[1]

    @property
    def n_u(self) -> int:
        return self.Bs.shape[2]


@dataclass
class QpSolution:
    dxs: np.ndarray
    dus: np.ndarray
    lam: np.ndarray          # dynamics/initial-state multipliers, node 0..N
    zul: np.ndarray          # bound duals, input lower/upper
    zuu: np.ndarray
    zxl: np.ndarray          # bound duals, state lower/upper
    zxu: np.ndarray
    kkt: float
    iterations: int
    status: QpStatus


@njit(cache=True)
def _riccati_factor(As, Bs, Qb, Rb, Sh, pinned, Ps, Ks, Huxs, Hiuu):
    """Backward Riccati factorization for the barrier-weighted Newton system.

    Fills Ps (cost-to-go matrices), feedback gains Ks and, for reuse by the
    right-hand-side passes, the coupling blocks Huxs and the inverted input
    Hessians Hiuu. Pinned input rows are replaced by identity rows so the
    corresponding component is forced to its fixed value.
    """
    N = Bs.shape[0]
    nx = Bs.shape[1]
    nu = Bs.shape[2]
    PA = np.empty((nx, nx))
    PB = np.empty((nx, nu))
    Huu = np.empty((nu, nu))
    Pw = np.empty((nx, nx))
    for i in range(nx):
        for j in range(nx):
            Ps[N, i, j] = Qb[N, i, j]
    for n in range(N - 1, -1, -1):
        A = As[n]
        B = Bs[n]
        P = Ps[n + 1]
        for i in range(nx):
            for j in range(nx):
                s = 0.0
                for k in range(nx):
                    s += P[i, k] * A[k, j]
                PA[i, j] = s
        for i in range(nx):
            for j in range(nu):
                s = 0.0
                for k in range(nx):
                    s += P[i, k] * B[k, j]
                PB[i, j] = s
        for i in range(nu):
            for j in range(nu):
                s = Rb[n, i, j]
                for k in range(nx):
                    s += B[k, i] * PB[k, j]
                Huu[i, j] = s
        for i in range(nu):
            for j in range(nx):
                s = Sh[n, i, j]
                for k in range(nx):
                    s += B[k, i] * PA[k, j]
                Huxs[n, i, j] = s
        for j in range(nu):
            if pinned[n, j]:
                for i in range(nu):
                    Huu[j, i] = 0.0
                Huu[j, j] = 1.0
                for i in range(nx):
                    Huxs[n, j, i] = 0.0
        if nu == 1:
            Hiuu[n, 0, 0] = 1.0 / Huu[0, 0]
        elif nu == 2:
            det = Huu[0, 0] * Huu[1, 1] - Huu[0, 1] * Huu[1, 0]
            Hiuu[n, 0, 0] = Huu[1, 1] / det
            Hiuu[n, 0, 1] = -Huu[0, 1] / det
            Hiuu[n, 1, 0] = -Huu[1, 0] / det
            Hiuu[n, 1, 1] = Huu[0, 0] / det
        else:
            Hiuu[n] = np.linalg.inv(Huu)
        for i in range(nu):
            for j in range(nx):
                s = 0.0
                for k in range(nu):
                    s += Hiuu[n, i, k] * Huxs[n, k, j]
                Ks[n, i, j] = -s
        for i in range(nx):
            for j in range(nx):
                s = Qb[n, i, j]
                for k in range(nx):
                    s += A[k, i] * PA[k, j]
                for k in range(nu):
                    s += Huxs[n, k, i] * Ks[n, k, j]
                Pw[i, j] = s
        for i in range(nx):
            for j in range(nx):
                Ps[n, i, j] = 0.5 * (Pw[i, j] + Pw[j, i])


@njit(cache=True)
def _riccati_rhs(As, Bs, cs, qb, rb, Ps, Ks, Huxs, Hiuu, pinned, pinval,
                 dx0, dxs, dus, dlam):
    """Backward/forward pass for one right-hand side, reusing the
    factorization; writes the direction into dxs/dus/dlam."""
    N = Bs.shape[0]
    nx = Bs.shape[1]
    nu = Bs.shape[2]
    ps = np.empty((N + 1, nx))
    ks = np.empty((N, nu))
    tmp = np.empty(nx)
    hu = np.empty(nu)
    for i in range(nx):
        ps[N, i] = qb[N, i]
    for n in range(N - 1, -1, -1):
        P = Ps[n + 1]
        for i in range(nx):
            s = ps[n + 1, i]
            for k in range(nx):
                s += P[i, k] * cs[n, k]
            tmp[i] = s
        for i in range(nu):
            s = rb[n, i]
            for k in range(nx):
                s += Bs[n, k, i] * tmp[k]
            hu[i] = s
        for j in range(nu):
            if pinned[n, j]:
                hu[j] = -pinval[n, j]
        for i in range(nu):
            s = 0.0
            for k in range(nu):
                s += Hiuu[n, i, k] * hu[k]
            ks[n, i] = -s
        for i in range(nx):
            s = qb[n, i]
            for k in range(nx):
                s += As[n, k, i] * tmp[k]
            for k in range(nu):
                s += Huxs[n, k, i] * ks[n, k]
            ps[n, i] = s
    for i in range(nx):
        dxs[0, i] = dx0[i]
    for n in range(N):
        for i in range(nu):
            s = ks[n, i]
            for k in range(nx):
                s += Ks[n, i, k] * dxs[n, k]
            dus[n, i] = s
        for i in range(nx):
            s = cs[n, i]
            for k in range(nx):
                s += As[n, i, k] * dxs[n, k]
            for k in range(nu):
                s += Bs[n, i, k] * dus[n, k]
            dxs[n + 1, i] = s
        for i in range(nx):
            s = ps[n, i]
            for k in range(nx):
                s += Ps[n, i, k] * dxs[n, k]
            dlam[n, i] = s
    for i in range(nx):
        s = ps[N, i]
        for k in range(nx):
            s += Ps[N, i, k] * dxs[N, k]
        dlam[N, i] = s


@njit(cache=True)
def _ip_solve(As, Bs, ds, Qh, qx, Rh, ru, Sh, lbu, ubu, lbx, ubx, dx0,
              tol, max_iter, tau_frac,
              xs, us, lam, sul, suu, zul, zuu, sxl, sxu, zxl, zxu):
    """Primal-dual interior point on the OCP-structured box QP.

    The working arrays (xs .. zxu) carry the start point and are updated in
    place; infinite bounds are skipped, zero-width input boxes are pinned.
    Returns (kkt, iterations, status).
    """
    N = Bs.shape[0]
    nx = Bs.shape[1]
    nu = Bs.shape[2]

    u_has_l = np.isfinite(lbu)
    u_has_u = np.isfinite(ubu)
    x_has_l = np.isfinite(lbx)
    x_has_u = np.isfinite(ubx)
    pinned = np.zeros((N, nu), dtype=np.bool_)
    pinval = np.zeros((N, nu))
    for n in range(N):
        for j in range(nu):
            if u_has_l[n, j] and u_has_u[n, j]:
                width = ubu[n, j] - lbu[n, j]
                if width < 0.0:
                    return np.inf, 0, 2
                if width <= _PIN_WIDTH:
                    pinned[n, j] = True
                    pinval[n, j] = 0.5 * (lbu[n, j] + ubu[n, j])
                    us[n, j] = pinval[n, j]
                    u_has_l[n, j] = False
                    u_has_u[n, j] = False
    for n in range(N + 1):
        for i in range(nx):
            if x_has_l[n, i] and x_has_u[n, i] and ubx[n, i] - lbx[n, i] < 0.0:
                return np.inf, 0, 2
    # state bounds at node 0 are meaningless (x0 is fixed by the equality)
    for i in range(nx):
        x_has_l[0, i] = False
        x_has_u[0, i] = False

    # strictly interior slack/dual start around the supplied primal point
    s_min = 1e-2
    z_min = 1e-2
    n_bnd = 0
    for n in range(N):
        for j in range(nu):
            if u_has_l[n, j]:
                sul[n, j] = max(us[n, j] - lbu[n, j], s_min)
                zul[n, j] = max(zul[n, j], z_min)
                n_bnd += 1
            if u_has_u[n, j]:
                suu[n, j] = max(ubu[n, j] - us[n, j], s_min)
                zuu[n, j] = max(zuu[n, j], z_min)
                n_bnd += 1
    for n in range(N + 1):
        for i in range(nx):
            if x_has_l[n, i]:
                sxl[n, i] = max(xs[n, i] - lbx[n, i], s_min)
                zxl[n, i] = max(zxl[n, i], z_min)
                n_bnd += 1
            if x_has_u[n, i]:
                sxu[n, i] = max(ubx[n, i] - xs[n, i], s_min)
                zxu[n, i] = max(zxu[n, i], z_min)
                n_bnd += 1

    r_q = np.empty((N + 1, nx))
    r_r = np.empty((N, nu))
    r_dyn = np.empty((N, nx))
    r_ini = np.empty(nx)
    Qb = np.empty_like(Qh)
    qb = np.empty_like(qx)
    Rb = np.empty_like(Rh)
    rb = np.empty_like(ru)
    Ps = np.empty((N + 1, nx, nx))
    Ks = np.empty((N, nu, nx))
    Huxs = np.empty((N, nu, nx))
    Hiuu = np.empty((N, nu, nu))
    dxs = np.empty((N + 1, nx))
    dus = np.empty((N, nu))
    dlam = np.empty((N + 1, nx))
    dxs_a = np.empty((N + 1, nx))
    dus_a = np.empty((N, nu))
    dlam_a = np.empty((N + 1, nx))
    dsul = np.zeros((N, nu))
    dzul = np.zeros((N, nu))
    dsuu = np.zeros((N, nu))
    dzuu = np.zeros((N, nu))
    dsxl = np.zeros((N + 1, nx))
    dzxl = np.zeros((N + 1, nx))
    dsxu = np.zeros((N + 1, nx))
    dzxu = np.zeros((N + 1, nx))

    kkt = np.inf
    for it in range(max_iter):
        # --- residuals --------------------------------------------------
        for i in range(nx):
            r_ini[i] = dx0[i] - xs[0, i]
        for n in range(N):
            for i in range(nx):
                s = ds[n, i] - xs[n + 1, i]
                for k in range(nx):
                    s += As[n, i, k] * xs[n, k]
                for k in range(nu):
                    s += Bs[n, i, k] * us[n, k]
                r_dyn[n, i] = s
        for n in range(N + 1):
            for i in range(nx):
                s = qx[n, i] - lam[n, i]
                for k in range(nx):
                    s += Qh[n, i, k] * xs[n, k]
                if n < N:
                    for k in range(nu):
                        s += Sh[n, k, i] * us[n, k]
                    for k in range(nx):
                        s += As[n, k, i] * lam[n + 1, k]
                if x_has_l[n, i]:
                    s -= zxl[n, i]
                if x_has_u[n, i]:
                    s += zxu[n, i]
                r_q[n, i] = s
        for n in range(N):
            for j in range(nu):
                if pinned[n, j]:
                    r_r[n, j] = 0.0
                    continue
                s = ru[n, j]
                for k in range(nu):
                    s += Rh[n, j, k] * us[n, k]
                for k in range(nx):
                    s += Sh[n, j, k] * xs[n, k]
                for k in range(nx):
                    s += Bs[n, k, j] * lam[n + 1, k]
                if u_has_l[n, j]:
                    s -= zul[n, j]
                if u_has_u[n, j]:
                    s += zuu[n, j]
                r_r[n, j] = s

        kkt = np.abs(r_ini).max()
        kkt = max(kkt, np.abs(r_dyn).max())
        kkt = max(kkt, np.abs(r_q).max())
        kkt = max(kkt, np.abs(r_r).max())
        mu_sum = 0.0
        for n in range(N):
            for j in range(nu):
                if u_has_l[n, j]:
                    kkt = max(kkt, abs(sul[n, j] - (us[n, j] - lbu[n, j])),
                              sul[n, j] * zul[n, j])
                    mu_sum += sul[n, j] * zul[n, j]
                if u_has_u[n, j]:
                    kkt = max(kkt, abs(suu[n, j] - (ubu[n, j] - us[n, j])),
                              suu[n, j] * zuu[n, j])
                    mu_sum += suu[n, j] * zuu[n, j]
        for n in range(N + 1):
            for i in range(nx):
                if x_has_l[n, i]:
                    kkt = max(kkt, abs(sxl[n, i] - (xs[n, i] - lbx[n, i])),
                              sxl[n, i] * zxl[n, i])
                    mu_sum += sxl[n, i] * zxl[n, i]
                if x_has_u[n, i]:
                    kkt = max(kkt, abs(sxu[n, i] - (ubx[n, i] - xs[n, i])),
                              sxu[n, i] * zxu[n, i])
                    mu_sum += sxu[n, i] * zxu[n, i]
        if kkt <= tol:
            return kkt, it, 0
        mu = mu_sum / n_bnd if n_bnd > 0 else 0.0

        # --- barrier-weighted Hessian blocks, factorized once -----------
        for n in range(N + 1):
            for i in range(nx):
                for j in range(nx):
                    Qb[n, i, j] = Qh[n, i, j]
                w = 0.0
                if x_has_l[n, i]:
                    w += zxl[n, i] / sxl[n, i]
                if x_has_u[n, i]:
                    w += zxu[n, i] / sxu[n, i]
                Qb[n, i, i] = Qh[n, i, i] + w
        for n in range(N):
            for j in range(nu):
                for k in range(nu):
                    Rb[n, j, k] = Rh[n, j, k]
                w = 0.0
                if u_has_l[n, j]:
                    w += zul[n, j] / sul[n, j]
                if u_has_u[n, j]:
                    w += zuu[n, j] / suu[n, j]
                Rb[n, j, j] = Rh[n, j, j] + w
        _riccati_factor(As, Bs, Qb, Rb, Sh, pinned, Ps, Ks, Huxs, Hiuu)

        sigma_mu = 0.0
        for sweep in range(2):
            # condensed gradients; sweep 0 uses the plain complementarity
            # products (affine predictor), sweep 1 the recentred Mehrotra ones
            for n in range(N + 1):
                for i in range(nx):
                    g = r_q[n, i]
                    if x_has_l[n, i]:
                        r_s = sxl[n, i] - (xs[n, i] - lbx[n, i])
                        rc = sxl[n, i] * zxl[n, i]
                        if sweep == 1:
                            rc += dsxl[n, i] * dzxl[n, i] - sigma_mu
                        g += (rc - zxl[n, i] * r_s) / sxl[n, i]
                    if x_has_u[n, i]:
                        r_s = sxu[n, i] - (ubx[n, i] - xs[n, i])
                        rc = sxu[n, i] * zxu[n, i]
                        if sweep == 1:
                            rc += dsxu[n, i] * dzxu[n, i] - sigma_mu
                        g -= (rc - zxu[n, i] * r_s) / sxu[n, i]
                    qb[n, i] = g
            for n in range(N):
                for j in range(nu):
                    g = r_r[n, j]
                    if u_has_l[n, j]:
                        r_s = sul[n, j] - (us[n, j] - lbu[n, j])
                        rc = sul[n, j] * zul[n, j]
                        if sweep == 1:
                            rc += dsul[n, j] * dzul[n, j] - sigma_mu
                        g += (rc - zul[n, j] * r_s) / sul[n, j]
                    if u_has_u[n, j]:
                        r_s = suu[n, j] - (ubu[n, j] - us[n, j])
                        rc = suu[n, j] * zuu[n, j]
                        if sweep == 1:
                            rc += dsuu[n, j] * dzuu[n, j] - sigma_mu
                        g -= (rc - zuu[n, j] * r_s) / suu[n, j]
                    rb[n, j] = g

            if sweep == 0:
                _riccati_rhs(As, Bs, r_dyn, qb, rb, Ps, Ks, Huxs, Hiuu,
                             pinned, pinval, r_ini, dxs_a, dus_a, dlam_a)
                dxs_c, dus_c = dxs_a, dus_a
            else:
                _riccati_rhs(As, Bs, r_dyn, qb, rb, Ps, Ks, Huxs, Hiuu,
                             pinned, pinval, r_ini, dxs, dus, dlam)
                dxs_c, dus_c = dxs, dus

            # slack/dual directions for this sweep
            for n in range(N):
                for j in range(nu):
                    if u_has_l[n, j]:
                        r_s = sul[n, j] - (us[n, j] - lbu[n, j])
                        rc = sul[n, j] * zul[n, j]
                        if sweep == 1:
                            rc += dsul[n, j] * dzul[n, j] - sigma_mu
                        dsl = dus_c[n, j] - r_s
                        dzul[n, j] = (-rc - zul[n, j] * dsl) / sul[n, j]
                        dsul[n, j] = dsl
                    if u_has_u[n, j]:
                        r_s = suu[n, j] - (ubu[n, j] - us[n, j])
                        rc = suu[n, j] * zuu[n, j]
                        if sweep == 1:
                            rc += dsuu[n, j] * dzuu[n, j] - sigma_mu
                        dsu = -dus_c[n, j] - r_s
                        dzuu[n, j] = (-rc - zuu[n, j] * dsu) / suu[n, j]
                        dsuu[n, j] = dsu
            for n in range(N + 1):
                for i in range(nx):
                    if x_has_l[n, i]:
                        r_s = sxl[n, i] - (xs[n, i] - lbx[n, i])
                        rc = sxl[n, i] * zxl[n, i]
                        if sweep == 1:
                            rc += dsxl[n, i] * dzxl[n, i] - sigma_mu
                        dsl = dxs_c[n, i] - r_s
                        dzxl[n, i] = (-rc - zxl[n, i] * dsl) / sxl[n, i]
                        dsxl[n, i] = dsl
                    if x_has_u[n, i]:
                        r_s = sxu[n, i] - (ubx[n, i] - xs[n, i])
                        rc = sxu[n, i] * zxu[n, i]
                        if sweep == 1:
                            rc += dsxu[n, i] * dzxu[n, i] - sigma_mu
                        dsu = -dxs_c[n, i] - r_s
                        dzxu[n, i] = (-rc - zxu[n, i] * dsu) / sxu[n, i]
                        dsxu[n, i] = dsu

            if sweep == 0:
                if n_bnd == 0:
                    # no inequalities: the affine direction is the exact step
                    for n in range(N + 1):
                        for i in range(nx):
                            dxs[n, i] = dxs_a[n, i]
                            dlam[n, i] = dlam_a[n, i]
                    for n in range(N):
                        for j in range(nu):
                            dus[n, j] = dus_a[n, j]
                    break
                # largest feasible affine step and Mehrotra centering
                a = 1.0
                mu_aff = 0.0
                for n in range(N):
                    for j in range(nu):
                        if u_has_l[n, j]:
                            if dsul[n, j] < 0.0:
                                a = min(a, -sul[n, j] / dsul[n, j])
                            if dzul[n, j] < 0.0:
                                a = min(a, -zul[n, j] / dzul[n, j])
                        if u_has_u[n, j]:
                            if dsuu[n, j] < 0.0:
                                a = min(a, -suu[n, j] / dsuu[n, j])
                            if dzuu[n, j] < 0.0:
                                a = min(a, -zuu[n, j] / dzuu[n, j])
                for n in range(N + 1):
                    for i in range(nx):
                        if x_has_l[n, i]:
                            if dsxl[n, i] < 0.0:
                                a = min(a, -sxl[n, i] / dsxl[n, i])
                            if dzxl[n, i] < 0.0:
                                a = min(a, -zxl[n, i] / dzxl[n, i])
                        if x_has_u[n, i]:
                            if dsxu[n, i] < 0.0:
                                a = min(a, -sxu[n, i] / dsxu[n, i])
                            if dzxu[n, i] < 0.0:
                                a = min(a, -zxu[n, i] / dzxu[n, i])
                for n in range(N):
                    for j in range(nu):
                        if u_has_l[n, j]:
                            mu_aff += (sul[n, j] + a * dsul[n, j]) * (zul[n, j] + a * dzul[n, j])
                        if u_has_u[n, j]:
                            mu_aff += (suu[n, j] + a * dsuu[n, j]) * (zuu[n, j] + a * dzuu[n, j])
                for n in range(N + 1):
                    for i in range(nx):
                        if x_has_l[n, i]:
                            mu_aff += (sxl[n, i] + a * dsxl[n, i]) * (zxl[n, i] + a * dzxl[n, i])
                        if x_has_u[n, i]:
                            mu_aff += (sxu[n, i] + a * dsxu[n, i]) * (zxu[n, i] + a * dzxu[n, i])
                mu_aff /= n_bnd
                sigma = (mu_aff / mu) ** 3 if mu > 0.0 else 0.0
                sigma = min(max(sigma, 1e-8), 1.0)
                sigma_mu = sigma * mu

        # --- fraction-to-boundary step length and update -----------------
        alpha = 1.0
        for n in range(N):
            for j in range(nu):
                if u_has_l[n, j]:
                    if dsul[n, j] < 0.0:
                        alpha = min(alpha, -tau_frac * sul[n, j] / dsul[n, j])
                    if dzul[n, j] < 0.0:
                        alpha = min(alpha, -tau_frac * zul[n, j] / dzul[n, j])
                if u_has_u[n, j]:
                    if dsuu[n, j] < 0.0:
                        alpha = min(alpha, -tau_frac * suu[n, j] / dsuu[n, j])
                    if dzuu[n, j] < 0.0:
                        alpha = min(alpha, -tau_frac * zuu[n, j] / dzuu[n, j])
        for n in range(N + 1):
            for i in range(nx):
                if x_has_l[n, i]:
                    if dsxl[n, i] < 0.0:
                        alpha = min(alpha, -tau_frac * sxl[n, i] / dsxl[n, i])
                    if dzxl[n, i] < 0.0:
                        alpha = min(alpha, -tau_frac * zxl[n, i] / dzxl[n, i])
                if x_has_u[n, i]:
                    if dsxu[n, i] < 0.0:
                        alpha = min(alpha, -tau_frac * sxu[n, i] / dsxu[n, i])
                    if dzxu[n, i] < 0.0:
                        alpha = min(alpha, -tau_frac * zxu[n, i] / dzxu[n, i])

        for n in range(N + 1):
            for i in range(nx):
                xs[n, i] += alpha * dxs[n, i]
                lam[n, i] += alpha * dlam[n, i]
        for n in range(N):
            for j in range(nu):
                us[n, j] += alpha * dus[n, j]
                if u_has_l[n, j]:
                    sul[n, j] += alpha * dsul[n, j]
                    zul[n, j] += alpha * dzul[n, j]
                if u_has_u[n, j]:
                    suu[n, j] += alpha * dsuu[n, j]
                    zuu[n, j] += alpha * dzuu[n, j]
        for n in range(N + 1):
            for i in range(nx):
                if x_has_l[n, i]:
                    sxl[n, i] += alpha * dsxl[n, i]
                    zxl[n, i] += alpha * dzxl[n, i]
                if x_has_u[n, i]:
                    sxu[n, i] += alpha * dsxu[n, i]
                    zxu[n, i] += alpha * dzxu[n, i]

    return kkt, max_iter, 1


def qp_solve(qp: QpData, dx0: np.ndarray | None = None, tol: float = 1e-8,
             max_iter: int = 100, tau_frac: float = 0.95,
             warm: QpSolution | None = None) -> QpSolution:
    """Solve the OCP-structured box QP to KKT tolerance ``tol``.

    ``dx0`` is the initial-state constraint value (defaults to zero).
    An optional previous solution warm-starts the primal iterate.
    """
    N, nx, nu = qp.Bs.shape
    if dx0 is None:
        dx0 = np.zeros(nx)
    dx0 = np.asarray(dx0, dtype=np.float64)

    us = np.zeros((N, nu))
    lam = np.zeros((N + 1, nx))
    sul = np.ones((N, nu))
    suu = np.ones((N, nu))
    zul = np.zeros((N, nu))
    zuu = np.zeros((N, nu))
    sxl = np.ones((N + 1, nx))
    sxu = np.ones((N + 1, nx))
    zxl = np.zeros((N + 1, nx))
    zxu = np.zeros((N + 1, nx))
    if warm is not None:
        # bound duals carry the active set across solves, which is what
        # makes consecutive receding-horizon QPs cheap
        us[:] = warm.dus
        lam[:] = warm.lam
        zul[:] = warm.zul
        zuu[:] = warm.zuu
        zxl[:] = warm.zxl
        zxu[:] = warm.zxu
    # dynamics-feasible primal start
    xs = np.empty((N + 1, nx))
    xs[0] = dx0
    for n in range(N):
        xs[n + 1] = qp.As[n] @ xs[n] + qp.Bs[n] @ us[n] + qp.ds[n]

    kkt, iters, status = _ip_solve(
        qp.As, qp.Bs, qp.ds, qp.Qh, qp.qx, qp.Rh, qp.ru, qp.Sh,
        qp.lbu, qp.ubu, qp.lbx, qp.ubx, dx0,
        float(tol), int(max_iter), float(tau_frac),
        xs, us, lam, sul, suu, zul, zuu, sxl, sxu, zxl, zxu)

    return QpSolution(dxs=xs, dus=us, lam=lam, zul=zul, zuu=zuu,
                      zxl=zxl, zxu=zxu, kkt=float(kkt), iterations=int(iters),
                      status=QpStatus(status))
