"""Discrete-time finite-horizon optimal control problem for the swing-up task:
shooting grid, stage/terminal costs in all variants, box bounds, and the
discretized pendulum model used by the solvers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .dynamics import (
    ModelParams,
    _energy_gradient,
    _rk4_step,
    _rk4_step_jacobians,
    _total_energy,
    _wrap_angle,
    upright_state,
)

# placeholder parameter array for cost kernels when no model is attached
# (only the energy variant ever reads it, and that variant requires a model)
_NO_MODEL_PAR = np.ones(14)

QUADRATIC = "quadratic"
EMBEDDED_ANGLE = "embedded_angle"
ENERGY_TERMINAL = "energy_terminal"

COST_VARIANTS = (QUADRATIC, EMBEDDED_ANGLE, ENERGY_TERMINAL)
_VARIANT_CODE = {QUADRATIC: 0, EMBEDDED_ANGLE: 1, ENERGY_TERMINAL: 2}


# ---------------------------------------------------------------------------
# shooting grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShootingGrid:
    """Multiple-shooting time grid: N intervals covering [0, T]."""

    N: int
    dts: np.ndarray
    T: float

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("grid needs at least one interval")
        if np.any(self.dts <= 0.0):
            raise ValueError("all interval lengths must be positive")
        if abs(float(np.sum(self.dts)) - self.T) > 1e-12 * max(1.0, self.T):
            raise ValueError("interval lengths must sum to the horizon")


def build_grid(N: int, T: float, nonuniform: bool = False) -> ShootingGrid:
    """Build a uniform grid (dt = T/N) or one whose intervals grow linearly
    with the node index while still summing to T."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if T <= 0.0:
        raise ValueError("T must be positive")
    if nonuniform:
        c = 2.0 * T / (N * (N + 1))
        dts = c * np.arange(1, N + 1, dtype=np.float64)
    else:
        dts = np.full(N, T / N)
    return ShootingGrid(N=N, dts=dts, T=float(T))


# ---------------------------------------------------------------------------
# cost configuration
# ---------------------------------------------------------------------------

@dataclass
class CostConfig:
    """Weights and target of the tracking cost.

    ``Q`` and ``Qf`` are diagonal state weights (angles, then velocities),
    ``R`` the scalar weight on the actuated torque. ``variant`` selects the
    residual: plain state difference, the 2pi-invariant cos/sin embedding of
    the angles, or the state variant with an energy-based terminal term.
    ``node_scaling`` multiplies the stage cost per node.
    """

    Q: np.ndarray
    R: float
    Qf: np.ndarray
    target: np.ndarray
    variant: str = QUADRATIC
    node_scaling: np.ndarray | None = None
    energy_weight: float = 1.0
    model: ModelParams | None = None  # needed by the energy terminal only

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=np.float64).reshape(4)
        self.Qf = np.asarray(self.Qf, dtype=np.float64).reshape(4)
        self.target = np.asarray(self.target, dtype=np.float64).reshape(4)
        self.R = float(self.R)
        if np.any(self.Q < 0.0) or np.any(self.Qf < 0.0) or self.R < 0.0:
            raise ValueError("cost weights must be non-negative")
        if self.variant not in COST_VARIANTS:
            raise ValueError(f"unknown cost variant {self.variant!r}")
        if self.node_scaling is not None:
            self.node_scaling = np.asarray(self.node_scaling, dtype=np.float64)
            if np.any(self.node_scaling <= 0.0):
                raise ValueError("node_scaling entries must be positive")
        if self.variant == ENERGY_TERMINAL and self.model is None:
            raise ValueError("energy terminal cost needs model parameters")

    @property
    def variant_code(self) -> int:
        return _VARIANT_CODE[self.variant]

    def scaling_for(self, N: int) -> np.ndarray:
        if self.node_scaling is None:
            return np.ones(N)
        if len(self.node_scaling) != N:
            raise ValueError("node_scaling length must match the grid")
        return self.node_scaling

    def packed_model(self) -> np.ndarray:
        if self.model is not None:
            return self.model.packed()
        return _NO_MODEL_PAR


def default_cost(target: np.ndarray | None = None,
                 variant: str = QUADRATIC,
                 model: ModelParams | None = None) -> CostConfig:
    """Stage/terminal weights used throughout: angles 100, velocities 10,
    torque 1e-6; terminal weights 100x the stage ones."""
    if target is None:
        target = upright_state()
    return CostConfig(
        Q=np.array([100.0, 100.0, 10.0, 10.0]),
        R=1e-6,
        Qf=np.array([10000.0, 10000.0, 100.0, 100.0]),
        target=target,
        variant=variant,
        model=model,
    )


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------

@dataclass
class Bounds:
    """Box bounds on the actuated torque and on the state (velocities)."""

    u_lo: float = -6.0
    u_hi: float = 6.0
    x_lo: np.ndarray = field(default_factory=lambda: np.array([-np.inf, -np.inf, -30.0, -30.0]))
    x_hi: np.ndarray = field(default_factory=lambda: np.array([np.inf, np.inf, 30.0, 30.0]))
    xf_lo: np.ndarray = field(default_factory=lambda: np.full(4, -np.inf))
    xf_hi: np.ndarray = field(default_factory=lambda: np.full(4, np.inf))

    def __post_init__(self):
        self.x_lo = np.asarray(self.x_lo, dtype=np.float64).reshape(4)
        self.x_hi = np.asarray(self.x_hi, dtype=np.float64).reshape(4)
        self.xf_lo = np.asarray(self.xf_lo, dtype=np.float64).reshape(4)
        self.xf_hi = np.asarray(self.xf_hi, dtype=np.float64).reshape(4)
        if self.u_lo > self.u_hi or np.any(self.x_lo > self.x_hi) \
                or np.any(self.xf_lo > self.xf_hi):
            raise ValueError("lower bounds must not exceed upper bounds")


def default_bounds(p: ModelParams) -> Bounds:
    return Bounds(
        u_lo=-p.tau_max, u_hi=p.tau_max,
        x_lo=np.array([-np.inf, -np.inf, -p.v_max, -p.v_max]),
        x_hi=np.array([np.inf, np.inf, p.v_max, p.v_max]),
    )


# ---------------------------------------------------------------------------
# cost kernels (single source of truth, used by both the public API and the
# solvers' batched paths)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _stage_cost_kernel(x, u, scale, target, Q, R, variant):
    val = 0.5 * R * u * u
    if variant == 1:
        e1 = _wrap_angle(x[0] - target[0])
        e2 = _wrap_angle(x[1] - target[1])
        val += Q[0] * (1.0 - np.cos(e1)) + Q[1] * (1.0 - np.cos(e2))
    else:
        e1 = x[0] - target[0]
        e2 = x[1] - target[1]
        val += 0.5 * (Q[0] * e1 * e1 + Q[1] * e2 * e2)
    ev1 = x[2] - target[2]
    ev2 = x[3] - target[3]
    val += 0.5 * (Q[2] * ev1 * ev1 + Q[3] * ev2 * ev2)
    return scale * val


@njit(cache=True)
def _stage_grad_kernel(x, u, scale, target, Q, R, variant):
    """Gradient and diagonal Gauss-Newton Hessian of the stage cost."""
    gx = np.empty(4)
    if variant == 1:
        gx[0] = Q[0] * np.sin(_wrap_angle(x[0] - target[0]))
        gx[1] = Q[1] * np.sin(_wrap_angle(x[1] - target[1]))
    else:
        gx[0] = Q[0] * (x[0] - target[0])
        gx[1] = Q[1] * (x[1] - target[1])
    gx[2] = Q[2] * (x[2] - target[2])
    gx[3] = Q[3] * (x[3] - target[3])
    Hx = scale * Q
    gu = scale * R * u
    Hu = scale * R
    return scale * gx, Hx, gu, Hu


@njit(cache=True)
def _terminal_cost_kernel(x, target, Qf, variant, energy_w, par):
    if variant == 2:
        de = _total_energy(x, par) - _total_energy(target, par)
        val = 0.5 * energy_w * de * de
        ev1 = x[2] - target[2]
        ev2 = x[3] - target[3]
        return val + 0.5 * (Qf[2] * ev1 * ev1 + Qf[3] * ev2 * ev2)
    if variant == 1:
        e1 = _wrap_angle(x[0] - target[0])
        e2 = _wrap_angle(x[1] - target[1])
        val = Qf[0] * (1.0 - np.cos(e1)) + Qf[1] * (1.0 - np.cos(e2))
    else:
        e1 = x[0] - target[0]
        e2 = x[1] - target[1]
        val = 0.5 * (Qf[0] * e1 * e1 + Qf[1] * e2 * e2)
    ev1 = x[2] - target[2]
    ev2 = x[3] - target[3]
    return val + 0.5 * (Qf[2] * ev1 * ev1 + Qf[3] * ev2 * ev2)


@njit(cache=True)
def _terminal_grad_kernel(x, target, Qf, variant, energy_w, par):
    """Gradient and Gauss-Newton Hessian (full 4x4) of the terminal cost."""
    gx = np.zeros(4)
    H = np.zeros((4, 4))
    if variant == 2:
        de = _total_energy(x, par) - _total_energy(target, par)
        je = _energy_gradient(x, par)
        for i in range(4):
            gx[i] = energy_w * de * je[i]
            for j in range(4):
                H[i, j] = energy_w * je[i] * je[j]
        gx[2] += Qf[2] * (x[2] - target[2])
        gx[3] += Qf[3] * (x[3] - target[3])
        H[2, 2] += Qf[2]
        H[3, 3] += Qf[3]
        return gx, H
    if variant == 1:
        gx[0] = Qf[0] * np.sin(_wrap_angle(x[0] - target[0]))
        gx[1] = Qf[1] * np.sin(_wrap_angle(x[1] - target[1]))
    else:
        gx[0] = Qf[0] * (x[0] - target[0])
        gx[1] = Qf[1] * (x[1] - target[1])
    gx[2] = Qf[2] * (x[2] - target[2])
    gx[3] = Qf[3] * (x[3] - target[3])
    for i in range(4):
        H[i, i] = Qf[i]
    return gx, H


@njit(cache=True)
def _total_cost_kernel(xs, us, target, Q, R, Qf, scaling, variant, energy_w, par):
    N = us.shape[0]
    total = 0.0
    for n in range(N):
        total += _stage_cost_kernel(xs[n], us[n, 0], scaling[n], target, Q, R, variant)
    return total + _terminal_cost_kernel(xs[N], target, Qf, variant, energy_w, par)


@njit(cache=True)
def _cost_derivs_kernel(xs, us, target, Q, R, Qf, scaling, variant, energy_w, par):
    N = us.shape[0]
    qx = np.empty((N + 1, 4))
    Qh = np.zeros((N + 1, 4, 4))
    ru = np.empty((N, 1))
    Rh = np.empty((N, 1, 1))
    for n in range(N):
        gx, Hx, gu, Hu = _stage_grad_kernel(xs[n], us[n, 0], scaling[n],
                                            target, Q, R, variant)
        qx[n] = gx
        for i in range(4):
            Qh[n, i, i] = Hx[i]
        ru[n, 0] = gu
        Rh[n, 0, 0] = Hu
    gN, HN = _terminal_grad_kernel(xs[N], target, Qf, variant, energy_w, par)
    qx[N] = gN
    Qh[N] = HN
    return qx, Qh, ru, Rh


# ---------------------------------------------------------------------------
# public cost operations
# ---------------------------------------------------------------------------

def embed_angles(x: np.ndarray) -> np.ndarray:
    """Map the state to the 2pi-invariant residual basis
    (cos q1, sin q1, cos q2, sin q2, qd1, qd2)."""
    q1 = _wrap_angle(float(x[0]))
    q2 = _wrap_angle(float(x[1]))
    return np.array([np.cos(q1), np.sin(q1), np.cos(q2), np.sin(q2),
                     float(x[2]), float(x[3])])


def stage_cost(x: np.ndarray, u: float, n: int, cfg: CostConfig) -> float:
    """Scaled stage cost at node n."""
    scale = float(cfg.node_scaling[n]) if cfg.node_scaling is not None else 1.0
    return float(_stage_cost_kernel(np.asarray(x, dtype=np.float64), float(u),
                                    scale, cfg.target, cfg.Q, cfg.R,
                                    cfg.variant_code))


def terminal_cost(x: np.ndarray, cfg: CostConfig) -> float:
    return float(_terminal_cost_kernel(np.asarray(x, dtype=np.float64),
                                       cfg.target, cfg.Qf, cfg.variant_code,
                                       cfg.energy_weight, cfg.packed_model()))


def cost_derivatives(x: np.ndarray, u: float, n: int, cfg: CostConfig):
    """Exact gradient and Gauss-Newton Hessian of the stage cost, stacked
    over (x, u)."""
    scale = float(cfg.node_scaling[n]) if cfg.node_scaling is not None else 1.0
    gx, Hx, gu, Hu = _stage_grad_kernel(np.asarray(x, dtype=np.float64),
                                        float(u), scale, cfg.target, cfg.Q,
                                        cfg.R, cfg.variant_code)
    grad = np.concatenate([gx, [gu]])
    H = np.zeros((5, 5))
    H[:4, :4] = np.diag(Hx)
    H[4, 4] = Hu
    return grad, H


def terminal_cost_derivatives(x: np.ndarray, cfg: CostConfig):
    return _terminal_grad_kernel(np.asarray(x, dtype=np.float64), cfg.target,
                                 cfg.Qf, cfg.variant_code, cfg.energy_weight,
                                 cfg.packed_model())


# ---------------------------------------------------------------------------
# discretized dynamics over the grid
# ---------------------------------------------------------------------------

@njit(cache=True)
def _substeps_for(dt, dt_sub_max):
    m = int(np.ceil(dt / dt_sub_max))
    return m if m > 1 else 1


@njit(cache=True)
def _shoot_step_jac(x, u_active, dt, par, active, dt_sub_max):
    """Shooting map over one interval with sub-stepped RK4 and chained
    sensitivities. Sub-stepping keeps the discretization stable against the
    stiff smoothed-Coulomb term near zero velocity."""
    m = _substeps_for(dt, dt_sub_max)
    h = dt / m
    y, Ad, Bd = _rk4_step_jacobians(x, u_active, h, par, active)
    for _ in range(m - 1):
        y, A1, B1 = _rk4_step_jacobians(y, u_active, h, par, active)
        Ad = A1 @ Ad
        Bd = A1 @ Bd + B1
    return y, Ad, Bd


@njit(cache=True)
def _shoot_step(x, u_active, dt, par, active, dt_sub_max):
    m = _substeps_for(dt, dt_sub_max)
    h = dt / m
    uu = np.zeros(2)
    uu[active] = u_active
    y = x
    for _ in range(m):
        y = _rk4_step(y, uu, h, par)
    return y


@njit(cache=True)
def _linearize_horizon_kernel(xs, us, dts, par, active, dt_sub_max):
    N = us.shape[0]
    As = np.empty((N, 4, 4))
    Bs = np.empty((N, 4, 1))
    fs = np.empty((N, 4))
    for n in range(N):
        x_next, Ad, Bd = _shoot_step_jac(xs[n], us[n, 0], dts[n], par, active,
                                         dt_sub_max)
        fs[n] = x_next
        As[n] = Ad
        Bs[n] = Bd
    return As, Bs, fs


@njit(cache=True)
def _shoot_kernel(xs, us, dts, par, active, dt_sub_max):
    """Integrate each shooting interval from its own node (defect check)."""
    N = us.shape[0]
    fs = np.empty((N, 4))
    for n in range(N):
        fs[n] = _shoot_step(xs[n], us[n, 0], dts[n], par, active, dt_sub_max)
    return fs


@njit(cache=True)
def _rollout_kernel(x0, us, dts, par, active, dt_sub_max):
    N = us.shape[0]
    xs = np.empty((N + 1, 4))
    xs[0] = x0
    for n in range(N):
        xs[n + 1] = _shoot_step(xs[n], us[n, 0], dts[n], par, active,
                                dt_sub_max)
    return xs


@njit(cache=True)
def _rollout_feedback_kernel(x0, xs_ref, us_ref, Ks, ks, alpha, dts, par,
                             active, u_lo, u_hi, dt_sub_max):
    N = us_ref.shape[0]
    xs = np.empty((N + 1, 4))
    us = np.empty((N, 1))
    xs[0] = x0
    for n in range(N):
        du = alpha * ks[n, 0]
        for i in range(4):
            du += Ks[n, 0, i] * (xs[n, i] - xs_ref[n, i])
        u = us_ref[n, 0] + du
        if u < u_lo:
            u = u_lo
        elif u > u_hi:
            u = u_hi
        us[n, 0] = u
        xs[n + 1] = _shoot_step(xs[n], u, dts[n], par, active, dt_sub_max)
    return xs, us


class ShootingModel:
    """Discrete pendulum dynamics with a single actuated input, evaluated
    over a shooting grid via the jitted RK4 kernels.

    Each shooting interval is integrated with enough RK4 sub-steps to keep
    dt below ``dt_sub_max``: the tanh-smoothed Coulomb friction puts a fast
    eigenvalue (about cf/eps scaled by the inverse inertia) into the
    linearization near zero velocity, which a single 25 ms RK4 step cannot
    handle stably.
    """

    n_x = 4
    n_u = 1

    def __init__(self, params: ModelParams, dt_sub_max: float = 5e-3):
        self.params = params
        self.par = params.packed()
        self.active = params.active_joint
        self.dt_sub_max = float(dt_sub_max)

    def step(self, x, u, dt):
        return _shoot_step(np.asarray(x, dtype=np.float64),
                           float(np.asarray(u).reshape(-1)[0]), float(dt),
                           self.par, self.active, self.dt_sub_max)

    def step_jacobians(self, x, u, dt):
        return _shoot_step_jac(np.asarray(x, dtype=np.float64),
                               float(np.asarray(u).reshape(-1)[0]), float(dt),
                               self.par, self.active, self.dt_sub_max)

    def linearize_horizon(self, xs, us, dts):
        """Per-interval discrete (A, B) and predicted next states."""
        return _linearize_horizon_kernel(xs, us, dts, self.par, self.active,
                                         self.dt_sub_max)

    def shoot(self, xs, us, dts):
        """Predicted next states only (no sensitivities)."""
        return _shoot_kernel(xs, us, dts, self.par, self.active, self.dt_sub_max)

    def rollout(self, x0, us, dts):
        return _rollout_kernel(np.asarray(x0, dtype=np.float64), us, dts,
                               self.par, self.active, self.dt_sub_max)

    def rollout_feedback(self, x0, xs_ref, us_ref, Ks, ks, alpha, dts, u_lo, u_hi):
        return _rollout_feedback_kernel(np.asarray(x0, dtype=np.float64),
                                        xs_ref, us_ref, Ks, ks, alpha, dts,
                                        self.par, self.active, u_lo, u_hi,
                                        self.dt_sub_max)


@dataclass
class OcpProblem:
    """The full discrete OCP: dynamics, grid, cost and bounds."""

    dynamics: object
    grid: ShootingGrid
    cost: CostConfig
    bounds: Bounds

    @property
    def N(self) -> int:
        return self.grid.N

    def total_cost(self, xs: np.ndarray, us: np.ndarray) -> float:
        scaling = self.cost.scaling_for(self.N)
        return float(_total_cost_kernel(xs, us, self.cost.target, self.cost.Q,
                                        self.cost.R, self.cost.Qf, scaling,
                                        self.cost.variant_code,
                                        self.cost.energy_weight,
                                        self.cost.packed_model()))


def build_ocp(params: ModelParams, N: int = 20, T: float = 0.5,
              nonuniform: bool = False, cost: CostConfig | None = None,
              bounds: Bounds | None = None) -> OcpProblem:
    """Assemble the swing-up OCP for the given robot configuration."""
    if cost is None:
        cost = default_cost(model=params)
    if bounds is None:
        bounds = default_bounds(params)
    return OcpProblem(dynamics=ShootingModel(params),
                      grid=build_grid(N, T, nonuniform),
                      cost=cost, bounds=bounds)
