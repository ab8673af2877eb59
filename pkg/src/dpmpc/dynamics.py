"""Planar double-pendulum model: manipulator-equation terms, forward dynamics,
analytic Jacobians, energy, RK4 integration and angle wrapping.

Angle convention: q = [0, 0] is the upright equilibrium. q1 is the shoulder
angle measured from the upward vertical, q2 the elbow angle relative to link 1.
The hanging equilibrium is [pi, 0]. The state vector is x = [q1, q2, qd1, qd2].

All heavy numerics are numba-jitted kernels operating on a packed parameter
array (see ``ModelParams.packed``); the module-level functions are thin,
NumPy-friendly wrappers around them.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

ACROBOT = "acrobot"
PENDUBOT = "pendubot"

# indices into the packed parameter array
_M1, _M2, _L1, _L2, _R1, _R2, _I1, _I2, _B1, _B2, _CF1, _CF2, _G, _EPS = range(14)

# physical parameters that the robustness benchmark may scale
PHYSICAL_PARAM_NAMES = (
    "m1", "m2", "l1", "l2", "r1", "r2", "I1", "I2", "b1", "b2", "cf1", "cf2",
)


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the double pendulum plus actuation selection.

    Lengths in m, masses in kg, inertias (about the link COM) in kg m^2,
    viscous friction in N m s/rad, Coulomb friction in N m. ``robot`` selects
    which joint carries the motor: "pendubot" actuates the shoulder (joint 1),
    "acrobot" the elbow (joint 2).
    """

    m1: float = 0.5
    m2: float = 0.6
    l1: float = 0.3
    l2: float = 0.2
    r1: float = 0.275
    r2: float = 0.166
    I1: float = 0.0475
    I2: float = 0.0208
    b1: float = 0.08
    b2: float = 0.08
    cf1: float = 0.093
    cf2: float = 0.093
    g: float = 9.81
    robot: str = PENDUBOT
    tau_max: float = 6.0
    v_max: float = 30.0
    friction_smoothing: float = 1e-2

    def __post_init__(self):
        for name in ("m1", "m2", "l1", "l2", "r1", "r2", "I1", "I2"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if self.r1 > self.l1 or self.r2 > self.l2:
            raise ValueError("centers of mass must satisfy r1 <= l1 and r2 <= l2")
        for name in ("b1", "b2", "cf1", "cf2"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        if self.tau_max <= 0.0 or self.v_max <= 0.0:
            raise ValueError("tau_max and v_max must be positive")
        if self.robot not in (ACROBOT, PENDUBOT):
            raise ValueError(f"robot must be '{ACROBOT}' or '{PENDUBOT}', got {self.robot!r}")
        if self.friction_smoothing <= 0.0:
            raise ValueError("friction_smoothing must be positive")

    @property
    def active_joint(self) -> int:
        """0-based index of the actuated joint."""
        return 0 if self.robot == PENDUBOT else 1

    @property
    def inactive_joint(self) -> int:
        return 1 - self.active_joint

    @property
    def actuation_matrix(self) -> np.ndarray:
        """The 2x1 input map selecting the actuated joint."""
        B = np.zeros((2, 1))
        B[self.active_joint, 0] = 1.0
        return B

    def packed(self) -> np.ndarray:
        """Parameters as a flat float64 array for the jitted kernels."""
        return np.array(
            [self.m1, self.m2, self.l1, self.l2, self.r1, self.r2,
             self.I1, self.I2, self.b1, self.b2, self.cf1, self.cf2,
             self.g, self.friction_smoothing],
            dtype=np.float64,
        )

    def with_scaled(self, name: str, factor: float) -> "ModelParams":
        """Return a copy with one physical parameter scaled by ``factor``.

        COM distances are clamped to their link length so the result is
        always a valid parameter set.
        """
        if name not in PHYSICAL_PARAM_NAMES:
            raise ValueError(f"unknown physical parameter {name!r}")
        value = getattr(self, name) * factor
        if name == "r1":
            value = min(value, self.l1)
        elif name == "r2":
            value = min(value, self.l2)
        elif name == "l1":
            value = max(value, self.r1)
        elif name == "l2":
            value = max(value, self.r2)
        return replace(self, **{name: value})


def upright_state() -> np.ndarray:
    return np.zeros(4)


def hanging_state() -> np.ndarray:
    return np.array([np.pi, 0.0, 0.0, 0.0])


# ---------------------------------------------------------------------------
# jitted kernels
# ---------------------------------------------------------------------------

@njit(cache=True)
def _mass_matrix(q1, q2, par):
    c2 = np.cos(q2)
    m2 = par[_M2]
    l1 = par[_L1]
    r1 = par[_R1]
    r2 = par[_R2]
    M = np.empty((2, 2))
    M[0, 0] = par[_I1] + par[_I2] + par[_M1] * r1 * r1 + m2 * (
        l1 * l1 + r2 * r2 + 2.0 * l1 * r2 * c2)
    M[0, 1] = par[_I2] + m2 * (r2 * r2 + l1 * r2 * c2)
    M[1, 0] = M[0, 1]
    M[1, 1] = par[_I2] + m2 * r2 * r2
    return M


@njit(cache=True)
def _coriolis_matrix(q2, qd1, qd2, par):
    h = par[_M2] * par[_L1] * par[_R2] * np.sin(q2)
    C = np.empty((2, 2))
    C[0, 0] = -h * qd2
    C[0, 1] = -h * (qd1 + qd2)
    C[1, 0] = h * qd1
    C[1, 1] = 0.0
    return C


@njit(cache=True)
def _gravity_vector(q1, q2, par):
    g = par[_G]
    m2r2 = par[_M2] * par[_R2]
    s1 = np.sin(q1)
    s12 = np.sin(q1 + q2)
    tau = np.empty(2)
    tau[0] = g * ((par[_M1] * par[_R1] + par[_M2] * par[_L1]) * s1 + m2r2 * s12)
    tau[1] = g * m2r2 * s12
    return tau


@njit(cache=True)
def _friction_torque(qd1, qd2, par):
    eps = par[_EPS]
    f = np.empty(2)
    f[0] = par[_B1] * qd1 + par[_CF1] * np.tanh(qd1 / eps)
    f[1] = par[_B2] * qd2 + par[_CF2] * np.tanh(qd2 / eps)
    return f


@njit(cache=True)
def _forward_dynamics(x, u, par):
    """xdot for full two-component torque u (unactuated entries just zero)."""
    q1, q2, qd1, qd2 = x[0], x[1], x[2], x[3]
    M = _mass_matrix(q1, q2, par)
    C = _coriolis_matrix(q2, qd1, qd2, par)
    tau = _gravity_vector(q1, q2, par)
    fr = _friction_torque(qd1, qd2, par)
    w0 = tau[0] + u[0] - (C[0, 0] * qd1 + C[0, 1] * qd2) - fr[0]
    w1 = tau[1] + u[1] - (C[1, 0] * qd1 + C[1, 1] * qd2) - fr[1]
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[0, 1]
    xdot = np.empty(4)
    xdot[0] = qd1
    xdot[1] = qd2
    xdot[2] = (M[1, 1] * w0 - M[0, 1] * w1) / det
    xdot[3] = (M[0, 0] * w1 - M[0, 1] * w0) / det
    return xdot


@njit(cache=True)
def _dynamics_jacobians(x, u, par):
    """Analytic (A, B) = (df/dx, df/du) of the continuous dynamics.

    B has both input columns; callers pick the actuated one.
    """
    q1, q2, qd1, qd2 = x[0], x[1], x[2], x[3]
    m2 = par[_M2]
    l1 = par[_L1]
    r2 = par[_R2]
    g = par[_G]
    eps = par[_EPS]

    M = _mass_matrix(q1, q2, par)
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[0, 1]
    Mi = np.empty((2, 2))
    Mi[0, 0] = M[1, 1] / det
    Mi[0, 1] = -M[0, 1] / det
    Mi[1, 0] = -M[0, 1] / det
    Mi[1, 1] = M[0, 0] / det

    C = _coriolis_matrix(q2, qd1, qd2, par)
    tau = _gravity_vector(q1, q2, par)
    fr = _friction_torque(qd1, qd2, par)
    w = np.empty(2)
    w[0] = tau[0] + u[0] - (C[0, 0] * qd1 + C[0, 1] * qd2) - fr[0]
    w[1] = tau[1] + u[1] - (C[1, 0] * qd1 + C[1, 1] * qd2) - fr[1]
    qdd = Mi @ w

    h = m2 * l1 * r2 * np.sin(q2)
    hp = m2 * l1 * r2 * np.cos(q2)

    c1 = np.cos(q1)
    c12 = np.cos(q1 + q2)
    ga = g * (par[_M1] * par[_R1] + m2 * l1)
    gb = g * m2 * r2
    # d(tau_g)/dq
    dtau = np.empty((2, 2))
    dtau[0, 0] = ga * c1 + gb * c12
    dtau[0, 1] = gb * c12
    dtau[1, 0] = gb * c12
    dtau[1, 1] = gb * c12

    # d(C qd)/dq2 and d(C qd)/dqd
    dCqd_q2 = np.empty(2)
    dCqd_q2[0] = hp * (-2.0 * qd1 * qd2 - qd2 * qd2)
    dCqd_q2[1] = hp * qd1 * qd1
    dCqd_qd = np.empty((2, 2))
    dCqd_qd[0, 0] = -2.0 * h * qd2
    dCqd_qd[0, 1] = -2.0 * h * (qd1 + qd2)
    dCqd_qd[1, 0] = 2.0 * h * qd1
    dCqd_qd[1, 1] = 0.0

    # dM/dq2 contracted with qdd
    dM_qdd = np.empty(2)
    dM_qdd[0] = -2.0 * h * qdd[0] - h * qdd[1]
    dM_qdd[1] = -h * qdd[0]

    th1 = np.tanh(qd1 / eps)
    th2 = np.tanh(qd2 / eps)
    dfr1 = par[_B1] + par[_CF1] * (1.0 - th1 * th1) / eps
    dfr2 = par[_B2] + par[_CF2] * (1.0 - th2 * th2) / eps

    A = np.zeros((4, 4))
    A[0, 2] = 1.0
    A[1, 3] = 1.0

    col = Mi @ dtau[:, 0]
    A[2, 0] = col[0]
    A[3, 0] = col[1]

    rhs = np.empty(2)
    rhs[0] = dtau[0, 1] - dCqd_q2[0] - dM_qdd[0]
    rhs[1] = dtau[1, 1] - dCqd_q2[1] - dM_qdd[1]
    col = Mi @ rhs
    A[2, 1] = col[0]
    A[3, 1] = col[1]

    rhs[0] = -dCqd_qd[0, 0] - dfr1
    rhs[1] = -dCqd_qd[1, 0]
    col = Mi @ rhs
    A[2, 2] = col[0]
    A[3, 2] = col[1]

    rhs[0] = -dCqd_qd[0, 1]
    rhs[1] = -dCqd_qd[1, 1] - dfr2
    col = Mi @ rhs
    A[2, 3] = col[0]
    A[3, 3] = col[1]

    B = np.zeros((4, 2))
    B[2, 0] = Mi[0, 0]
    B[3, 0] = Mi[1, 0]
    B[2, 1] = Mi[0, 1]
    B[3, 1] = Mi[1, 1]
    return A, B


@njit(cache=True)
def _total_energy(x, par):
    q1, q2, qd1, qd2 = x[0], x[1], x[2], x[3]
    M = _mass_matrix(q1, q2, par)
    kin = 0.5 * (M[0, 0] * qd1 * qd1 + 2.0 * M[0, 1] * qd1 * qd2 + M[1, 1] * qd2 * qd2)
    g = par[_G]
    m1r1 = par[_M1] * par[_R1]
    m2 = par[_M2]
    pot = g * (m1r1 * np.cos(q1) + m2 * (par[_L1] * np.cos(q1) + par[_R2] * np.cos(q1 + q2)))
    ref = g * (m1r1 + m2 * (par[_L1] + par[_R2]))
    return kin + pot + ref


@njit(cache=True)
def _energy_gradient(x, par):
    """dE/dx, used by the energy terminal cost."""
    q1, q2, qd1, qd2 = x[0], x[1], x[2], x[3]
    M = _mass_matrix(q1, q2, par)
    tau = _gravity_vector(q1, q2, par)
    h = par[_M2] * par[_L1] * par[_R2] * np.sin(q2)
    grad = np.empty(4)
    # dU/dq = -tau_g; dM/dq2 contributes to the kinetic part
    grad[0] = -tau[0]
    grad[1] = -tau[1] + 0.5 * (-2.0 * h * qd1 * qd1 - 2.0 * h * qd1 * qd2)
    grad[2] = M[0, 0] * qd1 + M[0, 1] * qd2
    grad[3] = M[0, 1] * qd1 + M[1, 1] * qd2
    return grad


@njit(cache=True)
def _rk4_step(x, u, dt, par):
    k1 = _forward_dynamics(x, u, par)
    k2 = _forward_dynamics(x + 0.5 * dt * k1, u, par)
    k3 = _forward_dynamics(x + 0.5 * dt * k2, u, par)
    k4 = _forward_dynamics(x + dt * k3, u, par)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@njit(cache=True)
def _rk4_step_jacobians(x, u_active, dt, par, active):
    """One RK4 step plus exact discrete sensitivities for the active input.

    Chains the analytic stage Jacobians through the RK4 tableau, so the
    returned (Ad, Bd) are the exact derivatives of the discrete map.
    """
    uu = np.zeros(2)
    uu[active] = u_active

    k1 = _forward_dynamics(x, uu, par)
    A1, B1 = _dynamics_jacobians(x, uu, par)

    x2 = x + 0.5 * dt * k1
    k2 = _forward_dynamics(x2, uu, par)
    A2, B2 = _dynamics_jacobians(x2, uu, par)

    x3 = x + 0.5 * dt * k2
    k3 = _forward_dynamics(x3, uu, par)
    A3, B3 = _dynamics_jacobians(x3, uu, par)

    x4 = x + dt * k3
    k4 = _forward_dynamics(x4, uu, par)
    A4, B4 = _dynamics_jacobians(x4, uu, par)

    I4 = np.eye(4)
    dk1 = A1
    dk2 = A2 @ (I4 + 0.5 * dt * dk1)
    dk3 = A3 @ (I4 + 0.5 * dt * dk2)
    dk4 = A4 @ (I4 + dt * dk3)
    Ad = I4 + (dt / 6.0) * (dk1 + 2.0 * dk2 + 2.0 * dk3 + dk4)

    b1 = B1[:, active]
    b2 = B2[:, active] + A2 @ (0.5 * dt * b1)
    b3 = B3[:, active] + A3 @ (0.5 * dt * b2)
    b4 = B4[:, active] + A4 @ (dt * b3)
    Bd = np.empty((4, 1))
    Bd[:, 0] = (dt / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)

    x_next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x_next, Ad, Bd


@njit(cache=True)
def _substep(x, u, dt, n, par):
    """n RK4 sub-steps under zero-order-hold torque u."""
    y = x.copy()
    for _ in range(n):
        y = _rk4_step(y, u, dt, par)
    return y


@njit(cache=True)
def _wrap_angle(theta):
    # fmod-based reduction is exact in IEEE arithmetic, which keeps the wrap
    # idempotent and makes costs built on wrapped angles reproducible
    r = np.mod(theta, 2.0 * np.pi)
    if r > np.pi:
        r -= 2.0 * np.pi
    return r


@njit(cache=True)
def _tip_height(q1, q2, par):
    return par[_L1] * np.cos(q1) + par[_L2] * np.cos(q1 + q2)


# ---------------------------------------------------------------------------
# public wrappers
# ---------------------------------------------------------------------------

def mass_matrix(q: np.ndarray, p: ModelParams) -> np.ndarray:
    """Symmetric positive-definite 2x2 mass-inertia matrix at joint angles q."""
    return _mass_matrix(float(q[0]), float(q[1]), p.packed())


def coriolis_matrix(q: np.ndarray, qd: np.ndarray, p: ModelParams) -> np.ndarray:
    """Coriolis/centrifugal matrix in the Christoffel form (dM/dt - 2C skew)."""
    return _coriolis_matrix(float(q[1]), float(qd[0]), float(qd[1]), p.packed())


def gravity_vector(q: np.ndarray, p: ModelParams) -> np.ndarray:
    """Gravity torque vector; zero at the upright and hanging equilibria."""
    return _gravity_vector(float(q[0]), float(q[1]), p.packed())


def friction_torque(qd: np.ndarray, p: ModelParams) -> np.ndarray:
    """Viscous plus tanh-smoothed Coulomb friction, opposing motion."""
    return _friction_torque(float(qd[0]), float(qd[1]), p.packed())


def forward_dynamics(x: np.ndarray, u: np.ndarray, p: ModelParams) -> np.ndarray:
    """State derivative [qd, qdd] for full joint torque u (2-vector)."""
    return _forward_dynamics(np.asarray(x, dtype=np.float64),
                             np.asarray(u, dtype=np.float64), p.packed())


def dynamics_jacobians(x: np.ndarray, u: np.ndarray, p: ModelParams):
    """Analytic continuous-time Jacobians (A, B); B has one column per joint."""
    return _dynamics_jacobians(np.asarray(x, dtype=np.float64),
                               np.asarray(u, dtype=np.float64), p.packed())


def total_energy(x: np.ndarray, p: ModelParams) -> float:
    """Kinetic plus potential energy, zero at hanging rest."""
    return float(_total_energy(np.asarray(x, dtype=np.float64), p.packed()))


def energy_gradient(x: np.ndarray, p: ModelParams) -> np.ndarray:
    """Gradient of total_energy with respect to the state."""
    return _energy_gradient(np.asarray(x, dtype=np.float64), p.packed())


def integrate_step(x: np.ndarray, u: np.ndarray, dt: float, p: ModelParams) -> np.ndarray:
    """One explicit RK4 step with zero-order-hold torque."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    return _rk4_step(np.asarray(x, dtype=np.float64),
                     np.asarray(u, dtype=np.float64), float(dt), p.packed())


def wrap_angle(theta):
    """Map an angle to the interval (-pi, pi]."""
    return _wrap_angle(theta)


def wrap_state(x: np.ndarray) -> np.ndarray:
    """Wrap both joint angles to (-pi, pi]; velocities pass through."""
    y = np.asarray(x, dtype=np.float64).copy()
    y[0] = _wrap_angle(y[0])
    y[1] = _wrap_angle(y[1])
    return y


def tip_height(x: np.ndarray, p: ModelParams) -> float:
    """Height of the end effector above the shoulder pivot."""
    return float(_tip_height(float(x[0]), float(x[1]), p.packed()))
