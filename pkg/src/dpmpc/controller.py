"""Receding-horizon MPC controller: per-cycle solve with the configured
backend, stored-trajectory fallback on solver failure, optional PID tracking
of the predicted next state, friction compensation on the unactuated joint,
and torque clamping.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import ModelParams, hanging_state, upright_state, wrap_state
from .ocp import (
    ENERGY_TERMINAL,
    QUADRATIC,
    COST_VARIANTS,
    Bounds,
    CostConfig,
    OcpProblem,
    ShootingModel,
    build_grid,
    default_bounds,
)
from .solver import (
    DDP,
    SQP,
    SQP_RTI,
    BACKENDS,
    Solution,
    SolverSettings,
    SolverStatus,
    ddp_solve,
    initial_guess,
    rti_feedback,
    rti_prepare,
    shift_warm_start,
    sqp_solve,
)

_TWO_PI = 2.0 * np.pi


@dataclass
class ControllerOptions:
    """Controller option surface. Times in seconds, torques in N m."""

    N_horizon: int = 20
    prediction_horizon: float = 0.5
    Nlp_max_iter: int = 500
    max_solve_time: float = 1.0
    solver_type: str = SQP_RTI
    wrap_angle: bool = True
    warm_start: bool = True
    scaling: np.ndarray | None = None
    nonuniform_grid: bool = False
    use_energy_for_terminal_cost: bool = False
    fallback_on_solver_fail: bool = False
    friction_compensation_on_inactive_joint: float = 0.5
    mpc_cycle_dt: float = 0.01
    pd_tracking: bool = False
    outer_cycle_dt: float = 0.001
    pd_KP: float | None = None
    pd_KD: float | None = None
    pd_KI: float | None = None
    # cost surface (stage/terminal weights and residual variant)
    Q: np.ndarray = field(default_factory=lambda: np.array([100.0, 100.0, 10.0, 10.0]))
    R: float = 1e-6
    Qf: np.ndarray = field(default_factory=lambda: np.array([10000.0, 10000.0, 100.0, 100.0]))
    cost_variant: str = QUADRATIC
    energy_weight: float = 1.0
    qp_solver_tolerance: float = 1e-3
    kkt_tol: float = 1e-6
    warm_start_iterations: int = 50

    def __post_init__(self):
        solver = self.solver_type.replace("-", "_").upper()
        if solver not in BACKENDS:
            raise ValueError(f"solver_type must be one of SQP, SQP-RTI, DDP (got {self.solver_type!r})")
        self.solver_type = solver
        if self.N_horizon < 1:
            raise ValueError("N_horizon must be >= 1")
        for name in ("prediction_horizon", "max_solve_time", "mpc_cycle_dt",
                     "outer_cycle_dt", "qp_solver_tolerance", "kkt_tol"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.Nlp_max_iter < 1:
            raise ValueError("Nlp_max_iter must be >= 1")
        if self.friction_compensation_on_inactive_joint < 0.0:
            raise ValueError("friction compensation budget must be >= 0")
        if self.pd_tracking:
            if self.outer_cycle_dt > self.mpc_cycle_dt:
                raise ValueError("outer_cycle_dt must not exceed mpc_cycle_dt with pd_tracking")
            if self.pd_KP is None or self.pd_KD is None or self.pd_KI is None:
                raise ValueError("pd_tracking needs pd_KP, pd_KD and pd_KI")
        if self.cost_variant not in COST_VARIANTS:
            raise ValueError(f"unknown cost_variant {self.cost_variant!r}")
        if self.scaling is not None:
            self.scaling = np.asarray(self.scaling, dtype=np.float64)
            if len(self.scaling) != self.N_horizon:
                raise ValueError("scaling length must equal N_horizon")
        self.Q = np.asarray(self.Q, dtype=np.float64).reshape(4)
        self.Qf = np.asarray(self.Qf, dtype=np.float64).reshape(4)


@dataclass
class CycleLog:
    """Telemetry of one MPC cycle."""

    t: float
    status: str
    kkt: float
    prepare_time: float
    solve_time: float
    fallback_used: bool
    failed: bool
    u_cmd: float


def friction_compensation(qd: np.ndarray, budget: float, p: ModelParams) -> float:
    """Velocity-aligned torque on the inactive joint, canceling up to
    ``budget`` N m of that joint's friction."""
    j = p.inactive_joint
    qdj = float(qd[j])
    b = (p.b1, p.b2)[j]
    cf = (p.cf1, p.cf2)[j]
    fric = abs(b * qdj + cf * np.tanh(qdj / p.friction_smoothing))
    return min(budget, fric) * float(np.tanh(qdj / p.friction_smoothing))


def pid_adjust(x_meas, x_ref, u_ff: float, gains, dt_outer: float,
               integrator: float = 0.0, active: int = 0,
               tau_max: float = 6.0):
    """One PID update around the feedforward torque.

    The position error is the angle-wrapped difference of the active joint,
    the derivative term uses measured velocity error, and the integrator is
    held (anti-windup) whenever the output saturates. Returns the adjusted
    torque and the updated integrator state.
    """
    kp, ki, kd = gains
    e = float(np.pi - np.mod(np.pi - (x_ref[active] - x_meas[active]), _TWO_PI))
    edot = float(x_ref[active + 2] - x_meas[active + 2])
    integrator_try = integrator + e * dt_outer
    u = u_ff + kp * e + ki * integrator_try + kd * edot
    if abs(u) > tau_max:
        u = u_ff + kp * e + ki * integrator + kd * edot
        return float(np.clip(u, -tau_max, tau_max)), integrator
    return u, integrator_try


class MpcController:
    """One controller instance driving one plant.

    Call :meth:`compute_control` once per outer step (the controller runs its
    MPC solve only at the configured cycle rate and holds or PID-corrects the
    torque in between). ``force_fail_cycles`` is a fault-injection hook for
    exercising the fallback protocol in tests.
    """

    def __init__(self, options: ControllerOptions, model: ModelParams,
                 target: np.ndarray | None = None):
        self.options = options
        self.model = model
        self.target = upright_state() if target is None else \
            np.asarray(target, dtype=np.float64).copy()

        variant = ENERGY_TERMINAL if options.use_energy_for_terminal_cost \
            else options.cost_variant
        cost = CostConfig(Q=options.Q, R=options.R, Qf=options.Qf,
                          target=self.target, variant=variant,
                          node_scaling=options.scaling,
                          energy_weight=options.energy_weight, model=model)
        self.ocp = OcpProblem(
            dynamics=ShootingModel(model),
            grid=build_grid(options.N_horizon, options.prediction_horizon,
                            options.nonuniform_grid),
            cost=cost,
            bounds=default_bounds(model),
        )
        self.settings = SolverSettings(
            backend=options.solver_type,
            max_iter=options.Nlp_max_iter,
            kkt_tol=options.kkt_tol,
            qp_tol=options.qp_solver_tolerance,
            max_solve_time=options.max_solve_time,
        )
        self.force_fail_cycles = 0
        self.telemetry: list[CycleLog] = []
        self.reset()

    # ------------------------------------------------------------------
    def reset(self, x0: np.ndarray | None = None) -> None:
        """Reinitialize guess, fallback buffer and cycle bookkeeping.

        With ``warm_start`` the initial guess is refined by up to
        ``warm_start_iterations`` full-step SQP iterations on the frozen
        initial state (each one a prepare/feedback pair), which is what
        turns the zero-input rollout into a usable swing-up plan.
        """
        opts = self.options
        x0 = hanging_state() if x0 is None else np.asarray(x0, dtype=np.float64).copy()
        if opts.wrap_angle:
            x0 = wrap_state(x0)
        guess = initial_guess(self.ocp, x0)
        if opts.warm_start:
            for _ in range(opts.warm_start_iterations):
                prepared = rti_prepare(self.ocp, guess, self.settings)
                sol = rti_feedback(prepared, x0, self.settings)
                if sol.status != SolverStatus.CONVERGED:
                    break
                step = max(float(np.abs(sol.xs - guess.xs).max()),
                           float(np.abs(sol.us - guess.us).max()))
                guess = sol
                if step < 1e-9:
                    break
        self.solution = guess
        self.stored = guess.copy()
        self.prepared = rti_prepare(self.ocp, guess, self.settings)
        self.pid_integrator = 0.0
        self.cycle_count = 0
        self.telemetry = []
        self._next_solve_t: float | None = None
        self._u_ff = 0.0
        self._x_ref = guess.xs[1].copy()
        self._last_failed = False

    # ------------------------------------------------------------------
    def _align_guess(self, x: np.ndarray) -> bool:
        """Shift stored trajectories by whole turns so the guess starts next
        to the wrapped measurement (keeps stored angles bounded). Returns
        True when anything moved, in which case a cached RTI preparation is
        stale and must be rebuilt."""
        shifted = False
        for sol in (self.solution, self.stored):
            for j in (0, 1):
                shift = _TWO_PI * np.round((sol.xs[0, j] - x[j]) / _TWO_PI)
                if shift != 0.0:
                    sol.xs[:, j] -= shift
                    shifted = True
        return shifted

    def _run_backend(self, x: np.ndarray) -> Solution:
        opts = self.options
        if opts.solver_type == SQP_RTI:
            sol = rti_feedback(self.prepared, x, self.settings)
        elif opts.solver_type == DDP:
            sol = ddp_solve(self.ocp, x, self.solution, self.settings)
        else:
            sol = sqp_solve(self.ocp, x, self.solution, self.settings)
        return sol

    def compute_control(self, x_meas: np.ndarray, t: float) -> np.ndarray:
        """Torque command for both joints at time t.

        Runs the MPC pipeline when a cycle is due: wrap the measurement,
        solve (or fall back), update the stored trajectory, then apply
        friction compensation and clamping. Between cycles the feedforward
        torque is held (or PID-corrected around the predicted next state).
        """
        opts = self.options
        p = self.model
        x = np.asarray(x_meas, dtype=np.float64)
        if not np.all(np.isfinite(x)):
            raise ValueError("measurement must be finite")
        stale = False
        if opts.wrap_angle:
            x = wrap_state(x)
            stale = self._align_guess(x)

        due = self._next_solve_t is None or t >= self._next_solve_t - 1e-9
        if due:
            if stale and opts.solver_type == SQP_RTI:
                self.prepared = rti_prepare(self.ocp, self.solution, self.settings)
            self._solve_cycle(x, t)
            if self._next_solve_t is None:
                self._next_solve_t = t + opts.mpc_cycle_dt
            else:
                self._next_solve_t += opts.mpc_cycle_dt

        if opts.pd_tracking:
            u_act, self.pid_integrator = pid_adjust(
                x, self._x_ref, self._u_ff,
                (opts.pd_KP, opts.pd_KI, opts.pd_KD),
                opts.outer_cycle_dt, self.pid_integrator,
                p.active_joint, p.tau_max)
        else:
            u_act = self._u_ff

        u = np.zeros(2)
        u[p.active_joint] = np.clip(u_act, -p.tau_max, p.tau_max)
        budget = opts.friction_compensation_on_inactive_joint
        if budget > 0.0:
            u[p.inactive_joint] = friction_compensation(x[2:], budget, p)
        return u

    def _solve_cycle(self, x: np.ndarray, t: float) -> None:
        opts = self.options
        if self.force_fail_cycles > 0:
            self.force_fail_cycles -= 1
            sol = None
            failed = True
        else:
            sol = self._run_backend(x)
            failed = sol.status == SolverStatus.INFEASIBLE or \
                not np.all(np.isfinite(sol.us))

        fallback_used = False
        if not failed:
            self.solution = sol
            self.stored = sol.copy()
            self._u_ff = float(sol.us[0, 0])
            self._x_ref = sol.xs[1].copy()
        elif opts.fallback_on_solver_fail:
            self._u_ff = fallback_step(self)
            fallback_used = True
        else:
            self._u_ff = 0.0

        if opts.solver_type == SQP_RTI:
            # prepare the next cycle's QP around the freshest trajectory
            self.prepared = rti_prepare(self.ocp, self.solution, self.settings)

        self.telemetry.append(CycleLog(
            t=t,
            status="failed" if sol is None else sol.status.value,
            kkt=np.nan if sol is None else sol.kkt_residual,
            prepare_time=self.prepared.prepare_time if opts.solver_type == SQP_RTI else 0.0,
            solve_time=0.0 if sol is None else
            (sol.feedback_time if opts.solver_type == SQP_RTI else sol.total_time),
            fallback_used=fallback_used,
            failed=failed,
        u_cmd=self._u_ff))
        self.cycle_count += 1
        self._last_failed = failed


def fallback_step(controller: MpcController) -> float:
    """Pop the head of the stored input trajectory and shift it left,
    appending a zero input (the stored state plan shifts along)."""
    u0 = float(controller.stored.us[0, 0])
    controller.stored = shift_warm_start(controller.stored, controller.ocp.grid)
    controller.solution = controller.stored
    return u0


def controller_init(options: ControllerOptions, model: ModelParams,
                    target: np.ndarray | None = None) -> MpcController:
    """Build and initialize a controller (grid, cost, bounds, warm start)."""
    return MpcController(options, model, target)
