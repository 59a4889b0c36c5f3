"""iLQG (Gauss-Newton DDP) trajectory optimisation and the receding-horizon expert."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .dynamics import (DEFAULT_PARAMS, ControlInput, Track, VehicleParams, VehicleState,
                       rk4_batch, step_raw, track_frame_batch)

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    def __init__(self, msg: str, iteration: int | None = None, step: int | None = None):
        super().__init__(msg)
        self.iteration = iteration
        self.step = step


@dataclass(frozen=True)
class OcpSpec:
    horizon_steps: int = 50
    dt: float = 0.02
    w_center: float = 10.0
    w_speed: float = 1.0
    w_steer: float = 1.0
    w_throttle: float = 0.01
    w_center_terminal: float = 50.0
    w_speed_terminal: float = 5.0
    target_speed: float = 5.0
    max_iters: int = 100
    tol: float = 1e-6
    reg_init: float = 1e-6
    reg_max: float = 1e10

    def __post_init__(self):
        if self.horizon_steps < 2:
            raise ValueError("horizon_steps must be >= 2")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        weights = (self.w_center, self.w_speed, self.w_steer, self.w_throttle,
                   self.w_center_terminal, self.w_speed_terminal)
        if min(weights) < 0:
            raise ValueError("cost weights must be non-negative")


@dataclass
class PlannedTrajectory:
    states: np.ndarray        # (T+1, n)
    controls: np.ndarray      # (T, m)
    cost: float
    converged: bool
    value_reduction: float
    iterations: int = 0
    cost_history: list = field(default_factory=list)

    def vehicle_states(self, t0: float = 0.0, dt: float = 0.02) -> list[VehicleState]:
        return [VehicleState.from_array(x, t0 + k * dt) for k, x in enumerate(self.states)]

    def control_inputs(self) -> list[ControlInput]:
        return [ControlInput(float(u[0]), float(u[1])) for u in self.controls]


class VehicleProblem:
    """Centerline-tracking problem for the kinematic bicycle."""

    n, m = 4, 2

    def __init__(self, spec: OcpSpec, track: Track, params: VehicleParams = DEFAULT_PARAMS):
        self.spec, self.track, self.params = spec, track, params
        self._R = np.diag([spec.w_steer, spec.w_throttle])

    def step(self, x, u):
        return np.array(step_raw(x, float(u[0]), float(u[1]), self.spec.dt, self.params))

    def clip(self, u):
        return np.array(self.params.clip(float(u[0]), float(u[1])))

    @property
    def bounds(self):
        hi = np.array([self.params.steer_max, self.params.accel_max])
        return -hi, hi

    def state_diff(self, a, b):
        d = a - b
        d[2] = math.remainder(d[2], 2.0 * math.pi)
        return d

    def jacobians(self, X, U):
        """Complex-step Jacobians of the RK4 map at every knot."""
        h = 1e-30
        T = len(U)
        A = np.empty((T, 4, 4))
        B = np.empty((T, 4, 2))
        Xc, Uc = X[:-1].astype(complex), U.astype(complex)
        for j in range(4):
            Xp = Xc.copy()
            Xp[:, j] += 1j * h
            A[:, :, j] = rk4_batch(Xp, Uc, self.spec.dt, self.params).imag / h
        for j in range(2):
            Up = Uc.copy()
            Up[:, j] += 1j * h
            B[:, :, j] = rk4_batch(Xc, Up, self.spec.dt, self.params).imag / h
        return A, B

    def _terms(self, X):
        sp = self.spec
        _, e, normal = track_frame_batch(self.track, X[:, :2])
        w_c = np.full(len(X), sp.w_center)
        w_s = np.full(len(X), sp.w_speed)
        w_c[-1], w_s[-1] = sp.w_center_terminal, sp.w_speed_terminal
        return e, normal, w_c, w_s, X[:, 3] - sp.target_speed

    def cost(self, X, U):
        e, _, w_c, w_s, ds = self._terms(X)
        return float(np.sum(w_c * e**2 + w_s * ds**2) + np.einsum("ti,ij,tj->", U, self._R, U))

    def cost_derivs(self, X, U):
        e, normal, w_c, w_s, ds = self._terms(X)
        N = len(X)
        lx = np.zeros((N, 4))
        lxx = np.zeros((N, 4, 4))
        lx[:, :2] = (2.0 * w_c * e)[:, None] * normal
        lxx[:, :2, :2] = 2.0 * w_c[:, None, None] * normal[:, :, None] * normal[:, None, :]
        lx[:, 3] = 2.0 * w_s * ds
        lxx[:, 3, 3] = 2.0 * w_s
        lu = 2.0 * U @ self._R
        luu = np.broadcast_to(2.0 * self._R, (len(U), 2, 2)).copy()
        return lx, lxx, lu, luu, np.zeros((len(U), 2, 4))


class LinearQuadraticProblem:
    """Linear dynamics with quadratic cost; a test hook with a Riccati solution."""

    def __init__(self, A, B, Q, R, Qf):
        self.A, self.B, self.Q, self.R, self.Qf = map(np.asarray, (A, B, Q, R, Qf))
        self.n, self.m = self.B.shape

    def step(self, x, u):
        return self.A @ x + self.B @ u

    bounds = None

    def clip(self, u):
        return np.asarray(u, dtype=float)

    def state_diff(self, a, b):
        return a - b

    def jacobians(self, X, U):
        T = len(U)
        return np.broadcast_to(self.A, (T,) + self.A.shape), np.broadcast_to(self.B, (T,) + self.B.shape)

    def cost(self, X, U):
        return float(np.einsum("ti,ij,tj->", X[:-1], self.Q, X[:-1]) + X[-1] @ self.Qf @ X[-1]
                     + np.einsum("ti,ij,tj->", U, self.R, U))

    def cost_derivs(self, X, U):
        T = len(U)
        lx = 2.0 * X @ self.Q
        lx[-1] = 2.0 * self.Qf @ X[-1]
        lxx = np.broadcast_to(2.0 * self.Q, (T + 1, self.n, self.n)).copy()
        lxx[-1] = 2.0 * self.Qf
        lu = 2.0 * U @ self.R
        luu = np.broadcast_to(2.0 * self.R, (T, self.m, self.m)).copy()
        return lx, lxx, lu, luu, np.zeros((T, self.m, self.n))


def rollout(problem, x0, U):
    X = np.empty((len(U) + 1, len(x0)))
    X[0] = x0
    for k, u in enumerate(U):
        X[k + 1] = problem.step(X[k], u)
    return X


def _backward(problem, X, U, reg):
    A, B = problem.jacobians(X, U)
    lx, lxx, lu, luu, lux = problem.cost_derivs(X, U)
    T, m = U.shape
    kff = np.zeros((T, m))
    K = np.zeros((T, m, X.shape[1]))
    Vx, Vxx = lx[-1], lxx[-1]
    dv1 = dv2 = 0.0
    eye = np.eye(m)
    bounds = getattr(problem, "bounds", None)
    for k in range(T - 1, -1, -1):
        Ak, Bk = A[k], B[k]
        Qx = lx[k] + Ak.T @ Vx
        Qu = lu[k] + Bk.T @ Vx
        VA = Vxx @ Ak
        Qxx = lxx[k] + Ak.T @ VA
        Quu = luu[k] + Bk.T @ Vxx @ Bk
        Qux = lux[k] + Bk.T @ VA
        free = np.ones(m, dtype=bool)
        if bounds is not None:
            # saturated at the nominal and pushed further out: no gain on that channel
            free &= ~((U[k] >= bounds[1][:] - 1e-12) & (Qu < 0))
            free &= ~((U[k] <= bounds[0][:] + 1e-12) & (Qu > 0))
        try:
            L = np.linalg.cholesky(Quu + reg * eye)
        except np.linalg.LinAlgError:
            return None
        if free.all():
            sol = -np.linalg.solve(L.T, np.linalg.solve(L, np.column_stack([Qu, Qux])))
            kff[k], K[k] = sol[:, 0], sol[:, 1:]
        else:
            kff[k], K[k] = 0.0, 0.0
            if free.any():
                Hf = (Quu + reg * eye)[np.ix_(free, free)]
                sol = -np.linalg.solve(Hf, np.column_stack([Qu[free], Qux[free]]))
                kff[k][free], K[k][free] = sol[:, 0], sol[:, 1:]
        dv1 += kff[k] @ Qu
        dv2 += 0.5 * kff[k] @ Quu @ kff[k]
        Vx = Qx + K[k].T @ Quu @ kff[k] + K[k].T @ Qu + Qux.T @ kff[k]
        Vxx = Qxx + K[k].T @ Quu @ K[k] + K[k].T @ Qux + Qux.T @ K[k]
        Vxx = 0.5 * (Vxx + Vxx.T)
    return kff, K, dv1, dv2


ALPHAS = 0.5 ** np.arange(10)


def ilqg(problem, x0, U0, *, max_iters: int = 100, tol: float = 1e-6,
         reg_init: float = 1e-6, reg_max: float = 1e10) -> PlannedTrajectory:
    """Gauss-Newton DDP with Levenberg-Marquardt regularisation and line search.

    Accepted iterates strictly decrease the rollout cost, so the result never
    costs more than the initial guess.
    """
    x0 = np.asarray(x0, dtype=float)
    U = np.array([problem.clip(u) for u in np.asarray(U0, dtype=float)])
    X = rollout(problem, x0, U)
    J = problem.cost(X, U)
    if not (np.all(np.isfinite(X)) and math.isfinite(J)):
        raise SolverError("non-finite initial rollout", iteration=0)
    history = [J]
    reg = reg_init
    reduction = math.inf
    converged = False
    it = 0
    while it < max_iters:
        it += 1
        back = _backward(problem, X, U, reg)
        if back is None:
            reg *= 10.0
            log.debug("iter %d: Quu not positive definite, reg -> %.1e", it, reg)
            if reg > reg_max:
                break
            continue
        kff, K, dv1, dv2 = back
        reduction = -(dv1 + dv2)
        if reduction < tol:
            converged = True
            break
        accepted = False
        for alpha in ALPHAS:
            Xn = np.empty_like(X)
            Un = np.empty_like(U)
            Xn[0] = x0
            for k in range(len(U)):
                Un[k] = problem.clip(U[k] + alpha * kff[k] + K[k] @ problem.state_diff(Xn[k], X[k]))
                Xn[k + 1] = problem.step(Xn[k], Un[k])
            Jn = problem.cost(Xn, Un) if np.all(np.isfinite(Xn)) else math.inf
            if Jn < J:
                X, U, J = Xn, Un, Jn
                accepted = True
                break
        if accepted:
            history.append(J)
            reg = max(reg / 2.0, 1e-12)
        else:
            reg *= 10.0
            if reg > reg_max:
                break
    return PlannedTrajectory(X, U, J, converged, float(reduction), it, history)


def solve_ilqg(spec: OcpSpec, x0: VehicleState, track: Track,
               warm_start: Optional[PlannedTrajectory] = None,
               params: VehicleParams = DEFAULT_PARAMS) -> PlannedTrajectory:
    x = x0.as_array()
    if not np.all(np.isfinite(x)):
        raise SolverError(f"non-finite initial state {x0}")
    problem = VehicleProblem(spec, track, params)
    if warm_start is not None and len(warm_start.controls) == spec.horizon_steps:
        U0 = warm_start.controls
    else:
        U0 = np.zeros((spec.horizon_steps, 2))
    return ilqg(problem, x, U0, max_iters=spec.max_iters, tol=spec.tol,
                reg_init=spec.reg_init, reg_max=spec.reg_max)


def shift(plan: PlannedTrajectory) -> PlannedTrajectory:
    """Warm start for the next step: drop the first control, repeat the last."""
    U = np.vstack([plan.controls[1:], plan.controls[-1:]])
    return PlannedTrajectory(plan.states, U, plan.cost, False, math.inf)


@dataclass
class HorizonStep:
    state: VehicleState
    control: ControlInput          # expert control (first of the plan)
    plan: PlannedTrajectory
    applied: ControlInput          # control actually applied, after any perturbation


def receding_horizon(spec: OcpSpec, x0: VehicleState, track: Track, n_steps: int,
                     params: VehicleParams = DEFAULT_PARAMS,
                     perturb: Callable[[int, ControlInput], ControlInput] | None = None,
                     ) -> list[HorizonStep]:
    """Closed-loop MPC: solve, apply the first control, step, warm-start the next solve.

    ``perturb`` may alter the applied control (noise injection for data
    collection); the logged expert control and plan are left untouched.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    out: list[HorizonStep] = []
    state, warm = x0, None
    for i in range(n_steps):
        try:
            plan = solve_ilqg(spec, state, track, warm, params)
        except SolverError as exc:
            raise SolverError(f"step {i}: {exc}", exc.iteration, step=i) from exc
        u = ControlInput(float(plan.controls[0, 0]), float(plan.controls[0, 1]))
        applied = perturb(i, u) if perturb is not None else u
        applied = ControlInput(*params.clip(applied.steering, applied.throttle))
        out.append(HorizonStep(state, u, plan, applied))
        nxt = step_raw(state.as_array(), applied.steering, applied.throttle, spec.dt, params)
        state = VehicleState(*nxt, timestamp=state.timestamp + spec.dt)
        warm = shift(plan)
    return out

