"""Segment-wise PID gain optimization over the transition surrogate.

Each sampling interval solves a small nonconvex program: roll the surrogate
H self-loop steps under u = F E with the gain matrix held constant, sum the
quadratic stage costs plus a gain regularizer, and descend with Adam while
projecting onto the feasible gain box. The gradient with respect to F is
assembled by a reverse sweep chained through the PID law, the error
recursion (including its quadrature nodes) and the network's input
pullbacks.

The regularizer is either the squared gain norm or, for the
mass-spring-damper plant, the norm plus a logarithmic barrier on the
algebraic stability value g = (K^d + D)(K^p + K) - M K^i.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from pinnpid.pid import ErrorState, GainBounds, GainMatrix, trapezoid_weights
from pinnpid.plants import MsdParams

BARRIER_G_MIN = 1e-6


class InfeasibleGainError(ValueError):
    """Barrier regularizer evaluated where the stability value is not positive."""


class SegmentDiverged(RuntimeError):
    """Gain optimization produced a non-finite cost twice."""


@dataclass
class CostWeights:
    q: np.ndarray
    r: np.ndarray
    mu: float = 1.0
    q_terminal: np.ndarray | None = None

    def __post_init__(self):
        self.q = np.atleast_2d(np.asarray(self.q, dtype=float))
        self.r = np.atleast_2d(np.asarray(self.r, dtype=float))
        if self.q_terminal is None:
            self.q_terminal = np.zeros_like(self.q)
        else:
            self.q_terminal = np.atleast_2d(np.asarray(self.q_terminal, dtype=float))
        for name, mat in (("q", self.q), ("q_terminal", self.q_terminal)):
            if not np.allclose(mat, mat.T):
                raise ValueError(f"{name} must be symmetric")
            if np.min(np.linalg.eigvalsh(mat)) < -1e-12:
                raise ValueError(f"{name} must be positive semidefinite")
        if not np.allclose(self.r, self.r.T) or np.min(np.linalg.eigvalsh(self.r)) <= 0:
            raise ValueError("r must be symmetric positive definite")
        if self.mu <= 0:
            raise ValueError("mu must be positive")


@dataclass
class AdamConfig:
    alpha: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    iteration: int = 0

    @classmethod
    def zeros(cls, shape) -> "AdamState":
        return cls(m=np.zeros(shape), v=np.zeros(shape))


def adam_step(state: AdamState, grad: np.ndarray, f: np.ndarray, cfg: AdamConfig):
    """One bias-corrected Adam update on the stacked gain array."""
    if not np.all(np.isfinite(grad)):
        raise ValueError("non-finite gradient in Adam update")
    it = state.iteration + 1
    m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad
    v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad * grad
    m_hat = m / (1.0 - cfg.beta1**it)
    v_hat = v / (1.0 - cfg.beta2**it)
    f_new = f - cfg.alpha * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return f_new, AdamState(m=m, v=v, iteration=it)


@dataclass(frozen=True)
class BarrierSchedule:
    rho_start: float = 1e4
    rho_end: float = 1e-3
    total: int = 1

    def __post_init__(self):
        if self.rho_start <= 0 or self.rho_end <= 0 or self.total < 1:
            raise ValueError("barrier parameters must be positive")

    def rho(self, iteration: int) -> float:
        if self.total == 1:
            return self.rho_end
        frac = min(max(iteration, 0), self.total - 1) / (self.total - 1)
        return self.rho_start + (self.rho_end - self.rho_start) * frac


def scalar_gains(f: np.ndarray, n: int):
    """Position-channel scalars (kp, ki, kd) of a stacked 1-input gain row."""
    return f[0, 0], f[0, n], f[0, 2 * n]


def msd_stability_value(plant: MsdParams, f: np.ndarray, n: int) -> float:
    kp, ki, kd = scalar_gains(f, n)
    return (kd + plant.damping) * (kp + plant.stiffness) - plant.mass * ki


def regularizer(f: np.ndarray, kind: str, plant=None, rho=None, n=None):
    """Theta(F) and its gradient; kind is 'norm' or 'barrier'."""
    theta = float(np.sum(f * f))
    grad = 2.0 * f.copy()
    if kind == "norm":
        return theta, grad
    if kind != "barrier":
        raise ValueError(f"unknown regularizer kind '{kind}'")
    if plant is None or rho is None or n is None:
        raise ValueError("barrier regularizer needs the plant, rho and state width")
    g = msd_stability_value(plant, f, n)
    if g <= 0:
        raise InfeasibleGainError(f"stability value g = {g:.3g} is not positive")
    kp, ki, kd = scalar_gains(f, n)
    theta -= np.log(g) / rho
    coeff = -1.0 / (rho * g)
    grad[0, 0] += coeff * (kd + plant.damping)
    grad[0, n] += coeff * (-plant.mass)
    grad[0, 2 * n] += coeff * (kp + plant.stiffness)
    return theta, grad


def stage_cost(e, u, gains: GainMatrix, weights: CostWeights, dt: float,
               regularizer_kind: str = "norm", plant=None, rho=None) -> float:
    """J = 0.5 (e'Qe + u'Ru) dt + mu Theta(F)."""
    e = np.asarray(e, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    f = gains.stacked()
    quad = 0.5 * (e @ weights.q @ e + u @ weights.r @ u) * dt
    theta, _ = regularizer(f, regularizer_kind, plant=plant, rho=rho, n=gains.n)
    return quad + weights.mu * theta


def project(gains: GainMatrix, bounds: GainBounds) -> GainMatrix:
    return GainMatrix.from_stacked(project_stacked(gains.stacked(), bounds))


def project_stacked(f: np.ndarray, bounds: GainBounds) -> np.ndarray:
    return np.clip(f, bounds.lower, bounds.upper)


def _restore_feasibility(f, bounds, plant, n):
    """Pull K^i down (g is affine in it) until g >= BARRIER_G_MIN."""
    g = msd_stability_value(plant, f, n)
    if g >= BARRIER_G_MIN:
        return f
    kp, _, kd = scalar_gains(f, n)
    ki_max = ((kd + plant.damping) * (kp + plant.stiffness) - BARRIER_G_MIN) / plant.mass
    f = f.copy()
    f[0, n] = max(min(f[0, n], ki_max), bounds.lower[0, n])
    if msd_stability_value(plant, f, n) < BARRIER_G_MIN / 2:
        raise InfeasibleGainError("cannot restore barrier feasibility inside the gain box")
    return f


def window_cost_and_grad(model, x0, errors0: ErrorState, refs, f: np.ndarray,
                         weights: CostWeights, dt: float, n_quad: int,
                         input_bounds=None, regularizer_kind: str = "norm",
                         plant=None, rho=None):
    """Lookahead cost, its barrier-free value, and the gradient w.r.t. F.

    refs has H+1 rows; the surrogate is unrolled H steps with F constant.
    Returns (plain cost, total cost, dcost/dF).
    """
    refs = np.atleast_2d(np.asarray(refs, dtype=float))
    horizon = refs.shape[0] - 1
    if horizon < 1:
        raise ValueError("need at least a 1-step window")
    n = errors0.e_prop.shape[0]
    w_quad = trapezoid_weights(dt, n_quad)
    taus = np.linspace(0.0, dt, n_quad + 1)
    q, r, q_t = weights.q, weights.r, weights.q_terminal

    # forward sweep, caching what the reverse pass needs
    e_props = [errors0.e_prop]
    e_stacks = []
    us = []
    actives = []
    tapes = []
    values_all = []
    x = np.asarray(x0, dtype=float)
    e = errors0
    quad_cost = 0.0
    for j in range(horizon):
        e_stack = e.stacked()
        u_raw = f @ e_stack
        if input_bounds is not None:
            u = np.clip(u_raw, input_bounds.lower, input_bounds.upper)
            active = (u_raw > input_bounds.lower) & (u_raw < input_bounds.upper)
        else:
            u = u_raw
            active = np.ones_like(u_raw, dtype=bool)
        quad_cost += 0.5 * (e.e_prop @ q @ e.e_prop + u @ r @ u) * dt
        values, tape = model.predict_with_tape(taus, x, u)
        increment = w_quad @ (refs[j] - values)
        e_prop_next = refs[j + 1] - values[-1]
        e = ErrorState(
            e_prop=e_prop_next,
            e_int=e.e_int + increment,
            e_deri=(e_prop_next - e.e_prop) / dt,
        )
        e_stacks.append(e_stack)
        us.append(u)
        actives.append(active)
        tapes.append(tape)
        values_all.append(values)
        e_props.append(e_prop_next)
        x = values[-1]
    e_h = e_props[-1]
    quad_cost += 0.5 * (e_h @ q_t @ e_h)
    theta, theta_grad = regularizer(f, regularizer_kind, plant=plant, rho=rho, n=n)
    plain = quad_cost + weights.mu * float(np.sum(f * f))
    total = quad_cost + weights.mu * theta

    # reverse sweep
    grad_f = weights.mu * theta_grad
    cx = np.zeros(n)
    cep = q_t @ e_h
    cei = np.zeros(n)
    ced = np.zeros(n)
    for j in range(horizon - 1, -1, -1):
        cep = cep + ced / dt
        cep_prev = -ced / dt
        cx = cx - cep
        cei_prev = cei.copy()
        c_values = -np.outer(w_quad, cei)
        c_values[-1] += cx
        cx_prev, cu = model.predict_vjp(tapes[j], c_values)
        cep_prev = cep_prev + q @ e_props[j] * dt
        cu = cu + r @ us[j] * dt
        cu_raw = np.where(actives[j], cu, 0.0)
        grad_f += np.outer(cu_raw, e_stacks[j])
        c_stack = f.T @ cu_raw
        cep = cep_prev + c_stack[:n]
        cei = cei_prev + c_stack[n : 2 * n]
        ced = c_stack[2 * n :]
        cx = cx_prev
    return plain, total, grad_f


@dataclass
class SegmentResult:
    gains: GainMatrix
    cost: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)


def optimize_segment(model, x_k, errors_k: ErrorState, refs, weights: CostWeights,
                     adam: AdamConfig, bounds: GainBounds, regularizer_kind: str = "norm",
                     barrier: BarrierSchedule | None = None, plant=None,
                     input_bounds=None, n_quad: int = 10, max_iters: int = 200,
                     tol: float = 1e-6, init_gains: GainMatrix | None = None,
                     keep_trace: bool = False) -> SegmentResult:
    """Projected Adam on the lookahead window; returns the best iterate.

    Iterates until the max-norm gain change drops below ``tol`` (tol = 0
    disables early stopping) or ``max_iters`` is hit. Ranking uses the
    barrier-free cost so iterates stay comparable across the rho schedule.
    """
    n = errors_k.e_prop.shape[0]
    f = bounds.center() if init_gains is None else project_stacked(init_gains.stacked(), bounds)
    f = f.copy()
    if regularizer_kind == "barrier":
        if plant is None:
            raise ValueError("barrier regularizer needs the plant parameters")
        if barrier is None:
            barrier = BarrierSchedule(total=max_iters)
        if msd_stability_value(plant, f, n) <= 0:
            f = bounds.center()
        f = _restore_feasibility(f, bounds, plant, n)
    state = AdamState.zeros(f.shape)
    alpha_halved = False
    cfg = adam
    best_cost = np.inf
    best_f = f.copy()
    trace = []
    iterations = 0
    converged = False
    for it in range(max_iters):
        rho = barrier.rho(it) if regularizer_kind == "barrier" else None
        plain, total, grad = window_cost_and_grad(
            model, x_k, errors_k, refs, f, weights, model.dt, n_quad,
            input_bounds=input_bounds, regularizer_kind=regularizer_kind,
            plant=plant, rho=rho,
        )
        if not np.isfinite(total) or not np.all(np.isfinite(grad)):
            if alpha_halved:
                raise SegmentDiverged(
                    f"non-finite cost at iteration {it} (alpha already halved)"
                )
            cfg = AdamConfig(alpha=cfg.alpha / 2, beta1=cfg.beta1,
                             beta2=cfg.beta2, eps=cfg.eps)
            state = AdamState.zeros(f.shape)
            alpha_halved = True
            continue
        if plain < best_cost:
            best_cost = plain
            best_f = f.copy()
        if keep_trace:
            trace.append((it, total, f.copy()))
        f_new, state = adam_step(state, grad, f, cfg)
        f_new = project_stacked(f_new, bounds)
        if regularizer_kind == "barrier":
            f_new = _restore_feasibility(f_new, bounds, plant, n)
        delta = float(np.max(np.abs(f_new - f)))
        f = f_new
        iterations = it + 1
        if tol > 0 and delta < tol:
            converged = True
            break
    plain, _, _ = window_cost_and_grad(
        model, x_k, errors_k, refs, f, weights, model.dt, n_quad,
        input_bounds=input_bounds, regularizer_kind="norm",
    )
    if plain < best_cost:
        best_cost = plain
        best_f = f.copy()
    return SegmentResult(
        gains=GainMatrix.from_stacked(best_f),
        cost=best_cost,
        iterations=iterations,
        converged=converged,
        trace=trace,
    )
