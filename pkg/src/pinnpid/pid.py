"""Time-varying PID law and the surrogate-driven discrete error recursion.

The gain matrix stacks proportional, integral and derivative blocks as
F = [K^p, K^i, K^d] (m x 3n); the error state stacks the matching error
vectors E = (e_prop, e_int, e_deri). The integral error advances by
trapezoid quadrature of the surrogate prediction over one sampling
interval, the derivative error by a backward difference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class GainMatrix:
    """PID gain blocks, each m x n."""

    kp: np.ndarray
    ki: np.ndarray
    kd: np.ndarray

    def __post_init__(self):
        self.kp = np.atleast_2d(np.asarray(self.kp, dtype=float))
        self.ki = np.atleast_2d(np.asarray(self.ki, dtype=float))
        self.kd = np.atleast_2d(np.asarray(self.kd, dtype=float))
        if not (self.kp.shape == self.ki.shape == self.kd.shape):
            raise ValueError("gain blocks must share one m x n shape")

    @property
    def m(self) -> int:
        return self.kp.shape[0]

    @property
    def n(self) -> int:
        return self.kp.shape[1]

    def stacked(self) -> np.ndarray:
        return np.hstack([self.kp, self.ki, self.kd])

    @classmethod
    def from_stacked(cls, f: np.ndarray) -> "GainMatrix":
        f = np.atleast_2d(np.asarray(f, dtype=float))
        n = f.shape[1] // 3
        if 3 * n != f.shape[1]:
            raise ValueError("stacked gain width must be a multiple of 3")
        return cls(kp=f[:, :n], ki=f[:, n : 2 * n], kd=f[:, 2 * n :])

    def copy(self) -> "GainMatrix":
        return GainMatrix(self.kp.copy(), self.ki.copy(), self.kd.copy())


@dataclass
class ErrorState:
    e_prop: np.ndarray
    e_int: np.ndarray
    e_deri: np.ndarray

    def __post_init__(self):
        self.e_prop = np.asarray(self.e_prop, dtype=float)
        self.e_int = np.asarray(self.e_int, dtype=float)
        self.e_deri = np.asarray(self.e_deri, dtype=float)

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.e_prop, self.e_int, self.e_deri])


@dataclass(frozen=True)
class GainBounds:
    """Per-entry box on the stacked gain matrix (lower <= upper, equality pins)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_2d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_2d(np.asarray(self.upper, dtype=float))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.shape != hi.shape or not np.all(lo <= hi):
            raise ValueError("gain bounds need lower <= upper entrywise")

    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)


def diagonal_gain_bounds(n_state, n_input, kp_range, ki_range, kd_range,
                         coords=None) -> GainBounds:
    """Bounds realizing per-channel scalar gains on selected state coordinates.

    Channel i acts on coordinate coords[i] (default i); every other entry is
    pinned to zero. This encodes gain sets given as one interval per PID term
    per channel.
    """
    coords = list(range(n_input)) if coords is None else list(coords)
    lo = np.zeros((n_input, 3 * n_state))
    hi = np.zeros((n_input, 3 * n_state))
    for i, j in enumerate(coords):
        for block, (a, b) in enumerate([kp_range, ki_range, kd_range]):
            lo[i, block * n_state + j] = a
            hi[i, block * n_state + j] = b
    return GainBounds(lo, hi)


def control_input(gains: GainMatrix, errors: ErrorState, input_bounds=None) -> np.ndarray:
    """u = F E, then clipped into the input box when bounds are given."""
    f = gains.stacked()
    e = errors.stacked()
    if f.shape[1] != e.shape[0]:
        raise ValueError("gain and error dimensions disagree")
    u = f @ e
    if input_bounds is not None:
        u = np.clip(u, input_bounds.lower, input_bounds.upper)
    return u


def trapezoid_weights(dt: float, n_quad: int) -> np.ndarray:
    if n_quad < 2:
        raise ValueError("need at least 2 quadrature panels")
    w = np.full(n_quad + 1, dt / n_quad)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def error_init(model, x0, x_ref_0, x_ref_init, dt: float, u_prev=None) -> ErrorState:
    """First error state: zero integral, derivative from the reference rate
    minus the surrogate's initial time derivative (evaluated at u_prev = 0
    unless an input is supplied, which breaks the u_0 circularity)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    x0 = np.asarray(x0, dtype=float)
    x_ref_0 = np.asarray(x_ref_0, dtype=float)
    x_ref_init = np.asarray(x_ref_init, dtype=float)
    if u_prev is None:
        u_prev = np.zeros(model.m)
    rate = model.time_derivative(0.0, x0, np.asarray(u_prev, dtype=float))
    return ErrorState(
        e_prop=x_ref_0 - x0,
        e_int=np.zeros_like(x0),
        e_deri=(x_ref_0 - x_ref_init) / dt - rate,
    )


def error_update(model, x_ref_k, x_ref_next, x_k, u_k, errors: ErrorState,
                 dt: float, n_quad: int = 10, x_meas_next=None,
                 int_freeze=None) -> ErrorState:
    """Advance the error state across one interval using the surrogate.

    e_prop comes from the surrogate's dt prediction, unless a fresh
    measurement ``x_meas_next`` is supplied (closed-loop feedback path).
    ``int_freeze`` masks coordinates whose integral is held (anti-windup).
    """
    x_ref_k = np.asarray(x_ref_k, dtype=float)
    x_ref_next = np.asarray(x_ref_next, dtype=float)
    taus = np.linspace(0.0, dt, n_quad + 1)
    values = model.predict(taus, np.asarray(x_k, dtype=float), np.asarray(u_k, dtype=float))
    weights = trapezoid_weights(dt, n_quad)
    increment = weights @ (x_ref_k - values)
    if int_freeze is not None:
        increment = np.where(int_freeze, 0.0, increment)
    x_end = values[-1] if x_meas_next is None else np.asarray(x_meas_next, dtype=float)
    e_prop = x_ref_next - x_end
    return ErrorState(
        e_prop=e_prop,
        e_int=errors.e_int + increment,
        e_deri=(e_prop - errors.e_prop) / dt,
    )


def antiwindup_freeze(gains: GainMatrix, u_raw, input_bounds, increment) -> np.ndarray:
    """Coordinates to hold: their integral channel is saturated and the pending
    increment would push the raw input further into saturation."""
    u_raw = np.asarray(u_raw, dtype=float)
    at_hi = u_raw >= np.asarray(input_bounds.upper)
    at_lo = u_raw <= np.asarray(input_bounds.lower)
    freeze = np.zeros(gains.n, dtype=bool)
    for j in range(gains.n):
        push = gains.ki[:, j] * increment[j]
        freeze[j] = np.any((at_hi & (push > 0)) | (at_lo & (push < 0)))
    return freeze
