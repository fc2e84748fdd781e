"""Feedforward tanh network with hand-rolled automatic differentiation.

The network maps a stacked input row (t, x, u) through an affine [-1, 1]
rescaling, a stack of tanh hidden layers and a linear output layer. All
derivative passes needed downstream are implemented directly on that
structure:

- reverse mode over the flat parameter vector (``grad_params``),
- reverse mode to the raw inputs (``grad_inputs``),
- forward mode along the time coordinate (``time_derivative``),
- reverse-over-forward for gradients of functions of the time derivative
  (``grad_params_dual``), which the physics-residual training loss needs.

Everything operates on float64 and is pure: identical arguments give
bit-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NetworkSpec:
    """Layer widths, input layer first. Hidden layers use tanh, output is linear."""

    layer_widths: tuple[int, ...]

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 3:
            raise ValueError("need at least one hidden layer")
        if any(w < 1 for w in widths):
            raise ValueError("all layer widths must be >= 1")

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def output_dim(self) -> int:
        return self.layer_widths[-1]

    def param_count(self) -> int:
        ws = self.layer_widths
        return sum(ws[i] * ws[i + 1] + ws[i + 1] for i in range(len(ws) - 1))

    def param_slices(self):
        """Per layer: (weight slice, bias slice, (rows, cols)) into the flat vector."""
        out = []
        offset = 0
        ws = self.layer_widths
        for i in range(len(ws) - 1):
            rows, cols = ws[i + 1], ws[i]
            w_sl = slice(offset, offset + rows * cols)
            offset += rows * cols
            b_sl = slice(offset, offset + rows)
            offset += rows
            out.append((w_sl, b_sl, (rows, cols)))
        return out


@dataclass(frozen=True)
class InputScaling:
    """Per-coordinate affine map of raw inputs onto [-1, 1]."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("scaling bounds must be matching 1-D arrays")
        if not np.all(lo < hi):
            raise ValueError("scaling requires lower < upper componentwise")

    @property
    def slope(self) -> np.ndarray:
        return 2.0 / (self.upper - self.lower)

    def encode(self, raw: np.ndarray) -> np.ndarray:
        return (raw - self.lower) * self.slope - 1.0


def glorot_params(spec: NetworkSpec, rng: np.random.Generator) -> np.ndarray:
    """Glorot-uniform weights, zero biases, packed into one flat vector."""
    params = np.zeros(spec.param_count())
    for w_sl, _, (rows, cols) in spec.param_slices():
        limit = np.sqrt(6.0 / (rows + cols))
        params[w_sl] = rng.uniform(-limit, limit, size=rows * cols)
    return params


class FeedforwardNet:
    """A tanh MLP over ``[t, x, u]`` rows with analytic derivative passes.

    ``n_state`` and ``n_input`` fix how the input row splits into the time,
    state and control blocks; the scaling must cover all ``1 + n + m``
    coordinates in that order.
    """

    def __init__(self, spec: NetworkSpec, scaling: InputScaling, n_state: int, n_input: int):
        if spec.input_dim != 1 + n_state + n_input:
            raise ValueError("input width must equal 1 + n_state + n_input")
        if scaling.lower.shape[0] != spec.input_dim:
            raise ValueError("scaling dimension must match the input width")
        self.spec = spec
        self.scaling = scaling
        self.n_state = n_state
        self.n_input = n_input
        self._slices = spec.param_slices()

    # -- assembly -----------------------------------------------------------

    def stack_rows(self, t, x, u) -> np.ndarray:
        """Broadcast (t, x, u) into an (N, input_dim) matrix of raw rows."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if x.ndim == 1:
            x = np.broadcast_to(x, (t.shape[0], self.n_state))
        if u.ndim == 1:
            u = np.broadcast_to(u, (t.shape[0], self.n_input))
        if x.shape != (t.shape[0], self.n_state) or u.shape != (t.shape[0], self.n_input):
            raise ValueError("mismatched batch shapes for (t, x, u)")
        return np.column_stack([t, x, u])

    def unpack(self, params: np.ndarray):
        params = np.asarray(params, dtype=float)
        if params.shape != (self.spec.param_count(),):
            raise ValueError(
                f"parameter vector must have length {self.spec.param_count()}"
            )
        return [
            (params[w_sl].reshape(shape), params[b_sl])
            for w_sl, b_sl, shape in self._slices
        ]

    def init_params(self, seed: int) -> np.ndarray:
        return glorot_params(self.spec, np.random.default_rng(seed))

    # -- forward ------------------------------------------------------------

    def forward_raw(self, params, raw_rows, tangent_rows=None, want_tape=False):
        """Evaluate the net on raw (unscaled) rows, optionally with a tangent pass.

        Returns (values, tangents, tape); tangents is None when no tangent was
        requested. The tape holds per layer the activations, tanh derivatives
        and both tangent streams so the reverse passes recompute nothing.
        """
        layers = self.unpack(params)
        z = self.scaling.encode(raw_rows)
        zdot = None if tangent_rows is None else tangent_rows * self.scaling.slope
        zs = [z]
        gs = [None]
        adots = [None]
        zdots = [zdot]
        last = len(layers) - 1
        for i, (w, b) in enumerate(layers):
            a = z @ w.T + b
            adot = None if zdot is None else zdot @ w.T
            if i < last:
                z = np.tanh(a)
                g = 1.0 - z * z
                zdot = None if adot is None else g * adot
            else:
                z = a
                g = None
                zdot = adot
            zs.append(z)
            gs.append(g)
            adots.append(adot)
            zdots.append(zdot)
        tape = (zs, gs, adots, zdots) if want_tape else None
        return z, zdot, tape

    def forward(self, params, t, x, u) -> np.ndarray:
        """phi-hat(t, x, u): single sample in, (output_dim,) out."""
        rows = self._single_rows(t, x, u)
        values, _, _ = self.forward_raw(params, rows)
        return values[0]

    def forward_batch(self, params, t, x, u) -> np.ndarray:
        values, _, _ = self.forward_raw(params, self.stack_rows(t, x, u))
        return values

    # -- derivative passes ----------------------------------------------------

    def backward_raw(self, params, tape, cot_values, cot_tangents=None):
        """Reverse sweep. Returns (param grads, input-value cotangent rows).

        ``cot_values`` pairs with the value output, ``cot_tangents`` with the
        tangent output of a dual forward pass; weight gradients then include
        the tangent path (the W reappearing in Adot = Zdot_prev @ W.T).
        """
        layers = self.unpack(params)
        zs, gs, adots, zdots = tape
        grads = np.zeros_like(np.asarray(params, dtype=float))
        gview = [
            (grads[w_sl].reshape(shape), grads[b_sl])
            for w_sl, b_sl, shape in self._slices
        ]
        cz = np.asarray(cot_values, dtype=float)
        czdot = cot_tangents
        last = len(layers) - 1
        for i in range(last, -1, -1):
            w, _ = layers[i]
            if i == last:
                ca = cz
                cadot = czdot
            else:
                g = gs[i + 1]
                ca = cz * g
                cadot = None
                if czdot is not None:
                    cadot = czdot * g
                    ca += cadot * (-2.0 * zs[i + 1]) * adots[i + 1]
            gw, gb = gview[i]
            gw += ca.T @ zs[i]
            gb += ca.sum(axis=0)
            if cadot is not None:
                gw += cadot.T @ zdots[i]
            cz = ca @ w
            czdot = None if cadot is None else cadot @ w
        return grads, cz

    def grad_params(self, params, t, x, u, cotangents) -> np.ndarray:
        """Sum over the batch of (d phi/d params)^T @ cotangent."""
        rows = self.stack_rows(t, x, u)
        cot = np.asarray(cotangents, dtype=float)
        if cot.ndim == 1:
            cot = cot[None, :]
        if cot.shape != (rows.shape[0], self.spec.output_dim):
            raise ValueError("cotangent shape must be (batch, output_dim)")
        _, _, tape = self.forward_raw(params, rows, want_tape=True)
        grads, _ = self.backward_raw(params, tape, cot)
        return grads

    def grad_inputs(self, params, t, x, u, cotangent):
        """Cotangent pullbacks to the raw x and u blocks of one sample."""
        rows = self._single_rows(t, x, u)
        cot = np.asarray(cotangent, dtype=float)[None, :]
        _, _, tape = self.forward_raw(params, rows, want_tape=True)
        _, c_scaled = self.backward_raw(params, tape, cot)
        c_raw = (c_scaled * self.scaling.slope)[0]
        return c_raw[1 : 1 + self.n_state], c_raw[1 + self.n_state :]

    def time_tangent_rows(self, n: int) -> np.ndarray:
        rows = np.zeros((n, self.spec.input_dim))
        rows[:, 0] = 1.0
        return rows

    def time_derivative(self, params, t, x, u) -> np.ndarray:
        """d phi/dt for one sample, scaling chain factor included."""
        rows = self._single_rows(t, x, u)
        _, tangents, _ = self.forward_raw(params, rows, self.time_tangent_rows(1))
        return tangents[0]

    def time_derivative_batch(self, params, t, x, u) -> np.ndarray:
        rows = self.stack_rows(t, x, u)
        _, tangents, _ = self.forward_raw(
            params, rows, self.time_tangent_rows(rows.shape[0])
        )
        return tangents

    def value_and_time_derivative(self, params, t, x, u):
        rows = self.stack_rows(t, x, u)
        values, tangents, _ = self.forward_raw(
            params, rows, self.time_tangent_rows(rows.shape[0])
        )
        return values, tangents

    def grad_params_dual(self, params, t, x, u, cot_values, cot_tangents) -> np.ndarray:
        """Parameter gradient with cotangents on both phi-hat and d phi/dt."""
        rows = self.stack_rows(t, x, u)
        _, _, tape = self.forward_raw(
            params, rows, self.time_tangent_rows(rows.shape[0]), want_tape=True
        )
        grads, _ = self.backward_raw(
            params,
            tape,
            np.asarray(cot_values, dtype=float),
            np.asarray(cot_tangents, dtype=float),
        )
        return grads

    # -- helpers --------------------------------------------------------------

    def _single_rows(self, t, x, u) -> np.ndarray:
        t = float(t)
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if x.shape != (self.n_state,) or u.shape != (self.n_input,):
            raise ValueError("expected one sample with matching state/input widths")
        row = np.concatenate([[t], x, u])
        if not np.all(np.isfinite(row)):
            raise ValueError("non-finite network input")
        return row[None, :]
