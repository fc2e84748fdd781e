"""PID law and error-recursion checks against hand values and quadrature oracles."""

import numpy as np
import pytest

from pinnpid.network import FeedforwardNet, InputScaling, NetworkSpec
from pinnpid.model import PinnModel
from pinnpid.pid import (
    ErrorState,
    GainBounds,
    GainMatrix,
    antiwindup_freeze,
    control_input,
    diagonal_gain_bounds,
    error_init,
    error_update,
    trapezoid_weights,
)
from pinnpid.sampling import Box


def toy_model(seed=0, n=2, m=1, dt=0.2, eps=0.05):
    widths = (1 + n + m, 8, 8, n)
    lo = np.concatenate([[0.0], -2 * np.ones(n), -np.ones(m)])
    hi = np.concatenate([[dt + eps], 2 * np.ones(n), np.ones(m)])
    net = FeedforwardNet(NetworkSpec(widths), InputScaling(lo, hi), n, m)
    params = net.init_params(seed) if seed is not None else np.zeros(net.spec.param_count())
    return PinnModel(net=net, params=params, dt=dt, eps=eps)


class ReferenceModel:
    """Stand-in surrogate that reproduces the reference exactly."""

    def __init__(self, ref, m=1, dt=0.2):
        self.ref = np.asarray(ref, dtype=float)
        self.m = m
        self.dt = dt

    def predict(self, taus, x, u):
        return np.tile(self.ref, (len(np.atleast_1d(taus)), 1))

    def time_derivative(self, t, x, u):
        return np.zeros_like(self.ref)


class TestControlInput:
    def test_zero_errors(self):
        gains = GainMatrix(np.ones((1, 2)), np.ones((1, 2)), np.ones((1, 2)))
        e = ErrorState(np.zeros(2), np.zeros(2), np.zeros(2))
        assert np.array_equal(control_input(gains, e), np.zeros(1))

    def test_hand_dot_product_1d(self):
        gains = GainMatrix([[2.0]], [[0.5]], [[0.1]])
        e = ErrorState([0.3], [0.2], [-1.0])
        u = control_input(gains, e)
        assert u[0] == pytest.approx(0.6)

    def test_saturation(self):
        gains = GainMatrix([[1.7]], [[0.0]], [[0.0]])
        e = ErrorState([1.0], [0.0], [0.0])
        u = control_input(gains, e, Box([-1.0], [1.0]))
        assert u[0] == 1.0

    def test_linearity_before_saturation(self):
        rng = np.random.default_rng(8)
        gains = GainMatrix(*rng.standard_normal((3, 2, 3)))
        e1 = ErrorState(*rng.standard_normal((3, 3)))
        e2 = ErrorState(*rng.standard_normal((3, 3)))
        a, b = 0.3, -1.2
        combo = ErrorState(
            a * e1.e_prop + b * e2.e_prop,
            a * e1.e_int + b * e2.e_int,
            a * e1.e_deri + b * e2.e_deri,
        )
        np.testing.assert_allclose(
            control_input(gains, combo),
            a * control_input(gains, e1) + b * control_input(gains, e2),
            atol=1e-12,
        )

    def test_dimension_mismatch(self):
        gains = GainMatrix(np.ones((1, 2)), np.ones((1, 2)), np.ones((1, 2)))
        with pytest.raises(ValueError):
            control_input(gains, ErrorState([0.1], [0.0], [0.0]))


class TestErrorInit:
    def test_all_zero(self):
        model = toy_model(seed=None)  # zero parameters
        e = error_init(model, np.zeros(2), np.zeros(2), np.zeros(2), 0.2)
        assert np.array_equal(e.stacked(), np.zeros(6))

    def test_reference_rate_term(self):
        model = toy_model(seed=None)
        e = error_init(model, np.zeros(2), np.array([0.3, 0.0]), np.zeros(2), 0.2)
        np.testing.assert_allclose(e.e_deri, [1.5, 0.0])
        np.testing.assert_allclose(e.e_prop, [0.3, 0.0])
        assert np.array_equal(e.e_int, np.zeros(2))

    def test_rate_term_matches_finite_differences(self):
        model = toy_model(seed=4)
        x0 = np.array([0.2, -0.1])
        e = error_init(model, x0, np.zeros(2), np.zeros(2), 0.2)
        h = 1e-6
        u0 = np.zeros(1)
        fd = (model.predict(np.array([h]), x0, u0)[0] - model.predict(np.array([0.0]), x0, u0)[0]) / h
        np.testing.assert_allclose(e.e_deri, -fd, rtol=1e-4, atol=1e-6)


class TestErrorUpdate:
    def test_exact_model_tracks_reference(self):
        ref = np.array([0.4, 0.0])
        model = ReferenceModel(ref)
        e0 = ErrorState(np.zeros(2), np.zeros(2), np.zeros(2))
        e1 = error_update(model, ref, ref, ref, np.zeros(1), e0, 0.2)
        assert np.allclose(e1.e_prop, 0.0)
        assert np.allclose(e1.e_int, 0.0)

    def test_constant_integrand_is_exact(self):
        # model predicts 0, reference constant c: increment must be exactly c*dt
        model = ReferenceModel(np.zeros(2))
        c = np.array([0.7, -0.2])
        e0 = ErrorState(np.zeros(2), np.zeros(2), np.zeros(2))
        e1 = error_update(model, c, c, np.zeros(2), np.zeros(1), e0, 0.2, n_quad=7)
        np.testing.assert_allclose(e1.e_int, c * 0.2, rtol=1e-14)

    def test_quadrature_refinement(self):
        model = toy_model(seed=9)
        model.params = model.params * 0.5  # curvature of a trained-scale surrogate
        x = np.array([0.4, -0.3])
        u = np.array([0.2])
        ref = np.array([0.1, 0.0])
        e0 = ErrorState(np.zeros(2), np.zeros(2), np.zeros(2))
        coarse = error_update(model, ref, ref, x, u, e0, 0.2, n_quad=10)
        fine = error_update(model, ref, ref, x, u, e0, 0.2, n_quad=1000)
        assert np.max(np.abs(coarse.e_int - fine.e_int)) < 1e-4 * 0.2

    def test_telescoping_derivative_identity(self):
        model = toy_model(seed=2)
        rng = np.random.default_rng(0)
        dt = 0.2
        e = ErrorState(rng.standard_normal(2), np.zeros(2), np.zeros(2))
        e0_prop = e.e_prop.copy()
        total = np.zeros(2)
        x = np.array([0.1, 0.2])
        for k in range(6):
            ref = rng.standard_normal(2) * 0.3
            e = error_update(model, ref, ref, x, np.array([0.1]), e, dt)
            total += e.e_deri * dt
        np.testing.assert_allclose(total, e.e_prop - e0_prop, atol=1e-12)

    def test_measured_state_overrides_prediction(self):
        model = toy_model(seed=3)
        e0 = ErrorState(np.zeros(2), np.zeros(2), np.zeros(2))
        ref = np.array([0.2, 0.0])
        meas = np.array([0.15, 0.05])
        e1 = error_update(model, ref, ref, np.zeros(2), np.zeros(1), e0, 0.2,
                          x_meas_next=meas)
        np.testing.assert_allclose(e1.e_prop, ref - meas)


class TestQuadrature:
    def test_weights_sum_to_dt(self):
        w = trapezoid_weights(0.2, 10)
        assert w.sum() == pytest.approx(0.2)
        assert w[0] == pytest.approx(0.01) and w[5] == pytest.approx(0.02)

    def test_second_order_convergence(self):
        # integrate sin over [0, dt]: error drops ~4x per panel doubling
        dt = 0.2
        exact = 1.0 - np.cos(dt)
        errs = []
        for n_quad in (4, 8, 16):
            taus = np.linspace(0, dt, n_quad + 1)
            errs.append(abs(trapezoid_weights(dt, n_quad) @ np.sin(taus) - exact))
        assert 3.5 < errs[0] / errs[1] < 4.5
        assert 3.5 < errs[1] / errs[2] < 4.5


class TestBounds:
    def test_diagonal_bounds_pin_off_structure(self):
        b = diagonal_gain_bounds(4, 2, (0.0, 3.0), (-3.0, 3.0), (0.0, 3.0))
        assert b.lower.shape == (2, 12)
        assert b.upper[0, 0] == 3.0 and b.lower[0, 0] == 0.0
        assert b.lower[0, 4] == -3.0  # integral block, coordinate 0
        assert b.upper[0, 1] == 0.0 and b.lower[0, 1] == 0.0  # cross-coupling pinned
        assert b.upper[1, 0] == 0.0  # channel 2 does not see coordinate 1

    def test_antiwindup_freezes_pushing_coordinate(self):
        gains = GainMatrix([[1.0, 0.0]], [[2.0, 0.0]], [[0.5, 0.0]])
        bounds = Box([-1.0], [1.0])
        freeze = antiwindup_freeze(gains, np.array([1.4]), bounds, np.array([0.3, 0.1]))
        assert freeze[0]  # increment would push deeper into upper saturation
        assert not freeze[1]  # ki is zero on that coordinate
        freeze = antiwindup_freeze(gains, np.array([1.4]), bounds, np.array([-0.3, 0.0]))
        assert not freeze[0]  # unwinding is allowed
