"""Coefficient-flow and invariant-evaluation tests with frozen oracles."""

import io
import math
from types import SimpleNamespace

import numpy as np
import pytest

from liedyn import invariant as inv
from liedyn.algebra import DomainError, algebra_preset
from liedyn.integrators import StepControl


QUAD = algebra_preset("quadratic6")
SPIN = algebra_preset("spin-classical")


# Hand-summed F(t) for h = (0,0,0,0, 1/2, 1/2), i.e. H = p^2/2 + q^2/2 on
# the basis (1, q, p, qp, q^2, p^2): linear sector rotates at frequency 1,
# quadratic sector closes among (qp, q^2, p^2).
F_HARMONIC = np.array([
    [0, 0, 0, 0, 0, 0],
    [0, 0, 1, 0, 0, 0],
    [0, -1, 0, 0, 0, 0],
    [0, 0, 0, 0, -2, 2],
    [0, 0, 0, 1, 0, 0],
    [0, 0, 0, -1, 0, 0],
], dtype=float)


def test_coefficient_matrix_zero_drive():
    h = inv.TimeCoefficients(dim=6, func=lambda t: np.zeros(6))
    assert np.array_equal(inv.coefficient_matrix(QUAD, h, 3.7), np.zeros((6, 6)))


def test_coefficient_matrix_spin_axis_field():
    h = inv.spin_coefficients(inv.constant_field(0.0, 0.0, 1.0))
    F = inv.coefficient_matrix(SPIN, h, 0.0)
    expect = np.zeros((3, 3))
    expect[0, 1] = -1.0
    expect[1, 0] = 1.0
    assert np.array_equal(F, expect)


def test_coefficient_matrix_harmonic_by_hand():
    h = inv.quartic_coefficients("constant", a=1.0)
    F = inv.coefficient_matrix(QUAD, h, 0.0)
    assert np.array_equal(F, F_HARMONIC)


def test_coefficient_matrix_outside_interval():
    h = inv.TimeCoefficients(dim=3, func=lambda t: np.array([0.0, 0.0, 1.0]),
                             interval=(0.0, 1.0))
    with pytest.raises(inv.IntervalError):
        inv.coefficient_matrix(SPIN, h, 2.0)


def test_constant_coefficients_are_stationary():
    # custom callable exercises the Python integration twin
    h = inv.TimeCoefficients(
        dim=3, func=lambda t: np.array([0.3, 0.4, 0.5]), label="static")
    path = inv.build_invariant(SPIN, h, (0.0, 5.0))
    assert np.max(np.abs(path.values - path.g0)) < 1e-12
    assert np.array_equal(path.g0, [0.3, 0.4, 0.5])  # default g0 = h(t0)


def test_spin_axis_rotation_closed_form():
    h = inv.spin_coefficients(inv.constant_field(0.0, 0.0, 1.0))
    path = inv.build_invariant(SPIN, h, (0.0, 10.0), g0=[1.0, 0.0, 0.0])
    expect = np.stack([np.cos(path.times), np.sin(path.times),
                       np.zeros_like(path.times)], axis=1)
    assert np.max(np.abs(path.values - expect)) < 1e-10
    # dense output between nodes
    t = 2.341
    assert np.max(np.abs(path(t) - [math.cos(t), math.sin(t), 0.0])) < 1e-10
    assert np.max(np.abs(path.deriv(t)
                         - [-math.sin(t), math.cos(t), 0.0])) < 1e-9


def test_stored_derivatives_are_definitional():
    h = inv.quartic_coefficients("periodic")
    path = inv.build_invariant(QUAD, h, (0.0, 20.0))
    recomputed = np.stack([inv.coefficient_matrix(QUAD, h, t) @ g
                           for t, g in zip(path.times, path.values)])
    assert np.max(np.abs(path.derivs - recomputed)) < 1e-12


def test_linearity_of_the_flow():
    h = inv.quartic_coefficients("periodic")
    span = (0.0, 30.0)
    a = inv.build_invariant(QUAD, h, span, g0=[0, 1, 0, 0, 0.5, 0.5])
    b = inv.build_invariant(QUAD, h, span, g0=[0, 0, 1, 1, 0, 0.2])
    combo = inv.build_invariant(
        QUAD, h, span,
        g0=2.0 * a.g0 - 0.5 * b.g0)
    assert np.max(np.abs(combo.values - (2.0 * a.values - 0.5 * b.values))) < 1e-10


def test_step_halving_shows_fifth_order():
    h = inv.quartic_coefficients("periodic")
    g0 = [0.0, 0.3, -0.2, 0.1, 0.5, 0.5]
    ref = inv.build_invariant(QUAD, h, (0.0, 10.0), g0=g0,
                              steps=StepControl(dt=1e-4, stride=100000))
    coarse = inv.build_invariant(QUAD, h, (0.0, 10.0), g0=g0,
                                 steps=StepControl(dt=0.02, stride=500))
    fine = inv.build_invariant(QUAD, h, (0.0, 10.0), g0=g0,
                               steps=StepControl(dt=0.01, stride=1000))
    e_coarse = np.linalg.norm(coarse.values[-1] - ref.values[-1])
    e_fine = np.linalg.norm(fine.values[-1] - ref.values[-1])
    assert 20 < e_coarse / e_fine < 45


def test_kernel_and_python_twin_agree():
    fast = inv.quartic_coefficients("periodic")
    drive = inv.omega_preset("periodic")

    def func(t):
        return np.array([0.0, 0.0, 0.0, 0.0, 0.5 * float(drive(t)), 0.5])

    slow = inv.TimeCoefficients(dim=6, func=func)
    g0 = [0.0, 1.0, 0.0, 0.2, 0.5, 0.5]
    pa = inv.build_invariant(QUAD, fast, (0.0, 10.0), g0=g0)
    pb = inv.build_invariant(QUAD, slow, (0.0, 10.0), g0=g0)
    assert np.max(np.abs(pa.values - pb.values)) < 1e-12


def test_adaptive_mode_matches_closed_form():
    h = inv.TimeCoefficients(dim=3, func=lambda t: np.array([0.0, 0.0, 1.0]))
    path = inv.build_invariant(SPIN, h, (0.0, 8.0), g0=[1.0, 0.0, 0.0],
                               steps=StepControl(mode="adaptive", rtol=1e-10))
    expect = np.stack([np.cos(path.times), np.sin(path.times),
                       np.zeros_like(path.times)], axis=1)
    assert np.max(np.abs(path.values - expect)) < 1e-8


def test_growth_warning_on_unstable_drive():
    # inverted oscillator: the qp coefficient obeys g'' = 4 g, so |g| ~ e^{2t}
    h = inv.quartic_coefficients("constant", a=-1.0)
    with pytest.warns(inv.CoefficientGrowthWarning):
        inv.build_invariant(QUAD, h, (0.0, 15.0),
                            g0=[0, 0, 0, 1.0, 0, 0])


def test_uncoupled_components_are_flagged():
    h = inv.quartic_coefficients("periodic")
    path = inv.build_invariant(QUAD, h, (0.0, 5.0))
    quiet = path.uncoupled_indices()
    assert 0 in quiet      # the constant observable is never driven
    assert 4 not in quiet  # the q^2 coefficient moves


def test_evaluate_invariant_values():
    zero = inv.TimeCoefficients(dim=3, func=lambda t: np.zeros(3))
    path = inv.build_invariant(SPIN, zero, (0.0, 1.0), g0=[0.0, 0.0, 0.0])
    fn = inv.InvariantFunction(SPIN, path)
    assert inv.evaluate_invariant(fn, (0.4, -1.3), 0.5) == 0.0

    h3 = inv.spin_coefficients(inv.constant_field(0.0, 0.0, 1.0))
    path3 = inv.build_invariant(SPIN, h3, (0.0, 1.0), g0=[0.0, 0.0, 1.0])
    fn3 = inv.InvariantFunction(SPIN, path3)
    assert inv.evaluate_invariant(fn3, (0.5, 2.2), 0.0) == pytest.approx(-0.5)

    hq = inv.quartic_coefficients("constant", a=1.0)
    pathq = inv.build_invariant(QUAD, hq, (0.0, 1.0))
    fnq = inv.InvariantFunction(QUAD, pathq)
    assert inv.evaluate_invariant(fnq, (1.0, 1.0), 0.7) == pytest.approx(1.0)


def test_gradient_matches_finite_differences():
    h = inv.quartic_coefficients("periodic")
    path = inv.build_invariant(QUAD, h, (0.0, 5.0))
    fn = inv.InvariantFunction(QUAD, path)
    q, p, t = 0.7, -0.4, 2.3
    dq, dp = fn.gradient((q, p), t)
    eps = 1e-6
    fd_q = (fn.value((q + eps, p), t) - fn.value((q - eps, p), t)) / (2 * eps)
    fd_p = (fn.value((q, p + eps), t) - fn.value((q, p - eps), t)) / (2 * eps)
    assert dq == pytest.approx(fd_q, abs=1e-8)
    assert dp == pytest.approx(fd_p, abs=1e-8)


def test_evaluation_outside_grid_raises():
    h = inv.quartic_coefficients("periodic")
    path = inv.build_invariant(QUAD, h, (0.0, 1.0))
    fn = inv.InvariantFunction(QUAD, path)
    with pytest.raises(inv.IntervalError):
        fn.value((0.1, 0.2), 2.0)


def test_series_rejects_out_of_domain_states():
    h = inv.spin_coefficients(inv.constant_field(0.0, 0.0, 1.0))
    path = inv.build_invariant(SPIN, h, (0.0, 1.0))
    fn = inv.InvariantFunction(SPIN, path)
    times = np.array([0.0, 0.5, 1.0])
    states = np.array([[0.0, 0.0], [0.5, 0.1], [1.5, 0.0]])
    with pytest.raises(DomainError):
        fn.series(times, states)


def test_drift_report_on_exact_harmonic_motion():
    h = inv.quartic_coefficients("constant", a=1.0)
    path = inv.build_invariant(QUAD, h, (0.0, 10.0))
    fn = inv.InvariantFunction(QUAD, path)
    ts = np.linspace(0.0, 10.0, 401)
    traj = SimpleNamespace(times=ts,
                           states=np.stack([np.sin(ts), np.cos(ts)], axis=1))
    rep = inv.invariant_drift(fn, traj)
    assert rep.i0 == pytest.approx(0.5)
    assert rep.max_drift < 1e-12
    assert rep.rel_drift < 1e-12
    assert rep.n_samples == 401
    assert "max |dI|" in str(rep)


def test_csv_round_trip_is_bit_identical():
    h = inv.quartic_coefficients("quasiperiodic")
    path = inv.build_invariant(QUAD, h, (0.0, 7.0),
                               g0=[0.1, -0.2, 0.3, 1 / 3, 0.5, 2 / 7])
    buf = io.StringIO()
    path.to_csv(buf)
    text = buf.getvalue()
    assert text.splitlines()[0] == ("t,g1,g2,g3,g4,g5,g6,"
                                    "dg1,dg2,dg3,dg4,dg5,dg6")
    back = inv.CoefficientPath.from_csv(io.StringIO(text))
    assert np.array_equal(back.times, path.times)
    assert np.array_equal(back.values, path.values)
    assert np.array_equal(back.derivs, path.derivs)


def test_build_rejects_bad_inputs():
    h = inv.quartic_coefficients("periodic")
    with pytest.raises(ValueError):
        inv.build_invariant(SPIN, h, (0.0, 1.0))  # dim mismatch
    with pytest.raises(ValueError):
        inv.build_invariant(QUAD, h, (0.0, 1.0), g0=[1.0, 2.0])
    hfin = inv.TimeCoefficients(dim=6, func=lambda t: np.zeros(6),
                                interval=(0.0, 2.0))
    with pytest.raises(inv.IntervalError):
        inv.build_invariant(QUAD, hfin, (0.0, 3.0))


def test_omega_presets():
    assert inv.omega_preset("periodic")(1.0) == pytest.approx(0.0, abs=1e-15)
    assert inv.omega_preset("resonant")(0.0) == pytest.approx(1.1)
    q = inv.omega_preset("quasiperiodic")
    assert q(0.0) == pytest.approx(1.0)
    assert q.deriv(0.0) == pytest.approx(0.0)
    with pytest.raises(KeyError):
        inv.omega_preset("nope")


def test_quasiperiodic_field_components():
    B = inv.QUASIPERIODIC_FIELD
    assert np.allclose(B(0.0), [1.0, 0.0, 1.0])
    t = 1.7
    assert B(t)[0] == pytest.approx(math.cos(math.e * t / 2))
    assert B(t)[2] == pytest.approx(math.cos(math.pi * t / 2))
    assert B.deriv(t)[0] == pytest.approx(
        -math.e / 2 * math.sin(math.e * t / 2))
