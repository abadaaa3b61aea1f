"""Integrator kernel tests against closed-form and convergence oracles."""

import math

import numpy as np
import pytest

from liedyn import integrators as itg
from liedyn.algebra import algebra_preset


def run_quartic(y0, dt, n_steps, stride=1, omega_kind=itg.OMEGA_CONST,
                omega_a=1.0, eps=0.0, kind=itg.RHS_QUARTIC):
    par = np.array([float(omega_kind), omega_a, eps])
    return itg.run_fixed(kind, 0.0, np.asarray(y0, float), dt, n_steps,
                         stride, par)


def test_harmonic_oscillator_matches_closed_form():
    # q'' = -q from (0, 1): q = sin t, p = cos t.
    n = 20000
    ts, ys, fs, status = run_quartic([0.0, 1.0], 1e-3, n, stride=100)
    assert status == 0
    assert np.max(np.abs(ys[:, 0] - np.sin(ts))) < 1e-10
    assert np.max(np.abs(ys[:, 1] - np.cos(ts))) < 1e-10
    # stored derivatives are the exact right-hand side at the nodes
    assert np.max(np.abs(fs[:, 0] - ys[:, 1])) == 0.0
    assert np.max(np.abs(fs[:, 1] + ys[:, 0])) == 0.0


def test_harmonic_return_after_full_period():
    n = int(round(2 * math.pi / 1e-3))
    dt = 2 * math.pi / n
    ts, ys, _, _ = run_quartic([0.0, 1.0], dt, n)
    assert abs(ys[-1, 0] - 0.0) < 1e-8
    assert abs(ys[-1, 1] - 1.0) < 1e-8


def test_node_times_are_exact_grid_multiples():
    ts, _, _, _ = run_quartic([0.3, -0.2], 1e-3, 5000, stride=7)
    steps = np.arange(0, 5001, 7)
    assert np.array_equal(ts, steps * 1e-3)


def test_fifth_order_convergence():
    y0 = [0.4, 0.3]
    kw = dict(omega_kind=itg.OMEGA_PERIODIC, eps=0.01)
    ref = run_quartic(y0, 1e-4, 50000, stride=50000, **kw)[1][-1]
    coarse = run_quartic(y0, 0.02, 250, stride=250, **kw)[1][-1]
    fine = run_quartic(y0, 0.01, 500, stride=500, **kw)[1][-1]
    ratio = np.linalg.norm(coarse - ref) / np.linalg.norm(fine - ref)
    assert 20 < ratio < 45  # ~2**5 for a 5th-order method


def test_python_twin_matches_kernel_bitwise():
    def rhs(t, y):
        return np.array([y[1], -math.cos(itg._PI_HALF * t) * y[0]
                         - 0.01 * y[0] ** 3])

    y0 = [0.7, -0.4]
    a = run_quartic(y0, 1e-3, 2000, stride=10, omega_kind=itg.OMEGA_PERIODIC,
                    eps=0.01)
    b = itg.run_fixed_py(rhs, 0.0, np.asarray(y0, float), 1e-3, 2000, 10)
    assert np.max(np.abs(a[1] - b[1])) < 1e-12


def test_domain_guard_truncates_two_level():
    # constant field along x spins (q, p) = (0, pi/2) through the q = -1 pole
    par = np.array([1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    ts, ys, fs, status = itg.run_fixed(
        itg.RHS_TWO_LEVEL, 0.0, np.array([0.0, math.pi / 2]), 1e-3, 5000, 10,
        par, q_limit=1.0 - 1e-6)
    assert status == 1
    assert ts[-1] < 5.0
    assert np.all(np.abs(ys[:, 0]) < 1.0 - 1e-6)
    assert len(ts) == len(ys) == len(fs)


def test_two_level_conserves_energy_for_static_field():
    # H = B . O with constant B is autonomous, so it is conserved
    par = np.array([0.3, 0.0, 0.0, 0.4, 0.5, 0.0, 0.0])

    def energy(q, p):
        s = np.sqrt(1 - q ** 2)
        return 0.3 * s * np.cos(p) + 0.4 * s * np.sin(p) + 0.5 * (-q)

    ts, ys, _, status = itg.run_fixed(
        itg.RHS_TWO_LEVEL, 0.0, np.array([0.2, 0.3]), 1e-3, 20000, 100, par,
        q_limit=1.0 - 1e-6)
    assert status == 0
    e = energy(ys[:, 0], ys[:, 1])
    assert np.max(np.abs(e - e[0])) < 1e-12


def test_coefficient_ode_spin_rotation():
    # h = (0, 0, 1) with Levi-Civita structure rotates g in the 1-2 plane
    gamma = algebra_preset("spin-classical").constants.gamma
    par = np.array([0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0])
    ts, gs, _, _ = itg.run_fixed(itg.RHS_COEFF_SPIN, 0.0,
                                 np.array([1.0, 0.0, 0.0]), 1e-3, 10000, 100,
                                 par, mat=gamma)
    expect = np.stack([np.cos(ts), np.sin(ts), np.zeros_like(ts)], axis=1)
    assert np.max(np.abs(gs - expect)) < 1e-10


def test_coefficient_ode_constant_drive_is_stationary():
    # autonomous quadratic Hamiltonian: its own coefficients never move
    gamma = algebra_preset("quadratic6").constants.gamma
    par = np.array([float(itg.OMEGA_CONST), 1.0])
    g0 = np.array([0.0, 0.0, 0.0, 0.0, 0.5, 0.5])
    _, gs, _, _ = itg.run_fixed(itg.RHS_COEFF_QUARTIC, 0.0, g0, 1e-3, 5000,
                                50, par, mat=gamma)
    assert np.max(np.abs(gs - g0)) < 1e-12


def test_extended_quartic_conserves_augmented_energy():
    # (q, p, theta, J) flow keeps p^2/2 + Omega(theta) q^2/2 + J constant
    par = np.array([float(itg.OMEGA_PERIODIC), 0.0, 0.0])
    y0 = np.array([0.0, 1.0, 0.0, -0.5])
    ts, ys, _, status = itg.run_fixed(itg.RHS_QUARTIC_EXT, 0.0, y0, 1e-3,
                                      10000, 100, par)
    assert status == 0
    q, p, th, J = ys.T
    K = 0.5 * p ** 2 + 0.5 * np.cos(np.pi * th / 2) * q ** 2 + J
    assert np.max(np.abs(K - K[0])) < 1e-10
    assert np.max(np.abs(th - ts)) < 1e-11


def test_extended_two_level_conserves_augmented_energy():
    par = np.array([0.0, 1.0, math.e / 2, 0.0, 0.0, 1.0, math.pi / 2])
    y0 = np.array([0.2, 0.3, 0.0, 0.0])
    ts, ys, _, status = itg.run_fixed(itg.RHS_TWO_LEVEL_EXT, 0.0, y0, 1e-3,
                                      10000, 100, par, q_limit=1.0 - 1e-6)
    assert status == 0
    q, p, th, J = ys.T
    s = np.sqrt(1 - q ** 2)
    bx = np.cos(math.e * th / 2)
    bz = np.cos(math.pi * th / 2)
    K = bx * s * np.cos(p) + bz * (-q) + J
    assert np.max(np.abs(K - K[0])) < 1e-10
    assert np.max(np.abs(th - ts)) < 1e-11


def test_hermite_interpolation_on_harmonic_path():
    ts, ys, fs, _ = run_quartic([0.0, 1.0], 1e-3, 10000, stride=10)
    tq = np.linspace(0.005, 9.995, 777)
    vals = itg.hermite_interpolate(ts, ys, fs, tq)
    ders = itg.hermite_interpolate(ts, ys, fs, tq, derivative=True)
    assert np.max(np.abs(vals[:, 0] - np.sin(tq))) < 1e-10
    assert np.max(np.abs(ders[:, 0] - np.cos(tq))) < 1e-7
    # scalar query returns a flat state vector, exact at a node
    v = itg.hermite_interpolate(ts, ys, fs, ts[37])
    assert v.shape == (2,)
    assert np.array_equal(v, ys[37])


def test_hermite_rejects_out_of_span_query():
    ts, ys, fs, _ = run_quartic([0.0, 1.0], 1e-3, 100, stride=10)
    with pytest.raises(itg.PathRangeError):
        itg.hermite_interpolate(ts, ys, fs, 0.2)
    with pytest.raises(itg.PathRangeError):
        itg.hermite_interpolate(ts, ys, fs, -0.01)


def test_adaptive_mode_matches_closed_form():
    def rhs(t, y):
        return np.array([y[1], -y[0]])

    t1 = 2 * math.pi
    ts, ys, fs, status = itg.rk45_adaptive_py(rhs, 0.0, np.array([0.0, 1.0]),
                                              t1, rtol=1e-10, atol=1e-12)
    assert status == 0
    assert ts[-1] == pytest.approx(t1, abs=1e-12)
    assert abs(ys[-1, 0]) < 1e-8
    assert abs(ys[-1, 1] - 1.0) < 1e-8


def test_invalid_stepping_raises():
    with pytest.raises(itg.IntegrationError):
        run_quartic([0.0, 1.0], -1e-3, 100)
    with pytest.raises(itg.IntegrationError):
        itg.rk45_adaptive_py(lambda t, y: -y, 0.0, np.array([1.0]), -1.0)
