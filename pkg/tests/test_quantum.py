"""Tests for spin representations, unitary evolution, and the operator invariant."""

import io
import math

import numpy as np
import pytest

from liedyn import quantum as qm
from liedyn.algebra import DomainError, algebra_preset
from liedyn.integrators import StepControl
from liedyn.invariant import IntervalError, build_invariant, spin_coefficients


@pytest.fixture(scope="module")
def half():
    return qm.spin_matrices(0.5)


@pytest.fixture(scope="module")
def spin5_run():
    """Shared S=5 quasiperiodic evolution with its invariant, t <= 100."""
    qalg = qm.spin_matrices(5.0)
    rng = np.random.default_rng(7)
    v = rng.normal(size=11) + 1j * rng.normal(size=11)
    v /= np.linalg.norm(v)
    states = qm.evolve(qalg, None, v, (0.0, 100.0))
    inv = qm.quantum_invariant(qalg, None, (0.0, 100.0))
    return qalg, states, inv


# ---------------------------------------------------------------------------
# representation construction
# ---------------------------------------------------------------------------

def test_half_spin_is_pauli_over_two(half):
    sx, sy, sz = half.generators
    assert np.allclose(sx, 0.5 * np.array([[0, 1], [1, 0]]), atol=1e-15)
    assert np.allclose(sy, 0.5 * np.array([[0, -1j], [1j, 0]]), atol=1e-15)
    assert np.allclose(sz, 0.5 * np.diag([1.0, -1.0]), atol=1e-15)
    assert half.dim_rep == 2


def test_spin_one_matrices():
    qa = qm.spin_matrices(1.0)
    assert np.allclose(qa.generators[2], np.diag([1.0, 0.0, -1.0]))
    r = 1.0 / math.sqrt(2.0)
    sx = np.array([[0, r, 0], [r, 0, r], [0, r, 0]])
    assert np.allclose(qa.generators[0], sx, atol=1e-15)


@pytest.mark.parametrize("spin", [0.5, 1.0, 1.5, 5.0, 20.0])
def test_casimir_is_s_s_plus_one(spin):
    qa = qm.spin_matrices(spin)
    target = spin * (spin + 1.0) * np.eye(qa.dim_rep)
    assert np.abs(qa.casimir() - target).max() < 1e-10


def test_commutators_match_classical_structure_constants(half):
    gamma = algebra_preset("spin-classical").constants.gamma
    g = half.generators
    for i in range(3):
        for j in range(3):
            comm = (g[i] @ g[j] - g[j] @ g[i]) / 1j
            target = np.einsum("k,kab->ab", gamma[i, j], g)
            assert np.abs(comm - target).max() < 1e-12


def test_invalid_spin_rejected():
    with pytest.raises(ValueError):
        qm.spin_matrices(0.3)
    with pytest.raises(ValueError):
        qm.spin_matrices(-1.0)
    with pytest.raises(ValueError):
        qm.spin_matrices(0.5, hbar=0.0)


def test_hbar_scales_generators(half):
    qa2 = qm.spin_matrices(0.5, hbar=2.0)
    assert np.allclose(qa2.generators, 2.0 * half.generators)
    assert np.abs(qa2.casimir() - 3.0 * np.eye(2)).max() < 1e-12


# ---------------------------------------------------------------------------
# evolution
# ---------------------------------------------------------------------------

def test_eigenstate_is_stationary(half):
    up = np.array([1.0, 0.0], dtype=complex)
    traj = qm.evolve(half, (0.0, 0.0, 1.0), up, (0.0, 10.0))
    e = traj.spin_expectations(half)
    assert np.abs(e - [0.0, 0.0, 0.5]).max() < 1e-12


def test_rabi_flopping_closed_form(half):
    # transverse unit field: <Sz>(t) = cos(t) / 2
    up = np.array([1.0, 0.0], dtype=complex)
    traj = qm.evolve(half, (1.0, 0.0, 0.0), up, (0.0, 20.0))
    sz = traj.spin_expectations(half)[:, 2]
    assert np.abs(sz - 0.5 * np.cos(traj.times)).max() < 1e-9


def test_unitarity_over_1e5_steps(half):
    up = np.array([1.0, 0.0], dtype=complex)
    traj = qm.evolve(half, None, up, (0.0, 100.0))
    assert traj.n_steps == 100000
    assert np.abs(traj.norms() - 1.0).max() < 1e-10


def test_midpoint_method_available_but_less_accurate(spin5_run):
    qalg, states, inv = spin5_run
    mid = qm.evolve(qalg, None, states.states[0], (0.0, 100.0),
                    method="midpoint")
    assert np.abs(mid.norms() - 1.0).max() < 1e-10
    drift_cf4 = qm.expectation_conservation(states, inv)
    drift_mid = qm.expectation_conservation(mid, inv)
    # measured: ~1e-12 for the two-node scheme vs ~2e-6 for midpoint
    assert drift_cf4 < 1e-7
    assert drift_mid > 100 * drift_cf4


def test_too_large_step_rejected_with_usable_hint():
    qa = qm.spin_matrices(20.0)
    psi = qm.spin_coherent_state(qa, (0.2, 0.3))
    with pytest.raises(ValueError) as err:
        qm.evolve(qa, None, psi, (0.0, 1.0), steps=StepControl(dt=0.01))
    msg = str(err.value)
    assert "reduce the step below" in msg
    hinted = float(msg.rsplit(None, 1)[-1])
    qm.evolve(qa, None, psi, (0.0, 1.0),
              steps=StepControl(dt=0.9 * hinted, stride=100))


def test_evolve_validates_state(half):
    with pytest.raises(ValueError):
        qm.evolve(half, None, np.array([1.0, 0.0, 0.0j]), (0.0, 1.0))
    with pytest.raises(ValueError):
        qm.evolve(half, None, np.array([1.0, 1.0j]), (0.0, 1.0))
    with pytest.raises(ValueError):
        qm.evolve(half, None, np.array([1.0, 0.0j]), (0.0, 1.0),
                  method="rk4")


# ---------------------------------------------------------------------------
# the operator invariant
# ---------------------------------------------------------------------------

def test_invariant_commuting_case(half):
    inv = qm.quantum_invariant(half, (0.0, 0.0, 1.0), (0.0, 10.0),
                               g0=(0.0, 0.0, 1.0))
    for t in (0.0, 3.3, 10.0):
        assert np.abs(inv.matrix(t) - half.generators[2]).max() < 1e-12


def test_invariant_rotation_oracle(half):
    # axial field rotates a transverse seed:
    # I(t) = cos t Sx + sin t Sy
    inv = qm.quantum_invariant(half, (0.0, 0.0, 1.0), (0.0, 10.0),
                               g0=(1.0, 0.0, 0.0))
    for t in (0.0, 1.0, 2.7, 9.9):
        target = (math.cos(t) * half.generators[0]
                  + math.sin(t) * half.generators[1])
        assert np.abs(inv.matrix(t) - target).max() < 1e-10


def test_coefficients_shared_with_classical_side_bitwise(half):
    # single code path: the operator coefficients are the same array the
    # classical invariant uses, not a re-derivation
    inv = qm.quantum_invariant(half, None, (0.0, 50.0))
    path = build_invariant(algebra_preset("spin-classical"),
                           spin_coefficients(qm.QUASIPERIODIC_FIELD),
                           (0.0, 50.0))
    assert np.array_equal(inv.path.values, path.values)
    assert np.array_equal(inv.path.times, path.times)


def test_invariant_accepts_prebuilt_coefficients(half):
    h = spin_coefficients(qm.QUASIPERIODIC_FIELD)
    inv = qm.quantum_invariant(half, h, (0.0, 10.0))
    assert inv.path.dim == 3


# ---------------------------------------------------------------------------
# expectation conservation
# ---------------------------------------------------------------------------

def test_expectation_conserved_under_rotation(half):
    rng = np.random.default_rng(3)
    v = rng.normal(size=2) + 1j * rng.normal(size=2)
    v /= np.linalg.norm(v)
    traj = qm.evolve(half, (0.0, 0.0, 1.0), v, (0.0, 10.0))
    inv = qm.quantum_invariant(half, (0.0, 0.0, 1.0), (0.0, 10.0),
                               g0=(1.0, 0.0, 0.0))
    assert qm.expectation_conservation(traj, inv) < 1e-8


def test_expectation_conserved_quasiperiodic_spin5(spin5_run):
    _, states, inv = spin5_run
    # measured ~1.4e-12; the budget is the integrator tolerance
    assert qm.expectation_conservation(states, inv) < 1e-7


def test_zero_seed_gives_zero_drift(half):
    up = np.array([1.0, 0.0], dtype=complex)
    traj = qm.evolve(half, None, up, (0.0, 5.0))
    inv = qm.quantum_invariant(half, None, (0.0, 5.0), g0=(0.0, 0.0, 0.0))
    assert qm.expectation_conservation(traj, inv) == 0.0


def test_grid_outside_path_span_raises(half):
    up = np.array([1.0, 0.0], dtype=complex)
    traj = qm.evolve(half, None, up, (0.0, 10.0))
    inv = qm.quantum_invariant(half, None, (0.0, 5.0))
    with pytest.raises(IntervalError):
        qm.expectation_conservation(traj, inv)


def test_isospectrality(spin5_run):
    qalg, _, _ = spin5_run
    qa = qm.spin_matrices(2.5)
    inv = qm.quantum_invariant(qa, None, (0.0, 100.0))
    e0 = inv.eigenvalues(0.0)
    for t in np.linspace(0.0, 100.0, 21):
        assert np.abs(inv.eigenvalues(float(t)) - e0).max() < 1e-8


# ---------------------------------------------------------------------------
# coherent states and the classical limit
# ---------------------------------------------------------------------------

def test_coherent_state_points_along_classical_direction():
    qa = qm.spin_matrices(20.0)
    psi = qm.spin_coherent_state(qa, (0.2, 0.3))
    assert abs(np.linalg.norm(psi) - 1.0) < 1e-12
    ex = np.einsum("i,kij,j->k", psi.conj(), qa.generators, psi).real / 20.0
    s = math.sqrt(1.0 - 0.04)
    target = [s * math.cos(0.3), s * math.sin(0.3), -0.2]
    assert np.abs(ex - target).max() < 1e-12


def test_coherent_state_rejects_pole():
    qa = qm.spin_matrices(1.0)
    with pytest.raises(DomainError):
        qm.spin_coherent_state(qa, (1.0, 0.0))


def test_classical_limit_precession_exact_at_any_spin():
    # a static axial field generates the same rigid rotation quantumly
    # and classically, so the comparison is exact even at S=1/2
    r = qm.classical_limit_check(0.5, (0.0, 0.0, 1.0), (0.2, 0.3),
                                 (0.0, 20.0))
    assert r.max_deviation < 1e-6


def test_classical_limit_zero_field():
    r = qm.classical_limit_check(1.0, (0.0, 0.0, 0.0), (0.2, 0.3),
                                 (0.0, 5.0))
    assert r.max_deviation < 1e-12


def test_classical_limit_quasiperiodic_field():
    # the drive stays linear in the spin operators, so the expectation
    # dynamics closes and matches the classical flow at machine level at
    # every S (measured 3.6e-13 at S=20); the 0.05 budget is the
    # contracted regression bound
    r = qm.classical_limit_check(5.0, None, (0.2, 0.3), (0.0, 50.0))
    assert r.max_deviation < 0.05
    assert r.max_deviation < 1e-9
    assert r.quantum.shape == r.classical.shape
    assert "S = 5" in str(r)


# ---------------------------------------------------------------------------
# reporting
# ---------------------------------------------------------------------------

def test_expectation_csv_format(half):
    up = np.array([1.0, 0.0], dtype=complex)
    traj = qm.evolve(half, (1.0, 0.0, 0.0), up, (0.0, 2.0))
    inv = qm.quantum_invariant(half, (1.0, 0.0, 0.0), (0.0, 2.0))
    buf = io.StringIO()
    qm.expectation_csv(traj, half, buf, inv=inv)
    lines = buf.getvalue().strip().split("\n")
    assert lines[0] == "t,Sx,Sy,Sz,I_expect,norm"
    assert len(lines) == traj.times.size + 1
    row = lines[5].split(",")
    assert float(row[3]) == traj.spin_expectations(half)[4, 2]
    assert float(row[5]) == traj.norms()[4]
    # without an invariant the I column is explicitly not-a-number
    buf2 = io.StringIO()
    qm.expectation_csv(traj, half, buf2)
    assert "nan" in buf2.getvalue().split("\n")[1]
