"""Finite-dimensional spin evolution and the operator form of the invariant.

Mirrors the classical side of the package in matrix form: spin-S generator
triples replace the classical observables, a magnetic schedule B(t) drives
H(t) = B(t) . S, and the coefficient flow g(t) is built by the *same*
`build_invariant` code path used classically.  The resulting operator
I(t) = sum_k g_k(t) S_k has constant expectation along the Schrodinger
evolution and a time-independent spectrum; both are checked here.

The time-extended construction used classically (a clock coordinate plus
its conjugate momentum) has no finite-dimensional operator counterpart, so
this module verifies its measurable consequences directly instead:
expectation conservation and isospectrality of I(t).

Mixed states are covered by linearity: conservation for every pure state
implies conservation for any density matrix built from them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence, TextIO

import numpy as np

from .algebra import DOMAIN_MARGIN, DomainError, LieAlgebra, algebra_preset
from .invariant import (
    CoefficientPath,
    TimeCoefficients,
    TwoToneField,
    QUASIPERIODIC_FIELD,
    build_invariant,
    spin_coefficients,
)
from .integrators import StepControl

HERMITICITY_TOL = 1e-12
CLOSURE_TOL = 1e-10
STEP_PHASE_LIMIT = 0.1   # max allowed step * ||H|| / hbar
_CHUNK = 256             # steps per batched-eigh block

# two-node fourth-order commutator-free exponential stepping:
# nodes at t + (1/2 -+ sqrt(3)/6) h, each exponential mixing both nodes
_CF4_SHIFT = math.sqrt(3.0) / 6.0
_CF4_C1 = 0.5 - _CF4_SHIFT
_CF4_C2 = 0.5 + _CF4_SHIFT
_CF4_A = 0.25 - _CF4_SHIFT
_CF4_B = 0.25 + _CF4_SHIFT


# --- spin representations ---------------------------------------------------

@dataclass(frozen=True)
class QuantumAlgebra:
    """Spin-S generator triple (Sx, Sy, Sz) in the Sz eigenbasis."""

    spin: float
    dim_rep: int
    generators: np.ndarray          # (3, N, N) complex, Hermitian
    constants: object               # shared classical StructureConstants
    hbar: float = 1.0

    def casimir(self) -> np.ndarray:
        """The total-spin matrix sum_k S_k^2 (= hbar^2 S(S+1) identity)."""
        return np.einsum("kij,kjl->il", self.generators, self.generators)


def spin_matrices(spin: float, hbar: float = 1.0) -> QuantumAlgebra:
    """Standard (2S+1)-dimensional spin generators from the ladder rules.

    The commutators are checked on construction against the same structure
    constants used by the classical spin algebra.
    """
    two_s = 2.0 * spin
    if spin < 0 or abs(two_s - round(two_s)) > 1e-12:
        raise ValueError(f"spin must be a nonnegative half-integer, got {spin}")
    if hbar <= 0:
        raise ValueError("hbar must be positive")
    n = int(round(two_s)) + 1
    m = spin - np.arange(n)                       # S, S-1, ..., -S
    # raising operator: <m+1| S+ |m> = hbar sqrt(S(S+1) - m(m+1))
    raise_amp = hbar * np.sqrt(spin * (spin + 1) - m[1:] * (m[1:] + 1))
    s_plus = np.zeros((n, n), dtype=complex)
    s_plus[np.arange(n - 1), np.arange(1, n)] = raise_amp
    s_minus = s_plus.conj().T
    sx = 0.5 * (s_plus + s_minus)
    sy = -0.5j * (s_plus - s_minus)
    sz = np.diag(hbar * m).astype(complex)
    gens = np.stack([sx, sy, sz])

    alg = algebra_preset("spin-classical")
    gamma = alg.constants.gamma
    for k in range(3):
        herm = np.abs(gens[k] - gens[k].conj().T).max()
        if herm > HERMITICITY_TOL:
            raise AssertionError(f"generator {k} not Hermitian: {herm:.2e}")
    for i in range(3):
        for j in range(3):
            comm = (gens[i] @ gens[j] - gens[j] @ gens[i]) / (1j * hbar)
            target = np.einsum("k,kab->ab", gamma[i, j], gens)
            resid = np.abs(comm - target).max()
            if resid > CLOSURE_TOL:
                raise AssertionError(
                    f"commutator [{i},{j}] closure residual {resid:.2e}")
    return QuantumAlgebra(spin=float(spin), dim_rep=n, generators=gens,
                          constants=alg.constants, hbar=float(hbar))


def _unitaries_from_hermitian(a: np.ndarray) -> np.ndarray:
    """exp(-i a) for a stack of Hermitian matrices, via eigendecomposition."""
    w, v = np.linalg.eigh(a)
    phase = np.exp(-1j * w)
    return np.einsum("tik,tk,tjk->tij", v, phase, v.conj())


def _field_callable(field) -> Callable[[float], np.ndarray]:
    if field is None:
        return QUASIPERIODIC_FIELD
    if isinstance(field, (TwoToneField, TimeCoefficients)):
        return field
    if callable(field):
        return field
    b = np.asarray(field, dtype=float)
    if b.shape == (3,):
        return lambda t: b
    raise TypeError("field must be a callable, a TwoToneField, or a 3-vector")


# --- evolution --------------------------------------------------------------

@dataclass(frozen=True)
class StateTrajectory:
    """Strided record of a pure-state evolution."""

    times: np.ndarray               # (n,)
    states: np.ndarray              # (n, N) complex
    spin: float
    hbar: float
    method: str
    step: float
    n_steps: int

    def __post_init__(self):
        self.times.setflags(write=False)
        self.states.setflags(write=False)

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.states, axis=1)

    def expectations(self, ops: np.ndarray) -> np.ndarray:
        """Real expectation values of a stack of Hermitian operators.

        Returns shape (n_times, n_ops).
        """
        ops = np.asarray(ops)
        if ops.ndim == 2:
            ops = ops[None]
        vals = np.einsum("ti,kij,tj->tk", self.states.conj(), ops,
                         self.states)
        return vals.real

    def spin_expectations(self, qalg: QuantumAlgebra) -> np.ndarray:
        """<S_x>, <S_y>, <S_z> at every stored time, shape (n, 3)."""
        return self.expectations(qalg.generators)


def evolve(qalg: QuantumAlgebra, field, psi0, t_span,
           steps: StepControl = StepControl(),
           method: str = "cf4") -> StateTrajectory:
    """Propagate a pure state under H(t) = B(t) . S.

    ``method="cf4"`` (default) uses two-node fourth-order commutator-free
    exponential steps; ``method="midpoint"`` uses the single-exponential
    midpoint rule.  Every exponential is built by Hermitian
    eigendecomposition, so each step is unitary to machine precision.

    The step must resolve the fastest phase: steps with
    ``dt * S * max|B| >= 0.1`` are rejected with a usable-step hint
    (for spin matrices ||H|| = hbar * S * |B| exactly).
    """
    if method not in ("cf4", "midpoint"):
        raise ValueError(f"unknown method {method!r}; use 'cf4' or 'midpoint'")
    b_of_t = _field_callable(field)
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.shape != (qalg.dim_rep,):
        raise ValueError(
            f"psi0 must have shape ({qalg.dim_rep},), got {psi0.shape}")
    nrm = np.linalg.norm(psi0)
    if abs(nrm - 1.0) > 1e-10:
        raise ValueError(f"psi0 must be normalized; ||psi0|| = {nrm:.6g}")

    t0, t1 = float(t_span[0]), float(t_span[1])
    dt, n_steps = steps.plan(t0, t1)
    spin_scale = max(qalg.spin, 0.5)

    def b_at(ts: np.ndarray) -> np.ndarray:
        return np.array([np.asarray(b_of_t(t), dtype=float) for t in ts])

    # reject steps that cannot resolve the phase, with a usable hint
    sample = b_at(t0 + dt * np.arange(n_steps + 1))
    max_b = float(np.linalg.norm(sample, axis=1).max())
    phase = dt * spin_scale * max_b
    if phase >= STEP_PHASE_LIMIT:
        good = STEP_PHASE_LIMIT / (spin_scale * max_b)
        raise ValueError(
            f"step {dt:g} too large for spin {qalg.spin:g} and "
            f"max|B| = {max_b:g} (phase {phase:.3g} per step); "
            f"reduce the step below {good:.3g}")

    n_out = n_steps // steps.stride + 1
    out_t = np.empty(n_out)
    out_psi = np.empty((n_out, qalg.dim_rep), dtype=complex)
    out_t[0] = t0
    out_psi[0] = psi0
    gens_over_hbar = qalg.generators / qalg.hbar

    psi = psi0.copy()
    m = 1
    for k0 in range(0, n_steps, _CHUNK):
        k1 = min(k0 + _CHUNK, n_steps)
        t_starts = t0 + dt * np.arange(k0, k1)
        if method == "midpoint":
            b_mid = b_at(t_starts + 0.5 * dt)
            u_all = _unitaries_from_hermitian(
                dt * np.einsum("tc,cij->tij", b_mid, gens_over_hbar))
            u_right = None
        else:
            b1 = b_at(t_starts + _CF4_C1 * dt)
            b2 = b_at(t_starts + _CF4_C2 * dt)
            # right factor (applied first) weights the early node
            u_right = _unitaries_from_hermitian(
                dt * np.einsum("tc,cij->tij",
                               _CF4_B * b1 + _CF4_A * b2, gens_over_hbar))
            u_all = _unitaries_from_hermitian(
                dt * np.einsum("tc,cij->tij",
                               _CF4_A * b1 + _CF4_B * b2, gens_over_hbar))
        for i in range(k1 - k0):
            if u_right is not None:
                psi = u_right[i] @ psi
            psi = u_all[i] @ psi
            done = k0 + i + 1
            if done % steps.stride == 0:
                out_t[m] = t0 + done * dt
                out_psi[m] = psi
                m += 1
    return StateTrajectory(times=out_t[:m], states=out_psi[:m],
                           spin=qalg.spin, hbar=qalg.hbar, method=method,
                           step=dt, n_steps=n_steps)


# --- coherent states --------------------------------------------------------

def spin_coherent_state(qalg: QuantumAlgebra, x0) -> np.ndarray:
    """Coherent state pointing along the classical direction of (q0, p0).

    The classical chart maps (q, p) to the unit vector
    (sqrt(1-q^2) cos p, sqrt(1-q^2) sin p, -q); the returned state is the
    highest-weight state rotated to that direction, so
    <S>/(hbar S) equals the classical observable triple exactly.
    """
    q0, p0 = float(x0[0]), float(x0[1])
    if abs(q0) >= 1.0 - DOMAIN_MARGIN:
        raise DomainError(f"|q0| = {abs(q0):g} too close to the chart poles")
    direction = np.array([math.sqrt(1.0 - q0 * q0) * math.cos(p0),
                          math.sqrt(1.0 - q0 * q0) * math.sin(p0),
                          -q0])
    theta = math.acos(direction[2])
    phi = math.atan2(direction[1], direction[0])
    highest = np.zeros(qalg.dim_rep, dtype=complex)
    highest[0] = 1.0
    sy = qalg.generators[1] / qalg.hbar
    sz = qalg.generators[2] / qalg.hbar
    tilt = _unitaries_from_hermitian((theta * sy)[None])[0]
    turn = _unitaries_from_hermitian((phi * sz)[None])[0]
    return turn @ (tilt @ highest)


# --- the operator invariant -------------------------------------------------

@dataclass(frozen=True)
class QuantumInvariant:
    """Operator path I(t) = sum_k g_k(t) S_k with dense output in t."""

    qalg: QuantumAlgebra
    path: CoefficientPath

    def matrix(self, t: float) -> np.ndarray:
        return np.einsum("k,kij->ij", self.path(t), self.qalg.generators)

    def matrices(self, times) -> np.ndarray:
        g = self.path(np.asarray(times, dtype=float))
        return np.einsum("tk,kij->tij", g, self.qalg.generators)

    def eigenvalues(self, t: float) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix(t))


def quantum_invariant(qalg: QuantumAlgebra, field, t_span,
                      g0=None,
                      steps: StepControl = StepControl()) -> QuantumInvariant:
    """Build the operator invariant from the shared coefficient flow.

    The coefficients g(t) come from the same ``build_invariant`` call the
    classical side uses (same structure constants, same integrator), so
    classical and quantum invariants are built from bit-identical data.
    """
    b_of_t = _field_callable(field)
    if isinstance(b_of_t, TimeCoefficients):
        h = b_of_t
    else:
        h = spin_coefficients(b_of_t)
    alg = algebra_preset("spin-classical")
    path = build_invariant(alg, h, t_span, g0=g0, steps=steps)
    return QuantumInvariant(qalg=qalg, path=path)


def expectation_conservation(states: StateTrajectory,
                             inv: QuantumInvariant) -> float:
    """max_t |<I(t)> - <I(0)>| along a state trajectory.

    The expectation is evaluated at every stored time; times outside the
    coefficient path's span raise the path's interval error.
    """
    g = inv.path(states.times)                       # (n, 3)
    ops = states.expectations(inv.qalg.generators)   # (n, 3)
    expect = np.einsum("tk,tk->t", g, ops)
    return float(np.abs(expect - expect[0]).max())


# --- classical limit --------------------------------------------------------

@dataclass(frozen=True)
class ClassicalLimitReport:
    """Normalized spin expectations against the classical two-level flow."""

    spin: float
    times: np.ndarray
    quantum: np.ndarray             # (n, 3): <S>/(hbar S)
    classical: np.ndarray           # (n, 3): observable triple O(x(t))
    max_deviation: float

    def __str__(self) -> str:
        return (f"S = {self.spin:g}: max ||<S>/(hbar S) - O(x(t))|| = "
                f"{self.max_deviation:.3e} over {self.times.size} samples")


def classical_limit_check(spin: float, field, x0, t_span,
                          steps: StepControl = StepControl(),
                          method: str = "cf4") -> ClassicalLimitReport:
    """Compare the normalized spin expectations with the classical flow.

    Both sides run under the same B(t) on the same output grid: the
    quantum side from the coherent state at (q0, p0), the classical side
    from (q0, p0) under the two-level preset.  The deviation shrinks like
    1/S for generic fields and vanishes for any S when the comparison is
    a rigid rotation (linear spin Hamiltonians rotate expectations at the
    classical rate at every S).
    """
    from . import dynamics as dyn

    qalg = spin_matrices(spin)
    psi0 = spin_coherent_state(qalg, x0)
    qtraj = evolve(qalg, field, psi0, t_span, steps=steps, method=method)
    expect = qtraj.spin_expectations(qalg) / (qalg.hbar * qalg.spin)

    spec = dyn.two_level_spec(field=field)
    ctraj = dyn.integrate(spec, x0, t_span, steps=steps)
    if ctraj.times.shape != qtraj.times.shape or not np.array_equal(
            ctraj.times, qtraj.times):
        raise ValueError("classical and quantum grids failed to align")
    q, p = ctraj.states[:, 0], ctraj.states[:, 1]
    classical = np.stack(spec.algebra.observe(q, p), axis=-1)
    dev = float(np.linalg.norm(expect - classical, axis=1).max())
    return ClassicalLimitReport(spin=float(spin), times=qtraj.times,
                                quantum=expect, classical=classical,
                                max_deviation=dev)


# --- reporting --------------------------------------------------------------

def expectation_csv(states: StateTrajectory, qalg: QuantumAlgebra,
                    stream: TextIO,
                    inv: QuantumInvariant | None = None) -> None:
    """Write "t,Sx,Sy,Sz,I_expect,norm" rows at full precision."""
    spins = states.spin_expectations(qalg)
    norms = states.norms()
    if inv is not None:
        g = inv.path(states.times)
        i_vals = np.einsum("tk,tk->t", g, spins)
    else:
        i_vals = np.full(states.times.size, np.nan)
    stream.write("t,Sx,Sy,Sz,I_expect,norm\n")
    for i, t in enumerate(states.times):
        row = (t, spins[i, 0], spins[i, 1], spins[i, 2], i_vals[i], norms[i])
        stream.write(",".join(f"{v:.17g}" for v in row) + "\n")
