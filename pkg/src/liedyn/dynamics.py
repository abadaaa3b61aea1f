"""Hamiltonian flows for algebra-spanned Hamiltonians plus perturbations.

A Hamiltonian here is H(x, t) = h(t) . O(x) + eps * V(x): a time-dependent
combination of Lie algebra basis observables plus an optional non-algebra
perturbation (the quartic term eps q^4 / 4 in the oscillator family).
Hamilton's equations dq/dt = dH/dp, dp/dt = -dH/dq are integrated with the
shared fixed-step order-5 Runge-Kutta kernel so trajectories and coefficient
paths carry matched error budgets.

All quantities are dimensionless.

Presets
-------
``quartic-periodic``       Omega(t) = cos(pi t / 2)
``quartic-resonant``       Omega(t) = 1 + 0.1 cos t (parametric resonance)
``quartic-quasiperiodic``  Omega(t) = [cos(e t / 2) + cos(pi t / 2)] / 2
``two-level``              H = B(t) . O on the classical spin chart
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, TextIO

import numpy as np

from . import integrators as itg
from .algebra import DOMAIN_MARGIN, LieAlgebra, algebra_preset
from .invariant import (OmegaDrive, QUASIPERIODIC_FIELD, TimeCoefficients,
                        TwoToneField, constant_field, omega_preset,
                        quartic_coefficients, spin_coefficients)


@dataclass(frozen=True)
class Perturbation:
    """Extra Hamiltonian term V(q, p) outside the algebra span."""

    value: Callable[[float, float], float]
    grad_q: Callable[[float, float], float]
    grad_p: Callable[[float, float], float]
    name: str = ""


def quartic_perturbation() -> Perturbation:
    """V = q^4 / 4 (the strength eps multiplies it in HamiltonianSpec)."""
    return Perturbation(value=lambda q, p: 0.25 * q ** 4,
                        grad_q=lambda q, p: q ** 3,
                        grad_p=lambda q, p: 0.0,
                        name="quartic")


@dataclass(frozen=True)
class HamiltonianSpec:
    """H(x, t) = h(t) . O(x) + eps * V(x) with integration metadata.

    ``kernel_kind``/``kernel_par`` select the compiled right-hand side when
    the spec matches a built-in family (negative kind means integrate via
    the Python twin).  ``ext_kind`` is the matching autonomous-extension
    right-hand side used by the extended-phase-space module.
    """

    algebra: LieAlgebra
    h: TimeCoefficients
    perturbation: Perturbation | None = None
    eps: float = 0.0
    label: str = "custom"
    kernel_kind: int = -1
    kernel_par: tuple[float, ...] = ()
    ext_kind: int = -1
    q_limit: float = math.inf

    def energy(self, x, t: float) -> float:
        """H(x, t)."""
        q, p = float(x[0]), float(x[1])
        self.algebra.require(q, p)
        val = float(np.dot(self.h(t), self.algebra.observe(q, p)))
        if self.perturbation is not None and self.eps != 0.0:
            val += self.eps * self.perturbation.value(q, p)
        return val

    def energy_series(self, times, states) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        states = np.asarray(states, dtype=float)
        q, p = states[:, 0], states[:, 1]
        obs = self.algebra.observe(q, p)
        hs = np.stack([self.h(t) for t in times])
        vals = np.einsum("nm,mn->n", hs, obs)
        if self.perturbation is not None and self.eps != 0.0:
            vals = vals + self.eps * np.asarray(
                self.perturbation.value(q, p), dtype=float)
        return vals


def hamilton_rhs(spec: HamiltonianSpec, x, t: float) -> tuple[float, float]:
    """(dq/dt, dp/dt) = (dH/dp, -dH/dq) at phase point ``x`` and time ``t``."""
    q, p = float(x[0]), float(x[1])
    spec.algebra.require(q, p)
    h = spec.h(t)
    gq, gp = spec.algebra.observe_gradients(q, p)
    dq = float(np.dot(h, gp))
    dp = -float(np.dot(h, gq))
    if spec.perturbation is not None and spec.eps != 0.0:
        dq += spec.eps * spec.perturbation.grad_p(q, p)
        dp -= spec.eps * spec.perturbation.grad_q(q, p)
    return dq, dp


@dataclass(frozen=True)
class IntegratorStats:
    """Bookkeeping for one integration run."""

    n_steps: int
    dt: float
    stride: int
    mode: str
    # Conservative global error scale: C * dt^5 * n_steps with C = 1.
    error_estimate: float = 0.0


@dataclass(frozen=True)
class Trajectory:
    """Sampled solution of Hamilton's equations with C1 dense output."""

    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    spec_label: str
    stats: IntegratorStats
    complete: bool = True
    diagnostic: str = ""

    def __post_init__(self):
        for name in ("times", "states", "derivs"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not np.all(np.diff(self.times) > 0):
            raise ValueError("trajectory times must be strictly increasing")
        if not np.all(np.isfinite(self.states)):
            raise ValueError("trajectory states must be finite")

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    @property
    def span(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    def at(self, t) -> np.ndarray:
        """Dense-output state at time(s) ``t`` (cubic Hermite)."""
        return itg.hermite_interpolate(self.times, self.states, self.derivs, t)

    def velocity(self, t) -> np.ndarray:
        """Dense-output time derivative at time(s) ``t``."""
        return itg.hermite_interpolate(self.times, self.states, self.derivs,
                                       t, derivative=True)

    def to_csv(self, stream: TextIO) -> None:
        ncol = self.states.shape[1]
        names = ["q", "p", "theta", "J"][:ncol]
        stream.write("t," + ",".join(names) + "\n")
        for n in range(self.times.size):
            row = np.concatenate(([self.times[n]], self.states[n]))
            stream.write(",".join(f"{v:.17g}" for v in row) + "\n")


def integrate(spec: HamiltonianSpec, x0, t_span,
              steps: itg.StepControl = itg.StepControl()) -> Trajectory:
    """Integrate Hamilton's equations for ``spec`` from ``x0`` over ``t_span``.

    Returns a partial trajectory with ``complete=False`` and a diagnostic
    when the flow leaves the algebra domain (spin chart poles).
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    q0, p0 = float(x0[0]), float(x0[1])
    spec.algebra.require(q0, p0)
    y0 = np.array([q0, p0])

    if steps.mode == "fixed" and spec.kernel_kind >= 0:
        dt, n = steps.plan(t0, t1)
        ts, ys, fs, status = itg.run_fixed(
            spec.kernel_kind, t0, y0, dt, n, steps.stride,
            np.array(spec.kernel_par), q_limit=spec.q_limit)
        mode = "fixed"
    else:
        def rhs(t, y):
            return np.array(hamilton_rhs(spec, y, t))

        def guard(y):
            return spec.algebra.contains(y[0], y[1])

        if steps.mode == "adaptive":
            ts, ys, fs, status = itg.rk45_adaptive_py(
                rhs, t0, y0, t1, rtol=steps.rtol, atol=steps.atol)
            dt, n = steps.rtol, len(ts) - 1
            mode = "adaptive"
        else:
            dt, n = steps.plan(t0, t1)
            ts, ys, fs, status = itg.run_fixed_py(rhs, t0, y0, dt, n,
                                                  steps.stride, guard=guard)
            mode = "fixed"

    stats = IntegratorStats(n_steps=n, dt=dt, stride=steps.stride, mode=mode,
                            error_estimate=n * dt ** 5 if mode == "fixed"
                            else steps.rtol)
    complete = status == 0
    diag = ("" if complete else
            f"flow left the domain near t = {ts[-1]:.6g}; trajectory truncated")
    return Trajectory(times=ts, states=ys, derivs=fs, spec_label=spec.label,
                      stats=stats, complete=complete, diagnostic=diag)


MODEL_PRESETS = ("quartic-periodic", "quartic-resonant",
                 "quartic-quasiperiodic", "two-level")


def quartic_spec(omega="periodic", eps: float = 0.0,
                 a: float | None = None) -> HamiltonianSpec:
    """H = p^2/2 + Omega(t) q^2/2 + eps q^4/4 for any stiffness schedule."""
    if eps < 0:
        raise ValueError("quartic strength eps must be >= 0")
    drive = omega if isinstance(omega, OmegaDrive) else omega_preset(omega, a)
    return HamiltonianSpec(
        algebra=algebra_preset("quadratic6"),
        h=quartic_coefficients(drive),
        perturbation=quartic_perturbation(), eps=float(eps),
        label=f"quartic-{drive.name}[eps={eps:g}]",
        kernel_kind=itg.RHS_QUARTIC,
        kernel_par=(float(drive.kind), drive.a, float(eps)),
        ext_kind=itg.RHS_QUARTIC_EXT)


def two_level_spec(field: TwoToneField | Callable[[float], np.ndarray]
                   | tuple[float, float, float] | None = None
                   ) -> HamiltonianSpec:
    """H = B(t) . O on the classical spin chart (open strip |q| < 1)."""
    if field is None:
        field = QUASIPERIODIC_FIELD
    elif isinstance(field, tuple) and len(field) == 3:
        field = constant_field(*field)
    two_tone = isinstance(field, TwoToneField)
    return HamiltonianSpec(
        algebra=algebra_preset("spin-classical"),
        h=spin_coefficients(field), label="two-level",
        kernel_kind=itg.RHS_TWO_LEVEL if two_tone else -1,
        kernel_par=tuple(field.params()) if two_tone else (),
        ext_kind=itg.RHS_TWO_LEVEL_EXT if two_tone else -1,
        q_limit=1.0 - DOMAIN_MARGIN)


def model_preset(name: str, eps: float = 0.0,
                 field: TwoToneField | Callable[[float], np.ndarray]
                 | tuple[float, float, float] | None = None,
                 omega_a: float | None = None) -> HamiltonianSpec:
    """Fully wired Hamiltonian specs for the four model families.

    ``eps`` controls the quartic perturbation (must be >= 0, quartic family
    only).  ``field`` selects B(t) for the two-level preset: a
    :class:`TwoToneField`, an arbitrary callable, or a 3-tuple for a constant
    field; the default is the quasiperiodic two-tone field.
    """
    if name not in MODEL_PRESETS:
        raise KeyError(f"unknown model preset {name!r}; "
                       f"choose from {list(MODEL_PRESETS)}")
    if name.startswith("quartic"):
        return quartic_spec(name.removeprefix("quartic-"), eps, omega_a)
    if eps != 0.0:
        raise ValueError("the two-level preset has no quartic perturbation")
    return two_level_spec(field)
