"""Dynamical invariants of the form I(x, t) = g(t) . O(x).

For a Hamiltonian that is a time-dependent combination h(t) . O(x) of Lie
algebra elements, an exact invariant with the same shape exists whenever the
coefficient vector g(t) solves the linear ODE

    dg_k/dt = sum_ij h_i(t) gamma[i, j, k] g_j,   i.e.  dg/dt = F(t) g,

with F[k, j] = sum_i h_i(t) gamma[i, j, k].  This module builds g(t) paths
with dense output, wraps them into evaluable invariant functions, and
measures conservation along trajectories.

The initial vector g0 is free; the default g0 = h(t0) makes the invariant
coincide with the instantaneous Hamiltonian at the start time and reduce to
the energy in the autonomous case.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, TextIO

import numpy as np

from . import integrators as itg
from .algebra import DomainError, LieAlgebra

# |g(t)| above this triggers a CoefficientGrowthWarning (no hard failure:
# exponential growth is physical in parametric-resonance regimes).
GROWTH_WARN_THRESHOLD = 1e12


class IntervalError(ValueError):
    """A time lies outside the interval on which an object is defined."""


class CoefficientGrowthWarning(RuntimeWarning):
    """The coefficient vector grew beyond the conditioning threshold."""


# --- driving schedules ------------------------------------------------------

@dataclass(frozen=True)
class OmegaDrive:
    """Scalar stiffness schedule for the quartic-family Hamiltonians."""

    name: str
    kind: int  # integer dispatch code understood by the integration kernel
    a: float = 1.0

    def __call__(self, t):
        if self.kind == itg.OMEGA_CONST:
            return self.a * np.ones_like(np.asarray(t, dtype=float))
        if self.kind == itg.OMEGA_PERIODIC:
            return np.cos(np.pi * np.asarray(t) / 2)
        if self.kind == itg.OMEGA_RESONANT:
            return 1.0 + self.a * np.cos(np.asarray(t))
        return 0.5 * (np.cos(math.e * np.asarray(t) / 2)
                      + np.cos(np.pi * np.asarray(t) / 2))

    def deriv(self, t):
        if self.kind == itg.OMEGA_CONST:
            return np.zeros_like(np.asarray(t, dtype=float))
        if self.kind == itg.OMEGA_PERIODIC:
            return -(np.pi / 2) * np.sin(np.pi * np.asarray(t) / 2)
        if self.kind == itg.OMEGA_RESONANT:
            return -self.a * np.sin(np.asarray(t))
        return -0.5 * (math.e / 2 * np.sin(math.e * np.asarray(t) / 2)
                       + np.pi / 2 * np.sin(np.pi * np.asarray(t) / 2))


_OMEGA_PRESETS = {
    "constant": (itg.OMEGA_CONST, 1.0),
    "periodic": (itg.OMEGA_PERIODIC, 0.0),
    "resonant": (itg.OMEGA_RESONANT, 0.1),
    "quasiperiodic": (itg.OMEGA_QUASI, 0.0),
}


def omega_preset(name: str, a: float | None = None) -> OmegaDrive:
    """Named stiffness schedules.

    ``constant``       Omega = a (default 1)
    ``periodic``       Omega = cos(pi t / 2)
    ``resonant``       Omega = 1 + a cos t (default a = 0.1)
    ``quasiperiodic``  Omega = [cos(e t / 2) + cos(pi t / 2)] / 2
    """
    try:
        kind, default_a = _OMEGA_PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown omega preset {name!r}; "
                       f"choose from {sorted(_OMEGA_PRESETS)}") from None
    return OmegaDrive(name, kind, default_a if a is None else float(a))


@dataclass(frozen=True)
class TwoToneField:
    """Magnetic field B(t) = (bx0 + ax cos(wx t), by0, bz0 + az cos(wz t))."""

    bx0: float = 0.0
    ax: float = 0.0
    wx: float = 0.0
    by0: float = 0.0
    bz0: float = 0.0
    az: float = 0.0
    wz: float = 0.0

    def __call__(self, t) -> np.ndarray:
        return np.array([self.bx0 + self.ax * np.cos(self.wx * t),
                         self.by0 + 0.0 * t,
                         self.bz0 + self.az * np.cos(self.wz * t)])

    def deriv(self, t) -> np.ndarray:
        return np.array([-self.ax * self.wx * np.sin(self.wx * t),
                         0.0 * t,
                         -self.az * self.wz * np.sin(self.wz * t)])

    def params(self) -> np.ndarray:
        return np.array([self.bx0, self.ax, self.wx, self.by0, self.bz0,
                         self.az, self.wz])


def constant_field(bx: float, by: float, bz: float) -> TwoToneField:
    return TwoToneField(bx0=bx, by0=by, bz0=bz)


# Two-tone field with incommensurable frequencies e/2 and pi/2; drives the
# quasiperiodic spin scenarios.
QUASIPERIODIC_FIELD = TwoToneField(ax=1.0, wx=math.e / 2,
                                   az=1.0, wz=math.pi / 2)


# --- time-dependent Hamiltonian coefficients --------------------------------

@dataclass(frozen=True)
class TimeCoefficients:
    """Coefficient schedule h(t) multiplying the algebra basis.

    ``func`` maps a scalar time to the length-``dim`` coefficient vector;
    ``dfunc`` is its analytic time derivative when available (a central
    finite difference fills in otherwise).  ``kernel_kind``/``kernel_par``
    select a compiled fast path for the coefficient ODE when the schedule is
    one of the built-in families (negative kind means none).
    """

    dim: int
    func: Callable[[float], np.ndarray]
    dfunc: Callable[[float], np.ndarray] | None = None
    label: str = "custom"
    interval: tuple[float, float] = (-math.inf, math.inf)
    kernel_kind: int = -1
    kernel_par: tuple[float, ...] = ()

    def require_inside(self, t: float) -> None:
        a, b = self.interval
        if not (a <= t <= b):
            raise IntervalError(
                f"t={t} outside the coefficient interval [{a}, {b}]")

    def __call__(self, t: float) -> np.ndarray:
        self.require_inside(t)
        h = np.asarray(self.func(t), dtype=float)
        if h.shape != (self.dim,):
            raise ValueError(f"coefficient function returned shape {h.shape},"
                             f" expected ({self.dim},)")
        if not np.all(np.isfinite(h)):
            raise ValueError(f"coefficient function not finite at t={t}")
        return h

    def deriv(self, t: float) -> np.ndarray:
        self.require_inside(t)
        if self.dfunc is not None:
            return np.asarray(self.dfunc(t), dtype=float)
        dt = 1e-6 * max(1.0, abs(t))
        return (self(t + dt) - self(t - dt)) / (2 * dt)


def quartic_coefficients(omega: OmegaDrive | str = "periodic",
                         a: float | None = None) -> TimeCoefficients:
    """h(t) for H = p^2/2 + Omega(t) q^2/2 on the quadratic6 basis.

    Basis order (1, q, p, qp, q^2, p^2) puts Omega(t)/2 at index 4 and 1/2
    at index 5.
    """
    drive = omega if isinstance(omega, OmegaDrive) else omega_preset(omega, a)

    def func(t):
        return np.array([0.0, 0.0, 0.0, 0.0, 0.5 * float(drive(t)), 0.5])

    def dfunc(t):
        return np.array([0.0, 0.0, 0.0, 0.0, 0.5 * float(drive.deriv(t)), 0.0])

    return TimeCoefficients(
        dim=6, func=func, dfunc=dfunc, label=f"quartic[{drive.name}]",
        kernel_kind=itg.RHS_COEFF_QUARTIC,
        kernel_par=(float(drive.kind), drive.a))


def spin_coefficients(field: TwoToneField | Callable[[float], np.ndarray],
                      dfield: Callable[[float], np.ndarray] | None = None,
                      label: str | None = None) -> TimeCoefficients:
    """h(t) = B(t) for H = B(t) . O on the classical spin basis.

    ``field`` may be a :class:`TwoToneField` (compiled fast path) or any
    callable returning a 3-vector.
    """
    if isinstance(field, TwoToneField):
        return TimeCoefficients(
            dim=3, func=field, dfunc=field.deriv,
            label=label or "spin[two-tone]",
            kernel_kind=itg.RHS_COEFF_SPIN,
            kernel_par=tuple(field.params()))
    return TimeCoefficients(dim=3, func=field, dfunc=dfield,
                            label=label or "spin[custom]")


# --- the coefficient flow ---------------------------------------------------

def coefficient_matrix(alg: LieAlgebra, h: TimeCoefficients,
                       t: float) -> np.ndarray:
    """The matrix F(t) with F[k, j] = sum_i h_i(t) gamma[i, j, k]."""
    h.require_inside(t)
    return np.einsum("i,ijk->kj", h(t), alg.constants.gamma)


@dataclass(frozen=True)
class CoefficientPath:
    """Solution nodes of dg/dt = F(t) g with C1 dense output.

    ``derivs`` holds the exact right-hand side F(t_n) g(t_n) at each node;
    between nodes, values interpolate by cubic Hermite on (g, dg) pairs.
    """

    times: np.ndarray
    values: np.ndarray
    derivs: np.ndarray
    g0: np.ndarray
    algebra_name: str
    label: str = "custom"
    # References for sharp derivative recomputation; absent on CSV reload.
    h: TimeCoefficients | None = field(default=None, repr=False)
    gamma: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("times", "values", "derivs", "g0"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not np.all(np.diff(self.times) > 0):
            raise ValueError("path times must be strictly increasing")
        if self.values.shape != (self.times.size, self.g0.size):
            raise ValueError("path arrays have inconsistent shapes")

    @property
    def dim(self) -> int:
        return self.g0.size

    @property
    def span(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    @property
    def max_abs(self) -> float:
        return float(np.abs(self.values).max())

    def uncoupled_indices(self) -> tuple[int, ...]:
        """Components whose stored derivative is identically zero (never
        driven by the flow; typically the constant observable)."""
        quiet = np.max(np.abs(self.derivs), axis=0) == 0.0
        return tuple(int(k) for k in np.nonzero(quiet)[0])

    def __call__(self, t) -> np.ndarray:
        try:
            return itg.hermite_interpolate(self.times, self.values,
                                           self.derivs, t)
        except itg.PathRangeError as exc:
            raise IntervalError(str(exc)) from None

    def deriv(self, t) -> np.ndarray:
        """dg/dt at ``t``: F(t) g(t) when the schedule is attached,
        otherwise the interpolant's derivative."""
        if self.h is not None and self.gamma is not None:
            g = self(t)
            hv = self.h(float(t)) if np.ndim(t) == 0 else None
            if hv is not None:
                return np.einsum("i,ijk,j->k", hv, self.gamma, g)
            out = np.empty_like(g)
            for n, tn in enumerate(np.asarray(t, dtype=float)):
                out[n] = np.einsum("i,ijk,j->k", self.h(tn), self.gamma, g[n])
            return out
        try:
            return itg.hermite_interpolate(self.times, self.values,
                                           self.derivs, t, derivative=True)
        except itg.PathRangeError as exc:
            raise IntervalError(str(exc)) from None

    # -- CSV round trip ------------------------------------------------------

    def to_csv(self, stream: TextIO) -> None:
        m = self.dim
        cols = (["t"] + [f"g{k}" for k in range(1, m + 1)]
                + [f"dg{k}" for k in range(1, m + 1)])
        stream.write(",".join(cols) + "\n")
        for n in range(self.times.size):
            row = np.concatenate(([self.times[n]], self.values[n],
                                  self.derivs[n]))
            stream.write(",".join(f"{v:.17g}" for v in row) + "\n")

    @classmethod
    def from_csv(cls, stream: TextIO, algebra_name: str = "csv",
                 label: str = "csv") -> "CoefficientPath":
        header = stream.readline().strip().split(",")
        if not header or header[0] != "t" or (len(header) - 1) % 2 != 0:
            raise ValueError("malformed coefficient path CSV header")
        m = (len(header) - 1) // 2
        data = np.loadtxt(stream, delimiter=",", ndmin=2)
        if data.shape[1] != 2 * m + 1:
            raise ValueError("coefficient path CSV row width mismatch")
        return cls(times=data[:, 0], values=data[:, 1:m + 1],
                   derivs=data[:, m + 1:], g0=data[0, 1:m + 1],
                   algebra_name=algebra_name, label=label)


def build_invariant(alg: LieAlgebra, h: TimeCoefficients,
                    t_span: tuple[float, float],
                    g0: np.ndarray | None = None,
                    steps: itg.StepControl = itg.StepControl(),
                    ) -> CoefficientPath:
    """Integrate the coefficient flow dg/dt = F(t) g over ``t_span``.

    ``g0`` defaults to h(t0), the instantaneous Hamiltonian coefficients.
    Built-in schedules run on the compiled kernel; custom callables use the
    Python twin (or the adaptive mode when ``steps.mode == 'adaptive'``).
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    h.require_inside(t0)
    h.require_inside(t1)
    if alg.dim != h.dim:
        raise ValueError(f"algebra dim {alg.dim} != coefficient dim {h.dim}")
    g0 = h(t0) if g0 is None else np.asarray(g0, dtype=float)
    if g0.shape != (alg.dim,) or not np.all(np.isfinite(g0)):
        raise ValueError("g0 must be a finite vector matching the algebra")
    gamma = alg.constants.gamma

    if steps.mode == "adaptive" or h.kernel_kind < 0:
        def rhs(t, g):
            return np.einsum("i,ijk,j->k", h(t), gamma, g)

        if steps.mode == "adaptive":
            ts, gs, dgs, _ = itg.rk45_adaptive_py(rhs, t0, g0, t1,
                                                  rtol=steps.rtol,
                                                  atol=steps.atol)
        else:
            dt, n = steps.plan(t0, t1)
            ts, gs, dgs, _ = itg.run_fixed_py(rhs, t0, g0, dt, n,
                                              steps.stride)
    else:
        dt, n = steps.plan(t0, t1)
        ts, gs, dgs, _ = itg.run_fixed(h.kernel_kind, t0, g0, dt, n,
                                       steps.stride,
                                       np.array(h.kernel_par), mat=gamma)

    path = CoefficientPath(times=ts, values=gs, derivs=dgs, g0=g0,
                           algebra_name=alg.name, label=h.label,
                           h=h, gamma=gamma)
    if path.max_abs > GROWTH_WARN_THRESHOLD:
        warnings.warn(
            f"coefficient vector reached |g| = {path.max_abs:.3e}; invariant "
            f"evaluation is ill-conditioned at this magnitude",
            CoefficientGrowthWarning, stacklevel=2)
    return path


# --- evaluation along trajectories ------------------------------------------

@dataclass(frozen=True)
class InvariantFunction:
    """I(x, t) = g(t) . O(x) for a stored coefficient path."""

    algebra: LieAlgebra
    path: CoefficientPath

    def __post_init__(self):
        if self.algebra.dim != self.path.dim:
            raise ValueError("algebra and path dimensions differ")

    def value(self, x, t: float) -> float:
        q, p = float(x[0]), float(x[1])
        self.algebra.require(q, p)
        return float(np.dot(self.path(t), self.algebra.observe(q, p)))

    __call__ = value

    def gradient(self, x, t: float) -> tuple[float, float]:
        """(dI/dq, dI/dp) at the point."""
        q, p = float(x[0]), float(x[1])
        self.algebra.require(q, p)
        g = self.path(t)
        gq, gp = self.algebra.observe_gradients(q, p)
        return float(np.dot(g, gq)), float(np.dot(g, gp))

    def time_partial(self, x, t: float) -> float:
        """Explicit time derivative dI/dt at fixed x, from dg/dt . O."""
        q, p = float(x[0]), float(x[1])
        self.algebra.require(q, p)
        return float(np.dot(self.path.deriv(t), self.algebra.observe(q, p)))

    def series(self, times: np.ndarray, states: np.ndarray) -> np.ndarray:
        """Vectorized values I(x_n, t_n) along sampled states (n, 2)."""
        times = np.asarray(times, dtype=float)
        states = np.asarray(states, dtype=float)
        q, p = states[:, 0], states[:, 1]
        ok = self.algebra.contains_many(q, p)
        if not ok.all():
            bad = int(np.nonzero(~ok)[0][0])
            raise DomainError(f"state at t={times[bad]:.6g} outside the "
                              f"algebra domain: (q={q[bad]}, p={p[bad]})")
        g = self.path(times)
        obs = self.algebra.observe(q, p)
        return np.einsum("nm,mn->n", g, obs)


def evaluate_invariant(inv: InvariantFunction, x, t: float) -> float:
    """Value of the invariant at phase point ``x = (q, p)`` and time ``t``."""
    return inv.value(x, t)


@dataclass(frozen=True)
class DriftReport:
    """Conservation summary of an invariant along one trajectory.

    ``rel_drift`` is max |I(t) - I(t0)| / (1 + |I(t0)|), an absolute measure
    blended into a relative one so near-zero invariants do not blow it up.
    """

    i0: float
    max_drift: float
    rel_drift: float
    t_at_max: float
    n_samples: int

    def __str__(self) -> str:
        return (f"I(t0) = {self.i0:.12g}; max |dI| = {self.max_drift:.3e} "
                f"(relative {self.rel_drift:.3e}) at t = {self.t_at_max:.6g} "
                f"over {self.n_samples} samples")


def invariant_drift(inv: InvariantFunction, traj) -> DriftReport:
    """Measure conservation of ``inv`` along a trajectory-like object.

    ``traj`` needs ``times`` and ``states`` attributes (the dynamics module's
    Trajectory satisfies this); every stored sample is evaluated.
    """
    times = np.asarray(traj.times, dtype=float)
    states = np.asarray(traj.states, dtype=float)
    vals = inv.series(times, states[:, :2])
    i0 = float(vals[0])
    drift = np.abs(vals - i0)
    k = int(np.argmax(drift))
    return DriftReport(i0=i0, max_drift=float(drift[k]),
                       rel_drift=float(drift[k] / (1.0 + abs(i0))),
                       t_at_max=float(times[k]), n_samples=times.size)
