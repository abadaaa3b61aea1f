"""Order-5 Runge-Kutta integration kernels with dense output.

The workhorse is a fixed-step Dormand-Prince 5(4) kernel compiled with numba.
All built-in right-hand sides live in one jitted function behind an integer
dispatch switch, so the process compiles a single kernel once (and caches it
on disk) instead of one specialization per model closure.  Custom Python
right-hand sides use a structurally identical pure-numpy twin.

Every integration stores ``(t, y, f)`` triples at the requested output
cadence, where ``f`` is the exact right-hand side at the node (the first-
same-as-last trick makes it free).  Dense output between stored nodes is
cubic Hermite interpolation on those pairs.

An adaptive embedded 5(4) mode is available for Python right-hand sides
behind ``rk45_adaptive_py``; fixed-step is the default everywhere so runs
are bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numba import njit

# --- Dormand-Prince 5(4) tableau -------------------------------------------
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176,
                           -5103 / 18656)
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# Embedded 4th-order weights (for the adaptive mode's error estimate).
E1, E3, E4, E5, E6, E7 = (B1 - 5179 / 57600, B3 - 7571 / 16695,
                          B4 - 393 / 640, B5 + 92097 / 339200,
                          B6 - 187 / 2100, -1 / 40)
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9

# --- integer dispatch codes -------------------------------------------------
RHS_QUARTIC = 0        # (q, p) quartic oscillator family
RHS_TWO_LEVEL = 1      # (q, p) classical spin chart under a two-tone field
RHS_COEFF_QUARTIC = 2  # coefficient ODE g' = F(t) g, quadratic6 drive
RHS_COEFF_SPIN = 3     # coefficient ODE, spin algebra drive (h = B(t))
RHS_QUARTIC_EXT = 4    # (q, p, theta, J) autonomous extension
RHS_TWO_LEVEL_EXT = 5  # (q, p, theta, J) autonomous extension

OMEGA_CONST = 0     # Omega(t) = a
OMEGA_PERIODIC = 1  # Omega(t) = cos(pi t / 2)
OMEGA_RESONANT = 2  # Omega(t) = 1 + a cos t
OMEGA_QUASI = 3     # Omega(t) = (cos(e t / 2) + cos(pi t / 2)) / 2

_E_HALF = math.e / 2.0
_PI_HALF = math.pi / 2.0

DEFAULT_DT = 1e-3
DEFAULT_STRIDE = 10


class IntegrationError(RuntimeError):
    """Integrator could not complete (step underflow or invalid setup)."""


@dataclass(frozen=True)
class StepControl:
    """Stepping policy shared by trajectory and coefficient integrations.

    Fixed-step mode (the default) is bit-reproducible; adaptive mode uses
    the embedded 4th-order error estimate and is only available for Python
    right-hand sides.
    """

    dt: float = DEFAULT_DT
    stride: int = DEFAULT_STRIDE
    mode: str = "fixed"  # "fixed" | "adaptive"
    rtol: float = 1e-9
    atol: float = 1e-12

    def __post_init__(self):
        if self.mode not in ("fixed", "adaptive"):
            raise ValueError(f"unknown stepping mode {self.mode!r}")
        if self.dt <= 0 or self.stride < 1:
            raise ValueError("dt must be positive and stride at least 1")

    def plan(self, t0: float, t1: float) -> tuple[float, int]:
        """Choose ``(dt, n_steps)`` covering [t0, t1] with a stored endpoint.

        The step count is rounded to a multiple of ``stride`` so the final
        node always lands on ``t1``; the step is adjusted accordingly.
        """
        span = t1 - t0
        if span <= 0:
            raise IntegrationError(f"empty time span [{t0}, {t1}]")
        blocks = max(1, int(math.ceil(span / (self.dt * self.stride) - 1e-9)))
        n = blocks * self.stride
        return span / n, n


class PathRangeError(ValueError):
    """A query time lies outside the stored path's span."""


@njit(cache=True)
def _omega(kind, a, t):
    if kind == OMEGA_CONST:
        return a
    elif kind == OMEGA_PERIODIC:
        return math.cos(_PI_HALF * t)
    elif kind == OMEGA_RESONANT:
        return 1.0 + a * math.cos(t)
    else:
        return 0.5 * (math.cos(_E_HALF * t) + math.cos(_PI_HALF * t))


@njit(cache=True)
def _domega(kind, a, t):
    if kind == OMEGA_CONST:
        return 0.0
    elif kind == OMEGA_PERIODIC:
        return -_PI_HALF * math.sin(_PI_HALF * t)
    elif kind == OMEGA_RESONANT:
        return -a * math.sin(t)
    else:
        return -0.5 * (_E_HALF * math.sin(_E_HALF * t)
                       + _PI_HALF * math.sin(_PI_HALF * t))


@njit(cache=True)
def _rhs(kind, t, y, dy, par, mat):
    if kind == RHS_QUARTIC or kind == RHS_QUARTIC_EXT:
        # par = [omega_kind, omega_a, eps]
        q = y[0]
        tt = y[2] if kind == RHS_QUARTIC_EXT else t
        dy[0] = y[1]
        dy[1] = -_omega(int(par[0]), par[1], tt) * q - par[2] * q * q * q
        if kind == RHS_QUARTIC_EXT:
            dy[2] = 1.0
            dy[3] = -0.5 * _domega(int(par[0]), par[1], tt) * q * q
    elif kind == RHS_TWO_LEVEL or kind == RHS_TWO_LEVEL_EXT:
        # par = [bx0, ax, wx, by0, bz0, az, wz]
        q = y[0]
        p = y[1]
        tt = y[2] if kind == RHS_TWO_LEVEL_EXT else t
        bx = par[0] + par[1] * math.cos(par[2] * tt)
        by = par[3]
        bz = par[4] + par[5] * math.cos(par[6] * tt)
        s = math.sqrt(1.0 - q * q)
        cp = math.cos(p)
        sp = math.sin(p)
        dy[0] = -bx * s * sp + by * s * cp
        dy[1] = bx * q * cp / s + by * q * sp / s + bz
        if kind == RHS_TWO_LEVEL_EXT:
            dbx = -par[1] * par[2] * math.sin(par[2] * tt)
            dbz = -par[5] * par[6] * math.sin(par[6] * tt)
            dy[2] = 1.0
            dy[3] = -(dbx * s * cp + dbz * (-q))
    else:
        # coefficient ODE: dg_k = sum_ij h_i gamma[i, j, k] g_j
        m = mat.shape[0]
        h = np.zeros(m)
        if kind == RHS_COEFF_QUARTIC:
            # par = [omega_kind, omega_a]
            h[4] = 0.5 * _omega(int(par[0]), par[1], t)
            h[5] = 0.5
        else:
            # par = [bx0, ax, wx, by0, bz0, az, wz]
            h[0] = par[0] + par[1] * math.cos(par[2] * t)
            h[1] = par[3]
            h[2] = par[4] + par[5] * math.cos(par[6] * t)
        for k in range(m):
            acc = 0.0
            for i in range(m):
                hi = h[i]
                if hi != 0.0:
                    for j in range(m):
                        acc += hi * mat[i, j, k] * y[j]
            dy[k] = acc


@njit(cache=True)
def _rk5_fixed(kind, t0, y0, dt, n_steps, stride, par, mat, q_limit):
    n = y0.shape[0]
    n_out = n_steps // stride + 1
    out_t = np.empty(n_out)
    out_y = np.empty((n_out, n))
    out_f = np.empty((n_out, n))
    k1 = np.empty(n); k2 = np.empty(n); k3 = np.empty(n)
    k4 = np.empty(n); k5 = np.empty(n); k6 = np.empty(n)
    k7 = np.empty(n); yt = np.empty(n)
    y = y0.copy()
    _rhs(kind, t0, y, k1, par, mat)
    out_t[0] = t0
    out_y[0] = y
    out_f[0] = k1
    m = 1
    for step in range(n_steps):
        t = t0 + step * dt
        for i in range(n):
            yt[i] = y[i] + dt * A21 * k1[i]
        _rhs(kind, t + C2 * dt, yt, k2, par, mat)
        for i in range(n):
            yt[i] = y[i] + dt * (A31 * k1[i] + A32 * k2[i])
        _rhs(kind, t + C3 * dt, yt, k3, par, mat)
        for i in range(n):
            yt[i] = y[i] + dt * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
        _rhs(kind, t + C4 * dt, yt, k4, par, mat)
        for i in range(n):
            yt[i] = y[i] + dt * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i]
                                 + A54 * k4[i])
        _rhs(kind, t + C5 * dt, yt, k5, par, mat)
        for i in range(n):
            yt[i] = y[i] + dt * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i]
                                 + A64 * k4[i] + A65 * k5[i])
        _rhs(kind, t + dt, yt, k6, par, mat)
        for i in range(n):
            y[i] = y[i] + dt * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i]
                                + B5 * k5[i] + B6 * k6[i])
        tn = t0 + (step + 1) * dt
        _rhs(kind, tn, y, k7, par, mat)
        ok = abs(y[0]) < q_limit
        for i in range(n):
            if not np.isfinite(y[i]):
                ok = False
        if not ok:
            return out_t[:m], out_y[:m], out_f[:m], 1
        for i in range(n):
            k1[i] = k7[i]
        if (step + 1) % stride == 0:
            out_t[m] = tn
            out_y[m] = y
            out_f[m] = k7
            m += 1
    return out_t[:m], out_y[:m], out_f[:m], 0


_DUMMY_MAT = np.zeros((1, 1, 1))


def run_fixed(
    kind: int,
    t0: float,
    y0: np.ndarray,
    dt: float,
    n_steps: int,
    stride: int,
    par: np.ndarray,
    mat: np.ndarray | None = None,
    q_limit: float = math.inf,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Fixed-step run of a built-in right-hand side on the jitted kernel.

    Returns ``(times, states, derivs, status)`` where status 0 means the full
    span completed and 1 means the ``|y[0]| >= q_limit`` domain guard fired
    or the state stopped being finite (outputs are then truncated at the
    last good node).
    """
    if dt <= 0 or n_steps < 0 or stride < 1:
        raise IntegrationError(
            f"invalid stepping: dt={dt}, n_steps={n_steps}, stride={stride}")
    y0 = np.ascontiguousarray(np.asarray(y0, dtype=float))
    par = np.ascontiguousarray(np.asarray(par, dtype=float))
    m = _DUMMY_MAT if mat is None else np.ascontiguousarray(
        np.asarray(mat, dtype=float))
    return _rk5_fixed(int(kind), float(t0), y0, float(dt), int(n_steps),
                      int(stride), par, m, float(q_limit))


def run_fixed_py(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    t0: float,
    y0: np.ndarray,
    dt: float,
    n_steps: int,
    stride: int,
    guard: Callable[[np.ndarray], bool] | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Pure-Python twin of :func:`run_fixed` for arbitrary right-hand sides.

    ``guard(y)`` returning False truncates the run with status 1 (same
    contract as the kernel's domain guard).
    """
    if dt <= 0 or n_steps < 0 or stride < 1:
        raise IntegrationError(
            f"invalid stepping: dt={dt}, n_steps={n_steps}, stride={stride}")
    y = np.asarray(y0, dtype=float).copy()
    n_out = n_steps // stride + 1
    out_t = np.empty(n_out)
    out_y = np.empty((n_out, y.size))
    out_f = np.empty((n_out, y.size))
    k1 = np.asarray(rhs(t0, y), dtype=float)
    out_t[0], out_y[0], out_f[0] = t0, y, k1
    m = 1
    for step in range(n_steps):
        t = t0 + step * dt
        k2 = np.asarray(rhs(t + C2 * dt, y + dt * A21 * k1), float)
        k3 = np.asarray(rhs(t + C3 * dt, y + dt * (A31 * k1 + A32 * k2)), float)
        k4 = np.asarray(rhs(t + C4 * dt,
                            y + dt * (A41 * k1 + A42 * k2 + A43 * k3)), float)
        k5 = np.asarray(rhs(t + C5 * dt,
                            y + dt * (A51 * k1 + A52 * k2 + A53 * k3
                                      + A54 * k4)), float)
        k6 = np.asarray(rhs(t + dt,
                            y + dt * (A61 * k1 + A62 * k2 + A63 * k3
                                      + A64 * k4 + A65 * k5)), float)
        y = y + dt * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6)
        tn = t0 + (step + 1) * dt
        k1 = np.asarray(rhs(tn, y), float)
        if not np.isfinite(y).all() or (guard is not None and not guard(y)):
            return out_t[:m], out_y[:m], out_f[:m], 1
        if (step + 1) % stride == 0:
            out_t[m], out_y[m], out_f[m] = tn, y, k1
            m += 1
    return out_t[:m], out_y[:m], out_f[:m], 0


def rk45_adaptive_py(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    t0: float,
    y0: np.ndarray,
    t1: float,
    rtol: float = 1e-9,
    atol: float = 1e-12,
    dt0: float | None = None,
    max_steps: int = 10_000_000,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Adaptive embedded 5(4) integration (optional mode, Python RHS only).

    Stores every accepted step.  Raises :class:`IntegrationError` on step
    underflow, reporting the last good time.
    """
    span = t1 - t0
    if span <= 0:
        raise IntegrationError("adaptive mode requires t1 > t0")
    y = np.asarray(y0, dtype=float).copy()
    dt = float(dt0) if dt0 else span / 100.0
    ts = [t0]
    ys = [y.copy()]
    k1 = np.asarray(rhs(t0, y), float)
    fs = [k1.copy()]
    t = t0
    for _ in range(max_steps):
        if t >= t1:
            return np.array(ts), np.array(ys), np.array(fs), 0
        dt = min(dt, t1 - t)
        if dt < 1e-14 * max(abs(t0), abs(t1), 1.0):
            raise IntegrationError(f"step underflow at t={t:.6g}")
        k2 = np.asarray(rhs(t + C2 * dt, y + dt * A21 * k1), float)
        k3 = np.asarray(rhs(t + C3 * dt, y + dt * (A31 * k1 + A32 * k2)), float)
        k4 = np.asarray(rhs(t + C4 * dt,
                            y + dt * (A41 * k1 + A42 * k2 + A43 * k3)), float)
        k5 = np.asarray(rhs(t + C5 * dt,
                            y + dt * (A51 * k1 + A52 * k2 + A53 * k3
                                      + A54 * k4)), float)
        k6 = np.asarray(rhs(t + dt,
                            y + dt * (A61 * k1 + A62 * k2 + A63 * k3
                                      + A64 * k4 + A65 * k5)), float)
        y_new = y + dt * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6)
        k7 = np.asarray(rhs(t + dt, y_new), float)
        err_vec = dt * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6
                        + E7 * k7)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = math.sqrt(float(np.mean((err_vec / scale) ** 2)))
        if err <= 1.0:
            t += dt
            y = y_new
            k1 = k7
            ts.append(t)
            ys.append(y.copy())
            fs.append(k1.copy())
        factor = 0.9 * (err ** -0.2) if err > 0 else 5.0
        dt *= min(5.0, max(0.2, factor))
    raise IntegrationError(f"exceeded {max_steps} adaptive steps at t={t:.6g}")


# --- cubic Hermite dense output --------------------------------------------

def hermite_interpolate(
    times: np.ndarray,
    values: np.ndarray,
    derivs: np.ndarray,
    t_query,
    derivative: bool = False,
) -> np.ndarray:
    """Evaluate the C1 interpolant through ``(times, values, derivs)`` nodes.

    ``t_query`` may be a scalar or array; queries outside the stored span
    (beyond a 1e-12 slack) raise :class:`PathRangeError`.  With
    ``derivative=True`` the interpolant's time derivative is returned.
    """
    times = np.asarray(times)
    values = np.asarray(values)
    derivs = np.asarray(derivs)
    tq = np.atleast_1d(np.asarray(t_query, dtype=float))
    scalar = np.isscalar(t_query) or np.ndim(t_query) == 0
    lo, hi = times[0], times[-1]
    slack = 1e-12 * max(1.0, abs(lo), abs(hi))
    if (tq < lo - slack).any() or (tq > hi + slack).any():
        raise PathRangeError(
            f"query time outside stored span [{lo:.6g}, {hi:.6g}]")
    idx = np.clip(np.searchsorted(times, tq, side="right") - 1, 0,
                  len(times) - 2)
    h = (times[idx + 1] - times[idx])[:, None]
    s = ((tq - times[idx]) / h[:, 0])[:, None]
    y0, y1 = values[idx], values[idx + 1]
    f0, f1 = derivs[idx], derivs[idx + 1]
    if derivative:
        d00 = 6 * s * s - 6 * s
        d10 = 3 * s * s - 4 * s + 1
        d01 = -d00
        d11 = 3 * s * s - 2 * s
        out = (d00 * y0 + d01 * y1) / h + d10 * f0 + d11 * f1
    else:
        h00 = (2 * s - 3) * s * s + 1
        h10 = ((s - 2) * s + 1) * s
        h01 = (3 - 2 * s) * s * s
        h11 = (s - 1) * s * s
        out = h00 * y0 + h01 * y1 + (h10 * f0 + h11 * f1) * h
    return out[0] if scalar else out
