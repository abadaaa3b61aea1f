"""Section maps, level-curve diagnostics, sensitivity, and FTLE estimates.

Two section constructions turn continuous flows into point sets:

* stroboscopic sampling at t_n = 2 pi n / omega via dense output, the
  natural map for periodically driven systems;
* plane sections of the extended flow, recording (q, p) wherever the
  auxiliary momentum J crosses a reference level, with crossing times
  refined by bisection on the dense output.

Orbits of the unperturbed models label themselves by their invariant value:
every section point of one orbit carries the same I to conservation
accuracy.  ``level_curve_constancy`` turns that into a report.

Sensitivity diagnostics: synchronized two-trajectory ``separation`` series
and a Benettin-style finite-time Lyapunov estimate (``ftle``) with offset
renormalization.  The chaos threshold separating "consistent with zero"
from positive exponents is CHAOS_THRESHOLD, calibrated on the harmonic
oscillator's noise floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np

from . import integrators as itg
from .dynamics import HamiltonianSpec, Trajectory, integrate
from .invariant import IntervalError, InvariantFunction

# Finite-time Lyapunov estimates above this count as chaotic motion.
CHAOS_THRESHOLD = 0.01
# Benettin defaults: initial offset size and renormalization interval.
FTLE_OFFSET = 1e-8
FTLE_RENORM = 1.0
# Plane-crossing refinement tolerance on |J - J*|.
CROSSING_TOL = 1e-10


@dataclass(frozen=True)
class SectionPoints:
    """Phase-plane points collected by a section construction."""

    points: np.ndarray          # (N, 2) array of (q, p)
    crossing_times: np.ndarray  # (N,)
    mode: str
    orbit_id: str = ""
    complete: bool = True       # False when the trajectory ran out early
    degenerate: bool = False    # plane mode: J sits on the level throughout
    note: str = ""
    extras: np.ndarray | None = None  # (N, 2) of (theta, J) in plane mode

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        ts = np.asarray(self.crossing_times, dtype=float)
        pts.setflags(write=False)
        ts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "crossing_times", ts)

    def __len__(self) -> int:
        return self.points.shape[0]

    def to_csv(self, stream: TextIO) -> None:
        cols = "n,t,q,p" + (",theta,J" if self.extras is not None else "")
        stream.write(cols + "\n")
        for n in range(len(self)):
            row = [float(n), self.crossing_times[n], *self.points[n]]
            if self.extras is not None:
                row += list(self.extras[n])
            stream.write(",".join(f"{v:.17g}" for v in row) + "\n")


def stroboscopic(traj: Trajectory, omega: float, n_max: int | None = None,
                 orbit_id: str = "") -> SectionPoints:
    """Sample a trajectory at t_n = 2 pi n / omega, n = 0..n_max.

    Uses dense output, so the points do not alias to the storage grid.
    ``n_max=None`` takes every sample the run covers.  A trajectory
    shorter than n_max periods yields a truncated result with
    ``complete=False``.
    """
    if omega <= 0:
        raise ValueError("stroboscopic frequency omega must be positive")
    period = 2 * math.pi / omega
    t_lo, t_hi = traj.span
    if n_max is None:
        n_max = int(math.floor((t_hi - t_lo) / period + 1e-9))
    times = t_lo + period * np.arange(n_max + 1)
    inside = times <= t_hi + 1e-9 * max(1.0, abs(t_hi))
    complete = bool(inside.all())
    times = times[inside]
    states = traj.at(np.minimum(times, t_hi))
    return SectionPoints(points=states[:, :2], crossing_times=times,
                         mode=f"stroboscopic(omega={omega:g})",
                         orbit_id=orbit_id, complete=complete,
                         note="" if complete else
                         f"trajectory covers only {len(times)} of "
                         f"{n_max + 1} samples")


def plane_section(traj: Trajectory, j_star: float = 0.0,
                  n_max: int | None = None, tol: float = CROSSING_TOL,
                  orbit_id: str = "") -> SectionPoints:
    """Crossings of the extended flow through the plane J = j_star.

    Sign changes of J - j_star between stored nodes are refined by
    bisection on the dense output until |J - j_star| < tol.  If J sits on
    the plane for most of the run (autonomous base with J0 = j_star), the
    section is degenerate and an empty flagged result is returned.
    """
    if traj.states.shape[1] != 4:
        raise ValueError("plane_section needs an extended (q,p,theta,J) flow")
    mode = f"plane(J*={j_star:g})"
    s_nodes = traj.states[:, 3] - j_star
    on_plane = np.abs(s_nodes) < tol
    if on_plane.mean() > 0.5:
        return SectionPoints(points=np.empty((0, 2)),
                             crossing_times=np.empty(0), mode=mode,
                             orbit_id=orbit_id, degenerate=True,
                             note="J stays on the section level; "
                                  "every instant is a crossing")

    cross = np.nonzero(np.sign(s_nodes[:-1]) * np.sign(s_nodes[1:]) < 0)[0]
    if n_max is not None:
        cross = cross[:n_max]
    pts, ts, extras = [], [], []
    for i in cross:
        a, b = traj.times[i], traj.times[i + 1]
        sa = s_nodes[i]
        for _ in range(200):
            m = 0.5 * (a + b)
            sm = float(traj.at(m)[3]) - j_star
            if abs(sm) < tol:
                break
            if sa * sm < 0:
                b = m
            else:
                a, sa = m, sm
        state = traj.at(m)
        pts.append(state[:2])
        ts.append(m)
        extras.append(state[2:4])
    if not pts:
        return SectionPoints(points=np.empty((0, 2)),
                             crossing_times=np.empty(0), mode=mode,
                             orbit_id=orbit_id,
                             note="no crossings found in the run")
    return SectionPoints(points=np.array(pts), crossing_times=np.array(ts),
                         mode=mode, orbit_id=orbit_id,
                         complete=traj.complete,
                         extras=np.array(extras))


@dataclass(frozen=True)
class LevelCurveReport:
    """Spread of the invariant over one orbit's section points."""

    orbit_id: str
    values: np.ndarray
    mean: float
    std: float
    max_deviation: float

    def within(self, tol: float = 1e-6) -> bool:
        """True when max deviation < tol * (1 + |mean|)."""
        return self.max_deviation < tol * (1.0 + abs(self.mean))

    def __str__(self) -> str:
        return (f"orbit {self.orbit_id or '<unnamed>'}: I = {self.mean:.9g} "
                f"+/- {self.std:.3e} (max deviation {self.max_deviation:.3e} "
                f"over {self.values.size} points)")


def level_curve_constancy(points: SectionPoints,
                          inv: InvariantFunction) -> LevelCurveReport:
    """Evaluate the invariant at every section point and report its spread."""
    if len(points) == 0:
        raise ValueError("cannot report level-curve constancy of an empty "
                         "section")
    lo, hi = inv.path.span
    t = points.crossing_times
    if t.min() < lo or t.max() > hi:
        raise IntervalError(
            f"section times [{t.min():.6g}, {t.max():.6g}] exceed the "
            f"invariant path span [{lo:.6g}, {hi:.6g}]")
    vals = inv.series(t, points.points)
    mean = float(vals.mean())
    return LevelCurveReport(orbit_id=points.orbit_id, values=vals, mean=mean,
                            std=float(vals.std()),
                            max_deviation=float(np.abs(vals - mean).max()))


@dataclass(frozen=True)
class SeparationSeries:
    """Distance between two synchronized trajectories, per sample."""

    times: np.ndarray
    dq: np.ndarray        # |q_a - q_b|
    distance: np.ndarray  # full-state euclidean distance
    complete: bool = True
    note: str = ""

    @property
    def max_distance(self) -> float:
        return float(self.distance.max())


def separation(spec: HamiltonianSpec, x0, x1, t_span,
               steps: itg.StepControl = itg.StepControl()) -> SeparationSeries:
    """Synchronized two-trajectory separation series.

    Both initial conditions integrate on the identical time grid; if either
    run truncates (domain exit), the series covers the common span and is
    flagged incomplete.
    """
    ta = integrate(spec, x0, t_span, steps)
    tb = integrate(spec, x1, t_span, steps)
    n = min(ta.times.size, tb.times.size)
    diff = ta.states[:n] - tb.states[:n]
    complete = ta.complete and tb.complete
    return SeparationSeries(
        times=ta.times[:n], dq=np.abs(diff[:, 0]),
        distance=np.linalg.norm(diff, axis=1), complete=complete,
        note="" if complete else
        "; ".join(d for d in (ta.diagnostic, tb.diagnostic) if d))


@dataclass(frozen=True)
class FtleResult:
    """Benettin finite-time Lyapunov estimate."""

    value: float
    time: float
    n_renorms: int
    offset: float
    renorm_interval: float
    complete: bool = True
    note: str = ""

    @property
    def chaotic(self) -> bool:
        return self.value > CHAOS_THRESHOLD


def ftle(spec: HamiltonianSpec, x0, t_total: float,
         renorm_interval: float = FTLE_RENORM, offset: float = FTLE_OFFSET,
         steps: itg.StepControl = itg.StepControl()) -> FtleResult:
    """Finite-time Lyapunov estimate by two-trajectory renormalization.

    A reference orbit and an offset companion (initial displacement
    ``offset`` along q) integrate in lockstep; every ``renorm_interval``
    the companion is pulled back to distance ``offset`` and the log
    stretching accumulates.  The estimate is the mean log stretch per unit
    time.  If either orbit leaves the domain the estimate covers the
    completed blocks and is flagged.
    """
    if renorm_interval <= steps.dt:
        raise ValueError("renorm_interval must exceed the integration step")
    n_blocks = int(round(t_total / renorm_interval))
    if n_blocks < 1:
        raise ValueError("t_total shorter than one renormalization interval")
    block_steps = itg.StepControl(
        dt=steps.dt, stride=max(1, int(round(renorm_interval / steps.dt))))
    y_ref = np.array([float(x0[0]), float(x0[1])])
    y_off = y_ref + np.array([offset, 0.0])
    log_sum = 0.0
    done = 0
    for i in range(n_blocks):
        span = (i * renorm_interval, (i + 1) * renorm_interval)
        ta = integrate(spec, y_ref, span, block_steps)
        tb = integrate(spec, y_off, span, block_steps)
        if not (ta.complete and tb.complete):
            break
        y_ref, y_off = ta.final.copy(), tb.final.copy()
        d = float(np.hypot(y_off[0] - y_ref[0], y_off[1] - y_ref[1]))
        if d == 0.0:
            raise ValueError("offset trajectory collapsed onto the reference;"
                             " increase the offset")
        log_sum += math.log(d / offset)
        y_off = y_ref + (y_off - y_ref) * (offset / d)
        done += 1
    t_done = done * renorm_interval
    if done == 0:
        raise ValueError("flow left the domain during the first block; "
                         "no estimate available")
    return FtleResult(value=log_sum / t_done, time=t_done, n_renorms=done,
                      offset=offset, renorm_interval=renorm_interval,
                      complete=done == n_blocks,
                      note="" if done == n_blocks else
                      f"domain exit after {done} of {n_blocks} blocks")


def hausdorff_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric Hausdorff distance between two point sets in the plane."""
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    b = np.asarray(b, dtype=float).reshape(-1, 2)
    if a.size == 0 or b.size == 0:
        raise ValueError("Hausdorff distance needs nonempty point sets")
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    return float(np.sqrt(max(d2.min(axis=1).max(), d2.min(axis=0).max())))


# --- dependency-free SVG scatter -------------------------------------------

_SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
               "#8c564b", "#e377c2", "#17becf")


def svg_scatter(datasets: Sequence[tuple[str, np.ndarray]], stream: TextIO,
                title: str = "", xlabel: str = "q", ylabel: str = "p",
                width: int = 640, height: int = 480,
                marker: float = 1.6) -> None:
    """Write a minimal scatter SVG: axis box, ticks, one marker per point.

    ``datasets`` is a sequence of (label, points) pairs; colors cycle
    through a fixed palette.  No external styling or fonts are required.
    """
    pts_all = np.concatenate([np.asarray(p, dtype=float).reshape(-1, 2)
                              for _, p in datasets if len(p)])
    x_lo, y_lo = pts_all.min(axis=0)
    x_hi, y_hi = pts_all.max(axis=0)
    pad_x = 0.05 * (x_hi - x_lo) or 0.5
    pad_y = 0.05 * (y_hi - y_lo) or 0.5
    x_lo, x_hi = x_lo - pad_x, x_hi + pad_x
    y_lo, y_hi = y_lo - pad_y, y_hi + pad_y
    ml, mr, mt, mb = 62, 18, 34 if title else 18, 46
    pw, ph = width - ml - mr, height - mt - mb

    def sx(x):
        return ml + (x - x_lo) / (x_hi - x_lo) * pw

    def sy(y):
        return mt + (y_hi - y) / (y_hi - y_lo) * ph

    w = stream.write
    w('<?xml version="1.0" encoding="UTF-8"?>\n')
    w(f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
      f'height="{height}" viewBox="0 0 {width} {height}">\n')
    w(f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>\n')
    w(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" '
      f'stroke="black" stroke-width="1"/>\n')
    if title:
        w(f'<text x="{width / 2:.1f}" y="{mt - 12}" text-anchor="middle" '
          f'font-family="sans-serif" font-size="14">{title}</text>\n')
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        xv = x_lo + frac * (x_hi - x_lo)
        yv = y_lo + frac * (y_hi - y_lo)
        xi, yi = sx(xv), sy(yv)
        w(f'<line x1="{xi:.1f}" y1="{mt + ph}" x2="{xi:.1f}" '
          f'y2="{mt + ph + 5}" stroke="black"/>\n')
        w(f'<text x="{xi:.1f}" y="{mt + ph + 18}" text-anchor="middle" '
          f'font-family="sans-serif" font-size="10">{xv:.3g}</text>\n')
        w(f'<line x1="{ml - 5}" y1="{yi:.1f}" x2="{ml}" y2="{yi:.1f}" '
          f'stroke="black"/>\n')
        w(f'<text x="{ml - 8}" y="{yi + 3:.1f}" text-anchor="end" '
          f'font-family="sans-serif" font-size="10">{yv:.3g}</text>\n')
    w(f'<text x="{ml + pw / 2:.1f}" y="{height - 8}" text-anchor="middle" '
      f'font-family="sans-serif" font-size="12">{xlabel}</text>\n')
    w(f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" '
      f'font-family="sans-serif" font-size="12" '
      f'transform="rotate(-90 16 {mt + ph / 2:.1f})">{ylabel}</text>\n')
    for k, (label, pts) in enumerate(datasets):
        color = _SVG_COLORS[k % len(_SVG_COLORS)]
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        w(f'<g fill="{color}" fill-opacity="0.75">'
          f'<title>{label}</title>\n')
        for x, y in pts:
            if x_lo <= x <= x_hi and y_lo <= y <= y_hi:
                w(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" '
                  f'r="{marker}"/>\n')
        w('</g>\n')
    w('</svg>\n')
