"""Autonomous extension of time-dependent flows on (q, p, theta, J).

A time-dependent Hamiltonian H(x, t) becomes autonomous on an extended
phase space by promoting time to a coordinate theta with conjugate momentum
J:

    K(q, p, theta, J) = H(q, p, theta) + J.

Along the K-flow, theta(t) = theta(0) + t exactly (dtheta/dt = dK/dJ = 1)
and K itself is conserved.  A dynamical invariant I(x, t) of the original
problem lifts to I(x, theta) on the extended space, where its Poisson
bracket with K,

    {I, K} = {I, H}_x + dI/dtheta,

vanishes identically: K and I are two commuting conserved quantities.  This
module wires the extended flow, measures the involution residual, and
certifies functional independence of the two generated flow velocities

    v_K = (dH/dp, -dH/dq, 1, -dH/dtheta),
    v_I = (dI/dp, -dI/dq, 0, -dI/dtheta),

whose theta components (1, 0) make independence literal: no nonzero linear
combination of the two velocities can vanish.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np

from . import integrators as itg
from .dynamics import HamiltonianSpec, IntegratorStats, Trajectory, hamilton_rhs
from .invariant import InvariantFunction

# Singular values below RANK_THRESHOLD * s_max count as zero in the
# independence rank test (velocities are O(1) in these units).
RANK_THRESHOLD = 1e-10


@dataclass(frozen=True)
class ExtendedHamiltonian:
    """K(x, y) = H(x, theta) + J for a base Hamiltonian spec."""

    base: HamiltonianSpec

    def value(self, state) -> float:
        """K at extended state (q, p, theta, J)."""
        q, p, theta, J = (float(v) for v in state)
        return self.base.energy((q, p), theta) + J

    def value_series(self, states: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=float)
        base = self.base.energy_series(states[:, 2], states[:, :2])
        return base + states[:, 3]

    def rhs(self, state) -> np.ndarray:
        """Extended Hamilton's equations (dq, dp, dtheta, dJ)/dt."""
        q, p, theta, _ = (float(v) for v in state)
        dq, dp = hamilton_rhs(self.base, (q, p), theta)
        dh = self.base.h.deriv(theta)
        obs = self.base.algebra.observe(q, p)
        return np.array([dq, dp, 1.0, -float(np.dot(dh, obs))])

    def velocity_K(self, state) -> np.ndarray:
        """Flow velocity generated by K at the point (alias of rhs)."""
        return self.rhs(state)

    def velocity_I(self, inv: InvariantFunction, state) -> np.ndarray:
        """Flow velocity generated by the lifted invariant at the point.

        The theta component is exactly 0 (I carries no J dependence) and
        dJ/dt is -dI/dtheta from the stored coefficient derivative.
        """
        q, p, theta, _ = (float(v) for v in state)
        diq, dip = inv.gradient((q, p), theta)
        return np.array([dip, -diq, 0.0, -inv.time_partial((q, p), theta)])


def extend(spec: HamiltonianSpec) -> ExtendedHamiltonian:
    """Autonomous extension K = H + J of a Hamiltonian spec.

    Defined for any eps; the invariant-involution statement is only claimed
    for eps = 0 (the perturbation is time-independent and does not enter
    dJ/dt either way).
    """
    return ExtendedHamiltonian(base=spec)


def integrate_extended(ext: ExtendedHamiltonian, x0, t_span,
                       J0: float | None = None, theta0: float = 0.0,
                       steps: itg.StepControl = itg.StepControl()
                       ) -> Trajectory:
    """Integrate the K-flow from (x0, theta0, J0) over ``t_span``.

    ``J0`` defaults to -H(x0, theta0) so K = 0 on the reference orbit and
    drift checks are scale-free.
    """
    spec = ext.base
    t0, t1 = float(t_span[0]), float(t_span[1])
    q0, p0 = float(x0[0]), float(x0[1])
    spec.algebra.require(q0, p0)
    if J0 is None:
        J0 = -spec.energy((q0, p0), theta0)
    y0 = np.array([q0, p0, float(theta0), float(J0)])

    if steps.mode == "fixed" and spec.ext_kind >= 0:
        dt, n = steps.plan(t0, t1)
        ts, ys, fs, status = itg.run_fixed(
            spec.ext_kind, t0, y0, dt, n, steps.stride,
            np.array(spec.kernel_par), q_limit=spec.q_limit)
        mode = "fixed"
    else:
        def rhs(t, y):
            return ext.rhs(y)

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
    return Trajectory(times=ts, states=ys, derivs=fs,
                      spec_label=f"extended[{spec.label}]", stats=stats,
                      complete=complete, diagnostic=diag)


def involution_residual(ext: ExtendedHamiltonian, inv: InvariantFunction,
                        points: Sequence) -> float:
    """max |{I, K}| over extended points (q, p, theta, J).

    The 4D bracket reduces to {I, H}_x + dI/dtheta since I is independent
    of J and K depends on theta only through H.
    """
    worst = 0.0
    for state in points:
        q, p, theta = float(state[0]), float(state[1]), float(state[2])
        diq, dip = inv.gradient((q, p), theta)
        dq, dp = hamilton_rhs(ext.base, (q, p), theta)
        bracket_x = diq * dq + dip * dp  # dI/dq dH/dp - dI/dp dH/dq
        res = abs(bracket_x + inv.time_partial((q, p), theta))
        worst = max(worst, res)
    return worst


@dataclass(frozen=True)
class IndependenceVerdict:
    """Rank test of the two flow velocities at one extended point."""

    rank: int
    singular_values: tuple[float, float]
    certificate: tuple[float, float]  # (theta-component of v_K, of v_I)
    v_K: np.ndarray
    v_I: np.ndarray

    @property
    def independent(self) -> bool:
        return self.rank == 2 and self.certificate == (1.0, 0.0)

    def __str__(self) -> str:
        return (f"rank {self.rank}, singular values "
                f"({self.singular_values[0]:.3e}, {self.singular_values[1]:.3e}), "
                f"theta-certificate {self.certificate}")


def independence_check(ext: ExtendedHamiltonian, inv: InvariantFunction,
                       state) -> IndependenceVerdict:
    """Rank of the 2x4 matrix [v_K; v_I] plus the literal theta certificate.

    The certificate (dtheta/dt along v_K, along v_I) = (1, 0) holds exactly
    by construction and already forces rank 2; the singular-value test
    corroborates it numerically with threshold ``RANK_THRESHOLD``.
    """
    v_K = ext.velocity_K(state)
    v_I = ext.velocity_I(inv, state)
    sv = np.linalg.svd(np.stack([v_K, v_I]), compute_uv=False)
    rank = int(np.sum(sv > RANK_THRESHOLD * sv[0])) if sv[0] > 0 else 0
    return IndependenceVerdict(rank=rank,
                               singular_values=(float(sv[0]), float(sv[1])),
                               certificate=(float(v_K[2]), float(v_I[2])),
                               v_K=v_K, v_I=v_I)


def boundedness_heuristic(traj: Trajectory, radius: float = 1e3
                          ) -> tuple[bool, float]:
    """Heuristic compactness proxy: did the (q, p) orbit stay in a ball?

    Returns ``(stayed_bounded, max_radius_seen)``.  This is a diagnostic
    only: staying inside a ball for one finite run proves nothing about the
    level set's compactness, and no mathematical test is attempted.
    """
    r = float(np.max(np.linalg.norm(traj.states[:, :2], axis=1)))
    return bool(r <= radius and traj.complete), r


def extended_csv(ext: ExtendedHamiltonian, inv: InvariantFunction | None,
                 traj: Trajectory, stream: TextIO) -> None:
    """Write "t,q,p,theta,J,K,I" rows for an extended trajectory.

    The I column evaluates the lifted invariant at (q, p, theta); it is
    written as nan when no invariant is supplied.
    """
    states = traj.states
    K = ext.value_series(states)
    if inv is not None:
        I = inv.series(states[:, 2], states[:, :2])
    else:
        I = np.full(traj.times.size, math.nan)
    stream.write("t,q,p,theta,J,K,I\n")
    for n in range(traj.times.size):
        row = (traj.times[n], *states[n], K[n], I[n])
        stream.write(",".join(f"{v:.17g}" for v in row) + "\n")
