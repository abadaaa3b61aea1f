"""Finite Lie algebras of phase-space observables.

An algebra is a list of observables ``O_i(q, p)`` together with real structure
constants ``gamma[i, j, k]`` such that the Poisson bracket closes:
``{O_i, O_j} = sum_k gamma[i, j, k] * O_k``.  Antisymmetry in ``(i, j)`` and
the Jacobi identity are enforced at construction time; closure itself is a
numerical statement and is re-checked on demand at quasi-random sample points.

Two presets are registered:

``quadratic6``
    The span of ``1, q, p, qp, q^2, p^2`` (harmonic-oscillator family).
``spin-classical``
    ``(sqrt(1-q^2) cos p, sqrt(1-q^2) sin p, -q)``, the classical spin chart,
    valid on the open strip ``|q| < 1 - DOMAIN_MARGIN``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

from . import expressions

# Central finite-difference step used when cross-checking analytic gradients.
FD_STEP = 1e-5
# Open-domain margin for the spin chart; gradients blow up at |q| = 1.
DOMAIN_MARGIN = 1e-6
# Default seed recorded in closure reports.
DEFAULT_SEED = 2024


class DomainError(ValueError):
    """A phase-space point lies outside an observable's declared domain."""


@dataclass(frozen=True)
class Observable:
    """A scalar phase-space function with analytic gradients.

    ``domain`` is an open rectangle ``((q_lo, q_hi), (p_lo, p_hi))``; ``None``
    means all of the plane.
    """

    value: Callable[[float, float], float]
    grad_q: Callable[[float, float], float]
    grad_p: Callable[[float, float], float]
    name: str = ""
    domain: tuple[tuple[float, float], tuple[float, float]] | None = None

    def contains(self, q: float, p: float) -> bool:
        if self.domain is None:
            return True
        (qlo, qhi), (plo, phi) = self.domain
        return qlo < q < qhi and plo < p < phi

    def require(self, q: float, p: float) -> None:
        if not self.contains(q, p):
            raise DomainError(
                f"point (q={q}, p={p}) outside domain of observable "
                f"{self.name or '<anonymous>'}"
            )


class StructureConstants:
    """Antisymmetric structure constants with the Jacobi identity enforced.

    ``gamma[i, j, k]`` is the coefficient of ``O_k`` in ``{O_i, O_j}``.
    """

    def __init__(self, gamma: np.ndarray, jacobi_tol: float = 1e-12):
        gamma = np.asarray(gamma, dtype=float)
        if gamma.ndim != 3 or len(set(gamma.shape)) != 1:
            raise ValueError("gamma must be an M x M x M array")
        if not np.array_equal(gamma, -gamma.transpose(1, 0, 2)):
            raise ValueError("structure constants must satisfy "
                             "gamma[i,j,k] == -gamma[j,i,k] exactly")
        jac = (
            np.einsum("ijm,mkl->ijkl", gamma, gamma)
            + np.einsum("jkm,mil->ijkl", gamma, gamma)
            + np.einsum("kim,mjl->ijkl", gamma, gamma)
        )
        worst = float(np.abs(jac).max()) if gamma.size else 0.0
        if worst > jacobi_tol:
            raise ValueError(f"Jacobi identity violated: max residual {worst:.3e}")
        self._gamma = gamma
        self._gamma.setflags(write=False)

    @property
    def dim(self) -> int:
        return self._gamma.shape[0]

    @property
    def gamma(self) -> np.ndarray:
        return self._gamma

    def bracket_coefficients(self, i: int, j: int) -> np.ndarray:
        """Coefficients of ``{O_i, O_j}`` in the basis."""
        return self._gamma[i, j]

    def __eq__(self, other) -> bool:
        return (isinstance(other, StructureConstants)
                and np.array_equal(self._gamma, other._gamma))

    def __repr__(self) -> str:
        return f"StructureConstants(dim={self.dim})"


@dataclass(frozen=True)
class LieAlgebra:
    """A basis of observables plus matching structure constants."""

    basis: tuple[Observable, ...]
    constants: StructureConstants
    name: str
    # Rectangle used when drawing verification sample points.
    sample_box: tuple[tuple[float, float], tuple[float, float]] = ((-2.0, 2.0),
                                                                  (-2.0, 2.0))

    def __post_init__(self):
        if len(self.basis) != self.constants.dim:
            raise ValueError("basis size does not match structure constants")

    @property
    def dim(self) -> int:
        return len(self.basis)

    def observe(self, q, p) -> np.ndarray:
        """Basis values ``O_k(q, p)``; broadcasts over array arguments.

        Returns shape ``(M,)`` for scalar input and ``(M,) + shape`` for
        array input (constant basis elements are broadcast explicitly).
        """
        return self._stack([ob.value for ob in self.basis], q, p)

    def observe_gradients(self, q, p) -> tuple[np.ndarray, np.ndarray]:
        """Arrays of ``dO_k/dq`` and ``dO_k/dp``; broadcasts like observe."""
        gq = self._stack([ob.grad_q for ob in self.basis], q, p)
        gp = self._stack([ob.grad_p for ob in self.basis], q, p)
        return gq, gp

    @staticmethod
    def _stack(funcs, q, p) -> np.ndarray:
        vals = [np.asarray(f(q, p), dtype=float) for f in funcs]
        if np.ndim(q) == 0 and np.ndim(p) == 0:
            return np.array([float(v) for v in vals])
        shape = np.broadcast_shapes(np.shape(q), np.shape(p))
        return np.stack([np.broadcast_to(v, shape) for v in vals])

    def contains(self, q: float, p: float) -> bool:
        return all(ob.contains(q, p) for ob in self.basis)

    def contains_many(self, q, p) -> np.ndarray:
        """Vectorized domain membership over arrays of points."""
        q = np.asarray(q)
        p = np.asarray(p)
        ok = np.ones(np.broadcast_shapes(q.shape, p.shape), dtype=bool)
        for ob in self.basis:
            if ob.domain is not None:
                (qlo, qhi), (plo, phi) = ob.domain
                ok &= (q > qlo) & (q < qhi) & (p > plo) & (p < phi)
        return ok

    def require(self, q: float, p: float) -> None:
        for ob in self.basis:
            ob.require(q, p)


def poisson_bracket(f: Observable, g: Observable, x: Sequence[float]) -> float:
    """Canonical bracket ``df/dq dg/dp - df/dp dg/dq`` at ``x = (q, p)``."""
    q, p = float(x[0]), float(x[1])
    f.require(q, p)
    g.require(q, p)
    return f.grad_q(q, p) * g.grad_p(q, p) - f.grad_p(q, p) * g.grad_q(q, p)


@dataclass(frozen=True)
class ClosureReport:
    """Result of a numerical closure check over sample points."""

    algebra_name: str
    max_residual: float
    worst_pair: tuple[int, int]
    worst_point: tuple[float, float]
    tol: float
    n_samples: int
    seed: int | None
    passed: bool

    def __str__(self) -> str:
        verdict = "pass" if self.passed else "FAIL"
        i, j = self.worst_pair
        return (f"closure[{self.algebra_name}] {verdict}: max residual "
                f"{self.max_residual:.3e} (pair ({i},{j}) at "
                f"q={self.worst_point[0]:.4f}, p={self.worst_point[1]:.4f}; "
                f"tol {self.tol:.1e}, {self.n_samples} samples, seed {self.seed})")


def sample_points(
    box: tuple[tuple[float, float], tuple[float, float]],
    n: int,
    seed: int = DEFAULT_SEED,
) -> np.ndarray:
    """Deterministic low-discrepancy samples in a rectangle (Halton set)."""
    sampler = qmc.Halton(d=2, scramble=True, seed=seed)
    unit = sampler.random(n)
    (qlo, qhi), (plo, phi) = box
    return qmc.scale(unit, [qlo, plo], [qhi, phi])


def verify_closure(
    alg: LieAlgebra,
    samples: np.ndarray | None = None,
    tol: float = 1e-9,
    n_samples: int = 100,
    seed: int = DEFAULT_SEED,
    gamma_override: np.ndarray | None = None,
) -> ClosureReport:
    """Check ``{O_i, O_j} = sum_k gamma[i,j,k] O_k`` at every sample point.

    ``gamma_override`` substitutes a raw structure-constant table for the
    algebra's own; it exists so fault-injection checks can demonstrate that
    a corrupted table is caught.
    """
    used_seed: int | None = seed
    if samples is None:
        samples = sample_points(alg.sample_box, n_samples, seed=seed)
    else:
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        used_seed = None
    if len(samples) == 0:
        raise ValueError("closure verification needs at least one sample point")

    gamma = alg.constants.gamma if gamma_override is None else np.asarray(
        gamma_override, dtype=float)
    m = alg.dim
    worst = -1.0
    worst_pair = (0, 0)
    worst_point = (math.nan, math.nan)
    for q, p in samples:
        alg.require(q, p)
        obs = alg.observe(q, p)
        gq, gp = alg.observe_gradients(q, p)
        # brackets[i, j] = {O_i, O_j}(q, p) for all pairs at once
        brackets = np.outer(gq, gp) - np.outer(gp, gq)
        predicted = gamma @ obs
        resid = np.abs(brackets - predicted)
        idx = np.unravel_index(int(np.argmax(resid)), (m, m))
        if resid[idx] > worst:
            worst = float(resid[idx])
            worst_pair = (int(idx[0]), int(idx[1]))
            worst_point = (float(q), float(p))
    return ClosureReport(
        algebra_name=alg.name,
        max_residual=worst,
        worst_pair=worst_pair,
        worst_point=worst_point,
        tol=tol,
        n_samples=len(samples),
        seed=used_seed,
        passed=worst < tol,
    )


def check_gradients(
    alg: LieAlgebra,
    samples: np.ndarray | None = None,
    step: float = FD_STEP,
    rtol: float = 1e-6,
    n_samples: int = 50,
    seed: int = DEFAULT_SEED,
) -> float:
    """Max relative error of analytic gradients vs central finite differences.

    Raises ``AssertionError`` if any gradient misses the tolerance; returns
    the worst relative error otherwise.
    """
    if samples is None:
        # Shrink the box slightly so the difference stencil stays in-domain.
        (qlo, qhi), (plo, phi) = alg.sample_box
        box = ((qlo + 2 * step, qhi - 2 * step), (plo + 2 * step, phi - 2 * step))
        samples = sample_points(box, n_samples, seed=seed)
    worst = 0.0
    for q, p in samples:
        for ob in alg.basis:
            fd_q = (ob.value(q + step, p) - ob.value(q - step, p)) / (2 * step)
            fd_p = (ob.value(q, p + step) - ob.value(q, p - step)) / (2 * step)
            for analytic, approx in ((ob.grad_q(q, p), fd_q),
                                     (ob.grad_p(q, p), fd_p)):
                err = abs(analytic - approx) / max(1.0, abs(analytic))
                worst = max(worst, err)
                if err > rtol:
                    raise AssertionError(
                        f"gradient of {ob.name} off by {err:.3e} at "
                        f"(q={q:.4f}, p={p:.4f})"
                    )
    return worst


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

def _antisymmetric_table(dim: int,
                         entries: Sequence[tuple[int, int, int, float]]) -> np.ndarray:
    """Build gamma from upper entries, filling the antisymmetric mirrors."""
    gamma = np.zeros((dim, dim, dim))
    for i, j, k, v in entries:
        gamma[i, j, k] = v
        gamma[j, i, k] = -v
    return gamma


def _quadratic6() -> LieAlgebra:
    # Basis order: 1, q, p, qp, q^2, p^2.
    basis = (
        Observable(lambda q, p: 1.0, lambda q, p: 0.0, lambda q, p: 0.0, "1"),
        Observable(lambda q, p: q, lambda q, p: 1.0, lambda q, p: 0.0, "q"),
        Observable(lambda q, p: p, lambda q, p: 0.0, lambda q, p: 1.0, "p"),
        Observable(lambda q, p: q * p, lambda q, p: p, lambda q, p: q, "qp"),
        Observable(lambda q, p: q * q, lambda q, p: 2.0 * q, lambda q, p: 0.0,
                   "q^2"),
        Observable(lambda q, p: p * p, lambda q, p: 0.0, lambda q, p: 2.0 * p,
                   "p^2"),
    )
    # Pairwise brackets, derived once by symbolic expansion (re-derived in the
    # test suite by an independent sympy oracle):
    #   {q, p} = 1            {q, qp} = q          {q, p^2} = 2p
    #   {p, qp} = -p          {p, q^2} = -2q
    #   {qp, q^2} = -2q^2     {qp, p^2} = 2p^2     {q^2, p^2} = 4qp
    gamma = _antisymmetric_table(6, [
        (1, 2, 0, 1.0),
        (1, 3, 1, 1.0),
        (1, 5, 2, 2.0),
        (2, 3, 2, -1.0),
        (2, 4, 1, -2.0),
        (3, 4, 4, -2.0),
        (3, 5, 5, 2.0),
        (4, 5, 3, 4.0),
    ])
    return LieAlgebra(basis, StructureConstants(gamma), "quadratic6",
                      sample_box=((-2.0, 2.0), (-2.0, 2.0)))


def _spin_classical() -> LieAlgebra:
    lim = 1.0 - DOMAIN_MARGIN
    strip = ((-lim, lim), (-math.inf, math.inf))

    def s(q):
        return np.sqrt(1.0 - q * q)

    basis = (
        Observable(lambda q, p: s(q) * np.cos(p),
                   lambda q, p: -q / s(q) * np.cos(p),
                   lambda q, p: -s(q) * np.sin(p),
                   "O1", strip),
        Observable(lambda q, p: s(q) * np.sin(p),
                   lambda q, p: -q / s(q) * np.sin(p),
                   lambda q, p: s(q) * np.cos(p),
                   "O2", strip),
        Observable(lambda q, p: -q,
                   lambda q, p: -1.0,
                   lambda q, p: 0.0,
                   "O3", strip),
    )
    # {O_i, O_j} = epsilon_ijk O_k (cyclic), re-derived by the symbolic oracle
    # in the test suite.
    gamma = _antisymmetric_table(3, [
        (0, 1, 2, 1.0),
        (1, 2, 0, 1.0),
        (2, 0, 1, 1.0),
    ])
    return LieAlgebra(basis, StructureConstants(gamma), "spin-classical",
                      sample_box=((-0.9, 0.9), (-math.pi, math.pi)))


_PRESETS: dict[str, Callable[[], LieAlgebra]] = {
    "quadratic6": _quadratic6,
    "spin-classical": _spin_classical,
}


def algebra_preset(name: str) -> LieAlgebra:
    """Look up a registered algebra by name."""
    try:
        return _PRESETS[name]()
    except KeyError:
        raise KeyError(
            f"unknown algebra {name!r}; available: {sorted(_PRESETS)}"
        ) from None


def list_algebras() -> list[str]:
    return sorted(_PRESETS)


def algebra_from_expressions(
    name: str,
    basis_exprs: Sequence[str],
    gamma: np.ndarray,
    domain: tuple[tuple[float, float], tuple[float, float]] | None = None,
    sample_box: tuple[tuple[float, float], tuple[float, float]] = ((-2.0, 2.0),
                                                                  (-2.0, 2.0)),
) -> LieAlgebra:
    """Build an algebra from expression strings over ``q`` and ``p``.

    Gradients come from symbolic differentiation of each basis expression.
    """
    basis = []
    for text in basis_exprs:
        value, (dq, dp) = expressions.compile_with_derivatives(text, ("q", "p"))
        basis.append(Observable(
            value=lambda q, p, _f=value: float(_f(q, p)),
            grad_q=lambda q, p, _f=dq: float(_f(q, p)),
            grad_p=lambda q, p, _f=dp: float(_f(q, p)),
            name=text,
            domain=domain,
        ))
    return LieAlgebra(tuple(basis), StructureConstants(np.asarray(gamma, float)),
                      name, sample_box=sample_box)
