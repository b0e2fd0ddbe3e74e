"""
Steady-state kernels: continuous Lyapunov equations for small dense systems and
the stabilising root of scalar quadratic Riccati equations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .model import NumericalError, ParameterError, UnstableDynamicsError

MAX_ORDER = 4
SYMMETRY_TOL = 1e-12
RESIDUAL_TOL = 1e-10
PSD_TOL = 1e-12


# ==========================================
# 1. LYAPUNOV
# ==========================================
@dataclass(frozen=True)
class LyapunovProblem:
    """A P + P A^T + Q = 0 with A Hurwitz and Q = B B^T."""

    A: np.ndarray = field(repr=False)
    Q: np.ndarray = field(repr=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n) or not 1 <= n <= MAX_ORDER:
            raise ParameterError(f"A must be square of order 1..{MAX_ORDER}, got shape {A.shape}")
        if Q.shape != (n, n):
            raise ParameterError(f"Q must have shape {(n, n)}, got {Q.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(Q))):
            raise ParameterError("A and Q must be finite")
        if np.max(np.abs(Q - Q.T)) > SYMMETRY_TOL * (1.0 + np.max(np.abs(Q))):
            raise ParameterError("Q must be symmetric")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "Q", Q)

    @classmethod
    def from_noise(cls, A, B) -> LyapunovProblem:
        B = np.atleast_2d(np.asarray(B, dtype=float))
        return cls(A, B @ B.T)

    @property
    def order(self) -> int:
        return self.A.shape[0]


def is_hurwitz(A) -> bool:
    return bool(np.all(np.linalg.eigvals(np.atleast_2d(A)).real < 0))


def solve_lyapunov(p: LyapunovProblem) -> np.ndarray:
    """
    Solves A P + P A^T + Q = 0 by vectorisation.

    With column-major vec(), vec(A P + P A^T) = (I kron A + A kron I) vec(P), so
    the n x n matrix equation becomes one n^2 x n^2 linear system.
    """
    if not is_hurwitz(p.A):
        raise UnstableDynamicsError("unstable dynamics: A has an eigenvalue with non-negative real part")

    n = p.order
    eye = np.eye(n)
    kron_sum = np.kron(eye, p.A) + np.kron(p.A, eye)
    try:
        vec_p = scipy.linalg.solve(kron_sum, -p.Q.reshape(-1, order="F"))
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
        raise NumericalError(f"singular Lyapunov system: {exc}") from exc

    P = vec_p.reshape((n, n), order="F")
    P = 0.5 * (P + P.T)

    residual = p.A @ P + P @ p.A.T + p.Q
    if np.max(np.abs(residual)) >= RESIDUAL_TOL * (1.0 + np.max(np.abs(p.Q))):
        raise NumericalError(f"Lyapunov residual {np.max(np.abs(residual)):.3e} above tolerance")
    smallest = float(np.linalg.eigvalsh(P).min())
    if smallest < -PSD_TOL * (1.0 + np.max(np.abs(P))):
        raise NumericalError(f"Lyapunov solution not positive semidefinite: smallest eigenvalue {smallest:.3e}")
    return P


# ==========================================
# 2. SCALAR RICCATI
# ==========================================
@dataclass(frozen=True)
class ScalarQuadratic:
    """
    a P^2 + b P + c = 0, with the closed loop implied by a root P given by
    closed_loop[0] + closed_loop[1] * P (must be < 0 for the stabilising root).

    Example: the forward Kalman Riccati -2 lam P - 4|alpha|^2 P^2 + kappa = 0 has
    closed loop -lam - 4|alpha|^2 P, i.e. closed_loop = (-lam, -4|alpha|^2).
    """

    a: float
    b: float
    c: float
    closed_loop: tuple[float, float]

    def __post_init__(self):
        if self.a == 0:
            raise ParameterError("a must be non-zero for a quadratic")

    def residual(self, root: float) -> float:
        return self.a * root**2 + self.b * root + self.c

    def closed_loop_at(self, root: float) -> float:
        return self.closed_loop[0] + self.closed_loop[1] * root

    def roots(self) -> tuple[float, float]:
        """Both real roots, smaller first. Cancellation-free form."""
        disc = self.b**2 - 4.0 * self.a * self.c
        if disc < 0:
            raise NumericalError(f"complex roots: discriminant {disc:.6g} < 0")
        sqrt_disc = math.sqrt(disc)
        q = -0.5 * (self.b + math.copysign(sqrt_disc, self.b))
        if q == 0.0:
            return 0.0, 0.0
        r1, r2 = q / self.a, self.c / q
        return (r1, r2) if r1 <= r2 else (r2, r1)


def stabilizing_root(q: ScalarQuadratic) -> float:
    # Every Riccati in this model is stabilised by the larger root; a closed
    # loop that comes out non-negative means a sign slipped upstream.
    smaller, larger = q.roots()
    if q.closed_loop_at(larger) >= 0:
        if q.closed_loop_at(smaller) >= 0:
            raise NumericalError("both roots destabilising")
        raise NumericalError("larger root is destabilising; check the closed-loop signs")

    scale = max(abs(q.a) * larger**2, abs(q.b * larger), abs(q.c), 1e-300)
    if abs(q.residual(larger)) / scale >= RESIDUAL_TOL:
        raise NumericalError(f"Riccati residual {q.residual(larger):.3e} above tolerance")
    return larger
