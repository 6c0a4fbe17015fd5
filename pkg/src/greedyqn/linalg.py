"""Dense symmetric/SPD kernels: weighted norms, trace inner products,
Cholesky-backed solves, and Sherman-Morrison-Woodbury factor maintenance.

Matrices are plain float64 ndarrays kept exactly symmetric by averaging
with the transpose after every mutation.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import cho_factor, cho_solve

__all__ = [
    "NotPositiveDefiniteError",
    "DegenerateUpdateError",
    "symmetrize",
    "weighted_norm",
    "dual_norm",
    "trace_inner",
    "SpdFactor",
    "update_factor_rank2",
]

# Uniform positive-definiteness threshold: smallest pivot relative to largest.
PIVOT_RTOL = 1e-12
# Forced refactorization cadence for SMW-maintained factors.
REFACTOR_EVERY = 50


class NotPositiveDefiniteError(ValueError):
    """A matrix or quadratic form failed a positive-(semi)definiteness check."""


class DegenerateUpdateError(RuntimeError):
    """A low-rank update would destroy positive definiteness."""

    def __init__(self, message, pivot_index=None, pivot_value=None):
        super().__init__(message)
        self.pivot_index = pivot_index
        self.pivot_value = pivot_value


def symmetrize(a):
    """Average a square matrix with its transpose; exact symmetry after."""
    return 0.5 * (a + a.T)


def weighted_norm(h, a_h):
    """``||h||_A = <Ah, h>^(1/2)``, taking the pre-multiplied product ``Ah``.

    The product is an argument, not the matrix, so a Hessian-vector
    oracle can stand in for an explicit A.
    """
    h = np.asarray(h, dtype=float)
    a_h = np.asarray(a_h, dtype=float)
    if h.ndim != 1 or h.shape != a_h.shape:
        raise ValueError(
            "weighted_norm: vector shapes %r and %r do not match" % (h.shape, a_h.shape)
        )
    quad = float(np.dot(a_h, h))
    if quad < -1e-12 * float(np.dot(h, h)):
        raise NotPositiveDefiniteError(
            "weighted_norm: <Ah, h> = %.6g is negative beyond rounding tolerance" % quad
        )
    return math.sqrt(max(quad, 0.0))


def dual_norm(h, factor):
    """``||h||*_A = <A^(-1) h, h>^(1/2)`` via a factor-backed solve."""
    h = np.asarray(h, dtype=float)
    if h.ndim != 1 or h.shape[0] != factor.n:
        raise ValueError(
            "dual_norm: vector of length %d against factor of order %d"
            % (h.shape[0] if h.ndim == 1 else -1, factor.n)
        )
    quad = float(np.dot(factor.solve(h), h))
    if quad < -1e-12 * float(np.dot(h, h)):
        raise NotPositiveDefiniteError(
            "dual_norm: <A^-1 h, h> = %.6g is negative beyond rounding tolerance" % quad
        )
    return math.sqrt(max(quad, 0.0))


def trace_inner(a, b):
    """``<A, B> = trace(A B) = sum_ij A[i,j] * B[j,i]``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or a.shape != b.shape or a.shape[0] != a.shape[1]:
        raise ValueError("trace_inner: incompatible shapes %r and %r" % (a.shape, b.shape))
    return float(np.sum(a * b.T))


def _checked_cholesky(matrix):
    """Lower Cholesky factor, rejecting non-SPD input by the pivot-ratio rule."""
    try:
        chol = cho_factor(matrix, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("Cholesky factorization failed: %s" % exc) from None
    pivots = np.diagonal(chol[0]) ** 2
    if pivots.min() <= PIVOT_RTOL * pivots.max():
        raise NotPositiveDefiniteError(
            "pivot ratio %.3e / %.3e is at or below the %g threshold"
            % (pivots.min(), pivots.max(), PIVOT_RTOL)
        )
    return chol


def _real_eigs_small(m):
    """Eigenvalues of a 1x1 or 2x2 matrix that is similar to a symmetric one."""
    if m.shape == (1, 1):
        return np.array([m[0, 0]])
    tr = m[0, 0] + m[1, 1]
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    disc = tr * tr - 4.0 * det
    s = math.sqrt(max(disc, 0.0))
    return np.array([0.5 * (tr - s), 0.5 * (tr + s)])


class SpdFactor:
    """Factorization of an SPD matrix supporting solves and rank-2 maintenance.

    Freshly constructed factors solve through the Cholesky decomposition.
    After a low-rank update the inverse is carried explicitly and patched
    with the Sherman-Morrison-Woodbury identity; a from-scratch
    refactorization is forced every ``refactor_every`` updates to bound
    drift.
    """

    def __init__(self, matrix, refactor_every=REFACTOR_EVERY):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("SpdFactor: expected a square matrix, got %r" % (matrix.shape,))
        self.matrix = matrix
        self.refactor_every = int(refactor_every)
        self._chol = _checked_cholesky(matrix)
        self._inv = None
        self.updates_since_refactor = 0

    @classmethod
    def _from_inverse(cls, matrix, inv, updates, refactor_every):
        obj = cls.__new__(cls)
        obj.matrix = matrix
        obj.refactor_every = refactor_every
        obj._chol = None
        obj._inv = inv
        obj.updates_since_refactor = updates
        return obj

    @property
    def n(self):
        return self.matrix.shape[0]

    def solve(self, b):
        """Solve ``A y = b`` against the maintained factorization."""
        if self._chol is not None:
            return cho_solve(self._chol, b)
        return self._inv @ b

    def inverse(self):
        """Explicit (symmetrized) inverse; computed once and cached."""
        if self._inv is None:
            self._inv = symmetrize(cho_solve(self._chol, np.eye(self.n)))
        return self._inv

    def updated(self, vectors, coeffs, new_matrix=None):
        """Factor for ``matrix + V C V^T`` with V of shape (n, k), k <= 2.

        Passing ``new_matrix`` lets a caller that already formed the
        perturbed matrix share the same array instead of recomputing it.
        """
        v = np.asarray(vectors, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        c = np.atleast_2d(np.asarray(coeffs, dtype=float))
        if v.shape[0] != self.n or v.shape[1] > 2 or c.shape != (v.shape[1], v.shape[1]):
            raise ValueError(
                "rank-2 update: V %r and C %r against order %d" % (v.shape, c.shape, self.n)
            )
        if not (np.any(v) and np.any(c)):
            # exact zero perturbation: solves must be unchanged bit-for-bit
            return self
        if new_matrix is None:
            new_matrix = symmetrize(self.matrix + (v @ c) @ v.T)
        if self.updates_since_refactor + 1 >= self.refactor_every:
            return SpdFactor(new_matrix, self.refactor_every)
        inv = self.inverse()
        w = inv @ v                      # A^-1 V, n x k
        cm = c @ (v.T @ w)               # C V^T A^-1 V, k x k
        # A + VCV^T stays SPD iff every eigenvalue of CM exceeds -1.
        eigs = _real_eigs_small(cm)
        lam_min = float(eigs.min())
        if 1.0 + lam_min <= PIVOT_RTOL * max(1.0, abs(lam_min)):
            idx = int(eigs.argmin())
            raise DegenerateUpdateError(
                "rank-%d update loses positive definiteness: pivot %d has value %.6g"
                % (v.shape[1], idx, 1.0 + lam_min),
                pivot_index=idx,
                pivot_value=1.0 + lam_min,
            )
        capacitance = np.eye(c.shape[0]) + cm
        inv_new = symmetrize(inv - w @ np.linalg.solve(capacitance, c @ w.T))
        return SpdFactor._from_inverse(
            new_matrix, inv_new, self.updates_since_refactor + 1, self.refactor_every
        )

    def scaled(self, scale, new_matrix):
        """Factor for ``scale * matrix`` (scale > 0); exact on the factors."""
        if scale <= 0.0:
            raise ValueError("scale must be positive, got %g" % scale)
        if self._chol is not None:
            chol = (self._chol[0] * math.sqrt(scale), self._chol[1])
            inv = None if self._inv is None else self._inv / scale
            obj = SpdFactor._from_inverse(
                new_matrix, inv, self.updates_since_refactor, self.refactor_every
            )
            obj._chol = chol
            return obj
        return SpdFactor._from_inverse(
            new_matrix, self._inv / scale, self.updates_since_refactor, self.refactor_every
        )


def update_factor_rank2(factor, vectors, coeffs):
    """Carry an SpdFactor through a rank-<=2 symmetric perturbation ``V C V^T``."""
    return factor.updated(vectors, coeffs)
