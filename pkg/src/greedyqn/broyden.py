"""Broyden-family updates toward a target matrix A known through an oracle.

All updates move a maintained estimate G along a single standard unit
vector u = e_i: SR1, DFP, BFGS, or any fixed convex combination

    broyd_phi(G, A, u) = phi * DFP(G, A, u) + (1 - phi) * SR1(G, A, u).

The greedy variants pick the coordinate maximizing <Gu,u>/<Au,u>, which
only needs the two diagonals, and consume exactly one Hessian-vector
product per update.  Every update is a rank-<=2 symmetric perturbation,
so the estimate's factorization is carried along cheaply.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import (
    NotPositiveDefiniteError,
    SpdFactor,
    symmetrize,
    trace_inner,
)

__all__ = [
    "OrderingViolationError",
    "BroydenVariant",
    "HessianOracle",
    "HessianEstimate",
    "sr1",
    "dfp",
    "bfgs",
    "broyd",
    "greedy_vector",
    "gbroyd",
    "gbroyd_recorded",
    "gbroyd_tau",
    "corrected_update",
    "corrected_update_recorded",
    "sigma_metric",
    "delta_metric",
]

# Relative threshold for the SR1 skip branch and its ordering check.
SR1_SKIP_RTOL = 1e-12


class OrderingViolationError(RuntimeError):
    """The estimate fell below the target along the update direction."""


@dataclass(frozen=True)
class BroydenVariant:
    """Which member of the Broyden family an update applies.

    ``fixed`` carries an explicit phi in [0, 1]; the named tags use the
    dedicated formulas (bfgs corresponds to phi = <Au,u>/<Gu,u>).
    """

    tag: str
    phi: float | None = None

    def __post_init__(self):
        if self.tag not in ("sr1", "dfp", "bfgs", "fixed"):
            raise ValueError("unknown Broyden variant %r" % (self.tag,))
        if self.tag == "fixed":
            if self.phi is None or not 0.0 <= self.phi <= 1.0:
                raise ValueError("fixed variant needs phi in [0, 1], got %r" % (self.phi,))
        elif self.phi is not None:
            raise ValueError("phi is only meaningful for the fixed variant")

    @classmethod
    def sr1(cls):
        return cls("sr1")

    @classmethod
    def dfp(cls):
        return cls("dfp")

    @classmethod
    def bfgs(cls):
        return cls("bfgs")

    @classmethod
    def fixed(cls, phi):
        return cls("fixed", float(phi))


DEFAULT_VARIANT = BroydenVariant.bfgs()


class HessianOracle:
    """Access pattern for a fixed target A: its diagonal and u -> A u."""

    def __init__(self, diag, hvp):
        self.diag = np.asarray(diag, dtype=float)
        self._hvp = hvp

    @property
    def n(self):
        return self.diag.shape[0]

    def hvp(self, u):
        return np.asarray(self._hvp(u), dtype=float)

    def unit_hvp(self, index):
        """A e_index, the column of A along a standard unit vector."""
        e = np.zeros(self.n)
        e[index] = 1.0
        return self.hvp(e)

    @classmethod
    def from_matrix(cls, a):
        a = np.asarray(a, dtype=float)
        return cls(np.diagonal(a).copy(), lambda u: a @ u)


class HessianEstimate:
    """A maintained SPD estimate: dense matrix, diagonal copy, factor.

    Instances are immutable; updates return evolved copies so distinct
    estimates (for example per-worker replicas) never share state.
    """

    __slots__ = ("matrix", "diag", "factor", "generation")

    def __init__(self, matrix, refactor_every=50):
        matrix = symmetrize(np.asarray(matrix, dtype=float))
        self.matrix = matrix
        self.diag = np.diagonal(matrix).copy()
        self.factor = SpdFactor(matrix, refactor_every)
        self.generation = 0

    @classmethod
    def _wrap(cls, matrix, factor, generation):
        obj = cls.__new__(cls)
        obj.matrix = matrix
        obj.diag = np.diagonal(matrix).copy()
        obj.factor = factor
        obj.generation = generation
        return obj

    @property
    def n(self):
        return self.matrix.shape[0]

    def fresh_factor(self):
        """A from-scratch factorization of the current matrix."""
        return SpdFactor(self.matrix)

    def _apply(self, vectors, coeffs):
        """Evolve by the symmetric perturbation V C V^T (rank <= 2)."""
        new_matrix = symmetrize(self.matrix + (vectors @ coeffs) @ vectors.T)
        new_factor = self.factor.updated(vectors, coeffs, new_matrix)
        return HessianEstimate._wrap(new_matrix, new_factor, self.generation + 1)

    def scaled(self, scale):
        """Evolve by multiplication with a positive scalar."""
        if scale <= 0.0:
            raise ValueError("scale must be positive, got %g" % scale)
        new_matrix = self.matrix * scale
        new_factor = self.factor.scaled(scale, new_matrix)
        return HessianEstimate._wrap(new_matrix, new_factor, self.generation + 1)


def _column(est, index):
    # G e_index; the estimate is symmetric so a row read is the product.
    return est.matrix[index].copy()


def sr1(est, index, a_vec):
    """SR1 step: G - (G-A)uu'(G-A) / <(G-A)u, u> with u = e_index.

    Skips (returns the estimate unchanged) when the denominator is
    within rounding of zero, i.e. the estimate already matches the
    target along u.
    """
    a_vec = np.asarray(a_vec, dtype=float)
    qg = est.diag[index]
    s = _column(est, index) - a_vec
    qs = s[index]
    if qs < -SR1_SKIP_RTOL * qg:
        raise OrderingViolationError(
            "sr1: <(G-A)u,u> = %.6g < 0; estimate fell below target along u=%d"
            % (qs, index)
        )
    if qs <= SR1_SKIP_RTOL * qg:
        return est
    return est._apply(s[:, None], np.array([[-1.0 / qs]]))


def dfp(est, index, a_vec):
    """DFP step: G - (Auu'G + Guu'A)/<Au,u> + (<Gu,u>/<Au,u> + 1) Auu'A/<Au,u>."""
    a_vec = np.asarray(a_vec, dtype=float)
    qa = a_vec[index]
    if qa <= 0.0:
        raise NotPositiveDefiniteError("dfp: <Au,u> = %.6g is not positive" % qa)
    qg = est.diag[index]
    g_vec = _column(est, index)
    vectors = np.column_stack((a_vec, g_vec))
    c00 = (qg / qa + 1.0) / qa
    coeffs = np.array([[c00, -1.0 / qa], [-1.0 / qa, 0.0]])
    return est._apply(vectors, coeffs)


def bfgs(est, index, a_vec):
    """BFGS step: G - Guu'G/<Gu,u> + Auu'A/<Au,u>."""
    a_vec = np.asarray(a_vec, dtype=float)
    qa = a_vec[index]
    qg = est.diag[index]
    if qa <= 0.0 or qg <= 0.0:
        raise NotPositiveDefiniteError(
            "bfgs: quadratic forms <Au,u> = %.6g, <Gu,u> = %.6g must be positive"
            % (qa, qg)
        )
    g_vec = _column(est, index)
    vectors = np.column_stack((a_vec, g_vec))
    coeffs = np.array([[1.0 / qa, 0.0], [0.0, -1.0 / qg]])
    return est._apply(vectors, coeffs)


def broyd(variant, est, index, a_vec):
    """Dispatch one Broyden-family update along u = e_index."""
    if variant.tag == "sr1":
        return sr1(est, index, a_vec)
    if variant.tag == "dfp":
        return dfp(est, index, a_vec)
    if variant.tag == "bfgs":
        return bfgs(est, index, a_vec)
    phi = variant.phi
    if phi == 0.0:
        return sr1(est, index, a_vec)
    if phi == 1.0:
        return dfp(est, index, a_vec)
    a_vec = np.asarray(a_vec, dtype=float)
    qa = a_vec[index]
    if qa <= 0.0:
        raise NotPositiveDefiniteError("broyd: <Au,u> = %.6g is not positive" % qa)
    qg = est.diag[index]
    g_vec = _column(est, index)
    s = g_vec - a_vec
    qs = s[index]
    if qs < -SR1_SKIP_RTOL * qg:
        raise OrderingViolationError(
            "broyd: <(G-A)u,u> = %.6g < 0; estimate fell below target along u=%d"
            % (qs, index)
        )
    vectors = np.column_stack((a_vec, g_vec))
    c00 = (qg / qa + 1.0) / qa
    coeffs = phi * np.array([[c00, -1.0 / qa], [-1.0 / qa, 0.0]])
    if qs > SR1_SKIP_RTOL * qg:
        # ss' in the (Au, Gu) basis: s = Gu - Au
        coeffs = coeffs + (1.0 - phi) * (
            np.array([[-1.0, 1.0], [1.0, -1.0]]) / qs
        )
    return est._apply(vectors, coeffs)


def greedy_vector(g_diag, a_diag):
    """Index of the unit vector maximizing <Gu,u>/<Au,u>; ties -> smallest."""
    g_diag = np.asarray(g_diag, dtype=float)
    a_diag = np.asarray(a_diag, dtype=float)
    if g_diag.shape != a_diag.shape:
        raise ValueError("greedy_vector: diagonal lengths differ")
    if np.any(a_diag <= 0.0):
        bad = int(np.argmax(a_diag <= 0.0))
        raise NotPositiveDefiniteError(
            "greedy_vector: oracle diagonal entry %d is %.6g (must be > 0)"
            % (bad, a_diag[bad])
        )
    # np.argmax returns the first maximizer, which is the smallest index.
    return int(np.argmax(g_diag / a_diag))


def gbroyd_recorded(est, oracle, variant=DEFAULT_VARIANT):
    """One greedy update; returns (estimate, index, HVP vector) for replay."""
    index = greedy_vector(est.diag, oracle.diag)
    a_vec = oracle.unit_hvp(index)
    return broyd(variant, est, index, a_vec), index, a_vec


def gbroyd(est, oracle, variant=DEFAULT_VARIANT):
    """One greedy Broyden update against the oracle (one HVP consumed)."""
    out, _, _ = gbroyd_recorded(est, oracle, variant)
    return out


def gbroyd_tau(est, oracle, tau, variant=DEFAULT_VARIANT):
    """Compose ``tau`` greedy updates against one oracle.

    Returns the refined estimate and the list of (index, HVP vector)
    records, in application order, for later serialization.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative, got %d" % tau)
    records = []
    for _ in range(tau):
        est, index, a_vec = gbroyd_recorded(est, oracle, variant)
        records.append((index, a_vec))
    return est, records


def corrected_update_recorded(est, r_plus, m_const, oracle_plus, variant=DEFAULT_VARIANT):
    """Scale by (1 + M r_plus), then one greedy update at the new point."""
    if r_plus < 0.0 or m_const < 0.0:
        raise ValueError("corrected_update: r_plus and M must be nonnegative")
    scaled = est.scaled(1.0 + m_const * r_plus)
    return gbroyd_recorded(scaled, oracle_plus, variant)


def corrected_update(est, r_plus, m_const, oracle_plus, variant=DEFAULT_VARIANT):
    out, _, _ = corrected_update_recorded(est, r_plus, m_const, oracle_plus, variant)
    return out


def sigma_metric(g, a_factor):
    """Estimate-error metric <A^(-1), G> - n (zero iff G = A when G >= A)."""
    gm = g.matrix if isinstance(g, HessianEstimate) else np.asarray(g, dtype=float)
    if gm.shape != (a_factor.n, a_factor.n):
        raise ValueError(
            "sigma_metric: estimate %r against factor of order %d" % (gm.shape, a_factor.n)
        )
    return trace_inner(a_factor.inverse(), gm) - a_factor.n


def delta_metric(pairs):
    """Aggregate metric: sum of sigma_metric over (G_i, A_i factor) pairs."""
    total = 0.0
    for g, a_factor in pairs:
        total += sigma_metric(g, a_factor)
    return total
