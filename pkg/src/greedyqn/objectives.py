"""Objective functions: value, gradient, HVP, Hessian diagonal, constants.

Solvers only touch objectives through this narrow contract, so anything
exposing n, f, grad, hvp, hessian_diag and a SmoothnessConstants works.
The two concrete objectives are regularized logistic regression (the
experiment workload; all per-sample reductions are O(nm) matrix ops and
never materialize the Hessian) and a quadratic (the zero-Lipschitz edge
case where the method reduces to damped Newton on a fixed target).

explicit_hessian() exists for diagnostics and small-instance tests only.
Evaluation order over samples is fixed, so identical inputs produce
bit-identical outputs; worker and master replicas rely on this.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .broyden import HessianOracle
from .linalg import NotPositiveDefiniteError, symmetrize

__all__ = [
    "SmoothnessConstants",
    "preset_constants",
    "computed_constants",
    "data_curvature",
    "logistic_hessian_lipschitz",
    "Objective",
    "LogisticObjective",
    "QuadraticObjective",
    "CountingObjective",
    "fd_gradient",
    "fd_hvp",
]


@dataclass(frozen=True)
class SmoothnessConstants:
    """Problem constants: strong convexity mu, smoothness omega, Hessian
    Lipschitz constant, and the strong self-concordance constant."""

    mu: float
    omega: float
    lipschitz: float
    concordance: float

    def __post_init__(self):
        if not self.mu > 0.0:
            raise ValueError("mu must be positive, got %g" % self.mu)
        if self.omega < self.mu:
            raise ValueError(
                "omega (%g) must be at least mu (%g)" % (self.omega, self.mu)
            )
        if self.lipschitz < 0.0 or self.concordance < 0.0:
            raise ValueError("lipschitz and concordance must be nonnegative")

    @property
    def kappa(self):
        return self.omega / self.mu

    @classmethod
    def with_default_concordance(cls, mu, omega, lipschitz):
        """Fill the self-concordance constant with the L/mu^(3/2) bound."""
        return cls(mu, omega, lipschitz, lipschitz / mu**1.5)


def preset_constants(m):
    """The experiment preset scaled by sample count: mu = 0.02m, omega = m,
    Hessian Lipschitz 0.04m, self-concordance 2 (kappa = 50)."""
    if m <= 0:
        raise ValueError("preset constants need a positive sample count")
    return SmoothnessConstants(0.02 * m, float(m), 0.04 * m, 2.0)


def data_curvature(samples):
    """Largest eigenvalue of sum_j c_j c_j^T (zero for an empty sample set)."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] == 0:
        return 0.0
    gram = symmetrize(samples.T @ samples)
    return float(np.linalg.eigvalsh(gram)[-1])


def logistic_hessian_lipschitz(samples):
    """A global Hessian Lipschitz bound for regularized logistic loss.

    The per-sample sigmoid has |third derivative| <= 1/(6 sqrt(3)), and
    the weight change between points x, y is at most that times
    ||c_j|| ||x - y||, giving L <= max_j||c_j|| lambda_max(C'C)/(6 sqrt 3).
    """
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] == 0:
        return 0.0
    max_norm = float(np.max(np.linalg.norm(samples, axis=1)))
    return max_norm * data_curvature(samples) / (6.0 * math.sqrt(3.0))


def computed_constants(samples, gamma, lipschitz=None, concordance=None):
    """Constants from the data: mu = gamma, omega = gamma + lambda_max/4.

    The Hessian Lipschitz constant defaults to the logistic bound above;
    the self-concordance constant defaults to L/mu^(3/2).
    """
    if gamma <= 0.0:
        raise ValueError("gamma must be positive, got %g" % gamma)
    omega = gamma + 0.25 * data_curvature(samples)
    if lipschitz is None:
        lipschitz = logistic_hessian_lipschitz(samples)
    if concordance is None:
        return SmoothnessConstants.with_default_concordance(gamma, omega, lipschitz)
    return SmoothnessConstants(gamma, omega, lipschitz, concordance)


class Objective:
    """Shared plumbing; subclasses define n, f, grad, hvp, hessian_diag."""

    n = 0
    constants: SmoothnessConstants

    def _check_x(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(
                "point of shape %r does not match dimension %d" % (x.shape, self.n)
            )
        return x

    def hessian_oracle(self, x):
        """Diagonal plus HVP access to the Hessian at a fixed point."""
        x = self._check_x(x)
        return HessianOracle(self.hessian_diag(x), lambda u: self.hvp(x, u))


class LogisticObjective(Objective):
    """f(x) = sum_j ln(1 + exp(-b_j <c_j, x>)) + (gamma/2) ||x||^2."""

    def __init__(self, samples, labels, gamma=1.0, constants=None):
        samples = np.ascontiguousarray(samples, dtype=float)
        labels = np.ascontiguousarray(labels, dtype=float)
        if samples.ndim != 2:
            raise ValueError("samples must be a 2-D array")
        if labels.shape != (samples.shape[0],):
            raise ValueError("labels must be one per sample")
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ValueError("labels must lie in {-1, +1}")
        if gamma <= 0.0:
            raise ValueError("gamma must be positive, got %g" % gamma)
        self.samples = samples
        self.labels = labels
        self.gamma = float(gamma)
        self.m, self.n = samples.shape
        self._samples_sq = samples**2
        self.constants = constants if constants is not None else preset_constants(self.m)

    def f(self, x):
        x = self._check_x(x)
        margins = self.labels * (self.samples @ x)
        loss = float(np.sum(np.logaddexp(0.0, -margins)))
        return loss + 0.5 * self.gamma * float(x @ x)

    def grad(self, x):
        x = self._check_x(x)
        z = self.samples @ x
        weights = -self.labels * expit(-self.labels * z)
        return self.samples.T @ weights + self.gamma * x

    def _hessian_weights(self, x):
        # sigmoid''-type weights s(z)(1 - s(z)); independent of the label sign
        s = expit(self.samples @ x)
        return s * (1.0 - s)

    def hvp(self, x, u):
        x = self._check_x(x)
        u = self._check_x(u)
        w = self._hessian_weights(x)
        return self.samples.T @ (w * (self.samples @ u)) + self.gamma * u

    def hessian_diag(self, x):
        x = self._check_x(x)
        return self._hessian_weights(x) @ self._samples_sq + self.gamma

    def hessian_oracle(self, x):
        # Weights are fixed at x, so share them across the tau + 2 HVPs an
        # iteration issues here; expressions match hvp() bit for bit.
        x = self._check_x(x)
        w = self._hessian_weights(x)
        diag = w @ self._samples_sq + self.gamma
        samples = self.samples
        gamma = self.gamma

        def hvp(u):
            return samples.T @ (w * (samples @ u)) + gamma * u

        return HessianOracle(diag, hvp)

    def explicit_hessian(self, x):
        x = self._check_x(x)
        w = self._hessian_weights(x)
        h = self.samples.T @ (w[:, None] * self.samples)
        h[np.diag_indices(self.n)] += self.gamma
        return symmetrize(h)


class QuadraticObjective(Objective):
    """f(x) = (1/2) x'Ax - b'x for SPD A; the L = 0, M = 0 edge case."""

    def __init__(self, a, b):
        a = symmetrize(np.asarray(a, dtype=float))
        b = np.asarray(b, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("A must be square")
        if b.shape != (a.shape[0],):
            raise ValueError("b must match the order of A")
        eigs = np.linalg.eigvalsh(a)
        if eigs[0] <= 0.0:
            raise NotPositiveDefiniteError(
                "quadratic objective needs A > 0; smallest eigenvalue %g" % eigs[0]
            )
        self.a = a
        self.b = b
        self.n = a.shape[0]
        self.constants = SmoothnessConstants(float(eigs[0]), float(eigs[-1]), 0.0, 0.0)

    def f(self, x):
        x = self._check_x(x)
        return 0.5 * float(x @ (self.a @ x)) - float(self.b @ x)

    def grad(self, x):
        x = self._check_x(x)
        return self.a @ x - self.b

    def hvp(self, x, u):
        self._check_x(x)
        u = self._check_x(u)
        return self.a @ u

    def hessian_diag(self, x):
        self._check_x(x)
        return np.diagonal(self.a).copy()

    def explicit_hessian(self, x):
        self._check_x(x)
        return self.a.copy()


class CountingObjective(Objective):
    """Delegating wrapper that counts oracle calls (HVPs via hessian_oracle
    included); used for budget assertions and run reports."""

    def __init__(self, inner):
        self.inner = inner
        self.f_calls = 0
        self.grad_calls = 0
        self.hvp_calls = 0
        self.diag_calls = 0

    @property
    def n(self):
        return self.inner.n

    @property
    def constants(self):
        return self.inner.constants

    def f(self, x):
        self.f_calls += 1
        return self.inner.f(x)

    def grad(self, x):
        self.grad_calls += 1
        return self.inner.grad(x)

    def hvp(self, x, u):
        self.hvp_calls += 1
        return self.inner.hvp(x, u)

    def hessian_diag(self, x):
        self.diag_calls += 1
        return self.inner.hessian_diag(x)

    def hessian_oracle(self, x):
        self.diag_calls += 1
        oracle = self.inner.hessian_oracle(x)

        def hvp(u):
            self.hvp_calls += 1
            return oracle.hvp(u)

        return HessianOracle(oracle.diag, hvp)

    def explicit_hessian(self, x):
        return self.inner.explicit_hessian(x)


def fd_gradient(func, x, h=1e-6):
    """Central-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for i in range(x.shape[0]):
        step = np.zeros_like(x)
        step[i] = h
        out[i] = (func(x + step) - func(x - step)) / (2.0 * h)
    return out


def fd_hvp(grad_func, x, u, h=1e-6):
    """Central-difference Hessian-vector product from a gradient function."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    return (grad_func(x + h * u) - grad_func(x - h * u)) / (2.0 * h)
