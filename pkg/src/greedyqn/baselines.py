"""Comparison methods: Nesterov accelerated gradient and secant BFGS.

Both emit the same trace schema as the quasi-Newton drivers so runs can
be merged into one report.  The BFGS here is the classical secant
update on an inverse-Hessian estimate with a weak-Wolfe line search
(bracketing plus interpolated bisection); the greedy machinery lives
elsewhere and is deliberately not used by the baselines.  Function and
gradient evaluations are counted separately from iterations because the
number of line-search trials per iterate is unpredictable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .agqn import (
    REASON_MAX_ITERS,
    REASON_TOLERANCE,
    IterationRecord,
    SolverResult,
)
from .linalg import symmetrize

__all__ = [
    "DivergenceError",
    "LineSearchError",
    "BaselineConfig",
    "nagd_run",
    "bfgs_wolfe_run",
]


class DivergenceError(RuntimeError):
    """The objective grew by an order of magnitude; the run is aborted."""


class LineSearchError(RuntimeError):
    """No step satisfying the Wolfe conditions within the trial budget."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state or {}


@dataclass
class BaselineConfig:
    x0: np.ndarray
    tol: float = 1e-9
    max_iters: int = 500
    step: float | None = None
    momentum: float | None = None
    c1: float = 1e-4
    c2: float = 0.9
    max_ls_trials: int = 50
    h0: np.ndarray | None = None
    diagnostics: bool = False
    keep_iterates: bool = False

    def __post_init__(self):
        if self.tol <= 0.0:
            raise ValueError("tol must be positive, got %g" % self.tol)
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if not 0.0 < self.c1 < self.c2 < 1.0:
            raise ValueError(
                "Wolfe parameters need 0 < c1 < c2 < 1, got c1=%g c2=%g"
                % (self.c1, self.c2)
            )
        if self.max_ls_trials < 1:
            raise ValueError("max_ls_trials must be positive")


def nagd_run(objective, config):
    """Accelerated gradient with constant step 1/omega and momentum
    (sqrt(kappa) - 1)/(sqrt(kappa) + 1), the strongly convex schedule."""
    constants = objective.constants
    step = config.step if config.step is not None else 1.0 / constants.omega
    if config.momentum is not None:
        momentum = config.momentum
    else:
        root = math.sqrt(constants.kappa)
        momentum = (root - 1.0) / (root + 1.0)

    x = np.array(config.x0, dtype=float)
    if x.shape != (objective.n,):
        raise ValueError("x0 shape %r does not match n = %d" % (x.shape, objective.n))
    y = x.copy()
    f0 = objective.f(x)
    guard = 10.0 * (abs(f0) + 1.0)
    f_evals = 1
    g_evals = 0

    trace = []
    iterates = [x.copy()] if config.keep_iterates else None
    reason = REASON_MAX_ITERS
    for k in range(config.max_iters + 1):
        grad = objective.grad(x)
        g_evals += 1
        grad_norm = float(np.linalg.norm(grad))
        f_value = objective.f(x) if k > 0 else f0
        if k > 0:
            f_evals += 1
            if f_value > guard:
                raise DivergenceError(
                    "f grew from %g to %g by iteration %d (step %g too large?)"
                    % (f0, f_value, k, step)
                )

        if grad_norm <= config.tol or k == config.max_iters:
            reason = REASON_TOLERANCE if grad_norm <= config.tol else REASON_MAX_ITERS
            trace.append(
                IterationRecord(k, f_value, grad_norm, None, None, None)
            )
            break

        grad_y = objective.grad(y)
        g_evals += 1
        x_new = y - step * grad_y
        y = x_new + momentum * (x_new - x)
        trace.append(IterationRecord(k, f_value, grad_norm, step, None, None))
        x = x_new
        if iterates is not None:
            iterates.append(x.copy())

    return SolverResult(
        x=x,
        iterations=len(trace) - 1,
        reason=reason,
        trace=trace,
        f_evals=f_evals,
        g_evals=g_evals,
        iterates=iterates,
    )


def _zoom_step(lo, hi, f_lo, g_lo, f_hi):
    """Quadratic-interpolation trial inside [lo, hi], clamped toward the
    interior; falls back to bisection when the model is unhelpful."""
    width = hi - lo
    denom = 2.0 * (f_hi - f_lo - g_lo * width)
    trial = lo + 0.5 * width
    if denom > 0.0:
        candidate = lo - g_lo * width**2 / denom
        margin = 0.1 * width
        if lo + margin <= candidate <= hi - margin:
            trial = candidate
    return trial


def _wolfe_search(objective, x, f_value, grad, direction, config, counters):
    """Weak-Wolfe line search: bracket by doubling, then shrink.

    Returns (alpha, f_new, grad_new).  Raises LineSearchError with a
    state dump after max_ls_trials trial points.
    """
    slope = float(grad @ direction)
    if slope >= 0.0:
        raise LineSearchError(
            "search direction is not a descent direction (slope %g)" % slope,
            state={"x": x.copy(), "f": f_value, "slope": slope},
        )
    c1, c2 = config.c1, config.c2
    lo, hi = 0.0, None
    f_lo, g_lo = f_value, slope
    alpha = 1.0
    for _ in range(config.max_ls_trials):
        f_try = objective.f(x + alpha * direction)
        grad_try = objective.grad(x + alpha * direction)
        counters["f"] += 1
        counters["g"] += 1
        slope_try = float(grad_try @ direction)
        if f_try > f_value + c1 * alpha * slope or (hi is not None and f_try >= f_lo):
            hi, f_hi = alpha, f_try
        elif slope_try < c2 * slope:
            lo, f_lo, g_lo = alpha, f_try, slope_try
            if hi is None:
                alpha = 2.0 * alpha
                continue
        else:
            return alpha, f_try, grad_try
        alpha = _zoom_step(lo, hi, f_lo, g_lo, f_hi)
    raise LineSearchError(
        "no Wolfe step after %d trials" % config.max_ls_trials,
        state={
            "x": x.copy(),
            "f": f_value,
            "grad_norm": float(np.linalg.norm(grad)),
            "slope": slope,
            "last_alpha": alpha,
            "bracket": (lo, hi),
        },
    )


def bfgs_wolfe_run(objective, config):
    """Classical BFGS on the inverse-Hessian estimate with weak Wolfe."""
    n = objective.n
    x = np.array(config.x0, dtype=float)
    if x.shape != (n,):
        raise ValueError("x0 shape %r does not match n = %d" % (x.shape, n))
    h = np.eye(n) if config.h0 is None else symmetrize(np.asarray(config.h0, dtype=float))
    identity = np.eye(n)

    f_value = objective.f(x)
    grad = objective.grad(x)
    counters = {"f": 1, "g": 1}
    secant_residuals = []
    wolfe_checks = []

    trace = []
    iterates = [x.copy()] if config.keep_iterates else None
    reason = REASON_MAX_ITERS
    for k in range(config.max_iters + 1):
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= config.tol or k == config.max_iters:
            reason = REASON_TOLERANCE if grad_norm <= config.tol else REASON_MAX_ITERS
            trace.append(IterationRecord(k, f_value, grad_norm, None, None, None))
            break

        direction = -(h @ grad)
        if float(grad @ direction) >= 0.0:
            # Estimate lost positivity to rounding; restart from steepest descent.
            h = identity.copy()
            direction = -grad

        try:
            alpha, f_new, grad_new = _wolfe_search(
                objective, x, f_value, grad, direction, config, counters
            )
        except LineSearchError as exc:
            # Typical near the noise floor of f, where no decrease is
            # measurable; hand the partial trace to the caller.
            exc.state["iteration"] = k
            exc.state["trace"] = trace
            exc.state["f_evals"] = counters["f"]
            exc.state["g_evals"] = counters["g"]
            raise
        s = alpha * direction
        y = grad_new - grad
        ys = float(y @ s)
        if config.diagnostics:
            slope = float(grad @ direction)
            slope_new = float(grad_new @ direction)
            wolfe_checks.append((f_value, f_new, slope, slope_new, alpha))
        if ys > 0.0:
            rho = 1.0 / ys
            left = identity - rho * np.outer(s, y)
            h = symmetrize(left @ h @ left.T + rho * np.outer(s, s))
            if config.diagnostics:
                secant_residuals.append(
                    float(np.linalg.norm(h @ y - s) / np.linalg.norm(s))
                )

        trace.append(IterationRecord(k, f_value, grad_norm, alpha, None, None))
        x = x + s
        f_value, grad = f_new, grad_new
        if iterates is not None:
            iterates.append(x.copy())

    details = {}
    if config.diagnostics:
        details = {"secant_residuals": secant_residuals, "wolfe_checks": wolfe_checks}
    return SolverResult(
        x=x,
        iterations=len(trace) - 1,
        reason=reason,
        trace=trace,
        f_evals=counters["f"],
        g_evals=counters["g"],
        iterates=iterates,
        details=details,
    )
