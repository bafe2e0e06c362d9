"""Proximal gradient drivers: plain, extrapolated, guarded, and momentum.

All drivers share the stopping rule ||r_k|| <= tol * max(1, ||g_k||) on the
fixed-point residual r_k = g_k - y_k of the underlying map, record one trace
row per iterate produced, and report how they stopped.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .anderson import AAConfig, AndersonEngine
from .problems import CompositeProblem

__all__ = [
    "IterationTrace",
    "SolveReport",
    "descent_check",
    "g_map",
    "pga_step",
    "run_aa_pga",
    "run_guarded_aa_pga",
    "run_nesterov_pga",
    "run_pga",
]


class IterationTrace:
    """Per-iteration log: objective, residual norm, step kind, elapsed time."""

    def __init__(self, keep_iterates: bool = False):
        self.objective: list[float] = []
        self.residual: list[float] = []
        self.step_kind: list[str] = []
        self.elapsed: list[float] = []
        self.keep_iterates = keep_iterates
        self.iterates: list[np.ndarray] = []
        self.aux: dict[str, list] = {}

    def __len__(self) -> int:
        return len(self.objective)

    def record(self, objective: float, residual: float, step_kind: str,
               elapsed: float, x=None, **aux) -> None:
        self.objective.append(float(objective))
        self.residual.append(float(residual))
        self.step_kind.append(step_kind)
        self.elapsed.append(float(elapsed))
        if self.keep_iterates and x is not None:
            self.iterates.append(x)
        for key, val in aux.items():
            self.aux.setdefault(key, []).append(val)


@dataclass
class SolveReport:
    x: np.ndarray
    trace: IterationTrace
    termination: str
    gamma: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.trace)


def pga_step(problem: CompositeProblem, x: np.ndarray,
             gamma: float) -> np.ndarray:
    """One proximal gradient step prox_{gamma h}(x - gamma grad f(x))."""
    return problem.h.prox(x - gamma * problem.f.grad(x), gamma)


def g_map(problem: CompositeProblem, y: np.ndarray, gamma: float) -> np.ndarray:
    """The dual-variable fixed-point map: prox, then gradient step.

    y* is a fixed point exactly when x* = prox_{gamma h}(y*) is stationary
    for f + h.
    """
    x = problem.h.prox(y, gamma)
    return x - gamma * problem.f.grad(x)


def descent_check(f_test: float, f_curr: float, grad_norm_sq: float,
                  gamma: float) -> bool:
    """Sufficient decrease test for a candidate point; ties are accepted."""
    return f_test <= f_curr - 0.5 * gamma * grad_norm_sq


def _stop(residual_norm: float, g_norm: float, tol: float) -> bool:
    return residual_norm <= tol * max(1.0, g_norm)


def run_pga(problem: CompositeProblem, x0, gamma: float | None = None,
            tol: float = 0.0, max_iters: int = 1000,
            keep_iterates: bool = False) -> SolveReport:
    """Plain proximal gradient descent."""
    if gamma is None:
        gamma = 1.0 / problem.f.smoothness
    start = time.perf_counter()
    x = np.asarray(x0, dtype=float)
    trace = IterationTrace(keep_iterates)
    termination = "max_iters"

    y = x - gamma * problem.f.grad(x)
    x = problem.h.prox(y, gamma)
    rn = float(np.linalg.norm(y - np.asarray(x0, dtype=float)))
    trace.record(problem.objective(x), rn, "plain",
                 time.perf_counter() - start, x=x)

    while len(trace) < max_iters:
        g = x - gamma * problem.f.grad(x)
        rn = float(np.linalg.norm(g - y))
        if _stop(rn, float(np.linalg.norm(g)), tol):
            termination = "tol"
            break
        y = g
        x = problem.h.prox(y, gamma)
        if not np.all(np.isfinite(x)):
            termination = "degenerate"
            trace.record(np.inf, rn, "plain", time.perf_counter() - start, x=x)
            break
        trace.record(problem.objective(x), rn, "plain",
                     time.perf_counter() - start, x=x)

    return SolveReport(x, trace, termination, gamma)


def run_aa_pga(problem: CompositeProblem, x0, gamma: float | None = None,
               aa_config: AAConfig | None = None, tol: float = 0.0,
               max_iters: int = 1000, keep_iterates: bool = False) -> SolveReport:
    """Proximal gradient with unguarded extrapolation on the dual variable.

    The window collects residuals r_k = g_k - y_k where g_k is the gradient
    step taken from x_k = prox(y_k); the extrapolated y feeds the next prox.
    Depth 0 reproduces run_pga exactly.
    """
    if gamma is None:
        gamma = 1.0 / problem.f.smoothness
    if aa_config is None:
        aa_config = AAConfig(m=5)
    start = time.perf_counter()
    x = np.asarray(x0, dtype=float)
    n = x.size
    engine = AndersonEngine(n, aa_config)
    trace = IterationTrace(keep_iterates)
    termination = "max_iters"

    y_prev = x  # the run starts with x_0 = y_0
    g = x - gamma * problem.f.grad(x)
    rn = float(np.linalg.norm(engine.push(g, y_prev)))
    y = g
    x = problem.h.prox(y, gamma)
    trace.record(problem.objective(x), rn, "plain",
                 time.perf_counter() - start, x=x)

    while len(trace) < max_iters:
        g = x - gamma * problem.f.grad(x)
        rn = float(np.linalg.norm(engine.push(g, y)))
        if _stop(rn, float(np.linalg.norm(g)), tol):
            termination = "tol"
            break
        y, coeffs = engine.extrapolate()
        x = problem.h.prox(y, gamma)
        kind = "AA" if len(coeffs.alpha) > 1 else "plain"
        if not np.all(np.isfinite(x)):
            termination = "degenerate"
            trace.record(np.inf, rn, kind, time.perf_counter() - start, x=x)
            break
        trace.record(problem.objective(x), rn, kind,
                     time.perf_counter() - start, x=x)

    return SolveReport(x, trace, termination, gamma)


def run_guarded_aa_pga(problem: CompositeProblem, x0,
                       gamma: float | None = None,
                       aa_config: AAConfig | None = None, tol: float = 0.0,
                       max_iters: int = 1000,
                       keep_iterates: bool = False) -> SolveReport:
    """Extrapolated proximal gradient with a sufficient-decrease guard.

    The extrapolated candidate is kept only when it passes descent_check
    against the current iterate; otherwise the plain proximal gradient step
    is taken. A rejected candidate costs one extra prox and one extra f
    evaluation. The residual window is kept across rejections unless the
    config says to flush it.
    """
    if gamma is None:
        gamma = 1.0 / problem.f.smoothness
    if aa_config is None:
        aa_config = AAConfig(m=5)
    start = time.perf_counter()
    x = np.asarray(x0, dtype=float)
    engine = AndersonEngine(x.size, aa_config)
    trace = IterationTrace(keep_iterates)
    termination = "max_iters"

    y_prev = x
    g = x - gamma * problem.f.grad(x)
    rn = float(np.linalg.norm(engine.push(g, y_prev)))
    y = g
    x = problem.h.prox(y, gamma)
    f_curr = problem.f.value(x)
    trace.record(f_curr + problem.h.value(x), rn, "plain",
                 time.perf_counter() - start, x=x)

    while len(trace) < max_iters:
        grad = problem.f.grad(x)
        g = x - gamma * grad
        rn = float(np.linalg.norm(engine.push(g, y)))
        if _stop(rn, float(np.linalg.norm(g)), tol):
            termination = "tol"
            break
        y_ext, coeffs = engine.extrapolate()
        x_test = problem.h.prox(y_ext, gamma)
        f_test = problem.f.value(x_test)
        if descent_check(f_test, f_curr, float(np.dot(grad, grad)), gamma):
            x, y, f_curr, kind = x_test, y_ext, f_test, "AA"
        else:
            y = g
            x = problem.h.prox(y, gamma)
            f_curr = problem.f.value(x)
            kind = "fallback"
            if aa_config.flush_on_fallback:
                engine.reset()
        if not np.all(np.isfinite(x)):
            termination = "degenerate"
            trace.record(np.inf, rn, kind, time.perf_counter() - start, x=x)
            break
        trace.record(f_curr + problem.h.value(x), rn, kind,
                     time.perf_counter() - start, x=x)

    return SolveReport(x, trace, termination, gamma)


def run_nesterov_pga(problem: CompositeProblem, x0,
                     gamma: float | None = None, tol: float = 0.0,
                     max_iters: int = 1000, keep_iterates: bool = False,
                     momentum=None) -> SolveReport:
    """Proximal gradient with momentum beta_k = (k - 1) / (k + 2).

    momentum may be a callable k -> beta_k; forcing it to zero reproduces
    run_pga iterates. The recorded residual is the difference quotient
    ||x_{k+1} - x_k|| / gamma, a surrogate for the gradient mapping norm.
    """
    if gamma is None:
        gamma = 1.0 / problem.f.smoothness
    if momentum is None:
        momentum = lambda k: (k - 1.0) / (k + 2.0)
    start = time.perf_counter()
    x = np.asarray(x0, dtype=float)
    x_prev = x
    trace = IterationTrace(keep_iterates)
    termination = "max_iters"

    k = 0
    while len(trace) < max_iters:
        k += 1
        beta = momentum(k)
        z = x + beta * (x - x_prev)
        x_next = problem.h.prox(z - gamma * problem.f.grad(z), gamma)
        rn = float(np.linalg.norm(x_next - x)) / gamma
        x_prev, x = x, x_next
        if not np.all(np.isfinite(x)):
            termination = "degenerate"
            trace.record(np.inf, rn, "plain", time.perf_counter() - start, x=x)
            break
        trace.record(problem.objective(x), rn, "plain",
                     time.perf_counter() - start, x=x)
        if _stop(rn, float(np.linalg.norm(x)), tol):
            termination = "tol"
            break

    return SolveReport(x, trace, termination, gamma)
