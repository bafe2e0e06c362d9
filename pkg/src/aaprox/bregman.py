"""Bregman proximal gradient with optional guarded extrapolation.

A Legendre kernel phi replaces the Euclidean geometry: the iteration moves
in the mirror variable y = grad phi(x) - gamma grad f(x) and returns to the
primal space through the conjugate gradient map and a kernel-aware proximal
step. Extrapolation happens in the mirror variable, which is unconstrained
whenever the kernel has a conjugate defined on all of R^n; the guard keeps
only candidates passing a surrogate descent test.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .anderson import AAConfig, AndersonEngine
from .problems import DomainError, NonsmoothTerm
from .solvers import IterationTrace, SolveReport

__all__ = [
    "BregmanProblem",
    "Kernel",
    "UnsupportedProxError",
    "bpg_step",
    "bregman_descent_check",
    "bregman_distance",
    "bregman_prox",
    "burg_kernel",
    "energy_kernel",
    "fermi_dirac_kernel",
    "hellinger_kernel",
    "polynomial_kernel",
    "run_bpg",
    "run_guarded_aa_bpg",
    "shannon_kernel",
]


class UnsupportedProxError(ValueError):
    """No closed-form Bregman proximal map for this kernel and term."""


@dataclass
class Kernel:
    """A Legendre kernel: value, gradient, and conjugate gradient.

    full_dual_domain says whether grad of the conjugate accepts every
    y in R^n; mirror-variable extrapolation requires that.
    """

    name: str
    value: callable
    grad: callable
    conj_grad: callable
    full_dual_domain: bool


def energy_kernel() -> Kernel:
    """phi(x) = ||x||_2^2 / 2; gradient and conjugate gradient are both the
    identity, recovering the Euclidean setting."""
    return Kernel(
        name="energy",
        value=lambda x: 0.5 * float(np.dot(x, x)),
        grad=lambda x: np.asarray(x, dtype=float),
        conj_grad=lambda y: np.asarray(y, dtype=float),
        full_dual_domain=True,
    )


def _xlogx(x):
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = x[pos] * np.log(x[pos])
    return out


def shannon_kernel() -> Kernel:
    """phi(x) = sum x_i log x_i on the nonnegative orthant, 0 log 0 = 0."""

    def value(x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise DomainError("shannon kernel needs x >= 0")
        return float(np.sum(_xlogx(x)))

    def grad(x):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise DomainError("shannon gradient needs x > 0")
        return 1.0 + np.log(x)

    def conj_grad(y):
        # exp underflows to 0 near y = -745; keep the image inside the open
        # domain so grad(conj_grad(y)) stays evaluable. Overflow to inf is
        # left alone for callers to detect.
        with np.errstate(over="ignore", under="ignore"):
            return np.maximum(np.exp(np.asarray(y, dtype=float) - 1.0),
                              np.finfo(float).tiny)

    return Kernel("shannon", value, grad, conj_grad, full_dual_domain=True)


def burg_kernel() -> Kernel:
    """phi(x) = -sum log x_i on the positive orthant.

    The conjugate gradient -1/y is only defined for y < 0, so this kernel
    cannot back mirror-variable extrapolation.
    """

    def value(x):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise DomainError("burg kernel needs x > 0")
        return -float(np.sum(np.log(x)))

    def grad(x):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise DomainError("burg gradient needs x > 0")
        return -1.0 / x

    def conj_grad(y):
        y = np.asarray(y, dtype=float)
        if np.any(y >= 0):
            raise DomainError("burg conjugate gradient needs y < 0")
        return -1.0 / y

    return Kernel("burg", value, grad, conj_grad, full_dual_domain=False)


def fermi_dirac_kernel() -> Kernel:
    """phi(x) = sum x_i log x_i + (1 - x_i) log(1 - x_i) on the unit box."""

    def value(x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0) or np.any(x > 1):
            raise DomainError("fermi-dirac kernel needs 0 <= x <= 1")
        return float(np.sum(_xlogx(x)) + np.sum(_xlogx(1.0 - x)))

    def grad(x):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0) or np.any(x >= 1):
            raise DomainError("fermi-dirac gradient needs 0 < x < 1")
        return np.log(x / (1.0 - x))

    def conj_grad(y):
        # expit rounds to exactly 0 or 1 for |y| beyond ~745 / ~37; pin the
        # image to the open interval.
        return np.clip(expit(np.asarray(y, dtype=float)),
                       np.finfo(float).tiny, np.nextafter(1.0, 0.0))

    return Kernel("fermi_dirac", value, grad, conj_grad, full_dual_domain=True)


def hellinger_kernel() -> Kernel:
    """phi(x) = -sum sqrt(1 - x_i^2) on [-1, 1]^n."""

    def value(x):
        x = np.asarray(x, dtype=float)
        if np.any(np.abs(x) > 1):
            raise DomainError("hellinger kernel needs |x| <= 1")
        return -float(np.sum(np.sqrt(1.0 - x * x)))

    def grad(x):
        x = np.asarray(x, dtype=float)
        if np.any(np.abs(x) >= 1):
            raise DomainError("hellinger gradient needs |x| < 1")
        return x / np.sqrt(1.0 - x * x)

    def conj_grad(y):
        # hypot avoids overflow in y^2; |y| above ~2^26 still rounds the
        # ratio to +-1, so pin the image to the open interval.
        y = np.asarray(y, dtype=float)
        lim = np.nextafter(1.0, 0.0)
        return np.clip(y / np.hypot(1.0, y), -lim, lim)

    return Kernel("hellinger", value, grad, conj_grad, full_dual_domain=True)


def _cubic_root(s: float, alpha: float) -> float:
    """The nonnegative root of t^3 + alpha t = s, for s >= 0, alpha >= 0.

    Newton from the smaller of the two upper bounds s^(1/3) and s / alpha;
    the iteration is monotone decreasing onto the root.
    """
    if s == 0.0:
        return 0.0
    t = s ** (1.0 / 3.0)
    if alpha > 0.0:
        t = min(t, s / alpha)
    for _ in range(100):
        psi = t * t * t + alpha * t - s
        if abs(psi) <= 1e-14 * max(1.0, s):
            break
        dpsi = 3.0 * t * t + alpha
        t -= psi / dpsi
    return t


def polynomial_kernel(alpha: float = 0.0) -> Kernel:
    """phi(x) = (alpha / 2) ||x||^2 + (1/4) ||x||^4, defined on all of R^n.

    The conjugate gradient rescales y onto the sphere of radius t where
    t solves t^3 + alpha t = ||y||.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")

    def value(x):
        nsq = float(np.dot(x, x))
        return 0.5 * alpha * nsq + 0.25 * nsq * nsq

    def grad(x):
        x = np.asarray(x, dtype=float)
        return (alpha + float(np.dot(x, x))) * x

    def conj_grad(y):
        y = np.asarray(y, dtype=float)
        s = float(np.linalg.norm(y))
        if s == 0.0:
            return np.zeros_like(y)
        t = _cubic_root(s, alpha)
        return y * (t / s)

    return Kernel("polynomial", value, grad, conj_grad, full_dual_domain=True)


def bregman_distance(kernel: Kernel, x, y) -> float:
    """D_phi(x, y) = phi(x) - phi(y) - <grad phi(y), x - y>."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(kernel.value(x) - kernel.value(y)
                 - np.dot(kernel.grad(y), x - y))


def bregman_prox(h: NonsmoothTerm, kernel: Kernel, gamma: float,
                 u: np.ndarray) -> np.ndarray:
    """argmin_x gamma h(x) + D_phi(x, u), for the supported pairs.

    Supported: h = 0 with any kernel; any Euclidean-proxable h with the
    energy kernel; h = lam ||.||_1 restricted to x >= 0 and the simplex
    indicator with the shannon kernel (both closed forms). Anything else
    raises UnsupportedProxError.
    """
    u = np.asarray(u, dtype=float)
    if h.kind == "zero":
        return u
    if kernel.name == "energy":
        if h.prox is None:
            raise UnsupportedProxError(
                "term %r has no Euclidean proximal map" % h.kind)
        return h.prox(u, gamma)
    if kernel.name == "shannon":
        if h.kind == "l1":
            if np.any(u <= 0):
                raise DomainError("shannon proximal map needs u > 0")
            return u * np.exp(-gamma * h.params["lam"])
        if h.kind == "simplex":
            if np.any(u <= 0):
                raise DomainError("shannon proximal map needs u > 0")
            return u / float(np.sum(u))
    raise UnsupportedProxError(
        "no closed-form Bregman proximal map for kernel %r with term %r"
        % (kernel.name, h.kind))


@dataclass
class BregmanProblem:
    """Composite objective f + h under the geometry of a kernel.

    gamma must satisfy the relative smoothness condition of f against the
    kernel for the plain iteration to descend.
    """

    kernel: Kernel
    f: object
    h: NonsmoothTerm
    gamma: float
    n: int

    def objective(self, x) -> float:
        return float(self.f.value(x)) + float(self.h.value(x))


def bpg_step(problem: BregmanProblem, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One Bregman proximal gradient step; returns (y_next, x_next)."""
    k = problem.kernel
    y = k.grad(x) - problem.gamma * problem.f.grad(x)
    x_next = bregman_prox(problem.h, k, problem.gamma, k.conj_grad(y))
    return y, x_next


def bregman_descent_check(f_test: float, f_curr: float, grad_curr: np.ndarray,
                          x_plain: np.ndarray, x_curr: np.ndarray,
                          gamma: float, kernel: Kernel) -> bool:
    """Surrogate decrease test for a candidate against the plain step.

    Accepts when f(candidate) does not exceed the upper model value
    f(x) + <grad f(x), x_plain - x> + D_phi(x_plain, x) / gamma that the
    plain step is guaranteed to satisfy. Ties are accepted.
    """
    bound = (f_curr + float(np.dot(grad_curr, x_plain - x_curr))
             + bregman_distance(kernel, x_plain, x_curr) / gamma)
    return f_test <= bound


def run_bpg(problem: BregmanProblem, x0, tol: float = 0.0,
            max_iters: int = 1000, keep_iterates: bool = False) -> SolveReport:
    """Plain Bregman proximal gradient from a primal point x0 in int dom phi."""
    start = time.perf_counter()
    x = np.asarray(x0, dtype=float)
    trace = IterationTrace(keep_iterates)
    termination = "max_iters"

    y, x = bpg_step(problem, x)
    rn = float(np.linalg.norm(y - problem.kernel.grad(np.asarray(x0, dtype=float))))
    trace.record(problem.objective(x), rn, "plain",
                 time.perf_counter() - start, x=x)

    while len(trace) < max_iters:
        g = problem.kernel.grad(x) - problem.gamma * problem.f.grad(x)
        rn = float(np.linalg.norm(g - y))
        if rn <= tol * max(1.0, float(np.linalg.norm(g))):
            termination = "tol"
            break
        y = g
        x = bregman_prox(problem.h, problem.kernel, problem.gamma,
                         problem.kernel.conj_grad(y))
        if not np.all(np.isfinite(x)):
            termination = "degenerate"
            trace.record(np.inf, rn, "plain", time.perf_counter() - start, x=x)
            break
        trace.record(problem.objective(x), rn, "plain",
                     time.perf_counter() - start, x=x)

    return SolveReport(x, trace, termination, problem.gamma)


def run_guarded_aa_bpg(problem: BregmanProblem, y0,
                       aa_config: AAConfig | None = None, tol: float = 0.0,
                       max_iters: int = 1000,
                       keep_iterates: bool = False) -> SolveReport:
    """Guarded mirror-variable extrapolation for Bregman proximal gradient.

    Starts from a dual point y0 (any point of R^n for the supported
    kernels), recovering x_0 through the conjugate gradient and proximal
    maps. Extrapolated candidates are accepted only when they pass the
    surrogate descent test against the plain step taken from the current
    iterate; rejected rounds fall back to that plain step. Candidates whose
    objective is not finite fail the test and are rejected the same way.
    """
    if aa_config is None:
        aa_config = AAConfig(m=5)
    kern = problem.kernel
    if not kern.full_dual_domain:
        raise ValueError(
            "kernel %r does not cover the whole mirror space; "
            "extrapolated mirror points would leave its conjugate domain"
            % kern.name)
    start = time.perf_counter()
    gamma = problem.gamma
    trace = IterationTrace(keep_iterates)
    termination = "max_iters"

    y_prev = np.asarray(y0, dtype=float)
    x = bregman_prox(problem.h, kern, gamma, kern.conj_grad(y_prev))

    g = kern.grad(x) - gamma * problem.f.grad(x)
    engine = AndersonEngine(y_prev.size, aa_config)
    rn = float(np.linalg.norm(engine.push(g, y_prev)))
    y = g
    x = bregman_prox(problem.h, kern, gamma, kern.conj_grad(y))
    f_curr = problem.f.value(x)
    if keep_iterates:
        trace.record(f_curr + problem.h.value(x), rn, "plain",
                     time.perf_counter() - start, x=x, x_plain=None)
    else:
        trace.record(f_curr + problem.h.value(x), rn, "plain",
                     time.perf_counter() - start)

    while len(trace) < max_iters:
        grad = problem.f.grad(x)
        g = kern.grad(x) - gamma * grad
        rn = float(np.linalg.norm(engine.push(g, y)))
        if rn <= tol * max(1.0, float(np.linalg.norm(g))):
            termination = "tol"
            break
        y_ext, coeffs = engine.extrapolate()
        x_plain = bregman_prox(problem.h, kern, gamma, kern.conj_grad(g))
        x_test = bregman_prox(problem.h, kern, gamma, kern.conj_grad(y_ext))
        if np.all(np.isfinite(x_test)):
            try:
                f_test = problem.f.value(x_test)
            except DomainError:
                f_test = np.inf
        else:
            f_test = np.inf
        if bregman_descent_check(f_test, f_curr, grad, x_plain, x,
                                 gamma, kern):
            x, y, f_curr, kind = x_test, y_ext, f_test, "AA"
        else:
            y = g
            x = x_plain
            f_curr = problem.f.value(x)
            kind = "fallback"
            if aa_config.flush_on_fallback:
                engine.reset()
        if not np.all(np.isfinite(x)):
            termination = "degenerate"
            trace.record(np.inf, rn, kind, time.perf_counter() - start, x=x)
            break
        if keep_iterates:
            trace.record(f_curr + problem.h.value(x), rn, kind,
                         time.perf_counter() - start, x=x, x_plain=x_plain)
        else:
            trace.record(f_curr + problem.h.value(x), rn, kind,
                         time.perf_counter() - start)

    return SolveReport(x, trace, termination, gamma)
