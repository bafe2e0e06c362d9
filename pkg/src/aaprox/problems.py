"""Smooth losses, nonsmooth terms, and composite problem containers.

Losses expose value(x), grad(x) and a smoothness constant; they cache the
last product A @ x keyed on the argument object, so evaluating the value at
a point and then the gradient at the same point costs one matvec. Callers
must not mutate iterate arrays in place.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit


class DomainError(ValueError):
    """Evaluation outside the domain of a loss or kernel."""


def _as_2d_op(A):
    """Shape and transpose access that works for dense and sparse A."""
    M, n = A.shape
    return M, n


class _MatvecCache:
    """Remembers the last (x, A @ x) pair by object identity."""

    def __init__(self):
        self._x = None
        self._ax = None

    def get(self, A, x):
        if self._x is x:
            return self._ax
        ax = A @ x
        self._x = x
        self._ax = ax
        return ax


class LogisticLoss:
    """Mean logistic loss with a ridge term.

    value(x) = (1/M) sum_i log(1 + exp(-y_i a_i^T x)) + mu ||x||_2^2.
    Labels must be -1 or +1. The logistic part is evaluated through
    logaddexp, so margins of order 1e3 neither overflow nor lose the tail.
    """

    def __init__(self, A, y, mu: float = 0.0, smoothness: float | None = None):
        y = np.asarray(y, dtype=float)
        labels = np.unique(y)
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1, got %r" % (labels,))
        self.A = A
        self.y = y
        self.mu = float(mu)
        self.M, self.n = A.shape
        if smoothness is None:
            smoothness = operator_norm_sq(A) / (4.0 * self.M)
        self.smoothness = float(smoothness)
        self._cache = _MatvecCache()

    def _margins(self, x):
        return -self.y * np.asarray(self._cache.get(self.A, x)).ravel()

    def value(self, x) -> float:
        t = self._margins(x)
        return float(np.mean(np.logaddexp(0.0, t)) + self.mu * np.dot(x, x))

    def grad(self, x) -> np.ndarray:
        t = self._margins(x)
        w = -self.y * expit(t)
        g = self.A.T @ w
        return np.asarray(g).ravel() / self.M + 2.0 * self.mu * x


class LeastSquaresLoss:
    """value(x) = ||A x - b||_2^2 / (2 M) + mu ||x||_2^2."""

    def __init__(self, A, b, mu: float = 0.0, smoothness: float | None = None):
        self.A = A
        self.b = np.asarray(b, dtype=float)
        self.mu = float(mu)
        self.M, self.n = A.shape
        if smoothness is None:
            smoothness = operator_norm_sq(A) / self.M
        self.smoothness = float(smoothness)
        self._cache = _MatvecCache()

    def _resid(self, x):
        return np.asarray(self._cache.get(self.A, x)).ravel() - self.b

    def value(self, x) -> float:
        r = self._resid(x)
        return float(np.dot(r, r) / (2.0 * self.M) + self.mu * np.dot(x, x))

    def grad(self, x) -> np.ndarray:
        r = self._resid(x)
        g = self.A.T @ r
        return np.asarray(g).ravel() / self.M + 2.0 * self.mu * x


class KlLoss:
    """Relative entropy between A x and b: sum_i kl((Ax)_i, b_i).

    kl(u, v) = u log(u / v) - u + v with 0 log 0 = 0, which only arises on
    rows of A that are identically zero. A zero (Ax)_i on a row that is not
    identically zero sits on the boundary where the gradient blows up and
    raises DomainError. Requires A >= 0 elementwise and b > 0. The relative
    smoothness constant is the largest column 1-norm of A.
    """

    def __init__(self, A, b):
        b = np.asarray(b, dtype=float)
        if np.any(b <= 0):
            raise ValueError("b must be positive")
        if (A < 0).sum() > 0:
            raise ValueError("A must be nonnegative")
        self.A = A
        self.b = b
        self.M, self.n = A.shape
        col_sums = np.asarray(A.sum(axis=0)).ravel()
        self.smoothness = float(col_sums.max())
        row_sums = np.asarray(A.sum(axis=1)).ravel()
        self._zero_rows = row_sums == 0.0
        self._cache = _MatvecCache()

    def _products(self, x):
        u = np.asarray(self._cache.get(self.A, x)).ravel()
        if np.any((u <= 0.0) & ~self._zero_rows):
            raise DomainError("A x must be positive on every nonzero row")
        return u

    def value(self, x) -> float:
        u = self._products(x)
        live = ~self._zero_rows
        ul, bl = u[live], self.b[live]
        val = np.sum(ul * np.log(ul / bl) - ul + bl) + np.sum(self.b[~live])
        return float(val)

    def grad(self, x) -> np.ndarray:
        u = self._products(x)
        ratio = np.ones_like(u)
        live = ~self._zero_rows
        ratio[live] = np.log(u[live] / self.b[live])
        ratio[~live] = 0.0
        g = self.A.T @ ratio
        return np.asarray(g).ravel()


class QuadraticLoss:
    """value(x) = 0.5 (x - c)^T H (x - c) for symmetric positive semidefinite H."""

    def __init__(self, H, center=None, smoothness: float | None = None):
        self.H = np.asarray(H, dtype=float)
        n = self.H.shape[0]
        self.n = n
        self.center = np.zeros(n) if center is None else np.asarray(center, dtype=float)
        if smoothness is None:
            smoothness = float(np.linalg.eigvalsh(self.H)[-1])
        self.smoothness = float(smoothness)

    def value(self, x) -> float:
        d = x - self.center
        return 0.5 * float(d @ (self.H @ d))

    def grad(self, x) -> np.ndarray:
        return self.H @ (x - self.center)


def logistic_loss(A, y, mu: float = 0.0) -> LogisticLoss:
    return LogisticLoss(A, y, mu)


def least_squares_loss(A, b, mu: float = 0.0) -> LeastSquaresLoss:
    return LeastSquaresLoss(A, b, mu)


def kl_loss(A, b) -> KlLoss:
    return KlLoss(A, b)


def operator_norm_sq(A, rel_tol: float = 1e-6, max_iters: int = 500,
                     seed: int = 0) -> float:
    """Largest squared singular value of A by seeded power iteration.

    Issues a RuntimeWarning and returns the current estimate when the
    relative change has not dropped below rel_tol within max_iters sweeps.
    """
    M, n = A.shape
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iters):
        w = np.asarray(A @ v).ravel()
        v_new = np.asarray(A.T @ w).ravel()
        new_est = float(np.dot(w, w))
        nv = np.linalg.norm(v_new)
        if nv == 0.0:
            return 0.0
        v = v_new / nv
        if abs(new_est - est) <= rel_tol * max(new_est, 1e-300):
            return new_est
        est = new_est
    warnings.warn("power iteration did not converge; returning best estimate",
                  RuntimeWarning)
    return est


def prox_l1(y: np.ndarray, threshold: float) -> np.ndarray:
    """Soft thresholding, the proximal map of threshold * ||.||_1."""
    return np.sign(y) * np.maximum(np.abs(y) - threshold, 0.0)


def project_box(y: np.ndarray, lo: float, hi: float) -> np.ndarray:
    return np.clip(y, lo, hi)


def project_nonneg(y: np.ndarray) -> np.ndarray:
    return np.maximum(y, 0.0)


@dataclass
class NonsmoothTerm:
    """A nonsmooth term h with its scaled proximal map.

    prox(y, gamma) returns argmin_x gamma * h(x) + ||x - y||^2 / 2; kind and
    params let kernel-specific Bregman proximal maps dispatch on structure.
    """

    value: Callable[[np.ndarray], float]
    prox: Callable[[np.ndarray, float], np.ndarray] | None
    kind: str = "custom"
    params: dict = field(default_factory=dict)


def zero_term() -> NonsmoothTerm:
    return NonsmoothTerm(value=lambda x: 0.0, prox=lambda y, gamma: y, kind="zero")


def l1_term(lam: float) -> NonsmoothTerm:
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    return NonsmoothTerm(
        value=lambda x: lam * float(np.sum(np.abs(x))),
        prox=lambda y, gamma: prox_l1(y, lam * gamma),
        kind="l1",
        params={"lam": lam},
    )


def box_indicator(lo: float = -1.0, hi: float = 1.0) -> NonsmoothTerm:
    if lo > hi:
        raise ValueError("empty box")

    def value(x):
        return 0.0 if np.all(x >= lo) and np.all(x <= hi) else np.inf

    return NonsmoothTerm(value=value,
                         prox=lambda y, gamma: project_box(y, lo, hi),
                         kind="box", params={"lo": lo, "hi": hi})


def nonneg_indicator() -> NonsmoothTerm:
    def value(x):
        return 0.0 if np.all(x >= 0.0) else np.inf

    return NonsmoothTerm(value=value,
                         prox=lambda y, gamma: project_nonneg(y),
                         kind="nonneg")


def simplex_indicator(rtol: float = 1e-9) -> NonsmoothTerm:
    """Indicator of the probability simplex.

    No Euclidean proximal map is attached; this term is meant for entropy
    kernel Bregman steps, where the map has a closed form.
    """

    def value(x):
        if np.all(x >= 0.0) and abs(float(np.sum(x)) - 1.0) <= rtol:
            return 0.0
        return np.inf

    return NonsmoothTerm(value=value, prox=None, kind="simplex")


@dataclass
class CompositeProblem:
    """Objective f + h with f smooth and h proximable."""

    f: object
    h: NonsmoothTerm
    n: int

    def objective(self, x) -> float:
        return float(self.f.value(x)) + float(self.h.value(x))
