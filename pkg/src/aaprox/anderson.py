"""Anderson extrapolation for fixed-point iterations.

The engine keeps a sliding window of past map values and residuals, solves a
small sum-to-one least-squares problem for mixing coefficients, and proposes
the matching affine combination of past map values as the next iterate. With
depth m = 0 the proposal is the plain fixed-point step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "AAConfig",
    "AndersonEngine",
    "ExtrapolationCoefficients",
    "FixedPointReport",
    "QrWindow",
    "ResidualHistory",
    "enforce_coefficient_bound",
    "run_anderson",
    "solve_coefficients",
]

@dataclass
class ExtrapolationCoefficients:
    """Mixing weights over the window, newest entry first. Sums to one."""

    alpha: np.ndarray
    degenerate: bool = False


def _pure_fixed_point(p: int) -> np.ndarray:
    alpha = np.zeros(p)
    alpha[0] = 1.0  # weight on the newest entry: the plain step
    return alpha


@dataclass
class AAConfig:
    """Tuning knobs for the extrapolation engine.

    m is the window depth (m = 0 disables extrapolation). reg_scale weights
    a Tikhonov term reg_scale * ||R||_F^2 * ||alpha||_2^2 added to the
    coefficient problem. m_alpha bounds ||alpha||_1; when exceeded the
    coefficients are reset to the pure fixed-point weights. use_qr_updates
    selects the incrementally updated QR path (None picks it for m > 3).
    flush_on_fallback clears the window whenever a guarded driver rejects
    an extrapolated point.
    """

    m: int
    reg_scale: float = 1e-10
    m_alpha: float = math.inf
    use_qr_updates: bool | None = None
    flush_on_fallback: bool = False

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("window depth m must be nonnegative")
        if self.reg_scale < 0:
            raise ValueError("reg_scale must be nonnegative")
        if math.isfinite(self.m_alpha) and self.m_alpha <= 1:
            raise ValueError("a finite m_alpha must exceed 1")

    @property
    def qr_enabled(self) -> bool:
        if self.use_qr_updates is None:
            return self.m > 3
        return self.use_qr_updates


class ResidualHistory:
    """Sliding window over the last m + 1 (map value, residual) pairs.

    Index 0 is the newest pair. Pushing at capacity evicts the oldest.
    """

    def __init__(self, m: int):
        if m < 0:
            raise ValueError("window depth m must be nonnegative")
        self.capacity = m + 1
        self._g: list[np.ndarray] = []
        self._r: list[np.ndarray] = []

    def __len__(self) -> int:
        return len(self._g)

    def push(self, g_val: np.ndarray, residual: np.ndarray) -> None:
        self._g.insert(0, g_val)
        self._r.insert(0, residual)
        if len(self._g) > self.capacity:
            self._g.pop()
            self._r.pop()

    def drop_oldest(self) -> None:
        if not self._g:
            raise IndexError("history is empty")
        self._g.pop()
        self._r.pop()

    def clear(self) -> None:
        self._g.clear()
        self._r.clear()

    def residual_matrix(self) -> np.ndarray:
        """Residuals as columns, newest first."""
        return np.column_stack(self._r)

    def combine(self, alpha: np.ndarray) -> np.ndarray:
        if len(alpha) != len(self._g):
            raise ValueError("coefficient length does not match history length")
        return np.column_stack(self._g) @ alpha


def solve_coefficients(residuals: np.ndarray,
                       reg_scale: float = 0.0) -> ExtrapolationCoefficients:
    """Solve min ||R alpha||^2 + lam ||alpha||^2 subject to sum(alpha) = 1.

    lam = reg_scale * ||R||_F^2, so the regularization is relative to the
    residual scale. Columns of ``residuals`` are ordered newest first and
    alpha matches that order. On nonsingular normal matrices the result is
    (R^T R + lam I)^{-1} 1 normalized by its sum; it is computed through
    the bordered stationarity system

        [[R^T R + lam I, 1], [1^T, 0]] [alpha; nu] = [0; 1]

    which stays well posed when the window is rank deficient but the
    constrained minimizer is still unique (then the plain normal solve is
    singular even though the problem is not). A degenerate system
    (factorization failure, nonfinite solution, or a multiplier beyond
    1e300, which is sum(z) below 1e-300 in the normalized form) yields the
    pure fixed-point coefficients with the degenerate flag set.
    """
    R = np.atleast_2d(np.asarray(residuals, dtype=float))
    p = R.shape[1]
    if p == 1:
        # the constraint forces alpha = [1] no matter what R contains
        return ExtrapolationCoefficients(np.ones(1))
    fro_sq = float(np.sum(R * R))
    if not np.isfinite(fro_sq) or fro_sq == 0.0:
        return ExtrapolationCoefficients(_pure_fixed_point(p), degenerate=True)
    lam = reg_scale * fro_sq
    kkt = np.zeros((p + 1, p + 1))
    kkt[:p, :p] = R.T @ R + lam * np.eye(p)
    kkt[:p, p] = 1.0
    kkt[p, :p] = 1.0
    rhs = np.zeros(p + 1)
    rhs[p] = 1.0
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        return ExtrapolationCoefficients(_pure_fixed_point(p), degenerate=True)
    alpha, nu = sol[:p], float(sol[p])
    total = float(alpha.sum())
    if (not np.all(np.isfinite(alpha)) or abs(nu) >= 1e300
            or not np.isfinite(total) or abs(total) < 1e-300):
        return ExtrapolationCoefficients(_pure_fixed_point(p), degenerate=True)
    return ExtrapolationCoefficients(alpha / total)


def enforce_coefficient_bound(coeffs: ExtrapolationCoefficients,
                              m_alpha: float) -> ExtrapolationCoefficients:
    """Reset to the pure fixed-point weights when ||alpha||_1 > m_alpha."""
    if np.sum(np.abs(coeffs.alpha)) <= m_alpha:
        return coeffs
    return ExtrapolationCoefficients(_pure_fixed_point(len(coeffs.alpha)),
                                     degenerate=coeffs.degenerate)


def _givens(a: float, b: float) -> tuple[float, float]:
    if b == 0.0:
        return 1.0, 0.0
    den = math.hypot(a, b)
    return a / den, b / den


class QrWindow:
    """Thin QR factorization of a sliding column window.

    Columns are stored in arrival order (oldest first). Appending a column
    uses two passes of classical Gram-Schmidt, O(p) length-n vector
    operations; deleting the oldest column retriangularizes with Givens
    rotations, O(p) more vector operations plus O(p^2) scalar work. The
    factorization is never rebuilt from scratch.

    ``vector_ops`` counts length-n column operations (dots, axpys, scalings
    and rotations applied to Q), which is the structural cost of a slide.
    """

    def __init__(self, n: int, capacity: int, deficiency_rtol: float = 1e-14):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.n = n
        self.capacity = capacity
        self.deficiency_rtol = deficiency_rtol
        self.q = np.zeros((n, 0))
        self.r = np.zeros((0, 0))
        self.vector_ops = 0

    @property
    def width(self) -> int:
        return self.r.shape[1]

    def matrix(self) -> np.ndarray:
        """The window reconstructed as Q @ R."""
        return self.q @ self.r

    def append(self, column: np.ndarray) -> None:
        if self.width >= self.capacity:
            raise ValueError("window is full; drop a column first")
        v = np.asarray(column, dtype=float).copy()
        if v.shape != (self.n,):
            raise ValueError("column has the wrong length")
        p = self.width
        coeff = np.zeros(p)
        for _ in range(2):  # reorthogonalization pass keeps Q orthonormal
            proj = self.q.T @ v
            v -= self.q @ proj
            coeff += proj
            self.vector_ops += 2 * p
        rho = float(np.linalg.norm(v))
        self.vector_ops += 1
        if rho > 0.0:
            v /= rho
            self.vector_ops += 1
        # rho == 0 leaves a zero column in Q; the product Q @ R stays exact
        # and the zero diagonal raises the rank-deficiency signal.
        new_r = np.zeros((p + 1, p + 1))
        new_r[:p, :p] = self.r
        new_r[:p, p] = coeff
        new_r[p, p] = rho
        self.q = np.column_stack([self.q, v])
        self.r = new_r

    def drop_oldest(self) -> None:
        p = self.width
        if p == 0:
            raise IndexError("window is empty")
        if p == 1:
            self.q = np.zeros((self.n, 0))
            self.r = np.zeros((0, 0))
            return
        h = self.r[:, 1:].copy()  # upper Hessenberg after deleting column 0
        q = self.q.copy()
        for j in range(p - 1):
            c, s = _givens(h[j, j], h[j + 1, j])
            if s != 0.0:
                rot = np.array([[c, s], [-s, c]])
                h[j:j + 2, j:] = rot @ h[j:j + 2, j:]
                q[:, j:j + 2] = q[:, j:j + 2] @ rot.T
                self.vector_ops += 2
        self.q = q[:, :p - 1]
        self.r = h[:p - 1, :]

    def slide(self, column: np.ndarray) -> None:
        if self.width == self.capacity:
            self.drop_oldest()
        self.append(column)

    def clear(self) -> None:
        self.q = np.zeros((self.n, 0))
        self.r = np.zeros((0, 0))

    @property
    def rank_deficient(self) -> bool:
        """True when some R diagonal entry falls below 1e-14 * ||R||_F."""
        if self.width == 0:
            return False
        diag = np.abs(np.diag(self.r))
        fro = float(np.linalg.norm(self.r))
        if fro == 0.0:
            return True
        return bool(diag.min() < self.deficiency_rtol * fro)

    def solve_coefficients(self, reg_scale: float) -> ExtrapolationCoefficients:
        """Coefficient solve through the p x p triangular factor.

        R^T R equals the normal matrix of the window, so the small solve
        matches the dense path; output is reordered newest first.
        """
        coeffs = solve_coefficients(self.r[::-1, ::-1], reg_scale)
        # reversing rows and columns of R presents the columns newest first
        # without changing the normal matrix beyond a symmetric permutation
        return coeffs


class AndersonEngine:
    """Window bookkeeping plus the coefficient solve and the mixing step.

    Degenerate coefficient solves trigger one retry on a window shortened
    by its oldest entry before settling for the pure fixed-point weights.
    """

    def __init__(self, n: int, config: AAConfig):
        self.config = config
        self.history = ResidualHistory(config.m)
        self.window = QrWindow(n, config.m + 1) if config.qr_enabled else None
        self.degenerate_count = 0
        self.deficiency_count = 0

    def __len__(self) -> int:
        return len(self.history)

    def push(self, g_val: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Record g(y) and its residual g(y) - y; returns the residual."""
        residual = g_val - y
        self.history.push(g_val, residual)
        if self.window is not None:
            self.window.slide(residual)
            if self.window.rank_deficient:
                self.deficiency_count += 1
        return residual

    def _solve(self) -> ExtrapolationCoefficients:
        if self.window is not None:
            return self.window.solve_coefficients(self.config.reg_scale)
        return solve_coefficients(self.history.residual_matrix(),
                                  self.config.reg_scale)

    def coefficients(self) -> ExtrapolationCoefficients:
        coeffs = self._solve()
        if coeffs.degenerate and len(self.history) > 1:
            self.history.drop_oldest()
            if self.window is not None:
                self.window.drop_oldest()
            coeffs = self._solve()
        if coeffs.degenerate:
            self.degenerate_count += 1
        return enforce_coefficient_bound(coeffs, self.config.m_alpha)

    def extrapolate(self) -> tuple[np.ndarray, ExtrapolationCoefficients]:
        coeffs = self.coefficients()
        return self.history.combine(coeffs.alpha), coeffs

    def iterate(self, g, y: np.ndarray) -> tuple[np.ndarray, ExtrapolationCoefficients]:
        """One extrapolation round: evaluate the map, update, mix."""
        g_val = np.atleast_1d(np.asarray(g(y), dtype=float))
        self.push(g_val, y)
        return self.extrapolate()

    def reset(self) -> None:
        self.history.clear()
        if self.window is not None:
            self.window.clear()


@dataclass
class FixedPointReport:
    """Iterates of an extrapolated fixed-point run, xs[k] being iterate k."""

    xs: np.ndarray
    residual_norms: np.ndarray
    alphas: list[np.ndarray]
    termination: str


def run_anderson(g, x0, config: AAConfig, tol: float = 0.0,
                 max_iters: int = 50) -> FixedPointReport:
    """Extrapolated fixed-point iteration on the map g.

    The first step is always the plain step x_1 = g(x_0); extrapolation
    starts once two residuals are available. Stops when
    ||g(x_k) - x_k|| <= tol * max(1, ||g(x_k)||), after max_iters map
    evaluations, or when an iterate stops being finite.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    engine = AndersonEngine(x.size, config)
    xs = [x]
    alphas: list[np.ndarray] = []
    residual_norms: list[float] = []
    termination = "max_iters"

    g_val = np.atleast_1d(np.asarray(g(x), dtype=float))
    r = engine.push(g_val, x)
    rn = float(np.linalg.norm(r))
    residual_norms.append(rn)
    alphas.append(np.ones(1))
    xs.append(g_val)
    if rn <= tol * max(1.0, float(np.linalg.norm(g_val))):
        termination = "tol"
    else:
        for _ in range(1, max_iters):
            x = xs[-1]
            if not np.all(np.isfinite(x)):
                termination = "degenerate"
                break
            g_val = np.atleast_1d(np.asarray(g(x), dtype=float))
            r = engine.push(g_val, x)
            rn = float(np.linalg.norm(r))
            residual_norms.append(rn)
            if rn <= tol * max(1.0, float(np.linalg.norm(g_val))):
                termination = "tol"
                break
            x_next, coeffs = engine.extrapolate()
            alphas.append(coeffs.alpha)
            xs.append(x_next)

    return FixedPointReport(np.asarray(xs), np.asarray(residual_norms),
                            alphas, termination)
