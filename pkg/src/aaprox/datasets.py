"""Dataset loading and synthetic instance generation.

LIBSVM text files use 1-based feature indices, strictly increasing within a
row; labels 0/1 are remapped to -1/+1. Dense CSV files put the label or
right-hand side in the last column. Synthetic generators are deterministic
in the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

__all__ = [
    "DatasetMatrix",
    "generate_kl_instance",
    "generate_logreg_instance",
    "generate_nnls_instance",
    "load_dense_csv",
    "parse_libsvm",
    "write_libsvm",
]


@dataclass
class DatasetMatrix:
    """Design matrix with its response vector (labels or right-hand side)."""

    A: object
    b: np.ndarray

    @property
    def shape(self):
        return self.A.shape


def parse_libsvm(path, n_features: int | None = None) -> DatasetMatrix:
    """Read a LIBSVM text file into a CSR matrix and a label vector.

    Raises ValueError, naming the offending line, on malformed entries,
    non-increasing indices, or an empty file. Labels that are exactly 0 or
    1 are remapped to -1/+1; other label values pass through unchanged.
    """
    labels: list[float] = []
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    max_col = 0
    n_rows = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            try:
                label = float(parts[0])
            except ValueError:
                raise ValueError(
                    "line %d: bad label %r" % (lineno, parts[0])) from None
            prev_idx = 0
            for token in parts[1:]:
                try:
                    idx_str, val_str = token.split(":", 1)
                    idx = int(idx_str)
                    val = float(val_str)
                except ValueError:
                    raise ValueError(
                        "line %d: bad feature token %r" % (lineno, token)) from None
                if idx < 1:
                    raise ValueError(
                        "line %d: index %d is not 1-based" % (lineno, idx))
                if idx <= prev_idx:
                    raise ValueError(
                        "line %d: index %d does not increase" % (lineno, idx))
                prev_idx = idx
                rows.append(n_rows)
                cols.append(idx - 1)
                vals.append(val)
                max_col = max(max_col, idx)
            labels.append(label)
            n_rows += 1
    if n_rows == 0:
        raise ValueError("%s: no data rows" % path)
    n_cols = max_col if n_features is None else n_features
    if n_features is not None and max_col > n_features:
        raise ValueError("file has feature index %d > n_features %d"
                         % (max_col, n_features))
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(n_rows, n_cols))
    y = np.asarray(labels)
    if set(np.unique(y)) <= {0.0, 1.0}:
        y = 2.0 * y - 1.0
    return DatasetMatrix(A, y)


def write_libsvm(data: DatasetMatrix, path) -> None:
    """Write rows in `label index:value ...` form with 1-based indices."""
    A = sparse.csr_matrix(data.A)
    with open(path, "w") as fh:
        for i in range(A.shape[0]):
            start, end = A.indptr[i], A.indptr[i + 1]
            pairs = " ".join("%d:%.17g" % (j + 1, v)
                             for j, v in zip(A.indices[start:end],
                                             A.data[start:end]))
            fh.write("%.17g %s\n" % (data.b[i], pairs) if pairs
                     else "%.17g\n" % data.b[i])


def load_dense_csv(path, has_header: bool = False) -> DatasetMatrix:
    """Read a dense CSV whose last column is the label / right-hand side."""
    raw = np.loadtxt(path, delimiter=",", skiprows=1 if has_header else 0,
                     ndmin=2)
    if raw.shape[1] < 2:
        raise ValueError("%s: need at least one feature column plus labels" % path)
    return DatasetMatrix(raw[:, :-1].copy(), raw[:, -1].copy())


def _conditioned_matrix(rng, M, n, cond):
    """Dense M x n matrix with singular values log-spaced over [1/cond, 1]."""
    k = min(M, n)
    u, _ = np.linalg.qr(rng.standard_normal((M, k)))
    v, _ = np.linalg.qr(rng.standard_normal((n, k)))
    s = np.logspace(0.0, -np.log10(cond), k)
    return (u * s) @ v.T


def generate_logreg_instance(M: int, n: int, seed: int = 0,
                             cond: float = 1e5) -> DatasetMatrix:
    """Ill-conditioned binary classification data with labels in {-1, +1}.

    A planted weight vector produces the labels, with 5 percent flipped so
    the problem is not separable.
    """
    rng = np.random.default_rng(seed)
    A = _conditioned_matrix(rng, M, n, cond)
    x_true = rng.standard_normal(n)
    margins = A @ x_true
    y = np.where(margins >= 0.0, 1.0, -1.0)
    flip = rng.random(M) < 0.05
    y[flip] = -y[flip]
    return DatasetMatrix(A, y)


def generate_nnls_instance(M: int, n: int, seed: int = 0,
                           cond: float = 1e3) -> DatasetMatrix:
    """Least-squares data whose planted solution is sparse and nonnegative."""
    rng = np.random.default_rng(seed)
    A = _conditioned_matrix(rng, M, n, cond)
    x_true = np.maximum(rng.standard_normal(n), 0.0)
    b = A @ x_true + 0.01 * rng.standard_normal(M)
    return DatasetMatrix(A, b)


def generate_kl_instance(M: int, n: int, seed: int = 0,
                         density: float = 0.5,
                         noise: float = 0.1) -> DatasetMatrix:
    """Nonnegative data for relative-entropy regression.

    A is uniform on [0, 1); the target b is A applied to a planted sparse
    nonnegative vector, perturbed by multiplicative log-normal noise, so the
    fit is consistent up to the noise level and part of the solution sits on
    the boundary of the orthant.
    """
    rng = np.random.default_rng(seed)
    A = rng.random((M, n))
    x_true = np.zeros(n)
    support = rng.choice(n, size=max(1, int(round(density * n))), replace=False)
    x_true[support] = rng.uniform(0.5, 2.0, size=support.size)
    b = (A @ x_true) * np.exp(noise * rng.standard_normal(M))
    return DatasetMatrix(A, b)
