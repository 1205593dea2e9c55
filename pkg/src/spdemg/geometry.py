"""Riemannian geometry of SPD matrices through their Cholesky factors.

An SPD matrix is represented by its unique lower Cholesky factor with
positive diagonal (a :class:`CholeskyPoint`). In this chart the metric
splits into an ordinary Euclidean part on the strictly-lower triangle and
a log-Euclidean part on the diagonal, which gives closed forms for the
geodesic distance, the Frechet mean, and the manifold log/exp maps used
by the recurrent models.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import math

import numpy as np

from .errors import InvalidDiagonal, InvalidInput
from .linalg import cholesky_lower

__all__ = [
    "CholeskyPoint",
    "SplitPair",
    "to_cholesky",
    "from_cholesky",
    "split",
    "combine",
    "group_op",
    "frechet_mean",
    "geodesic_distance",
    "chart_log",
    "chart_exp",
]


class CholeskyPoint:
    """A point on the SPD manifold, stored as its lower Cholesky factor.

    Parameters
    ----------
    L : ndarray, shape (d, d)
        Lower-triangular matrix with strictly positive diagonal. The
        strictly upper triangle must be exactly zero.
    """

    __slots__ = ("L",)

    def __init__(self, L: np.ndarray):
        L = np.asarray(L, dtype=np.float64)
        if L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise InvalidInput(f"expected a square matrix, got shape {L.shape}")
        if not np.all(np.isfinite(L)):
            raise InvalidInput("factor contains non-finite entries")
        if np.any(np.triu(L, k=1) != 0.0):
            raise InvalidInput("factor has non-zero entries above the diagonal")
        if np.any(np.diag(L) <= 0.0):
            raise InvalidDiagonal("factor diagonal must be strictly positive")
        self.L = L

    @property
    def dim(self) -> int:
        return self.L.shape[0]

    @property
    def strict(self) -> np.ndarray:
        """Strictly lower-triangular part of the factor."""
        return np.tril(self.L, k=-1)

    @property
    def diag(self) -> np.ndarray:
        """Diagonal of the factor as a vector (always positive)."""
        return np.diag(self.L).copy()

    @classmethod
    def identity(cls, dim: int) -> "CholeskyPoint":
        return cls(np.eye(dim))

    def __repr__(self) -> str:  # pragma: no cover
        return f"CholeskyPoint(dim={self.dim})"


class SplitPair(NamedTuple):
    """Strict-lower / diagonal decomposition of a Cholesky factor."""

    strict: np.ndarray
    diag: np.ndarray


def to_cholesky(E: np.ndarray) -> CholeskyPoint:
    """Map an SPD matrix to its Cholesky-factor representation."""
    return CholeskyPoint(cholesky_lower(E))


def from_cholesky(point: CholeskyPoint) -> np.ndarray:
    """Reconstruct the SPD matrix ``L L^T``."""
    return point.L @ point.L.T


def split(point: CholeskyPoint) -> SplitPair:
    """Exact partition of the factor into strict-lower part and diagonal."""
    return SplitPair(strict=point.strict, diag=point.diag)


def combine(pair: SplitPair) -> CholeskyPoint:
    """Reassemble a factor from a :class:`SplitPair`.

    Raises
    ------
    InvalidDiagonal
        If any diagonal entry is not strictly positive.
    """
    strict = np.asarray(pair.strict, dtype=np.float64)
    diag = np.asarray(pair.diag, dtype=np.float64)
    if strict.ndim != 2 or strict.shape[0] != strict.shape[1]:
        raise InvalidInput(f"strict part must be square, got shape {strict.shape}")
    if diag.shape != (strict.shape[0],):
        raise InvalidInput("diagonal length does not match strict part")
    if np.any(diag <= 0.0):
        raise InvalidDiagonal("diagonal must be strictly positive")
    return CholeskyPoint(np.tril(strict, k=-1) + np.diag(diag))


def _check_same_dim(a: CholeskyPoint, b: CholeskyPoint) -> None:
    if a.dim != b.dim:
        raise InvalidInput(f"dimension mismatch: {a.dim} vs {b.dim}")


def group_op(a: CholeskyPoint, b: CholeskyPoint) -> CholeskyPoint:
    """Commutative group operation on Cholesky space.

    Strict parts add, diagonals multiply; the identity matrix is the
    neutral element and the operation is exactly commutative.
    """
    _check_same_dim(a, b)
    return CholeskyPoint(a.strict + b.strict + np.diag(a.diag * b.diag))


def _fsum_combination(arrays: Sequence[np.ndarray], weights: np.ndarray) -> np.ndarray:
    """Entrywise exact sum of ``weights[i] * arrays[i]``.

    math.fsum accumulates exactly before a single rounding, so the result
    is bit-identical under any permutation of the inputs.
    """
    stack = np.stack([w * a for w, a in zip(weights, arrays)], axis=0)
    flat = stack.reshape(stack.shape[0], -1)
    out = np.array([math.fsum(flat[:, j]) for j in range(flat.shape[1])])
    return out.reshape(arrays[0].shape)


def frechet_mean(
    points: Sequence[CholeskyPoint], weights: Sequence[float] | None = None
) -> CholeskyPoint:
    """Closed-form Frechet mean on Cholesky space.

    Computes ``(1/n) sum_i w_i * strict_i`` for the strict part and
    ``exp((1/n) sum_i w_i * log(diag_i))`` for the diagonal. Note the
    ``1/n`` factor applies on top of the weights: uniform unit weights
    give the ordinary arithmetic / geometric means, and a convex weighted
    mean requires weights that sum to ``n``.

    Parameters
    ----------
    points : sequence of CholeskyPoint
        At least one point; all of equal dimension.
    weights : sequence of float, optional
        Positive weights, one per point. Defaults to all ones.
    """
    if len(points) == 0:
        raise InvalidInput("cannot average an empty set of points")
    dim = points[0].dim
    for p in points[1:]:
        _check_same_dim(points[0], p)
    n = len(points)
    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (n,):
            raise InvalidInput(f"expected {n} weights, got shape {w.shape}")
        if np.any(w <= 0.0):
            raise InvalidInput("weights must be strictly positive")
    strict = _fsum_combination([p.strict for p in points], w) / n
    log_diag = _fsum_combination([np.log(p.diag) for p in points], w) / n
    return CholeskyPoint(np.tril(strict, k=-1) + np.diag(np.exp(log_diag)))


def geodesic_distance(a: CholeskyPoint, b: CholeskyPoint) -> float:
    """Geodesic distance between two points.

    ``sqrt(||strict_a - strict_b||_F^2 + ||log(diag_a) - log(diag_b)||^2)``;
    symmetric, zero exactly when the factors coincide, and satisfies the
    triangle inequality (the chart is a global isometry onto a Euclidean
    space).
    """
    _check_same_dim(a, b)
    ds = a.strict - b.strict
    dd = np.log(a.diag) - np.log(b.diag)
    return float(np.sqrt(np.sum(ds * ds) + np.sum(dd * dd)))


def chart_log(point: CholeskyPoint) -> np.ndarray:
    """Global chart onto the tangent space at the identity.

    Returns the lower-triangular matrix ``strict(L) + diag(log(diag(L)))``
    with unconstrained diagonal.
    """
    return point.strict + np.diag(np.log(point.diag))


def chart_exp(T: np.ndarray) -> CholeskyPoint:
    """Inverse of :func:`chart_log`.

    Accepts any lower-triangular matrix (diagonal unconstrained) and maps
    it back to a valid Cholesky point by exponentiating the diagonal.
    """
    T = np.asarray(T, dtype=np.float64)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise InvalidInput(f"expected a square matrix, got shape {T.shape}")
    if np.any(np.triu(T, k=1) != 0.0):
        raise InvalidInput("tangent has non-zero entries above the diagonal")
    return CholeskyPoint(np.tril(T, k=-1) + np.diag(np.exp(np.diag(T))))
