"""Dense linear-algebra kernels with explicit derivative support.

Everything downstream (geometry, decoders, networks) builds on the handful
of primitives here. All computation is float64; results are deterministic
for a fixed platform (eigenvector signs are pinned by convention below).
"""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

from .errors import InvalidInput, NotPositiveDefinite, RankDeficient

# Relative threshold under which two eigenvalues are treated as degenerate
# when forming the divided-difference (Loewner) matrix.
DEGENERATE_EIG_RTOL = 1e-12


class EigPair(NamedTuple):
    """Eigendecomposition ``M = U diag(sigma) U^T`` of a symmetric matrix.

    ``sigma`` is sorted non-increasing and each column of ``U`` has its
    largest-magnitude entry positive, so the factorization is unique up to
    eigenvalue degeneracy.
    """

    U: np.ndarray
    sigma: np.ndarray


def sym(M: np.ndarray) -> np.ndarray:
    """Exact symmetrization ``(M + M^T) / 2``."""
    return (M + M.T) / 2.0


def sym_eig(M: np.ndarray) -> EigPair:
    """Eigendecomposition of a symmetric matrix with a fixed sign convention.

    Parameters
    ----------
    M : ndarray, shape (d, d)
        Symmetric matrix with finite entries. The input is symmetrized
        before factorization so tiny asymmetries cannot leak through.

    Returns
    -------
    EigPair
        Orthogonal ``U`` and eigenvalues ``sigma`` sorted non-increasing.
        For each eigenvector the entry of largest magnitude is made
        positive (first occurrence wins on ties).
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidInput(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidInput("matrix contains non-finite entries")
    sigma, U = np.linalg.eigh(sym(M))
    order = np.arange(sigma.shape[0])[::-1]  # eigh is ascending
    sigma = sigma[order]
    U = U[:, order]
    for j in range(U.shape[1]):
        col = U[:, j]
        if col[np.argmax(np.abs(col))] < 0.0:
            U[:, j] = -col
    return EigPair(U=U, sigma=sigma)


def cholesky_lower(P: np.ndarray) -> np.ndarray:
    """Unique lower Cholesky factor ``L`` with positive diagonal, ``LL^T = P``.

    Raises
    ------
    NotPositiveDefinite
        If a pivot is non-positive, i.e. ``P`` is not SPD.
    """
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise InvalidInput(f"expected a square matrix, got shape {P.shape}")
    if not np.all(np.isfinite(P)):
        raise InvalidInput("matrix contains non-finite entries")
    try:
        return np.linalg.cholesky(sym(P))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("matrix is not positive definite") from exc


def cholesky_pullback(L: np.ndarray, grad_L: np.ndarray) -> np.ndarray:
    """Adjoint of the Cholesky factorization ``P -> L``.

    Given ``dLoss/dL`` returns the symmetric ``dLoss/dP`` for ``P = LL^T``
    via the standard triangular-solve adjoint
    ``L^{-T} Phi(L^T G) L^{-1}`` with ``Phi(M) = tril(M) - diag(M)/2``.
    """
    S = L.T @ np.tril(grad_L)
    phi = np.tril(S) - 0.5 * np.diag(np.diag(S))
    tmp = np.linalg.solve(L.T, phi)
    grad_P = np.linalg.solve(L.T, tmp.T).T
    return sym(grad_P)


def gram_schmidt(M: np.ndarray) -> np.ndarray:
    """Orthonormalize the columns of ``M`` (modified Gram-Schmidt).

    Column span is preserved. Uses the modified variant for numerical
    stability; each pivot column norm below 1e-12 aborts with
    :class:`RankDeficient`.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise InvalidInput(f"expected a matrix, got shape {M.shape}")
    d, k = M.shape
    if k > d:
        raise InvalidInput(f"cannot orthonormalize {k} columns in dimension {d}")
    W = M.copy()
    for j in range(k):
        norm = np.linalg.norm(W[:, j])
        if norm < 1e-12:
            raise RankDeficient(f"column {j} became numerically dependent")
        W[:, j] /= norm
        if j + 1 < k:
            W[:, j + 1 :] -= np.outer(W[:, j], W[:, j] @ W[:, j + 1 :])
    return W


def lstsq(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Least-squares solve ``min_x ||Ax - b||_2``.

    Rank-deficient systems return the minimum-norm minimizer (SVD route).
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if A.ndim != 2 or b.ndim != 1 or A.shape[0] != b.shape[0]:
        raise InvalidInput(f"incompatible shapes {A.shape} and {b.shape}")
    x, _, _, _ = np.linalg.lstsq(A, b, rcond=None)
    return x


def matfun_backprop(
    pair: EigPair,
    f: Callable[[np.ndarray], np.ndarray],
    f_prime: Callable[[np.ndarray], np.ndarray],
    grad_out: np.ndarray,
) -> np.ndarray:
    """Pull a gradient back through a spectral matrix function.

    For ``Y = U f(Sigma) U^T`` with ``M = U Sigma U^T`` symmetric, returns
    ``dLoss/dM`` given ``dLoss/dY`` using the Daleckii-Krein construction:

        G_in = U ( K o (U^T sym(G_out) U) ) U^T

    where ``K_ij`` is the divided difference ``(f(s_i) - f(s_j))/(s_i - s_j)``
    and ``K_ii = f'(s_i)``. Eigenvalue pairs closer than
    ``1e-12 * max|sigma|`` use ``f'((s_i + s_j)/2)`` for continuity.

    ``f`` and ``f_prime`` must be vectorized over the eigenvalue array.
    """
    U, sigma = pair
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != U.shape:
        raise InvalidInput(f"gradient shape {grad_out.shape} does not match {U.shape}")
    fs = np.asarray(f(sigma), dtype=np.float64)
    diff = sigma[:, None] - sigma[None, :]
    close = np.abs(diff) <= DEGENERATE_EIG_RTOL * np.max(np.abs(sigma))
    # Divided differences where separated, f' at the midpoint where degenerate.
    K = np.where(close, f_prime((sigma[:, None] + sigma[None, :]) / 2.0),
                 (fs[:, None] - fs[None, :]) / np.where(close, 1.0, diff))
    inner = U.T @ sym(grad_out) @ U
    return U @ (K * inner) @ U.T
