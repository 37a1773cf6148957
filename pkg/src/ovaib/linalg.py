"""Dense vector/matrix primitives and the ridge projection behind the
geometric score.

Vectors and matrices are plain ``float64`` numpy arrays. The helpers
:func:`as_vector` and :func:`as_matrix` validate shape and finiteness at the
boundary; everything downstream assumes validated input.
"""
import numpy as np
import scipy.linalg

from .errors import DomainError, NonFiniteError, ShapeError

DEFAULT_RIDGE = 1e-8
DEFAULT_COSINE_EPS = 1e-12


def as_vector(x, name="vector"):
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {v.shape}")
    if v.size == 0:
        raise ShapeError(f"{name} must be non-empty")
    if not np.all(np.isfinite(v)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    return v


def as_matrix(x, name="matrix"):
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    if 0 in a.shape:
        raise ShapeError(f"{name} must be non-empty, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    return a


def _check_ridge(lam):
    if not np.isfinite(lam) or lam <= 0:
        raise DomainError(f"ridge constant must be positive and finite, got {lam}")


def ridge_project(A, z, lam=DEFAULT_RIDGE):
    """Project ``z`` onto the column span of ``A`` with ridge shrinkage.

    Returns ``A (A^T A + lam I)^{-1} A^T z``. Only the k x k Gram system is
    factorized (Cholesky), so the cost is O(d k^2) and the d x d hat matrix is
    never formed.

    Parameters
    ----------
    A : array_like, shape (d, k)
        Columns spanning the target subspace.
    z : array_like, shape (d,)
        Vector to project.
    lam : float
        Positive ridge constant.

    Returns
    -------
    ndarray, shape (d,)
    """
    A = as_matrix(A, "A")
    z = as_vector(z, "z")
    _check_ridge(lam)
    d, k = A.shape
    if z.shape[0] != d:
        raise ShapeError(f"A has {d} rows but z has length {z.shape[0]}")
    gram = A.T @ A
    gram[np.diag_indices(k)] += lam
    factor = scipy.linalg.cho_factor(gram, lower=True, check_finite=False)
    w = scipy.linalg.cho_solve(factor, A.T @ z, check_finite=False)
    return A @ w


def ridge_solve_batch(A, z, lam=DEFAULT_RIDGE):
    """Batched ridge coefficients ``w = (A^T A + lam I)^{-1} A^T z``.

    ``A`` has shape ``(..., d, k)`` and ``z`` shape ``(..., d)``; leading axes
    broadcast. The Gram matrices are factorized once per distinct ``A`` (not
    per broadcast copy). Returns ``(w, chol)`` where ``chol`` is the lower
    Cholesky factor of the Gram matrices, shape ``A.shape[:-2] + (k, k)``.
    """
    A = np.asarray(A, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    k = A.shape[-1]
    gram = np.swapaxes(A, -1, -2) @ A
    gram = gram + lam * np.eye(k)
    chol = np.linalg.cholesky(gram)
    rhs = np.einsum("...dk,...d->...k", A, z)
    return cholesky_solve(chol, rhs), chol


def cholesky_solve(chol, rhs):
    """Solve ``(L L^T) x = rhs`` for stacked lower factors ``L``.

    ``rhs`` has shape ``(..., k)``; batch axes broadcast against ``chol``.
    """
    y = np.linalg.solve(chol, rhs[..., None])
    return np.linalg.solve(np.swapaxes(chol, -1, -2), y)[..., 0]


def inverse_gram(A, lam=DEFAULT_RIDGE):
    """``(A^T A + lam I)^{-1}`` for stacked ``A`` of shape ``(P, d, k)``,
    assembled from the Cholesky factor."""
    k = A.shape[-1]
    gram = np.swapaxes(A, -1, -2) @ A + lam * np.eye(k)
    chol = np.linalg.cholesky(gram)
    chol_inv = np.linalg.solve(chol, np.broadcast_to(np.eye(k), chol.shape))
    return np.swapaxes(chol_inv, -1, -2) @ chol_inv


def pairwise_ridge_project(Z, A, lam=DEFAULT_RIDGE, ginv=None):
    """Project every row of ``Z`` onto every span in ``A``.

    ``Z`` is ``(N, d)`` and ``A`` is ``(P, d, k)``. Returns ``(out, w, ginv)``
    with ``out[n, p] = A[p] w[n, p]`` of shape ``(N, P, d)``; ``w`` and
    ``ginv`` are laid out ``(P, N, k)`` and ``(P, k, k)`` for reuse in
    backward passes. Every contraction is a GEMM or a batched matmul.
    """
    N, d = Z.shape
    P, _, k = A.shape
    if ginv is None:
        ginv = inverse_gram(A, lam)
    rhs = (Z @ A.transpose(1, 0, 2).reshape(d, P * k)).reshape(N, P, k).transpose(1, 0, 2)
    w = rhs @ np.swapaxes(ginv, -1, -2)
    out = (w @ np.swapaxes(A, -1, -2)).transpose(1, 0, 2)
    return out, w, ginv


def ridge_project_batch(A, z, lam=DEFAULT_RIDGE):
    """Vectorized :func:`ridge_project` over broadcast leading axes."""
    w, _ = ridge_solve_batch(A, z, lam)
    return np.einsum("...dk,...k->...d", np.asarray(A, dtype=np.float64), w)


def cosine_similarity(u, v, eps=DEFAULT_COSINE_EPS):
    """Cosine similarity with norms floored at ``eps``, clamped to [-1, 1]."""
    u = as_vector(u, "u")
    v = as_vector(v, "v")
    if u.shape != v.shape:
        raise ShapeError(f"dimension mismatch: {u.shape[0]} vs {v.shape[0]}")
    denom = max(np.linalg.norm(u), eps) * max(np.linalg.norm(v), eps)
    return float(np.clip(u @ v / denom, -1.0, 1.0))


def cosine_similarity_batch(u, v, eps=DEFAULT_COSINE_EPS):
    """Cosine along the last axis with broadcasting over the rest."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu = np.maximum(np.linalg.norm(u, axis=-1), eps)
    nv = np.maximum(np.linalg.norm(v, axis=-1), eps)
    return np.clip(np.sum(u * v, axis=-1) / (nu * nv), -1.0, 1.0)


def log_sum_exp(values):
    """Overflow-free ``log(sum(exp(values)))`` of a non-empty sequence."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise DomainError("log_sum_exp of an empty sequence")
    if not np.all(np.isfinite(v)):
        raise NonFiniteError("log_sum_exp input contains non-finite entries")
    top = v.max()
    return float(top + np.log(np.sum(np.exp(v - top))))
