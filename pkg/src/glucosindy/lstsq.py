"""Small dense least squares via Householder QR."""

from __future__ import annotations

import warnings

import numpy as np


class RankDeficientWarning(UserWarning):
    pass


def householder_qr(A: np.ndarray, pivoting: bool = False):
    """Householder QR, optionally with column pivoting.

    Returns ``(V, R, perm)`` where the reflectors are stored as the columns
    of ``V`` (unit vectors, zero above the diagonal) so that
    ``H_{n-1} ... H_0 A[:, perm] = R`` with ``H_j = I - 2 v_j v_j^T``.
    """
    R = np.array(A, dtype=float)
    m, n = R.shape
    k = min(m, n)
    V = np.zeros((m, k))
    perm = np.arange(n)
    norms = np.einsum("ij,ij->j", R, R) if pivoting else None
    for j in range(k):
        if pivoting:
            p = j + int(np.argmax(norms[j:]))
            if p != j:
                R[:, [j, p]] = R[:, [p, j]]
                perm[[j, p]] = perm[[p, j]]
                norms[[j, p]] = norms[[p, j]]
        x = R[j:, j]
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        v = x.copy()
        v[0] += alpha if x[0] >= 0 else -alpha
        v /= np.linalg.norm(v)
        R[j:, j:] -= 2.0 * np.outer(v, v @ R[j:, j:])
        V[j:, j] = v
        if pivoting:
            # recompute rather than downdate; matrices here are tiny
            norms[j + 1:] = np.einsum("ij,ij->j", R[j + 1:, j + 1:], R[j + 1:, j + 1:])
    return V, np.triu(R), perm


def apply_qt(V: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Compute ``Q^T y`` from stored reflectors."""
    y = np.array(y, dtype=float)
    for j in range(V.shape[1]):
        v = V[j:, j]
        y[j:] -= 2.0 * v * (v @ y[j:])
    return y


def back_substitute(R: np.ndarray, c: np.ndarray) -> np.ndarray:
    n = R.shape[0]
    x = np.zeros(n)
    for i in range(n - 1, -1, -1):
        x[i] = (c[i] - R[i, i + 1:] @ x[i + 1:]) / R[i, i]
    return x


def forward_substitute(L: np.ndarray, c: np.ndarray) -> np.ndarray:
    n = L.shape[0]
    x = np.zeros(n)
    for i in range(n):
        x[i] = (c[i] - L[i, :i] @ x[:i]) / L[i, i]
    return x


def lstsq(A: np.ndarray, y: np.ndarray, ridge: float = 0.0, rcond: float | None = None) -> np.ndarray:
    """Solve ``min ||A x - y||^2 + ridge * ||x||^2``.

    The ridge term is handled by stacking ``sqrt(ridge) * I`` under ``A``.
    If the (augmented) matrix is rank deficient the minimum-norm solution is
    returned via a complete orthogonal decomposition, with a
    :class:`RankDeficientWarning`.
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    m, n = A.shape
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    if ridge > 0:
        A = np.vstack([A, np.sqrt(ridge) * np.eye(n)])
        y = np.concatenate([y, np.zeros(n)])
        m += n
    if n == 0:
        return np.zeros(0)

    V, R, perm = householder_qr(A, pivoting=True)
    c = apply_qt(V, y)
    diag = np.abs(np.diag(R))
    if rcond is None:
        rcond = max(m, n) * np.finfo(float).eps
    rank = int(np.sum(diag > rcond * diag[0])) if diag.size and diag[0] > 0 else 0

    x = np.zeros(n)
    if rank == min(m, n) == n:
        x[perm] = back_substitute(R[:n, :n], c[:n])
        return x

    warnings.warn(f"rank-deficient least squares (rank {rank} < {n} columns); "
                  "returning the minimum-norm solution", RankDeficientWarning, stacklevel=2)
    if rank == 0:
        return x
    # [R11 R12] = T^T Z^T from a QR of its transpose
    top = R[:rank, :]
    Vz, Rz, _ = householder_qr(top.T)
    T = Rz[:rank, :rank]
    w = forward_substitute(T.T, c[:rank])
    # Z w = H_0 ... H_{r-1} [w; 0]
    zp = np.concatenate([w, np.zeros(n - rank)])
    for j in range(Vz.shape[1] - 1, -1, -1):
        v = Vz[j:, j]
        zp[j:] -= 2.0 * v * (v @ zp[j:])
    x[perm] = zp
    return x
