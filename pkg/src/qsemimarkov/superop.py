"""Superoperator conventions.

Density matrices are vectorized by column stacking::

    rho = [[a, b],
           [c, d]]      ->   vec(rho) = (a, c, b, d)

so that ``vec(A rho B) = (B.T kron A) vec(rho)`` and the matrix unit
``|n><m|`` sits at index ``n + m*d``.  Choi matrices are ordered as
(output kron input)::

    choi[n*d + i, m*d + j] = <n| V(|i><j|) |m>

which is positive semidefinite exactly when ``V`` is completely positive.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "vec",
    "unvec",
    "unit_index",
    "left",
    "right",
    "commutator",
    "sandwich",
    "dissipator",
    "choi_from_superop",
    "superop_from_choi",
]


def vec(rho: np.ndarray) -> np.ndarray:
    """Column-stack a square matrix (or a stack of them along axis 0)."""
    rho = np.asarray(rho)
    return np.swapaxes(rho, -1, -2).reshape(*rho.shape[:-2], -1)


def unvec(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    d = int(round(np.sqrt(v.shape[-1])))
    if d * d != v.shape[-1]:
        raise ValueError(f"length {v.shape[-1]} is not a perfect square")
    return np.swapaxes(v.reshape(*v.shape[:-1], d, d), -1, -2)


def unit_index(n: int, m: int, d: int) -> int:
    """Position of ``|n><m|`` in the column-stacked vector."""
    return n + m * d


def left(a: np.ndarray) -> np.ndarray:
    """Superoperator of ``rho -> a rho``."""
    return np.kron(np.eye(a.shape[0]), a)


def right(b: np.ndarray) -> np.ndarray:
    """Superoperator of ``rho -> rho b``."""
    return np.kron(b.T, np.eye(b.shape[0]))


def commutator(h: np.ndarray) -> np.ndarray:
    """Superoperator of ``rho -> -i[h, rho]``."""
    return -1j * (left(h) - right(h))


def sandwich(a: np.ndarray) -> np.ndarray:
    """Superoperator of ``rho -> a rho a^dagger``."""
    return np.kron(a.conj(), a)


def dissipator(a: np.ndarray) -> np.ndarray:
    """Superoperator of ``rho -> a rho a^+ - {a^+ a, rho}/2``."""
    ada = a.conj().T @ a
    return sandwich(a) - 0.5 * (left(ada) + right(ada))


def choi_from_superop(superop: np.ndarray) -> np.ndarray:
    """Reshuffle a column-stacked superoperator (or a stack of them) into its
    Choi matrix in (output kron input) order."""
    superop = np.asarray(superop)
    m = superop.shape[-1]
    d = int(round(np.sqrt(m)))
    lead = superop.shape[:-2]
    # superop[..., n + m*d, i + j*d] viewed as [..., m, n, j, i]
    s4 = superop.reshape(*lead, d, d, d, d)
    k = len(lead)
    perm = tuple(range(k)) + (k + 1, k + 3, k, k + 2)
    return s4.transpose(perm).reshape(*lead, m, m)


def superop_from_choi(choi: np.ndarray) -> np.ndarray:
    """Inverse of :func:`choi_from_superop` (the reshuffle is an involution
    up to index order)."""
    choi = np.asarray(choi)
    m = choi.shape[-1]
    d = int(round(np.sqrt(m)))
    lead = choi.shape[:-2]
    c4 = choi.reshape(*lead, d, d, d, d)  # [n, i, m, j]
    k = len(lead)
    perm = tuple(range(k)) + (k + 2, k, k + 3, k + 1)
    return c4.transpose(perm).reshape(*lead, m, m)
