"""2x2 complex matrix helpers and the Lindblad building blocks.

Matrices are plain ``numpy`` arrays of shape ``(2, 2)`` and dtype
``complex128``. The basis ordering is ``(|e>, |g>)`` so that
``SIGMA_Z = diag(1, -1)`` and ``SIGMA_MINUS = |g><e|``.

Hermitian matrices are also handled in a packed real form
``[rho_ee, rho_gg, Re rho_eg, Im rho_eg]``; linear maps that preserve
Hermiticity then become real 4x4 matrices (see :func:`superop_matrix`).
"""
from __future__ import annotations

from typing import Callable

import numpy as np

IDENTITY = np.eye(2, dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)
EXCITED = np.array([[1, 0], [0, 0]], dtype=complex)
GROUND = np.array([[0, 0], [0, 1]], dtype=complex)
ZERO = np.zeros((2, 2), dtype=complex)

# Weights of the trace inner product Tr(A B) in the packed representation.
TRACE_WEIGHTS = np.array([1.0, 1.0, 2.0, 2.0])


def cmat(a, b, c, d) -> np.ndarray:
    """Build the row-major 2x2 complex matrix ``[[a, b], [c, d]]``."""
    return np.array([[a, b], [c, d]], dtype=complex)


def dag(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def anticommutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b + b @ a


def dissipator(a: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Lindblad dissipator ``A rho A^+ - (A^+A rho + rho A^+A) / 2``."""
    ad = dag(a)
    ada = ad @ a
    return a @ rho @ ad - 0.5 * (ada @ rho + rho @ ada)


def adjoint_dissipator(a: np.ndarray, e: np.ndarray) -> np.ndarray:
    """Heisenberg-picture dissipator ``A^+ E A - {A^+A, E} / 2``.

    Vanishes for ``E = I``; it is the adjoint of :func:`dissipator` under
    the trace inner product.
    """
    ad = dag(a)
    ada = ad @ a
    return ad @ e @ a - 0.5 * (ada @ e + e @ ada)


def hermitize(rho: np.ndarray) -> np.ndarray:
    return 0.5 * (rho + dag(rho))


def trace_inner(a: np.ndarray, b: np.ndarray) -> complex:
    """``Tr(A B)`` without forming the product."""
    return complex(np.sum(a * b.T))


def eigvalsh2(rho: np.ndarray) -> tuple[float, float]:
    """Closed-form eigenvalues (ascending) of a Hermitian 2x2 matrix."""
    p = 0.5 * (rho[0, 0].real + rho[1, 1].real)
    q = 0.5 * (rho[0, 0].real - rho[1, 1].real)
    r = float(np.hypot(q, abs(rho[0, 1])))
    return p - r, p + r


def pack(rho: np.ndarray) -> np.ndarray:
    """Hermitian 2x2 (or stack of them, ``(..., 2, 2)``) to packed reals."""
    rho = np.asarray(rho)
    return np.stack(
        [rho[..., 0, 0].real, rho[..., 1, 1].real, rho[..., 0, 1].real, rho[..., 0, 1].imag],
        axis=-1,
    )


def unpack(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`pack`; accepts shape ``(..., 4)``."""
    v = np.asarray(v, dtype=float)
    out = np.empty(v.shape[:-1] + (2, 2), dtype=complex)
    off = v[..., 2] + 1j * v[..., 3]
    out[..., 0, 0] = v[..., 0]
    out[..., 1, 1] = v[..., 1]
    out[..., 0, 1] = off
    out[..., 1, 0] = off.conj()
    return out


HERMITIAN_BASIS = [
    EXCITED,
    GROUND,
    SIGMA_X,
    # Im rho_eg multiplies i|e><g| - i|g><e|
    np.array([[0, 1j], [-1j, 0]], dtype=complex),
]


def superop_matrix(fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Real 4x4 matrix of a Hermiticity-preserving linear map in packed form."""
    return np.column_stack([pack(fn(b)) for b in HERMITIAN_BASIS])


def packed_adjoint(s: np.ndarray) -> np.ndarray:
    """Adjoint of a packed superoperator under the trace inner product."""
    w = TRACE_WEIGHTS
    return (s.T * w[None, :]) / w[:, None]
