"""Spin-1/2 relativistic particle with classical position and momentum."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .hybrid import HybridModel

_PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)
_Z2 = np.zeros((2, 2), dtype=complex)
_I2 = np.eye(2, dtype=complex)

# standard (Dirac) representation
ALPHA = np.array([np.block([[_Z2, s], [s, _Z2]]) for s in _PAULI])
BETA = np.block([[_I2, _Z2], [_Z2, -_I2]])


def dirac_spin_hamiltonian(p, q, m: float, e: float = 1.0,
                           V: Callable[[np.ndarray], float] | None = None) -> np.ndarray:
    """4 x 4 matrix ``alpha . p + beta m + e V(q)``.

    Its eigenvalues are ``+-sqrt(|p|^2 + m^2) + e V(q)``, each twice.
    """
    p = np.asarray(p, dtype=float).reshape(3)
    q = np.asarray(q, dtype=float).reshape(3)
    pot = 0.0 if V is None else float(V(q))
    return np.tensordot(p, ALPHA, axes=1) + m * BETA + e * pot * np.eye(4)


def dirac_spin_model(m: float, e: float = 1.0, V=None, grad_V=None, hbar: float = 1.0) -> HybridModel:
    """Hybrid model for the spinning electron; ``grad_V(q)`` returns a 3-vector."""

    def grad_q(p, q):
        g = np.zeros(3) if grad_V is None else np.asarray(grad_V(np.asarray(q, dtype=float)), dtype=float)
        return e * g[:, None, None] * np.eye(4)[None]

    return HybridModel(
        lambda p, q: dirac_spin_hamiltonian(p, q, m, e, V),
        lambda p, q: ALPHA.copy(),
        grad_q,
        hbar,
    )
