"""Polarization optics of a single beam as a qubit.

Conventions follow the coherence matrix

    rho = 1/2 [[S0 + S3, S1 - i S2],
               [S1 + i S2, S0 - S3]]

so ``S_a = Tr(sigma_a rho)`` with ``sigma = (1, X, Y, Z)``.  In this
convention ``S3`` is the horizontal/vertical component, which is why a
Jones matrix ``diag(1, -1)`` maps to the Mueller matrix
``diag(1, -1, -1, 1)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .qcore import PAULI, as_matrix, hermiticity_residual

EPS_S = 1e-10


class StokesError(ValueError):
    pass


@dataclass(frozen=True)
class StokesVector:
    S0: float
    S1: float
    S2: float
    S3: float

    def __post_init__(self):
        if self.S0 < np.sqrt(self.S1**2 + self.S2**2 + self.S3**2) - EPS_S:
            raise StokesError(f"S0={self.S0} is smaller than |S|; not a physical beam")

    @classmethod
    def from_array(cls, s: Sequence[float]) -> "StokesVector":
        return cls(*(float(x) for x in s))

    def as_array(self) -> np.ndarray:
        return np.array([self.S0, self.S1, self.S2, self.S3])

    @property
    def intensity(self) -> float:
        return self.S0


@dataclass(frozen=True)
class JonesMatrix:
    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        if m.shape != (2, 2):
            raise ValueError("a Jones matrix is 2 x 2")
        object.__setattr__(self, "entries", m)

    @property
    def lossless(self) -> bool:
        return bool(np.allclose(self.entries.conj().T @ self.entries, np.eye(2), atol=1e-10, rtol=0))


def _jones(T) -> np.ndarray:
    return np.asarray(getattr(T, "entries", T), dtype=complex)


def _stokes(S) -> np.ndarray:
    return S.as_array() if isinstance(S, StokesVector) else np.asarray(S, dtype=float)


def stokes_to_coherence(S) -> np.ndarray:
    s = _stokes(S)
    StokesVector.from_array(s)
    return 0.5 * np.array([[s[0] + s[3], s[1] - 1j * s[2]],
                           [s[1] + 1j * s[2], s[0] - s[3]]])


def coherence_to_stokes(rho) -> StokesVector:
    r = as_matrix(rho)
    if r.shape != (2, 2):
        raise ValueError("coherence matrix must be 2 x 2")
    if hermiticity_residual(r) > 1e-10:
        raise StokesError("coherence matrix is not Hermitian")
    return StokesVector.from_array([np.trace(p @ r).real for p in PAULI])


def degree_of_polarization(S) -> float:
    s = _stokes(S)
    if s[0] <= 0:
        raise StokesError("degree of polarization needs positive intensity")
    return float(min(1.0, np.linalg.norm(s[1:]) / s[0]))


def apply_jones(rho, T) -> np.ndarray:
    t = _jones(T)
    out = t @ as_matrix(rho) @ t.conj().T
    return 0.5 * (out + out.conj().T)


def polarizer(phi: Sequence[complex]) -> JonesMatrix:
    """Ideal polarizer ``phi phi^*`` for a unit Jones vector ``phi``."""
    phi = np.asarray(phi, dtype=complex).ravel()
    if phi.shape != (2,) or abs(np.linalg.norm(phi) - 1.0) > 1e-10:
        raise ValueError("polarizer needs a normalized 2-vector")
    return JonesMatrix(np.outer(phi, phi.conj()))


def linear_polarization(theta: float) -> np.ndarray:
    return np.array([np.cos(theta), np.sin(theta)], dtype=complex)


def rotator(theta: float) -> JonesMatrix:
    c, s = np.cos(theta), np.sin(theta)
    return JonesMatrix(np.array([[c, -s], [s, c]], dtype=complex))


def jones_to_mueller(T) -> np.ndarray:
    """Real 4 x 4 matrix ``M_ab = 1/2 Tr(sigma_a T sigma_b T^*)`` acting on Stokes vectors."""
    t = _jones(T)
    td = t.conj().T
    return np.array([[0.5 * np.trace(pa @ t @ pb @ td).real for pb in PAULI] for pa in PAULI])


@dataclass(frozen=True)
class MixingInstrument:
    """Weighted sum of Jones branches ``rho -> sum_i w_i T_i rho T_i^*``."""

    weights: tuple[float, ...]
    branches: tuple[np.ndarray, ...]

    @property
    def mueller(self) -> np.ndarray:
        return sum(w * jones_to_mueller(t) for w, t in zip(self.weights, self.branches))

    def __call__(self, rho) -> np.ndarray:
        r = as_matrix(rho)
        out = sum(w * t @ r @ t.conj().T for w, t in zip(self.weights, self.branches))
        return 0.5 * (out + out.conj().T)


def depolarizing_map(branches: Sequence[tuple[float, object]]) -> MixingInstrument:
    if not branches:
        raise ValueError("need at least one branch")
    weights = tuple(float(w) for w, _ in branches)
    if any(w < 0 for w in weights):
        raise ValueError("branch weights must be nonnegative")
    return MixingInstrument(weights, tuple(_jones(t) for _, t in branches))


@dataclass(frozen=True)
class SlicedRun:
    psi_sliced: np.ndarray
    psi_ref: np.ndarray
    error: float
    n_slices: int


def sliced_medium_evolution(H: Callable[[float], np.ndarray], psi0, t_end: float, n_slices: int,
                            hbar: float = 1.0, ref_refine: int = 10) -> SlicedRun:
    """Pass ``psi0`` through ``n_slices`` thin layers ``T(t) = 1 - i dt H(t) / hbar``.

    Nothing is renormalized inside the product.  The reference solution uses
    exact midpoint exponentials on a grid ``ref_refine`` times finer.
    """
    if n_slices < 1:
        raise ValueError("need at least one slice")
    psi0 = np.asarray(psi0, dtype=complex).ravel()
    dim = len(psi0)
    dt = t_end / n_slices
    psi = psi0.copy()
    eye = np.eye(dim)
    for m in range(n_slices):
        psi = (eye - 1j * dt / hbar * np.asarray(H(m * dt), dtype=complex)) @ psi
    n_ref = n_slices * ref_refine
    h = t_end / n_ref
    ref = psi0.copy()
    for m in range(n_ref):
        Hm = np.asarray(H((m + 0.5) * h), dtype=complex)
        w, v = np.linalg.eigh(Hm)
        ref = (v * np.exp(-1j * h * w / hbar)) @ (v.conj().T @ ref)
    return SlicedRun(psi, ref, float(np.linalg.norm(psi - ref)), n_slices)


def malus_sweep(psi, angles: Sequence[float]) -> np.ndarray:
    """Transmitted intensity through linear polarizers at the given angles."""
    rho = np.outer(psi, np.conj(psi))
    return np.array([np.trace(apply_jones(rho, polarizer(linear_polarization(a)))).real for a in angles])
