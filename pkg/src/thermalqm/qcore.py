"""Finite-dimensional states, quantities and q-expectations.

Everything here works with dense complex N x N matrices.  The two value
types, :class:`HermitianQuantity` and :class:`DensityOperator`, validate
their invariants once at construction; the operations accept either the
typed values or plain array-likes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class Tolerances:
    """Numerical slack used by validity checks.

    hermitian, trace, psd, theorem and exp bound the Hermiticity residual,
    the trace error, the most negative admissible eigenvalue, the slack
    in the spectrum-proximity bound and the Gibbs round trip.  ``degen``
    is the width used to cluster degenerate eigenvalues.
    """

    hermitian: float = 1e-10
    trace: float = 1e-10
    psd: float = 1e-9
    theorem: float = 1e-10
    exp: float = 1e-10
    degen: float = 1e-8


DEFAULT_TOL = Tolerances()


class DimensionError(ValueError):
    pass


class NotHermitianError(ValueError):
    pass


class InvalidStateError(ValueError):
    pass


def as_matrix(x) -> np.ndarray:
    """Return the complex square matrix behind ``x``."""
    m = getattr(x, "entries", x)
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    return m


def hermiticity_residual(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


def _frozen(m: np.ndarray) -> np.ndarray:
    m = np.array(m, dtype=complex, copy=True)
    m.setflags(write=False)
    return m


@dataclass(frozen=True)
class HermitianQuantity:
    entries: np.ndarray
    unit: str | None = None
    tol: Tolerances = field(default=DEFAULT_TOL, repr=False, compare=False)

    def __post_init__(self):
        m = as_matrix(self.entries)
        res = hermiticity_residual(m)
        if res > self.tol.hermitian:
            raise NotHermitianError(f"Hermiticity residual {res:.3e} exceeds {self.tol.hermitian:.1e}")
        object.__setattr__(self, "entries", _frozen(m))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class DensityOperator:
    entries: np.ndarray
    tol: Tolerances = field(default=DEFAULT_TOL, repr=False, compare=False)

    def __post_init__(self):
        m = as_matrix(self.entries)
        validate_density(m, self.tol)
        object.__setattr__(self, "entries", _frozen(m))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def pure(cls, psi, tol: Tolerances = DEFAULT_TOL) -> "DensityOperator":
        psi = np.asarray(psi, dtype=complex).ravel()
        nrm = np.linalg.norm(psi)
        if abs(nrm - 1.0) > tol.hermitian:
            raise InvalidStateError(f"state vector has norm {nrm!r}, expected 1")
        return cls(np.outer(psi, psi.conj()), tol)

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityOperator":
        return cls(np.eye(dim) / dim)

    def rank(self, cutoff: float = 1e-9) -> int:
        return int(np.sum(np.linalg.eigvalsh(self.entries) > cutoff))


def validate_density(m: np.ndarray, tol: Tolerances = DEFAULT_TOL) -> None:
    res = hermiticity_residual(m)
    if res > tol.hermitian:
        raise InvalidStateError(f"density not Hermitian (residual {res:.3e})")
    tr = np.trace(m).real
    if abs(tr - 1.0) > tol.trace:
        raise InvalidStateError(f"density has trace {tr!r}")
    lam = np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0]
    if lam < -tol.psd:
        raise InvalidStateError(f"density has negative eigenvalue {lam:.3e}")


@dataclass(frozen=True)
class GibbsState:
    """A state written as ``rho = exp(-S / kbar)`` with entropy operator ``S``."""

    rho: DensityOperator
    entropy: HermitianQuantity
    kbar: float = 1.0

    @property
    def dim(self) -> int:
        return self.rho.dim


def _checked_pair(rho, A, tol: Tolerances) -> tuple[np.ndarray, np.ndarray]:
    r = as_matrix(rho)
    a = as_matrix(A)
    if r.shape != a.shape:
        raise DimensionError(f"state is {r.shape[0]}-dimensional, quantity is {a.shape[0]}-dimensional")
    res = hermiticity_residual(a)
    if res > tol.hermitian:
        raise NotHermitianError(f"quantity not Hermitian (residual {res:.3e})")
    return r, a


def _real_trace(m: np.ndarray, tol: Tolerances) -> float:
    t = np.trace(m)
    scale = max(1.0, float(np.max(np.abs(m))) if m.size else 1.0)
    if abs(t.imag) > tol.hermitian * scale * m.shape[0]:
        raise NotHermitianError(f"trace has imaginary part {t.imag:.3e}")
    return float(t.real)


def q_expectation(rho, A, tol: Tolerances = DEFAULT_TOL) -> float:
    """``<A> = Tr(rho A)``."""
    r, a = _checked_pair(rho, A, tol)
    return _real_trace(r @ a, tol)


def q_uncertainty(rho, A, tol: Tolerances = DEFAULT_TOL) -> float:
    """q-standard deviation ``sqrt(<(A - <A>)^2>)``."""
    r, a = _checked_pair(rho, A, tol)
    mean = _real_trace(r @ a, tol)
    shifted = a - mean * np.eye(a.shape[0])
    var = _real_trace(r @ shifted @ shifted, tol)
    return float(np.sqrt(max(var, 0.0)))


def nearest_spectral_value(rho, A, tol: Tolerances = DEFAULT_TOL) -> tuple[float, float]:
    """Eigenvalue of ``A`` closest to ``<A>`` and its distance from ``<A>``.

    The distance never exceeds the q-standard deviation of ``A`` in ``rho``:
    ``(A - <A>)^2 - sigma^2`` has zero expectation, so its smallest
    eigenvalue is nonpositive, and that eigenvalue is attained at some
    eigenvalue of ``A``.
    """
    r, a = _checked_pair(rho, A, tol)
    try:
        eigs = np.linalg.eigvalsh(a)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"eigendecomposition failed, ill-conditioned quantity: {exc}") from exc
    mean = _real_trace(r @ a, tol)
    i = int(np.argmin(np.abs(eigs - mean)))
    return float(eigs[i]), float(abs(eigs[i] - mean))


def hermitian_function(K, f) -> np.ndarray:
    """Apply a scalar function to a Hermitian matrix through its eigenbasis."""
    w, v = np.linalg.eigh(as_matrix(K))
    return (v * f(w)) @ v.conj().T


def expm_hermitian(K, scale: complex = 1.0) -> np.ndarray:
    """``exp(scale * K)`` for Hermitian ``K``."""
    return hermitian_function(K, lambda w: np.exp(scale * w))


def propagator(H, dt: float, hbar: float = 1.0) -> np.ndarray:
    """Unitary ``exp(-i dt H / hbar)``."""
    return expm_hermitian(H, -1j * dt / hbar)


def _gibbs(K, kbar: float, tol: Tolerances) -> tuple[GibbsState, float]:
    if kbar <= 0:
        raise ValueError("kbar must be positive")
    k = as_matrix(K)
    res = hermiticity_residual(k)
    if res > tol.hermitian:
        raise NotHermitianError(f"generator not Hermitian (residual {res:.3e})")
    w, v = np.linalg.eigh(0.5 * (k + k.conj().T))
    if not np.all(np.isfinite(w)):
        raise OverflowError("generator has non-finite spectrum")
    # shift by the smallest eigenvalue so exp never overflows
    log_z = -w[0] + np.log(np.sum(np.exp(-(w - w[0]))))
    if not np.isfinite(log_z):
        raise OverflowError("exp(-K) overflows; shift or rescale the generator")
    rho = (v * np.exp(-(w + log_z))) @ v.conj().T
    entropy = (v * (kbar * (w + log_z))) @ v.conj().T
    state = GibbsState(
        DensityOperator(0.5 * (rho + rho.conj().T), tol),
        HermitianQuantity(0.5 * (entropy + entropy.conj().T), tol=tol),
        kbar,
    )
    return state, float(log_z)


def gibbs_from_generator(K, kbar: float = 1.0, tol: Tolerances = DEFAULT_TOL) -> GibbsState:
    """Normalized Gibbs state ``exp(-K) / Tr exp(-K)``.

    The returned entropy operator is ``kbar * (K + log Z)`` so that
    ``rho == exp(-S / kbar)`` holds without a separate normalization.
    """
    return _gibbs(K, kbar, tol)[0]


def grand_canonical(H, Nop, T: float, mu: float, V: float, kbar: float = 1.0,
                    tol: Tolerances = DEFAULT_TOL) -> tuple[GibbsState, float]:
    """Grand-canonical state ``exp(-(H + PV - mu N) / (kbar T))``.

    The pressure is not an input: it is fixed by ``Tr rho = 1``, giving
    ``P V = kbar T log Tr exp(-(H - mu N) / (kbar T))``.  Returns the state,
    whose entropy operator is ``(H + PV - mu N) / T``, and ``P``.
    """
    if T <= 0:
        raise ValueError("temperature must be positive")
    if V <= 0:
        raise ValueError("volume must be positive")
    h = as_matrix(H)
    n = as_matrix(Nop)
    if h.shape != n.shape:
        raise DimensionError("H and N have different dimensions")
    state, log_z = _gibbs((h - mu * n) / (kbar * T), kbar, tol)
    pv = kbar * T * log_z
    # state.entropy already equals kbar*(K + log Z) = (H + PV - mu N)/T
    return state, pv / V


def euler_residual(state: GibbsState, H, terms: Iterable[tuple[float, object]], T: float,
                   tol: Tolerances = DEFAULT_TOL) -> float:
    """Signed residual ``<H> - T <S> - sum_j alpha_j <X_j>`` in ``state``."""
    rho = state.rho
    out = q_expectation(rho, H, tol) - T * q_expectation(rho, state.entropy, tol)
    for alpha, X in terms:
        out -= alpha * q_expectation(rho, X, tol)
    return float(out)


def trace_distance(rho, sigma) -> float:
    d = as_matrix(rho) - as_matrix(sigma)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T)))))


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * 0.5 * (g + g.conj().T)


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random density matrix (induced Hilbert-Schmidt measure)."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def random_state_vector(dim: int, rng: np.random.Generator) -> np.ndarray:
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return psi / np.linalg.norm(psi)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


PAULI = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)
SIGMA_X, SIGMA_Y, SIGMA_Z = PAULI[1], PAULI[2], PAULI[3]


def ket(dim: int, j: int) -> np.ndarray:
    e = np.zeros(dim, dtype=complex)
    e[j] = 1.0
    return e


def projector(psi: Sequence[complex]) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())
