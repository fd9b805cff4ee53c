"""Event-based instruments: POVMs, Kraus filters and ideal measurements."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .qcore import (
    DEFAULT_TOL,
    DensityOperator,
    DimensionError,
    InvalidStateError,
    Tolerances,
    as_matrix,
    hermiticity_residual,
)
from .rng import make_rng


class InvalidInstrumentError(ValueError):
    pass


class NullEventError(ValueError):
    pass


@dataclass(frozen=True)
class Povm:
    """Effects ``P_k`` (PSD, summing to the identity) with outcome labels."""

    effects: tuple[np.ndarray, ...]
    outcomes: tuple[Hashable, ...]
    tol: Tolerances = field(default=DEFAULT_TOL, repr=False, compare=False)

    def __post_init__(self):
        effects = tuple(as_matrix(e).copy() for e in self.effects)
        outcomes = tuple(self.outcomes)
        if not effects:
            raise InvalidInstrumentError("a POVM needs at least one effect")
        if len(effects) != len(outcomes):
            raise InvalidInstrumentError(f"{len(effects)} effects but {len(outcomes)} outcomes")
        dim = effects[0].shape[0]
        total = np.zeros((dim, dim), dtype=complex)
        for k, e in enumerate(effects):
            if e.shape != (dim, dim):
                raise DimensionError(f"effect {k} has shape {e.shape}, expected {(dim, dim)}")
            res = hermiticity_residual(e)
            if res > self.tol.hermitian:
                raise InvalidInstrumentError(f"effect {k} not Hermitian (residual {res:.3e})")
            lam = np.linalg.eigvalsh(0.5 * (e + e.conj().T))[0]
            if lam < -self.tol.psd:
                raise InvalidInstrumentError(f"effect {k} has negative eigenvalue {lam:.3e}")
            e.setflags(write=False)
            total += e
        dev = float(np.max(np.abs(total - np.eye(dim))))
        if dev > self.tol.hermitian:
            raise InvalidInstrumentError(f"effects sum to the identity only within {dev:.3e}")
        object.__setattr__(self, "effects", effects)
        object.__setattr__(self, "outcomes", outcomes)

    @property
    def dim(self) -> int:
        return self.effects[0].shape[0]

    def __len__(self) -> int:
        return len(self.effects)


@dataclass(frozen=True)
class KrausFilter:
    """Operators ``R_k`` with ``sum_k R_k^* R_k = 1``."""

    ops: tuple[np.ndarray, ...]
    tol: Tolerances = field(default=DEFAULT_TOL, repr=False, compare=False)

    def __post_init__(self):
        ops = tuple(as_matrix(r).copy() for r in self.ops)
        if not ops:
            raise InvalidInstrumentError("a filter needs at least one operator")
        dim = ops[0].shape[0]
        total = np.zeros((dim, dim), dtype=complex)
        for k, r in enumerate(ops):
            if r.shape != (dim, dim):
                raise DimensionError(f"operator {k} has shape {r.shape}")
            r.setflags(write=False)
            total += r.conj().T @ r
        dev = float(np.max(np.abs(total - np.eye(dim))))
        if dev > self.tol.hermitian:
            raise InvalidInstrumentError(f"sum R_k^* R_k deviates from identity by {dev:.3e}")
        object.__setattr__(self, "ops", ops)

    @property
    def dim(self) -> int:
        return self.ops[0].shape[0]

    def povm(self) -> Povm:
        """The POVM ``{R_k^* R_k}`` describing which event occurred."""
        return Povm(tuple(r.conj().T @ r for r in self.ops), tuple(range(len(self.ops))), self.tol)


@dataclass(frozen=True)
class EventSample:
    counts: dict
    total: int
    seed: int

    def __post_init__(self):
        if sum(self.counts.values()) != self.total:
            raise ValueError("counts do not add up to total")

    def frequencies(self) -> dict:
        return {k: v / self.total for k, v in self.counts.items()}


def q_probabilities(rho, povm: Povm) -> np.ndarray:
    """q-probabilities ``p_k = Tr(rho P_k)``, clipped to [0, 1] and renormalized."""
    r = as_matrix(rho)
    if r.shape[0] != povm.dim:
        raise DimensionError(f"state is {r.shape[0]}-dimensional, POVM is {povm.dim}-dimensional")
    p = np.array([np.trace(r @ e).real for e in povm.effects])
    tol = povm.tol
    if np.any(p < -tol.psd):
        raise InvalidStateError(f"negative q-probability {p.min():.3e}; state is not positive")
    if abs(p.sum() - 1.0) > tol.trace * max(1, len(p)):
        raise InvalidStateError(f"q-probabilities sum to {p.sum()!r}")
    p = np.clip(p, 0.0, 1.0)
    return p / p.sum()


def sample_events(rho, povm: Povm, n: int, seed: int, stream: int = 0) -> EventSample:
    """Draw ``n`` outcomes from the instrument's categorical distribution."""
    if n < 1:
        raise ValueError("sample size must be positive")
    p = q_probabilities(rho, povm)
    counts = make_rng(seed, stream).multinomial(n, p)
    return EventSample({lab: int(c) for lab, c in zip(povm.outcomes, counts)}, int(n), int(seed))


def apply_filter(rho, filt: KrausFilter, k: int) -> tuple[float, DensityOperator]:
    """Probability of event ``k`` and the conditional output state."""
    r = as_matrix(rho)
    if r.shape[0] != filt.dim:
        raise DimensionError("state and filter dimensions differ")
    R = filt.ops[k]
    out = R @ r @ R.conj().T
    p = float(np.trace(out).real)
    if p <= filt.tol.psd:
        raise NullEventError(f"event {k} has probability {p:.3e}; cannot condition on it")
    out = out / p
    return p, DensityOperator(0.5 * (out + out.conj().T), filt.tol)


def filter_mixture(rho, filt: KrausFilter) -> np.ndarray:
    """Unconditional output ``sum_k R_k rho R_k^*``."""
    r = as_matrix(rho)
    return sum(R @ r @ R.conj().T for R in filt.ops)


def born_instrument(A, tol: Tolerances = DEFAULT_TOL) -> Povm:
    """Ideal measurement of ``A``: eigenprojectors labelled by eigenvalues.

    Eigenvalues closer than ``tol.degen`` are merged into one outcome (their
    mean).  Outcomes are listed in decreasing order.
    """
    a = as_matrix(A)
    res = hermiticity_residual(a)
    if res > tol.hermitian:
        raise InvalidInstrumentError(f"quantity not Hermitian (residual {res:.3e})")
    w, v = np.linalg.eigh(0.5 * (a + a.conj().T))
    w, v = w[::-1], v[:, ::-1]
    clusters = [[0]]
    for i in range(1, len(w)):
        if clusters[-1] and w[clusters[-1][-1]] - w[i] <= tol.degen:
            clusters[-1].append(i)
        else:
            clusters.append([i])
    effects, outcomes = [], []
    for idx in clusters:
        vs = v[:, idx]
        P = vs @ vs.conj().T
        effects.append(0.5 * (P + P.conj().T))
        outcomes.append(float(np.mean(w[idx])))
    return Povm(tuple(effects), tuple(outcomes), tol)


def test_state(phi: Sequence[complex], psi: Sequence[complex], tol: Tolerances = DEFAULT_TOL) -> float:
    """Probability ``|phi^* psi|^2`` that state ``psi`` passes a test for ``phi``."""
    phi = np.asarray(phi, dtype=complex).ravel()
    psi = np.asarray(psi, dtype=complex).ravel()
    if phi.shape != psi.shape:
        raise DimensionError("vectors have different lengths")
    for name, v in (("phi", phi), ("psi", psi)):
        if abs(np.linalg.norm(v) - 1.0) > tol.hermitian:
            raise InvalidStateError(f"{name} is not normalized")
    return float(min(1.0, abs(np.vdot(phi, psi)) ** 2))


def binary_test(phi: Sequence[complex], tol: Tolerances = DEFAULT_TOL) -> Povm:
    """Two-outcome POVM ``{phi phi^*, 1 - phi phi^*}`` (outcomes 1 and 0)."""
    phi = np.asarray(phi, dtype=complex).ravel()
    P = np.outer(phi, phi.conj())
    return Povm((P, np.eye(len(phi)) - P), (1, 0), tol)


test_state.__test__ = False  # keep pytest from collecting it
