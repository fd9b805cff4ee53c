"""State tomography from binary tests and POVM calibration.

Test ordering for dimension N (0-based indices):

1. ``e_j`` for ``j = 0 .. N-2``  (the last diagonal entry follows from the trace);
2. ``(e_j + e_k) / sqrt 2`` for ``j < k``, lexicographic;
3. ``(e_j + i e_k) / sqrt 2`` for ``j < k``, lexicographic.

For a density matrix ``rho`` the pass probabilities are

    p_diag(j)   = rho_jj
    p_real(j,k) = (rho_jj + rho_kk) / 2 + Re rho_jk
    p_imag(j,k) = (rho_jj + rho_kk) / 2 - Im rho_jk

which :func:`linear_inversion` solves for ``rho``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .measure import Povm
from .qcore import DEFAULT_TOL, DensityOperator, Tolerances, as_matrix
from .rng import make_rng

EXACT = math.inf
KAPPA_MAX = 1e6


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class TestSuite:
    dim: int
    tests: tuple[np.ndarray, ...]

    __test__ = False

    def __len__(self) -> int:
        return len(self.tests)

    def pairs(self) -> list[tuple[int, int]]:
        return list(combinations(range(self.dim), 2))


@dataclass(frozen=True)
class FrequencyTable:
    """Pass frequencies per test; ``sample_sizes`` holds ``EXACT`` for exact probabilities."""

    values: np.ndarray
    sample_sizes: tuple[float, ...]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or len(v) != len(self.sample_sizes):
            raise ValueError("values and sample sizes must be equal-length vectors")
        if np.any(v < 0) or np.any(v > 1):
            raise ValueError("frequencies must lie in [0, 1]")
        if any(not (n == EXACT or (n >= 1 and float(n).is_integer())) for n in self.sample_sizes):
            raise ValueError("sample sizes must be positive integers or EXACT")
        object.__setattr__(self, "values", v)

    @property
    def exact(self) -> bool:
        return all(n == EXACT for n in self.sample_sizes)


def standard_test_suite(N: int) -> TestSuite:
    if N < 2:
        raise ValueError("tomography needs dimension >= 2")
    eye = np.eye(N, dtype=complex)
    pairs = list(combinations(range(N), 2))
    tests = [eye[j] for j in range(N - 1)]
    tests += [(eye[j] + eye[k]) / math.sqrt(2) for j, k in pairs]
    tests += [(eye[j] + 1j * eye[k]) / math.sqrt(2) for j, k in pairs]
    return TestSuite(N, tuple(tests))


def measure_suite(rho, suite: TestSuite, n: float = EXACT, seed: int = 0) -> FrequencyTable:
    """Run every binary test of ``suite`` on ``rho``.

    With ``n = EXACT`` the table holds the probabilities ``phi^* rho phi``;
    otherwise test ``i`` is repeated ``n`` times using random stream ``i``.
    """
    r = as_matrix(rho)
    if r.shape[0] != suite.dim:
        raise ValueError("state and test suite dimensions differ")
    p = np.array([np.clip(np.vdot(phi, r @ phi).real, 0.0, 1.0) for phi in suite.tests])
    if n == EXACT:
        return FrequencyTable(p, (EXACT,) * len(p))
    n = int(n)
    if n < 1:
        raise ValueError("sample size must be positive")
    counts = [make_rng(seed, i).binomial(n, pi) for i, pi in enumerate(p)]
    return FrequencyTable(np.array(counts, dtype=float) / n, (n,) * len(p))


def linear_inversion(values: Sequence[float], N: int) -> np.ndarray:
    """Hermitian, unit-trace matrix reproducing the test frequencies exactly."""
    v = np.asarray(values, dtype=float)
    pairs = list(combinations(range(N), 2))
    if len(v) != N * N - 1:
        raise ValueError(f"expected {N * N - 1} frequencies for N={N}, got {len(v)}")
    rho = np.zeros((N, N), dtype=complex)
    diag = np.empty(N)
    diag[: N - 1] = v[: N - 1]
    diag[N - 1] = 1.0 - diag[: N - 1].sum()
    rho[np.diag_indices(N)] = diag
    off = N - 1
    m = len(pairs)
    for idx, (j, k) in enumerate(pairs):
        half = 0.5 * (diag[j] + diag[k])
        re = v[off + idx] - half
        im = half - v[off + m + idx]
        rho[j, k] = re + 1j * im
        rho[k, j] = re - 1j * im
    return rho


def project_to_density(m: np.ndarray) -> tuple[np.ndarray, float]:
    """Clip negative eigenvalues and renormalize; returns the matrix and the
    Frobenius distance moved."""
    m = 0.5 * (m + m.conj().T)
    w, v = np.linalg.eigh(m)
    if np.all(w >= 0):
        return m, 0.0
    w = np.clip(w, 0.0, None)
    if w.sum() <= 0:
        raise ValueError("estimate has no positive part")
    w = w / w.sum()
    out = (v * w) @ v.conj().T
    out = 0.5 * (out + out.conj().T)
    return out, float(np.linalg.norm(out - m))


def reconstruct_state(table: FrequencyTable, N: int, tol: Tolerances = DEFAULT_TOL) -> DensityOperator:
    return reconstruct_state_report(table, N, tol)[0]


def reconstruct_state_report(table: FrequencyTable, N: int,
                             tol: Tolerances = DEFAULT_TOL) -> tuple[DensityOperator, float]:
    """Reconstruct ``rho`` and report how far PSD projection moved the estimate."""
    est = linear_inversion(table.values, N)
    rho, moved = project_to_density(est)
    return DensityOperator(rho, tol), moved


def hermitian_basis(N: int) -> list[np.ndarray]:
    """Orthonormal (Hilbert-Schmidt) basis of the real space of N x N Hermitian matrices."""
    basis = []
    for j in range(N):
        e = np.zeros((N, N), dtype=complex)
        e[j, j] = 1.0
        basis.append(e)
    for j, k in combinations(range(N), 2):
        e = np.zeros((N, N), dtype=complex)
        e[j, k] = e[k, j] = 1 / math.sqrt(2)
        basis.append(e)
        e = np.zeros((N, N), dtype=complex)
        e[j, k] = -1j / math.sqrt(2)
        e[k, j] = 1j / math.sqrt(2)
        basis.append(e)
    return basis


@dataclass(frozen=True)
class Calibration:
    povm: Povm
    residual: float
    condition: float


def calibrate_instrument(states: Sequence, freqs, K: int, kappa_max: float = KAPPA_MAX,
                         tol: Tolerances = DEFAULT_TOL) -> Calibration:
    """Estimate the effects of a K-outcome instrument from calibration data.

    ``freqs[j, k]`` is the observed frequency of outcome ``k`` on input state
    ``states[j]``.  Each effect is fit by unconstrained least squares in a
    Hermitian basis, then pushed back to a valid POVM: negative eigenvalues
    are clipped and the completeness deficit ``1 - sum_k P_k`` is shared out
    in proportion to the effect traces.  ``residual`` is the root sum of
    squared frequency residuals of the returned POVM.
    """
    rhos = [as_matrix(s) for s in states]
    if not rhos:
        raise CalibrationError("no calibration states")
    N = rhos[0].shape[0]
    f = np.asarray(freqs, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    if f.shape != (len(rhos), K):
        raise ValueError(f"frequency matrix has shape {f.shape}, expected {(len(rhos), K)}")
    basis = hermitian_basis(N)
    design = np.array([[np.trace(r @ b).real for b in basis] for r in rhos])
    sv = np.linalg.svd(design, compute_uv=False)
    kappa = float(sv[0] / sv[-1]) if len(rhos) >= N * N and sv[-1] > 0 else math.inf
    if kappa > kappa_max:
        raise CalibrationError(f"states not diverse enough (condition number {kappa:.3g} > {kappa_max:.0e})")
    coef, *_ = np.linalg.lstsq(design, f, rcond=None)
    effects = []
    for k in range(K):
        P = sum(c * b for c, b in zip(coef[:, k], basis))
        P = 0.5 * (P + P.conj().T)
        w, v = np.linalg.eigh(P)
        effects.append((v * np.clip(w, 0.0, None)) @ v.conj().T)
    deficit = np.eye(N) - sum(effects)
    traces = np.array([np.trace(P).real for P in effects])
    weights = traces / traces.sum() if traces.sum() > 0 else np.full(K, 1.0 / K)
    shared = [P + wk * deficit for P, wk in zip(effects, weights)]
    shared = [0.5 * (P + P.conj().T) for P in shared]
    if min(np.linalg.eigvalsh(P)[0] for P in shared) >= -tol.psd:
        effects = shared
    else:
        # sharing a non-PSD deficit broke positivity: rescale S^-1/2 P_k S^-1/2 instead
        w, v = np.linalg.eigh(sum(effects))
        if w[0] <= 0:
            raise CalibrationError("clipped effects do not span the identity")
        s = (v / np.sqrt(w)) @ v.conj().T
        effects = [s @ P @ s for P in effects]
        effects = [0.5 * (P + P.conj().T) for P in effects]
    povm = Povm(tuple(effects), tuple(range(K)), tol)
    pred = np.array([[np.trace(r @ P).real for P in effects] for r in rhos])
    return Calibration(povm, float(np.sqrt(np.sum((pred - f) ** 2))), kappa)
