"""Reduced dynamics on a parameterized family of pure states.

For a family ``phi(z)`` with real parameters ``z`` the ansatz
``psi(t) = phi(z(t))`` is made stationary by requiring the Schrodinger
residual ``dphi/dt + (i/hbar) H phi`` to be orthogonal to the tangent
space.  With tangents ``phi_a = dphi/dz_a`` this is the linear system

    C zdot = b,   C_ab = Re <phi_a, phi_b>,   b_a = Re <phi_a, -(i/hbar) H phi>,

i.e. the real part of the complex Gram/pairing system (real parameters
only see the real inner product).  Near-singular Gram matrices get a
Tikhonov shift; exactly singular ones are rejected.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial
from typing import Callable

import numpy as np


class SingularGramError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class CoherentFamily:
    """``phi(z)`` returns a state vector, ``dphi(z)`` an array (param_dim, dim) of tangents."""

    param_dim: int
    phi: Callable[[np.ndarray], np.ndarray]
    dphi: Callable[[np.ndarray], np.ndarray] | None = None

    def tangents(self, z: np.ndarray, step: float = 1e-6) -> np.ndarray:
        if self.dphi is not None:
            return np.asarray(self.dphi(z), dtype=complex)
        out = []
        for a in range(self.param_dim):
            dz = np.zeros(self.param_dim)
            dz[a] = step
            out.append((self.phi(z + dz) - self.phi(z - dz)) / (2 * step))
        return np.array(out, dtype=complex)


@dataclass
class VariationalRun:
    t: np.ndarray
    z: np.ndarray
    norm: np.ndarray
    max_condition: float


def _zdot(family: CoherentFamily, H: np.ndarray, z: np.ndarray, hbar: float, reg: float):
    phi = np.asarray(family.phi(z), dtype=complex)
    T = family.tangents(z)
    C = (T.conj() @ T.T).real
    b = (T.conj() @ (-1j / hbar * (H @ phi))).real
    sv = np.linalg.svd(C, compute_uv=False)
    if sv[0] == 0 or sv[-1] <= 1e-14 * sv[0]:
        raise SingularGramError(f"tangent Gram matrix is singular at z={z}; parameterization is redundant")
    cond = sv[0] / sv[-1]
    if cond > 1.0 / reg:
        C = C + reg * sv[0] * np.eye(len(C))
    return np.linalg.solve(C, b), cond


def dirac_frenkel_reduce(family: CoherentFamily, H, z0, t_end: float, dt: float,
                         hbar: float = 1.0, reg: float = 1e-12) -> VariationalRun:
    """Integrate the reduced equations with classical RK4 from ``z0`` to ``t_end``."""
    H = np.asarray(H, dtype=complex)
    n = int(round(t_end / dt))
    if n < 1:
        raise ValueError("t_end must cover at least one step")
    h = t_end / n
    z = np.asarray(z0, dtype=float).copy()
    zs, norms = [z.copy()], [np.linalg.norm(family.phi(z))]
    worst = 1.0
    for _ in range(n):
        k1, c1 = _zdot(family, H, z, hbar, reg)
        k2, c2 = _zdot(family, H, z + 0.5 * h * k1, hbar, reg)
        k3, c3 = _zdot(family, H, z + 0.5 * h * k2, hbar, reg)
        k4, c4 = _zdot(family, H, z + h * k3, hbar, reg)
        z = z + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        worst = max(worst, c1, c2, c3, c4)
        zs.append(z.copy())
        norms.append(np.linalg.norm(family.phi(z)))
    return VariationalRun(np.linspace(0.0, n * h, n + 1), np.array(zs), np.array(norms), float(worst))


def full_coordinate_family(N: int) -> CoherentFamily:
    """All vectors of C^N with ``z = (Re psi, Im psi)``: no reduction at all."""
    eye = np.eye(N, dtype=complex)
    tangents = np.vstack([eye, 1j * eye])
    return CoherentFamily(2 * N, lambda z: z[:N] + 1j * z[N:], lambda z: tangents)


def oscillator_hamiltonian(n_levels: int, omega: float = 1.0, hbar: float = 1.0) -> np.ndarray:
    """Harmonic oscillator truncated to ``n_levels`` number states."""
    return np.diag(hbar * omega * (np.arange(n_levels) + 0.5)).astype(complex)


def oscillator_position(n_levels: int) -> np.ndarray:
    """``x = (a + a^dagger)/sqrt 2`` in the truncated number basis (hbar = m = omega = 1)."""
    a = np.diag(np.sqrt(np.arange(1, n_levels)), 1)
    return ((a + a.T) / np.sqrt(2)).astype(complex)


def oscillator_momentum(n_levels: int) -> np.ndarray:
    a = np.diag(np.sqrt(np.arange(1, n_levels)), 1).astype(complex)
    return (a - a.T) / (1j * np.sqrt(2))


def coherent_family(n_levels: int) -> CoherentFamily:
    """Gaussian coherent states in the number basis, ``z = (x, p, phase)``.

    ``phi(z) = exp(i phase) exp(-|alpha|^2/2) sum_n alpha^n / sqrt(n!) |n>``
    with ``alpha = (x + i p)/sqrt 2``.  The width is fixed; the global phase
    is a parameter so the family is closed under oscillator evolution.
    """
    n = np.arange(n_levels)
    inv_sqrt_fact = np.array([1.0 / np.sqrt(float(factorial(k))) for k in n])

    def powers(alpha):
        out = np.empty(n_levels, dtype=complex)
        out[0] = 1.0
        for k in range(1, n_levels):
            out[k] = out[k - 1] * alpha
        return out

    def phi(z):
        x, p, g = z
        alpha = (x + 1j * p) / np.sqrt(2)
        return np.exp(1j * g - 0.5 * abs(alpha) ** 2) * powers(alpha) * inv_sqrt_fact

    def dphi(z):
        x, p, g = z
        alpha = (x + 1j * p) / np.sqrt(2)
        pw = powers(alpha)
        # d alpha^n = n alpha^(n-1) d alpha
        dpw = np.zeros(n_levels, dtype=complex)
        dpw[1:] = n[1:] * pw[:-1]
        pref = np.exp(1j * g - 0.5 * abs(alpha) ** 2) * inv_sqrt_fact
        base = pref * pw
        dx = -0.5 * x * base + pref * dpw / np.sqrt(2)
        dp = -0.5 * p * base + pref * dpw * 1j / np.sqrt(2)
        return np.array([dx, dp, 1j * base])

    return CoherentFamily(3, phi, dphi)
