"""Conservative mixed quantum-classical dynamics.

Classical coordinates ``(q, p)`` move under q-expectation forces

    dq/dt = <dH/dp>,   dp/dt = -<dH/dq>,

while the quantum density evolves by ``i hbar drho/dt = [H(p, q), rho]``.
:func:`hybrid_step` is a Strang splitting of the two flows: half a
classical velocity-Verlet step with rho frozen, an exact unitary step at
the midpoint coordinates, then the other classical half step.  The
quantum sub-step is unitary, so trace and spectrum of rho are preserved
to rounding.  The scheme is second order when H(p, q) splits as T(p) + V(q).
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from ..qcore import propagator

OpFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


class BlowUpError(FloatingPointError):
    pass


@dataclass(frozen=True)
class HybridModel:
    """Operator-valued Hamiltonian ``H(p, q)`` with its coordinate gradients.

    ``grad_p(p, q)`` and ``grad_q(p, q)`` return arrays of shape (n, N, N):
    one Hermitian matrix per classical degree of freedom.
    """

    H: OpFn
    grad_p: OpFn
    grad_q: OpFn
    hbar: float = 1.0

    def check_gradients(self, p, q, step: float = 1e-5, rel_tol: float = 1e-6) -> float:
        """Largest relative mismatch between the supplied gradients and central differences."""
        p = np.atleast_1d(np.asarray(p, dtype=float))
        q = np.atleast_1d(np.asarray(q, dtype=float))
        gp = np.asarray(self.grad_p(p, q))
        gq = np.asarray(self.grad_q(p, q))
        worst = 0.0
        for i in range(len(p)):
            for analytic, which in ((gp[i], "p"), (gq[i], "q")):
                dp = np.zeros_like(p)
                dq = np.zeros_like(q)
                (dp if which == "p" else dq)[i] = step
                fd = (np.asarray(self.H(p + dp, q + dq)) - np.asarray(self.H(p - dp, q - dq))) / (2 * step)
                scale = max(1.0, float(np.max(np.abs(analytic))))
                worst = max(worst, float(np.max(np.abs(fd - analytic))) / scale)
        if worst > rel_tol:
            raise ValueError(f"model gradients disagree with finite differences (relative {worst:.2e})")
        return worst


@dataclass(frozen=True)
class HybridState:
    q: np.ndarray
    p: np.ndarray
    rho: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "q", np.atleast_1d(np.asarray(self.q, dtype=float)))
        object.__setattr__(self, "p", np.atleast_1d(np.asarray(self.p, dtype=float)))
        object.__setattr__(self, "rho", np.asarray(self.rho, dtype=complex))
        if self.q.shape != self.p.shape:
            raise ValueError("q and p must have the same shape")


def _expect_rho(rho: np.ndarray, ops: np.ndarray) -> np.ndarray:
    # Tr(rho A_i) for a stack of operators
    return np.einsum("ij,kji->k", rho, ops).real


def _expect_psi(psi: np.ndarray, ops: np.ndarray) -> np.ndarray:
    return np.einsum("i,kij,j->k", psi.conj(), ops, psi).real


def _classical_half(q, p, model: HybridModel, expect, h):
    p = p - 0.5 * h * expect(np.asarray(model.grad_q(p, q)))
    q = q + h * expect(np.asarray(model.grad_p(p, q)))
    p = p - 0.5 * h * expect(np.asarray(model.grad_q(p, q)))
    return q, p


def hybrid_step(state: HybridState, model: HybridModel, dt: float) -> HybridState:
    """Advance a hybrid state by one Strang step of length ``dt``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    rho = state.rho
    q, p = _classical_half(state.q, state.p, model, lambda ops: _expect_rho(rho, ops), 0.5 * dt)
    U = propagator(model.H(p, q), dt, model.hbar)
    rho = U @ rho @ U.conj().T
    q, p = _classical_half(q, p, model, lambda ops: _expect_rho(rho, ops), 0.5 * dt)
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p)) and np.all(np.isfinite(rho))):
        raise BlowUpError(f"non-finite hybrid state at t={state.t + dt}; reduce dt")
    return HybridState(q, p, rho, state.t + dt)


def hybrid_step_pure(q, p, psi, model: HybridModel, dt: float):
    """Same splitting acting on a state vector; returns ``(q, p, psi)``."""
    q, p = _classical_half(np.atleast_1d(q), np.atleast_1d(p), model, lambda ops: _expect_psi(psi, ops), 0.5 * dt)
    psi = propagator(model.H(p, q), dt, model.hbar) @ psi
    q, p = _classical_half(q, p, model, lambda ops: _expect_psi(psi, ops), 0.5 * dt)
    return q, p, psi


def energy(state: HybridState, model: HybridModel) -> float:
    return float(np.trace(state.rho @ model.H(state.p, state.q)).real)


@dataclass
class HybridTrajectory:
    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    energy: np.ndarray
    trace: np.ndarray
    final: HybridState
    observables: dict


def hybrid_trajectory(state: HybridState, model: HybridModel, dt: float, n_steps: int,
                      observables: dict | None = None) -> HybridTrajectory:
    """Integrate ``n_steps`` steps, recording coordinates, <H> and Tr rho after every step.

    ``observables`` maps names to callables ``A(p, q) -> matrix``; their
    q-expectations are recorded too.
    """
    observables = observables or {}
    ts, qs, ps, es, trs = [state.t], [state.q], [state.p], [energy(state, model)], [np.trace(state.rho).real]
    obs = {k: [float(np.trace(state.rho @ A(state.p, state.q)).real)] for k, A in observables.items()}
    for _ in range(n_steps):
        state = hybrid_step(state, model, dt)
        ts.append(state.t)
        qs.append(state.q)
        ps.append(state.p)
        es.append(energy(state, model))
        trs.append(np.trace(state.rho).real)
        for k, A in observables.items():
            obs[k].append(float(np.trace(state.rho @ A(state.p, state.q)).real))
    return HybridTrajectory(np.array(ts), np.array(qs), np.array(ps), np.array(es), np.array(trs),
                            state, {k: np.array(v) for k, v in obs.items()})


def ehrenfest_rhs(state: HybridState, model: HybridModel, A: OpFn, dA_dq: OpFn, dA_dp: OpFn) -> float:
    """Rate of change of ``<A(p, q)>`` from the mixed Ehrenfest equation.

    ``sum_i <dA/dq_i><dH/dp_i> - <dA/dp_i><dH/dq_i> + <(i/hbar)[H, A]>``
    """
    q, p, rho = state.q, state.p, state.rho
    H = np.asarray(model.H(p, q))
    a = np.asarray(A(p, q))
    if a.shape != rho.shape:
        raise ValueError(f"quantity has shape {a.shape}, state has {rho.shape}")
    classical = float(np.dot(_expect_rho(rho, np.asarray(dA_dq(p, q))), _expect_rho(rho, np.asarray(model.grad_p(p, q))))
                      - np.dot(_expect_rho(rho, np.asarray(dA_dp(p, q))), _expect_rho(rho, np.asarray(model.grad_q(p, q)))))
    comm = (1j / model.hbar) * (H @ a - a @ H)
    return classical + float(np.trace(rho @ comm).real)


def spin_boson_model(omega: float = 1.0, coupling: float = 0.5, delta: float = 1.0,
                     hbar: float = 1.0) -> HybridModel:
    """One classical oscillator coupled to a two-level system.

    ``H(p, q) = (p^2 + omega^2 q^2)/2 + coupling q sigma_z + delta/2 sigma_x``.
    """
    sz = np.diag([1.0, -1.0]).astype(complex)
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    eye = np.eye(2, dtype=complex)

    def H(p, q):
        p, q = float(np.ravel(p)[0]), float(np.ravel(q)[0])
        return 0.5 * (p * p + omega**2 * q * q) * eye + coupling * q * sz + 0.5 * delta * sx

    def grad_p(p, q):
        return (float(np.ravel(p)[0]) * eye)[None]

    def grad_q(p, q):
        return (omega**2 * float(np.ravel(q)[0]) * eye + coupling * sz)[None]

    return HybridModel(H, grad_p, grad_q, hbar)


def classical_model(h: Callable[[float, float], float], dh_dp, dh_dq) -> HybridModel:
    """Purely classical system as a hybrid model with a one-dimensional quantum sector."""
    return HybridModel(
        lambda p, q: np.array([[h(p, q)]], dtype=complex),
        lambda p, q: np.asarray(dh_dp(p, q), dtype=complex).reshape(-1, 1, 1),
        lambda p, q: np.asarray(dh_dq(p, q), dtype=complex).reshape(-1, 1, 1),
    )
