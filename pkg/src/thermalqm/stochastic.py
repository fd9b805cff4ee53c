"""Open-system dynamics, quantum-jump unraveling and detection statistics.

Master equation (time-independent generator):

    drho/dt = -(i/hbar)[H, rho] + sum_k (L_k rho L_k^* - 1/2 {L_k^* L_k, rho})

Jump unraveling: between jumps the unnormalized vector follows
``i hbar dpsi/dt = H_eff psi`` with ``H_eff = H - (i hbar/2) sum_k L_k^* L_k``,
integrated with fixed-step RK4.  A jump fires when ``|psi|^2`` falls to a
uniform threshold drawn after the previous jump; the crossing time is
located by root finding inside the step, the channel is chosen with weight
``|L_k psi|^2`` and the state is replaced by ``L_k psi / |L_k psi|``.
"""
from __future__ import annotations

import json
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq

from .measure import born_instrument
from .qcore import as_matrix, hermiticity_residual
from .rng import make_rng

log = logging.getLogger(__name__)


class PDPBreakdownError(RuntimeError):
    pass


@dataclass(frozen=True)
class LindbladModel:
    H: np.ndarray
    jumps: tuple[np.ndarray, ...] = ()
    hbar: float = 1.0

    def __post_init__(self):
        H = as_matrix(self.H)
        if hermiticity_residual(H) > 1e-10:
            raise ValueError("H must be Hermitian")
        jumps = tuple(np.asarray(L, dtype=complex) for L in self.jumps)
        for L in jumps:
            if L.shape != H.shape:
                raise ValueError(f"jump operator has shape {L.shape}, H has {H.shape}")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "jumps", jumps)

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    def decay_operator(self) -> np.ndarray:
        """``sum_k L_k^* L_k``."""
        out = np.zeros_like(self.H)
        for L in self.jumps:
            out += L.conj().T @ L
        return out

    def effective_hamiltonian(self) -> np.ndarray:
        return self.H - 0.5j * self.hbar * self.decay_operator()

    def liouvillian(self) -> np.ndarray:
        """Superoperator acting on row-major ``rho.ravel()``."""
        N = self.dim
        eye = np.eye(N)
        # row-major vec: vec(A X B) = kron(A, B.T) vec(X)
        Heff = self.effective_hamiltonian()
        out = -1j / self.hbar * (np.kron(Heff, eye) - np.kron(eye, Heff.conj()))
        for L in self.jumps:
            out += np.kron(L, L.conj())
        return out

    def max_rate(self) -> float:
        return float(np.linalg.norm(self.H, 2) / self.hbar + np.linalg.norm(self.decay_operator(), 2))


@dataclass
class MasterPath:
    t: np.ndarray
    rho: np.ndarray  # (n_t, N, N)
    trace_drift: float


def master_integrate(model: LindbladModel, rho0, t_end: float, dt: float,
                     psd_tol: float = 1e-9) -> MasterPath:
    """Propagate ``rho0`` with the exact one-step propagator ``exp(dt L)``."""
    n = int(round(t_end / dt))
    if n < 1:
        raise ValueError("t_end must cover at least one step")
    if dt * model.max_rate() > 0.1:
        warnings.warn(f"dt={dt} does not resolve the fastest rate {model.max_rate():.3g}", stacklevel=2)
    N = model.dim
    step = sla.expm(model.liouvillian() * dt)
    rho = as_matrix(rho0).copy()
    out = [rho]
    drift = 0.0
    for _ in range(n):
        rho = (step @ rho.ravel()).reshape(N, N)
        if not np.all(np.isfinite(rho)):
            raise FloatingPointError("master equation produced non-finite values")
        tr = np.trace(rho).real
        drift = max(drift, abs(tr - 1.0))
        rho = 0.5 * (rho + rho.conj().T) / tr
        lam = np.linalg.eigvalsh(rho)[0]
        if lam < -psd_tol:
            raise FloatingPointError(f"density lost positivity (eigenvalue {lam:.2e})")
        out.append(rho)
    return MasterPath(np.arange(n + 1) * dt, np.array(out), float(drift))


@dataclass
class JumpTrajectory:
    events: list  # (time, channel)
    t: np.ndarray
    states: np.ndarray  # (n_samples, N), normalized
    seed: int
    stream: int = 0

    def to_json(self) -> str:
        return json.dumps({
            "seed": self.seed,
            "stream": self.stream,
            "events": [[repr(float(t)), int(k)] for t, k in self.events],
            "t": [repr(float(x)) for x in self.t],
            "states": [[[repr(float(z.real)), repr(float(z.imag))] for z in s] for s in self.states],
        })

    def projectors(self) -> np.ndarray:
        return np.einsum("ti,tj->tij", self.states, self.states.conj())


def _rk4_matrix(A: np.ndarray, h: float) -> np.ndarray:
    # one classical RK4 step of dpsi/dt = A psi is this degree-4 polynomial in hA
    hA = h * A
    eye = np.eye(len(A), dtype=complex)
    return eye + hA @ (eye + hA @ (eye / 2 + hA @ (eye / 6 + hA / 24)))


# Rows are advanced with explicit elementwise arithmetic in a fixed order, so a
# trajectory's numbers do not depend on how many others share its batch.
def _apply(R: np.ndarray, X: np.ndarray) -> np.ndarray:
    out = X[:, 0:1] * R[:, 0]
    for b in range(1, R.shape[1]):
        out = out + X[:, b:b + 1] * R[:, b]
    return out


def _norm2(X: np.ndarray) -> np.ndarray:
    out = X[:, 0].real ** 2 + X[:, 0].imag ** 2
    for b in range(1, X.shape[1]):
        out = out + (X[:, b].real ** 2 + X[:, b].imag ** 2)
    return out


def _pdp_batch(model: LindbladModel, psi0, t_end: float, seed: int, streams: Sequence[int],
               dt: float, sample_every: int, max_events: int | None = None) -> list[JumpTrajectory]:
    psi = np.asarray(psi0, dtype=complex).ravel()
    if psi.shape != (model.dim,):
        raise ValueError(f"psi0 has length {psi.size}, model dimension is {model.dim}")
    psi = psi / np.sqrt(_norm2(psi[None])[0])
    n_steps = int(round(t_end / dt))
    if n_steps < 1:
        raise ValueError("t_end must cover at least one step")
    if sample_every < 1:
        raise ValueError("sample_every must be positive")
    A = -1j / model.hbar * model.effective_hamiltonian()
    full = _rk4_matrix(A, dt)
    jumps = model.jumps
    n = len(streams)
    gens = [make_rng(seed, s) for s in streams]
    X = np.tile(psi, (n, 1))
    n2 = np.ones(n)
    thr = np.array([g.random() for g in gens]) if jumps else np.full(n, -np.inf)
    events = [[] for _ in range(n)]
    times, states = [0.0], [X.copy()]

    def settle(j: int, t: float, t_next: float, x: np.ndarray):
        # jump(s) inside [t, t_next] for trajectory j; returns the state at t_next
        while True:
            h = t_next - t
            start = x
            s = brentq(lambda s: _norm2(_apply(_rk4_matrix(A, s), start))[0] - thr[j],
                       0.0, h, xtol=1e-13, rtol=1e-10)
            at = _apply(_rk4_matrix(A, s), start)
            w = np.array([_norm2(_apply(L, at))[0] for L in jumps])
            total = w.sum()
            if not total > 1e-300:
                raise PDPBreakdownError(
                    f"trajectory {streams[j]}: jump fired at t={t + s:.6g} but no channel is active")
            k = int(gens[j].choice(len(jumps), p=w / total))
            x = _apply(jumps[k], at) / np.sqrt(w[k])
            t = t + s
            events[j].append((t, k))
            # after the last wanted event the threshold is never reached again
            thr[j] = -np.inf if max_events is not None and len(events[j]) >= max_events else gens[j].random()
            cand = _apply(_rk4_matrix(A, t_next - t), x)
            c2 = _norm2(cand)[0]
            if c2 > thr[j]:
                return cand, c2

    for i in range(n_steps):
        cand = _apply(full, X)
        c2 = _norm2(cand)
        if np.any(c2 > n2 * (1 + 1e-12)):
            raise PDPBreakdownError(f"norm grew during drift at t={i * dt:.6g}; reduce dt")
        if not jumps:
            X = cand / np.sqrt(c2)[:, None]
        else:
            prev, X, n2 = X, cand, c2
            for j in np.flatnonzero(c2 <= thr):
                x, n2[j] = settle(j, i * dt, (i + 1) * dt, prev[j:j + 1])
                X[j] = x[0]
        if (i + 1) % sample_every == 0:
            times.append((i + 1) * dt)
            states.append(X / np.sqrt(_norm2(X))[:, None])
    S = np.stack(states, axis=1)
    t = np.array(times)
    return [JumpTrajectory(events[j], t, S[j], int(seed), int(streams[j])) for j in range(n)]


def pdp_trajectory(model: LindbladModel, psi0, t_end: float, seed: int, dt: float = 0.01,
                   sample_every: int = 1, stream: int = 0, max_events: int | None = None) -> JumpTrajectory:
    """One sample path of the jump process on ``[0, t_end]``.

    The state is recorded (normalized) every ``sample_every`` steps of size
    ``dt``.  With ``max_events`` the path stops jumping after that many
    events (used when only the first events matter).
    """
    return _pdp_batch(model, psi0, t_end, seed, [stream], dt, sample_every, max_events)[0]


_BATCH = 1024


def _run_chunk(args):
    model, psi0, t_end, seed, dt, sample_every, streams, max_events = args
    return _pdp_batch(model, psi0, t_end, seed, streams, dt, sample_every, max_events)


def run_trajectories(model: LindbladModel, psi0, t_end: float, n_traj: int, base_seed: int,
                     dt: float = 0.01, sample_every: int = 1, workers: int = 1,
                     max_events: int | None = None) -> list[JumpTrajectory]:
    """Trajectory ``i`` uses random stream ``i``; the result is independent of ``workers``."""
    jobs = [(model, psi0, t_end, base_seed, dt, sample_every, list(range(a, min(a + _BATCH, n_traj))), max_events)
            for a in range(0, n_traj, _BATCH)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            chunks = list(ex.map(_run_chunk, jobs))
    else:
        chunks = [_run_chunk(j) for j in jobs]
    return [tr for c in chunks for tr in c]


@dataclass
class EnsembleResult:
    t: np.ndarray
    mean: np.ndarray  # (n_t, N, N)
    stderr: np.ndarray  # complex: real/imag parts are standard errors of the real/imag parts
    n_traj: int


def ensemble_average(model: LindbladModel, psi0, t_end: float, n_traj: int, base_seed: int,
                     dt: float = 0.01, sample_every: int = 1, workers: int = 1) -> EnsembleResult:
    """Average of ``psi psi^*`` over independent jump trajectories."""
    if n_traj < 1:
        raise ValueError("need at least one trajectory")
    trajs = run_trajectories(model, psi0, t_end, n_traj, base_seed, dt, sample_every, workers)
    # trajectory index last and contiguous so numpy reduces it pairwise, in index order
    P = np.ascontiguousarray(np.moveaxis(np.stack([tr.projectors() for tr in trajs]), 0, -1))
    mean = P.sum(axis=-1) / n_traj
    if n_traj > 1:
        dev = P - mean[..., None]
        var_re = (dev.real**2).sum(axis=-1) / (n_traj - 1)
        var_im = (dev.imag**2).sum(axis=-1) / (n_traj - 1)
        se = (np.sqrt(var_re) + 1j * np.sqrt(var_im)) / np.sqrt(n_traj)
    else:
        se = np.full(mean.shape, np.nan + 1j * np.nan)
    return EnsembleResult(trajs[0].t, mean, se, n_traj)


def ensemble_z_scores(ens: EnsembleResult, reference: np.ndarray) -> np.ndarray:
    """``|mean - reference| / SE`` per sample time and entry, real and imaginary parts stacked.

    The standard error is floored at ``1/n_traj``: when every trajectory
    agrees the sample spread is zero, yet a single unobserved jump could
    still move an entry (bounded by 1) by ``1/n_traj``.
    """
    ref = np.asarray(reference)
    if ref.shape != ens.mean.shape:
        raise ValueError(f"reference has shape {ref.shape}, ensemble has {ens.mean.shape}")
    floor = 1.0 / ens.n_traj
    d = ens.mean - ref
    return np.stack([np.abs(d.real) / np.maximum(ens.stderr.real, floor),
                     np.abs(d.imag) / np.maximum(ens.stderr.imag, floor)])


@dataclass
class DetectionStats:
    counts: np.ndarray
    histogram: np.ndarray  # histogram[n] = number of windows with n events
    mean: float
    variance: float
    fano: float


def detection_statistics(model: LindbladModel, psi0, window: float, n_traj: int, base_seed: int,
                         channels: Sequence[int] | None = None, warmup: float = 0.0,
                         dt: float = 0.01, workers: int = 1) -> DetectionStats:
    """Count detection events in ``[warmup, warmup + window)`` over independent runs.

    Only jumps on ``channels`` (default: all) count as detections.
    """
    chans = set(range(len(model.jumps)) if channels is None else channels)
    t_end = warmup + window
    sample_every = max(1, int(round(t_end / dt)))
    trajs = run_trajectories(model, psi0, t_end, n_traj, base_seed, dt, sample_every, workers)
    counts = np.array([sum(1 for t, k in tr.events if k in chans and warmup <= t < t_end) for tr in trajs])
    mean = float(counts.mean())
    var = float(counts.var(ddof=1)) if n_traj > 1 else 0.0
    fano = var / mean if mean > 0 else float("nan")
    return DetectionStats(counts, np.bincount(counts), mean, var, fano)


def decay_model(gamma: float, hbar: float = 1.0) -> LindbladModel:
    """Two-level emitter ``|1> -> |0>`` at rate ``gamma``."""
    L = np.sqrt(gamma) * np.array([[0, 1], [0, 0]], dtype=complex)
    return LindbladModel(np.zeros((2, 2)), (L,), hbar)


def driven_damped_model(omega: float, gamma: float, detuning: float = 0.0, hbar: float = 1.0) -> LindbladModel:
    """Resonantly driven, spontaneously decaying two-level system.

    ``H = hbar (omega/2 sigma_x + detuning/2 sigma_z)``; levels ordered (|0>, |1>).
    """
    H = hbar * np.array([[-detuning / 2, omega / 2], [omega / 2, detuning / 2]], dtype=complex)
    L = np.sqrt(gamma) * np.array([[0, 1], [0, 0]], dtype=complex)
    return LindbladModel(H, (L,), hbar)


def repumped_emitter_model(gamma: float, pump: float) -> LindbladModel:
    """Emitter decaying at ``gamma`` (channel 0) and re-excited at ``pump`` (channel 1)."""
    down = np.sqrt(gamma) * np.array([[0, 1], [0, 0]], dtype=complex)
    up = np.sqrt(pump) * np.array([[0, 0], [1, 0]], dtype=complex)
    return LindbladModel(np.zeros((2, 2)), (down, up))


def poisson_source_model(rate: float) -> LindbladModel:
    """One-level 'system' whose single channel clicks as a Poisson process of the given rate."""
    return LindbladModel(np.zeros((1, 1)), (np.array([[np.sqrt(rate)]], dtype=complex),))


def strong_measurement_model(A, rate: float) -> tuple[LindbladModel, tuple]:
    """Jump operators ``sqrt(rate) P_k`` for the eigenprojectors of ``A``; returns the model and outcomes."""
    povm = born_instrument(A)
    jumps = tuple(np.sqrt(rate) * P for P in povm.effects)
    return LindbladModel(np.zeros_like(as_matrix(A)), jumps), povm.outcomes


def first_jump_outcomes(model: LindbladModel, psi0, t_end: float, n_traj: int, base_seed: int,
                        dt: float = 0.01, workers: int = 1) -> np.ndarray:
    """Channel of the first jump of each trajectory (-1 if none occurred)."""
    trajs = run_trajectories(model, psi0, t_end, n_traj, base_seed, dt, max(1, int(round(t_end / dt))), workers, 1)
    return np.array([tr.events[0][1] if tr.events else -1 for tr in trajs])


def waiting_times(model: LindbladModel, psi0, t_end: float, n_traj: int, base_seed: int,
                  dt: float = 0.01, workers: int = 1) -> np.ndarray:
    """Time of the first event per trajectory (``inf`` if none before ``t_end``)."""
    trajs = run_trajectories(model, psi0, t_end, n_traj, base_seed, dt, max(1, int(round(t_end / dt))), workers, 1)
    return np.array([tr.events[0][0] if tr.events else np.inf for tr in trajs])


@dataclass(frozen=True)
class BistableModel:
    """Damped, noisy particle in ``U(x) = a (x^2 - x0^2)^2 + tilt * x``."""

    a: float = 1.0
    x0: float = 1.0
    damping: float = 1.0
    noise: float = 0.05
    mass: float = 1.0
    tilt: float = 0.0

    def __post_init__(self):
        if self.a <= 0 or self.x0 <= 0 or self.mass <= 0:
            raise ValueError("a, x0 and mass must be positive")
        if self.damping < 0 or self.noise < 0:
            raise ValueError("damping and noise must be nonnegative")

    def potential(self, x):
        return self.a * (x * x - self.x0**2) ** 2 + self.tilt * x

    def force(self, x):
        return -4 * self.a * x * (x * x - self.x0**2) - self.tilt


@dataclass
class BistableResult:
    left: int
    right: int
    undecided: int
    final_x: np.ndarray
    t: np.ndarray  # relaxation record: times ...
    decided: np.ndarray  # ... and fraction of runs with |x| > x0/2 at those times

    @property
    def n_runs(self) -> int:
        return len(self.final_x)

    @property
    def left_fraction(self) -> float:
        decided = self.left + self.right
        return self.left / decided if decided else float("nan")

    @property
    def undecided_fraction(self) -> float:
        return self.undecided / self.n_runs


def bistable_selection(model: BistableModel, t_end: float, n_runs: int, base_seed: int,
                       dt: float | None = None, x_start: float = 0.0, v_start: float = 0.0,
                       block: int = 512) -> BistableResult:
    """Euler-Maruyama runs of ``m x'' = -U'(x) - damping x' + noise xi(t)``.

    Run ``i`` draws its noise from stream ``i``.  A run ends in the left
    (right) well if ``x < -x0/2`` (``x > x0/2``) at ``t_end``; otherwise it
    is undecided.
    """
    if dt is None:
        dt = 0.01 if model.damping == 0 else min(0.01, 0.01 / model.damping)
    n_steps = int(round(t_end / dt))
    gens = [make_rng(base_seed, i) for i in range(n_runs)]
    x = np.full(n_runs, float(x_start))
    v = np.full(n_runs, float(v_start))
    sq = np.sqrt(dt) * model.noise / model.mass
    half = 0.5 * model.x0
    done = 0
    rec_t, rec_d = [0.0], [float(np.mean(np.abs(x) > half))]
    while done < n_steps:
        b = min(block, n_steps - done)
        xi = np.stack([g.standard_normal(b) for g in gens]) if model.noise > 0 else np.zeros((n_runs, b))
        for j in range(b):
            acc = (model.force(x) - model.damping * v) / model.mass
            x, v = x + v * dt, v + acc * dt + sq * xi[:, j]
        done += b
        rec_t.append(done * dt)
        rec_d.append(float(np.mean(np.abs(x) > half)))
    left = int(np.sum(x < -half))
    right = int(np.sum(x > half))
    return BistableResult(left, right, n_runs - left - right, x, np.array(rec_t), np.array(rec_d))
