"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s``; the lines are also
collected into an "acceptance criteria" section of the terminal summary.
"""
import json
import time

import numpy as np
import pytest
from scipy import stats

from thermalqm import cli
from thermalqm.dynamics import (
    HybridState, coherent_family, dirac_frenkel_reduce, harmonic_convergence, hybrid_step,
    hybrid_step_pure, hybrid_trajectory, oscillator_hamiltonian, spin_boson_model,
)
from thermalqm.experiments import KINDS
from thermalqm.measure import born_instrument, q_probabilities, test_state
from thermalqm.qcore import (
    euler_residual, grand_canonical, nearest_spectral_value, q_expectation, q_uncertainty,
    random_density, random_hermitian, random_state_vector, trace_distance,
)
from thermalqm.rng import make_rng
from thermalqm.stochastic import (
    decay_model, detection_statistics, driven_damped_model, ensemble_average, ensemble_z_scores,
    first_jump_outcomes, master_integrate, repumped_emitter_model, strong_measurement_model,
    waiting_times, BistableModel, bistable_selection,
)
from thermalqm.stokes import (
    apply_jones, coherence_to_stokes, jones_to_mueller, linear_polarization, malus_sweep,
    sliced_medium_evolution, stokes_to_coherence,
)
from thermalqm.tomography import measure_suite, reconstruct_state, standard_test_suite

GROUND = np.array([1, 0], dtype=complex)
EXCITED = np.array([0, 1], dtype=complex)


@pytest.fixture
def criterion(record_property):
    def report(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        print(line)
        record_property("criterion", line)
        assert ok, line
    return report


def test_c01_spectrum_sweep(criterion):
    start = time.perf_counter()
    holds, worst = 0, -np.inf
    for i in range(1000):
        rng = make_rng(2026, i)
        dim = int(rng.integers(2, 9))
        rho = random_density(dim, rng, rank=int(rng.integers(1, dim + 1)))
        A = random_hermitian(dim, rng)
        _, gap = nearest_spectral_value(rho, A)
        slack = gap - q_uncertainty(rho, A)
        worst = max(worst, slack)
        holds += slack <= 1e-10
    elapsed = time.perf_counter() - start
    criterion(1, holds == 1000 and elapsed < 5,
              f"{holds}/1000 pairs satisfy min|lambda-<A>| <= sigma_A + 1e-10 "
              f"(max slack {worst:.2e}); {elapsed:.2f} s")


def test_c02_tomography_round_trip(criterion):
    start = time.perf_counter()
    worst_exact = 0.0
    for N in range(2, 7):
        suite = standard_test_suite(N)
        for k in range(10):
            rng = make_rng(11, 100 * N + k)
            rho = random_density(N, rng, rank=int(rng.integers(1, N + 1)))
            out = reconstruct_state(measure_suite(rho, suite), N)
            worst_exact = max(worst_exact, trace_distance(out.entries, rho))
    rho = random_density(2, make_rng(42, 1 << 40))
    table = measure_suite(rho, standard_test_suite(2), n=100_000, seed=42)
    sampled = trace_distance(reconstruct_state(table, 2).entries, rho)
    elapsed = time.perf_counter() - start
    criterion(2, worst_exact <= 1e-10 and sampled <= 0.05 and elapsed < 30,
              f"exact N=2..6 max trace distance {worst_exact:.1e} (<= 1e-10); "
              f"sampled n=1e5 N=2 trace distance {sampled:.4f} (<= 0.05); {elapsed:.2f} s")


def test_c03_malus_born(criterion):
    angles = np.pi * np.arange(36) / 36
    worst_amp, worst_born = 0.0, 0.0
    for k in range(10):
        psi = random_state_vector(2, make_rng(3, k))
        intensity = malus_sweep(psi, angles)
        amp = np.array([abs(np.vdot(linear_polarization(a), psi)) ** 2 for a in angles])
        born = np.array([test_state(linear_polarization(a), psi) for a in angles])
        worst_amp = max(worst_amp, np.max(np.abs(intensity - amp)))
        worst_born = max(worst_born, np.max(np.abs(intensity - born)))
    criterion(3, worst_amp <= 1e-12 and worst_born <= 1e-15,
              f"36-angle sweeps: max |I - |phi*psi|^2| = {worst_amp:.1e} (<= 1e-12); "
              f"max |I - test_state| = {worst_born:.1e} (roundoff, <= 1e-15)")


def test_c04_sliced_medium(criterion):
    start = time.perf_counter()
    errs = [sliced_medium_evolution(lambda t: np.sin(t) * np.array([[0, 1], [1, 0]]), [1, 0], np.pi, n).error
            for n in (100, 200, 400)]
    ratios = [b / a for a, b in zip(errs, errs[1:])]
    elapsed = time.perf_counter() - start
    criterion(4, all(0.4 <= r <= 0.6 for r in ratios) and elapsed < 5,
              f"errors {', '.join(f'{e:.3e}' for e in errs)}; ratios {ratios[0]:.3f}, {ratios[1]:.3f} "
              f"(in [0.4, 0.6]); {elapsed:.2f} s")


def test_c05_mueller_commuting_square(criterion):
    rng = make_rng(5, 0)
    worst_sq, worst_comp = 0.0, 0.0
    Ts = [rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)) for _ in range(100)]
    Ss = []
    for _ in range(100):
        v = rng.normal(size=3)
        Ss.append(np.concatenate([[np.linalg.norm(v) * (1 + rng.uniform())], v]))
    for T in Ts:
        M = jones_to_mueller(T)
        for S in Ss:
            out = coherence_to_stokes(apply_jones(stokes_to_coherence(S), T)).as_array()
            worst_sq = max(worst_sq, np.max(np.abs(M @ S - out)))
    for T1, T2 in zip(Ts, Ts[1:]):
        worst_comp = max(worst_comp, np.max(np.abs(jones_to_mueller(T1 @ T2) - jones_to_mueller(T1) @ jones_to_mueller(T2))))
    criterion(5, worst_sq <= 1e-9 and worst_comp <= 1e-9,
              f"100x100 commuting-square residual {worst_sq:.1e}; composition residual {worst_comp:.1e} (<= 1e-9)")


def test_c06_hybrid_integrator(criterion):
    start = time.perf_counter()
    model = spin_boson_model(omega=1.0, coupling=0.5, delta=1.0)
    s0 = HybridState([1.0], [0.0], np.diag([1.0, 0.0]))
    T = 10.0
    drifts, trace_err = [], 0.0
    for dt in (0.1, 0.05, 0.025):
        tr = hybrid_trajectory(s0, model, dt, int(round(T / dt)))
        drifts.append(np.max(np.abs(tr.energy - tr.energy[0])))
        trace_err = max(trace_err, np.max(np.abs(tr.trace - 1)))
    ratios = [a / b for a, b in zip(drifts, drifts[1:])]
    # rank-1 preservation: density route vs state-vector route
    psi = random_state_vector(2, make_rng(6, 0))
    s = HybridState([1.0], [0.0], np.outer(psi, psi.conj()))
    q, p = np.array([1.0]), np.array([0.0])
    dt = 0.025
    rank_err = 0.0
    for _ in range(int(round(T / dt))):
        s = hybrid_step(s, model, dt)
        q, p, psi = hybrid_step_pure(q, p, psi, model, dt)
        rank_err = max(rank_err, np.max(np.abs(s.rho - np.outer(psi, psi.conj()))), np.linalg.eigvalsh(s.rho)[0])
    per_time = rank_err / T
    elapsed = time.perf_counter() - start
    criterion(6, all(3 <= r <= 5 for r in ratios) and trace_err <= 1e-12 and per_time <= 1e-9 and elapsed < 30,
              f"energy drift ratios {ratios[0]:.2f}, {ratios[1]:.2f} (in [3, 5]); trace error {trace_err:.1e} "
              f"(<= 1e-12); pure-state deviation {per_time:.1e} per unit time (<= 1e-9); {elapsed:.2f} s")


def test_c07_koopman(criterion):
    start = time.perf_counter()
    coarse, fine = harmonic_convergence([128, 256], L=4.0, t_end=np.pi / 2, dt=0.05, q0=1.0, p0=0.0, sigma=0.2)
    q, p = coarse.run.mean_q[-1], coarse.run.mean_p[-1]
    means_ok = abs(q) <= 0.02 and abs(p + 1) <= 0.02
    mean_err = [max(r.err_q, r.err_p) for r in (coarse, fine)]
    improves = fine.density_error <= 0.5 * coarse.density_error and mean_err[1] <= max(mean_err[0], 1e-12)
    elapsed = time.perf_counter() - start
    criterion(7, means_ok and improves and elapsed < 60,
              f"128^2: <q> = {q:.2e}, <p> = {p:.6f} (within 0.02 of 0, -1); density L2 error "
              f"{coarse.density_error:.3f} -> {fine.density_error:.3f} on doubling (ratio "
              f"{fine.density_error / coarse.density_error:.2f} <= 0.5); mean error {mean_err[0]:.1e} -> "
              f"{mean_err[1]:.1e}; {elapsed:.2f} s")


def test_c08_dirac_frenkel(criterion):
    start = time.perf_counter()
    n = 64
    x0, p0 = 2.0, -1.0
    run = dirac_frenkel_reduce(coherent_family(n), oscillator_hamiltonian(n), [x0, p0, 0.0], 2 * np.pi, 0.01)
    x = x0 * np.cos(run.t) + p0 * np.sin(run.t)
    p = -x0 * np.sin(run.t) + p0 * np.cos(run.t)
    err = float(np.max(np.hypot(run.z[:, 0] - x, run.z[:, 1] - p)))
    elapsed = time.perf_counter() - start
    criterion(8, err <= 1e-3 and elapsed < 60,
              f"64-level oscillator, one period: max centre error {err:.1e} (<= 1e-3); {elapsed:.2f} s")


def test_c09_pdp_vs_master(criterion):
    start = time.perf_counter()
    model = driven_damped_model(2.0, 1.0)
    ens = ensemble_average(model, GROUND, 5.0, 2000, base_seed=2026, dt=0.01, sample_every=10)
    ref = master_integrate(model, np.outer(GROUND, GROUND), 5.0, 0.01).rho[::10]
    z = float(np.max(ensemble_z_scores(ens, ref)))
    w = waiting_times(decay_model(1.0), EXCITED, 10.0, 10_000, base_seed=2026)
    ks = stats.kstest(w, "expon", args=(0, 1.0)).statistic
    elapsed = time.perf_counter() - start
    criterion(9, z <= 3 and np.isfinite(w).all() and ks <= 0.02 and elapsed < 120,
              f"2000 trajectories: max |mean - master| / SE = {z:.2f} (<= 3) over {len(ens.t)} sample times; "
              f"decay waiting times KS = {ks:.4f} (<= 0.02) at 1e4; {elapsed:.2f} s")


def test_c10_poisson_counts(criterion):
    start = time.perf_counter()
    s = detection_statistics(repumped_emitter_model(1.0, 100.0), GROUND, 2.0, 5000, base_seed=2026,
                             channels=[0], warmup=0.1, dt=0.0025)
    elapsed = time.perf_counter() - start
    criterion(10, 0.9 <= s.fano <= 1.1,
              f"re-pumped emitter, 5000 windows: mean {s.mean:.3f}, Fano {s.fano:.3f} (in [0.9, 1.1]); {elapsed:.2f} s")


def test_c11_born_emergence(criterion):
    start = time.perf_counter()
    rng = make_rng(11, 0)
    A = random_hermitian(3, rng)
    psi = random_state_vector(3, rng)
    model, _ = strong_measurement_model(A, 50.0)
    n = 10_000
    ch = first_jump_outcomes(model, psi, 0.5, n, base_seed=2026, dt=0.002)
    p = q_probabilities(np.outer(psi, psi.conj()), born_instrument(A))
    freq = np.bincount(ch[ch >= 0], minlength=len(p)) / n
    bound = 5 * np.sqrt(p * (1 - p) / n)
    dev = np.abs(freq - p)
    elapsed = time.perf_counter() - start
    criterion(11, bool(np.all(ch >= 0) and np.all(dev <= bound)),
              f"1e4 trajectories: frequencies {np.round(freq, 4).tolist()} vs Born {np.round(p, 4).tolist()}; "
              f"max deviation / bound {np.max(dev / bound):.2f} (<= 1); {elapsed:.2f} s")


def test_c12_bistable(criterion):
    start = time.perf_counter()
    r = bistable_selection(BistableModel(), 30.0, 10_000, base_seed=2026)
    frac = r.left / r.n_runs
    elapsed = time.perf_counter() - start
    criterion(12, 0.475 <= frac <= 0.525 and r.undecided_fraction < 0.01,
              f"1e4 runs: left {frac:.4f} (in [0.475, 0.525]), undecided {r.undecided_fraction:.2%} (< 1%); "
              f"{elapsed:.2f} s")


def test_c13_grand_canonical(criterion):
    worst_occ, worst_res = 0.0, 0.0
    H, N = np.diag([0.0, 1.0]), np.diag([0.0, 1.0])
    for eps in (0.5, 1.0, 2.0):
        for mu in (-1.0, 0.0, 0.5, 1.0, 2.0):
            for T in (0.1, 0.5, 2.0):
                Hs = eps * H
                state, P = grand_canonical(Hs, N, T, mu, V=1.0)
                occ = q_expectation(state.rho, N)
                worst_occ = max(worst_occ, abs(occ - 1 / (np.exp((eps - mu) / T) + 1)))
                worst_res = max(worst_res, abs(euler_residual(state, Hs, [(-P, np.eye(2)), (mu, N)], T)))
    criterion(13, worst_occ <= 1e-10 and worst_res <= 1e-9,
              f"two-level model over 45 (eps, mu, T): occupation error {worst_occ:.1e} (<= 1e-10); "
              f"Euler residual {worst_res:.1e} (<= 1e-9)")


def test_c14_determinism(criterion, tmp_path):
    start = time.perf_counter()
    mismatched, compared = [], 0
    for kind in KINDS:
        cfg = tmp_path / f"{kind}.toml"
        cfg.write_text(f'kind = "{kind}"\nseed = 20261018\n')
        for run in ("a", "b"):
            code = cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / run / kind)])
            if code != 0:
                mismatched.append(f"{kind} (exit {code})")
        manifest = json.loads((tmp_path / "a" / f"{kind}.manifest.json").read_text())
        for entry in manifest["outputs"]:
            compared += 1
            if (tmp_path / "a" / entry["file"]).read_bytes() != (tmp_path / "b" / entry["file"]).read_bytes():
                mismatched.append(entry["file"])
    elapsed = time.perf_counter() - start
    criterion(14, not mismatched and compared > 0,
              f"{len(KINDS)} kinds at default parameters, {compared} files byte-identical across reruns"
              + (f"; mismatched: {', '.join(mismatched)}" if mismatched else "") + f"; {elapsed:.2f} s")
