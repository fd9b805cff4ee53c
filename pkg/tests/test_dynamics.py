import numpy as np
import pytest
import scipy.linalg as sla

from thermalqm.dynamics import (
    BoundaryLeakError, HybridModel, HybridState, SingularGramError, classical_model, coherent_family,
    dirac_frenkel_reduce, dirac_spin_hamiltonian, dirac_spin_model, ehrenfest_rhs, energy,
    full_coordinate_family, gaussian_density, harmonic, harmonic_convergence, harmonic_grad,
    hybrid_step, hybrid_step_pure, hybrid_trajectory, koopman_build, koopman_evolve,
    oscillator_hamiltonian, oscillator_position, spin_boson_model,
)
from thermalqm.dynamics.koopman import hermiticity_residual
from thermalqm.dynamics.variational import CoherentFamily, oscillator_momentum
from thermalqm.qcore import SIGMA_X, SIGMA_Z, random_density, random_hermitian, random_state_vector


def rk4_flow(f, y, t_end, h):
    # plain RK4 on a state array, used as the classical oracle
    n = int(round(t_end / h))
    for _ in range(n):
        k1 = f(y)
        k2 = f(y + h / 2 * k1)
        k3 = f(y + h / 2 * k2)
        k4 = f(y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def pure_state(psi):
    return np.outer(psi, psi.conj())


class TestHybridStep:
    def test_decoupled_sectors(self):
        Hq = random_hermitian(3, np.random.default_rng(0))
        zero = np.zeros((1, 3, 3))
        model = HybridModel(lambda p, q: Hq, lambda p, q: zero, lambda p, q: zero)
        rho0 = random_density(3, np.random.default_rng(1))
        s = HybridState([0.4], [-0.2], rho0)
        for _ in range(10):
            s = hybrid_step(s, model, 0.1)
        np.testing.assert_array_equal(s.q, [0.4])
        np.testing.assert_array_equal(s.p, [-0.2])
        U = sla.expm(-1j * Hq)
        np.testing.assert_allclose(s.rho, U @ rho0 @ U.conj().T, atol=1e-12)
        assert energy(s, model) == pytest.approx(np.trace(rho0 @ Hq).real, abs=1e-12)

    def test_classical_harmonic_oscillator(self):
        model = classical_model(lambda p, q: 0.5 * (p[0] ** 2 + q[0] ** 2), lambda p, q: p, lambda p, q: q)
        errs = []
        for dt in (0.02, 0.01):
            tr = hybrid_trajectory(HybridState([1.0], [0.0], np.eye(1)), model, dt, int(round(2 / dt)))
            errs.append(max(np.max(np.abs(tr.q[:, 0] - np.cos(tr.t))), np.max(np.abs(tr.p[:, 0] + np.sin(tr.t)))))
        assert errs[0] < 1e-3
        assert 3 < errs[0] / errs[1] < 5

    def test_rejects_nonpositive_dt(self):
        model = spin_boson_model()
        with pytest.raises(ValueError):
            hybrid_step(HybridState([0.0], [0.0], np.eye(2) / 2), model, 0.0)

    def test_energy_drift_second_order(self):
        model = spin_boson_model(omega=1.0, coupling=0.5, delta=1.0)
        s0 = HybridState([1.0], [0.0], np.diag([1.0, 0.0]))
        drifts = []
        for dt in (1e-2, 5e-3, 2.5e-3):
            tr = hybrid_trajectory(s0, model, dt, int(round(2 / dt)))
            drifts.append(np.max(np.abs(tr.energy - tr.energy[0])))
        for a, b in zip(drifts, drifts[1:]):
            assert 3 <= a / b <= 5

    def test_trace_and_spectrum_preserved(self):
        model = spin_boson_model()
        rho0 = random_density(2, np.random.default_rng(3))
        tr = hybrid_trajectory(HybridState([0.5], [0.5], rho0), model, 0.05, 200)
        assert np.max(np.abs(tr.trace - 1)) <= 1e-12
        np.testing.assert_allclose(np.linalg.eigvalsh(tr.final.rho), np.linalg.eigvalsh(rho0), atol=1e-12)

    def test_rank_one_preserved_and_matches_pure_evolution(self):
        model = spin_boson_model()
        psi = random_state_vector(2, np.random.default_rng(4))
        s = HybridState([1.0], [0.0], pure_state(psi))
        q, p = np.array([1.0]), np.array([0.0])
        dt, T = 0.01, 1.0
        for _ in range(int(T / dt)):
            s = hybrid_step(s, model, dt)
            q, p, psi = hybrid_step_pure(q, p, psi, model, dt)
        w = np.linalg.eigvalsh(s.rho)
        assert w[0] <= 1e-9
        np.testing.assert_allclose(s.rho, pure_state(psi), atol=1e-9 * T)
        np.testing.assert_allclose(s.q, q, atol=1e-9)

    def test_blow_up_detected(self):
        model = classical_model(lambda p, q: 0.0, lambda p, q: np.array([np.inf]), lambda p, q: np.zeros(1))
        with pytest.raises(FloatingPointError):
            hybrid_step(HybridState([0.0], [0.0], np.eye(1)), model, 0.1)

    def test_gradient_self_check(self):
        model = spin_boson_model()
        assert model.check_gradients([0.3], [0.7]) < 1e-6
        bad = HybridModel(model.H, model.grad_p, lambda p, q: 2 * model.grad_q(p, q))
        with pytest.raises(ValueError):
            bad.check_gradients([0.3], [0.7])


class TestEhrenfest:
    def setup_method(self):
        self.model = spin_boson_model(omega=1.2, coupling=0.7, delta=0.9)
        self.state = HybridState([0.6], [-0.3], random_density(2, np.random.default_rng(6)))

    def test_energy_rate_is_zero(self):
        m = self.model
        assert ehrenfest_rhs(self.state, m, m.H, m.grad_q, m.grad_p) == pytest.approx(0.0, abs=1e-12)

    def test_identity_rate_is_zero(self):
        zero = lambda p, q: np.zeros((1, 2, 2))
        assert ehrenfest_rhs(self.state, self.model, lambda p, q: np.eye(2), zero, zero) == pytest.approx(0.0, abs=1e-14)

    def test_matches_finite_difference(self):
        def A(p, q):
            return q[0] * SIGMA_X + p[0] ** 2 * SIGMA_Z

        dA_dq = lambda p, q: SIGMA_X[None].astype(complex)
        dA_dp = lambda p, q: (2 * p[0] * SIGMA_Z)[None].astype(complex)
        h = 1e-3
        obs = lambda dt: hybrid_trajectory(self.state, self.model, dt, 1, {"A": A}).observables["A"]
        a0, a1 = obs(h)
        _, a2 = obs(h / 2)
        # Richardson-extrapolated forward difference, O(h^2)
        rate_fd = 2 * (a2 - a0) / (h / 2) - (a1 - a0) / h
        assert rate_fd == pytest.approx(ehrenfest_rhs(self.state, self.model, A, dA_dq, dA_dp), abs=1e-5)

    def test_dimension_mismatch(self):
        zero = lambda p, q: np.zeros((1, 3, 3))
        with pytest.raises(ValueError):
            ehrenfest_rhs(self.state, self.model, lambda p, q: np.eye(3), zero, zero)


class TestDirac:
    def test_rest_frame(self):
        w = np.linalg.eigvalsh(dirac_spin_hamiltonian([0, 0, 0], [0, 0, 0], m=1.5))
        np.testing.assert_allclose(w, [-1.5, -1.5, 1.5, 1.5], atol=1e-14)

    def test_relativistic_dispersion(self):
        w = np.linalg.eigvalsh(dirac_spin_hamiltonian([0, 3, 0], [0, 0, 0], m=4.0))
        np.testing.assert_allclose(w, [-5, -5, 5, 5], atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_hermitian_with_potential_shift(self, seed):
        rng = np.random.default_rng(seed)
        p, q, m, e = rng.normal(size=3), rng.normal(size=3), rng.uniform(0.1, 3), rng.uniform(-2, 2)
        V = lambda x: np.sum(x**2)
        H = dirac_spin_hamiltonian(p, q, m, e, V)
        assert np.max(np.abs(H - H.conj().T)) <= 1e-12
        E = np.sqrt(p @ p + m * m)
        np.testing.assert_allclose(np.linalg.eigvalsh(H), np.array([-E, -E, E, E]) + e * V(q), atol=1e-12)

    def test_hybrid_model_gradients(self):
        model = dirac_spin_model(1.0, e=0.5, V=lambda x: 0.5 * x @ x, grad_V=lambda x: x)
        p, q = np.array([0.3, -0.1, 0.2]), np.array([0.5, 0.4, -0.6])
        assert model.check_gradients(p, q) < 1e-6
        rho = np.eye(4) / 4
        tr = hybrid_trajectory(HybridState(q, p, rho), model, 0.01, 100)
        assert np.max(np.abs(tr.trace - 1)) <= 1e-12


class TestDiracFrenkel:
    def test_full_coordinates_reproduce_schrodinger(self):
        N = 4
        H = random_hermitian(N, np.random.default_rng(2))
        psi0 = random_state_vector(N, np.random.default_rng(3))
        exact = sla.expm(-1j * H) @ psi0
        errs = []
        for dt in (0.02, 0.01):
            run = dirac_frenkel_reduce(full_coordinate_family(N), H, np.concatenate([psi0.real, psi0.imag]), 1.0, dt)
            z = run.z[-1]
            errs.append(np.linalg.norm(z[:N] + 1j * z[N:] - exact))
        assert errs[0] < 1e-6
        assert errs[1] < errs[0]

    def test_coherent_state_traces_classical_circle(self):
        n = 64
        fam = coherent_family(n)
        H = oscillator_hamiltonian(n)
        run = dirac_frenkel_reduce(fam, H, [1.5, 0.5, 0.0], 2 * np.pi, 0.01)
        x = 1.5 * np.cos(run.t) + 0.5 * np.sin(run.t)
        p = -1.5 * np.sin(run.t) + 0.5 * np.cos(run.t)
        assert np.max(np.hypot(run.z[:, 0] - x, run.z[:, 1] - p)) <= 1e-3
        assert np.max(np.abs(run.norm - 1)) <= 1e-8

    def test_coherent_family_tangents_match_finite_differences(self):
        fam = coherent_family(32)
        numeric = CoherentFamily(3, fam.phi)
        z = np.array([0.7, -0.4, 0.3])
        np.testing.assert_allclose(fam.tangents(z), numeric.tangents(z), atol=1e-8)

    def test_coherent_state_means(self):
        fam = coherent_family(64)
        psi = fam.phi(np.array([1.2, -0.8, 0.0]))
        assert np.vdot(psi, oscillator_position(64) @ psi).real == pytest.approx(1.2, abs=1e-10)
        assert np.vdot(psi, oscillator_momentum(64) @ psi).real == pytest.approx(-0.8, abs=1e-10)

    def test_redundant_parameterization_rejected(self):
        fam = CoherentFamily(2, lambda z: np.array([np.cos(z[0] + z[1]), np.sin(z[0] + z[1])], dtype=complex))
        with pytest.raises(SingularGramError):
            dirac_frenkel_reduce(fam, SIGMA_X, [0.1, 0.2], 0.1, 0.01)


class TestKoopman:
    def test_constant_hamiltonian_has_zero_generator(self):
        m = koopman_build(lambda p, q: 3.0 + 0 * p, 2.0, 16)
        assert m.generator.nnz == 0

    @pytest.mark.parametrize("n", [16, 32, 64])
    def test_hermitian_by_construction(self, n):
        m = koopman_build(lambda p, q: 0.5 * p**2 + np.cos(q), 3.0, n)
        assert hermiticity_residual(m) <= 1e-12

    @pytest.mark.parametrize("n", [15, 8])
    def test_rejects_bad_grid(self, n):
        with pytest.raises(ValueError):
            koopman_build(harmonic, 2.0, n)

    def test_uniform_density_is_stationary(self):
        m = koopman_build(harmonic, 3.0, 32, harmonic_grad)
        f = np.full((32, 32), 1.0 / (6.0**2))
        run = koopman_evolve(m, f, 1.0, 0.1, leak_tol=np.inf)
        # the periodic grid [-L, L) is offset by half a cell, so the uniform mean is -h/2
        offset = -m.spacing / 2
        assert np.max(np.abs(run.mean_q - offset)) < 1e-12 and np.max(np.abs(run.mean_p - offset)) < 1e-12
        np.testing.assert_allclose(run.density, f, atol=1e-12)

    def test_rejects_unnormalized_density(self):
        m = koopman_build(harmonic, 3.0, 16, harmonic_grad)
        with pytest.raises(ValueError):
            koopman_evolve(m, np.ones((16, 16)), 1.0, 0.1)

    def test_rotation_on_128_grid(self):
        rows = harmonic_convergence([128])
        r = rows[0].run
        assert abs(r.mean_q[-1]) <= 0.02 and abs(r.mean_p[-1] + 1) <= 0.02
        assert np.max(np.abs(r.mass - 1)) <= 1e-8

    def test_coarse_grid_leaks(self):
        with pytest.raises(BoundaryLeakError):
            harmonic_convergence([64])

    def test_density_error_halves_under_doubling(self):
        a, b = harmonic_convergence([128, 256])
        assert b.density_error <= 0.5 * a.density_error

    def test_quartic_means_converge(self):
        def H(p, q):
            return 0.5 * p**2 + 0.25 * q**4

        # oracle: fine quadrature of the initial Gaussian pushed along RK4 characteristics
        x = 0.2 * np.linspace(-6, 6, 241)
        Q, P = np.meshgrid(1 + x, x, indexing="ij")
        w = np.exp(-(x[:, None] ** 2 + x[None, :] ** 2) / (2 * 0.2**2))
        w = (w / w.sum()).ravel()
        y = rk4_flow(lambda y: np.array([y[1], -y[0] ** 3]), np.array([Q.ravel(), P.ravel()]), 1.0, 0.002)
        mq, mp = w @ y[0], w @ y[1]
        errs = []
        for n in (64, 128, 256):
            m = koopman_build(H, 3.0, n, lambda p, q: (p, q**3))
            run = koopman_evolve(m, gaussian_density(m, 1.0, 0.0, 0.2), 1.0, 0.05, leak_tol=0.1)
            errs.append(np.hypot(run.mean_q[-1] - mq, run.mean_p[-1] - mp))
        for a, b in zip(errs, errs[1:]):
            assert b <= 0.5 * a
        assert errs[-1] < 1e-4
