"""Declarative experiment kinds run by the command line tool.

Each kind declares its parameters (type, default, range) and a runner that
returns named outputs: :class:`~thermalqm.io.Table` objects become CSV files,
dicts become JSON documents.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import qcore, stochastic
from .dynamics import hybrid, koopman
from .io import Table, frequency_table, matrix_to_json
from .measure import test_state
from .rng import make_rng
from .stokes import linear_polarization, malus_sweep, sliced_medium_evolution
from .tomography import EXACT, measure_suite, reconstruct_state_report, standard_test_suite

# stream reserved for drawing random "true" states, far from per-test/per-trajectory streams
TRUTH_STREAM = 1 << 40


@dataclass(frozen=True)
class Param:
    type: str  # int | float | str | bool | int-list | float-list
    default: object
    lo: float | None = None
    hi: float | None = None
    choices: tuple | None = None
    help: str = ""

    def check(self, name: str, value) -> tuple[object, list[str]]:
        where = f"parameters.{name}"
        scalar = self.type.split("-")[0]
        if self.type.endswith("-list"):
            if not isinstance(value, list) or not value:
                return value, [f"{where}: expected a non-empty list of {scalar}s"]
            out, errs = [], []
            for i, v in enumerate(value):
                v, e = self._scalar(f"{where}[{i}]", scalar, v)
                out.append(v)
                errs += e
            return out, errs
        return self._scalar(where, scalar, value)

    def _scalar(self, where: str, scalar: str, v) -> tuple[object, list[str]]:
        if scalar == "bool":
            return v, [] if isinstance(v, bool) else [f"{where}: expected true or false"]
        if scalar == "str":
            if not isinstance(v, str):
                return v, [f"{where}: expected a string"]
            if self.choices and v not in self.choices:
                return v, [f"{where}: must be one of {', '.join(self.choices)}; got {v!r}"]
            return v, []
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            return v, [f"{where}: expected {'an integer' if scalar == 'int' else 'a number'}"]
        if scalar == "int":
            if isinstance(v, float):
                return v, [f"{where}: expected an integer, got {v!r}"]
        else:
            v = float(v)
            if not math.isfinite(v):
                return v, [f"{where}: must be finite"]
        if self.lo is not None and v < self.lo:
            return v, [f"{where}: must be >= {self.lo}; got {v!r}"]
        if self.hi is not None and v > self.hi:
            return v, [f"{where}: must be <= {self.hi}; got {v!r}"]
        return v, []


@dataclass(frozen=True)
class Kind:
    description: str
    params: dict[str, Param]
    run: Callable[[dict, int, int], dict]
    stochastic: bool = False
    extra_checks: Callable[[dict], list[str]] | None = field(default=None)


def _tomography(p: dict, seed: int, workers: int) -> dict:
    N = p["dim"]
    rng = make_rng(seed, TRUTH_STREAM)
    truth = qcore.random_density(N, rng, rank=1 if p["state"] == "random-pure" else None)
    n = EXACT if p["exact"] else p["samples"]
    suite = standard_test_suite(N)
    table = measure_suite(truth, suite, n, seed)
    rho, moved = reconstruct_state_report(table, N)
    return {
        "frequencies": frequency_table(table),
        "state": {
            "reconstructed": matrix_to_json(rho.entries),
            "truth": matrix_to_json(truth),
            "trace_distance": qcore.trace_distance(rho.entries, truth),
            "projection_shift": moved,
            "sample_size": "exact" if n == EXACT else n,
        },
    }


def _malus(p: dict, seed: int, workers: int) -> dict:
    psi = linear_polarization(p["polarization_angle"])
    angles = [math.pi * k / p["n_angles"] for k in range(p["n_angles"])]
    intensity = malus_sweep(psi, angles)
    rows, worst = [], 0.0
    for a, I in zip(angles, intensity):
        born = test_state(linear_polarization(a), psi)
        cos2 = math.cos(a - p["polarization_angle"]) ** 2
        worst = max(worst, abs(I - cos2), abs(I - born))
        rows.append((a, float(I), born, cos2))
    cols = [("angle", "float", "polarizer angle [rad]"), ("intensity", "float", "transmitted intensity"),
            ("born_probability", "float", "|phi^* psi|^2 from the binary test"),
            ("cos2", "float", "closed-form cos^2 of the relative angle")]
    return {"sweep": Table(cols, rows), "summary": {"max_residual": worst, "n_angles": len(angles)}}


def _sliced(p: dict, seed: int, workers: int) -> dict:
    amp = p["amplitude"]

    def H(t):
        return amp * math.sin(t) * qcore.SIGMA_X

    psi0 = np.array([1.0, 0.0], dtype=complex)
    rows, prev = [], None
    for n in p["slices"]:
        run = sliced_medium_evolution(H, psi0, p["t_end"], n, ref_refine=p["ref_refine"])
        ratio = run.error / prev if prev else float("nan")
        rows.append((n, run.error, ratio))
        prev = run.error
    cols = [("n_slices", "int", "number of thin layers"), ("error", "float", "distance to the reference state"),
            ("ratio", "float", "error relative to the previous row")]
    return {"convergence": Table(cols, rows)}


def _hybrid(p: dict, seed: int, workers: int) -> dict:
    model = hybrid.spin_boson_model(p["omega"], p["coupling"], p["delta"])
    rho0 = np.diag([1.0, 0.0]).astype(complex)
    obs = {"sigma_x": lambda pp, qq: qcore.SIGMA_X, "sigma_z": lambda pp, qq: qcore.SIGMA_Z}
    rows, prev, traj = [], None, None
    for dt in sorted(p["dts"], reverse=True):
        n = int(round(p["t_end"] / dt))
        traj = hybrid.hybrid_trajectory(hybrid.HybridState(p["q0"], p["p0"], rho0), model, dt, n, obs)
        drift = float(np.max(np.abs(traj.energy - traj.energy[0])))
        rows.append((dt, n, drift, prev / drift if prev else float("nan"),
                     float(np.max(np.abs(traj.trace - 1.0)))))
        prev = drift
    ts = Table([("t", "float", "time"), ("q", "float", "classical position"), ("p", "float", "classical momentum"),
                ("sigma_x", "float", "<sigma_x>"), ("sigma_z", "float", "<sigma_z>"),
                ("energy", "float", "<H(p, q)>"), ("trace", "float", "Tr rho")],
               [(t, q[0], pp[0], sx, sz, e, tr) for t, q, pp, sx, sz, e, tr in
                zip(traj.t, traj.q, traj.p, traj.observables["sigma_x"], traj.observables["sigma_z"],
                    traj.energy, traj.trace)])
    conv = Table([("dt", "float", "time step"), ("n_steps", "int", "steps taken"),
                  ("energy_drift", "float", "max |<H>(t) - <H>(0)|"),
                  ("drift_ratio", "float", "drift at the previous (larger) dt divided by this drift"),
                  ("trace_error", "float", "max |Tr rho - 1|")], rows)
    return {"timeseries": ts, "convergence": conv}


def _koopman(p: dict, seed: int, workers: int) -> dict:
    rows = koopman.harmonic_convergence(sorted(p["grids"]), p["L"], p["t_end"], p["dt"],
                                        p["q0"], p["p0"], p["sigma"], p["leak_tol"])
    conv = Table([("n_grid", "int", "cells per axis"), ("err_q", "float", "max |<q> - q_exact|"),
                  ("err_p", "float", "max |<p> - p_exact|"), ("density_l2_error", "float", "final density error"),
                  ("mass_error", "float", "max |mass - 1|"), ("negative_mass", "float", "max negative mass")],
                 [(r.n_grid, r.err_q, r.err_p, r.density_error, r.mass_error, r.negative_mass) for r in rows])
    run = rows[-1].run
    ts = Table([("t", "float", "time"), ("mean_q", "float", "<q> on the finest grid"),
                ("mean_p", "float", "<p> on the finest grid"), ("mass", "float", "total probability")],
               list(zip(run.t, run.mean_q, run.mean_p, run.mass)))
    return {"convergence": conv, "timeseries": ts}


def _lindblad(p: dict) -> tuple[stochastic.LindbladModel, np.ndarray]:
    name = p["model"]
    if name == "decay":
        return stochastic.decay_model(p["gamma"]), np.array([0, 1], dtype=complex)
    if name == "driven-damped":
        return stochastic.driven_damped_model(p["omega"], p["gamma"]), np.array([1, 0], dtype=complex)
    if name == "repumped":
        return stochastic.repumped_emitter_model(p["gamma"], p["pump"]), np.array([1, 0], dtype=complex)
    return stochastic.poisson_source_model(p["gamma"]), np.array([1], dtype=complex)


def _pdp(p: dict, seed: int, workers: int) -> dict:
    model, psi0 = _lindblad(p)
    t_end = p["warmup"] + p["window"]
    trajs = stochastic.run_trajectories(model, psi0, t_end, p["n_traj"], seed, p["dt"],
                                        max(1, int(round(t_end / p["dt"]))), workers)
    events = [(i, t, k) for i, tr in enumerate(trajs) for t, k in tr.events]
    # channel 0 is the emission channel of every model; re-pumping jumps are not detected
    counts = np.array([sum(1 for t, k in tr.events if k == 0 and t >= p["warmup"]) for tr in trajs])
    hist = np.bincount(counts)
    mean = float(counts.mean())
    var = float(counts.var(ddof=1)) if len(counts) > 1 else 0.0
    return {
        "events": Table([("trajectory", "int", "trajectory index (= random stream)"),
                         ("time", "float", "event time"), ("channel", "int", "jump channel")], events),
        "histogram": Table([("count", "int", "detections in the window"), ("windows", "int", "number of windows")],
                           [(n, int(c)) for n, c in enumerate(hist)]),
        "summary": {"mean": mean, "variance": var, "fano": var / mean if mean > 0 else None,
                    "n_traj": p["n_traj"], "window": p["window"], "warmup": p["warmup"]},
    }


def _ensemble(p: dict, seed: int, workers: int) -> dict:
    model, psi0 = _lindblad(p)
    ens = stochastic.ensemble_average(model, psi0, p["t_end"], p["n_traj"], seed, p["dt"],
                                      p["sample_every"], workers)
    master = stochastic.master_integrate(model, np.outer(psi0, psi0.conj()), p["t_end"], p["dt"])
    ref = master.rho[::p["sample_every"]]
    worst = float(stochastic.ensemble_z_scores(ens, ref).max())
    rows = []
    for t, m, se, r in zip(ens.t, ens.mean, ens.stderr, ref):
        diffs = [(m[1, 1].real, se[1, 1].real, r[1, 1].real),
                 (m[0, 1].real, se[0, 1].real, r[0, 1].real),
                 (m[0, 1].imag, se[0, 1].imag, r[0, 1].imag)]
        rows.append((t,) + tuple(x for d in diffs for x in d))
    cols = [("t", "float", "time")]
    for name in ("rho11", "re_rho01", "im_rho01"):
        cols += [(f"mean_{name}", "float", f"ensemble mean of {name}"),
                 (f"se_{name}", "float", f"standard error of {name}"),
                 (f"master_{name}", "float", f"master-equation value of {name}")]
    return {"comparison": Table(cols, rows),
            "summary": {"max_z": worst, "within_3se": bool(worst <= 3.0), "n_traj": p["n_traj"],
                        "master_trace_drift": master.trace_drift}}


def _bistable(p: dict, seed: int, workers: int) -> dict:
    model = stochastic.BistableModel(p["a"], p["x0"], p["damping"], p["noise"], p["mass"], p["tilt"])
    res = stochastic.bistable_selection(model, p["t_end"], p["n_runs"], seed, p["dt"], p["x_start"])
    half = 0.5 * model.x0
    branch = np.where(res.final_x < -half, "left", np.where(res.final_x > half, "right", "undecided"))
    return {
        "runs": Table([("run", "int", "run index (= random stream)"), ("final_x", "float", "position at t_end"),
                       ("branch", "str", "left, right or undecided")],
                      list(zip(range(res.n_runs), res.final_x, branch))),
        "relaxation": Table([("t", "float", "time"), ("decided_fraction", "float", "fraction with |x| > x0/2")],
                            list(zip(res.t, res.decided))),
        "summary": {"left": res.left, "right": res.right, "undecided": res.undecided,
                    "left_fraction": res.left_fraction, "undecided_fraction": res.undecided_fraction},
    }


def _spectrum(p: dict, seed: int, workers: int) -> dict:
    rows, holds = [], 0
    for i in range(p["n_pairs"]):
        rng = make_rng(seed, i)
        dim = int(rng.integers(p["dim_min"], p["dim_max"] + 1))
        rho = qcore.random_density(dim, rng)
        A = qcore.random_hermitian(dim, rng)
        mean = qcore.q_expectation(rho, A)
        sigma = qcore.q_uncertainty(rho, A)
        lam, gap = qcore.nearest_spectral_value(rho, A)
        ok = gap <= sigma + qcore.DEFAULT_TOL.theorem
        holds += ok
        rows.append((i, dim, mean, sigma, lam, gap, ok))
    cols = [("pair", "int", "index (= random stream)"), ("dim", "int", "Hilbert space dimension"),
            ("expectation", "float", "<A>"), ("uncertainty", "float", "sigma_A"),
            ("nearest_eigenvalue", "float", "eigenvalue closest to <A>"),
            ("distance", "float", "|lambda - <A>|"), ("holds", "bool", "distance <= sigma_A + tolerance")]
    return {"pairs": Table(cols, rows), "summary": {"n_pairs": p["n_pairs"], "holds": holds,
                                                  "fraction": holds / p["n_pairs"]}}


def _gibbs(p: dict, seed: int, workers: int) -> dict:
    eps, T, V, kbar = p["epsilon"], p["T"], p["V"], p["kbar"]
    H = np.diag([0.0, eps]).astype(complex)
    Nop = np.diag([0.0, 1.0]).astype(complex)
    rows = []
    for mu in p["mu"]:
        state, P = qcore.grand_canonical(H, Nop, T, mu, V, kbar)
        occ = qcore.q_expectation(state.rho, Nop)
        exact = 1.0 / (math.exp((eps - mu) / (kbar * T)) + 1.0)
        res = qcore.euler_residual(state, H, [(-P, V * np.eye(2)), (mu, Nop)], T)
        rows.append((mu, occ, exact, abs(occ - exact), res, P))
    cols = [("mu", "float", "chemical potential"), ("occupation", "float", "<N>"),
            ("closed_form", "float", "1 / (exp((eps - mu)/kT) + 1)"), ("abs_error", "float", "|<N> - closed form|"),
            ("euler_residual", "float", "<H> - T<S> + PV - mu<N>"), ("pressure", "float", "P from Tr rho = 1")]
    return {"occupation": Table(cols, rows)}


def _koopman_checks(p: dict) -> list[str]:
    return [f"parameters.grids: grid size {g} must be even" for g in p["grids"] if g % 2]


KINDS: dict[str, Kind] = {
    "tomography": Kind("reconstruct a random state from binary test frequencies", {
        "dim": Param("int", 2, 2, 8),
        "samples": Param("int", 100000, 1),
        "exact": Param("bool", False),
        "state": Param("str", "random-mixed", choices=("random-mixed", "random-pure")),
    }, _tomography, stochastic=True),
    "malus": Kind("polarizer intensity sweep against the Born probability", {
        "n_angles": Param("int", 36, 1, 100000),
        "polarization_angle": Param("float", 0.0),
    }, _malus),
    "sliced-medium": Kind("thin-slice product against the exact propagator", {
        "slices": Param("int-list", [100, 200, 400], 1),
        "t_end": Param("float", math.pi, 1e-12),
        "amplitude": Param("float", 1.0),
        "ref_refine": Param("int", 10, 1),
    }, _sliced),
    "hybrid": Kind("spin-boson mixed dynamics with an energy-drift convergence table", {
        "dts": Param("float-list", [0.1, 0.05, 0.025], 1e-9),
        "t_end": Param("float", 10.0, 1e-12),
        "omega": Param("float", 1.0, 1e-12),
        "coupling": Param("float", 0.5),
        "delta": Param("float", 1.0),
        "q0": Param("float", 1.0),
        "p0": Param("float", 0.0),
    }, _hybrid),
    "koopman": Kind("phase-space density of the harmonic oscillator under grid refinement", {
        "grids": Param("int-list", [128, 256], 16, 1024),
        "L": Param("float", 4.0, 1e-12),
        "t_end": Param("float", math.pi / 2, 1e-12),
        "dt": Param("float", 0.05, 1e-9),
        "q0": Param("float", 1.0),
        "p0": Param("float", 0.0),
        "sigma": Param("float", 0.2, 1e-12),
        "leak_tol": Param("float", 1e-6, 0.0),
    }, _koopman, extra_checks=_koopman_checks),
    "pdp": Kind("quantum-jump trajectories: event log and count histogram", {
        "model": Param("str", "repumped", choices=("decay", "driven-damped", "repumped", "poisson")),
        "gamma": Param("float", 1.0, 0.0),
        "omega": Param("float", 2.0),
        "pump": Param("float", 100.0, 0.0),
        "n_traj": Param("int", 1000, 1),
        "window": Param("float", 2.0, 1e-12),
        "warmup": Param("float", 0.1, 0.0),
        "dt": Param("float", 0.0025, 1e-9),
    }, _pdp, stochastic=True),
    "ensemble": Kind("trajectory ensemble against the master equation", {
        "model": Param("str", "driven-damped", choices=("decay", "driven-damped")),
        "gamma": Param("float", 1.0, 0.0),
        "omega": Param("float", 2.0),
        "n_traj": Param("int", 2000, 1),
        "t_end": Param("float", 5.0, 1e-12),
        "dt": Param("float", 0.01, 1e-9),
        "sample_every": Param("int", 10, 1),
    }, _ensemble, stochastic=True),
    "bistable": Kind("noisy double-well runs from the barrier top", {
        "n_runs": Param("int", 10000, 1),
        "t_end": Param("float", 30.0, 1e-12),
        "a": Param("float", 1.0, 1e-12),
        "x0": Param("float", 1.0, 1e-12),
        "damping": Param("float", 1.0, 0.0),
        "noise": Param("float", 0.05, 0.0),
        "mass": Param("float", 1.0, 1e-12),
        "tilt": Param("float", 0.0),
        "dt": Param("float", 0.01, 1e-9),
        "x_start": Param("float", 0.0),
    }, _bistable, stochastic=True),
    "spectrum-sweep": Kind("spectral bound |lambda - <A>| <= sigma_A on random pairs", {
        "n_pairs": Param("int", 1000, 1),
        "dim_min": Param("int", 2, 1, 64),
        "dim_max": Param("int", 8, 1, 64),
    }, _spectrum, stochastic=True,
        extra_checks=lambda p: ["parameters.dim_max: must be >= dim_min"] if p["dim_max"] < p["dim_min"] else []),
    "gibbs": Kind("grand-canonical two-level occupation and Euler identity", {
        "epsilon": Param("float", 1.0),
        "mu": Param("float-list", [-1.0, 0.0, 0.5, 1.0, 2.0]),
        "T": Param("float", 0.5, 1e-12),
        "V": Param("float", 1.0, 1e-12),
        "kbar": Param("float", 1.0, 1e-12),
    }, _gibbs),
}

