import math

import numpy as np
import pytest

from drivencavity.hilbert import (
    DensityMatrix,
    HermiticityError,
    HilbertLayout,
    annihilation,
    embed,
    identity,
    sigma_plus,
    trace_distance,
)
from drivencavity.model import (
    Generator,
    SystemConfig,
    apply_generator,
    build_effective_atomic,
    build_generator,
    derived_params,
    initial_state,
    thermal_field_matrix,
)
from drivencavity.dynamics import (
    ConvergenceError,
    DegenerateSteadyStateError,
    evolve,
    liouvillian_matrix,
    record,
    residual_norm,
    steady_state,
    steady_state_raw,
)

rng = np.random.default_rng(23)


def number_op(cfg):
    lay = cfg.layout()
    a = annihilation(cfg.n_max)
    return embed(a.dag() @ a, lay.field_factor(), lay)


class TestEvolve:
    def test_photon_decay_against_exponential(self):
        # bare cavity: <n>(t) = n0 exp(-2 kappa t)
        cfg = SystemConfig(n_atoms=1, g=0.0, epsilon=0.0, n_max=6)
        gen = build_generator(cfg)
        rho0 = initial_state(cfg, "g", field=4)
        t = np.linspace(0.0, 3.0, 31)
        traj = evolve(gen, rho0, t, tol=1e-10)
        n_t = record(traj, number_op(cfg))
        assert np.max(np.abs(n_t - 4.0 * np.exp(-2.0 * t))) < 1e-6

    def test_undamped_rabi_oscillation(self):
        # H = Omega S+ + h.c. with no dissipator: P_e(t) = sin^2(|Omega| t)
        cfg = SystemConfig(n_atoms=1, g=0.01, epsilon=10.0, frame="effective-atomic")
        h = build_effective_atomic(cfg).hamiltonian
        gen = Generator(h, ())
        rho0 = initial_state(cfg, "g")
        t = np.linspace(0.0, 40.0, 60)
        traj = evolve(gen, rho0, t, tol=1e-10)
        omega = abs(derived_params(cfg).omega_eff)
        p_e = np.array([s.matrix[0, 0].real for s in traj.states])
        assert np.max(np.abs(p_e - np.sin(omega * t) ** 2)) < 1e-6

    def test_observable_recording_matches_stored_states(self):
        cfg = SystemConfig(n_atoms=1, g=0.2, epsilon=0.5, n_max=4)
        gen = build_generator(cfg)
        rho0 = initial_state(cfg, "g")
        t = np.linspace(0.0, 5.0, 11)
        nop = number_op(cfg)
        traj = evolve(gen, rho0, t, tol=1e-9, observables={"n": nop})
        assert np.allclose(traj.observables["n"], record(traj, nop), atol=1e-12)

    def test_store_states_false_keeps_observables_only(self):
        cfg = SystemConfig(n_atoms=1, g=0.2, epsilon=0.5, n_max=4)
        gen = build_generator(cfg)
        traj = evolve(gen, initial_state(cfg, "g"), np.linspace(0, 2, 5),
                      store_states=False, observables={"n": number_op(cfg)})
        assert traj.states == []
        assert traj.observables["n"].shape == (5,)
        with pytest.raises(ValueError):
            record(traj, number_op(cfg))

    def test_invariants_tracked(self):
        cfg = SystemConfig(n_atoms=2, g=0.3, epsilon=1.0, n_max=5)
        gen = build_generator(cfg)
        traj = evolve(gen, initial_state(cfg, "gg"), np.linspace(0, 20, 21), tol=1e-9)
        assert traj.stats.max_trace_drift < 1e-8
        assert traj.stats.max_herm_asym < 1e-8
        assert traj.stats.min_eigenvalue > -1e-8
        assert traj.stats.n_rhs_evals > 0

    def test_halving_tolerance_tightens_the_result(self):
        cfg = SystemConfig(n_atoms=1, g=0.3, epsilon=1.0, n_max=5)
        gen = build_generator(cfg)
        rho0 = initial_state(cfg, "e")
        t = [0.0, 10.0]
        coarse = evolve(gen, rho0, t, tol=1e-6)
        fine = evolve(gen, rho0, t, tol=1e-10)
        dist = trace_distance(coarse.states[-1], fine.states[-1])
        assert dist < coarse.stats.error_estimate
        finer = evolve(gen, rho0, t, tol=1e-8)
        assert trace_distance(finer.states[-1], fine.states[-1]) < dist + 1e-12

    def test_bad_grid_rejected(self):
        cfg = SystemConfig(n_atoms=1, g=0.1, n_max=2)
        gen = build_generator(cfg)
        rho0 = initial_state(cfg, "g")
        with pytest.raises(ValueError):
            evolve(gen, rho0, [0.0, 1.0, 1.0])
        with pytest.raises(ValueError):
            evolve(gen, rho0, [0.0, 1.0], tol=0.0)


class TestRecord:
    def test_rejects_non_hermitian_observable(self):
        cfg = SystemConfig(n_atoms=1, g=0.1, n_max=2)
        gen = build_generator(cfg)
        traj = evolve(gen, initial_state(cfg, "g"), [0.0, 1.0])
        lay = cfg.layout()
        sp = embed(sigma_plus(), lay.atom_factor(1), lay)
        with pytest.raises(HermiticityError):
            record(traj, sp)

    def test_identity_records_unit_trace(self):
        cfg = SystemConfig(n_atoms=1, g=0.1, epsilon=0.4, n_max=3)
        gen = build_generator(cfg)
        traj = evolve(gen, initial_state(cfg, "g"), np.linspace(0, 4, 9))
        ones = record(traj, identity(cfg.layout()))
        assert np.max(np.abs(ones - 1.0)) < 1e-10


class TestLiouvillianMatrix:
    def test_matches_direct_application(self):
        cfg = SystemConfig(n_atoms=1, g=0.3, epsilon=0.6, delta=0.2, n_max=3)
        gen = build_generator(cfg)
        d = gen.layout.dim
        a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        m = a @ a.conj().T
        m /= np.trace(m)
        direct = apply_generator(gen, m).matrix.ravel()
        for sparse in (False, True):
            L = liouvillian_matrix(gen, sparse=sparse)
            assert np.max(np.abs(L @ m.ravel() - direct)) < 1e-12


class TestSteadyState:
    def test_driven_cavity_amplitude(self):
        # decoupled driven cavity: <a>_ss = -i eps / (kappa + i delta)
        cfg = SystemConfig(n_atoms=1, g=0.0, epsilon=0.5, delta=0.7, n_max=10,
                           frame="lab-rotating")
        gen = build_generator(cfg)
        res = steady_state(gen, rho0=initial_state(cfg, "g"), residual_tol=1e-10)
        lay = cfg.layout()
        a = embed(annihilation(cfg.n_max), lay.field_factor(), lay).matrix
        a_ss = np.trace(a @ res.rho_ss.matrix)
        expected = -1j * 0.5 / (1.0 + 0.7j)
        assert abs(a_ss - expected) < 1e-6
        assert res.residual < 1e-10

    def test_thermal_occupancy_sparse_route(self):
        # field-only thermal contact: <n>_ss = n_th (dim 41 exercises the sparse solve)
        n_th, n_max = 0.8, 40
        a = annihilation(n_max).matrix
        h = np.zeros((n_max + 1, n_max + 1), dtype=complex)
        m, res, elapsed, used = steady_state_raw(
            h, [(a, n_th + 1.0), (a.conj().T, n_th)], residual_tol=1e-9)
        assert used == "nullspace"
        n_ss = np.sum(np.arange(n_max + 1) * np.diag(m).real)
        assert abs(n_ss - n_th) < 1e-8
        assert np.max(np.abs(m - thermal_field_matrix(n_th, n_max))) < 1e-9

    def test_nullspace_matches_long_time_integration(self):
        cfg = SystemConfig(n_atoms=1, g=0.3, n_th=0.5, n_max=10, frame="thermal")
        gen = build_generator(cfg)
        rho0 = initial_state(cfg, "e", field="vacuum")
        direct = steady_state(gen, method="nullspace", residual_tol=1e-9)
        integrated = steady_state(gen, rho0=rho0, method="long-time-integration",
                                  residual_tol=1e-8)
        assert trace_distance(direct.rho_ss, integrated.rho_ss) < 1e-6

    def test_initial_state_invariance(self):
        cfg = SystemConfig(n_atoms=1, g=0.4, n_th=0.3, n_max=8, frame="thermal")
        gen = build_generator(cfg)
        tol = 1e-8
        outs = []
        for atoms, fld in (("e", "vacuum"), ("g", 2)):
            r = steady_state(gen, rho0=initial_state(cfg, atoms, field=fld),
                             method="long-time-integration", residual_tol=tol)
            outs.append(r.rho_ss)
        assert trace_distance(outs[0], outs[1]) < 10 * tol

    def test_degenerate_manifold_detected(self):
        # undriven two-atom cavity conserves the singlet weight: no unique fixed point
        cfg = SystemConfig(n_atoms=2, g=0.1, epsilon=0.0, n_max=2)
        gen = build_generator(cfg)
        with pytest.raises(DegenerateSteadyStateError):
            steady_state(gen, method="nullspace")

    def test_degenerate_fallback_preserves_singlet_weight(self):
        cfg = SystemConfig(n_atoms=2, g=0.1, epsilon=0.0, n_max=2)
        gen = build_generator(cfg)
        singlet = np.array([0.0, 1.0, -1.0, 0.0]) / math.sqrt(2.0)
        rho0 = initial_state(cfg, singlet)
        res = steady_state(gen, rho0=rho0, residual_tol=1e-9)
        assert res.method == "long-time-integration"
        # the dark singlet (with empty cavity) never decays
        assert trace_distance(res.rho_ss, rho0) < 1e-7

    def test_time_budget_enforced(self):
        cfg = SystemConfig(n_atoms=1, g=0.01, epsilon=1.0, n_max=3)
        gen = build_generator(cfg)
        with pytest.raises(ConvergenceError):
            steady_state(gen, rho0=initial_state(cfg, "e"),
                         method="long-time-integration",
                         residual_tol=1e-12, t_max=0.5)

    def test_residual_norm_zero_on_fixed_point(self):
        cfg = SystemConfig(n_atoms=1, g=0.2, epsilon=0.4, n_max=6)
        gen = build_generator(cfg)
        res = steady_state(gen, residual_tol=1e-10)
        assert residual_norm(gen, res.rho_ss) < 1e-10
