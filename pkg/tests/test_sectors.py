import math

import numpy as np
import pytest

from drivencavity.hilbert import trace_distance
from drivencavity.model import SystemConfig, build_generator, initial_state
from drivencavity.dynamics import steady_state
from drivencavity.sectors import (
    SectorError,
    coherence_block_gap,
    singlet_weight,
    two_atom_steady_state,
)

SINGLET = np.array([0.0, 1.0, -1.0, 0.0]) / math.sqrt(2.0)


class TestSingletWeight:
    def test_product_states_have_no_singlet_component(self):
        assert singlet_weight("gg") == 0.0
        assert singlet_weight("ee") == 0.0

    def test_one_excitation_product_state(self):
        assert np.isclose(singlet_weight("eg"), 0.5)
        assert np.isclose(singlet_weight("ge"), 0.5)

    def test_singlet_itself(self):
        assert np.isclose(singlet_weight(SINGLET), 1.0)


class TestCoherenceBlockGap:
    def test_driven_generator_has_positive_gap(self):
        cfg = SystemConfig(n_atoms=2, g=0.1, epsilon=1.0, n_max=3)
        gap = coherence_block_gap(build_generator(cfg))
        assert gap is not None and gap > 1e-3

    def test_thermal_generator_has_positive_gap(self):
        cfg = SystemConfig(n_atoms=2, g=0.1, n_th=1.0, n_max=4, frame="thermal")
        gap = coherence_block_gap(build_generator(cfg))
        assert gap is not None and gap > 1e-3

    def test_auto_skips_oversized_blocks(self):
        cfg = SystemConfig(n_atoms=2, g=0.1, epsilon=1.0, n_max=40)
        assert coherence_block_gap(build_generator(cfg), check="auto") is None
        with pytest.raises(SectorError):
            coherence_block_gap(build_generator(cfg), check="force")


class TestTwoAtomSteadyState:
    def test_rejects_other_atom_numbers(self):
        cfg = SystemConfig(n_atoms=3, g=0.1, epsilon=1.0, n_max=2)
        with pytest.raises(SectorError):
            two_atom_steady_state(cfg, "egg")

    def test_matches_long_time_integration_driven(self):
        cfg = SystemConfig(n_atoms=2, g=0.1, epsilon=1.0, n_max=4)
        fast = two_atom_steady_state(cfg, "eg", residual_tol=1e-10)
        gen = build_generator(cfg)
        rho0 = initial_state(cfg, "eg", field="vacuum")
        slow = steady_state(gen, rho0, method="long-time-integration",
                            residual_tol=1e-8, t_max=1e5)
        assert trace_distance(fast, slow.rho_ss) < 1e-5

    def test_matches_long_time_integration_thermal(self):
        cfg = SystemConfig(n_atoms=2, g=0.2, n_th=0.4, n_max=8, frame="thermal")
        fast = two_atom_steady_state(cfg, "gg", residual_tol=1e-10)
        gen = build_generator(cfg)
        rho0 = initial_state(cfg, "gg", field="thermal")
        slow = steady_state(gen, rho0, method="long-time-integration",
                            residual_tol=1e-8, t_max=1e5)
        assert trace_distance(fast, slow.rho_ss) < 1e-5

    def test_conserved_weight_appears_in_steady_state(self):
        cfg = SystemConfig(n_atoms=2, g=0.1, epsilon=1.0, n_max=3)
        w = 0.37
        amps = (math.sqrt(w) * SINGLET
                + math.sqrt(1.0 - w) * np.array([0.0, 0.0, 0.0, 1.0]))
        rho = two_atom_steady_state(cfg, amps)
        nf = cfg.n_max + 1
        proj = np.kron(np.eye(nf), np.outer(SINGLET, SINGLET.conj()))
        assert abs(np.trace(proj @ rho.matrix).real - w) < 1e-9

    def test_pure_singlet_is_dark(self):
        # the drive only couples through the collective raising operator, which
        # annihilates the singlet: atoms stay frozen, field relaxes to vacuum
        cfg = SystemConfig(n_atoms=2, g=0.1, epsilon=1.0, n_max=3)
        rho = two_atom_steady_state(cfg, SINGLET)
        expected = initial_state(cfg, SINGLET, field="vacuum")
        assert trace_distance(rho, expected) < 1e-9

    def test_undriven_zero_temperature_rejected(self):
        # with no drive both |gg, vacuum> and the singlet are dark, so the
        # singlet-triplet coherences never decay and the decomposition fails
        cfg = SystemConfig(n_atoms=2, g=0.1, epsilon=0.0, n_max=3)
        with pytest.raises(SectorError):
            two_atom_steady_state(cfg, SINGLET)

    def test_effective_atomic_frame_supported(self):
        cfg = SystemConfig(n_atoms=2, g=0.05, epsilon=2.0, frame="effective-atomic")
        rho = two_atom_steady_state(cfg, "eg")
        assert rho.layout.factors == (2, 2)
        assert np.isclose(np.trace(rho.matrix).real, 1.0)
