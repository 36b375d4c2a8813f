"""Generator factories: matrix elements, symmetries, parameter files."""

from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.sparse as sp

from ghz_transfer.hamiltonians import (
    DispersiveGenerator,
    EffectiveRates,
    PhysicalParams,
    collapse_operators,
    h_dispersive_effective,
    h_dispersive_full,
    h_dispersive_reduced,
    h_resonant_ef,
    h_resonant_ge,
    load_params,
    load_preset,
    save_params,
)
from ghz_transfer.hilbert import QuantumState, build_layout
from ghz_transfer.units import TWO_PI, two_pi_mhz

MU = two_pi_mhz(50.0)


def bare_params(**overrides) -> PhysicalParams:
    base = dict(
        mu1=MU, mu1_tilde=MU, mu1p=MU, mu1p_tilde=MU, muAL=MU, muAR=MU,
        mu=MU, mu_prime=MU, delta=10 * MU, delta_prime=10 * MU,
    )
    base.update(overrides)
    return PhysicalParams(**base)


@pytest.fixture(scope="module")
def layout11():
    return build_layout(1, 1)


@pytest.fixture(scope="module")
def layout22():
    return build_layout(2, 2, fock_cutoff_left=3, fock_cutoff_right=3)


class TestResonantFactories:
    def test_ef_matrix_element_single_photon(self, layout11):
        h = h_resonant_ef(layout11, "L", "q1", MU)
        src = QuantumState.from_basis(layout11, {"q1": "f"})
        dst = QuantumState.from_basis(layout11, {"q1": "e", "cavL": 1})
        amp = dst.overlap(h.apply(src))
        assert amp == pytest.approx(MU, rel=1e-15)

    def test_ef_bose_enhancement(self, layout11):
        # one photon already present: the emission element picks up sqrt(2)
        h = h_resonant_ef(layout11, "L", "q1", MU)
        src = QuantumState.from_basis(layout11, {"q1": "f", "cavL": 1})
        dst = QuantumState.from_basis(layout11, {"q1": "e", "cavL": 2})
        amp = dst.overlap(h.apply(src))
        assert amp == pytest.approx(math.sqrt(2) * MU, rel=1e-14)

    def test_ef_two_dim_block_squares_to_identity(self, layout11):
        # {|f,0>, |e,1>} is closed, so H^2 acts there as mu^2
        h = h_resonant_ef(layout11, "L", "q1", MU)
        src = QuantumState.from_basis(layout11, {"q1": "f"})
        twice = h.apply(h.apply(src))
        assert np.allclose(twice.amplitudes, MU**2 * src.amplitudes, rtol=1e-13)

    def test_ge_on_coupler_with_photon_present(self, layout11):
        h = h_resonant_ge(layout11, "L", "A", MU)
        src = QuantumState.from_basis(layout11, {"A": "e", "cavL": 1})
        dst = QuantumState.from_basis(layout11, {"A": "g", "cavL": 2})
        amp = dst.overlap(h.apply(src))
        assert amp == pytest.approx(math.sqrt(2) * MU, rel=1e-14)

    def test_ge_annihilates_global_ground(self, layout11):
        h = h_resonant_ge(layout11, "R", "A", MU)
        vac = QuantumState.from_basis(layout11, {})
        assert np.all(h.apply(vac).amplitudes == 0)

    def test_factories_are_hermitian_exactly(self, layout11):
        for h in (
            h_resonant_ef(layout11, "L", "q1", MU),
            h_resonant_ge(layout11, "L", "A", MU),
            h_resonant_ge(layout11, "R", "q1p", MU),
        ):
            assert h.hermitian
            assert h.hermiticity_defect() == 0.0

    def test_coupler_has_no_f_transition(self, layout11):
        with pytest.raises(ValueError):
            h_resonant_ef(layout11, "L", "A", MU)

    def test_cross_register_drive_rejected(self, layout11):
        with pytest.raises(ValueError):
            h_resonant_ef(layout11, "R", "q1", MU)
        with pytest.raises(ValueError):
            h_resonant_ge(layout11, "L", "q1p", MU)

    def test_unknown_site_rejected(self, layout11):
        with pytest.raises(KeyError):
            h_resonant_ef(layout11, "L", "q7", MU)


class TestDispersiveGenerators:
    def test_needs_spectators(self, layout11):
        with pytest.raises(ValueError):
            DispersiveGenerator(layout11, bare_params())
        with pytest.raises(ValueError):
            h_dispersive_reduced(layout11, bare_params())

    def test_instant_hamiltonian_is_hermitian(self, layout22):
        h = h_dispersive_full(layout22, bare_params(), time=0.37 / (10 * MU))
        assert h.hermitian and h.hermiticity_defect() < 1e-12

    def test_vanishes_on_ground_spectators(self, layout22):
        gen = DispersiveGenerator(layout22, bare_params())
        # q1 excited, photons present, spectators in g: nothing couples
        state = QuantumState.from_basis(layout22, {"q1": "f", "cavL": 2, "cavR": 1})
        assert np.all(gen.apply(0.0, state.amplitudes) == 0)
        assert np.all(gen.apply(1e-9, state.amplitudes) == 0)

    def test_conserves_total_quanta(self, layout22):
        gen = DispersiveGenerator(layout22, bare_params())
        quanta = np.zeros(layout22.dim)
        for site in layout22.site_names:
            quanta += layout22.level_index_array(site)
        rng = np.random.default_rng(42)
        psi = rng.normal(size=layout22.dim) + 1j * rng.normal(size=layout22.dim)
        psi /= np.linalg.norm(psi)
        for op in (gen.at(2.3e-10).matrix, gen.static_hamiltonian().matrix):
            defect = op @ (quanta * psi) - quanta * (op @ psi)
            assert np.max(np.abs(defect)) < 1e-6 * np.max(np.abs(op @ psi))

    def test_interaction_picture_matches_frame_conjugation(self, layout22):
        params = bare_params()
        gen = DispersiveGenerator(layout22, params)
        g = gen.frame_diagonal()
        static = gen.static_hamiltonian().matrix
        offdiag = static - sp.diags(g).astype(complex)
        rng = np.random.default_rng(3)
        psi = rng.normal(size=layout22.dim) + 1j * rng.normal(size=layout22.dim)
        t = 0.7 / params.delta
        via_frame = np.exp(1j * g * t) * (offdiag @ (np.exp(-1j * g * t) * psi))
        direct = gen.apply(t, psi)
        assert np.max(np.abs(via_frame - direct)) < 1e-9 * np.max(np.abs(direct))

    def test_effective_equals_reduced_without_f_population(self):
        layout = build_layout(3, 3, fock_cutoff_left=3, fock_cutoff_right=3)
        params = bare_params()
        h_eff = h_dispersive_effective(layout, params)
        h_red = h_dispersive_reduced(layout, params)
        rng = np.random.default_rng(8)
        psi = rng.normal(size=layout.dim) + 1j * rng.normal(size=layout.dim)
        # project out every spectator f component
        for site in layout.left_spectators + layout.right_spectators:
            psi[layout.level_index_array(site) == 2] = 0.0
        psi /= np.linalg.norm(psi)
        state = QuantumState(psi, layout)
        out_eff = h_eff.apply(state).amplitudes
        out_red = h_red.apply(state).amplitudes
        scale = EffectiveRates.from_params(params).lam
        assert np.max(np.abs(out_eff - out_red)) < 1e-12 * scale

    def test_reduced_eigenvalues(self, layout22):
        params = bare_params()
        rates = EffectiveRates.from_params(params)
        h = h_dispersive_reduced(layout22, params)

        transfer_branch = QuantumState.from_basis(layout22, {"q1": "f", "cavL": 1})
        assert h.expectation(transfer_branch) == pytest.approx(0.0, abs=1e-30)

        left = QuantumState.from_basis(layout22, {"q2": "e", "cavL": 1})
        assert h.expectation(left) == pytest.approx(-rates.lam, rel=1e-14)

        right = QuantumState.from_basis(layout22, {"q2p": "e", "cavR": 2})
        assert h.expectation(right) == pytest.approx(-2 * rates.lam_prime, rel=1e-14)

    def test_effective_stark_shift_of_f(self, layout22):
        params = bare_params()
        rates = EffectiveRates.from_params(params)
        h = h_dispersive_effective(layout22, params)
        state = QuantumState.from_basis(layout22, {"q2": "f"})
        # f level with zero photons: a a_dag contributes n + 1 = 1
        assert h.expectation(state) == pytest.approx(rates.lam, rel=1e-14)

    def test_effective_dipole_exchange_element(self):
        layout = build_layout(3, 2, fock_cutoff_left=3, fock_cutoff_right=3)
        params = bare_params()
        rates = EffectiveRates.from_params(params)
        h = h_dispersive_effective(layout, params)
        src = QuantumState.from_basis(layout, {"q2": "f", "q3": "e"})
        dst = QuantumState.from_basis(layout, {"q2": "e", "q3": "f"})
        assert dst.overlap(h.apply(src)) == pytest.approx(rates.lam, rel=1e-14)

    def test_effective_has_no_photon_exchange(self, layout22):
        params = bare_params()
        h = h_dispersive_effective(layout22, params)
        src = QuantumState.from_basis(layout22, {"q2": "f"})
        dst = QuantumState.from_basis(layout22, {"q2": "e", "cavL": 1})
        assert dst.overlap(h.apply(src)) == 0


class TestEffectiveRates:
    def test_values_and_bitwise_recompute(self):
        params = bare_params(delta=20 * MU, delta_prime=40 * MU)
        rates = EffectiveRates.from_params(params)
        assert rates.lam == MU**2 / (20 * MU)
        assert rates.lam_prime == MU**2 / (40 * MU)
        again = EffectiveRates.from_params(params)
        assert (rates.lam, rates.lam_prime) == (again.lam, again.lam_prime)


class TestPhysicalParams:
    def test_rejects_nonpositive_coupling(self):
        with pytest.raises(ValueError):
            bare_params(mu1=0.0)
        with pytest.raises(ValueError):
            bare_params(delta=-1.0)

    def test_warns_when_detuning_marginal(self):
        with pytest.warns(UserWarning):
            bare_params(delta=3 * MU)

    def test_comfortable_detuning_is_silent(self):
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("error")
            bare_params()


class TestCollapseOperators:
    def test_channel_census_for_preset(self, layout11):
        params = load_preset("transmon")
        ops = collapse_operators(layout11, params)
        # per qudit: g<-e, e<-f, e dephasing (f dephasing drops out since
        # 1/T2f = 1/(2 T1f) exactly); coupler: relaxation + dephasing;
        # one photon-loss channel per cavity
        assert len(ops) == 2 * 3 + 2 + 2

    def test_t2_at_relaxation_limit_has_no_dephasing(self, layout11):
        params = bare_params(t1=20e-6, t2=40e-6)
        ops = collapse_operators(layout11, params)
        assert len(ops) == 2  # one relaxation channel per qudit

    def test_t2_beyond_limit_rejected(self, layout11):
        params = bare_params(t1=20e-6, t2=41e-6)
        with pytest.raises(ValueError):
            collapse_operators(layout11, params)

    def test_relaxation_amplitude(self, layout11):
        params = bare_params(t1=20e-6)
        op = collapse_operators(layout11, params)[0]
        src = QuantumState.from_basis(layout11, {"q1": "e"})
        dst = QuantumState.from_basis(layout11, {})
        assert dst.overlap(op.apply(src)) == pytest.approx(math.sqrt(1 / 20e-6), rel=1e-15)

    def test_photon_loss_amplitude(self, layout11):
        params = bare_params(kappaL=2.0e5)
        (op,) = collapse_operators(layout11, params)
        src = QuantumState.from_basis(layout11, {"cavL": 2})
        dst = QuantumState.from_basis(layout11, {"cavL": 1})
        assert dst.overlap(op.apply(src)) == pytest.approx(math.sqrt(2 * 2.0e5), rel=1e-15)

    def test_no_channels_for_ideal_hardware(self, layout11):
        assert collapse_operators(layout11, bare_params()) == []


class TestParameterFiles:
    def test_preset_values(self):
        params = load_preset("transmon")
        assert params.mu1_tilde == two_pi_mhz(50.0)
        assert params.muAL == two_pi_mhz(50.0)
        assert params.mu == two_pi_mhz(50.0 * math.sqrt(2))
        assert params.mu1 == params.mu
        assert params.delta == pytest.approx(10 * params.mu, rel=1e-15)
        assert params.tauA == 3e-9 and params.tauqp == 3e-9
        assert params.t1 == 20e-6 and params.t1f == 10e-6 and params.t2f == 20e-6
        assert params.kappaL == TWO_PI * 9.293 * 1e9 / 300000
        assert params.kappaR == params.kappaL

    def test_unknown_preset(self):
        with pytest.raises(KeyError):
            load_preset("nonexistent")

    def test_round_trip(self, tmp_path):
        params = load_preset("transmon").with_overrides(delta=17 * MU, t2=13e-6)
        path = tmp_path / "params.yaml"
        save_params(params, path)
        again = load_params(path)
        assert again == params

    def test_missing_coupling_rejected(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("couplings: {mu1: 2pi*50 MHz}\ndetunings: {}\n")
        with pytest.raises(ValueError):
            load_params(path)

    def test_unknown_decoherence_key_rejected(self, tmp_path):
        params = load_preset("transmon")
        path = tmp_path / "params.yaml"
        save_params(params, path)
        text = path.read_text() + "\n"
        path.write_text(text.replace("t1:", "t1_misspelled:"))
        with pytest.raises(ValueError):
            load_params(path)
