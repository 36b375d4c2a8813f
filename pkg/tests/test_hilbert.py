import numpy as np
import pytest

from ghz_transfer.hilbert import (
    DensityMatrix,
    OperatorMatrix,
    QuantumState,
    SystemLayout,
    build_layout,
    embed_site_operator,
    level_ket,
    load_state,
    mode_annihilation,
    mode_creation,
    partial_trace,
    save_state,
    transition_op,
)

PLUS = np.array([1, 1, 0], dtype=complex) / np.sqrt(2)
MINUS = np.array([1, -1, 0], dtype=complex) / np.sqrt(2)


class TestLayout:
    def test_minimal_dim(self):
        assert build_layout(1, 1, 3, 3).dim == 288

    def test_default_cutoff_dim(self):
        assert build_layout(3, 3).dim == 36450

    def test_site_names_order(self):
        layout = build_layout(2, 2, 3, 3)
        assert layout.site_names == ("q1", "q2", "A", "q1p", "q2p", "cavL", "cavR")
        assert layout.left_spectators == ("q2",)
        assert layout.right_spectators == ("q2p",)

    @pytest.mark.parametrize("bad", [(0, 1), (1, 0)])
    def test_rejects_empty_cavity(self, bad):
        with pytest.raises(ValueError):
            build_layout(*bad)

    @pytest.mark.parametrize("cut", [0, 1, 2])
    def test_rejects_low_cutoff(self, cut):
        with pytest.raises(ValueError):
            build_layout(1, 1, cut, 3)

    def test_basis_round_trip_exhaustive_n2(self):
        layout = build_layout(2, 2, 3, 3)
        for index in range(layout.dim):
            labels = layout.basis_labels(index)
            assert layout.basis_index(labels) == index

    def test_basis_index_symbolic_levels(self):
        layout = build_layout(1, 1, 3, 3)
        by_name = layout.basis_index({"q1": "f", "cavL": 2})
        by_number = layout.basis_index({"q1": 2, "cavL": 2})
        assert by_name == by_number

    def test_first_factor_is_slowest(self):
        # index 0 is all-ground; flipping q1 jumps by the product of all
        # later factor dims, flipping cavR by 1.
        layout = build_layout(1, 1, 3, 3)
        assert layout.basis_index({"cavR": 1}) == 1
        assert layout.basis_index({"q1": 1}) == layout.dim // 3

    def test_level_index_array_matches_labels(self):
        layout = build_layout(1, 2, 3, 4)
        rng = np.random.default_rng(7)
        for site in layout.site_names:
            arr = layout.level_index_array(site)
            for index in rng.integers(0, layout.dim, size=20):
                assert arr[index] == layout.basis_labels(int(index))[site]


class TestEmbedding:
    def test_homomorphism_random_pairs(self):
        # embed(A B) == embed(A) embed(B) for same-site locals
        layout = build_layout(2, 1, 3, 3)
        rng = np.random.default_rng(11)
        for _ in range(5):
            a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
            b = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
            lhs = embed_site_operator(layout, "q2", a @ b)
            rhs = embed_site_operator(layout, "q2", a) @ embed_site_operator(layout, "q2", b)
            defect = (lhs.matrix - rhs.matrix)
            assert abs(defect).max() < 1e-12

    def test_disjoint_sites_commute(self):
        layout = build_layout(2, 2, 3, 3)
        rng = np.random.default_rng(12)
        a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        b = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        ea = embed_site_operator(layout, "q1p", a)
        eb = embed_site_operator(layout, "A", b)
        comm = ea @ eb - eb @ ea
        assert abs(comm.matrix).max() < 1e-12 if comm.matrix.nnz else True

    def test_identity_embeds_to_identity(self):
        layout = build_layout(1, 1, 3, 3)
        op = embed_site_operator(layout, "A", np.eye(2))
        assert abs(op.matrix - np.eye(layout.dim)).max() < 1e-15

    def test_rejects_cavity_site(self):
        layout = build_layout(1, 1, 3, 3)
        with pytest.raises(ValueError):
            embed_site_operator(layout, "cavL", np.eye(4))

    def test_rejects_wrong_local_dim(self):
        layout = build_layout(1, 1, 3, 3)
        with pytest.raises(ValueError):
            embed_site_operator(layout, "A", np.eye(3))


class TestModeOperators:
    def test_creation_is_exact_dagger(self):
        layout = build_layout(1, 1, 3, 4)
        for cav in ("L", "R"):
            a = mode_annihilation(layout, cav)
            adag = mode_creation(layout, cav)
            assert (a.matrix.getH() != adag.matrix).nnz == 0

    def test_matrix_elements(self):
        layout = build_layout(1, 1, 3, 3)
        a = mode_annihilation(layout, "L")
        two = QuantumState.from_basis(layout, {"cavL": 2})
        one = QuantumState.from_basis(layout, {"cavL": 1})
        assert abs(one.overlap(a.apply(two)) - np.sqrt(2)) < 1e-14

    @pytest.mark.parametrize("cutoff", [3, 4, 5])
    def test_commutator_defect_confined_to_top_level(self, cutoff):
        # [a, a+] equals the identity except at the truncated top Fock
        # level, where the diagonal reads -cutoff instead of +1.
        layout = build_layout(1, 1, cutoff, 3)
        a = mode_annihilation(layout, "L")
        comm = (a @ mode_creation(layout, "L") - mode_creation(layout, "L") @ a).to_dense()
        photon = layout.level_index_array("cavL")
        expected = np.where(photon == cutoff, -float(cutoff), 1.0)
        assert abs(comm - np.diag(expected)).max() < 1e-12


class TestStates:
    def test_product_state_populations(self):
        layout = build_layout(2, 1, 3, 3)
        state = QuantumState.from_product(layout, {"q2": PLUS}, photons=(2, 0))
        np.testing.assert_allclose(state.site_populations("q2"), [0.5, 0.5, 0.0], atol=1e-15)
        np.testing.assert_allclose(state.site_populations("cavL"), [0, 0, 1, 0], atol=1e-15)
        assert abs(state.norm - 1.0) < 1e-14

    def test_overlap_requires_same_layout(self):
        s1 = QuantumState.from_basis(build_layout(1, 1, 3, 3))
        s2 = QuantumState.from_basis(build_layout(1, 1, 4, 3))
        with pytest.raises(ValueError):
            s1.overlap(s2)

    def test_hermitian_flag_is_checked(self):
        layout = build_layout(1, 1, 3, 3)
        a = mode_annihilation(layout, "L")
        with pytest.raises(ValueError):
            OperatorMatrix(a.matrix, layout, hermitian=True)


def _encoded_ghz(layout, alpha, beta):
    # alpha |g>_1 prod |+>  +  beta |f>_1 prod |->  on the left register
    plus_sites = {s: PLUS for s in layout.left_spectators}
    minus_sites = {s: MINUS for s in layout.left_spectators}
    branch_g = QuantumState.from_product(layout, {"q1": level_ket(3, "g"), **plus_sites})
    branch_f = QuantumState.from_product(layout, {"q1": level_ket(3, "f"), **minus_sites})
    return QuantumState(alpha * branch_g.amplitudes + beta * branch_f.amplitudes, layout)


class TestPartialTrace:
    def test_ghz_transfer_qubit_reduction_is_maximally_mixed(self):
        # one-qubit reduction of the balanced encoded GHZ: diag(1/2, 0, 1/2)
        layout = build_layout(3, 1, 3, 3)
        state = _encoded_ghz(layout, 1 / np.sqrt(2), 1 / np.sqrt(2))
        rho = partial_trace(state, ["q1"]).matrix
        np.testing.assert_allclose(rho, np.diag([0.5, 0.0, 0.5]), atol=1e-12)

    def test_ghz_spectator_reduction_is_maximally_mixed(self):
        layout = build_layout(3, 1, 3, 3)
        state = _encoded_ghz(layout, 1 / np.sqrt(2), 1 / np.sqrt(2))
        rho = partial_trace(state, ["q2"]).matrix
        # (|+><+| + |-><-|)/2 = I/2 on the g,e block
        np.testing.assert_allclose(rho, np.diag([0.5, 0.5, 0.0]), atol=1e-12)

    def test_pure_and_density_routes_agree(self):
        layout = build_layout(1, 1, 3, 3)
        rng = np.random.default_rng(3)
        amps = rng.normal(size=layout.dim) + 1j * rng.normal(size=layout.dim)
        state = QuantumState(amps, layout).normalized()
        via_state = partial_trace(state, ["A", "cavR"])
        via_density = partial_trace(DensityMatrix.from_state(state), ["A", "cavR"])
        np.testing.assert_allclose(via_state.matrix, via_density.matrix, atol=1e-12)
        assert via_state.dims == (2, 4)

    def test_trace_preserved(self):
        layout = build_layout(2, 1, 3, 3)
        state = _encoded_ghz(layout, 0.6, 0.8)
        rho = partial_trace(state, ["q1", "q2"]).matrix
        assert abs(np.trace(rho) - 1.0) < 1e-12

    def test_unknown_site_rejected(self):
        layout = build_layout(1, 1, 3, 3)
        state = QuantumState.from_basis(layout)
        with pytest.raises(KeyError):
            partial_trace(state, ["q9"])


class TestSnapshots:
    def test_round_trip(self, tmp_path):
        layout = build_layout(2, 1, 3, 3)
        rng = np.random.default_rng(5)
        amps = rng.normal(size=layout.dim) + 1j * rng.normal(size=layout.dim)
        state = QuantumState(amps, layout).normalized()
        path = tmp_path / "state.json"
        save_state(state, path)
        back = load_state(path)
        assert back.layout == layout
        np.testing.assert_array_equal(back.amplitudes, state.amplitudes)

    def test_rejects_foreign_payload(self, tmp_path):
        path = tmp_path / "other.json"
        path.write_text('{"format": "something-else"}')
        with pytest.raises(ValueError):
            load_state(path)


def test_transition_op_shape():
    op = transition_op(3, "e", "f")
    assert op[1, 2] == 1.0 and np.count_nonzero(op) == 1
