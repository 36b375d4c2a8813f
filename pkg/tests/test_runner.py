"""Protocol runner: the three modes, checkpoints, and the sector projection."""

from __future__ import annotations

import numpy as np
import pytest

from ghz_transfer.analysis import GhzSpec, occupation_probability
from ghz_transfer.dsl import parse_schedule, serialize_schedule, validate_schedule
from ghz_transfer.evolution import evolve_lindblad
from ghz_transfer.hamiltonians import (
    collapse_operators,
    h_dispersive_reduced,
    h_resonant_ef,
    h_resonant_ge,
    load_preset,
)
from ghz_transfer.hilbert import DensityMatrix, build_layout
from ghz_transfer.runner import (
    CHECKPOINT_AFTER_SEGMENT,
    ProtocolError,
    excitation_numbers,
    run_protocol,
)
from ghz_transfer.scheduling import build_schedule


@pytest.fixture(scope="module")
def params():
    return load_preset("transmon")


@pytest.fixture(scope="module")
def ideal_n2(params):
    return run_protocol(params, GhzSpec(alpha=0.6, beta=0.8j, n=2))


@pytest.fixture(scope="module")
def full_n2(params):
    # beta = 1 puts all weight on the branch that feels the dispersive
    # drive, so the measured f occupation is the raw per-branch number
    return run_protocol(
        params, GhzSpec(alpha=0.0, beta=1.0, n=2),
        mode="full-dispersive", trajectory_samples=300,
    )


class TestIdealMode:
    def test_every_checkpoint_is_exact(self, ideal_n2):
        assert ideal_n2.final_fidelity >= 1 - 1e-12
        assert set(ideal_n2.checkpoints) == set(CHECKPOINT_AFTER_SEGMENT.values())
        for rec in ideal_n2.checkpoints.values():
            assert rec.fidelity >= 1 - 1e-12
            assert rec.phase_error < 1e-10

    def test_all_gates_pass(self, ideal_n2):
        assert ideal_n2.ok
        assert ideal_n2.passes == {
            "final_fidelity": True,
            "truncation": True,
            "checkpoints": True,
            "branch_phase": True,
        }

    def test_single_qubit_register(self, params):
        res = run_protocol(params, GhzSpec(alpha=0.8, beta=0.6, n=1))
        assert res.final_fidelity >= 1 - 1e-12
        assert "after_step3" not in res.checkpoints  # no spectator window at n=1

    def test_three_qubits(self, params):
        res = run_protocol(params, GhzSpec(alpha=1 / np.sqrt(2), beta=1j / np.sqrt(2), n=3))
        assert res.final_fidelity >= 1 - 1e-12

    def test_unentangled_input_is_left_alone(self, params):
        res = run_protocol(params, GhzSpec(alpha=1.0, beta=0.0, n=2))
        assert res.final_fidelity >= 1 - 1e-13
        # the all-ground branch is annihilated by every pulse: nothing moves
        rec = res.checkpoints["after_step2"]
        assert abs(rec.coeff_g - 1.0) < 1e-12

    def test_checkpoint_times_are_cumulative(self, ideal_n2):
        times = [rec.time_s for rec in ideal_n2.checkpoints.values()]
        assert all(t2 > t1 for t1, t2 in zip(times, times[1:]))
        sched = ideal_n2.schedule
        assert times[-1] == pytest.approx(sched.tau - sched.closing_ramp_s, rel=1e-12)

    def test_keep_states_stores_checkpoint_kets(self, params):
        spec = GhzSpec(alpha=0.6, beta=0.8j, n=2)
        res = run_protocol(params, spec, keep_states=True)
        assert set(res.states) == set(res.checkpoints)
        fid = abs(res.states["final"].overlap(res.final_state)) ** 2
        assert fid == pytest.approx(1.0, abs=1e-14)

    def test_runs_a_schedule_from_text(self, params):
        spec = GhzSpec(alpha=0.6, beta=0.8j, n=2)
        text = serialize_schedule(build_schedule(params, 2))
        sched = validate_schedule(parse_schedule(text)).schedule
        res = run_protocol(params, spec, schedule=sched)
        assert res.final_fidelity >= 1 - 1e-12

    def test_report_is_json_clean(self, ideal_n2):
        import json

        report = ideal_n2.report()
        text = json.dumps(report, sort_keys=True)
        again = json.loads(text)
        assert again["ok"] is True
        assert again["checkpoints"]["final"]["fidelity"] >= 1 - 1e-12
        assert again["budget"]["tau_s"] == pytest.approx(1.5e-7, rel=0.05)


class TestFullDispersiveMode:
    def test_resonant_steps_stay_exact(self, full_n2):
        for label in ("after_step1a", "after_step1", "after_step2a", "after_step2"):
            assert full_n2.checkpoints[label].fidelity >= 1 - 1e-12

    def test_window_error_is_visible_but_small(self, full_n2):
        fid3 = full_n2.checkpoints["after_step3"].fidelity
        assert 0.96 <= fid3 < 1 - 1e-9
        assert full_n2.final_fidelity == pytest.approx(fid3, abs=1e-9)

    def test_spectator_f_matches_perturbative_estimate(self, full_n2, params):
        expected = occupation_probability(params.mu, params.delta)
        measured = full_n2.max_spectator_f
        assert expected / 2 <= measured <= expected * 2

    def test_trajectory_rows_are_well_formed(self, full_n2):
        rows = full_n2.trajectory
        assert len(rows) == 300 * len(full_n2.schedule.segments)
        t = [row["t_ns"] for row in rows]
        assert all(b >= a for a, b in zip(t, t[1:]))
        for row in rows[:: len(rows) // 7]:
            assert row["segment"] in CHECKPOINT_AFTER_SEGMENT
            assert row["norm"] == pytest.approx(1.0, abs=1e-8)
            assert 0.0 <= row["spectator_f_total"] <= 1.0


class TestLindbladMode:
    def test_decoherence_costs_fidelity_but_not_much(self, params):
        spec = GhzSpec(alpha=0.6, beta=0.8j, n=2)
        res = run_protocol(params, spec, mode="lindblad", fock_cutoff=3)
        assert 0.9 < res.final_fidelity < 1 - 1e-4
        fids = [rec.fidelity for rec in res.checkpoints.values()]
        assert all(f2 < f1 + 1e-9 for f1, f2 in zip(fids, fids[1:]))
        assert res.final_state.trace == pytest.approx(1.0, abs=1e-7)

    def test_matches_unprojected_integration(self, params):
        # n=1 is small enough to integrate without the sector projection;
        # agreement is limited by integrator tolerance (the two runs take
        # different adaptive steps), so both are pushed well below the bound
        spec = GhzSpec(alpha=0.8, beta=0.6j, n=1)
        res = run_protocol(
            params, spec, mode="lindblad", fock_cutoff=3, rtol=1e-10, atol=1e-12
        )

        layout = build_layout(1, 1, 3, 3)
        from ghz_transfer.analysis import make_oracle_state

        rho = DensityMatrix.from_state(make_oracle_state(layout, spec, "initial"))
        cops = collapse_operators(layout, params)
        for seg in build_schedule(params, 1):
            if seg.ramp_s > 0:
                rho = evolve_lindblad(rho, None, cops, seg.ramp_s, rtol=1e-10, atol=1e-12).final
            if seg.kind == "resonant_ef":
                h = h_resonant_ef(layout, seg.cavity, seg.site, seg.coupling)
            else:
                h = h_resonant_ge(layout, seg.cavity, seg.site, seg.coupling)
            rho = evolve_lindblad(rho, h, cops, seg.duration_s, rtol=1e-10, atol=1e-12).final
        rho = evolve_lindblad(
            rho, None, cops, build_schedule(params, 1).closing_ramp_s, rtol=1e-10, atol=1e-12
        ).final

        diff = np.abs(res.final_state.matrix - rho.matrix).max()
        assert diff < 1e-8

    def test_requires_decoherence_channels(self, params):
        bare = params.with_overrides(
            t1=None, t2=None, t1f=None, t2f=None,
            coupler_t1=None, coupler_t2=None, kappaL=None, kappaR=None,
        )
        with pytest.raises(ValueError, match="decoherence"):
            run_protocol(bare, GhzSpec(alpha=1.0, beta=0.0, n=1), mode="lindblad", fock_cutoff=3)


class TestExcitationSectors:
    def test_reference_counts(self):
        layout = build_layout(2, 2, 3, 3)
        quanta = excitation_numbers(layout)
        assert quanta[0] == 0  # everything ground, vacuum
        idx = layout.basis_index({"q1": "f", "cavL": 3, "A": 1})
        assert quanta[idx] == 6
        assert int((quanta <= 4).sum()) == 260

    @pytest.mark.parametrize("builder", ["ef", "ge", "reduced"])
    def test_generators_conserve_quanta(self, params, builder):
        layout = build_layout(2, 2, 3, 3)
        if builder == "ef":
            h = h_resonant_ef(layout, "L", "q1", params.mu1)
        elif builder == "ge":
            h = h_resonant_ge(layout, "L", "A", params.muAL)
        else:
            h = h_dispersive_reduced(layout, params)
        quanta = excitation_numbers(layout)
        rows, cols = h.matrix.nonzero()
        assert np.all(quanta[rows] == quanta[cols])

    def test_collapse_channels_never_raise_quanta(self, params):
        layout = build_layout(2, 2, 3, 3)
        quanta = excitation_numbers(layout)
        for op in collapse_operators(layout, params):
            rows, cols = op.matrix.nonzero()
            assert np.all(quanta[rows] <= quanta[cols])


class TestConfigErrors:
    def test_unknown_mode(self, params):
        with pytest.raises(ValueError, match="unknown mode"):
            run_protocol(params, GhzSpec(alpha=1.0, beta=0.0, n=1), mode="exact")

    def test_schedule_size_mismatch(self, params):
        sched = build_schedule(params, 3)
        with pytest.raises(ValueError, match="schedule is for"):
            run_protocol(params, GhzSpec(alpha=1.0, beta=0.0, n=2), schedule=sched)
