import json
import math

import numpy as np
import pytest

from demrep.experiments import (CcdfTable, ExperimentConfig, ExperimentError,
                                ccdf, mapped_tone_indices, qam_alphabet,
                                qam_map, reserved_tone_indices,
                                run_experiment_to_files, run_ofdm_papr,
                                run_ofdm_trial, run_phase_diagram, _ofdm_setup)
from demrep.solvers import SolverConfig


def phase_cfg(**kw):
    base = dict(kind="phase-ku", seed=11, n=32, m_sweep=(8, 16, 24), trials=6,
                frame_family="dft", tau_scale=32.0)
    base.update(kw)
    return ExperimentConfig(**base)


def ofdm_cfg(**kw):
    base = dict(kind="ofdm-papr", seed=5, n=64, trials=25, reserved_tones=6,
                qam_order=16, oversampling=4, tau_scale=16.0,
                solver=SolverConfig(max_iters=400))
    base.update(kw)
    return ExperimentConfig(**base)


class TestQam:
    def test_qpsk_alphabet(self):
        symbols = qam_alphabet(4)
        expected = {(1 + 1j), (1 - 1j), (-1 + 1j), (-1 - 1j)}
        got = {complex(round(s.real * math.sqrt(2), 9),
                       round(s.imag * math.sqrt(2), 9)) for s in symbols}
        assert got == expected
        assert np.mean(np.abs(symbols) ** 2) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("order", [4, 16, 64, 256])
    def test_unit_average_energy(self, order):
        symbols = qam_alphabet(order)
        assert symbols.size == order
        assert np.mean(np.abs(symbols) ** 2) == pytest.approx(1.0, abs=1e-12)

    def test_gray_property_exhaustive_order_16(self):
        # adjacent levels along each axis differ in exactly one bit
        half_bits = 2
        levels = {}
        for g in range(4):
            bits_i = [(g >> 1) & 1, g & 1]
            sym = qam_map(np.array(bits_i + [0, 0]), 16)[0]
            levels[g] = sym.real
        order = sorted(levels, key=levels.get)
        for a, b in zip(order, order[1:]):
            assert bin(a ^ b).count("1") == 1
        # quadrature axis mirrors the in-phase labeling
        for g in range(4):
            bits_q = [0, 0, (g >> 1) & 1, g & 1]
            assert qam_map(np.array(bits_q), 16)[0].imag == pytest.approx(levels[g])

    def test_bit_count_validated(self):
        with pytest.raises(ValueError, match="multiple"):
            qam_map(np.array([0, 1, 1]), 16)
        with pytest.raises(ValueError, match="order"):
            qam_map(np.array([0, 1]), 8)

    def test_deterministic_vectorized_mapping(self, rng):
        bits = rng.integers(0, 2, size=64 * 8)
        a = qam_map(bits, 256)
        b = qam_map(bits, 256)
        assert np.array_equal(a, b)


class TestCcdf:
    def test_constant_values_step(self):
        table = ccdf([2.0, 2.0, 2.0], 0.5)
        for t, p in zip(table.thresholds, table.probabilities):
            assert p == (1.0 if t < 2.0 else 0.0)

    def test_counting(self):
        table = ccdf([1.0, 2.0, 3.0], 0.5)
        idx = int(np.argmin(np.abs(table.thresholds - 1.5)))
        assert table.probabilities[idx] == pytest.approx(2 / 3)

    def test_full_probability_below_min(self):
        table = ccdf([4.0, 5.0], 0.25)
        below = table.thresholds <= 4.0 - 0.25
        assert below.any()
        assert np.all(table.probabilities[below] == 1.0)

    def test_monotone_nonincreasing(self, rng):
        table = ccdf(rng.standard_normal(200), 0.1)
        assert np.all(np.diff(table.probabilities) <= 1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            ccdf([], 0.1)
        with pytest.raises(ValueError):
            ccdf([1.0], 0.0)

    def test_value_at_probability(self):
        table = CcdfTable(thresholds=np.array([0.0, 1.0, 2.0]),
                          probabilities=np.array([1.0, 0.4, 0.0]))
        assert table.value_at_probability(0.5) == 1.0


class TestConfigSchema:
    def test_round_trip(self):
        cfg = phase_cfg()
        again = ExperimentConfig.from_json_dict(cfg.to_json_dict())
        assert again == cfg

    def test_unknown_key_rejected(self):
        doc = phase_cfg().to_json_dict()
        doc["mystery"] = 1
        with pytest.raises(ValueError, match="mystery"):
            ExperimentConfig.from_json_dict(doc)

    def test_kind_specific_keys_enforced(self):
        doc = phase_cfg().to_json_dict()
        doc["qamOrder"] = 64  # an ofdm key on a phase config
        with pytest.raises(ValueError, match="qamOrder"):
            ExperimentConfig.from_json_dict(doc)

    def test_schema_version_checked(self):
        doc = phase_cfg().to_json_dict()
        doc["schemaVersion"] = 99
        with pytest.raises(ValueError, match="schemaVersion"):
            ExperimentConfig.from_json_dict(doc)

    def test_solver_keys_strict(self):
        doc = phase_cfg().to_json_dict()
        doc["solver"]["stepSize"] = 0.1
        with pytest.raises(ValueError, match="stepSize"):
            ExperimentConfig.from_json_dict(doc)

    def test_ofdm_requires_reserved_tones(self):
        with pytest.raises(ValueError, match="reserved"):
            ofdm_cfg(reserved_tones=0)

    def test_explicit_reserved_list_validated(self):
        cfg = ofdm_cfg(reserved_tones=3, reserved_placement=(1, 9, 20))
        assert cfg.reserved_placement == (1, 9, 20)
        with pytest.raises(ValueError):
            ofdm_cfg(reserved_tones=3, reserved_placement=(1, 1, 20))


class TestTonePlacement:
    def test_even_placement_is_spread_and_distinct(self):
        cfg = ofdm_cfg(n=64, reserved_tones=6)
        reserved, guard, data = reserved_tone_indices(cfg)
        assert reserved.size == 6 and np.unique(reserved).size == 6
        assert guard.size == 0
        assert data.size == 64 - 6
        assert set(reserved) | set(data) == set(range(64))

    def test_guard_band_sits_at_nyquist(self):
        cfg = ofdm_cfg(n=64, reserved_tones=4, guard_tones=5)
        reserved, guard, data = reserved_tone_indices(cfg)
        assert guard.size == 5
        assert 32 in guard  # centered on the Nyquist bin
        assert not (set(guard) & set(reserved))
        assert reserved.size + guard.size + data.size == 64

    def test_mapped_tone_indices_centered(self):
        tones = np.array([0, 1, 31, 32, 33, 63])
        mapped = mapped_tone_indices(tones, 64, 4)
        assert mapped.tolist() == [0, 1, 31, 32, 256 - 31, 256 - 1]


class TestPhaseDiagram:
    def test_fractions_monotone_and_bounded(self):
        result = run_phase_diagram(phase_cfg())
        assert np.all(result.fractions >= 0) and np.all(result.fractions <= 1)
        assert np.all(np.diff(result.fractions, axis=1) >= -1e-12)
        assert result.transition.shape == (3,)
        assert not np.isnan(result.transition).any()

    def test_square_point_ku_floor(self):
        # at M = N the unique representation is D^H y, whose empirical bound
        # sqrt(N) ||x||_inf / ||y|| is >= 1, with equality only for signals
        # aligned with a transform column
        result = run_phase_diagram(phase_cfg(m_sweep=(32,), trials=4))
        for rec in result.records[0]:
            assert rec.k_hat_u >= 1.0 - 1e-9
            assert np.isfinite(rec.k_hat_u)

    def test_deterministic_across_workers(self):
        cfg = phase_cfg(trials=4)
        a = run_phase_diagram(cfg, workers=1)
        b = run_phase_diagram(cfg, workers=2)
        np.testing.assert_array_equal(a.transition, b.transition)
        assert [r.to_csv_row() for recs in a.records for r in recs] == \
            [r.to_csv_row() for recs in b.records for r in recs]

    def test_failure_budget_aborts(self):
        cfg = phase_cfg(frame_family="gaussian", trials=4,
                        solver=SolverConfig(max_iters=2))
        with pytest.raises(ExperimentError, match="failure budget"):
            run_phase_diagram(cfg)

    def test_gaussian_family_records_are_feasible_metrics(self):
        result = run_phase_diagram(phase_cfg(frame_family="gaussian", trials=3,
                                             m_sweep=(8, 16)))
        for recs in result.records:
            for rec in recs:
                assert 1.0 - 1e-9 <= rec.papr_linear <= 32.0
                assert rec.extreme_count >= 1


class TestOfdm:
    def test_trial_constraint_residual(self):
        cfg = ofdm_cfg(trials=2)
        state = _ofdm_setup(cfg)
        out, feasible, iters = run_ofdm_trial(cfg, 0, state=state)
        assert feasible
        assert set(out) == {"conventional", "cramp", "crampOversampled"}

    def test_solved_spectrum_matches_data(self, rng):
        from demrep.solvers import solve_cramp
        cfg = ofdm_cfg(trials=1)
        data, constrained, frame_crit, _ = _ofdm_setup(cfg)
        from demrep.experiments import trial_rng
        gen = trial_rng(cfg.seed, 0, 0)
        bits = gen.integers(0, 2, size=data.size * 4)
        y_full = np.zeros(64, dtype=complex)
        y_full[data] = qam_map(bits, 16)
        y_omega = y_full[constrained]
        res = solve_cramp(frame_crit, y_omega,
                          SolverConfig(tau=16 * float(np.linalg.norm(y_omega)) / 8))
        spectrum = np.fft.fft(res.x, norm="ortho")
        assert np.linalg.norm(spectrum[constrained] - y_omega) <= \
            1e-8 * np.linalg.norm(y_omega)

    def test_ccdf_curve_ordering(self):
        result = run_ofdm_papr(ofdm_cfg())
        conv = result.curves["conventional"]
        over = result.curves["crampOversampled"]
        trials = ofdm_cfg().trials
        both_supported = (conv * trials > 10) & (over * trials > 10)
        assert np.all(conv[both_supported] >= over[both_supported] - 1e-12)
        assert result.point_stats["infeasible"] == 0

    def test_oversampled_solve_beats_critical(self):
        result = run_ofdm_papr(ofdm_cfg())
        at = lambda m: result.curves[m]
        # compare curve positions at the 20% tail
        v_conv = CcdfTable(result.thresholds, at("conventional")).value_at_probability(0.2)
        v_over = CcdfTable(result.thresholds, at("crampOversampled")).value_at_probability(0.2)
        assert v_over < v_conv


class TestFileOutputs:
    def test_phase_outputs_and_determinism(self, tmp_path):
        cfg = phase_cfg(output_prefix="tiny")
        first = run_experiment_to_files(cfg, tmp_path / "a")
        names = sorted(p.name for p in first)
        assert names == ["tiny_grid.csv", "tiny_manifest.json",
                         "tiny_transition.csv", "tiny_trials.csv"]
        second = run_experiment_to_files(cfg, tmp_path / "b")
        for p1, p2 in zip(first, second):
            if p1.suffix == ".csv":
                assert p1.read_bytes() == p2.read_bytes()

    def test_manifest_echoes_config(self, tmp_path):
        cfg = phase_cfg(output_prefix="tiny")
        files = run_experiment_to_files(cfg, tmp_path)
        manifest = json.loads((tmp_path / "tiny_manifest.json").read_text())
        assert ExperimentConfig.from_json_dict(manifest["config"]) == cfg
        assert manifest["build"]["package"] == "demrep"
        assert len(manifest["pointStats"]) == len(cfg.m_sweep)

    def test_ofdm_outputs(self, tmp_path):
        cfg = ofdm_cfg(trials=5, output_prefix="ofdm")
        files = run_experiment_to_files(cfg, tmp_path)
        header = (tmp_path / "ofdm_ccdf.csv").read_text().splitlines()[0]
        assert header == "paprDb,ccdfConventional,ccdfCramp,ccdfCrampOversampled"
