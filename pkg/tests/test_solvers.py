import numpy as np
import pytest

from demrep.frames import (build_dense, build_dft_tone_frame, build_gaussian,
                           build_subsampled_dft)
from demrep.prox import norm_inf_tilde
from demrep.solvers import (GapReport, SolverConfig, certify, dual_objective,
                            solve_cram, solve_cramp, solve_least_squares)

from conftest import random_complex, unit_signal

ONE_TWO = build_dense(np.array([[1.0, 1.0]]))


class TestSolverConfig:
    def test_defaults_valid(self):
        cfg = SolverConfig()
        assert cfg.epsilon == 0.0 and cfg.max_iters == 20000
        assert cfg.tol_primal == 1e-8 and cfg.tol_gap == 1e-6

    @pytest.mark.parametrize("kwargs", [
        {"epsilon": -0.5}, {"max_iters": 0}, {"norm": "l2"},
        {"tau": 0.0}, {"sigma": -1.0},
    ])
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(ValueError):
            SolverConfig(**kwargs)


class TestCram:
    def test_square_unitary_has_unique_solution(self, rng):
        frame = build_subsampled_dft(8, 8, 1)
        y = random_complex(rng, 8)
        result = solve_cram(frame, y, SolverConfig(tol_gap=1e-9))
        np.testing.assert_allclose(result.x, frame.adjoint(y), atol=1e-7)
        assert result.gap <= 1e-8
        assert result.converged

    def test_symmetric_split_with_analytic_dual(self):
        result = solve_cram(ONE_TWO, [1.0], SolverConfig(tol_gap=1e-9))
        np.testing.assert_allclose(result.x, [0.5, 0.5], atol=1e-7)
        assert result.primal_objective == pytest.approx(0.5, abs=1e-7)
        # the dual optimum is z = 0.5: objective Re(y^H z) = 0.5, ||D^H z||_1 = 1
        np.testing.assert_allclose(result.dual, [0.5], atol=1e-7)
        assert result.dual_objective == pytest.approx(0.5, abs=1e-9)

    def test_generous_epsilon_returns_zero(self, rng):
        frame = build_gaussian(12, 5, 4)
        y = random_complex(rng, 5)
        result = solve_cram(frame, y, SolverConfig(epsilon=1.1 * np.linalg.norm(y)))
        np.testing.assert_array_equal(result.x, np.zeros(12))
        assert result.converged

    def test_step_size_condition_enforced(self, rng):
        frame = build_gaussian(12, 5, 4)
        with pytest.raises(ValueError, match="tau\\*sigma"):
            solve_cram(frame, random_complex(rng, 5),
                       SolverConfig(tau=10.0, sigma=10.0))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_nonfinite_input_detected(self):
        y = np.array([np.inf + 0j])
        with pytest.raises(FloatingPointError, match="diverged"):
            solve_cram(ONE_TWO, y, SolverConfig(max_iters=10))

    def test_elementwise_v_update_agrees_for_scalar_residual(self, rng):
        # disk clipping and ball projection coincide when M = 1
        frame = build_dense(random_complex(rng, 3).reshape(1, 3))
        y = random_complex(rng, 1)
        cfg = SolverConfig(epsilon=0.3 * float(np.linalg.norm(y)))
        ball = solve_cram(frame, y, cfg)
        elem = solve_cram(frame, y, cfg, v_update="elementwise")
        assert ball.converged
        assert abs(ball.primal_objective - elem.primal_objective) \
            <= 1e-7 * max(1.0, ball.primal_objective)

    def test_elementwise_v_update_relaxes_the_ball(self, rng):
        # per-entry clipping admits residuals up to eps*sqrt(M), so its
        # objective can only be lower; this is why the ball is the default
        frame = build_gaussian(16, 6, 8)
        y = unit_signal(rng, 6)
        cfg = SolverConfig(epsilon=0.2)
        ball = solve_cram(frame, y, cfg)
        elem = solve_cram(frame, y, cfg, v_update="elementwise")
        assert ball.converged
        assert elem.primal_objective <= ball.primal_objective + 1e-7

    def test_adaptive_mode_converges(self, rng):
        frame = build_gaussian(32, 8, 3)
        y = unit_signal(rng, 8)
        result = solve_cram(frame, y, SolverConfig(adaptive=True))
        assert result.converged and result.relative_gap <= 1e-6


class TestCramp:
    def test_parseval_two_by_four(self):
        matrix = np.hstack([np.eye(2), np.eye(2)]) / np.sqrt(2)
        result = solve_cramp(build_dense(matrix), [np.sqrt(2), 0.0])
        assert result.primal_objective == pytest.approx(1.0, abs=1e-8)
        x = result.x
        assert x[0] == pytest.approx(1.0, abs=1e-6)
        assert x[2] == pytest.approx(1.0, abs=1e-6)
        assert x[1] == pytest.approx(-x[3], abs=1e-6)
        assert abs(x[1]) <= 1.0 + 1e-9

    def test_early_termination_is_still_feasible(self, rng):
        frame = build_subsampled_dft(32, 12, 2)
        y = random_complex(rng, 12)
        result = solve_cramp(frame, y, SolverConfig(max_iters=3))
        assert not result.converged
        assert result.residual_feasibility <= 1e-10 * np.linalg.norm(y)

    def test_square_unitary_one_projection(self, rng):
        frame = build_subsampled_dft(16, 16, 5)
        y = random_complex(rng, 16)
        result = solve_cramp(frame, y)
        np.testing.assert_allclose(result.x, frame.adjoint(y), atol=1e-9)

    def test_epsilon_rejected(self):
        frame = build_subsampled_dft(8, 4, 1)
        with pytest.raises(ValueError, match="use CRAM"):
            solve_cramp(frame, np.ones(4), SolverConfig(epsilon=0.1))

    def test_non_tight_frame_rejected(self, rng):
        frame = build_gaussian(16, 8, 3)
        with pytest.raises(ValueError, match="Parseval or tight"):
            solve_cramp(frame, random_complex(rng, 8))

    def test_tight_frame_scaled_projection(self, rng):
        base = build_subsampled_dft(16, 6, 7)
        tight = build_dense(2.0 * base.as_matrix())  # A = B = 4
        y = random_complex(rng, 6)
        result = solve_cramp(tight, y)
        assert result.residual_feasibility <= 1e-10 * np.linalg.norm(y)
        assert result.converged

    def test_iterate_feasibility_tracking(self, rng):
        frame = build_subsampled_dft(64, 16, 9)
        y = unit_signal(rng, 16)
        result = solve_cramp(frame, y, SolverConfig(tau=16 / 8.0))
        assert result.max_iterate_residual is not None
        assert result.max_iterate_residual <= 1e-10 * np.linalg.norm(y)
        untracked = solve_cramp(frame, y, SolverConfig(tau=16 / 8.0),
                                track_iterate_residuals=False)
        assert untracked.max_iterate_residual is None


class TestAgreementAndInvariants:
    def test_cram_and_cramp_agree_on_parseval(self, rng):
        for seed in range(3):
            frame = build_subsampled_dft(48, 12, seed)
            y = unit_signal(rng, 12)
            a = solve_cram(frame, y, SolverConfig())
            b = solve_cramp(frame, y, SolverConfig(tau=16 / np.sqrt(48)))
            assert a.converged and b.converged
            assert abs(a.primal_objective - b.primal_objective) \
                <= 1e-6 * b.primal_objective
            # duality gaps are nonnegative up to roundoff
            assert a.gap >= -1e-9 and b.gap >= -1e-9

    def test_converged_feasibility_contract(self, rng):
        # on convergence the split residual stays within eps + tol*||y||
        frame = build_gaussian(24, 8, 15)
        y = unit_signal(rng, 8)
        for eps in (0.0, 0.25):
            cfg = SolverConfig(epsilon=eps)
            result = solve_cram(frame, y, cfg)
            assert result.converged
            cap = eps + cfg.tol_primal * float(np.linalg.norm(y))
            assert result.residual_feasibility <= cap
            assert result.gap >= -1e-9

    def test_objective_monotone_in_epsilon(self, rng):
        frame = build_gaussian(24, 8, 6)
        y = unit_signal(rng, 8)
        objs = [solve_cram(frame, y, SolverConfig(epsilon=e)).primal_objective
                for e in (0.0, 0.1, 0.3, 0.6)]
        for lo, hi in zip(objs, objs[1:]):
            assert hi <= lo + 1e-8

    def test_scaling_equivariance_cramp(self, rng):
        frame = build_subsampled_dft(32, 8, 11)
        y = unit_signal(rng, 8)
        base = solve_cramp(frame, y)
        scaled = solve_cramp(frame, 4.0 * y)
        assert scaled.primal_objective == pytest.approx(
            4.0 * base.primal_objective, rel=1e-8)

    def test_scaling_equivariance_cram(self, rng):
        # fixed iteration budget: scale-aware steps make runs bit-equivalent
        frame = build_gaussian(16, 5, 9)
        y = unit_signal(rng, 5)
        cfg = SolverConfig(max_iters=1500, tol_gap=0.0)
        base = solve_cram(frame, y, cfg)
        scaled = solve_cram(frame, 4.0 * y, cfg)
        assert scaled.primal_objective == pytest.approx(
            4.0 * base.primal_objective, rel=1e-12)

    def test_least_squares_has_smaller_l2(self, rng):
        frame = build_gaussian(24, 8, 2)
        y = unit_signal(rng, 8)
        dem = solve_cram(frame, y, SolverConfig())
        ls = solve_least_squares(frame, y, 0.0)
        assert np.linalg.norm(ls) <= np.linalg.norm(dem.x) + 1e-9

    def test_weak_duality_random_feasible_points(self, rng):
        frame = build_gaussian(20, 6, 13)
        y = unit_signal(rng, 6)
        opt = solve_cram(frame, y, SolverConfig()).primal_objective
        for _ in range(25):
            z = random_complex(rng, 6)
            z /= np.abs(frame.adjoint(z)).sum()  # dual feasible for p = inf
            assert dual_objective(frame, y, z, 0.0, "inf") <= opt + 1e-9

    def test_inf_tilde_objective_ratio(self, rng):
        frame = build_subsampled_dft(32, 8, 4)
        y = unit_signal(rng, 8)
        tau = 16 / np.sqrt(32)
        a = solve_cramp(frame, y, SolverConfig(tau=tau))
        b = solve_cramp(frame, y, SolverConfig(tau=tau, norm="inf-tilde"))
        assert b.primal_objective == pytest.approx(norm_inf_tilde(b.x), abs=1e-12)
        ratio = b.primal_objective / a.primal_objective
        assert 1 / np.sqrt(2) - 1e-6 <= ratio <= 1 + 1e-6


class TestLeastSquares:
    def test_rank_one_minimum_norm(self):
        np.testing.assert_allclose(solve_least_squares(ONE_TWO, [1.0], 0.0),
                                   [0.5, 0.5], atol=1e-12)

    def test_generous_epsilon_returns_zero(self, rng):
        frame = build_gaussian(10, 4, 3)
        y = random_complex(rng, 4)
        out = solve_least_squares(frame, y, float(np.linalg.norm(y)))
        np.testing.assert_array_equal(out, np.zeros(10))

    def test_residual_hits_budget_exactly(self, rng):
        for seed in range(3):
            frame = build_gaussian(32, 12, seed)
            y = random_complex(rng, 12)
            eps = 0.3 * float(np.linalg.norm(y))
            x = solve_least_squares(frame, y, eps)
            resid = float(np.linalg.norm(y - frame.apply(x)))
            assert resid == pytest.approx(eps, rel=1e-9)

    def test_parseval_epsilon_path(self, rng):
        frame = build_subsampled_dft(32, 8, 5)
        y = random_complex(rng, 8)
        eps = 0.25 * float(np.linalg.norm(y))
        x = solve_least_squares(frame, y, eps)
        assert float(np.linalg.norm(y - frame.apply(x))) == pytest.approx(
            eps, rel=1e-9)

    def test_singular_gram_rejected(self):
        frame = build_dense(np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]))
        with pytest.raises(ValueError, match="singular"):
            solve_least_squares(frame, [1.0, 1.0], 0.0)


class TestDualObjective:
    def test_matched_filter_feasible_point(self, rng):
        frame = build_gaussian(16, 6, 7)
        y = random_complex(rng, 6)
        eps = 0.1
        z = y / np.abs(frame.adjoint(y)).sum()
        ny = float(np.linalg.norm(y))
        expected = (ny ** 2 - eps * ny) / np.abs(frame.adjoint(y)).sum()
        assert dual_objective(frame, y, z, eps, "inf") == pytest.approx(
            expected, rel=1e-12)

    def test_one_by_two_zero_gap(self):
        assert dual_objective(ONE_TWO, [1.0], [0.5], 0.0, "inf") == \
            pytest.approx(0.5)

    def test_epsilon_at_signal_norm_gives_nonpositive(self, rng):
        frame = build_gaussian(8, 4, 1)
        y = random_complex(rng, 4)
        ny = float(np.linalg.norm(y))
        for c in (0.1, 0.7):
            z = c * y / np.abs(frame.adjoint(y)).sum()
            assert dual_objective(frame, y, z, ny, "inf") <= 1e-12

    def test_constraint_violation_rejected(self, rng):
        frame = build_gaussian(8, 4, 1)
        z = random_complex(rng, 4)
        z *= 10.0 / np.abs(frame.adjoint(z)).sum()
        with pytest.raises(ValueError, match="rescale"):
            dual_objective(frame, np.ones(4), z, 0.0, "inf")

    def test_dual_norm_indices(self, rng):
        frame = build_gaussian(8, 4, 1)
        y = random_complex(rng, 4)
        z = random_complex(rng, 4)
        z2 = z / np.linalg.norm(frame.adjoint(z), 2)
        zi = z / np.abs(frame.adjoint(z)).max()
        assert np.isfinite(dual_objective(frame, y, z2, 0.0, 2))
        assert np.isfinite(dual_objective(frame, y, zi, 0.0, 1))


class TestCertify:
    def test_converged_run_is_certified(self, rng):
        frame = build_gaussian(64, 16, 21)
        y = unit_signal(rng, 16)
        cfg = SolverConfig()
        result = solve_cram(frame, y, cfg)
        report = certify(result, frame, y, cfg)
        assert isinstance(report, GapReport)
        assert report.certified and report.relative_gap <= 1e-6

    def test_hand_built_optimal_pair(self):
        result = solve_cram(ONE_TWO, [1.0], SolverConfig(tol_gap=1e-10))
        report = certify(result, ONE_TWO, [1.0], SolverConfig())
        assert report.relative_gap <= 1e-9

    def test_zero_dual_is_weak_but_valid(self, rng):
        frame = build_subsampled_dft(16, 4, 3)
        y = unit_signal(rng, 4)
        result = solve_cramp(frame, y, SolverConfig(tau=16 / 4.0))
        result.dual = np.zeros(4, dtype=complex)
        report = certify(result, frame, y, SolverConfig())
        assert report.dual_objective == 0.0
        assert report.relative_gap == pytest.approx(
            result.primal_objective / max(1.0, result.primal_objective))

    def test_result_json_roundtrip(self, rng):
        frame = build_subsampled_dft(16, 4, 3)
        y = unit_signal(rng, 4)
        result = solve_cramp(frame, y, SolverConfig(tau=4.0))
        doc = result.to_json_dict()
        assert {"primalObjective", "dualObjective", "gap", "relativeGap",
                "iterations", "residualFeasibility", "converged",
                "seconds"} <= doc.keys()
