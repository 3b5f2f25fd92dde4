import numpy as np
import pytest

from qibf.errors import DimensionMismatchError
from qibf.model import (
    LinearGaussianModel,
    NoiseRealization,
    measure,
    model_from_config,
    model_to_config,
    realization_from_config,
    realization_to_config,
    replay,
    sample_gaussian,
    simulate,
    step_truth,
)
from tests.conftest import stretch


class TestStepTruth:
    def test_paper_time0(self, case2_model):
        x1 = step_truth(case2_model, 0, [-0.0319], [0.0], [-0.1089])
        assert x1[0] == pytest.approx(-0.1392, abs=1e-4)

    def test_paper_time2(self, case2_model):
        x3 = step_truth(case2_model, 2, [-0.0770], [0.0], [0.1544])
        assert x3[0] == pytest.approx(0.0813, abs=1e-4)

    def test_identity_case(self):
        m = LinearGaussianModel.constant(1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, horizon=1)
        x = step_truth(m, 0, [0.42], [0.0], [0.0])
        assert x[0] == 0.42

    def test_dimension_error_names_operand(self, case2_model):
        with pytest.raises(DimensionMismatchError) as err:
            step_truth(case2_model, 0, [1.0, 2.0], [0.0], [0.0])
        assert "x_k" in str(err.value)


class TestMeasure:
    def test_paper_time0(self, case2_model):
        y0 = measure(case2_model, 0, [-0.0319], [0.1117])
        assert y0[0] == pytest.approx(0.0798, abs=1e-4)

    def test_noise_free(self, case2_model):
        assert measure(case2_model, 0, [0.37], [0.0])[0] == pytest.approx(0.37)

    def test_row_selector(self):
        m = LinearGaussianModel(
            A_seq=np.eye(2), B_seq=np.zeros((2, 1)), C_seq=np.array([[1.0, 0.0]]),
            Q_seq=np.zeros((2, 2)), R_seq=np.array([[1.0]]),
            x0_mean=np.zeros(2), x0_cov=np.eye(2), horizon=1,
        )
        y = measure(m, 0, [3.0, 7.0], [0.5])
        assert y[0] == pytest.approx(3.5)


class TestSimulate:
    def test_determinism(self, case2_model):
        r1, t1 = simulate(case2_model, None, seed=7)
        r2, t2 = simulate(case2_model, None, seed=7)
        assert np.array_equal(r1.w, r2.w)
        assert np.array_equal(r1.v, r2.v)
        assert np.array_equal(t1.x, t2.x)
        assert np.array_equal(t1.y, t2.y)

    def test_different_seeds_differ(self, case2_model):
        _, t1 = simulate(case2_model, None, seed=1)
        _, t2 = simulate(case2_model, None, seed=2)
        assert not np.array_equal(t1.x, t2.x)

    def test_deterministic_when_noiseless(self):
        m = LinearGaussianModel.constant(
            0.9, 0.0, 1.0, 0.0, 1e-300, 0.5, 0.0, horizon=4)
        # Q = 0, x0_cov = 0: trajectory is A^k x0 exactly
        _, t = simulate(m, None, seed=11)
        assert np.allclose(t.x[:, 0], 0.5 * 0.9 ** np.arange(5))

    def test_measurement_noise_variance_lln(self, case2_model):
        model = stretch(case2_model, 2000)
        real, _ = simulate(model, None, seed=3)
        var = float(np.var(real.v[:, 0]))
        assert abs(var - 0.01) / 0.01 <= 0.10

    def test_process_noise_covariance_lln(self, case2_model):
        model = stretch(case2_model, 10_000)
        real, _ = simulate(model, None, seed=4)
        emp = float(np.var(real.w[:, 0]))
        assert abs(emp - 0.01) / 0.01 <= 0.05


class TestReplay:
    def test_paper_case2_trajectory(self, case2_config):
        traj = replay(case2_config.model, None, case2_config.realization)
        want = [-0.0319, -0.1392, -0.0770, 0.0813, -0.0720]
        assert np.allclose(traj.x[:5, 0], want, atol=1e-4)

    def test_zero_realization_zero_trajectory(self, case2_model):
        r = NoiseRealization(
            x0=np.zeros(1), w=np.zeros((5, 1)), v=np.zeros((5, 1)))
        traj = replay(case2_model, None, r)
        assert np.all(traj.x == 0.0)
        assert np.all(traj.y == 0.0)

    def test_roundtrip_with_simulate(self, case2_model):
        real, traj = simulate(case2_model, None, seed=5)
        again = replay(case2_model, None, real)
        assert np.array_equal(traj.x, again.x)
        assert np.array_equal(traj.y, again.y)

    def test_length_mismatch(self, case2_model):
        r = NoiseRealization(np.zeros(1), np.zeros((3, 1)), np.zeros((3, 1)))
        with pytest.raises(DimensionMismatchError):
            replay(case2_model, None, r)


class TestSampleGaussian:
    def test_singular_covariance_accepted(self, rng):
        cov = np.array([[1.0, 1.0], [1.0, 1.0]])  # rank one
        xs = np.array([sample_gaussian(rng, [0.0, 0.0], cov) for _ in range(2000)])
        # components must be (almost surely) identical under rank-1 coupling
        assert np.max(np.abs(xs[:, 0] - xs[:, 1])) <= 1e-10

    def test_indefinite_covariance_rejected(self, rng):
        with pytest.raises(ValueError):
            sample_gaussian(rng, [0.0, 0.0], np.array([[1.0, 0.0], [0.0, -0.5]]))


class TestValidation:
    def test_r_must_be_pd(self):
        with pytest.raises(ValueError):
            LinearGaussianModel.constant(1.0, 0.0, 1.0, 0.01, 0.0, 0.0, 0.02, horizon=2)

    def test_q_may_be_zero_but_not_indefinite(self):
        LinearGaussianModel.constant(1.0, 0.0, 1.0, 0.0, 0.01, 0.0, 0.02, horizon=2)
        with pytest.raises(ValueError):
            LinearGaussianModel.constant(1.0, 0.0, 1.0, -0.01, 0.01, 0.0, 0.02, horizon=2)


class TestConfigSchema:
    def test_model_roundtrip(self, case2_model):
        cfg = model_to_config(case2_model)
        again = model_from_config(cfg)
        assert np.array_equal(again.A_seq, case2_model.A_seq)
        assert np.array_equal(again.Q_seq, case2_model.Q_seq)
        assert again.horizon == case2_model.horizon

    def test_time_varying_roundtrip(self):
        A = np.stack([np.array([[0.9]]), np.array([[1.1]])])
        m = LinearGaussianModel(
            A_seq=A, B_seq=np.zeros((1, 1)), C_seq=np.eye(1),
            Q_seq=np.eye(1) * 0.1, R_seq=np.eye(1) * 0.1,
            x0_mean=np.zeros(1), x0_cov=np.eye(1), horizon=2,
        )
        cfg = model_to_config(m)
        assert "A_seq" in cfg and "Q" in cfg
        again = model_from_config(cfg)
        assert np.array_equal(again.A_seq, m.A_seq)

    def test_realization_roundtrip(self, case2_config):
        r = case2_config.realization
        again = realization_from_config(realization_to_config(r))
        assert np.array_equal(again.w, r.w)
        assert np.array_equal(again.v, r.v)
        assert np.array_equal(again.x0, r.x0)
