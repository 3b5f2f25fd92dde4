import numpy as np
import pytest

from qibf.kalman import (
    covariance_schedule,
    init_state,
    innovation_variance,
    kf_measurement_update,
    kf_time_update,
    predictor_gain,
    run_filter,
    whiteness_statistic,
)
from qibf.model import simulate
from tests.conftest import stretch


class TestMeasurementUpdate:
    def test_case2_time0_gain(self, case2_model):
        state = init_state(case2_model)
        _, _, L = kf_measurement_update(case2_model, 0, state, [0.0798])
        assert L[0, 0] == pytest.approx(0.02 / 0.03, abs=1e-4)

    def test_case2_time0_innovation(self, case2_model):
        state = init_state(case2_model)
        _, eps, _ = kf_measurement_update(case2_model, 0, state, [0.0798])
        assert eps[0] == pytest.approx(0.0798, abs=1e-12)

    def test_zero_prior_uncertainty_freezes_estimate(self, case2_model):
        from qibf.kalman import KalmanState

        state = KalmanState(x_pred=np.array([0.3]), P_pred=np.array([[0.0]]), k=0)
        new, _, L = kf_measurement_update(case2_model, 0, state, [5.0])
        assert L[0, 0] == 0.0
        assert new.x_filt[0] == pytest.approx(0.3)

    def test_joseph_equals_plain_form(self, case2_model):
        model = stretch(case2_model, 40)
        _, traj = simulate(model, None, seed=0)
        state = init_state(model)
        for k in range(40):
            new, _, L = kf_measurement_update(model, k, state, traj.y[k])
            plain = (np.eye(1) - L @ model.C_seq[k]) @ state.P_pred
            assert np.allclose(new.P_filt, plain, rtol=1e-10, atol=1e-15)
            state = kf_time_update(model, k, new)


class TestTimeUpdate:
    def test_case2_covariance_chain(self, case2_model):
        # paper-pinned predicted variances
        sched = covariance_schedule(case2_model)
        assert sched["P_pred"][2, 0, 0] == pytest.approx(0.0156, abs=1e-4)
        assert sched["P_pred"][3, 0, 0] == pytest.approx(0.0155, abs=1e-4)

    def test_identity_no_noise_is_fixed_point(self):
        from qibf.model import LinearGaussianModel
        from qibf.kalman import KalmanState

        m = LinearGaussianModel.constant(1.0, 0.0, 1.0, 0.0, 0.01, 0.0, 0.02, horizon=2)
        state = KalmanState(
            x_pred=np.array([0.1]), P_pred=np.array([[0.3]]),
            x_filt=np.array([0.1]), P_filt=np.array([[0.3]]), k=0)
        new = kf_time_update(m, 0, state)
        assert new.x_pred[0] == pytest.approx(0.1)
        assert new.P_pred[0, 0] == pytest.approx(0.3)

    def test_requires_filtered_state(self, case2_model):
        with pytest.raises(ValueError):
            kf_time_update(case2_model, 0, init_state(case2_model))


class TestInnovationVariance:
    def test_case2_time0(self, case2_model):
        assert innovation_variance(case2_model, 0, init_state(case2_model))[0, 0] \
            == pytest.approx(0.03, abs=1e-12)

    def test_case1_time0(self, case1_model):
        assert innovation_variance(case1_model, 0, init_state(case1_model))[0, 0] \
            == pytest.approx(0.02001, abs=1e-12)

    def test_steady_state_from_riccati(self, case2_model):
        model = stretch(case2_model, 400)
        sched = covariance_schedule(model)
        steady = sched["P_pred"][-1, 0, 0]
        # fixed point of sigma = A^2 sigma R / (sigma + R) + Q
        sigma = 0.02
        for _ in range(2000):
            sigma = 0.95**2 * sigma * 0.01 / (sigma + 0.01) + 0.01
        assert steady == pytest.approx(sigma, abs=1e-10)
        assert sched["S"][-1, 0, 0] == pytest.approx(sigma + 0.01, abs=1e-10)
        assert sched["S"][-1, 0, 0] == pytest.approx(0.0255, abs=1e-4)


class TestPredictorGain:
    def test_case2_time0(self, case2_model):
        state = init_state(case2_model)
        _, _, L = kf_measurement_update(case2_model, 0, state, [0.0])
        K = predictor_gain(case2_model, 0, L)
        assert K[0, 0] == pytest.approx(0.95 * 0.6667, abs=1e-4)


class TestWhitenessStatistic:
    def test_white_sequence_inside_band(self):
        T = 2000
        band = 3.0 / np.sqrt(T)
        passes = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            e = rng.standard_normal(T)
            rho = whiteness_statistic(e, np.ones(T), 10)
            if np.all(np.abs(rho) <= band):
                passes += 1
        assert passes >= 99

    def test_constant_sequence_rejected(self):
        with pytest.raises(ValueError):
            whiteness_statistic(np.ones(500), np.ones(500), 3)

    def test_strong_ar1_detected(self):
        rng = np.random.default_rng(0)
        e = np.empty(2000)
        e[0] = rng.standard_normal()
        for k in range(1, 2000):
            e[k] = 0.8 * e[k - 1] + rng.standard_normal()
        rho = whiteness_statistic(e, np.ones(2000), 5)
        assert rho[0] > 3.0 / np.sqrt(2000)
        assert rho[0] == pytest.approx(0.8, abs=0.1)

    def test_short_sequence_rejected(self):
        with pytest.raises(ValueError):
            whiteness_statistic(np.ones(50), np.ones(50), 10)


class TestRunFilter:
    def test_covariances_are_realization_independent(self, case2_model):
        model = stretch(case2_model, 30)
        _, t1 = simulate(model, None, seed=1)
        _, t2 = simulate(model, None, seed=2)
        log1 = run_filter(model, t1.y)
        log2 = run_filter(model, t2.y)
        assert np.array_equal(log1["P_pred"], log2["P_pred"])
        assert np.array_equal(log1["P_filt"], log2["P_filt"])

    def test_matches_schedule(self, case2_model):
        model = stretch(case2_model, 30)
        _, traj = simulate(model, None, seed=1)
        log = run_filter(model, traj.y)
        sched = covariance_schedule(model)
        assert np.allclose(log["P_pred"], sched["P_pred"], atol=1e-12)
        assert np.allclose(log["K"], sched["K"], atol=1e-12)

    def test_filtered_cov_below_predicted(self, case2_model):
        model = stretch(case2_model, 30)
        _, traj = simulate(model, None, seed=1)
        log = run_filter(model, traj.y)
        assert np.all(log["P_filt"][:, 0, 0] <= log["P_pred"][:, 0, 0] + 1e-10)

    def test_innovations_are_white_on_long_run(self, case2_model):
        model = stretch(case2_model, 2000)
        _, traj = simulate(model, None, seed=42)
        log = run_filter(model, traj.y)
        rho = whiteness_statistic(log["eps"][:, 0], log["S"][:, 0, 0], 10)
        assert np.all(np.abs(rho) <= 3.0 / np.sqrt(2000))

    def test_misspecified_gain_breaks_whiteness(self, case2_model):
        # negative control: a fixed, deliberately wrong gain correlates the
        # one-step prediction errors at lag 1
        model = stretch(case2_model, 2000)
        _, traj = simulate(model, None, seed=0)
        y = traj.y[:, 0]
        x = 0.0
        eps = np.empty(2000)
        for k in range(2000):
            eps[k] = y[k] - x
            x = 0.95 * (x + 0.1 * eps[k])  # gain far below the optimal ~0.6
        rho = whiteness_statistic(eps, np.full(2000, 0.03), 5)
        assert abs(rho[0]) > 3.0 / np.sqrt(2000)
