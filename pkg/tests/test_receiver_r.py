import math

import numpy as np
import pytest

from qibf.errors import DegenerateDensityError, UnsupportedDimensionError
from qibf.gridpdf import GridDensity, UniformGrid, mean_cov, trapezoid_mass
from qibf.model import LinearGaussianModel, replay, simulate
from qibf.particle import oracle_state_cells
from qibf.quantizer import build_uniform_midrise, interval_probability
from qibf.receiver_r import (
    r_init,
    r_mean,
    r_predict,
    r_transmit,
    r_update,
    run_method_r,
    run_method_r_receiver,
)
from tests.conftest import stretch


def _phi(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)


def _Phi(x):
    return 0.5 * (1 + math.erf(x / math.sqrt(2)))


class TestInit:
    def test_prior_moments(self, case2_model):
        b = r_init(case2_model)
        m, c = mean_cov(b.density)
        assert m[0] == pytest.approx(0.0, abs=1e-12)
        assert c[0, 0] == pytest.approx(0.02, abs=2e-6)
        assert trapezoid_mass(b.density) == pytest.approx(1.0, abs=1e-9)

    def test_vector_state_rejected(self):
        m = LinearGaussianModel(
            A_seq=np.eye(2), B_seq=np.zeros((2, 1)), C_seq=np.array([[1.0, 0.0]]),
            Q_seq=np.eye(2) * 0.01, R_seq=np.array([[0.01]]),
            x0_mean=np.zeros(2), x0_cov=np.eye(2) * 0.01, horizon=2,
        )
        with pytest.raises(UnsupportedDimensionError):
            r_init(m)


class TestMean:
    def test_symmetric_belief(self, case2_model):
        assert r_mean(r_init(case2_model)) == pytest.approx(0.0, abs=1e-10)

    def test_case2_time0_innovation(self, case2_config, case_quantizer):
        model = case2_config.model
        traj = replay(model, None, case2_config.realization)
        b = r_init(model)
        xp = r_mean(b)
        iota0 = float(traj.y[0, 0]) - xp
        assert iota0 == pytest.approx(0.0798, abs=1e-4)
        cell = case_quantizer.cell_of(r_transmit(model, 0, case_quantizer, traj.y[0], xp))
        assert (cell.lower, cell.upper) == pytest.approx((0.0, 0.1555), abs=1e-4)

    def test_translation_equivariance(self, case2_model):
        b = r_init(case2_model)
        g = b.density.grid
        shifted_grid = UniformGrid((g.lower[0] + 0.3,), (g.upper[0] + 0.3,), g.count)
        from qibf.receiver_r import StateBelief

        b2 = StateBelief(GridDensity(shifted_grid, b.density.values), 0, "predicted")
        assert r_mean(b2) - r_mean(b) == pytest.approx(0.3, abs=1e-10)


class TestPredict:
    def test_near_identity_kernel(self):
        # A=1 and Q -> 0: predicting barely changes the belief
        m = LinearGaussianModel.constant(1.0, 0.0, 1.0, 1e-8, 0.01, 0.0, 0.02, horizon=3)
        b = r_init(m)
        from qibf.receiver_r import StateBelief

        filt = StateBelief(b.density, 0, "filtered")
        pred = r_predict(filt, m)
        w = b.density.grid.trapezoid_weights(0)
        tv = 0.5 * float(np.sum(w * np.abs(pred.density.values - b.density.values)))
        assert tv < 1e-3

    def test_gaussian_push_through(self, case2_model):
        from qibf.receiver_r import StateBelief

        b = r_init(case2_model)
        filt = StateBelief(b.density, 0, "filtered")
        pred = r_predict(filt, case2_model)
        m, c = mean_cov(pred.density)
        assert m[0] == pytest.approx(0.95 * 0.0, abs=1e-8)
        assert c[0, 0] == pytest.approx(0.95**2 * 0.02 + 0.01, abs=2e-5)
        assert pred.k == 1 and pred.kind == "predicted"

    def test_predict_requires_filtered(self, case2_model):
        with pytest.raises(ValueError):
            r_predict(r_init(case2_model), case2_model)

    def test_mass_is_one_after_predict(self, case2_model):
        from qibf.receiver_r import StateBelief

        filt = StateBelief(r_init(case2_model).density, 0, "filtered")
        pred = r_predict(filt, case2_model)
        assert trapezoid_mass(pred.density) == pytest.approx(1.0, abs=1e-9)
        assert pred.raw_mass == pytest.approx(1.0, abs=2e-3)


class TestTransmit:
    def test_case2_time1_cell(self, case2_model, case_quantizer):
        # the innovation value is given; transmit only quantizes it
        sym = r_transmit(case2_model, 1, case_quantizer, [-0.1853 + 0.0], 0.0)
        cell = case_quantizer.cell_of(sym)
        assert (cell.lower, cell.upper) == pytest.approx((-0.3111, -0.1555), abs=1e-4)

    def test_boundary_convention(self, case2_model, case_quantizer):
        sym = r_transmit(case2_model, 0, case_quantizer, [0.42], 0.42)
        cell = case_quantizer.cell_of(sym)
        assert cell.upper == pytest.approx(0.0, abs=1e-15)


class TestUpdate:
    def test_full_line_cell_is_uninformative(self, case2_model):
        q1 = build_uniform_midrise(1, 1.0)
        cell = q1.cell_of(1)
        both = q1.cells()
        full_line = type(cell)(-math.inf, math.inf, 0.0, 0)
        b = r_init(case2_model)
        out = r_update(b, case2_model, 0, full_line, r_mean(b))
        assert np.max(np.abs(out.density.values - b.density.values)) <= 1e-12
        assert both[0].lower == -math.inf and both[1].upper == math.inf

    def test_sharp_truncation_at_tiny_r(self):
        m = LinearGaussianModel.constant(1.0, 0.0, 1.0, 0.01, 1e-10, 0.0, 0.02, horizon=2)
        b = r_init(m)
        from qibf.quantizer import QuantCell

        cell = QuantCell(0.0, 0.1555, 0.07, 0)
        out = r_update(b, m, 0, cell, 0.0)
        xs = out.density.grid.axis(0)
        w = out.density.grid.trapezoid_weights(0)
        outside = (xs <= -1e-4) | (xs > 0.1555 + 1e-4)
        assert float(np.sum(w[outside] * out.density.values[outside])) < 1e-6

    def test_time0_mean_against_bivariate_gaussian_oracle(self, case2_config, case_quantizer):
        # At time 0 the joint of (x, innovation) is exactly Gaussian, so the
        # filtered mean has the closed form (cov/var) * E[iota | cell].
        model = case2_config.model
        b = r_init(model)
        cell = case_quantizer.cell_of(case_quantizer.quantize(0.0798))
        out = r_update(b, model, 0, cell, 0.0)
        m, _ = mean_cov(out.density)
        zu = cell.upper / math.sqrt(0.03)
        e_iota = math.sqrt(0.03) * (_phi(0.0) - _phi(zu)) / (_Phi(zu) - 0.5)
        want = (0.02 / 0.03) * e_iota
        assert want == pytest.approx(0.0484666, abs=1e-6)  # frozen oracle value
        assert m[0] == pytest.approx(want, abs=1e-5)

    def test_likelihood_sums_to_one_pointwise(self, case2_model, case_quantizer):
        xs = np.linspace(-0.8, 0.8, 101)
        total = np.zeros_like(xs)
        for cell in case_quantizer.cells():
            total += interval_probability(cell.lower, cell.upper, xs - 0.05, 0.01)
        assert np.max(np.abs(total - 1.0)) <= 1e-12

    def test_incompatible_cell_degenerates(self):
        m = LinearGaussianModel.constant(1.0, 0.0, 1.0, 0.01, 1e-10, 0.0, 0.02, horizon=2)
        b = r_init(m)
        from qibf.quantizer import QuantCell

        # the grid spans +-6 sigma ~ +-0.85; a far cell has no support
        cell = QuantCell(5.0, 6.0, 5.5, 0)
        with pytest.raises(DegenerateDensityError):
            r_update(b, m, 0, cell, 0.0)


class TestRunAndSynchrony:
    def test_transmitter_receiver_bit_identical(self, case2_model, case_quantizer):
        model = stretch(case2_model, 15)
        _, traj = simulate(model, None, seed=8)
        tx = run_method_r(model, case_quantizer, traj.y[:, 0])
        rx = run_method_r_receiver(model, case_quantizer, tx["symbol"])
        assert np.array_equal(tx["x_pred_mean"], rx["x_pred_mean"])
        for a, b in zip(tx["filtered"], rx["filtered"]):
            assert np.array_equal(a.density.values, b.density.values)

    def test_normalization_every_step(self, case2_model, case_quantizer):
        model = stretch(case2_model, 15)
        _, traj = simulate(model, None, seed=8)
        log = run_method_r(model, case_quantizer, traj.y[:, 0])
        for b in log["predicted"] + log["filtered"]:
            assert abs(trapezoid_mass(b.density) - 1.0) <= 1e-9

    def test_against_particle_oracle(self, case2_model, case_quantizer):
        model = stretch(case2_model, 12)
        _, traj = simulate(model, None, seed=3)
        log = run_method_r(model, case_quantizer, traj.y[:, 0])
        means = np.array([mean_cov(b.density)[0][0] for b in log["filtered"]])
        trace = oracle_state_cells(
            model, case_quantizer, log["symbol"], log["x_pred_mean"],
            n_particles=50_000, seed=77,
        )
        assert np.all(np.abs(means - trace.mean) <= 3.0 * trace.std_err)
