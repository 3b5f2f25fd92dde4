import math

import numpy as np
import pytest

from qibf.errors import DegenerateDensityError
from qibf.gridpdf import (
    GridDensity,
    UniformGrid,
    default_grid,
    density_to_csv,
    gaussian_density,
    marginal,
    mean_cov,
    normalize,
    trapezoid_mass,
)


def line(lo, hi, n):
    return UniformGrid((lo,), (hi,), (n,))


class TestTrapezoidMass:
    def test_constant_one_on_unit_interval(self):
        g = line(0.0, 1.0, 101)
        d = GridDensity(g, np.ones(101))
        assert trapezoid_mass(d) == pytest.approx(1.0, abs=1e-12)

    def test_standard_normal_on_wide_grid(self):
        g = line(-8.0, 8.0, 401)
        d = gaussian_density(g, 0.0, 1.0)
        assert trapezoid_mass(d) == pytest.approx(1.0, abs=1e-6)

    def test_all_zero(self):
        g = line(0.0, 1.0, 11)
        d = GridDensity(g, np.zeros(11))
        assert trapezoid_mass(d) == 0.0

    def test_2d_product_density(self):
        g = UniformGrid((-6.0, -6.0), (6.0, 6.0), (201, 201))
        d = gaussian_density(g, [0.0, 0.0], np.eye(2))
        assert trapezoid_mass(d) == pytest.approx(1.0, abs=1e-6)


class TestNormalizeMoments:
    def test_normalize_gives_unit_mass(self):
        g = line(-5.0, 5.0, 201)
        d = gaussian_density(g, 1.0, 0.5)
        n = normalize(GridDensity(g, 3.7 * d.values))
        assert trapezoid_mass(n) == pytest.approx(1.0, abs=1e-12)

    def test_normalize_idempotent(self):
        g = line(-5.0, 5.0, 201)
        d = normalize(gaussian_density(g, 0.3, 0.2))
        again = normalize(d)
        assert np.max(np.abs(again.values - d.values)) <= 1e-12 * d.values.max()

    def test_zero_mass_raises(self):
        g = line(0.0, 1.0, 11)
        with pytest.raises(DegenerateDensityError):
            normalize(GridDensity(g, np.zeros(11)))

    def test_mean_of_symmetric_density_is_center(self):
        g = line(-8.0, 8.0, 401)
        m, _ = mean_cov(gaussian_density(g, 0.0, 1.0))
        assert abs(m[0]) <= 1e-8

    def test_variance_matches_quadrature(self):
        # frozen from the quadrature of the exact density
        g = line(-1.0, 1.0, 401)
        _, c = mean_cov(gaussian_density(g, 0.0, 0.02))
        assert c[0, 0] == pytest.approx(0.02, abs=1e-5)

    def test_mean_shift_equivariance(self):
        g = line(-6.0, 6.0, 301)
        d = gaussian_density(g, 0.0, 0.7)
        m0, _ = mean_cov(d)
        g2 = line(-6.0 + 0.5, 6.0 + 0.5, 301)
        d2 = GridDensity(g2, d.values)
        m1, _ = mean_cov(d2)
        assert m1[0] - m0[0] == pytest.approx(0.5, abs=1e-10)

    def test_2d_mean_cov(self):
        g = UniformGrid((-6.0, -8.0), (6.0, 8.0), (181, 241))
        cov = np.array([[1.0, 0.6], [0.6, 2.0]])
        d = gaussian_density(g, [0.2, -0.4], cov)
        m, c = mean_cov(d)
        assert np.allclose(m, [0.2, -0.4], atol=1e-7)
        assert np.allclose(c, cov, atol=1e-5)


class TestMarginal:
    def test_separable_density_recovers_factor(self):
        gx = np.linspace(-4, 4, 161)
        ge = np.linspace(-3, 3, 121)
        f = np.exp(-0.5 * gx**2)
        h = np.exp(-((ge - 0.5) ** 2))
        g = UniformGrid((-4.0, -3.0), (4.0, 3.0), (161, 121))
        d = GridDensity(g, np.outer(f, h))
        got = normalize(marginal(d, axis=0))
        want = normalize(GridDensity(line(-4.0, 4.0, 161), f))
        assert np.max(np.abs(got.values - want.values)) <= 1e-10

    def test_marginal_commutes_with_normalize(self):
        g = UniformGrid((-4.0, -4.0), (4.0, 4.0), (81, 81))
        d = gaussian_density(g, [0.0, 1.0], np.array([[1.0, 0.3], [0.3, 0.8]]))
        a = normalize(marginal(normalize(GridDensity(g, 2.5 * d.values)), axis=1))
        b = normalize(marginal(d, axis=1))
        assert np.max(np.abs(a.values - b.values)) <= 1e-12

    def test_marginal_needs_2d(self):
        with pytest.raises(ValueError):
            marginal(gaussian_density(line(-1, 1, 11), 0.0, 1.0), axis=0)


class TestRefinement:
    def test_trapezoid_error_drops_second_order(self):
        # truncated Gaussian on [-2, 2]: boundary derivatives are nonzero so
        # the trapezoid error follows the h^2 Euler-Maclaurin term
        exact = math.erf(2.0 / math.sqrt(2.0))
        errors = []
        for n in (51, 101, 201):
            d = gaussian_density(line(-2.0, 2.0, n), 0.0, 1.0)
            errors.append(abs(trapezoid_mass(d) - exact))
        assert errors[0] / errors[1] >= 3.5
        assert errors[1] / errors[2] >= 3.5


class TestValidation:
    def test_negative_values_rejected(self):
        g = line(0.0, 1.0, 11)
        vals = np.ones(11)
        vals[3] = -0.1
        with pytest.raises(ValueError):
            GridDensity(g, vals)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            GridDensity(line(0.0, 1.0, 11), np.ones(12))

    def test_bad_grid_rejected(self):
        with pytest.raises(ValueError):
            UniformGrid((1.0,), (0.0,), (11,))
        with pytest.raises(ValueError):
            UniformGrid((0.0,), (1.0,), (2,))
        with pytest.raises(ValueError):
            UniformGrid((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (5, 5, 5))

    def test_default_grid_policy(self):
        g = default_grid([1.0], [0.5])
        assert g.count == (201,)
        assert g.lower == (1.0 - 3.0,)
        assert g.upper == (1.0 + 3.0,)


class TestCsv:
    def test_roundtrip_1d(self, tmp_path):
        d = normalize(gaussian_density(line(-2.0, 2.0, 21), 0.0, 1.0))
        path = tmp_path / "d.csv"
        density_to_csv(d, path)
        rows = path.read_text().strip().splitlines()
        assert rows[0] == "x,density"
        assert len(rows) == 22
        x0, v0 = rows[1].split(",")
        assert float(x0) == -2.0
        assert float(v0) == d.values[0]

    def test_header_2d(self, tmp_path):
        g = UniformGrid((-1.0, -1.0), (1.0, 1.0), (5, 7))
        d = gaussian_density(g, [0.0, 0.0], np.eye(2))
        path = tmp_path / "d2.csv"
        density_to_csv(d, path)
        rows = path.read_text().strip().splitlines()
        assert rows[0] == "x,xerr,density"
        assert len(rows) == 1 + 5 * 7
