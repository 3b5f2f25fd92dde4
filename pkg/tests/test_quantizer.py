import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from qibf.errors import LloydMaxConvergenceError
from qibf.quantizer import (
    QuantCell,
    Quantizer,
    build_uniform_midrise,
    cell_probability,
    expected_distortion,
    interval_probability,
    lloyd_max_design,
)


class TestUniformMidrise:
    def test_paper_3bit(self):
        q = build_uniform_midrise(3, 0.6222)
        assert q.m == 8
        pos = q.breakpoints[q.breakpoints > 1e-12]
        assert pos == pytest.approx([0.1555, 0.3111, 0.4666], abs=1e-4)
        assert 0.0 in q.breakpoints
        # breakpoints mirror about zero
        assert np.allclose(q.breakpoints, -q.breakpoints[::-1])

    def test_one_bit(self):
        q = build_uniform_midrise(1, 0.5)
        assert q.m == 2
        assert q.breakpoints == pytest.approx([0.0])
        assert q.representatives == pytest.approx([-0.25, 0.25])

    def test_interior_representative_is_midpoint(self):
        q = build_uniform_midrise(3, 0.6222)
        cell = q.cell_of(4)  # (0, L]
        assert cell.lower == pytest.approx(0.0, abs=1e-15)
        assert cell.representative == pytest.approx(0.077775, abs=1e-9)
        assert cell.representative == pytest.approx((cell.lower + cell.upper) / 2)

    def test_edge_representatives_mirror(self):
        zeta = 0.6222
        q = build_uniform_midrise(3, zeta)
        L = 2 * zeta / 8
        assert q.representatives[0] == pytest.approx(-(zeta - L / 2))
        assert q.representatives[-1] == pytest.approx(zeta - L / 2)

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            build_uniform_midrise(0, 1.0)
        with pytest.raises(ValueError):
            build_uniform_midrise(3, 0.0)
        with pytest.raises(ValueError):
            build_uniform_midrise(3, -1.0)


class TestQuantizeDequantize:
    def test_paper_cells(self, case_quantizer):
        q = case_quantizer
        c = q.cell_of(q.quantize(0.1160))
        assert (c.lower, c.upper) == pytest.approx((0.0, 0.1555), abs=1e-4)
        c = q.cell_of(q.quantize(0.0798))
        assert (c.lower, c.upper) == pytest.approx((0.0, 0.1555), abs=1e-4)
        c = q.cell_of(q.quantize(-0.1853))
        assert (c.lower, c.upper) == pytest.approx((-0.3111, -0.1555), abs=1e-4)

    def test_saturation(self, case_quantizer):
        c = case_quantizer.cell_of(case_quantizer.quantize(10.0))
        assert c.upper == math.inf
        assert c.lower == pytest.approx(0.4666, abs=1e-4)

    def test_zero_lands_in_left_closed_cell(self, case_quantizer):
        # cells are (lower, upper]; zero belongs to (-0.1555, 0]
        c = case_quantizer.cell_of(case_quantizer.quantize(0.0))
        assert c.upper == pytest.approx(0.0, abs=1e-15)

    def test_breakpoint_belongs_to_lower_cell(self, case_quantizer):
        b = float(case_quantizer.breakpoints[4])
        sym = case_quantizer.quantize(b)
        assert case_quantizer.cell_of(sym).upper == pytest.approx(b)

    def test_nan_rejected(self, case_quantizer):
        with pytest.raises(ValueError):
            case_quantizer.quantize(float("nan"))

    def test_symbol_range_checked(self, case_quantizer):
        with pytest.raises(ValueError):
            case_quantizer.dequantize(8)
        with pytest.raises(ValueError):
            case_quantizer.cell_of(-1)

    def test_dict_roundtrip(self, case_quantizer):
        q2 = Quantizer.from_dict(case_quantizer.to_dict())
        assert np.array_equal(q2.breakpoints, case_quantizer.breakpoints)
        assert np.array_equal(q2.representatives, case_quantizer.representatives)


@settings(max_examples=200, deadline=None)
@given(
    x=st.floats(min_value=-50, max_value=50, allow_nan=False),
    bits=st.integers(min_value=1, max_value=6),
    zeta=st.floats(min_value=1e-3, max_value=10.0),
)
def test_idempotence_property(x, bits, zeta):
    q = build_uniform_midrise(bits, zeta)
    s = q.quantize(x)
    assert q.quantize(q.dequantize(s)) == s


@settings(max_examples=100, deadline=None)
@given(
    xy=st.tuples(
        st.floats(min_value=-20, max_value=20, allow_nan=False),
        st.floats(min_value=-20, max_value=20, allow_nan=False),
    ),
    bits=st.integers(min_value=1, max_value=5),
)
def test_monotonicity_property(xy, bits):
    x, y = sorted(xy)
    q = build_uniform_midrise(bits, 0.75)
    assert q.quantize(x) <= q.quantize(y)


def test_partition_tiles_the_line(case_quantizer):
    xs = np.linspace(-2.0, 2.0, 100_001)
    syms = case_quantizer.quantize(xs)
    lowers = np.array([case_quantizer.cell_of(s).lower for s in range(8)])
    uppers = np.array([case_quantizer.cell_of(s).upper for s in range(8)])
    # every point claimed by exactly the returned cell
    assert np.all(xs > lowers[syms])
    assert np.all(xs <= uppers[syms])
    # adjacent cells share a boundary: a disjoint covering
    assert np.allclose(uppers[:-1], lowers[1:])


class TestCellProbability:
    def test_half_line_symmetry(self):
        cell = QuantCell(0.0, math.inf, 1.0, 1)
        assert cell_probability(cell, 0.0, 0.12345) == pytest.approx(0.5, abs=1e-15)

    def test_paper_cell_value_against_erf(self):
        # oracle: Phi(0.1555/sqrt(0.03)) - 0.5 computed with math.erf
        z = 0.1555 / math.sqrt(0.03)
        want = 0.5 * math.erf(z / math.sqrt(2.0))
        cell = QuantCell(0.0, 0.1555, 0.07775, 4)
        got = cell_probability(cell, 0.0, 0.03)
        assert got == pytest.approx(want, abs=1e-12)
        assert got == pytest.approx(0.3153, abs=1e-3)

    def test_total_probability_over_all_cells(self, case_quantizer):
        total = sum(
            cell_probability(c, 0.0, 0.03) for c in case_quantizer.cells()
        )
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_vectorized_means(self):
        means = np.linspace(-1, 1, 11)
        vals = interval_probability(0.0, 0.1555, means, 0.01)
        singles = [interval_probability(0.0, 0.1555, float(m), 0.01) for m in means]
        assert np.allclose(vals, singles, atol=1e-15)

    def test_invalid_variance(self):
        cell = QuantCell(0.0, 1.0, 0.5, 0)
        with pytest.raises(ValueError):
            cell_probability(cell, 0.0, 0.0)
        with pytest.raises(ValueError):
            cell_probability(cell, 0.0, -1.0)


class TestLloydMax:
    def test_two_level_matches_half_normal_mean(self):
        q = lloyd_max_design(1.0, 2)
        want = math.sqrt(2.0 / math.pi)
        assert q.breakpoints == pytest.approx([0.0], abs=1e-9)
        assert q.representatives == pytest.approx([-want, want], abs=1e-9)

    def test_four_level_known_table(self):
        # frozen from an independent fixed-point iteration of the two Lloyd
        # conditions (also the classical tabulated design for m=4)
        q = lloyd_max_design(1.0, 4)
        assert q.breakpoints == pytest.approx([-0.9816, 0.0, 0.9816], abs=2e-4)
        assert q.representatives == pytest.approx(
            [-1.5104, -0.4528, 0.4528, 1.5104], abs=2e-4
        )

    def test_scale_equivariance(self):
        q1 = lloyd_max_design(1.0, 8)
        qs = lloyd_max_design(2.5, 8)
        assert np.allclose(qs.breakpoints, 2.5 * q1.breakpoints, rtol=1e-8, atol=1e-12)
        assert np.allclose(qs.representatives, 2.5 * q1.representatives, rtol=1e-8, atol=1e-12)

    def test_fixed_point_conditions_hold(self):
        q = lloyd_max_design(0.7, 6, tol=1e-12)
        # breakpoints are midpoints of adjacent representatives
        mid = 0.5 * (q.representatives[:-1] + q.representatives[1:])
        assert np.allclose(q.breakpoints, mid, atol=1e-10)

    def test_nonconvergence_carries_last_iterate(self):
        with pytest.raises(LloydMaxConvergenceError) as err:
            lloyd_max_design(1.0, 16, tol=1e-14, max_iter=2)
        assert err.value.last_quantizer is not None

    def test_monte_carlo_distortion_cross_check(self):
        # 1e7-draw Monte-Carlo oracle for the m=4 design distortion
        q = lloyd_max_design(1.0, 4)
        rng = np.random.default_rng(7)
        xs = rng.standard_normal(10_000_000)
        emp = float(np.mean((xs - q.representatives[q.quantize(xs)]) ** 2))
        assert expected_distortion(q, 1.0) == pytest.approx(emp, rel=2e-3)

    def test_beats_uniform_by_quadrature(self):
        sigma = 1.0
        lloyd = lloyd_max_design(sigma, 4)
        uniform = build_uniform_midrise(2, 4.0 * sigma)

        def quad_distortion(q):
            bounds = np.concatenate(([-12.0], q.breakpoints, [12.0]))
            total = 0.0
            for i in range(q.m):
                r = q.representatives[i]
                total += quad(
                    lambda x: (x - r) ** 2 * math.exp(-x * x / 2) / math.sqrt(2 * math.pi),
                    bounds[i], bounds[i + 1], limit=200,
                )[0]
            return total

        d_l = quad_distortion(lloyd)
        d_u = quad_distortion(uniform)
        assert d_l < d_u
        # closed form agrees with the quadrature oracle
        assert expected_distortion(lloyd, sigma) == pytest.approx(d_l, abs=1e-9)
        assert expected_distortion(uniform, sigma) == pytest.approx(d_u, abs=1e-9)
