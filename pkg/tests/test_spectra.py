import math

import numpy as np
import pytest
from scipy.optimize import brentq

from pistonlab.config import Settings
from pistonlab.errors import (
    InvalidInputError,
    NumericalFailureError,
    ResourceLimitError,
)
from pistonlab.spectra import (
    ZERO_MODE,
    _check_root_counts,
    BoundaryCondition,
    BoxSpec,
    IntervalSpec,
    Spectrum,
    StarGraphSpec,
    WallModel,
    box_em_spectrum,
    interval_spectrum,
    merge_modes,
    star_secular_function,
    star_spectrum,
)

PI = math.pi


def assert_modes(spectrum, expected):
    omegas, mults = zip(*expected)
    assert spectrum.omegas.tolist() == pytest.approx(list(omegas), rel=1e-14)
    assert spectrum.multiplicities.tolist() == list(mults)


def assert_same_modes(first, second, atol=1e-10):
    assert len(first) == len(second)
    np.testing.assert_array_equal(first.multiplicities, second.multiplicities)
    np.testing.assert_allclose(first.omegas, second.omegas, rtol=0, atol=atol)


class TestBoundaryParsing:
    @pytest.mark.parametrize(
        "text", ["D", "d", "dirichlet", BoundaryCondition.DIRICHLET]
    )
    def test_dirichlet(self, text):
        assert BoundaryCondition.parse(text) is BoundaryCondition.DIRICHLET

    def test_unknown(self):
        with pytest.raises(InvalidInputError):
            BoundaryCondition.parse("X")

    def test_wall_model(self):
        assert WallModel.parse("Permeable") is WallModel.PERMEABLE_PISTON


class TestIntervalSpectrum:
    def test_dirichlet(self):
        spectrum = interval_spectrum(IntervalSpec(1.0, "D", "D"), 10.0)
        assert_modes(spectrum, [(PI, 1), (2 * PI, 1), (3 * PI, 1)])
        assert not spectrum.zero_mode_mask.any()

    def test_neumann_keeps_flagged_zero_mode(self):
        spectrum = interval_spectrum(IntervalSpec(1.0, "N", "N"), 4.0)
        assert_modes(spectrum, [(0.0, 1), (PI, 1)])
        assert spectrum.flags[0] == ZERO_MODE
        assert spectrum.zero_mode_mask.tolist() == [True, False]

    def test_mixed(self):
        spectrum = interval_spectrum(IntervalSpec(2.0, "D", "N"), 3.0)
        assert spectrum.omegas == pytest.approx([PI / 4, 3 * PI / 4])

    def test_scaling(self):
        spec = IntervalSpec(1.0, "D", "N")
        base = interval_spectrum(spec, 40.0)
        scaled = interval_spectrum(spec.scaled(2.0), 20.0)
        np.testing.assert_allclose(scaled.omegas, base.omegas / 2.0, rtol=1e-14)

    @pytest.mark.parametrize("a", [0.0, -1.0, float("nan"), True])
    def test_invalid_length(self, a):
        with pytest.raises(InvalidInputError):
            IntervalSpec(a, "D", "D")

    def test_invalid_ceiling(self):
        with pytest.raises(InvalidInputError):
            interval_spectrum(IntervalSpec(1.0), 0.0)


class TestSpectrumRecord:
    def test_rejects_unsorted_frequencies(self):
        with pytest.raises(InvalidInputError, match="increasing"):
            Spectrum("bad", [2.0, 1.0], [1, 1], 3.0)

    def test_rejects_zero_multiplicity(self):
        with pytest.raises(InvalidInputError, match="Multiplicities"):
            Spectrum("bad", [1.0, 2.0], [1, 0], 3.0)

    def test_arrays_are_read_only(self):
        spectrum = interval_spectrum(IntervalSpec(1.0), 10.0)
        with pytest.raises(ValueError):
            spectrum.omegas[0] = 0.0

    def test_counts(self):
        spectrum = star_spectrum(StarGraphSpec.equal(4, 1.0), 4.0)
        assert spectrum.total_count() == 5
        assert spectrum.count_below(PI) == 4

    def test_text_round_trip(self):
        spectrum = star_spectrum(StarGraphSpec.equal(3, 1.0), 12.0)
        text = spectrum.to_text()
        assert text.startswith("# geometry=star-N-n3-a1_1_1 omega_max=12\n")
        parsed = Spectrum.from_text(text)
        assert parsed.geometry == spectrum.geometry
        np.testing.assert_array_equal(parsed.omegas, spectrum.omegas)
        np.testing.assert_array_equal(parsed.multiplicities, spectrum.multiplicities)
        np.testing.assert_array_equal(parsed.flags, spectrum.flags)

    def test_malformed_text(self):
        with pytest.raises(InvalidInputError):
            Spectrum.from_text("# geometry=x\nomega,multiplicity,flags\n1.0,1,0\n")


def test_merge_modes_combines_close_frequencies():
    omegas, mults, flags = merge_modes(
        [2.0, 1.0, 1.0 + 1e-13, 3.0], [1, 2, 1, 1], [0, 0, 1, 0], atol=1e-10
    )
    assert omegas.tolist() == [1.0, 2.0, 3.0]
    assert mults.tolist() == [3, 1, 1]
    assert flags.tolist() == [1, 0, 0]


class TestStarSpectrum:
    def test_closed_form_neumann(self):
        spectrum = star_spectrum(StarGraphSpec.equal(4, 1.0), 4.0)
        assert_modes(spectrum, [(0.0, 1), (PI / 2, 3), (PI, 1)])

    def test_closed_form_dirichlet(self):
        spec = StarGraphSpec.equal(3, 1.0, BoundaryCondition.DIRICHLET)
        spectrum = star_spectrum(spec, 4.0)
        assert_modes(spectrum, [(PI / 2, 1), (PI, 2)])

    @pytest.mark.parametrize("condition", list(BoundaryCondition))
    @pytest.mark.parametrize("n", [2, 4, 5])
    def test_root_finder_matches_closed_form(self, n, condition):
        spec = StarGraphSpec.equal(n, 1.0, condition)
        closed = star_spectrum(spec, 40.0, closed_form=True)
        solved = star_spectrum(spec, 40.0, closed_form=False)
        assert_same_modes(closed, solved)

    @pytest.mark.parametrize("n, length", [(1, 1.0), (2, 2.0)])
    def test_reduces_to_neumann_interval(self, n, length):
        star = star_spectrum(StarGraphSpec.equal(n, 1.0), 40.0, closed_form=False)
        interval = interval_spectrum(IntervalSpec(length, "N", "N"), 40.0)
        assert_same_modes(star, interval)

    def test_dirichlet_single_edge_is_mixed_interval(self):
        spec = StarGraphSpec.equal(1, 1.0, BoundaryCondition.DIRICHLET)
        star = star_spectrum(spec, 30.0, closed_form=False)
        interval = interval_spectrum(IntervalSpec(1.0, "D", "N"), 30.0)
        assert_same_modes(star, interval)

    def test_unequal_roots_solve_secular_equation(self):
        spec = StarGraphSpec((1.0, 1.3, 0.7))
        spectrum = star_spectrum(spec, 12.0)
        nonzero = spectrum.omegas[~spectrum.zero_mode_mask]
        values = [star_secular_function(spec, w) for w in nonzero]
        assert np.max(np.abs(values)) < 1e-8
        # Weyl law: N(w) = (sum a_j) w / pi up to a bounded remainder
        assert abs(spectrum.total_count() - 3.0 * 12.0 / PI) <= spec.n

    def test_secular_function_ignores_edge_order(self):
        forward = StarGraphSpec((1.0, 1.3, 1.7))
        backward = StarGraphSpec((1.7, 1.0, 1.3))
        for omega in (0.3, 1.1, 2.7, 9.4):
            assert star_secular_function(backward, omega) == pytest.approx(
                star_secular_function(forward, omega), rel=1e-12, abs=1e-14
            )

    def test_smallest_root_matches_dense_scan(self):
        spec = StarGraphSpec((1.0, 1.3, 1.7))
        grid = np.linspace(1e-3, 3.0, 30001)
        values = np.array([star_secular_function(spec, w) for w in grid])
        first = int(np.nonzero(values[:-1] * values[1:] < 0)[0][0])
        oracle = brentq(
            lambda w: star_secular_function(spec, w),
            grid[first],
            grid[first + 1],
            xtol=1e-14,
        )
        spectrum = star_spectrum(spec, 3.0)
        smallest = spectrum.omegas[~spectrum.zero_mode_mask][0]
        assert smallest == pytest.approx(oracle, abs=1e-9)

    def test_missing_root_is_a_numerical_failure(self):
        spec = StarGraphSpec((1.0, 1.3))
        with pytest.raises(NumericalFailureError) as excinfo:
            _check_root_counts(spec, np.array([]), np.array([1.0, 2.0]), 3.0)
        assert excinfo.value.bracket == (1.0, 2.0)

    def test_closed_form_needs_equal_lengths(self):
        with pytest.raises(InvalidInputError):
            star_spectrum(StarGraphSpec((1.0, 2.0)), 10.0, closed_form=True)

    def test_scaling(self):
        spec = StarGraphSpec((1.0, 1.3, 0.7))
        base = star_spectrum(spec, 20.0)
        scaled = star_spectrum(spec.scaled(0.5), 40.0)
        np.testing.assert_array_equal(scaled.multiplicities, base.multiplicities)
        np.testing.assert_allclose(scaled.omegas, 2.0 * base.omegas, rtol=0, atol=1e-9)

    def test_invalid_edge_count(self):
        with pytest.raises(InvalidInputError):
            StarGraphSpec.equal(0, 1.0)


class TestBoxSpectrum:
    def test_cube(self):
        spectrum = box_em_spectrum(BoxSpec(1.0, 1.0, 1.0), 6.0)
        assert_modes(spectrum, [(PI * math.sqrt(2.0), 3), (PI * math.sqrt(3.0), 2)])

    def test_permeable_face_uses_half_odd_index(self):
        spec = BoxSpec(1.0, 1.0, 1.0, WallModel.PERMEABLE_PISTON)
        spectrum = box_em_spectrum(spec, 6.0)
        assert_modes(
            spectrum,
            [
                (PI * math.sqrt(1.25), 2),
                (1.5 * PI, 2),
                (PI * math.sqrt(3.25), 2),
            ],
        )

    def test_permeable_modes_are_the_odd_modes_of_the_doubled_box(self):
        conducting = box_em_spectrum(BoxSpec(1.0, 1.0, 0.8), 15.0)
        permeable = box_em_spectrum(BoxSpec(1.0, 1.0, 0.8, "permeable"), 15.0)
        doubled = box_em_spectrum(BoxSpec(2.0, 1.0, 0.8), 15.0)
        total = conducting.total_count() + permeable.total_count()
        assert total == doubled.total_count()

    def test_scaling(self):
        base = box_em_spectrum(BoxSpec(1.0, 1.3, 0.8), 12.0)
        scaled = box_em_spectrum(BoxSpec(2.0, 2.6, 1.6), 6.0)
        np.testing.assert_array_equal(scaled.multiplicities, base.multiplicities)
        np.testing.assert_allclose(scaled.omegas, base.omegas / 2.0, rtol=1e-12)

    def test_mode_budget(self):
        settings = Settings(mode_budget=10)
        with pytest.raises(ResourceLimitError) as excinfo:
            box_em_spectrum(BoxSpec(1.0, 1.0, 1.0), 20.0, settings)
        assert excinfo.value.estimated_modes > 10


class TestWeylTail:
    def test_tail_bound_covers_true_tail(self):
        spec = IntervalSpec(1.0, "D", "D")
        t = 0.5
        true_tail = math.exp(-4 * PI * t) / (1.0 - math.exp(-PI * t))
        assert spec.weyl_tail().tail_bound(10.0, t, 0) >= true_tail

    def test_required_ceiling_meets_target(self):
        tail = BoxSpec(1.0, 1.0, 1.0).weyl_tail()
        t = 0.1
        omega = tail.required_omega_max(t, 1, 1e-10)
        assert tail.tail_bound(omega, t, 1) <= 1e-10 * tail.leading_sum(t, 1)

    def test_energy_divergences(self):
        tail = BoxSpec(1.0, 2.0, 3.0).weyl_tail()
        divergences = tail.energy_divergences()
        assert divergences[-4] == pytest.approx(3.0 * 6.0 / PI**2)
        assert divergences[-2] == pytest.approx(-6.0 / (4.0 * PI))
