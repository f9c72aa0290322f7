import json
import math
from pathlib import Path
from unittest.mock import patch

import pytest

from pistonlab.config import Settings
from pistonlab.errors import InvalidInputError, UnreliableFitError
from pistonlab.piston import (
    CATALAN,
    Classification,
    Method,
    PistonAssembly3D,
    classify,
    crossover_aspect,
    cube_permeable_verdict,
    force_analytic_interval,
    force_analytic_star,
    force_numeric,
    lukosz_pressure,
    net_piston_force_3d,
    pipeline_energy,
    pressure_inside_permeable,
    pressure_long_shaft,
    rayleigh_dowker,
    rayleigh_dowker_force,
    sign_table,
    star_piston_forces,
)
from pistonlab.regular import FinitePartFit, finite_energy
from pistonlab.spectra import BoundaryCondition, IntervalSpec, StarGraphSpec

PI = math.pi
FIXTURES = Path(__file__).parent / "fixtures"


def interval_energy(left, right):
    return pipeline_energy(lambda a: IntervalSpec(a, left, right))


def star_energy(n, condition=BoundaryCondition.NEUMANN):
    return pipeline_energy(lambda a: StarGraphSpec.equal(n, a, condition))


def test_classify():
    assert classify(0.1) is Classification.REPULSIVE
    assert classify(-0.1) is Classification.ATTRACTIVE
    assert classify(1e-9) is Classification.NULL
    assert classify(1e-9, epsilon=1e-12) is Classification.REPULSIVE


class TestAnalyticForces:
    @pytest.mark.parametrize(
        "left, right, a, expected, classification",
        [
            ("D", "D", 1.0, -PI / 24, Classification.ATTRACTIVE),
            ("D", "N", 1.0, PI / 48, Classification.REPULSIVE),
            ("N", "N", 2.0, -PI / 96, Classification.ATTRACTIVE),
        ],
    )
    def test_interval(self, left, right, a, expected, classification):
        report = force_analytic_interval(IntervalSpec(a, left, right))
        assert report.force == pytest.approx(expected, rel=1e-15)
        assert report.classification is classification
        assert report.method is Method.ANALYTIC

    def test_neumann_star_null_at_three_edges(self):
        report = force_analytic_star(3, 1.0)
        assert report.force == 0.0
        assert report.classification is Classification.NULL

    def test_neumann_star_pushes_out_beyond_three_edges(self):
        report = force_analytic_star(5, 1.0, "N")
        assert report.force == pytest.approx(PI / 24)
        assert report.classification is Classification.REPULSIVE

    @pytest.mark.parametrize("n", range(2, 7))
    def test_dirichlet_star_attracts(self, n):
        report = force_analytic_star(n, 1.0, BoundaryCondition.DIRICHLET)
        assert report.force == pytest.approx((3 - 2 * n) * PI / 48)
        assert report.classification is Classification.ATTRACTIVE

    @pytest.mark.parametrize("n, a", [(0, 1.0), (2.5, 1.0), (True, 1.0), (3, 0.0)])
    def test_invalid_star(self, n, a):
        with pytest.raises(InvalidInputError):
            force_analytic_star(n, a)

    def test_inverse_square_scaling(self):
        one = force_analytic_star(5, 1.0).force
        assert force_analytic_star(5, 3.0).force == pytest.approx(one / 9)


class TestNumericForce:
    def test_exact_oracle(self):
        report = force_numeric(lambda a: -PI / (24 * a), 1.0)
        assert report.force == pytest.approx(-PI / 24, abs=1e-8)
        assert report.method is Method.NUMERIC
        assert report.cross_check_gap is None

    def test_cross_check_gap(self):
        report = force_numeric(lambda a: PI / (48 * a), 1.0, analytic=PI / 48)
        assert report.cross_check_gap < 1e-8

    @pytest.mark.parametrize("h", [0.0, -1e-3, 0.3])
    def test_invalid_step(self, h):
        with pytest.raises(InvalidInputError):
            force_numeric(lambda a: 1.0 / a, 1.0, h=h)

    def test_unreliable_energies_propagate(self):
        def energy(a):
            return FinitePartFit(
                finite_part=1.0 / a,
                divergent_coeffs={},
                residual=1.0,
                window=(),
                reliable=False,
            )

        report = force_numeric(energy, 1.0)
        assert not report.reliable
        assert report.warnings

    @pytest.mark.parametrize(
        "left, right, expected",
        [("D", "D", -PI / 24), ("N", "N", -PI / 24), ("D", "N", PI / 48)],
    )
    def test_interval_pipeline(self, left, right, expected):
        report = force_numeric(interval_energy(left, right), 1.0, analytic=expected)
        assert report.force == pytest.approx(expected, rel=1e-5)
        assert report.reliable

    @pytest.mark.parametrize("n", range(1, 7))
    def test_neumann_star_pipeline(self, n):
        expected = force_analytic_star(n, 1.0)
        report = force_numeric(star_energy(n), 1.0)
        assert report.force == pytest.approx(expected.force, abs=1e-5 * PI / 48)
        assert report.classification is expected.classification

    @pytest.mark.parametrize("n", range(2, 7))
    def test_dirichlet_star_pipeline(self, n):
        expected = (3 - 2 * n) * PI / 48
        report = force_numeric(star_energy(n, BoundaryCondition.DIRICHLET), 1.0)
        assert report.force == pytest.approx(expected, rel=1e-5)
        assert report.classification is Classification.ATTRACTIVE

    def test_force_scaling(self):
        one = force_numeric(interval_energy("D", "N"), 1.0).force
        two = force_numeric(interval_energy("D", "N"), 2.0).force
        assert two == pytest.approx(one / 4, rel=1e-6)


class TestDoublingTransform:
    def test_interval_bracket(self):
        assert rayleigh_dowker(lambda a: -PI / (24 * a), 1.0) == pytest.approx(PI / 48)

    def test_plate_bracket(self):
        c = 2.5
        result = rayleigh_dowker(lambda a: c / a**3, 1.0)
        assert result == pytest.approx(-7 / 8 * c, rel=1e-15)

    def test_constant_energy(self):
        assert rayleigh_dowker(lambda a: 4.2, 3.0) == 0.0

    def test_numeric_dirichlet_to_mixed(self):
        dd = interval_energy("D", "D")
        dn = finite_energy(IntervalSpec(1.0, "D", "N")).finite_part
        assert rayleigh_dowker(dd, 1.0) == pytest.approx(dn, rel=1e-6)

    def test_force_form(self):
        force = rayleigh_dowker_force(lambda a: -PI / (24 * a**2), 1.0)
        assert force == pytest.approx(PI / 48)


class TestPressures:
    def test_lukosz(self):
        assert lukosz_pressure(1.0) == pytest.approx(-(PI**2) / 240)

    def test_inside_permeable(self):
        assert pressure_inside_permeable(1.0) == pytest.approx(0.035983, abs=1e-6)
        exact = 7 * PI**2 / 1920
        assert pressure_inside_permeable(1.0) == pytest.approx(exact, rel=1e-14)
        assert pressure_inside_permeable(2.0) == pytest.approx(
            pressure_inside_permeable(1.0) / 16
        )

    def test_long_shaft(self):
        assert CATALAN == pytest.approx(0.915965594177219, rel=1e-14)
        assert pressure_long_shaft(1.0) == pytest.approx(0.0381652, abs=1e-7)
        assert pressure_long_shaft(2.0) == pytest.approx(pressure_long_shaft(1.0) / 16)

    def test_crossover(self):
        aspect = crossover_aspect()
        assert aspect == pytest.approx(0.9854, abs=1e-3)
        assert PistonAssembly3D(aspect, 1.0, 100.0).net_force == pytest.approx(
            0.0, abs=1e-12
        )


class TestPistonAssembly:
    def test_thin_gap_is_repulsive(self):
        report = net_piston_force_3d(PistonAssembly3D(0.1, 1.0, 100.0))
        assert report.force == pytest.approx(359.79, rel=1e-4)
        assert report.classification is Classification.REPULSIVE
        assert not report.warnings

    @pytest.mark.parametrize("aspect", [0.05, 0.1, 0.2])
    def test_repulsive_in_regime(self, aspect):
        report = net_piston_force_3d(PistonAssembly3D(aspect, 1.0, 100.0))
        assert report.classification is Classification.REPULSIVE

    def test_regime_warning(self):
        report = net_piston_force_3d(PistonAssembly3D(0.5, 1.0, 100.0))
        assert report.warnings
        assert report.force > 0

    def test_area_bookkeeping(self):
        a = 0.1
        narrow = PistonAssembly3D(a, 1.0, 100.0)
        wide = PistonAssembly3D(a, 2.0, 100.0)
        expected = 4 * pressure_inside_permeable(a) - pressure_long_shaft(1.0) / 4
        assert wide.net_force == pytest.approx(expected)
        assert narrow.inside_pressure == wide.inside_pressure

    @pytest.mark.parametrize(
        "a, b, L", [(1.0, 1.0, 1.0), (0.0, 1.0, 10.0), (0.1, -1.0, 10.0)]
    )
    def test_invalid(self, a, b, L):
        with pytest.raises(InvalidInputError):
            PistonAssembly3D(a, b, L)

    def test_numeric_assembly_agrees_with_analytic(self):
        assembly = PistonAssembly3D(0.1, 1.0, 100.0)
        report = net_piston_force_3d(assembly, "numeric-gradient")
        assert report.method is Method.NUMERIC
        assert report.force == pytest.approx(assembly.net_force, rel=1e-2)
        assert report.classification is Classification.REPULSIVE


class TestCube:
    def test_verdict(self):
        verdict = cube_permeable_verdict(1.0)
        assert verdict.cube_repulsive
        assert verdict.closer_to_half
        assert verdict.dilation_force < 0
        assert verdict.classification is Classification.ATTRACTIVE

    def test_verdict_independent_of_side(self):
        one = cube_permeable_verdict(1.0)
        two = cube_permeable_verdict(2.0)
        assert two.cube_energy == pytest.approx(one.cube_energy / 2, rel=1e-10)
        assert two.classification is one.classification

    def test_invalid_side(self):
        with pytest.raises(InvalidInputError):
            cube_permeable_verdict(-1.0)

    @pytest.mark.parametrize(
        "cube, doubled, premise",
        [(-0.09, -0.045, "cube energy positive"), (0.09, 0.085, "closer to E/2")],
    )
    def test_failed_premise_gives_no_verdict(self, cube, doubled, premise):
        energies = {1.0: cube, 2.0: doubled}

        def fake_energy(box, settings):
            return FinitePartFit(energies[box.a], {}, 0.0, ())

        with patch("pistonlab.piston.finite_energy", side_effect=fake_energy):
            with pytest.raises(UnreliableFitError, match=premise):
                cube_permeable_verdict(1.0)

    def test_record_holds_plain_booleans(self):
        energies = {1.0: 0.0916, 2.0: 0.0452}

        def fake_energy(box, settings):
            return FinitePartFit(energies[box.a], {}, 0.0, ())

        with patch("pistonlab.piston.finite_energy", side_effect=fake_energy):
            record = cube_permeable_verdict(1.0).as_record()
        assert type(record["cube_repulsive"]) is bool
        assert type(record["closer_to_half"]) is bool


def test_per_piston_forces_share_the_total():
    spec = StarGraphSpec.equal(4, 1.0)
    reports = star_piston_forces(spec, Settings())
    assert len(reports) == 4
    for report in reports:
        assert report.force == pytest.approx(PI / 192, rel=1e-2)
    assert sum(r.force for r in reports) == pytest.approx(PI / 48, rel=1e-2)


def test_sign_table_matches_fixture():
    expected = json.loads((FIXTURES / "sign_table.json").read_text())
    assert sign_table() == expected
