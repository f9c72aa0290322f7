"""Piston forces assembled from finite vacuum energies.

Sign convention: a positive force pushes the piston towards larger ``a``
(repulsive), a negative force pulls it in (attractive).
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, List, Optional, Union

import mpmath

from pistonlab.config import Settings
from pistonlab.errors import InvalidInputError, UnreliableFitError
from pistonlab.regular import FinitePartFit, box_orbit_energy, finite_energy
from pistonlab.spectra import (
    BoundaryCondition,
    BoxSpec,
    GeometrySpec,
    IntervalSpec,
    StarGraphSpec,
    WallModel,
)

piston_logger = logging.getLogger("pistonlab.piston")

CATALAN = float(mpmath.catalan)

EnergyValue = Union[float, FinitePartFit]
EnergyFunction = Callable[[float], EnergyValue]


class Classification(Enum):
    ATTRACTIVE = "attractive"
    REPULSIVE = "repulsive"
    NULL = "null"


class Method(Enum):
    ANALYTIC = "analytic"
    NUMERIC = "numeric-gradient"


@dataclass(frozen=True)
class ForceReport:
    """A piston force with its sign classification and provenance."""

    force: float
    classification: Classification
    method: Method
    cross_check_gap: Optional[float] = None
    reliable: bool = True
    warnings: List[str] = field(default_factory=list)
    details: Dict[str, float] = field(default_factory=dict)

    def as_record(self) -> Dict[str, object]:
        """Flatten the report for CSV/JSON output."""
        record = {
            "force": self.force,
            "classification": self.classification.value,
            "method": self.method.value,
            "cross_check_gap": self.cross_check_gap,
            "reliable": self.reliable,
        }
        record.update(self.details)
        if self.warnings:
            record["warnings"] = "; ".join(self.warnings)
        return record


@dataclass(frozen=True)
class PistonAssembly3D:
    """
    Square shaft of side ``b`` and length ``L`` split by a piston at ``a``.

    The piston is infinitely permeable; both end plates are conducting.
    """

    a: float
    b: float
    L: float

    def __post_init__(self):
        for name in ("a", "b", "L"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise InvalidInputError(
                    f"{name} must be a finite number, got {value!r}"
                )
        if not self.L > self.a > 0 or not self.b > 0:
            raise InvalidInputError(
                f"Need L > a > 0 and b > 0, got a={self.a!r}, b={self.b!r}, "
                f"L={self.L!r}"
            )

    @property
    def aspect(self) -> float:
        return self.a / self.b

    @property
    def inside_pressure(self) -> float:
        return pressure_inside_permeable(self.a)

    @property
    def outside_pressure(self) -> float:
        return pressure_long_shaft(self.b)

    @property
    def net_force(self) -> float:
        return self.b**2 * (self.inside_pressure - self.outside_pressure)


def classify(force: float, epsilon: float = 1e-6) -> Classification:
    """Sign classification of ``force``; null below ``epsilon`` in magnitude."""
    if abs(force) < epsilon:
        return Classification.NULL
    return Classification.REPULSIVE if force > 0 else Classification.ATTRACTIVE


def _analytic_report(force, settings=None):
    settings = settings or Settings()
    return ForceReport(
        force=force,
        classification=classify(force, settings.null_epsilon),
        method=Method.ANALYTIC,
    )


def force_analytic_interval(
    spec: IntervalSpec, settings: Optional[Settings] = None
) -> ForceReport:
    """-pi/24a^2 for equal end conditions, +pi/48a^2 for mixed ones."""
    if spec.mixed:
        return _analytic_report(math.pi / (48.0 * spec.a**2), settings)
    return _analytic_report(-math.pi / (24.0 * spec.a**2), settings)


def force_analytic_star(
    n: int,
    a: float,
    piston_condition=BoundaryCondition.NEUMANN,
    settings: Optional[Settings] = None,
) -> ForceReport:
    """
    Force on each piston of an equal star with ``n`` edges of length ``a``.

    Args:
        n: Number of edges, at least 1.
        a: Common piston distance from the vertex.
        piston_condition: Condition at the free ends.

    Returns:
        ForceReport: (N-3)pi/48a^2 for Neumann pistons, (3-2N)pi/48a^2 for
        Dirichlet pistons.
    """
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise InvalidInputError(f"Star needs a positive integer edge count, got {n!r}")
    if not isinstance(a, (int, float)) or not math.isfinite(a) or a <= 0:
        raise InvalidInputError(f"Piston distance must be positive, got {a!r}")
    condition = BoundaryCondition.parse(piston_condition)
    if condition is BoundaryCondition.NEUMANN:
        coefficient = n - 3
    else:
        coefficient = 3 - 2 * n
    return _analytic_report(coefficient * math.pi / (48.0 * a**2), settings)


def _energy_value(value: EnergyValue):
    """Split an energy evaluation into (value, reliable)."""
    if isinstance(value, FinitePartFit):
        return value.finite_part, value.reliable
    return float(value), True


def force_numeric(
    energy_fn: EnergyFunction,
    a: float,
    h: Optional[float] = None,
    analytic: Optional[float] = None,
    settings: Optional[Settings] = None,
) -> ForceReport:
    """
    Force -dE/da by central differences with one Richardson step.

    Args:
        energy_fn: Maps a piston position to a finite energy or a FinitePartFit.
        a: Piston position.
        h: Step, defaults to ``a * settings.gradient_step``.
        analytic: Known force to compare against.
        settings: Runtime settings.

    Returns:
        ForceReport: Refined force; unreliable if any energy fit was.
    """
    settings = settings or Settings()
    if not isinstance(a, (int, float)) or not math.isfinite(a) or a <= 0:
        raise InvalidInputError(f"Piston position must be positive, got {a!r}")
    h = a * settings.gradient_step if h is None else h
    if not 0 < h < a / 4:
        raise InvalidInputError(
            f"Step must satisfy 0 < h < a/4, got h={h!r} at a={a!r}"
        )

    points = (a + h, a - h, a + h / 2, a - h / 2)
    if settings.workers > 1:
        with ThreadPoolExecutor(max_workers=min(settings.workers, 4)) as pool:
            evaluations = list(pool.map(energy_fn, points))
    else:
        evaluations = [energy_fn(x) for x in points]
    values, flags = zip(*(_energy_value(e) for e in evaluations))

    coarse = -(values[0] - values[1]) / (2.0 * h)
    fine = -(values[2] - values[3]) / h
    force = (4.0 * fine - coarse) / 3.0

    warnings = []
    reliable = all(flags)
    if not reliable:
        warnings.append("energy fit flagged unreliable")
        piston_logger.warning("Force at a=%g built from unreliable energies", a)
    gap = None if analytic is None else abs(force - analytic)
    if gap is not None:
        piston_logger.debug("Numeric force %.12g vs analytic %.12g", force, analytic)
    return ForceReport(
        force=force,
        classification=classify(force, settings.null_epsilon),
        method=Method.NUMERIC,
        cross_check_gap=gap,
        reliable=reliable,
        warnings=warnings,
        details={"step": h, "richardson_correction": fine - coarse},
    )


def rayleigh_dowker(energy_fn: EnergyFunction, a: float) -> float:
    """
    Energy of a box whose piston face is infinitely permeable: E(2a) - E(a).

    ``energy_fn`` is the energy with a conducting piston face.
    """
    if not a > 0:
        raise InvalidInputError(f"Piston position must be positive, got {a!r}")
    doubled, _ = _energy_value(energy_fn(2.0 * a))
    single, _ = _energy_value(energy_fn(a))
    return doubled - single


def rayleigh_dowker_force(force_fn: Callable[[float], float], a: float) -> float:
    """Force on a permeable piston, -d/da[E(2a) - E(a)] = 2F(2a) - F(a)."""
    if not a > 0:
        raise InvalidInputError(f"Piston position must be positive, got {a!r}")
    return 2.0 * force_fn(2.0 * a) - force_fn(a)


def lukosz_pressure(a: float) -> float:
    """Attractive pressure between conducting plates a distance ``a`` apart."""
    return -(math.pi**2) / (240.0 * a**4)


def pressure_inside_permeable(a: float) -> float:
    """Pressure on a permeable piston facing a conducting plate: 7 pi^2/1920a^4."""
    return rayleigh_dowker_force(lukosz_pressure, a)


def pressure_long_shaft(b: float) -> float:
    """Pressure from a long square shaft of side ``b`` on its far piston: G/24b^4."""
    return CATALAN / (24.0 * b**4)


def crossover_aspect() -> float:
    """a/b where the permeable-piston pressure balances the long-shaft pressure."""
    return (168.0 * math.pi**2 / (1920.0 * CATALAN)) ** 0.25


def box_energy_function(
    b1: float,
    b2: float,
    wall_model=WallModel.ALL_CONDUCTING,
    settings: Optional[Settings] = None,
    method: Optional[str] = None,
) -> EnergyFunction:
    """a -> finite energy of the box (a, b1, b2)."""
    return pipeline_energy(
        lambda x: BoxSpec(x, b1, b2, wall_model), settings, method=method
    )


def pipeline_energy(
    factory: Callable[[float], GeometrySpec],
    settings: Optional[Settings] = None,
    **kwargs,
) -> EnergyFunction:
    """Wrap ``finite_energy`` as a function of the piston position."""

    def energy(x):
        return finite_energy(factory(x), settings, **kwargs)

    return energy


def net_piston_force_3d(
    assembly: PistonAssembly3D,
    method: Union[Method, str] = Method.ANALYTIC,
    settings: Optional[Settings] = None,
) -> ForceReport:
    """
    Net force on the permeable piston of a square shaft.

    The analytic path combines the thin-gap pressure inside with the
    long-shaft pressure outside and holds for a << b << L - a. The numeric
    path differentiates E(a) + E(L - a) of the two permeable chambers.
    """
    settings = settings or Settings()
    method = Method(method) if isinstance(method, str) else method
    analytic = assembly.net_force
    warnings = []
    if assembly.aspect > settings.regime_limit:
        message = (
            f"a/b = {assembly.aspect:.3g} exceeds {settings.regime_limit:g}; "
            "thin-gap pressure is outside its regime"
        )
        piston_logger.warning(message)
        warnings.append(message)
    details = {
        "inside_pressure": assembly.inside_pressure,
        "outside_pressure": assembly.outside_pressure,
        "aspect": assembly.aspect,
    }

    if method is Method.ANALYTIC:
        return ForceReport(
            force=analytic,
            classification=classify(analytic, settings.null_epsilon),
            method=Method.ANALYTIC,
            warnings=warnings,
            details=details,
        )

    b, length = assembly.b, assembly.L
    chamber = box_energy_function(b, b, WallModel.PERMEABLE_PISTON, settings, "orbit")

    def energy(x):
        inside, ok_in = _energy_value(chamber(x))
        outside, ok_out = _energy_value(chamber(length - x))
        return FinitePartFit(
            finite_part=inside + outside,
            divergent_coeffs={},
            residual=0.0,
            window=(),
            reliable=ok_in and ok_out,
            method="orbit",
        )

    report = force_numeric(energy, assembly.a, analytic=analytic, settings=settings)
    return replace(report, warnings=warnings + report.warnings, details=details)


@dataclass(frozen=True)
class CubeVerdict:
    """Sign and ordering checks for a cubical box with a permeable piston face."""

    side: float
    cube_energy: float
    doubled_energy: float
    dilation_force: float
    piston_force: float
    classification: Classification

    @property
    def cube_repulsive(self) -> bool:
        return bool(self.cube_energy > 0)

    @property
    def closer_to_half(self) -> bool:
        half = abs(self.doubled_energy - 0.5 * self.cube_energy)
        return bool(half < abs(self.doubled_energy - self.cube_energy))

    def as_record(self) -> Dict[str, object]:
        return {
            "side": self.side,
            "cube_energy": self.cube_energy,
            "doubled_energy": self.doubled_energy,
            "cube_repulsive": self.cube_repulsive,
            "closer_to_half": self.closer_to_half,
            "dilation_force": self.dilation_force,
            "piston_force": self.piston_force,
            "classification": self.classification.value,
        }


def cube_permeable_verdict(
    side: float, settings: Optional[Settings] = None
) -> CubeVerdict:
    """
    Classify the permeable piston of a cube of edge ``side``.

    Box energies are homogeneous of degree -1, so the force under uniform
    dilation equals the energy itself. The conducting cube gives E(a,a,a),
    the permeable cube E(2a,a,a) - E(a,a,a). The verdict needs E(a,a,a) > 0
    and E(2a,a,a) closer to E(a,a,a)/2 than to E(a,a,a).

    The piston force at fixed cross-section, -dE/da of the permeable box at
    a = side, is positive at the cubical point and is kept as a diagnostic
    only. The verdict is about dilation of the whole box, not that force.

    Raises:
        UnreliableFitError: If either box energy is unreliable, or if either
            premise of the verdict fails.
    """
    settings = settings or Settings()
    if not isinstance(side, (int, float)) or not math.isfinite(side) or side <= 0:
        raise InvalidInputError(f"Cube side must be positive, got {side!r}")
    boxes = (BoxSpec(side, side, side), BoxSpec(2.0 * side, side, side))
    with ThreadPoolExecutor(max_workers=2) as pool:
        fits = list(pool.map(lambda box: finite_energy(box, settings), boxes))
    unreliable = [fit for fit in fits if not fit.reliable]
    if unreliable:
        raise UnreliableFitError(
            "Cube energies are unreliable; no verdict",
            {"residuals": [fit.residual for fit in fits]},
        )
    cube, doubled = (float(fit.finite_part) for fit in fits)
    premises = {
        "cube energy positive": cube > 0,
        "E(2a,a,a) closer to E/2 than to E": abs(doubled - 0.5 * cube)
        < abs(doubled - cube),
    }
    failed = [name for name, holds in premises.items() if not holds]
    if failed:
        piston_logger.error("Cube side %g: premise failed: %s", side, failed)
        raise UnreliableFitError(
            f"No cube verdict; failed premise(s): {', '.join(failed)}",
            {"cube_energy": cube, "doubled_energy": doubled},
        )

    dilation = doubled - cube
    piston = force_numeric(
        lambda x: box_orbit_energy(
            BoxSpec(x, side, side, WallModel.PERMEABLE_PISTON), settings
        ),
        side,
        settings=settings,
    )
    piston_logger.info(
        "Cube side %g: E=%.6g, E(2a)=%.6g, dilation force %.6g, piston force %.6g",
        side,
        cube,
        doubled,
        dilation,
        piston.force,
    )
    return CubeVerdict(
        side=side,
        cube_energy=cube,
        doubled_energy=doubled,
        dilation_force=dilation,
        piston_force=piston.force,
        classification=classify(dilation, settings.null_epsilon),
    )


def star_piston_forces(
    spec: StarGraphSpec, settings: Optional[Settings] = None
) -> List[ForceReport]:
    """Per-piston forces -dE/da_j of a star with unequal edges (root finder)."""
    settings = settings or Settings()
    reports = []
    for j, length in enumerate(spec.edge_lengths):

        def energy(x, j=j):
            lengths = list(spec.edge_lengths)
            lengths[j] = x
            return finite_energy(
                StarGraphSpec(tuple(lengths), spec.piston_condition),
                settings,
                closed_form=False,
            )

        report = force_numeric(energy, length, settings=settings)
        reports.append(replace(report, details=dict(report.details, edge=j)))
    return reports


def _row(case, classification):
    return {"case": case, "classification": classification.value}


def sign_table(settings: Optional[Settings] = None) -> List[Dict[str, str]]:
    """Sign classification of every scenario, as plain records."""
    settings = settings or Settings()
    rows = []
    for left, right in (("D", "D"), ("N", "N"), ("D", "N"), ("N", "D")):
        report = force_analytic_interval(IntervalSpec(1.0, left, right), settings)
        rows.append(_row(f"interval-{left}{right}", report.classification))
    for condition in (BoundaryCondition.NEUMANN, BoundaryCondition.DIRICHLET):
        for n in range(1, 7):
            report = force_analytic_star(n, 1.0, condition, settings)
            rows.append(
                _row(f"star-{condition.name.lower()}-N{n}", report.classification)
            )
    for aspect in (0.05, 0.1, 0.2):
        assembly = PistonAssembly3D(aspect, 1.0, 100.0)
        report = net_piston_force_3d(assembly, settings=settings)
        rows.append(_row(f"piston3d-aspect-{aspect:g}", report.classification))
    verdict = cube_permeable_verdict(1.0, replace(settings, box_method="orbit"))
    rows.append(_row("cube-permeable", verdict.classification))
    return rows
