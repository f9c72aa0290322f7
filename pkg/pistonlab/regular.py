"""Cutoff regularization of mode sums and extraction of finite vacuum energies.

The exponential cutoff trace T(t) = sum_n exp(-w_n t) and the regularized
energy E(t) = -T'(t)/2 are summed with compensated (fsum) accumulation and a
certified Weyl tail bound. The finite vacuum energy is the t**0 coefficient
of a least-squares fit of E(t) on a geometric ladder of cutoffs.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import k1, zeta

from pistonlab.config import Settings
from pistonlab.errors import (
    InstabilityError,
    InsufficientSpectrumError,
    InvalidInputError,
    UnreliableFitError,
)
from pistonlab.spectra import (
    BoxSpec,
    GeometrySpec,
    IntervalSpec,
    Spectrum,
    StarGraphSpec,
    WeylTail,
    star_spectrum,
)

regular_logger = logging.getLogger("pistonlab.regular")

# Graph cutoff expansions beyond t**0 are even in t
GRAPH_SLACK_POWERS = (2, 4)
BOX_SLACK_POWERS = (1, 2)


@dataclass(frozen=True)
class CutoffSample:
    """Trace and energy at one cutoff value with their truncation bounds."""

    t: float
    trace: float
    energy: float
    truncation_bound: float

    def __post_init__(self):
        if not self.t > 0:
            raise InvalidInputError(f"Cutoff t must be positive, got {self.t!r}")
        if not self.truncation_bound >= 0:
            raise InvalidInputError("Truncation bound must be nonnegative")


def _term_label(power):
    return f"t^{power}"


LOG_LABEL = "t*ln(t)"


@dataclass(frozen=True)
class DivergenceTemplate:
    """
    Small-t model of E(t): divergent powers, the free t**0 term and slack.

    ``fixed[i]`` is the a-priori coefficient of ``t**powers[i]``, or None when
    the coefficient is fitted. ``slack_powers`` model the O(t) remainder.
    """

    powers: Tuple[int, ...]
    fixed: Tuple[Optional[float], ...]
    include_log_linear: bool = False
    slack_powers: Tuple[int, ...] = GRAPH_SLACK_POWERS

    def __post_init__(self):
        powers = tuple(int(k) for k in self.powers)
        if len(self.fixed) != len(powers):
            raise InvalidInputError("Every divergent power needs a fixed value or None")
        if any(k >= 0 for k in powers):
            raise InvalidInputError("Divergent powers must be negative")
        if list(powers) != sorted(set(powers)):
            raise InvalidInputError(
                "Divergent powers must be distinct, most singular first"
            )
        slack = tuple(int(p) for p in self.slack_powers)
        if any(p <= 0 for p in slack) or len(set(slack)) != len(slack):
            raise InvalidInputError("Slack powers must be distinct positive integers")
        if self.include_log_linear and 1 not in slack:
            raise InvalidInputError("A t*ln(t) term needs a linear slack term")
        object.__setattr__(self, "powers", powers)
        object.__setattr__(self, "fixed", tuple(self.fixed))
        object.__setattr__(self, "slack_powers", slack)

    @property
    def free_powers(self) -> Tuple[int, ...]:
        return tuple(k for k, c in zip(self.powers, self.fixed) if c is None)

    @property
    def n_free(self) -> int:
        """Number of fitted coefficients, the finite part included."""
        return (
            len(self.free_powers)
            + 1
            + int(self.include_log_linear)
            + len(self.slack_powers)
        )

    @classmethod
    def from_tail(
        cls,
        tail: WeylTail,
        free_powers: Sequence[int] = (),
        include_log_linear: bool = False,
        slack_powers: Sequence[int] = GRAPH_SLACK_POWERS,
    ) -> "DivergenceTemplate":
        """Fix the divergences implied by the Weyl law; fit ``free_powers``."""
        terms = {k: c for k, c in tail.energy_divergences().items()}
        for k in free_powers:
            terms[k] = None
        powers = tuple(sorted(terms))
        return cls(
            powers,
            tuple(terms[k] for k in powers),
            include_log_linear=include_log_linear,
            slack_powers=tuple(slack_powers),
        )

    @classmethod
    def for_geometry(cls, geometry: GeometrySpec) -> "DivergenceTemplate":
        """Graphs fix t**-2; boxes fix t**-4 and t**-2 and fit t**-3 and t**-1."""
        if isinstance(geometry, BoxSpec):
            return cls.from_tail(
                geometry.weyl_tail(),
                free_powers=(-3, -1),
                slack_powers=BOX_SLACK_POWERS,
            )
        return cls.from_tail(geometry.weyl_tail())


@dataclass(frozen=True)
class FinitePartFit:
    """Finite vacuum energy with the fitted template coefficients and diagnostics."""

    finite_part: float
    divergent_coeffs: Dict[str, float]
    residual: float
    window: Tuple[float, ...]
    coefficients: Dict[str, float] = field(default_factory=dict)
    condition: float = 1.0
    stability_shift: float = 0.0
    reliable: bool = True
    method: str = "fit"

    def as_record(self) -> Dict[str, object]:
        """Flatten to a single-level record for CSV/JSON output."""
        record = {
            "finite_part": self.finite_part,
            "residual": self.residual,
            "condition": self.condition,
            "stability_shift": self.stability_shift,
            "reliable": self.reliable,
            "method": self.method,
            "window": " ".join(f"{t:.12g}" for t in self.window),
        }
        for label, value in sorted(self.divergent_coeffs.items()):
            record[f"coeff[{label}]"] = value
        return record


def _check_cutoff(t):
    if not isinstance(t, (int, float, np.floating)) or not math.isfinite(t) or t <= 0:
        raise InvalidInputError(f"Cutoff t must be positive and finite, got {t!r}")
    return float(t)


def _mode_sum(spectrum: Spectrum, t: float, moment: int, rtol: float):
    """Compensated sum of mult * w**moment * exp(-w t) and its tail bound."""
    t = _check_cutoff(t)
    if spectrum.tail is None:
        raise InvalidInputError(f"{spectrum.geometry}: spectrum has no tail descriptor")
    tail = spectrum.tail
    bound = tail.tail_bound(spectrum.omega_max, t, moment)
    allowed = rtol * tail.leading_sum(t, moment)
    if bound > allowed:
        required = tail.required_omega_max(t, moment, rtol)
        raise InsufficientSpectrumError(
            f"{spectrum.geometry}: tail bound {bound:.3g} exceeds {allowed:.3g} at "
            f"t={t:g}; need omega_max >= {required:.6g}",
            required_omega_max=required,
        )
    weights = spectrum.multiplicities * np.exp(-spectrum.omegas * t)
    if moment:
        weights = weights * spectrum.omegas**moment
    return math.fsum(weights), bound


def cylinder_trace(spectrum: Spectrum, t: float, rtol: float = 1e-10) -> float:
    """
    Cutoff trace T(t) = sum_n mult_n exp(-w_n t); zero modes count fully.

    Raises:
        InsufficientSpectrumError: If the certified tail bound exceeds
            ``rtol`` times the leading small-t size of the trace.
    """
    return _mode_sum(spectrum, t, 0, rtol)[0]


def regularized_energy(spectrum: Spectrum, t: float, rtol: float = 1e-10) -> float:
    """Regularized energy E(t) = 1/2 sum_n mult_n w_n exp(-w_n t)."""
    return 0.5 * _mode_sum(spectrum, t, 1, rtol)[0]


def sample(spectrum: Spectrum, t: float, rtol: float = 1e-10) -> CutoffSample:
    """Trace and energy at one cutoff with the larger of their tail bounds."""
    trace, trace_bound = _mode_sum(spectrum, t, 0, rtol)
    energy_sum, energy_bound = _mode_sum(spectrum, t, 1, rtol)
    return CutoffSample(
        t=float(t),
        trace=trace,
        energy=0.5 * energy_sum,
        truncation_bound=max(trace_bound, 0.5 * energy_bound),
    )


def spectrum_for(
    geometry: GeometrySpec,
    t_min: float,
    rtol: float = 1e-10,
    settings: Optional[Settings] = None,
    closed_form: Optional[bool] = None,
) -> Spectrum:
    """Spectrum whose ceiling certifies both sums down to ``t_min``."""
    t_min = _check_cutoff(t_min)
    tail = geometry.weyl_tail()
    omega_max = max(
        tail.required_omega_max(t_min, moment, rtol) for moment in (0, 1)
    )
    if isinstance(geometry, StarGraphSpec) and closed_form is not None:
        return star_spectrum(geometry, omega_max, closed_form, settings)
    return geometry.spectrum(omega_max, settings)


def cutoff_ladder(geometry: GeometrySpec, settings: Optional[Settings] = None):
    """Geometric ladder t_k = start * a_min * ratio**-k, largest cutoff first."""
    settings = settings or Settings()
    if isinstance(geometry, BoxSpec):
        start, ratio, rungs = (
            settings.box_ladder_start,
            settings.box_ladder_ratio,
            settings.box_ladder_rungs,
        )
    else:
        start, ratio, rungs = (
            settings.ladder_start,
            settings.ladder_ratio,
            settings.ladder_rungs,
        )
    t0 = start * geometry.min_length
    return tuple(t0 * ratio ** (-k) for k in range(rungs))


def _tail_rtol(geometry, settings):
    if isinstance(geometry, BoxSpec):
        return settings.box_tail_rtol
    return settings.tail_rtol


def sample_energies(
    geometry: GeometrySpec,
    ladder: Sequence[float],
    settings: Optional[Settings] = None,
    closed_form: Optional[bool] = None,
) -> List[CutoffSample]:
    """
    Sample the cutoff energy of ``geometry`` at every rung of ``ladder``.

    One spectrum is built for the smallest cutoff and shared by all rungs.
    """
    settings = settings or Settings()
    rtol = _tail_rtol(geometry, settings)
    spectrum = spectrum_for(geometry, min(ladder), rtol, settings, closed_form)
    regular_logger.debug(
        "%s: sampling %d cutoffs with %d distinct frequencies",
        geometry.tag,
        len(ladder),
        len(spectrum),
    )
    if settings.workers > 1:
        with ThreadPoolExecutor(max_workers=settings.workers) as pool:
            return list(pool.map(lambda t: sample(spectrum, t, rtol), ladder))
    return [sample(spectrum, t, rtol) for t in ladder]


def _is_geometric(ts):
    ratios = ts[:-1] / ts[1:]
    return np.all(ratios > 1) and np.allclose(ratios, ratios[0], rtol=1e-9)


def extract_finite_part(
    samples: Sequence[CutoffSample],
    template: DivergenceTemplate,
    char_length: Optional[float] = None,
    residual_tol: float = 1e-8,
    condition_max: float = 1e12,
    stability_rtol: float = 1e-6,
    check_stability: bool = True,
) -> FinitePartFit:
    """
    Fit E(t) against ``template`` and return its t**0 coefficient.

    The fit runs in tau = t / char_length with unit-scaled columns. The
    finite part must survive dropping the largest cutoff.

    Args:
        samples: Cutoff samples on a decreasing geometric ladder.
        template: Divergence model.
        char_length: Length used to rescale t; defaults to the largest cutoff.
        residual_tol: Largest relative residual of a reliable fit.
        condition_max: Largest acceptable condition number of the design.
        stability_rtol: Allowed window shift relative to max(|E_fin|, 1/char_length).
        check_stability: Refit without the largest cutoff and compare.

    Returns:
        FinitePartFit: Finite part, coefficients and diagnostics.

    Raises:
        InvalidInputError: On too few samples or a non-geometric ladder.
        UnreliableFitError: If the design is ill-conditioned.
        InstabilityError: If the window check fails.
    """
    samples = list(samples)
    needed = template.n_free + (2 if check_stability else 1)
    if len(samples) < needed:
        raise InvalidInputError(
            f"Need at least {needed} samples for {template.n_free} free terms, "
            f"got {len(samples)}"
        )
    ts = np.array([s.t for s in samples], dtype=float)
    if not _is_geometric(ts):
        raise InvalidInputError("Cutoffs must form a decreasing geometric ladder")
    if not all(math.isfinite(s.truncation_bound) for s in samples):
        raise InvalidInputError("Every sample needs a certified truncation bound")

    scale = float(char_length) if char_length else float(ts[0])
    energies = np.array([s.energy for s in samples], dtype=float)
    targets = np.array(
        [
            math.fsum(
                [s.energy]
                + [
                    -c * s.t**k
                    for k, c in zip(template.powers, template.fixed)
                    if c is not None
                ]
            )
            for s in samples
        ]
    )

    tau = ts / scale
    labels, columns = [], []
    for k in template.free_powers:
        labels.append(_term_label(k))
        columns.append(tau**k)
    labels.append(_term_label(0))
    columns.append(np.ones_like(tau))
    if template.include_log_linear:
        labels.append(LOG_LABEL)
        columns.append(tau * np.log(tau))
    for p in template.slack_powers:
        labels.append(_term_label(p))
        columns.append(tau**p)

    design = np.column_stack(columns)
    norms = np.max(np.abs(design), axis=0)
    scaled = design / norms
    condition = float(np.linalg.cond(scaled))
    diagnostics = {"condition": condition, "window": tuple(ts)}
    if not math.isfinite(condition) or condition > condition_max:
        raise UnreliableFitError(
            f"Finite-part fit is ill-conditioned (cond={condition:.3g})", diagnostics
        )
    solution, *_ = np.linalg.lstsq(scaled, targets, rcond=None)
    tau_coeffs = solution / norms
    residual = float(
        np.max(
            np.abs(targets - design @ tau_coeffs)
            / np.maximum(np.abs(energies), 1e-300)
        )
    )

    coefficients = _to_t_units(dict(zip(labels, tau_coeffs)), scale)
    finite_part = coefficients[_term_label(0)]
    divergent = {
        _term_label(k): (c if c is not None else coefficients[_term_label(k)])
        for k, c in zip(template.powers, template.fixed)
    }
    for k, c in zip(template.powers, template.fixed):
        if c is not None:
            coefficients[_term_label(k)] = c

    shift = 0.0
    if check_stability:
        narrower = extract_finite_part(
            samples[1:],
            template,
            char_length=scale,
            residual_tol=residual_tol,
            condition_max=condition_max,
            check_stability=False,
        )
        shift = abs(narrower.finite_part - finite_part)
        allowed = stability_rtol * max(abs(finite_part), 1.0 / scale)
        if shift > allowed:
            diagnostics.update(shift=shift, allowed=allowed)
            raise InstabilityError(
                f"Finite part moved by {shift:.3g} (allowed {allowed:.3g}) when "
                f"dropping t={ts[0]:g}",
                diagnostics,
            )

    reliable = residual <= residual_tol
    if not reliable:
        regular_logger.warning(
            "Fit residual %.3g exceeds %.3g; finite part marked unreliable",
            residual,
            residual_tol,
        )
    regular_logger.debug(
        "Finite part %.15g (residual %.3g, cond %.3g, shift %.3g)",
        finite_part,
        residual,
        condition,
        shift,
    )
    return FinitePartFit(
        finite_part=float(finite_part),
        divergent_coeffs=divergent,
        residual=residual,
        window=tuple(float(t) for t in ts),
        coefficients=coefficients,
        condition=condition,
        stability_shift=shift,
        reliable=reliable,
    )


def _to_t_units(tau_coeffs, scale):
    """Convert coefficients of tau = t/scale back to powers of t."""
    coefficients = {}
    for label, value in tau_coeffs.items():
        if label == LOG_LABEL:
            continue
        power = int(label[2:])
        coefficients[label] = float(value) / scale**power
    if LOG_LABEL in tau_coeffs:
        c_log = float(tau_coeffs[LOG_LABEL])
        coefficients[LOG_LABEL] = c_log / scale
        linear = _term_label(1)
        shift = c_log * math.log(scale) / scale
        coefficients[linear] = coefficients.get(linear, 0.0) - shift
    return coefficients


def closed_form_energy_1d(spec: IntervalSpec) -> float:
    """Finite vacuum energy of an interval: -pi/24a equal ends, +pi/48a mixed."""
    if spec.mixed:
        return math.pi / (48.0 * spec.a)
    return -math.pi / (24.0 * spec.a)


def _fit_settings(geometry, settings):
    if isinstance(geometry, BoxSpec):
        return settings.box_fit_residual_tol, settings.box_stability_rtol
    return settings.fit_residual_tol, settings.stability_rtol


def finite_energy(
    geometry: GeometrySpec,
    settings: Optional[Settings] = None,
    ladder: Optional[Sequence[float]] = None,
    closed_form: Optional[bool] = None,
    method: Optional[str] = None,
) -> FinitePartFit:
    """
    Finite vacuum energy of a geometry.

    Intervals and stars always go through spectrum -> cutoff ladder -> fit.
    Boxes use ``method`` (default ``settings.box_method``): ``"modes"`` fits
    direct mode sums, ``"orbit"`` takes the t -> 0 limit of the periodic-orbit
    expansion of the same cutoff energy.
    """
    settings = settings or Settings()
    if isinstance(geometry, BoxSpec):
        method = method or settings.box_method
        if method == "orbit":
            return box_orbit_fit(geometry, settings)
        if method != "modes":
            raise InvalidInputError(f"Unknown box energy method: {method!r}")
    ladder = tuple(ladder) if ladder is not None else cutoff_ladder(geometry, settings)
    samples = sample_energies(geometry, ladder, settings, closed_form)
    residual_tol, stability_rtol = _fit_settings(geometry, settings)
    return extract_finite_part(
        samples,
        DivergenceTemplate.for_geometry(geometry),
        char_length=geometry.min_length,
        residual_tol=residual_tol,
        condition_max=settings.fit_condition_max,
        stability_rtol=stability_rtol,
    )


def star_shaft_energy(
    spec: StarGraphSpec,
    shaft_length: float,
    settings: Optional[Settings] = None,
    closed_form: Optional[bool] = None,
) -> FinitePartFit:
    """
    Finite energy of a star whose edges continue to length L past the pistons.

    Each exterior segment contributes its Weyl energy (L - a_j)/(2 pi t^2);
    the fixed divergence is then N L/(2 pi t^2), independent of the pistons.
    """
    settings = settings or Settings()
    if not shaft_length > max(spec.edge_lengths):
        raise InvalidInputError(
            f"Shaft length {shaft_length!r} must exceed every piston distance"
        )
    ladder = cutoff_ladder(spec, settings)
    exterior = math.fsum(shaft_length - a for a in spec.edge_lengths) / (2.0 * math.pi)
    samples = [
        CutoffSample(s.t, s.trace, s.energy + exterior / s.t**2, s.truncation_bound)
        for s in sample_energies(spec, ladder, settings, closed_form)
    ]
    template = DivergenceTemplate(
        (-2,),
        (spec.n * shaft_length / (2.0 * math.pi),),
        slack_powers=GRAPH_SLACK_POWERS,
    )
    return extract_finite_part(
        samples,
        template,
        char_length=spec.min_length,
        residual_tol=settings.fit_residual_tol,
        condition_max=settings.fit_condition_max,
        stability_rtol=settings.stability_rtol,
    )


def _pair_sum_cubed(u: float, v: float, cutoff: float) -> float:
    """sum'_{q,s} (u^2 q^2 + v^2 s^2)^(-3/2) for u <= v, resummed along q."""
    total = 2.0 * zeta(3.0) / u**3 + 2.0 * math.pi**2 / (3.0 * u * v**2)
    reach = int(math.ceil(cutoff * u / (2.0 * math.pi * v))) + 1
    k = np.arange(1, reach + 1)[:, None]
    s = np.arange(1, reach + 1)[None, :]
    z = 2.0 * math.pi * k * s * v / u
    terms = np.where(z <= cutoff, (k / s) * k1(np.minimum(z, cutoff)), 0.0)
    total += 16.0 * math.pi / (u**2 * v) * math.fsum(terms.ravel())
    return total


def _image_sum(sides: Sequence[float], cutoff: float) -> float:
    """
    sum' over (p, q, s) of (L1^2 p^2 + L2^2 q^2 + L3^2 s^2)^-2.

    The sum over the shortest axis is done in closed form (coth/csch); the
    algebraic remainder is a two-dimensional sum resummed with Bessel K1.
    """
    l1, l2, l3 = sorted(sides)
    total = math.pi**4 / (45.0 * l1**4)
    total += math.pi / (2.0 * l1) * _pair_sum_cubed(l2, l3, cutoff)

    q_reach = int(math.ceil(cutoff * l1 / (2.0 * math.pi * l2))) + 1
    s_reach = int(math.ceil(cutoff * l1 / (2.0 * math.pi * l3))) + 1
    q = np.arange(-q_reach, q_reach + 1)[:, None]
    s = np.arange(-s_reach, s_reach + 1)[None, :]
    c = np.sqrt((l2 * q) ** 2 + (l3 * s) ** 2)
    c = c[c > 0]
    z = math.pi * c / l1
    decay = np.exp(-2.0 * z)
    corrections = math.pi / (l1 * c**3) * decay / (-np.expm1(-2.0 * z))
    csch2 = 4.0 * decay / np.expm1(-2.0 * z) ** 2
    corrections += math.pi**2 / (2.0 * l1**2 * c**2) * csch2
    return total + math.fsum(corrections)


def conducting_box_energy(
    a: float, b1: float, b2: float, cutoff: float = 60.0
) -> float:
    """
    Finite cutoff-energy of a perfectly conducting box from its periodic orbits.

    E = -V/(16 pi^2) sum' (a^2 p^2 + b1^2 q^2 + b2^2 s^2)^-2
        + (pi/48)(1/a + 1/b1 + 1/b2)
    """
    volume = a * b1 * b2
    return -volume / (16.0 * math.pi**2) * _image_sum((a, b1, b2), cutoff) + (
        math.pi / 48.0
    ) * (1.0 / a + 1.0 / b1 + 1.0 / b2)


def box_orbit_energy(box: BoxSpec, settings: Optional[Settings] = None) -> float:
    """Finite energy of ``box``; a permeable piston face gives E_2a - E_a."""
    cutoff = (settings or Settings()).orbit_cutoff
    energy = conducting_box_energy(box.a, box.b1, box.b2, cutoff)
    if box.permeable:
        return conducting_box_energy(2.0 * box.a, box.b1, box.b2, cutoff) - energy
    return energy


def box_orbit_fit(box: BoxSpec, settings: Optional[Settings] = None) -> FinitePartFit:
    """Wrap :func:`box_orbit_energy` as a fit record with the Weyl divergences."""
    divergences = {
        _term_label(k): c
        for k, c in sorted(box.weyl_tail().energy_divergences().items())
    }
    return FinitePartFit(
        finite_part=box_orbit_energy(box, settings),
        divergent_coeffs=divergences,
        residual=0.0,
        window=(),
        coefficients=dict(divergences),
        method="orbit",
    )
