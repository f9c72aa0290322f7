"""Eigenfrequency spectra for intervals, quantum star graphs and EM boxes.

All lengths are in natural units (hbar = c = 1), so frequencies are inverse
lengths. Spectra are immutable once built and carry a Weyl tail descriptor
that downstream sums use to bound what lies above the enumeration ceiling.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import gamma, gammaincc

from pistonlab.config import Settings
from pistonlab.errors import (
    InvalidInputError,
    NumericalFailureError,
    ResourceLimitError,
)

spectra_logger = logging.getLogger("pistonlab.spectra")

ZERO_MODE = 1
"""Flag bit set on the omega = 0 constant mode."""


class BoundaryCondition(Enum):
    """Endpoint behaviour of the field: it vanishes, or its derivative does."""

    DIRICHLET = "D"
    NEUMANN = "N"

    @classmethod
    def parse(cls, value) -> "BoundaryCondition":
        """Accept a member, its letter, or its name in any case."""
        if isinstance(value, cls):
            return value
        text = str(value).strip().upper()
        for member in cls:
            if text in (member.value, member.name):
                return member
        raise InvalidInputError(f"Unknown boundary condition: {value!r}")


class WallModel(Enum):
    """Wall types of a rectangular EM cavity."""

    ALL_CONDUCTING = "conducting"
    PERMEABLE_PISTON = "permeable"

    @classmethod
    def parse(cls, value) -> "WallModel":
        """Accept a member or its value."""
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower()
        for member in cls:
            if text in (member.value, member.name.lower()):
                return member
        raise InvalidInputError(f"Unknown wall model: {value!r}")


def _check_length(name, value):
    if not isinstance(value, (int, float, np.floating)) or isinstance(value, bool):
        raise InvalidInputError(f"{name} must be a real number, got {value!r}")
    if not math.isfinite(value) or value <= 0:
        raise InvalidInputError(f"{name} must be positive and finite, got {value!r}")
    return float(value)


def _check_ceiling(omega_max):
    return _check_length("omega_max", omega_max)


@dataclass(frozen=True)
class WeylTail:
    """
    Asymptotic mode counting N(w) ~ sum_k c_k w**k beyond the ceiling.

    ``remainder_coefficient * w**remainder_power`` bounds |N(w) - Weyl(w)|.
    """

    coefficients: Tuple[Tuple[int, float], ...]
    remainder_coefficient: float
    remainder_power: int = 0

    @property
    def leading_power(self) -> int:
        return max(k for k, _ in self.coefficients)

    def counting(self, omega: float) -> float:
        """Weyl estimate of the number of modes below ``omega``."""
        return sum(c * omega**k for k, c in self.coefficients)

    def remainder(self, omega: float) -> float:
        """Bound on the deviation of the true count from :meth:`counting`."""
        return self.remainder_coefficient * omega**self.remainder_power

    def leading_sum(self, t: float, moment: int) -> float:
        """Leading small-t size of sum_n w_n**moment exp(-w_n t)."""
        k = self.leading_power
        c = dict(self.coefficients)[k]
        return abs(k * c) * gamma(k + moment) / t ** (k + moment)

    def tail_bound(self, omega_max: float, t: float, moment: int) -> float:
        """
        Upper bound on sum over w_n > omega_max of w_n**moment exp(-w_n t).

        Integrates the Weyl density plus the counting remainder by parts; the
        summand must already be decreasing at the ceiling.
        """
        x = omega_max * t
        if x <= moment:
            return math.inf

        def upper_gamma_integral(power):
            # int_omega_max^inf w**(power - 1) exp(-w t) dw
            return gamma(power) * gammaincc(power, x) / t**power

        bound = 0.0
        for k, c in self.coefficients:
            if k >= 1:
                bound += abs(k * c) * upper_gamma_integral(k + moment)
        g_at_ceiling = omega_max**moment * math.exp(-x)
        bound += 2.0 * self.remainder(omega_max) * g_at_ceiling
        p = self.remainder_power
        if p >= 1:
            bound += self.remainder_coefficient * p * upper_gamma_integral(p + moment)
        return float(bound)

    def required_omega_max(self, t: float, moment: int, rtol: float) -> float:
        """Smallest ceiling (to 1%) whose tail bound is below rtol times the sum."""
        target = rtol * self.leading_sum(t, moment)
        omega = (moment + self.leading_power + 1.0) / t
        while self.tail_bound(omega, t, moment) > target:
            omega *= 2.0
        low = omega / 2.0
        while omega - low > 0.01 * omega:
            mid = 0.5 * (low + omega)
            if self.tail_bound(mid, t, moment) > target:
                low = mid
            else:
                omega = mid
        return omega

    def energy_divergences(self):
        """
        Cutoff-energy divergences implied by the counting law.

        Returns:
            dict: Power of t (negative) to coefficient, for E(t) = -T'(t)/2.
        """
        divergences = {}
        for k, c in self.coefficients:
            if k >= 1:
                divergences[-(k + 1)] = 0.5 * k * math.factorial(k) * c
        return divergences


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Ordered (frequency, multiplicity) list complete up to ``omega_max``."""

    geometry: str
    omegas: np.ndarray
    multiplicities: np.ndarray
    omega_max: float
    tail: Optional[WeylTail] = None
    flags: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        omegas = np.array(self.omegas, dtype=float)
        mults = np.array(self.multiplicities, dtype=np.int64)
        flags = (
            np.zeros(len(omegas), dtype=np.int64)
            if self.flags is None
            else np.array(self.flags, dtype=np.int64)
        )
        if omegas.ndim != 1 or not omegas.shape == mults.shape == flags.shape:
            raise InvalidInputError("Spectrum columns must be 1-D and equally long")
        if omegas.size:
            if np.any(omegas < 0):
                raise InvalidInputError("Frequencies must be nonnegative")
            if np.any(np.diff(omegas) <= 0):
                raise InvalidInputError("Frequencies must be strictly increasing")
            if np.any(mults < 1):
                raise InvalidInputError("Multiplicities must be at least 1")
        for array in (omegas, mults, flags):
            array.setflags(write=False)
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "multiplicities", mults)
        object.__setattr__(self, "flags", flags)

    def __len__(self):
        return int(self.omegas.size)

    @property
    def modes(self) -> List[Tuple[float, int]]:
        """The (omega, multiplicity) pairs as plain Python values."""
        return [(float(w), int(m)) for w, m in zip(self.omegas, self.multiplicities)]

    @property
    def zero_mode_mask(self) -> np.ndarray:
        return (self.flags & ZERO_MODE) != 0

    def total_count(self) -> int:
        return int(self.multiplicities.sum())

    def count_below(self, omega: float) -> int:
        """Number of modes, with multiplicity, with frequency below ``omega``."""
        index = np.searchsorted(self.omegas, omega, side="left")
        return int(self.multiplicities[:index].sum())

    def to_text(self) -> str:
        """Serialize to the columnar text format."""
        lines = [
            f"# geometry={self.geometry} omega_max={self.omega_max:.17g}",
            "omega,multiplicity,flags",
        ]
        for w, m, f in zip(self.omegas, self.multiplicities, self.flags):
            lines.append(f"{w:.17g},{int(m)},{int(f)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, tail: Optional[WeylTail] = None) -> "Spectrum":
        """
        Parse the columnar text format written by :meth:`to_text`.

        Raises:
            InvalidInputError: If the header or a row is malformed.
        """
        lines = [line for line in text.splitlines() if line.strip()]
        if not lines or not lines[0].startswith("#"):
            raise InvalidInputError("Missing spectrum header line")
        header = dict(
            item.split("=", 1) for item in lines[0].lstrip("#").split() if "=" in item
        )
        try:
            geometry = header["geometry"]
            omega_max = float(header["omega_max"])
            rows = [line.split(",") for line in lines[2:]]
            omegas = [float(r[0]) for r in rows]
            mults = [int(r[1]) for r in rows]
            flags = [int(r[2]) for r in rows]
        except (KeyError, IndexError, ValueError) as e:
            raise InvalidInputError(f"Malformed spectrum text: {e}") from e
        return cls(geometry, omegas, mults, omega_max, tail=tail, flags=flags)


def merge_modes(omegas, mults, flags=None, atol=0.0, rtol=0.0):
    """
    Sort modes and merge frequencies closer than ``atol + rtol * omega``.

    Returns:
        tuple: (omegas, multiplicities, flags) with strictly increasing omegas.
    """
    omegas = np.asarray(omegas, dtype=float)
    mults = np.asarray(mults, dtype=np.int64)
    flags = np.zeros_like(mults) if flags is None else np.asarray(flags, np.int64)
    keep = mults > 0
    omegas, mults, flags = omegas[keep], mults[keep], flags[keep]
    if omegas.size == 0:
        return omegas, mults, flags
    order = np.argsort(omegas, kind="stable")
    omegas, mults, flags = omegas[order], mults[order], flags[order]
    starts = np.concatenate(
        ([0], np.nonzero(np.diff(omegas) > atol + rtol * omegas[1:])[0] + 1)
    )
    return (
        omegas[starts],
        np.add.reduceat(mults, starts),
        np.bitwise_or.reduceat(flags, starts),
    )


class GeometrySpec(ABC):
    """Abstract base class for geometries that own a spectrum."""

    @property
    @abstractmethod
    def tag(self) -> str:
        """Short geometry label used in serialized spectra and reports."""

    @property
    @abstractmethod
    def min_length(self) -> float:
        """Smallest length scale of the geometry."""

    @abstractmethod
    def weyl_tail(self) -> WeylTail:
        """Weyl counting law of the geometry."""

    @abstractmethod
    def scaled(self, lam: float) -> "GeometrySpec":
        """Return the geometry with every length multiplied by ``lam``."""

    @abstractmethod
    def spectrum(
        self, omega_max: float, settings: Optional[Settings] = None
    ) -> Spectrum:
        """Enumerate the spectrum up to ``omega_max``."""


@dataclass(frozen=True)
class IntervalSpec(GeometrySpec):
    """Interval of length ``a`` with Dirichlet or Neumann ends."""

    a: float
    left: BoundaryCondition = BoundaryCondition.DIRICHLET
    right: BoundaryCondition = BoundaryCondition.DIRICHLET

    def __post_init__(self):
        object.__setattr__(self, "a", _check_length("a", self.a))
        object.__setattr__(self, "left", BoundaryCondition.parse(self.left))
        object.__setattr__(self, "right", BoundaryCondition.parse(self.right))

    @property
    def mixed(self) -> bool:
        return self.left is not self.right

    @property
    def tag(self) -> str:
        return f"interval-{self.left.value}{self.right.value}-a{self.a:.12g}"

    @property
    def min_length(self) -> float:
        return self.a

    def weyl_tail(self) -> WeylTail:
        return WeylTail(((1, self.a / math.pi),), remainder_coefficient=1.0)

    def scaled(self, lam: float) -> "IntervalSpec":
        return IntervalSpec(self.a * lam, self.left, self.right)

    def spectrum(self, omega_max, settings=None) -> Spectrum:
        return interval_spectrum(self, omega_max)


@dataclass(frozen=True)
class StarGraphSpec(GeometrySpec):
    """
    N edges joined at a Kirchhoff vertex, a piston at distance a_j on edge j.

    The vertex rule is fixed: the field is continuous at the centre and the
    outgoing derivatives sum to zero.
    """

    edge_lengths: Tuple[float, ...]
    piston_condition: BoundaryCondition = BoundaryCondition.NEUMANN

    vertex_rule = "kirchhoff"

    def __post_init__(self):
        lengths = tuple(self.edge_lengths)
        if len(lengths) < 1:
            raise InvalidInputError("A star graph needs at least one edge")
        lengths = tuple(_check_length(f"a_{j}", a) for j, a in enumerate(lengths))
        object.__setattr__(self, "edge_lengths", lengths)
        object.__setattr__(
            self, "piston_condition", BoundaryCondition.parse(self.piston_condition)
        )

    @classmethod
    def equal(cls, n: int, a: float, piston_condition=BoundaryCondition.NEUMANN):
        """Star with ``n`` edges of common length ``a``."""
        if int(n) != n or n < 1:
            raise InvalidInputError(f"N must be a positive integer, got {n!r}")
        return cls((a,) * int(n), piston_condition)

    @property
    def n(self) -> int:
        return len(self.edge_lengths)

    @property
    def equal_lengths(self) -> bool:
        return len(set(self.edge_lengths)) == 1

    @property
    def total_length(self) -> float:
        return math.fsum(self.edge_lengths)

    @property
    def tag(self) -> str:
        lengths = "_".join(f"{a:.12g}" for a in self.edge_lengths)
        return f"star-{self.piston_condition.value}-n{self.n}-a{lengths}"

    @property
    def min_length(self) -> float:
        return min(self.edge_lengths)

    def weyl_tail(self) -> WeylTail:
        return WeylTail(
            ((1, self.total_length / math.pi),), remainder_coefficient=float(self.n)
        )

    def scaled(self, lam: float) -> "StarGraphSpec":
        return StarGraphSpec(
            tuple(a * lam for a in self.edge_lengths), self.piston_condition
        )

    def spectrum(self, omega_max, settings=None) -> Spectrum:
        return star_spectrum(self, omega_max, settings=settings)


@dataclass(frozen=True)
class BoxSpec(GeometrySpec):
    """Rectangular EM cavity a x b1 x b2; the piston face is normal to a."""

    a: float
    b1: float
    b2: float
    wall_model: WallModel = WallModel.ALL_CONDUCTING

    def __post_init__(self):
        for name in ("a", "b1", "b2"):
            object.__setattr__(self, name, _check_length(name, getattr(self, name)))
        object.__setattr__(self, "wall_model", WallModel.parse(self.wall_model))

    @property
    def sides(self) -> Tuple[float, float, float]:
        return (self.a, self.b1, self.b2)

    @property
    def volume(self) -> float:
        return self.a * self.b1 * self.b2

    @property
    def permeable(self) -> bool:
        return self.wall_model is WallModel.PERMEABLE_PISTON

    @property
    def tag(self) -> str:
        return (
            f"box-{self.wall_model.value}-"
            f"{self.a:.12g}x{self.b1:.12g}x{self.b2:.12g}"
        )

    @property
    def min_length(self) -> float:
        return min(self.sides)

    def doubled(self) -> "BoxSpec":
        """The all-conducting box of length 2a used by the Rayleigh-Dowker transform."""
        return BoxSpec(2.0 * self.a, self.b1, self.b2)

    def conducting(self) -> "BoxSpec":
        return BoxSpec(self.a, self.b1, self.b2)

    def weyl_tail(self) -> WeylTail:
        a, b1, b2 = self.sides
        volume_term = self.volume / (3.0 * math.pi**2)
        if self.permeable:
            edge_sum = a
            faces = 3.0 * a * b1 + 3.0 * a * b2 + 2.0 * b1 * b2
        else:
            edge_sum = a + b1 + b2
            faces = a * b1 + a * b2 + b1 * b2
        return WeylTail(
            ((3, volume_term), (1, -edge_sum / (2.0 * math.pi))),
            remainder_coefficient=faces / (4.0 * math.pi),
            remainder_power=2,
        )

    def scaled(self, lam: float) -> "BoxSpec":
        return BoxSpec(self.a * lam, self.b1 * lam, self.b2 * lam, self.wall_model)

    def spectrum(self, omega_max, settings=None) -> Spectrum:
        return box_em_spectrum(self, omega_max, settings=settings)


def interval_spectrum(spec: IntervalSpec, omega_max: float) -> Spectrum:
    """
    Normal-mode frequencies of an interval up to ``omega_max``.

    Args:
        spec: Interval geometry.
        omega_max: Enumeration ceiling.

    Returns:
        Spectrum: n*pi/a for equal ends (n >= 1 Dirichlet, n >= 0 Neumann with
        the zero mode flagged), (2n+1)*pi/(2a) for mixed ends.
    """
    omega_max = _check_ceiling(omega_max)
    a = spec.a
    flags = None
    if spec.mixed:
        n = np.arange(int(omega_max * a / math.pi + 0.5) + 2)
        omegas = (2 * n + 1) * math.pi / (2.0 * a)
    elif spec.left is BoundaryCondition.DIRICHLET:
        n = np.arange(1, int(omega_max * a / math.pi) + 2)
        omegas = n * math.pi / a
    else:
        n = np.arange(int(omega_max * a / math.pi) + 2)
        omegas = n * math.pi / a
        flags = np.where(n == 0, ZERO_MODE, 0)
    keep = omegas <= omega_max
    omegas = omegas[keep]
    flags = None if flags is None else flags[keep]
    spectra_logger.debug("%s: %d modes below %g", spec.tag, omegas.size, omega_max)
    return Spectrum(
        spec.tag,
        omegas,
        np.ones(omegas.size, dtype=np.int64),
        omega_max,
        tail=spec.weyl_tail(),
        flags=flags,
    )


def _secular_values(lengths: np.ndarray, condition, omegas: np.ndarray) -> np.ndarray:
    """Pole-free Kirchhoff secular function on an array of frequencies."""
    phases = np.outer(lengths, omegas)
    sines, cosines = np.sin(phases), np.cos(phases)
    if condition is BoundaryCondition.NEUMANN:
        lead, rest = sines, cosines
    else:
        lead, rest = cosines, sines
    total = np.zeros(omegas.shape, dtype=float)
    for j in range(lengths.size):
        others = np.delete(rest, j, axis=0)
        total += lead[j] * (np.prod(others, axis=0) if others.size else 1.0)
    return total


def star_secular_function(spec: StarGraphSpec, omega: float) -> float:
    """
    Secular function whose zeros are the star-graph eigenfrequencies.

    Neumann pistons give sum_j sin(w a_j) prod_{k != j} cos(w a_k); Dirichlet
    pistons give sum_j cos(w a_j) prod_{k != j} sin(w a_k). Both are the
    Kirchhoff sum of tangents (cotangents) multiplied through by its poles.
    """
    omega = _check_length("omega", omega)
    lengths = np.asarray(spec.edge_lengths, dtype=float)
    return float(_secular_values(lengths, spec.piston_condition, np.array([omega]))[0])


def _pole_positions(lengths, condition, omega_max):
    """Frequencies where one edge factor of the secular product vanishes."""
    positions, edges = [], []
    for j, a in enumerate(lengths):
        if condition is BoundaryCondition.NEUMANN:
            n = np.arange(int(omega_max * a / math.pi + 0.5) + 1)
            poles = (2 * n + 1) * math.pi / (2.0 * a)
        else:
            n = np.arange(1, int(omega_max * a / math.pi) + 2)
            poles = n * math.pi / a
        poles = poles[poles <= omega_max]
        positions.append(poles)
        edges.append(np.full(poles.size, j))
    return np.concatenate(positions), np.concatenate(edges)


def _cluster(values, tol):
    """Group sorted values closer than ``tol``; return centres and sizes."""
    if values.size == 0:
        return values, np.zeros(0, dtype=np.int64)
    starts = np.concatenate(([0], np.nonzero(np.diff(values) > tol)[0] + 1))
    sizes = np.diff(np.append(starts, values.size))
    centres = np.add.reduceat(values, starts) / sizes
    return centres, sizes


def _bisect(func, lo, hi, xtol, max_iter):
    """Vectorized bisection of sign-changing brackets [lo, hi]."""
    lo, hi = lo.copy(), hi.copy()
    f_lo = func(lo)
    for _ in range(max_iter):
        if lo.size == 0 or np.max(hi - lo) <= xtol:
            return 0.5 * (lo + hi)
        mid = 0.5 * (lo + hi)
        f_mid = func(mid)
        left = np.sign(f_mid) == np.sign(f_lo)
        lo = np.where(left, mid, lo)
        f_lo = np.where(left, f_mid, f_lo)
        hi = np.where(left, hi, mid)
    worst = int(np.argmax(hi - lo))
    raise NumericalFailureError(
        f"Bisection did not reach {xtol:g} within {max_iter} iterations",
        bracket=(float(lo[worst]), float(hi[worst])),
    )


def _solve_star(spec: StarGraphSpec, omega_max: float, settings: Settings):
    """Root-finder spectrum of a star graph, ignoring any closed form."""
    lengths = np.asarray(spec.edge_lengths, dtype=float)
    condition = spec.piston_condition
    tol = settings.cluster_tol

    def secular(w):
        return _secular_values(lengths, condition, w)

    poles, _ = _pole_positions(lengths, condition, omega_max)
    centres, sizes = _cluster(np.sort(poles), tol)

    step = math.pi / (settings.scan_divisions * lengths.max())
    eps = np.finfo(float).eps
    gaps = np.diff(np.concatenate(([0.0], centres, [omega_max + step])))
    eta = np.maximum(1e-9 * step, 64 * eps * centres)
    if centres.size:
        eta = np.minimum(eta, 0.25 * np.minimum(gaps[:-1], gaps[1:]))

    grid = np.arange(1, int(omega_max / step) + 1) * step
    grid = np.append(grid[grid < omega_max], omega_max)
    if centres.size:
        nearest = np.searchsorted(centres, grid)
        left = np.abs(grid - centres[np.clip(nearest - 1, 0, centres.size - 1)])
        right = np.abs(centres[np.clip(nearest, 0, centres.size - 1)] - grid)
        clear = np.minimum(left, right) > np.max(eta) * 2
        grid = grid[clear]
    start = min(1e-9 * step, 0.5 * grid[0]) if grid.size else 1e-9 * step
    nodes = np.concatenate(([start], grid, centres - eta, centres + eta))
    nodes = np.unique(nodes[(nodes > 0) & (nodes <= omega_max)])

    values = secular(nodes)
    side = np.searchsorted(centres, nodes, side="right")
    same_gap = side[:-1] == side[1:]
    exact = (values == 0) & np.append(True, same_gap) & np.append(same_gap, True)
    change = same_gap & (values[:-1] * values[1:] < 0)
    lo, hi = nodes[:-1][change], nodes[1:][change]
    roots = _bisect(
        secular, lo, hi, settings.bisection_xtol, settings.bisection_max_iter
    )
    roots = np.sort(np.concatenate((roots, nodes[exact])))

    _check_root_counts(spec, roots, centres, omega_max)

    degenerate = sizes >= 2
    omegas = np.concatenate((roots, centres[degenerate]))
    mults = np.concatenate(
        (np.ones(roots.size, dtype=np.int64), sizes[degenerate] - 1)
    )
    flags = np.zeros(omegas.size, dtype=np.int64)
    if condition is BoundaryCondition.NEUMANN:
        omegas = np.append(omegas, 0.0)
        mults = np.append(mults, 1)
        flags = np.append(flags, ZERO_MODE)
    return merge_modes(omegas, mults, flags, atol=tol)


def _check_root_counts(spec, roots, centres, omega_max):
    """Each gap between distinct poles holds exactly one monotone-branch root."""
    if centres.size == 0:
        return
    counts = np.bincount(
        np.searchsorted(centres, roots), minlength=centres.size + 1
    )
    expected = np.ones(centres.size + 1, dtype=np.int64)
    if spec.piston_condition is BoundaryCondition.NEUMANN:
        expected[0] = 0
    wrong = np.nonzero(counts[: centres.size] != expected[: centres.size])[0]
    if wrong.size == 0 and counts[-1] <= 1:
        return
    gap = int(wrong[0]) if wrong.size else centres.size
    lo = float(centres[gap - 1]) if gap > 0 else 0.0
    hi = float(centres[gap]) if gap < centres.size else float(omega_max)
    spectra_logger.error(
        "%s: %d roots between poles %g and %g", spec.tag, int(counts[gap]), lo, hi
    )
    raise NumericalFailureError(
        f"{spec.tag}: expected {int(expected[gap])} root(s) between {lo:g} and "
        f"{hi:g}, found {int(counts[gap])}",
        bracket=(lo, hi),
    )


def _closed_form_star(spec: StarGraphSpec, omega_max: float):
    """Two-family spectrum of an equal-length star."""
    a, n_edges = spec.edge_lengths[0], spec.n
    integer_family = np.arange(1, int(omega_max * a / math.pi) + 2) * math.pi / a
    half = np.arange(int(omega_max * a / math.pi + 0.5) + 2)
    half_family = (2 * half + 1) * math.pi / (2.0 * a)
    if spec.piston_condition is BoundaryCondition.NEUMANN:
        single, multiple = integer_family, half_family
    else:
        single, multiple = half_family, integer_family
    omegas = np.concatenate((single, multiple))
    mults = np.concatenate(
        (
            np.ones(single.size, dtype=np.int64),
            np.full(multiple.size, n_edges - 1, dtype=np.int64),
        )
    )
    flags = np.zeros(omegas.size, dtype=np.int64)
    if spec.piston_condition is BoundaryCondition.NEUMANN:
        omegas = np.append(omegas, 0.0)
        mults = np.append(mults, 1)
        flags = np.append(flags, ZERO_MODE)
    keep = omegas <= omega_max
    return merge_modes(omegas[keep], mults[keep], flags[keep])


def star_spectrum(
    spec: StarGraphSpec,
    omega_max: float,
    closed_form: Optional[bool] = None,
    settings: Optional[Settings] = None,
) -> Spectrum:
    """
    Eigenfrequencies of a star graph with pistons up to ``omega_max``.

    Args:
        spec: Star geometry.
        omega_max: Enumeration ceiling.
        closed_form: Use the two-family formula; defaults to True exactly when
            all edges are equal. False forces the root finder.
        settings: Root-finding tolerances.

    Returns:
        Spectrum: Modes with multiplicities; Neumann stars include the
        flagged zero mode.

    Raises:
        NumericalFailureError: If a bracket fails to converge.
    """
    omega_max = _check_ceiling(omega_max)
    settings = settings or Settings()
    if closed_form is None:
        closed_form = spec.equal_lengths
    if closed_form and not spec.equal_lengths:
        raise InvalidInputError("The closed form needs equal edge lengths")
    if closed_form:
        omegas, mults, flags = _closed_form_star(spec, omega_max)
    else:
        omegas, mults, flags = _solve_star(spec, omega_max, settings)
    spectra_logger.debug(
        "%s: %d distinct frequencies below %g (%s)",
        spec.tag,
        omegas.size,
        omega_max,
        "closed form" if closed_form else "root finder",
    )
    return Spectrum(
        spec.tag, omegas, mults, omega_max, tail=spec.weyl_tail(), flags=flags
    )


def estimate_box_entries(spec: BoxSpec, omega_max: float) -> float:
    """Upper estimate of lattice points the box enumeration will visit."""
    k = omega_max / math.pi
    a, b1, b2 = spec.sides
    return (
        math.pi / 6.0 * k**3 * a * b1 * b2
        + math.pi / 4.0 * k**2 * (a * b1 + a * b2 + b1 * b2)
        + k * (a + b1 + b2)
        + 1.0
    )


def box_em_spectrum(
    spec: BoxSpec, omega_max: float, settings: Optional[Settings] = None
) -> Spectrum:
    """
    EM cavity modes pi*sqrt((l/a)^2 + (m/b1)^2 + (n/b2)^2) up to ``omega_max``.

    At least two indices must be nonzero; three nonzero indices carry both
    polarizations. For a permeable piston face the index along ``a`` runs
    over half-odd values, the reflection-odd modes of the doubled box.

    Raises:
        ResourceLimitError: If the enumeration exceeds ``settings.mode_budget``.
    """
    omega_max = _check_ceiling(omega_max)
    settings = settings or Settings()
    estimate = estimate_box_entries(spec, omega_max)
    if estimate > settings.mode_budget:
        raise ResourceLimitError(
            f"{spec.tag}: ~{estimate:.3g} lattice points below {omega_max:g} "
            f"exceed the budget of {settings.mode_budget}",
            estimated_modes=estimate,
        )

    a, b1, b2 = spec.sides
    k_max = omega_max / math.pi
    shift = 0.5 if spec.permeable else 0.0
    m = np.arange(int(k_max * b1) + 1)[:, None]
    n = np.arange(int(k_max * b2) + 1)[None, :]
    transverse = (m / b1) ** 2 + (n / b2) ** 2
    transverse_nonzero = (m != 0).astype(np.int64) + (n != 0).astype(np.int64)

    chunks_w, chunks_m = [], []
    for index in range(int(k_max * a - shift) + 1):
        l = index + shift
        k_sq = (l / a) ** 2 + transverse
        nonzero = transverse_nonzero + (1 if l != 0 else 0)
        keep = (k_sq <= k_max**2) & (nonzero >= 2)
        chunks_w.append(math.pi * np.sqrt(k_sq[keep]))
        chunks_m.append(np.where(nonzero[keep] == 3, 2, 1))
    omegas, mults, flags = merge_modes(
        np.concatenate(chunks_w), np.concatenate(chunks_m), rtol=1e-12
    )
    spectra_logger.debug(
        "%s: %d distinct frequencies (%d modes) below %g",
        spec.tag,
        omegas.size,
        int(mults.sum()),
        omega_max,
    )
    return Spectrum(
        spec.tag, omegas, mults, omega_max, tail=spec.weyl_tail(), flags=flags
    )
