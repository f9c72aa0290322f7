"""Runtime settings for the pistonlab pipelines.

Defaults live on :class:`Settings`. Every field can be overridden from the
environment with the ``PISTONLAB_`` prefix (``PISTONLAB_LADDER_RUNGS=8``), from
a ``.env`` file (loaded by the package on import) and from the command line.
"""

import dataclasses
import logging
import math
import os
from dataclasses import dataclass
from typing import Any, Mapping, Optional

from pistonlab.errors import ConfigurationError

ENV_PREFIX = "PISTONLAB_"

config_logger = logging.getLogger("pistonlab.config")

# Fields that are free-form strings; everything else numeric must be positive
_TEXT_FIELDS = {"box_method", "log_level", "log_file"}
_BOX_METHODS = ("orbit", "modes")


@dataclass(frozen=True)
class Settings:
    """Tolerances, ladders and budgets shared by all pipelines."""

    # Cutoff ladder for intervals and star graphs: t_k = start * a_min * ratio**-k
    ladder_rungs: int = 7
    ladder_start: float = 0.2
    ladder_ratio: float = 2.0
    # Tail bound target relative to the leading divergent term
    tail_rtol: float = 1e-18

    # Cutoff ladder for the direct box mode-sum fit
    box_ladder_rungs: int = 7
    box_ladder_start: float = 0.4
    box_ladder_ratio: float = math.sqrt(2.0)
    box_tail_rtol: float = 1e-12

    fit_residual_tol: float = 1e-8
    box_fit_residual_tol: float = 1e-3
    fit_condition_max: float = 1e12
    stability_rtol: float = 1e-6
    box_stability_rtol: float = 2e-2

    # Root finding on star graphs
    cluster_tol: float = 1e-8
    bisection_xtol: float = 1e-12
    bisection_max_iter: int = 200
    scan_divisions: int = 8

    mode_budget: int = 25_000_000
    # Exponential sums in the periodic-orbit box energy are cut at exp(-orbit_cutoff)
    orbit_cutoff: float = 60.0

    gradient_step: float = 1e-3
    null_epsilon: float = 1e-6
    regime_limit: float = 0.2

    workers: int = 1
    box_method: str = "orbit"
    log_level: str = "INFO"
    log_file: str = ""

    @classmethod
    def field_names(cls):
        """Return the names of all settings fields."""
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_env(cls, environ: Optional[Mapping[str, str]] = None) -> "Settings":
        """
        Build settings from ``PISTONLAB_*`` environment variables.

        Args:
            environ: Mapping to read from, defaults to ``os.environ``.

        Returns:
            Settings: Defaults overridden by any matching variables.
        """
        environ = os.environ if environ is None else environ
        overrides = {}
        for name in cls.field_names():
            key = ENV_PREFIX + name.upper()
            if key in environ:
                overrides[name] = environ[key]
        if overrides:
            config_logger.debug("Settings from environment: %s", sorted(overrides))
        return cls().with_overrides(overrides)

    def with_overrides(self, overrides: Mapping[str, Any]) -> "Settings":
        """
        Return a copy with validated overrides applied.

        Args:
            overrides: Field name to value; strings are cast to the field type.

        Returns:
            Settings: The updated settings.

        Raises:
            ConfigurationError: On unknown keys, uncastable or nonpositive values.
        """
        types = {f.name: f.type for f in dataclasses.fields(self)}
        changes = {}
        for key, raw in overrides.items():
            name = key.lower()
            if name.startswith(ENV_PREFIX.lower()):
                name = name[len(ENV_PREFIX) :]
            if name not in types:
                raise ConfigurationError(f"Unknown setting: {key}")
            changes[name] = _cast(name, types[name], raw)
        return dataclasses.replace(self, **changes)

    def as_dict(self):
        """Return the settings as a plain dictionary."""
        return dataclasses.asdict(self)


def _cast(name, field_type, raw):
    """Cast one raw override to its field type and validate it."""
    if name in _TEXT_FIELDS:
        value = str(raw)
        if name == "box_method" and value not in _BOX_METHODS:
            raise ConfigurationError(
                f"box_method must be one of {_BOX_METHODS}, got {value!r}"
            )
        return value

    caster = int if field_type in (int, "int") else float
    try:
        number = float(raw)
        value = int(number) if caster is int else number
    except (TypeError, ValueError, OverflowError) as e:
        raise ConfigurationError(f"Invalid value for {name}: {raw!r}") from e
    if caster is int and value != number:
        raise ConfigurationError(f"Setting {name} must be an integer, got {raw!r}")

    if not value > 0 or (caster is float and not math.isfinite(value)):
        raise ConfigurationError(f"Setting {name} must be positive, got {raw!r}")
    return value
