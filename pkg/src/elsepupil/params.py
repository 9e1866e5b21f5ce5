"""Tunable parameters of the detector and their flat ``key=value`` file form."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

__all__ = ["ElseParams", "ParamsError", "load_params", "dump_params", "parse_param_value"]


class ParamsError(ValueError):
    """Unknown parameter name, unparsable value or violated constraint."""


@dataclass(frozen=True)
class ElseParams:
    """Every tunable of the detector, defaulting to the published setting.

    Vary one field at a time with :meth:`replace` for sensitivity runs.
    """

    border_fraction: float = 0.10
    canny_sigma: float = 1.4
    canny_percentile: float = 70.0
    canny_low_ratio: float = 0.4
    use_algorithmic_split: bool = False
    min_mean_line_dist: float = 3.0
    min_line_length: int = 5
    radi_ratio: float = 3.0
    min_area: float = 0.005
    max_area: float = 0.10
    validity_threshold: float = 10.0
    shrink_start: float = 0.95
    shrink_end: float = 0.80
    shrink_step: float = 0.01
    radius_scale: int = 5
    size_neighbourhood: int = 2
    validation_box_literal: bool = True

    def __post_init__(self):
        if not 0.0 <= self.border_fraction < 0.5:
            raise ParamsError("border_fraction must lie in [0, 0.5)")
        if not 0.0 < self.min_area < self.max_area < 1.0:
            raise ParamsError("need 0 < min_area < max_area < 1")
        if not 0.0 < self.shrink_end < self.shrink_start <= 1.0:
            raise ParamsError("need 0 < shrink_end < shrink_start <= 1")
        if self.shrink_step <= 0:
            raise ParamsError("shrink_step must be positive")
        if not 0.0 < self.canny_percentile < 100.0 or not 0.0 < self.canny_low_ratio <= 1.0:
            raise ParamsError("canny_percentile must be in (0, 100) and canny_low_ratio in (0, 1]")
        for name in ("canny_sigma", "min_mean_line_dist", "radi_ratio"):
            if getattr(self, name) <= 0:
                raise ParamsError(f"{name} must be positive")
        if self.validity_threshold < 0:
            raise ParamsError("validity_threshold must be non-negative")
        if self.min_line_length < 1 or self.radius_scale < 1 or self.size_neighbourhood < 0:
            raise ParamsError("min_line_length and radius_scale must be >= 1, size_neighbourhood >= 0")

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def replace(self, **changes) -> ElseParams:
        unknown = set(changes) - set(self.field_names())
        if unknown:
            raise ParamsError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
        return dataclasses.replace(self, **changes)

    def shrink_factors(self) -> list[float]:
        """Scale factors from ``shrink_start`` down to ``shrink_end`` inclusive."""
        n = int(round((self.shrink_start - self.shrink_end) / self.shrink_step))
        return [round(self.shrink_start - i * self.shrink_step, 10) for i in range(n + 1)]


def _field_type(name: str) -> type:
    for f in fields(ElseParams):
        if f.name == name:
            return type(getattr(ElseParams(), name))
    raise ParamsError(f"unknown parameter {name!r}")


def parse_param_value(name: str, text: str):
    """Convert ``text`` to the type of parameter ``name``."""
    kind = _field_type(name)
    text = text.strip()
    if kind is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ParamsError(f"{name}: expected a boolean, got {text!r}")
    try:
        if kind is int:
            value = float(text)
            if not value.is_integer():
                raise ValueError
            return int(value)
        return float(text)
    except ValueError:
        raise ParamsError(f"{name}: expected {kind.__name__}, got {text!r}") from None


def load_params(path) -> ElseParams:
    """Read a flat ``key=value`` file; ``#`` starts a comment."""
    values = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParamsError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = parse_param_value(key, value)
    return ElseParams().replace(**values)


def dump_params(params: ElseParams) -> str:
    return "".join(f"{name}={getattr(params, name)}\n" for name in params.field_names())
