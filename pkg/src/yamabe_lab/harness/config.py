"""Run configuration read from a flat ``key = value`` text file."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, fields
from pathlib import Path

from ..conformal import Chart, Profile, build_field
from ..errors import ConfigError, InvalidField

_FIXED = re.compile(r"fixed\(\s*([^)]+)\s*\)")


@dataclass(frozen=True)
class RunConfig:
    n: int
    chart: Chart
    N: int
    profile: str = "flat"
    h: float | None = None
    r_max: float | None = None
    L: float | None = None
    outer_bc: str | None = None
    perturbation_amplitude: float = 0.0
    perturbation_width: float = 1.0
    t_end: float = 1.0
    cfl_safety: float = 0.5
    blowup_factor: float = 1e3
    record_every: int = 1000
    delta_mode: str = "auto"
    seed: int = 0
    output_dir: str = "out"
    checkpoint_every: int = 0  # steps; 0 disables

    def __post_init__(self):
        if self.n < 3:
            raise ConfigError("n must be at least 3")
        if self.N < 16:
            raise ConfigError("N must be at least 16")
        for name in ("t_end", "blowup_factor", "perturbation_width"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be positive and finite")
        if not 0 < self.cfl_safety <= 1:
            raise ConfigError("cfl_safety must lie in (0, 1]")
        if self.record_every < 1:
            raise ConfigError("record_every must be positive")
        if self.checkpoint_every < 0 or (self.checkpoint_every and self.checkpoint_every % self.record_every):
            raise ConfigError("checkpoint_every must be a nonnegative multiple of record_every")
        d = self.fixed_delta
        if d is not None and not 0 < d < 1:
            raise ConfigError("fixed delta must lie in (0, 1)")
        try:
            Profile.parse(self.profile)
        except InvalidField as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def fixed_delta(self) -> float | None:
        if self.delta_mode == "auto":
            return None
        m = _FIXED.fullmatch(self.delta_mode.strip())
        if not m:
            raise ConfigError(f"delta_mode must be 'auto' or 'fixed(x)', got {self.delta_mode!r}")
        try:
            return float(m.group(1))
        except ValueError as exc:
            raise ConfigError(f"bad fixed delta {m.group(1)!r}") from exc

    def build_field(self):
        pert = None
        if self.perturbation_amplitude:
            pert = (self.perturbation_amplitude, self.perturbation_width)
        try:
            return build_field(self.chart, self.n, self.N, h=self.h, r_max=self.r_max, L=self.L,
                               profile=self.profile, perturbation=pert, outer_bc=self.outer_bc)
        except InvalidField as exc:
            raise ConfigError(str(exc)) from exc

    def to_text(self) -> str:
        lines = []
        for fd in fields(self):
            v = getattr(self, fd.name)
            if v is None:
                continue
            lines.append(f"{fd.name} = {v.value if isinstance(v, Chart) else v}")
        return "\n".join(lines) + "\n"


_TYPES = {fd.name: fd.type for fd in fields(RunConfig)}


def _convert(key: str, raw: str):
    kind = _TYPES[key]
    try:
        if key == "chart":
            return Chart.parse(raw)
        if kind == "int":
            return int(raw)
        if kind.startswith("float"):
            return float(raw)
        return raw
    except (ValueError, InvalidField) as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = _convert(key, raw)
    missing = [k for k in ("n", "chart", "N") if k not in values]
    if missing:
        raise ConfigError(f"{source}: missing required keys {missing}")
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    path = Path(path)
    text = path.read_text()  # OSError propagates to the CLI as an I/O failure
    return parse_config(text, str(path))
