"""Run configuration shared by the CLI and the in-memory pipeline."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import InputError


@dataclass(frozen=True)
class RunConfig:
    n: int = 128
    stride: int = 128
    ar_order: int = 36
    band_lo: float = 0.7
    band_hi: float = 4.0
    grid_rows: int = 6
    grid_cols: int = 6
    roi_height: int = 72
    roi_width: int = 72
    seed: int = 0
    jobs: int = 1
    test_fraction: float = 0.3
    learning_rate: float = 0.003
    batch_size: int = 16
    epochs: int = 30
    l2: float = 1e-4
    flip_augment: bool = True

    def validate(self) -> "RunConfig":
        if self.grid_rows * self.grid_cols != 36:
            raise InputError("the sub-region grid must have 36 cells")
        if self.roi_height % self.grid_rows or self.roi_width % self.grid_cols:
            raise InputError("ROI size must divide into the grid")
        if not 1 <= self.ar_order <= 36:
            raise InputError("AR order must lie in 1..36")
        if self.n < 64 or self.stride < 1 or self.jobs < 1:
            raise InputError("n must be >= 64; stride and jobs must be positive")
        if not 0 < self.test_fraction < 1:
            raise InputError("test_fraction must lie in (0, 1)")
        return self

    def updated(self, **changes) -> "RunConfig":
        known = {f.name for f in fields(self)}
        return replace(self, **{k: v for k, v in changes.items() if k in known and v is not None}).validate()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = set(doc) - set(known)
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc).validate()

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise InputError(f"cannot read config {path}: {exc}") from exc
        try:
            doc = tomllib.loads(text) if path.suffix == ".toml" else json.loads(text)
        except (ValueError, tomllib.TOMLDecodeError) as exc:
            raise InputError(f"malformed config {path}: {exc}") from exc
        return cls.from_dict(doc)

    def save(self, path) -> None:
        path = Path(path)
        if path.suffix == ".toml":
            lines = [f"{k} = {_toml_value(v)}" for k, v in self.to_dict().items()]
            path.write_text("\n".join(lines) + "\n")
        else:
            path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)
