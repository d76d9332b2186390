"""Run configuration: INI-style ``key = value`` text with section headers.

Precedence is flag > file > default. Example::

    [data]
    ratings = ratings.tsv
    edges = trust.tsv

    [model]
    kind = oggbn
    widths = 150,80,40
    V = 5

    [sampler]
    burn_in = 500
    collect = 50
    stride = 5
    seed = 1
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields

from .errors import ConfigError

SECTIONS = {
    "data": ["ratings", "edges", "value_map", "bins", "cosine_eps", "test_ratio", "split_seed"],
    "model": ["kind", "widths", "V", "threshold_init"],
    "sampler": ["burn_in", "collect", "stride", "seed", "workers", "compact"],
    "hyper": ["r", "c_init", "c0", "gamma0", "eta", "e0", "f0", "resample_c", "learn_thresholds",
              "exact_exposure"],
    "eval": ["N", "s_levels"],
    "output": ["out_dir"],
}


def _ints(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    return [int(x) for x in str(text).replace(" ", "").split(",") if x]


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [float(x) for x in str(text).replace(" ", "").split(",") if x]


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


@dataclass
class RunConfig:
    ratings: str = ""
    edges: str = ""
    value_map: str = "identity"
    bins: list[int] = field(default_factory=lambda: [1, 2, 6, 51])
    cosine_eps: float = 0.0          # 0 disables the synthetic graph
    test_ratio: float = 0.2
    split_seed: int = 0
    kind: str = "ogfa"
    widths: list[int] = field(default_factory=lambda: [100])
    V: int = 5
    threshold_init: str = "uniform"  # or comma-separated gaps
    burn_in: int = 500
    collect: int = 50
    stride: int = 5
    seed: int = 0
    workers: int = 1
    compact: bool = False
    r: float = 1.0
    c_init: float = 1.0
    c0: float = 1.0
    gamma0: float = 1.0
    eta: float = 0.05
    e0: float = 1.0
    f0: float = 1.0
    resample_c: bool = True
    learn_thresholds: bool = True
    exact_exposure: bool = False
    N: int = 100
    s_levels: list[int] = field(default_factory=lambda: [1])
    out_dir: str = "run"

    @property
    def sweeps(self) -> int:
        return self.burn_in + self.collect * self.stride

    def validate(self) -> "RunConfig":
        if self.kind not in ("ogfa", "oggbn"):
            raise ConfigError(f"model kind must be ogfa or oggbn, not {self.kind!r}")
        if not self.widths or min(self.widths) < 1:
            raise ConfigError("layer widths must be positive")
        if self.kind == "ogfa" and len(self.widths) != 1:
            raise ConfigError("ogfa takes a single width K")
        for name in ("V", "collect", "stride", "workers", "N"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.burn_in < 0:
            raise ConfigError("burn_in must be >= 0")
        if not 0 <= self.test_ratio < 1:
            raise ConfigError("test_ratio must lie in [0, 1)")
        if self.value_map not in ("identity", "counts"):
            raise ConfigError("value_map must be identity or counts")
        if self.value_map == "counts" and len(self.bins) != self.V:
            raise ConfigError(f"{len(self.bins)} count bins do not match V={self.V}")
        if not 0 <= self.cosine_eps < 1:
            raise ConfigError("cosine_eps must lie in [0, 1)")
        for s in self.s_levels:
            if not 1 <= s <= self.V:
                raise ConfigError(f"relevance level {s} outside 1..{self.V}")
        for name in ("r", "c_init", "c0", "gamma0", "eta", "e0", "f0"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.threshold_init != "uniform":
            gaps = _floats(self.threshold_init)
            if len(gaps) != self.V or min(gaps) <= 0:
                raise ConfigError("threshold_init needs V positive gaps")
        return self

    def set(self, key: str, value) -> None:
        """Assign from text or a native value, coercing to the field type."""
        types = {f.name: f.type for f in fields(self)}
        if key not in types:
            raise ConfigError(f"unknown configuration key {key!r}")
        kind = types[key]
        try:
            if kind == "list[int]":
                value = _ints(value)
            elif kind == "bool":
                value = _bool(value)
            elif kind == "int":
                value = int(value)
            elif kind == "float":
                value = float(value)
            else:
                value = str(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None
        setattr(self, key, value)

    def update(self, overrides: dict) -> "RunConfig":
        for k, v in overrides.items():
            if v is not None:
                self.set(k, v)
        return self

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for section, keys in SECTIONS.items():
            cp[section] = {k: _format(getattr(self, k)) for k in keys}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str, base: "RunConfig | None" = None) -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse configuration: {exc}") from None
        cfg = base or cls()
        for section in cp.sections():
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]")
            for key, value in cp[section].items():
                if key not in SECTIONS[section]:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                cfg.set(key, value)
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_ini(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc}") from None


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ",".join(repr(x) if isinstance(x, float) else str(x) for x in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)
