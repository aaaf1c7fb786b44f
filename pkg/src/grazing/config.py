"""Key-value run configuration and run manifests.

A config file is a flat list of ``key = value`` lines (``#`` comments
allowed).  Recognised keys describe the oscillator (``zeta``, ``epsilon``,
``amp``, ``omega``) and the integrator tolerances; anything else is rejected.
Values are decimal strings.
"""

from __future__ import annotations

import configparser
import json
import time
from dataclasses import asdict, dataclass, field, fields
from decimal import Decimal, InvalidOperation
from importlib import metadata
from pathlib import Path

from .errors import InvalidParameters
from .flow import IntegratorConfig
from .model import ImpactOscillator

SYSTEM_KEYS = ("zeta", "epsilon", "amp", "omega")
INTEGRATOR_KEYS = ("rel_tol", "abs_tol", "event_tol", "max_step", "max_period_multiples")
KNOWN_KEYS = SYSTEM_KEYS + INTEGRATOR_KEYS
DEFAULTS = {"zeta": 0.02, "epsilon": 0.9}
_SECTION = "run"


def parse_decimal(text, key="value") -> float:
    """Float from a decimal string, rejecting NaN, infinities and junk."""
    try:
        d = Decimal(str(text).strip())
    except InvalidOperation:
        raise InvalidParameters(f"{key}: {text!r} is not a decimal number") from None
    if not d.is_finite():
        raise InvalidParameters(f"{key}: {text!r} is not finite")
    return float(d)


def read_config(path) -> dict:
    """Parse a key-value config file into ``{key: float}``."""
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InvalidParameters(f"cannot read config {path}: {exc}") from exc
    try:
        parser.read_string(f"[{_SECTION}]\n" + text)
    except configparser.Error as exc:
        raise InvalidParameters(f"malformed config {path}: {exc}") from exc
    raw = dict(parser[_SECTION])
    unknown = sorted(set(raw) - set(KNOWN_KEYS))
    if unknown:
        raise InvalidParameters(f"unknown config keys: {', '.join(unknown)}")
    return {k: parse_decimal(v, k) for k, v in raw.items()}


def resolve(config_path=None, overrides=None) -> dict:
    """Defaults, then the config file, then non-``None`` command-line overrides."""
    out = dict(DEFAULTS)
    if config_path is not None:
        out.update(read_config(config_path))
    for k, v in (overrides or {}).items():
        if v is not None:
            out[k] = float(v)
    return out


def integrator_config(resolved: dict) -> IntegratorConfig:
    return IntegratorConfig(**{k: resolved[k] for k in INTEGRATOR_KEYS if k in resolved})


def oscillator(resolved: dict, omega_ref=None) -> ImpactOscillator:
    ref = omega_ref if omega_ref is not None else resolved.get("omega", 0.854)
    return ImpactOscillator.create(resolved["zeta"], resolved["epsilon"], ref)


def package_version() -> str:
    try:
        return metadata.version("grazing")
    except metadata.PackageNotFoundError:
        return "0+unknown"


@dataclass
class RunManifest:
    command: str
    config: dict
    outputs: list = field(default_factory=list)
    wall_time: float = 0.0
    version: str = field(default_factory=package_version)
    args: dict = field(default_factory=dict)

    def write(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True))

    @classmethod
    def read(cls, path) -> "RunManifest":
        data = json.loads(Path(path).read_text())
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


class Stopwatch:
    def __init__(self):
        self.start = time.perf_counter()

    def elapsed(self) -> float:
        return time.perf_counter() - self.start
