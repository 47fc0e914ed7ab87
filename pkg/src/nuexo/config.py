"""Plain-text configuration files.

One format everywhere: ``key = value`` per line, ``#`` comments, blank lines
ignored. Keys are dotted lowercase paths, lengths are meters, angles radians.
The same file carries the exoskeleton chain, coupling, ROM limits and
controller gains; follower presets live in their own files with the same
syntax.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path


class ConfigError(ValueError):
    """Configuration file problem, pointing at the offending file/line."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


@dataclass
class ConfigValue:
    raw: str
    line: int


def parse_kv(text: str, path: str = "<string>") -> dict[str, ConfigValue]:
    """Parse key = value lines into a dict preserving line numbers."""
    out: dict[str, ConfigValue] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", path, lineno)
        key, value = line.split("=", 1)
        key = key.strip().lower()
        value = value.strip()
        if not key or not value:
            raise ConfigError(f"empty key or value in {raw.strip()!r}", path, lineno)
        if key in out:
            raise ConfigError(f"duplicate key {key!r} (first seen on line {out[key].line})", path, lineno)
        out[key] = ConfigValue(value, lineno)
    return out


def load_kv(path: str | Path) -> dict[str, ConfigValue]:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc}", str(p)) from exc
    return parse_kv(text, str(p))


class KvReader:
    """Typed accessors over a parsed key/value table."""

    def __init__(self, table: dict[str, ConfigValue], path: str = "<string>"):
        self.table = table
        self.path = path
        self._used: set[str] = set()

    def _get(self, key: str, default=None, required: bool = False) -> ConfigValue | None:
        key = key.lower()
        if key in self.table:
            self._used.add(key)
            return self.table[key]
        if required:
            raise ConfigError(f"missing required key {key!r}", self.path)
        return default

    def get_float(self, key: str, default: float | None = None) -> float:
        cv = self._get(key, required=default is None)
        if cv is None:
            return float(default)
        try:
            value = float(cv.raw)
        except ValueError:
            raise ConfigError(f"key {key!r}: expected a number, got {cv.raw!r}", self.path, cv.line) from None
        if not math.isfinite(value):
            raise ConfigError(f"key {key!r}: value must be finite", self.path, cv.line)
        return value

    def get_int(self, key: str, default: int | None = None) -> int:
        cv = self._get(key, required=default is None)
        if cv is None:
            return int(default)
        try:
            return int(cv.raw)
        except ValueError:
            raise ConfigError(f"key {key!r}: expected an integer, got {cv.raw!r}", self.path, cv.line) from None

    def get_bool(self, key: str, default: bool | None = None) -> bool:
        cv = self._get(key, required=default is None)
        if cv is None:
            return bool(default)
        lowered = cv.raw.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"key {key!r}: expected a boolean, got {cv.raw!r}", self.path, cv.line)

    def get_str(self, key: str, default: str | None = None) -> str:
        cv = self._get(key, required=default is None)
        return cv.raw if cv is not None else default

    def line_of(self, key: str) -> int | None:
        cv = self.table.get(key.lower())
        return cv.line if cv else None

    def unknown_keys(self, known_prefixes: tuple[str, ...]) -> list[str]:
        return [k for k in self.table if not k.startswith(known_prefixes)]


def packaged_config_path(name: str) -> Path:
    """Path of a configuration file shipped inside the package."""
    ref = resources.files("nuexo").joinpath("configs", name)
    return Path(str(ref))


# ---------------------------------------------------------------------------
# System-level configuration (chain + coupling + ROM + controller gains)


@dataclass(frozen=True)
class SubsystemGains:
    """Impedance gain set for one tracked subsystem."""

    kp: float
    kd: float
    lam: float
    torque_limit: float

    def __post_init__(self):
        if self.kp < 0 or self.kd < 0 or self.lam < 0:
            raise ValueError("impedance gains must be non-negative")
        if self.torque_limit <= 0:
            raise ValueError("torque limit must be positive")


@dataclass(frozen=True)
class TremorSettings:
    deadband: float = 0.015
    hysteresis_exit: float = 0.015

    def __post_init__(self):
        if self.deadband <= 0:
            raise ValueError("deadband must be positive")
        if self.hysteresis_exit < self.deadband:
            raise ValueError("hysteresis_exit must be >= deadband")


@dataclass
class SystemConfig:
    """Everything the kinematics and control layers read from one file."""

    coupling: "ShoulderCoupling"
    chain: "KinematicChain"
    rom: "RomLimits"
    gains: dict[str, SubsystemGains]
    tremor: TremorSettings
    source_path: str = "<defaults>"

    # populated lazily to avoid import cycles
    extras: dict = field(default_factory=dict)


_GAIN_DEFAULTS = {
    "shoulder": SubsystemGains(20.0, 2.0, 0.1, 30.0),
    "elbow": SubsystemGains(20.0, 2.0, 0.1, 15.0),
    "wrist": SubsystemGains(20.0, 2.0, 0.1, 15.0),
    "finger": SubsystemGains(20.0, 2.0, 0.1, 1.0),
}


def load_system_config(path: str | Path | None = None) -> SystemConfig:
    """Load the system configuration, falling back to the packaged default file."""
    from . import kinematics  # deferred: kinematics imports config for errors

    if path is None:
        path = packaged_config_path("default.cfg")
    table = load_kv(path)
    r = KvReader(table, str(path))

    coupling = kinematics.ShoulderCoupling(
        l1=r.get_float("coupling.l1", 0.150),
        l2=r.get_float("coupling.l2", 0.187),
        theta_e=r.get_float("coupling.theta_e", 2.508),
        gain=r.get_float("coupling.gain", 1.444),
        offset=r.get_float("coupling.offset", 0.938),
    )
    chain = kinematics.build_exo_chain(
        coupling,
        d4=r.get_float("chain.d4", 0.28),
        d5=r.get_float("chain.d5", 0.25),
        a6=r.get_float("chain.a6", 0.08),
        gh_vertical_offset=r.get_float("chain.gh_vertical_offset", 0.0),
    )

    axes = {}
    for name, dflt_min, dflt_max, dflt_joint in (
        ("flexion", -math.pi / 3, math.pi, 0),
        ("abduction", -math.pi / 6, 5 * math.pi / 6, 1),
        ("horizontal", -math.pi / 6, 3 * math.pi / 4, 2),
    ):
        axes[name] = kinematics.AxisLimit(
            min_rad=r.get_float(f"rom.{name}.min", dflt_min),
            max_rad=r.get_float(f"rom.{name}.max", dflt_max),
            joint=r.get_int(f"rom.{name}.joint", dflt_joint),
        )
    rom = kinematics.RomLimits(axes)

    gains = {}
    for name, dflt in _GAIN_DEFAULTS.items():
        gains[name] = SubsystemGains(
            kp=r.get_float(f"control.{name}.kp", dflt.kp),
            kd=r.get_float(f"control.{name}.kd", dflt.kd),
            lam=r.get_float(f"control.{name}.lam", dflt.lam),
            torque_limit=r.get_float(f"control.{name}.torque_limit", dflt.torque_limit),
        )

    tremor = TremorSettings(
        deadband=r.get_float("control.tremor.deadband", 0.015),
        hysteresis_exit=r.get_float("control.tremor.hysteresis_exit", 0.015),
    )

    return SystemConfig(coupling=coupling, chain=chain, rom=rom, gains=gains,
                        tremor=tremor, source_path=str(path))
