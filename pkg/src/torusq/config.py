"""Run configuration: a sectioned key/value file (INI) with typed access.

Physical inputs stay in original units; the single unit conversion happens
through ``balanced_potential`` and the conversion factor is recorded in the
run manifest.  Configs round-trip exactly: parse -> serialize -> parse gives
an identical object.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import asdict, dataclass, field

from .potentials import CentralForcePotential, PhysicalPotential, balance_units

__all__ = ["ConfigError", "RunConfig", "parse_config", "serialize_config", "load_config"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # model (original units)
    mass: float = 1.0
    omega0: float = 1.0
    quartic: float = 0.0
    sextic: float = 0.0
    # run
    hbar: float = 0.1
    seed: int = 1234
    # quantize
    n_r_max: int = 3
    m_abs_max: int = 3
    include_h2: bool = True
    grid_r: int = 16
    grid_theta: int = 16
    # oracle
    oracle_n_points: int = 6000
    oracle_r_max: float = 0.0          # 0 => choose from the classical annulus
    oracle_extra_levels: int = 1
    # identities
    identity_points: int = 20
    identity_tol: float = 1e-5
    # output
    out_dir: str = "runs/out"

    def balanced_potential(self) -> CentralForcePotential:
        anh = []
        if self.quartic or self.sextic:
            anh = [self.quartic, self.sextic]
            while anh and anh[-1] == 0.0:
                anh.pop()
        return balance_units(PhysicalPotential(self.mass, self.omega0, tuple(anh)))

    def quantum_numbers(self) -> tuple[tuple[int, int], ...]:
        qns = []
        for n_r in range(self.n_r_max + 1):
            for m in range(-self.m_abs_max, self.m_abs_max + 1):
                if m != 0:
                    qns.append((n_r, m))
        return tuple(qns)


_SCHEMA = {
    "model": {"mass": float, "omega0": float, "quartic": float, "sextic": float},
    "run": {"hbar": float, "seed": int},
    "quantize": {"n_r_max": int, "m_abs_max": int, "include_h2": bool,
                 "grid_r": int, "grid_theta": int},
    "oracle": {"oracle_n_points": int, "oracle_r_max": float, "oracle_extra_levels": int},
    "identities": {"identity_points": int, "identity_tol": float},
    "output": {"out_dir": str},
}


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    values: dict[str, object] = {}
    for section, keys in _SCHEMA.items():
        if not parser.has_section(section):
            continue
        for key in parser[section]:
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
        for key, typ in keys.items():
            if key not in parser[section]:
                continue
            raw = parser[section][key]
            try:
                if typ is bool:
                    values[key] = parser[section].getboolean(key)
                else:
                    values[key] = typ(raw)
            except ValueError as exc:
                raise ConfigError(
                    f"bad value for {key!r} in [{section}]: {raw!r} ({exc})") from exc
    unknown = set(parser.sections()) - set(_SCHEMA)
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    return RunConfig(**values)


def serialize_config(cfg: RunConfig) -> str:
    parser = configparser.ConfigParser()
    data = asdict(cfg)
    for section, keys in _SCHEMA.items():
        parser[section] = {}
        for key in keys:
            v = data[key]
            parser[section][key] = repr(v) if isinstance(v, float) else str(v)
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def load_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
