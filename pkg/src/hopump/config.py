"""Run configuration: TOML files with flat dotted keys and unit-suffixed names.

Example::

    seed = 7
    pump.variant = "diag"
    pump.j0_mhz = 3.0
    pump.h0_mhz = 10.0
    pump.t0_ns = 500.0
    solver.dt_ns = 0.5
    sweep.w_mhz = [0, 2, 4, 6, 8, 10]

Unknown keys are rejected. Table syntax (``[pump]``) is accepted and flattened.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigurationError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

_NUM = (int, float)

# key -> (accepted python types, default); default None means "no default"
SCHEMA: dict[str, tuple[tuple[type, ...], object]] = {
    "seed": ((int,), 0),
    "pump.variant": ((str,), None),
    "pump.j0_mhz": (_NUM, None),
    "pump.h0_mhz": (_NUM, None),
    "pump.t0_ns": (_NUM, None),
    "pump.n_side": ((int,), 4),
    "pump.span": ((str,), "half"),
    "pump.sample_every_ns": (_NUM, 10.0),
    "pump.w_mhz": (_NUM, 0.0),
    "solver.dt_ns": (_NUM, 0.5),
    "solver.krylov_dim": ((int,), 20),
    "solver.step_tol": (_NUM, 1e-10),
    "solver.eigs_tol": (_NUM, 1e-10),
    "zak.n_theta": ((int,), 32),
    "zak.n_lambda": ((int,), 48),
    "zak.link_sign": ((int,), -1),
    "gap.n_lambda": ((int,), 241),
    "gap.h0_mhz": ((list,), None),
    "sweep.w_mhz": ((list,), None),
    "sweep.realizations": ((int,), 40),
    "sweep.quantity": ((str,), "delta_q"),
    "scan.h0_mhz": ((list,), None),
    "scan.t0_ns": ((list,), None),
    "scan.steps_per_period": ((int,), 1000),
    "prepare.duration_ns": (_NUM, 200.0),
    "prepare.detuning_start_mhz": (_NUM, -21.0),
    "prepare.detuning_end_mhz": (_NUM, 0.0),
    "prepare.coupling_start_mhz": (_NUM, 0.0),
    "prepare.coupling_end_mhz": (_NUM, 6.0),
}

PUMP_KEYS = ("pump.variant", "pump.j0_mhz", "pump.h0_mhz", "pump.t0_ns")


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _check(key: str, value):
    if key not in SCHEMA:
        raise ConfigurationError(f"unknown configuration key {key!r}")
    types, _ = SCHEMA[key]
    if isinstance(value, bool) or not isinstance(value, types):
        raise ConfigurationError(f"{key}: expected {'/'.join(t.__name__ for t in types)}, got {value!r}")
    if isinstance(value, list):
        if not value or not all(isinstance(x, _NUM) and not isinstance(x, bool) for x in value):
            raise ConfigurationError(f"{key}: expected a non-empty list of numbers")
    if key == "pump.variant" and value not in ("diag", "nondiag"):
        raise ConfigurationError("pump.variant must be 'diag' or 'nondiag'")
    if key == "pump.span" and value not in ("half", "full"):
        raise ConfigurationError("pump.span must be 'half' or 'full'")
    if key == "sweep.quantity" and value not in ("delta_q", "gap"):
        raise ConfigurationError("sweep.quantity must be 'delta_q' or 'gap'")


@dataclass(frozen=True)
class RunConfig:
    values: dict  # only keys present in the file or set by overrides

    def get(self, key: str):
        if key in self.values:
            return self.values[key]
        if key not in SCHEMA:
            raise KeyError(key)
        return SCHEMA[key][1]

    def require(self, *keys: str) -> None:
        missing = [k for k in keys if self.get(k) is None]
        if missing:
            raise ConfigurationError(f"missing required key(s): {', '.join(missing)}")

    def with_overrides(self, **kv) -> "RunConfig":
        vals = dict(self.values)
        for k, v in kv.items():
            if v is not None:
                _check(k, v)
                vals[k] = v
        return RunConfig(vals)

    def resolved(self) -> dict:
        """Every schema key with its effective value, for provenance echoes."""
        return {k: self.get(k) for k in sorted(SCHEMA)}


def parse_config(text: str) -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"malformed configuration: {exc}") from exc
    flat = _flatten(raw)
    for k, v in flat.items():
        _check(k, v)
    return RunConfig(flat)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig({})
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read configuration {path}: {exc}") from exc
    return parse_config(text)
