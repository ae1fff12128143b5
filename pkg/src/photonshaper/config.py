"""Strict YAML configuration for simulations and scenarios.

All frequencies are ordinary GHz, all times ns. Parsing is strict: unknown
keys are rejected with the full dotted path of the offending field, and the
device section, when present, must spell out every physical parameter (the
level counts n_transmon / n_resonator may be omitted and default to 6 / 3).
Omitting the device section entirely selects the built-in device values.

``ScenarioConfig.resolved()`` returns the fully expanded configuration with
every default filled in; writing it back out with ``to_yaml`` and re-parsing
gives an identical configuration (the echo round-trip property).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import yaml

from .device import DeviceParams, paper_device


class ConfigError(ValueError):
    """Raised for unknown keys, bad types or invariant violations."""


# device fields that the config must spell out when a device section exists
_DEVICE_REQUIRED = ("omega_q", "omega_r", "g", "alpha", "kappa",
                    "t1_e", "t1_f", "t2_ge", "t2_ef", "t2_gf")
_DEVICE_OPTIONAL = {"n_transmon": 6, "n_resonator": 3}

# section name -> {key: (type tag, default)}; type tags: "num" (int or
# float), "int", "bool", "str", "numlist"
_SCHEMA: dict[str, dict[str, tuple[str, Any]]] = {
    "emission": {
        "duration": ("num", 500.0),
        "amplitude": ("num", 0.75),
        "initial": ("str", "superposition"),
        "compensate": ("bool", True),
        "decoherence": ("bool", True),
    },
    "sweep": {
        "durations": ("numlist", [float(t) for t in range(60, 501, 40)]),
        "amplitudes": ("numlist", [round(0.1 * k, 1) for k in range(1, 11)]),
        "refine_rounds": ("int", 3),
    },
    "stark": {
        "amplitudes": ("numlist", [0.1, 0.2, 0.4, 0.6]),
        "probe_duration": ("num", 100.0),
    },
    "frequency": {
        "duration": ("num", 200.0),
        "amplitude": ("num", 0.7),
        "span": ("num", 0.0015),
        "n_offsets": ("int", 5),
        "method": ("str", "spectrum"),
    },
    "reset": {
        "thermal_p_e": ("num", 0.13),
        "n_rounds": ("int", 3),
        "transfer_duration": ("num", 200.0),
        "transfer_amplitude": ("num", 0.7),
        "decoherence": ("bool", True),
    },
    "tomography": {
        "protocol": ("str", "superposition"),
        "duration": ("num", 500.0),
        "amplitude": ("num", 0.75),
        "n_shots": ("int", 1_000_000),
        "noise_number": ("num", 10.0),
        "n_max": ("int", 3),
    },
}

_TOP_LEVEL = ("device", "scenario", "seed", "dt", "out") + tuple(_SCHEMA)


@dataclass
class ScenarioConfig:
    """Fully resolved configuration: device plus per-task sections."""

    device: DeviceParams
    scenario: str | None
    seed: int
    dt: float
    out: str | None
    sections: dict[str, dict[str, Any]]

    def section(self, name: str) -> dict[str, Any]:
        return self.sections[name]

    def resolved(self) -> dict[str, Any]:
        """Plain-dict echo of the configuration with all defaults filled."""
        dev = {name: getattr(self.device, name)
               for name in _DEVICE_REQUIRED}
        dev.update({name: getattr(self.device, name)
                    for name in _DEVICE_OPTIONAL})
        doc: dict[str, Any] = {"device": dev, "seed": self.seed,
                               "dt": self.dt}
        if self.scenario is not None:
            doc["scenario"] = self.scenario
        if self.out is not None:
            doc["out"] = self.out
        for name in _SCHEMA:
            doc[name] = dict(self.sections[name])
        return doc

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.resolved(), sort_keys=True,
                              default_flow_style=False)


def _check_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _check_value(value, tag: str, path: str):
    if tag == "num":
        return _check_number(value, path)
    if tag == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return int(value)
    if tag == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return bool(value)
    if tag == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if tag == "numlist":
        if not isinstance(value, list) or not value:
            raise ConfigError(f"{path}: expected a non-empty list")
        return [_check_number(v, f"{path}[{i}]") for i, v in enumerate(value)]
    raise AssertionError(tag)


def parse_config_dict(doc: dict) -> ScenarioConfig:
    """Validate a loaded YAML document and fill in every default."""
    if not isinstance(doc, dict):
        raise ConfigError("top level must be a mapping")
    for key in doc:
        if key not in _TOP_LEVEL:
            raise ConfigError(f"unknown key: {key}")

    dev_doc = doc.get("device")
    if dev_doc is None:
        device = paper_device()
    else:
        if not isinstance(dev_doc, dict):
            raise ConfigError("device: expected a mapping")
        known = set(_DEVICE_REQUIRED) | set(_DEVICE_OPTIONAL)
        for key in dev_doc:
            if key not in known:
                raise ConfigError(f"unknown key: device.{key}")
        for key in _DEVICE_REQUIRED:
            if key not in dev_doc:
                raise ConfigError(f"missing required field: device.{key}")
        kwargs: dict[str, Any] = {}
        for key in _DEVICE_REQUIRED:
            kwargs[key] = _check_number(dev_doc[key], f"device.{key}")
        for key, default in _DEVICE_OPTIONAL.items():
            raw = dev_doc.get(key, default)
            kwargs[key] = _check_value(raw, "int", f"device.{key}")
        try:
            device = DeviceParams(**kwargs)
        except ValueError as exc:
            raise ConfigError(f"device: {exc}") from exc

    scenario = doc.get("scenario")
    if scenario is not None and not isinstance(scenario, str):
        raise ConfigError("scenario: expected a string")

    seed = doc.get("seed", 12345)
    seed = _check_value(seed, "int", "seed")
    if seed < 0:
        raise ConfigError("seed: must be non-negative")

    dt = _check_number(doc.get("dt", 0.01), "dt")
    if not 0.0 < dt <= 0.1:
        raise ConfigError("dt: must lie in (0, 0.1] ns")

    out = doc.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError("out: expected a string")

    sections: dict[str, dict[str, Any]] = {}
    for name, schema in _SCHEMA.items():
        raw = doc.get(name, {})
        if not isinstance(raw, dict):
            raise ConfigError(f"{name}: expected a mapping")
        for key in raw:
            if key not in schema:
                raise ConfigError(f"unknown key: {name}.{key}")
        resolved = {}
        for key, (tag, default) in schema.items():
            value = raw.get(key, default)
            resolved[key] = _check_value(value, tag, f"{name}.{key}")
        sections[name] = resolved

    _validate_sections(sections)
    return ScenarioConfig(device, scenario, seed, dt, out, sections)


def _validate_sections(sections: dict) -> None:
    em = sections["emission"]
    if em["initial"] not in ("f0", "superposition", "g0", "e0"):
        raise ConfigError("emission.initial: must be one of f0, "
                          "superposition, g0, e0")
    for name, key in (("emission", "duration"), ("frequency", "duration"),
                      ("reset", "transfer_duration"),
                      ("stark", "probe_duration"),
                      ("tomography", "duration")):
        if sections[name][key] <= 0:
            raise ConfigError(f"{name}.{key}: must be positive")
    if sections["frequency"]["method"] not in ("spectrum", "symmetry"):
        raise ConfigError("frequency.method: must be spectrum or symmetry")
    if sections["frequency"]["n_offsets"] < 3:
        raise ConfigError("frequency.n_offsets: need at least 3")
    if not 0.0 <= sections["reset"]["thermal_p_e"] <= 0.5:
        raise ConfigError("reset.thermal_p_e: must lie in [0, 0.5]")
    if sections["reset"]["n_rounds"] < 1:
        raise ConfigError("reset.n_rounds: must be >= 1")
    if sections["tomography"]["protocol"] not in ("fock", "superposition"):
        raise ConfigError("tomography.protocol: must be fock or "
                          "superposition")
    if sections["tomography"]["n_shots"] < 1:
        raise ConfigError("tomography.n_shots: must be >= 1")
    if sections["tomography"]["noise_number"] < 0:
        raise ConfigError("tomography.noise_number: must be >= 0")
    if sections["tomography"]["n_max"] < 2:
        raise ConfigError("tomography.n_max: must be >= 2")
    if sections["sweep"]["refine_rounds"] < 0:
        raise ConfigError("sweep.refine_rounds: must be >= 0")


def load_config(path: str) -> ScenarioConfig:
    """Parse a YAML config file; missing file raises the usual OSError."""
    with open(path) as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML: {exc}") from exc
    if doc is None:
        doc = {}
    return parse_config_dict(doc)


def default_config() -> ScenarioConfig:
    """The built-in device with every section at its documented default."""
    return parse_config_dict({})
