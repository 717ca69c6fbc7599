"""Flat ``key = value`` run configuration.

Every key carries its unit as a suffix (``kappa_MHz``, ``waist_um``).
Frequencies are plain frequencies in MHz; the 2 pi is applied when the
configuration is turned into model objects.  Dimensionless keys have no
suffix.  ``#`` starts a comment.
"""

from __future__ import annotations

import difflib
import math
from pathlib import Path
from typing import Dict, Optional, Union

from .core import DriveConfig, PowerAnchor, SystemParams, mhz, uk_to_angular
from .dynamics import ProtocolConfig, atoms_for_pulling
from .trap import HeatingModel


class ConfigError(ValueError):
    pass


DEFAULTS: Dict[str, object] = {
    # cavity and atom
    "kappa_MHz": 2.77,
    "g_MHz": 0.33,
    "gamma_MHz": 3.03,
    "delta_A_MHz": -1066.0,
    "u0_factor": 0.7,
    "recoil_kHz": 3.771,
    "wavelength_um": 0.780,
    "waist_um": 127.0,
    "gravity_m_s2": 9.81,
    "cavity_length_mm": 15.0,
    "temperature_uK": 100.0,
    # drive
    "delta_C_MHz": -2.0,
    "eta_over_kappa": 290.0,
    "n_eff_u0_MHz": -1.0,
    # power calibration anchor
    "anchor_power_uW": 0.7,
    "anchor_saturation": 0.02,
    "anchor_delta_C_MHz": -2.0,
    "anchor_n_eff_u0_MHz": -1.0,
    # heating model
    "d0": 0.475,
    "d1": 0.759,
    # dynamics protocol
    # "auto" picks the atom number whose mode overlap gives n_eff_u0_MHz
    "n_atoms": "auto",
    "release_time_ms": 0.0,
    "drive_on_time_ms": 3.0,
    "shutter_ramp_ms": 0.2,
    "record_until_ms": 50.0,
    "dt_us": 0.0,
    "sample_us": 5.0,
    "cloud_sigma_um": 1000.0,
    "cloud_offset_um": 0.0,
    "n_macroparticles": 2000,
    "focus_fraction": 0.0,
    "focus_sigma_um": 250.0,
    "heating": True,
    "trapped_radius_w": 2.0,
    "traces": 10,
}

_UNIT_SUFFIXES = ("_MHz", "_kHz", "_um", "_m_s2", "_mm", "_uK", "_uW", "_ms", "_us", "_w")
_INTEGER_KEYS = {"n_macroparticles", "traces"}
_BOOL_KEYS = {"heating"}


def _base_name(key: str) -> str:
    for suffix in _UNIT_SUFFIXES:
        if key.endswith(suffix):
            return key[: -len(suffix)]
    return key


def _parse_value(key: str, text: str, lineno: int):
    if key == "n_atoms" and text.lower() == "auto":
        return "auto"
    if key in _BOOL_KEYS:
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"line {lineno}: {key} expects true or false, got {text!r}")
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"line {lineno}: {key} expects a number, got {text!r}") from None
    if not math.isfinite(value):
        raise ConfigError(f"line {lineno}: {key} must be finite")
    if key in _INTEGER_KEYS:
        if value != int(value):
            raise ConfigError(f"line {lineno}: {key} expects an integer, got {text!r}")
        return int(value)
    return value


def _unknown_key(key: str, lineno: int) -> ConfigError:
    suffixed = [k for k in DEFAULTS if _base_name(k) == key and k != key]
    if suffixed:
        return ConfigError(f"line {lineno}: key {key!r} is missing its unit suffix (use {suffixed[0]!r})")
    close = difflib.get_close_matches(key, list(DEFAULTS), n=1, cutoff=0.0)
    hint = f"; did you mean {close[0]!r}?" if close else ""
    return ConfigError(f"line {lineno}: unknown key {key!r}{hint}")


def parse_config_text(text: str) -> Dict[str, object]:
    """Parse configuration text into a fully resolved key-value map."""
    resolved = dict(DEFAULTS)
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise _unknown_key(key, lineno)
        if key in seen:
            raise ConfigError(f"line {lineno}: {key} already set on line {seen[key]}")
        seen[key] = lineno
        resolved[key] = _parse_value(key, value, lineno)
    return resolved


def parse_config(path: Optional[Union[str, Path]]) -> Dict[str, object]:
    """Read a configuration file; ``None`` or the literal ``defaults`` gives the defaults."""
    if path is None or str(path) == "defaults":
        return dict(DEFAULTS)
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def format_config(cfg: Dict[str, object]) -> str:
    """Serialize a resolved configuration so that parsing it gives it back."""
    lines = []
    for key in DEFAULTS:
        value = cfg[key]
        if isinstance(value, str):
            text = value
        elif isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, int):
            text = str(value)
        else:
            text = repr(float(value))
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def system_params(cfg) -> SystemParams:
    return SystemParams(
        kappa=mhz(cfg["kappa_MHz"]),
        g=mhz(cfg["g_MHz"]),
        gamma=mhz(cfg["gamma_MHz"]),
        delta_A=mhz(cfg["delta_A_MHz"]),
        u0_factor=cfg["u0_factor"],
        omega_rec=mhz(cfg["recoil_kHz"] * 1e-3),
        wavelength=cfg["wavelength_um"],
        waist=cfg["waist_um"],
        gravity=cfg["gravity_m_s2"] * 1e-6,
        cavity_length=cfg["cavity_length_mm"] * 1e3,
    )


def power_anchor(cfg) -> PowerAnchor:
    return PowerAnchor(
        power_uW=cfg["anchor_power_uW"],
        saturation=cfg["anchor_saturation"],
        delta_C=mhz(cfg["anchor_delta_C_MHz"]),
        n_eff_u0=mhz(cfg["anchor_n_eff_u0_MHz"]),
    )


def heating_model(cfg) -> HeatingModel:
    return HeatingModel(cfg["d0"], cfg["d1"], uk_to_angular(cfg["temperature_uK"]))


def drive_config(cfg, params: SystemParams) -> DriveConfig:
    return DriveConfig.from_ratio(mhz(cfg["delta_C_MHz"]), cfg["eta_over_kappa"], params)


def protocol_config(cfg, seed: int = 0) -> ProtocolConfig:
    base = _protocol(cfg, 0.0, seed)
    if cfg["n_atoms"] != "auto":
        return _protocol(cfg, cfg["n_atoms"], seed)
    n = atoms_for_pulling(mhz(cfg["n_eff_u0_MHz"]), base, system_params(cfg))
    return _protocol(cfg, n, seed)


def _protocol(cfg, n_atoms: float, seed: int) -> ProtocolConfig:
    return ProtocolConfig(
        n_atoms=n_atoms,
        release_time=cfg["release_time_ms"],
        drive_on_time=cfg["drive_on_time_ms"],
        shutter_ramp=cfg["shutter_ramp_ms"],
        record_until=cfg["record_until_ms"],
        dt_us=cfg["dt_us"] if cfg["dt_us"] > 0 else None,
        sample_us=cfg["sample_us"],
        cloud_sigma=cfg["cloud_sigma_um"],
        cloud_offset=cfg["cloud_offset_um"],
        temperature_uK=cfg["temperature_uK"],
        n_macroparticles=cfg["n_macroparticles"],
        focus_fraction=cfg["focus_fraction"],
        focus_sigma=cfg["focus_sigma_um"],
        seed=seed,
        heating=cfg["heating"],
        trapped_radius=cfg["trapped_radius_w"],
    )
