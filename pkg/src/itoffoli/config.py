"""Run configuration files and named presets.

Files use ``key = value`` lines (``#`` comments allowed).  Frequencies are
given as ``f = omega / 2 pi`` in kHz and converted to rad/s here.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .hamiltonians import GateConfig, make_config

TWO_PI = 2 * np.pi


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


KEYS = {
    "n_ions": int,
    "omega_cm_khz": float,
    "delta_cm_khz": float,
    "eta_cm_per_ion": float,
    "J_khz": float,
    "omega_rabi_khz": float,
    "g_khz": float,
    "ratio_J_over_g": float,
    "t_a_mode": str,
    "t_a_us": float,
    "mode_set": str,
    "echo": str,
    "nbar_cm": float,
    "fock_nmax": str,
    "k1": int,
    "k2": int,
    "target_index": int,
    "ramp": str,
    "correct_drive": str,
    "t_mb_us": float,
}

DEFAULTS = {
    "omega_cm_khz": 1000.0,
    "eta_cm_per_ion": 0.1,
    "t_a_mode": "equal_tau_g",
    "mode_set": "cm_only",
    "echo": "none",
    "nbar_cm": 0.0,
    "fock_nmax": "auto",
    "ramp": "sin2",
    "correct_drive": "true",
    "t_mb_us": 5.0,
}

CHOICES = {
    "t_a_mode": ("equal_tau_g", "explicit"),
    "mode_set": ("cm_only", "all_axial"),
    "echo": ("none", "sign_flip", "multibeat"),
    "ramp": ("sin2", "quench"),
    "correct_drive": ("true", "false"),
}

PRESETS = {
    "fig2": dict(n_ions=3, delta_cm_khz=20.0, J_khz=2.0, g_khz=1.0),
    "fig3": dict(n_ions=3, delta_cm_khz=200.0, J_khz=2.0, g_khz=1.0),
    "fig3a": dict(n_ions=3, delta_cm_khz=-20.0, J_khz=2.0, g_khz=1.0, mode_set="all_axial",
                  echo="multibeat"),
    "fig4a": dict(n_ions=3, delta_cm_khz=-200.0, J_khz=2 * 4.762, g_khz=4.762,
                  mode_set="all_axial", echo="multibeat"),
    "fig4b": dict(n_ions=3, delta_cm_khz=-200.0, J_khz=2.0, g_khz=1.0, mode_set="all_axial",
                  echo="multibeat"),
    "degeneracy": dict(n_ions=3, delta_cm_khz=50.0, J_khz=6.2, g_khz=3.1),
}


@dataclass
class RunSpec:
    """A resolved gate configuration plus what to do with it."""

    gate: GateConfig
    echo: str | None
    nbar_cm: float
    t_mb: float
    params: dict = field(default_factory=dict)
    preset: str = ""

    def record(self) -> dict:
        """Input keys plus derived quantities, for reports."""
        g = self.gate
        out = dict(self.params)
        out.update({
            "omega_rabi_khz_derived": g.omega_rabi / TWO_PI / 1e3,
            "J_mean_khz_derived": g.J_mean / TWO_PI / 1e3,
            "nu_khz_derived": g.nu / TWO_PI / 1e3,
            "tau_g_us": g.tau_g * 1e6,
            "t_a_us_derived": g.t_a * 1e6,
            "lambda_c": g.lambda_c,
            "g_applied_khz": g.g_applied / TWO_PI / 1e3,
            "fock_cutoffs": "/".join(str(n) for n in g.fock_cutoffs),
        })
        return out


def _convert(key: str, raw):
    if key not in KEYS:
        raise ConfigError(f"unknown key {key!r}", key)
    kind = KEYS[key]
    try:
        if kind is str:
            value = str(raw).strip().lower() if key != "fock_nmax" else str(raw).strip()
        elif kind is int:
            value = float(raw)
            if value != int(value):
                raise ValueError
            value = int(value)
        else:
            value = float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value {raw!r} for {key!r}", key) from None
    if key == "fock_nmax" and value != "auto" and not (value.isdigit() and int(value) > 0):
        raise ConfigError(f"fock_nmax must be 'auto' or a positive integer, got {value!r}", key)
    if key in ("nbar_cm", "J_khz", "omega_rabi_khz") and value < 0:
        raise ConfigError(f"{key} must be non-negative", key)
    if key in ("n_ions", "g_khz", "omega_cm_khz", "eta_cm_per_ion", "t_mb_us") and value <= 0:
        raise ConfigError(f"{key} must be positive", key)
    if key in CHOICES and str(value) not in CHOICES[key]:
        raise ConfigError(f"{key} must be one of {CHOICES[key]}, got {value!r}", key)
    return value


def read_config_file(path) -> dict:
    """Key-value pairs from a config file (no section header needed)."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), delimiters=("=", ":"))
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return dict(parser["run"])


def resolve(params: dict, preset: str = "", overrides: dict | None = None) -> RunSpec:
    """Validate a parameter dictionary and build the :class:`RunSpec`."""
    merged = dict(DEFAULTS)
    if preset:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}", "preset")
        merged.update(PRESETS[preset])
    merged.update(params)
    merged.update(overrides or {})
    # an empty value removes a key inherited from the preset
    p = {k: _convert(k, v) for k, v in merged.items() if not (isinstance(v, str) and v.strip() == "")}

    for key in ("n_ions", "delta_cm_khz"):
        if key not in p:
            raise ConfigError(f"missing required key {key!r}", key)
    J = p.get("J_khz")
    g = p.get("g_khz")
    ratio = p.get("ratio_J_over_g")
    if g is None and J is not None and ratio:
        g = J / ratio
    if J is None and g is not None and ratio and "omega_rabi_khz" not in p:
        J = ratio * g
    if g is None:
        raise ConfigError("missing required key 'g_khz' (or J_khz with ratio_J_over_g)", "g_khz")
    if J is None and "omega_rabi_khz" not in p:
        raise ConfigError("missing required key 'J_khz' (or omega_rabi_khz)", "J_khz")
    if J is not None and ratio and "g_khz" in p and abs(J / g - ratio) > 1e-3 * ratio:
        raise ConfigError(f"J_khz/g_khz = {J / g:.6g} contradicts ratio_J_over_g = {ratio}",
                          "ratio_J_over_g")
    if p["t_a_mode"] == "explicit" and "t_a_us" not in p:
        raise ConfigError("t_a_mode = explicit needs t_a_us", "t_a_us")

    omega = p.get("omega_rabi_khz")
    try:
        gate = make_config(
            p["n_ions"], TWO_PI * 1e3 * p["omega_cm_khz"], TWO_PI * 1e3 * p["delta_cm_khz"],
            TWO_PI * 1e3 * g,
            J=None if J is None else TWO_PI * 1e3 * J,
            omega_rabi=None if omega is None else TWO_PI * 1e3 * omega,
            eta_cm_per_ion=p["eta_cm_per_ion"], mode_set=p["mode_set"],
            t_a=p["t_a_us"] * 1e-6 if p["t_a_mode"] == "explicit" else None,
            target_index=p.get("target_index"),
            fock_nmax="auto" if p["fock_nmax"] == "auto" else int(p["fock_nmax"]),
            ramp=p["ramp"], correct_drive=p["correct_drive"] == "true",
            k1=p.get("k1"), k2=p.get("k2"), label=preset,
        )
    except ValueError as exc:
        key = "omega_rabi_khz" if "omega_rabi" in str(exc) else None
        raise ConfigError(str(exc), key) from None
    echo = None if p["echo"] == "none" else p["echo"]
    spec = RunSpec(gate, echo, p["nbar_cm"], p["t_mb_us"] * 1e-6, p, preset)
    return spec


def parse_config(path=None, preset: str = "", overrides: dict | None = None) -> RunSpec:
    """Load a config file and/or preset into a :class:`RunSpec`."""
    params = read_config_file(path) if path else {}
    if not path and not preset:
        raise ConfigError("give a config file or a preset")
    return resolve(params, preset, overrides)


def config_text(params: dict) -> str:
    return "".join(f"{k} = {v}\n" for k, v in sorted(params.items()))

