"""Experiment configuration: JSON documents validated against a schema,
converted to the package's SI-unit objects."""
from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ConfigError
from .measurement import HOLOGRAM_SIGMA, INTEGRATION_TIME, PAIR_RATE, ROUTING_PROBABILITY, DetectionModel
from .optics import (FIBER_WAIST, FOCAL_LENGTH, HOLOGRAM_EFFICIENCY, SOURCE_WAIST, WAVELENGTH,
                     OpticsModel)
from .states import PRESETS, NoisyState, PureBipartiteState

SCHEMA_VERSION = 1

# (value, origin): "measured" values come from the experiment, everything
# else is a modelling choice of this package.
DEFAULTS = {
    "wavelength_nm": (WAVELENGTH * 1e9, "measured: degenerate down-conversion wavelength"),
    "hologram_efficiency": (HOLOGRAM_EFFICIENCY, "measured: blazed grating diffraction efficiency"),
    "routing_probability": (ROUTING_PROBABILITY, "measured: 2:1 then 1:1 beam splitter cascade"),
    "source_waist_um": (SOURCE_WAIST * 1e6, "artifact default"),
    "fiber_waist_um": (FIBER_WAIST * 1e6, "artifact default"),
    "focal_length_mm": (FOCAL_LENGTH * 1e3, "artifact default"),
    "track_length_mm": (None, "artifact default: perfect LG00 matching at the reference lens position"),
    "lens_travel_mm": (1.0, "artifact default: half-width of the lens search box"),
    "hologram_sigma_um": (HOLOGRAM_SIGMA * 1e6, "artifact default"),
    "pair_rate_hz": (PAIR_RATE, "artifact default"),
    "integration_time_s": (INTEGRATION_TIME, "artifact default"),
    "noise_fraction": (0.0, "artifact default"),
    "seed": (0, "artifact default"),
}

_number = {"type": "number"}
_positive = {"type": "number", "exclusiveMinimum": 0}
_fraction = {"type": "number", "minimum": 0, "maximum": 1}
_matrix = {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": _number}}

_state_spec = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "preset": {"enum": sorted(PRESETS)},
        "amplitudes": {"type": "array", "minItems": 1, "items": _number},
        "real": _matrix,
        "imag": _matrix,
        "label": {"type": "string"},
    },
    "oneOf": [{"required": ["preset"]}, {"required": ["amplitudes"]}, {"required": ["real"]}],
}

_interval = {"type": "array", "minItems": 2, "maxItems": 2, "items": _number}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "seed": {"type": "integer", "minimum": 0},
        "state": _state_spec,
        "noise_fraction": _fraction,
        "optics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "wavelength_nm": _positive,
                "source_waist_um": _positive,
                "focal_length_mm": _positive,
                "fiber_waist_um": _positive,
                "hologram_efficiency": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "coupling_model": {"enum": ["effective_waist", "lg"]},
                "overlap_method": {"enum": ["closed", "quadrature"]},
                "track_length_mm": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "lens_travel_mm": _positive,
            },
        },
        "detection": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "routing_probability": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "efficiencies_a": {"type": "array", "items": _fraction},
                "efficiencies_b": {"type": "array", "items": _fraction},
                "pair_rate_hz": {"type": "number", "minimum": 0},
                "integration_time_s": _positive,
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"start_mm": _positive, "stop_mm": _positive,
                           "points": {"type": "integer", "minimum": 0}},
        },
        "filter": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "t_a": {"type": "array", "items": _fraction},
                "t_b": {"type": "array", "items": _fraction},
                "z_a_mm": _positive,
                "z_b_mm": _positive,
            },
        },
        "concentrate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["closed_form", "optics"]},
                "target": _state_spec,
                "split": {"enum": ["A", "B", "even"]},
                "objective": {"enum": ["fidelity", "entropy"]},
                "bounds_mm": {"type": "array", "minItems": 2, "maxItems": 2, "items": _interval},
                "grid": {"type": "integer", "minimum": 2},
                "tolerance": _positive,
                "max_evaluations": {"type": "integer", "minimum": 1},
            },
        },
        "scan": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "l_abs": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
                "states": {"type": "object", "additionalProperties": _state_spec},
                "hologram_sigma_um": _positive,
                "x_max_um": _positive,
                "points": {"type": "integer", "minimum": 2},
                "sample": {"type": "boolean"},
                "theta_offset": _number,
                "calibrate": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["state", "l_abs", "visibility"],
                    "properties": {"state": {"type": "string"}, "l_abs": {"type": "integer", "minimum": 1},
                                   "visibility": _fraction},
                },
            },
        },
        "table": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"configs_mm": {"type": "array", "items": _interval},
                           "objective": {"enum": ["fidelity", "entropy"]}},
        },
        "bell": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"alphas": {"type": "array", "minItems": 2, "maxItems": 2, "items": _number},
                           "betas": {"type": "array", "minItems": 2, "maxItems": 2, "items": _number}},
        },
    },
}


def validate(doc: dict) -> dict:
    """Check a configuration document; returns a deep copy on success."""
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid configuration at {where}: {exc.message}") from None
    return copy.deepcopy(doc)


def load(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"configuration is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    return validate(doc)


def build_state(spec: dict | None) -> PureBipartiteState:
    spec = {"preset": "initial"} if spec is None else spec
    if "preset" in spec:
        amps = np.diag(PRESETS[spec["preset"]])
    elif "amplitudes" in spec:
        amps = np.diag(np.asarray(spec["amplitudes"], dtype=float))
    else:
        real = spec["real"]
        imag = spec.get("imag", [[0.0] * len(row) for row in real])
        try:
            amps = np.asarray(real, dtype=float) + 1j * np.asarray(imag, dtype=float)
        except ValueError:
            raise ConfigError("real/imag amplitude rows must be rectangular") from None
        if amps.ndim != 2 or amps.shape[0] != amps.shape[1]:
            raise ConfigError(f"amplitude matrix must be square, got shape {amps.shape}")
    if not np.any(amps):
        raise ConfigError("amplitudes are all zero")
    return PureBipartiteState(amps)


def state_label(spec: dict | None, default: str = "state") -> str:
    if spec is None:
        return "initial"
    return spec.get("label") or spec.get("preset") or default


def build_noisy_state(doc: dict) -> NoisyState:
    return NoisyState(build_state(doc.get("state")), doc.get("noise_fraction", 0.0))


def build_optics(doc: dict) -> OpticsModel:
    o = doc.get("optics", {})
    track = o.get("track_length_mm")
    try:
        return OpticsModel(
            wavelength=o.get("wavelength_nm", WAVELENGTH * 1e9) * 1e-9,
            source_waist=o.get("source_waist_um", SOURCE_WAIST * 1e6) * 1e-6,
            focal_length=o.get("focal_length_mm", FOCAL_LENGTH * 1e3) * 1e-3,
            fiber_waist=o.get("fiber_waist_um", FIBER_WAIST * 1e6) * 1e-6,
            hologram_efficiency=o.get("hologram_efficiency", HOLOGRAM_EFFICIENCY),
            coupling_model=o.get("coupling_model", "effective_waist"),
            track_length=None if track is None else track * 1e-3,
            method=o.get("overlap_method", "closed"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def lens_bounds(doc: dict, model: OpticsModel) -> tuple:
    bounds = doc.get("concentrate", {}).get("bounds_mm")
    if bounds is not None:
        return tuple((lo * 1e-3, hi * 1e-3) for lo, hi in bounds)
    half = doc.get("optics", {}).get("lens_travel_mm", DEFAULTS["lens_travel_mm"][0]) * 1e-3
    b = model.default_bounds(half)
    return (b, b)


def build_problem_bounds(doc: dict, model: OpticsModel) -> tuple:
    bounds = lens_bounds(doc, model)
    if any(lo <= 0 or hi >= model.track_length for lo, hi in bounds):
        raise ConfigError(f"lens bounds must lie inside (0, {model.track_length * 1e3:.3f}) mm")
    return bounds


def build_detection(doc: dict, seed: int) -> DetectionModel:
    det = doc.get("detection", {})
    eff_a = det.get("efficiencies_a")
    eff_b = det.get("efficiencies_b")
    return DetectionModel(
        routing_probability=det.get("routing_probability", ROUTING_PROBABILITY),
        efficiencies_a=None if eff_a is None else tuple(eff_a),
        efficiencies_b=None if eff_b is None else tuple(eff_b),
        pair_rate=det.get("pair_rate_hz", PAIR_RATE),
        integration_time=det.get("integration_time_s", INTEGRATION_TIME),
        rng_seed=seed,
    )
