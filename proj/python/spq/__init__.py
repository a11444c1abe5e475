"""Lockable scissor-lift spine: force model, lock logic, bus codec and jump simulator."""

import json as _json

from ._core import (
    ConfigError,
    DomainError,
    ScissorGeometry,
    SimFault,
    SpineConfig,
    SpringSpec,
    crc32,
    cusum_update,
    decode_frame,
    encode_cmd,
    encode_state,
    evenly_spaced_holes,
    extension_from_span,
    force_decomposition,
    max_reach,
    nearest_hole,
    peak_extension,
    polyfit2,
    span_from_extension,
    spine_force,
    stored_elastic_energy,
    transformed_segment_count,
)
from . import _core


def locktest(scenario, seed=0):
    return _json.loads(_core.locktest(scenario, seed))


def characterize(preset="strong", trials=1, friction_f0=3.0, noise_sigma=0.5, seed=0):
    return _json.loads(_core.characterize(preset, trials, friction_f0, noise_sigma, seed))


def jump_experiment(mode="compliant", scenario="nominal", trials=1, seed=0):
    return _json.loads(_core.jump_experiment(mode, scenario, trials, seed))
