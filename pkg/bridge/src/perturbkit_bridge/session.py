"""Bridge sessions and the three bridge operations.

A session freezes a curriculum config, payload library, and geometry
config at open time; every call is a pure function of (session state,
arguments), so concurrent calls and any interleaving across sessions with
equal configs produce identical results.
"""

from __future__ import annotations

from typing import Mapping, Optional, Union

import numpy as np

from perturbkit import curriculum, textperturb, visionperturb
from perturbkit.core import PerturbationSpec, parse_channel, render_instruction
from perturbkit.curriculum import CurriculumConfig
from perturbkit.errors import InvalidInputError
from perturbkit.pipeline import spec_to_dict
from perturbkit.textperturb import PayloadLibrary
from perturbkit.visionperturb import GeometryConfig


class BridgeSession:
    """An immutable configuration handle; valid until close()."""

    def __init__(self, config: CurriculumConfig, library: PayloadLibrary, geometry: GeometryConfig):
        self._config = config
        self._library = library
        self._geometry = geometry
        self._closed = False

    @property
    def config(self) -> CurriculumConfig:
        return self._config

    @property
    def library(self) -> PayloadLibrary:
        return self._library

    @property
    def geometry(self) -> GeometryConfig:
        return self._geometry

    def close(self) -> None:
        self._closed = True

    def _check_open(self) -> None:
        if self._closed:
            raise InvalidInputError("bridge session is closed")


def open_session(
    config_path: Optional[str] = None,
    library_dir: Optional[str] = None,
    geometry: Optional[GeometryConfig] = None,
) -> BridgeSession:
    """Open a session with the given (or default) configs."""
    config = curriculum.load_config(config_path) if config_path else CurriculumConfig()
    library = PayloadLibrary.from_dir(library_dir) if library_dir else PayloadLibrary.default()
    return BridgeSession(config=config, library=library, geometry=geometry or GeometryConfig())


def perturb_text(
    session: BridgeSession,
    task_text: str,
    channel: str,
    params: Optional[Mapping[str, Union[str, float]]] = None,
    seed: int = 0,
) -> tuple[str, float]:
    """Perturb a task text; returns (perturbed prompt, measured difficulty).

    channel is a "family/kind" name; params are the operator's knobs (for
    example {"ratio": 0.25}) or {"severity": s} to use the severity map.
    """
    session._check_open()
    ch = parse_channel(channel)
    if ch.modality != "textual":
        raise InvalidInputError(f"perturb_text requires a textual channel, got {ch}")
    given = dict(params or {})
    severity = given.pop("severity", None)
    spec = PerturbationSpec(
        channel=ch,
        severity=None if severity is None else float(severity),
        params=given or None,
        seed=seed,
    )
    instr = render_instruction(task_text)
    perturbed, report = textperturb.apply_spec(instr, spec, session.library)
    return perturbed.text, report.measured


def _check_buffer(buffer: np.ndarray) -> np.ndarray:
    if not isinstance(buffer, np.ndarray):
        raise InvalidInputError(f"image buffer must be a numpy array, got {type(buffer).__name__}")
    if buffer.ndim != 3 or buffer.shape[2] != 3:
        raise InvalidInputError(f"image buffer must have shape (H, W, 3), got {buffer.shape}")
    if buffer.dtype != np.uint8:
        raise InvalidInputError(f"image buffer must be uint8, got {buffer.dtype}")
    if not buffer.flags.c_contiguous:
        return np.ascontiguousarray(buffer)
    return buffer


def perturb_image(
    session: BridgeSession,
    buffer: np.ndarray,
    channel: str,
    severity: float = 0.0,
    seed: int = 0,
) -> np.ndarray:
    """Perturb one (H, W, 3) uint8 frame at the given severity.

    The input buffer is never mutated; the result is a fresh contiguous
    array equal byte-for-byte to the engine's CLI output for the same
    (image, channel, severity, seed).
    """
    session._check_open()
    ch = parse_channel(channel)
    if ch.modality != "visual":
        raise InvalidInputError(f"perturb_image requires a visual channel, got {ch}")
    frame = _check_buffer(buffer)
    if ch.family == "dynamic_artifacts":
        return visionperturb.apply_dynamic([frame], ch.kind, severity, seed)[0]
    resolved = visionperturb.severity_to_params(ch, severity, frame, session.geometry, seed=seed)
    out, _ = visionperturb.apply_to_frame(frame, ch, resolved, seed, session.geometry)
    return out


def sample_step(session: BridgeSession, m: int, seed: int) -> Optional[dict]:
    """Draw the curriculum's perturbation decision for training step m.

    Returns the spec as a plain record (the manifest encoding) or None for
    a clean item. Identical to the core engine's draw for the same
    (config, m, seed).
    """
    session._check_open()
    state = curriculum.state_at(session.config, m)
    spec = curriculum.sample(state, seed)
    return None if spec is None else spec_to_dict(spec)
