"""Shared domain types: instructions, frames, the perturbation channel
taxonomy, and difficulty reports.

The taxonomy enumerates exactly 28 channels (12 textual, 16 visual) across
eight families. Three families (semantics_drift, contextual_distractors,
dynamic_artifacts) are evaluation-only hold-outs and never enter training
plans.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .errors import InvalidInputError, InvariantViolationError

# Prompt template applied to every task. All textual operators define their
# insertion positions relative to this exact rendering.
PROMPT_PREFIX = "In: What action should the robot take to "
PROMPT_SUFFIX = "? \nOut:"

TEXTUAL = "textual"
VISUAL = "visual"

# Families whose channels are excluded from training and used only for
# zero-shot robustness evaluation.
EVALUATION_ONLY_FAMILIES = frozenset(
    {"semantics_drift", "contextual_distractors", "dynamic_artifacts"}
)

# The single structural family: no monotone severity parameter.
STRUCTURAL_FAMILIES = frozenset({"adversarial_injection"})


@dataclass(frozen=True)
class PerturbationChannel:
    """One concrete corruption operator identified by (modality, family, kind)."""

    modality: str
    family: str
    kind: str

    @property
    def evaluation_only(self) -> bool:
        return self.family in EVALUATION_ONLY_FAMILIES

    @property
    def structural(self) -> bool:
        return self.family in STRUCTURAL_FAMILIES

    def __str__(self) -> str:
        return f"{self.family}/{self.kind}"


def _channels(modality: str, family: str, kinds: list[str]) -> tuple[PerturbationChannel, ...]:
    return tuple(PerturbationChannel(modality, family, k) for k in kinds)


CHANNELS: tuple[PerturbationChannel, ...] = (
    _channels(TEXTUAL, "adversarial_injection", ["prefix", "suffix", "role_spoof"])
    + _channels(
        TEXTUAL,
        "linguistic_corruption",
        ["gibberish_prefix", "gibberish_suffix", "unicode", "symbols"],
    )
    + _channels(TEXTUAL, "semantics_drift", ["spatial", "object"])
    + _channels(
        TEXTUAL,
        "contextual_distractors",
        ["irrelevant_object", "environment_background", "paraphrase"],
    )
    + _channels(
        VISUAL,
        "photometric",
        ["color_jitter", "gaussian_noise", "uniform_noise", "speckle_noise", "salt_pepper"],
    )
    + _channels(VISUAL, "occlusion", ["random_block", "structured", "erasing", "noise_patch"])
    + _channels(VISUAL, "geometric", ["shift", "rotation", "crop"])
    + _channels(
        VISUAL,
        "dynamic_artifacts",
        ["gaussian_noise", "uniform_noise", "speckle_noise", "salt_pepper"],
    )
)

_CHANNEL_INDEX: dict[tuple[str, str, str], PerturbationChannel] = {
    (c.modality, c.family, c.kind): c for c in CHANNELS
}

# Family lookup is unambiguous, so "family/kind" identifies a channel.
_FAMILY_MODALITY: dict[str, str] = {c.family: c.modality for c in CHANNELS}

# Accepted shorthand spellings for channel kinds.
_KIND_ALIASES: dict[tuple[str, str], str] = {
    ("photometric", "gaussian"): "gaussian_noise",
    ("photometric", "uniform"): "uniform_noise",
    ("photometric", "speckle"): "speckle_noise",
    ("photometric", "salt_pepper_noise"): "salt_pepper",
    ("dynamic_artifacts", "gaussian"): "gaussian_noise",
    ("dynamic_artifacts", "uniform"): "uniform_noise",
    ("dynamic_artifacts", "speckle"): "speckle_noise",
    ("dynamic_artifacts", "salt_pepper_noise"): "salt_pepper",
    ("occlusion", "random_occlusion"): "random_block",
    ("occlusion", "structured_occlusion"): "structured",
    ("occlusion", "random_erasing"): "erasing",
    ("geometric", "image_shift"): "shift",
    ("geometric", "image_rotation"): "rotation",
    ("geometric", "random_crop"): "crop",
    ("adversarial_injection", "prefix_injection"): "prefix",
    ("adversarial_injection", "suffix_injection"): "suffix",
    ("adversarial_injection", "role_spoofing"): "role_spoof",
    ("linguistic_corruption", "unicode_obfuscation"): "unicode",
    ("linguistic_corruption", "abnormal_symbols"): "symbols",
    ("contextual_distractors", "paraphrase_repetition"): "paraphrase",
}


def channel(family: str, kind: str) -> PerturbationChannel:
    """Look up a channel by family and kind (aliases accepted)."""
    if family not in _FAMILY_MODALITY:
        raise InvalidInputError(f"unknown perturbation family: {family!r}")
    kind = _KIND_ALIASES.get((family, kind), kind)
    key = (_FAMILY_MODALITY[family], family, kind)
    if key not in _CHANNEL_INDEX:
        raise InvalidInputError(f"unknown perturbation channel: {family}/{kind}")
    return _CHANNEL_INDEX[key]


def parse_channel(name: str) -> PerturbationChannel:
    """Parse a "family/kind" channel name."""
    if name.count("/") != 1:
        raise InvalidInputError(f"channel must be written family/kind, got {name!r}")
    family, kind = name.split("/")
    return channel(family, kind)


def textual_channels() -> tuple[PerturbationChannel, ...]:
    return tuple(c for c in CHANNELS if c.modality == TEXTUAL)


def visual_channels() -> tuple[PerturbationChannel, ...]:
    return tuple(c for c in CHANNELS if c.modality == VISUAL)


def trainable_channels(modality: str | None = None) -> tuple[PerturbationChannel, ...]:
    """Channels admissible in training plans (evaluation-only families excluded)."""
    return tuple(
        c
        for c in CHANNELS
        if not c.evaluation_only and (modality is None or c.modality == modality)
    )


@dataclass(frozen=True)
class Instruction:
    """A task sentence and its rendered prompt."""

    task_text: str
    rendered: str


def render_instruction(task_text: str) -> Instruction:
    """Render a task into the fixed prompt template.

    The rendered prompt is exactly PROMPT_PREFIX + task_text + PROMPT_SUFFIX,
    with a single space between the question mark and the newline.
    """
    if not task_text or not task_text.strip():
        raise InvalidInputError("task_text must be non-empty")
    return Instruction(task_text=task_text, rendered=PROMPT_PREFIX + task_text + PROMPT_SUFFIX)


SPAN_INSERTED = "inserted"
SPAN_REPLACED = "replaced"


@dataclass(frozen=True)
class Span:
    """A half-open [start, end) character range in a perturbed text."""

    start: int
    end: int
    kind: str  # SPAN_INSERTED or SPAN_REPLACED

    def __len__(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class PerturbedInstruction:
    """A perturbed prompt plus the exact ledger of corrupted character ranges.

    Spans are disjoint, sorted, and lie within [0, len(text)). Inserted spans
    cover injected characters; removing them recovers a string containing the
    original task text. Replaced spans mark 1:1 character substitutions
    (unicode) or token substitutions (semantics drift).
    """

    base: Instruction
    text: str
    corrupted_spans: tuple[Span, ...]
    channel: PerturbationChannel
    noop: bool = False

    def __post_init__(self) -> None:
        prev_end = 0
        for span in self.corrupted_spans:
            if not (0 <= span.start <= span.end <= len(self.text)):
                raise InvariantViolationError(
                    f"span ({span.start}, {span.end}) out of bounds for text of "
                    f"length {len(self.text)}"
                )
            if span.start < prev_end:
                raise InvariantViolationError("corrupted spans overlap or are unsorted")
            prev_end = span.end

    @property
    def corrupted_char_count(self) -> int:
        return sum(len(s) for s in self.corrupted_spans)


@dataclass(frozen=True)
class PerturbationSpec:
    """A fully identified perturbation instance.

    Graded channels carry severity in [0, 1]; structural channels
    (adversarial injection) carry none. params may pin concrete operator
    parameters directly (used by the matched baseline presets), in which
    case severity may be omitted for graded channels too.
    """

    channel: PerturbationChannel
    severity: Optional[float] = None
    params: Optional[Mapping] = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.channel.structural and self.severity is not None:
            raise InvalidInputError(
                f"structural channel {self.channel} does not admit a severity"
            )
        if self.severity is not None and not 0.0 <= self.severity <= 1.0:
            raise InvalidInputError(f"severity must lie in [0, 1], got {self.severity}")


@dataclass(frozen=True)
class CompositeSpec:
    """A multimodal perturbation: one textual and one visual spec applied together."""

    text: PerturbationSpec
    vision: PerturbationSpec

    def __post_init__(self) -> None:
        if self.text.channel.modality != TEXTUAL:
            raise InvalidInputError("composite text spec must use a textual channel")
        if self.vision.channel.modality != VISUAL:
            raise InvalidInputError("composite vision spec must use a visual channel")


GRADED = "graded"
STRUCTURAL = "structural"


def classify_spec(spec: PerturbationSpec) -> str:
    """Classify a spec as graded (severity-bearing) or structural (binary)."""
    return STRUCTURAL if spec.channel.structural else GRADED


SEEN = "seen"
UNSEEN = "unseen"


def tag_seen_unseen(ch: PerturbationChannel) -> str:
    """Tag a channel as seen (trainable) or unseen (evaluation-only hold-out)."""
    return UNSEEN if ch.evaluation_only else SEEN


@dataclass(frozen=True)
class DifficultyReport:
    """A measured difficulty value with the raw quantities it was computed from.

    measured is the component ratio clamped to [0, 1]; components keeps the
    unclamped ingredients so the value can be recomputed and audited.
    """

    measured: float
    components: Mapping[str, float]
    requested: Optional[float] = None


def text_report(n_corr: int, base_len: int, requested: Optional[float] = None) -> DifficultyReport:
    measured = min(1.0, n_corr / base_len)
    return DifficultyReport(
        measured=measured,
        components={"kind": "text", "n_corr": n_corr, "base_len": base_len},
        requested=requested,
    )


def photometric_report(
    delta_norm: float, base_norm: float, requested: Optional[float] = None
) -> DifficultyReport:
    measured = min(1.0, delta_norm / base_norm)
    return DifficultyReport(
        measured=measured,
        components={"kind": "photometric", "delta_norm": delta_norm, "base_norm": base_norm},
        requested=requested,
    )


def occlusion_report(
    occluded: int, total: int, requested: Optional[float] = None
) -> DifficultyReport:
    measured = min(1.0, occluded / total)
    return DifficultyReport(
        measured=measured,
        components={"kind": "occlusion", "occluded": occluded, "total": total},
        requested=requested,
    )


def geometric_report(
    theta: float, theta_max: float, requested: Optional[float] = None
) -> DifficultyReport:
    measured = min(1.0, abs(theta) / theta_max)
    return DifficultyReport(
        measured=measured,
        components={"kind": "geometric", "theta": theta, "theta_max": theta_max},
        requested=requested,
    )


def validate_frame(frame: np.ndarray) -> np.ndarray:
    """Check that an array is a valid 8-bit RGB frame and return it."""
    if not isinstance(frame, np.ndarray):
        raise InvalidInputError(f"frame must be a numpy array, got {type(frame).__name__}")
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise InvalidInputError(f"frame must have shape (H, W, 3), got {frame.shape}")
    if frame.dtype != np.uint8:
        raise InvalidInputError(f"frame must be uint8, got {frame.dtype}")
    return frame


@dataclass(frozen=True)
class EpisodeRecord:
    """One episode: an ordered frame sequence paired with one instruction."""

    episode_id: str
    suite: str
    frames: tuple[np.ndarray, ...]
    instruction: Instruction

    def __post_init__(self) -> None:
        if not self.frames:
            raise InvalidInputError(f"episode {self.episode_id!r} has no frames")
        shapes = {f.shape for f in self.frames}
        if len(shapes) > 1:
            raise InvalidInputError(
                f"episode {self.episode_id!r} mixes frame dimensions: {sorted(shapes)}"
            )
        for f in self.frames:
            validate_frame(f)
