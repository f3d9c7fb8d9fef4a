"""perturbkit: deterministic multimodal perturbations, difficulty-calibrated
curriculum schedules, and robot-policy robustness reporting."""

from .core import (
    CHANNELS,
    CompositeSpec,
    DifficultyReport,
    EpisodeRecord,
    Instruction,
    PerturbationChannel,
    PerturbationSpec,
    PerturbedInstruction,
    Span,
    channel,
    classify_spec,
    parse_channel,
    render_instruction,
    tag_seen_unseen,
    textual_channels,
    trainable_channels,
    visual_channels,
)
from .curriculum import CurriculumConfig, CurriculumState, sample, state_at
from .evalharness import RolloutRecord, baseline_presets, report, tsr
from .pipeline import (
    DatasetManifest,
    Plan,
    WorkItem,
    compose_multimodal,
    derive_seed,
    execute,
    load_dataset,
    plan_stage1,
    plan_stage2,
)
from .textperturb import PayloadLibrary, text_difficulty
from .visionperturb import GeometryConfig, severity_to_params, vis_difficulty

__version__ = "0.1.0"

__all__ = [
    "CHANNELS",
    "CompositeSpec",
    "CurriculumConfig",
    "CurriculumState",
    "DatasetManifest",
    "DifficultyReport",
    "EpisodeRecord",
    "GeometryConfig",
    "Instruction",
    "PayloadLibrary",
    "PerturbationChannel",
    "PerturbationSpec",
    "PerturbedInstruction",
    "Plan",
    "RolloutRecord",
    "Span",
    "WorkItem",
    "baseline_presets",
    "channel",
    "classify_spec",
    "compose_multimodal",
    "derive_seed",
    "execute",
    "load_dataset",
    "parse_channel",
    "plan_stage1",
    "plan_stage2",
    "render_instruction",
    "report",
    "sample",
    "severity_to_params",
    "state_at",
    "tag_seen_unseen",
    "text_difficulty",
    "textual_channels",
    "trainable_channels",
    "tsr",
    "vis_difficulty",
    "visual_channels",
]
