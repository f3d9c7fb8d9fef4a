"""Curriculum state resolution and per-step perturbation sampling.

Robustness training runs as two sub-stages, textual hardening strictly
before visual hardening, each split into three phases (warm-up, ramp-up,
hardening). A phase fixes the admissible difficulty interval [0, tau_k] and
the active operator set; the injection probability ramps linearly inside
each phase. Boundary steps resolve to the later phase (left-closed
intervals).
"""

from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Union

import yaml

from .core import (
    CHANNELS,
    PerturbationChannel,
    PerturbationSpec,
    parse_channel,
    trainable_channels,
)
from .errors import ConfigurationError, InvalidInputError, ValidationError

SUB_STAGE_TEXT = "I_T"
SUB_STAGE_VISION = "I_V"
PHASES = (1, 2, 3)

ActiveSets = Mapping[tuple[str, int], tuple[PerturbationChannel, ...]]


def _kinds(family: str, *kinds: str) -> tuple[PerturbationChannel, ...]:
    wanted = {(family, k) for k in kinds}
    return tuple(c for c in CHANNELS if (c.family, c.kind) in wanted)


def default_active_sets() -> dict[tuple[str, int], tuple[PerturbationChannel, ...]]:
    """Per-phase operator sets: corruptions first, injections from phase 2,
    full trainable sets in phase 3; vision opens with sensor-level noise and
    mild occlusion, then structured occlusion and translation, then all
    geometry."""
    corruption = _kinds(
        "linguistic_corruption", "gibberish_prefix", "gibberish_suffix", "unicode", "symbols"
    )
    injection = _kinds("adversarial_injection", "prefix", "suffix", "role_spoof")
    photometric = _kinds(
        "photometric", "color_jitter", "gaussian_noise", "uniform_noise", "speckle_noise", "salt_pepper"
    )
    vision_1 = photometric + _kinds("occlusion", "random_block")
    vision_2 = vision_1 + _kinds("occlusion", "structured") + _kinds("geometric", "shift")
    return {
        (SUB_STAGE_TEXT, 1): corruption,
        (SUB_STAGE_TEXT, 2): corruption + injection,
        (SUB_STAGE_TEXT, 3): trainable_channels("textual"),
        (SUB_STAGE_VISION, 1): vision_1,
        (SUB_STAGE_VISION, 2): vision_2,
        (SUB_STAGE_VISION, 3): trainable_channels("visual"),
    }


def default_stage_metadata() -> dict[str, float]:
    return {"stage1_learning_rate": 5e-4, "stage2_learning_rate": 5e-5}


@dataclass(frozen=True)
class CurriculumConfig:
    """The full schedule definition for both training stages."""

    stage1_text_steps: int = 25_000
    stage1_vision_steps: int = 25_000
    phase_fractions: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    tau: tuple[float, float, float] = (0.3, 0.6, 1.0)
    p_adv_schedule: tuple[tuple[float, float], ...] = ((0.2, 0.4), (0.4, 0.6), (0.6, 0.8))
    active_sets: ActiveSets = field(default_factory=default_active_sets)
    stage2_steps: int = 8_000
    joint_p_adv: float = 0.5
    stage_metadata: Mapping[str, float] = field(default_factory=default_stage_metadata)

    @property
    def stage1_steps(self) -> int:
        return self.stage1_text_steps + self.stage1_vision_steps


@dataclass(frozen=True)
class CurriculumState:
    """The resolved curriculum tuple at one training step."""

    step: int
    sub_stage: str
    phase: int
    p_adv: float
    active_set: tuple[PerturbationChannel, ...]
    d_min: float
    d_max: float


def _phase_bounds(config: CurriculumConfig, substage_steps: int) -> tuple[int, int]:
    f1, f2, _ = config.phase_fractions
    b1 = int(f1 * substage_steps)
    b2 = int((f1 + f2) * substage_steps)
    return b1, b2


def state_at(config: CurriculumConfig, m: int) -> CurriculumState:
    """Resolve the curriculum state tuple at global step m of Stage I."""
    if not 0 <= m < config.stage1_steps:
        raise InvalidInputError(
            f"step {m} outside Stage I range [0, {config.stage1_steps})"
        )
    if m < config.stage1_text_steps:
        sub_stage, local, substage_steps = SUB_STAGE_TEXT, m, config.stage1_text_steps
    else:
        sub_stage = SUB_STAGE_VISION
        local = m - config.stage1_text_steps
        substage_steps = config.stage1_vision_steps
    b1, b2 = _phase_bounds(config, substage_steps)
    if local < b1:
        phase, phase_start, phase_len = 1, 0, b1
    elif local < b2:
        phase, phase_start, phase_len = 2, b1, b2 - b1
    else:
        phase, phase_start, phase_len = 3, b2, substage_steps - b2
    start, end = config.p_adv_schedule[phase - 1]
    t = local - phase_start
    p_adv = start if phase_len <= 1 else start + (end - start) * (t / (phase_len - 1))
    return CurriculumState(
        step=m,
        sub_stage=sub_stage,
        phase=phase,
        p_adv=p_adv,
        active_set=tuple(config.active_sets[(sub_stage, phase)]),
        d_min=0.0,
        d_max=config.tau[phase - 1],
    )


def sample(state: CurriculumState, rng_seed: int) -> Optional[PerturbationSpec]:
    """Draw one perturbation decision for a training item.

    The draw sequence is fixed for reproducibility: with rng =
    random.Random(rng_seed), first u = rng.random() decides perturbed vs
    clean (perturbed iff u < p_adv); then rng.randrange(len(active_set))
    picks the channel uniformly; graded channels draw severity with
    rng.uniform(d_min, d_max). Returns None for a clean item.
    """
    rng = random.Random(rng_seed)
    u = rng.random()
    if u >= state.p_adv:
        return None
    if not state.active_set:
        raise ConfigurationError(
            f"active set is empty at step {state.step} but p_adv={state.p_adv:.3f} > 0"
        )
    ch = state.active_set[rng.randrange(len(state.active_set))]
    if ch.structural:
        return PerturbationSpec(channel=ch, severity=None, seed=rng_seed)
    return PerturbationSpec(
        channel=ch, severity=rng.uniform(state.d_min, state.d_max), seed=rng_seed
    )


@dataclass(frozen=True)
class Violation:
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


def validate(config: CurriculumConfig) -> list[Violation]:
    """Collect every violated schedule invariant as a structured diagnostic."""
    out: list[Violation] = []

    if config.stage1_text_steps <= 0 or config.stage1_vision_steps <= 0:
        out.append(Violation("steps", "both Stage I sub-stages need a positive step budget"))
    if config.stage2_steps < 0:
        out.append(Violation("steps", "stage2_steps must be non-negative"))

    if len(config.phase_fractions) != 3 or any(f <= 0 for f in config.phase_fractions):
        out.append(Violation("phase_fractions", "three positive phase fractions required"))
    elif abs(sum(config.phase_fractions) - 1.0) > 1e-9:
        out.append(Violation("phase_fractions", f"fractions sum to {sum(config.phase_fractions)}, expected 1"))

    t1, t2, t3 = config.tau
    if not (0 < t1 < t2 < t3 <= 1):
        out.append(Violation("tau", f"difficulty caps must satisfy 0 < t1 < t2 < t3 <= 1, got {config.tau}"))

    if len(config.p_adv_schedule) != 3:
        out.append(Violation("p_adv", "one (start, end) pair per phase required"))
    else:
        prev_end = 0.0
        for k, (start, end) in enumerate(config.p_adv_schedule, 1):
            if not (0 <= start <= 1 and 0 <= end <= 1):
                out.append(Violation("p_adv", f"phase {k} probabilities must lie in [0, 1]"))
            if end < start:
                out.append(Violation("p_adv", f"phase {k} ramp decreases ({start} -> {end})"))
            if start < prev_end:
                out.append(
                    Violation("p_adv", f"phase {k} starts below the previous phase end ({start} < {prev_end})")
                )
            prev_end = max(prev_end, end)

    if not 0 <= config.joint_p_adv <= 1:
        out.append(Violation("p_adv", "joint_p_adv must lie in [0, 1]"))

    expected_modality = {SUB_STAGE_TEXT: "textual", SUB_STAGE_VISION: "visual"}
    for sub_stage in (SUB_STAGE_TEXT, SUB_STAGE_VISION):
        previous: Optional[set[PerturbationChannel]] = None
        for phase in PHASES:
            key = (sub_stage, phase)
            if key not in config.active_sets:
                out.append(Violation("active_sets", f"missing active set for {sub_stage} phase {phase}"))
                previous = None
                continue
            channels = config.active_sets[key]
            if not channels:
                out.append(Violation("active_sets", f"{sub_stage} phase {phase} active set is empty"))
            for ch in channels:
                if ch not in CHANNELS:
                    out.append(Violation("active_sets", f"unknown channel {ch} in {sub_stage} phase {phase}"))
                if ch.modality != expected_modality[sub_stage]:
                    out.append(
                        Violation(
                            "modality",
                            f"{ch.modality} channel {ch} listed in {sub_stage} phase {phase}",
                        )
                    )
                if ch.evaluation_only:
                    out.append(
                        Violation(
                            "evaluation_only",
                            f"evaluation-only channel {ch} cannot be trained ({sub_stage} phase {phase})",
                        )
                    )
                if ch.structural and phase == 1:
                    out.append(
                        Violation(
                            "structural_phase1",
                            f"structural channel {ch} not admitted before phase 2",
                        )
                    )
            current = set(channels)
            if previous is not None and not previous <= current:
                dropped = ", ".join(str(c) for c in sorted(previous - current, key=str))
                out.append(
                    Violation(
                        "inclusion",
                        f"{sub_stage} phase {phase} drops channels from phase {phase - 1}: {dropped}",
                    )
                )
            previous = current

    return out


@dataclass(frozen=True)
class ScheduleRow:
    step_start: int
    step_end: int  # exclusive
    sub_stage: str
    phase: int
    p_adv_start: float
    p_adv_end: float
    d_max: float
    active_set_size: int


def schedule_summary(config: CurriculumConfig) -> list[ScheduleRow]:
    """One row per (sub-stage, phase); ranges are contiguous and cover Stage I."""
    violations = validate(config)
    if violations:
        raise ValidationError(violations)
    rows: list[ScheduleRow] = []
    offset = 0
    for sub_stage, substage_steps in (
        (SUB_STAGE_TEXT, config.stage1_text_steps),
        (SUB_STAGE_VISION, config.stage1_vision_steps),
    ):
        b1, b2 = _phase_bounds(config, substage_steps)
        spans = [(0, b1), (b1, b2), (b2, substage_steps)]
        for phase, (lo, hi) in zip(PHASES, spans):
            start, end = config.p_adv_schedule[phase - 1]
            rows.append(
                ScheduleRow(
                    step_start=offset + lo,
                    step_end=offset + hi,
                    sub_stage=sub_stage,
                    phase=phase,
                    p_adv_start=start,
                    p_adv_end=end,
                    d_max=config.tau[phase - 1],
                    active_set_size=len(config.active_sets[(sub_stage, phase)]),
                )
            )
        offset += substage_steps
    return rows


def render_schedule(rows: list[ScheduleRow], fmt: str = "aligned_text") -> str:
    header = ("steps", "sub_stage", "phase", "p_adv", "d_max", "active_set")
    cells = [
        (
            f"{r.step_start}-{r.step_end - 1}",
            r.sub_stage,
            str(r.phase),
            f"{r.p_adv_start:.2f}-{r.p_adv_end:.2f}",
            f"{r.d_max:g}",
            str(r.active_set_size),
        )
        for r in rows
    ]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(
            ["step_start", "step_end", "sub_stage", "phase", "p_adv_start", "p_adv_end", "d_max", "active_set_size"]
        )
        for r in rows:
            writer.writerow(
                [r.step_start, r.step_end, r.sub_stage, r.phase, repr(r.p_adv_start), repr(r.p_adv_end), repr(r.d_max), r.active_set_size]
            )
        return buf.getvalue()
    if fmt == "aligned_text":
        widths = [max(len(header[i]), *(len(c[i]) for c in cells)) for i in range(len(header))]
        lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(header))]
        for row in cells:
            lines.append("  ".join(v.ljust(widths[i]) for i, v in enumerate(row)))
        return "\n".join(lines) + "\n"
    raise InvalidInputError(f"unknown schedule format {fmt!r}")


# ---------------------------------------------------------------------------
# Configuration file round-trip
# ---------------------------------------------------------------------------

def config_to_dict(config: CurriculumConfig) -> dict:
    return {
        "stage1_text_steps": config.stage1_text_steps,
        "stage1_vision_steps": config.stage1_vision_steps,
        "phase_fractions": list(config.phase_fractions),
        "tau": list(config.tau),
        "p_adv_schedule": [list(pair) for pair in config.p_adv_schedule],
        "stage2_steps": config.stage2_steps,
        "joint_p_adv": config.joint_p_adv,
        "active_sets": {
            sub_stage: {
                phase: [str(c) for c in config.active_sets[(sub_stage, phase)]]
                for phase in PHASES
                if (sub_stage, phase) in config.active_sets
            }
            for sub_stage in (SUB_STAGE_TEXT, SUB_STAGE_VISION)
        },
        "stage_metadata": dict(config.stage_metadata),
    }


def config_from_dict(data: Mapping) -> CurriculumConfig:
    defaults = CurriculumConfig()
    active_sets: dict[tuple[str, int], tuple[PerturbationChannel, ...]] = {}
    raw_sets = data.get("active_sets")
    if raw_sets is None:
        active_sets = dict(defaults.active_sets)
    else:
        for sub_stage, phases in raw_sets.items():
            for phase, names in phases.items():
                active_sets[(str(sub_stage), int(phase))] = tuple(
                    parse_channel(n) for n in names
                )
    schedule = data.get("p_adv_schedule")
    return CurriculumConfig(
        stage1_text_steps=int(data.get("stage1_text_steps", defaults.stage1_text_steps)),
        stage1_vision_steps=int(data.get("stage1_vision_steps", defaults.stage1_vision_steps)),
        phase_fractions=tuple(data.get("phase_fractions", defaults.phase_fractions)),
        tau=tuple(data.get("tau", defaults.tau)),
        p_adv_schedule=(
            tuple(tuple(pair) for pair in schedule) if schedule else defaults.p_adv_schedule
        ),
        active_sets=active_sets,
        stage2_steps=int(data.get("stage2_steps", defaults.stage2_steps)),
        joint_p_adv=float(data.get("joint_p_adv", defaults.joint_p_adv)),
        stage_metadata=dict(data.get("stage_metadata", defaults.stage_metadata)),
    )


def load_config(path: Union[str, Path]) -> CurriculumConfig:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if data is None:
        return CurriculumConfig()
    if not isinstance(data, dict):
        raise ConfigurationError(f"curriculum config must be a mapping, got {type(data).__name__}")
    return config_from_dict(data)


def save_config(config: CurriculumConfig, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config_to_dict(config), fh, sort_keys=False)
