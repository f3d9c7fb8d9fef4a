"""Dataset ingestion, training-plan generation, and deterministic execution.

A plan assigns one episode and one optional perturbation to every training
step. Everything downstream of (config, dataset, global_seed, mode) is a
pure function, so executing a plan with any worker count produces
byte-identical output trees and manifests.

Seeds flow through one documented derivation: the per-item seed is
derive_seed(global_seed, episode_id, step, 0) and frame i of an item uses
frame_index i + 1, so noise realizations differ per frame while remaining
reproducible.
"""

from __future__ import annotations

import hashlib
import json
import random
import shutil
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from PIL import Image

from . import curriculum as _curriculum
from . import textperturb as _textperturb
from . import visionperturb as _visionperturb
from .core import (
    CompositeSpec,
    PerturbationSpec,
    channel as _channel,
    render_instruction,
    trainable_channels,
)
from .curriculum import CurriculumConfig, CurriculumState, config_to_dict
from .errors import (
    CalibrationError,
    InvalidInputError,
    LoadError,
    ValidationError,
)
from .seeding import mix_seed
from .textperturb import PayloadLibrary
from .visionperturb import GeometryConfig

FORMAT_VERSION = 1
PLAN_MODES = ("decoupled", "joint", "no_curriculum", "no_stage2")


def derive_seed(global_seed: int, episode_id: str, m: int, frame_index: int = 0) -> int:
    """Stable 64-bit seed for (global_seed, episode_id, step, frame_index).

    Delegates to the documented mixing function in perturbkit.seeding
    (length-prefixed canonical encoding, 64-bit FNV-1a, splitmix64 final).
    frame_index 0 is the item-level seed; frame i uses frame_index i + 1.
    """
    return mix_seed(global_seed, episode_id, m, frame_index)


# ---------------------------------------------------------------------------
# Dataset manifests
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EpisodeEntry:
    episode_id: str
    suite: str
    task_text: str
    frame_paths: tuple[str, ...]


@dataclass(frozen=True)
class DatasetManifest:
    dataset_id: str
    episodes: tuple[EpisodeEntry, ...]
    root: Path
    format_version: int = FORMAT_VERSION

    def episode(self, episode_id: str) -> EpisodeEntry:
        for entry in self.episodes:
            if entry.episode_id == episode_id:
                return entry
        raise InvalidInputError(f"unknown episode_id {episode_id!r}")


def load_dataset(manifest_path: Union[str, Path]) -> DatasetManifest:
    """Load and validate a line-delimited dataset manifest.

    Line 1 is a header object carrying format_version and dataset_id; every
    further line describes one episode. All validation problems are
    aggregated into a single error naming the offending episodes.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise LoadError(f"dataset manifest not found: {manifest_path}")
    root = manifest_path.parent
    lines = manifest_path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise LoadError(f"{manifest_path}: empty manifest")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise LoadError(f"{manifest_path}:1: malformed header: {exc}") from exc
    if "dataset_id" not in header:
        raise LoadError(f"{manifest_path}:1: header is missing dataset_id")

    problems: list[str] = []
    episodes: list[EpisodeEntry] = []
    seen_ids: set[str] = set()
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            problems.append(f"line {lineno}: malformed record: {exc}")
            continue
        missing = {"episode_id", "suite", "task_text", "frames"} - set(rec)
        if missing:
            problems.append(f"line {lineno}: missing fields {sorted(missing)}")
            continue
        episode_id = rec["episode_id"]
        if episode_id in seen_ids:
            problems.append(f"episode {episode_id!r}: duplicate episode_id")
            continue
        seen_ids.add(episode_id)
        if not rec["frames"]:
            problems.append(f"episode {episode_id!r}: no frames listed")
            continue
        dims = set()
        for frame_path in rec["frames"]:
            resolved = root / frame_path
            if not resolved.is_file():
                problems.append(f"episode {episode_id!r}: missing frame {frame_path}")
                continue
            with Image.open(resolved) as im:
                dims.add(im.size)
        if len(dims) > 1:
            problems.append(f"episode {episode_id!r}: inconsistent frame dimensions {sorted(dims)}")
        if not rec["task_text"].strip():
            problems.append(f"episode {episode_id!r}: empty task_text")
        episodes.append(
            EpisodeEntry(
                episode_id=episode_id,
                suite=rec["suite"],
                task_text=rec["task_text"],
                frame_paths=tuple(rec["frames"]),
            )
        )
    if problems:
        raise LoadError(f"{manifest_path}: " + "; ".join(problems))
    if not episodes:
        raise LoadError(f"{manifest_path}: manifest lists no episodes")
    return DatasetManifest(
        dataset_id=header["dataset_id"],
        episodes=tuple(episodes),
        root=root,
        format_version=int(header.get("format_version", FORMAT_VERSION)),
    )


def save_dataset(
    dataset_id: str,
    episodes: Sequence[EpisodeEntry],
    manifest_path: Union[str, Path],
) -> None:
    """Write a dataset manifest in the line-delimited format load_dataset reads."""
    lines = [json.dumps({"format_version": FORMAT_VERSION, "dataset_id": dataset_id}, sort_keys=True)]
    for entry in episodes:
        lines.append(
            json.dumps(
                {
                    "episode_id": entry.episode_id,
                    "suite": entry.suite,
                    "task_text": entry.task_text,
                    "frames": list(entry.frame_paths),
                },
                sort_keys=True,
            )
        )
    Path(manifest_path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_frames(dataset: DatasetManifest, entry: EpisodeEntry) -> list[np.ndarray]:
    frames = []
    for frame_path in entry.frame_paths:
        with Image.open(dataset.root / frame_path) as im:
            frames.append(np.asarray(im.convert("RGB"), dtype=np.uint8))
    return frames


# ---------------------------------------------------------------------------
# Spec serialization shared with the evaluation harness
# ---------------------------------------------------------------------------

def spec_to_dict(spec: Union[PerturbationSpec, CompositeSpec]) -> dict:
    if isinstance(spec, CompositeSpec):
        return {
            "modality": "multimodal",
            "text": spec_to_dict(spec.text),
            "vision": spec_to_dict(spec.vision),
        }
    out: dict = {
        "modality": spec.channel.modality,
        "family": spec.channel.family,
        "kind": spec.channel.kind,
    }
    if spec.severity is not None:
        out["severity"] = spec.severity
    if spec.params:
        out["params"] = dict(spec.params)
    if spec.seed:
        out["seed"] = spec.seed
    return out


def spec_from_dict(data: Mapping) -> Union[PerturbationSpec, CompositeSpec]:
    if data.get("modality") == "multimodal":
        text = spec_from_dict(data["text"])
        vision = spec_from_dict(data["vision"])
        if not isinstance(text, PerturbationSpec) or not isinstance(vision, PerturbationSpec):
            raise InvalidInputError("multimodal parts must be single-modality specs")
        return CompositeSpec(text=text, vision=vision)
    ch = _channel(data["family"], data["kind"])
    return PerturbationSpec(
        channel=ch,
        severity=data.get("severity"),
        params=data.get("params"),
        seed=int(data.get("seed", 0)),
    )


def compose_multimodal(text_spec: PerturbationSpec, vis_spec: PerturbationSpec) -> CompositeSpec:
    """Pair one textual and one visual spec into a multimodal perturbation."""
    return CompositeSpec(text=text_spec, vision=vis_spec)


# ---------------------------------------------------------------------------
# Plan generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WorkItem:
    step: int
    episode_id: str
    spec: Optional[Union[PerturbationSpec, CompositeSpec]]
    derived_seed: int


@dataclass(frozen=True)
class Plan:
    items: tuple[WorkItem, ...]
    stage: str
    mode: str
    global_seed: int
    dataset_id: str
    fingerprint: str
    stage_metadata: Mapping[str, object]


def _fingerprint(config: CurriculumConfig, global_seed: int, dataset_id: str, stage: str, mode: str) -> str:
    payload = json.dumps(
        {
            "config": config_to_dict(config),
            "global_seed": global_seed,
            "dataset_id": dataset_id,
            "stage": stage,
            "mode": mode,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _episode_sequence(dataset: DatasetManifest, global_seed: int, steps: int, domain: str) -> list[EpisodeEntry]:
    """Round-robin over a seeded permutation, reshuffled every dataset pass."""
    ids = list(dataset.episodes)
    out: list[EpisodeEntry] = []
    order: list[EpisodeEntry] = []
    for m in range(steps):
        position = m % len(ids)
        if position == 0:
            epoch = m // len(ids)
            rng = random.Random(mix_seed(global_seed, domain, epoch))
            order = list(ids)
            rng.shuffle(order)
        out.append(order[position])
    return out


def _stage_metadata(config: CurriculumConfig, stage: str, mode: str) -> dict:
    if stage == "stage1":
        return {
            "stage": "stage1",
            "input_distribution": "perturbed",
            "learning_rate": config.stage_metadata["stage1_learning_rate"],
            "steps": config.stage1_steps,
            "mode": mode,
        }
    return {
        "stage": "stage2",
        "input_distribution": "clean",
        "learning_rate": config.stage_metadata["stage2_learning_rate"],
        "steps": config.stage2_steps,
        "mode": mode,
    }


def plan_stage1(
    config: CurriculumConfig,
    dataset: DatasetManifest,
    global_seed: int,
    mode: str = "decoupled",
) -> Plan:
    """Generate the Stage I per-step perturbation assignment.

    decoupled follows the curriculum state at every step; no_curriculum keeps
    the injection-probability ramp but samples channels uniformly over all
    trainable channels with severity Uniform(0, 1); joint uses a fixed
    injection probability with the same ungated channel union.
    """
    if mode not in PLAN_MODES:
        raise InvalidInputError(f"unknown plan mode {mode!r}")
    violations = _curriculum.validate(config)
    if violations:
        raise ValidationError(violations)
    if not dataset.episodes:
        raise InvalidInputError("dataset has no episodes")

    steps = config.stage1_steps
    union = trainable_channels()
    episodes = _episode_sequence(dataset, global_seed, steps, "stage1-epoch")
    items = []
    for m in range(steps):
        entry = episodes[m]
        seed_m = derive_seed(global_seed, entry.episode_id, m, 0)
        if mode == "joint":
            state = CurriculumState(
                step=m, sub_stage="mixed", phase=0, p_adv=config.joint_p_adv,
                active_set=union, d_min=0.0, d_max=1.0,
            )
        elif mode == "no_curriculum":
            scheduled = _curriculum.state_at(config, m)
            state = CurriculumState(
                step=m, sub_stage="mixed", phase=scheduled.phase, p_adv=scheduled.p_adv,
                active_set=union, d_min=0.0, d_max=1.0,
            )
        else:
            state = _curriculum.state_at(config, m)
        spec = _curriculum.sample(state, seed_m)
        items.append(WorkItem(step=m, episode_id=entry.episode_id, spec=spec, derived_seed=seed_m))
    return Plan(
        items=tuple(items),
        stage="stage1",
        mode=mode,
        global_seed=global_seed,
        dataset_id=dataset.dataset_id,
        fingerprint=_fingerprint(config, global_seed, dataset.dataset_id, "stage1", mode),
        stage_metadata=_stage_metadata(config, "stage1", mode),
    )


def plan_stage2(
    config: CurriculumConfig,
    dataset: DatasetManifest,
    global_seed: int,
    mode: str = "decoupled",
) -> Plan:
    """Generate the Stage II clean re-alignment plan: every item unperturbed.

    The joint and no_stage2 ablations train in a single stage, so their
    Stage II plans are empty (emitted with a warning).
    """
    if mode not in PLAN_MODES:
        raise InvalidInputError(f"unknown plan mode {mode!r}")
    if not dataset.episodes:
        raise InvalidInputError("dataset has no episodes")
    if mode in ("no_stage2", "joint"):
        warnings.warn(f"mode {mode!r} trains in a single stage; Stage II plan is empty")
        steps = 0
    else:
        steps = config.stage2_steps
    episodes = _episode_sequence(dataset, global_seed, steps, "stage2-epoch")
    items = tuple(
        WorkItem(
            step=m,
            episode_id=episodes[m].episode_id,
            spec=None,
            derived_seed=derive_seed(global_seed, episodes[m].episode_id, m, 0),
        )
        for m in range(steps)
    )
    return Plan(
        items=items,
        stage="stage2",
        mode=mode,
        global_seed=global_seed,
        dataset_id=dataset.dataset_id,
        fingerprint=_fingerprint(config, global_seed, dataset.dataset_id, "stage2", mode),
        stage_metadata=_stage_metadata(config, "stage2", mode),
    )


# ---------------------------------------------------------------------------
# Plan execution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExecuteSummary:
    done: int
    skipped: int
    failed: int
    manifest_path: Path

    def to_dict(self) -> dict:
        return {
            "done": self.done,
            "skipped": self.skipped,
            "failed": self.failed,
            "manifest": str(self.manifest_path),
        }


@dataclass
class _ExecContext:
    dataset: DatasetManifest
    out_dir: Path
    global_seed: int
    library: PayloadLibrary
    geometry: GeometryConfig


_WORKER_CTX: Optional[_ExecContext] = None


def _init_worker(ctx: _ExecContext) -> None:
    global _WORKER_CTX
    _WORKER_CTX = ctx


def _save_frame(frame: np.ndarray, path: Path) -> None:
    Image.fromarray(frame, mode="RGB").save(path, format="PNG")


def _save_mask(mask: np.ndarray, path: Path) -> None:
    Image.fromarray((mask.astype(np.uint8) * 255), mode="L").save(path, format="PNG")


def _apply_text_part(
    ctx: _ExecContext, entry: EpisodeEntry, spec: PerturbationSpec
) -> tuple[str, dict]:
    instr = render_instruction(entry.task_text)
    perturbed, report = _textperturb.apply_spec(instr, spec, ctx.library)
    detail = {
        "measured_d": report.measured,
        "requested": report.requested,
        "components": dict(report.components),
        "spans": [[s.start, s.end, s.kind] for s in perturbed.corrupted_spans],
        "noop": perturbed.noop,
    }
    return perturbed.text, detail


def _apply_vision_part(
    ctx: _ExecContext,
    entry: EpisodeEntry,
    spec: PerturbationSpec,
    frames: list[np.ndarray],
    item: WorkItem,
) -> tuple[list[np.ndarray], list[Optional[np.ndarray]], dict]:
    ch = spec.channel
    if ch.family == "dynamic_artifacts":
        severity = 0.5 if spec.severity is None else spec.severity
        out_frames = _visionperturb.apply_dynamic(frames, ch.kind, severity, item.derived_seed)
        measured = [
            _visionperturb.vis_difficulty(orig, out, "photometric").measured
            for orig, out in zip(frames, out_frames)
        ]
        detail = {"measured_d": float(np.mean(measured)), "requested": severity, "params": None}
        return out_frames, [None] * len(out_frames), detail

    if spec.params:
        params = dict(spec.params)
    else:
        if spec.severity is None:
            raise InvalidInputError(f"{ch} needs a severity or explicit params")
        params = _visionperturb.severity_to_params(
            ch, spec.severity, frames[0], ctx.geometry, seed=item.derived_seed
        )
    out_frames: list[np.ndarray] = []
    masks: list[Optional[np.ndarray]] = []
    measured_values: list[float] = []
    for i, frame in enumerate(frames):
        frame_seed = derive_seed(ctx.global_seed, entry.episode_id, item.step, i + 1)
        out, mask = _visionperturb.apply_to_frame(frame, ch, params, frame_seed, ctx.geometry)
        out_frames.append(out)
        masks.append(mask)
        if ch.family == "photometric":
            measured_values.append(_visionperturb.vis_difficulty(frame, out, "photometric").measured)
        elif ch.family == "occlusion":
            measured_values.append(
                _visionperturb.vis_difficulty(frame, out, "occlusion", mask=mask).measured
            )
        else:
            measured_values.append(
                _visionperturb.vis_difficulty(
                    frame, out, "geometric", params, geometry=ctx.geometry
                ).measured
            )
    detail = {
        "measured_d": float(np.mean(measured_values)),
        "requested": spec.severity,
        "params": params,
    }
    return out_frames, masks, detail


def _execute_item(item: WorkItem) -> dict:
    try:
        return _execute_item_inner(item)
    except OSError as exc:
        raise LoadError(
            f"I/O failure at step {item.step}, episode {item.episode_id!r}: {exc}"
        ) from exc


def _execute_item_inner(item: WorkItem) -> dict:
    ctx = _WORKER_CTX
    assert ctx is not None, "worker context not initialized"
    entry = ctx.dataset.episode(item.episode_id)
    item_dir = ctx.out_dir / entry.episode_id / str(item.step)
    item_dir.mkdir(parents=True, exist_ok=True)
    rel = f"{entry.episode_id}/{item.step}"

    record: dict = {
        "step": item.step,
        "episode_id": entry.episode_id,
        "seed": item.derived_seed,
        "spec": spec_to_dict(item.spec) if item.spec is not None else None,
        "status": "done",
        "error": None,
        "outputs": [f"{rel}/{i}.png" for i in range(len(entry.frame_paths))],
        "instruction": f"{rel}/instruction.txt",
    }

    text_spec: Optional[PerturbationSpec] = None
    vision_spec: Optional[PerturbationSpec] = None
    if isinstance(item.spec, CompositeSpec):
        text_spec, vision_spec = item.spec.text, item.spec.vision
    elif isinstance(item.spec, PerturbationSpec):
        if item.spec.channel.modality == "textual":
            text_spec = item.spec
        else:
            vision_spec = item.spec

    # Instruction: perturbed once per item, or the clean rendering.
    if text_spec is not None:
        text, text_detail = _apply_text_part(ctx, entry, text_spec)
        record["text"] = text_detail
    else:
        text = render_instruction(entry.task_text).rendered
    (item_dir / "instruction.txt").write_text(text, encoding="utf-8")

    # Frames: perturbed per-frame, or copied verbatim.
    if vision_spec is None:
        for i, frame_path in enumerate(entry.frame_paths):
            shutil.copyfile(ctx.dataset.root / frame_path, item_dir / f"{i}.png")
    else:
        frames = load_frames(ctx.dataset, entry)
        try:
            out_frames, masks, vision_detail = _apply_vision_part(
                ctx, entry, vision_spec, frames, item
            )
        except CalibrationError as exc:
            record["status"] = "skipped"
            record["error"] = str(exc)
            record["outputs"] = []
            return record
        record["vision"] = vision_detail
        mask_paths = []
        for i, out in enumerate(out_frames):
            _save_frame(out, item_dir / f"{i}.png")
            if masks[i] is not None:
                _save_mask(masks[i], item_dir / f"mask_{i}.png")
                mask_paths.append(f"{rel}/mask_{i}.png")
        if mask_paths:
            record["masks"] = mask_paths

    # Item-level measured difficulty: the perturbed modality's measurement
    # (text wins in composites for the single scalar; per-part details stay).
    if "vision" in record and "text" in record:
        record["measured_d"] = {
            "text": record["text"]["measured_d"],
            "vision": record["vision"]["measured_d"],
        }
    elif "vision" in record:
        record["measured_d"] = record["vision"]["measured_d"]
    elif "text" in record:
        record["measured_d"] = record["text"]["measured_d"]
    else:
        record["measured_d"] = None
    return record


def execute(
    plan: Plan,
    dataset: DatasetManifest,
    out_dir: Union[str, Path],
    workers: int = 1,
    library: Optional[PayloadLibrary] = None,
    geometry: Optional[GeometryConfig] = None,
) -> ExecuteSummary:
    """Apply every plan item and write frames, instructions, and the manifest.

    Results are a pure function of the plan: any worker count yields
    byte-identical outputs. Calibration failures skip the item and are
    recorded; I/O failures abort naming the failing item.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ctx = _ExecContext(
        dataset=dataset,
        out_dir=out_dir,
        global_seed=plan.global_seed,
        library=library or PayloadLibrary.default(),
        geometry=geometry or GeometryConfig(),
    )
    if workers <= 1 or len(plan.items) == 0:
        _init_worker(ctx)
        records = [_execute_item(item) for item in plan.items]
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(ctx,)) as pool:
            records = list(pool.map(_execute_item, plan.items, chunksize=16))

    header = {
        "format_version": FORMAT_VERSION,
        "fingerprint": plan.fingerprint,
        "dataset_id": plan.dataset_id,
        "stage_metadata": dict(plan.stage_metadata),
        "mode": plan.mode,
        "global_seed": plan.global_seed,
    }
    manifest_path = out_dir / "manifest.jsonl"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    done = sum(1 for r in records if r["status"] == "done")
    skipped = sum(1 for r in records if r["status"] == "skipped")
    failed = len(records) - done - skipped
    return ExecuteSummary(done=done, skipped=skipped, failed=failed, manifest_path=manifest_path)


def load_output_manifest(path: Union[str, Path]) -> tuple[dict, list[dict]]:
    """Read back an output manifest: (header, records in plan order)."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise LoadError(f"{path}: empty manifest")
    header = json.loads(lines[0])
    return header, [json.loads(line) for line in lines[1:] if line.strip()]


# ---------------------------------------------------------------------------
# Plan serialization (for the CLI plan/run split)
# ---------------------------------------------------------------------------

def save_plan(plan: Plan, path: Union[str, Path]) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "fingerprint": plan.fingerprint,
        "stage": plan.stage,
        "mode": plan.mode,
        "global_seed": plan.global_seed,
        "dataset_id": plan.dataset_id,
        "stage_metadata": dict(plan.stage_metadata),
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for item in plan.items:
            fh.write(
                json.dumps(
                    {
                        "step": item.step,
                        "episode_id": item.episode_id,
                        "spec": spec_to_dict(item.spec) if item.spec is not None else None,
                        "derived_seed": item.derived_seed,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def load_plan(path: Union[str, Path]) -> Plan:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise LoadError(f"{path}: empty plan")
    header = json.loads(lines[0])
    items = []
    for line in lines[1:]:
        if not line.strip():
            continue
        rec = json.loads(line)
        spec = spec_from_dict(rec["spec"]) if rec["spec"] is not None else None
        items.append(
            WorkItem(
                step=rec["step"],
                episode_id=rec["episode_id"],
                spec=spec,
                derived_seed=rec["derived_seed"],
            )
        )
    return Plan(
        items=tuple(items),
        stage=header["stage"],
        mode=header["mode"],
        global_seed=header["global_seed"],
        dataset_id=header["dataset_id"],
        fingerprint=header["fingerprint"],
        stage_metadata=header["stage_metadata"],
    )
