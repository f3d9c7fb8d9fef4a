"""Command-line entry point.

Exit codes: 0 success, 1 domain error (validation, calibration, empty
selection, bad data), 2 usage error. Diagnostics go to stderr, data to
stdout or the requested files. All randomness flows through --seed.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys

import numpy as np
from PIL import Image

from . import curriculum, evalharness, pipeline, visionperturb
from .core import PerturbationSpec, parse_channel, render_instruction
from .errors import InvalidInputError, PerturbKitError
from .textperturb import PayloadLibrary, apply_spec as apply_text_spec
from .visionperturb import GeometryConfig


def _load_frame(path: str) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def _save_frame(frame: np.ndarray, path: str) -> None:
    Image.fromarray(frame, mode="RGB").save(path, format="PNG")


def _parse_params(pairs: list[str]) -> dict:
    params = {}
    for pair in pairs:
        if "=" not in pair:
            raise InvalidInputError(f"--param expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        try:
            params[key] = float(value)
        except ValueError:
            params[key] = value
    return params


def _config_from_args(args: argparse.Namespace) -> curriculum.CurriculumConfig:
    path = getattr(args, "config", None) or os.environ.get("PERTURBKIT_CONFIG")
    if path:
        return curriculum.load_config(path)
    return curriculum.CurriculumConfig()


def _library_from_args(args: argparse.Namespace) -> PayloadLibrary:
    if getattr(args, "library", None):
        return PayloadLibrary.from_dir(args.library)
    return PayloadLibrary.default()


def _cmd_perturb(args: argparse.Namespace) -> int:
    ch = parse_channel(args.channel)
    params = _parse_params(args.param) if args.param else None
    if ch.structural and args.severity is not None:
        raise InvalidInputError(f"structural channel {ch} does not take --severity")
    spec = PerturbationSpec(channel=ch, severity=args.severity, params=params, seed=args.seed)
    library = _library_from_args(args)
    geometry = GeometryConfig()

    if args.episode:
        return _perturb_episode(args, spec, library)

    if ch.modality == "textual":
        if not args.task:
            raise InvalidInputError("textual channels need --task TEXT")
        instr = render_instruction(args.task)
        perturbed, report = apply_text_spec(instr, spec, library)
        sys.stdout.write(perturbed.text)
        sys.stdout.flush()
        print(f"measured_d={report.measured!r} n_corr={report.components['n_corr']}", file=sys.stderr)
        return 0

    if not args.input or not args.output:
        raise InvalidInputError("visual channels need input and output image paths")
    frame = _load_frame(args.input)
    if ch.family == "dynamic_artifacts":
        severity = 0.5 if spec.severity is None else spec.severity
        out = visionperturb.apply_dynamic([frame], ch.kind, severity, args.seed)[0]
        mask = None
        resolved = None
    else:
        resolved = params or visionperturb.severity_to_params(
            ch, spec.severity if spec.severity is not None else 0.0, frame, geometry, seed=args.seed
        )
        out, mask = visionperturb.apply_to_frame(frame, ch, resolved, args.seed, geometry)
    if np.array_equal(out, frame):
        shutil.copyfile(args.input, args.output)  # identity stays byte-identical
    else:
        _save_frame(out, args.output)
    if mask is not None and args.mask_out:
        Image.fromarray(mask.astype(np.uint8) * 255, mode="L").save(args.mask_out, format="PNG")
    if resolved is not None:
        print(f"params={json.dumps(resolved, sort_keys=True)}", file=sys.stderr)
    return 0


def _perturb_episode(args: argparse.Namespace, spec: PerturbationSpec, library: PayloadLibrary) -> int:
    """Apply one spec to one dataset episode via a single-item plan."""
    out_dir = args.output or args.input
    if not args.dataset or not out_dir:
        raise InvalidInputError("--episode needs --dataset and an output directory argument")
    dataset = pipeline.load_dataset(args.dataset)
    entry = dataset.episode(args.episode)
    item = pipeline.WorkItem(
        step=0,
        episode_id=entry.episode_id,
        spec=spec,
        derived_seed=pipeline.derive_seed(args.seed, entry.episode_id, 0, 0),
    )
    plan = pipeline.Plan(
        items=(item,),
        stage="adhoc",
        mode="decoupled",
        global_seed=args.seed,
        dataset_id=dataset.dataset_id,
        fingerprint="adhoc",
        stage_metadata={"stage": "adhoc"},
    )
    summary = pipeline.execute(plan, dataset, out_dir, workers=1, library=library)
    print(json.dumps(summary.to_dict(), sort_keys=True))
    return 0 if summary.failed == 0 and summary.skipped == 0 else 1


def _cmd_calibrate(args: argparse.Namespace) -> int:
    frame = _load_frame(args.frame)
    severities = [float(s) for s in args.severities.split(",")]
    channels = (
        [parse_channel(c) for c in args.channel]
        if args.channel
        else [
            parse_channel("photometric/gaussian_noise"),
            parse_channel("photometric/uniform_noise"),
            parse_channel("photometric/speckle_noise"),
            parse_channel("photometric/salt_pepper"),
        ]
    )
    geometry = GeometryConfig()
    print("channel\tseverity\tparams")
    for ch in channels:
        for s in severities:
            params = visionperturb.severity_to_params(ch, s, frame, geometry, seed=args.seed)
            print(f"{ch}\t{s:g}\t{json.dumps(params, sort_keys=True)}")
    return 0


def _make_plan(args: argparse.Namespace) -> tuple[pipeline.Plan, pipeline.DatasetManifest]:
    config = _config_from_args(args)
    dataset = pipeline.load_dataset(args.dataset)
    if args.stage == 2:
        plan = pipeline.plan_stage2(config, dataset, args.seed, args.mode)
    else:
        plan = pipeline.plan_stage1(config, dataset, args.seed, args.mode)
    return plan, dataset


def _cmd_plan(args: argparse.Namespace) -> int:
    plan, _ = _make_plan(args)
    pipeline.save_plan(plan, args.out)
    perturbed = sum(1 for item in plan.items if item.spec is not None)
    print(
        json.dumps(
            {"items": len(plan.items), "perturbed": perturbed, "fingerprint": plan.fingerprint},
            sort_keys=True,
        )
    )
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    plan, dataset = _make_plan(args)
    summary = pipeline.execute(
        plan,
        dataset,
        args.out,
        workers=args.workers,
        library=_library_from_args(args),
    )
    print(json.dumps(summary.to_dict(), sort_keys=True))
    return 0


def _cmd_schedule(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    rows = curriculum.schedule_summary(config)
    sys.stdout.write(curriculum.render_schedule(rows, args.format))
    return 0


def _cmd_presets(args: argparse.Namespace) -> int:
    presets = evalharness.baseline_presets()
    if args.format == "json":
        payload = [{"name": p.name, "spec": pipeline.spec_to_dict(p.spec)} for p in presets]
        print(json.dumps(payload, indent=2))
        return 0
    for p in presets:
        ch = p.spec.channel
        params = json.dumps(dict(p.spec.params or {}), sort_keys=True)
        print(f"{p.name}\t{ch.modality}/{ch}\t{params}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    loaded = evalharness.load_rollouts(args.rollouts)
    for lineno, message in loaded.malformed:
        print(f"{args.rollouts}:{lineno}: {message}", file=sys.stderr)
    baseline = None
    if args.baseline:
        base_loaded = evalharness.load_rollouts(args.baseline)
        for lineno, message in base_loaded.malformed:
            print(f"{args.baseline}:{lineno}: {message}", file=sys.stderr)
        baseline = base_loaded.records
    rep = evalharness.report(loaded.records, baseline)
    sys.stdout.write(evalharness.render_report(rep, args.format))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="perturbkit",
        description="Deterministic multimodal perturbations, curriculum plans, and TSR reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("perturb", help="apply one perturbation to an image or a task text")
    p.add_argument("--channel", required=True, help="family/kind, e.g. photometric/gaussian_noise")
    p.add_argument("--severity", type=float, default=None)
    p.add_argument("--param", action="append", default=[], help="explicit operator param key=value")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--task", help="task text for textual channels")
    p.add_argument("--dataset", help="dataset manifest (with --episode)")
    p.add_argument("--episode", help="episode_id to perturb into the output directory")
    p.add_argument("--library", help="payload library directory")
    p.add_argument("--mask-out", help="write the occlusion mask PNG here")
    p.add_argument("input", nargs="?", help="input image (visual channels)")
    p.add_argument("output", nargs="?", help="output image, or output directory with --episode")
    p.set_defaults(func=_cmd_perturb)

    p = sub.add_parser("calibrate", help="print severity-to-parameter tables for a frame")
    p.add_argument("--frame", required=True)
    p.add_argument("--channel", action="append", help="family/kind (repeatable)")
    p.add_argument("--severities", default="0.1,0.3,0.5,0.8")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_calibrate)

    for name, func in (("plan", _cmd_plan), ("run", _cmd_run)):
        p = sub.add_parser(name, help=f"{name} a training stage")
        p.add_argument("--config", help="curriculum config YAML")
        p.add_argument("--dataset", required=True, help="dataset manifest JSONL")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--mode", choices=pipeline.PLAN_MODES, default="decoupled")
        p.add_argument("--stage", type=int, choices=(1, 2), default=1)
        p.add_argument("--out", required=True)
        if name == "run":
            p.add_argument("--workers", type=int, default=1)
            p.add_argument("--library", help="payload library directory")
        p.set_defaults(func=func)

    p = sub.add_parser("schedule", help="print the curriculum schedule summary")
    p.add_argument("--config", help="curriculum config YAML")
    p.add_argument("--format", choices=("aligned_text", "csv"), default="aligned_text")
    p.set_defaults(func=_cmd_schedule)

    p = sub.add_parser("presets", help="list the matched baseline perturbation presets")
    p.add_argument("--format", choices=("aligned_text", "json"), default="aligned_text")
    p.set_defaults(func=_cmd_presets)

    p = sub.add_parser("eval", help="render a robustness report from rollout logs")
    p.add_argument("--rollouts", required=True)
    p.add_argument("--baseline")
    p.add_argument("--format", choices=("aligned_text", "csv", "json"), default="aligned_text")
    p.set_defaults(func=_cmd_eval)

    return parser


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except PerturbKitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
