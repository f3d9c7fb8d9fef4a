"""Rollout-log ingestion, task-success-rate computation, and robustness
report rendering, plus the matched-baseline perturbation presets.

TSR is the fraction of successful rollouts as a percentage. Reports keep
exact success/count integers alongside the rendered percentage so
aggregates can be audited with rational arithmetic; family and setting
aggregates pool raw records (count-weighted), which coincides with the
unweighted channel mean when per-channel counts are equal.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, Union

from .core import (
    SEEN,
    UNSEEN,
    CompositeSpec,
    PerturbationSpec,
    channel as _channel,
    tag_seen_unseen,
)
from .errors import EmptySelectionError, InvalidInputError, LoadError
from .pipeline import spec_from_dict, spec_to_dict

SpecLike = Union[PerturbationSpec, CompositeSpec]


@dataclass(frozen=True)
class RolloutRecord:
    task_id: str
    suite: str
    model_id: str
    spec: Optional[SpecLike]
    success: bool


@dataclass(frozen=True)
class RolloutLoadResult:
    records: tuple[RolloutRecord, ...]
    malformed: tuple[tuple[int, str], ...]  # (line number, diagnostic)
    empty: bool = False


def load_rollouts(path: Union[str, Path]) -> RolloutLoadResult:
    """Load a line-delimited rollout log, reporting malformed lines by number."""
    path = Path(path)
    if not path.is_file():
        raise LoadError(f"rollout log not found: {path}")
    records: list[RolloutRecord] = []
    malformed: list[tuple[int, str]] = []
    lines = path.read_text(encoding="utf-8").splitlines()
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            malformed.append((lineno, f"malformed JSON: {exc}"))
            continue
        missing = {"task_id", "suite", "model_id", "success"} - set(rec)
        if missing:
            malformed.append((lineno, f"missing fields {sorted(missing)}"))
            continue
        if not isinstance(rec["success"], (bool, int)) or rec["success"] not in (0, 1, True, False):
            malformed.append((lineno, f"success must be boolean, got {rec['success']!r}"))
            continue
        spec = None
        if rec.get("spec") is not None:
            try:
                spec = spec_from_dict(rec["spec"])
            except Exception as exc:  # noqa: BLE001 - report, do not abort the load
                malformed.append((lineno, f"bad spec: {exc}"))
                continue
        records.append(
            RolloutRecord(
                task_id=rec["task_id"],
                suite=rec["suite"],
                model_id=rec["model_id"],
                spec=spec,
                success=bool(rec["success"]),
            )
        )
    empty = not records and not malformed
    if empty:
        warnings.warn(f"{path}: rollout log is empty")
    return RolloutLoadResult(records=tuple(records), malformed=tuple(malformed), empty=empty)


def save_rollouts(records: Iterable[RolloutRecord], path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(
                json.dumps(
                    {
                        "task_id": r.task_id,
                        "suite": r.suite,
                        "model_id": r.model_id,
                        "spec": spec_to_dict(r.spec) if r.spec is not None else None,
                        "success": r.success,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


@dataclass(frozen=True)
class TsrResult:
    tsr: float
    successes: int
    n: int


def tsr(
    records: Sequence[RolloutRecord],
    predicate: Optional[Callable[[RolloutRecord], bool]] = None,
) -> TsrResult:
    """Task success rate (percent) over the filtered records, with its count."""
    selected = [r for r in records if predicate is None or predicate(r)]
    if not selected:
        raise EmptySelectionError("no rollout records match the filter")
    successes = sum(1 for r in selected if r.success)
    return TsrResult(tsr=100.0 * successes / len(selected), successes=successes, n=len(selected))


# ---------------------------------------------------------------------------
# Report construction
# ---------------------------------------------------------------------------

SECTION_CLEAN = "clean"
SECTION_CHANNEL = "channel"
SECTION_MULTIMODAL = "multimodal"
SECTION_FAMILY = "family"
SECTION_SETTING = "setting"


@dataclass(frozen=True)
class ReportRow:
    section: str
    modality: str
    family: str
    label: str
    tsr: float
    successes: int
    n: int
    tag: Optional[str] = None  # seen/unseen for channel and family rows
    delta: Optional[float] = None

    @property
    def key(self) -> tuple[str, str, str, str]:
        return (self.section, self.modality, self.family, self.label)


@dataclass(frozen=True)
class RobustnessReport:
    rows: tuple[ReportRow, ...]

    def section(self, name: str) -> list[ReportRow]:
        return [r for r in self.rows if r.section == name]

    def find(self, section: str, label: str) -> ReportRow:
        for r in self.rows:
            if r.section == section and r.label == label:
                return r
        raise KeyError((section, label))


def _composite_label(spec: CompositeSpec) -> str:
    return f"{spec.text.channel}+{spec.vision.channel}"


def _group_rows(records: Sequence[RolloutRecord]) -> dict[tuple, list[RolloutRecord]]:
    groups: dict[tuple, list[RolloutRecord]] = {}
    for r in records:
        if r.spec is None:
            key = (SECTION_CLEAN, "", "", "clean")
        elif isinstance(r.spec, CompositeSpec):
            key = (SECTION_MULTIMODAL, "multimodal", "", _composite_label(r.spec))
        else:
            ch = r.spec.channel
            key = (SECTION_CHANNEL, ch.modality, ch.family, ch.kind)
        groups.setdefault(key, []).append(r)
    return groups


def _pooled(records: Sequence[RolloutRecord]) -> tuple[float, int, int]:
    successes = sum(1 for r in records if r.success)
    return 100.0 * successes / len(records), successes, len(records)


def _build_rows(records: Sequence[RolloutRecord]) -> list[ReportRow]:
    rows: list[ReportRow] = []
    groups = _group_rows(records)

    for key in sorted(groups, key=lambda k: (k[0], k[1], k[2], k[3])):
        section, modality, family, label = key
        value, successes, n = _pooled(groups[key])
        tag = None
        if section == SECTION_CHANNEL:
            tag = tag_seen_unseen(_channel(family, label))
        elif section == SECTION_MULTIMODAL:
            sample = groups[key][0].spec
            assert isinstance(sample, CompositeSpec)
            unseen = (
                sample.text.channel.evaluation_only or sample.vision.channel.evaluation_only
            )
            tag = UNSEEN if unseen else SEEN
        rows.append(
            ReportRow(
                section=section, modality=modality, family=family, label=label,
                tsr=value, successes=successes, n=n, tag=tag,
            )
        )

    # Family aggregates pool the raw per-channel records (count-weighted).
    single = [r for r in records if isinstance(r.spec, PerturbationSpec)]
    families: dict[tuple[str, str], list[RolloutRecord]] = {}
    for r in single:
        ch = r.spec.channel
        families.setdefault((ch.modality, ch.family), []).append(r)
    for (modality, family) in sorted(families):
        value, successes, n = _pooled(families[(modality, family)])
        tag = tag_seen_unseen(families[(modality, family)][0].spec.channel)
        rows.append(
            ReportRow(
                section=SECTION_FAMILY, modality=modality, family=family, label=family,
                tsr=value, successes=successes, n=n, tag=tag,
            )
        )
    if any(isinstance(r.spec, CompositeSpec) for r in records):
        multi = [r for r in records if isinstance(r.spec, CompositeSpec)]
        value, successes, n = _pooled(multi)
        rows.append(
            ReportRow(
                section=SECTION_FAMILY, modality="multimodal", family="multimodal",
                label="multimodal", tsr=value, successes=successes, n=n,
            )
        )

    # TSP/TUP/VSP/VUP settings over single-modality perturbed records.
    settings = {
        "TSP": ("textual", SEEN),
        "TUP": ("textual", UNSEEN),
        "VSP": ("visual", SEEN),
        "VUP": ("visual", UNSEEN),
    }
    for name, (modality, tag) in settings.items():
        bucket = [
            r
            for r in single
            if r.spec.channel.modality == modality and tag_seen_unseen(r.spec.channel) == tag
        ]
        if bucket:
            value, successes, n = _pooled(bucket)
            rows.append(
                ReportRow(
                    section=SECTION_SETTING, modality=modality, family="", label=name,
                    tsr=value, successes=successes, n=n, tag=tag,
                )
            )
    return rows


def report(
    records: Sequence[RolloutRecord],
    baseline_records: Optional[Sequence[RolloutRecord]] = None,
) -> RobustnessReport:
    """Build the full robustness report, with baseline deltas when provided.

    Deltas are exact differences tsr - baseline_tsr per matching row;
    method rows without a baseline counterpart keep delta absent (a single
    warning lists them).
    """
    if not records:
        raise EmptySelectionError("no rollout records to report on")
    rows = _build_rows(records)
    if baseline_records:
        baseline = {r.key: r for r in _build_rows(baseline_records)}
        missing = [r for r in rows if r.key not in baseline]
        if missing:
            labels = ", ".join(f"{r.section}:{r.label}" for r in missing)
            warnings.warn(f"baseline has no rows for: {labels}; deltas omitted there")
        rows = [
            ReportRow(
                section=r.section, modality=r.modality, family=r.family, label=r.label,
                tsr=r.tsr, successes=r.successes, n=r.n, tag=r.tag,
                delta=(r.tsr - baseline[r.key].tsr) if r.key in baseline else None,
            )
            for r in rows
        ]
    return RobustnessReport(rows=tuple(rows))


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def format_tsr_cell(row: ReportRow) -> str:
    """Render "66.00+30.00" style: percentage with its signed delta annex."""
    cell = f"{row.tsr:.2f}"
    if row.delta is not None:
        cell += f"{row.delta:+.2f}"
    return cell


_SECTION_ORDER = (SECTION_CLEAN, SECTION_CHANNEL, SECTION_MULTIMODAL, SECTION_FAMILY, SECTION_SETTING)


def render_report(rep: RobustnessReport, fmt: str = "aligned_text") -> str:
    if fmt == "json":
        payload = [
            {
                "section": r.section, "modality": r.modality, "family": r.family,
                "label": r.label, "tsr": r.tsr, "successes": r.successes, "n": r.n,
                "tag": r.tag, "delta": r.delta,
            }
            for r in rep.rows
        ]
        return json.dumps(payload, indent=2, sort_keys=False) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["section", "modality", "family", "label", "tag", "tsr", "successes", "n", "delta"])
        for r in rep.rows:
            writer.writerow(
                [
                    r.section, r.modality, r.family, r.label, r.tag or "",
                    repr(r.tsr), r.successes, r.n,
                    "" if r.delta is None else repr(r.delta),
                ]
            )
        return buf.getvalue()
    if fmt == "aligned_text":
        lines = ["# family and setting aggregates pool raw rollouts (count-weighted)"]
        header = ("section", "modality", "family", "type", "tag", "tsr", "n")
        cells = []
        for section in _SECTION_ORDER:
            for r in rep.rows:
                if r.section != section:
                    continue
                cells.append(
                    (r.section, r.modality or "-", r.family or "-", r.label,
                     r.tag or "-", format_tsr_cell(r), str(r.n))
                )
        widths = [max(len(header[i]), *(len(c[i]) for c in cells)) for i in range(len(header))]
        lines.append("  ".join(h.ljust(widths[i]) for i, h in enumerate(header)))
        for row in cells:
            lines.append("  ".join(v.ljust(widths[i]) for i, v in enumerate(row)))
        return "\n".join(lines) + "\n"
    raise InvalidInputError(f"unknown report format {fmt!r}")


def load_report_csv(text: str) -> list[dict]:
    """Parse render_report(csv) output back into typed row dicts."""
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        rows.append(
            {
                "section": rec["section"],
                "modality": rec["modality"],
                "family": rec["family"],
                "label": rec["label"],
                "tag": rec["tag"] or None,
                "tsr": float(rec["tsr"]),
                "successes": int(rec["successes"]),
                "n": int(rec["n"]),
                "delta": float(rec["delta"]) if rec["delta"] else None,
            }
        )
    return rows


# ---------------------------------------------------------------------------
# Matched baseline presets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Preset:
    name: str
    spec: PerturbationSpec


def baseline_presets() -> list[Preset]:
    """The five fixed perturbation settings used for matched baseline comparison."""
    return [
        Preset(
            "color_jitter",
            PerturbationSpec(
                channel=_channel("photometric", "color_jitter"),
                params={"alpha": 0.4, "beta": 0.4, "delta": 0.4},
            ),
        ),
        Preset(
            "gaussian_noise",
            PerturbationSpec(
                channel=_channel("photometric", "gaussian_noise"),
                params={"sigma": 0.2745},
            ),
        ),
        Preset(
            "image_rotation",
            PerturbationSpec(
                channel=_channel("geometric", "rotation"),
                params={"theta_deg": 20.0},
            ),
        ),
        Preset(
            "image_shift",
            PerturbationSpec(
                channel=_channel("geometric", "shift"),
                params={"di_ratio": 0.15, "dj_ratio": 0.15},
            ),
        ),
        Preset(
            "adversarial_prompt",
            PerturbationSpec(
                channel=_channel("adversarial_injection", "prefix"),
                params={"payload_id": "baseline_adversarial_prompt"},
            ),
        ),
    ]
