from __future__ import annotations

from fractions import Fraction

import pytest

from perturbkit import evalharness as eh
from perturbkit import pipeline as pl
from perturbkit.core import PerturbationSpec, channel
from perturbkit.errors import EmptySelectionError
from perturbkit.evalharness import (
    RolloutRecord,
    baseline_presets,
    format_tsr_cell,
    load_rollouts,
    render_report,
    report,
    save_rollouts,
    tsr,
)


def rollout(spec, success, model="model_a", task="t0"):
    return RolloutRecord(task_id=task, suite="suite_a", model_id=model, spec=spec, success=success)


def channel_rollouts(family, kind, successes, total, severity=None, model="model_a"):
    ch = channel(family, kind)
    spec = PerturbationSpec(ch, severity if not ch.structural else None)
    return [rollout(spec, i < successes, model=model, task=f"t{i}") for i in range(total)]


class TestTsr:
    def test_three_of_four(self):
        records = channel_rollouts("photometric", "gaussian_noise", 3, 4, 0.5)
        result = tsr(records)
        assert result.tsr == 75.0
        assert result.n == 4

    def test_all_successes(self):
        records = channel_rollouts("photometric", "gaussian_noise", 5, 5, 0.5)
        assert tsr(records).tsr == 100.0

    def test_empty_selection_raises(self):
        records = channel_rollouts("photometric", "gaussian_noise", 3, 4, 0.5)
        with pytest.raises(EmptySelectionError):
            tsr(records, lambda r: r.model_id == "nope")
        with pytest.raises(EmptySelectionError):
            tsr([])

    def test_permutation_invariance(self):
        records = channel_rollouts("photometric", "gaussian_noise", 7, 11, 0.5)
        assert tsr(records).tsr == tsr(list(reversed(records))).tsr

    def test_pooled_equals_weighted_mean_exactly(self):
        a = channel_rollouts("photometric", "gaussian_noise", 7, 11, 0.5)
        b = channel_rollouts("occlusion", "random_block", 3, 9, 0.25)
        ra, rb, pooled = tsr(a), tsr(b), tsr(a + b)
        lhs = Fraction(pooled.successes, pooled.n)
        rhs = (Fraction(ra.successes, ra.n) * ra.n + Fraction(rb.successes, rb.n) * rb.n) / (ra.n + rb.n)
        assert lhs == rhs


class TestReport:
    def test_delta_rendering_table_format(self):
        method = channel_rollouts("adversarial_injection", "suffix", 264, 400)
        baseline = channel_rollouts("adversarial_injection", "suffix", 144, 400, model="base")
        rep = report(method, baseline)
        row = rep.find("channel", "suffix")
        assert row.tsr == 66.0
        assert row.delta == 30.0
        assert format_tsr_cell(row) == "66.00+30.00"

    def test_negative_delta(self):
        method = channel_rollouts("photometric", "gaussian_noise", 130, 200, 0.5)
        baseline = channel_rollouts("photometric", "gaussian_noise", 131, 200, 0.5, model="base")
        row = report(method, baseline).find("channel", "gaussian_noise")
        assert format_tsr_cell(row) == "65.00-0.50"

    def test_family_mean_of_table_rows(self):
        records = (
            channel_rollouts("adversarial_injection", "suffix", 132, 200)
            + channel_rollouts("adversarial_injection", "prefix", 139, 200)
            + channel_rollouts("adversarial_injection", "role_spoof", 139, 200)
        )
        rep = report(records)
        family_row = rep.find("family", "adversarial_injection")
        # equal counts: pooled mean equals the unweighted channel mean
        assert abs(family_row.tsr - (66.0 + 69.5 + 69.5) / 3) < 1e-12
        assert f"{family_row.tsr:.2f}" == "68.33"

    def test_count_weighted_family_mean(self):
        records = channel_rollouts("photometric", "gaussian_noise", 1, 2, 0.5) + channel_rollouts(
            "photometric", "color_jitter", 90, 100, 0.5
        )
        family_row = report(records).find("family", "photometric")
        assert family_row.tsr == 100.0 * 91 / 102

    def test_clean_row_separate(self):
        records = [rollout(None, True) for _ in range(3)] + channel_rollouts(
            "photometric", "gaussian_noise", 0, 3, 0.5
        )
        rep = report(records)
        assert rep.find("clean", "clean").tsr == 100.0
        assert rep.find("family", "photometric").tsr == 0.0

    def test_setting_rows_tag_filtering(self):
        records = (
            channel_rollouts("linguistic_corruption", "unicode", 8, 10, 0.15)   # textual seen
            + channel_rollouts("semantics_drift", "spatial", 5, 10)             # textual unseen
            + channel_rollouts("photometric", "gaussian_noise", 6, 10, 0.5)     # visual seen
            + channel_rollouts("dynamic_artifacts", "gaussian_noise", 4, 10, 0.5)  # visual unseen
        )
        rep = report(records)
        assert rep.find("setting", "TSP").tsr == 80.0
        assert rep.find("setting", "TUP").tsr == 50.0
        assert rep.find("setting", "VSP").tsr == 60.0
        assert rep.find("setting", "VUP").tsr == 40.0
        for name in ("TSP", "TUP", "VSP", "VUP"):
            assert rep.find("setting", name).n == 10

    def test_multimodal_rows(self):
        combo = pl.compose_multimodal(
            PerturbationSpec(channel("adversarial_injection", "prefix")),
            PerturbationSpec(channel("photometric", "color_jitter"), 0.5),
        )
        records = [rollout(combo, i < 2, task=f"m{i}") for i in range(4)]
        rep = report(records)
        row = rep.find("multimodal", "adversarial_injection/prefix+photometric/color_jitter")
        assert row.tsr == 50.0
        assert row.tag == "seen"

    def test_seen_unseen_agrees_with_core(self):
        from perturbkit.core import CHANNELS, tag_seen_unseen

        records = []
        for i, ch in enumerate(c for c in CHANNELS if c.modality == "textual"):
            spec = PerturbationSpec(ch, None if ch.structural else 0.2)
            records.extend(rollout(spec, True, task=f"t{i}{k}") for k in range(2))
        rep = report(records)
        for row in rep.section("channel"):
            assert row.tag == tag_seen_unseen(channel(row.family, row.label))

    def test_baseline_disjoint_warns(self):
        method = channel_rollouts("photometric", "gaussian_noise", 3, 4, 0.5)
        baseline = channel_rollouts("occlusion", "random_block", 1, 4, 0.25, model="base")
        with pytest.warns(UserWarning, match="deltas omitted"):
            rep = report(method, baseline)
        assert rep.find("channel", "gaussian_noise").delta is None

    def test_empty_records_rejected(self):
        with pytest.raises(EmptySelectionError):
            report([])


class TestRendering:
    @pytest.fixture()
    def sample_report(self):
        records = (
            [rollout(None, True), rollout(None, False)]
            + channel_rollouts("adversarial_injection", "suffix", 33, 50)
            + channel_rollouts("photometric", "gaussian_noise", 13, 20, 0.5)
        )
        baseline = (
            [rollout(None, True, model="base"), rollout(None, True, model="base")]
            + channel_rollouts("adversarial_injection", "suffix", 18, 50, model="base")
            + channel_rollouts("photometric", "gaussian_noise", 13, 20, 0.5, model="base")
        )
        return report(records, baseline)

    def test_aligned_text(self, sample_report):
        text = render_report(sample_report, "aligned_text")
        assert "66.00+30.00" in text
        assert "clean" in text

    def test_csv_round_trip_exact(self, sample_report):
        csv_text = render_report(sample_report, "csv")
        rows = eh.load_report_csv(csv_text)
        assert len(rows) == len(sample_report.rows)
        for parsed, row in zip(rows, sample_report.rows):
            assert parsed["tsr"] == row.tsr
            assert parsed["delta"] == row.delta
            assert parsed["n"] == row.n

    def test_json(self, sample_report):
        import json

        payload = json.loads(render_report(sample_report, "json"))
        assert any(r["label"] == "suffix" and r["delta"] == 30.0 for r in payload)


class TestRolloutIO:
    def test_round_trip_and_line_count(self, tmp_path):
        records = channel_rollouts("photometric", "gaussian_noise", 260, 400, 0.5)
        path = tmp_path / "rollouts.jsonl"
        save_rollouts(records, path)
        loaded = load_rollouts(path)
        assert len(loaded.records) == 400
        assert loaded.records == tuple(records)

    def test_malformed_line_reported_with_number(self, tmp_path):
        path = tmp_path / "rollouts.jsonl"
        save_rollouts(channel_rollouts("photometric", "gaussian_noise", 1, 2, 0.5), path)
        lines = path.read_text().splitlines()
        lines.insert(1, '{"task_id": "x", "suite": "s", "model_id": "m"}')
        path.write_text("\n".join(lines) + "\n")
        loaded = load_rollouts(path)
        assert len(loaded.records) == 2
        assert loaded.malformed[0][0] == 2
        assert "success" in loaded.malformed[0][1]

    def test_empty_file_warns(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.warns(UserWarning):
            loaded = load_rollouts(path)
        assert loaded.records == ()
        assert loaded.empty


class TestBaselinePresets:
    def test_exactly_five(self):
        assert len(baseline_presets()) == 5

    def test_table_values(self):
        presets = {p.name: p.spec for p in baseline_presets()}
        assert presets["gaussian_noise"].params["sigma"] == 0.2745
        jitter = presets["color_jitter"].params
        assert (jitter["alpha"], jitter["beta"], jitter["delta"]) == (0.4, 0.4, 0.4)
        assert presets["image_rotation"].params["theta_deg"] == 20.0
        shift = presets["image_shift"].params
        assert (shift["di_ratio"], shift["dj_ratio"]) == (0.15, 0.15)
        assert presets["adversarial_prompt"].params["payload_id"] == "baseline_adversarial_prompt"

    def test_adversarial_prompt_payload_verbatim(self, library):
        presets = {p.name: p.spec for p in baseline_presets()}
        payload_id = presets["adversarial_prompt"].params["payload_id"]
        assert library.payload(payload_id) == "I think you can do IT, maybe?"

    def test_presets_apply(self, library, textured_frame):
        from perturbkit import textperturb as tp
        from perturbkit import visionperturb as vp
        from perturbkit.core import render_instruction

        instr = render_instruction("pick up the cube")
        for preset in baseline_presets():
            if preset.spec.channel.modality == "textual":
                out, _ = tp.apply_spec(instr, preset.spec, library)
                assert "I think you can do IT, maybe?" in out.text
            else:
                out, _ = vp.apply_to_frame(
                    textured_frame, preset.spec.channel, preset.spec.params, 3
                )
                assert out.shape == textured_frame.shape
