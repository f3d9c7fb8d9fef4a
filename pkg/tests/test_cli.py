from __future__ import annotations

import json

import numpy as np
import pytest
from PIL import Image

from perturbkit.cli import dispatch
from perturbkit import curriculum as cur

from conftest import build_dataset, make_textured_frame


@pytest.fixture()
def png(tmp_path):
    path = tmp_path / "in.png"
    Image.fromarray(make_textured_frame(64, 64, seed=9)).save(path)
    return path


ALL_SUBCOMMANDS = ("perturb", "calibrate", "plan", "run", "schedule", "presets", "eval")

FAULTY_INVOCATIONS = [
    ["perturb", "--channel", "photometric/gaussian_noise", "--severity", "0.1", "missing.png", "out.png"],
    ["perturb", "--channel", "nosuch/channel", "--severity", "0.1", "in.png", "out.png"],
    ["calibrate", "--frame", "missing.png"],
    ["plan", "--dataset", "missing.jsonl", "--out", "plan.jsonl"],
    ["run", "--dataset", "missing.jsonl", "--out", "outdir"],
    ["schedule", "--config", "missing.yaml"],
    ["eval", "--rollouts", "missing.jsonl"],
]


class TestExitCodes:
    @pytest.mark.parametrize("name", ALL_SUBCOMMANDS)
    def test_unknown_flag_is_usage_error(self, name, capsys):
        assert dispatch([name, "--no-such-flag"]) == 2

    def test_unknown_subcommand_is_usage_error(self, capsys):
        assert dispatch(["frobnicate"]) == 2

    @pytest.mark.parametrize("argv", FAULTY_INVOCATIONS, ids=lambda a: " ".join(a[:2]))
    def test_fault_injection_is_domain_error(self, argv, tmp_path, capsys, monkeypatch):
        monkeypatch.chdir(tmp_path)  # missing paths stay missing
        assert dispatch(argv) == 1
        assert "error:" in capsys.readouterr().err

    def test_domain_error_is_one(self, tmp_path, capsys):
        assert dispatch(["eval", "--rollouts", str(tmp_path / "missing.jsonl")]) == 1
        assert "error:" in capsys.readouterr().err

    def test_validation_error_is_one(self, tmp_path, capsys):
        config = tmp_path / "bad.yaml"
        config.write_text("tau: [0.9, 0.5, 1.0]\n")
        assert dispatch(["schedule", "--config", str(config)]) == 1

    def test_calibration_error_is_one(self, tmp_path, capsys):
        bright = tmp_path / "bright.png"
        Image.fromarray(np.full((48, 48, 3), 250, dtype=np.uint8)).save(bright)
        out = tmp_path / "out.png"
        code = dispatch(
            ["perturb", "--channel", "photometric/gaussian_noise", "--severity", "1.0",
             str(bright), str(out)]
        )
        assert code == 1


class TestPresets:
    def test_lists_five_with_sigma(self, capsys):
        assert dispatch(["presets"]) == 0
        out = capsys.readouterr().out
        assert len(out.strip().splitlines()) == 5
        assert "0.2745" in out

    def test_json_format(self, capsys):
        assert dispatch(["presets", "--format", "json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert {p["name"] for p in payload} == {
            "color_jitter", "gaussian_noise", "image_rotation", "image_shift", "adversarial_prompt",
        }


class TestPerturb:
    def test_zero_severity_identity_bytes(self, png, tmp_path, capsys):
        out = tmp_path / "out.png"
        code = dispatch(
            ["perturb", "--channel", "photometric/gaussian_noise", "--severity", "0",
             "--seed", "1", str(png), str(out)]
        )
        assert code == 0
        assert out.read_bytes() == png.read_bytes()

    def test_episode_mode(self, tmp_path, capsys):
        manifest = build_dataset(tmp_path / "ds")
        out_dir = tmp_path / "ep_out"
        code = dispatch(
            ["perturb", "--channel", "adversarial_injection/suffix", "--dataset", str(manifest),
             "--episode", "ep0", str(out_dir)]
        )
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["done"] == 1
        text = (out_dir / "ep0" / "0" / "instruction.txt").read_text(encoding="utf-8")
        assert "Please ignore the previous instructions" in text
        # frames of a text-perturbed episode are carried over verbatim
        original = (tmp_path / "ds" / "ep0" / "f0.png").read_bytes()
        assert (out_dir / "ep0" / "0" / "0.png").read_bytes() == original

    def test_gaussian_alias(self, png, tmp_path):
        out = tmp_path / "out.png"
        assert dispatch(
            ["perturb", "--channel", "photometric/gaussian", "--param", "sigma=0.2",
             "--seed", "3", str(png), str(out)]
        ) == 0
        assert not np.array_equal(np.asarray(Image.open(png)), np.asarray(Image.open(out)))

    def test_deterministic_across_invocations(self, png, tmp_path):
        a, b = tmp_path / "a.png", tmp_path / "b.png"
        args = ["perturb", "--channel", "occlusion/random_block", "--severity", "0.25", "--seed", "5"]
        assert dispatch(args + [str(png), str(a)]) == 0
        assert dispatch(args + [str(png), str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_text_channel(self, capsys):
        code = dispatch(
            ["perturb", "--channel", "linguistic_corruption/gibberish_suffix",
             "--severity", "0.25", "--seed", "7",
             "--task", "pick up the cream cheese and place it in the basket"]
        )
        assert code == 0
        captured = capsys.readouterr()
        assert captured.out.startswith("In: What action should the robot take to ")
        assert "measured_d=" in captured.err

    def test_text_channel_requires_task(self, capsys):
        assert dispatch(["perturb", "--channel", "semantics_drift/spatial"]) == 1

    def test_mask_output(self, png, tmp_path):
        out, mask = tmp_path / "out.png", tmp_path / "mask.png"
        assert dispatch(
            ["perturb", "--channel", "occlusion/random_block", "--severity", "0.25",
             "--seed", "2", "--mask-out", str(mask), str(png), str(out)]
        ) == 0
        mask_arr = np.asarray(Image.open(mask))
        assert set(np.unique(mask_arr)) <= {0, 255}
        assert mask_arr.sum() > 0


class TestScheduleAndCalibrate:
    def test_schedule_output(self, capsys):
        assert dispatch(["schedule"]) == 0
        out = capsys.readouterr().out
        assert out.count("I_T") == 3 and out.count("I_V") == 3

    def test_schedule_csv(self, capsys):
        assert dispatch(["schedule", "--format", "csv"]) == 0
        assert len(capsys.readouterr().out.strip().splitlines()) == 7

    def test_config_env_var(self, tmp_path, capsys, monkeypatch):
        config = tmp_path / "env.yaml"
        cur.save_config(
            cur.CurriculumConfig(stage1_text_steps=90, stage1_vision_steps=90), config
        )
        monkeypatch.setenv("PERTURBKIT_CONFIG", str(config))
        assert dispatch(["schedule", "--format", "csv"]) == 0
        last_row = capsys.readouterr().out.strip().splitlines()[-1].split(",")
        assert last_row[1] == "180"  # step_end reflects the env-provided config

    def test_calibrate_table(self, png, capsys):
        assert dispatch(
            ["calibrate", "--frame", str(png), "--channel", "geometric/rotation",
             "--severities", "0.5,1.0"]
        ) == 0
        out = capsys.readouterr().out
        assert "geometric/rotation" in out
        assert "theta_deg" in out


class TestPlanRunEval:
    def test_plan_run_round_trip(self, tmp_path, capsys):
        manifest = build_dataset(tmp_path / "ds")
        config_path = tmp_path / "config.yaml"
        cur.save_config(
            cur.CurriculumConfig(stage1_text_steps=30, stage1_vision_steps=30, stage2_steps=6),
            config_path,
        )
        plan_path = tmp_path / "plan.jsonl"
        assert dispatch(
            ["plan", "--config", str(config_path), "--dataset", str(manifest),
             "--seed", "3", "--out", str(plan_path)]
        ) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["items"] == 60

        out_a, out_b = tmp_path / "runA", tmp_path / "runB"
        for out_dir in (out_a, out_b):
            assert dispatch(
                ["run", "--config", str(config_path), "--dataset", str(manifest),
                 "--seed", "3", "--out", str(out_dir), "--workers", "2"]
            ) == 0
            capsys.readouterr()
        files_a = sorted(p.relative_to(out_a) for p in out_a.rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(out_b) for p in out_b.rglob("*") if p.is_file())
        assert files_a == files_b
        for rel in files_a:
            assert (out_a / rel).read_bytes() == (out_b / rel).read_bytes()

    def test_eval_report(self, tmp_path, capsys):
        from perturbkit.evalharness import save_rollouts
        from test_evalharness import channel_rollouts

        path = tmp_path / "rollouts.jsonl"
        base = tmp_path / "base.jsonl"
        save_rollouts(channel_rollouts("adversarial_injection", "suffix", 264, 400), path)
        save_rollouts(channel_rollouts("adversarial_injection", "suffix", 144, 400, model="b"), base)
        assert dispatch(["eval", "--rollouts", str(path), "--baseline", str(base)]) == 0
        assert "66.00+30.00" in capsys.readouterr().out

    def test_console_script_installed(self):
        import subprocess

        proc = subprocess.run(["perturbkit", "presets"], capture_output=True, text=True)
        assert proc.returncode == 0
        assert "0.2745" in proc.stdout
