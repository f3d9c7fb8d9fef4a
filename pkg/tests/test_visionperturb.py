from __future__ import annotations

import math

import numpy as np
import pytest

from perturbkit import visionperturb as vp
from perturbkit.core import channel, trainable_channels
from perturbkit.errors import CalibrationError, DegenerateInputError, InvalidInputError
from perturbkit.seeding import mix_seed
from perturbkit.visionperturb import (
    GeometryConfig,
    apply_dynamic,
    apply_geometric,
    apply_occlusion,
    apply_photometric,
    severity_to_params,
    vis_difficulty,
)

from conftest import make_smooth_frame, make_textured_frame

GEO = GeometryConfig()

GRADED_VISUAL = [c for c in trainable_channels("visual")]


class TestIdentityAndClipping:
    @pytest.mark.parametrize("ch", GRADED_VISUAL, ids=str)
    def test_zero_severity_identity(self, textured_frame, ch):
        params = severity_to_params(ch, 0.0, textured_frame, GEO, seed=1)
        out, _ = vp.apply_to_frame(textured_frame, ch, params, 99, GEO)
        assert np.array_equal(out, textured_frame)

    def test_zero_params_identity_photometric(self, textured_frame):
        for kind, params in (
            ("gaussian_noise", {"sigma": 0.0}),
            ("uniform_noise", {"amplitude": 0.0}),
            ("speckle_noise", {"sigma": 0.0}),
            ("salt_pepper", {"prob": 0.0}),
            ("color_jitter", {"alpha": 0.0, "beta": 0.0, "delta": 0.0}),
        ):
            out = apply_photometric(textured_frame, kind, params, 5)
            assert np.array_equal(out, textured_frame)

    def test_output_dtype_and_range_fuzz(self, textured_frame):
        rng = np.random.default_rng(7)
        for trial in range(50):
            ch = GRADED_VISUAL[trial % len(GRADED_VISUAL)]
            severity = float(rng.uniform(0, 1))
            params = severity_to_params(ch, severity, textured_frame, GEO, seed=trial)
            out, _ = vp.apply_to_frame(textured_frame, ch, params, trial, GEO)
            assert out.dtype == np.uint8
            assert out.shape == textured_frame.shape
            assert int(out.min()) >= 0 and int(out.max()) <= 255

    def test_determinism(self, textured_frame):
        a = apply_photometric(textured_frame, "gaussian_noise", {"sigma": 0.2}, 123)
        b = apply_photometric(textured_frame, "gaussian_noise", {"sigma": 0.2}, 123)
        assert np.array_equal(a, b)
        c = apply_photometric(textured_frame, "gaussian_noise", {"sigma": 0.2}, 124)
        assert not np.array_equal(a, c)

    def test_input_never_mutated(self, textured_frame):
        before = textured_frame.copy()
        apply_photometric(textured_frame, "salt_pepper", {"prob": 0.5}, 3)
        apply_occlusion(textured_frame, "random_block", {"ratio": 0.5}, 3)
        apply_geometric(textured_frame, "rotation", {"theta_deg": 10.0}, GEO)
        assert np.array_equal(before, textured_frame)


class TestPhotometric:
    def test_salt_pepper_statistics(self):
        frame = make_textured_frame(224, 224, seed=5, lo=30, hi=226)
        n = 224 * 224
        for p in (0.05, 0.1, 0.3):
            bound = 4.0 * math.sqrt(p * (1 - p) / n)
            for seed in range(20):
                out = apply_photometric(frame, "salt_pepper", {"prob": p}, seed)
                changed = (out != frame).any(axis=2)
                extremes = ((out == 0) | (out == 255)).all(axis=2)
                assert np.array_equal(changed, changed & extremes)
                fraction = changed.mean()
                assert abs(fraction - p) <= bound, (p, seed, fraction)

    def test_salt_pepper_values(self, textured_frame):
        out = apply_photometric(textured_frame, "salt_pepper", {"prob": 0.2}, 11)
        changed = (out != textured_frame).any(axis=2)
        values = out[changed]
        assert set(np.unique(values)) <= {0, 255}

    def test_gaussian_matches_sigma(self):
        # realized per-pixel std approximates sigma (pre-clip, mid-gray frame)
        frame = np.full((128, 128, 3), 128, dtype=np.uint8)
        out = apply_photometric(frame, "gaussian_noise", {"sigma": 0.1}, 2)
        delta = out.astype(np.float64) / 255 - frame.astype(np.float64) / 255
        assert abs(delta.std() - 0.1) < 0.005

    def test_uniform_bounded(self):
        frame = np.full((64, 64, 3), 128, dtype=np.uint8)
        out = apply_photometric(frame, "uniform_noise", {"amplitude": 0.1}, 2)
        delta = np.abs(out.astype(np.float64) - 128.0) / 255.0
        assert delta.max() <= 0.1 + 1 / 255

    def test_speckle_scales_with_intensity(self):
        # black pixels are unchanged under multiplicative noise
        frame = np.zeros((32, 32, 3), dtype=np.uint8)
        frame[16:, :, :] = 200
        out = apply_photometric(frame, "speckle_noise", {"sigma": 0.3}, 9)
        assert np.array_equal(out[:16], frame[:16])
        assert not np.array_equal(out[16:], frame[16:])

    def test_color_jitter_changes_frame(self, smooth_frame):
        out = apply_photometric(smooth_frame, "color_jitter", {"alpha": 0.4, "beta": 0.4, "delta": 0.4}, 3)
        assert not np.array_equal(out, smooth_frame)
        assert out.shape == smooth_frame.shape

    def test_params_kind_mismatch(self, textured_frame):
        with pytest.raises(InvalidInputError):
            apply_photometric(textured_frame, "gaussian_noise", {"prob": 0.1}, 0)
        with pytest.raises(InvalidInputError):
            apply_photometric(textured_frame, "color_jitter", {"alpha": 0.4}, 0)


class TestOcclusion:
    def test_quarter_ratio_exact(self):
        frame = make_textured_frame(224, 224, seed=1)
        out, mask = apply_occlusion(frame, "random_block", {"ratio": 0.25}, 5)
        assert mask.sum() == 112 * 112
        assert vis_difficulty(frame, out, "occlusion", mask=mask).measured == 0.25

    @pytest.mark.parametrize("ratio", [0.1, 0.25, 0.5, 1.0])
    def test_quantization_bound(self, ratio):
        frame = make_textured_frame(224, 224, seed=2)
        _, mask = apply_occlusion(frame, "random_block", {"ratio": ratio}, 7)
        side = int(round(math.sqrt(ratio * mask.size)))
        measured = mask.sum() / mask.size
        assert abs(measured - ratio) <= (2 * side + 1) / mask.size

    def test_zero_is_identity(self, textured_frame):
        out, mask = apply_occlusion(textured_frame, "random_block", {"ratio": 0.0}, 3)
        assert np.array_equal(out, textured_frame)
        assert mask.sum() == 0

    def test_full_coverage(self, textured_frame):
        for kind in ("random_block", "structured", "erasing", "noise_patch"):
            out, mask = apply_occlusion(textured_frame, kind, {"ratio": 1.0}, 3)
            assert mask.all()

    def test_mask_matches_fill(self, textured_frame):
        out, mask = apply_occlusion(textured_frame, "random_block", {"ratio": 0.3}, 9)
        assert (out[mask] == 128).all()
        assert np.array_equal(out[~mask], textured_frame[~mask])

    def test_erasing_constant_fill(self, textured_frame):
        out, mask = apply_occlusion(textured_frame, "erasing", {"ratio": 0.2, "fill": 7}, 4)
        assert (out[mask] == 7).all()

    def test_noise_patch_is_noise(self, textured_frame):
        out, mask = apply_occlusion(textured_frame, "noise_patch", {"ratio": 0.2}, 4)
        values = out[mask]
        assert values.std() > 40  # uniform over [0, 255] has std ~73.6

    def test_structured_blocks(self):
        frame = make_textured_frame(224, 224, seed=3)
        for ratio, expected_blocks in ((0.1, 1), (0.4, 2), (0.7, 3)):
            _, mask = apply_occlusion(frame, "structured", {"ratio": ratio}, 11)
            measured = mask.sum() / mask.size
            # non-overlapping placement keeps coverage near the request
            assert abs(measured - ratio) <= 0.05, (ratio, measured)

    def test_ratio_out_of_range(self, textured_frame):
        with pytest.raises(InvalidInputError):
            apply_occlusion(textured_frame, "random_block", {"ratio": 1.5}, 0)


class TestGeometric:
    def test_shift_index_arithmetic(self):
        frame = make_smooth_frame(224, 224)
        out = apply_geometric(frame, "shift", {"di_ratio": 0.15, "dj_ratio": 0.15}, GEO)
        delta = round(0.15 * 224)
        assert delta == 34
        assert np.array_equal(out[delta:, delta:], frame[:-delta, :-delta])
        assert (out[:delta, :] == 0).all()
        assert (out[:, :delta] == 0).all()

    def test_negative_shift(self, textured_frame):
        out = apply_geometric(textured_frame, "shift", {"di_ratio": -0.1, "dj_ratio": 0.0}, GEO)
        delta = round(0.1 * textured_frame.shape[0])
        assert np.array_equal(out[:-delta], textured_frame[delta:])
        assert (out[-delta:] == 0).all()

    def test_identity_transforms(self, textured_frame):
        assert np.array_equal(
            apply_geometric(textured_frame, "shift", {"di_ratio": 0.0, "dj_ratio": 0.0}, GEO),
            textured_frame,
        )
        assert np.array_equal(
            apply_geometric(textured_frame, "rotation", {"theta_deg": 0.0}, GEO), textured_frame
        )
        assert np.array_equal(
            apply_geometric(textured_frame, "crop", {"crop_ratio": 1.0}, GEO), textured_frame
        )

    def test_rotation_round_trip(self, smooth_frame):
        once = apply_geometric(smooth_frame, "rotation", {"theta_deg": 20.0}, GEO)
        back = apply_geometric(once, "rotation", {"theta_deg": -20.0}, GEO)
        h, w = smooth_frame.shape[:2]
        ci, cj = h // 4, w // 4
        center_a = smooth_frame[ci : h - ci, cj : w - cj].astype(np.float64)
        center_b = back[ci : h - ci, cj : w - cj].astype(np.float64)
        mae = np.abs(center_a - center_b).mean() / 255.0
        assert mae <= 4 / 255

    def test_rotation_bounds(self, textured_frame):
        with pytest.raises(InvalidInputError):
            apply_geometric(textured_frame, "rotation", {"theta_deg": 31.0}, GEO)
        with pytest.raises(InvalidInputError):
            apply_geometric(textured_frame, "shift", {"di_ratio": 0.3, "dj_ratio": 0.0}, GEO)
        with pytest.raises(InvalidInputError):
            apply_geometric(textured_frame, "crop", {"crop_ratio": 0.4}, GEO)

    def test_crop_zooms_center(self):
        # a centered bright square grows when cropping zooms in
        frame = np.zeros((100, 100, 3), dtype=np.uint8)
        frame[40:60, 40:60] = 200
        out = apply_geometric(frame, "crop", {"crop_ratio": 0.5}, GEO)
        assert (out > 100).sum() > (frame > 100).sum() * 2


class TestVisDifficulty:
    def test_identical_frames_zero(self, textured_frame):
        assert vis_difficulty(textured_frame, textured_frame, "photometric").measured == 0.0

    def test_constant_frame_closed_form(self):
        # constant 128 shifted up by 26 everywhere: d = 26/128 exactly
        original = np.full((64, 64, 3), 128, dtype=np.uint8)
        perturbed = np.full((64, 64, 3), 154, dtype=np.uint8)
        report = vis_difficulty(original, perturbed, "photometric")
        assert abs(report.measured - 26.0 / 128.0) < 1e-12

    def test_occlusion_from_mask(self):
        frame = make_textured_frame(224, 224, seed=4)
        out, mask = apply_occlusion(frame, "random_block", {"ratio": 0.25}, 13)
        assert vis_difficulty(frame, out, "occlusion", mask=mask).measured == 0.25

    def test_geometric_parameter_exact(self, textured_frame):
        rep = vis_difficulty(textured_frame, textured_frame, "geometric", {"theta_deg": 15.0}, geometry=GEO)
        assert rep.measured == 0.5
        rep = vis_difficulty(
            textured_frame, textured_frame, "geometric", {"di_ratio": 0.15, "dj_ratio": -0.05}, geometry=GEO
        )
        assert rep.measured == 0.15 / 0.25
        rep = vis_difficulty(textured_frame, textured_frame, "geometric", {"crop_ratio": 0.75}, geometry=GEO)
        assert rep.measured == (1 - 0.75) / (1 - 0.5)

    def test_all_black_original_degenerate(self):
        black = np.zeros((8, 8, 3), dtype=np.uint8)
        with pytest.raises(DegenerateInputError):
            vis_difficulty(black, black, "photometric")

    def test_dimension_mismatch(self, textured_frame):
        other = np.zeros((4, 4, 3), dtype=np.uint8)
        with pytest.raises(InvalidInputError):
            vis_difficulty(textured_frame, other, "photometric")


class TestSeverityToParams:
    def test_rotation_linear(self, textured_frame):
        params = severity_to_params(channel("geometric", "rotation"), 0.5, textured_frame, GEO, seed=1)
        assert abs(params["theta_deg"]) == 15.0

    def test_occlusion_identity_map(self, textured_frame):
        params = severity_to_params(channel("occlusion", "random_block"), 0.25, textured_frame, GEO)
        assert params == {"ratio": 0.25}

    def test_crop_map(self, textured_frame):
        params = severity_to_params(channel("geometric", "crop"), 0.5, textured_frame, GEO)
        assert params == {"crop_ratio": 0.75}

    def test_structural_rejected(self, textured_frame):
        with pytest.raises(InvalidInputError):
            severity_to_params(channel("adversarial_injection", "suffix"), 0.5, textured_frame, GEO)

    def test_color_jitter_map(self, textured_frame):
        params = severity_to_params(channel("photometric", "color_jitter"), 0.5, textured_frame, GEO)
        assert params == {"alpha": 0.4, "beta": 0.4, "delta": 0.4}

    @pytest.mark.parametrize("kind", ["gaussian_noise", "uniform_noise", "speckle_noise"])
    def test_photometric_calibration(self, calibration_frames, kind):
        ch = channel("photometric", kind)
        frame = calibration_frames[1]
        for severity in (0.1, 0.3, 0.5, 0.8):
            params = severity_to_params(ch, severity, frame, GEO, seed=11)
            measured = [
                vis_difficulty(frame, apply_photometric(frame, kind, params, s), "photometric").measured
                for s in range(8)
            ]
            assert abs(float(np.mean(measured)) - severity) <= 0.02

    def test_calibration_failure_is_raised(self):
        # a nearly white frame cannot reach difficulty ~1 with additive noise
        bright = np.full((64, 64, 3), 250, dtype=np.uint8)
        with pytest.raises(CalibrationError):
            vp.calibrate_photometric(bright, "gaussian_noise", 1.0, seed=0)


class TestDynamic:
    def test_realizations_differ_across_frames(self, textured_frame):
        frames = [textured_frame, textured_frame.copy()]
        out = apply_dynamic(frames, "gaussian_noise", 0.5, seed=3)
        assert not np.array_equal(out[0], out[1])
        assert not np.array_equal(out[0], textured_frame)

    def test_zero_severity_identity(self, textured_frame):
        out = apply_dynamic([textured_frame, textured_frame], "gaussian_noise", 0.0, seed=3)
        assert all(np.array_equal(o, textured_frame) for o in out)

    def test_single_frame_matches_photometric_with_derived_seed(self, textured_frame):
        seed = 17
        out = apply_dynamic([textured_frame], "gaussian_noise", 0.5, seed=seed)[0]
        frame_seed = mix_seed(seed, 0)
        params = vp.calibrate_photometric(textured_frame, "gaussian_noise", 0.5, frame_seed)
        direct = apply_photometric(textured_frame, "gaussian_noise", params, frame_seed)
        assert np.array_equal(out, direct)

    def test_empty_sequence_rejected(self):
        with pytest.raises(InvalidInputError):
            apply_dynamic([], "gaussian_noise", 0.5, seed=0)
