"""The 16 visual perturbation channels, the conditional visual difficulty
metric, and the inverse severity-to-parameter calibration.

Frames are uint8 RGB arrays of shape (H, W, 3). Operators that need real
arithmetic work in [0, 1] float64 internally, clip to [0, 1], and
re-quantize with round-half-to-even; masking and shifting operators stay in
integer space so identity cases are byte-exact.

Difficulty is conditional on the degradation mechanism:
normalized L2 distortion for photometric noise, occluded-pixel coverage for
occlusion, and transform magnitude over its admissible bound for geometry.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import (
    DifficultyReport,
    PerturbationChannel,
    geometric_report,
    occlusion_report,
    photometric_report,
    validate_frame,
)
from .errors import CalibrationError, DegenerateInputError, InvalidInputError
from .seeding import mix_seed

MID_GRAY = 128

PHOTOMETRIC_KINDS = ("color_jitter", "gaussian_noise", "uniform_noise", "speckle_noise", "salt_pepper")
OCCLUSION_KINDS = ("random_block", "structured", "erasing", "noise_patch")
GEOMETRIC_KINDS = ("shift", "rotation", "crop")

_PARAM_KEYS = {
    "gaussian_noise": {"sigma"},
    "uniform_noise": {"amplitude"},
    "speckle_noise": {"sigma"},
    "salt_pepper": {"prob"},
    "color_jitter": {"alpha", "beta", "delta"},
    "random_block": {"ratio", "fill"},
    "structured": {"ratio", "fill"},
    "erasing": {"ratio", "fill"},
    "noise_patch": {"ratio"},
    "shift": {"di_ratio", "dj_ratio"},
    "rotation": {"theta_deg"},
    "crop": {"crop_ratio"},
}

_OPTIONAL_KEYS = {"random_block": {"fill"}, "structured": {"fill"}, "erasing": {"fill"}}


@dataclass(frozen=True)
class GeometryConfig:
    """Admissible ranges for the geometric family; difficulty normalizers."""

    theta_max: float = 30.0
    shift_max_ratio: float = 0.25
    crop_min_ratio: float = 0.5

    def __post_init__(self) -> None:
        if self.theta_max <= 0:
            raise InvalidInputError("theta_max must be positive")
        if not 0 < self.crop_min_ratio <= 1:
            raise InvalidInputError("crop_min_ratio must lie in (0, 1]")
        if self.shift_max_ratio <= 0:
            raise InvalidInputError("shift_max_ratio must be positive")


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF)


def _to_float(frame: np.ndarray) -> np.ndarray:
    return frame.astype(np.float64) / 255.0


def _to_uint8(x: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(x, 0.0, 1.0) * 255.0).astype(np.uint8)


def _check_params(kind: str, params: Mapping) -> dict:
    if kind not in _PARAM_KEYS:
        raise InvalidInputError(f"unknown operator kind {kind!r}")
    allowed = _PARAM_KEYS[kind]
    required = allowed - _OPTIONAL_KEYS.get(kind, set())
    given = set(params)
    if not given <= allowed or not required <= given:
        raise InvalidInputError(
            f"params for {kind} must provide {sorted(required)} (got {sorted(given)})"
        )
    return {k: float(v) for k, v in params.items()}


# ---------------------------------------------------------------------------
# Photometric degradation
# ---------------------------------------------------------------------------

def gaussian_noise(frame: np.ndarray, sigma: float, seed: int) -> np.ndarray:
    """Additive per-pixel normal noise; sigma is a fraction of full intensity."""
    validate_frame(frame)
    if sigma == 0:
        return frame.copy()
    eps = _rng(seed).normal(0.0, sigma, frame.shape)
    return _to_uint8(_to_float(frame) + eps)


def uniform_noise(frame: np.ndarray, amplitude: float, seed: int) -> np.ndarray:
    """Additive per-pixel noise bounded by +/- amplitude (full-scale fraction)."""
    validate_frame(frame)
    if amplitude == 0:
        return frame.copy()
    eps = _rng(seed).uniform(-amplitude, amplitude, frame.shape)
    return _to_uint8(_to_float(frame) + eps)


def speckle_noise(frame: np.ndarray, sigma: float, seed: int) -> np.ndarray:
    """Multiplicative intensity distortion: output = x + x * normal(0, sigma^2)."""
    validate_frame(frame)
    if sigma == 0:
        return frame.copy()
    x = _to_float(frame)
    eps = _rng(seed).normal(0.0, sigma, frame.shape)
    return _to_uint8(x + x * eps)


def salt_pepper(frame: np.ndarray, prob: float, seed: int) -> np.ndarray:
    """Each pixel location is forced to black or full intensity with probability prob."""
    validate_frame(frame)
    if not 0.0 <= prob <= 1.0:
        raise InvalidInputError(f"salt-pepper prob must lie in [0, 1], got {prob}")
    if prob == 0:
        return frame.copy()
    h, w = frame.shape[:2]
    rng = _rng(seed)
    hit = rng.random((h, w)) < prob
    salt = rng.random((h, w)) < 0.5
    out = frame.copy()
    out[hit & salt] = 255
    out[hit & ~salt] = 0
    return out


def _smooth3(x: np.ndarray) -> np.ndarray:
    # 3x3 kernel [[1,1,1],[1,5,1],[1,1,1]]/13, border rows/cols left unchanged
    kernel = np.array([[1, 1, 1], [1, 5, 1], [1, 1, 1]], dtype=np.float64) / 13.0
    padded = np.pad(x, ((1, 1), (1, 1), (0, 0)), mode="edge")
    out = np.zeros_like(x)
    h, w = x.shape[:2]
    for di in range(3):
        for dj in range(3):
            out += kernel[di, dj] * padded[di : di + h, dj : dj + w, :]
    out[0, :] = x[0, :]
    out[-1, :] = x[-1, :]
    out[:, 0] = x[:, 0]
    out[:, -1] = x[:, -1]
    return out


def color_jitter(frame: np.ndarray, alpha: float, beta: float, delta: float, seed: int) -> np.ndarray:
    """Brightness, contrast, then sharpness jitter with seeded factors.

    Each factor is drawn from Uniform(1 - strength, 1 + strength); a strength
    of zero fixes its factor at exactly one. Applied brightness-first,
    sharpness-last.
    """
    validate_frame(frame)
    for name, v in (("alpha", alpha), ("beta", beta), ("delta", delta)):
        if not 0.0 <= v <= 1.0:
            raise InvalidInputError(f"color jitter {name} must lie in [0, 1], got {v}")
    if alpha == beta == delta == 0:
        return frame.copy()
    rng = _rng(seed)
    brightness = rng.uniform(1 - delta, 1 + delta)
    contrast = rng.uniform(1 - beta, 1 + beta)
    sharpness = rng.uniform(1 - alpha, 1 + alpha)
    x = _to_float(frame)
    x = x * brightness
    luma = 0.299 * x[..., 0] + 0.587 * x[..., 1] + 0.114 * x[..., 2]
    mean = luma.mean()
    x = mean + (x - mean) * contrast
    smooth = _smooth3(x)
    x = smooth + sharpness * (x - smooth)
    return _to_uint8(x)


def apply_photometric(frame: np.ndarray, kind: str, params: Mapping, seed: int) -> np.ndarray:
    """Dispatch a photometric operator from a serializable params record."""
    if kind not in PHOTOMETRIC_KINDS:
        raise InvalidInputError(f"not a photometric kind: {kind!r}")
    p = _check_params(kind, params)
    if kind == "gaussian_noise":
        return gaussian_noise(frame, p["sigma"], seed)
    if kind == "uniform_noise":
        return uniform_noise(frame, p["amplitude"], seed)
    if kind == "speckle_noise":
        return speckle_noise(frame, p["sigma"], seed)
    if kind == "salt_pepper":
        return salt_pepper(frame, p["prob"], seed)
    return color_jitter(frame, p["alpha"], p["beta"], p["delta"], seed)


# ---------------------------------------------------------------------------
# Physical occlusion
# ---------------------------------------------------------------------------

def _block_dims(ratio: float, height: int, width: int) -> tuple[int, int]:
    """Integer block dims covering ratio * H * W as closely as a square allows."""
    area = ratio * height * width
    side = int(round(math.sqrt(area)))
    h = min(side, height)
    w = min(side, width)
    if h < side <= width:
        w = min(width, int(round(area / h)))
    elif w < side <= height:
        h = min(height, int(round(area / w)))
    return h, w


def _occlude(
    frame: np.ndarray, kind: str, ratio: float, fill: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    height, width = frame.shape[:2]
    mask = np.zeros((height, width), dtype=bool)
    out = frame.copy()
    if ratio == 0:
        return out, mask
    if ratio >= 1.0:
        mask[:, :] = True
    rng = _rng(seed)

    if kind == "structured" and not mask.all():
        # One rectangle per vertical strip: never overlaps, so realized
        # coverage stays within integer rounding of the requested ratio.
        count = 1 + int(3 * ratio)
        per_block = ratio * height * width / count
        for k in range(count):
            strip_left = k * width // count
            strip_width = (k + 1) * width // count - strip_left
            aspect = rng.uniform(0.5, 2.0)
            bw = max(1, min(int(round(math.sqrt(per_block / aspect))), strip_width))
            bh = max(1, min(int(round(per_block / bw)), height))
            if bh == height:
                bw = max(1, min(int(round(per_block / bh)), strip_width))
            top = int(rng.integers(0, height - bh + 1))
            left = strip_left + int(rng.integers(0, strip_width - bw + 1))
            mask[top : top + bh, left : left + bw] = True
    elif not mask.all():
        bh, bw = _block_dims(ratio, height, width)
        if bh == 0 or bw == 0:
            return out, mask
        top = int(rng.integers(0, height - bh + 1))
        left = int(rng.integers(0, width - bw + 1))
        mask[top : top + bh, left : left + bw] = True

    if kind == "noise_patch":
        noise = _to_uint8(rng.uniform(0.0, 1.0, (int(mask.sum()), 3)))
        out[mask] = noise
    else:
        out[mask] = fill
    return out, mask


def apply_occlusion(
    frame: np.ndarray, kind: str, params: Mapping, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Mask a region of the frame; returns the frame and the exact occlusion mask.

    random_block and erasing fill one square block (mid-gray / constant);
    structured fills several non-overlapping rectangles when placement
    permits; noise_patch fills one square with per-pixel uniform noise.
    A ratio of 1 always covers the whole frame.
    """
    validate_frame(frame)
    if kind not in OCCLUSION_KINDS:
        raise InvalidInputError(f"not an occlusion kind: {kind!r}")
    p = _check_params(kind, params)
    ratio = p["ratio"]
    if not 0.0 <= ratio <= 1.0:
        raise InvalidInputError(f"occlusion ratio must lie in [0, 1], got {ratio}")
    default_fill = 0 if kind == "erasing" else MID_GRAY
    fill = int(p.get("fill", default_fill))
    if not 0 <= fill <= 255:
        raise InvalidInputError(f"fill intensity must lie in [0, 255], got {fill}")
    return _occlude(frame, kind, ratio, fill, seed)


# ---------------------------------------------------------------------------
# Geometry shifts
# ---------------------------------------------------------------------------

def _bilinear(x: np.ndarray, src_i: np.ndarray, src_j: np.ndarray) -> np.ndarray:
    height, width = x.shape[:2]
    valid = (src_i >= 0) & (src_i <= height - 1) & (src_j >= 0) & (src_j <= width - 1)
    i0 = np.clip(np.floor(src_i).astype(np.int64), 0, height - 1)
    j0 = np.clip(np.floor(src_j).astype(np.int64), 0, width - 1)
    i1 = np.minimum(i0 + 1, height - 1)
    j1 = np.minimum(j0 + 1, width - 1)
    fi = np.clip(src_i - i0, 0.0, 1.0)[..., None]
    fj = np.clip(src_j - j0, 0.0, 1.0)[..., None]
    out = (
        x[i0, j0] * (1 - fi) * (1 - fj)
        + x[i1, j0] * fi * (1 - fj)
        + x[i0, j1] * (1 - fi) * fj
        + x[i1, j1] * fi * fj
    )
    out[~valid] = 0.0
    return out


def shift_image(
    frame: np.ndarray,
    di_ratio: float,
    dj_ratio: float,
    config: Optional[GeometryConfig] = None,
) -> np.ndarray:
    """Planar translation by (round(di_ratio*H), round(dj_ratio*W)), black fill."""
    validate_frame(frame)
    config = config or GeometryConfig()
    if abs(di_ratio) > config.shift_max_ratio or abs(dj_ratio) > config.shift_max_ratio:
        raise InvalidInputError(
            f"shift ratios must lie within +/-{config.shift_max_ratio}"
        )
    height, width = frame.shape[:2]
    di = round(di_ratio * height)
    dj = round(dj_ratio * width)
    out = np.zeros_like(frame)
    src_i = slice(max(0, -di), height - max(0, di))
    dst_i = slice(max(0, di), height - max(0, -di))
    src_j = slice(max(0, -dj), width - max(0, dj))
    dst_j = slice(max(0, dj), width - max(0, -dj))
    out[dst_i, dst_j] = frame[src_i, src_j]
    return out


def rotate_image(
    frame: np.ndarray, theta_deg: float, config: Optional[GeometryConfig] = None
) -> np.ndarray:
    """In-plane rotation about the image center, bilinear, black fill."""
    validate_frame(frame)
    config = config or GeometryConfig()
    if abs(theta_deg) > config.theta_max:
        raise InvalidInputError(
            f"|theta| must not exceed theta_max={config.theta_max}, got {theta_deg}"
        )
    if theta_deg == 0:
        return frame.copy()
    height, width = frame.shape[:2]
    theta = math.radians(theta_deg)
    ci, cj = (height - 1) / 2.0, (width - 1) / 2.0
    ii, jj = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    di = ii - ci
    dj = jj - cj
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    src_i = cos_t * di + sin_t * dj + ci
    src_j = -sin_t * di + cos_t * dj + cj
    return _to_uint8(_bilinear(_to_float(frame), src_i, src_j))


def crop_image(
    frame: np.ndarray, crop_ratio: float, config: Optional[GeometryConfig] = None
) -> np.ndarray:
    """Crop the central window of side fraction crop_ratio, resize back bilinearly."""
    validate_frame(frame)
    config = config or GeometryConfig()
    if not config.crop_min_ratio <= crop_ratio <= 1.0:
        raise InvalidInputError(
            f"crop_ratio must lie in [{config.crop_min_ratio}, 1], got {crop_ratio}"
        )
    if crop_ratio == 1.0:
        return frame.copy()
    height, width = frame.shape[:2]
    ch = max(1, round(crop_ratio * height))
    cw = max(1, round(crop_ratio * width))
    top = (height - ch) // 2
    left = (width - cw) // 2
    scale_i = (ch - 1) / (height - 1) if height > 1 else 0.0
    scale_j = (cw - 1) / (width - 1) if width > 1 else 0.0
    src_i = top + np.arange(height) * scale_i
    src_j = left + np.arange(width) * scale_j
    grid_i, grid_j = np.meshgrid(src_i, src_j, indexing="ij")
    return _to_uint8(_bilinear(_to_float(frame), grid_i, grid_j))


def apply_geometric(
    frame: np.ndarray, kind: str, params: Mapping, config: Optional[GeometryConfig] = None
) -> np.ndarray:
    """Dispatch a geometric operator from a serializable params record."""
    if kind not in GEOMETRIC_KINDS:
        raise InvalidInputError(f"not a geometric kind: {kind!r}")
    p = _check_params(kind, params)
    if kind == "shift":
        return shift_image(frame, p["di_ratio"], p["dj_ratio"], config)
    if kind == "rotation":
        return rotate_image(frame, p["theta_deg"], config)
    return crop_image(frame, p["crop_ratio"], config)


# ---------------------------------------------------------------------------
# Dynamic artifacts
# ---------------------------------------------------------------------------

def apply_dynamic(
    frames: Sequence[np.ndarray],
    base_kind: str,
    severity: float = 0.5,
    seed: int = 0,
) -> list[np.ndarray]:
    """Apply a photometric corruption with per-frame noise realizations.

    Every frame t is perturbed at the same severity with a seed derived from
    (seed, t), so consecutive frames carry different noise patterns. Severity
    defaults to the fixed intermediate level 0.5.
    """
    if len(frames) == 0:
        raise InvalidInputError("dynamic artifacts need at least one frame")
    if base_kind not in ("gaussian_noise", "uniform_noise", "speckle_noise", "salt_pepper"):
        raise InvalidInputError(f"dynamic artifacts base kind must be a noise kind, got {base_kind!r}")
    if not 0.0 <= severity <= 1.0:
        raise InvalidInputError(f"severity must lie in [0, 1], got {severity}")
    out = []
    for t, frame in enumerate(frames):
        frame_seed = mix_seed(seed, t)
        if severity == 0:
            out.append(frame.copy())
            continue
        params = calibrate_photometric(frame, base_kind, severity, frame_seed)
        out.append(apply_photometric(frame, base_kind, params, frame_seed))
    return out


# ---------------------------------------------------------------------------
# Difficulty measurement
# ---------------------------------------------------------------------------

def vis_difficulty(
    original: np.ndarray,
    perturbed: np.ndarray,
    family: str,
    params: Optional[Mapping] = None,
    *,
    mask: Optional[np.ndarray] = None,
    geometry: Optional[GeometryConfig] = None,
) -> DifficultyReport:
    """Measure visual difficulty for a perturbation family.

    Photometric (and dynamic) use the normalized L2 pixel distance; occlusion
    the coverage of the returned mask; geometric the exact transform
    magnitude over its admissible bound, read from params.
    """
    validate_frame(original)
    validate_frame(perturbed)
    if original.shape != perturbed.shape:
        raise InvalidInputError(
            f"frame dimensions differ: {original.shape} vs {perturbed.shape}"
        )
    geometry = geometry or GeometryConfig()

    if family in ("photometric", "dynamic_artifacts"):
        base = _to_float(original)
        base_norm = float(np.linalg.norm(base.ravel()))
        if base_norm == 0.0:
            raise DegenerateInputError("photometric difficulty undefined for an all-black frame")
        delta_norm = float(np.linalg.norm((_to_float(perturbed) - base).ravel()))
        return photometric_report(delta_norm, base_norm)

    if family == "occlusion":
        if mask is None:
            raise InvalidInputError("occlusion difficulty requires the occlusion mask")
        if mask.shape != original.shape[:2]:
            raise InvalidInputError("mask dimensions must match the frame")
        return occlusion_report(int(mask.sum()), int(mask.size))

    if family == "geometric":
        if not params:
            raise InvalidInputError("geometric difficulty requires the transform params")
        if "theta_deg" in params:
            return geometric_report(float(params["theta_deg"]), geometry.theta_max)
        if "di_ratio" in params or "dj_ratio" in params:
            magnitude = max(abs(float(params.get("di_ratio", 0.0))), abs(float(params.get("dj_ratio", 0.0))))
            return geometric_report(magnitude, geometry.shift_max_ratio)
        if "crop_ratio" in params:
            return geometric_report(
                1.0 - float(params["crop_ratio"]), 1.0 - geometry.crop_min_ratio
            )
        raise InvalidInputError(f"unrecognized geometric params: {sorted(params)}")

    raise InvalidInputError(f"unknown visual family: {family!r}")


# ---------------------------------------------------------------------------
# Severity -> parameter calibration
# ---------------------------------------------------------------------------

_NOISE_KNOBS = {
    "gaussian_noise": ("sigma", 8.0),
    "speckle_noise": ("sigma", 64.0),
    "uniform_noise": ("amplitude", 8.0),
    "salt_pepper": ("prob", 1.0),
}

CALIBRATION_REALIZATIONS = 8
CALIBRATION_TOLERANCE = 0.02
_CALIBRATION_TARGET = 0.005
_MAX_ITERATIONS = 40


def _calibration_seeds(seed: int) -> list[int]:
    return [mix_seed(seed, "calibration", k) for k in range(CALIBRATION_REALIZATIONS)]


def calibrate_photometric(
    frame: np.ndarray, kind: str, severity: float, seed: int
) -> dict[str, float]:
    """Find the noise parameter whose mean measured difficulty matches severity.

    Bisects on the parameter with the mean taken over 8 seeded realizations;
    the analytic additive-noise guess sigma = s * |I|_2 / sqrt(N) seeds the
    bracket. Raises CalibrationError if 40 evaluations cannot land within
    +/-0.02 of the requested severity.
    """
    if kind not in _NOISE_KNOBS:
        raise InvalidInputError(f"calibration only applies to noise kinds, got {kind!r}")
    knob, cap = _NOISE_KNOBS[kind]
    if severity == 0:
        return {knob: 0.0}
    seeds = _calibration_seeds(seed)

    def measure(value: float) -> float:
        params = {knob: value}
        total = 0.0
        for s in seeds:
            out = apply_photometric(frame, kind, params, s)
            total += vis_difficulty(frame, out, "photometric").measured
        return total / len(seeds)

    base_norm = float(np.linalg.norm(_to_float(frame).ravel()))
    if base_norm == 0.0:
        raise DegenerateInputError("cannot calibrate photometric noise on an all-black frame")
    if kind == "gaussian_noise":
        guess = severity * base_norm / math.sqrt(frame.size)
    elif kind == "uniform_noise":
        guess = severity * base_norm * math.sqrt(3.0) / math.sqrt(frame.size)
    elif kind == "speckle_noise":
        guess = severity
    else:
        guess = min(cap, severity * severity)

    budget = _MAX_ITERATIONS
    lo = 0.0
    hi = min(cap, max(guess, 1e-4))
    f_hi = measure(hi)
    budget -= 1
    best_v, best_f = hi, f_hi
    while f_hi < severity and hi < cap and budget > 0:
        lo = hi
        hi = min(cap, hi * 2.0)
        f_hi = measure(hi)
        budget -= 1
        if abs(f_hi - severity) < abs(best_f - severity):
            best_v, best_f = hi, f_hi
    while budget > 0 and abs(best_f - severity) > _CALIBRATION_TARGET:
        mid = (lo + hi) / 2.0
        f_mid = measure(mid)
        budget -= 1
        if abs(f_mid - severity) < abs(best_f - severity):
            best_v, best_f = mid, f_mid
        if f_mid < severity:
            lo = mid
        else:
            hi = mid
    if abs(best_f - severity) > CALIBRATION_TOLERANCE:
        raise CalibrationError(
            f"{kind}: no parameter reaches difficulty {severity:.3f} on this frame "
            f"(best {best_f:.3f} at {knob}={best_v:.4f})"
        )
    return {knob: best_v}


def severity_to_params(
    channel: PerturbationChannel,
    severity: float,
    frame: Optional[np.ndarray] = None,
    config: Optional[GeometryConfig] = None,
    seed: int = 0,
) -> dict[str, float]:
    """Invert the difficulty metric: severity in [0, 1] to operator params.

    Occlusion maps severity to the coverage ratio directly; geometric scales
    linearly onto the admissible range (signs seed-chosen); photometric noise
    is calibrated against the given frame; color jitter maps severity onto
    strength 0.8 * s for all three factors.
    """
    if channel.structural:
        raise InvalidInputError(f"structural channel {channel} has no severity mapping")
    if not 0.0 <= severity <= 1.0:
        raise InvalidInputError(f"severity must lie in [0, 1], got {severity}")
    config = config or GeometryConfig()

    if channel.family == "occlusion":
        return {"ratio": severity}
    if channel.family == "geometric":
        rng = random.Random(mix_seed(seed, "sign"))
        if channel.kind == "rotation":
            sign = 1.0 if rng.random() < 0.5 else -1.0
            return {"theta_deg": sign * severity * config.theta_max}
        if channel.kind == "shift":
            sign_i = 1.0 if rng.random() < 0.5 else -1.0
            sign_j = 1.0 if rng.random() < 0.5 else -1.0
            return {
                "di_ratio": sign_i * severity * config.shift_max_ratio,
                "dj_ratio": sign_j * severity * config.shift_max_ratio,
            }
        return {"crop_ratio": 1.0 - severity * (1.0 - config.crop_min_ratio)}
    if channel.family in ("photometric", "dynamic_artifacts"):
        if channel.kind == "color_jitter":
            strength = 0.8 * severity
            return {"alpha": strength, "beta": strength, "delta": strength}
        if frame is None:
            raise InvalidInputError("photometric calibration requires a reference frame")
        return calibrate_photometric(frame, channel.kind, severity, seed)
    raise InvalidInputError(f"severity mapping undefined for {channel}")


def apply_to_frame(
    frame: np.ndarray,
    channel: PerturbationChannel,
    params: Mapping,
    seed: int,
    config: Optional[GeometryConfig] = None,
) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Apply a resolved visual perturbation to one frame.

    Returns (frame, occlusion mask or None). Dynamic-artifact channels are
    applied as their photometric base kind; sequence-level seed derivation is
    the caller's job (see apply_dynamic).
    """
    if channel.family in ("photometric", "dynamic_artifacts"):
        return apply_photometric(frame, channel.kind, params, seed), None
    if channel.family == "occlusion":
        return apply_occlusion(frame, channel.kind, params, seed)
    if channel.family == "geometric":
        return apply_geometric(frame, channel.kind, params, config), None
    raise InvalidInputError(f"not a visual channel: {channel}")
