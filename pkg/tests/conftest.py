from __future__ import annotations

import numpy as np
import pytest
from PIL import Image

from perturbkit import PayloadLibrary, render_instruction
from perturbkit.pipeline import EpisodeEntry, save_dataset

CREAM_TASK = "pick up the cream cheese and place it in the basket"


@pytest.fixture(scope="session")
def library():
    return PayloadLibrary.default()


@pytest.fixture(scope="session")
def cream_instruction():
    return render_instruction(CREAM_TASK)


def make_smooth_frame(h=224, w=224):
    """Gradient-plus-waves frame; mid intensity, low high-frequency content."""
    i, j = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    r = 64 + 96 * i / h + 32 * np.sin(j / 17.0)
    g = 96 + 64 * j / w + 24 * np.cos(i / 23.0)
    b = 128 + 48 * np.sin((i + j) / 31.0)
    return np.rint(np.clip(np.stack([r, g, b], -1), 0, 255)).astype(np.uint8)


def make_textured_frame(h=128, w=128, seed=42, lo=48, hi=208):
    rng = np.random.default_rng(seed)
    return rng.uniform(lo, hi, (h, w, 3)).astype(np.uint8)


def make_blocks_frame(h=128, w=128):
    """Piecewise-constant blocks in [80, 176]."""
    frame = np.full((h, w, 3), 128, dtype=np.uint8)
    frame[: h // 2, : w // 2] = (80, 112, 144)
    frame[: h // 2, w // 2 :] = (176, 144, 112)
    frame[h // 2 :, : w // 2] = (112, 176, 96)
    frame[h // 2 :, w // 2 :] = (144, 96, 160)
    return frame


@pytest.fixture(scope="session")
def smooth_frame():
    return make_smooth_frame()


@pytest.fixture(scope="session")
def textured_frame():
    return make_textured_frame()


@pytest.fixture(scope="session")
def calibration_frames():
    """Three mid-intensity frames with headroom for difficulty up to 0.8."""
    return [make_smooth_frame(128, 128), make_textured_frame(128, 128), make_blocks_frame(128, 128)]


def build_dataset(root, n_episodes=3, frames_per_episode=2, size=48, seed=0):
    """Write a tiny PNG dataset plus manifest under root; returns manifest path."""
    rng = np.random.default_rng(seed)
    episodes = []
    tasks = [
        "pick up the cream cheese and place it in the basket",
        "open the drawer and put the bowl inside",
        "push the plate to the left side of the table",
        "stack the cube on top of the bottle",
    ]
    for k in range(n_episodes):
        ep_dir = root / f"ep{k}"
        ep_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        for i in range(frames_per_episode):
            arr = rng.uniform(40, 215, (size, size, 3)).astype(np.uint8)
            path = ep_dir / f"f{i}.png"
            Image.fromarray(arr).save(path)
            paths.append(f"ep{k}/f{i}.png")
        episodes.append(
            EpisodeEntry(
                episode_id=f"ep{k}",
                suite="suite_a",
                task_text=tasks[k % len(tasks)],
                frame_paths=tuple(paths),
            )
        )
    manifest = root / "manifest.jsonl"
    save_dataset("tiny", episodes, manifest)
    return manifest
