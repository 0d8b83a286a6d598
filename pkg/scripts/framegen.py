"""Write a synthetic clip (static texture, one moving rectangle) and its person masks.

Configured through environment variables:

    FRAMEGEN_OUTPUT   directory to create ``frames/`` and ``masks/`` in (default: ./synthetic)
    FRAMEGEN_FRAMES   number of frames (default: 30)
    FRAMEGEN_SIZE     WIDTHxHEIGHT (default: 64x48)
    FRAMEGEN_SEED     texture seed (default: 24)
    FRAMEGEN_GRAY     write single-channel frames when set
"""

import os
from pathlib import Path

import numpy as np
from PIL import Image

BOX = (12, 16)  # height, width of the moving region
SPEED = 2


def synthetic_clip(frames: int, width: int, height: int, seed: int = 24, gray: bool = False):
    rng = np.random.default_rng(seed)
    channels = 1 if gray else 3
    background = rng.integers(40, 120, size=(height, width, channels), dtype=np.uint8)
    clip = np.repeat(background[np.newaxis], frames, axis=0)
    masks = np.zeros((frames, height, width), dtype=np.uint8)

    box_h, box_w = min(BOX[0], height), min(BOX[1], width)
    top = (height - box_h) // 2
    for t in range(frames):
        left = (t * SPEED) % max(width - box_w + 1, 1)
        clip[t, top : top + box_h, left : left + box_w] = 230
        masks[t, top : top + box_h, left : left + box_w] = 255
    return clip, masks


def write_clip(output: Path, clip: np.ndarray, masks: np.ndarray):
    (output / "frames").mkdir(parents=True, exist_ok=True)
    (output / "masks").mkdir(parents=True, exist_ok=True)
    for t, (frame, mask) in enumerate(zip(clip, masks)):
        if frame.shape[-1] == 1:
            frame = frame[..., 0]
        Image.fromarray(frame).save(output / "frames" / f"{t:06d}.png")
        Image.fromarray(mask).save(output / "masks" / f"{t:06d}.png")


if __name__ == "__main__":
    width, height = (int(v) for v in os.getenv("FRAMEGEN_SIZE", "64x48").lower().split("x"))
    clip, masks = synthetic_clip(
        frames=int(os.getenv("FRAMEGEN_FRAMES", "30")),
        width=width,
        height=height,
        seed=int(os.getenv("FRAMEGEN_SEED", "24")),
        gray=bool(os.getenv("FRAMEGEN_GRAY")),
    )
    write_clip(Path(os.getenv("FRAMEGEN_OUTPUT", "synthetic")), clip, masks)
