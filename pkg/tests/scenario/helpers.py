import json
from pathlib import Path
from typing import Dict

import numpy as np
from PIL import Image


def write_clip(directory: Path, frames: int = 12, size=(16, 12)) -> Path:
    """Write a textured clip with a bright box moving right, plus person masks."""
    width, height = size
    rng = np.random.default_rng(7)
    background = rng.integers(30, 100, size=(height, width, 3), dtype=np.uint8)
    (directory / "frames").mkdir(parents=True)
    (directory / "masks").mkdir(parents=True)
    for t in range(frames):
        frame = background.copy()
        mask = np.zeros((height, width), dtype=np.uint8)
        left = t % (width - 4)
        frame[4:8, left : left + 4] = 240
        mask[4:8, left : left + 4] = 255
        Image.fromarray(frame).save(directory / "frames" / f"{t:06d}.png")
        Image.fromarray(mask).save(directory / "masks" / f"{t:06d}.png")
    return directory


def write_pipeline(path: Path, *steps: dict) -> Path:
    path.write_text(json.dumps({"steps": list(steps)}))
    return path


def parse_choices(stdout: str) -> Dict[str, str]:
    return dict(line.split("=", 1) for line in stdout.splitlines() if "=" in line)


def minimize_args(frames: Path, pipeline: Path, output: Path, *extra) -> list:
    """Arguments of a ``minimize`` run."""
    return [
        "minimize",
        "--input",
        str(frames),
        "--pipeline",
        str(pipeline),
        "--output",
        str(output),
        *(str(arg) for arg in extra),
    ]
