"""Job execution: protocol IO plus the mock model hooks.

Protocol: invoked as ``<adapter> <job.json>``. The job's work directory
holds ``input/frame_%06d.png`` (and ``exemplar.png`` for propagator
jobs); outputs go to ``output/candidate_%02d.png`` for the
candidate_generator role or ``output/frame_%06d.png`` for the propagator
role. Exit 0 on success, 1 on a malformed job or model failure (message
on stderr).

The mock generator tints the grayscale input with hues keyed on a hash
of the caption (one hue step per candidate); the mock propagator washes
every frame with the exemplar's mean chroma. Both are deterministic. A
real model is supplied as ``--model package.module:function`` with the
same call signature as the mocks.
"""

from __future__ import annotations

import argparse
import colorsys
import hashlib
import importlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from PIL import Image

ROLE_GENERATOR = "candidate_generator"
ROLE_PROPAGATOR = "propagator"

# hook(job, input_frames, exemplar_or_none) -> list of output frames
ModelHook = Callable[[dict, list[np.ndarray], Optional[np.ndarray]], list[np.ndarray]]


@dataclass
class AdapterConfig:
    model: str = "mock"  # "mock" or "package.module:function"
    device: str = "cpu"  # hint passed through to user-supplied hooks


class JobError(Exception):
    pass


def _load_png(path: Path) -> np.ndarray:
    if not path.is_file():
        raise JobError(f"missing input image: {path}")
    return np.asarray(Image.open(path).convert("RGB"), dtype=np.uint8)


def _save_png(frame: np.ndarray, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(frame.astype(np.uint8), mode="RGB").save(path, format="PNG")


def _caption_hues(caption: str, count: int) -> list[float]:
    digest = hashlib.md5(caption.encode("utf-8")).hexdigest()
    base = int(digest[:8], 16) % 360
    return [(base + 137 * i) % 360 for i in range(count)]


def mock_generator(job: dict, inputs: list[np.ndarray], exemplar) -> list[np.ndarray]:
    """Hue-tint the input, one hue per candidate, keyed on the caption."""
    gray = inputs[0].astype(np.float64)
    outputs = []
    for hue in _caption_hues(job.get("caption") or "", job["candidate_count"]):
        r, g, b = colorsys.hsv_to_rgb(hue / 360.0, 0.35, 1.0)
        tint = np.array([r, g, b])
        outputs.append(np.clip(gray * tint, 0, 255).astype(np.uint8))
    return outputs


def mock_propagator(job: dict, inputs: list[np.ndarray], exemplar) -> list[np.ndarray]:
    """Wash every frame with the exemplar's mean chroma (YCbCr offsets)."""
    ex = exemplar.astype(np.float64)
    y_ex = 0.299 * ex[..., 0] + 0.587 * ex[..., 1] + 0.114 * ex[..., 2]
    cb = float(np.mean(0.564 * (ex[..., 2] - y_ex)))
    cr = float(np.mean(0.713 * (ex[..., 0] - y_ex)))
    outputs = []
    for frame in inputs:
        y = frame.astype(np.float64).mean(axis=-1)
        r = y + 1.403 * cr
        g = y - 0.344 * cb - 0.714 * cr
        b = y + 1.773 * cb
        outputs.append(np.clip(np.stack([r, g, b], axis=-1), 0, 255).astype(np.uint8))
    return outputs


def _resolve_hook(config: AdapterConfig, role: str) -> ModelHook:
    if config.model == "mock":
        return mock_generator if role == ROLE_GENERATOR else mock_propagator
    module_name, _, attr = config.model.partition(":")
    if not attr:
        raise JobError(f"model hook must look like package.module:function, got {config.model!r}")
    try:
        hook = getattr(importlib.import_module(module_name), attr)
    except (ImportError, AttributeError) as e:
        raise JobError(f"cannot load model hook {config.model!r}: {e}") from e
    return hook


def run_job(job_path: str | Path, config: AdapterConfig | None = None) -> None:
    config = config or AdapterConfig()
    job_path = Path(job_path)
    if not job_path.is_file():
        raise JobError(f"job file not found: {job_path}")
    try:
        job = json.loads(job_path.read_text())
    except json.JSONDecodeError as e:
        raise JobError(f"job file is not valid JSON: {e}") from e

    role = job.get("role")
    if role not in (ROLE_GENERATOR, ROLE_PROPAGATOR):
        raise JobError(f"unknown or missing role: {role!r}")
    frames_rel = job.get("input_frames")
    if not frames_rel:
        raise JobError("job has no input_frames")
    if role == ROLE_GENERATOR:
        if job.get("caption") is None:
            raise JobError("candidate_generator job has no caption")
        count = job.get("candidate_count")
        if not isinstance(count, int) or count < 1:
            raise JobError(f"bad candidate_count: {count!r}")
    if role == ROLE_PROPAGATOR and not job.get("exemplar_path"):
        raise JobError("propagator job has no exemplar_path")

    work_dir = job_path.parent
    inputs = [_load_png(work_dir / rel) for rel in frames_rel]
    exemplar = None
    if role == ROLE_PROPAGATOR:
        exemplar = _load_png(work_dir / job["exemplar_path"])

    outputs = _resolve_hook(config, role)(job, inputs, exemplar)

    out_dir = work_dir / "output"
    if role == ROLE_GENERATOR:
        if len(outputs) != job["candidate_count"]:
            raise JobError(
                f"model returned {len(outputs)} candidates, job wants {job['candidate_count']}"
            )
        for i, frame in enumerate(outputs):
            _save_png(frame, out_dir / f"candidate_{i:02d}.png")
    else:
        if len(outputs) != len(inputs):
            raise JobError(f"model returned {len(outputs)} frames for {len(inputs)} inputs")
        for i, frame in enumerate(outputs):
            _save_png(frame, out_dir / f"frame_{i:06d}.png")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="colorizer-adapter", description=__doc__)
    parser.add_argument("job", help="path to job.json")
    parser.add_argument("--model", default="mock", help="mock or package.module:function")
    parser.add_argument("--device", default="cpu", help="device hint for real models")
    args = parser.parse_args(argv)
    try:
        run_job(args.job, AdapterConfig(model=args.model, device=args.device))
    except JobError as e:
        print(f"adapter error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        print(f"adapter error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
