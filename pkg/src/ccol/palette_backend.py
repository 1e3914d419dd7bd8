"""Built-in backends wrapped as an external-protocol executable.

Usage: python -m ccol.palette_backend <job.json>

Reads the job, runs the in-process palette generator or LUT propagator,
and writes protocol-conformant outputs. Exists so the external-backend
path can be tested against a backend whose results are byte-identical
to the in-process calls.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

from ccol.backends import ROLE_GENERATOR, ROLE_PROPAGATOR, exemplar_propagate, palette_colorize
from ccol.frameio import clip_from_frames, load_frame, save_frame


def run_job(job_path: str | Path) -> None:
    job_path = Path(job_path)
    job = json.loads(job_path.read_text())
    work_dir = job_path.parent
    out_dir = work_dir / "output"
    out_dir.mkdir(exist_ok=True)
    role = job["role"]
    if role == ROLE_GENERATOR:
        gray = load_frame(work_dir / job["input_frames"][0])
        cands = palette_colorize(
            gray, job.get("caption"), job["candidate_count"], job["seed"]
        )
        for i in range(len(cands)):
            save_frame(cands.frames[i], out_dir / f"candidate_{i:02d}.png")
    elif role == ROLE_PROPAGATOR:
        frames = [load_frame(work_dir / p) for p in job["input_frames"]]
        clip = clip_from_frames(frames, job.get("fps") or 25.0)
        exemplar = load_frame(work_dir / job["exemplar_path"])
        alpha = job.get("alpha")
        result = exemplar_propagate(clip, exemplar, 0.5 if alpha is None else alpha)
        for i in range(result.frame_count):
            save_frame(result.frames[i], out_dir / f"frame_{i:06d}.png")
    else:
        raise ValueError(f"unknown role {role!r}")


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print("usage: python -m ccol.palette_backend <job.json>", file=sys.stderr)
        return 1
    try:
        run_job(argv[0])
    except Exception as e:
        print(f"palette backend failed: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
