"""End-to-end pipeline execution and metric reporting.

Dataflow: load clip -> desaturate (keeping the color original as ground
truth when the input is color) -> generate candidates from the configured
frame -> select an exemplar -> propagate -> save the output clip and an
auditable run record. Ablation modes: ``no_exemplar`` skips selection and
propagates with a neutral gray exemplar; ``per_frame_only`` colorizes
every frame independently with the candidate backend (seed advanced per
frame) and no propagation.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ccol.backends import (
    DEFAULT_ALPHA,
    exemplar_propagate,
    palette_colorize,
    run_external_backend,
    write_generator_job,
    write_propagator_job,
)
from ccol.color import desaturate, is_grayscale
from ccol.errors import CcolError, DimensionMismatchError, StageError
from ccol.frameio import (
    Clip,
    ClipManifest,
    clip_from_frames,
    load_clip,
    load_ground_truth,
    load_manifest,
    save_clip,
    save_frame,
)
from ccol.metrics import (
    FVD_WINDOW,
    FeatureSet,
    UNIT_CLIP,
    UNIT_FRAME,
    clip_windows,
    fid,
    fvd,
    psnr,
    ssim,
    toy_clip_features,
    toy_frame_features,
)
from ccol.quality import ExternalScorer, QualityModel, fit_quality_model, make_face_scorer
from ccol.selection import (
    METHOD_BN,
    METHOD_FIQ,
    CandidateSet,
    ExemplarChoice,
    apply_override,
    select_exemplar,
    select_exemplar_bn,
)

ABLATION_FULL = "full"
ABLATION_NO_EXEMPLAR = "no_exemplar"
ABLATION_PER_FRAME = "per_frame_only"

SELECTION_FIXED = "fixed-index"


@dataclass
class BackendSpec:
    """Which implementation fills a pipeline slot: built-in or external."""

    kind: str = "builtin"  # builtin | external
    command: Optional[list[str]] = None
    timeout: float = 600.0

    def __post_init__(self) -> None:
        if self.kind not in ("builtin", "external"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "external" and not self.command:
            raise ValueError("external backend needs a command")

    @classmethod
    def from_json(cls, d: Optional[dict]) -> "BackendSpec":
        if d is None:
            return cls()
        return cls(
            kind=d.get("kind", "builtin"),
            command=d.get("command"),
            timeout=d.get("timeout", 600.0),
        )

    def to_json_dict(self) -> dict:
        return {"kind": self.kind, "command": self.command, "timeout": self.timeout}


@dataclass
class PipelineConfig:
    """Everything one colorization run needs, JSON-serializable."""

    manifest_path: str
    output_dir: str
    caption: Optional[str] = None          # overrides the manifest caption
    candidate_backend: BackendSpec = field(default_factory=BackendSpec)
    candidate_count: int = 8
    candidate_frame_index: int = 0
    seed: int = 0
    selection_method: str = METHOD_FIQ     # fiq | bn | fixed-index
    fixed_index: Optional[int] = None
    scorer: Optional[dict] = None          # external-scorer config for fiq
    niqe_model_path: Optional[str] = None
    brisque_model_path: Optional[str] = None
    propagator_backend: BackendSpec = field(default_factory=BackendSpec)
    alpha: float = DEFAULT_ALPHA
    ablation: str = ABLATION_FULL
    method_label: Optional[str] = None     # row label for the metric report

    def __post_init__(self) -> None:
        if self.candidate_count < 1:
            raise ValueError(f"candidate_count must be >= 1, got {self.candidate_count}")
        if self.selection_method not in (METHOD_FIQ, METHOD_BN, SELECTION_FIXED):
            raise ValueError(f"unknown selection method {self.selection_method!r}")
        if self.selection_method == SELECTION_FIXED and self.fixed_index is None:
            raise ValueError("fixed-index selection needs fixed_index")
        if self.ablation not in (ABLATION_FULL, ABLATION_NO_EXEMPLAR, ABLATION_PER_FRAME):
            raise ValueError(f"unknown ablation mode {self.ablation!r}")

    @classmethod
    def from_json_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        d["candidate_backend"] = BackendSpec.from_json(d.get("candidate_backend"))
        d["propagator_backend"] = BackendSpec.from_json(d.get("propagator_backend"))
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_json_dict(json.loads(Path(path).read_text()))

    def to_json_dict(self) -> dict:
        d = dict(self.__dict__)
        d["candidate_backend"] = self.candidate_backend.to_json_dict()
        d["propagator_backend"] = self.propagator_backend.to_json_dict()
        return d


@dataclass
class MetricRow:
    """One method's evaluation results, shaped like a quantitative-table row."""

    method: str
    psnr: float
    ssim: float
    fid: float
    fvd: float

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "psnr": "inf" if math.isinf(self.psnr) else self.psnr,
            "ssim": self.ssim,
            "fid": self.fid,
            "fvd": self.fvd,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "MetricRow":
        p = d["psnr"]
        return cls(
            method=d["method"],
            psnr=float("inf") if p == "inf" else float(p),
            ssim=float(d["ssim"]),
            fid=float(d["fid"]),
            fvd=float(d["fvd"]),
        )


@dataclass
class MetricReport:
    """Per-method metric rows for one dataset."""

    dataset: str
    rows: list[MetricRow]

    def to_json_dict(self) -> dict:
        return {"dataset": self.dataset, "rows": [r.to_json_dict() for r in self.rows]}

    @classmethod
    def from_json_dict(cls, d: dict) -> "MetricReport":
        return cls(
            dataset=d["dataset"],
            rows=[MetricRow.from_json_dict(r) for r in d["rows"]],
        )

    def format_table(self) -> str:
        headers = ["Dataset", "Method", "PSNR ^", "SSIM ^", "FID v", "FVD v"]
        body = []
        for r in self.rows:
            body.append(
                [
                    self.dataset,
                    r.method,
                    "inf" if math.isinf(r.psnr) else f"{r.psnr:.2f}",
                    f"{r.ssim:.4f}",
                    f"{r.fid:.4f}",
                    f"{r.fvd:.4f}",
                ]
            )
        widths = [max(len(h), *(len(row[i]) for row in body)) if body else len(h)
                  for i, h in enumerate(headers)]
        def fmt(row):
            return "  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip()
        lines = [fmt(headers), fmt(["-" * w for w in widths])]
        lines += [fmt(row) for row in body]
        return "\n".join(lines)


@dataclass
class RunRecord:
    """Append-only audit record of one pipeline run."""

    config: dict
    stages: list[dict] = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    exemplar: Optional[dict] = None
    output_manifest: Optional[str] = None
    metrics: Optional[dict] = None

    def to_json_dict(self) -> dict:
        return {
            "config": self.config,
            "stages": self.stages,
            "timings": self.timings,
            "exemplar": self.exemplar,
            "output_manifest": self.output_manifest,
            "metrics": self.metrics,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "RunRecord":
        return cls(**json.loads(Path(path).read_text()))


def _generate_candidates(
    cfg: PipelineConfig,
    gray_frame: np.ndarray,
    caption: Optional[str],
    seed: int,
    work_root: Path,
    count: Optional[int] = None,
) -> CandidateSet:
    n = cfg.candidate_count if count is None else count
    if cfg.candidate_backend.kind == "builtin":
        return palette_colorize(gray_frame, caption, n, seed)
    work = work_root / f"generator-{seed}"
    job = write_generator_job(work, gray_frame, caption or "", n, seed)
    return run_external_backend(job, cfg.candidate_backend.command, cfg.candidate_backend.timeout)


def _propagate(cfg: PipelineConfig, gray_clip: Clip, exemplar: np.ndarray, work_root: Path) -> Clip:
    if cfg.propagator_backend.kind == "builtin":
        return exemplar_propagate(gray_clip, exemplar, cfg.alpha)
    work = work_root / "propagator"
    job = write_propagator_job(work, gray_clip, exemplar, cfg.alpha)
    return run_external_backend(job, cfg.propagator_backend.command, cfg.propagator_backend.timeout)


def _make_scorer(cfg: PipelineConfig):
    if cfg.scorer is not None:
        return ExternalScorer.from_config(cfg.scorer)
    return make_face_scorer()


def _bn_models(cfg: PipelineConfig, gray_clip: Clip) -> tuple[QualityModel, QualityModel]:
    # Without configured model files, fit pristine statistics from the
    # input clip itself: the only in-domain corpus available at run time.
    if cfg.niqe_model_path:
        niqe_model = QualityModel.load(cfg.niqe_model_path)
    else:
        niqe_model = fit_quality_model(list(gray_clip.frames))
    if cfg.brisque_model_path:
        brisque_model = QualityModel.load(cfg.brisque_model_path)
    else:
        brisque_model = niqe_model
    return niqe_model, brisque_model


def _run_stage(record: RunRecord, record_path: Path, name: str, fn, *, fatal: bool = True):
    """Run one stage, recording timing and completion/error in the record."""
    t0 = time.perf_counter()
    try:
        result = fn()
    except Exception as e:
        record.timings[name] = time.perf_counter() - t0
        record.stages.append({"stage": name, "status": "error", "error": str(e)})
        record.save(record_path)
        if fatal:
            raise StageError(name, e) from e
        return None
    record.timings[name] = time.perf_counter() - t0
    record.stages.append({"stage": name, "status": "completed"})
    record.save(record_path)
    return result


def run_pipeline(cfg: PipelineConfig) -> RunRecord:
    """Execute the configured dataflow and write run.json + output frames.

    Stage errors are recorded in the run record with the stage name;
    partial outputs stay on disk for debugging. A failing metric
    evaluation does not discard a completed colorization.
    """
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    record = RunRecord(config=cfg.to_json_dict())
    record_path = out_dir / "run.json"

    def load_inputs():
        manifest = load_manifest(cfg.manifest_path)
        return load_clip(manifest), load_ground_truth(manifest)

    clip, truth = _run_stage(record, record_path, "load", load_inputs)

    def to_gray():
        if all(is_grayscale(clip.frames[i]) for i in range(clip.frame_count)):
            return clip, truth
        gray_frames = [desaturate(clip.frames[i]) for i in range(clip.frame_count)]
        gray = clip_from_frames(gray_frames, clip.fps, clip.caption, clip.name)
        return gray, truth if truth is not None else clip

    gray_clip, truth = _run_stage(record, record_path, "desaturate", to_gray)
    caption = cfg.caption if cfg.caption is not None else gray_clip.caption

    choice: Optional[ExemplarChoice] = None
    if cfg.ablation == ABLATION_PER_FRAME:
        def per_frame():
            frames = []
            for t in range(gray_clip.frame_count):
                cands = _generate_candidates(
                    cfg, gray_clip.frames[t], caption, cfg.seed + t, out_dir / "work",
                    count=1,
                )
                frames.append(cands.frames[0])
            return clip_from_frames(frames, gray_clip.fps, caption, gray_clip.name)

        result = _run_stage(record, record_path, "per_frame_colorize", per_frame)
    elif cfg.ablation == ABLATION_NO_EXEMPLAR:
        def propagate_neutral():
            neutral = np.full((gray_clip.height, gray_clip.width, 3), 128, dtype=np.uint8)
            return _propagate(cfg, gray_clip, neutral, out_dir / "work")

        result = _run_stage(record, record_path, "propagate", propagate_neutral)
    else:
        def generate():
            if not 0 <= cfg.candidate_frame_index < gray_clip.frame_count:
                raise ValueError(
                    f"candidate_frame_index {cfg.candidate_frame_index} out of range"
                )
            cands = _generate_candidates(
                cfg, gray_clip.frames[cfg.candidate_frame_index], caption, cfg.seed,
                out_dir / "work",
            )
            cand_dir = out_dir / "candidates"
            cand_dir.mkdir(exist_ok=True)
            for i in range(len(cands)):
                save_frame(cands.frames[i], cand_dir / f"candidate_{i:02d}.png")
            return cands

        cands = _run_stage(record, record_path, "generate_candidates", generate)

        def select():
            if cfg.selection_method == METHOD_BN:
                niqe_model, brisque_model = _bn_models(cfg, gray_clip)
                picked = select_exemplar_bn(cands, niqe_model, brisque_model)
            else:
                picked = select_exemplar(cands, _make_scorer(cfg))
            if cfg.selection_method == SELECTION_FIXED:
                picked = apply_override(picked, cfg.fixed_index)
            save_frame(picked.exemplar, out_dir / "exemplar.png")
            record.exemplar = picked.to_json_dict(exemplar_path="exemplar.png")
            return picked

        choice = _run_stage(record, record_path, "select_exemplar", select)
        result = _run_stage(
            record, record_path, "propagate",
            lambda: _propagate(cfg, gray_clip, choice.exemplar, out_dir / "work"),
        )

    def save_output():
        save_clip(result, out_dir / "output", name=gray_clip.name + "-colorized")
        record.output_manifest = str(out_dir / "output" / "clip.json")

    _run_stage(record, record_path, "save_output", save_output)

    if truth is not None:
        def evaluate():
            truth_manifest = save_clip(truth, out_dir / "truth", name=gray_clip.name + "-truth")
            row = evaluate_run(
                load_manifest(record.output_manifest),
                truth_manifest,
                method=cfg.method_label or f"{cfg.selection_method}/{cfg.ablation}",
            )
            report = MetricReport(dataset=gray_clip.name, rows=[row])
            record.metrics = report.to_json_dict()
            (out_dir / "report.json").write_text(json.dumps(report.to_json_dict(), indent=2))
            (out_dir / "report.txt").write_text(report.format_table() + "\n")

        _run_stage(record, record_path, "evaluate", evaluate, fatal=False)

    record.save(record_path)
    return record


def evaluate_run(
    output_manifest: ClipManifest | str | Path,
    truth_manifest: ClipManifest | str | Path,
    method: str = "output",
    window: int = FVD_WINDOW,
) -> MetricRow:
    """Mean PSNR/SSIM over frame pairs, FID over frames, FVD over windows."""
    if not isinstance(output_manifest, ClipManifest):
        output_manifest = load_manifest(output_manifest)
    if not isinstance(truth_manifest, ClipManifest):
        truth_manifest = load_manifest(truth_manifest)
    out_clip = load_clip(output_manifest)
    truth_clip = load_clip(truth_manifest)
    if out_clip.frame_count != truth_clip.frame_count:
        raise DimensionMismatchError(
            f"frame counts differ: {out_clip.frame_count} vs {truth_clip.frame_count}"
        )
    if out_clip.frames.shape != truth_clip.frames.shape:
        raise DimensionMismatchError(
            f"frame shapes differ: {out_clip.frames.shape} vs {truth_clip.frames.shape}"
        )
    psnrs = [
        psnr(out_clip.frames[i], truth_clip.frames[i]) for i in range(out_clip.frame_count)
    ]
    ssims = [
        ssim(out_clip.frames[i], truth_clip.frames[i]) for i in range(out_clip.frame_count)
    ]
    out_feats = FeatureSet(
        vectors=np.stack([toy_frame_features(f) for f in out_clip.frames]),
        extractor_id="toy-frame",
        unit=UNIT_FRAME,
    )
    truth_feats = FeatureSet(
        vectors=np.stack([toy_frame_features(f) for f in truth_clip.frames]),
        extractor_id="toy-frame",
        unit=UNIT_FRAME,
    )
    fid_val = fid(truth_feats, out_feats)

    out_windows = clip_windows(out_clip, window)
    truth_windows = clip_windows(truth_clip, window)
    if not out_windows or not truth_windows:
        raise CcolError(
            f"clips too short for {window}-frame FVD windows "
            f"({out_clip.frame_count} frames)"
        )
    fvd_val = fvd(
        FeatureSet(
            vectors=np.stack([toy_clip_features(w) for w in truth_windows]),
            extractor_id="toy-clip",
            unit=UNIT_CLIP,
        ),
        FeatureSet(
            vectors=np.stack([toy_clip_features(w) for w in out_windows]),
            extractor_id="toy-clip",
            unit=UNIT_CLIP,
        ),
    )
    mean_psnr = float("inf") if any(math.isinf(p) for p in psnrs) else float(np.mean(psnrs))
    return MetricRow(
        method=method,
        psnr=mean_psnr,
        ssim=float(np.mean(ssims)),
        fid=fid_val,
        fvd=fvd_val,
    )
