import json
import sys

import numpy as np
import pytest

from ccol.color import desaturate
from ccol.errors import StageError
from ccol.frameio import load_clip, load_manifest, save_clip
from ccol.metrics import FVD_WINDOW
from ccol.pipeline import (
    BackendSpec,
    MetricReport,
    MetricRow,
    PipelineConfig,
    RunRecord,
    evaluate_run,
    run_pipeline,
)

from conftest import ORDERING_CAPTION, banded_disk_clip, skin_scorer_config

CAPTION = "a green top in front of a red background"


def make_config(manifest_path, out_dir, **overrides) -> PipelineConfig:
    base = dict(
        manifest_path=str(manifest_path),
        output_dir=str(out_dir),
        caption=CAPTION,
        candidate_count=6,
        seed=17,
    )
    base.update(overrides)
    return PipelineConfig(**base)


@pytest.fixture
def run_env(tmp_path, disk_clip):
    save_clip(disk_clip, tmp_path / "clip")
    return tmp_path / "clip" / "clip.json", tmp_path


class TestRunPipeline:
    def test_full_pipeline_happy_path(self, run_env):
        manifest_path, root = run_env
        record = run_pipeline(make_config(manifest_path, root / "out"))
        assert all(s["status"] == "completed" for s in record.stages)
        out = load_clip(load_manifest(record.output_manifest))
        assert out.frame_count == 24
        assert record.exemplar is not None
        assert record.exemplar["method"] == "fiq"
        assert (root / "out" / "run.json").is_file()
        assert (root / "out" / "exemplar.png").is_file()

    def test_luminance_preserved_end_to_end(self, run_env, disk_clip):
        manifest_path, root = run_env
        record = run_pipeline(make_config(manifest_path, root / "out"))
        out = load_clip(load_manifest(record.output_manifest))
        for t in range(out.frame_count):
            assert np.array_equal(
                desaturate(out.frames[t]), desaturate(disk_clip.frames[t])
            )

    def test_per_frame_ablation_has_higher_fvd(self, tmp_path):
        # banded fixture + chroma-aware scorer: selection finds the
        # low-jitter exemplar, so the ordering isolates temporal flicker
        save_clip(banded_disk_clip(frames=24, h=64, w=64), tmp_path / "clip")
        manifest_path = tmp_path / "clip" / "clip.json"
        common = dict(
            caption=ORDERING_CAPTION, scorer=skin_scorer_config(), candidate_count=8
        )
        full = run_pipeline(make_config(manifest_path, tmp_path / "full", **common))
        per_frame = run_pipeline(
            make_config(
                manifest_path, tmp_path / "pf", ablation="per_frame_only", **common
            )
        )
        fvd_full = full.metrics["rows"][0]["fvd"]
        fvd_pf = per_frame.metrics["rows"][0]["fvd"]
        assert fvd_full < fvd_pf

    def test_no_exemplar_ablation_outputs_gray(self, run_env, disk_clip):
        manifest_path, root = run_env
        record = run_pipeline(
            make_config(manifest_path, root / "out", ablation="no_exemplar")
        )
        out = load_clip(load_manifest(record.output_manifest))
        for t in range(out.frame_count):
            assert np.array_equal(out.frames[t], desaturate(disk_clip.frames[t]))
        assert record.exemplar is None

    def test_fixed_index_selection_is_human_override(self, run_env):
        manifest_path, root = run_env
        record = run_pipeline(
            make_config(
                manifest_path, root / "out",
                selection_method="fixed-index", fixed_index=3,
            )
        )
        assert record.exemplar["index"] == 3
        assert record.exemplar["method"] == "human_override"

    def test_bn_selection_runs(self, run_env):
        manifest_path, root = run_env
        record = run_pipeline(
            make_config(manifest_path, root / "out", selection_method="bn")
        )
        assert record.exemplar["method"] == "bn"
        assert all(s["status"] == "completed" for s in record.stages)

    def test_determinism_bit_identical_across_runs(self, run_env):
        manifest_path, root = run_env
        r1 = run_pipeline(make_config(manifest_path, root / "a"))
        r2 = run_pipeline(make_config(manifest_path, root / "b"))
        f1 = sorted((root / "a" / "output").glob("frame_*.png"))
        f2 = sorted((root / "b" / "output").glob("frame_*.png"))
        assert [p.name for p in f1] == [p.name for p in f2]
        for p1, p2 in zip(f1, f2):
            assert p1.read_bytes() == p2.read_bytes()

        def sanitize(rec: RunRecord) -> dict:
            d = rec.to_json_dict()
            d.pop("timings")
            d.pop("output_manifest")
            d["config"].pop("output_dir")
            return d

        assert sanitize(r1) == sanitize(r2)

    def test_gray_input_with_declared_truth(self, tmp_path, disk_clip):
        from ccol.frameio import clip_from_frames

        gray = clip_from_frames(
            [desaturate(disk_clip.frames[i]) for i in range(disk_clip.frame_count)],
            disk_clip.fps,
        )
        tm = save_clip(disk_clip, tmp_path / "truth")
        save_clip(gray, tmp_path / "gray", ground_truth_paths=tm.frame_paths)
        record = run_pipeline(make_config(tmp_path / "gray" / "clip.json", tmp_path / "out"))
        assert record.metrics is not None

    def test_external_backends_match_builtin(self, run_env):
        manifest_path, root = run_env
        builtin = run_pipeline(make_config(manifest_path, root / "builtin"))
        wrapped = BackendSpec(
            kind="external", command=[sys.executable, "-m", "ccol.palette_backend"]
        )
        external = run_pipeline(
            make_config(
                manifest_path, root / "external",
                candidate_backend=wrapped, propagator_backend=wrapped,
            )
        )
        f1 = sorted((root / "builtin" / "output").glob("frame_*.png"))
        f2 = sorted((root / "external" / "output").glob("frame_*.png"))
        for p1, p2 in zip(f1, f2):
            assert p1.read_bytes() == p2.read_bytes()

    def test_stage_error_recorded_and_raised(self, tmp_path):
        cfg = make_config(tmp_path / "nope" / "clip.json", tmp_path / "out")
        with pytest.raises(StageError) as exc_info:
            run_pipeline(cfg)
        assert exc_info.value.stage == "load"
        record = json.loads((tmp_path / "out" / "run.json").read_text())
        assert record["stages"][0]["status"] == "error"
        assert "nope" in record["stages"][0]["error"]

    def test_config_json_round_trip(self, tmp_path):
        cfg = make_config(tmp_path / "m.json", tmp_path / "out", selection_method="bn")
        (tmp_path / "cfg.json").write_text(json.dumps(cfg.to_json_dict()))
        loaded = PipelineConfig.load(tmp_path / "cfg.json")
        assert loaded == cfg


class TestEvaluateRun:
    def test_identical_manifests_give_perfect_row(self, tmp_path, disk_clip):
        m = save_clip(disk_clip, tmp_path / "c")
        row = evaluate_run(m, m)
        assert row.psnr == float("inf")
        assert row.ssim == 1.0
        assert abs(row.fid) <= 1e-8
        assert abs(row.fvd) <= 1e-8

    def test_desaturated_output_keeps_luma_ssim_near_one(self, tmp_path, disk_clip):
        from ccol.frameio import clip_from_frames

        gray = clip_from_frames(
            [desaturate(disk_clip.frames[i]) for i in range(disk_clip.frame_count)],
            disk_clip.fps,
        )
        gm = save_clip(gray, tmp_path / "gray")
        tm = save_clip(disk_clip, tmp_path / "truth")
        row = evaluate_run(gm, tm)
        # output luma is the rounded truth luma: SSIM is 1.0 up to
        # quantization, FID strictly positive (chroma is gone)
        assert row.ssim > 0.999
        assert row.fid > 0.0
        assert np.isfinite(row.psnr)

    def test_frame_count_mismatch_rejected(self, tmp_path, disk_clip):
        from ccol.frameio import Clip

        short = Clip(frames=disk_clip.frames[:10], fps=disk_clip.fps)
        m1 = save_clip(disk_clip, tmp_path / "a")
        m2 = save_clip(short, tmp_path / "b")
        from ccol.errors import DimensionMismatchError

        with pytest.raises(DimensionMismatchError):
            evaluate_run(m1, m2)

    def test_row_serialization_round_trip(self):
        row = MetricRow(method="m", psnr=float("inf"), ssim=0.5, fid=1.25, fvd=3.5)
        report = MetricReport(dataset="d", rows=[row])
        loaded = MetricReport.from_json_dict(json.loads(json.dumps(report.to_json_dict())))
        assert loaded == report

    def test_report_table_is_aligned(self):
        report = MetricReport(
            dataset="fixture",
            rows=[
                MetricRow("full", 28.1, 0.85, 33.12, 467.52),
                MetricRow("per_frame_only", float("inf"), 0.99, 0.1, 999.0),
            ],
        )
        table = report.format_table()
        lines = table.splitlines()
        assert len(lines) == 4
        assert "PSNR" in lines[0] and "FVD" in lines[0]
        assert "inf" in lines[3]

    def test_too_short_for_fvd_window_raises(self, tmp_path, disk_clip):
        from ccol.errors import CcolError
        from ccol.frameio import Clip

        short = Clip(frames=disk_clip.frames[:8], fps=disk_clip.fps)
        m = save_clip(short, tmp_path / "s")
        with pytest.raises(CcolError, match=str(FVD_WINDOW)):
            evaluate_run(m, m)
