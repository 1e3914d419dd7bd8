"""Command-line entry points for the pipeline and evaluation tools.

Exit codes: 0 success, 1 usage error (bad flags, invalid inputs),
2 runtime error. Machine-readable output goes to stdout; logs and
error detail go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ccol.color import desaturate
from ccol.errors import CcolError
from ccol.frameio import (
    clip_from_frames,
    load_clip,
    load_frame,
    load_manifest,
    resize_clip,
    save_clip,
)
from ccol.metrics import fid, fvd, read_features, read_votes_csv, tally_votes
from ccol.pipeline import MetricReport, PipelineConfig, evaluate_run, run_pipeline
from ccol.quality import QualityModel, fit_quality_model, make_face_scorer
from ccol.selection import CandidateSet, select_exemplar, select_exemplar_bn

logger = logging.getLogger("ccol")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as exit code 1, not 2."""

    def error(self, message):
        raise _UsageError(message)


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError as e:
        raise _UsageError(f"--size must look like 128x128, got {text!r}") from e


def _cmd_preprocess(args) -> int:
    manifest = load_manifest(args.infile)
    clip = load_clip(manifest)
    w, h = _parse_size(args.size)
    color = resize_clip(clip, w, h)
    gray = clip_from_frames(
        [desaturate(color.frames[i]) for i in range(color.frame_count)],
        color.fps,
        color.caption,
        color.name,
    )
    out = Path(args.out)
    color_manifest = save_clip(color, out / "color", name=manifest.name + "-color")
    gray_manifest = save_clip(
        gray,
        out / "gray",
        name=manifest.name + "-gray",
        ground_truth_paths=color_manifest.frame_paths,
    )
    print(json.dumps({
        "color_manifest": str(out / "color" / "clip.json"),
        "gray_manifest": str(out / "gray" / "clip.json"),
        "frames": gray.frame_count,
        "size": f"{w}x{h}",
    }))
    return 0


def _cmd_colorize(args) -> int:
    try:
        cfg = PipelineConfig.load(args.config)
        if args.ablation:
            cfg.ablation = args.ablation
        if args.seed is not None:
            cfg.seed = args.seed
        if args.output_dir:
            cfg.output_dir = args.output_dir
    except (ValueError, KeyError, TypeError) as e:
        raise _UsageError(f"bad pipeline config: {e}") from e
    record = run_pipeline(cfg)
    print(str(Path(cfg.output_dir) / "run.json"))
    return 0 if all(s["status"] == "completed" for s in record.stages) else 2


def _load_candidate_dir(path: Path):
    pngs = sorted(path.glob("*.png"))
    if not pngs:
        raise _UsageError(f"no candidate PNGs in {path}")
    frames = [load_frame(p) for p in pngs]
    return CandidateSet(frames=np.stack(frames), source=str(path)), pngs


def _cmd_rank(args) -> int:
    cands, paths = _load_candidate_dir(Path(args.candidates))
    if args.method == "bn":
        if args.niqe_model:
            niqe_model = QualityModel.load(args.niqe_model)
        else:
            if len(cands) < 2:
                raise _UsageError("bn ranking without --niqe-model needs >= 2 candidates")
            niqe_model = fit_quality_model(list(cands.frames))
        if args.brisque_model:
            brisque_model = QualityModel.load(args.brisque_model)
        else:
            brisque_model = niqe_model
        choice = select_exemplar_bn(cands, niqe_model, brisque_model)
    else:
        choice = select_exemplar(cands, make_face_scorer())
    rows = []
    for i, p in enumerate(paths):
        rows.append({
            "candidate": p.name,
            "raw_score": choice.raw_scores[i],
            "normalized_score": choice.normalized_scores[i],
            "selected": i == choice.index,
        })
    if args.json:
        print(json.dumps({"method": args.method, "selected_index": choice.index, "rows": rows}))
    else:
        width = max(len(r["candidate"]) for r in rows)
        print(f"{'candidate'.ljust(width)}  {'raw':>12}  {'normalized':>10}  selected")
        for r in rows:
            mark = "*" if r["selected"] else ""
            print(
                f"{r['candidate'].ljust(width)}  {r['raw_score']:>12.6f}  "
                f"{r['normalized_score']:>10.6f}  {mark}"
            )
    return 0


def _cmd_evaluate(args) -> int:
    if args.features:
        real_fs = read_features(args.features[1])
        gen_fs = read_features(args.features[0])
        try:
            value = fid(real_fs, gen_fs) if real_fs.unit == "frame" else fvd(real_fs, gen_fs)
        except ValueError as e:
            raise _UsageError(str(e)) from e
        payload = {
            "extractor_id": real_fs.extractor_id,
            "unit": real_fs.unit,
            "frechet_distance": value,
        }
        print(json.dumps(payload) if args.json else f"frechet_distance {value:.6f}")
        return 0
    try:
        row = evaluate_run(args.output, args.truth, method=args.method)
    except CcolError as e:
        raise _UsageError(str(e)) from e
    report = MetricReport(dataset=args.dataset, rows=[row])
    if args.json:
        print(json.dumps(report.to_json_dict()))
    else:
        print(report.format_table())
    return 0


def _cmd_survey_tally(args) -> int:
    try:
        rows = read_votes_csv(args.votes)
        tallies = tally_votes(rows)
    except ValueError as e:
        raise _UsageError(str(e)) from e
    payload = [t.to_json_dict() for t in tallies]
    if args.json:
        print(json.dumps(payload))
    else:
        for t in tallies:
            print(f"question {t.question_id} ({t.participant_count} participants)")
            for option, count, mos in zip(t.options, t.counts, t.mos()):
                print(f"  {option}: {count} votes  (mos {mos:.4f})")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from ccol.service import create_app

    app = create_app(Path(args.data_root), ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="ccol", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="resize a clip and emit a color/gray pair")
    p.add_argument("--in", dest="infile", required=True, help="input clip manifest")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--size", default="128x128", help="target WxH (default 128x128)")
    p.set_defaults(fn=_cmd_preprocess)

    p = sub.add_parser("colorize", help="run the colorization pipeline")
    p.add_argument("--config", required=True, help="pipeline config JSON")
    p.add_argument("--ablation", choices=["full", "no_exemplar", "per_frame_only"])
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir")
    p.set_defaults(fn=_cmd_colorize)

    p = sub.add_parser("rank", help="rank candidate exemplars in a directory")
    p.add_argument("--candidates", required=True, help="directory of candidate PNGs")
    p.add_argument("--method", choices=["fiq", "bn"], default="fiq")
    p.add_argument("--niqe-model", help="QualityModel JSON for bn ranking")
    p.add_argument("--brisque-model", help="QualityModel JSON for bn ranking")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=_cmd_rank)

    p = sub.add_parser("evaluate", help="compute the metric report for a run")
    p.add_argument("--output", help="output clip manifest")
    p.add_argument("--truth", help="ground-truth clip manifest")
    p.add_argument(
        "--features",
        nargs=2,
        metavar=("GENERATED", "REAL"),
        help="two feature files; compute their Fréchet distance instead",
    )
    p.add_argument("--method", default="output", help="row label")
    p.add_argument("--dataset", default="dataset", help="dataset label")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("survey-tally", help="tally survey votes from a CSV")
    p.add_argument("--votes", required=True, help="CSV with question_id,participant_id,option")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=_cmd_survey_tally)

    p = sub.add_parser("serve", help="run the HTTP control service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--data-root", required=True)
    p.add_argument("--ui", help="frontend directory to serve at / (expects index.html + dist/)")
    p.set_defaults(fn=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    try:
        if args.command == "evaluate" and not args.features:
            if not args.output or not args.truth:
                print("usage error: evaluate needs --output and --truth (or --features)",
                      file=sys.stderr)
                return 1
        return args.fn(args)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except CcolError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
