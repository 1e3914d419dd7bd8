"""HTTP control plane for the interactive review workflow.

Sessions walk caption -> candidates -> (override) -> propagate -> compare.
Each session is a directory under the data root holding its gray input,
optional ground truth, candidate frames, and versioned propagation
results; session.json is the single source of truth and is rewritten
atomically, so a restarted server rehydrates from disk.

Mutations serialize per session behind a lock. POSTs run their work
synchronously by default; pass ``wait: false`` to run in a background
thread and poll GET /sessions/{id} until ``busy`` clears.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse, Response
from pydantic import BaseModel, Field

from ccol.backends import exemplar_propagate, palette_colorize
from ccol.color import desaturate, is_grayscale
from ccol.errors import CcolError
from ccol.frameio import (
    Clip,
    clip_from_frames,
    load_clip,
    load_frame,
    load_ground_truth,
    load_manifest,
    save_clip,
    save_frame,
)
from ccol.pipeline import MetricReport, evaluate_run
from ccol.quality import make_face_scorer
from ccol.selection import METHOD_HUMAN, select_exemplar

STATE_CREATED = "created"
STATE_CANDIDATES = "candidates_ready"
STATE_PROPAGATED = "propagated"
STATE_FAILED = "failed"


class CreateSessionBody(BaseModel):
    manifest: str


class CaptionBody(BaseModel):
    caption: str
    candidate_count: int = Field(default=8, ge=1, le=99)
    seed: int = 0
    wait: bool = True


class ExemplarBody(BaseModel):
    index: int = Field(ge=0)


class PropagateBody(BaseModel):
    alpha: float = Field(default=0.5, ge=0.0, le=1.0)
    wait: bool = True


class _Store:
    """Disk-backed session store with per-session write locks."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.RLock] = {}
        self._locks_guard = threading.Lock()

    def lock(self, sid: str) -> threading.RLock:
        with self._locks_guard:
            if sid not in self._locks:
                self._locks[sid] = threading.RLock()
            return self._locks[sid]

    def dir(self, sid: str) -> Path:
        return self.root / sid

    def load(self, sid: str) -> dict:
        p = self.dir(sid) / "session.json"
        if not p.is_file():
            raise HTTPException(status_code=404, detail=f"unknown session {sid}")
        return json.loads(p.read_text())

    def save(self, sid: str, session: dict) -> None:
        p = self.dir(sid) / "session.json"
        tmp = p.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(session, indent=2))
        os.replace(tmp, p)

    def load_input_clip(self, sid: str) -> Clip:
        return load_clip(load_manifest(self.dir(sid) / "input" / "clip.json"))


def _require_state(session: dict, *allowed: str) -> None:
    if session.get("busy"):
        raise HTTPException(status_code=409, detail="session is busy; poll until done")
    if session["state"] not in allowed:
        raise HTTPException(
            status_code=409,
            detail=f"operation illegal in state {session['state']!r}; needs one of {allowed}",
        )


def _run_maybe_async(store: _Store, sid: str, wait: bool, work) -> dict:
    """Run work() under the session lock, inline or in a thread."""
    if wait:
        with store.lock(sid):
            work()
        return store.load(sid)

    def runner():
        with store.lock(sid):
            try:
                work()
            except Exception as e:
                session = store.load(sid)
                session["state"] = STATE_FAILED
                session["busy"] = False
                session["error"] = str(e)
                store.save(sid, session)

    session = store.load(sid)
    session["busy"] = True
    store.save(sid, session)
    threading.Thread(target=runner, daemon=True).start()
    return store.load(sid)


def create_app(data_root: str | Path, ui_dir: Optional[str | Path] = None) -> FastAPI:
    store = _Store(Path(data_root))
    app = FastAPI(title="ccol control service")

    if ui_dir is not None:
        from fastapi.responses import FileResponse
        from fastapi.staticfiles import StaticFiles

        ui_dir = Path(ui_dir)
        app.mount("/dist", StaticFiles(directory=ui_dir / "dist"), name="ui-dist")

        @app.get("/", include_in_schema=False)
        def index() -> FileResponse:
            return FileResponse(ui_dir / "index.html")

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody) -> dict:
        try:
            manifest = load_manifest(body.manifest)
            clip = load_clip(manifest)
            truth = load_ground_truth(manifest)
        except CcolError as e:
            raise HTTPException(status_code=422, detail=str(e)) from e
        if not all(is_grayscale(clip.frames[i]) for i in range(clip.frame_count)):
            if truth is None:
                truth = clip
            clip = clip_from_frames(
                [desaturate(clip.frames[i]) for i in range(clip.frame_count)],
                clip.fps, clip.caption, clip.name,
            )
        sid = uuid.uuid4().hex[:12]
        sdir = store.dir(sid)
        save_clip(clip, sdir / "input", name=manifest.name)
        if truth is not None:
            save_clip(truth, sdir / "truth", name=manifest.name + "-truth")
        session = {
            "id": sid,
            "manifest_path": str(body.manifest),
            "state": STATE_CREATED,
            "busy": False,
            "error": None,
            "frame_count": clip.frame_count,
            "width": clip.width,
            "height": clip.height,
            "fps": clip.fps,
            "has_truth": truth is not None,
            "caption_history": [],
            "candidates": None,
            "results": [],
            "history": [{"op": "create", "manifest": str(body.manifest)}],
        }
        store.save(sid, session)
        return session

    @app.get("/sessions/{sid}")
    def get_session(sid: str) -> dict:
        return store.load(sid)

    @app.post("/sessions/{sid}/caption")
    def post_caption(sid: str, body: CaptionBody) -> dict:
        session = store.load(sid)
        _require_state(session, STATE_CREATED, STATE_CANDIDATES, STATE_PROPAGATED)

        def work():
            current = store.load(sid)
            clip = store.load_input_clip(sid)
            cands = palette_colorize(
                clip.frames[0], body.caption, body.candidate_count, body.seed
            )
            choice = select_exemplar(cands, make_face_scorer())
            cdir = store.dir(sid) / "candidates"
            cdir.mkdir(exist_ok=True)
            for i in range(len(cands)):
                save_frame(cands.frames[i], cdir / f"candidate_{i:02d}.png")
            current["caption_history"].append(
                {"caption": body.caption, "candidate_count": body.candidate_count,
                 "seed": body.seed}
            )
            current["candidates"] = {
                "caption": body.caption,
                "candidate_count": body.candidate_count,
                "seed": body.seed,
                "count": len(cands),
                "raw_scores": choice.raw_scores,
                "normalized_scores": choice.normalized_scores,
                "chosen_index": choice.index,
                "method": choice.method,
                "overridden_from": None,
            }
            current["state"] = STATE_CANDIDATES
            current["busy"] = False
            current["error"] = None
            current["history"].append(
                {"op": "caption", "caption": body.caption,
                 "candidate_count": body.candidate_count, "seed": body.seed}
            )
            store.save(sid, current)

        return _run_maybe_async(store, sid, body.wait, work)

    @app.post("/sessions/{sid}/exemplar")
    def post_exemplar(sid: str, body: ExemplarBody) -> dict:
        session = store.load(sid)
        _require_state(session, STATE_CANDIDATES, STATE_PROPAGATED)
        with store.lock(sid):
            current = store.load(sid)
            cand = current["candidates"]
            if cand is None:
                raise HTTPException(status_code=409, detail="no candidates to override")
            if not 0 <= body.index < cand["count"]:
                raise HTTPException(
                    status_code=422,
                    detail=f"index {body.index} out of range for {cand['count']} candidates",
                )
            cand["overridden_from"] = cand["chosen_index"]
            cand["chosen_index"] = body.index
            cand["method"] = METHOD_HUMAN
            current["state"] = STATE_CANDIDATES
            current["history"].append({"op": "override", "index": body.index})
            store.save(sid, current)
        return store.load(sid)

    @app.post("/sessions/{sid}/propagate")
    def post_propagate(sid: str, body: PropagateBody) -> dict:
        session = store.load(sid)
        _require_state(session, STATE_CANDIDATES, STATE_PROPAGATED)
        if session["candidates"] is None:
            raise HTTPException(status_code=409, detail="caption the session first")

        def work():
            current = store.load(sid)
            clip = store.load_input_clip(sid)
            chosen = current["candidates"]["chosen_index"]
            exemplar = load_frame(
                store.dir(sid) / "candidates" / f"candidate_{chosen:02d}.png"
            )
            result = exemplar_propagate(clip, exemplar, body.alpha)
            version = len(current["results"]) + 1
            save_clip(result, store.dir(sid) / "results" / f"v{version}",
                      name=f"{current['id']}-v{version}")
            current["results"].append(
                {"version": version, "alpha": body.alpha, "exemplar_index": chosen,
                 "frame_count": result.frame_count}
            )
            current["state"] = STATE_PROPAGATED
            current["busy"] = False
            current["error"] = None
            current["history"].append(
                {"op": "propagate", "alpha": body.alpha, "version": version,
                 "exemplar_index": chosen}
            )
            store.save(sid, current)

        return _run_maybe_async(store, sid, body.wait, work)

    @app.get("/sessions/{sid}/candidates")
    def get_candidates(sid: str) -> dict:
        session = store.load(sid)
        cand = session["candidates"]
        if cand is None:
            raise HTTPException(status_code=409, detail="no candidates yet")
        rows = [
            {
                "index": i,
                "raw_score": cand["raw_scores"][i],
                "normalized_score": cand["normalized_scores"][i],
                "selected": i == cand["chosen_index"],
                "url": f"/sessions/{sid}/frames/candidate/{i}",
            }
            for i in range(cand["count"])
        ]
        return {
            "caption": cand["caption"],
            "seed": cand["seed"],
            "method": cand["method"],
            "chosen_index": cand["chosen_index"],
            "overridden_from": cand["overridden_from"],
            "candidates": rows,
        }

    @app.get("/sessions/{sid}/result/{version}")
    def get_result(sid: str, version: int) -> dict:
        session = store.load(sid)
        for r in session["results"]:
            if r["version"] == version:
                return {
                    **r,
                    "frames": [
                        f"/sessions/{sid}/frames/result/{version}/{i}"
                        for i in range(r["frame_count"])
                    ],
                }
        raise HTTPException(status_code=404, detail=f"no result version {version}")

    @app.get("/sessions/{sid}/metrics")
    def get_metrics(sid: str, version: Optional[int] = None) -> dict:
        session = store.load(sid)
        if not session["has_truth"]:
            raise HTTPException(status_code=409, detail="session has no ground truth")
        if not session["results"]:
            raise HTTPException(status_code=409, detail="nothing propagated yet")
        version = version or session["results"][-1]["version"]
        if version > len(session["results"]):
            raise HTTPException(status_code=404, detail=f"no result version {version}")
        try:
            row = evaluate_run(
                store.dir(sid) / "results" / f"v{version}" / "clip.json",
                store.dir(sid) / "truth" / "clip.json",
                method=f"v{version}",
            )
        except CcolError as e:
            raise HTTPException(status_code=409, detail=str(e)) from e
        return MetricReport(dataset=session["id"], rows=[row]).to_json_dict()

    def _png(path: Path) -> Response:
        if not path.is_file():
            raise HTTPException(status_code=404, detail=f"no frame {path.name}")
        return Response(content=path.read_bytes(), media_type="image/png")

    @app.get("/sessions/{sid}/frames/input/{index}")
    def get_input_frame(sid: str, index: int) -> Response:
        store.load(sid)
        return _png(store.dir(sid) / "input" / f"frame_{index:06d}.png")

    @app.get("/sessions/{sid}/frames/truth/{index}")
    def get_truth_frame(sid: str, index: int) -> Response:
        store.load(sid)
        return _png(store.dir(sid) / "truth" / f"frame_{index:06d}.png")

    @app.get("/sessions/{sid}/frames/candidate/{index}")
    def get_candidate_frame(sid: str, index: int) -> Response:
        store.load(sid)
        return _png(store.dir(sid) / "candidates" / f"candidate_{index:02d}.png")

    @app.get("/sessions/{sid}/frames/result/{version}/{index}")
    def get_result_frame(sid: str, version: int, index: int) -> Response:
        store.load(sid)
        return _png(store.dir(sid) / "results" / f"v{version}" / f"frame_{index:06d}.png")

    @app.get("/healthz", response_class=PlainTextResponse)
    def healthz() -> str:
        return "ok"

    return app
