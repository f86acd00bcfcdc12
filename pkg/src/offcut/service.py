"""HTTP facade for the optimize / suggest / select workflow.

Sessions hold a design document plus the latest suggestion set.  One
optimization runs per session at a time on a background thread; handlers never
block on it.  Suggestion ids stay stable until the next optimize call.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response
from pydantic import BaseModel

from .constraints import Status, violated_rows
from .document import (
    DesignDocument,
    DesignDocumentError,
    Runtime,
    build_runtime,
    doc_with_params,
    load_design,
    save_design,
)
from .effectiveness import dynamic_effectiveness_constraints
from .optimizer import (
    ExplorationResult,
    OptimConfig,
    SearchContext,
    min_wastage,
    select_suggestions,
    try_pack,
)
from .svgplan import export_svg


class OptimizeRequest(BaseModel):
    seed: int = 0
    generations: int = 3
    keep: int = 8
    improve_iters: int = 20
    workers: int = 1
    raster_res_mm: float = 2.0
    suggestions: int = 3


class SelectRequest(BaseModel):
    k: int
    t: int | None = None


class LockSize(BaseModel):
    part: int
    dim: str  # lx | ly
    value: float | None = None


class LockRequest(BaseModel):
    sizes: list[LockSize]


class EditRequest(BaseModel):
    u: dict[str, float]
    mode: str = "strict"  # strict | flush | override


@dataclass
class Session:
    id: str
    doc: DesignDocument
    runtime: Runtime
    ordering: tuple[int, ...]
    config: OptimizeRequest = field(default_factory=OptimizeRequest)
    suggestions: list[ExplorationResult] = field(default_factory=list)
    wastage_before: float | None = None
    status: str = "idle"  # idle | running
    progress: float = 0.0
    cancel: threading.Event = field(default_factory=threading.Event)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def rebuild(self):
        self.runtime = build_runtime(self.doc)


def _optim_config(req: OptimizeRequest, boards_mm) -> OptimConfig:
    return OptimConfig(
        seed=req.seed,
        generations=req.generations,
        keep=req.keep,
        improve_iters=req.improve_iters,
        workers=req.workers,
        raster_res=req.raster_res_mm,
        boards_mm=list(boards_mm),
        suggestions=req.suggestions,
    )


def make_context(runtime: Runtime, config: OptimConfig) -> SearchContext:
    return SearchContext(runtime.evaluator, runtime.system.copy(), runtime.spec, config)


def layout_json(ctx: SearchContext, values: np.ndarray, boards) -> dict:
    """Compact layout + part geometry for the UI renderer."""
    parts = ctx.evaluator.evaluate(values)
    out_parts = [
        {
            "id": p.id,
            "contour": [[float(x), float(y)] for x, y in p.contour],
            "lx": float(p.lx),
            "ly": float(p.ly),
        }
        for p in parts
    ]
    out_boards = []
    for (bw, bh), placements in zip(ctx.boards_px, boards):
        out_boards.append(
            {
                "width_px": bw,
                "height_px": bh,
                "placements": [
                    {"part": part, "u": u, "v": v, "o": o} for part, u, v, o in placements
                ],
            }
        )
    return {"raster_res_mm": ctx.config.raster_res, "parts": out_parts, "boards": out_boards}


def result_boards(res: ExplorationResult) -> list[list[tuple[int, int, int, int]]]:
    return [[(p.part, p.u, p.v, p.o) for p in lt.placements] for lt in res.layouts]


def create_app() -> FastAPI:
    app = FastAPI(title="offcut", version="0.1.0")
    sessions: dict[str, Session] = {}

    def get_session(sid: str) -> Session:
        if sid not in sessions:
            raise HTTPException(404, f"unknown session {sid}")
        return sessions[sid]

    @app.post("/sessions", status_code=201)
    async def create_session(request: Request):
        raw = await request.body()
        try:
            doc = load_design(raw)
            runtime = build_runtime(doc)
        except DesignDocumentError as exc:
            raise HTTPException(422, str(exc))
        sid = uuid.uuid4().hex[:12]
        sessions[sid] = Session(
            id=sid,
            doc=doc,
            runtime=runtime,
            ordering=tuple(range(runtime.evaluator.part_count)),
        )
        return {"id": sid}

    @app.get("/sessions/{sid}/design")
    def get_design(sid: str):
        ses = get_session(sid)
        with ses.lock:
            return Response(save_design(ses.doc), media_type="application/json")

    @app.post("/sessions/{sid}/optimize", status_code=202)
    def optimize(sid: str, req: OptimizeRequest):
        ses = get_session(sid)
        with ses.lock:
            if ses.status == "running":
                raise HTTPException(409, "optimization already running")
            ses.status = "running"
            ses.progress = 0.0
            ses.cancel = threading.Event()
            ses.config = req
            runtime = ses.runtime
        config = _optim_config(req, runtime.boards_mm)

        def progress(done, total):
            ses.progress = done / total

        def run():
            ctx = make_context(runtime, config)
            try:
                results = min_wastage(
                    ctx, runtime.x0.values, progress_cb=progress, cancel=ses.cancel
                )
                picked = select_suggestions(results, ctx, req.suggestions)
                start_w = _start_wastage(ctx, runtime)
            except Exception:
                with ses.lock:
                    ses.status = "idle"
                raise
            with ses.lock:
                if not ses.cancel.is_set():
                    ses.suggestions = picked
                    ses.wastage_before = start_w
                ses.status = "idle"
                ses.progress = 1.0

        threading.Thread(target=run, daemon=True).start()
        return {"status": "running"}

    def _start_wastage(ctx: SearchContext, runtime: Runtime) -> float:
        from .layout import boards_wastage

        return boards_wastage(
            try_pack(ctx, runtime.x0.values, tuple(range(ctx.evaluator.part_count)))
        )

    @app.get("/sessions/{sid}/status")
    def status(sid: str):
        ses = get_session(sid)
        return {"status": ses.status, "progress": ses.progress}

    @app.delete("/sessions/{sid}/optimize")
    def cancel(sid: str):
        ses = get_session(sid)
        ses.cancel.set()
        return {"status": "cancelling"}

    @app.get("/sessions/{sid}/suggestions")
    def suggestions(sid: str):
        ses = get_session(sid)
        with ses.lock:
            ctx = make_context(ses.runtime, _optim_config(ses.config, ses.runtime.boards_mm))
            out = []
            for k, res in enumerate(ses.suggestions):
                out.append(
                    {
                        "id": k,
                        "wastage": res.wastage,
                        "wastage_before": ses.wastage_before,
                        "path_length": len(res.path),
                        "layout": layout_json(ctx, res.params.values, result_boards(res)),
                    }
                )
            return {"suggestions": out}

    def _get_suggestion(ses: Session, k: int) -> ExplorationResult:
        if not 0 <= k < len(ses.suggestions):
            raise HTTPException(404, f"unknown suggestion {k}")
        return ses.suggestions[k]

    @app.get("/sessions/{sid}/suggestions/{k}/path/{t}")
    def path_snapshot(sid: str, k: int, t: int):
        ses = get_session(sid)
        with ses.lock:
            res = _get_suggestion(ses, k)
            if not 0 <= t < len(res.path):
                raise HTTPException(404, f"path index {t} out of range")
            snap = res.path[t]
            ctx = make_context(ses.runtime, _optim_config(ses.config, ses.runtime.boards_mm))
            return {
                "t": t,
                "wastage": snap.wastage,
                "params": {
                    n: float(v)
                    for n, v in zip(ctx.evaluator.parameter_names, snap.values)
                },
                "layout": layout_json(ctx, snap.values, snap.boards),
            }

    @app.post("/sessions/{sid}/select")
    def select(sid: str, req: SelectRequest):
        ses = get_session(sid)
        with ses.lock:
            res = _get_suggestion(ses, req.k)
            if req.t is None:
                values = res.params.values
            else:
                if not 0 <= req.t < len(res.path):
                    raise HTTPException(404, f"path index {req.t} out of range")
                values = res.path[req.t].values
            ses.doc = doc_with_params(ses.doc, ses.runtime.evaluator, values)
            ses.rebuild()
            ses.ordering = res.ordering
            return Response(save_design(ses.doc), media_type="application/json")

    @app.post("/sessions/{sid}/lock")
    def lock_sizes(sid: str, req: LockRequest):
        ses = get_session(sid)
        with ses.lock:
            parts = ses.runtime.evaluator.evaluate(ses.runtime.x0.values)
            constraints = ses.doc.data.setdefault("constraints", [])
            added = []
            for size in req.sizes:
                if size.dim not in ("lx", "ly"):
                    raise HTTPException(422, f"unknown dimension {size.dim!r}")
                if not 0 <= size.part < len(parts):
                    raise HTTPException(422, f"unknown part {size.part}")
                current = getattr(parts[size.part], size.dim)
                if size.value is not None and abs(size.value - current) > 1e-9:
                    raise HTTPException(
                        422,
                        f"lock value {size.value} not satisfied by current design "
                        f"(part {size.part}.{size.dim} = {current})",
                    )
                added.append(
                    {
                        "kind": "fixed-length",
                        "a": [size.part, size.dim],
                        "value": float(current),
                    }
                )
            constraints.extend(added)
            ses.rebuild()
            return {"locked": len(added), "constraints": len(constraints)}

    @app.post("/sessions/{sid}/edit")
    def edit(sid: str, req: EditRequest):
        ses = get_session(sid)
        with ses.lock:
            runtime = ses.runtime
            names = runtime.evaluator.parameter_names
            index = {n: i for i, n in enumerate(names)}
            u = np.zeros(len(names))
            for name, delta in req.u.items():
                if name not in index:
                    raise HTTPException(422, f"unknown parameter {name!r}")
                u[index[name]] = delta
            x = runtime.x0.values

            if req.mode == "override":
                point = x + u
                diags = violated_rows(runtime.system, point)
                ses.doc = doc_with_params(ses.doc, runtime.evaluator, point)
                ses.rebuild()
                return {"applied": True, "mode": "override", "violated_rows": diags}

            out = dynamic_effectiveness_constraints(
                runtime.system, runtime.evaluator, runtime.spec, x, u
            )
            if req.mode == "strict":
                if out.status is not Status.SOLVED:
                    raise HTTPException(
                        409,
                        detail={
                            "error": "constraint correction failed",
                            "violated_rows": violated_rows(runtime.system, x + u),
                        },
                    )
                point = out.point
            elif req.mode == "flush":
                point = out.point  # best partial when failed
            else:
                raise HTTPException(422, f"unknown edit mode {req.mode!r}")
            ses.doc = doc_with_params(ses.doc, runtime.evaluator, point)
            ses.rebuild()
            return {
                "applied": True,
                "mode": req.mode,
                "solved": out.solved,
                "scale": out.scale,
            }

    @app.get("/sessions/{sid}/plan.svg")
    def plan(sid: str, board: int = 0):
        ses = get_session(sid)
        with ses.lock:
            runtime = ses.runtime
            ctx = make_context(runtime, _optim_config(ses.config, runtime.boards_mm))
            layouts = try_pack(ctx, runtime.x0.values, ses.ordering)
            if layouts is None:
                raise HTTPException(409, "design does not fit the boards")
            parts = runtime.evaluator.evaluate(runtime.x0.values)
            docs = export_svg(layouts, parts, runtime.boards_mm, ctx.config.raster_res)
            if not 0 <= board < len(docs):
                raise HTTPException(404, f"no board {board}")
            return Response(docs[board], media_type="image/svg+xml")

    ui_dir = Path(__file__).resolve().parent.parent.parent / "frontend" / "dist"
    if ui_dir.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
