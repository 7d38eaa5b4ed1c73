"""HTTP job service.

Jobs run asynchronously on a small worker pool; every state transition
is persisted to the job's directory (atomic temp-file + rename), so a
crashed or restarted service still knows every job it ever accepted.
Jobs found in a non-terminal state at startup are marked failed with
reason "interrupted": the work was lost, and saying so beats pretending
otherwise. Cancellation is cooperative and lands on denoising-step
boundaries.

Layout under service.data_dir:

    jobs/<id>/spec.json        the submitted request
    jobs/<id>/status.json      current state (the source of truth)
    jobs/<id>/result_0.png     output image, present once done
    jobs/<id>/diagnostics.json region stats and warnings, once done
    assets/<sha>.png           uploaded inputs, referenced by jobs
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import json
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from contextlib import asynccontextmanager, nullcontext
from pathlib import Path
from typing import Any, AsyncIterator, Literal, Mapping

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel, ConfigDict, Field

from .backend import MockBackend, load_external_backend
from .config import load_config
from .errors import InputError, JobCancelled, StylefitError
from .sampler import TryOnJobSpec, run_edit, run_tryon

TERMINAL_STATES = ("done", "failed")


def _write_json_atomic(path: Path, doc: Mapping[str, Any]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(doc, indent=2, sort_keys=True))
    tmp.replace(path)


def _read_json(path: Path) -> dict[str, Any]:
    return json.loads(path.read_text())


class JobService:
    """Owns the worker pool, the cancel flags, and the on-disk job store."""

    def __init__(self, cfg: Mapping[str, Any]) -> None:
        self.cfg = cfg
        self.root = Path(cfg["service"]["data_dir"])
        self.jobs_dir = self.root / "jobs"
        self.assets_dir = self.root / "assets"
        self.jobs_dir.mkdir(parents=True, exist_ok=True)
        self.assets_dir.mkdir(parents=True, exist_ok=True)
        self._cancel_flags: dict[str, threading.Event] = {}
        self._flags_lock = threading.Lock()
        # Real engines typically cannot run two jobs at once; the mock can.
        self._backend_lock = threading.Lock() if cfg["backend"].get("exclusive") else None
        self.recover_interrupted()
        self._pool = ThreadPoolExecutor(max_workers=int(cfg["service"]["workers"]))

    # -- persistence ----------------------------------------------------

    def _status_path(self, job_id: str) -> Path:
        return self.jobs_dir / job_id / "status.json"

    def _write_status(self, job_id: str, **updates: Any) -> dict[str, Any]:
        path = self._status_path(job_id)
        doc = _read_json(path) if path.is_file() else {}
        doc.update(updates)
        doc["updated_at"] = time.time()
        _write_json_atomic(path, doc)
        return doc

    def read_status(self, job_id: str) -> dict[str, Any]:
        path = self._status_path(job_id)
        if not path.is_file():
            raise KeyError(job_id)
        return _read_json(path)

    def list_jobs(self) -> list[dict[str, Any]]:
        rows = []
        for status_file in sorted(self.jobs_dir.glob("*/status.json")):
            try:
                rows.append(_read_json(status_file))
            except (OSError, json.JSONDecodeError):
                continue
        rows.sort(key=lambda r: r.get("created_at", 0.0))
        return rows

    def recover_interrupted(self) -> int:
        """Mark every job that was alive at crash time as failed."""
        recovered = 0
        for status_file in self.jobs_dir.glob("*/status.json"):
            try:
                doc = _read_json(status_file)
            except (OSError, json.JSONDecodeError):
                continue
            if doc.get("status") not in TERMINAL_STATES:
                doc.update(status="failed", reason="interrupted", updated_at=time.time())
                _write_json_atomic(status_file, doc)
                recovered += 1
        return recovered

    # -- job lifecycle ----------------------------------------------------

    def submit(self, kind: str, spec: TryOnJobSpec) -> str:
        job_id = uuid.uuid4().hex[:12]
        job_dir = self.jobs_dir / job_id
        job_dir.mkdir(parents=True)
        _write_json_atomic(job_dir / "spec.json", {"kind": kind, "spec": spec.to_wire()})
        self._write_status(
            job_id,
            id=job_id,
            kind=kind,
            status="queued",
            reason=None,
            created_at=time.time(),
            steps_done=0,
            steps_total=spec.steps,
            n_results=0,
        )
        with self._flags_lock:
            self._cancel_flags[job_id] = threading.Event()
        self._pool.submit(self._execute, job_id, kind, spec)
        return job_id

    def cancel(self, job_id: str) -> dict[str, Any]:
        """Request cancellation. Terminal jobs are left untouched (the
        call is an acknowledged no-op); live ones stop at the next step
        boundary."""
        status = self.read_status(job_id)
        if status["status"] in TERMINAL_STATES:
            return status
        with self._flags_lock:
            flag = self._cancel_flags.get(job_id)
        if flag is not None:
            flag.set()
        return status

    def result_path(self, job_id: str, index: int) -> Path:
        status = self.read_status(job_id)
        if status["status"] != "done":
            raise InputError(f"job {job_id} is {status['status']}; results are not ready")
        path = self.jobs_dir / job_id / f"result_{index}.png"
        if not path.is_file():
            raise KeyError(f"result {index}")
        return path

    def counts(self) -> dict[str, int]:
        counts = {"queued": 0, "running": 0, "done": 0, "failed": 0}
        for row in self.list_jobs():
            counts[row.get("status", "failed")] = counts.get(row.get("status", "failed"), 0) + 1
        return counts

    def shutdown(self) -> None:
        self._pool.shutdown(wait=False, cancel_futures=True)

    # -- execution ----------------------------------------------------

    def _build_backend(self, steps: int):
        section = self.cfg["backend"]
        if section["kind"] == "mock":
            return MockBackend(
                steps=steps,
                spatial_factor=int(section["spatial_factor"]),
                latent_channels=int(section["latent_channels"]),
            )
        return load_external_backend(section["kind"], self.cfg)

    def _execute(self, job_id: str, kind: str, spec: TryOnJobSpec) -> None:
        with self._flags_lock:
            flag = self._cancel_flags.get(job_id) or threading.Event()
        if flag.is_set():
            self._write_status(job_id, status="failed", reason="cancelled")
            return
        self._write_status(job_id, status="running")
        job_dir = self.jobs_dir / job_id

        def progress(done: int, total: int) -> None:
            if done == total or done % max(1, total // 10) == 0:
                self._write_status(job_id, steps_done=done, steps_total=total)

        try:
            backend = self._build_backend(spec.steps)
            run = run_tryon if kind == "tryon" else run_edit
            lock = self._backend_lock if self._backend_lock is not None else nullcontext()
            with lock:
                result = run(
                    spec,
                    backend,
                    self.cfg,
                    root=self.root,
                    progress=progress,
                    should_cancel=flag.is_set,
                )
            from .embeddings import save_image

            save_image(result.image, job_dir / "result_0.png")
            _write_json_atomic(job_dir / "diagnostics.json", result.diagnostics())
            self._write_status(
                job_id, status="done", n_results=1, steps_done=result.steps_run
            )
        except JobCancelled:
            self._write_status(job_id, status="failed", reason="cancelled")
        except (StylefitError, OSError) as exc:
            self._write_status(job_id, status="failed", reason=str(exc))
        except Exception as exc:  # noqa: BLE001 - a worker must never die silently
            self._write_status(job_id, status="failed", reason=f"internal error: {exc}")
        finally:
            with self._flags_lock:
                self._cancel_flags.pop(job_id, None)

    # -- assets ----------------------------------------------------

    def store_asset(self, name: str, data_b64: str) -> str:
        if not name.lower().endswith(".png"):
            raise InputError("only .png assets are accepted")
        try:
            blob = base64.b64decode(data_b64, validate=True)
        except (binascii.Error, ValueError) as exc:
            raise InputError(f"asset data is not valid base64: {exc}") from exc
        if not blob.startswith(b"\x89PNG\r\n\x1a\n"):
            raise InputError("asset bytes are not a PNG stream")
        digest = hashlib.sha256(blob).hexdigest()[:16]
        rel = f"assets/{digest}.png"
        path = self.root / rel
        if not path.is_file():
            tmp = path.with_name(path.name + ".tmp")
            tmp.write_bytes(blob)
            tmp.replace(path)
        return rel


# --------------------------------------------------------------------------
# HTTP layer


class JobSubmission(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["tryon", "edit"] = "tryon"
    spec: dict[str, Any] = Field(..., description="job spec in wire format")


class AssetUpload(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    data: str = Field(..., description="base64-encoded PNG bytes")


def create_app(cfg: Mapping[str, Any] | None = None) -> FastAPI:
    cfg = cfg if cfg is not None else load_config()
    service = JobService(cfg)

    @asynccontextmanager
    async def lifespan(app: FastAPI) -> AsyncIterator[None]:
        yield
        service.shutdown()

    app = FastAPI(title="stylefit service", version="0.1.0", lifespan=lifespan)
    app.state.service = service
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    def _get_status_or_404(job_id: str) -> dict[str, Any]:
        try:
            return service.read_status(job_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id!r}") from None

    @app.post("/jobs", status_code=201)
    def submit_job(body: JobSubmission) -> dict[str, Any]:
        try:
            spec = TryOnJobSpec.from_wire(body.spec)
            if spec.person is None:
                raise InputError("person is required")
        except InputError as exc:
            raise HTTPException(
                status_code=422,
                detail=[{"loc": ["body", "spec"], "msg": str(exc), "type": "value_error"}],
            ) from exc
        job_id = service.submit(body.kind, spec)
        return {"id": job_id, "status": "queued"}

    @app.get("/jobs")
    def list_jobs() -> list[dict[str, Any]]:
        return service.list_jobs()

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str) -> dict[str, Any]:
        status = _get_status_or_404(job_id)
        job_dir = service.jobs_dir / job_id
        spec_path = job_dir / "spec.json"
        if spec_path.is_file():
            status["request"] = _read_json(spec_path)
        diag_path = job_dir / "diagnostics.json"
        if diag_path.is_file():
            status["diagnostics"] = _read_json(diag_path)
        status["results"] = [
            f"/jobs/{job_id}/results/{i}" for i in range(int(status.get("n_results", 0)))
        ]
        return status

    @app.get("/jobs/{job_id}/results/{index}")
    def job_result(job_id: str, index: int) -> FileResponse:
        _get_status_or_404(job_id)
        try:
            path = service.result_path(job_id, index)
        except InputError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no result {index} for job {job_id}") from None
        return FileResponse(path, media_type="image/png")

    @app.post("/jobs/{job_id}/cancel")
    def cancel_job(job_id: str) -> dict[str, Any]:
        _get_status_or_404(job_id)
        return service.cancel(job_id)

    @app.post("/assets", status_code=201)
    def upload_asset(body: AssetUpload) -> dict[str, str]:
        try:
            rel = service.store_asset(body.name, body.data)
        except InputError as exc:
            raise HTTPException(
                status_code=422,
                detail=[{"loc": ["body", "data"], "msg": str(exc), "type": "value_error"}],
            ) from exc
        return {"path": rel}

    @app.get("/health")
    def health() -> dict[str, Any]:
        return {"status": "ok", "jobs": service.counts()}

    @app.get("/config")
    def config_view() -> JSONResponse:
        return JSONResponse(json.loads(json.dumps(cfg, default=str)))

    ui_dir = cfg["service"].get("ui_dir")
    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def serve(cfg: Mapping[str, Any]) -> None:
    """Run the service until interrupted."""
    import uvicorn

    uvicorn.run(
        create_app(cfg),
        host=str(cfg["service"]["host"]),
        port=int(cfg["service"]["port"]),
        log_level="info",
    )
