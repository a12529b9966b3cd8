"""HTTP facade over the pipeline: session-scoped uploads with structure
preview, queued analysis runs with polling, and result retrieval.

All responses go through the same canonical serializer as the CLI, so a
run's report is byte-identical to the CLI output for the same file and
configuration. Sessions are in-memory with optional directory persistence;
there is no authentication (deployment concern, see README).
"""

from __future__ import annotations

import json
import secrets
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request, Response, UploadFile
from fastapi.middleware.cors import CORSMiddleware

from ._version import __version__
from .behavior import Cutpoints, SleepConfig
from .cohort import SubjectSpec, cohort_report, run_batch
from .errors import ConfigError, PipelineError
from .ingest import SchemaConfig, detect_schema
from .pipeline import (PipelineConfig, StageError, canonical_json,
                       features_report, plot_payload, run_features,
                       run_predict)
from .preprocess import PreprocessConfig

SESSION_TTL_SECONDS = 24 * 3600


@dataclass
class StoredFile:
    file_id: str
    name: str
    data: bytes
    preview: dict


@dataclass
class Run:
    run_id: str
    config: dict
    state: str = "queued"            # queued -> running -> done | failed
    result: dict | None = None
    error: dict | None = None


@dataclass
class Session:
    session_id: str
    created_at: float
    expires_at: float
    files: dict = field(default_factory=dict)
    runs: dict = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionStore:
    def __init__(self, data_dir: str | None = None):
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()
        self._data_dir = Path(data_dir) if data_dir else None
        if self._data_dir:
            self._data_dir.mkdir(parents=True, exist_ok=True)
            self._load()

    def create(self) -> Session:
        now = time.time()
        s = Session(session_id=secrets.token_urlsafe(16), created_at=now,
                    expires_at=now + SESSION_TTL_SECONDS)
        with self._lock:
            self._sessions[s.session_id] = s
        self._persist(s)
        return s

    def get(self, session_id: str) -> Session | None:
        with self._lock:
            s = self._sessions.get(session_id)
            if s is None:
                return None
            if time.time() >= s.expires_at:
                del self._sessions[session_id]
                return None
            return s

    # --- optional directory persistence ---------------------------------

    def _session_dir(self, s: Session) -> Path | None:
        return self._data_dir / s.session_id if self._data_dir else None

    def _persist(self, s: Session) -> None:
        d = self._session_dir(s)
        if d is None:
            return
        d.mkdir(parents=True, exist_ok=True)
        (d / "files").mkdir(exist_ok=True)
        meta = {
            "session_id": s.session_id,
            "created_at": s.created_at,
            "expires_at": s.expires_at,
            "files": [{"file_id": f.file_id, "name": f.name,
                       "preview": f.preview} for f in s.files.values()],
            "runs": [{"run_id": r.run_id, "config": r.config,
                      "state": r.state, "result": r.result,
                      "error": r.error} for r in s.runs.values()],
        }
        (d / "meta.json").write_text(json.dumps(meta), encoding="utf-8")
        for f in s.files.values():
            blob = d / "files" / f.file_id
            if not blob.exists():
                blob.write_bytes(f.data)

    def persist(self, s: Session) -> None:
        self._persist(s)

    def _load(self) -> None:
        for meta_path in self._data_dir.glob("*/meta.json"):
            try:
                meta = json.loads(meta_path.read_text(encoding="utf-8"))
                s = Session(session_id=meta["session_id"],
                            created_at=meta["created_at"],
                            expires_at=meta["expires_at"])
                for fm in meta["files"]:
                    blob = meta_path.parent / "files" / fm["file_id"]
                    s.files[fm["file_id"]] = StoredFile(
                        file_id=fm["file_id"], name=fm["name"],
                        data=blob.read_bytes(), preview=fm["preview"])
                for rm in meta["runs"]:
                    state = rm["state"]
                    if state in ("queued", "running"):
                        state = "failed"
                        rm["error"] = {"error": "Interrupted",
                                       "message": "server restarted"}
                    s.runs[rm["run_id"]] = Run(
                        run_id=rm["run_id"], config=rm["config"],
                        state=state, result=rm["result"], error=rm["error"])
                self._sessions[s.session_id] = s
            except (OSError, KeyError, json.JSONDecodeError):
                continue


def _json(payload, status: int = 200) -> Response:
    return Response(content=canonical_json(payload), status_code=status,
                    media_type="application/json")


def _error(status: int, code: str, message: str, **extra) -> Response:
    body = {"error": code, "message": message}
    body.update(extra)
    return _json(body, status=status)


_PARAM_SECTIONS = ("preprocess", "sleep", "cutpoints", "m10l5_mode",
                   "bin_minutes")


def _apply_section(obj, d: dict, section: str):
    known = set(obj.to_dict())
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown {section} parameters",
                          fields={k: "unknown field" for k in sorted(unknown)})
    for k, v in d.items():
        attr = _SECTION_ATTRS[section].get(k, k)
        setattr(obj, attr, v)
    return obj


_SECTION_ATTRS = {
    "preprocess": {},
    "sleep": {},
    "cutpoints": {"cutpoint_light_mg": "light_mg",
                  "cutpoint_moderate_mg": "moderate_mg",
                  "cutpoint_vigorous_mg": "vigorous_mg"},
}


def _pipeline_config(schema_dict: dict, params: dict | None) -> PipelineConfig:
    schema = SchemaConfig.from_dict(schema_dict)
    cfg = PipelineConfig(schema=schema)
    p = params or {}
    if not isinstance(p, dict):
        raise ConfigError("parameters must be an object")
    unknown = set(p) - set(_PARAM_SECTIONS)
    if unknown:
        raise ConfigError("unknown parameter sections",
                          fields={k: "unknown field" for k in sorted(unknown)})
    if "preprocess" in p:
        cfg.preprocess = _apply_section(PreprocessConfig(), p["preprocess"],
                                        "preprocess")
    if "sleep" in p:
        cfg.sleep = _apply_section(SleepConfig(), p["sleep"], "sleep")
    if "cutpoints" in p:
        cfg.cutpoints = _apply_section(Cutpoints(), p["cutpoints"],
                                       "cutpoints")
    if "m10l5_mode" in p:
        cfg.m10l5_mode = p["m10l5_mode"]
    if "bin_minutes" in p:
        cfg.bin_minutes = p["bin_minutes"]
    try:
        cfg.validate()
    except ValueError as e:
        raise ConfigError(str(e))
    return cfg


def create_app(max_upload_mb: int = 200, data_dir: str | None = None,
               weights: str | None = None, serve_ui: str | None = None,
               cors_origin: str = "*", jobs: int = 1) -> FastAPI:
    app = FastAPI(title="cosinorage", version=__version__,
                  docs_url=None, redoc_url=None, openapi_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=[cors_origin] if cors_origin != "*" else ["*"],
        allow_methods=["*"], allow_headers=["*"])

    store = SessionStore(data_dir)
    pool = ThreadPoolExecutor(max_workers=max(1, int(jobs)))
    max_bytes = int(max_upload_mb) * 1024 * 1024
    app.state.store = store
    app.state.pool = pool

    @app.get("/api/health")
    def health():
        return _json({"status": "ok", "version": __version__})

    @app.post("/api/sessions")
    def create_session():
        s = store.create()
        return _json({"session_id": s.session_id}, status=201)

    @app.post("/api/sessions/{session_id}/files")
    async def upload_file(session_id: str, file: UploadFile):
        s = store.get(session_id)
        if s is None:
            return _error(404, "UnknownSession", "no such session")
        data = await file.read()
        if len(data) > max_bytes:
            return _error(413, "FileTooLarge",
                          f"file exceeds {max_upload_mb} MB limit")
        try:
            preview = detect_schema(data).to_dict()
        except PipelineError as e:
            return _json(e.to_dict(), status=400)
        stored = StoredFile(file_id=uuid.uuid4().hex,
                            name=file.filename or "upload.csv",
                            data=data, preview=preview)
        with s.lock:
            s.files[stored.file_id] = stored
        store.persist(s)
        return _json({"file_id": stored.file_id, "name": stored.name,
                      "preview": preview})

    def _execute_run(s: Session, run: Run) -> None:
        with s.lock:
            run.state = "running"
        try:
            result = _run_payload(s, run.config, weights)
            with s.lock:
                run.result = result
                run.state = "done"
        except StageError as e:
            with s.lock:
                run.error = e.to_dict()
                run.state = "failed"
        except PipelineError as e:
            with s.lock:
                run.error = e.to_dict()
                run.state = "failed"
        except Exception as e:  # defensive: never leave a run hanging
            with s.lock:
                run.error = {"error": "InternalError", "message": str(e)}
                run.state = "failed"
        store.persist(s)

    @app.post("/api/sessions/{session_id}/runs")
    async def create_run(session_id: str, request: Request):
        s = store.get(session_id)
        if s is None:
            return _error(404, "UnknownSession", "no such session")
        try:
            body = json.loads(await request.body())
        except json.JSONDecodeError as e:
            return _error(400, "BadRequest", f"body is not valid JSON: {e}")
        try:
            config = _validate_run_request(s, body)
        except ConfigError as e:
            return _json(e.to_dict(), status=400)
        run = Run(run_id=uuid.uuid4().hex, config=config)
        with s.lock:
            s.runs[run.run_id] = run
        store.persist(s)
        pool.submit(_execute_run, s, run)
        return _json({"run_id": run.run_id}, status=201)

    @app.get("/api/sessions/{session_id}/runs/{run_id}")
    def get_run(session_id: str, run_id: str):
        s = store.get(session_id)
        if s is None:
            return _error(404, "UnknownSession", "no such session")
        with s.lock:
            run = s.runs.get(run_id)
            if run is None:
                return _error(404, "UnknownRun", "no such run")
            payload = {"run_id": run.run_id, "state": run.state}
            if run.state == "done":
                payload.update(run.result)
            elif run.state == "failed":
                payload["error"] = run.error
        return _json(payload)

    @app.get("/api/sessions/{session_id}/files")
    def list_files(session_id: str):
        s = store.get(session_id)
        if s is None:
            return _error(404, "UnknownSession", "no such session")
        with s.lock:
            files = [{"file_id": f.file_id, "name": f.name,
                      "preview": f.preview} for f in s.files.values()]
        return _json({"files": files})

    if serve_ui:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=serve_ui, html=True),
                  name="ui")

    return app


def _validate_run_request(s: Session, body) -> dict:
    """Normalize and validate a run request; raises ConfigError with
    field-level messages."""
    if not isinstance(body, dict):
        raise ConfigError("run request must be an object")
    unknown = set(body) - {"mode", "subjects", "parameters"}
    if unknown:
        raise ConfigError("unknown run request fields",
                          fields={k: "unknown field" for k in sorted(unknown)})
    subjects = body.get("subjects")
    if not isinstance(subjects, list) or not subjects:
        raise ConfigError("invalid run request",
                          fields={"subjects": "must be a non-empty list"})
    mode = body.get("mode") or ("single" if len(subjects) == 1 else "multi")
    if mode not in ("single", "multi"):
        raise ConfigError("invalid run request",
                          fields={"mode": "must be 'single' or 'multi'"})
    if mode == "single" and len(subjects) != 1:
        raise ConfigError("invalid run request",
                          fields={"mode": "single mode takes exactly one "
                                          "subject"})
    params = body.get("parameters")
    norm_subjects = []
    seen_ids = set()
    for i, sub in enumerate(subjects):
        if not isinstance(sub, dict):
            raise ConfigError("invalid run request",
                              fields={f"subjects[{i}]": "must be an object"})
        unknown = set(sub) - {"file_id", "subject_id", "age", "sex", "schema"}
        if unknown:
            raise ConfigError(
                "invalid run request",
                fields={f"subjects[{i}].{k}": "unknown field"
                        for k in sorted(unknown)})
        fid = sub.get("file_id")
        with s.lock:
            known_file = fid in s.files
        if not known_file:
            raise ConfigError("invalid run request",
                              fields={f"subjects[{i}].file_id":
                                      f"unknown file_id {fid!r}"})
        age = sub.get("age")
        if age is not None and not (isinstance(age, (int, float))
                                    and not isinstance(age, bool)
                                    and 0 <= age <= 120):
            raise ConfigError("invalid run request",
                              fields={f"subjects[{i}].age":
                                      "must be a number in [0, 120]"})
        sex = sub.get("sex")
        if sex is not None and sex not in ("female", "male"):
            raise ConfigError("invalid run request",
                              fields={f"subjects[{i}].sex":
                                      "must be 'female' or 'male'"})
        schema = sub.get("schema")
        if not isinstance(schema, dict):
            raise ConfigError("invalid run request",
                              fields={f"subjects[{i}].schema":
                                      "schema config object required"})
        # validate now so invalid configs fail the request, not the run
        _pipeline_config(schema, params)
        sid = sub.get("subject_id") or f"subject-{i + 1}"
        if sid in seen_ids:
            raise ConfigError("invalid run request",
                              fields={f"subjects[{i}].subject_id":
                                      f"duplicate subject_id {sid!r}"})
        seen_ids.add(sid)
        norm_subjects.append({"file_id": fid, "subject_id": sid,
                              "age": age, "sex": sex, "schema": schema})
    return {"mode": mode, "subjects": norm_subjects,
            "parameters": params or {}}


def _run_payload(s: Session, config: dict, weights: str | None) -> dict:
    params = config["parameters"]
    if config["mode"] == "single":
        sub = config["subjects"][0]
        cfg = _pipeline_config(sub["schema"], params)
        with s.lock:
            data = s.files[sub["file_id"]].data
        if sub["age"] is not None:
            report, result = run_predict(data, cfg, age_years=sub["age"],
                                         sex=sub["sex"],
                                         weights_source=weights)
        else:
            result = run_features(data, cfg)
            report = features_report(result, cfg)
        return {"mode": "single", "report": report,
                "plot": plot_payload(result)}

    specs = []
    shared_cfg = None
    for sub in config["subjects"]:
        cfg = _pipeline_config(sub["schema"], params)
        if shared_cfg is None:
            shared_cfg = cfg
        with s.lock:
            data = s.files[sub["file_id"]].data
        specs.append(SubjectSpec(subject_id=sub["subject_id"], source=data,
                                 age_years=sub["age"], sex=sub["sex"],
                                 config=cfg))
    results, summary = run_batch(specs, shared_cfg, weights_source=weights,
                                 jobs=1)
    return {"mode": "multi",
            "report": cohort_report(results, summary, shared_cfg)}


def run_server(port: int = 8080, host: str = "127.0.0.1",
               max_upload_mb: int = 200, data_dir: str | None = None,
               weights: str | None = None, serve_ui: str | None = None,
               cors_origin: str = "*", jobs: int = 1) -> None:
    import uvicorn
    app = create_app(max_upload_mb=max_upload_mb, data_dir=data_dir,
                     weights=weights, serve_ui=serve_ui,
                     cors_origin=cors_origin, jobs=jobs)
    uvicorn.run(app, host=host, port=port, log_level="warning")
