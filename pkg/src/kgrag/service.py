"""HTTP facade over the curation and query flows.

Single-process service: GET endpoints are side-effect-free reads, queries
run concurrently, and at most one curation job runs at a time as a
background thread with polling via /api/runs/{id}.
"""

from __future__ import annotations

import json
import logging
import threading
import uuid

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import __version__
from .config import EngineConfig
from .engine import Engine
from .llm import ProviderError
from .queryphase import LEVELS, MissingStoreError, QueryPhaseError

log = logging.getLogger(__name__)


class QueryBody(BaseModel):
    q: str
    level: str | None = None
    n: int | None = None
    k: int | None = None
    verbose: bool = False


class IngestBody(BaseModel):
    manifest: list[dict]


class GraphQueryBody(BaseModel):
    query: str


def _error(status: int, message: str, detail: str = "") -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message, "detail": detail})


class _Runs:
    def __init__(self):
        self.lock = threading.Lock()
        self.jobs: dict[str, dict] = {}
        self.active: str | None = None

    def start(self) -> str | None:
        with self.lock:
            if self.active is not None:
                return None
            run_id = uuid.uuid4().hex[:12]
            self.active = run_id
            self.jobs[run_id] = {"run_id": run_id, "status": "running"}
            return run_id

    def finish(self, run_id: str, *, summary: dict | None = None, error: str | None = None):
        with self.lock:
            job = self.jobs[run_id]
            if error is None:
                job["status"] = "done"
                job["summary"] = summary
            else:
                job["status"] = "failed"
                job["error"] = error
            self.active = None

    def get(self, run_id: str) -> dict | None:
        with self.lock:
            return self.jobs.get(run_id)


def create_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="kgrag service", version=__version__)
    if engine.config.cors_origin:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=[engine.config.cors_origin],
            allow_methods=["*"],
            allow_headers=["*"],
        )
    runs = _Runs()
    app.state.engine = engine

    @app.get("/api/health")
    def health():
        return {"status": "ok", "versions": {"service": __version__,
                                             "schema": engine.graph.schema_version}}

    @app.post("/api/ingest", status_code=202)
    def ingest(body: IngestBody):
        for i, record in enumerate(body.manifest):
            for key in ("uri", "media_type", "path"):
                if key not in record:
                    return _error(400, "malformed manifest", f"record {i} missing {key!r}")
        run_id = runs.start()
        if run_id is None:
            return _error(409, "curation already running")
        manifest_text = "\n".join(json.dumps(r) for r in body.manifest)

        def job():
            try:
                summary = engine.curate(manifest_text)
                runs.finish(run_id, summary=summary.to_dict())
            except Exception as err:  # job boundary: report, never raise
                log.exception("curation run %s failed", run_id)
                runs.finish(run_id, error=str(err))

        threading.Thread(target=job, name=f"curate-{run_id}", daemon=True).start()
        return {"run_id": run_id, "status": "running"}

    @app.get("/api/runs/{run_id}")
    def run_status(run_id: str):
        job = runs.get(run_id)
        if job is None:
            return _error(404, "unknown run", run_id)
        return job

    @app.post("/api/query")
    def query(body: QueryBody):
        if not body.q.strip():
            return _error(400, "empty query")
        level = body.level or engine.config.level
        if level not in LEVELS:
            return _error(400, "bad level", f"{level!r} not in {list(LEVELS)}")
        try:
            return engine.query(body.q, level=level, n=body.n, k=body.k, verbose=body.verbose)
        except MissingStoreError as err:
            return _error(409, "store not loaded", str(err))
        except (QueryPhaseError, ProviderError) as err:
            return _error(503, "provider unreachable", str(err))

    @app.post("/api/graph/query")
    def graph_query(body: GraphQueryBody):
        from .graphquery import QuerySyntaxError, QueryValidationError, evaluate, parse_query

        try:
            table = evaluate(engine.graph, parse_query(body.query))
        except (QuerySyntaxError, QueryValidationError) as err:
            return _error(400, "invalid query", str(err))
        return table.to_dict()

    @app.get("/api/graph/stats")
    def stats(top: int | None = None):
        return engine.stats(top)

    @app.get("/api/graph/node/{node_id}")
    def node(node_id: str):
        detail = engine.node_detail(node_id)
        if detail is None:
            return _error(404, "unknown node", node_id)
        return detail

    @app.get("/api/graph/subgraph")
    def subgraph(center: str, hops: int = 1):
        if not 1 <= hops <= 2:
            return _error(400, "bad hop count", "hops must be 1 or 2")
        result = engine.subgraph(center, hops)
        if result is None:
            return _error(404, "unknown node", center)
        return result

    @app.get("/api/embeddings/projection")
    def projection():
        try:
            return {"points": engine.projection()}
        except Exception as err:
            return _error(409, "projection unavailable", str(err))

    @app.get("/api/chunks/{chunk_id}")
    def chunk(chunk_id: str):
        detail = engine.chunk_detail(chunk_id)
        if detail is None:
            return _error(404, "unknown chunk", chunk_id)
        return detail

    return app


def serve(config: EngineConfig) -> None:
    import uvicorn

    engine = Engine(config)
    host, _, port = config.listen.partition(":")
    uvicorn.run(create_app(engine), host=host or "127.0.0.1", port=int(port or 8095))
