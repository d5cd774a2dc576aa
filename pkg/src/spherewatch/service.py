"""Monitoring and control HTTP API over a running collection instance.

Read endpoints are open; control endpoints require the shared token and
are refused outright when no token was configured at bind time. Config
replacements pass through the same parser the daemon boots with and take
effect at the next task launch (bodies snapshot their config at entry),
never mid-run.
"""

import json
from typing import Optional, Sequence

from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import PlainTextResponse

from .domain import (InvalidConfig, MalformedConfig, parse_config,
                     serialize_config)
from .scheduler import Overlapping, Supervisor
from .store import DocumentStore, StoreUnavailable

CONTROL_TOKEN_HEADER = "x-control-token"


def create_app(supervisor: Supervisor, store: DocumentStore,
               config_host=None, control_token: Optional[str] = None,
               ui_origins: Sequence[str] = ("*",)) -> FastAPI:
    """Bind the API to a live supervisor + store.

    config_host is anything with a `config` attribute and a
    `reconfigure(new_config)` method (the Collector qualifies); without
    one the /config endpoints answer 404. control_token=None disables
    the control surface entirely (403).
    """
    app = FastAPI(title="spherewatch", docs_url=None, redoc_url=None)
    app.add_middleware(CORSMiddleware, allow_origins=list(ui_origins),
                       allow_methods=["*"], allow_headers=["*"])

    def authorize(request: Request) -> None:
        if control_token is None:
            raise HTTPException(status_code=403,
                                detail="control endpoints disabled")
        supplied = request.headers.get(CONTROL_TOKEN_HEADER)
        if supplied != control_token:
            raise HTTPException(status_code=401,
                                detail="missing or wrong control token")

    def known(name: str) -> str:
        if name not in supervisor.task_names():
            raise HTTPException(status_code=404,
                                detail=f"unknown task {name!r}")
        return name

    @app.get("/stats")
    def stats() -> dict:
        try:
            return {"accounts": store.count("accounts"),
                    "tweets": store.count("tweets"),
                    "bytes": store.store_bytes()}
        except StoreUnavailable as exc:
            raise HTTPException(status_code=503, detail=str(exc))

    @app.get("/stats/series")
    def stats_series() -> list:
        try:
            return store.read_stats()
        except OSError as exc:
            raise HTTPException(status_code=503, detail=str(exc))

    @app.get("/tasks")
    def tasks() -> list:
        return [supervisor.task_view(name)
                for name in supervisor.task_names()]

    @app.get("/tasks/{name:path}/logs")
    def task_runs(name: str) -> list:
        return [run.view() for run in supervisor.runs(known(name))]

    @app.get("/logs/{name:path}/{stamp}", response_class=PlainTextResponse)
    def log_body(name: str, stamp: str) -> str:
        for run in supervisor.runs(known(name)):
            if run.stamp == stamp and run.log_path is not None:
                try:
                    return run.log_path.read_text(encoding="utf-8")
                except OSError:
                    break
        raise HTTPException(status_code=404,
                            detail=f"no log {stamp!r} for task {name!r}")

    @app.post("/tasks/{name:path}/start", status_code=202)
    def start_task(name: str, request: Request) -> dict:
        authorize(request)
        try:
            run = supervisor.start_now(known(name))
        except Overlapping:
            raise HTTPException(status_code=409,
                                detail=f"task {name!r} is already running")
        return {"task": name, "run": run.view()}

    @app.post("/tasks/{name:path}/kill")
    def kill_task(name: str, request: Request) -> dict:
        authorize(request)
        killed = supervisor.kill(known(name))
        return {"task": name, "killed": killed}

    @app.get("/config")
    def get_config() -> dict:
        if config_host is None:
            raise HTTPException(status_code=404, detail="no config bound")
        return json.loads(serialize_config(config_host.config))

    @app.put("/config")
    async def put_config(request: Request) -> dict:
        authorize(request)
        if config_host is None:
            raise HTTPException(status_code=404, detail="no config bound")
        body = await request.body()
        try:
            new_config = parse_config(body.decode("utf-8"))
        except (InvalidConfig, MalformedConfig, UnicodeDecodeError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        config_host.reconfigure(new_config)
        return {"applied": True}

    return app


def serve(app: FastAPI, host: str = "127.0.0.1", port: int = 8800) -> None:
    """Run the API under uvicorn (blocking)."""
    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="warning")
