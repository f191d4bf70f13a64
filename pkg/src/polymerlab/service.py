"""HTTP service exposing the experiment runners.

One POST endpoint per command, a replay endpoint, health and preset
listings.  Library errors map to HTTP 400/422 with the same category and
exit-code taxonomy the CLI uses, so clients can branch on structured fields
instead of messages.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import __version__
from .errors import ConfigError, PolymerlabError
from .experiments import REQUEST_MODELS, attach_digest, get_preset, replay, run_request
from .models import (
    ConfinementRequest,
    HittingRequest,
    LcltRequest,
    MomentsRequest,
    PairProbRequest,
    PoissonRequest,
    QlargeRequest,
    ScheduleRequest,
    SecondMomentScanRequest,
)

app = FastAPI(title="polymerlab", version=__version__)


@app.exception_handler(PolymerlabError)
async def _polymerlab_error(_: Request, exc: PolymerlabError) -> JSONResponse:
    status = 422 if isinstance(exc, ConfigError) else 400
    return JSONResponse(
        status_code=status,
        content={"category": exc.category, "message": str(exc), "exit_code": exc.exit_code},
    )


@app.get("/v1/health")
def health() -> dict:
    return {"status": "ok", "version": __version__, "commands": sorted(REQUEST_MODELS)}


@app.get("/v1/presets/{name}")
def preset(name: str) -> dict:
    return get_preset(name)


def _run(command: str, req) -> dict:
    return attach_digest(run_request(command, req))


@app.post("/v1/moments")
def moments(req: MomentsRequest) -> dict:
    return _run("moments", req)


@app.post("/v1/second-moment-scan")
def second_moment_scan(req: SecondMomentScanRequest) -> dict:
    return _run("second-moment-scan", req)


@app.post("/v1/schedule")
def schedule(req: ScheduleRequest) -> dict:
    return _run("schedule", req)


@app.post("/v1/poisson")
def poisson(req: PoissonRequest) -> dict:
    return _run("poisson", req)


@app.post("/v1/pair-prob")
def pair_prob(req: PairProbRequest) -> dict:
    return _run("pair-prob", req)


@app.post("/v1/hitting")
def hitting(req: HittingRequest) -> dict:
    return _run("hitting", req)


@app.post("/v1/lclt")
def lclt(req: LcltRequest) -> dict:
    return _run("lclt", req)


@app.post("/v1/qlarge")
def qlarge(req: QlargeRequest) -> dict:
    return _run("qlarge", req)


@app.post("/v1/confinement")
def confinement(req: ConfinementRequest) -> dict:
    return _run("confinement", req)


@app.post("/v1/replay")
def replay_record(payload: dict) -> dict:
    new, drift, ok = replay(payload)
    body = attach_digest(new)
    body["replay"] = {"drift": drift, "ok": ok}
    return body
