"""HTTP service wrapping the experiment harness and the decision loop.

Experiment endpoints accept a full ExperimentConfig and run it server-side
(outputs land in the config's out_dir on the server's filesystem). Session
endpoints expose the step/observe protocol so long-lived clients can drive
an agent online: create a session with pretraining contexts (inline or
generated from a stream spec), then alternate step and observe calls.
"""

from __future__ import annotations

import threading
from typing import Literal, Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel, Field

from . import __version__
from .compression import CompressionAgent
from .environments import StreamSpec, build_stream
from .errors import (
    BanditLabError,
    ConfigError,
    DataFormatError,
    InputError,
    NumericalError,
    ProtocolError,
)
from .experiments import (
    CONFIG_TEMPLATE,
    BanditParams,
    ExperimentConfig,
    TrainParams,
    VariantSpec,
    compare,
    make_agent,
    pretrain_snapshot,
    run_experiment,
)

_STATUS = {
    ConfigError: 422,
    InputError: 400,
    ProtocolError: 409,
    DataFormatError: 400,
    NumericalError: 500,
}


class SummaryRowModel(BaseModel):
    variant: str
    seed: int
    k: int
    final_accuracy: float
    total_errors: int


class RankRowModel(BaseModel):
    rank: int
    variant: str
    mean_accuracy: float
    seeds: int


class RunRequest(BaseModel):
    config: ExperimentConfig
    snapshot_dir: Optional[str] = None


class RunResponse(BaseModel):
    summary: list[SummaryRowModel]
    out_dir: Optional[str]


class CompareRequest(BaseModel):
    config: ExperimentConfig


class CompareResponse(BaseModel):
    ranking: list[RankRowModel]


class PretrainRequest(BaseModel):
    config: ExperimentConfig


class PretrainResponse(BaseModel):
    snapshots: list[str]


class SessionCreateRequest(BaseModel):
    """An online decision session.

    Provide either inline pretraining contexts or a stream spec (whose
    pretraining split is generated server-side). n_classes is the arm count
    of the classification bandit.
    """

    variant: VariantSpec
    n_classes: int = Field(ge=1)
    k: int = Field(default=4, ge=1)
    batch_size: int = Field(default=1000, ge=1)
    embed_dim: Optional[int] = Field(default=None, ge=1)
    seed: int = 0
    pretrain_contexts: Optional[list[list[float]]] = None
    stream: Optional[StreamSpec] = None
    bandit_R: float = 0.05
    bandit_epsilon: float = 1.0
    bandit_gamma: float = 0.5
    train_epochs: int = Field(default=20, ge=1)
    train_learning_rate: float = Field(default=1.0, gt=0)
    train_minibatch_size: int = Field(default=32, ge=1)
    finetune_epochs: int = Field(default=5, ge=1)


class SessionInfo(BaseModel):
    session_id: str
    variant: str
    input_dim: int
    n_classes: int
    rounds_observed: int
    batch_index: int
    pending: bool


class StepRequest(BaseModel):
    context: list[float]


class StepResponse(BaseModel):
    arm: int
    level: Optional[int] = None
    level_value: Optional[float] = None


class ObserveRequest(BaseModel):
    reward: float


class ObserveResponse(BaseModel):
    rounds_observed: int
    batch_index: int


class _Session:
    def __init__(self, agent, variant: str, input_dim: int, n_classes: int):
        self.agent = agent
        self.variant = variant
        self.input_dim = input_dim
        self.n_classes = n_classes
        self.rounds_observed = 0
        self.lock = threading.Lock()

    def info(self, session_id: str) -> SessionInfo:
        return SessionInfo(
            session_id=session_id,
            variant=self.variant,
            input_dim=self.input_dim,
            n_classes=self.n_classes,
            rounds_observed=self.rounds_observed,
            batch_index=self.agent.batch_index,
            pending=self.agent.pending is not None,
        )


def create_app() -> FastAPI:
    app = FastAPI(title="banditlab", version=__version__)
    sessions: dict[str, _Session] = {}
    counter = {"next": 0}
    registry_lock = threading.Lock()

    @app.exception_handler(BanditLabError)
    async def _banditlab_error(request: Request, exc: BanditLabError):
        return JSONResponse(
            status_code=_STATUS.get(type(exc), 400),
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.get("/config/template", response_class=PlainTextResponse)
    def config_template() -> str:
        return CONFIG_TEMPLATE

    @app.post("/experiments/run", response_model=RunResponse)
    def experiments_run(req: RunRequest) -> RunResponse:
        summary = run_experiment(req.config, snapshot_dir=req.snapshot_dir)
        return RunResponse(
            summary=[SummaryRowModel(**row.__dict__) for row in summary],
            out_dir=req.config.out_dir,
        )

    @app.post("/experiments/compare", response_model=CompareResponse)
    def experiments_compare(req: CompareRequest) -> CompareResponse:
        ranking = compare(req.config)
        return CompareResponse(ranking=[RankRowModel(**row.__dict__) for row in ranking])

    @app.post("/experiments/pretrain", response_model=PretrainResponse)
    def experiments_pretrain(req: PretrainRequest) -> PretrainResponse:
        return PretrainResponse(snapshots=pretrain_snapshot(req.config))

    @app.post("/sessions", response_model=SessionInfo)
    def create_session(req: SessionCreateRequest) -> SessionInfo:
        if req.pretrain_contexts is not None:
            contexts = np.asarray(req.pretrain_contexts, dtype=np.float64)
            if contexts.ndim != 2 or contexts.shape[0] == 0:
                raise InputError("pretrain_contexts must be a non-empty list of vectors")
        elif req.stream is not None:
            stream = build_stream(
                req.stream,
                batch_size=req.batch_size,
                rounds=1,
                seed=req.seed,
                default_drift_k=req.k,
            )
            contexts = stream.pretrain
        else:
            raise InputError("provide pretrain_contexts or a stream spec")

        agent = make_agent(
            req.variant,
            input_dim=contexts.shape[1],
            n_classes=req.n_classes,
            seed=req.seed,
            k=req.k,
            batch_size=req.batch_size,
            embed_dim=req.embed_dim,
            bandit=BanditParams(R=req.bandit_R, epsilon=req.bandit_epsilon, gamma=req.bandit_gamma),
            train=TrainParams(
                epochs=req.train_epochs,
                learning_rate=req.train_learning_rate,
                minibatch_size=req.train_minibatch_size,
            ),
            finetune_epochs=req.finetune_epochs,
        )
        agent.pretrain(contexts)
        with registry_lock:
            session_id = f"s{counter['next']:06d}"
            counter["next"] += 1
            sessions[session_id] = _Session(
                agent, req.variant.display_name, contexts.shape[1], req.n_classes
            )
        return sessions[session_id].info(session_id)

    def _get(session_id: str) -> _Session:
        try:
            return sessions[session_id]
        except KeyError:
            raise InputError(f"no such session {session_id!r}") from None

    @app.get("/sessions/{session_id}", response_model=SessionInfo)
    def session_info(session_id: str) -> SessionInfo:
        return _get(session_id).info(session_id)

    @app.post("/sessions/{session_id}/step", response_model=StepResponse)
    def session_step(session_id: str, req: StepRequest) -> StepResponse:
        sess = _get(session_id)
        with sess.lock:
            if isinstance(sess.agent, CompressionAgent):
                level, arm = sess.agent.step(req.context)
                return StepResponse(arm=arm, level=level, level_value=sess.agent.levels[level])
            return StepResponse(arm=sess.agent.step(req.context))

    @app.post("/sessions/{session_id}/observe", response_model=ObserveResponse)
    def session_observe(session_id: str, req: ObserveRequest) -> ObserveResponse:
        sess = _get(session_id)
        with sess.lock:
            sess.agent.observe(req.reward)
            sess.rounds_observed += 1
            return ObserveResponse(
                rounds_observed=sess.rounds_observed, batch_index=sess.agent.batch_index
            )

    @app.delete("/sessions/{session_id}")
    def session_delete(session_id: str):
        _get(session_id)
        with registry_lock:
            sessions.pop(session_id, None)
        return {"deleted": session_id}

    return app


app = create_app()
