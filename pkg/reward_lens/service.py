"""
HTTP JSON service for the audit console.

Endpoints (all bodies JSON):

    GET  /api/model                  active checkpoint id (or null)
    POST /api/model/load             {"path"} -> {"checkpoint"}
    GET  /api/envs                   registered environments
    POST /api/env/sample             {"env", "seed", "step"} -> transition record
    POST /api/reward                 {"s", "sp"} -> {"reward", "checkpoint"}
    POST /api/saliency/gradient      {"s", "sp", "signed"?} -> saliency
    POST /api/saliency/occlusion     {"s", "sp", "occlusion"?} -> saliency
    POST /api/scenario               scenario document -> scenario report

Errors come back as ``{"error": {"code", "message"}}`` with status 400 for
malformed input and 409 when no model is loaded.
"""

import logging
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Union

from fastapi import Body, FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from reward_lens.audit import (
    grids_from_body,
    occlusion_overrides,
    reward_payload,
    saliency_payload,
    scenario_payload_from_body,
    transition_from_frames,
)
from reward_lens.config import resolve_path
from reward_lens.errors import FormatError, NoModelLoadedError, RewardLensError, UsageError
from reward_lens.gridworld import ENV_NAMES, EnvSpec, sample_transition, transition_to_record
from reward_lens.interpret import OcclusionConfig
from reward_lens.reward_learning import checkpoint_id, load_checkpoint
from reward_lens.tensor_core import RewardNet
from reward_lens.types import (
    EnvListResponse,
    ErrorResponse,
    ModelResponse,
    RewardResponse,
    SaliencyPayload,
    ScenarioReportPayload,
    TransitionRecord,
)

logger = logging.getLogger(__name__)

API_TITLE = "reward-lens"


@dataclass(frozen=True)
class ActiveModel:
    """A loaded network and the id every response computed with it carries."""

    net: RewardNet
    checkpoint: str


class ServiceState:
    """
    Model, environments and occlusion defaults behind the service.

    Handlers take one reference to the active model per request, so a
    concurrent swap is seen either fully or not at all.
    """

    def __init__(
        self,
        envs: Optional[Dict[str, EnvSpec]] = None,
        occlusion: Optional[OcclusionConfig] = None,
    ):
        self._lock = threading.Lock()
        self._active: Optional[ActiveModel] = None
        self.envs = envs or {name: EnvSpec(name) for name in ENV_NAMES}
        self.occlusion = occlusion or OcclusionConfig()

    @property
    def checkpoint(self) -> Optional[str]:
        active = self._active
        return active.checkpoint if active else None

    def active(self) -> ActiveModel:
        """
        Raises:
            NoModelLoadedError: If no model has been loaded yet
        """
        active = self._active
        if active is None:
            raise NoModelLoadedError("No model loaded; POST /api/model/load first")
        return active

    def set_model(self, net: RewardNet) -> str:
        active = ActiveModel(net, checkpoint_id(net))
        with self._lock:
            self._active = active
        logger.info("active model is now %s", active.checkpoint)
        return active.checkpoint

    def load(self, path: Union[str, Path]) -> str:
        """Load a checkpoint file and make it the active model."""
        return self.set_model(load_checkpoint(resolve_path(path)))

    def env(self, name: Any) -> EnvSpec:
        if name not in self.envs:
            raise UsageError(f"Unknown environment {name!r}", details={"known": list(self.envs)})
        return self.envs[name]


def _error_body(code: str, message: str) -> ErrorResponse:
    return {"error": {"code": code, "message": message}}


def _int_field(body: Dict[str, Any], key: str) -> int:
    value = body.get(key, 0)
    if not isinstance(value, int) or isinstance(value, bool):
        raise FormatError(f"'{key}' must be an integer", field=key)
    return value


def create_app(
    state: Optional[ServiceState] = None, ui_dir: Optional[Union[str, Path]] = None
) -> FastAPI:
    """
    Build the service.

    Args:
        state: Shared state; a fresh one with no model when omitted
        ui_dir: Built audit console to serve at ``/``

    Returns:
        The FastAPI application
    """
    state = state or ServiceState()
    app = FastAPI(title=API_TITLE)
    app.state.reward_lens = state

    @app.exception_handler(NoModelLoadedError)
    async def no_model(request: Request, exc: NoModelLoadedError) -> JSONResponse:
        return JSONResponse(status_code=409, content=_error_body(exc.code, exc.message))

    @app.exception_handler(RewardLensError)
    async def bad_input(request: Request, exc: RewardLensError) -> JSONResponse:
        logger.debug("%s %s rejected: %s", request.method, request.url.path, exc)
        return JSONResponse(status_code=400, content=_error_body(exc.code, exc.message))

    @app.exception_handler(RequestValidationError)
    async def invalid_body(request: Request, exc: RequestValidationError) -> JSONResponse:
        body = _error_body(FormatError.default_code, "request body must be a JSON object")
        return JSONResponse(status_code=400, content=body)

    @app.get("/api/model", response_model=None)
    def get_model() -> ModelResponse:
        return {"checkpoint": state.checkpoint}

    @app.post("/api/model/load", response_model=None)
    def load_model(body: Dict[str, Any] = Body(...)) -> ModelResponse:
        path = body.get("path")
        if not isinstance(path, str) or not path:
            raise FormatError("'path' must be a non-empty string", field="path")
        return {"checkpoint": state.load(path)}

    @app.get("/api/envs", response_model=None)
    def list_envs() -> EnvListResponse:
        return {
            "envs": [
                {"name": spec.name, "episode_cap": spec.episode_cap} for spec in state.envs.values()
            ]
        }

    @app.post("/api/env/sample", response_model=None)
    def env_sample(body: Dict[str, Any] = Body(...)) -> TransitionRecord:
        spec = state.env(body.get("env"))
        t = sample_transition(spec, _int_field(body, "seed"), _int_field(body, "step"))
        return transition_to_record(t)

    @app.post("/api/reward", response_model=None)
    def reward(body: Dict[str, Any] = Body(...)) -> RewardResponse:
        s, s_prime = grids_from_body(body)
        active = state.active()
        return reward_payload(active.net, active.checkpoint, s, s_prime)

    @app.post("/api/saliency/gradient", response_model=None)
    def saliency_gradient(body: Dict[str, Any] = Body(...)) -> SaliencyPayload:
        s, s_prime = grids_from_body(body)
        signed = body.get("signed", False)
        if not isinstance(signed, bool):
            raise FormatError("'signed' must be a boolean", field="signed")
        active = state.active()
        return saliency_payload(
            active.net,
            active.checkpoint,
            transition_from_frames(s, s_prime),
            "gradient",
            signed=signed,
        )

    @app.post("/api/saliency/occlusion", response_model=None)
    def saliency_occlusion(body: Dict[str, Any] = Body(...)) -> SaliencyPayload:
        s, s_prime = grids_from_body(body)
        cfg = state.occlusion.with_overrides(occlusion_overrides(body.get("occlusion")))
        active = state.active()
        return saliency_payload(
            active.net, active.checkpoint, transition_from_frames(s, s_prime), "occlusion", cfg
        )

    @app.post("/api/scenario", response_model=None)
    def scenario(body: Dict[str, Any] = Body(...)) -> ScenarioReportPayload:
        active = state.active()
        return scenario_payload_from_body(active.net, active.checkpoint, body)

    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
