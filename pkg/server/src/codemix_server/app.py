"""HTTP surface.

Endpoints mirror the client's wire format exactly: POST /v1/loss, /v1/translate,
/v1/align, GET /v1/health. Malformed requests get 400 with {"error": msg},
model failures get 500 with the same envelope. Handlers are async on a single
event loop, so model invocation is serialized and idempotent.
"""

from __future__ import annotations

from dataclasses import dataclass

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .models import LexiconAligner, LexiconTranslator, ModelError, load_loss_model

TASKS = ("classification", "span_qa")


@dataclass
class ServerConfig:
    loss_model: str = "builtin:overlap"
    loss_task: str = "classification"
    max_batch: int = 128
    return_probs: bool = False
    host: str = "127.0.0.1"
    port: int = 8008

    def __post_init__(self) -> None:
        if self.loss_task not in TASKS:
            raise ValueError(f"loss_task must be one of {TASKS}")
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")


class _BadRequest(Exception):
    pass


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


async def _json_body(request: Request) -> dict:
    try:
        body = await request.json()
    except Exception:
        raise _BadRequest("request body is not valid JSON")
    if not isinstance(body, dict):
        raise _BadRequest("request body must be a JSON object")
    return body


def _check_examples(body: dict, config: ServerConfig) -> list[dict]:
    task = body.get("task")
    if task not in TASKS:
        raise _BadRequest(f"task must be one of {TASKS}")
    if task != config.loss_task:
        raise _BadRequest(f"this server scores {config.loss_task}, not {task}")
    examples = body.get("examples")
    if not isinstance(examples, list):
        raise _BadRequest("examples must be a list")
    if not examples:
        raise _BadRequest("empty examples")
    if len(examples) > config.max_batch:
        raise _BadRequest(f"batch of {len(examples)} exceeds max_batch {config.max_batch}")
    for example in examples:
        if not isinstance(example, dict):
            raise _BadRequest("each example must be an object")
        segments = example.get("segments")
        if not isinstance(segments, list) or not segments:
            raise _BadRequest("each example needs a nonempty segments list")
        for seg in segments:
            if (
                not isinstance(seg, dict)
                or not isinstance(seg.get("role"), str)
                or not isinstance(seg.get("text"), str)
            ):
                raise _BadRequest("each segment needs string role and text")
        if not isinstance(example.get("gold"), dict):
            raise _BadRequest("each example needs a gold object")
    return examples


def create_app(config: ServerConfig | None = None) -> FastAPI:
    config = config or ServerConfig()
    model = load_loss_model(config.loss_model)
    if model.task != config.loss_task:
        raise ModelError(
            f"loss model {config.loss_model!r} scores {model.task}, "
            f"but the endpoint is configured for {config.loss_task}"
        )
    translator = LexiconTranslator()
    aligner = LexiconAligner()
    app = FastAPI(title="codemix-server", docs_url=None, redoc_url=None)

    @app.post("/v1/loss")
    async def loss(request: Request) -> JSONResponse:
        try:
            body = await _json_body(request)
            examples = _check_examples(body, config)
        except _BadRequest as exc:
            return _error(400, str(exc))
        records = []
        for example in examples:
            try:
                result = model.score(example["segments"], example["gold"])
            except ModelError as exc:
                return _error(400, str(exc))
            except Exception as exc:
                return _error(500, f"model failure: {exc}")
            record: dict = {"loss": result.loss, "prediction": result.prediction}
            if result.f1 is not None:
                record["f1"] = result.f1
            if config.return_probs:
                record["probs"] = result.probs
                record["gold_index"] = result.gold_index
            records.append(record)
        return JSONResponse({"records": records})

    @app.post("/v1/translate")
    async def translate(request: Request) -> JSONResponse:
        try:
            body = await _json_body(request)
        except _BadRequest as exc:
            return _error(400, str(exc))
        source, target, texts = body.get("source"), body.get("target"), body.get("texts")
        if (
            not isinstance(source, str)
            or not isinstance(target, str)
            or not isinstance(texts, list)
            or not all(isinstance(t, str) for t in texts)
        ):
            return _error(400, "translate needs source, target, and a list of texts")
        try:
            translations = translator.translate(source, target, texts)
        except ModelError as exc:
            return _error(400, str(exc))
        return JSONResponse({"translations": translations})

    @app.post("/v1/align")
    async def align(request: Request) -> JSONResponse:
        try:
            body = await _json_body(request)
        except _BadRequest as exc:
            return _error(400, str(exc))
        src, tgt = body.get("src_tokens"), body.get("tgt_tokens")
        if not all(
            isinstance(side, list) and all(isinstance(t, str) for t in side)
            for side in (src, tgt)
        ):
            return _error(400, "align needs src_tokens and tgt_tokens lists")
        return JSONResponse({"links": aligner.align(src, tgt)})

    @app.get("/v1/health")
    async def health() -> JSONResponse:
        return JSONResponse({"status": "ok"})

    return app
