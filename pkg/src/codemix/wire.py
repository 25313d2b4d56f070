"""JSON wire format shared by the remote oracle, translator, and aligner.

Kept in one module so client and server tests can assert against the same
shapes. All endpoints answer non-200 with a JSON body {"error": "..."}.
"""

from __future__ import annotations

from typing import Any, Optional, Sequence

from .corpus import AnswerSpan, LabeledExample, Task
from .errors import OracleError

LOSS_PATH = "/v1/loss"
TRANSLATE_PATH = "/v1/translate"
ALIGN_PATH = "/v1/align"
HEALTH_PATH = "/v1/health"


def example_to_wire(example: LabeledExample) -> dict[str, Any]:
    gold: dict[str, Any]
    if example.task is Task.CLASSIFICATION:
        gold = {"label": example.label}
    else:
        span: AnswerSpan = example.label  # type: ignore[assignment]
        gold = {"text": span.text, "char_start": span.char_start}
    return {
        "segments": [{"role": seg.role.value, "text": seg.text} for seg in example.segments],
        "gold": gold,
    }


def loss_request(task: Task, examples: Sequence[LabeledExample]) -> dict[str, Any]:
    return {"task": task.value, "examples": [example_to_wire(ex) for ex in examples]}


def parse_loss_response(body: Any, expected: int) -> list[dict[str, Any]]:
    """Validate a loss response body and return its records."""
    if not isinstance(body, dict) or not isinstance(body.get("records"), list):
        raise OracleError(f"malformed loss response: {body!r}")
    records = body["records"]
    if len(records) != expected:
        raise OracleError(f"loss response has {len(records)} records, expected {expected}")
    for rec in records:
        if not isinstance(rec, dict) or "loss" not in rec or "prediction" not in rec:
            raise OracleError(f"malformed loss record: {rec!r}")
        if not isinstance(rec["loss"], (int, float)) or rec["loss"] < 0:
            raise OracleError(f"bad loss value: {rec.get('loss')!r}")
    return records


def translate_request(source: str, target: str, texts: Sequence[str]) -> dict[str, Any]:
    return {"source": source, "target": target, "texts": list(texts)}


def parse_translate_response(body: Any, expected: int) -> list[str]:
    if not isinstance(body, dict) or not isinstance(body.get("translations"), list):
        raise OracleError(f"malformed translate response: {body!r}")
    out = body["translations"]
    if len(out) != expected or not all(isinstance(t, str) for t in out):
        raise OracleError(f"translate response has wrong shape: {body!r}")
    return out


def align_request(src_tokens: Sequence[str], tgt_tokens: Sequence[str]) -> dict[str, Any]:
    return {"src_tokens": list(src_tokens), "tgt_tokens": list(tgt_tokens)}


def parse_align_response(body: Any, n_src: int, n_tgt: int) -> set[tuple[int, int]]:
    if not isinstance(body, dict) or not isinstance(body.get("links"), list):
        raise OracleError(f"malformed align response: {body!r}")
    links = set()
    for pair in body["links"]:
        if (
            not isinstance(pair, (list, tuple))
            or len(pair) != 2
            or not all(isinstance(x, int) for x in pair)
        ):
            raise OracleError(f"malformed align link: {pair!r}")
        i, j = pair
        if not (0 <= i < n_src and 0 <= j < n_tgt):
            raise OracleError(f"align link {pair!r} out of range for {n_src}x{n_tgt}")
        links.add((i, j))
    return links


def error_body(body: Any) -> Optional[str]:
    if isinstance(body, dict) and isinstance(body.get("error"), str):
        return body["error"]
    return None
