"""Loss oracles: the black-box interface every attack optimizes against.

An oracle scores candidate examples and returns, per candidate, the loss of
the victim model against the gold label plus its prediction. Two backends:
a local bag-of-features surrogate (classification only, used for tests and
offline work) and a remote model server speaking the shared wire format.
"""

from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Union

import httpx

from . import wire
from .corpus import LabeledExample, Task
from .errors import ConfigError, OracleError

N_OVERLAP_BUCKETS = 10


class OracleBackend(Enum):
    SURROGATE = "surrogate"
    REMOTE = "remote"


@dataclass
class OracleConfig:
    backend: OracleBackend = OracleBackend.SURROGATE
    endpoint: Optional[str] = None
    batch_size: int = 32
    success_f1_threshold: float = 0.5
    timeout: float = 30.0
    retries: int = 3
    retry_base_delay: float = 0.25

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.backend is OracleBackend.REMOTE and not self.endpoint:
            raise ConfigError("remote oracle needs an endpoint")


@dataclass(frozen=True)
class LossRecord:
    """One scored candidate: gold-label loss, model output, success flag."""

    loss: float
    prediction: Union[int, str]
    success: bool
    f1: Optional[float] = None

    def __post_init__(self) -> None:
        if self.loss < 0:
            raise OracleError(f"negative loss {self.loss}")


def overlap_bucket(example: LabeledExample) -> int:
    """Discretized token overlap between the first two segments.

    Share of second-segment types also present in the first segment, mapped
    to 10 buckets. This is the feature the stock surrogate trains on.
    """
    if len(example.segments) < 2:
        raise OracleError("overlap feature needs two segments")
    first = {t.lower() for t in example.segments[0].tokens}
    second = {t.lower() for t in example.segments[1].tokens}
    if not second:
        return 0
    ratio = len(first & second) / len(second)
    bucket = int(ratio * N_OVERLAP_BUCKETS)
    return min(bucket, N_OVERLAP_BUCKETS - 1)


@dataclass
class SurrogateModel:
    """Linear bag-of-features classifier with a softmax read-out.

    Features are lowercased tokens ("tok:...") plus the overlap bucket
    ("ovl:b"). With all-zero weights every class scores equally and the loss
    is ln(n_classes).
    """

    n_classes: int
    weights: tuple[dict[str, float], ...]
    bias: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.weights) != self.n_classes or len(self.bias) != self.n_classes:
            raise ConfigError("weights/bias must have one entry per class")

    @staticmethod
    def features(example: LabeledExample) -> list[str]:
        feats = [
            f"tok:{tok.lower()}" for seg in example.segments for tok in seg.tokens
        ]
        feats.append(f"ovl:{overlap_bucket(example)}")
        return feats

    def scores(self, example: LabeledExample) -> list[float]:
        feats = self.features(example)
        out = []
        for c in range(self.n_classes):
            w = self.weights[c]
            s = self.bias[c]
            for f in feats:
                if f in w:
                    s += w[f]
            out.append(s)
        return out

    def record(self, example: LabeledExample) -> LossRecord:
        if example.task is not Task.CLASSIFICATION:
            raise OracleError("surrogate oracle only scores classification examples")
        gold = example.label
        if not isinstance(gold, int) or gold >= self.n_classes:
            raise OracleError(f"example {example.id}: label {gold!r} out of range")
        scores = self.scores(example)
        m = max(scores)
        logsumexp = m + math.log(sum(math.exp(s - m) for s in scores))
        loss = logsumexp - scores[gold]
        prediction = scores.index(m)  # ties resolve to the lowest class index
        return LossRecord(
            loss=loss, prediction=prediction, success=prediction != gold, f1=None
        )


def build_overlap_surrogate(
    train: Sequence[LabeledExample], n_classes: int = 3, smoothing: float = 1.0
) -> SurrogateModel:
    """Fit a naive-Bayes-style model over the overlap bucket alone.

    Scores are log joint probabilities, so the softmax read-out recovers the
    class posterior. Token features get zero weight; only the bucket counts.
    """
    if not train:
        raise ConfigError("empty training set")
    class_counts = [0] * n_classes
    bucket_counts = [[0] * N_OVERLAP_BUCKETS for _ in range(n_classes)]
    for ex in train:
        if ex.task is not Task.CLASSIFICATION or not isinstance(ex.label, int):
            raise OracleError("overlap surrogate trains on classification data")
        if ex.label >= n_classes:
            raise OracleError(f"label {ex.label} out of range for {n_classes} classes")
        class_counts[ex.label] += 1
        bucket_counts[ex.label][overlap_bucket(ex)] += 1
    total = sum(class_counts)
    bias = tuple(
        math.log((class_counts[c] + smoothing) / (total + n_classes * smoothing))
        for c in range(n_classes)
    )
    weights = tuple(
        {
            f"ovl:{b}": math.log(
                (bucket_counts[c][b] + smoothing)
                / (class_counts[c] + N_OVERLAP_BUCKETS * smoothing)
            )
            for b in range(N_OVERLAP_BUCKETS)
        }
        for c in range(n_classes)
    )
    return SurrogateModel(n_classes=n_classes, weights=weights, bias=bias)


class SurrogateOracle:
    def __init__(self, model: SurrogateModel, config: Optional[OracleConfig] = None) -> None:
        self.model = model
        self.config = config or OracleConfig()
        self._lock = threading.Lock()
        self.queries = 0

    def query_losses(self, candidates: Sequence[LabeledExample]) -> list[LossRecord]:
        records = [self.model.record(ex) for ex in candidates]
        with self._lock:
            self.queries += len(candidates)
        return records


class RemoteOracle:
    """Client for the /v1/loss endpoint.

    Batches candidates, preserves order, retries transient failures with
    exponential backoff, and counts every scored candidate.
    """

    def __init__(
        self,
        config: OracleConfig,
        transport: Optional[httpx.BaseTransport] = None,
    ) -> None:
        if not config.endpoint:
            raise ConfigError("remote oracle needs an endpoint")
        self.config = config
        self.base_url = config.endpoint.rstrip("/")
        self._client = httpx.Client(timeout=config.timeout, transport=transport)
        self._lock = threading.Lock()
        self.queries = 0

    def query_losses(self, candidates: Sequence[LabeledExample]) -> list[LossRecord]:
        if not candidates:
            return []
        task = candidates[0].task
        if any(ex.task is not task for ex in candidates):
            raise OracleError("mixed tasks in one batch")
        records: list[LossRecord] = []
        size = self.config.batch_size
        for start in range(0, len(candidates), size):
            batch = candidates[start : start + size]
            records.extend(self._query_batch(task, batch))
        with self._lock:
            self.queries += len(candidates)
        return records

    def _query_batch(
        self, task: Task, batch: Sequence[LabeledExample]
    ) -> list[LossRecord]:
        body = wire.loss_request(task, batch)
        url = self.base_url + wire.LOSS_PATH
        last_error: Optional[str] = None
        for attempt in range(self.config.retries + 1):
            if attempt:
                time.sleep(self.config.retry_base_delay * (2 ** (attempt - 1)))
            try:
                resp = self._client.post(url, json=body)
            except httpx.HTTPError as exc:
                last_error = f"transport error: {exc}"
                continue
            if 400 <= resp.status_code < 500:
                detail = wire.error_body(_safe_json(resp)) or resp.text
                raise OracleError(f"loss endpoint rejected request ({resp.status_code}): {detail}")
            if resp.status_code != 200:
                detail = wire.error_body(_safe_json(resp)) or resp.text
                last_error = f"server error {resp.status_code}: {detail}"
                continue
            try:
                raw = wire.parse_loss_response(resp.json(), len(batch))
            except (OracleError, ValueError) as exc:
                last_error = str(exc)
                continue
            return [self._to_record(task, ex, rec) for ex, rec in zip(batch, raw)]
        raise OracleError(f"loss query failed after {self.config.retries + 1} attempts: {last_error}")

    def _to_record(self, task: Task, example: LabeledExample, rec: dict) -> LossRecord:
        loss = float(rec["loss"])
        prediction = rec["prediction"]
        f1 = rec.get("f1")
        if task is Task.CLASSIFICATION:
            if not isinstance(prediction, int):
                raise OracleError(f"classification prediction must be int, got {prediction!r}")
            success = prediction != example.label
        else:
            if not isinstance(prediction, str):
                raise OracleError(f"span prediction must be a string, got {prediction!r}")
            if not isinstance(f1, (int, float)):
                raise OracleError("span_qa loss record must carry f1")
            success = f1 < self.config.success_f1_threshold
        return LossRecord(
            loss=loss,
            prediction=prediction,
            success=success,
            f1=float(f1) if f1 is not None else None,
        )

    def close(self) -> None:
        self._client.close()


Oracle = Union[SurrogateOracle, RemoteOracle]


def make_oracle(
    config: OracleConfig,
    model: Optional[SurrogateModel] = None,
    transport: Optional[httpx.BaseTransport] = None,
) -> Oracle:
    if config.backend is OracleBackend.SURROGATE:
        if model is None:
            raise ConfigError("surrogate oracle needs a model")
        return SurrogateOracle(model, config)
    return RemoteOracle(config, transport=transport)


def query_losses(
    candidates: Sequence[LabeledExample], oracle: Oracle
) -> list[LossRecord]:
    """Order-preserving convenience wrapper over an oracle instance."""
    return oracle.query_losses(candidates)


def _safe_json(resp: httpx.Response):
    try:
        return resp.json()
    except ValueError:
        return None
