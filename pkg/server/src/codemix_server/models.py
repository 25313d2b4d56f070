"""Scoring models behind the endpoints.

The builtin models are deterministic closed-form functions over whitespace
tokens computed with plain `math`, so responses are reproducible bit for bit;
the shared wire fixtures pin their exact outputs. Hub-backed classifiers are
optional and only imported when requested.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Union

NLI_LABELS = ("contradiction", "neutral", "entailment")

EN_ES_LEXICON = {
    "the": "el",
    "a": "un",
    "cat": "gato",
    "dog": "perro",
    "dogs": "perros",
    "sat": "sento",
    "on": "en",
    "mat": "estera",
    "big": "gran",
}
EN_ZH_LEXICON = {"the": "这", "cat": "猫", "sat": "坐"}
LEXICONS: dict[tuple[str, str], dict[str, str]] = {
    ("en", "es"): EN_ES_LEXICON,
    ("en", "zh"): EN_ZH_LEXICON,
}


class ModelError(Exception):
    """A request the loaded model cannot score."""


@dataclass
class LossResult:
    loss: float
    prediction: Union[int, str]
    probs: list[float]
    gold_index: int
    f1: Optional[float] = None


def _types(text: str) -> set[str]:
    return {t.casefold() for t in text.split()}


def _roles(segments: list[dict]) -> dict[str, str]:
    return {seg["role"]: seg["text"] for seg in segments}


def _softmax(scores: list[float]) -> tuple[list[float], float]:
    z = sum(math.exp(s) for s in scores)
    return [math.exp(s) / z for s in scores], z


def overlap_bucket(first: str, second: str) -> int:
    second_types = _types(second)
    if not second_types:
        return 0
    ratio = len(second_types & _types(first)) / len(second_types)
    return min(9, int(ratio * 10))


class OverlapClassifier:
    """Three-way NLI head, linear in the hypothesis-in-premise overlap bucket."""

    task = "classification"

    def score(self, segments: list[dict], gold: dict) -> LossResult:
        roles = _roles(segments)
        premise = roles.get("premise")
        hypothesis = roles.get("hypothesis")
        if premise is None or hypothesis is None:
            raise ModelError("classification needs premise and hypothesis segments")
        label = gold.get("label")
        if not isinstance(label, int) or not 0 <= label < len(NLI_LABELS):
            raise ModelError(f"gold label must be an int in [0, {len(NLI_LABELS)})")
        bucket = overlap_bucket(premise, hypothesis)
        scores = [4.5 - bucket, 0.0, bucket - 4.5]
        probs, z = _softmax(scores)
        return LossResult(
            loss=math.log(z) - scores[label],
            prediction=scores.index(max(scores)),
            probs=probs,
            gold_index=label,
        )


def token_f1(prediction: str, gold: str) -> float:
    pred = Counter(prediction.casefold().split())
    want = Counter(gold.casefold().split())
    common = sum((pred & want).values())
    if not pred or not want or common == 0:
        return 0.0
    precision = common / sum(pred.values())
    recall = common / sum(want.values())
    return 2 * precision * recall / (precision + recall)


class WindowQA:
    """Extractive head: softmax over answer-start tokens, each scored by the
    question tokens inside a fixed window."""

    task = "span_qa"
    WINDOW = 5

    def score(self, segments: list[dict], gold: dict) -> LossResult:
        roles = _roles(segments)
        context = roles.get("context")
        question = roles.get("question")
        if context is None or question is None:
            raise ModelError("span QA needs context and question segments")
        answer = gold.get("text")
        char_start = gold.get("char_start")
        if not isinstance(answer, str) or not isinstance(char_start, int):
            raise ModelError("gold must carry text and char_start")
        tokens = context.split()
        if not tokens:
            raise ModelError("empty context")
        question_types = _types(question)
        scores = [
            float(sum(1 for t in tokens[i : i + self.WINDOW] if t.casefold() in question_types))
            for i in range(len(tokens))
        ]
        # gold start = last token beginning at or before the answer offset
        offsets = []
        cursor = 0
        for tok in tokens:
            start = context.index(tok, cursor)
            offsets.append(start)
            cursor = start + len(tok)
        gold_index = 0
        for i, offset in enumerate(offsets):
            if offset <= char_start:
                gold_index = i
        probs, z = _softmax(scores)
        best = scores.index(max(scores))
        prediction = " ".join(tokens[best : best + max(1, len(answer.split()))])
        return LossResult(
            loss=math.log(z) - scores[gold_index],
            prediction=prediction,
            probs=probs,
            gold_index=gold_index,
            f1=token_f1(prediction, answer),
        )


class HubClassifier:
    """Sequence classifier loaded from a model hub; scoring is eval-mode
    cross-entropy of the model's own distribution against the supplied gold."""

    task = "classification"

    def __init__(self, tokenizer, model) -> None:
        self.tokenizer = tokenizer
        self.model = model

    def score(self, segments: list[dict], gold: dict) -> LossResult:
        import torch

        roles = _roles(segments)
        premise = roles.get("premise")
        hypothesis = roles.get("hypothesis")
        if premise is None or hypothesis is None:
            raise ModelError("classification needs premise and hypothesis segments")
        label = gold.get("label")
        n_classes = int(self.model.config.num_labels)
        if not isinstance(label, int) or not 0 <= label < n_classes:
            raise ModelError(f"gold label must be an int in [0, {n_classes})")
        with torch.no_grad():
            encoded = self.tokenizer(
                premise, hypothesis, return_tensors="pt", truncation=True
            )
            logits = self.model(**encoded).logits[0]
            logprobs = torch.log_softmax(logits, dim=-1)
        return LossResult(
            loss=float(-logprobs[label]),
            prediction=int(logits.argmax()),
            probs=[float(p) for p in logprobs.exp()],
            gold_index=label,
        )


def _load_hub_classifier(name: str) -> HubClassifier:
    try:
        from transformers import AutoModelForSequenceClassification, AutoTokenizer
    except ImportError as exc:
        raise ModelError(f"hub model {name!r} needs transformers installed") from exc
    try:
        tokenizer = AutoTokenizer.from_pretrained(name)
        model = AutoModelForSequenceClassification.from_pretrained(name)
    except Exception as exc:
        raise ModelError(f"cannot load hub model {name!r}: {exc}") from exc
    model.eval()
    return HubClassifier(tokenizer, model)


def load_loss_model(spec: str):
    if spec == "builtin:overlap":
        return OverlapClassifier()
    if spec == "builtin:window-qa":
        return WindowQA()
    if spec.startswith("hub:"):
        return _load_hub_classifier(spec[len("hub:") :])
    raise ModelError(f"unknown loss model {spec!r}")


class LexiconTranslator:
    """Word-by-word lookup; tokens without an entry pass through."""

    def translate(self, source: str, target: str, texts: list[str]) -> list[str]:
        lexicon = LEXICONS.get((source, target))
        if lexicon is None:
            raise ModelError(f"no translation model for {source}->{target}")
        out = []
        for text in texts:
            out.append(" ".join(lexicon.get(t.casefold(), t) for t in text.split()))
        return out


class LexiconAligner:
    """Links identical tokens and lexicon pairs, in index order."""

    def align(self, src_tokens: list[str], tgt_tokens: list[str]) -> list[list[int]]:
        links = []
        for i, src in enumerate(src_tokens):
            key = src.casefold()
            translations = {lex[key] for lex in LEXICONS.values() if key in lex}
            for j, tgt in enumerate(tgt_tokens):
                if tgt.casefold() == key or tgt in translations:
                    links.append([i, j])
        return links
