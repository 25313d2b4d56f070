"""Shared builders and test doubles."""

from __future__ import annotations

import threading
from typing import Callable, Optional, Sequence

from codemix.corpus import (
    AnswerSpan,
    Dataset,
    LabeledExample,
    LanguageTag,
    Segment,
    SegmentRole,
    Task,
)
from codemix.errors import OracleError
from codemix.oracle import LossRecord
from codemix.translation import TranslationStore, WordMapProvider, get_translations

EN = LanguageTag("en")


def mk_example(
    premise: str,
    hypothesis: str,
    label: int = 0,
    ex_id: str = "p1:en",
    lang: LanguageTag = EN,
) -> LabeledExample:
    return LabeledExample(
        id=ex_id,
        task=Task.CLASSIFICATION,
        segments=(
            Segment.from_text(premise, SegmentRole.PREMISE, lang),
            Segment.from_text(hypothesis, SegmentRole.HYPOTHESIS, lang),
        ),
        label=label,
        matrix_language=lang,
    )


def mk_qa_example(
    context: str,
    question: str,
    answer: str,
    ex_id: str = "q1",
    lang: LanguageTag = EN,
) -> LabeledExample:
    start = context.index(answer)
    return LabeledExample(
        id=ex_id,
        task=Task.SPAN_QA,
        segments=(
            Segment.from_text(context, SegmentRole.CONTEXT, lang),
            Segment.from_text(question, SegmentRole.QUESTION, lang),
        ),
        label=AnswerSpan(text=answer, char_start=start),
        matrix_language=lang,
    )


def fill_store(
    dataset: Dataset | Sequence[LabeledExample],
    maps: dict[str, dict[str, str]],
) -> TranslationStore:
    """Translate every attackable segment of every example through word maps."""
    store = TranslationStore()
    provider = WordMapProvider(maps)
    langs = [LanguageTag(code) for code in sorted(maps)]
    for example in dataset:
        get_translations(example, langs, store, provider)
    return store


class ScriptedOracle:
    """Classification oracle driven by a loss function over rendered text.

    loss_fn gets the space-joined attackable text; prediction flips away from
    gold when the loss crosses `flip_at`.
    """

    def __init__(
        self,
        loss_fn: Callable[[str], float],
        flip_at: float,
        fail_after: Optional[int] = None,
    ) -> None:
        self.loss_fn = loss_fn
        self.flip_at = flip_at
        self.fail_after = fail_after
        self.queries = 0
        self.seen: list[str] = []
        self._lock = threading.Lock()

    @staticmethod
    def text_of(example: LabeledExample) -> str:
        parts = [seg.text for _, seg in example.attackable_segments()]
        return " ".join(parts)

    def query_losses(self, candidates: Sequence[LabeledExample]) -> list[LossRecord]:
        with self._lock:
            if self.fail_after is not None and self.queries + len(candidates) > self.fail_after:
                raise OracleError("scripted failure")
            self.queries += len(candidates)
        records = []
        for ex in candidates:
            text = self.text_of(ex)
            with self._lock:
                self.seen.append(text)
            loss = self.loss_fn(text)
            gold = ex.label
            assert isinstance(gold, int)
            prediction = gold if loss < self.flip_at else (gold + 1) % 3
            records.append(
                LossRecord(loss=loss, prediction=prediction, success=prediction != gold, f1=None)
            )
        return records
