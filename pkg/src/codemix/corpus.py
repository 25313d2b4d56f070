"""Data model and loaders for classification and span-QA datasets.

Tokenization is deliberately simple: whitespace splitting, with a per-character
fallback for Han and Thai runs so scripts written without spaces still yield
usable token positions. Real segmenters can be registered per language code,
but nothing in the toolkit requires one.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional, Union

from .errors import DataError

_LANG_CODE_RE = re.compile(r"^[a-z]{2,3}$")


class Script(Enum):
    LATIN = "Latin"
    CYRILLIC = "Cyrillic"
    GREEK = "Greek"
    ARABIC = "Arabic"
    HEBREW = "Hebrew"
    DEVANAGARI = "Devanagari"
    HAN = "Han"
    THAI = "Thai"
    OTHER = "Other"


# Default script per ISO 639-1 code, for the languages that show up in the
# bundled dictionaries and tests. Unknown codes fall back to LATIN, which only
# affects the tokenizer choice (whitespace splitting).
_SCRIPT_BY_CODE = {
    "ru": Script.CYRILLIC,
    "bg": Script.CYRILLIC,
    "uk": Script.CYRILLIC,
    "mk": Script.CYRILLIC,
    "sr": Script.CYRILLIC,
    "el": Script.GREEK,
    "ar": Script.ARABIC,
    "fa": Script.ARABIC,
    "ur": Script.ARABIC,
    "he": Script.HEBREW,
    "hi": Script.DEVANAGARI,
    "mr": Script.DEVANAGARI,
    "ne": Script.DEVANAGARI,
    "zh": Script.HAN,
    "ja": Script.HAN,
    "th": Script.THAI,
}


@dataclass(frozen=True)
class LanguageTag:
    """A language code plus the script its text is written in."""

    code: str
    script: Script = field(default=None, compare=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if not _LANG_CODE_RE.match(self.code):
            raise DataError(f"bad language code {self.code!r}: want 2-3 lowercase letters")
        if self.script is None:
            object.__setattr__(self, "script", _SCRIPT_BY_CODE.get(self.code, Script.LATIN))

    def __str__(self) -> str:
        return self.code


class SegmentRole(Enum):
    PREMISE = "premise"
    HYPOTHESIS = "hypothesis"
    CONTEXT = "context"
    QUESTION = "question"


class Task(Enum):
    CLASSIFICATION = "classification"
    SPAN_QA = "span_qa"


# NLI label order is fixed so integer labels are comparable across files.
NLI_LABELS = ("contradiction", "neutral", "entailment")
_NLI_LABEL_TO_ID = {name: i for i, name in enumerate(NLI_LABELS)}

# Which segments an attack may rewrite, per task. For QA the context holds the
# answer span and must stay verbatim, so only the question is fair game.
ATTACKABLE_ROLES = {
    Task.CLASSIFICATION: (SegmentRole.PREMISE, SegmentRole.HYPOTHESIS),
    Task.SPAN_QA: (SegmentRole.QUESTION,),
}


def _is_cjk_char(ch: str) -> bool:
    cp = ord(ch)
    return (
        0x4E00 <= cp <= 0x9FFF
        or 0x3400 <= cp <= 0x4DBF
        or 0xF900 <= cp <= 0xFAFF
        or 0x0E00 <= cp <= 0x0E7F  # Thai block
    )


def _is_cjk_token(token: str) -> bool:
    return len(token) == 1 and _is_cjk_char(token)


_TOKENIZER_REGISTRY: dict[str, Callable[[str], list[str]]] = {}


def register_tokenizer(code: str, fn: Optional[Callable[[str], list[str]]]) -> None:
    """Attach (or with fn=None, detach) an external tokenizer for a language."""
    if fn is None:
        _TOKENIZER_REGISTRY.pop(code, None)
    else:
        _TOKENIZER_REGISTRY[code] = fn


def tokenize(text: str, lang: LanguageTag) -> list[str]:
    custom = _TOKENIZER_REGISTRY.get(lang.code)
    if custom is not None:
        return [t for t in custom(text) if t]
    parts = text.split()
    if lang.script not in (Script.HAN, Script.THAI):
        return parts
    tokens: list[str] = []
    for part in parts:
        run = ""
        for ch in part:
            if _is_cjk_char(ch):
                if run:
                    tokens.append(run)
                    run = ""
                tokens.append(ch)
            else:
                run += ch
        if run:
            tokens.append(run)
    return tokens


def detokenize(tokens: Iterable[str]) -> str:
    """Join tokens with spaces, gluing adjacent single Han/Thai characters.

    The rule keys on the tokens themselves rather than on a language tag, so
    code-mixed sequences render sensibly: tokenize(detokenize(t)) == t holds
    for anything tokenize() can produce.
    """
    out: list[str] = []
    prev_cjk = False
    for tok in tokens:
        cur_cjk = _is_cjk_token(tok)
        if out and not (prev_cjk and cur_cjk):
            out.append(" ")
        out.append(tok)
        prev_cjk = cur_cjk
    return "".join(out)


@dataclass(frozen=True)
class Segment:
    role: SegmentRole
    tokens: tuple[str, ...]
    raw: str

    @classmethod
    def from_text(cls, text: str, role: SegmentRole, lang: LanguageTag) -> "Segment":
        return cls(role=role, tokens=tuple(tokenize(text, lang)), raw=text)

    @property
    def text(self) -> str:
        return detokenize(self.tokens)


@dataclass(frozen=True)
class AnswerSpan:
    text: str
    char_start: int


@dataclass(frozen=True)
class LabeledExample:
    id: str
    task: Task
    segments: tuple[Segment, ...]
    label: Union[int, AnswerSpan]
    matrix_language: LanguageTag

    def __post_init__(self) -> None:
        if self.task is Task.CLASSIFICATION:
            if not isinstance(self.label, int) or self.label < 0:
                raise DataError(f"example {self.id}: classification label must be a non-negative int")
        else:
            if not isinstance(self.label, AnswerSpan):
                raise DataError(f"example {self.id}: span-QA label must be an answer span")
        roles = [s.role for s in self.segments]
        if len(set(roles)) != len(roles):
            raise DataError(f"example {self.id}: duplicate segment roles")

    def segment(self, role: SegmentRole) -> Segment:
        for seg in self.segments:
            if seg.role is role:
                return seg
        raise KeyError(role)

    def attackable_segments(self) -> list[tuple[int, Segment]]:
        """Segments an attack may rewrite, as (segment index, segment) pairs."""
        roles = ATTACKABLE_ROLES[self.task]
        return [(i, s) for i, s in enumerate(self.segments) if s.role in roles]

    def with_segments(self, segments: tuple[Segment, ...]) -> "LabeledExample":
        return LabeledExample(
            id=self.id,
            task=self.task,
            segments=segments,
            label=self.label,
            matrix_language=self.matrix_language,
        )

    def with_id(self, new_id: str) -> "LabeledExample":
        return LabeledExample(
            id=new_id,
            task=self.task,
            segments=self.segments,
            label=self.label,
            matrix_language=self.matrix_language,
        )


@dataclass(frozen=True)
class Dataset:
    examples: tuple[LabeledExample, ...]
    label_names: tuple[str, ...] = NLI_LABELS

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for ex in self.examples:
            if ex.id in seen:
                raise DataError(f"duplicate example id {ex.id!r}")
            seen.add(ex.id)

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self) -> Iterator[LabeledExample]:
        return iter(self.examples)


def _require(obj: dict, name: str, lineno: int):
    if name not in obj:
        raise DataError(f"line {lineno}: missing field {name}")
    return obj[name]


def load_classification_jsonl(path: Union[str, Path]) -> Dataset:
    """Read NLI-style rows: pair_id, premise, hypothesis, label, language."""
    examples = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {lineno}: bad JSON: {exc}") from exc
            pair_id = _require(row, "pair_id", lineno)
            premise = _require(row, "premise", lineno)
            hypothesis = _require(row, "hypothesis", lineno)
            label_name = _require(row, "label", lineno)
            lang_code = _require(row, "language", lineno)
            if label_name not in _NLI_LABEL_TO_ID:
                raise DataError(f"line {lineno}: unknown label {label_name!r}")
            lang = LanguageTag(str(lang_code))
            segs = (
                Segment.from_text(str(premise), SegmentRole.PREMISE, lang),
                Segment.from_text(str(hypothesis), SegmentRole.HYPOTHESIS, lang),
            )
            if not segs[0].tokens or not segs[1].tokens:
                raise DataError(f"line {lineno}: empty premise or hypothesis")
            examples.append(
                LabeledExample(
                    id=f"{pair_id}:{lang.code}",
                    task=Task.CLASSIFICATION,
                    segments=segs,
                    label=_NLI_LABEL_TO_ID[label_name],
                    matrix_language=lang,
                )
            )
    return Dataset(examples=tuple(examples))


def save_classification_jsonl(dataset: Dataset, path: Union[str, Path]) -> None:
    """Inverse of load_classification_jsonl, up to tokenization of the text."""
    with open(path, "w", encoding="utf-8") as f:
        for ex in dataset:
            if ex.task is not Task.CLASSIFICATION:
                raise DataError(f"example {ex.id}: not a classification example")
            code = ex.matrix_language.code
            pair_id = ex.id
            base, sep, tail = pair_id.partition("#")
            if base.endswith(":" + code):
                pair_id = base[: -(len(code) + 1)] + sep + tail
            row = {
                "pair_id": pair_id,
                "premise": ex.segment(SegmentRole.PREMISE).text,
                "hypothesis": ex.segment(SegmentRole.HYPOTHESIS).text,
                "label": dataset.label_names[ex.label],
                "language": code,
            }
            f.write(json.dumps(row, ensure_ascii=False) + "\n")


def load_spanqa_json(path: Union[str, Path], lang_code: str = "en") -> Dataset:
    """Read a SQuAD-1.1-shaped JSON file; keeps the first answer per question."""
    lang = LanguageTag(lang_code)
    with open(path, encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: bad JSON: {exc}") from exc
    examples = []
    for article in doc.get("data", []):
        for para in article.get("paragraphs", []):
            context = para.get("context")
            if context is None:
                raise DataError(f"{path}: paragraph missing context")
            for qa in para.get("qas", []):
                qid = qa.get("id")
                question = qa.get("question")
                answers = qa.get("answers")
                if qid is None or question is None:
                    raise DataError(f"{path}: qa missing id or question")
                if not answers:
                    raise DataError(f"{path}: qa {qid}: missing answers")
                ans = answers[0]
                text, start = ans.get("text"), ans.get("answer_start")
                if text is None or start is None:
                    raise DataError(f"{path}: qa {qid}: malformed answer")
                if context[start : start + len(text)] != text:
                    raise DataError(f"{path}: qa {qid}: answer not found in context at {start}")
                segs = (
                    Segment.from_text(context, SegmentRole.CONTEXT, lang),
                    Segment.from_text(question, SegmentRole.QUESTION, lang),
                )
                if not segs[1].tokens:
                    raise DataError(f"{path}: qa {qid}: empty question")
                examples.append(
                    LabeledExample(
                        id=str(qid),
                        task=Task.SPAN_QA,
                        segments=segs,
                        label=AnswerSpan(text=text, char_start=int(start)),
                        matrix_language=lang,
                    )
                )
    return Dataset(examples=tuple(examples))
