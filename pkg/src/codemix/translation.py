"""Translation providers and a persistent per-segment translation store.

Translations are cached by (example id, segment role, target language) and
fetched from a provider only on a miss, so repeated attacks over the same
dataset never re-translate. Gold parallel corpora (pre-translated test sets)
load straight into the store, which is the usual offline path.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Protocol, Union

import httpx

from . import wire
from .corpus import LabeledExample, LanguageTag, Segment, SegmentRole, tokenize
from .errors import DataError, TranslationError


class TranslationProvider(Protocol):
    def translate(self, text: str, source: LanguageTag, target: LanguageTag) -> str: ...


StoreKey = tuple[str, SegmentRole, str]  # (example id, role, target language code)


@dataclass
class TranslationStore:
    entries: dict[StoreKey, Segment] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def languages(self) -> list[str]:
        return sorted({k[2] for k in self.entries})

    def put(self, example_id: str, role: SegmentRole, lang: LanguageTag, text: str) -> Segment:
        seg = Segment.from_text(text, role, lang)
        self.entries[(example_id, role, lang.code)] = seg
        return seg

    def get(
        self, example: LabeledExample, role: SegmentRole, lang: LanguageTag
    ) -> Optional[Segment]:
        hit = self.entries.get((example.id, role, lang.code))
        if hit is not None:
            return hit
        # Gold parallel files are keyed by bare pair id; example ids carry a
        # ":<matrix lang>" suffix, so retry with it stripped.
        suffix = ":" + example.matrix_language.code
        if example.id.endswith(suffix):
            return self.entries.get((example.id[: -len(suffix)], role, lang.code))
        return None


def get_translations(
    example: LabeledExample,
    langs: Iterable[LanguageTag],
    store: TranslationStore,
    provider: Optional[TranslationProvider] = None,
) -> dict[tuple[SegmentRole, str], Segment]:
    """Translations of every attackable segment into every requested language.

    Cache-first; misses go to the provider and are written back. A miss with
    no provider is an error naming the example and language.
    """
    out: dict[tuple[SegmentRole, str], Segment] = {}
    for lang in langs:
        for _, seg in example.attackable_segments():
            hit = store.get(example, seg.role, lang)
            if hit is None:
                if provider is None:
                    raise TranslationError(
                        f"no {lang.code} translation for example {example.id} "
                        f"segment {seg.role.value} and no provider configured"
                    )
                text = provider.translate(seg.raw, example.matrix_language, lang)
                hit = store.put(example.id, seg.role, lang, text)
            out[(seg.role, lang.code)] = hit
    return out


_ROLE_FIELDS = tuple(role.value for role in SegmentRole)


def load_gold_parallel(path: Union[str, Path]) -> TranslationStore:
    """Load a pre-translated classification test set.

    Rows: {"pair_id": ..., "language": ..., "premise": ..., "hypothesis": ...}.
    Premise and hypothesis are both required here; use load_store for files
    with arbitrary role subsets.
    """
    store = _load_rows(path, required=("premise", "hypothesis"))
    return store


def load_store(path: Union[str, Path]) -> TranslationStore:
    return _load_rows(path, required=())


def _load_rows(path: Union[str, Path], required: tuple[str, ...]) -> TranslationStore:
    store = TranslationStore()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {lineno}: bad JSON: {exc}") from exc
            for name in ("pair_id", "language", *required):
                if name not in row:
                    raise DataError(f"line {lineno}: missing field {name}")
            pair_id = str(row["pair_id"])
            lang = LanguageTag(str(row["language"]))
            wrote = False
            for role in SegmentRole:
                text = row.get(role.value)
                if text is None:
                    continue
                key = (pair_id, role, lang.code)
                if key in store.entries:
                    raise DataError(
                        f"line {lineno}: duplicate entry for ({pair_id}, {role.value}, {lang.code})"
                    )
                store.put(pair_id, role, lang, str(text))
                wrote = True
            if not wrote:
                raise DataError(f"line {lineno}: no segment fields present")
    return store


def save_store(store: TranslationStore, path: Union[str, Path]) -> None:
    """Persist the store as gold-parallel JSONL; load_store round-trips it."""
    rows: dict[tuple[str, str], dict[str, str]] = {}
    for (example_id, role, code), seg in store.entries.items():
        rows.setdefault((example_id, code), {})[role.value] = seg.raw
    with open(path, "w", encoding="utf-8") as f:
        for (example_id, code) in sorted(rows):
            row: dict[str, str] = {"pair_id": example_id, "language": code}
            for name in _ROLE_FIELDS:
                if name in rows[(example_id, code)]:
                    row[name] = rows[(example_id, code)][name]
            f.write(json.dumps(row, ensure_ascii=False) + "\n")


class WordMapProvider:
    """Deterministic word-substitution translator.

    Maps each token through a per-language dictionary (identity when absent).
    Good enough to drive alignment and extraction end to end without an MT
    system, and the shape the builtin model server uses too.
    """

    def __init__(self, maps: dict[str, dict[str, str]]) -> None:
        self.maps = maps
        self.calls = 0

    def translate(self, text: str, source: LanguageTag, target: LanguageTag) -> str:
        self.calls += 1
        table = self.maps.get(target.code)
        if table is None:
            raise TranslationError(f"no word map for language {target.code}")
        src_tokens = tokenize(text, source)
        out = [table.get(tok, table.get(tok.lower(), tok)) for tok in src_tokens]
        return " ".join(out)


class RemoteTranslationProvider:
    """Client for the /v1/translate endpoint of a model server."""

    def __init__(
        self,
        base_url: str,
        timeout: float = 30.0,
        transport: Optional[httpx.BaseTransport] = None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self._client = httpx.Client(timeout=timeout, transport=transport)
        self._lock = threading.Lock()
        self.calls = 0

    def translate(self, text: str, source: LanguageTag, target: LanguageTag) -> str:
        body = wire.translate_request(source.code, target.code, [text])
        try:
            resp = self._client.post(self.base_url + wire.TRANSLATE_PATH, json=body)
        except httpx.HTTPError as exc:
            raise TranslationError(f"translate request failed: {exc}") from exc
        if resp.status_code != 200:
            detail = wire.error_body(_safe_json(resp)) or resp.text
            raise TranslationError(f"translate returned {resp.status_code}: {detail}")
        with self._lock:
            self.calls += 1
        try:
            return wire.parse_translate_response(resp.json(), 1)[0]
        except Exception as exc:
            raise TranslationError(str(exc)) from exc

    def close(self) -> None:
        self._client.close()


def _safe_json(resp: httpx.Response):
    try:
        return resp.json()
    except ValueError:
        return None
