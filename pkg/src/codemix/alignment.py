"""Statistical word alignment and phrase-pair extraction.

A small translation model (EM over cooccurring word pairs, direction
p(target | source)) scores token links between a sentence and its
translation. Links come from either an exact max-weight matching with
deterministic tie-breaking or an argmax intersection, and consistent phrase
pairs are read off the link set for use as substitution candidates.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

import httpx

from . import kernels, wire
from .corpus import LabeledExample, LanguageTag, Segment, SegmentRole
from .errors import DataError, TranslationError
from .translation import TranslationStore, get_translations

log = logging.getLogger(__name__)

DEFAULT_MAX_PHRASE_LEN = 4
DEFAULT_EM_ITERATIONS = 5


class AlignMethod(Enum):
    MATCH = "match"
    INTERSECT = "intersect"


@dataclass
class TranslationProbTable:
    """p(target word | source word), defined only on cooccurring pairs."""

    source_lang: LanguageTag
    target_lang: LanguageTag
    probs: dict[tuple[str, str], float] = field(default_factory=dict)
    skipped_sentences: int = 0
    _by_source: Optional[dict[str, dict[str, float]]] = field(
        default=None, repr=False, compare=False
    )

    def prob(self, source: str, target: str) -> float:
        return self.probs.get((source, target), 0.0)

    def by_source(self, source: str) -> dict[str, float]:
        if self._by_source is None:
            index: dict[str, dict[str, float]] = {}
            for (s, t), p in self.probs.items():
                index.setdefault(s, {})[t] = p
            self._by_source = index
        return self._by_source.get(source, {})

    def check_normalized(self, tol: float = 1e-6) -> None:
        sums: dict[str, float] = {}
        for (s, _), p in self.probs.items():
            sums[s] = sums.get(s, 0.0) + p
        for s, total in sums.items():
            if abs(total - 1.0) > tol:
                raise DataError(f"probabilities for source {s!r} sum to {total}, not 1")


def train_ibm1(
    bitext: Sequence[tuple[Sequence[str], Sequence[str]]],
    source_lang: LanguageTag,
    target_lang: LanguageTag,
    iterations: int = DEFAULT_EM_ITERATIONS,
    backend=None,
) -> TranslationProbTable:
    """EM-train link probabilities on tokenized sentence pairs.

    Initialization is uniform over the targets each source cooccurs with; no
    null word. Empty sentences are skipped with a warning.
    """
    if iterations < 1:
        raise DataError("iterations must be >= 1")
    src_ids: dict[str, int] = {}
    tgt_ids: dict[str, int] = {}
    encoded = []
    skipped = 0
    for src, tgt in bitext:
        if not src or not tgt:
            skipped += 1
            continue
        encoded.append(
            (
                [src_ids.setdefault(w, len(src_ids)) for w in src],
                [tgt_ids.setdefault(w, len(tgt_ids)) for w in tgt],
            )
        )
    if skipped:
        log.warning("train_ibm1: skipped %d empty sentence pair(s)", skipped)
    pair_probs = kernels.ibm1_probs(encoded, iterations, backend=backend)
    src_words = {i: w for w, i in src_ids.items()}
    tgt_words = {i: w for w, i in tgt_ids.items()}
    probs = {(src_words[si], tgt_words[ti]): p for (si, ti), p in pair_probs.items()}
    return TranslationProbTable(
        source_lang=source_lang,
        target_lang=target_lang,
        probs=probs,
        skipped_sentences=skipped,
    )


def save_prob_table(table: TranslationProbTable, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        header = {
            "source_lang": table.source_lang.code,
            "target_lang": table.target_lang.code,
        }
        f.write(json.dumps(header, ensure_ascii=False) + "\n")
        for (s, t) in sorted(table.probs):
            row = {"source": s, "target": t, "prob": table.probs[(s, t)]}
            f.write(json.dumps(row, ensure_ascii=False) + "\n")


def load_prob_table(path: Union[str, Path]) -> TranslationProbTable:
    with open(path, encoding="utf-8") as f:
        lines = [ln for ln in (ln.strip() for ln in f) if ln]
    if not lines:
        raise DataError(f"{path}: empty probability table")
    header = json.loads(lines[0])
    probs = {}
    for ln in lines[1:]:
        row = json.loads(ln)
        probs[(row["source"], row["target"])] = float(row["prob"])
    return TranslationProbTable(
        source_lang=LanguageTag(header["source_lang"]),
        target_lang=LanguageTag(header["target_lang"]),
        probs=probs,
    )


@dataclass(frozen=True)
class AlignmentLinks:
    """One-to-at-most-one token links between a sentence pair."""

    links: frozenset[tuple[int, int]]
    n_src: int
    n_tgt: int
    solver: str

    def __post_init__(self) -> None:
        for i, j in self.links:
            if not (0 <= i < self.n_src and 0 <= j < self.n_tgt):
                raise DataError(f"link ({i},{j}) out of range for {self.n_src}x{self.n_tgt}")


def align_pair(
    src_tokens: Sequence[str],
    tgt_tokens: Sequence[str],
    table: TranslationProbTable,
    method: AlignMethod = AlignMethod.MATCH,
    backend=None,
) -> AlignmentLinks:
    """Link tokens of a sentence pair under the given probability table.

    MATCH solves a max-weight one-to-one matching (exact up to 64 tokens a
    side, greedy competitive linking beyond; the solver used is recorded).
    INTERSECT keeps links where row argmax and column argmax agree. Either
    way a zero-probability pair is never linked and ties prefer the smallest
    (i, then j).
    """
    n, m = len(src_tokens), len(tgt_tokens)
    if n == 0 or m == 0:
        return AlignmentLinks(links=frozenset(), n_src=n, n_tgt=m, solver=method.value)
    weights = [[table.prob(s, t) for t in tgt_tokens] for s in src_tokens]
    if method is AlignMethod.MATCH:
        links, solver = kernels.max_weight_matching(weights, backend=backend)
        return AlignmentLinks(links=links, n_src=n, n_tgt=m, solver=solver)
    links = set()
    row_best = [_argmax(weights[i]) for i in range(n)]
    col_best = [_argmax([weights[i][j] for i in range(n)]) for j in range(m)]
    for i in range(n):
        j = row_best[i]
        if j >= 0 and col_best[j] == i:
            links.add((i, j))
    return AlignmentLinks(links=frozenset(links), n_src=n, n_tgt=m, solver="intersect")


def _argmax(row: Sequence[float]) -> int:
    """Index of the largest strictly positive value; first wins ties; -1 if none."""
    best, best_p = -1, 0.0
    for idx, p in enumerate(row):
        if p > best_p:
            best, best_p = idx, p
    return best


def format_pharaoh(alignment: AlignmentLinks) -> str:
    return " ".join(f"{i}-{j}" for i, j in sorted(alignment.links))

def parse_pharaoh(text: str, n_src: int, n_tgt: int, solver: str = "file") -> AlignmentLinks:
    links = set()
    for part in text.split():
        try:
            i_s, j_s = part.split("-", 1)
            pair = (int(i_s), int(j_s))
        except ValueError as exc:
            raise DataError(f"bad link token {part!r}") from exc
        links.add(pair)
    return AlignmentLinks(links=frozenset(links), n_src=n_src, n_tgt=n_tgt, solver=solver)


class RemoteAligner:
    """Client for the /v1/align endpoint of a model server."""

    def __init__(
        self,
        base_url: str,
        timeout: float = 30.0,
        transport: Optional[httpx.BaseTransport] = None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def align(self, src_tokens: Sequence[str], tgt_tokens: Sequence[str]) -> AlignmentLinks:
        body = wire.align_request(src_tokens, tgt_tokens)
        try:
            resp = self._client.post(self.base_url + wire.ALIGN_PATH, json=body)
        except httpx.HTTPError as exc:
            raise TranslationError(f"align request failed: {exc}") from exc
        if resp.status_code != 200:
            raise TranslationError(f"align returned {resp.status_code}: {resp.text}")
        links = wire.parse_align_response(resp.json(), len(src_tokens), len(tgt_tokens))
        return AlignmentLinks(
            links=frozenset(links), n_src=len(src_tokens), n_tgt=len(tgt_tokens), solver="remote"
        )

    def close(self) -> None:
        self._client.close()


@dataclass(frozen=True)
class PhrasePair:
    """A source span and a consistent translation span.

    monotonic is False when the links inside the pair cross, i.e. reading the
    source left to right does not visit the target left to right; substituting
    such a pair reorders words relative to the matrix sentence.
    """

    matrix_span: tuple[int, int]
    embedded_span: tuple[int, int]
    embedded_text: tuple[str, ...]
    embedded_lang: LanguageTag
    monotonic: bool
    link_prob: Optional[float] = None


def extract_phrase_pairs(
    alignment: AlignmentLinks,
    src_tokens: Sequence[str],
    tgt_tokens: Sequence[str],
    max_len: int = DEFAULT_MAX_PHRASE_LEN,
    embedded_lang: Optional[LanguageTag] = None,
    table: Optional[TranslationProbTable] = None,
    backend=None,
) -> list[PhrasePair]:
    """Enumerate consistent phrase pairs up to max_len tokens per side.

    A pair is consistent when no alignment link crosses its boundary and at
    least one link lies inside. With no links at all there are no pairs.
    """
    lang = embedded_lang if embedded_lang is not None else LanguageTag("und")
    ordered_links = sorted(alignment.links)
    spans = kernels.extract_spans(
        ordered_links, alignment.n_src, alignment.n_tgt, max_len, backend=backend
    )
    out = []
    for i1, i2, j1, j2 in spans:
        inside = [(i, j) for i, j in ordered_links if i1 <= i <= i2 and j1 <= j <= j2]
        monotonic = all(b[1] >= a[1] for a, b in zip(inside, inside[1:]))
        link_prob = None
        if table is not None and inside:
            total = sum(table.prob(src_tokens[i], tgt_tokens[j]) for i, j in inside)
            link_prob = total / len(inside)
        out.append(
            PhrasePair(
                matrix_span=(i1, i2),
                embedded_span=(j1, j2),
                embedded_text=tuple(tgt_tokens[j1 : j2 + 1]),
                embedded_lang=lang,
                monotonic=monotonic,
                link_prob=link_prob,
            )
        )
    return out


@dataclass(frozen=True)
class TableEntry:
    """A phrase pair anchored to one attackable segment of an example."""

    role: SegmentRole
    segment_index: int
    pair: PhrasePair


@dataclass
class CandidateTable:
    """Phrase substitution candidates indexed by global token position.

    Positions run over the concatenation of the example's attackable segments
    in order; each phrase pair appears under exactly one start position.
    """

    example_id: str
    n_positions: int
    entries: dict[int, tuple[TableEntry, ...]] = field(default_factory=dict)

    def candidates_at(self, position: int) -> tuple[TableEntry, ...]:
        return self.entries.get(position, ())


def build_candidate_table(
    example: LabeledExample,
    langs: Sequence[LanguageTag],
    store: TranslationStore,
    tables: dict[str, TranslationProbTable],
    method: AlignMethod = AlignMethod.MATCH,
    max_len: int = DEFAULT_MAX_PHRASE_LEN,
    provider=None,
    aligner: Optional[RemoteAligner] = None,
    backend=None,
) -> CandidateTable:
    """Align each attackable segment against its translations and collect
    phrase pairs keyed by the global position where they start.

    tables maps language code to a probability table trained for that
    language pair; a remote aligner overrides local alignment when given.
    """
    for lang in langs:
        if aligner is None and lang.code not in tables:
            raise DataError(f"no probability table for language {lang.code}")
    translations = get_translations(example, langs, store, provider)
    entries: dict[int, list[TableEntry]] = {}
    offset = 0
    n_positions = 0
    for seg_index, seg in example.attackable_segments():
        for lang in langs:
            tgt = translations[(seg.role, lang.code)]
            if aligner is not None:
                links = aligner.align(seg.tokens, tgt.tokens)
            else:
                links = align_pair(
                    seg.tokens, tgt.tokens, tables[lang.code], method=method, backend=backend
                )
            pairs = extract_phrase_pairs(
                links,
                seg.tokens,
                tgt.tokens,
                max_len=max_len,
                embedded_lang=lang,
                table=tables.get(lang.code),
                backend=backend,
            )
            for pair in pairs:
                start = offset + pair.matrix_span[0]
                entries.setdefault(start, []).append(
                    TableEntry(role=seg.role, segment_index=seg_index, pair=pair)
                )
        offset += len(seg.tokens)
    n_positions = offset
    return CandidateTable(
        example_id=example.id,
        n_positions=n_positions,
        entries={k: tuple(v) for k, v in entries.items()},
    )


def train_tables_from_store(
    dataset,
    langs: Sequence[LanguageTag],
    store: TranslationStore,
    provider=None,
    iterations: int = DEFAULT_EM_ITERATIONS,
    backend=None,
) -> dict[str, TranslationProbTable]:
    """One probability table per language, trained on the dataset's segments
    paired with their stored translations."""
    tables: dict[str, TranslationProbTable] = {}
    examples = list(dataset)
    if not examples:
        raise DataError("empty dataset")
    source_lang = examples[0].matrix_language
    for lang in langs:
        bitext = []
        for example in examples:
            translations = get_translations(example, [lang], store, provider)
            for _, seg in example.attackable_segments():
                tgt = translations[(seg.role, lang.code)]
                bitext.append((list(seg.tokens), list(tgt.tokens)))
        tables[lang.code] = train_ibm1(
            bitext, source_lang, lang, iterations=iterations, backend=backend
        )
    return tables
