"""Black-box adversarial code-mixing attacks.

Both attacks walk the attackable tokens of an example left to right with a
beam over partial perturbation stacks. At each step the highest-loss entry
is polled and expanded: every substitution candidate starting at its position
is scored by the oracle, and a skip entry re-enters at the next position so
leaving a token unchanged stays reachable. The word-level attack draws
candidates from bilingual dictionaries (optionally filtered against a
reference translation); the phrase-level attack draws them from aligned
phrase pairs. All scored candidates feed a tracker that keeps the best
adversary overall plus the highest- and lowest-loss successful ones.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Mapping, Optional, Protocol, Sequence, Union

from .alignment import CandidateTable, PhrasePair
from .corpus import (
    LabeledExample,
    LanguageTag,
    Segment,
    SegmentRole,
    Task,
    detokenize,
    tokenize,
)
from .errors import ConfigError, DataError, OracleError, TranslationError
from .lexicon import BilingualDictionary, TransliterationTable, lookup, transliterate
from .oracle import LossRecord, Oracle
from .translation import TranslationStore, get_translations


class AttackKind(Enum):
    POLYGLOSS = "polygloss"
    BUMBLEBEE = "bumblebee"
    RANDOM = "random"


class AttackStatus(Enum):
    SUCCEEDED = "succeeded"
    FAILED = "failed"
    BUDGET = "budget"
    ORACLE_ERROR = "oracle_error"


@dataclass(frozen=True)
class AttackConfig:
    kind: AttackKind
    embedded_languages: tuple[LanguageTag, ...]
    beam_width: int = 1
    filter_by_translation: bool = True
    equivalence_constraint: bool = False
    transliteration: Optional[TransliterationTable] = None
    early_exit: bool = False
    max_queries: Optional[int] = None
    seed: Optional[int] = None
    rho: float = 0.5

    def __post_init__(self) -> None:
        if not self.embedded_languages:
            raise ConfigError("need at least one embedded language")
        if len({l.code for l in self.embedded_languages}) != len(self.embedded_languages):
            raise ConfigError("duplicate embedded languages")
        if self.beam_width < 1:
            raise ConfigError("beam_width must be >= 1")
        if self.max_queries is not None and self.max_queries < 1:
            raise ConfigError("max_queries must be >= 1")
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError("rho must be in [0, 1]")
        if self.kind is AttackKind.RANDOM and self.seed is None:
            raise ConfigError("random perturbation needs a seed")


@dataclass(frozen=True)
class Candidate:
    """A concrete substitution anchored at a global token position.

    Positions index the concatenation of the example's attackable segments;
    start/end are inclusive and always refer to clean-token coordinates.
    """

    role: SegmentRole
    segment_index: int
    start: int
    end: int
    local_span: tuple[int, int]
    original: tuple[str, ...]
    replacement: tuple[str, ...]
    lang: LanguageTag
    monotonic: bool


@dataclass(frozen=True)
class Perturbation:
    """One applied substitution, in segment-local token coordinates."""

    role: SegmentRole
    span: tuple[int, int]
    original: tuple[str, ...]
    replacement: tuple[str, ...]
    lang: str


@dataclass(frozen=True)
class AdversarialCandidate:
    example: LabeledExample
    loss: float
    prediction: Union[int, str]
    success: bool
    f1: Optional[float]
    perturbations: tuple[Perturbation, ...]


@dataclass(frozen=True)
class AttackResult:
    example_id: str
    status: AttackStatus
    clean: AdversarialCandidate
    best: AdversarialCandidate
    best_successful: Optional[AdversarialCandidate]
    least_successful: Optional[AdversarialCandidate]
    queries: int

    def __post_init__(self) -> None:
        if self.status is AttackStatus.SUCCEEDED:
            if self.best_successful is None or self.least_successful is None:
                raise DataError("succeeded attack must carry successful adversaries")
            if self.least_successful.loss > self.best_successful.loss:
                raise DataError("least successful adversary cannot out-lose the best one")


@dataclass(frozen=True)
class BeamEntry:
    loss: float
    applied: tuple[Candidate, ...]
    position: int
    seq: int

    def sort_key(self) -> tuple[float, int, int]:
        # Highest loss first; ties prefer fewer perturbations, then older entries.
        return (-self.loss, len(self.applied), self.seq)


class CandidateProvider(Protocol):
    n_positions: int

    def candidates_at(self, position: int) -> Sequence[Candidate]: ...


def segment_layout(example: LabeledExample) -> list[tuple[int, SegmentRole, int, int]]:
    """(segment index, role, global offset, length) per attackable segment."""
    layout = []
    offset = 0
    for seg_index, seg in example.attackable_segments():
        layout.append((seg_index, seg.role, offset, len(seg.tokens)))
        offset += len(seg.tokens)
    return layout


def total_positions(example: LabeledExample) -> int:
    return sum(length for _, _, _, length in segment_layout(example))


def render(example: LabeledExample, applied: Sequence[Candidate]) -> LabeledExample:
    """Apply substitutions to a clean example.

    Spans are clean-token coordinates, so splicing runs right to left per
    segment; earlier spans never shift. Applied spans must not overlap.
    """
    by_segment: dict[int, list[Candidate]] = {}
    for cand in applied:
        by_segment.setdefault(cand.segment_index, []).append(cand)
    segments = list(example.segments)
    for seg_index, cands in by_segment.items():
        seg = segments[seg_index]
        tokens = list(seg.tokens)
        last_start = len(tokens)
        for cand in sorted(cands, key=lambda c: -c.local_span[0]):
            lo, hi = cand.local_span
            if hi >= last_start:
                raise DataError(f"overlapping perturbation spans in {example.id}")
            last_start = lo
            tokens[lo : hi + 1] = list(cand.replacement)
        segments[seg_index] = Segment(role=seg.role, tokens=tuple(tokens), raw=detokenize(tokens))
    return example.with_segments(tuple(segments))


def check_equivalence(applied: Sequence[Candidate], candidate: Candidate) -> bool:
    """Reject a candidate that would extend a same-language island with a
    word-order-breaking phrase.

    A candidate is blocked only when the token immediately before it (within
    the same segment) was produced by an applied perturbation in the same
    embedded language and the candidate itself is non-monotonic.
    """
    if candidate.monotonic or candidate.local_span[0] == 0:
        return True
    prev = candidate.start - 1
    for p in applied:
        if p.end == prev and p.lang.code == candidate.lang.code:
            return False
    return True


class WordCandidateProvider:
    """Dictionary-driven single-token substitutions.

    With filtering on, a sense survives only if its tokens occur contiguously
    (case-insensitive) in the reference translation of the same segment, which
    screens out senses the context does not support. Transliteration, when
    configured, rewrites surviving replacement tokens it has entries for.
    """

    def __init__(
        self,
        example: LabeledExample,
        dictionaries: Sequence[BilingualDictionary],
        translations: Optional[Mapping[tuple[SegmentRole, str], Segment]] = None,
        filter_by_translation: bool = True,
        transliteration: Optional[TransliterationTable] = None,
    ) -> None:
        self.example = example
        self.dictionaries = list(dictionaries)
        self.translations = translations
        self.filter_by_translation = filter_by_translation
        self.transliteration = transliteration
        self.layout = segment_layout(example)
        self.n_positions = total_positions(example)
        if filter_by_translation and translations is None:
            raise ConfigError("translation filtering needs reference translations")

    def _locate(self, position: int) -> tuple[int, SegmentRole, int]:
        for seg_index, role, offset, length in self.layout:
            if offset <= position < offset + length:
                return seg_index, role, position - offset
        raise IndexError(position)

    def candidates_at(self, position: int) -> list[Candidate]:
        seg_index, role, local = self._locate(position)
        token = self.example.segments[seg_index].tokens[local]
        out: list[Candidate] = []
        seen: set[tuple[str, tuple[str, ...]]] = set()
        for dictionary in self.dictionaries:
            lang = dictionary.embedded
            for sense in lookup(dictionary, token):
                replacement = tuple(tokenize(sense, lang))
                if not replacement:
                    continue
                if self.filter_by_translation and not self._supported(role, lang, replacement):
                    continue
                if self.transliteration is not None:
                    replacement = tuple(
                        transliterate(self.transliteration, tok) or tok for tok in replacement
                    )
                if replacement == (token,):
                    continue
                key = (lang.code, replacement)
                if key in seen:
                    continue
                seen.add(key)
                out.append(
                    Candidate(
                        role=role,
                        segment_index=seg_index,
                        start=position,
                        end=position,
                        local_span=(local, local),
                        original=(token,),
                        replacement=replacement,
                        lang=lang,
                        monotonic=True,
                    )
                )
        return out

    def _supported(self, role: SegmentRole, lang: LanguageTag, replacement: tuple[str, ...]) -> bool:
        assert self.translations is not None
        reference = self.translations.get((role, lang.code))
        if reference is None:
            raise TranslationError(
                f"no {lang.code} reference translation for segment {role.value}"
            )
        haystack = [t.casefold() for t in reference.tokens]
        needle = [t.casefold() for t in replacement]
        span = len(needle)
        return any(
            haystack[i : i + span] == needle for i in range(len(haystack) - span + 1)
        )


def candidates_from_pairs(
    role: SegmentRole,
    segment_index: int,
    offset: int,
    segment_tokens: Sequence[str],
    pairs: Sequence[PhrasePair],
    transliteration: Optional[TransliterationTable] = None,
) -> list[Candidate]:
    """Turn extracted phrase pairs into attack candidates at global positions."""
    out = []
    seen: set[tuple[int, int, str, tuple[str, ...]]] = set()
    for pair in pairs:
        lo, hi = pair.matrix_span
        replacement = pair.embedded_text
        if transliteration is not None:
            replacement = tuple(
                transliterate(transliteration, tok) or tok for tok in replacement
            )
        original = tuple(segment_tokens[lo : hi + 1])
        if replacement == original:
            continue
        key = (lo, hi, pair.embedded_lang.code, replacement)
        if key in seen:
            continue
        seen.add(key)
        out.append(
            Candidate(
                role=role,
                segment_index=segment_index,
                start=offset + lo,
                end=offset + hi,
                local_span=(lo, hi),
                original=original,
                replacement=replacement,
                lang=pair.embedded_lang,
                monotonic=pair.monotonic,
            )
        )
    return out


class PhraseCandidateProvider:
    """Candidates read off a prebuilt phrase table for one example."""

    def __init__(
        self,
        example: LabeledExample,
        table: CandidateTable,
        transliteration: Optional[TransliterationTable] = None,
    ) -> None:
        if table.example_id != example.id:
            raise ConfigError(
                f"candidate table is for {table.example_id}, not {example.id}"
            )
        self.example = example
        self.n_positions = table.n_positions
        layout = segment_layout(example)
        if table.n_positions != total_positions(example):
            raise ConfigError("candidate table does not match example layout")
        self._at: dict[int, list[Candidate]] = {}
        offsets = {seg_index: offset for seg_index, _, offset, _ in layout}
        for start, entries in table.entries.items():
            cands: list[Candidate] = []
            for entry in entries:
                seg_tokens = example.segments[entry.segment_index].tokens
                cands.extend(
                    candidates_from_pairs(
                        entry.role,
                        entry.segment_index,
                        offsets[entry.segment_index],
                        seg_tokens,
                        [entry.pair],
                        transliteration=transliteration,
                    )
                )
            self._at[start] = cands

    def candidates_at(self, position: int) -> list[Candidate]:
        return self._at.get(position, ())


class _Tracker:
    """Keeps the extreme candidates over everything the oracle scored."""

    def __init__(self) -> None:
        self.best: Optional[AdversarialCandidate] = None
        self.best_successful: Optional[AdversarialCandidate] = None
        self.least_successful: Optional[AdversarialCandidate] = None

    def observe(
        self,
        example: LabeledExample,
        applied: Sequence[Candidate],
        record: LossRecord,
    ) -> AdversarialCandidate:
        cand = AdversarialCandidate(
            example=example,
            loss=record.loss,
            prediction=record.prediction,
            success=record.success,
            f1=record.f1,
            perturbations=tuple(_to_perturbation(c) for c in applied),
        )
        if self.best is None or cand.loss > self.best.loss:
            self.best = cand
        if cand.success:
            if self.best_successful is None or cand.loss > self.best_successful.loss:
                self.best_successful = cand
            if self.least_successful is None or cand.loss < self.least_successful.loss:
                self.least_successful = cand
        return cand


def _to_perturbation(cand: Candidate) -> Perturbation:
    return Perturbation(
        role=cand.role,
        span=cand.local_span,
        original=cand.original,
        replacement=cand.replacement,
        lang=cand.lang.code,
    )


def update_beam(
    beam: Sequence[BeamEntry],
    scored: Sequence[BeamEntry],
    width: int,
    n_positions: int,
) -> list[BeamEntry]:
    """Merge scored entries into the beam and truncate to width.

    Entries whose position ran past the last token retire here; their scores
    were already consumed by the tracker.
    """
    merged = [e for e in beam if e.position < n_positions]
    merged.extend(e for e in scored if e.position < n_positions)
    merged.sort(key=BeamEntry.sort_key)
    return merged[:width]


def _beam_search(
    example: LabeledExample,
    provider: CandidateProvider,
    oracle: Oracle,
    cfg: AttackConfig,
) -> AttackResult:
    tracker = _Tracker()
    clean_record = oracle.query_losses([example])[0]
    clean = tracker.observe(example, (), clean_record)
    queries = 1
    n = provider.n_positions
    seq = 0
    beam = [BeamEntry(loss=clean_record.loss, applied=(), position=0, seq=seq)]
    beam = update_beam([], beam, cfg.beam_width, n)
    budget_hit = False
    oracle_failed = False

    while beam and not (cfg.early_exit and tracker.best_successful is not None):
        entry = min(beam, key=BeamEntry.sort_key)
        beam = [e for e in beam if e is not entry]
        cands = [
            c
            for c in provider.candidates_at(entry.position)
            if c.replacement != c.original
        ]
        if cfg.equivalence_constraint:
            cands = [c for c in cands if check_equivalence(entry.applied, c)]
        if cfg.max_queries is not None:
            remaining = cfg.max_queries - queries
            if remaining <= 0:
                budget_hit = True
                break
            if len(cands) > remaining:
                cands = cands[:remaining]
                budget_hit = True
        rendered = [render(example, entry.applied + (c,)) for c in cands]
        try:
            records = oracle.query_losses(rendered) if rendered else []
        except OracleError:
            oracle_failed = True
            break
        queries += len(rendered)
        scored = []
        for cand, ex_c, rec in zip(cands, rendered, records):
            applied = entry.applied + (cand,)
            tracker.observe(ex_c, applied, rec)
            seq += 1
            scored.append(
                BeamEntry(loss=rec.loss, applied=applied, position=cand.end + 1, seq=seq)
            )
        seq += 1
        scored.append(
            BeamEntry(loss=entry.loss, applied=entry.applied, position=entry.position + 1, seq=seq)
        )
        beam = update_beam(beam, scored, cfg.beam_width, n)

    if oracle_failed:
        status = AttackStatus.ORACLE_ERROR
    elif tracker.best_successful is not None:
        status = AttackStatus.SUCCEEDED
    elif budget_hit:
        status = AttackStatus.BUDGET
    else:
        status = AttackStatus.FAILED
    assert tracker.best is not None
    return AttackResult(
        example_id=example.id,
        status=status,
        clean=clean,
        best=tracker.best,
        best_successful=tracker.best_successful,
        least_successful=tracker.least_successful,
        queries=queries,
    )


def polygloss_attack(
    example: LabeledExample,
    dictionaries: Mapping[str, BilingualDictionary],
    store: Optional[TranslationStore],
    oracle: Oracle,
    cfg: AttackConfig,
    provider=None,
) -> AttackResult:
    """Word-level attack over dictionary senses, beam-searched by loss."""
    if cfg.kind is not AttackKind.POLYGLOSS:
        raise ConfigError(f"config kind is {cfg.kind.value}, expected polygloss")
    dicts = []
    for lang in cfg.embedded_languages:
        if lang.code not in dictionaries:
            raise ConfigError(f"no dictionary for embedded language {lang.code}")
        dicts.append(dictionaries[lang.code])
    translations = None
    if cfg.filter_by_translation:
        if store is None:
            raise ConfigError("translation filtering needs a translation store")
        translations = get_translations(example, cfg.embedded_languages, store, provider)
    word_provider = WordCandidateProvider(
        example,
        dicts,
        translations=translations,
        filter_by_translation=cfg.filter_by_translation,
        transliteration=cfg.transliteration,
    )
    return _beam_search(example, word_provider, oracle, cfg)


def bumblebee_attack(
    example: LabeledExample,
    table: CandidateTable,
    oracle: Oracle,
    cfg: AttackConfig,
) -> AttackResult:
    """Phrase-level attack over aligned phrase pairs, beam-searched by loss."""
    if cfg.kind is not AttackKind.BUMBLEBEE:
        raise ConfigError(f"config kind is {cfg.kind.value}, expected bumblebee")
    phrase_provider = PhraseCandidateProvider(
        example, table, transliteration=cfg.transliteration
    )
    return _beam_search(example, phrase_provider, oracle, cfg)


def random_perturb(
    example: LabeledExample,
    provider: CandidateProvider,
    rho: float,
    seed: int,
) -> tuple[LabeledExample, list[Candidate]]:
    """Baseline: left-to-right scan applying a uniform random candidate with
    probability rho at every position that has candidates."""
    if not 0.0 <= rho <= 1.0:
        raise ConfigError("rho must be in [0, 1]")
    rng = random.Random(seed)
    applied: list[Candidate] = []
    position = 0
    n = provider.n_positions
    while position < n:
        cands = [
            c for c in provider.candidates_at(position) if c.replacement != c.original
        ]
        if cands and rng.random() < rho:
            cand = cands[rng.randrange(len(cands))]
            applied.append(cand)
            position = cand.end + 1
        else:
            position += 1
    return render(example, applied), applied


def _candidate_to_json(cand: Optional[AdversarialCandidate]) -> Optional[dict]:
    if cand is None:
        return None
    return {
        "segments": [
            {"role": seg.role.value, "text": seg.text} for seg in cand.example.segments
        ],
        "loss": cand.loss,
        "prediction": cand.prediction,
        "f1": cand.f1,
        "perturbations": [
            {
                "role": p.role.value,
                "span": list(p.span),
                "original": list(p.original),
                "replacement": list(p.replacement),
                "lang": p.lang,
            }
            for p in cand.perturbations
        ],
    }


def result_to_json(result: AttackResult) -> dict:
    return {
        "id": result.example_id,
        "status": result.status.value,
        "queries": result.queries,
        "clean": _candidate_to_json(result.clean),
        "best": _candidate_to_json(result.best),
        "best_successful": _candidate_to_json(result.best_successful),
        "least_successful": _candidate_to_json(result.least_successful),
    }


def write_adversaries(results: Sequence[AttackResult], path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for result in results:
            f.write(json.dumps(result_to_json(result), ensure_ascii=False, sort_keys=True) + "\n")


def read_adversaries(path: Union[str, Path]) -> list[dict]:
    """Rows of an adversary file, as dicts (schema of result_to_json)."""
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataError(f"line {lineno}: bad JSON: {exc}") from exc
    return rows
