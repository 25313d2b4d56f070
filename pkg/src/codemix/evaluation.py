"""Campaign evaluation: run an attack over a dataset and aggregate scores.

Also builds the mixed-language clean test set (premise and hypothesis in two
different languages, no adversarial intent) and sweeps attack settings.
"""

from __future__ import annotations

import json
import re
import statistics
import string
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

from .alignment import (
    AlignMethod,
    CandidateTable,
    RemoteAligner,
    TranslationProbTable,
    build_candidate_table,
)
from .attack import (
    AdversarialCandidate,
    AttackConfig,
    AttackKind,
    AttackResult,
    AttackStatus,
    CandidateProvider,
    PhraseCandidateProvider,
    WordCandidateProvider,
    bumblebee_attack,
    polygloss_attack,
    random_perturb,
    _Tracker,
)
from .cat import derive_seed, example_rng
from .corpus import AnswerSpan, Dataset, LabeledExample, LanguageTag, Task
from .errors import ConfigError, DataError, OracleError
from .lexicon import BilingualDictionary
from .oracle import Oracle
from .translation import TranslationProvider, TranslationStore, get_translations

_ARTICLES_RE = re.compile(r"\b(a|an|the)\b")


def normalize_answer(text: str) -> str:
    """Lowercase, strip punctuation, articles, and extra whitespace."""
    text = text.lower()
    text = "".join(ch for ch in text if ch not in string.punctuation)
    text = _ARTICLES_RE.sub(" ", text)
    return " ".join(text.split())


def qa_em(prediction: str, gold: str) -> float:
    return float(normalize_answer(prediction) == normalize_answer(gold))


def qa_f1(prediction: str, gold: str) -> float:
    pred_tokens = normalize_answer(prediction).split()
    gold_tokens = normalize_answer(gold).split()
    if not pred_tokens or not gold_tokens:
        return float(pred_tokens == gold_tokens)
    common: dict[str, int] = {}
    for tok in pred_tokens:
        common[tok] = common.get(tok, 0) + 1
    overlap = 0
    for tok in gold_tokens:
        if common.get(tok, 0) > 0:
            common[tok] -= 1
            overlap += 1
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


@dataclass
class CampaignAssets:
    """Everything an attack needs besides the oracle.

    tables/dictionaries are keyed by embedded language code. A remote aligner,
    when set, replaces local alignment in candidate table construction.
    """

    store: Optional[TranslationStore] = None
    dictionaries: Optional[Mapping[str, BilingualDictionary]] = None
    tables: Optional[dict[str, TranslationProbTable]] = None
    provider: Optional[TranslationProvider] = None
    aligner: Optional[RemoteAligner] = None
    align_method: AlignMethod = AlignMethod.MATCH
    max_phrase_len: int = 4
    backend: Optional[object] = None
    _table_cache: dict[str, CandidateTable] = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def candidate_table(self, example: LabeledExample, cfg: AttackConfig) -> CandidateTable:
        with self._lock:
            hit = self._table_cache.get(example.id)
        if hit is not None:
            return hit
        if self.store is None:
            raise ConfigError("phrase candidates need a translation store")
        table = build_candidate_table(
            example,
            cfg.embedded_languages,
            self.store,
            self.tables or {},
            method=self.align_method,
            max_len=self.max_phrase_len,
            provider=self.provider,
            aligner=self.aligner,
            backend=self.backend,
        )
        with self._lock:
            self._table_cache[example.id] = table
        return table

    def provider_for(self, example: LabeledExample, cfg: AttackConfig) -> CandidateProvider:
        use_phrases = cfg.kind is AttackKind.BUMBLEBEE or (
            cfg.kind is AttackKind.RANDOM and self.tables is not None
        )
        if use_phrases:
            return PhraseCandidateProvider(
                example, self.candidate_table(example, cfg), transliteration=cfg.transliteration
            )
        if self.dictionaries is None:
            raise ConfigError("word candidates need dictionaries")
        dicts = []
        for lang in cfg.embedded_languages:
            if lang.code not in self.dictionaries:
                raise ConfigError(f"no dictionary for embedded language {lang.code}")
            dicts.append(self.dictionaries[lang.code])
        translations = None
        if cfg.filter_by_translation:
            if self.store is None:
                raise ConfigError("translation filtering needs a translation store")
            translations = get_translations(
                example, cfg.embedded_languages, self.store, self.provider
            )
        return WordCandidateProvider(
            example,
            dicts,
            translations=translations,
            filter_by_translation=cfg.filter_by_translation,
            transliteration=cfg.transliteration,
        )


@dataclass(frozen=True)
class CampaignReport:
    task: str
    method: str
    n_examples: int
    n_oracle_failures: int
    clean_score: float
    adv_score: float
    success_rate: Optional[float]
    score_ratio: Optional[float]
    mean_queries: float
    mean_perturbation_rate: Optional[float]
    per_language: dict[str, int]
    clean_em: Optional[float] = None
    adv_em: Optional[float] = None
    random_scores: Optional[dict[str, float]] = None
    random_mean: Optional[float] = None
    random_stdev: Optional[float] = None
    random_rho: Optional[float] = None
    config: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "task": self.task,
            "method": self.method,
            "n_examples": self.n_examples,
            "n_oracle_failures": self.n_oracle_failures,
            "clean_score": self.clean_score,
            "adv_score": self.adv_score,
            "success_rate": self.success_rate,
            "score_ratio": self.score_ratio,
            "mean_queries": self.mean_queries,
            "mean_perturbation_rate": self.mean_perturbation_rate,
            "per_language": dict(sorted(self.per_language.items())),
            "clean_em": self.clean_em,
            "adv_em": self.adv_em,
            "random_scores": self.random_scores,
            "random_mean": self.random_mean,
            "random_stdev": self.random_stdev,
            "random_rho": self.random_rho,
            "config": self.config,
        }
        return out


@dataclass
class CampaignOutcome:
    report: CampaignReport
    results: list[Optional[AttackResult]]
    errors: dict[str, str]


def save_report(report: CampaignReport, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report.to_json(), f, ensure_ascii=False, sort_keys=True, indent=2)
        f.write("\n")


def _config_echo(cfg: AttackConfig) -> dict:
    return {
        "kind": cfg.kind.value,
        "embedded_languages": [l.code for l in cfg.embedded_languages],
        "beam_width": cfg.beam_width,
        "filter_by_translation": cfg.filter_by_translation,
        "equivalence_constraint": cfg.equivalence_constraint,
        "transliteration": cfg.transliteration is not None,
        "early_exit": cfg.early_exit,
        "max_queries": cfg.max_queries,
        "seed": cfg.seed,
        "rho": cfg.rho,
    }


def _score(cand: AdversarialCandidate, example: LabeledExample) -> float:
    """1/0 correctness for classification, answer F1 for span QA."""
    if example.task is Task.CLASSIFICATION:
        return float(cand.prediction == example.label)
    assert cand.f1 is not None
    return cand.f1


def _em(cand: AdversarialCandidate, example: LabeledExample) -> float:
    gold: AnswerSpan = example.label  # type: ignore[assignment]
    return qa_em(str(cand.prediction), gold.text)


def _count_candidate_positions(provider: CandidateProvider) -> int:
    return sum(
        1 for i in range(provider.n_positions) if provider.candidates_at(i)
    )


def _random_as_result(
    example: LabeledExample,
    provider: CandidateProvider,
    oracle: Oracle,
    rho: float,
    seed: int,
) -> AttackResult:
    """Score one random perturbation as a two-query attack result."""
    tracker = _Tracker()
    clean_rec = oracle.query_losses([example])[0]
    clean = tracker.observe(example, (), clean_rec)
    perturbed, applied = random_perturb(example, provider, rho, seed)
    rec = oracle.query_losses([perturbed])[0]
    tracker.observe(perturbed, applied, rec)
    status = (
        AttackStatus.SUCCEEDED if tracker.best_successful is not None else AttackStatus.FAILED
    )
    assert tracker.best is not None
    return AttackResult(
        example_id=example.id,
        status=status,
        clean=clean,
        best=tracker.best,
        best_successful=tracker.best_successful,
        least_successful=tracker.least_successful,
        queries=2,
    )


def run_campaign(
    dataset: Dataset,
    oracle: Oracle,
    cfg: AttackConfig,
    assets: CampaignAssets,
    workers: int = 1,
    random_seeds: Optional[Sequence[int]] = None,
    random_rho: Optional[float] = None,
) -> CampaignOutcome:
    """Attack every example and aggregate.

    Per-example oracle failures are recorded and excluded from every rate
    denominator. With random_seeds set, a random-perturbation baseline runs
    per seed, at random_rho if given, else at the attack's mean perturbation
    rate so the comparison holds the edit budget fixed.
    """
    if len(dataset) == 0:
        raise DataError("empty dataset")
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    examples = list(dataset)
    task = examples[0].task

    def run_one(example: LabeledExample):
        provider = assets.provider_for(example, cfg)
        n_cand_positions = _count_candidate_positions(provider)
        try:
            if cfg.kind is AttackKind.BUMBLEBEE:
                result = bumblebee_attack(
                    example, assets.candidate_table(example, cfg), oracle, cfg
                )
            elif cfg.kind is AttackKind.POLYGLOSS:
                assert assets.dictionaries is not None
                result = polygloss_attack(
                    example, assets.dictionaries, assets.store, oracle, cfg,
                    provider=assets.provider,
                )
            else:
                assert cfg.seed is not None
                result = _random_as_result(
                    example, provider, oracle, cfg.rho, derive_seed(cfg.seed, example.id)
                )
        except OracleError as exc:
            return None, n_cand_positions, str(exc)
        if result.status is AttackStatus.ORACLE_ERROR:
            return None, n_cand_positions, "oracle failed mid-attack"
        return result, n_cand_positions, None

    if workers == 1:
        ran = [run_one(ex) for ex in examples]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            ran = list(pool.map(run_one, examples))

    results: list[Optional[AttackResult]] = []
    errors: dict[str, str] = {}
    rates = []
    scored: list[tuple[LabeledExample, AttackResult]] = []
    for example, (result, n_cand_positions, error) in zip(examples, ran):
        results.append(result)
        if error is not None:
            errors[example.id] = error
            continue
        assert result is not None
        scored.append((example, result))
        if result.best_successful is not None and n_cand_positions > 0:
            rates.append(len(result.best_successful.perturbations) / n_cand_positions)

    if not scored:
        raise OracleError("every example failed at the oracle")

    clean_score = _mean(_score(r.clean, ex) for ex, r in scored)
    adv_scores = []
    adv_ems = []
    clean_ems = []
    n_clean_correct = 0
    n_success_given_correct = 0
    per_language: dict[str, int] = {}
    for ex, r in scored:
        succeeded = r.status is AttackStatus.SUCCEEDED
        if task is Task.CLASSIFICATION:
            clean_correct = r.clean.prediction == ex.label
            adv_scores.append(0.0 if succeeded else float(clean_correct))
            if clean_correct:
                n_clean_correct += 1
                if succeeded:
                    n_success_given_correct += 1
        else:
            final = r.best_successful if succeeded else r.clean
            adv_scores.append(_score(final, ex))
            adv_ems.append(_em(final, ex))
            clean_ems.append(_em(r.clean, ex))
            clean_correct = not r.clean.success
            if clean_correct:
                n_clean_correct += 1
                if succeeded:
                    n_success_given_correct += 1
        if r.best_successful is not None:
            for p in r.best_successful.perturbations:
                per_language[p.lang] = per_language.get(p.lang, 0) + 1

    adv_score = _mean(adv_scores)
    success_rate = (
        n_success_given_correct / n_clean_correct if n_clean_correct else None
    )
    score_ratio = (clean_score - adv_score) / clean_score if clean_score > 0 else None
    mean_queries = _mean(float(r.queries) for _, r in scored)
    mean_rate = _mean(rates) if rates else None

    random_scores = None
    random_mean = None
    random_stdev = None
    rho_used = None
    if random_seeds:
        rho_used = random_rho if random_rho is not None else (mean_rate or cfg.rho)
        random_scores = {}
        for seed in random_seeds:
            seed_scores = []
            for ex, r in scored:
                provider = assets.provider_for(ex, cfg)
                perturbed, _ = random_perturb(
                    ex, provider, rho_used, derive_seed(seed, ex.id)
                )
                rec = oracle.query_losses([perturbed])[0]
                if task is Task.CLASSIFICATION:
                    seed_scores.append(float(rec.prediction == ex.label))
                else:
                    assert rec.f1 is not None
                    seed_scores.append(rec.f1)
            random_scores[str(seed)] = _mean(seed_scores)
        values = list(random_scores.values())
        random_mean = _mean(values)
        random_stdev = statistics.stdev(values) if len(values) > 1 else 0.0

    report = CampaignReport(
        task=task.value,
        method=cfg.kind.value,
        n_examples=len(examples),
        n_oracle_failures=len(errors),
        clean_score=clean_score,
        adv_score=adv_score,
        success_rate=success_rate,
        score_ratio=score_ratio,
        mean_queries=mean_queries,
        mean_perturbation_rate=mean_rate,
        per_language=per_language,
        clean_em=_mean(clean_ems) if clean_ems else None,
        adv_em=_mean(adv_ems) if adv_ems else None,
        random_scores=random_scores,
        random_mean=random_mean,
        random_stdev=random_stdev,
        random_rho=rho_used,
        config=_config_echo(cfg),
    )
    return CampaignOutcome(report=report, results=results, errors=errors)


def _mean(values) -> float:
    vals = list(values)
    return sum(vals) / len(vals)


def build_clean_dl(
    dataset: Dataset, store: TranslationStore, seed: int
) -> tuple[Dataset, list[dict]]:
    """Mixed-language test set: per example, premise and hypothesis are drawn
    in two different languages, uniformly over the ordered pairs available in
    the store (the matrix language counts as available).

    Returns (dataset, provenance rows with the drawn languages).
    """
    from .corpus import SegmentRole

    out = []
    rows = []
    codes = store.languages()
    for ex in dataset:
        if ex.task is not Task.CLASSIFICATION:
            raise DataError(f"example {ex.id}: mixed-language sets are classification-only")
        matrix = ex.matrix_language.code
        available: dict[SegmentRole, list[str]] = {}
        for role in (SegmentRole.PREMISE, SegmentRole.HYPOTHESIS):
            langs = [matrix]
            for code in codes:
                if code != matrix and store.get(ex, role, LanguageTag(code)) is not None:
                    langs.append(code)
            available[role] = sorted(set(langs))
        pairs = [
            (a, b)
            for a in available[SegmentRole.PREMISE]
            for b in available[SegmentRole.HYPOTHESIS]
            if a != b
        ]
        if not pairs:
            raise DataError(f"example {ex.id}: no language pair available in the store")
        rng = example_rng(seed, ex.id)
        prem_lang, hyp_lang = pairs[rng.randrange(len(pairs))]
        segments = []
        for seg in ex.segments:
            if seg.role is SegmentRole.PREMISE and prem_lang != matrix:
                segments.append(store.get(ex, seg.role, LanguageTag(prem_lang)))
            elif seg.role is SegmentRole.HYPOTHESIS and hyp_lang != matrix:
                segments.append(store.get(ex, seg.role, LanguageTag(hyp_lang)))
            else:
                segments.append(seg)
        out.append(ex.with_segments(tuple(segments)))
        rows.append({"id": ex.id, "premise_lang": prem_lang, "hypothesis_lang": hyp_lang})
    return Dataset(examples=tuple(out), label_names=dataset.label_names), rows


class SweepVariable(Enum):
    BEAM_WIDTH = "beam-width"
    NUM_LANGUAGES = "num-languages"


def sweep(
    variable: SweepVariable,
    values: Sequence[int],
    dataset: Dataset,
    oracle: Oracle,
    base_cfg: AttackConfig,
    assets: CampaignAssets,
    workers: int = 1,
) -> list[tuple[int, CampaignReport]]:
    """Rerun the campaign at each setting of one variable.

    Values must be strictly ascending. NUM_LANGUAGES uses prefixes of the
    configured language list, so successive settings are nested.
    """
    if not values:
        raise ConfigError("empty sweep values")
    if list(values) != sorted(set(values)):
        raise ConfigError("sweep values must be strictly ascending")
    if any(v < 1 for v in values):
        raise ConfigError("sweep values must be >= 1")
    points = []
    for value in values:
        if variable is SweepVariable.BEAM_WIDTH:
            cfg = replace(base_cfg, beam_width=value)
        else:
            if value > len(base_cfg.embedded_languages):
                raise ConfigError(
                    f"num-languages {value} exceeds configured languages "
                    f"({len(base_cfg.embedded_languages)})"
                )
            cfg = replace(base_cfg, embedded_languages=base_cfg.embedded_languages[:value])
        outcome = run_campaign(dataset, oracle, cfg, assets, workers=workers)
        points.append((value, outcome.report))
    return points
