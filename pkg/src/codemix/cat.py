"""Code-mixed adversarial training data generation.

Successful attacks induce a distribution over embedded languages; new
training examples are built by translating each example into a few languages
drawn from that distribution, extracting phrase pairs, and splicing random
phrases in at rate rho. Each input example yields k perturbed copies plus
the original, deterministically per (seed, example id).
"""

from __future__ import annotations

import hashlib
import logging
import random
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

from .alignment import (
    AlignMethod,
    TranslationProbTable,
    align_pair,
    extract_phrase_pairs,
)
from .attack import AttackResult, Candidate, candidates_from_pairs, render, segment_layout
from .corpus import Dataset, LabeledExample, LanguageTag
from .errors import ConfigError, DataError, TranslationError
from .translation import TranslationProvider, TranslationStore, get_translations

log = logging.getLogger(__name__)

ADV_DIST_TOLERANCE = 1e-9


@dataclass(frozen=True)
class AdvDistribution:
    """Language distribution induced by successful adversaries."""

    weights: dict[str, float]

    def __post_init__(self) -> None:
        if not self.weights:
            raise DataError("empty language distribution")
        if any(w < 0 for w in self.weights.values()):
            raise DataError("negative language weight")
        total = sum(self.weights.values())
        if abs(total - 1.0) > ADV_DIST_TOLERANCE:
            raise DataError(f"language weights sum to {total}, not 1")

    def codes(self) -> list[str]:
        return sorted(self.weights)


def compute_adv_distribution(results: Iterable[Union[AttackResult, dict]]) -> AdvDistribution:
    """Perturbation counts per language over best successful adversaries,
    normalized. Accepts attack results or rows from an adversary file."""
    counts: dict[str, int] = {}
    for result in results:
        if isinstance(result, dict):
            best = result.get("best_successful")
            perturbations = best.get("perturbations", []) if best else []
            langs = [p["lang"] for p in perturbations]
        else:
            best_cand = result.best_successful
            langs = [p.lang for p in best_cand.perturbations] if best_cand else []
        for code in langs:
            counts[code] = counts.get(code, 0) + 1
    total = sum(counts.values())
    if total == 0:
        raise DataError("no successful adversaries to induce a language distribution")
    # The lexicographically last code takes the remainder so the weights sum
    # to 1.0 up to a final rounding step, well inside the checked tolerance.
    codes = sorted(counts)
    weights = {}
    acc = 0.0
    for code in codes[:-1]:
        w = counts[code] / total
        weights[code] = w
        acc += w
    weights[codes[-1]] = 1.0 - acc
    return AdvDistribution(weights=weights)


def sample_languages(dist: AdvDistribution, n: int, rng: random.Random) -> list[str]:
    """Draw up to n distinct language codes, probability proportional to
    weight, without replacement."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    pool = [(code, dist.weights[code]) for code in dist.codes()]
    out: list[str] = []
    while pool and len(out) < n:
        total = sum(w for _, w in pool)
        if total <= 0:
            break
        r = rng.random() * total
        acc = 0.0
        chosen = len(pool) - 1
        for idx, (_, w) in enumerate(pool):
            acc += w
            if r < acc:
                chosen = idx
                break
        out.append(pool[chosen][0])
        pool.pop(chosen)
    return out


@dataclass(frozen=True)
class CatConfig:
    k: int = 9
    n: int = 2
    rho: float = 0.5
    seed: int = 0
    max_phrase_len: int = 4
    align_method: AlignMethod = AlignMethod.MATCH

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError("rho must be in [0, 1]")
        if self.max_phrase_len < 1:
            raise ConfigError("max_phrase_len must be >= 1")


def derive_seed(seed: int, example_id: str) -> int:
    digest = hashlib.sha256(f"{seed}:{example_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def example_rng(seed: int, example_id: str) -> random.Random:
    """Independent substream per example: reruns are stable and example
    order never shifts the draws."""
    return random.Random(derive_seed(seed, example_id))


def generate_cat_dataset(
    dataset: Dataset,
    dist: AdvDistribution,
    tables: dict[str, TranslationProbTable],
    store: TranslationStore,
    cfg: CatConfig,
    provider: Optional[TranslationProvider] = None,
    backend=None,
) -> tuple[Dataset, list[dict]]:
    """Augment a dataset with k code-mixed copies per example.

    Returns (augmented dataset, provenance rows). The output keeps all
    originals first, then copies grouped by example; copy j of example x has
    id "{x.id}#cat{j}". Failures (missing translations or tables) degrade to
    verbatim copies with a warning rather than aborting the run.
    """
    copies: list[LabeledExample] = []
    provenance: list[dict] = []
    for example in dataset:
        rng = example_rng(cfg.seed, example.id)
        layout = segment_layout(example)
        sampled: dict[str, list[str]] = {}
        candidate_map: dict[int, list[Candidate]] = {}
        failure: Optional[str] = None
        try:
            needed: set[str] = set()
            for seg_index, role, offset, length in layout:
                langs = sample_languages(dist, cfg.n, rng)
                sampled[role.value] = langs
                needed.update(langs)
            translations = get_translations(
                example, [LanguageTag(c) for c in sorted(needed)], store, provider
            )
            for seg_index, role, offset, length in layout:
                seg = example.segments[seg_index]
                for code in sampled[role.value]:
                    table = tables.get(code)
                    if table is None:
                        raise DataError(f"no probability table for language {code}")
                    target = translations[(role, code)]
                    links = align_pair(
                        seg.tokens, target.tokens, table, method=cfg.align_method, backend=backend
                    )
                    pairs = extract_phrase_pairs(
                        links,
                        seg.tokens,
                        target.tokens,
                        max_len=cfg.max_phrase_len,
                        embedded_lang=LanguageTag(code),
                        table=table,
                        backend=backend,
                    )
                    for cand in candidates_from_pairs(
                        role, seg_index, offset, seg.tokens, pairs
                    ):
                        candidate_map.setdefault(cand.start, []).append(cand)
        except (TranslationError, DataError) as exc:
            failure = str(exc)
            candidate_map = {}
            log.warning("cat: example %s left unperturbed: %s", example.id, failure)

        n_positions = sum(length for _, _, _, length in layout)
        for j in range(1, cfg.k + 1):
            applied: list[Candidate] = []
            position = 0
            while position < n_positions:
                cands = candidate_map.get(position)
                if cands and rng.random() < cfg.rho:
                    cand = cands[rng.randrange(len(cands))]
                    applied.append(cand)
                    position = cand.end + 1
                else:
                    position += 1
            copy = render(example, applied).with_id(f"{example.id}#cat{j}")
            copies.append(copy)
            row = {
                "id": copy.id,
                "sampled_languages": sampled,
                "perturbation_count": len(applied),
            }
            if failure is not None:
                row["error"] = failure
            provenance.append(row)
    augmented = Dataset(
        examples=tuple(dataset.examples) + tuple(copies), label_names=dataset.label_names
    )
    return augmented, provenance
