import random

import pytest

from codemix.alignment import train_tables_from_store
from codemix.attack import (
    AdversarialCandidate,
    AttackResult,
    AttackStatus,
    Perturbation,
)
from codemix.cat import (
    AdvDistribution,
    CatConfig,
    compute_adv_distribution,
    derive_seed,
    example_rng,
    generate_cat_dataset,
    sample_languages,
)
from codemix.corpus import Dataset, LanguageTag, SegmentRole
from codemix.errors import ConfigError, DataError

from helpers import fill_store, mk_example

ES = LanguageTag("es")


def success_result(example, langs: list[str]) -> AttackResult:
    perturbations = tuple(
        Perturbation(
            role=SegmentRole.PREMISE,
            span=(i, i),
            original=(f"w{i}",),
            replacement=(f"r{i}",),
            lang=code,
        )
        for i, code in enumerate(langs)
    )
    clean = AdversarialCandidate(
        example=example, loss=0.1, prediction=0, success=False, f1=None, perturbations=()
    )
    adv = AdversarialCandidate(
        example=example,
        loss=0.9,
        prediction=1,
        success=True,
        f1=None,
        perturbations=perturbations,
    )
    return AttackResult(
        example_id=example.id,
        status=AttackStatus.SUCCEEDED,
        clean=clean,
        best=adv,
        best_successful=adv,
        least_successful=adv,
        queries=2,
    )


def failed_result(example) -> AttackResult:
    clean = AdversarialCandidate(
        example=example, loss=0.1, prediction=0, success=False, f1=None, perturbations=()
    )
    return AttackResult(
        example_id=example.id,
        status=AttackStatus.FAILED,
        clean=clean,
        best=clean,
        best_successful=None,
        least_successful=None,
        queries=2,
    )


# --- language distribution ---


def test_distribution_validation():
    with pytest.raises(DataError):
        AdvDistribution(weights={})
    with pytest.raises(DataError):
        AdvDistribution(weights={"es": -0.5, "zh": 1.5})
    with pytest.raises(DataError):
        AdvDistribution(weights={"es": 0.6, "zh": 0.6})
    dist = AdvDistribution(weights={"zh": 0.5, "es": 0.5})
    assert dist.codes() == ["es", "zh"]


def test_compute_distribution_counts_perturbations():
    ex = mk_example("a b c", "d")
    results = [
        success_result(ex, ["es", "es", "zh"]),
        success_result(ex, ["zh"]),
        failed_result(ex),
    ]
    dist = compute_adv_distribution(results)
    assert dist.weights == {"es": 0.5, "zh": 0.5}


def test_compute_distribution_from_file_rows():
    rows = [
        {
            "best_successful": {
                "perturbations": [{"lang": "es"}, {"lang": "zh"}, {"lang": "es"}]
            }
        },
        {"best_successful": None},
        {
            "best_successful": {
                "perturbations": [{"lang": "es"}]
            }
        },
    ]
    dist = compute_adv_distribution(rows)
    assert dist.weights["es"] == pytest.approx(0.75)
    assert dist.weights["zh"] == pytest.approx(0.25)
    assert sum(dist.weights.values()) == 1.0


def test_compute_distribution_remainder_closes_the_sum():
    ex = mk_example("a b c", "d")
    dist = compute_adv_distribution([success_result(ex, ["aa", "bb", "cc"])])
    assert dist.weights["aa"] == pytest.approx(1 / 3)
    assert dist.weights["cc"] == 1.0 - 2 * (1 / 3)  # exact remainder
    assert sum(dist.weights.values()) == 1.0


def test_compute_distribution_needs_successes():
    ex = mk_example("a", "b")
    with pytest.raises(DataError, match="successful"):
        compute_adv_distribution([failed_result(ex)])


# --- sampling ---


def test_sample_languages_without_replacement():
    dist = AdvDistribution(weights={"aa": 0.4, "bb": 0.3, "cc": 0.3})
    rng = random.Random(0)
    for _ in range(50):
        got = sample_languages(dist, 2, rng)
        assert len(got) == 2
        assert len(set(got)) == 2
        assert set(got) <= {"aa", "bb", "cc"}
    assert sorted(sample_languages(dist, 5, rng)) == ["aa", "bb", "cc"]
    with pytest.raises(ConfigError):
        sample_languages(dist, 0, rng)


def test_sample_languages_skips_zero_weight():
    dist = AdvDistribution(weights={"aa": 1.0, "bb": 0.0})
    rng = random.Random(1)
    for _ in range(20):
        assert sample_languages(dist, 2, rng) == ["aa"]


def test_sample_languages_matches_weights():
    dist = AdvDistribution(weights={"aa": 0.8, "bb": 0.2})
    rng = random.Random(42)
    draws = 10_000
    hits = sum(sample_languages(dist, 1, rng) == ["aa"] for _ in range(draws))
    assert hits / draws == pytest.approx(0.8, abs=0.02)


def test_sample_languages_deterministic():
    dist = AdvDistribution(weights={"aa": 0.5, "bb": 0.3, "cc": 0.2})
    a = sample_languages(dist, 3, random.Random(7))
    b = sample_languages(dist, 3, random.Random(7))
    assert a == b


# --- config and seeding ---


def test_cat_config_validation():
    cfg = CatConfig()
    assert (cfg.k, cfg.n, cfg.rho) == (9, 2, 0.5)
    with pytest.raises(ConfigError):
        CatConfig(k=0)
    with pytest.raises(ConfigError):
        CatConfig(n=0)
    with pytest.raises(ConfigError):
        CatConfig(rho=-0.1)
    with pytest.raises(ConfigError):
        CatConfig(max_phrase_len=0)


def test_derive_seed_stable_and_id_sensitive():
    assert derive_seed(3, "p1:en") == derive_seed(3, "p1:en")
    assert derive_seed(3, "p1:en") != derive_seed(3, "p2:en")
    assert derive_seed(3, "p1:en") != derive_seed(4, "p1:en")
    assert example_rng(3, "p1:en").random() == example_rng(3, "p1:en").random()


# --- generation ---


def cat_setup(k: int = 3, rho: float = 0.5, seed: int = 5, n: int = 2):
    examples = [
        mk_example("the cat", "sat down", ex_id="p1:en"),
        mk_example("a dog", "ran off", ex_id="p2:en", label=1),
    ]
    maps = {
        "es": {
            "the": "el", "cat": "gato", "sat": "sento", "down": "abajo",
            "a": "un", "dog": "perro", "ran": "corrio", "off": "fuera",
        }
    }
    dataset = Dataset(examples)
    store = fill_store(examples, maps)
    tables = train_tables_from_store(dataset, [ES], store)
    dist = AdvDistribution(weights={"es": 1.0})
    cfg = CatConfig(k=k, n=n, rho=rho, seed=seed)
    return dataset, dist, tables, store, cfg


def test_generate_counts_and_grouping():
    dataset, dist, tables, store, cfg = cat_setup(k=3)
    out, provenance = generate_cat_dataset(dataset, dist, tables, store, cfg)
    assert len(out) == len(dataset) * (cfg.k + 1)
    ids = [ex.id for ex in out]
    assert ids == [
        "p1:en",
        "p2:en",
        "p1:en#cat1",
        "p1:en#cat2",
        "p1:en#cat3",
        "p2:en#cat1",
        "p2:en#cat2",
        "p2:en#cat3",
    ]
    assert len(provenance) == len(dataset) * cfg.k
    assert [row["id"] for row in provenance] == ids[2:]
    # copies preserve the label and task
    assert out.examples[5].label == 1
    assert out.label_names == dataset.label_names


def test_generate_rho_zero_is_verbatim():
    dataset, dist, tables, store, cfg = cat_setup(k=2, rho=0.0)
    out, provenance = generate_cat_dataset(dataset, dist, tables, store, cfg)
    originals = {ex.id: ex for ex in dataset}
    for copy in out.examples[len(dataset):]:
        base = originals[copy.id.split("#")[0]]
        assert copy.segments == base.segments
    assert all(row["perturbation_count"] == 0 for row in provenance)


def test_generate_rho_one_perturbs_every_copy():
    dataset, dist, tables, store, cfg = cat_setup(k=3, rho=1.0)
    out, provenance = generate_cat_dataset(dataset, dist, tables, store, cfg)
    originals = {ex.id: ex for ex in dataset}
    for copy in out.examples[len(dataset):]:
        base = originals[copy.id.split("#")[0]]
        assert copy.segments != base.segments
    assert all(row["perturbation_count"] >= 1 for row in provenance)
    assert all(row["sampled_languages"] == {"premise": ["es"], "hypothesis": ["es"]}
               for row in provenance)


def test_generate_deterministic_and_order_independent():
    dataset, dist, tables, store, cfg = cat_setup(k=2, rho=0.7)
    out1, prov1 = generate_cat_dataset(dataset, dist, tables, store, cfg)
    out2, prov2 = generate_cat_dataset(dataset, dist, tables, store, cfg)
    assert [ex.segments for ex in out1] == [ex.segments for ex in out2]
    assert prov1 == prov2

    # per-example substreams: reversing dataset order leaves copies unchanged
    reversed_dataset = Dataset(tuple(reversed(dataset.examples)))
    out3, _ = generate_cat_dataset(reversed_dataset, dist, tables, store, cfg)
    by_id_fwd = {ex.id: ex.segments for ex in out1}
    by_id_rev = {ex.id: ex.segments for ex in out3}
    assert by_id_fwd == by_id_rev


def test_generate_degrades_on_missing_translations():
    dataset, _, tables, store, cfg = cat_setup(k=2, rho=1.0)
    dist = AdvDistribution(weights={"fr": 1.0})  # nothing stored for fr
    out, provenance = generate_cat_dataset(dataset, dist, tables, store, cfg)
    assert len(out) == len(dataset) * (cfg.k + 1)
    originals = {ex.id: ex for ex in dataset}
    for copy in out.examples[len(dataset):]:
        base = originals[copy.id.split("#")[0]]
        assert copy.segments == base.segments
    assert all("error" in row and row["perturbation_count"] == 0 for row in provenance)


def test_generate_degrades_on_missing_table():
    dataset, dist, _, store, cfg = cat_setup(k=1, rho=1.0)
    out, provenance = generate_cat_dataset(dataset, dist, {}, store, cfg)
    assert all("error" in row for row in provenance)
    assert all("es" in row["error"] for row in provenance)


def test_generate_single_language_pool_with_n_two():
    dataset, dist, tables, store, cfg = cat_setup(k=1, n=2)
    _, provenance = generate_cat_dataset(dataset, dist, tables, store, cfg)
    # the pool has one language, so each role samples exactly one
    for row in provenance:
        assert row["sampled_languages"]["premise"] == ["es"]
        assert row["sampled_languages"]["hypothesis"] == ["es"]
