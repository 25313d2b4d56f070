import json

import httpx
import pytest

from codemix.alignment import (
    AlignMethod,
    AlignmentLinks,
    RemoteAligner,
    TranslationProbTable,
    align_pair,
    build_candidate_table,
    extract_phrase_pairs,
    format_pharaoh,
    load_prob_table,
    parse_pharaoh,
    save_prob_table,
    train_ibm1,
    train_tables_from_store,
)
from codemix.corpus import Dataset, LanguageTag, SegmentRole
from codemix.errors import DataError, TranslationError
from codemix.kernels import EXACT_MATCHING_LIMIT

from helpers import EN, fill_store, mk_example

ES = LanguageTag("es")


def table_of(probs: dict[tuple[str, str], float]) -> TranslationProbTable:
    return TranslationProbTable(source_lang=EN, target_lang=ES, probs=dict(probs))


# --- training ---


def test_train_worked_example():
    bitext = [(["a"], ["x"]), (["a", "b"], ["x", "y"])]
    one = train_ibm1(bitext, EN, ES, iterations=1)
    two = train_ibm1(bitext, EN, ES, iterations=2)
    assert one.prob("a", "x") == pytest.approx(0.75, abs=1e-12)
    assert two.prob("a", "x") == pytest.approx(24 / 29, abs=1e-12)
    two.check_normalized()
    assert two.prob("b", "q") == 0.0  # never cooccurred


def test_train_skips_empty_and_counts():
    bitext = [(["a"], ["x"]), ([], ["x"]), (["a"], [])]
    table = train_ibm1(bitext, EN, ES, iterations=2)
    assert table.skipped_sentences == 2
    assert table.prob("a", "x") == 1.0


def test_train_rejects_zero_iterations():
    with pytest.raises(DataError):
        train_ibm1([(["a"], ["x"])], EN, ES, iterations=0)


def test_check_normalized_flags_bad_table():
    bad = table_of({("a", "x"): 0.4, ("a", "y"): 0.4})
    with pytest.raises(DataError, match="sum"):
        bad.check_normalized()


def test_prob_table_round_trip(tmp_path):
    table = table_of({("the", "le"): 0.9, ("the", "la"): 0.1, ("cat", "chat"): 1.0})
    path = tmp_path / "table.jsonl"
    save_prob_table(table, path)
    loaded = load_prob_table(path)
    assert loaded.probs == table.probs
    assert loaded.source_lang == EN and loaded.target_lang == ES


def test_load_prob_table_rejects_empty(tmp_path):
    path = tmp_path / "table.jsonl"
    path.write_text("")
    with pytest.raises(DataError):
        load_prob_table(path)


# --- pairwise alignment ---


def test_match_links_best_pairs():
    table = table_of({("the", "le"): 0.9, ("cat", "chat"): 0.8, ("cat", "le"): 0.1})
    got = align_pair(["the", "cat"], ["le", "chat"], table)
    assert got.links == {(0, 0), (1, 1)}
    assert got.solver == "exact"


def test_match_never_links_zero_probability():
    table = table_of({("the", "le"): 0.9})
    got = align_pair(["the", "cat"], ["le", "chat"], table)
    assert got.links == {(0, 0)}


def test_match_tie_prefers_diagonal():
    table = table_of(
        {("a", "x"): 0.5, ("a", "y"): 0.5, ("b", "x"): 0.5, ("b", "y"): 0.5}
    )
    got = align_pair(["a", "b"], ["x", "y"], table)
    assert sorted(got.links) == [(0, 0), (1, 1)]


def test_match_recovers_link_intersect_drops():
    # b attracts both argmaxes, so intersect keeps only (b, x); the matching
    # still links a to x and b to y.
    table = table_of({("a", "x"): 0.9, ("b", "x"): 0.95, ("b", "y"): 0.2})
    tokens = (["a", "b"], ["x", "y"])
    match = align_pair(*tokens, table, method=AlignMethod.MATCH)
    intersect = align_pair(*tokens, table, method=AlignMethod.INTERSECT)
    assert intersect.links == {(1, 0)}
    assert intersect.solver == "intersect"
    assert match.links == {(0, 0), (1, 1)}
    assert len(match.links) > len(intersect.links)


def test_align_empty_side():
    table = table_of({})
    got = align_pair([], ["x"], table)
    assert got.links == frozenset()
    assert got.n_src == 0 and got.n_tgt == 1


def test_match_falls_back_to_greedy_when_large():
    n = EXACT_MATCHING_LIMIT + 1
    probs = {(f"w{i}", f"v{i}"): 1.0 for i in range(n)}
    table = table_of(probs)
    got = align_pair([f"w{i}" for i in range(n)], [f"v{i}" for i in range(n)], table)
    assert got.solver == "greedy"
    assert got.links == {(i, i) for i in range(n)}


def test_links_validate_range():
    with pytest.raises(DataError):
        AlignmentLinks(links=frozenset({(2, 0)}), n_src=2, n_tgt=1, solver="exact")


def test_pharaoh_round_trip():
    links = AlignmentLinks(links=frozenset({(1, 0), (0, 1)}), n_src=2, n_tgt=2, solver="exact")
    text = format_pharaoh(links)
    assert text == "0-1 1-0"
    back = parse_pharaoh(text, 2, 2)
    assert back.links == links.links
    with pytest.raises(DataError):
        parse_pharaoh("0-1 junk", 2, 2)


def test_remote_aligner_request_and_response():
    seen = {}

    def handler(request: httpx.Request) -> httpx.Response:
        seen["path"] = request.url.path
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json={"links": [[0, 1], [1, 0]]})

    aligner = RemoteAligner("http://oracle.test", transport=httpx.MockTransport(handler))
    got = aligner.align(["a", "b"], ["x", "y"])
    assert seen["path"] == "/v1/align"
    assert seen["body"] == {"src_tokens": ["a", "b"], "tgt_tokens": ["x", "y"]}
    assert got.links == {(0, 1), (1, 0)}
    assert got.solver == "remote"
    aligner.close()


def test_remote_aligner_surfaces_errors():
    def handler(request: httpx.Request) -> httpx.Response:
        return httpx.Response(500, json={"error": "boom"})

    aligner = RemoteAligner("http://oracle.test", transport=httpx.MockTransport(handler))
    with pytest.raises(TranslationError, match="500"):
        aligner.align(["a"], ["x"])
    aligner.close()


# --- phrase pairs ---


def test_phrase_pairs_crossing_links():
    links = AlignmentLinks(
        links=frozenset({(0, 1), (1, 0)}), n_src=2, n_tgt=2, solver="exact"
    )
    table = table_of({("a", "y"): 0.6, ("b", "x"): 0.4})
    pairs = extract_phrase_pairs(
        links, ["a", "b"], ["x", "y"], embedded_lang=ES, table=table
    )
    spans = {(p.matrix_span, p.embedded_span): p for p in pairs}
    assert set(spans) == {
        ((0, 0), (1, 1)),
        ((0, 1), (0, 1)),
        ((1, 1), (0, 0)),
    }
    whole = spans[((0, 1), (0, 1))]
    assert whole.monotonic is False  # the two links cross
    assert whole.embedded_text == ("x", "y")
    assert whole.embedded_lang == ES
    assert whole.link_prob == pytest.approx(0.5)  # mean of 0.6 and 0.4
    single = spans[((0, 0), (1, 1))]
    assert single.monotonic is True
    assert single.embedded_text == ("y",)
    assert single.link_prob == pytest.approx(0.6)


def test_phrase_pairs_no_links():
    links = AlignmentLinks(links=frozenset(), n_src=3, n_tgt=3, solver="exact")
    assert extract_phrase_pairs(links, ["a", "b", "c"], ["x", "y", "z"]) == []


def test_phrase_pairs_without_table_have_no_prob():
    links = AlignmentLinks(links=frozenset({(0, 0)}), n_src=1, n_tgt=1, solver="exact")
    (pair,) = extract_phrase_pairs(links, ["a"], ["x"])
    assert pair.link_prob is None
    assert pair.embedded_lang.code == "und"


# --- candidate tables ---


def word_maps() -> dict[str, dict[str, str]]:
    return {
        "es": {
            "the": "el",
            "cat": "gato",
            "sat": "sentó",
            "down": "abajo",
        }
    }


def test_candidate_table_positions_and_roles():
    example = mk_example("the cat", "sat down")
    store = fill_store([example], word_maps())
    tables = train_tables_from_store(Dataset([example]), [ES], store)
    table = build_candidate_table(example, [ES], store, tables)
    assert table.example_id == example.id
    assert table.n_positions == 4  # two premise + two hypothesis tokens
    # premise positions are 0..1, hypothesis positions 2..3
    roles = {pos: {e.role for e in table.candidates_at(pos)} for pos in range(4)}
    assert roles[0] == {SegmentRole.PREMISE}
    assert roles[2] == {SegmentRole.HYPOTHESIS}
    assert {e.segment_index for e in table.candidates_at(2)} == {1}
    # phrase spans are segment-local, keys are global
    for pos in (2, 3):
        for entry in table.candidates_at(pos):
            assert entry.pair.matrix_span[0] == pos - 2
    assert table.candidates_at(99) == ()


def test_candidate_table_requires_tables():
    example = mk_example("the cat", "sat down")
    store = fill_store([example], word_maps())
    with pytest.raises(DataError, match="es"):
        build_candidate_table(example, [ES], store, tables={})


def test_train_tables_from_store():
    # varied cooccurrence so EM can separate articles from nouns
    examples = [
        mk_example("the cat", "the dog", ex_id="p1:en"),
        mk_example("a cat", "a dog", ex_id="p2:en"),
    ]
    maps = {"es": {"the": "el", "a": "un", "cat": "gato", "dog": "perro"}}
    store = fill_store(examples, maps)
    tables = train_tables_from_store(Dataset(examples), [ES], store)
    assert set(tables) == {"es"}
    table = tables["es"]
    table.check_normalized()
    assert table.prob("the", "el") > 0.75
    assert table.prob("cat", "gato") > 0.75
    assert table.prob("the", "el") > table.prob("the", "gato")
    assert table.source_lang == EN and table.target_lang == ES


def test_train_tables_rejects_empty_dataset():
    with pytest.raises(DataError):
        train_tables_from_store(Dataset([]), [ES], fill_store([], word_maps()))
