"""Command-line interface.

Exit codes: 0 success, 2 configuration problems, 3 oracle failures, 4 data
problems. Options resolve flag > config file > environment; the config file
is flat `key = value` lines with TOML-style scalars. Commands that randomize
anything require an explicit --seed, and a rerun with identical inputs writes
byte-identical outputs (reports carry no timestamps).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from .alignment import (
    AlignMethod,
    align_pair,
    build_candidate_table,
    format_pharaoh,
    train_ibm1,
    train_tables_from_store,
)
from .attack import AttackConfig, AttackKind, read_adversaries, write_adversaries
from .cat import CatConfig, compute_adv_distribution, generate_cat_dataset
from .corpus import Dataset, LanguageTag, Script, Task, load_classification_jsonl, load_spanqa_json, save_classification_jsonl, tokenize
from .errors import CodemixError, ConfigError, DataError, OracleError
from .evaluation import (
    CampaignAssets,
    SweepVariable,
    build_clean_dl,
    run_campaign,
    save_report,
    sweep,
)
from .lexicon import load_dictionary_tsv, load_transliteration_tsv
from .oracle import (
    OracleBackend,
    OracleConfig,
    build_overlap_surrogate,
    make_oracle,
)
from .translation import load_gold_parallel

ENV_ORACLE_URL = "CODEMIX_ORACLE_URL"


def parse_flat_config(path: str) -> dict:
    """Flat key = value file; values are TOML-style scalars."""
    out: dict = {}
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, _, value = s.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        out[key] = _parse_scalar(value)
    return out


def _parse_scalar(value: str):
    if len(value) >= 2 and value[0] == '"' and value[-1] == '"':
        return value[1:-1]
    low = value.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        pass
    return value


class _Resolver:
    """flag > config file > environment > built-in default."""

    def __init__(self, args: argparse.Namespace) -> None:
        self.args = args
        self.file_cfg = parse_flat_config(args.config) if getattr(args, "config", None) else {}

    def get(self, name: str, default=None, env: Optional[str] = None):
        flag = getattr(self.args, name, None)
        if flag is not None:
            return flag
        if name in self.file_cfg:
            return self.file_cfg[name]
        if env and os.environ.get(env):
            return os.environ[env]
        return default

    def require(self, name: str, env: Optional[str] = None):
        value = self.get(name, env=env)
        if value is None:
            raise ConfigError(f"missing required option --{name.replace('_', '-')}")
        return value


def _parse_langs(spec: str) -> tuple[LanguageTag, ...]:
    codes = [c.strip() for c in str(spec).split(",") if c.strip()]
    if not codes:
        raise ConfigError("empty language list")
    return tuple(LanguageTag(code) for code in codes)


def _load_dataset(path: str, task: str) -> Dataset:
    if task == Task.SPAN_QA.value:
        return load_spanqa_json(path)
    if task == Task.CLASSIFICATION.value:
        return load_classification_jsonl(path)
    raise ConfigError(f"unknown task {task!r}")


def _load_dictionaries(specs: Sequence[str], matrix: LanguageTag) -> dict:
    dictionaries = {}
    for spec in specs or ():
        code, _, path = spec.partition("=")
        if not path:
            raise ConfigError(f"--dict wants LANG=PATH, got {spec!r}")
        lang = LanguageTag(code.strip())
        dictionaries[lang.code] = load_dictionary_tsv(path, matrix, lang)
    return dictionaries


def _script(name: str) -> Script:
    try:
        return Script(name.capitalize())
    except ValueError as exc:
        raise ConfigError(f"unknown script {name!r}") from exc


def _build_oracle(res: _Resolver, dataset: Dataset):
    backend = str(res.get("oracle", "surrogate"))
    if backend == "surrogate":
        train_path = res.get("surrogate_train")
        train = load_classification_jsonl(train_path) if train_path else dataset
        model = build_overlap_surrogate(list(train))
        return make_oracle(OracleConfig(backend=OracleBackend.SURROGATE), model=model)
    if backend == "remote":
        url = res.get("oracle_url", env=ENV_ORACLE_URL)
        if not url:
            raise ConfigError("remote oracle needs --oracle-url or " + ENV_ORACLE_URL)
        cfg = OracleConfig(
            backend=OracleBackend.REMOTE,
            endpoint=str(url),
            batch_size=int(res.get("batch_size", 32)),
        )
        return make_oracle(cfg)
    raise ConfigError(f"unknown oracle backend {backend!r}")


def _build_assets(res: _Resolver, dataset: Dataset, cfg: AttackConfig) -> CampaignAssets:
    store = None
    translations = res.get("translations")
    if translations:
        store = load_gold_parallel(str(translations))
    matrix = dataset.examples[0].matrix_language
    dictionaries = _load_dictionaries(getattr(res.args, "dict", None) or (), matrix)
    tables = None
    needs_tables = cfg.kind in (AttackKind.BUMBLEBEE, AttackKind.RANDOM) and store is not None
    if needs_tables:
        tables = train_tables_from_store(
            dataset,
            cfg.embedded_languages,
            store,
            iterations=int(res.get("iterations", 5)),
        )
    return CampaignAssets(
        store=store,
        dictionaries=dictionaries or None,
        tables=tables,
        align_method=AlignMethod(str(res.get("align_method", "match"))),
        max_phrase_len=int(res.get("max_phrase_len", 4)),
    )


def _attack_config(res: _Resolver) -> AttackConfig:
    method = str(res.require("method"))
    try:
        kind = AttackKind(method)
    except ValueError as exc:
        raise ConfigError(f"unknown method {method!r}") from exc
    translit = None
    translit_path = res.get("translit")
    if translit_path:
        translit = load_transliteration_tsv(
            str(translit_path),
            _script(str(res.get("translit_from", "devanagari"))),
            _script(str(res.get("translit_to", "latin"))),
        )
    seed = res.get("seed")
    max_queries = res.get("max_queries")
    return AttackConfig(
        kind=kind,
        embedded_languages=_parse_langs(str(res.require("langs"))),
        beam_width=int(res.get("beam_width", 1)),
        filter_by_translation=not bool(res.get("no_filter", False)),
        equivalence_constraint=bool(res.get("equivalence", False)),
        transliteration=translit,
        early_exit=bool(res.get("early_exit", False)),
        max_queries=int(max_queries) if max_queries is not None else None,
        seed=int(seed) if seed is not None else None,
        rho=float(res.get("rho", 0.5)),
    )


def _cmd_attack(args: argparse.Namespace) -> int:
    res = _Resolver(args)
    dataset = _load_dataset(str(res.require("dataset")), str(res.get("task", "classification")))
    cfg = _attack_config(res)
    n_random = int(res.get("random_seeds", 0))
    if n_random > 0 and cfg.seed is None:
        raise ConfigError("--random-seeds needs --seed")
    oracle = _build_oracle(res, dataset)
    assets = _build_assets(res, dataset, cfg)
    out_dir = Path(str(res.require("out")))
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = [cfg.seed + i for i in range(n_random)] if n_random > 0 else None
    outcome = run_campaign(
        dataset,
        oracle,
        cfg,
        assets,
        workers=int(res.get("workers", 1)),
        random_seeds=seeds,
    )
    write_adversaries([r for r in outcome.results if r is not None], out_dir / "adversaries.jsonl")
    save_report(outcome.report, out_dir / "report.json")
    if outcome.errors:
        with open(out_dir / "errors.json", "w", encoding="utf-8") as f:
            json.dump(outcome.errors, f, ensure_ascii=False, sort_keys=True, indent=2)
            f.write("\n")
    print(
        f"attacked {outcome.report.n_examples} examples: "
        f"clean {outcome.report.clean_score:.4f} -> adv {outcome.report.adv_score:.4f}"
    )
    return 0


def _cmd_cat_gen(args: argparse.Namespace) -> int:
    res = _Resolver(args)
    dataset = _load_dataset(str(res.require("dataset")), "classification")
    rows = read_adversaries(str(res.require("adversaries")))
    dist = compute_adv_distribution(rows)
    store = load_gold_parallel(str(res.require("translations")))
    cfg = CatConfig(
        k=int(res.get("k", 9)),
        n=int(res.get("n", 2)),
        rho=float(res.get("rho", 0.5)),
        seed=int(res.require("seed")),
        max_phrase_len=int(res.get("max_phrase_len", 4)),
        align_method=AlignMethod(str(res.get("align_method", "match"))),
    )
    tables = train_tables_from_store(
        dataset,
        [LanguageTag(c) for c in dist.codes()],
        store,
        iterations=int(res.get("iterations", 5)),
    )
    augmented, provenance = generate_cat_dataset(dataset, dist, tables, store, cfg)
    out = Path(str(res.require("out")))
    save_classification_jsonl(augmented, out)
    prov_path = res.get("provenance") or str(out) + ".provenance.jsonl"
    with open(prov_path, "w", encoding="utf-8") as f:
        for row in provenance:
            f.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
    print(f"wrote {len(augmented)} examples ({len(provenance)} generated) to {out}")
    return 0


def _cmd_align(args: argparse.Namespace) -> int:
    res = _Resolver(args)
    src_lang = LanguageTag(str(res.get("source_lang", "en")))
    tgt_lang = LanguageTag(str(res.get("target_lang", "en")))
    bitext = []
    path = str(res.require("bitext"))
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            if "|||" not in line:
                raise DataError(f"line {lineno}: expected 'source ||| target'")
            src_text, _, tgt_text = line.partition("|||")
            bitext.append(
                (tokenize(src_text.strip(), src_lang), tokenize(tgt_text.strip(), tgt_lang))
            )
    table = train_ibm1(
        bitext, src_lang, tgt_lang, iterations=int(res.get("iterations", 5))
    )
    method = AlignMethod(str(res.get("align_method", "match")))
    out_path = str(res.require("out"))
    with open(out_path, "w", encoding="utf-8") as f:
        for src, tgt in bitext:
            links = align_pair(src, tgt, table, method=method)
            f.write(format_pharaoh(links) + "\n")
    print(f"aligned {len(bitext)} sentence pairs to {out_path}")
    return 0


def _cmd_build_phrases(args: argparse.Namespace) -> int:
    res = _Resolver(args)
    dataset = _load_dataset(str(res.require("dataset")), str(res.get("task", "classification")))
    langs = _parse_langs(str(res.require("langs")))
    store = load_gold_parallel(str(res.require("translations")))
    tables = train_tables_from_store(
        dataset, langs, store, iterations=int(res.get("iterations", 5))
    )
    method = AlignMethod(str(res.get("align_method", "match")))
    max_len = int(res.get("max_phrase_len", 4))
    out_path = str(res.require("out"))
    n_rows = 0
    with open(out_path, "w", encoding="utf-8") as f:
        for example in dataset:
            table = build_candidate_table(
                example, langs, store, tables, method=method, max_len=max_len
            )
            for position in sorted(table.entries):
                for entry in table.entries[position]:
                    pair = entry.pair
                    row = {
                        "id": example.id,
                        "position": position,
                        "role": entry.role.value,
                        "matrix_span": list(pair.matrix_span),
                        "embedded_span": list(pair.embedded_span),
                        "replacement": list(pair.embedded_text),
                        "lang": pair.embedded_lang.code,
                        "monotonic": pair.monotonic,
                        "link_prob": pair.link_prob,
                    }
                    f.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
                    n_rows += 1
    print(f"wrote {n_rows} phrase candidates to {out_path}")
    return 0


def _cmd_eval_clean(args: argparse.Namespace) -> int:
    res = _Resolver(args)
    dataset = _load_dataset(str(res.require("dataset")), "classification")
    store = load_gold_parallel(str(res.require("translations")))
    seed = int(res.require("seed"))
    mixed, rows = build_clean_dl(dataset, store, seed)
    out = Path(str(res.require("out")))
    save_classification_jsonl(mixed, out)
    prov_path = res.get("provenance") or str(out) + ".provenance.jsonl"
    with open(prov_path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
    report_path = res.get("report")
    if report_path:
        oracle = _build_oracle(res, dataset)
        records = oracle.query_losses(list(mixed))
        correct = sum(
            1 for rec, ex in zip(records, mixed) if rec.prediction == ex.label
        )
        report = {
            "n_examples": len(mixed),
            "accuracy": correct / len(mixed),
        }
        with open(report_path, "w", encoding="utf-8") as f:
            json.dump(report, f, ensure_ascii=False, sort_keys=True, indent=2)
            f.write("\n")
    print(f"wrote {len(mixed)} mixed-language examples to {out}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    res = _Resolver(args)
    dataset = _load_dataset(str(res.require("dataset")), str(res.get("task", "classification")))
    cfg = _attack_config(res)
    if cfg.kind is AttackKind.RANDOM:
        raise ConfigError("sweep wants a search attack, not the random baseline")
    try:
        variable = SweepVariable(str(res.require("variable")))
    except ValueError as exc:
        raise ConfigError(f"unknown sweep variable {res.get('variable')!r}") from exc
    values = [int(v) for v in str(res.require("values")).split(",") if v.strip()]
    oracle = _build_oracle(res, dataset)
    assets = _build_assets(res, dataset, cfg)
    points = sweep(
        variable, values, dataset, oracle, cfg, assets, workers=int(res.get("workers", 1))
    )
    out_dir = Path(str(res.require("out")))
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = [
        {"value": value, "report": report.to_json()} for value, report in points
    ]
    with open(out_dir / "sweep.json", "w", encoding="utf-8") as f:
        json.dump(payload, f, ensure_ascii=False, sort_keys=True, indent=2)
        f.write("\n")
    with open(out_dir / "sweep.csv", "w", encoding="utf-8") as f:
        f.write("value,clean_score,adv_score,success_rate,mean_queries\n")
        for value, report in points:
            rate = "" if report.success_rate is None else f"{report.success_rate:.6f}"
            f.write(
                f"{value},{report.clean_score:.6f},{report.adv_score:.6f},"
                f"{rate},{report.mean_queries:.6f}\n"
            )
    print(f"swept {variable.value} over {values}")
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--workers", type=int, help="parallel attack workers (default 1)")


def _add_attack_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dataset", help="input dataset path")
    parser.add_argument("--task", choices=[t.value for t in Task])
    parser.add_argument("--method", choices=[k.value for k in AttackKind])
    parser.add_argument("--langs", help="comma-separated embedded language codes")
    parser.add_argument("--dict", action="append", help="LANG=PATH bilingual dictionary TSV")
    parser.add_argument("--translations", help="gold parallel JSONL")
    parser.add_argument("--translit", help="transliteration TSV")
    parser.add_argument("--translit-from", dest="translit_from")
    parser.add_argument("--translit-to", dest="translit_to")
    parser.add_argument("--beam-width", dest="beam_width", type=int)
    parser.add_argument(
        "--no-filter",
        dest="no_filter",
        action="store_const",
        const=True,
        help="disable translation-containment filtering of word candidates",
    )
    parser.add_argument(
        "--equivalence", action="store_const", const=True, help="enable the equivalence constraint"
    )
    parser.add_argument("--early-exit", dest="early_exit", action="store_const", const=True)
    parser.add_argument("--max-queries", dest="max_queries", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--rho", type=float)
    parser.add_argument("--iterations", type=int, help="alignment EM iterations (default 5)")
    parser.add_argument("--max-phrase-len", dest="max_phrase_len", type=int)
    parser.add_argument("--align-method", dest="align_method", choices=["match", "intersect"])
    parser.add_argument("--oracle", choices=["surrogate", "remote"])
    parser.add_argument("--oracle-url", dest="oracle_url")
    parser.add_argument("--surrogate-train", dest="surrogate_train")
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="codemix",
        description="adversarial code-mixing attacks, evaluation, and data generation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_attack = sub.add_parser("attack", help="run an attack campaign")
    _add_attack_options(p_attack)
    p_attack.add_argument(
        "--random-seeds",
        dest="random_seeds",
        type=int,
        help="number of random-baseline seeds (0 disables)",
    )
    _add_common(p_attack)
    p_attack.set_defaults(fn=_cmd_attack)

    p_cat = sub.add_parser("cat-gen", help="generate code-mixed training data")
    p_cat.add_argument("--dataset")
    p_cat.add_argument("--adversaries", help="adversary JSONL from a previous attack")
    p_cat.add_argument("--translations")
    p_cat.add_argument("--out")
    p_cat.add_argument("--provenance")
    p_cat.add_argument("--k", type=int)
    p_cat.add_argument("--n", type=int)
    p_cat.add_argument("--rho", type=float)
    p_cat.add_argument("--seed", type=int)
    p_cat.add_argument("--max-phrase-len", dest="max_phrase_len", type=int)
    p_cat.add_argument("--iterations", type=int)
    p_cat.add_argument("--align-method", dest="align_method", choices=["match", "intersect"])
    _add_common(p_cat)
    p_cat.set_defaults(fn=_cmd_cat_gen)

    p_align = sub.add_parser("align", help="train and align a ||| bitext file")
    p_align.add_argument("--bitext")
    p_align.add_argument("--source-lang", dest="source_lang")
    p_align.add_argument("--target-lang", dest="target_lang")
    p_align.add_argument("--iterations", type=int)
    p_align.add_argument("--align-method", dest="align_method", choices=["match", "intersect"])
    p_align.add_argument("--out")
    _add_common(p_align)
    p_align.set_defaults(fn=_cmd_align)

    p_phr = sub.add_parser("build-phrases", help="dump phrase substitution candidates")
    p_phr.add_argument("--dataset")
    p_phr.add_argument("--task", choices=[t.value for t in Task])
    p_phr.add_argument("--langs")
    p_phr.add_argument("--translations")
    p_phr.add_argument("--iterations", type=int)
    p_phr.add_argument("--max-phrase-len", dest="max_phrase_len", type=int)
    p_phr.add_argument("--align-method", dest="align_method", choices=["match", "intersect"])
    p_phr.add_argument("--out")
    _add_common(p_phr)
    p_phr.set_defaults(fn=_cmd_build_phrases)

    p_clean = sub.add_parser("eval-clean", help="build a mixed-language clean test set")
    p_clean.add_argument("--dataset")
    p_clean.add_argument("--translations")
    p_clean.add_argument("--seed", type=int)
    p_clean.add_argument("--out")
    p_clean.add_argument("--provenance")
    p_clean.add_argument("--report", help="also score the set and write accuracy here")
    p_clean.add_argument("--oracle", choices=["surrogate", "remote"])
    p_clean.add_argument("--oracle-url", dest="oracle_url")
    p_clean.add_argument("--surrogate-train", dest="surrogate_train")
    _add_common(p_clean)
    p_clean.set_defaults(fn=_cmd_eval_clean)

    p_sweep = sub.add_parser("sweep", help="rerun a campaign across one variable")
    _add_attack_options(p_sweep)
    p_sweep.add_argument("--variable", choices=[v.value for v in SweepVariable])
    p_sweep.add_argument("--values", help="comma-separated ascending values")
    _add_common(p_sweep)
    p_sweep.set_defaults(fn=_cmd_sweep)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OracleError as exc:
        print(f"oracle error: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, CodemixError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
