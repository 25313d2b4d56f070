"""Bilingual dictionaries and transliteration tables.

File format is two-column TSV as distributed with the common word-translation
benchmarks: one (source, target) pair per line. Lines with a tab are split on
the first tab, which lets targets contain internal spaces; otherwise the line
must be exactly two whitespace-separated fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .corpus import LanguageTag, Script
from .errors import DataError


@dataclass(frozen=True)
class BilingualDictionary:
    matrix: LanguageTag
    embedded: LanguageTag
    entries: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)


def _parse_two_columns(path: Union[str, Path]):
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if "\t" in line:
                fields = line.split("\t", 1)
            else:
                fields = line.split()
            if len(fields) != 2 or not fields[0].strip() or not fields[1].strip():
                raise DataError(f"line {lineno}: expected 2 fields, got {len(fields)}")
            yield lineno, fields[0].strip(), fields[1].strip()


def load_dictionary_tsv(
    path: Union[str, Path], matrix: LanguageTag, embedded: LanguageTag
) -> BilingualDictionary:
    """Load a word dictionary; sources are lowercased, duplicates dropped,
    multiple senses kept in file order."""
    entries: dict[str, list[str]] = {}
    seen: set[tuple[str, str]] = set()
    for _, src, tgt in _parse_two_columns(path):
        src = src.lower()
        if (src, tgt) in seen:
            continue
        seen.add((src, tgt))
        entries.setdefault(src, []).append(tgt)
    return BilingualDictionary(
        matrix=matrix,
        embedded=embedded,
        entries={k: tuple(v) for k, v in entries.items()},
    )


def dump_dictionary_tsv(dictionary: BilingualDictionary, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for src, targets in dictionary.entries.items():
            for tgt in targets:
                f.write(f"{src}\t{tgt}\n")


def lookup(dictionary: BilingualDictionary, word: str) -> list[str]:
    """All senses for a word, case-insensitive on the source side."""
    return list(dictionary.entries.get(word.lower(), ()))


@dataclass(frozen=True)
class TransliterationTable:
    from_script: Script
    to_script: Script
    entries: dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)


def load_transliteration_tsv(
    path: Union[str, Path], from_script: Script, to_script: Script
) -> TransliterationTable:
    entries: dict[str, str] = {}
    for lineno, src, tgt in _parse_two_columns(path):
        if src in entries and entries[src] != tgt:
            raise DataError(f"line {lineno}: conflicting transliteration for {src!r}")
        entries[src] = tgt
    return TransliterationTable(from_script=from_script, to_script=to_script, entries=entries)


def transliterate(table: TransliterationTable, word: str) -> Optional[str]:
    """Exact-match lookup; None when the table has no entry for the word."""
    return table.entries.get(word)
