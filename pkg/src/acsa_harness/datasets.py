"""Loaders for the four ACSA evaluation datasets.

All loaders produce the same canonical shape: one Sample per sentence (or
per review for Shoes) with a deduplicated gold set of (category, polarity)
pairs, plus the ordered category inventory that fills the prompt's
category slot.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence
from xml.etree import ElementTree as ET

logger = logging.getLogger(__name__)

DATASET_NAMES = ("Laptop16", "Restaurant16", "MAMS", "Shoes")

DOMAIN_BY_DATASET = {
    "Laptop16": "laptop",
    "Restaurant16": "restaurant",
    "MAMS": "restaurant",
    "Shoes": "shoes",
}

# name -> (train samples, test samples, category count)
OFFICIAL_COUNTS = {
    "Laptop16": (2468, 579, 67),
    "Restaurant16": (1954, 571, 12),
    "MAMS": (3149, 400, 8),
    "Shoes": (906, 125, 21),
}


class DatasetError(Exception):
    """Base class for dataset loading errors."""


class MalformedXml(DatasetError):
    pass


class UnknownPolarityValue(DatasetError):
    pass


class MissingCategoryAttribute(DatasetError):
    pass


class MalformedRecord(DatasetError):
    pass


class CountMismatch(DatasetError):
    pass


class Polarity(str, Enum):
    POSITIVE = "positive"
    NEUTRAL = "neutral"
    NEGATIVE = "negative"


@dataclass(frozen=True, order=True)
class Pair:
    """One (canonical category, polarity) prediction or gold annotation."""

    category: str
    polarity: Polarity


PairSet = frozenset  # of Pair; deduplication on exact equality is inherent


@dataclass(frozen=True)
class Sample:
    id: str
    text: str
    gold: frozenset[Pair]
    domain: str


@dataclass(frozen=True)
class DatasetSplit:
    name: str
    split: str
    samples: tuple[Sample, ...]
    categories: tuple[str, ...]
    n_conflict_dropped: int = 0

    def __post_init__(self):
        seen_ids = set()
        known = set(self.categories)
        for sample in self.samples:
            if sample.id in seen_ids:
                raise DatasetError(f"duplicate sample id {sample.id!r}")
            seen_ids.add(sample.id)
            if not sample.text.strip():
                raise DatasetError(f"sample {sample.id!r} has empty text")
            for pair in sample.gold:
                if pair.category not in known:
                    raise DatasetError(
                        f"sample {sample.id!r} gold category {pair.category!r} "
                        "is not in the inventory"
                    )


def category_inventory(split: DatasetSplit) -> list[str]:
    """Stable ordered category list; this exact list fills the prompts."""
    return list(split.categories)


def read_inventory(path: str | Path) -> list[str]:
    """Read a one-category-per-line inventory file, keeping file order.

    Lines are taken verbatim after stripping surrounding whitespace (no
    comment syntax: '#' is a legal category character). Blank lines are
    skipped; duplicates are an error.
    """
    categories: list[str] = []
    for raw in Path(path).read_text("utf-8").splitlines():
        line = raw.strip()
        if not line:
            continue
        if line in categories:
            raise DatasetError(f"duplicate category {line!r} in inventory file {path}")
        categories.append(line)
    if not categories:
        raise DatasetError(f"inventory file {path} contains no categories")
    return categories


def _resolve_polarity(raw: str | None, where: str, drop_conflict: bool) -> Polarity | None:
    """Map a raw polarity attribute to a Polarity, or None for a dropped conflict."""
    if raw is None or not raw.strip():
        raise UnknownPolarityValue(f"{where}: missing polarity value")
    value = raw.strip().lower()
    if value == "conflict":
        if drop_conflict:
            return None
        raise UnknownPolarityValue(
            f"{where}: polarity 'conflict' (rerun with drop_conflict to discard)"
        )
    try:
        return Polarity(value)
    except ValueError:
        raise UnknownPolarityValue(f"{where}: unknown polarity {raw!r}") from None


def _finish_split(
    name: str,
    split: str,
    samples: list[Sample],
    inventory: Sequence[str] | None,
    n_conflict_dropped: int,
) -> DatasetSplit:
    if inventory is not None:
        categories = tuple(inventory)
    else:
        categories = tuple(sorted({p.category for s in samples for p in s.gold}))
    if n_conflict_dropped:
        logger.info(
            "%s %s: dropped %d conflict opinions", name, split, n_conflict_dropped
        )
    return DatasetSplit(name, split, tuple(samples), categories, n_conflict_dropped)


def load_semeval_xml(
    path: str | Path,
    name: str,
    split: str = "test",
    drop_conflict: bool = False,
    inventory: Sequence[str] | None = None,
) -> DatasetSplit:
    """Load a SemEval-2016 task-5 subtask-1 sentence-level XML file.

    One Sample per <sentence> element; Opinion elements carry category and
    polarity attributes. Sentences without opinions are retained with an
    empty gold set; duplicate (category, polarity) opinions collapse.
    """
    try:
        tree = ET.parse(path)
    except (ET.ParseError, OSError) as err:
        if isinstance(err, OSError):
            raise
        raise MalformedXml(f"{path}: {err}") from err
    domain = DOMAIN_BY_DATASET.get(name, name.lower())
    samples: list[Sample] = []
    dropped = 0
    for i, sentence in enumerate(tree.getroot().iter("sentence")):
        sid = sentence.get("id") or f"s{i + 1}"
        text_el = sentence.find("text")
        text = (text_el.text or "") if text_el is not None else ""
        if not text.strip():
            raise MalformedXml(f"sentence {sid!r} has no text element or empty text")
        pairs = set()
        opinions = sentence.find("Opinions")
        if opinions is not None:
            for opinion in opinions.findall("Opinion"):
                category = opinion.get("category")
                if not category:
                    raise MissingCategoryAttribute(
                        f"sentence {sid!r}: Opinion element without category attribute"
                    )
                polarity = _resolve_polarity(
                    opinion.get("polarity"), f"sentence {sid!r}", drop_conflict
                )
                if polarity is None:
                    dropped += 1
                    continue
                pairs.add(Pair(category, polarity))
        samples.append(Sample(sid, text.strip(), frozenset(pairs), domain))
    return _finish_split(name, split, samples, inventory, dropped)


def load_mams(
    path: str | Path,
    split: str = "test",
    drop_conflict: bool = False,
    inventory: Sequence[str] | None = None,
) -> DatasetSplit:
    """Load a MAMS ACSA XML file (aspectCategory elements per sentence)."""
    try:
        tree = ET.parse(path)
    except ET.ParseError as err:
        raise MalformedXml(f"{path}: {err}") from err
    samples: list[Sample] = []
    dropped = 0
    for i, sentence in enumerate(tree.getroot().iter("sentence")):
        sid = sentence.get("id") or f"s{i + 1}"
        text_el = sentence.find("text")
        text = (text_el.text or "") if text_el is not None else ""
        if not text.strip():
            raise MalformedXml(f"sentence {sid!r} has no text element or empty text")
        pairs = set()
        categories_el = sentence.find("aspectCategories")
        if categories_el is not None:
            for aspect in categories_el.findall("aspectCategory"):
                category = aspect.get("category")
                if not category:
                    raise MissingCategoryAttribute(
                        f"sentence {sid!r}: aspectCategory element without category attribute"
                    )
                polarity = _resolve_polarity(
                    aspect.get("polarity"), f"sentence {sid!r}", drop_conflict
                )
                if polarity is None:
                    dropped += 1
                    continue
                pairs.add(Pair(category, polarity))
        samples.append(Sample(sid, text.strip(), frozenset(pairs), DOMAIN_BY_DATASET["MAMS"]))
    return _finish_split("MAMS", split, samples, inventory, dropped)


def load_shoes(
    path: str | Path,
    split: str = "test",
    drop_conflict: bool = False,
    inventory: Sequence[str] | None = None,
) -> DatasetSplit:
    """Load the full-review Shoes dataset from a delimited-record file.

    The format is auto-detected from the first non-blank byte: '{' means
    one JSON object per line with keys id (optional), text, and pairs
    ([[category, polarity], ...]); anything else is tab-separated
    ``id<TAB>text<TAB>cat<TAB>pol[<TAB>cat<TAB>pol ...]``.
    """
    raw = Path(path).read_text("utf-8")
    if not raw.strip():
        raise MalformedRecord(f"{path}: empty file")
    domain = DOMAIN_BY_DATASET["Shoes"]
    jsonl = raw.lstrip()[0] == "{"
    samples: list[Sample] = []
    dropped = 0
    for lineno, line in enumerate(raw.splitlines(), 1):
        if not line.strip():
            continue
        where = f"{path}:{lineno}"
        if jsonl:
            rid, text, raw_pairs = _shoes_json_record(line, where, lineno)
        else:
            rid, text, raw_pairs = _shoes_tsv_record(line, where, lineno)
        if not text.strip():
            raise MalformedRecord(f"{where}: record has empty text")
        pairs = set()
        for category, raw_pol in raw_pairs:
            polarity = _resolve_polarity(raw_pol, where, drop_conflict)
            if polarity is None:
                dropped += 1
                continue
            pairs.add(Pair(category, polarity))
        samples.append(Sample(rid, text.strip(), frozenset(pairs), domain))
    return _finish_split("Shoes", split, samples, inventory, dropped)


def _shoes_json_record(line: str, where: str, lineno: int):
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as err:
        raise MalformedRecord(f"{where}: invalid JSON ({err})") from err
    if not isinstance(obj, dict):
        raise MalformedRecord(f"{where}: record is not a JSON object")
    text = obj.get("text")
    if not isinstance(text, str):
        raise MalformedRecord(f"{where}: missing or non-string 'text'")
    rid = obj.get("id")
    if rid is None:
        rid = f"r{lineno}"
    elif not isinstance(rid, str):
        raise MalformedRecord(f"{where}: non-string 'id'")
    raw_pairs = obj.get("pairs", [])
    if not isinstance(raw_pairs, list):
        raise MalformedRecord(f"{where}: 'pairs' must be a list")
    out = []
    for item in raw_pairs:
        if (
            not isinstance(item, (list, tuple))
            or len(item) != 2
            or not all(isinstance(x, str) for x in item)
        ):
            raise MalformedRecord(f"{where}: each pair must be a [category, polarity] pair")
        out.append((item[0], item[1]))
    return rid, text, out


def _shoes_tsv_record(line: str, where: str, lineno: int):
    fields = line.split("\t")
    if len(fields) < 2:
        raise MalformedRecord(f"{where}: expected at least id and text fields")
    rid, text, tail = fields[0], fields[1], fields[2:]
    if not rid:
        rid = f"r{lineno}"
    if len(tail) % 2 != 0:
        raise MalformedRecord(f"{where}: category/polarity fields are unpaired")
    out = [(tail[i], tail[i + 1]) for i in range(0, len(tail), 2)]
    return rid, text, out


def load_dataset(
    name: str,
    path: str | Path,
    split: str = "test",
    drop_conflict: bool = False,
    inventory: Sequence[str] | None = None,
) -> DatasetSplit:
    """Dispatch to the loader for one of the four dataset names."""
    if name in ("Laptop16", "Restaurant16"):
        return load_semeval_xml(path, name, split, drop_conflict, inventory)
    if name == "MAMS":
        return load_mams(path, split, drop_conflict, inventory)
    if name == "Shoes":
        return load_shoes(path, split, drop_conflict, inventory)
    raise DatasetError(f"unknown dataset {name!r}; expected one of {DATASET_NAMES}")


def verify_official_counts(split: DatasetSplit) -> None:
    """Check sample and category counts against the published statistics.

    Only meaningful when the loaded file is an official distribution; the
    loaders cannot know that, so this is an explicit opt-in check.
    """
    if split.name not in OFFICIAL_COUNTS:
        raise CountMismatch(f"no official counts known for {split.name!r}")
    train, test, n_categories = OFFICIAL_COUNTS[split.name]
    expected = train if split.split == "train" else test
    if len(split.samples) != expected:
        raise CountMismatch(
            f"{split.name} {split.split}: expected {expected} samples, "
            f"found {len(split.samples)}"
        )
    if len(split.categories) != n_categories:
        raise CountMismatch(
            f"{split.name}: expected {n_categories} categories, "
            f"found {len(split.categories)}"
        )
