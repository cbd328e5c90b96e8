"""Dataset ingestion, class-space definition, and gold-label bookkeeping.

File formats (see README for examples):

- classes file: one JSON object
  ``{"names": [...], "positive_class": <name or null>, "prior": [..] or null}``
- split files: one JSON record per line,
  ``{"id": str, "text": str, "label": str (optional)}``, UTF-8, LF endings.

Gold labels are class *names* on disk and class *indices* in memory; the
classes file fixes the index order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

CANONICAL_SPLITS = ("train", "valid", "test")

_PRIOR_TOL = 1e-9


@dataclass(frozen=True)
class ClassSpace:
    """The label space: k named classes, optional positive class and prior."""

    names: tuple[str, ...]
    positive_class: int | None = None
    prior: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "names", tuple(self.names))
        if self.prior is not None:
            object.__setattr__(self, "prior", tuple(float(p) for p in self.prior))
        if len(self.names) < 2:
            raise ValueError("need at least 2 classes")
        if any(not n for n in self.names):
            raise ValueError("class names must be non-empty")
        if len(set(self.names)) != len(self.names):
            raise ValueError("class names must be distinct")
        if self.positive_class is not None and not 0 <= self.positive_class < self.k:
            raise ValueError(f"positive_class {self.positive_class} out of range")
        if self.prior is not None:
            if len(self.prior) != self.k:
                raise ValueError(f"prior has {len(self.prior)} entries for k={self.k}")
            if any(p < 0 for p in self.prior):
                raise ValueError("prior entries must be non-negative")
            if not math.isclose(sum(self.prior), 1.0, abs_tol=_PRIOR_TOL):
                raise ValueError(f"prior sums to {sum(self.prior)}, not 1")

    @property
    def k(self) -> int:
        return len(self.names)

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValueError(
                f"unknown label {name!r} (classes: {', '.join(self.names)})"
            ) from None

    def effective_prior(self) -> tuple[float, ...]:
        """The declared prior, or uniform when none was given."""
        if self.prior is not None:
            return self.prior
        return tuple(1.0 / self.k for _ in range(self.k))


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    gold: int | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("document id must be non-empty")


@dataclass(frozen=True)
class Dataset:
    """Class space plus ordered documents per split. Immutable after load."""

    classes: ClassSpace
    splits: dict[str, tuple[Document, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        frozen = {name: tuple(docs) for name, docs in self.splits.items()}
        object.__setattr__(self, "splits", frozen)
        for name, docs in frozen.items():
            ids = [d.id for d in docs]
            if len(set(ids)) != len(ids):
                dup = next(i for i in ids if ids.count(i) > 1)
                raise ValueError(f"duplicate id {dup!r} in split {name!r}")
            for d in docs:
                if d.gold is not None and not 0 <= d.gold < self.classes.k:
                    raise ValueError(
                        f"gold label {d.gold} out of range in split {name!r}"
                    )

    def split(self, name: str) -> tuple[Document, ...]:
        if name not in self.splits:
            raise ValueError(f"split {name!r} not loaded (have: {sorted(self.splits)})")
        return self.splits[name]

    def gold_labels(self, name: str) -> list[int]:
        """Gold labels of a split, failing if any document lacks one."""
        docs = self.split(name)
        golds = []
        for d in docs:
            if d.gold is None:
                raise ValueError(f"document {d.id!r} in split {name!r} has no gold label")
            golds.append(d.gold)
        return golds


def load_classes(path: str | Path) -> ClassSpace:
    p = Path(path)
    with p.open("r", encoding="utf-8") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ValueError(f"{p}: invalid classes file: {e.msg}") from e
    names = raw.get("names")
    if not isinstance(names, list) or not names:
        raise ValueError(f"{p}: classes file needs a non-empty 'names' list")
    positive = raw.get("positive_class")
    positive_idx = None
    if positive is not None:
        if positive not in names:
            raise ValueError(f"{p}: positive_class {positive!r} not in names")
        positive_idx = names.index(positive)
    prior = raw.get("prior")
    return ClassSpace(
        names=tuple(str(n) for n in names),
        positive_class=positive_idx,
        prior=tuple(prior) if prior is not None else None,
    )


def save_classes(classes: ClassSpace, path: str | Path) -> None:
    payload = {
        "names": list(classes.names),
        "positive_class": (
            classes.names[classes.positive_class]
            if classes.positive_class is not None
            else None
        ),
        "prior": list(classes.prior) if classes.prior is not None else None,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")


def load_split(path: str | Path, classes: ClassSpace) -> tuple[Document, ...]:
    """Read one line-delimited split file, preserving document order."""
    p = Path(path)
    docs: list[Document] = []
    seen: set[str] = set()
    with p.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{p}:{lineno} malformed record: {e.msg}") from e
            if not isinstance(raw, dict) or "id" not in raw or "text" not in raw:
                raise ValueError(f"{p}:{lineno} record needs 'id' and 'text' fields")
            doc_id = str(raw["id"])
            if not doc_id:
                raise ValueError(f"{p}:{lineno} empty id")
            if doc_id in seen:
                raise ValueError(f"{p}:{lineno} duplicate id {doc_id!r}")
            seen.add(doc_id)
            gold = None
            if raw.get("label") is not None:
                try:
                    gold = classes.index_of(str(raw["label"]))
                except ValueError as e:
                    raise ValueError(f"{p}:{lineno} {e}") from None
            docs.append(Document(id=doc_id, text=str(raw["text"]), gold=gold))
    if not docs:
        raise ValueError(f"{p}: empty split file")
    return tuple(docs)


def save_split(docs: tuple[Document, ...] | list[Document], classes: ClassSpace, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for d in docs:
            rec: dict = {"id": d.id, "text": d.text}
            if d.gold is not None:
                rec["label"] = classes.names[d.gold]
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


def load_dataset(path: str | Path, classes_path: str | Path | None = None) -> Dataset:
    """Load a dataset from a directory of canonical splits or a single split file.

    Directory form: ``path`` holds ``classes.json`` plus any of ``train.jsonl``,
    ``valid.jsonl``, ``test.jsonl``. Single-file form: ``path`` is one split
    file (split name taken from the stem) and ``classes_path`` is required.
    """
    p = Path(path)
    if p.is_dir():
        cp = Path(classes_path) if classes_path is not None else p / "classes.json"
        classes = load_classes(cp)
        splits = {}
        for name in CANONICAL_SPLITS:
            sp = p / f"{name}.jsonl"
            if sp.exists():
                splits[name] = load_split(sp, classes)
        if not splits:
            raise ValueError(f"{p}: no split files found (expected train/valid/test .jsonl)")
        return Dataset(classes=classes, splits=splits)
    if classes_path is None:
        raise ValueError("classes_path is required when loading a single split file")
    classes = load_classes(classes_path)
    return Dataset(classes=classes, splits={p.stem: load_split(p, classes)})


def save_dataset(dataset: Dataset, dir_path: str | Path) -> None:
    d = Path(dir_path)
    d.mkdir(parents=True, exist_ok=True)
    save_classes(dataset.classes, d / "classes.json")
    for name, docs in dataset.splits.items():
        save_split(docs, dataset.classes, d / f"{name}.jsonl")


def class_balance(dataset: Dataset, split: str) -> list[float]:
    """Empirical class frequencies of a fully gold-labeled split."""
    golds = dataset.gold_labels(split)
    k = dataset.classes.k
    counts = [0] * k
    for g in golds:
        counts[g] += 1
    total = len(golds)
    return [c / total for c in counts]
