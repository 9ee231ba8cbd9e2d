"""Dataset ingestion, vocabularies, and the two derived triple indices.

A dataset directory holds three UTF-8 TSV files (train.txt, valid.txt,
test.txt), one ``head<TAB>relation<TAB>tail`` triple per line. Loading
assigns dense integer ids in first-occurrence order (train, then valid,
then test) and, by default, augments every relation r with an inverse
relation r~ (id r + n_relations) so that head prediction becomes tail
prediction over reversed triples. Valid/test splits keep their original
direction; evaluation adds the reverse queries itself.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError

log = logging.getLogger(__name__)

INVERSE_SUFFIX = "~inverse"


@dataclass(frozen=True)
class Vocab:
    """Bijective entity/relation id maps. Relation ids cover originals only;
    inverse relations occupy ids [n_relations, 2*n_relations)."""

    entity_to_id: dict[str, int]
    relation_to_id: dict[str, int]
    id_to_entity: list[str] = field(repr=False)
    id_to_relation: list[str] = field(repr=False)

    @property
    def n_entities(self) -> int:
        return len(self.id_to_entity)

    @property
    def n_relations(self) -> int:
        return len(self.id_to_relation)

    def inverse_relation_name(self, r: int) -> str:
        return self.id_to_relation[r] + INVERSE_SUFFIX

    @classmethod
    def from_maps(cls, entity_to_id: dict[str, int], relation_to_id: dict[str, int]) -> "Vocab":
        if not entity_to_id or not relation_to_id:
            raise ValueError("vocabulary needs at least one entity and one relation")
        ents = [None] * len(entity_to_id)
        rels = [None] * len(relation_to_id)
        for name, i in entity_to_id.items():
            ents[i] = name
        for name, i in relation_to_id.items():
            rels[i] = name
        if any(e is None for e in ents) or any(r is None for r in rels):
            raise ValueError("id maps are not dense bijections")
        return cls(entity_to_id, relation_to_id, ents, rels)

    @classmethod
    def synthetic(cls, n_entities: int, n_relations: int) -> "Vocab":
        """Placeholder names for programmatically built toy graphs."""
        return cls.from_maps(
            {f"e{i}": i for i in range(n_entities)},
            {f"r{i}": i for i in range(n_relations)},
        )


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.int64)
    if a.size == 0:
        a = a.reshape(0, 3)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Triple splits plus vocabulary. Split arrays hold the original
    (un-reversed) triples in file order; ``reciprocal`` marks whether the
    training view and indices include reversed triples."""

    vocab: Vocab
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    reciprocal: bool = True

    def __post_init__(self):
        for name in ("train", "valid", "test"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))
        n_e, n_r = self.vocab.n_entities, self.vocab.n_relations
        for name in ("train", "valid", "test"):
            t = getattr(self, name)
            if t.size and (
                t[:, 0].max() >= n_e or t[:, 2].max() >= n_e or t[:, 1].max() >= n_r or t.min() < 0
            ):
                raise ValueError(f"{name} split contains ids outside the vocabulary")

    @property
    def n_entities(self) -> int:
        return self.vocab.n_entities

    @property
    def n_relations(self) -> int:
        return self.vocab.n_relations

    @property
    def n_relations_total(self) -> int:
        """Relation rows the embedding matrices must cover (R' = 2R if reciprocal)."""
        return self.vocab.n_relations * 2 if self.reciprocal else self.vocab.n_relations

    def augmented(self, split: np.ndarray) -> np.ndarray:
        """Split plus reversed copies under inverse relation ids (no-op when
        the dataset is not reciprocal)."""
        if not self.reciprocal or split.shape[0] == 0:
            return split
        rev = np.empty_like(split)
        rev[:, 0] = split[:, 2]
        rev[:, 1] = split[:, 1] + self.n_relations
        rev[:, 2] = split[:, 0]
        return np.concatenate([split, rev], axis=0)

    def train_augmented(self) -> np.ndarray:
        return self.augmented(self.train)

    def all_augmented(self) -> np.ndarray:
        return np.concatenate(
            [self.augmented(self.train), self.augmented(self.valid), self.augmented(self.test)],
            axis=0,
        )


def _read_split(path: Path) -> list[tuple[str, str, str]]:
    if not path.is_file():
        raise FileNotFoundError(f"missing dataset file: {path}")
    triples: list[tuple[str, str, str]] = []
    seen: set[tuple[str, str, str]] = set()
    dupes = 0
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(path, line_no, f"expected 3 tab-separated fields, got {len(parts)}")
            if any(not p for p in parts):
                raise ParseError(path, line_no, "empty field")
            t = (parts[0], parts[1], parts[2])
            if t in seen:
                dupes += 1
                continue
            seen.add(t)
            triples.append(t)
    if dupes:
        log.warning("%s: dropped %d duplicate triple(s)", path, dupes)
    return triples


def load_dataset(dir_path: str | Path, reciprocal: bool = True) -> Dataset:
    """Load ``<dir>/{train,valid,test}.txt`` into a Dataset.

    Vocabulary ids follow first occurrence across train, then valid, then
    test; within a line the head is registered before the tail. Entities
    seen only in valid/test are admitted (they train only via init).
    """
    dir_path = Path(dir_path)
    splits = {name: _read_split(dir_path / f"{name}.txt") for name in ("train", "valid", "test")}

    entity_to_id: dict[str, int] = {}
    relation_to_id: dict[str, int] = {}
    for name in ("train", "valid", "test"):
        for h, r, t in splits[name]:
            if h not in entity_to_id:
                entity_to_id[h] = len(entity_to_id)
            if r not in relation_to_id:
                relation_to_id[r] = len(relation_to_id)
            if t not in entity_to_id:
                entity_to_id[t] = len(entity_to_id)
    vocab = Vocab.from_maps(entity_to_id, relation_to_id)

    def encode(rows: list[tuple[str, str, str]]) -> np.ndarray:
        out = np.empty((len(rows), 3), dtype=np.int64)
        for i, (h, r, t) in enumerate(rows):
            out[i, 0] = entity_to_id[h]
            out[i, 1] = relation_to_id[r]
            out[i, 2] = entity_to_id[t]
        return out

    arrays = {name: encode(rows) for name, rows in splits.items()}
    overlap = (
        set(map(tuple, arrays["train"])) & set(map(tuple, arrays["valid"]))
        | set(map(tuple, arrays["train"])) & set(map(tuple, arrays["test"]))
        | set(map(tuple, arrays["valid"])) & set(map(tuple, arrays["test"]))
    )
    if overlap:
        log.warning("%s: %d triple(s) shared between splits", dir_path, len(overlap))
    return Dataset(vocab, arrays["train"], arrays["valid"], arrays["test"], reciprocal=reciprocal)


def save_dataset(d: Dataset, dir_path: str | Path) -> None:
    """Write the original (un-augmented) splits back to TSV files."""
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    for name in ("train", "valid", "test"):
        with open(dir_path / f"{name}.txt", "w", encoding="utf-8") as f:
            for h, r, t in getattr(d, name):
                f.write(
                    f"{d.vocab.id_to_entity[h]}\t{d.vocab.id_to_relation[r]}\t{d.vocab.id_to_entity[t]}\n"
                )


def dump_vocab(d: Dataset, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(
            {"entities": d.vocab.entity_to_id, "relations": d.vocab.relation_to_id},
            f,
            ensure_ascii=False,
            sort_keys=True,
            indent=2,
        )
        f.write("\n")


def _index(triples: np.ndarray) -> dict[tuple[int, int], np.ndarray]:
    buckets: dict[tuple[int, int], set[int]] = {}
    for h, r, t in triples:
        buckets.setdefault((int(h), int(r)), set()).add(int(t))
    return {
        key: np.array(sorted(tails), dtype=np.int64) for key, tails in buckets.items()
    }


def build_kvsall(d: Dataset) -> dict[tuple[int, int], np.ndarray]:
    """Map each distinct training (head, relation) pair to its set of true
    tails (sorted id array). Covers reversed triples when reciprocal."""
    return _index(d.train_augmented())


def build_filter(d: Dataset) -> dict[tuple[int, int], np.ndarray]:
    """Same keying as build_kvsall but over train + valid + test; used to
    drop known true tails from rankings."""
    return _index(d.all_augmented())
