import os
from pathlib import Path

import numpy as np
import pytest

from kge_ensemble.kg import Dataset, Vocab, save_dataset


def toy_dataset(train, valid=(), test=(), n_entities=None, n_relations=None, reciprocal=False):
    """Dataset from integer triple lists; vocab sized to fit."""
    all_rows = list(train) + list(valid) + list(test)
    arr = np.array(all_rows, dtype=np.int64).reshape(-1, 3)
    n_e = n_entities or int(arr[:, [0, 2]].max()) + 1
    n_r = n_relations or int(arr[:, 1].max()) + 1
    return Dataset(
        Vocab.synthetic(n_e, n_r),
        np.array(list(train), dtype=np.int64).reshape(-1, 3),
        np.array(list(valid), dtype=np.int64).reshape(-1, 3),
        np.array(list(test), dtype=np.int64).reshape(-1, 3),
        reciprocal=reciprocal,
    )


def random_dataset(rng, n_entities=8, n_relations=3, n_train=20, n_valid=5, n_test=5, reciprocal=False):
    """Random toy dataset with disjoint splits; split sizes shrink to fit
    the (h, r, t) space when it is too small."""
    space = n_entities * n_relations * n_entities
    if n_train + n_valid + n_test > space:
        n_train = max(1, space - n_valid - n_test)
    if n_train + n_valid + n_test > space:
        raise ValueError("triple space too small for the requested splits")
    idx = rng.permutation(space)[: n_train + n_valid + n_test]
    rows = [
        (int(i // (n_relations * n_entities)), int((i // n_entities) % n_relations), int(i % n_entities))
        for i in idx
    ]
    return toy_dataset(
        rows[:n_train],
        rows[n_train : n_train + n_valid],
        rows[n_train + n_valid :],
        n_entities=n_entities,
        n_relations=n_relations,
        reciprocal=reciprocal,
    )


def clustered_kg(seed=0, n_clusters=6, cluster_size=5):
    """Structured, learnable KG: relation 0 links peers inside a cluster,
    relation 1 links members to the next cluster."""
    rng = np.random.default_rng(seed)
    triples = []
    for c in range(n_clusters):
        members = range(c * cluster_size, (c + 1) * cluster_size)
        nxt = range(((c + 1) % n_clusters) * cluster_size, (((c + 1) % n_clusters) + 1) * cluster_size)
        for a in members:
            for b in members:
                if a != b:
                    triples.append((a, 0, b))
            for b in nxt:
                triples.append((a, 1, b))
    triples = np.array(sorted(set(triples)), dtype=np.int64)
    perm = rng.permutation(len(triples))
    n = len(triples)
    cut1, cut2 = int(n * 0.8), int(n * 0.9)
    return Dataset(
        Vocab.synthetic(n_clusters * cluster_size, 2),
        triples[perm[:cut1]],
        triples[perm[cut1:cut2]],
        triples[perm[cut2:]],
        reciprocal=True,
    )


@pytest.fixture(scope="session")
def synth_kg_dir(tmp_path_factory):
    """The clustered KG written out as a dataset directory."""
    d = clustered_kg(seed=0)
    path = tmp_path_factory.mktemp("data") / "synth"
    save_dataset(d, path)
    return path


def data_root() -> Path:
    return Path(os.environ.get("KGE_DATA_ROOT", Path(__file__).resolve().parent.parent / "data"))


def benchmark_dir(name: str) -> Path:
    return data_root() / name


def require_benchmark(name: str) -> Path:
    """Path to a benchmark dataset directory; fails the test with a clear
    diagnosis when the files were not provided (they are not bundled)."""
    d = benchmark_dir(name)
    missing = [f for f in ("train.txt", "valid.txt", "test.txt") if not (d / f).is_file()]
    if missing:
        pytest.fail(
            f"benchmark dataset {name!r} not available: missing {missing} under {d}. "
            "Place the standard split files there (or set KGE_DATA_ROOT); see README, "
            "section 'Benchmark datasets'. This environment has no way to fetch them.",
            pytrace=False,
        )
    return d
