"""Multi-hop query generation and beam-search answering.

Eight query shapes over anchors e and existential variables: chains (2p,
3p), intersections (2i, 3i), mixed forms (ip, pi), and unions (2u, up).
Answering decomposes a query into atoms scored by a pretrained link
predictor: each atom logit is squashed to a probability, conjunctions
aggregate with a t-norm, disjunctions with the dual t-conorm, and
existential variables are grounded by beam search that keeps the top-k
entity substitutions per variable (the best aggregated score per entity,
maximized over parents). With beam width n_entities the procedure is
exhaustive search.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ContractError, GenerationError
from .evaluation import RankingReport, filtered_rank
from .kg import Dataset, build_filter

QUERY_TYPES = ("2p", "3p", "2i", "3i", "ip", "pi", "2u", "up")

# (n_anchors, n_relations) per query shape
ARITY = {
    "2p": (1, 2),
    "3p": (1, 3),
    "2i": (2, 2),
    "3i": (3, 3),
    "ip": (2, 3),
    "pi": (2, 3),
    "2u": (2, 2),
    "up": (2, 3),
}


@dataclass(frozen=True)
class Query:
    qtype: str
    anchors: tuple[int, ...]
    relations: tuple[int, ...]
    answers: frozenset[int]

    def __post_init__(self):
        if self.qtype not in ARITY:
            raise ContractError(f"unknown query type {self.qtype!r}")
        object.__setattr__(self, "anchors", tuple(int(a) for a in self.anchors))
        object.__setattr__(self, "relations", tuple(int(r) for r in self.relations))
        object.__setattr__(self, "answers", frozenset(int(a) for a in self.answers))
        n_a, n_r = ARITY[self.qtype]
        if len(self.anchors) != n_a or len(self.relations) != n_r:
            raise ContractError(
                f"{self.qtype} takes {n_a} anchor(s) and {n_r} relation(s), "
                f"got {len(self.anchors)} and {len(self.relations)}"
            )
        if not self.answers:
            raise ContractError("query has no gold answers")


def sigmoid(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


@dataclass
class BeamConfig:
    beam_width: int = 10
    tnorm: str = "product"  # "product" | "goedel"
    score_to_prob: Callable[[np.ndarray], np.ndarray] = sigmoid

    def __post_init__(self):
        if self.beam_width < 1:
            raise ContractError(f"beam width must be >= 1, got {self.beam_width}")
        if self.tnorm not in ("product", "goedel"):
            raise ContractError(f"unknown t-norm {self.tnorm!r}")


def tnorm(a, b, kind: str = "product"):
    """Fuzzy conjunction: product a*b or goedel min(a, b)."""
    if kind == "product":
        return np.multiply(a, b)
    if kind == "goedel":
        return np.minimum(a, b)
    raise ContractError(f"unknown t-norm {kind!r}")


def tconorm(a, b, kind: str = "product"):
    """Dual disjunction: probabilistic sum a+b-ab or max."""
    if kind == "product":
        return np.asarray(a) + np.asarray(b) - np.multiply(a, b)
    if kind == "goedel":
        return np.maximum(a, b)
    raise ContractError(f"unknown t-norm {kind!r}")


def _top_k(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k best scores, ties broken by smaller id."""
    order = np.lexsort((np.arange(scores.size), -scores))
    return order[: min(k, scores.size)]


class _Atoms:
    """Cached probability rows for one (scorer, config) pair."""

    def __init__(self, score_fn, cfg: BeamConfig):
        self.score_fn = score_fn
        self.squash = cfg.score_to_prob
        self.kind = cfg.tnorm

    def row(self, e: int, r: int) -> np.ndarray:
        return self.squash(np.asarray(self.score_fn([e], [r]), dtype=np.float64))[0]

    def rows(self, es: np.ndarray, r: int) -> np.ndarray:
        rs = np.full(len(es), r, dtype=np.int64)
        return self.squash(np.asarray(self.score_fn(es, rs), dtype=np.float64))

    def project(self, beam_ids: np.ndarray, beam_scores: np.ndarray, r: int) -> np.ndarray:
        """Best aggregated score per candidate tail, maximized over the beam."""
        mat = tnorm(beam_scores[:, None], self.rows(beam_ids, r), self.kind)
        return mat.max(axis=0)


def aggregate_scores(q: Query, score_fn, cfg: BeamConfig) -> np.ndarray:
    """Aggregated query score for every entity (length n_entities)."""
    atoms = _Atoms(score_fn, cfg)
    k = cfg.beam_width
    t = lambda a, b: tnorm(a, b, cfg.tnorm)
    s = lambda a, b: tconorm(a, b, cfg.tnorm)

    if q.qtype == "2p":
        e, (r1, r2) = q.anchors[0], q.relations
        frontier = atoms.row(e, r1)
        beam = _top_k(frontier, k)
        return atoms.project(beam, frontier[beam], r2)
    if q.qtype == "3p":
        e, (r1, r2, r3) = q.anchors[0], q.relations
        frontier = atoms.row(e, r1)
        beam = _top_k(frontier, k)
        frontier = atoms.project(beam, frontier[beam], r2)
        beam = _top_k(frontier, k)
        return atoms.project(beam, frontier[beam], r3)
    if q.qtype == "2i":
        (e1, e2), (r1, r2) = q.anchors, q.relations
        return t(atoms.row(e1, r1), atoms.row(e2, r2))
    if q.qtype == "3i":
        (e1, e2, e3), (r1, r2, r3) = q.anchors, q.relations
        return t(t(atoms.row(e1, r1), atoms.row(e2, r2)), atoms.row(e3, r3))
    if q.qtype == "ip":
        (e1, e2), (r1, r2, r3) = q.anchors, q.relations
        frontier = t(atoms.row(e1, r1), atoms.row(e2, r2))
        beam = _top_k(frontier, k)
        return atoms.project(beam, frontier[beam], r3)
    if q.qtype == "pi":
        (e1, e2), (r1, r2, r3) = q.anchors, q.relations
        frontier = atoms.row(e1, r1)
        beam = _top_k(frontier, k)
        path = atoms.project(beam, frontier[beam], r2)
        return t(path, atoms.row(e2, r3))
    if q.qtype == "2u":
        (e1, e2), (r1, r2) = q.anchors, q.relations
        return s(atoms.row(e1, r1), atoms.row(e2, r2))
    # up
    (e1, e2), (r1, r2, r3) = q.anchors, q.relations
    frontier = s(atoms.row(e1, r1), atoms.row(e2, r2))
    beam = _top_k(frontier, k)
    return atoms.project(beam, frontier[beam], r3)


def answer_query(q: Query, score_fn, cfg: BeamConfig | None = None) -> list[tuple[int, float]]:
    """All entities ranked by aggregated score, descending; ties by id."""
    cfg = cfg or BeamConfig()
    scores = aggregate_scores(q, score_fn, cfg)
    order = np.lexsort((np.arange(scores.size), -scores))
    return [(int(i), float(scores[i])) for i in order]


def evaluate_queries(
    queries, score_fn, cfg: BeamConfig | None = None
) -> dict[str, RankingReport]:
    """Per-type filtered MRR: each gold answer is ranked against the
    aggregated scores with the query's other golds removed."""
    cfg = cfg or BeamConfig()
    ranks_by_type: dict[str, list[int]] = {}
    for q in queries:
        scores = aggregate_scores(q, score_fn, cfg)
        golds = sorted(q.answers)
        for g in golds:
            others = [o for o in golds if o != g]
            rank = filtered_rank(scores, g, others)
            ranks_by_type.setdefault(q.qtype, []).append(rank)
    return {
        qtype: RankingReport.from_ranks(np.array(ranks, dtype=np.int64))
        for qtype, ranks in ranks_by_type.items()
    }


# ---------------------------------------------------------------------------
# generation


class _FullGraph:
    """Adjacency + (h, r) -> tails index over train+valid+test, closed
    under relation inversion when the dataset is reciprocal."""

    def __init__(self, d: Dataset):
        self.edges = d.all_augmented()
        self.index = build_filter(d)
        self.out: dict[int, list[tuple[int, int]]] = {}
        self.incoming: dict[int, list[tuple[int, int]]] = {}
        for h, r, t in self.edges:
            self.out.setdefault(int(h), []).append((int(r), int(t)))
            self.incoming.setdefault(int(t), []).append((int(h), int(r)))

    def tails(self, e: int, r: int) -> set[int]:
        arr = self.index.get((e, r))
        return set() if arr is None else set(int(x) for x in arr)


def _gold_answers(g: _FullGraph, qtype: str, anchors, relations) -> set[int]:
    """Exhaustive pattern matching over the full graph."""
    if qtype == "2p":
        (e,), (r1, r2) = anchors, relations
        mids = g.tails(e, r1)
        return set().union(*(g.tails(x, r2) for x in mids)) if mids else set()
    if qtype == "3p":
        (e,), (r1, r2, r3) = anchors, relations
        mids = g.tails(e, r1)
        mids2 = set().union(*(g.tails(x, r2) for x in mids)) if mids else set()
        return set().union(*(g.tails(x, r3) for x in mids2)) if mids2 else set()
    if qtype == "2i":
        (e1, e2), (r1, r2) = anchors, relations
        return g.tails(e1, r1) & g.tails(e2, r2)
    if qtype == "3i":
        (e1, e2, e3), (r1, r2, r3) = anchors, relations
        return g.tails(e1, r1) & g.tails(e2, r2) & g.tails(e3, r3)
    if qtype == "ip":
        (e1, e2), (r1, r2, r3) = anchors, relations
        mids = g.tails(e1, r1) & g.tails(e2, r2)
        return set().union(*(g.tails(x, r3) for x in mids)) if mids else set()
    if qtype == "pi":
        (e1, e2), (r1, r2, r3) = anchors, relations
        mids = g.tails(e1, r1)
        path = set().union(*(g.tails(x, r2) for x in mids)) if mids else set()
        return path & g.tails(e2, r3)
    if qtype == "2u":
        (e1, e2), (r1, r2) = anchors, relations
        return g.tails(e1, r1) | g.tails(e2, r2)
    # up
    (e1, e2), (r1, r2, r3) = anchors, relations
    mids = g.tails(e1, r1) | g.tails(e2, r2)
    return set().union(*(g.tails(x, r3) for x in mids)) if mids else set()


def _sample_pattern(g: _FullGraph, qtype: str, rng: np.random.Generator):
    """One anchor/relation instantiation drawn by walking the graph, or
    None when the draw is degenerate."""

    def edge():
        h, r, t = g.edges[rng.integers(g.edges.shape[0])]
        return int(h), int(r), int(t)

    def step(x):
        """Random outgoing (r, t) from x, or None if x has no out-edges."""
        adj = g.out.get(x)
        if not adj:
            return None
        return adj[rng.integers(len(adj))]

    def in_step(x):
        """Random incoming (e, r) atom r(e, x), or None."""
        adj = g.incoming.get(x)
        if not adj:
            return None
        return adj[rng.integers(len(adj))]

    if qtype == "2p":
        e, r1, x = edge()
        hop = step(x)
        if hop is None:
            return None
        return (e,), (r1, hop[0])
    if qtype == "3p":
        e, r1, x = edge()
        hop2 = step(x)
        if hop2 is None:
            return None
        r2, y = hop2
        hop3 = step(y)
        if hop3 is None:
            return None
        return (e,), (r1, r2, hop3[0])
    if qtype in ("2i", "3i"):
        n = 2 if qtype == "2i" else 3
        _, _, a = edge()
        pairs = []
        for _ in range(n):
            pair = in_step(a)
            if pair is None:
                return None
            pairs.append(pair)
        if len(set(pairs)) != n:
            return None
        anchors = tuple(e for e, _ in pairs)
        relations = tuple(r for _, r in pairs)
        return anchors, relations
    if qtype == "ip":
        _, _, x = edge()
        p1, p2, hop = in_step(x), in_step(x), step(x)
        if p1 is None or p2 is None or hop is None or p1 == p2:
            return None
        return (p1[0], p2[0]), (p1[1], p2[1], hop[0])
    if qtype == "pi":
        e1, r1, x = edge()
        hop = step(x)
        if hop is None:
            return None
        r2, a = hop
        direct = in_step(a)
        if direct is None:
            return None
        e2, r3 = direct
        return (e1, e2), (r1, r2, r3)
    if qtype == "2u":
        e1, r1, _ = edge()
        e2, r2, _ = edge()
        if (e1, r1) == (e2, r2):
            return None
        return (e1, e2), (r1, r2)
    if qtype == "up":
        e1, r1, x = edge()
        hop = step(x)
        if hop is None:
            return None
        e2, r2, _ = edge()
        if (e1, r1) == (e2, r2):
            return None
        return (e1, e2), (r1, r2, hop[0])
    raise ContractError(f"unknown query type {qtype!r}")


def generate_queries(
    d: Dataset, qtype: str, count: int, seed: int, max_attempts: int = 1000
) -> list[Query]:
    """Sample `count` distinct satisfiable queries of one type; gold answers
    come from exhaustive matching over the full graph."""
    if qtype not in ARITY:
        raise ContractError(f"unknown query type {qtype!r}")
    g = _FullGraph(d)
    rng = np.random.default_rng(seed)
    out: list[Query] = []
    seen: set[tuple] = set()
    for _ in range(count):
        for attempt in range(max_attempts):
            sampled = _sample_pattern(g, qtype, rng)
            if sampled is None:
                continue
            anchors, relations = sampled
            key = (qtype, anchors, relations)
            if key in seen:
                continue
            answers = _gold_answers(g, qtype, anchors, relations)
            if not answers:
                continue
            seen.add(key)
            out.append(Query(qtype, anchors, relations, frozenset(answers)))
            break
        else:
            raise GenerationError(
                f"could not instantiate a fresh {qtype} query after {max_attempts} attempts "
                f"({len(out)}/{count} generated)"
            )
    return out


def write_queries(queries, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for q in queries:
            f.write(
                json.dumps(
                    {
                        "type": q.qtype,
                        "anchors": list(q.anchors),
                        "relations": list(q.relations),
                        "answers": sorted(q.answers),
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def read_queries(path: str | Path) -> list[Query]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out.append(
                Query(obj["type"], tuple(obj["anchors"]), tuple(obj["relations"]), frozenset(obj["answers"]))
            )
    return out
