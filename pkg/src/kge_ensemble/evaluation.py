"""Filtered link-prediction ranking over all entities.

Every valid/test triple yields two tail-side queries: (h, r, ?) for the
tail and (t, r~, ?) for the head via the inverse relation. Known true
tails other than the query's own gold are removed before ranking; ties
are resolved mid-rank (average, floored).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError

HITS_KS = (1, 3, 10)


@dataclass
class RankingReport:
    """Aggregated filtered ranks; ranks keeps one entry per directed query."""

    mrr: float
    hits: dict[int, float]
    ranks: np.ndarray

    @property
    def n(self) -> int:
        return int(self.ranks.size)

    @classmethod
    def from_ranks(cls, ranks: np.ndarray) -> "RankingReport":
        ranks = np.asarray(ranks, dtype=np.int64)
        if ranks.size == 0:
            raise ContractError("cannot aggregate an empty rank list")
        if ranks.min() < 1:
            raise ContractError("ranks must be positive")
        mrr = float(np.mean(1.0 / ranks))
        hits = {k: float(np.mean(ranks <= k)) for k in HITS_KS}
        return cls(mrr=mrr, hits=hits, ranks=ranks)

    def to_dict(self) -> dict:
        return {
            "mrr": self.mrr,
            "h1": self.hits[1],
            "h3": self.hits[3],
            "h10": self.hits[10],
            "n": self.n,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def filtered_rank(scores: np.ndarray, gold: int, filter_out) -> int:
    """Mid-rank position of the gold among the non-filtered candidates.

    filter_out must not contain the gold itself (re-admit it first).
    rank = 1 + #strictly_higher + floor(#ties / 2).
    """
    scores = np.asarray(scores, dtype=np.float64)
    if not 0 <= gold < scores.size:
        raise IndexError(f"gold id {gold} out of range for {scores.size} candidates")
    filter_out = np.asarray(sorted(filter_out), dtype=np.int64)
    if filter_out.size and (filter_out.min() < 0 or filter_out.max() >= scores.size):
        raise IndexError("filtered id out of range")
    if np.any(filter_out == gold):
        raise ContractError("filter_out must exclude the gold entity")
    s_gold = scores[gold]
    masked = scores.copy()
    masked[filter_out] = -np.inf
    higher = int(np.sum(masked > s_gold))
    ties = int(np.sum(masked == s_gold)) - 1  # gold ties with itself
    return 1 + higher + ties // 2


class SplitEvaluator:
    """Precomputed query/filter structure for repeated evaluation of one
    split (the per-epoch validation callback reuses it across epochs).

    inverse_offset, when given, is the id distance from a relation to its
    inverse (i.e. n_relations of the vocabulary); each triple then also
    contributes the reversed query. When None only tail queries are ranked.
    """

    def __init__(
        self,
        triples: np.ndarray,
        filter_index: dict[tuple[int, int], np.ndarray],
        n_entities: int,
        inverse_offset: int | None = None,
        chunk_size: int = 1024,
    ):
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        if triples.shape[0] == 0:
            raise ContractError("cannot evaluate an empty split")
        self.n_entities = int(n_entities)
        self.chunk_size = int(chunk_size)
        h, r, t = triples[:, 0], triples[:, 1], triples[:, 2]
        if inverse_offset is None:
            self.q_h, self.q_r, self.q_gold = h, r, t
        else:
            self.q_h = np.concatenate([h, t])
            self.q_r = np.concatenate([r, r + inverse_offset])
            self.q_gold = np.concatenate([t, h])
        self.n_triples = triples.shape[0]
        empty = np.empty(0, dtype=np.int64)
        self._excl = []
        for qh, qr, gold in zip(self.q_h, self.q_r, self.q_gold):
            known = filter_index.get((int(qh), int(qr)), empty)
            self._excl.append(known[known != gold])

    def evaluate(self, score_fn) -> RankingReport:
        """Rank every query with score_fn(hs, rs) -> (m, n_entities) logits."""
        n_q = self.q_h.size
        ranks = np.empty(n_q, dtype=np.int64)
        for lo in range(0, n_q, self.chunk_size):
            hi = min(lo + self.chunk_size, n_q)
            scores = np.array(score_fn(self.q_h[lo:hi], self.q_r[lo:hi]), dtype=np.float64)
            if scores.shape != (hi - lo, self.n_entities):
                raise ContractError(
                    f"scorer returned shape {scores.shape}, expected {(hi - lo, self.n_entities)}"
                )
            golds = self.q_gold[lo:hi]
            s_gold = scores[np.arange(hi - lo), golds]
            for i in range(hi - lo):
                scores[i, self._excl[lo + i]] = -np.inf
            higher = np.sum(scores > s_gold[:, None], axis=1)
            ties = np.sum(scores == s_gold[:, None], axis=1) - 1
            ranks[lo:hi] = 1 + higher + ties // 2
        return RankingReport.from_ranks(ranks)

    def write_ranks_csv(self, report: RankingReport, path: str | Path) -> None:
        """Per-query CSV: h,r,t,direction,rank (h/r/t in original direction)."""
        both = report.ranks.size == 2 * self.n_triples
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["h", "r", "t", "direction", "rank"])
            for i in range(self.n_triples):
                w.writerow(
                    [self.q_h[i], self.q_r[i], self.q_gold[i], "tail", report.ranks[i]]
                )
                if both:
                    j = self.n_triples + i
                    w.writerow(
                        [self.q_gold[i], self.q_r[i], self.q_h[i], "head", report.ranks[j]]
                    )


def evaluate_split(
    score_fn,
    triples: np.ndarray,
    filter_index: dict[tuple[int, int], np.ndarray],
    n_entities: int,
    inverse_offset: int | None = None,
) -> RankingReport:
    """One-shot wrapper around SplitEvaluator."""
    ev = SplitEvaluator(triples, filter_index, n_entities, inverse_offset)
    return ev.evaluate(score_fn)
