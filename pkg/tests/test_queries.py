import numpy as np
import pytest

from kge_ensemble.errors import ContractError, GenerationError
from kge_ensemble.kg import build_filter
from kge_ensemble.queries import (
    ARITY,
    QUERY_TYPES,
    BeamConfig,
    Query,
    aggregate_scores,
    answer_query,
    evaluate_queries,
    generate_queries,
    read_queries,
    sigmoid,
    tconorm,
    tnorm,
    write_queries,
)

from conftest import random_dataset, toy_dataset


class TestTnorms:
    def test_product_conjunction(self):
        assert tnorm(0.8, 0.5, "product") == pytest.approx(0.4)

    def test_goedel_conjunction(self):
        assert tnorm(0.3, 0.7, "goedel") == pytest.approx(0.3)

    def test_max_disjunction(self):
        assert tconorm(0.3, 0.7, "goedel") == pytest.approx(0.7)

    def test_probabilistic_sum(self):
        assert tconorm(0.3, 0.7, "product") == pytest.approx(0.3 + 0.7 - 0.21)

    def test_bounds(self):
        rng = np.random.default_rng(0)
        a, b = rng.uniform(0, 1, 50), rng.uniform(0, 1, 50)
        for kind in ("product", "goedel"):
            assert np.all(tnorm(a, b, kind) <= np.minimum(a, b) + 1e-15)
            assert np.all(tconorm(a, b, kind) >= np.maximum(a, b) - 1e-15)


class TestQueryType:
    def test_arity_mismatch(self):
        with pytest.raises(ContractError):
            Query("2p", anchors=(0, 1), relations=(0, 1), answers=frozenset({2}))

    def test_unknown_type(self):
        with pytest.raises(ContractError):
            Query("9z", anchors=(0,), relations=(0,), answers=frozenset({1}))

    def test_empty_answers(self):
        with pytest.raises(ContractError):
            Query("2p", anchors=(0,), relations=(0, 1), answers=frozenset())

    def test_default_beam_width_is_ten(self):
        assert BeamConfig().beam_width == 10


def table_scorer(table):
    """Lookup scorer backed by a (n_entities, n_relations, n_entities) logit table."""

    def score(hs, rs):
        return np.array([table[int(h), int(r)] for h, r in zip(hs, rs)], dtype=float)

    return score


def oracle_table(dataset, true_logit=10.0, false_logit=-10.0):
    n_e, n_r = dataset.n_entities, dataset.n_relations_total
    table = np.full((n_e, n_r, n_e), false_logit)
    for h, r, t in dataset.all_augmented():
        table[h, r, t] = true_logit
    return table


def exhaustive_scores(q, score_fn, kind, n_entities):
    """Brute-force reference: enumerate every variable assignment."""
    cache = {}

    def prob(x, r):
        if (x, r) not in cache:
            cache[(x, r)] = sigmoid(np.asarray(score_fn([x], [r]), dtype=float)[0])
        return cache[(x, r)]

    def t(a, b):
        return a * b if kind == "product" else np.minimum(a, b)

    def s(a, b):
        return a + b - a * b if kind == "product" else np.maximum(a, b)

    best = np.zeros(n_entities)
    if q.qtype == "2p":
        (e,), (r1, r2) = q.anchors, q.relations
        row1 = prob(e, r1)
        for x in range(n_entities):
            best = np.maximum(best, t(row1[x], prob(x, r2)))
        return best
    if q.qtype == "3p":
        (e,), (r1, r2, r3) = q.anchors, q.relations
        row1 = prob(e, r1)
        for x1 in range(n_entities):
            row2 = prob(x1, r2)
            for x2 in range(n_entities):
                best = np.maximum(best, t(t(row1[x1], row2[x2]), prob(x2, r3)))
        return best
    if q.qtype == "2i":
        (e1, e2), (r1, r2) = q.anchors, q.relations
        return t(prob(e1, r1), prob(e2, r2))
    if q.qtype == "3i":
        (e1, e2, e3), (r1, r2, r3) = q.anchors, q.relations
        return t(t(prob(e1, r1), prob(e2, r2)), prob(e3, r3))
    if q.qtype == "ip":
        (e1, e2), (r1, r2, r3) = q.anchors, q.relations
        mid = t(prob(e1, r1), prob(e2, r2))
        for x in range(n_entities):
            best = np.maximum(best, t(mid[x], prob(x, r3)))
        return best
    if q.qtype == "pi":
        (e1, e2), (r1, r2, r3) = q.anchors, q.relations
        row1 = prob(e1, r1)
        for x in range(n_entities):
            best = np.maximum(best, t(row1[x], prob(x, r2)))
        return t(best, prob(e2, r3))
    if q.qtype == "2u":
        (e1, e2), (r1, r2) = q.anchors, q.relations
        return s(prob(e1, r1), prob(e2, r2))
    (e1, e2), (r1, r2, r3) = q.anchors, q.relations
    mid = s(prob(e1, r1), prob(e2, r2))
    for x in range(n_entities):
        best = np.maximum(best, t(mid[x], prob(x, r3)))
    return best


def sample_query_of_type(qtype, rng, n_entities, n_relations, answers=frozenset({0})):
    n_a, n_r = ARITY[qtype]
    return Query(
        qtype,
        tuple(int(rng.integers(n_entities)) for _ in range(n_a)),
        tuple(int(rng.integers(n_relations)) for _ in range(n_r)),
        answers,
    )


class TestBeamSearch:
    def test_chain_toy_top1(self):
        d = toy_dataset([(0, 0, 1), (1, 1, 2)], reciprocal=False, n_entities=4)
        q = Query("2p", (0,), (0, 1), frozenset({2}))
        ranked = answer_query(q, table_scorer(oracle_table(d)), BeamConfig(beam_width=10))
        assert ranked[0][0] == 2

    def test_chain_full_beam_matches_enumeration(self):
        d = toy_dataset([(0, 0, 1), (1, 1, 2)], reciprocal=False, n_entities=5)
        fn = table_scorer(oracle_table(d))
        q = Query("2p", (0,), (0, 1), frozenset({2}))
        cfg = BeamConfig(beam_width=5)
        got = aggregate_scores(q, fn, cfg)
        want = exhaustive_scores(q, fn, "product", 5)
        assert np.allclose(got, want, atol=1e-12)

    @pytest.mark.parametrize("qtype", QUERY_TYPES)
    @pytest.mark.parametrize("kind", ["product", "goedel"])
    def test_full_beam_equals_exhaustive(self, qtype, kind):
        rng = np.random.default_rng(hash((qtype, kind)) % 2**32)
        for trial in range(4):
            n_e, n_r = int(rng.integers(4, 13)), 3
            table = rng.normal(size=(n_e, n_r, n_e))
            fn = table_scorer(table)
            q = sample_query_of_type(qtype, rng, n_e, n_r)
            got = aggregate_scores(q, fn, BeamConfig(beam_width=n_e, tnorm=kind))
            want = exhaustive_scores(q, fn, kind, n_e)
            assert np.allclose(got, want, atol=1e-12), (qtype, kind, trial)

    @pytest.mark.parametrize("qtype", QUERY_TYPES)
    def test_monotone_beam(self, qtype):
        rng = np.random.default_rng(17)
        n_e, n_r = 9, 3
        table = rng.normal(size=(n_e, n_r, n_e))
        fn = table_scorer(table)
        q = sample_query_of_type(qtype, rng, n_e, n_r)
        prev = -1.0
        for k in range(1, n_e + 1):
            top = answer_query(q, fn, BeamConfig(beam_width=k))[0][1]
            assert top >= prev - 1e-15
            prev = top

    def test_deterministic_rankings(self):
        rng = np.random.default_rng(23)
        table = rng.normal(size=(6, 2, 6))
        q = Query("ip", (0, 1), (0, 1, 1), frozenset({2}))
        a = answer_query(q, table_scorer(table), BeamConfig(beam_width=3))
        b = answer_query(q, table_scorer(table), BeamConfig(beam_width=3))
        assert a == b

    def test_tie_break_by_entity_id(self):
        table = np.zeros((4, 1, 4))  # all scores equal
        q = Query("2i", (0, 1), (0, 0), frozenset({2}))
        ranked = answer_query(q, table_scorer(table), BeamConfig(beam_width=4))
        assert [e for e, _ in ranked] == [0, 1, 2, 3]


class TestGeneration:
    def test_chain_unique_instantiation(self):
        d = toy_dataset([(0, 0, 1), (1, 1, 2)], reciprocal=False)
        qs = generate_queries(d, "2p", 1, seed=0)
        assert qs[0].anchors == (0,)
        assert qs[0].relations == (0, 1)
        assert qs[0].answers == frozenset({2})

    def test_3i_gold_matches_set_oracle(self):
        d = toy_dataset(
            [(1, 0, 0), (2, 1, 0), (3, 2, 0), (1, 0, 4), (2, 1, 4), (3, 2, 5)],
            reciprocal=False,
        )
        fl = build_filter(d)
        qs = generate_queries(d, "3i", 3, seed=1)
        for q in qs:
            sets = []
            for e, r in zip(q.anchors, q.relations):
                arr = fl.get((e, r), np.empty(0, dtype=np.int64))
                sets.append(set(map(int, arr)))
            assert q.answers == sets[0] & sets[1] & sets[2]
            assert q.answers  # non-empty by construction

    @pytest.mark.parametrize("qtype", QUERY_TYPES)
    def test_all_types_generate_on_random_kg(self, qtype):
        d = random_dataset(np.random.default_rng(5), n_entities=10, n_relations=3, n_train=35, reciprocal=True)
        qs = generate_queries(d, qtype, 5, seed=2)
        assert len(qs) == 5
        for q in qs:
            assert q.qtype == qtype
            assert q.answers

    def test_deterministic_under_seed(self):
        d = random_dataset(np.random.default_rng(6), reciprocal=True)
        a = generate_queries(d, "pi", 4, seed=9)
        b = generate_queries(d, "pi", 4, seed=9)
        assert [(q.anchors, q.relations, q.answers) for q in a] == [
            (q.anchors, q.relations, q.answers) for q in b
        ]

    def test_unsatisfiable_raises(self):
        d = toy_dataset([(0, 0, 1)], reciprocal=False)  # tail 1 has no out-edges
        with pytest.raises(GenerationError):
            generate_queries(d, "2p", 1, seed=0, max_attempts=50)

    def test_exhausted_dedup_raises(self):
        d = toy_dataset([(0, 0, 1), (1, 1, 2)], reciprocal=False)
        with pytest.raises(GenerationError):
            generate_queries(d, "2p", 2, seed=0, max_attempts=50)


class TestEvaluateQueries:
    def test_single_gold_rank_one(self):
        d = toy_dataset([(0, 0, 1), (1, 1, 2)], reciprocal=False, n_entities=4)
        q = Query("2p", (0,), (0, 1), frozenset({2}))
        reports = evaluate_queries([q], table_scorer(oracle_table(d)))
        assert reports["2p"].mrr == 1.0

    def test_sibling_golds_filtered(self):
        # aggregated order: e0 > e2 > e1 > e3; golds {0, 1}
        table = np.zeros((4, 2, 4))
        table[0, 0] = [5.0, 1.0, 3.0, -5.0]
        table[1, 1] = [5.0, 1.0, 3.0, -5.0]
        q = Query("2i", (0, 1), (0, 1), frozenset({0, 1}))
        reports = evaluate_queries([q], table_scorer(table))
        assert reports["2i"].ranks.tolist() == [1, 2]
        assert reports["2i"].mrr == pytest.approx((1 + 0.5) / 2)

    def test_reports_keyed_by_type(self):
        d = toy_dataset([(0, 0, 1), (1, 1, 2), (2, 0, 0)], reciprocal=True)
        fn = table_scorer(oracle_table(d))
        qs = generate_queries(d, "2p", 2, seed=0) + generate_queries(d, "2i", 2, seed=1)
        reports = evaluate_queries(qs, fn)
        assert set(reports) == {"2p", "2i"}

    def test_mrr_within_simulation_band(self):
        # random scorers on a fixed toy KG: the per-run MRR of one more
        # random scorer must land inside the simulated 3-sigma band
        d = random_dataset(np.random.default_rng(7), n_entities=10, n_relations=3, n_train=30, reciprocal=True)
        queries = generate_queries(d, "2p", 40, seed=11)

        def run_mrr(seed):
            table = np.random.default_rng(seed).normal(size=(10, 6, 10))
            return evaluate_queries(queries, table_scorer(table))["2p"].mrr

        sims = np.array([run_mrr(s) for s in range(20)])
        band = max(3.0 * sims.std(), 0.02)
        assert abs(run_mrr(999) - sims.mean()) <= band


def test_jsonl_roundtrip(tmp_path):
    d = random_dataset(np.random.default_rng(8), reciprocal=True)
    qs = generate_queries(d, "up", 3, seed=4) + generate_queries(d, "3i", 2, seed=5)
    path = tmp_path / "queries.jsonl"
    write_queries(qs, path)
    back = read_queries(path)
    assert [(q.qtype, q.anchors, q.relations, q.answers) for q in back] == [
        (q.qtype, q.anchors, q.relations, q.answers) for q in qs
    ]
