import math

import numpy as np
import pytest

from kge_ensemble.errors import ConfigError, ContractError
from kge_ensemble.models import (
    EmbeddingState,
    init_embeddings,
    kvsall_loss_and_grad,
    score_all_tails,
    score_triple,
)


def state_from_rows(kind, entities, relations):
    return EmbeddingState(kind, np.array(entities, dtype=float), np.array(relations, dtype=float))


class TestScoreTriple:
    def test_distmult_arithmetic(self):
        st = state_from_rows("distmult", [[1, 0], [1, 1]], [[2, 3]])
        assert score_triple(st, 0, 0, 1) == pytest.approx(2.0)

    def test_complex_imaginary_units(self):
        # one complex coordinate packed [re | im]: h = i, r = i, t = 1
        st = state_from_rows("complex", [[0, 1], [1, 0]], [[0, 1]])
        assert score_triple(st, 0, 0, 1) == pytest.approx(-1.0)

    def test_qmult_i_squared(self):
        # quarters (1, i, j, k): h = i, r = i, t = 1
        st = state_from_rows("qmult", [[0, 1, 0, 0], [1, 0, 0, 0]], [[0, 1, 0, 0]])
        assert score_triple(st, 0, 0, 1) == pytest.approx(-1.0)

    def test_id_out_of_range(self):
        st = state_from_rows("distmult", [[1.0]], [[1.0]])
        with pytest.raises(IndexError):
            score_triple(st, 0, 0, 5)
        with pytest.raises(IndexError):
            score_triple(st, 0, 3, 0)


class TestScoreAllTails:
    def test_matches_hand_set_rows(self):
        st = state_from_rows("distmult", [[1, 2], [0, 1], [3, 1]], [[1, 1]])
        row = score_all_tails(st, 0, 0)
        assert row.shape == (3,)
        for t in range(3):
            assert row[t] == pytest.approx(score_triple(st, 0, 0, t))

    def test_zero_entities_zero_row(self):
        st = state_from_rows("complex", np.zeros((4, 6)), np.ones((2, 6)))
        assert np.all(score_all_tails(st, 0, 0) == 0.0)

    @pytest.mark.parametrize("kind,dim", [("distmult", 8), ("complex", 8), ("qmult", 8)])
    def test_matches_per_triple_loop(self, kind, dim):
        st = init_embeddings(10, 4, dim, kind, seed=2)
        for h, r in [(0, 0), (3, 2), (9, 3)]:
            row = score_all_tails(st, h, r)
            loop = np.array([score_triple(st, h, r, t) for t in range(10)])
            assert np.allclose(row, loop, rtol=1e-9, atol=1e-12)


class TestReductions:
    def test_complex_with_zero_imaginary_is_distmult(self):
        rng = np.random.default_rng(7)
        k = 5
        ents = rng.normal(size=(6, 2 * k))
        rels = rng.normal(size=(3, 2 * k))
        ents[:, k:] = 0.0
        rels[:, k:] = 0.0
        cx = EmbeddingState("complex", ents, rels)
        dm = EmbeddingState("distmult", ents[:, :k], rels[:, :k])
        for h, r, t in [(0, 0, 1), (5, 2, 3), (2, 1, 2)]:
            assert score_triple(cx, h, r, t) == pytest.approx(score_triple(dm, h, r, t))

    def test_qmult_with_zero_ijk_is_distmult(self):
        rng = np.random.default_rng(8)
        k = 3
        ents = rng.normal(size=(5, 4 * k))
        rels = rng.normal(size=(2, 4 * k))
        ents[:, k:] = 0.0
        rels[:, k:] = 0.0
        qm = EmbeddingState("qmult", ents, rels)
        dm = EmbeddingState("distmult", ents[:, :k], rels[:, :k])
        for h, r, t in [(0, 0, 1), (4, 1, 0)]:
            assert score_triple(qm, h, r, t) == pytest.approx(score_triple(dm, h, r, t))


class TestInit:
    def test_seed_determinism(self):
        a = init_embeddings(5, 3, 8, "complex", seed=7)
        b = init_embeddings(5, 3, 8, "complex", seed=7)
        assert np.array_equal(a.entities, b.entities)
        assert np.array_equal(a.relations, b.relations)

    def test_divisibility_violation(self):
        with pytest.raises(ConfigError):
            init_embeddings(4, 2, 3, "complex", seed=0)
        with pytest.raises(ConfigError):
            init_embeddings(4, 2, 6, "qmult", seed=0)

    def test_shapes_at_benchmark_scale(self):
        st = init_embeddings(135, 92, 128, "complex", seed=0)
        assert st.entities.shape == (135, 128)
        assert st.relations.shape == (92, 128)

    def test_bound(self):
        st = init_embeddings(50, 10, 16, "distmult", seed=1)
        bound = math.sqrt(6.0 / 16)
        assert np.all(np.abs(st.entities) <= bound)
        assert np.all(np.abs(st.relations) <= bound)


class TestKvsAllLoss:
    def test_zero_logits_loss_is_ln2(self):
        st = state_from_rows("distmult", np.zeros((2, 2)), np.zeros((1, 2)))
        g = kvsall_loss_and_grad(st, [(0, 0)], {(0, 0): np.array([1])})
        assert g.loss == pytest.approx(math.log(2.0), abs=1e-12)

    def test_positive_tail_gradient_quarter(self):
        # d=1 distmult, h*r = 1: the tail-row gradient equals the logit
        # derivative (sigmoid(0) - 1) / (B * n_entities) = -0.25 exactly
        st = EmbeddingState("distmult", np.array([[1.0], [0.0]]), np.ones((1, 1)))
        g = kvsall_loss_and_grad(st, [(0, 0)], {(0, 0): np.array([1])})
        assert g.entity_grad(1)[0] == pytest.approx(-0.25)

    def test_missing_key_contract(self):
        st = state_from_rows("distmult", np.zeros((2, 2)), np.zeros((1, 2)))
        with pytest.raises(ContractError):
            kvsall_loss_and_grad(st, [(0, 0)], {(1, 0): np.array([0])})

    def test_smoothing_range(self):
        st = state_from_rows("distmult", np.zeros((2, 2)), np.zeros((1, 2)))
        with pytest.raises(ConfigError):
            kvsall_loss_and_grad(st, [(0, 0)], {(0, 0): np.array([1])}, smoothing=1.0)

    def test_loss_non_negative(self):
        rng = np.random.default_rng(0)
        for trial in range(25):
            st = init_embeddings(6, 3, 4, "distmult", seed=trial)
            labels = {(0, 0): np.sort(rng.choice(6, size=rng.integers(1, 5), replace=False))}
            g = kvsall_loss_and_grad(st, [(0, 0)], labels)
            assert g.loss >= 0.0


def finite_difference_check(kind, dim, seed, smoothing=0.0, eps=1e-5, tol=1e-4):
    rng = np.random.default_rng(seed)
    n_e, n_r = 6, 3
    st = init_embeddings(n_e, n_r, dim, kind, seed=seed)
    labels = {}
    keys = []
    for h in (0, 1):
        for r in (0, 1):
            labels[(h, r)] = np.sort(rng.choice(n_e, size=int(rng.integers(1, 4)), replace=False))
            keys.append((h, r))
    g = kvsall_loss_and_grad(st, keys, labels, smoothing=smoothing)

    def loss_at():
        return kvsall_loss_and_grad(st, keys, labels, smoothing=smoothing).loss

    def check(matrix, analytic_of):
        for i in range(matrix.shape[0]):
            analytic = analytic_of(i)
            for j in range(matrix.shape[1]):
                matrix[i, j] += eps
                lp = loss_at()
                matrix[i, j] -= 2 * eps
                lm = loss_at()
                matrix[i, j] += eps
                fd = (lp - lm) / (2 * eps)
                denom = max(abs(fd), abs(analytic[j]), 1e-8)
                assert abs(fd - analytic[j]) / denom <= tol, (kind, i, j, fd, analytic[j])

    check(st.entities, g.entity_grad)
    check(st.relations, g.relation_grad)


@pytest.mark.parametrize("kind,dim", [("distmult", 4), ("complex", 4), ("qmult", 4)])
def test_gradients_match_finite_differences(kind, dim):
    for seed in range(15):
        finite_difference_check(kind, dim, seed, smoothing=0.0 if seed % 2 else 0.1)
