"""Embedding containers, scoring functions, and the all-tails training step.

Three multiplicative scorers are supported. Embedding rows are packed into
flat float64 vectors of width d:

* distmult — plain trilinear product over d real coordinates.
* complex  — d/2 complex coordinates stored as [real halves | imag halves];
  score(h, r, t) = Re(<h, r, conj(t)>).
* qmult    — d/4 quaternion coordinates stored as four contiguous quarters
  (1, i, j, k); score(h, r, t) = (h ⊗ r) · t with ⊗ the Hamilton product.

The packing makes "zero the imaginary parts" a pure slicing operation, so
complex and qmult states with vanishing non-real components score exactly
like distmult on the surviving coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError

MODEL_KINDS = ("distmult", "complex", "qmult")

_DIVISOR = {"distmult": 1, "complex": 2, "qmult": 4}


def check_model_kind(model_kind: str, dim: int) -> None:
    if model_kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {model_kind!r}; choose from {MODEL_KINDS}")
    div = _DIVISOR[model_kind]
    if dim <= 0 or dim % div != 0:
        raise ConfigError(f"{model_kind} needs a positive dim divisible by {div}, got {dim}")


@dataclass
class EmbeddingState:
    """Dense entity / relation parameter matrices for one model."""

    model_kind: str
    entities: np.ndarray  # (n_entities, dim) float64
    relations: np.ndarray  # (n_relations_total, dim) float64

    def __post_init__(self):
        self.entities = np.ascontiguousarray(self.entities, dtype=np.float64)
        self.relations = np.ascontiguousarray(self.relations, dtype=np.float64)
        if self.entities.ndim != 2 or self.relations.ndim != 2:
            raise ConfigError("embedding matrices must be 2-D")
        if self.entities.shape[1] != self.relations.shape[1]:
            raise ConfigError("entity and relation matrices disagree on dim")
        check_model_kind(self.model_kind, self.entities.shape[1])

    @property
    def n_entities(self) -> int:
        return self.entities.shape[0]

    @property
    def n_relations(self) -> int:
        return self.relations.shape[0]

    @property
    def dim(self) -> int:
        return self.entities.shape[1]

    def copy(self) -> "EmbeddingState":
        return EmbeddingState(self.model_kind, self.entities.copy(), self.relations.copy())

    def allclose(self, other: "EmbeddingState", rtol: float = 0.0, atol: float = 0.0) -> bool:
        return (
            self.model_kind == other.model_kind
            and self.entities.shape == other.entities.shape
            and self.relations.shape == other.relations.shape
            and np.allclose(self.entities, other.entities, rtol=rtol, atol=atol)
            and np.allclose(self.relations, other.relations, rtol=rtol, atol=atol)
        )


def init_embeddings(
    n_entities: int, n_relations: int, dim: int, model_kind: str, seed: int
) -> EmbeddingState:
    """Seeded uniform init on [-sqrt(6/d), +sqrt(6/d)]; entities drawn before
    relations, so a given seed fixes the state bit-for-bit."""
    check_model_kind(model_kind, dim)
    if n_entities < 1 or n_relations < 1:
        raise ConfigError("need at least one entity and one relation")
    rng = np.random.default_rng(seed)
    bound = np.sqrt(6.0 / dim)
    ents = rng.uniform(-bound, bound, size=(n_entities, dim))
    rels = rng.uniform(-bound, bound, size=(n_relations, dim))
    return EmbeddingState(model_kind, ents, rels)


def _check_ids(state: EmbeddingState, hs: np.ndarray, rs: np.ndarray) -> None:
    if hs.size and (hs.min() < 0 or hs.max() >= state.n_entities):
        raise IndexError("entity id out of range")
    if rs.size and (rs.min() < 0 or rs.max() >= state.n_relations):
        raise IndexError("relation id out of range")


def score_triple(state: EmbeddingState, h: int, r: int, t: int) -> float:
    """Scalar logit for one (h, r, t); direct per-model formula."""
    if not (0 <= h < state.n_entities and 0 <= t < state.n_entities):
        raise IndexError("entity id out of range")
    if not 0 <= r < state.n_relations:
        raise IndexError("relation id out of range")
    eh = state.entities[h]
    wr = state.relations[r]
    et = state.entities[t]
    if state.model_kind == "distmult":
        return float(np.dot(eh * wr, et))
    if state.model_kind == "complex":
        k = state.dim // 2
        a, b = eh[:k], eh[k:]
        c, d = wr[:k], wr[k:]
        e, f = et[:k], et[k:]
        return float(np.dot(a * c - b * d, e) + np.dot(a * d + b * c, f))
    # qmult
    k = state.dim // 4
    a, b, c, d = eh[:k], eh[k : 2 * k], eh[2 * k : 3 * k], eh[3 * k :]
    p, q, u, v = wr[:k], wr[k : 2 * k], wr[2 * k : 3 * k], wr[3 * k :]
    w1 = a * p - b * q - c * u - d * v
    wi = a * q + b * p + c * v - d * u
    wj = a * u - b * v + c * p + d * q
    wk = a * v + b * u - c * q + d * p
    t1, ti, tj, tk = et[:k], et[k : 2 * k], et[2 * k : 3 * k], et[3 * k :]
    return float(np.dot(w1, t1) + np.dot(wi, ti) + np.dot(wj, tj) + np.dot(wk, tk))


def _combine(state: EmbeddingState, hs: np.ndarray, rs: np.ndarray) -> tuple[np.ndarray, ...]:
    """Per-row head*relation factors; logits follow by matmul with the
    matching entity-matrix blocks."""
    H = state.entities[hs]
    R = state.relations[rs]
    if state.model_kind == "distmult":
        return (H * R,)
    if state.model_kind == "complex":
        k = state.dim // 2
        a, b = H[:, :k], H[:, k:]
        c, d = R[:, :k], R[:, k:]
        return (a * c - b * d, a * d + b * c)
    k = state.dim // 4
    a, b, c, d = H[:, :k], H[:, k : 2 * k], H[:, 2 * k : 3 * k], H[:, 3 * k :]
    p, q, u, v = R[:, :k], R[:, k : 2 * k], R[:, 2 * k : 3 * k], R[:, 3 * k :]
    return (
        a * p - b * q - c * u - d * v,
        a * q + b * p + c * v - d * u,
        a * u - b * v + c * p + d * q,
        a * v + b * u - c * q + d * p,
    )


def _entity_blocks(state: EmbeddingState) -> tuple[np.ndarray, ...]:
    E = state.entities
    parts = _DIVISOR[state.model_kind]
    k = state.dim // parts
    return tuple(E[:, i * k : (i + 1) * k] for i in range(parts))


def score_tails_batch(state: EmbeddingState, hs, rs) -> np.ndarray:
    """(len(hs), n_entities) logits for φ(h_i, r_i, ·)."""
    hs = np.asarray(hs, dtype=np.int64)
    rs = np.asarray(rs, dtype=np.int64)
    _check_ids(state, hs, rs)
    combined = _combine(state, hs, rs)
    blocks = _entity_blocks(state)
    logits = combined[0] @ blocks[0].T
    for c, e in zip(combined[1:], blocks[1:]):
        logits += c @ e.T
    return logits


def score_all_tails(state: EmbeddingState, h: int, r: int) -> np.ndarray:
    """Length-n_entities logit row for a fixed (h, r)."""
    return score_tails_batch(state, [h], [r])[0]


def make_scorer(state: EmbeddingState):
    """Adapter with the (hs, rs) -> logits matrix signature the evaluators
    and query answering expect."""

    def scorer(hs, rs) -> np.ndarray:
        return score_tails_batch(state, hs, rs)

    return scorer


@dataclass
class GradientBatch:
    """Sparse row gradients for one mini-batch: ids index rows of the
    entity / relation matrices, grads align row-for-row with ids."""

    loss: float
    entity_ids: np.ndarray
    entity_grads: np.ndarray
    relation_ids: np.ndarray
    relation_grads: np.ndarray

    def entity_grad(self, i: int) -> np.ndarray:
        pos = np.nonzero(self.entity_ids == i)[0]
        if pos.size == 0:
            return np.zeros(self.entity_grads.shape[1])
        return self.entity_grads[pos[0]]

    def relation_grad(self, r: int) -> np.ndarray:
        pos = np.nonzero(self.relation_ids == r)[0]
        if pos.size == 0:
            return np.zeros(self.relation_grads.shape[1])
        return self.relation_grads[pos[0]]


def _label_matrix(
    keys: np.ndarray, labels: dict[tuple[int, int], np.ndarray], n_entities: int, smoothing: float
) -> np.ndarray:
    Y = np.zeros((keys.shape[0], n_entities))
    for i, (h, r) in enumerate(keys):
        try:
            tails = labels[(int(h), int(r))]
        except KeyError:
            raise ContractError(f"batch key ({h}, {r}) missing from the label index") from None
        Y[i, tails] = 1.0
    if smoothing:
        Y = Y * (1.0 - smoothing) + smoothing / n_entities
    return Y


def kvsall_loss_and_grad(
    state: EmbeddingState,
    keys,
    labels: dict[tuple[int, int], np.ndarray],
    smoothing: float = 0.0,
) -> GradientBatch:
    """Mean binary cross-entropy of sigmoid(logits) against multi-hot tail
    labels for a batch of (h, r) keys, with exact row gradients.

    Loss is averaged over batch * n_entities cells. Every entity row can
    receive tail-side gradient; head and relation rows additionally receive
    the chain-rule products of the multilinear form.
    """
    keys = np.asarray(keys, dtype=np.int64).reshape(-1, 2)
    if not 0.0 <= smoothing < 1.0:
        raise ConfigError(f"smoothing must lie in [0, 1), got {smoothing}")
    hs, rs = keys[:, 0], keys[:, 1]
    _check_ids(state, hs, rs)
    n_e = state.n_entities
    B = keys.shape[0]

    # overflow on diverged parameters surfaces as a non-finite loss that the
    # training loop turns into DivergenceError, so silence the warnings here
    with np.errstate(over="ignore", invalid="ignore"):
        Y = _label_matrix(keys, labels, n_e, smoothing)
        combined = _combine(state, hs, rs)
        blocks = _entity_blocks(state)
        logits = combined[0] @ blocks[0].T
        for c, e in zip(combined[1:], blocks[1:]):
            logits += c @ e.T

        # bce(x, y) = softplus(x) - x*y, stable for large |x|
        loss = float(np.mean(np.logaddexp(0.0, logits) - logits * Y))
        scale = 1.0 / (B * n_e)
        S = (1.0 / (1.0 + np.exp(-logits)) - Y) * scale  # d loss / d logits

        # tail side: every entity row; head contributions scattered on top
        d_ent = np.zeros_like(state.entities)
        parts = len(blocks)
        k = state.dim // parts
        for j, c in enumerate(combined):
            d_ent[:, j * k : (j + 1) * k] += S.T @ c

        # backprop into the combined factors: U_j = S @ E_block_j
        U = [S @ e for e in blocks]
        H = state.entities[hs]
        R = state.relations[rs]
        if state.model_kind == "distmult":
            dH = U[0] * R
            dR = U[0] * H
        elif state.model_kind == "complex":
            a, b = H[:, :k], H[:, k:]
            c_, d_ = R[:, :k], R[:, k:]
            dH = np.concatenate([U[0] * c_ + U[1] * d_, -U[0] * d_ + U[1] * c_], axis=1)
            dR = np.concatenate([U[0] * a + U[1] * b, -U[0] * b + U[1] * a], axis=1)
        else:
            a, b, c_, d_ = H[:, :k], H[:, k : 2 * k], H[:, 2 * k : 3 * k], H[:, 3 * k :]
            p, q, u, v = R[:, :k], R[:, k : 2 * k], R[:, 2 * k : 3 * k], R[:, 3 * k :]
            U1, Ui, Uj, Uk = U
            dH = np.concatenate(
                [
                    U1 * p + Ui * q + Uj * u + Uk * v,
                    -U1 * q + Ui * p - Uj * v + Uk * u,
                    -U1 * u + Ui * v + Uj * p - Uk * q,
                    -U1 * v - Ui * u + Uj * q + Uk * p,
                ],
                axis=1,
            )
            dR = np.concatenate(
                [
                    U1 * a + Ui * b + Uj * c_ + Uk * d_,
                    -U1 * b + Ui * a + Uj * d_ - Uk * c_,
                    -U1 * c_ - Ui * d_ + Uj * a + Uk * b,
                    -U1 * d_ + Ui * c_ - Uj * b + Uk * a,
                ],
                axis=1,
            )

        np.add.at(d_ent, hs, dH)
        rel_ids, rel_pos = np.unique(rs, return_inverse=True)
        d_rel = np.zeros((rel_ids.size, state.dim))
        np.add.at(d_rel, rel_pos, dR)

    return GradientBatch(
        loss=loss,
        entity_ids=np.arange(n_e, dtype=np.int64),
        entity_grads=d_ent,
        relation_ids=rel_ids,
        relation_grads=d_rel,
    )
