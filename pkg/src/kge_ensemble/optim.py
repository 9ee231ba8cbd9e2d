"""Sparse (lazy) Adam and SGD steps plus the deferred cyclic LR schedule.

Updates touch only the rows named in a GradientBatch; moment estimates for
untouched rows do not decay, so rows absent from a batch are bit-identical
before and after a step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError
from .models import EmbeddingState, GradientBatch


@dataclass
class AdamState:
    """First/second moment matrices congruent to the parameters."""

    lr: float
    m_entities: np.ndarray
    v_entities: np.ndarray
    m_relations: np.ndarray
    v_relations: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if self.step < 0:
            raise ConfigError("step counter must be non-negative")

    @classmethod
    def init_like(cls, params: EmbeddingState, lr: float) -> "AdamState":
        return cls(
            lr=lr,
            m_entities=np.zeros_like(params.entities),
            v_entities=np.zeros_like(params.entities),
            m_relations=np.zeros_like(params.relations),
            v_relations=np.zeros_like(params.relations),
        )


def _check_congruent(params: EmbeddingState, g: GradientBatch) -> None:
    if g.entity_grads.shape[1:] != (params.dim,) or g.relation_grads.shape[1:] != (params.dim,):
        raise ContractError("gradient width does not match parameter dim")
    if g.entity_ids.shape[0] != g.entity_grads.shape[0]:
        raise ContractError("entity ids/grads length mismatch")
    if g.relation_ids.shape[0] != g.relation_grads.shape[0]:
        raise ContractError("relation ids/grads length mismatch")
    if g.entity_ids.size and g.entity_ids.max() >= params.n_entities:
        raise ContractError("entity gradient id out of range")
    if g.relation_ids.size and g.relation_ids.max() >= params.n_relations:
        raise ContractError("relation gradient id out of range")


def adam_step(params: EmbeddingState, opt: AdamState, g: GradientBatch) -> None:
    """One bias-corrected Adam update applied in place to the touched rows."""
    _check_congruent(params, g)
    if opt.m_entities.shape != params.entities.shape or opt.m_relations.shape != params.relations.shape:
        raise ContractError("optimizer moments do not match parameter shapes")
    opt.step += 1
    bc1 = 1.0 - opt.beta1**opt.step
    bc2 = 1.0 - opt.beta2**opt.step
    for ids, grads, m, v, theta in (
        (g.entity_ids, g.entity_grads, opt.m_entities, opt.v_entities, params.entities),
        (g.relation_ids, g.relation_grads, opt.m_relations, opt.v_relations, params.relations),
    ):
        if ids.size == 0:
            continue
        m[ids] = opt.beta1 * m[ids] + (1.0 - opt.beta1) * grads
        v[ids] = opt.beta2 * v[ids] + (1.0 - opt.beta2) * (grads * grads)
        m_hat = m[ids] / bc1
        v_hat = v[ids] / bc2
        theta[ids] -= opt.lr * m_hat / (np.sqrt(v_hat) + opt.eps)


def sgd_step(params: EmbeddingState, lr: float, g: GradientBatch) -> None:
    """Plain gradient descent on the touched rows."""
    _check_congruent(params, g)
    if g.entity_ids.size:
        params.entities[g.entity_ids] -= lr * g.entity_grads
    if g.relation_ids.size:
        params.relations[g.relation_ids] -= lr * g.relation_grads


def cyclic_lr(epoch: int, total: int, defer_fraction: float, base_lr: float, cycles: int) -> float:
    """Constant base_lr until defer_fraction of training, then cosine cycles
    that restart at base_lr and anneal to ~0 (the snapshot points).

    Epochs are 0-based.
    """
    if not 0 <= epoch < total:
        raise ConfigError(f"epoch {epoch} outside [0, {total})")
    if not 0.0 < defer_fraction < 1.0:
        raise ConfigError(f"defer_fraction must lie in (0, 1), got {defer_fraction}")
    if cycles < 1:
        raise ConfigError(f"cycles must be >= 1, got {cycles}")
    if epoch < defer_fraction * total:
        return base_lr
    start = math.ceil(defer_fraction * total)
    u = (epoch - start) / (total - start)
    pos = (u * cycles) % 1.0
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * pos))


def snapshot_epochs(total: int, defer_fraction: float, cycles: int) -> list[int]:
    """0-based epochs at the end of each cosine cycle (the capture points)."""
    if not 0.0 < defer_fraction < 1.0:
        raise ConfigError(f"defer_fraction must lie in (0, 1), got {defer_fraction}")
    if cycles < 1:
        raise ConfigError(f"cycles must be >= 1, got {cycles}")
    start = math.ceil(defer_fraction * total)
    span = total - start
    if span < cycles:
        raise ConfigError(f"deferred region of {span} epoch(s) cannot fit {cycles} cycle(s)")
    out = []
    for c in range(1, cycles + 1):
        # last epoch e with floor((e - start) * cycles / span) < c
        out.append(start + math.ceil(span * c / cycles) - 1)
    return out
