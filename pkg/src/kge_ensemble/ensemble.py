"""Parameter ensembles built during a single training run.

Three constructions:

* SwaState — incremental arithmetic mean of parameter snapshots:
  theta <- (theta * n + snapshot) / (n + 1).
* AswaState — the adaptive variant: each epoch the running model is scored
  on validation; it replaces the ensemble outright when it beats it (hard
  update), is averaged in when the blended look-ahead beats it (soft
  update), and is discarded otherwise (reject). The tracked validation
  score never decreases, and it never falls below the running model's.
* SnapshotEnsemble — full checkpoints captured at cyclic-LR minima whose
  prediction is a score average weighted by inverse training loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ContractError, EvalError
from .models import EmbeddingState, score_tails_batch


def _check_shapes(a: EmbeddingState, b: EmbeddingState) -> None:
    if (
        a.model_kind != b.model_kind
        or a.entities.shape != b.entities.shape
        or a.relations.shape != b.relations.shape
    ):
        raise ContractError("parameter states are not congruent")


@dataclass
class SwaState:
    """Running mean of absorbed snapshots; n_models counts them."""

    params: EmbeddingState
    n_models: int = 0
    start_epoch: int = 1

    @classmethod
    def empty_like(cls, params: EmbeddingState, start_epoch: int = 1) -> "SwaState":
        zero = EmbeddingState(
            params.model_kind, np.zeros_like(params.entities), np.zeros_like(params.relations)
        )
        return cls(params=zero, n_models=0, start_epoch=start_epoch)


def swa_absorb(s: SwaState, theta: EmbeddingState) -> None:
    """Fold one snapshot into the running mean (in place)."""
    _check_shapes(s.params, theta)
    n = s.n_models
    s.params.entities = (s.params.entities * n + theta.entities) / (n + 1)
    s.params.relations = (s.params.relations * n + theta.relations) / (n + 1)
    s.n_models = n + 1


@dataclass
class AswaLogEntry:
    epoch: int
    val_running: float
    val_lookahead: Optional[float]
    action: str  # "hard" | "soft" | "reject"
    val_ensemble: float


@dataclass
class AswaState:
    """Validation-gated parameter ensemble.

    alpha_count is the number of snapshots currently absorbed (a hard
    update adopts the running model as the sole member, so it resets the
    count to 1); val_score is the best validation score the ensemble has
    reached, -1 before the first epoch.
    """

    params: EmbeddingState
    alpha_count: int = 0
    val_score: float = -1.0
    epoch_log: list[AswaLogEntry] = field(default_factory=list)

    @classmethod
    def from_initial(cls, params: EmbeddingState) -> "AswaState":
        return cls(params=params.copy())


def aswa_epoch_step(
    a: AswaState,
    theta_next: EmbeddingState,
    evaluator: Callable[[EmbeddingState], float],
    epoch: int = 0,
) -> str:
    """One end-of-epoch ensemble decision; returns the action taken.

    evaluator must be deterministic for a fixed parameter state. The
    running model is evaluated first; only if it does not beat the
    ensemble is the blended look-ahead formed and evaluated.
    """
    _check_shapes(a.params, theta_next)
    val_running = float(evaluator(theta_next))
    if not math.isfinite(val_running):
        raise EvalError(f"evaluator returned non-finite score {val_running}")

    if val_running > a.val_score:
        a.params = theta_next.copy()
        a.alpha_count = 1
        a.val_score = val_running
        a.epoch_log.append(AswaLogEntry(epoch, val_running, None, "hard", a.val_score))
        return "hard"

    n = a.alpha_count
    lookahead = EmbeddingState(
        a.params.model_kind,
        (a.params.entities * n + theta_next.entities) / (n + 1),
        (a.params.relations * n + theta_next.relations) / (n + 1),
    )
    val_look = float(evaluator(lookahead))
    if not math.isfinite(val_look):
        raise EvalError(f"evaluator returned non-finite score {val_look}")

    if val_look > a.val_score:
        a.params = lookahead
        a.alpha_count = n + 1
        a.val_score = val_look
        a.epoch_log.append(AswaLogEntry(epoch, val_running, val_look, "soft", a.val_score))
        return "soft"

    a.epoch_log.append(AswaLogEntry(epoch, val_running, val_look, "reject", a.val_score))
    return "reject"


@dataclass
class SnapshotEnsemble:
    """Captured checkpoints with losses recorded at capture time."""

    snapshots: list[EmbeddingState] = field(default_factory=list)
    train_losses: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.snapshots)

    @property
    def weights(self) -> np.ndarray:
        """Inverse-loss weights, normalized to sum to 1."""
        inv = 1.0 / np.asarray(self.train_losses, dtype=np.float64)
        return inv / inv.sum()


def snape_capture(ens: SnapshotEnsemble, theta: EmbeddingState, train_loss: float) -> None:
    if not (train_loss > 0.0 and math.isfinite(train_loss)):
        raise ContractError(f"snapshot training loss must be positive and finite, got {train_loss}")
    if ens.snapshots:
        _check_shapes(ens.snapshots[0], theta)
    ens.snapshots.append(theta.copy())
    ens.train_losses.append(float(train_loss))


def snape_score_tails_batch(ens: SnapshotEnsemble, hs, rs) -> np.ndarray:
    """Weighted sum of the member models' all-tails logits."""
    if not ens.snapshots:
        raise ContractError("snapshot ensemble is empty")
    w = ens.weights
    out = w[0] * score_tails_batch(ens.snapshots[0], hs, rs)
    for wi, snap in zip(w[1:], ens.snapshots[1:]):
        out += wi * score_tails_batch(snap, hs, rs)
    return out


def snape_score_all_tails(ens: SnapshotEnsemble, h: int, r: int) -> np.ndarray:
    return snape_score_tails_batch(ens, [h], [r])[0]


def make_snape_scorer(ens: SnapshotEnsemble):
    def scorer(hs, rs) -> np.ndarray:
        return snape_score_tails_batch(ens, hs, rs)

    return scorer
