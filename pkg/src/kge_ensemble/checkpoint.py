"""Binary checkpoint envelope.

Base layout (bit-exact round trip):

    magic "KGEC" | version u32 | model_kind u32 | n_entities u64 |
    n_relations u64 | dim u64 | entity matrix | relation matrix

Matrices are row-major float64 little-endian. Optional tagged sections
follow (tag 4 bytes + payload length u64 + payload): "ADAM" for optimizer
moments and "ENSB" for ensemble bookkeeping (running-mean counters, the
adaptive ensemble's score, or snapshot stacks with their losses). Unknown
tags are skipped on read.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .ensemble import AswaState, SnapshotEnsemble, SwaState
from .errors import CompatError
from .models import MODEL_KINDS, EmbeddingState
from .optim import AdamState

MAGIC = b"KGEC"
VERSION = 1

_ENSB_KINDS = {"swa": 1, "aswa": 2, "snape": 3}
_ENSB_NAMES = {v: k for k, v in _ENSB_KINDS.items()}

EnsembleLike = Union[SwaState, AswaState, SnapshotEnsemble]


@dataclass
class Checkpoint:
    state: EmbeddingState
    adam: Optional[AdamState] = None
    ensemble: Optional[EnsembleLike] = None

    @property
    def ensemble_kind(self) -> Optional[str]:
        if isinstance(self.ensemble, SwaState):
            return "swa"
        if isinstance(self.ensemble, AswaState):
            return "aswa"
        if isinstance(self.ensemble, SnapshotEnsemble):
            return "snape"
        return None


def _matrix_bytes(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def _adam_payload(adam: AdamState) -> bytes:
    head = struct.pack("<ddddQ", adam.lr, adam.beta1, adam.beta2, adam.eps, adam.step)
    return head + b"".join(
        _matrix_bytes(m) for m in (adam.m_entities, adam.v_entities, adam.m_relations, adam.v_relations)
    )


def _ensemble_payload(ens: EnsembleLike) -> bytes:
    if isinstance(ens, SwaState):
        return struct.pack("<BQq", _ENSB_KINDS["swa"], ens.n_models, ens.start_epoch)
    if isinstance(ens, AswaState):
        return struct.pack("<BQd", _ENSB_KINDS["aswa"], ens.alpha_count, ens.val_score)
    if isinstance(ens, SnapshotEnsemble):
        parts = [struct.pack("<BQ", _ENSB_KINDS["snape"], len(ens))]
        parts.append(struct.pack(f"<{len(ens)}d", *ens.train_losses))
        for snap in ens.snapshots:
            parts.append(_matrix_bytes(snap.entities))
            parts.append(_matrix_bytes(snap.relations))
        return b"".join(parts)
    raise TypeError(f"unsupported ensemble object {type(ens).__name__}")


def save_checkpoint(
    path: str | Path,
    state: EmbeddingState,
    adam: Optional[AdamState] = None,
    ensemble: Optional[EnsembleLike] = None,
) -> None:
    """Write the parameter state plus optional optimizer/ensemble sections.

    For swa/aswa the base matrices are the ensemble parameters themselves;
    for snape they are the running model and the snapshots ride along in
    the section.
    """
    header = MAGIC + struct.pack(
        "<IIQQQ",
        VERSION,
        MODEL_KINDS.index(state.model_kind),
        state.n_entities,
        state.n_relations,
        state.dim,
    )
    blob = [header, _matrix_bytes(state.entities), _matrix_bytes(state.relations)]
    if adam is not None:
        payload = _adam_payload(adam)
        blob += [b"ADAM", struct.pack("<Q", len(payload)), payload]
    if ensemble is not None:
        payload = _ensemble_payload(ensemble)
        blob += [b"ENSB", struct.pack("<Q", len(payload)), payload]
    Path(path).write_bytes(b"".join(blob))


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.off = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise CompatError(f"{self.path}: truncated checkpoint")
        out = self.data[self.off : self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def matrix(self, rows: int, cols: int) -> np.ndarray:
        raw = self.take(rows * cols * 8)
        return np.frombuffer(raw, dtype="<f8").reshape(rows, cols).astype(np.float64)

    @property
    def remaining(self) -> int:
        return len(self.data) - self.off


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    r = _Reader(path.read_bytes(), path)
    if r.take(4) != MAGIC:
        raise CompatError(f"{path}: not a KGEC checkpoint")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CompatError(f"{path}: unsupported checkpoint version {version}")
    kind_tag, n_e, n_r, dim = r.unpack("<IQQQ")
    if kind_tag >= len(MODEL_KINDS):
        raise CompatError(f"{path}: unknown model kind tag {kind_tag}")
    model_kind = MODEL_KINDS[kind_tag]
    state = EmbeddingState(model_kind, r.matrix(n_e, dim), r.matrix(n_r, dim))

    adam = None
    ensemble: Optional[EnsembleLike] = None
    while r.remaining > 0:
        tag = r.take(4)
        (length,) = r.unpack("<Q")
        body = _Reader(r.take(length), path)
        if tag == b"ADAM":
            lr, beta1, beta2, eps, step = body.unpack("<ddddQ")
            adam = AdamState(
                lr=lr,
                m_entities=body.matrix(n_e, dim),
                v_entities=body.matrix(n_e, dim),
                m_relations=body.matrix(n_r, dim),
                v_relations=body.matrix(n_r, dim),
                step=step,
                beta1=beta1,
                beta2=beta2,
                eps=eps,
            )
        elif tag == b"ENSB":
            (ekind,) = body.unpack("<B")
            name = _ENSB_NAMES.get(ekind)
            if name == "swa":
                n_models, start_epoch = body.unpack("<Qq")
                ensemble = SwaState(params=state, n_models=n_models, start_epoch=start_epoch)
            elif name == "aswa":
                alpha_count, val_score = body.unpack("<Qd")
                ensemble = AswaState(params=state, alpha_count=alpha_count, val_score=val_score)
            elif name == "snape":
                (k,) = body.unpack("<Q")
                losses = list(body.unpack(f"<{k}d"))
                snaps = [
                    EmbeddingState(model_kind, body.matrix(n_e, dim), body.matrix(n_r, dim))
                    for _ in range(k)
                ]
                ensemble = SnapshotEnsemble(snapshots=snaps, train_losses=losses)
            else:
                raise CompatError(f"{path}: unknown ensemble kind {ekind}")
        # unknown section tags are skipped for forward compatibility
    return Checkpoint(state=state, adam=adam, ensemble=ensemble)


def load_model(path: str | Path) -> EmbeddingState:
    return load_checkpoint(path).state
