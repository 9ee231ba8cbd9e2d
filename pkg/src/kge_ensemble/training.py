"""End-to-end training runs: mini-batch all-tails training with one of four
ensemble strategies bolted on (none, swa, aswa, snape).

The ensemble bookkeeping is a passive observer of the running model: for a
fixed seed the running-model trajectory is identical across strategies
(snape differs only through its learning-rate schedule).
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import checkpoint as ckpt
from .config import TrainConfig
from .ensemble import (
    AswaState,
    SnapshotEnsemble,
    SwaState,
    aswa_epoch_step,
    make_snape_scorer,
    snape_capture,
    swa_absorb,
)
from .errors import ConfigError, DivergenceError
from .evaluation import SplitEvaluator
from .kg import Dataset, build_filter, build_kvsall, load_dataset
from .models import init_embeddings, kvsall_loss_and_grad, make_scorer
from .optim import AdamState, adam_step, cyclic_lr, sgd_step, snapshot_epochs

log = logging.getLogger(__name__)

METRICS_HEADER = ["epoch", "train_loss", "val_mrr_running", "val_mrr_ensemble", "action", "lr"]


@dataclass
class EpochRow:
    epoch: int
    train_loss: float
    val_mrr_running: Optional[float]
    val_mrr_ensemble: Optional[float]
    action: str
    lr: float


@dataclass
class RunManifest:
    """Everything a reported number can be traced back to."""

    config: dict
    seed: int
    rows: list[EpochRow]
    final: dict
    checkpoints: dict[str, str]
    timings: dict[str, float]

    def to_json(self) -> str:
        payload = {
            "config": self.config,
            "seed": self.seed,
            "rows": [asdict(r) for r in self.rows],
            "final": self.final,
            "checkpoints": self.checkpoints,
            "timings": self.timings,
        }
        return json.dumps(payload, sort_keys=True, indent=2)


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else repr(float(x))


def write_metrics_csv(rows: list[EpochRow], path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(METRICS_HEADER)
        for r in rows:
            w.writerow(
                [r.epoch, repr(r.train_loss), _fmt(r.val_mrr_running), _fmt(r.val_mrr_ensemble), r.action, repr(r.lr)]
            )


def write_aswa_log_csv(aswa: AswaState, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "val_running", "val_lookahead", "action", "val_aswa"])
        for e in aswa.epoch_log:
            w.writerow(
                [e.epoch, repr(e.val_running), _fmt(e.val_lookahead), e.action, repr(e.val_ensemble)]
            )


def _subsample(triples: np.ndarray, n: int, seed_key: list[int]) -> np.ndarray:
    if n <= 0 or n >= triples.shape[0]:
        return triples
    rng = np.random.default_rng(seed_key)
    pick = rng.choice(triples.shape[0], size=n, replace=False)
    return triples[np.sort(pick)]


def run_training(cfg: TrainConfig, dataset: Dataset | None = None) -> RunManifest:
    """Train per the config and write checkpoints, metrics CSV, figures, and
    manifest.json into cfg.out_dir. Returns the manifest."""
    cfg.validate()
    t_start = time.perf_counter()
    if dataset is None:
        dataset = load_dataset(cfg.dataset_dir)
    labels = build_kvsall(dataset)
    filter_index = build_filter(dataset)
    n_e = dataset.n_entities

    evaluator = None
    if dataset.valid.shape[0] > 0:
        val_triples = _subsample(dataset.valid, cfg.val_sample, [cfg.seed, 104729])
        evaluator = SplitEvaluator(
            val_triples,
            filter_index,
            n_e,
            inverse_offset=dataset.n_relations if dataset.reciprocal else None,
        )
    if cfg.strategy == "aswa" and evaluator is None:
        raise ConfigError("the adaptive strategy needs a non-empty validation split")

    state = init_embeddings(n_e, dataset.n_relations_total, cfg.dim, cfg.model, cfg.seed)
    adam = AdamState.init_like(state, cfg.lr) if cfg.optimizer == "adam" else None

    swa = SwaState.empty_like(state, start_epoch=cfg.swa_start) if cfg.strategy == "swa" else None
    aswa = AswaState.from_initial(state) if cfg.strategy == "aswa" else None
    snape = SnapshotEnsemble() if cfg.strategy == "snape" else None
    capture_at = (
        set(snapshot_epochs(cfg.epochs, cfg.snape_defer, cfg.snape_cycles))
        if cfg.strategy == "snape"
        else set()
    )

    keys = np.array(list(labels.keys()), dtype=np.int64)
    shuffle_rng = np.random.default_rng(cfg.seed)
    t_loaded = time.perf_counter()

    def val_mrr(params) -> float:
        return evaluator.evaluate(make_scorer(params)).mrr

    rows: list[EpochRow] = []
    for epoch in range(1, cfg.epochs + 1):
        lr = (
            cyclic_lr(epoch - 1, cfg.epochs, cfg.snape_defer, cfg.lr, cfg.snape_cycles)
            if cfg.strategy == "snape"
            else cfg.lr
        )
        if adam is not None:
            adam.lr = max(lr, 1e-300)  # AdamState requires lr > 0; cycle ends reach ~0

        perm = shuffle_rng.permutation(keys.shape[0])
        total = 0.0
        for lo in range(0, keys.shape[0], cfg.batch_size):
            batch = keys[perm[lo : lo + cfg.batch_size]]
            g = kvsall_loss_and_grad(state, batch, labels, cfg.smoothing)
            if not math.isfinite(g.loss):
                raise DivergenceError(epoch)
            if adam is not None:
                adam_step(state, adam, g)
            else:
                sgd_step(state, lr, g)
            total += g.loss * batch.shape[0]
        train_loss = total / keys.shape[0]

        do_val = evaluator is not None and epoch % cfg.val_every == 0
        val_running: Optional[float] = None
        val_ens: Optional[float] = None
        action = ""
        if cfg.strategy == "swa" and epoch >= swa.start_epoch:
            swa_absorb(swa, state)
            action = "absorb"
        if cfg.strategy == "aswa" and do_val:
            action = aswa_epoch_step(aswa, state, val_mrr, epoch=epoch)
            val_running = aswa.epoch_log[-1].val_running
            val_ens = aswa.val_score
        elif do_val:
            val_running = val_mrr(state)
            if cfg.strategy == "swa" and swa.n_models > 0:
                val_ens = val_mrr(swa.params)
            elif cfg.strategy == "snape" and len(snape) > 0:
                val_ens = evaluator.evaluate(make_snape_scorer(snape)).mrr
        if cfg.strategy == "snape" and (epoch - 1) in capture_at:
            snape_capture(snape, state, train_loss)
            action = "capture"
            if do_val:
                val_ens = evaluator.evaluate(make_snape_scorer(snape)).mrr

        rows.append(EpochRow(epoch, train_loss, val_running, val_ens, action, lr))
        log.info(
            "epoch %d/%d loss=%.6f val=%s ens=%s %s",
            epoch,
            cfg.epochs,
            train_loss,
            _fmt(val_running) or "-",
            _fmt(val_ens) or "-",
            action,
        )
    t_trained = time.perf_counter()

    out = Path(cfg.out_dir) if cfg.out_dir else Path("runs") / _default_run_name(cfg)
    out.mkdir(parents=True, exist_ok=True)
    checkpoints = {"model": str(out / "model.kgec")}
    ckpt.save_checkpoint(out / "model.kgec", state, adam=adam)
    if swa is not None:
        ckpt.save_checkpoint(out / "swa.kgec", swa.params, ensemble=swa)
        checkpoints["swa"] = str(out / "swa.kgec")
    if aswa is not None:
        ckpt.save_checkpoint(out / "aswa.kgec", aswa.params, ensemble=aswa)
        checkpoints["aswa"] = str(out / "aswa.kgec")
        write_aswa_log_csv(aswa, out / "aswa_log.csv")
    if snape is not None:
        ckpt.save_checkpoint(out / "snape.kgec", state, ensemble=snape)
        checkpoints["snape"] = str(out / "snape.kgec")
    write_metrics_csv(rows, out / "metrics.csv")

    final: dict = {"train_loss": rows[-1].train_loss}
    if evaluator is not None:
        final["val_running_report"] = evaluator.evaluate(make_scorer(state)).to_dict()
        ens_params = None
        if swa is not None and swa.n_models > 0:
            ens_params = swa.params
        elif aswa is not None:
            ens_params = aswa.params
        if ens_params is not None:
            final["val_ensemble_report"] = evaluator.evaluate(make_scorer(ens_params)).to_dict()
        elif snape is not None and len(snape) > 0:
            final["val_ensemble_report"] = evaluator.evaluate(make_snape_scorer(snape)).to_dict()

    if cfg.plots:
        from .plots import plot_training_curves

        plot_training_curves(rows, out / "metrics.png", title=_default_run_name(cfg))

    manifest = RunManifest(
        config=cfg.to_dict(),
        seed=cfg.seed,
        rows=rows,
        final=final,
        checkpoints=checkpoints,
        timings={
            "load_s": t_loaded - t_start,
            "train_s": t_trained - t_loaded,
            "total_s": time.perf_counter() - t_start,
        },
    )
    (out / "manifest.json").write_text(manifest.to_json() + "\n", encoding="utf-8")
    return manifest


def _default_run_name(cfg: TrainConfig) -> str:
    ds = Path(cfg.dataset_dir).name or "dataset"
    return f"{ds}_{cfg.model}_{cfg.strategy}_seed{cfg.seed}"
