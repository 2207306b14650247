"""Mini-batch BPR training under a pluggable negative sampler.

Per epoch the train pairs are shuffled; per mini-batch the model is propagated
from its current tables, one negative is chosen per pair, and Adam takes one
step on the batch loss. Evaluation runs on schedule and the tables with the
best monitored Recall@K are kept while training continues, so late-epoch
degradation stays visible in the curve.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, TextIO

import numpy as np

from .errors import ConfigError
from .evaluation import EvalConfig, evaluate
from .losses import LossConfig, loss_gradient
from .models import AdamState, EmbeddingModel, adam_step
from .sampling import NegativeSampler, SamplerConfig
from .seeding import STREAM_SAMPLE, STREAM_SHUFFLE, stream

__all__ = ["EpochRecord", "TrainResult", "Trainer", "train", "write_curve", "read_curve"]


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_recall: float = math.nan
    val_ndcg: float = math.nan
    test_recall: float = math.nan
    test_ndcg: float = math.nan

    def monitored(self, split: str) -> float:
        return self.val_recall if split == "val" else self.test_recall


CURVE_FIELDS = [f.name for f in fields(EpochRecord)]


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else repr(float(x))


def write_curve(path: str | Path, curve: list[EpochRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CURVE_FIELDS)
        for rec in curve:
            writer.writerow([rec.epoch] + [_fmt(getattr(rec, k)) for k in CURVE_FIELDS[1:]])


def read_curve(path: str | Path) -> list[EpochRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [
        EpochRecord(int(r["epoch"]), *(float(r[k]) for k in CURVE_FIELDS[1:])) for r in rows
    ]


@dataclass
class TrainResult:
    curve: list[EpochRecord]
    best_model: EmbeddingModel
    best_epoch: int | None
    monitor: str
    batch_log: list[tuple[int, float, np.ndarray]] = field(default_factory=list, repr=False)

    @property
    def best_record(self) -> EpochRecord | None:
        for rec in self.curve:
            if rec.epoch == self.best_epoch:
                return rec
        return None


_STRATEGY_LOSS = {"PDNS_soft": "softBPR", "PDNS_mixing": "BPR"}


class Trainer:
    """Owns the model tables, optimizer state and sampler for one run."""

    def __init__(
        self,
        ds,
        model: EmbeddingModel,
        sampler_cfg: SamplerConfig,
        loss_cfg: LossConfig,
        lr: float = 0.001,
        seed: int = 0,
        eval_cfg: EvalConfig = EvalConfig(),
        warm_lr: float | None = None,
        lr_after_epoch: int = 0,
        trace: TextIO | None = None,
        record_batches: bool = False,
    ):
        need = _STRATEGY_LOSS.get(sampler_cfg.strategy)
        if need is not None and loss_cfg.kind != need:
            raise ConfigError(
                f"strategy {sampler_cfg.strategy} trains with {need}, got {loss_cfg.kind}", "loss"
            )
        if lr <= 0:
            raise ConfigError("learning rate must be > 0", "lr")
        self.ds = ds
        self.model = model
        self.sampler_cfg = sampler_cfg
        self.loss_cfg = loss_cfg
        self.lr = lr
        self.warm_lr = warm_lr
        self.lr_after_epoch = lr_after_epoch
        self.seed = seed
        self.eval_cfg = eval_cfg
        self.sampler = NegativeSampler(sampler_cfg, ds)
        self.adam = AdamState(lr=lr)
        self.alpha = sampler_cfg.alpha if sampler_cfg.strategy == "PDNS_mixing" else None
        self.monitor = "val" if ds.has_validation() else "test"
        self.trace = trace
        if trace is not None:
            trace.write("epoch,user,pos,neg,score\n")
        self.record_batches = record_batches
        self.batch_log: list[tuple[int, float, np.ndarray]] = []

    def run_epoch(self, epoch: int) -> float:
        """One pass over the shuffled train pairs; returns the mean loss."""
        use_warm = self.warm_lr is not None and epoch <= self.lr_after_epoch
        self.adam.lr = self.warm_lr if use_warm else self.lr
        train = self.ds.train
        n = len(train)
        if n == 0:
            raise ConfigError("no training pairs", "data")
        perm = stream(self.seed, STREAM_SHUFFLE, epoch).permutation(n)
        rng = stream(self.sampler_cfg.seed, STREAM_SAMPLE, epoch, 0)
        B = self.loss_cfg.batch_size
        total = 0.0
        for start in range(0, n, B):
            rows = perm[start:start + B]
            users = train[rows, 0]
            pos = train[rows, 1]
            final = self.model.propagate()
            sel = self.sampler.select(users, final, rng)
            grad = loss_gradient(
                self.model, users, pos, sel.negatives, self.loss_cfg, self.alpha, final
            )
            if self.trace is not None:
                self._write_trace(epoch, users, pos, sel.negatives, sel.negative_scores)
            if self.record_batches:
                self.batch_log.append((epoch, grad.loss, sel.negatives.copy()))
            adam_step(
                self.model.params,
                [grad.grad_user, grad.grad_item],
                self.adam,
                rows=[grad.touched_users, grad.touched_items],
            )
            total += grad.loss * len(rows)
        return total / n

    def _write_trace(self, epoch, users, pos, neg, scores):
        self.trace.writelines(
            f"{epoch},{u},{i},{j},{s!r}\n"
            for u, i, j, s in zip(users.tolist(), pos.tolist(), neg.tolist(), scores.tolist())
        )

    def evaluate(self, epoch: int, train_loss: float) -> EpochRecord:
        final = self.model.propagate()
        rec = EpochRecord(epoch, train_loss)
        if self.ds.has_validation():
            rec.val_recall, rec.val_ndcg = evaluate(self.model, self.ds, self.eval_cfg, "val", final)
        if any(len(t) for t in self.ds.test):
            rec.test_recall, rec.test_ndcg = evaluate(self.model, self.ds, self.eval_cfg, "test", final)
        return rec

    def fit(
        self,
        epochs: int,
        eval_every: int = 1,
        on_epoch_start: Callable[[int, "Trainer"], None] | None = None,
        on_epoch_end: Callable[[EpochRecord, "Trainer"], None] | None = None,
    ) -> TrainResult:
        if epochs < 0:
            raise ConfigError("epochs must be >= 0", "epochs")
        if eval_every < 1:
            raise ConfigError("eval_every must be >= 1", "eval_every")
        curve: list[EpochRecord] = []
        best_model = self.model.copy()
        best_epoch = None
        best_value = -math.inf
        for epoch in range(1, epochs + 1):
            if on_epoch_start is not None:
                on_epoch_start(epoch, self)
            loss = self.run_epoch(epoch)
            if epoch % eval_every == 0 or epoch == epochs:
                rec = self.evaluate(epoch, loss)
                value = rec.monitored(self.monitor)
                if not math.isnan(value) and value > best_value:
                    best_value = value
                    best_epoch = epoch
                    best_model = self.model.copy()
            else:
                rec = EpochRecord(epoch, loss)
            curve.append(rec)
            if on_epoch_end is not None:
                on_epoch_end(rec, self)
        return TrainResult(curve, best_model, best_epoch, self.monitor, self.batch_log)


def train(
    ds,
    model: EmbeddingModel,
    sampler_cfg: SamplerConfig,
    loss_cfg: LossConfig,
    epochs: int,
    eval_every: int = 1,
    seed: int = 0,
    lr: float = 0.001,
    eval_cfg: EvalConfig = EvalConfig(),
    **kwargs,
) -> TrainResult:
    trainer = Trainer(ds, model, sampler_cfg, loss_cfg, lr=lr, seed=seed, eval_cfg=eval_cfg, **kwargs)
    return trainer.fit(epochs, eval_every)
