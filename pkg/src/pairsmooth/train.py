"""Training loop with strategy-dispatched targets.

For the PLS family, optimizer steps alternate between an original mini-batch
(even steps) and its midpoint batch (odd steps) unless ``alternate_originals``
is turned off. The learned smoothing distribution is always computed from
the same forward pass as the predictions.
"""

import csv
import io
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import nn
from .data import ConfigError, batches, substream
from .smoothing import TargetStrategy, midpoint, mixup, ud_smoothing, uls_target


@dataclass
class TrainConfig:
    strategy: TargetStrategy = field(default_factory=TargetStrategy)
    epochs: int = 40
    batch_size: int = 128
    learning_rate: float = 0.05
    momentum: float = 0.9
    seed: int = 0
    alternate_originals: Optional[bool] = None  # None: on for PLS kinds only
    eval_every: int = 1
    lr_milestones: Sequence[float] = (0.6, 0.8)
    lr_gamma: float = 0.1
    hidden: Sequence[int] = (128,)
    embed_dim: int = 128

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.eval_every < 1:
            raise ConfigError("epochs must be >= 0, batch_size and eval_every >= 1")
        if self.strategy.pairs and self.batch_size < 2:
            raise ConfigError("pairing strategies need batch_size >= 2")
        if self.learning_rate <= 0 or not 0 <= self.momentum < 1:
            raise ConfigError("learning_rate must be positive and momentum in [0, 1)")

    @property
    def alternates(self):
        if self.alternate_originals is None:
            return self.strategy.is_pls
        return self.alternate_originals

    def lr_at(self, epoch):
        drops = sum(epoch >= int(m * self.epochs) for m in self.lr_milestones)
        return self.learning_rate * self.lr_gamma ** drops


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_error: Optional[float]
    timestamp: float


@dataclass
class RunLog:
    records: List[EpochRecord] = field(default_factory=list)
    step_losses: List[float] = field(default_factory=list)
    checkpoint: Optional[str] = None

    def to_csv(self, provenance=None):
        buf = io.StringIO()
        if provenance:
            buf.write("# " + " ".join(f"{k}={v}" for k, v in provenance.items()) + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_error"])
        for r in self.records:
            writer.writerow([r.epoch, repr(r.train_loss),
                             "" if r.val_error is None else repr(r.val_error)])
        return buf.getvalue()


def build_step_targets(strategy, labels):
    """First cross-entropy argument and u'-mixing weight for one step.

    ``labels`` are the step's label rows: one-hot on original steps, mixed
    rows on pairing steps. Only PLS and PLS_Coeff hand a non-zero weight to
    the loss; every other strategy folds its smoothing into the rows.
    """
    kind = strategy.kind
    if kind in ("uls", "mixup_uls"):
        return uls_target(labels, strategy.alpha), 0.0
    if kind == "pls_ud":
        return ud_smoothing(labels, strategy.alpha), 0.0
    if strategy.learned:
        return labels, strategy.w
    return labels, 0.0


def step_batch(strategy, batch, step, alternate, pair_rng, mix_rng):
    """Inputs and label rows for optimizer step ``step``."""
    if not strategy.pairs or (alternate and step % 2 == 0):
        return batch.inputs, batch.onehot
    perm = pair_rng.permutation(batch.inputs.shape[0])
    if strategy.is_mixup:
        lam = strategy.lam if strategy.lam is not None else float(mix_rng.uniform())
        paired = mixup(batch, perm, lam)
    else:
        paired = midpoint(batch, perm)
    return paired.inputs, paired.targets


def predict(model, inputs, chunk=4096):
    return np.concatenate([
        nn.forward(model, inputs[i:i + chunk]).logits
        for i in range(0, len(inputs), chunk)
    ])


def _error(model, dataset):
    return float((predict(model, dataset.inputs).argmax(axis=1) != dataset.labels).mean())


def new_model(config, dataset):
    return nn.init_model(dataset.dim, list(config.hidden), config.embed_dim,
                         dataset.num_classes, substream(config.seed, "init"),
                         coefficient_head=config.strategy.coefficient_head)


def train(config, dataset, val=None, num_classes=None, model=None, log_steps=False):
    """Train a fresh (or given) model on ``dataset``; returns ``(model, RunLog)``."""
    if num_classes is not None and num_classes != dataset.num_classes:
        raise ConfigError(
            f"config declares {num_classes} classes, dataset {dataset.name!r} has "
            f"{dataset.num_classes}"
        )
    if model is None:
        model = new_model(config, dataset)
    elif model.coefficient_head != config.strategy.coefficient_head:
        raise ConfigError("smoothing head shape does not match the strategy")
    strategy = config.strategy
    state = nn.OptimizerState(config.learning_rate, config.momentum)
    pair_rng = substream(config.seed, "pair")
    mix_rng = substream(config.seed, "mix")
    shuffle_seed = int(substream(config.seed, "shuffle").integers(2**31))

    log = RunLog()
    step = 0
    for epoch in range(config.epochs):
        state.learning_rate = config.lr_at(epoch)
        losses = []
        for batch in batches(dataset, config.batch_size, shuffle_seed, epoch):
            inputs, labels = step_batch(strategy, batch, step, config.alternates,
                                        pair_rng, mix_rng)
            q, w = build_step_targets(strategy, labels)
            trace = nn.forward(model, inputs)
            loss, grads = nn.loss_and_backward(model, trace, q, w)
            nn.sgd_step(model, grads, state)
            losses.append(loss)
            step += 1
        if log_steps:
            log.step_losses.extend(losses)
        val_error = None
        if val is not None and ((epoch + 1) % config.eval_every == 0 or epoch + 1 == config.epochs):
            val_error = _error(model, val)
        log.records.append(EpochRecord(epoch + 1, float(np.mean(losses)), val_error, time.time()))
    return model, log
