"""Loss, Adam, gradient clipping, early stopping and evaluation."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import autograd as ag
from .autograd import Parameter, Tape, Tensor
from .data import Batch, DataError
from .model import Model, ModelConfig, ModelVariant

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    lambda_l2: float = 4e-6
    batch_size: int = 25
    max_epochs: int = 50
    patience: int = 10
    grad_clip_norm: float = 1.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("learning_rate, batch_size and max_epochs must be positive")
        if self.lambda_l2 < 0 or self.grad_clip_norm <= 0 or self.adam_eps <= 0:
            raise ValueError("lambda_l2 must be >= 0; grad_clip_norm and adam_eps > 0")
        if not 1 <= self.patience <= self.max_epochs:
            raise ValueError(f"patience must lie in [1, max_epochs], got {self.patience}")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Metrics:
    accuracy: float
    counts: dict[str, int]
    correct: dict[str, int]
    epoch: int = 0
    split: str = ""
    loss: float | None = None

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def record(self) -> dict:
        return {"epoch": self.epoch, "split": self.split,
                "accuracy": self.accuracy, "loss": self.loss}


# -- loss ----------------------------------------------------------------------

def l2_penalty(params: Iterable[Parameter]) -> Tensor:
    terms = [ag.sum(p * p) for p in params]
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total


def loss(probs: Tensor, labels, params: Sequence[Parameter] = (), lam: float = 0.0) -> Tensor:
    """Mean negative log-likelihood plus ``lam * sum ||p||^2``.

    ``probs`` is ``[B, K]``; a 1-D ``probs`` with a scalar label is treated
    as a batch of one.
    """
    if probs.data.ndim == 1:
        probs = ag.reshape(probs, (1, probs.shape[0]))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.intp))
    if labels.shape != (probs.shape[0],) or labels.max() >= probs.shape[1]:
        raise ag.DimensionError(f"labels {labels.shape} do not match probs {probs.shape}")
    nll = ag.mean(-ag.log(ag.pick(probs, labels), floor=1e-12))
    if lam > 0 and params:
        nll = nll + lam * l2_penalty(params)
    return nll


# -- optimisation --------------------------------------------------------------

def clip_gradients(params: Sequence[Parameter], max_norm: float) -> float:
    """Rescale all grads so their global L2 norm is at most ``max_norm``."""
    norm = float(np.sqrt(sum(float((p.grad * p.grad).sum()) for p in params)))
    if norm <= max_norm:
        return 1.0
    scale = max_norm / norm
    for p in params:
        p.grad *= scale
    return scale


class Adam:
    def __init__(self, params: Sequence[Parameter], config: TrainConfig):
        self.params = list(params)
        self.config = config
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self) -> None:
        adam_step(self.params, self, self.config)


def adam_step(params: Sequence[Parameter], state: Adam, config: TrainConfig) -> None:
    """One bias-corrected Adam update; grads are zeroed afterwards."""
    b1, b2 = config.adam_beta1, config.adam_beta2
    state.t += 1
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad
        if p.frozen_rows:
            g[list(p.frozen_rows)] = 0.0
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.adam_eps)
        p.zero_grad()


# -- evaluation ----------------------------------------------------------------

def _chunks(n: int, size: int) -> Iterable[np.ndarray]:
    for start in range(0, n, size):
        yield np.arange(start, min(n, start + size))


def predict_proba(model: Model, data: Batch, batch_size: int = 256) -> np.ndarray:
    return np.concatenate([model.predict(data.take(idx))[0]
                           for idx in _chunks(len(data), batch_size)])


def evaluate(model: Model, data: Batch, labels: Sequence[str] | None = None,
             split: str = "", epoch: int = 0) -> Metrics:
    """Argmax accuracy (ties go to the lowest class index)."""
    if len(data) == 0:
        raise DataError("cannot evaluate on an empty dataset")
    K = model.config.num_classes
    labels = list(labels) if labels is not None else [str(i) for i in range(K)]
    probs = predict_proba(model, data)
    pred = probs.argmax(axis=1)
    hit = pred == data.labels
    nll = -np.log(np.maximum(probs[np.arange(len(data)), data.labels], 1e-12)).mean()
    counts = {labels[c]: int((data.labels == c).sum()) for c in range(K)}
    correct = {labels[c]: int(hit[data.labels == c].sum()) for c in range(K)}
    return Metrics(float(hit.mean()), counts, correct, epoch, split, float(nll))


# -- training loop -------------------------------------------------------------

@dataclass
class TrainResult:
    model: Model
    history: list[Metrics] = field(default_factory=list)
    best_epoch: int = 0
    best_dev_accuracy: float = 0.0
    final_state: dict[str, np.ndarray] | None = None


def train(model: Model, train_set: Batch, dev_set: Batch, config: TrainConfig,
          labels: Sequence[str] | None = None) -> TrainResult:
    """Mini-batch Adam with per-epoch dev evaluation and early stopping.

    The model is left holding the best-dev weights; ``final_state`` keeps the
    weights from the last epoch that ran.
    """
    if len(train_set) == 0 or len(dev_set) == 0:
        raise DataError("train and dev splits must be non-empty")
    result = TrainResult(model)
    if model.config.variant is ModelVariant.MAJORITY:
        model.fit_majority(train_set.labels)
        m = evaluate(model, dev_set, labels, "dev", 1)
        result.history.append(m)
        result.best_epoch, result.best_dev_accuracy = 1, m.accuracy
        result.final_state = model.state()
        return result

    rng = np.random.default_rng(config.seed)
    params = model.trainable_parameters()
    opt = Adam(params, config)
    model.zero_grad()
    best_state, best_acc, stale = model.state(), -1.0, 0
    n = len(train_set)
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        total_loss, correct = 0.0, 0
        for start in range(0, n, config.batch_size):
            batch = train_set.take(order[start:start + config.batch_size])
            with Tape() as tape:
                probs, _ = model.forward(batch, train_mode=True, rng=rng)
                objective = loss(probs, batch.labels, params, config.lambda_l2)
            tape.backward(objective)
            clip_gradients(params, config.grad_clip_norm)
            opt.step()
            model.zero_grad()
            total_loss += objective.item() * len(batch)
            correct += int((probs.data.argmax(axis=1) == batch.labels).sum())
        result.history.append(Metrics(correct / n, {}, {}, epoch, "train", total_loss / n))
        dev = evaluate(model, dev_set, labels, "dev", epoch)
        result.history.append(dev)
        log.info("epoch %d train_loss %.4f dev_acc %.4f", epoch, total_loss / n, dev.accuracy)
        if dev.accuracy > best_acc:
            best_acc, best_state, stale = dev.accuracy, model.state(), 0
            result.best_epoch = epoch
        else:
            stale += 1
            if stale >= config.patience:
                break
    result.final_state = model.state()
    model.load_state(best_state)
    result.best_dev_accuracy = best_acc
    return result


def write_history(history: Sequence[Metrics], path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for m in history:
            fh.write(json.dumps(m.record()) + "\n")


def read_history(path) -> list[dict]:
    with Path(path).open(encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


# -- gradient verification -----------------------------------------------------

def check_model_gradients(config: ModelConfig, num_examples: int = 2, seed: int = 0,
                          eps: float = 1e-3, lam: float = 0.0, scale: float = 1.0,
                          order: int = 4) -> float:
    """Finite-difference check of a whole model on random data.

    Weights are redrawn uniformly in [-scale, scale] and the four-point
    central stencil is used: with a two-point stencil at eps=1e-6 the
    round-off floor (~1e-11 absolute) exceeds 1e-5 relative error on the
    smallest gradient entries of an LSTM stack.  Dropout is off.
    """
    rng = np.random.default_rng(seed)
    model = Model(config)
    for _, p in model.named_parameters():
        p.data[...] = rng.uniform(-scale, scale, size=p.shape)
        for row in p.frozen_rows:
            p.data[row] = 0.0
    L, v = config.max_len, config.vocab_size
    lengths = rng.integers(1, L + 1, size=num_examples)
    lengths[0] = L
    tokens = np.zeros((num_examples, L), dtype=np.intp)
    for i, n in enumerate(lengths):
        tokens[i, :n] = rng.integers(2, v, size=n)
    batch = Batch(tokens, tokens != 0, rng.integers(2, v, size=(num_examples, 1)),
                  rng.integers(0, config.num_classes, size=num_examples))
    if config.variant is ModelVariant.MAJORITY:
        model.fit_majority(batch.labels)
    params = model.trainable_parameters()

    def objective() -> Tensor:
        probs, _ = model.forward(batch)
        return loss(probs, batch.labels, params, lam)

    return ag.grad_check(objective, params, eps, order)
