"""Adam with global-norm clipping and the KL training loop."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..formula import DnfFormula
from .model import (
    ModelConfig,
    batch_graphs,
    encode_graph,
    forward_batch,
    init_params,
    kl_loss,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-5
    clip: float = 0.5
    epochs: int = 4
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    max_steps: int | None = None

    def __post_init__(self):
        if not (self.lr > 0 and self.clip > 0 and self.batch_size >= 1 and self.epochs >= 0):
            raise ValueError("lr, clip and batch_size must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainingRecord:
    formula: DnfFormula
    probs: np.ndarray
    label_mean: float
    label_sigma: float
    id: str = ""


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


class NonFiniteLoss(FloatingPointError):
    pass


def global_norm(grads: dict) -> float:
    return math.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))


def clip_by_global_norm(grads: dict, clip: float) -> tuple[dict, float]:
    norm = global_norm(grads)
    if norm > clip:
        scale = clip / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


def adam_step(params: dict, grads: dict, state: AdamState, cfg: TrainConfig) -> tuple[dict, AdamState]:
    """Clip gradients to ``cfg.clip`` global norm, then apply one bias-corrected Adam update.

    ``params`` maps names to arrays (or tensors, whose ``data`` is updated);
    updates happen in place and the same objects are returned.
    """
    grads, _ = clip_by_global_norm(grads, cfg.clip)
    state.step += 1
    t = state.step
    c1 = 1.0 - cfg.beta1**t
    c2 = 1.0 - cfg.beta2**t
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        m, v = state.m[name], state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        target = params[name]
        data = target.data if hasattr(target, "data") and not isinstance(target, np.ndarray) else target
        data -= cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)
    return params, state


def batch_loss(params, model_cfg: ModelConfig, records: Sequence[TrainingRecord], graphs=None):
    graphs = graphs or [encode_graph(r.formula) for r in records]
    batch = batch_graphs(graphs, [r.probs for r in records])
    res = forward_batch(params, model_cfg, batch)
    return kl_loss(
        res.mean,
        res.sigma,
        np.array([r.label_mean for r in records]),
        np.array([r.label_sigma for r in records]),
    )


def compute_gradients(params, model_cfg: ModelConfig, records: Sequence[TrainingRecord], graphs=None):
    """Mean batch KL and its gradient with respect to every parameter."""
    if not records:
        raise ValueError("empty batch")
    for p in params.values():
        p.grad = None
    loss = batch_loss(params, model_cfg, records, graphs)
    loss.backward()
    grads = {k: (p.grad if p.grad is not None else np.zeros_like(p.data)) for k, p in params.items()}
    return float(loss.data), grads


def mean_loss(params, model_cfg: ModelConfig, records: Sequence[TrainingRecord], batch_size: int = 64) -> float:
    from .model import frozen

    fixed = frozen(params)
    total = 0.0
    for start in range(0, len(records), batch_size):
        chunk = records[start:start + batch_size]
        total += float(batch_loss(fixed, model_cfg, chunk).data) * len(chunk)
    return total / len(records)


@dataclass
class TrainResult:
    params: dict
    epoch_losses: list[float]
    step_losses: list[float]
    steps: int


def train(
    records: Sequence[TrainingRecord],
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    params: dict | None = None,
    on_epoch: Callable[[int, float, dict], bool | None] | None = None,
) -> TrainResult:
    """Minimise mean KL(prediction || label) with Adam.

    The shuffle order is drawn from ``train_cfg.seed``, so a run is fully
    deterministic.  ``on_epoch(epoch, mean_loss, params)`` is called after
    each epoch, e.g. to checkpoint; returning True stops training.
    """
    if not records:
        raise ValueError("dataset is empty")
    for r in records:
        if not (math.isfinite(r.label_mean) and r.label_sigma > 0):
            raise ValueError(f"record {r.id!r} has an invalid label")
    if params is None:
        params = init_params(model_cfg, train_cfg.seed)
    rng = np.random.default_rng(train_cfg.seed)
    graphs = [encode_graph(r.formula) for r in records]
    state = AdamState()
    epoch_losses, step_losses = [], []
    steps = 0
    for epoch in range(train_cfg.epochs):
        order = rng.permutation(len(records))
        seen = 0.0
        total = 0.0
        for start in range(0, len(order), train_cfg.batch_size):
            idx = order[start:start + train_cfg.batch_size]
            chunk = [records[i] for i in idx]
            loss, grads = compute_gradients(params, model_cfg, chunk, [graphs[i] for i in idx])
            if not math.isfinite(loss):
                raise NonFiniteLoss(f"non-finite loss on records {[r.id for r in chunk]}")
            adam_step(params, grads, state, train_cfg)
            step_losses.append(loss)
            total += loss * len(chunk)
            seen += len(chunk)
            steps += 1
            if train_cfg.max_steps is not None and steps >= train_cfg.max_steps:
                break
        epoch_losses.append(total / seen)
        log.info("epoch %d  mean loss %.5f  steps %d", epoch + 1, epoch_losses[-1], steps)
        if on_epoch is not None and on_epoch(epoch, epoch_losses[-1], params):
            break
        if train_cfg.max_steps is not None and steps >= train_cfg.max_steps:
            break
    return TrainResult(params, epoch_losses, step_losses, steps)
