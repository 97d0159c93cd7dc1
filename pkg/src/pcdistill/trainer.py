"""Deterministic SGD-with-momentum training for teachers and students.

The learning rate ramps linearly from 0 to base_lr over the warm-up epochs
(per step) and is then multiplied by the decay factor at each listed epoch.
Everything is derived from explicit seeds: the same dataset, model seed, and
train seed reproduce every reported number bit-exactly.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .data import Dataset, batch_iter
from .errors import ConfigError, DivergenceError, ParameterError
from .losses import LogitBatch, PcdConfig, cross_entropy, pcd_loss, vanilla_kd_loss
from .models import (
    MlpSpec,
    ModelParams,
    forward_logits,
    freeze,
    init_mlp,
    save_checkpoint,
)
from .tensor import Tensor


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    base_lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_decay_epochs: tuple[int, ...] = (30, 45)
    lr_decay_factor: float = 0.1
    warmup_epochs: int = 5
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "lr_decay_epochs",
                           tuple(int(e) for e in self.lr_decay_epochs))
        if self.epochs < 1:
            raise ParameterError(f"epochs must be >= 1, got {self.epochs}")
        if self.base_lr <= 0:
            raise ParameterError(f"base_lr must be positive, got {self.base_lr}")
        if not 0 <= self.momentum < 1:
            raise ParameterError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ParameterError("weight_decay must be non-negative")
        de = self.lr_decay_epochs
        if any(b <= a for a, b in zip(de, de[1:])) or any(e >= self.epochs for e in de):
            raise ParameterError(
                f"lr_decay_epochs must be strictly increasing and < epochs, got {de}"
            )
        if not 0 < self.lr_decay_factor <= 1:
            raise ParameterError("lr_decay_factor must lie in (0, 1]")
        if not 0 <= self.warmup_epochs < self.epochs:
            raise ParameterError(
                f"warmup_epochs must lie in [0, epochs), got {self.warmup_epochs}"
            )
        if self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class TrainReport:
    seed: int
    config: dict
    epochs: list[dict] = field(default_factory=list)
    final_top1: float = 0.0
    wall_clock_s: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def lr_at(epoch: int, step_in_epoch: int, steps_per_epoch: int, cfg: TrainConfig) -> float:
    warm_steps = cfg.warmup_epochs * steps_per_epoch
    t = epoch * steps_per_epoch + step_in_epoch
    if t < warm_steps:
        return cfg.base_lr * t / warm_steps
    decays = sum(1 for e in cfg.lr_decay_epochs if epoch >= e)
    return cfg.base_lr * cfg.lr_decay_factor ** decays


def evaluate_top1(params: ModelParams, ds: Dataset, split: str = "test") -> float:
    """Percentage of argmax(logits) == label; argmax ties go to the lowest class."""
    x, y = ds.split(split)
    if len(y) == 0:
        raise ParameterError(f"split {split!r} is empty")
    logits = forward_logits(params, Tensor(x)).data
    preds = np.argmax(logits, axis=1)
    return 100.0 * float(np.mean(preds == y))


def _epoch_seed(train_seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence([train_seed, epoch]).generate_state(1, np.uint64)[0])


def _run_training(
    ds: Dataset,
    params: ModelParams,
    cfg: TrainConfig,
    step_loss: Callable[[Tensor, np.ndarray], Tensor],
    label: str,
) -> TrainReport:
    t0 = time.perf_counter()
    train_n = len(ds.train_idx)
    steps_per_epoch = -(-train_n // cfg.batch_size)
    velocities = [np.zeros_like(p.data) for p in params.parameters()]
    report = TrainReport(seed=cfg.seed, config=asdict(cfg))
    for epoch in range(cfg.epochs):
        losses = []
        batches = batch_iter(ds, cfg.batch_size, _epoch_seed(cfg.seed, epoch))
        for step, (bx, by) in enumerate(batches):
            lr = lr_at(epoch, step, steps_per_epoch, cfg)
            loss = step_loss(Tensor(bx), by)
            value = loss.item()
            if not np.isfinite(value):
                raise DivergenceError(
                    f"{label}: non-finite loss {value} at epoch {epoch}, step {step}"
                )
            params.zero_grad()
            loss.backward()
            for p, v in zip(params.parameters(), velocities):
                g = p.grad if p.grad is not None else np.zeros_like(p.data)
                if cfg.weight_decay:
                    g = g + cfg.weight_decay * p.data
                v *= cfg.momentum
                v += g
                p.data -= lr * v
            losses.append(value)
        report.epochs.append({
            "epoch": epoch,
            "train_loss": float(np.mean(losses)),
            "test_top1": evaluate_top1(params, ds, "test"),
        })
    report.final_top1 = report.epochs[-1]["test_top1"]
    report.wall_clock_s = time.perf_counter() - t0
    return report


def train_teacher(
    ds: Dataset,
    spec: MlpSpec,
    cfg: TrainConfig,
    ckpt_path=None,
) -> tuple[ModelParams, TrainReport]:
    """Plain cross-entropy training (used for the teacher and for any
    stand-alone baseline model)."""
    params = init_mlp(spec)

    def step_loss(x: Tensor, y: np.ndarray) -> Tensor:
        return cross_entropy(forward_logits(params, x), y)

    report = _run_training(ds, params, cfg, step_loss, "train")
    if ckpt_path is not None:
        save_checkpoint(params, ckpt_path)
    return params, report


def distill_student(
    ds: Dataset,
    teacher: ModelParams,
    student_spec: MlpSpec,
    cfg: TrainConfig,
    pcd_cfg: PcdConfig,
    ckpt_path=None,
) -> tuple[ModelParams, TrainReport]:
    """Train a student against a frozen teacher.

    Loss selection follows the flags: with a direction enabled the
    progressive objective is used; with both directions off the run falls
    back to vanilla KD (cross-entropy weight 1, KL weight kd_beta). A zero
    distillation weight short-circuits to plain cross-entropy so the
    trajectory is bit-identical to a teacher-free run under the same seeds.
    """
    if teacher.spec.num_classes != ds.num_classes:
        raise ConfigError(
            f"teacher has {teacher.spec.num_classes} classes, dataset has {ds.num_classes}"
        )
    use_progressive = pcd_cfg.use_f2cl or pcd_cfg.use_c2fl
    if not use_progressive and pcd_cfg.kd_beta == 0.0:
        raise ConfigError(
            "no distillation term enabled: both directions off and kd_beta == 0"
        )
    params = init_mlp(student_spec)
    frozen = freeze(teacher)
    plain_ce = use_progressive and pcd_cfg.alpha == 0.0

    def step_loss(x: Tensor, y: np.ndarray) -> Tensor:
        logits = forward_logits(params, x)
        if plain_ce:
            return cross_entropy(logits, y)
        batch = LogitBatch(forward_logits(frozen, x), logits, y)
        if use_progressive:
            return pcd_loss(batch, pcd_cfg)
        return vanilla_kd_loss(batch, pcd_cfg.tau, alpha_ce=1.0, beta=pcd_cfg.kd_beta)

    report = _run_training(ds, params, cfg, step_loss, "distill")
    if ckpt_path is not None:
        save_checkpoint(params, ckpt_path)
    return params, report


def with_seed(cfg: TrainConfig, seed: int) -> TrainConfig:
    return replace(cfg, seed=seed)
