"""Distillation losses: vanilla KD and progressive class-level distillation.

The progressive objective ranks classes per sample by the absolute
teacher-student logit gap, partitions the ranked sequence into groups over a
number of stages (fine-to-coarse group sizes in one direction, coarse-to-fine
in the other), runs a temperature softmax restricted to each group, and sums
cosine-weighted KL terms across all groups and stages. The total loss is
cross-entropy plus a weighted sum of the enabled direction terms.

Teacher logits are constants throughout: gradients flow only to the student.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import ConfigError, DataError, ParameterError, ShapeError
from .tensor import (
    Tensor,
    log,
    masked_log,
    masked_softmax_temp,
    mean,
    relu,
    reshape,
    sqrt,
    take_per_row,
)

F2CL = "f2cl"  # group sizes grow across stages
C2FL = "c2fl"  # group sizes shrink across stages
DIRECTIONS = (F2CL, C2FL)


@dataclass(frozen=True)
class PcdConfig:
    """Hyperparameters of the distillation objective.

    ``kd_beta`` only matters for the vanilla-KD baseline (both direction
    flags off); the progressive loss uses ``alpha`` to weight its term
    against cross-entropy.
    """

    tau: float = 4.0
    alpha: float = 1.0
    stages: int = 3
    use_ldr: bool = True
    use_f2cl: bool = True
    use_c2fl: bool = True
    use_wdm: bool = True
    kd_beta: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ParameterError(f"tau must be positive, got {self.tau}")
        if self.alpha < 0:
            raise ParameterError(f"alpha must be non-negative, got {self.alpha}")
        if self.stages < 1:
            raise ParameterError(f"stages must be >= 1, got {self.stages}")
        if self.kd_beta < 0:
            raise ParameterError(f"kd_beta must be non-negative, got {self.kd_beta}")


@dataclass
class LogitBatch:
    """Paired teacher/student logits [B, C] with integer labels [B]."""

    teacher: Tensor
    student: Tensor
    labels: np.ndarray

    def __post_init__(self):
        if not isinstance(self.teacher, Tensor):
            self.teacher = Tensor(self.teacher)
        if not isinstance(self.student, Tensor):
            self.student = Tensor(self.student)
        if self.teacher.shape != self.student.shape:
            raise ShapeError(
                f"teacher {self.teacher.shape} vs student {self.student.shape}"
            )
        if self.teacher.ndim != 2:
            raise ShapeError(f"logits must be 2-D, got {self.teacher.shape}")
        b, c = self.teacher.shape
        if b < 1 or c < 2:
            raise ShapeError(f"need B >= 1 and C >= 2, got [{b}, {c}]")
        # the teacher branch is frozen: detach it so no gradient is tracked
        if self.teacher.requires_grad:
            self.teacher = Tensor(self.teacher.data)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (b,):
            raise ShapeError(f"labels shape {self.labels.shape}, expected ({b},)")
        if (self.labels < 0).any() or (self.labels >= c).any():
            raise DataError(f"labels must lie in [0, {c})")

    @property
    def batch_size(self) -> int:
        return self.teacher.shape[0]

    @property
    def num_classes(self) -> int:
        return self.teacher.shape[1]


@dataclass
class StagePlan:
    """One stage: its group size and the class-index chunks per sample."""

    group_size: int
    groups: list[np.ndarray]  # each [B, width], widths sum to C


@dataclass
class DistillSchedule:
    direction: str
    stages: list[StagePlan]


# -- shared pieces -------------------------------------------------------------

def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy of raw logits at temperature 1."""
    probs = masked_softmax_temp(logits, np.ones(logits.shape, dtype=bool), 1.0)
    picked = take_per_row(probs, labels)
    return -mean(log(picked))


def kl_rows(p: np.ndarray, q: Tensor) -> Tensor:
    """Row-wise KL(p || q); p is a constant, terms with p == 0 contribute 0."""
    p = np.asarray(p, dtype=np.float64)
    support = p > 0.0
    p_log_p = np.where(support, p * np.log(np.where(support, p, 1.0)), 0.0).sum(axis=-1)
    cross = (masked_log(q, support) * p).sum(axis=-1)
    return Tensor(p_log_p) - cross


def vanilla_kd_loss(batch: LogitBatch, tau: float, alpha_ce: float = 1.0,
                    beta: float = 1.0) -> Tensor:
    """Cross-entropy plus temperature-softened KL between teacher and student."""
    tau = float(tau)
    if not (np.isfinite(tau) and tau > 0):
        raise ParameterError(f"tau must be positive, got {tau}")
    full = np.ones(batch.teacher.shape, dtype=bool)
    p = masked_softmax_temp(batch.teacher, full, tau).data
    q = masked_softmax_temp(batch.student, full, tau)
    kl = mean(kl_rows(p, q))
    ce = cross_entropy(batch.student, batch.labels)
    return alpha_ce * ce + (beta * tau * tau) * kl


# -- ranking and schedules ------------------------------------------------------

def rank_logit_difference(batch: LogitBatch) -> np.ndarray:
    """Per-sample class indices sorted by descending |teacher - student| logit gap.

    Ties break toward the lower class index (stable sort), so the result is
    deterministic.
    """
    gaps = np.abs(batch.teacher.data - batch.student.data)
    return np.argsort(-gaps, axis=1, kind="stable").astype(np.int64)


def natural_ranks(batch_size: int, num_classes: int) -> np.ndarray:
    """Identity ordering used when ranking is disabled."""
    return np.tile(np.arange(num_classes, dtype=np.int64), (batch_size, 1))


def stage_group_sizes(num_classes: int, stages: int, direction: str) -> list[int]:
    """Group size per stage; ceil division keeps groups non-empty for any C."""
    if direction not in DIRECTIONS:
        raise ParameterError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    if stages < 1:
        raise ParameterError(f"stages must be >= 1, got {stages}")
    if stages > num_classes:
        raise ParameterError(
            f"stages ({stages}) exceeds class count ({num_classes}); use stages <= C"
        )
    if direction == F2CL:
        denoms = range(stages, 0, -1)
    else:
        denoms = range(1, stages + 1)
    return [-(-num_classes // k) for k in denoms]


def build_schedule(ranks: np.ndarray, num_classes: int, stages: int,
                   direction: str) -> DistillSchedule:
    """Chunk each sample's ranked row into consecutive groups, stage by stage.

    The most divergent classes land in the first group of every stage; the
    final chunk of a stage may be smaller when C is not divisible.
    """
    ranks = np.asarray(ranks, dtype=np.int64)
    plans = []
    for m in stage_group_sizes(num_classes, stages, direction):
        groups = [ranks[:, s:s + m] for s in range(0, num_classes, m)]
        plans.append(StagePlan(group_size=m, groups=groups))
    return DistillSchedule(direction=direction, stages=plans)


# -- group-level terms ----------------------------------------------------------

def group_weight(p, q, use_wdm: bool = True) -> Union[Tensor, float]:
    """Cosine-distance weight between two group distributions.

    Differentiable with respect to the student side ``q``; ``p`` is constant.
    Clipped at 0 so rounding near identical distributions cannot push the
    weight negative. Returns the constant 1 when the mechanism is disabled.
    Accepts a single row (scalar result) or [B, C] rows (one weight per row).
    """
    if not use_wdm:
        return 1.0
    p = p.data if isinstance(p, Tensor) else np.asarray(p, dtype=np.float64)
    q = q if isinstance(q, Tensor) else Tensor(q)
    single = q.ndim == 1
    if single:
        p = p.reshape(1, -1)
        q = reshape(q, (1, -1))
    p_norm = np.sqrt((p * p).sum(axis=-1))
    dot = (q * p).sum(axis=1)
    q_norm = sqrt((q * q).sum(axis=1))
    lam = relu(1.0 - dot / (q_norm * Tensor(p_norm)))
    return reshape(lam, ()) if single else lam


def group_loss(p, q, lam, tau: float) -> Tensor:
    """Weighted group divergence: lam * KL(p || q) * tau**2."""
    p = p.data if isinstance(p, Tensor) else np.asarray(p, dtype=np.float64)
    q = q if isinstance(q, Tensor) else Tensor(q)
    single = q.ndim == 1
    if single:
        p = p.reshape(1, -1)
        q = reshape(q, (1, -1))
    out = lam * kl_rows(p, q) * (tau * tau)
    return reshape(out, ()) if single else out


def direction_loss(batch: LogitBatch, schedule: DistillSchedule,
                   config: PcdConfig) -> Tensor:
    """Mean over samples of the summed group losses across every stage."""
    b, c = batch.teacher.shape
    total: Optional[Tensor] = None
    for stage in schedule.stages:
        for idx in stage.groups:
            group_mask = np.zeros((b, c), dtype=bool)
            np.put_along_axis(group_mask, idx, True, axis=1)
            p = masked_softmax_temp(batch.teacher, group_mask, config.tau).data
            q = masked_softmax_temp(batch.student, group_mask, config.tau)
            lam = group_weight(p, q, use_wdm=config.use_wdm)
            d = group_loss(p, q, lam, config.tau)
            total = d if total is None else total + d
    assert total is not None  # schedules always have at least one group
    return mean(total)


def pcd_loss(batch: LogitBatch, config: PcdConfig) -> Tensor:
    """Cross-entropy plus the weighted sum of enabled direction losses.

    The ranking is recomputed from the current logits and shared by both
    directions. With ``alpha == 0`` the result is plain cross-entropy and the
    distillation term is skipped entirely.
    """
    if not (config.use_f2cl or config.use_c2fl):
        raise ConfigError(
            "progressive loss requested with both direction flags off; "
            "enable use_f2cl and/or use_c2fl"
        )
    ce = cross_entropy(batch.student, batch.labels)
    if config.alpha == 0.0:
        return ce
    b, c = batch.teacher.shape
    if config.use_ldr:
        ranks = rank_logit_difference(batch)
    else:
        ranks = natural_ranks(b, c)
    distill: Optional[Tensor] = None
    for direction, enabled in ((F2CL, config.use_f2cl), (C2FL, config.use_c2fl)):
        if not enabled:
            continue
        schedule = build_schedule(ranks, c, config.stages, direction)
        term = direction_loss(batch, schedule, config)
        distill = term if distill is None else distill + term
    return ce + config.alpha * distill
