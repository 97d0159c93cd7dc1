"""Loop-based reference implementations used as ground truth in tests.

Everything here is written with plain Python floats, lists, and ``math`` so
that it shares no numeric code with the tensor engine: separate softmax,
separate sort, separate accumulation. Values agree with the engine to ~1e-9
because both stabilize softmax by subtracting the masked row max.

Not performance-sensitive; these routines are only meant for small problems.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np


@dataclass
class OracleResult:
    value: float
    gradients: Optional[dict] = None


def _rows(x) -> list[list[float]]:
    return [[float(v) for v in row] for row in x]


# -- elementary pieces -------------------------------------------------------

def oracle_affine(x, w, b) -> list[list[float]]:
    """Triple-loop ``x @ w + b``."""
    x, w = _rows(x), _rows(w)
    b = [float(v) for v in b]
    out = []
    for row in x:
        out_row = []
        for k in range(len(b)):
            acc = b[k]
            for d in range(len(row)):
                acc += row[d] * w[d][k]
            out_row.append(acc)
        out.append(out_row)
    return out


def oracle_mlp_forward(weights, biases, x) -> list[list[float]]:
    """Forward pass of an affine/relu stack, final layer linear."""
    h = _rows(x)
    n_layers = len(biases)
    for li in range(n_layers):
        h = oracle_affine(h, weights[li], biases[li])
        if li < n_layers - 1:
            h = [[v if v > 0.0 else 0.0 for v in row] for row in h]
    return h


def _softmax_subset(row: Sequence[float], idxs: Sequence[int], tau: float) -> list[float]:
    m = max(row[i] for i in idxs)
    e = [math.exp((row[i] - m) / tau) for i in idxs]
    s = sum(e)
    return [v / s for v in e]


def _kl(p: Sequence[float], q: Sequence[float]) -> float:
    acc = 0.0
    for a, b in zip(p, q):
        if a > 0.0:
            acc += a * (math.log(a) - math.log(b))
    return acc


def _cosine_weight(p: Sequence[float], q: Sequence[float]) -> float:
    dot = sum(a * b for a, b in zip(p, q))
    np_ = math.sqrt(sum(a * a for a in p))
    nq = math.sqrt(sum(b * b for b in q))
    lam = 1.0 - dot / (np_ * nq)
    return lam if lam > 0.0 else 0.0


def _ce_row(row: Sequence[float], label: int) -> float:
    m = max(row)
    lse = m + math.log(sum(math.exp(v - m) for v in row))
    return lse - row[label]


def oracle_ce(logits, labels) -> float:
    rows = _rows(logits)
    return sum(_ce_row(r, int(l)) for r, l in zip(rows, labels)) / len(rows)


def oracle_rank_row(t_row: Sequence[float], s_row: Sequence[float]) -> list[int]:
    gaps = [abs(float(a) - float(b)) for a, b in zip(t_row, s_row)]
    return sorted(range(len(gaps)), key=lambda c: (-gaps[c], c))


def oracle_group_sizes(num_classes: int, stages: int, direction: str) -> list[int]:
    if direction == "f2cl":
        return [(num_classes + k - 1) // k for k in range(stages, 0, -1)]
    if direction == "c2fl":
        return [(num_classes + i - 1) // i for i in range(1, stages + 1)]
    raise ValueError(f"unknown direction {direction!r}")


def oracle_top1(logits, labels) -> float:
    rows = _rows(logits)
    hits = 0
    for row, label in zip(rows, labels):
        best, best_v = 0, row[0]
        for c, v in enumerate(row):
            if v > best_v:
                best, best_v = c, v
        if best == int(label):
            hits += 1
    return 100.0 * hits / len(rows)


# -- losses ------------------------------------------------------------------

def oracle_vanilla_kd(teacher, student, labels, tau, alpha_ce=1.0, beta=1.0) -> OracleResult:
    t_rows, s_rows = _rows(teacher), _rows(student)
    num_classes = len(t_rows[0])
    full = list(range(num_classes))
    kl_acc = 0.0
    for t_row, s_row in zip(t_rows, s_rows):
        p = _softmax_subset(t_row, full, tau)
        q = _softmax_subset(s_row, full, tau)
        kl_acc += _kl(p, q)
    kl_mean = kl_acc / len(t_rows)
    ce = oracle_ce(s_rows, labels)
    return OracleResult(alpha_ce * ce + beta * tau * tau * kl_mean)


def _direction_term(t_rows, s_rows, ranks, stages, direction, tau, use_wdm) -> float:
    num_classes = len(t_rows[0])
    sizes = oracle_group_sizes(num_classes, stages, direction)
    acc = 0.0
    for t_row, s_row, order in zip(t_rows, s_rows, ranks):
        for m in sizes:
            for start in range(0, num_classes, m):
                idxs = order[start:start + m]
                p = _softmax_subset(t_row, idxs, tau)
                q = _softmax_subset(s_row, idxs, tau)
                lam = _cosine_weight(p, q) if use_wdm else 1.0
                acc += lam * _kl(p, q) * tau * tau
    return acc / len(t_rows)


def oracle_pcd_loss(teacher, student, labels, config) -> OracleResult:
    """Re-derives the full progressive objective by direct enumeration.

    ``config`` needs attributes tau, alpha, stages, use_ldr, use_f2cl,
    use_c2fl, use_wdm (duck-typed so this module stays standalone).
    """
    t_rows, s_rows = _rows(teacher), _rows(student)
    num_classes = len(t_rows[0])
    ce = oracle_ce(s_rows, labels)
    if config.alpha == 0.0:
        return OracleResult(ce)
    if config.use_ldr:
        ranks = [oracle_rank_row(t, s) for t, s in zip(t_rows, s_rows)]
    else:
        ranks = [list(range(num_classes)) for _ in t_rows]
    distill = 0.0
    for direction, enabled in (("f2cl", config.use_f2cl), ("c2fl", config.use_c2fl)):
        if enabled:
            distill += _direction_term(
                t_rows, s_rows, ranks, config.stages, direction, config.tau, config.use_wdm
            )
    return OracleResult(ce + config.alpha * distill)


# -- finite differences -------------------------------------------------------

def oracle_grad(fn: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function, coordinate by coordinate."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xp[idx] = x[idx] + h
        xm = x.copy()
        xm[idx] = x[idx] - h
        g[idx] = (fn(xp) - fn(xm)) / (2.0 * h)
    return g
