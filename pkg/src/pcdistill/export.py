"""Artifact exports: probability-gap matrices and penultimate-layer features.

Both exports write plain header-less CSV so downstream plotting or
dimensionality reduction can live outside this package.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import DataError
from .models import ModelParams, forward_hidden, forward_logits
from .tensor import Tensor, masked_softmax_temp


def _softened_probs(params: ModelParams, x: np.ndarray, tau: float) -> np.ndarray:
    logits = forward_logits(params, Tensor(x))
    full = np.ones(logits.shape, dtype=bool)
    return masked_softmax_temp(logits, full, tau).data


def logit_diff_matrix(teacher: ModelParams, student: ModelParams, ds: Dataset,
                      tau: float, split: str = "test") -> np.ndarray:
    """C x C matrix: row = true class, column = class, value = mean
    (teacher prob - student prob) over that true class's samples.

    Classes without samples in the split produce all-zero rows.
    """
    c = ds.num_classes
    if teacher.spec.num_classes != c or student.spec.num_classes != c:
        raise DataError(
            f"class-count mismatch: teacher {teacher.spec.num_classes}, "
            f"student {student.spec.num_classes}, dataset {c}"
        )
    x, y = ds.split(split)
    diff = _softened_probs(teacher, x, tau) - _softened_probs(student, x, tau)
    matrix = np.zeros((c, c), dtype=np.float64)
    for true_class in range(c):
        sel = y == true_class
        if sel.any():
            matrix[true_class] = diff[sel].mean(axis=0)
    return matrix


def save_matrix_csv(matrix: np.ndarray, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in matrix:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def embeddings_table(params: ModelParams, ds: Dataset,
                     split: str = "test") -> np.ndarray:
    """Penultimate activations with the label appended as the last column."""
    x, y = ds.split(split)
    hidden = forward_hidden(params, Tensor(x)).data
    return np.concatenate([hidden, y[:, None].astype(np.float64)], axis=1)


def save_embeddings_csv(table: np.ndarray, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in table:
            cells = [repr(float(v)) for v in row[:-1]]
            cells.append(str(int(row[-1])))
            fh.write(",".join(cells) + "\n")
