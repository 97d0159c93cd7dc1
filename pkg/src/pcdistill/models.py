"""Small multilayer perceptrons for the teacher and the student.

Plain affine/relu stacks with He-normal initialization from a seeded
generator; the same spec and seed always produce bit-identical parameters.
Checkpoints round-trip bit-exactly through a versioned ``.npz`` container.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, ParameterError
from .tensor import Tensor, affine, relu

CHECKPOINT_FORMAT = "pcdistill-mlp"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden: tuple[int, ...]
    num_classes: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(w) for w in self.hidden))
        if self.input_dim < 1:
            raise ParameterError(f"input_dim must be >= 1, got {self.input_dim}")
        if any(w < 1 for w in self.hidden):
            raise ParameterError(f"hidden widths must be >= 1, got {self.hidden}")
        if self.num_classes < 2:
            raise ParameterError(f"num_classes must be >= 2, got {self.num_classes}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden, self.num_classes]
        return list(zip(dims[:-1], dims[1:]))


@dataclass
class ModelParams:
    spec: MlpSpec
    weights: list[Tensor]
    biases: list[Tensor]

    def parameters(self) -> list[Tensor]:
        return [t for pair in zip(self.weights, self.biases) for t in pair]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()


def init_mlp(spec: MlpSpec) -> ModelParams:
    """He-style init: weights ~ N(0, 2/fan_in), biases zero, seeded."""
    rng = np.random.default_rng(spec.seed)
    weights, biases = [], []
    for fan_in, fan_out in spec.layer_dims:
        std = np.sqrt(2.0 / fan_in)
        weights.append(Tensor(rng.normal(0.0, std, size=(fan_in, fan_out)),
                              requires_grad=True))
        biases.append(Tensor(np.zeros(fan_out), requires_grad=True))
    return ModelParams(spec=spec, weights=weights, biases=biases)


def forward_logits(params: ModelParams, x) -> Tensor:
    """Raw logits of a [B, input_dim] batch (no softmax)."""
    h = x if isinstance(x, Tensor) else Tensor(x)
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        h = relu(affine(h, w, b))
    return affine(h, params.weights[-1], params.biases[-1])


def forward_hidden(params: ModelParams, x) -> Tensor:
    """Penultimate activations (input batch itself when there is no hidden layer)."""
    h = x if isinstance(x, Tensor) else Tensor(x)
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        h = relu(affine(h, w, b))
    return h


def freeze(params: ModelParams) -> ModelParams:
    """Share the same arrays without gradient tracking (frozen teacher)."""
    return ModelParams(
        spec=params.spec,
        weights=[Tensor(w.data) for w in params.weights],
        biases=[Tensor(b.data) for b in params.biases],
    )


def save_checkpoint(params: ModelParams, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "input_dim": params.spec.input_dim,
        "hidden": list(params.spec.hidden),
        "num_classes": params.spec.num_classes,
        "seed": params.spec.seed,
    }
    arrays = {"meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        arrays[f"w{i}"] = w.data
        arrays[f"b{i}"] = b.data
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> ModelParams:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    with np.load(path) as blob:
        try:
            meta = json.loads(bytes(blob["meta"]).decode())
        except (KeyError, ValueError) as exc:
            raise DataError(f"unreadable checkpoint metadata in {path}") from exc
        if meta.get("format") != CHECKPOINT_FORMAT or meta.get("version") != CHECKPOINT_VERSION:
            raise DataError(
                f"unsupported checkpoint {meta.get('format')!r} "
                f"v{meta.get('version')!r} in {path}"
            )
        spec = MlpSpec(
            input_dim=meta["input_dim"],
            hidden=tuple(meta["hidden"]),
            num_classes=meta["num_classes"],
            seed=meta["seed"],
        )
        weights, biases = [], []
        for i in range(len(spec.layer_dims)):
            weights.append(Tensor(blob[f"w{i}"], requires_grad=True))
            biases.append(Tensor(blob[f"b{i}"], requires_grad=True))
    return ModelParams(spec=spec, weights=weights, biases=biases)
