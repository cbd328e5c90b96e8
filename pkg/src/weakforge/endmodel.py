"""Downstream classifier: hashed bag-of-words features + logistic regression.

Featurization is the hashing trick: token n-grams are hashed with a 64-bit
blake2b digest into a fixed-dimension count vector, so there is no
vocabulary pass and vectors are identical across runs and platforms
(unlike the process-salted builtin hash).

Training is full-batch gradient descent on the multinomial cross-entropy
plus an L2 penalty (l2/2)*||W||^2 (bias unpenalized). Weights start at zero,
so runs are bit-reproducible; the seed is echoed into diagnostics for
bookkeeping. The loss is non-increasing for learning rates below the usual
1/L smoothness bound; the defaults are stable on the bundled corpus.
"""

from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import sparse

from weakforge.corpus import ClassSpace


class EndModelError(RuntimeError):
    """Training diverged or produced a non-finite loss."""


@dataclass(frozen=True)
class FeaturizeConfig:
    dim: int = 2**18
    lowercase: bool = True
    token_pattern: str = r"[a-zA-Z0-9']+"
    ngram_max: int = 1

    def __post_init__(self) -> None:
        if self.dim <= 0 or self.dim & (self.dim - 1):
            raise ValueError(f"hash dimension must be a power of two, got {self.dim}")
        if self.ngram_max not in (1, 2):
            raise ValueError("ngram_max must be 1 or 2")


@dataclass(frozen=True)
class FeatureVector:
    """Sparse hashed counts; indices strictly increasing and unique."""

    indices: np.ndarray
    values: np.ndarray
    dim: int


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.1
    l2: float = 1e-4
    epochs: int = 500
    seed: int = 0
    soft_labels: bool = False


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray  # (k, dim)
    bias: np.ndarray     # (k,)
    featurize: FeaturizeConfig
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not np.isfinite(self.weights).all() or not np.isfinite(self.bias).all():
            raise ValueError("model parameters must be finite")

    @property
    def k(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    f1_macro: float
    f1_binary: float | None
    n_test: int
    per_class_precision: tuple[float, ...]
    per_class_recall: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "f1_macro": self.f1_macro,
            "f1_binary": self.f1_binary,
            "n_test": self.n_test,
            "per_class_precision": list(self.per_class_precision),
            "per_class_recall": list(self.per_class_recall),
        }


def _hash_token(token: str, dim: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % dim


def featurize(text: str, config: FeaturizeConfig = FeaturizeConfig()) -> FeatureVector:
    """Hashed n-gram counts of one document. Empty text gives an empty vector."""
    if config.lowercase:
        text = text.lower()
    tokens = re.findall(config.token_pattern, text)
    grams = list(tokens)
    if config.ngram_max == 2:
        grams.extend(f"{a} {b}" for a, b in zip(tokens, tokens[1:]))
    counts = Counter(_hash_token(g, config.dim) for g in grams)
    if not counts:
        return FeatureVector(
            indices=np.empty(0, dtype=np.int64), values=np.empty(0, dtype=np.float64), dim=config.dim
        )
    items = sorted(counts.items())
    return FeatureVector(
        indices=np.asarray([i for i, _ in items], dtype=np.int64),
        values=np.asarray([v for _, v in items], dtype=np.float64),
        dim=config.dim,
    )


def build_matrix(texts: Sequence[str], config: FeaturizeConfig = FeaturizeConfig()) -> sparse.csr_matrix:
    """Stack featurized documents into an (n, dim) CSR matrix."""
    indptr = [0]
    indices: list[np.ndarray] = []
    values: list[np.ndarray] = []
    for text in texts:
        fv = featurize(text, config)
        indices.append(fv.indices)
        values.append(fv.values)
        indptr.append(indptr[-1] + len(fv.indices))
    if not texts:
        return sparse.csr_matrix((0, config.dim), dtype=np.float64)
    return sparse.csr_matrix(
        (
            np.concatenate(values) if values else np.empty(0),
            np.concatenate(indices) if indices else np.empty(0, dtype=np.int64),
            np.asarray(indptr, dtype=np.int64),
        ),
        shape=(len(texts), config.dim),
    )


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    mx = logits.max(axis=1, keepdims=True)
    lse = mx + np.log(np.exp(logits - mx).sum(axis=1, keepdims=True))
    return logits - lse


def loss_and_grad(
    weights: np.ndarray,
    bias: np.ndarray,
    X: sparse.csr_matrix | np.ndarray,
    targets: np.ndarray,
    l2: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy + (l2/2)||W||^2 with its analytic gradient."""
    n = targets.shape[0]
    logits = np.asarray(X @ weights.T) + bias
    log_probs = _log_softmax(logits)
    loss = float(-(targets * log_probs).sum() / n + 0.5 * l2 * (weights**2).sum())
    G = (np.exp(log_probs) - targets) / n
    grad_w = np.asarray((X.T @ G).T) + l2 * weights
    grad_b = G.sum(axis=0)
    return loss, grad_w, grad_b


def train(
    texts: Sequence[str],
    labels: Sequence[int] | None,
    k: int,
    posteriors: np.ndarray | None = None,
    featurize_config: FeaturizeConfig = FeaturizeConfig(),
    config: TrainConfig = TrainConfig(),
) -> LinearModel:
    """Train on hard pseudolabels, or on posterior rows when soft_labels is set.

    The loss recorded at each epoch is evaluated before that epoch's update;
    the trace ends with the loss at the final parameters.
    """
    if not texts:
        raise ValueError("training set is empty")
    X = build_matrix(texts, featurize_config)
    n = X.shape[0]
    if config.soft_labels:
        if posteriors is None:
            raise ValueError("soft_labels requires posterior rows")
        targets = np.asarray(posteriors, dtype=np.float64)
        if targets.shape != (n, k):
            raise ValueError(f"posteriors shape {targets.shape} != ({n}, {k})")
    else:
        if labels is None:
            raise ValueError("hard-label training requires labels")
        y = np.asarray(list(labels), dtype=np.int64)
        if len(y) != n:
            raise ValueError(f"{len(y)} labels for {n} documents")
        if y.min(initial=0) < 0 or y.max(initial=0) >= k:
            raise ValueError("pseudolabel out of class range")
        targets = np.zeros((n, k))
        targets[np.arange(n), y] = 1.0

    weights = np.zeros((k, featurize_config.dim))
    bias = np.zeros(k)
    loss_trace: list[float] = []
    for epoch in range(config.epochs):
        loss, grad_w, grad_b = loss_and_grad(weights, bias, X, targets, config.l2)
        if not np.isfinite(loss):
            raise EndModelError(f"non-finite loss at epoch {epoch}")
        loss_trace.append(loss)
        weights -= config.lr * grad_w
        bias -= config.lr * grad_b
    final_loss, _, _ = loss_and_grad(weights, bias, X, targets, config.l2)
    if not np.isfinite(final_loss):
        raise EndModelError(f"non-finite loss at epoch {config.epochs}")
    loss_trace.append(final_loss)
    return LinearModel(
        weights=weights,
        bias=bias,
        featurize=featurize_config,
        diagnostics={
            "epochs": config.epochs,
            "final_loss": final_loss,
            "seed": config.seed,
            "lr": config.lr,
            "l2": config.l2,
            "soft_labels": config.soft_labels,
            "loss_trace": loss_trace,
        },
    )


def predict(model: LinearModel, texts: Sequence[str]) -> np.ndarray:
    X = build_matrix(texts, model.featurize)
    logits = np.asarray(X @ model.weights.T) + model.bias
    return np.argmax(logits, axis=1)


def _prf(preds: np.ndarray, golds: np.ndarray, cls: int) -> tuple[float, float, float]:
    tp = int(((preds == cls) & (golds == cls)).sum())
    fp = int(((preds == cls) & (golds != cls)).sum())
    fn = int(((preds != cls) & (golds == cls)).sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def metrics_from_predictions(
    preds: Sequence[int], golds: Sequence[int], classes: ClassSpace
) -> EvalReport:
    """Metrics for any hard predictions (also used for label-model scoring).

    F1 is 0 by convention whenever precision + recall is 0, so degenerate
    all-one-class predictors score 0.000 rather than raising.
    """
    pred_arr = np.asarray(list(preds), dtype=np.int64)
    gold_arr = np.asarray(list(golds), dtype=np.int64)
    if len(pred_arr) != len(gold_arr):
        raise ValueError(f"{len(pred_arr)} predictions for {len(gold_arr)} gold labels")
    if len(gold_arr) == 0:
        raise ValueError("evaluation split is empty")
    accuracy = float((pred_arr == gold_arr).mean())
    per_class = [_prf(pred_arr, gold_arr, c) for c in range(classes.k)]
    f1_macro = sum(f for _, _, f in per_class) / classes.k
    f1_binary = None
    if classes.positive_class is not None:
        f1_binary = per_class[classes.positive_class][2]
    return EvalReport(
        accuracy=accuracy,
        f1_macro=f1_macro,
        f1_binary=f1_binary,
        n_test=len(gold_arr),
        per_class_precision=tuple(p for p, _, _ in per_class),
        per_class_recall=tuple(r for _, r, _ in per_class),
    )


def evaluate(model: LinearModel, texts: Sequence[str], golds: Sequence[int], classes: ClassSpace) -> EvalReport:
    """Accuracy, macro F1, and (when a positive class is declared) binary F1."""
    gold_list = list(golds)
    if len(texts) != len(gold_list):
        raise ValueError(f"{len(texts)} texts for {len(gold_list)} gold labels")
    preds = predict(model, texts)
    return metrics_from_predictions(preds, gold_list, classes)


def save_end_model(model: LinearModel, path: str | Path) -> None:
    meta = {
        "k": model.k,
        "featurize": {
            "dim": model.featurize.dim,
            "lowercase": model.featurize.lowercase,
            "token_pattern": model.featurize.token_pattern,
            "ngram_max": model.featurize.ngram_max,
        },
        "diagnostics": model.diagnostics,
    }
    np.savez_compressed(
        Path(path), weights=model.weights, bias=model.bias, meta=np.frombuffer(
            json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8
        )
    )


def load_end_model(path: str | Path) -> LinearModel:
    with np.load(Path(path)) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        return LinearModel(
            weights=data["weights"],
            bias=data["bias"],
            featurize=FeaturizeConfig(**meta["featurize"]),
            diagnostics=meta["diagnostics"],
        )
