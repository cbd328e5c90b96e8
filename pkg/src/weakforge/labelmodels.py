"""Noise models over vote matrices: fit parameters, infer posteriors.

Four model kinds are supported:

- ``mv``   majority vote (parameter-free)
- ``wmv``  weighted majority vote (per-LF weights from a dev set, or from
           agreement with the MV pseudolabel when no dev gold is available)
- ``ds``   Dawid-Skene: per-LF confusion tensors over the emission alphabet
           {abstain, 0..k-1}, fitted by EM
- ``fs``   independent-accuracy model with accuracies estimated by the
           closed-form triplet method on pairwise agreement moments

All kinds assume LF outputs are conditionally independent given the true
label. Hard pseudolabels are the posterior argmax with a deterministic
tie-break: highest prior first, then lowest class index.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Sequence

import numpy as np

from weakforge.corpus import ClassSpace
from weakforge.votes import ABSTAIN, VoteMatrix

MODEL_KINDS = ("mv", "wmv", "ds", "fs")

_ROW_TOL = 1e-9
_ACC_CEIL = 1.0 - 1e-6


class MomentBelowFloor(ValueError):
    """A triplet denominator moment is too close to zero; pick another triple."""


@dataclass(frozen=True)
class FitConfig:
    seed: int = 0
    ds_max_iters: int = 100
    ds_tol: float = 1e-6
    ds_smoothing: float = 0.01
    fs_moment_floor: float = 1e-3
    wmv_min_weight: float = 1e-6
    wmv_fallback: bool = True


@dataclass(frozen=True)
class Posterior:
    """Per-point class probabilities, hard pseudolabels, and coverage flags."""

    probs: np.ndarray
    hard: np.ndarray
    covered: np.ndarray

    @property
    def n(self) -> int:
        return self.probs.shape[0]

    @property
    def k(self) -> int:
        return self.probs.shape[1]


@dataclass(frozen=True)
class NoiseModel:
    """Fitted parameters of one model kind; immutable and thread-safe.

    ``prior`` doubles as the class-balance vector used for all-abstain rows
    (mv/wmv), the learned class prior (ds), or the balance fed to the
    independent-accuracy posterior (fs), and always drives tie-breaking.
    """

    kind: str
    k: int
    prior: np.ndarray
    weights: np.ndarray | None = None      # wmv: (m,)
    confusion: np.ndarray | None = None    # ds: (m, k, k+1); column 0 is abstain
    accuracies: np.ndarray | None = None   # fs: (k, m) one-vs-rest reductions
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        prior = np.asarray(self.prior, dtype=np.float64)
        object.__setattr__(self, "prior", prior)
        if prior.shape != (self.k,) or abs(prior.sum() - 1.0) > _ROW_TOL or prior.min() < 0:
            raise ValueError("prior must be a probability vector of length k")
        if self.kind == "wmv":
            w = np.asarray(self.weights, dtype=np.float64)
            object.__setattr__(self, "weights", w)
            if w.ndim != 1 or not np.isfinite(w).all() or (w < 0).any() or w.sum() == 0:
                raise ValueError("wmv weights must be finite, non-negative, not all zero")
        elif self.kind == "ds":
            pi = np.asarray(self.confusion, dtype=np.float64)
            object.__setattr__(self, "confusion", pi)
            if pi.ndim != 3 or pi.shape[1:] != (self.k, self.k + 1):
                raise ValueError(f"ds confusion must have shape (m, {self.k}, {self.k + 1})")
            if np.abs(pi.sum(axis=2) - 1.0).max(initial=0.0) > _ROW_TOL:
                raise ValueError("ds confusion rows must sum to 1")
        elif self.kind == "fs":
            acc = np.asarray(self.accuracies, dtype=np.float64)
            object.__setattr__(self, "accuracies", acc)
            if acc.ndim != 2 or acc.shape[0] != self.k:
                raise ValueError(f"fs accuracies must have shape ({self.k}, m)")
            if (acc <= 0).any() or (acc > 1).any():
                raise ValueError("fs accuracies must lie in (0, 1]")

    @property
    def m(self) -> int | None:
        """Number of LFs the model is bound to; None for the parameter-free MV."""
        if self.kind == "wmv":
            return len(self.weights)
        if self.kind == "ds":
            return self.confusion.shape[0]
        if self.kind == "fs":
            return self.accuracies.shape[1]
        return None


def _resolve_prior(classes: ClassSpace) -> np.ndarray:
    return np.asarray(classes.effective_prior(), dtype=np.float64)


def _balance_from_gold(gold: Sequence[int], k: int) -> np.ndarray:
    counts = np.zeros(k, dtype=np.float64)
    for g in gold:
        counts[g] += 1.0
    return counts / counts.sum()


def _weighted_mass(votes: np.ndarray, weights: np.ndarray, k: int) -> np.ndarray:
    """Per-point, per-class weighted vote mass, accumulated LF by LF in order."""
    n, m = votes.shape
    mass = np.zeros((n, k), dtype=np.float64)
    for a in range(m):
        col = votes[:, a]
        valid = col != ABSTAIN
        mass[np.flatnonzero(valid), col[valid]] += weights[a]
    return mass


def _hard_labels(probs: np.ndarray, prior: np.ndarray) -> np.ndarray:
    # Deterministic tie-break: highest prior, then lowest class index.
    k = probs.shape[1]
    pref = sorted(range(k), key=lambda c: (-prior[c], c))
    pref_arr = np.asarray(pref)
    return pref_arr[np.argmax(probs[:, pref_arr], axis=1)]


def _mass_posterior(votes: np.ndarray, weights: np.ndarray, prior: np.ndarray, k: int) -> Posterior:
    mass = _weighted_mass(votes, weights, k)
    covered = (votes != ABSTAIN).any(axis=1) if votes.size else np.zeros(len(votes), dtype=bool)
    total = mass.sum(axis=1)
    probs = np.empty_like(mass)
    has_mass = total > 0
    probs[has_mass] = mass[has_mass] / total[has_mass, None]
    probs[~has_mass] = prior
    return Posterior(probs=probs, hard=_hard_labels(probs, prior), covered=covered)


# ---------------------------------------------------------------------------
# Dawid-Skene
# ---------------------------------------------------------------------------


def _ds_log_posterior(
    emissions: np.ndarray, prior: np.ndarray, confusion: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalized log posterior L[i, c] and its row logsumexp."""
    n, m = emissions.shape
    with np.errstate(divide="ignore"):
        log_pi = np.log(confusion)
        L = np.tile(np.log(prior), (n, 1))
    for a in range(m):
        L += log_pi[a][:, emissions[:, a]].T
    mx = L.max(axis=1, keepdims=True)
    lse = mx + np.log(np.exp(L - mx).sum(axis=1, keepdims=True))
    return L, lse


def _fit_ds(matrix: VoteMatrix, classes: ClassSpace, config: FitConfig) -> NoiseModel:
    votes = matrix.votes
    n, m = votes.shape
    k = classes.k
    if n == 0:
        raise ValueError("cannot fit Dawid-Skene on an empty matrix")
    if not (votes != ABSTAIN).any():
        raise ValueError("cannot fit Dawid-Skene on an all-abstain matrix")
    alpha = config.ds_smoothing
    emissions = votes + 1  # 0 = abstain, 1 + c = class c
    onehots = [np.eye(k + 1, dtype=np.float64)[emissions[:, a]] for a in range(m)]

    # Responsibilities start from smoothed MV posteriors; this pins EM to the
    # identity labeling of classes rather than a label-switched basin.
    mv_probs = _mass_posterior(votes, np.ones(m), _resolve_prior(classes), k).probs
    resp = mv_probs + 0.1
    resp /= resp.sum(axis=1, keepdims=True)

    objective_trace: list[float] = []
    loglik_trace: list[float] = []
    prior = np.full(k, 1.0 / k)
    confusion = np.empty((m, k, k + 1))
    converged = False
    for _ in range(config.ds_max_iters):
        # M-step: MAP estimates with add-alpha pseudocounts keeping pi > 0.
        prior = resp.mean(axis=0)
        for a in range(m):
            counts = resp.T @ onehots[a]
            confusion[a] = (counts + alpha) / (counts.sum(axis=1, keepdims=True) + alpha * (k + 1))
        # E-step plus objective bookkeeping.
        L, lse = _ds_log_posterior(emissions, prior, confusion)
        loglik = float(lse.sum())
        objective = loglik + alpha * float(np.log(confusion).sum())
        if objective_trace and objective < objective_trace[-1] - 1e-9:
            raise RuntimeError(
                f"EM objective decreased: {objective_trace[-1]} -> {objective}"
            )
        improved = not objective_trace or objective - objective_trace[-1] >= config.ds_tol
        objective_trace.append(objective)
        loglik_trace.append(loglik)
        resp = np.exp(L - lse)
        if not improved:
            converged = True
            break

    return NoiseModel(
        kind="ds",
        k=k,
        prior=prior,
        confusion=confusion,
        diagnostics={
            "iterations": len(objective_trace),
            "final_log_likelihood": loglik_trace[-1],
            "log_likelihood_trace": loglik_trace,
            "objective_trace": objective_trace,
            "converged": converged,
            "smoothing": alpha,
        },
    )


def _infer_ds(model: NoiseModel, matrix: VoteMatrix) -> Posterior:
    emissions = matrix.votes + 1
    L, lse = _ds_log_posterior(emissions, model.prior, model.confusion)
    probs = np.exp(L - lse)
    covered = (matrix.votes != ABSTAIN).any(axis=1)
    return Posterior(probs=probs, hard=_hard_labels(probs, model.prior), covered=covered)


# ---------------------------------------------------------------------------
# Triplet method (independent-accuracy model)
# ---------------------------------------------------------------------------


def _pm1_accuracy(moments: np.ndarray, a: int, b: int, c: int, floor: float) -> float:
    """Accuracy of LF ``a`` on the +/-1 scale from the triple (a, b, c)."""
    denom = moments[b, c]
    if abs(denom) <= floor:
        raise MomentBelowFloor(
            f"|M[{b},{c}]| = {abs(denom):.3g} is below the moment floor {floor:.3g}"
        )
    return math.sqrt(abs(moments[a, b] * moments[a, c] / denom))


def _to_probability(pm1: float) -> float:
    return min(max((1.0 + pm1) / 2.0, 0.5), _ACC_CEIL)


def triplet_accuracy(
    second_moments: np.ndarray,
    triple: tuple[int, int, int],
    moment_floor: float = 1e-3,
) -> tuple[float, float, float]:
    """Probability-scale accuracies of three LFs from their pairwise moments.

    ``second_moments`` holds E[v_a * v_b] over +/-1-coded votes (abstain = 0).
    Estimates are clamped to [0.5, 1 - 1e-6]: the square root's sign ambiguity
    is resolved by assuming better-than-chance LFs, so adversarial LFs are
    misread as their mirror image. Raises :class:`MomentBelowFloor` when any
    needed denominator moment is too small.
    """
    M = np.asarray(second_moments, dtype=np.float64)
    a, b, c = triple
    if len({a, b, c}) != 3:
        raise ValueError("triple must name three distinct LFs")
    return (
        _to_probability(_pm1_accuracy(M, a, b, c, moment_floor)),
        _to_probability(_pm1_accuracy(M, b, a, c, moment_floor)),
        _to_probability(_pm1_accuracy(M, c, a, b, moment_floor)),
    )


def _ovr_coded(votes: np.ndarray, cls: int) -> np.ndarray:
    """One-vs-rest +/-1 coding: vote == cls -> +1, other non-abstain -> -1."""
    coded = np.zeros(votes.shape, dtype=np.float64)
    coded[votes == cls] = 1.0
    coded[(votes != cls) & (votes != ABSTAIN)] = -1.0
    return coded


def _fit_fs(
    matrix: VoteMatrix,
    classes: ClassSpace,
    dev: tuple[VoteMatrix, Sequence[int]] | None,
    config: FitConfig,
) -> NoiseModel:
    votes = matrix.votes
    n, m = votes.shape
    k = classes.k
    if n == 0:
        raise ValueError("cannot fit the triplet model on an empty matrix")
    if m < 3:
        raise ValueError(f"triplet method needs at least 3 LFs, got {m}")
    if classes.prior is not None:
        balance = _resolve_prior(classes)
    elif dev is not None:
        balance = _balance_from_gold(dev[1], k)
    else:
        balance = np.full(k, 1.0 / k)

    accuracies = np.empty((k, m))
    rejected = 0
    for cls in range(k):
        coded = _ovr_coded(votes, cls)
        moments = coded.T @ coded / n
        for a in range(m):
            others = [x for x in range(m) if x != a]
            estimates = []
            for b, c in combinations(others, 2):
                try:
                    estimates.append(
                        _to_probability(_pm1_accuracy(moments, a, b, c, config.fs_moment_floor))
                    )
                except MomentBelowFloor:
                    rejected += 1
            # An LF with no usable triple gets the neutral accuracy 0.5 and
            # contributes nothing to inference.
            accuracies[cls, a] = float(np.median(estimates)) if estimates else 0.5
    return NoiseModel(
        kind="fs",
        k=k,
        prior=balance,
        accuracies=accuracies,
        diagnostics={"rejected_triples": rejected, "moment_floor": config.fs_moment_floor},
    )


def _infer_fs(model: NoiseModel, matrix: VoteMatrix) -> Posterior:
    votes = matrix.votes
    n, _ = votes.shape
    k = model.k
    acc = model.accuracies
    with np.errstate(divide="ignore"):
        log_balance = np.log(model.prior)
    log_acc = np.log(acc)
    log_miss = np.log1p(-acc)  # acc is capped below 1, so this is finite
    L = np.empty((n, k))
    voted = votes != ABSTAIN
    for cls in range(k):
        agree = (votes == cls).astype(np.float64)
        disagree = (voted & (votes != cls)).astype(np.float64)
        L[:, cls] = log_balance[cls] + agree @ log_acc[cls] + disagree @ log_miss[cls]
    mx = L.max(axis=1, keepdims=True)
    lse = mx + np.log(np.exp(L - mx).sum(axis=1, keepdims=True))
    probs = np.exp(L - lse)
    covered = voted.any(axis=1)
    return Posterior(probs=probs, hard=_hard_labels(probs, model.prior), covered=covered)


# ---------------------------------------------------------------------------
# Weighted majority vote
# ---------------------------------------------------------------------------


def _fit_wmv(
    matrix: VoteMatrix,
    classes: ClassSpace,
    dev: tuple[VoteMatrix, Sequence[int]] | None,
    config: FitConfig,
) -> NoiseModel:
    k = classes.k
    m = matrix.m
    weights = np.empty(m)
    if dev is not None:
        dev_matrix, dev_gold = dev
        gold = np.asarray(list(dev_gold), dtype=np.int64)
        if len(gold) != dev_matrix.n:
            raise ValueError(f"dev gold has {len(gold)} labels for {dev_matrix.n} rows")
        if dev_matrix.m != m:
            raise ValueError(f"dev matrix has {dev_matrix.m} LFs, train has {m}")
        for a in range(m):
            col = dev_matrix.votes[:, a]
            voted = col != ABSTAIN
            if voted.any():
                acc = float((col[voted] == gold[voted]).mean())
            else:
                acc = 0.0
            weights[a] = max(acc - 1.0 / k, 0.0) + config.wmv_min_weight
        basis = "dev_accuracy"
    elif config.wmv_fallback:
        # No dev gold: weight each LF by its agreement with the MV pseudolabel
        # over the points it voted on.
        mv_hard = _mass_posterior(matrix.votes, np.ones(m), _resolve_prior(classes), k).hard
        for a in range(m):
            col = matrix.votes[:, a]
            voted = col != ABSTAIN
            agreement = float((col[voted] == mv_hard[voted]).mean()) if voted.any() else 0.0
            weights[a] = agreement + config.wmv_min_weight
        basis = "mv_agreement"
    else:
        raise ValueError("wmv needs a dev set when the MV-agreement fallback is disabled")
    return NoiseModel(
        kind="wmv",
        k=k,
        prior=_resolve_prior(classes),
        weights=weights,
        diagnostics={"weight_basis": basis},
    )


# ---------------------------------------------------------------------------
# Public surface
# ---------------------------------------------------------------------------


def fit(
    kind: str,
    matrix: VoteMatrix,
    classes: ClassSpace,
    dev: tuple[VoteMatrix, Sequence[int]] | None = None,
    config: FitConfig | None = None,
) -> NoiseModel:
    """Fit a noise model of the given kind over a vote matrix.

    ``dev`` is an optional (vote matrix, gold labels) pair from a labeled
    split; WMV uses it for accuracy weights and FS for its class balance
    when the class space declares no prior.
    """
    config = config or FitConfig()
    matrix.validate_for(classes.k)
    if kind == "mv":
        return NoiseModel(kind="mv", k=classes.k, prior=_resolve_prior(classes))
    if kind == "wmv":
        return _fit_wmv(matrix, classes, dev, config)
    if kind == "ds":
        return _fit_ds(matrix, classes, config)
    if kind == "fs":
        return _fit_fs(matrix, classes, dev, config)
    raise ValueError(f"unknown model kind {kind!r} (choose from {MODEL_KINDS})")


def infer(model: NoiseModel, matrix: VoteMatrix) -> Posterior:
    """Per-point class posteriors and hard pseudolabels under a fitted model."""
    matrix.validate_for(model.k)
    if model.m is not None and matrix.m != model.m:
        raise ValueError(f"matrix has {matrix.m} LF columns, model expects {model.m}")
    if model.kind == "mv":
        return _mass_posterior(matrix.votes, np.ones(matrix.m), model.prior, model.k)
    if model.kind == "wmv":
        return _mass_posterior(matrix.votes, model.weights, model.prior, model.k)
    if model.kind == "ds":
        return _infer_ds(model, matrix)
    return _infer_fs(model, matrix)


def model_to_dict(model: NoiseModel) -> dict:
    doc: dict = {
        "kind": model.kind,
        "k": model.k,
        "prior": model.prior.tolist(),
        "diagnostics": model.diagnostics,
    }
    if model.weights is not None:
        doc["weights"] = model.weights.tolist()
    if model.confusion is not None:
        doc["confusion"] = model.confusion.tolist()
    if model.accuracies is not None:
        doc["accuracies"] = model.accuracies.tolist()
    return doc


def model_from_dict(doc: dict) -> NoiseModel:
    return NoiseModel(
        kind=doc["kind"],
        k=int(doc["k"]),
        prior=np.asarray(doc["prior"]),
        weights=np.asarray(doc["weights"]) if "weights" in doc else None,
        confusion=np.asarray(doc["confusion"]) if "confusion" in doc else None,
        accuracies=np.asarray(doc["accuracies"]) if "accuracies" in doc else None,
        diagnostics=doc.get("diagnostics", {}),
    )


def save_model(model: NoiseModel, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(model_to_dict(model), sort_keys=True) + "\n", encoding="utf-8"
    )


def load_model(path: str | Path) -> NoiseModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
