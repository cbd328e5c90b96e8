"""Vote matrices: the n-by-m table of labeling-function outputs.

Entry conventions: ``ABSTAIN`` (-1) means the LF offered no opinion; any
other value is a class index in ``[0, k)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ABSTAIN = -1


@dataclass(frozen=True)
class VoteMatrix:
    """Outputs of m labeling functions over n data points.

    ``votes[i, a]`` is the vote of LF ``a`` on point ``i``.
    """

    votes: np.ndarray
    lf_names: tuple[str, ...]

    def __post_init__(self) -> None:
        arr = np.asarray(self.votes, dtype=np.int64)
        if arr.ndim != 2:
            raise ValueError(f"vote matrix must be 2-dimensional, got shape {arr.shape}")
        object.__setattr__(self, "votes", arr)
        object.__setattr__(self, "lf_names", tuple(self.lf_names))
        if len(self.lf_names) != arr.shape[1]:
            raise ValueError(
                f"{len(self.lf_names)} LF names for {arr.shape[1]} matrix columns"
            )
        if len(set(self.lf_names)) != len(self.lf_names):
            raise ValueError("LF names must be unique")
        if arr.size and arr.min() < ABSTAIN:
            raise ValueError("votes below -1 are not valid")

    @property
    def n(self) -> int:
        return self.votes.shape[0]

    @property
    def m(self) -> int:
        return self.votes.shape[1]

    def validate_for(self, k: int) -> None:
        """Check every entry is ABSTAIN or a class index below ``k``."""
        if self.votes.size and self.votes.max(initial=ABSTAIN) >= k:
            bad = int(self.votes.max())
            raise ValueError(f"vote {bad} out of range for k={k}")

    def column(self, name: str) -> np.ndarray:
        return self.votes[:, self.lf_names.index(name)]

    def select(self, indices: list[int]) -> "VoteMatrix":
        """Column subset/permutation, preserving the given order."""
        return VoteMatrix(self.votes[:, indices], tuple(self.lf_names[a] for a in indices))


def hstack(left: VoteMatrix, right: VoteMatrix) -> VoteMatrix:
    """Concatenate two vote matrices over the same points, left columns first."""
    if left.n != right.n:
        raise ValueError(f"row mismatch: {left.n} vs {right.n}")
    return VoteMatrix(
        np.hstack([left.votes, right.votes]), left.lf_names + right.lf_names
    )


def save_vote_matrix(matrix: VoteMatrix, path: str | Path) -> None:
    """Persist as a JSON header line followed by n rows of space-separated ints."""
    p = Path(path)
    header = {"n": matrix.n, "m": matrix.m, "lf_names": list(matrix.lf_names)}
    with p.open("w", encoding="utf-8") as f:
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for row in matrix.votes:
            f.write(" ".join(str(int(v)) for v in row) + "\n")


def load_vote_matrix(path: str | Path) -> VoteMatrix:
    p = Path(path)
    with p.open("r", encoding="utf-8") as f:
        header_line = f.readline()
        if not header_line.strip():
            raise ValueError(f"{p}: missing vote-matrix header")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as e:
            raise ValueError(f"{p}:1 invalid header: {e.msg}") from e
        n, m = int(header["n"]), int(header["m"])
        votes = np.empty((n, m), dtype=np.int64)
        for i in range(n):
            line = f.readline()
            if line == "":
                raise ValueError(f"{p}: expected {n} rows, file ended at row {i}")
            parts = line.split()
            if len(parts) != m:
                raise ValueError(f"{p}:{i + 2} expected {m} votes, got {len(parts)}")
            votes[i] = [int(v) for v in parts]
    return VoteMatrix(votes, tuple(header["lf_names"]))
