"""Binary matrices and the containers shared by the mining pipeline."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class DimensionError(ValueError):
    """Raised when matrix shapes or label lengths do not line up."""


class ConfigError(ValueError):
    """Raised for invalid fitting or pipeline configuration."""


@dataclass(frozen=True)
class BinaryMatrix:
    """Immutable dense 0/1 matrix with optional row/column labels.

    The underlying array is stored as read-only uint8; all pipeline stages
    share BinaryMatrix instances freely across threads.
    """

    data: np.ndarray
    row_labels: Optional[tuple] = None
    col_labels: Optional[tuple] = None

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise DimensionError(f"expected a 2-d array, got ndim={arr.ndim}")
        if arr.size and not np.isin(arr, (0, 1)).all():
            raise ValueError("matrix entries must be exactly 0 or 1")
        arr = np.ascontiguousarray(arr, dtype=np.uint8)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        if self.row_labels is not None:
            object.__setattr__(self, "row_labels", tuple(self.row_labels))
            if len(self.row_labels) != arr.shape[0]:
                raise DimensionError(
                    f"{len(self.row_labels)} row labels for {arr.shape[0]} rows"
                )
        if self.col_labels is not None:
            object.__setattr__(self, "col_labels", tuple(self.col_labels))
            if len(self.col_labels) != arr.shape[1]:
                raise DimensionError(
                    f"{len(self.col_labels)} col labels for {arr.shape[1]} cols"
                )

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def row(self, i: int) -> np.ndarray:
        return self.data[i]

    def __getitem__(self, idx):
        return self.data[idx]

    def __eq__(self, other):
        if not isinstance(other, BinaryMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.data, other.data)
            and self.row_labels == other.row_labels
            and self.col_labels == other.col_labels
        )

    def __hash__(self):
        return hash((self.shape, self.data.tobytes()))


def matrix_from_rows(rows: Sequence[Sequence[int]],
                     row_labels=None, col_labels=None) -> BinaryMatrix:
    """Build a BinaryMatrix from an iterable of equal-length 0/1 vectors."""
    rows = list(rows)
    if not rows:
        raise DimensionError("at least one row is required")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise DimensionError(f"row {i} has length {len(r)}, expected {width}")
    return BinaryMatrix(np.asarray(rows), row_labels=row_labels, col_labels=col_labels)


def hamming_distance(a: BinaryMatrix, b: BinaryMatrix) -> int:
    """Number of positions where two equally-shaped binary matrices differ."""
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a.data != b.data))


@dataclass(frozen=True)
class FitConfig:
    """Annealing schedule and convergence knobs for the EM fitter.

    Temperature starts at ``initial_temperature`` and is multiplied by
    ``cooling_factor`` after each inner convergence, stopping once it drops
    to ``final_temperature`` or below.
    """

    initial_temperature: float = 2.0
    cooling_factor: float = 0.95
    final_temperature: float = 0.05
    tolerance: float = 1e-5
    max_inner_iterations: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.initial_temperature <= 0 or self.final_temperature <= 0:
            raise ConfigError("temperatures must be positive")
        if self.final_temperature >= self.initial_temperature:
            raise ConfigError("final temperature must be below the initial one")
        if not 0.0 < self.cooling_factor < 1.0:
            raise ConfigError("cooling factor must lie in (0, 1)")
        if self.tolerance <= 0:
            raise ConfigError("tolerance must be positive")
        if self.max_inner_iterations < 1:
            raise ConfigError("max inner iterations must be >= 1")


@dataclass(frozen=True)
class Factorization:
    """Result of fitting: Boolean factors plus the continuous mixture parameters.

    ``u`` holds one pattern per row (K x D), ``z`` the per-application pattern
    assignments (N x K).  ``beta[k, d]`` is the probability that pattern k does
    *not* contain permission d; ``u`` is its binarization.
    """

    z: BinaryMatrix
    u: BinaryMatrix
    beta: np.ndarray
    r: float
    epsilon: float
    log_likelihood: float = float("nan")
    seed: int = 0

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        if beta.shape != self.u.shape:
            raise DimensionError(f"beta shape {beta.shape} != u shape {self.u.shape}")
        if self.z.cols != self.u.rows:
            raise DimensionError(
                f"z has {self.z.cols} patterns but u has {self.u.rows}"
            )
        if beta.size and (beta.min() < 0 or beta.max() > 1):
            raise ValueError("beta entries must lie in [0, 1]")
        if not (0.0 <= self.r <= 1.0 and 0.0 <= self.epsilon <= 1.0):
            raise ValueError("r and epsilon must lie in [0, 1]")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)

    @property
    def K(self) -> int:
        return self.u.rows

    def to_json_dict(self) -> dict:
        """Serializable summary; pattern rows are ordered by the fitter."""
        return {
            "K": self.K,
            "u": self.u.data.astype(int).tolist(),
            "z_counts": self.z.data.sum(axis=0).astype(int).tolist(),
            "beta": np.round(self.beta, 12).tolist(),
            "r": self.r,
            "epsilon": self.epsilon,
            "log_likelihood": self.log_likelihood,
            "seed": self.seed,
        }
