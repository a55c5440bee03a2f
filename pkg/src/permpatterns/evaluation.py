"""Reconstruction residuals, pairwise conditional probabilities, pattern
frequencies, and category divergence."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import BinaryMatrix, DimensionError
from .engine import boolean_product


class UndefinedDivergenceError(ValueError):
    """Raised when a pattern has no assigned applications."""


@dataclass(frozen=True)
class ErrorRates:
    """Per-application uncovered (fn) and over-implied (fp) permission counts."""

    fn_per_app: np.ndarray
    fp_per_app: np.ndarray
    mean_fn: float
    mean_fp: float
    # cumulative[t] = fraction of applications with count > t, t = 0..max
    cumulative_fn: np.ndarray
    cumulative_fp: np.ndarray


def _cumulative_gt(counts: np.ndarray) -> np.ndarray:
    n = counts.shape[0]
    top = int(counts.max()) if n else 0
    return np.array([(counts > t).sum() / n for t in range(top + 1)])


def error_rates(x: BinaryMatrix, z: BinaryMatrix, u: BinaryMatrix) -> ErrorRates:
    """fn counts x=1 entries missed by the reconstruction, fp counts x=0
    entries the assigned patterns wrongly imply."""
    recon = boolean_product(z, u)
    if recon.shape != x.shape:
        raise DimensionError(f"reconstruction {recon.shape} != x {x.shape}")
    diff = x.data.astype(np.int8) - recon.data.astype(np.int8)
    fn = (diff == 1).sum(axis=1)
    fp = (diff == -1).sum(axis=1)
    return ErrorRates(
        fn_per_app=fn,
        fp_per_app=fp,
        mean_fn=float(fn.mean()),
        mean_fp=float(fp.mean()),
        cumulative_fn=_cumulative_gt(fn),
        cumulative_fp=_cumulative_gt(fp),
    )


def write_error_curves(path, rates: ErrorRates, tag: str, append=False) -> None:
    top = max(len(rates.cumulative_fn), len(rates.cumulative_fp))
    mode = "a" if append else "w"
    with open(path, mode, newline="") as fh:
        writer = csv.writer(fh)
        if not append:
            writer.writerow(["dataset", "t", "fraction_fn_gt_t", "fraction_fp_gt_t"])
        for t in range(top):
            fn = rates.cumulative_fn[t] if t < len(rates.cumulative_fn) else 0.0
            fp = rates.cumulative_fp[t] if t < len(rates.cumulative_fp) else 0.0
            writer.writerow([tag, t, repr(float(fn)), repr(float(fp))])


def pcp_matrix(x: BinaryMatrix) -> tuple[np.ndarray, list[int]]:
    """Empirical p(s requested | t requested) for every ordered pair (s, t).

    Returns the D x D matrix plus the list of column indices whose
    permission is never requested; those columns are 0 rather than NaN so
    indices stay aligned with the vocabulary.
    """
    xf = x.data.astype(np.float64)
    col_counts = xf.sum(axis=0)
    co = xf.T @ xf  # co[s, t] = number of apps requesting both
    with np.errstate(divide="ignore", invalid="ignore"):
        pcp = co / col_counts[None, :]
    undefined = np.nonzero(col_counts == 0)[0].tolist()
    pcp[:, col_counts == 0] = 0.0
    return pcp, undefined


def average_pcp(pcp: np.ndarray, undefined: Sequence[int]) -> tuple[float, bool]:
    """Mean off-diagonal PCP over pairs with a defined conditioning column.

    The flag is True when no defined off-diagonal pair exists (the mean is
    then reported as 0).
    """
    d = pcp.shape[0]
    defined = np.ones(d, dtype=bool)
    defined[list(undefined)] = False
    mask = np.ones((d, d), dtype=bool)
    np.fill_diagonal(mask, False)
    mask &= defined[None, :]
    if not mask.any():
        return 0.0, True
    return float(pcp[mask].mean()), False


def pattern_frequencies(z: BinaryMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Fraction of applications assigned each pattern, sorted descending.

    Returns (frequencies, permutation) where permutation[j] is the original
    pattern index in sorted position j.  Patterns overlap, so the fractions
    need not sum to 1.
    """
    freq = z.data.mean(axis=0)
    order = np.lexsort((np.arange(freq.shape[0]), -freq))
    return freq[order], order


def category_divergence(z: BinaryMatrix, categories: Sequence[str],
                        k: int, smoothing: float = 0.5) -> float:
    """KL(p_global || p_pattern) in bits between category distributions.

    Both empirical distributions get add-``smoothing`` counts before
    normalization; without it the divergence is infinite whenever the
    pattern misses a category.
    """
    if len(categories) != z.rows:
        raise DimensionError(f"{len(categories)} categories for {z.rows} rows")
    if not 0 <= k < z.cols:
        raise IndexError(f"pattern index {k} out of range for K={z.cols}")
    members = z.data[:, k].astype(bool)
    if not members.any():
        raise UndefinedDivergenceError(f"pattern {k} has no assigned applications")
    cats = sorted(set(categories))
    idx = {c: i for i, c in enumerate(cats)}
    global_counts = np.zeros(len(cats))
    pattern_counts = np.zeros(len(cats))
    for label, is_member in zip(categories, members):
        global_counts[idx[label]] += 1
        if is_member:
            pattern_counts[idx[label]] += 1
    p_g = (global_counts + smoothing) / (global_counts + smoothing).sum()
    p_k = (pattern_counts + smoothing) / (pattern_counts + smoothing).sum()
    return float(np.sum(p_g * np.log2(p_g / p_k)))


@dataclass(frozen=True)
class EvaluationReport:
    """Bundle of the dataset-level evaluation quantities."""

    train: ErrorRates
    test_high: ErrorRates | None
    test_low: ErrorRates | None
    pcp: np.ndarray
    pcp_undefined: tuple[int, ...]
    pattern_freq: np.ndarray
    pattern_order: np.ndarray
    kl_bits: tuple[float, ...]   # NaN where undefined

    def to_json_dict(self) -> dict:
        out = {
            "mean_fn_train": self.train.mean_fn,
            "mean_fp_train": self.train.mean_fp,
            "pattern_frequencies": self.pattern_freq.tolist(),
            "pattern_order": self.pattern_order.tolist(),
            "kl_bits": [None if np.isnan(v) else v for v in self.kl_bits],
            "pcp_undefined_columns": list(self.pcp_undefined),
        }
        if self.test_high is not None:
            out["mean_fn_test_high"] = self.test_high.mean_fn
            out["mean_fp_test_high"] = self.test_high.mean_fp
        if self.test_low is not None:
            out["mean_fn_test_low"] = self.test_low.mean_fn
            out["mean_fp_test_low"] = self.test_low.mean_fp
        return out

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)


def write_pcp_csv(path, pcp: np.ndarray, permission_names: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["permission"] + list(permission_names))
        for s, name in enumerate(permission_names):
            writer.writerow([name] + [repr(float(v)) for v in pcp[s]])


def write_pattern_summary(path, u: BinaryMatrix, freq: np.ndarray,
                          order: np.ndarray, kl_bits: Sequence[float],
                          permission_names: Sequence[str]) -> None:
    """Table-5-style summary: one row per pattern, most frequent first."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pattern", "frequency", "kl_bits", "permissions"])
        for pos, orig in enumerate(order):
            members = [permission_names[d] for d in np.nonzero(u.data[orig])[0]]
            kl = kl_bits[orig]
            writer.writerow([
                pos + 1,
                repr(float(freq[pos])),
                "" if np.isnan(kl) else repr(float(kl)),
                ";".join(members),
            ])
