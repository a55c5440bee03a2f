"""Synthetic data: independent-request null models and planted factorizations."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import BinaryMatrix, DimensionError
from .engine import boolean_product

UNDERFLOW_THRESHOLD = 0.001
DEFAULT_BINS = 20


def marginal_probs(x: BinaryMatrix) -> np.ndarray:
    """Empirical per-permission request probability (column means)."""
    if x.rows < 1:
        raise DimensionError("need at least one row")
    return x.data.mean(axis=0)


def simulate_independent(p: np.ndarray, n: int, seed: int) -> BinaryMatrix:
    """N hypothetical applications requesting each permission d independently
    with probability p[d]."""
    p = np.asarray(p, dtype=float)
    if p.size and (p.min() < 0 or p.max() > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    return BinaryMatrix((rng.random((n, p.shape[0])) < p[None, :]).astype(np.uint8))


def plant_factorization(n: int, d: int, k: int, pattern_density: float,
                        assign_density: float, epsilon: float, r: float,
                        seed: int) -> tuple[BinaryMatrix, BinaryMatrix, BinaryMatrix]:
    """Draw (x, z_true, u_true) from the generative story behind the model.

    Noise entries are resampled from Bernoulli(r) with probability epsilon,
    not XOR-flipped, matching the mixture's generative reading.
    """
    for name, v in [("pattern_density", pattern_density),
                    ("assign_density", assign_density),
                    ("epsilon", epsilon), ("r", r)]:
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    u_true = BinaryMatrix((rng.random((k, d)) < pattern_density).astype(np.uint8))
    z_true = BinaryMatrix((rng.random((n, k)) < assign_density).astype(np.uint8))
    clean = boolean_product(z_true, u_true).data
    noisy_mask = rng.random((n, d)) < epsilon
    noise_values = (rng.random((n, d)) < r).astype(np.uint8)
    x = np.where(noisy_mask, noise_values, clean).astype(np.uint8)
    return BinaryMatrix(x), z_true, u_true


@dataclass(frozen=True)
class PcpHistogram:
    """Log-binned counts of PCP values for a real/simulated dataset pair."""

    bin_centers: np.ndarray
    counts_real: np.ndarray
    counts_sim: np.ndarray
    underflow_threshold: float = UNDERFLOW_THRESHOLD

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_center", "count_real", "count_sim"])
            for center, cr, cs in zip(self.bin_centers, self.counts_real,
                                      self.counts_sim):
                writer.writerow([repr(float(center)), int(cr), int(cs)])


def _bin_counts(pcp: np.ndarray, edges: np.ndarray) -> np.ndarray:
    d = pcp.shape[0]
    off_diag = ~np.eye(d, dtype=bool)
    vals = pcp[off_diag]
    counts, _ = np.histogram(np.clip(vals, edges[0], 1.0), bins=edges)
    # everything below the threshold was clipped into the lowest bin
    return counts


def pcp_histogram(pcp_real: np.ndarray, pcp_sim: np.ndarray,
                  bins: int = DEFAULT_BINS) -> PcpHistogram:
    """Histogram both PCP matrices over log-spaced bins on [0.001, 1];
    pairs below 0.001 accumulate in the lowest bin."""
    pcp_real = np.asarray(pcp_real, dtype=float)
    pcp_sim = np.asarray(pcp_sim, dtype=float)
    if pcp_real.shape != pcp_sim.shape:
        raise DimensionError(
            f"shape mismatch: {pcp_real.shape} vs {pcp_sim.shape}")
    edges = np.logspace(np.log10(UNDERFLOW_THRESHOLD), 0.0, bins + 1)
    centers = np.sqrt(edges[:-1] * edges[1:])
    return PcpHistogram(
        bin_centers=centers,
        counts_real=_bin_counts(pcp_real, edges),
        counts_sim=_bin_counts(pcp_sim, edges),
    )
