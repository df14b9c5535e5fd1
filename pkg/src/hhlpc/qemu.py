"""Emulated HHL read-out.

The solution vector of an LSP is obtained classically and then only ever
exposed through measurement statistics: categorical samples over basis states
(squared amplitudes) or Bernoulli samples of a swap-test ancilla.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linsys import Lsp
from .rng import make_rng


class ReadoutError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ReadoutDistribution:
    """p_i = x_i^2 / ||x||^2.  ``probabilities`` is None for the zero solution."""

    probabilities: Optional[np.ndarray]
    norm: float
    source_dim: int

    @property
    def is_zero(self) -> bool:
        return self.probabilities is None


@dataclass(frozen=True, eq=False)
class Histogram:
    counts: np.ndarray
    total: int
    seed: Optional[int] = None


@dataclass(frozen=True)
class SwapTestResult:
    true_overlap: float
    p0: float
    estimate_p0: Optional[float] = None
    samples: int = 0


def sign_split(lsp: Lsp) -> tuple[Lsp, Lsp]:
    """Split b into its negative part (first system) and positive part (second)."""
    b = lsp.rhs
    neg = np.where(b < 0, b, 0.0)
    pos = np.where(b > 0, b, 0.0)
    return (Lsp(lsp.matrix, neg, shift=lsp.shift), Lsp(lsp.matrix, pos, shift=lsp.shift))


def distribution_from_solution(x, zero_atol: float = 0.0) -> ReadoutDistribution:
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ReadoutError("solution vector contains non-finite entries")
    sq = x * x
    total = float(sq.sum())
    norm = math.sqrt(total)
    if total == 0.0 or norm <= zero_atol:
        return ReadoutDistribution(None, 0.0, x.size)
    return ReadoutDistribution(sq / total, norm, x.size)


def sample_readout(dist: ReadoutDistribution, n: int, seed) -> Histogram:
    """n independent basis-state measurements of the emulated HHL output."""
    if dist.is_zero:
        raise ReadoutError("cannot sample the zero-solution sentinel")
    if n < 1:
        raise ReadoutError("need at least one sample")
    rng = make_rng(seed)
    counts = rng.multinomial(int(n), dist.probabilities)
    return Histogram(counts, int(n), seed if isinstance(seed, (int, np.integer)) else None)


def overlap(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0 or ny == 0:
        raise ReadoutError("overlap undefined for a zero vector")
    return float(min(1.0, abs(x @ y) / (nx * ny)))


def swap_test_probability(x, y) -> SwapTestResult:
    """Ancilla-zero probability of a swap test on the normalised states x and y."""
    if np.shape(x) != np.shape(y):
        raise ReadoutError("swap test needs vectors of equal length")
    ov = overlap(x, y)
    return SwapTestResult(ov, 0.5 + 0.5 * ov)


def sample_ancilla(result: SwapTestResult, n: int, seed) -> SwapTestResult:
    if n < 1:
        raise ReadoutError("need at least one ancilla shot")
    rng = make_rng(seed)
    hits = int(rng.binomial(int(n), result.p0))
    return SwapTestResult(result.true_overlap, result.p0, hits / n, int(n))


def required_samples(z: float, p: float, e: float) -> int:
    """Shots for margin of error e at Z-score z: ceil(z^2 p (1-p) / e^2)."""
    if e <= 0:
        raise ValueError("margin of error must be positive")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    raw = z * z * p * (1.0 - p) / (e * e)
    # absorb float noise so exact integers are not bumped up by one
    return int(math.ceil(round(raw, 9)))


def reconstruct_from_counts(counts: np.ndarray, signs: np.ndarray) -> np.ndarray:
    """Normalised vector estimate sign_i * sqrt(c_i / m) from a read-out histogram."""
    counts = np.asarray(counts, dtype=np.float64)
    return np.sign(signs) * np.sqrt(counts / counts.sum())


def sample_sequence(dist: ReadoutDistribution, n: int, seed) -> np.ndarray:
    """Basis-state indices of n successive measurements, in order.

    Any prefix of the sequence is itself a valid read-out, so sample-count
    searches can grow m without redrawing.
    """
    if dist.is_zero:
        raise ReadoutError("cannot sample the zero-solution sentinel")
    if n < 1:
        raise ReadoutError("need at least one sample")
    rng = make_rng(seed)
    cdf = np.cumsum(dist.probabilities)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(int(n)), side="right")
    return np.minimum(idx, dist.source_dim - 1)
