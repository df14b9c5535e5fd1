"""Predictor-corrector policies that decide, step by step, whether an LSP must be re-solved.

``hpc`` compares a read-out histogram of the new solution with the last known
solution through a chi-squared test; ``qpc`` thresholds the sampled ancilla
statistic of a swap test between the two states.  ``fcs`` always solves, and
``random_skip``/``periodic_skip`` are the non-adaptive baselines.  Any policy
can be wrapped by :class:`StagedPolicy`, which applies each decision one step
late as an asynchronous co-processor would.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .linsys import Lsp, oracle_solve
from .qemu import (
    Histogram,
    ReadoutDistribution,
    distribution_from_solution,
    sample_ancilla,
    sample_readout,
    swap_test_probability,
)
from .rng import make_rng

MODES = ("fcs", "hpc", "qpc", "random_skip", "periodic_skip")
SKIP, UPDATE = "skip", "update"


class DegenerateTestError(ValueError):
    pass


@dataclass(frozen=True)
class PcConfig:
    mode: str = "fcs"
    async_staged: bool = False
    sample_count: int = 385
    p_value_threshold: float = 0.05
    overlap_threshold: float = 0.98
    skip_rate: float = 0.0
    seed: int = 0
    # periodic_skip only: offset of the update pattern, in units of one period
    phase: float = 0.0
    # vectors with a smaller 2-norm are treated as the zero solution
    zero_atol: float = 1e-12
    # adaptive modes only: force an update when the right-hand-side norm has drifted by
    # more than this fraction since the last update (None disables the check)
    rhs_norm_tolerance: Optional[float] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown predictor-corrector mode {self.mode!r}")
        if self.mode in ("hpc", "qpc") and self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")
        if self.mode == "hpc" and not 0.0 < self.p_value_threshold < 1.0:
            raise ValueError("p_value_threshold must lie in (0, 1)")
        if self.mode == "qpc" and not 0.0 < self.overlap_threshold <= 1.0:
            raise ValueError("overlap_threshold must lie in (0, 1]")
        if self.mode in ("random_skip", "periodic_skip") and not 0.0 <= self.skip_rate < 1.0:
            raise ValueError("skip_rate must lie in [0, 1)")
        if not 0.0 <= self.phase < 1.0:
            raise ValueError("phase must lie in [0, 1)")
        if self.rhs_norm_tolerance is not None and self.rhs_norm_tolerance <= 0:
            raise ValueError("rhs_norm_tolerance must be positive")


@dataclass(frozen=True)
class PcDecision:
    action: str
    step_index: int
    samples_spent: int = 0
    p_value: Optional[float] = None
    p0_estimate: Optional[float] = None

    @property
    def skip(self) -> bool:
        return self.action == SKIP


@dataclass(frozen=True)
class ChiSquaredResult:
    statistic: float
    dof: int
    p_value: float
    pooled_bins: int


@dataclass
class SkipLedger:
    decisions: list[PcDecision] = field(default_factory=list)
    last_update_step: int = -1
    skips: int = 0
    updates: int = 0
    samples_spent: int = 0
    # classical CG iterations charged to each step (0 on skips)
    solve_iterations: list[int] = field(default_factory=list)

    def record(self, decision: PcDecision, solve_iterations: int = 0) -> None:
        self.decisions.append(decision)
        self.solve_iterations.append(int(solve_iterations))
        self.samples_spent += decision.samples_spent
        if decision.skip:
            self.skips += 1
        else:
            self.updates += 1
            self.last_update_step = decision.step_index

    @property
    def total_steps(self) -> int:
        return len(self.decisions)

    @property
    def skip_fraction(self) -> float:
        return self.skips / self.total_steps if self.decisions else 0.0

    def actions(self) -> list[str]:
        return [d.action for d in self.decisions]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "action", "p_value", "p0_estimate", "samples_spent"])
            for d in self.decisions:
                w.writerow([d.step_index, d.action, _fmt(d.p_value), _fmt(d.p0_estimate), d.samples_spent])


def _fmt(v: Optional[float]) -> str:
    return "" if v is None else repr(float(v))


def ledger_run_lengths(ledger: SkipLedger | list[str]) -> tuple[list[int], int]:
    """Consecutive skips before each update after the first, plus the trailing skip count."""
    actions = ledger.actions() if isinstance(ledger, SkipLedger) else list(ledger)
    runs: list[int] = []
    seen_update = False
    current = 0
    for a in actions:
        if a == UPDATE:
            if seen_update:
                runs.append(current)
            seen_update = True
            current = 0
        else:
            current += 1
    return runs, (current if seen_update else len(actions))


# ---------------------------------------------------------------- statistics

_EPS = 1e-16
_FPMIN = 1e-300


def regularized_gamma_q(s: float, x: float) -> float:
    """Upper regularized incomplete gamma Q(s, x) = Gamma(s, x) / Gamma(s)."""
    if not s > 0 or not x >= 0 or math.isinf(s):
        raise ValueError(f"regularized_gamma_q domain error: s={s}, x={x}")
    if x == 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    log_pref = -x + s * math.log(x) - math.lgamma(s)
    if x < s + 1.0:
        # series for P(s, x)
        ap = s
        term = total = 1.0 / s
        for _ in range(100000):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * _EPS:
                break
        return min(1.0, max(0.0, 1.0 - total * math.exp(log_pref)))
    # modified Lentz continued fraction for Q(s, x)
    b = x + 1.0 - s
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, 100000):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return min(1.0, max(0.0, math.exp(log_pref) * h))


def pool_bins(expected: np.ndarray, min_expected: float = 5.0) -> np.ndarray:
    """Group label per bin.

    Bins with expected count >= ``min_expected`` keep their own group.  The
    remaining bins are merged, in index order, into aggregate groups that each
    reach ``min_expected``; a short remainder joins the last aggregate group
    (or forms the single aggregate group if there is no other).  Aggregate
    groups are numbered after the retained bins.
    """
    expected = np.asarray(expected, dtype=np.float64)
    labels = np.empty(expected.size, dtype=np.int64)
    keep = expected >= min_expected
    n_keep = int(keep.sum())
    labels[keep] = np.arange(n_keep)
    low = np.flatnonzero(~keep)
    if low.size:
        group = n_keep
        acc = 0.0
        low_labels = np.empty(low.size, dtype=np.int64)
        for k, idx in enumerate(low):
            low_labels[k] = group
            acc += expected[idx]
            if acc >= min_expected:
                group += 1
                acc = 0.0
        if group > n_keep and low_labels[-1] == group:
            low_labels[low_labels == group] = group - 1
        labels[low] = low_labels
    return labels


def chi_squared_test(observed: Histogram, expected_probs: ReadoutDistribution,
                     min_expected: float = 5.0) -> ChiSquaredResult:
    counts = np.asarray(observed.counts, dtype=np.float64)
    if expected_probs.is_zero:
        raise DegenerateTestError("expected distribution is the zero sentinel")
    p = expected_probs.probabilities
    if counts.shape != p.shape:
        raise ValueError("histogram and distribution dimensions differ")
    n = observed.total
    if n < 1:
        raise ValueError("empty histogram")
    e = n * p
    labels = pool_bins(e, min_expected)
    k = int(labels.max()) + 1 if labels.size else 0
    e_g = np.bincount(labels, weights=e, minlength=k)
    o_g = np.bincount(labels, weights=counts, minlength=k)
    live = (e_g > 0) | (o_g > 0)
    e_g, o_g = e_g[live], o_g[live]
    if e_g.size < 2:
        raise DegenerateTestError("fewer than two bins left after pooling")
    dof = int(e_g.size - 1)
    pooled = int(np.count_nonzero(e < min_expected))
    if np.any(e_g == 0):
        # mass observed where none is expected
        return ChiSquaredResult(math.inf, dof, 0.0, pooled)
    stat = float(np.sum((o_g - e_g) ** 2 / e_g))
    return ChiSquaredResult(stat, dof, regularized_gamma_q(dof / 2.0, stat / 2.0), pooled)


# ---------------------------------------------------------------- deciders

def _zero_rule(last_known: np.ndarray, candidate: np.ndarray, zero_atol: float) -> Optional[str]:
    lz = float(np.linalg.norm(last_known)) <= zero_atol
    cz = float(np.linalg.norm(candidate)) <= zero_atol
    if lz and cz:
        return SKIP
    if lz or cz:
        return UPDATE
    return None


def hpc_decide(last_known, candidate: Lsp, cfg: PcConfig, rng, step: int = 0) -> PcDecision:
    rng = make_rng(rng)
    x_new = oracle_solve(candidate)
    rule = _zero_rule(last_known, x_new, cfg.zero_atol)
    if rule is not None:
        return PcDecision(rule, step)
    hist = sample_readout(distribution_from_solution(x_new), cfg.sample_count, rng)
    try:
        res = chi_squared_test(hist, distribution_from_solution(last_known))
    except DegenerateTestError:
        return PcDecision(UPDATE, step, cfg.sample_count)
    action = SKIP if res.p_value >= cfg.p_value_threshold else UPDATE
    return PcDecision(action, step, cfg.sample_count, p_value=res.p_value)


def qpc_decide(last_known, candidate: Lsp, cfg: PcConfig, rng, step: int = 0) -> PcDecision:
    rng = make_rng(rng)
    x_new = oracle_solve(candidate)
    rule = _zero_rule(last_known, x_new, cfg.zero_atol)
    if rule is not None:
        return PcDecision(rule, step)
    st = sample_ancilla(swap_test_probability(last_known, x_new), cfg.sample_count, rng)
    cutoff = 0.5 + 0.5 * cfg.overlap_threshold
    action = SKIP if st.estimate_p0 >= cutoff else UPDATE
    return PcDecision(action, step, cfg.sample_count, p0_estimate=st.estimate_p0)


def periodic_is_update(step: int, skip_rate: float, phase: float = 0.0) -> bool:
    """Evenly spread updates: exactly ceil(T (1 - skip_rate)) of the first T steps when phase = 0."""
    r = 1.0 - skip_rate
    return math.ceil(round((step + 1) * r + phase, 9)) > math.ceil(round(step * r + phase, 9))


def baseline_decide(mode: str, step: int, cfg: PcConfig, rng) -> PcDecision:
    if mode == "fcs":
        return PcDecision(UPDATE, step)
    if mode == "random_skip":
        rng = make_rng(rng)
        return PcDecision(SKIP if rng.random() < cfg.skip_rate else UPDATE, step)
    if mode == "periodic_skip":
        return PcDecision(UPDATE if periodic_is_update(step, cfg.skip_rate, cfg.phase) else SKIP, step)
    raise ValueError(f"{mode!r} is not a baseline mode")


class Policy:
    """Stateful wrapper owning the RNG stream of one simulation instance.

    ``decide`` receives the last known (last solved) solution, ``None`` before
    the first solve, and the candidate LSP of the current step.  Adaptive
    policies read the candidate only through the emulated read-out.
    """

    def __init__(self, cfg: PcConfig, rng=None):
        self.cfg = cfg
        self.rng = make_rng(cfg.seed if rng is None else rng)
        self.inner_calls = 0
        self._rhs_ref: Optional[np.ndarray] = None

    @property
    def needs_oracle(self) -> bool:
        return self.cfg.mode in ("hpc", "qpc")

    def decide(self, step: int, last_known: Optional[np.ndarray], candidate: Optional[Lsp]) -> PcDecision:
        self.inner_calls += 1
        d = self._decide(step, last_known, candidate)
        if not d.skip and candidate is not None:
            self._rhs_ref = candidate.rhs.copy()
        return d

    def _rhs_drifted(self, candidate: Lsp) -> bool:
        """Amplitude of the new right-hand side along the one of the last update, minus one.

        A swap test only sees |<x|y>|, so a pure rescaling or sign flip of the
        solution is invisible to it; this O(n) classical check catches both.
        """
        tol = self.cfg.rhs_norm_tolerance
        if tol is None:
            return False
        if self._rhs_ref is None:
            return True
        ref = self._rhs_ref
        rr = float(ref @ ref)
        if math.sqrt(rr) <= self.cfg.zero_atol:
            return float(np.linalg.norm(candidate.rhs)) > self.cfg.zero_atol
        return abs(float(candidate.rhs @ ref) / rr - 1.0) > tol

    def _decide(self, step: int, last_known: Optional[np.ndarray], candidate: Optional[Lsp]) -> PcDecision:
        mode = self.cfg.mode
        if mode in ("hpc", "qpc"):
            if last_known is None or self._rhs_drifted(candidate):
                return PcDecision(UPDATE, step)
        if mode == "hpc":
            return hpc_decide(last_known, candidate, self.cfg, self.rng, step)
        if mode == "qpc":
            return qpc_decide(last_known, candidate, self.cfg, self.rng, step)
        return baseline_decide(mode, step, self.cfg, self.rng)


class StagedPolicy:
    """Apply at step n the decision the inner policy reached on step n-1's data."""

    def __init__(self, inner: Policy):
        self.inner = inner
        self.cfg = inner.cfg
        self._pending: Optional[tuple[int, Optional[np.ndarray], Optional[Lsp]]] = None

    @property
    def needs_oracle(self) -> bool:
        return self.inner.needs_oracle

    @property
    def inner_calls(self) -> int:
        return self.inner.inner_calls

    def decide(self, step: int, last_known: Optional[np.ndarray], candidate: Optional[Lsp]) -> PcDecision:
        pending, self._pending = self._pending, (step, last_known, candidate)
        if pending is None:
            return PcDecision(UPDATE, step)
        prev_step, prev_known, prev_candidate = pending
        d = self.inner.decide(prev_step, prev_known, prev_candidate)
        return replace(d, step_index=step)


def staged_decide(staged: StagedPolicy, step: int, last_known: Optional[np.ndarray],
                  candidate: Optional[Lsp]) -> PcDecision:
    return staged.decide(step, last_known, candidate)


def make_policy(cfg: PcConfig, rng=None) -> Policy | StagedPolicy:
    pol = Policy(cfg, rng)
    return StagedPolicy(pol) if cfg.async_staged else pol
