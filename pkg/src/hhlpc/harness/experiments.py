"""Multi-run drivers: the sample-scaling study and the H-PC parameter sweep."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .. import cases
from ..isph.solver import isph_step
from ..pcore import DegenerateTestError, PcConfig, chi_squared_test, make_policy
from ..qemu import (
    Histogram,
    distribution_from_solution,
    reconstruct_from_counts,
    required_samples,
    sample_sequence,
)
from ..rng import derive_seed
from .config import ExperimentConfig
from .runner import RunResult, reference_run, run_simulation, tgv_spec


# ------------------------------------------------------------ sample scaling

class SampleStream:
    """Lazily extended measurement record; counts of any prefix are a valid histogram."""

    def __init__(self, x: np.ndarray, seed: int):
        self.dist = distribution_from_solution(x)
        self.seed = seed
        self._seq = np.empty(0, dtype=np.int64)
        self._draws = 0

    def counts(self, m: int) -> np.ndarray:
        if len(self._seq) < m:
            n = max(m - len(self._seq), len(self._seq), 64)
            chunk = sample_sequence(self.dist, n, derive_seed(self.seed, self._draws))
            self._draws += 1
            self._seq = np.concatenate([self._seq, chunk])
        return np.bincount(self._seq[:m], minlength=self.dist.source_dim)


def smallest_passing(pred: Callable[[int], bool], max_m: int) -> Optional[int]:
    """Doubling until ``pred`` holds, then bisection; None if max_m is reached first."""
    m = 1
    while not pred(m):
        if m >= max_m:
            return None
        m = min(2 * m, max_m)
    lo, hi = m // 2, m
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


def dfs_samples(x: np.ndarray, seed: int, max_error: float, max_m: int) -> Optional[int]:
    """Samples needed before the read-out reconstruction of x/|x| is within max_error (L2)."""
    target = x / np.linalg.norm(x)
    stream = SampleStream(x, seed)

    def ok(m: int) -> bool:
        est = reconstruct_from_counts(stream.counts(m), x)
        return float(np.linalg.norm(est - target)) <= max_error

    return smallest_passing(ok, max_m)


def hpc_samples(x_old: np.ndarray, x_new: np.ndarray, seed: int, threshold: float,
                max_m: int) -> Optional[int]:
    """Samples of x_new needed for the chi-squared test against x_old to reject at ``threshold``."""
    expected = distribution_from_solution(x_old)
    stream = SampleStream(x_new, seed)

    def detects(m: int) -> bool:
        try:
            res = chi_squared_test(Histogram(stream.counts(m), m), expected)
        except DegenerateTestError:
            return False
        return res.p_value < threshold

    return smallest_passing(detects, max_m)


def tgv_solution_pair(cfg: ExperimentConfig, n_side: int, start: int, gap: int) -> tuple[np.ndarray, np.ndarray]:
    """Pressure solutions of a full-solve vortex run at steps ``start`` and ``start + gap``."""
    res = dict(cfg.resolution)
    res["n_side"] = n_side
    spec, overrides = tgv_spec(replace(cfg, resolution=res))
    s = cases.tgv_init(spec, **overrides)
    policy = make_policy(PcConfig("fcs"))
    picked = {}
    for k in range(start + gap + 1):
        s, _ = isph_step(s, policy)
        if k in (start, start + gap):
            picked[k] = s.last_solution.copy()
    return picked[start], picked[start + gap]


def loglog_slope(n: list[float], m: list[float]) -> float:
    if len(n) < 2:
        return math.nan
    return float(np.polyfit(np.log(n), np.log(m), 1)[0])


@dataclass
class ScalingResult:
    rows: list = field(default_factory=list)       # n_side, N, samples_dfs, samples_hpc, samples_qpc
    failures: list = field(default_factory=list)   # (n_side, column, reason)
    slopes: dict = field(default_factory=dict)

    header = ["n_side", "N", "samples_dfs", "samples_hpc", "samples_qpc"]


def scaling_experiment(cfg: ExperimentConfig) -> ScalingResult:
    sc = cfg.scaling
    out = ScalingResult()
    qpc_m = required_samples(sc["z"], 0.5, sc["margin"])
    for n_side in sc["n_sides"]:
        x_a, x_b = tgv_solution_pair(cfg, n_side, sc["start_step"], sc["step_gap"])
        dfs, hpc = [], []
        for k in range(sc["seeds"]):
            seed = derive_seed(cfg.master_seed, n_side, k)
            dfs.append(dfs_samples(x_b, derive_seed(seed, 0), sc["dfs_error"], sc["max_samples"]))
            hpc.append(hpc_samples(x_a, x_b, derive_seed(seed, 1), sc["hpc_threshold"], sc["max_samples"]))
        row_ok = True
        for name, vals in (("samples_dfs", dfs), ("samples_hpc", hpc)):
            if any(v is None for v in vals):
                out.failures.append((n_side, name, f"no sample count up to {sc['max_samples']} succeeded"))
                row_ok = False
        if row_ok:
            out.rows.append([n_side, n_side * n_side, float(np.mean(dfs)), float(np.mean(hpc)), float(qpc_m)])
    if out.rows:
        n = [r[1] for r in out.rows]
        for col, name in ((2, "dfs"), (3, "hpc"), (4, "qpc")):
            out.slopes[name] = loglog_slope(n, [r[col] for r in out.rows])
    return out


# ------------------------------------------------------------ Pareto sweep

@dataclass
class SweepResult:
    grid: list = field(default_factory=list)    # sample_size, threshold, mean_skip, mean_error, failures, runs
    front: list = field(default_factory=list)

    header = ["sample_size", "p_value_threshold", "mean_skip_fraction", "mean_error", "failures", "runs"]


def _sweep_task(args) -> tuple[float, float, bool]:
    cfg, repetition = args
    r = run_simulation(cfg, repetition, reference=reference_run(cfg))
    err = r.summary.errors.get("umax", math.nan)
    return r.summary.skip_fraction, err, r.summary.failed


def non_dominated(points: list[tuple[float, float]]) -> list[int]:
    """Indices of points not dominated under (maximise first, minimise second)."""
    keep = []
    for i, (s_i, e_i) in enumerate(points):
        dominated = any((s_j >= s_i and e_j <= e_i) and (s_j > s_i or e_j < e_i)
                        for j, (s_j, e_j) in enumerate(points) if j != i)
        if not dominated:
            keep.append(i)
    return keep


def pareto_sweep(cfg: ExperimentConfig, workers: Optional[int] = None) -> SweepResult:
    """H-PC vortex runs over the (sample size, threshold) grid; one full-solve sentinel row first."""
    if cfg.case != "tgv":
        raise ValueError("the parameter sweep runs on the tgv case")
    pa = cfg.pareto
    workers = pa["workers"] if workers is None else workers
    combos = [(n, thr) for n in pa["sample_sizes"] for thr in pa["thresholds"]]
    tasks = []
    for ci, (n, thr) in enumerate(combos):
        c = replace(cfg, pc=PcConfig("hpc", sample_count=n, p_value_threshold=thr),
                    master_seed=derive_seed(cfg.master_seed, ci), snapshot_stride=0)
        tasks += [(c, rep) for rep in range(pa["repetitions"])]
    if workers > 1:
        # each worker process recomputes (deterministically) its own full-solve reference
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_sweep_task, tasks, chunksize=1))
    else:
        results = [_sweep_task(t) for t in tasks]
    out = SweepResult()
    fcs = _sweep_task((replace(cfg, pc=PcConfig("fcs"), snapshot_stride=0), 0))
    out.grid.append([0, 0.0, fcs[0], fcs[1], int(fcs[2]), 1])
    reps = pa["repetitions"]
    for ci, (n, thr) in enumerate(combos):
        chunk = results[ci * reps:(ci + 1) * reps]
        skips = [s for s, _, _ in chunk]
        errs = [e for _, e, _ in chunk if not math.isnan(e)]
        fails = sum(1 for _, _, f in chunk if f)
        out.grid.append([n, thr, float(np.mean(skips)), float(np.mean(errs)) if errs else math.nan, fails, reps])
    pts = [(row[2], row[3]) for row in out.grid]
    out.front = [out.grid[i] for i in non_dominated(pts) if not math.isnan(pts[i][1])]
    return out
