"""Single simulation runs for each benchmark case."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .. import cases
from ..isph.solver import SimulationFailure, isph_step
from ..pcore import PcConfig, SkipLedger, make_policy
from ..rng import derive_seed, make_rng
from .. import vlasov1d as vl
from .config import ExperimentConfig, config_to_dict

SERIES_COLUMNS = {
    "tgv": ("t", "umax"),
    "dambreak": ("t", "leading_edge"),
    "two_stream": ("t", "UK", "UE"),
}


@dataclass
class RunSummary:
    case: str
    mode: str
    seed: int
    skip_fraction: float
    update_count: int
    total_steps: int
    errors: dict = field(default_factory=dict)
    samples_spent: int = 0
    wall_time: float = 0.0
    failure_step: Optional[int] = None
    failure_reason: Optional[str] = None
    end_time: float = 0.0

    @property
    def failed(self) -> bool:
        return self.failure_step is not None

    def deterministic_fields(self) -> dict:
        out = asdict(self)
        out.pop("wall_time")
        return out


@dataclass(eq=False)
class RunResult:
    config: ExperimentConfig
    summary: RunSummary
    ledger: SkipLedger
    series: np.ndarray
    snapshots: list = field(default_factory=list)     # (step, kind-specific payload)

    @property
    def columns(self) -> tuple[str, ...]:
        return SERIES_COLUMNS[self.config.case]


def run_seed(cfg: ExperimentConfig, repetition: int = 0) -> int:
    return derive_seed(cfg.master_seed, repetition)


def _policy_config(cfg: ExperimentConfig, seed: int) -> PcConfig:
    pc = replace(cfg.pc, seed=seed)
    if pc.mode == "periodic_skip":
        # each seed gets its own offset of the evenly spaced update pattern
        offset = make_rng(derive_seed(seed, 1)).random()
        pc = replace(pc, phase=float((pc.phase + offset) % 1.0))
    return pc


def tgv_spec(cfg: ExperimentConfig) -> tuple[cases.TgvSpec, dict]:
    res = dict(cfg.resolution)
    spec_keys = ("n_side", "L", "U", "Re", "rho0", "h_factor")
    spec = cases.TgvSpec(**{k: res.pop(k) for k in spec_keys if k in res})
    return spec, res


def dambreak_spec(cfg: ExperimentConfig) -> tuple[cases.DamBreakSpec, dict]:
    res = dict(cfg.resolution)
    spec_keys = ("n_width", "a", "gravity", "rho0", "wall_rows", "h_factor", "hydrostatic")
    spec = cases.DamBreakSpec(**{k: res.pop(k) for k in spec_keys if k in res})
    return spec, res


def _done(cfg: ExperimentConfig, steps: int) -> bool:
    return cfg.max_steps is not None and steps >= cfg.max_steps


def _particle_snapshot(system) -> np.ndarray:
    return np.column_stack([np.arange(system.n), system.kind, system.positions, system.velocities,
                            system.pressures])


def _run_tgv(cfg, policy, ledger, snaps, series):
    spec, overrides = tgv_spec(cfg)
    s = cases.tgv_init(spec, **overrides)
    t_end = cfg.end_time
    series.append((0.0, s.max_speed()))
    stride = cfg.snapshot_stride
    while s.time < t_end - 1e-12 and not _done(cfg, s.step):
        s, _ = isph_step(s, policy, ledger)
        series.append((s.time, s.max_speed()))
        if stride and s.step % stride == 0:
            snaps.append((s.step, _particle_snapshot(s)))
    return s.time


def _run_dambreak(cfg, policy, ledger, snaps, series):
    spec, overrides = dambreak_spec(cfg)
    s = cases.dambreak_init(spec, **overrides)
    t_end = cfg.end_time * spec.time_scale
    series.append((0.0, cases.leading_edge(s) / spec.a))
    stride = cfg.snapshot_stride
    while s.time < t_end - 1e-12 and not _done(cfg, s.step):
        s, _ = isph_step(s, policy, ledger)
        series.append((s.time / spec.time_scale, cases.leading_edge(s) / spec.a))
        if stride and s.step % stride == 0:
            snaps.append((s.step, _particle_snapshot(s)))
    return s.time / spec.time_scale


def two_stream_setup(cfg: ExperimentConfig) -> tuple[vl.VlasovState, float]:
    res = dict(cfg.resolution)
    dt = res.pop("dt", 0.1)
    grid = vl.init_two_stream(**res)
    return vl.VlasovState(grid, vl.init_field(grid), dt), dt


def _run_two_stream(cfg, policy, ledger, snaps, series):
    st, dt = two_stream_setup(cfg)
    t_end = cfg.end_time
    series.append((0.0, *vl.energies(st.grid, st.fld)))
    stride = cfg.snapshot_stride
    while st.time < t_end - 1e-9 * dt and not _done(cfg, st.step):
        st = vl.vlasov_step(st, policy, ledger)
        series.append((st.time, *vl.energies(st.grid, st.fld)))
        if stride and st.step % stride == 0:
            snaps.append((st.step, st.grid))
    return st.time


_RUNNERS = {"tgv": _run_tgv, "dambreak": _run_dambreak, "two_stream": _run_two_stream}
_FAILURES = (SimulationFailure, vl.VlasovFailure)


def execute(cfg: ExperimentConfig, repetition: int = 0) -> RunResult:
    """Run one repetition of ``cfg`` without comparing against a reference."""
    seed = run_seed(cfg, repetition)
    policy = make_policy(_policy_config(cfg, seed))
    ledger = SkipLedger()
    snaps: list = []
    series: list = []
    t0 = time.perf_counter()
    failure = None
    try:
        end = _RUNNERS[cfg.case](cfg, policy, ledger, snaps, series)
    except _FAILURES as exc:
        failure = exc
        end = series[-1][0] if series else 0.0
    wall = time.perf_counter() - t0
    summary = RunSummary(cfg.case, cfg.mode_label, seed, ledger.skip_fraction, ledger.updates,
                         ledger.total_steps, {}, ledger.samples_spent, wall,
                         None if failure is None else int(failure.step),
                         None if failure is None else failure.reason, float(end))
    arr = np.asarray(series, dtype=np.float64).reshape(-1, len(SERIES_COLUMNS[cfg.case]))
    return RunResult(cfg, summary, ledger, arr, snaps)


_REFERENCE_CACHE: dict[str, RunResult] = {}


def _reference_key(cfg: ExperimentConfig) -> str:
    d = config_to_dict(cfg)
    return json.dumps({"case": cfg.case, "t_end": cfg.end_time, "max_steps": cfg.max_steps, "res": d[cfg.case]},
                      sort_keys=True)


def reference_run(cfg: ExperimentConfig) -> RunResult:
    """Full-classical-solve run of the same case, memoised per process."""
    key = _reference_key(cfg)
    if key not in _REFERENCE_CACHE:
        fcs = replace(cfg, pc=PcConfig("fcs"), snapshot_stride=0)
        _REFERENCE_CACHE[key] = execute(fcs)
    return _REFERENCE_CACHE[key]


def compare(result: RunResult, reference: RunResult) -> dict:
    """rms error of every series column relative to the reference peak."""
    errors = {}
    if len(result.series) == 0:
        return errors
    for k, name in enumerate(result.columns[1:], start=1):
        errors[name] = cases.rms_rel_error(result.series[:, [0, k]], reference.series[:, [0, k]])
    return errors


def analytic_errors(result: RunResult) -> dict:
    if result.config.case != "tgv" or len(result.series) == 0:
        return {}
    spec, _ = tgv_spec(result.config)
    ref = np.array([(t, cases.tgv_umax_analytic(spec, t)) for t in result.series[:, 0]])
    return {"umax_analytic": cases.rms_rel_error(result.series, ref)}


def run_simulation(cfg: ExperimentConfig, repetition: int = 0,
                   reference: Optional[RunResult] = None) -> RunResult:
    """One run plus its error metrics.  Errors against the full-solve reference are
    computed when ``cfg.compare_reference`` is set or a reference is passed."""
    result = execute(cfg, repetition)
    errors = analytic_errors(result)
    if reference is None and cfg.compare_reference:
        reference = result if cfg.pc.mode == "fcs" and not cfg.pc.async_staged else reference_run(cfg)
    if reference is not None:
        errors.update(compare(result, reference))
    result.summary.errors = {k: float(v) for k, v in sorted(errors.items())}
    return result


def run_repetitions(cfg: ExperimentConfig) -> list[RunResult]:
    return [run_simulation(cfg, r) for r in range(cfg.repetitions)]
