"""Experiment configuration: INI-style sections, validated against a per-case schema.

Example::

    [experiment]
    case = tgv
    t_end = 2.6
    seed = 7

    [pc]
    mode = qpc

    [tgv]
    n_side = 32

Every key is optional; unknown sections or keys are rejected before any run.
"""

from __future__ import annotations

import configparser
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Optional

from ..pcore import PcConfig

CASES = ("tgv", "dambreak", "two_stream")


class ConfigError(ValueError):
    pass


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _int(v) -> int:
    if isinstance(v, bool):
        raise ValueError("boolean where an integer is expected")
    if isinstance(v, float) and not v.is_integer():
        raise ValueError(f"not an integer: {v!r}")
    return int(v) if not isinstance(v, str) else int(v.strip())


def _float(v) -> float:
    if isinstance(v, bool):
        raise ValueError("boolean where a number is expected")
    out = float(v)
    if math.isnan(out):
        raise ValueError("NaN is not a valid setting")
    return out


def _opt_float(v) -> Optional[float]:
    if v is None or (isinstance(v, str) and v.strip().lower() in ("", "none")):
        return None
    return _float(v)


def _opt_int(v) -> Optional[int]:
    if v is None or (isinstance(v, str) and v.strip().lower() in ("", "none")):
        return None
    return _int(v)


def _list(conv: Callable) -> Callable:
    def parse(v):
        if isinstance(v, (list, tuple)):
            items = list(v)
        else:
            items = [s for s in str(v).replace(",", " ").split() if s]
        if not items:
            raise ValueError("empty list")
        return [conv(x) for x in items]
    return parse


def _str(v) -> str:
    return str(v).strip()


EXPERIMENT_KEYS: dict[str, Callable] = {
    "case": _str,
    "t_end": _opt_float,
    "max_steps": _opt_int,
    "output_dir": _str,
    "snapshot_stride": _int,
    "repetitions": _int,
    "seed": _int,
    "compare_reference": _bool,
}

PC_KEYS: dict[str, Callable] = {
    "mode": _str,
    "async_staged": _bool,
    "sample_count": _int,
    "p_value_threshold": _float,
    "overlap_threshold": _float,
    "skip_rate": _float,
    "phase": _float,
    "zero_atol": _float,
    "rhs_norm_tolerance": _opt_float,
}

CASE_KEYS: dict[str, dict[str, Callable]] = {
    "tgv": {"n_side": _int, "L": _float, "U": _float, "Re": _float, "rho0": _float, "h_factor": _float,
            "shifting": _bool, "shifting_coeff": _float, "gradient_correction": _bool, "cg_tol": _float},
    "dambreak": {"n_width": _int, "a": _float, "gravity": _float, "rho0": _float, "wall_rows": _int,
                 "h_factor": _float, "hydrostatic": _bool, "shifting": _bool, "gradient_correction": _bool,
                 "shifting_coeff": _float, "cg_tol": _float},
    "two_stream": {"nx": _int, "nv": _int, "L": _float, "v0": _float, "vt": _float, "alpha": _float,
                   "k_mode": _int, "v_max": _opt_float, "dt": _float},
}

SCALING_KEYS: dict[str, Callable] = {
    "n_sides": _list(_int),
    "seeds": _int,
    "start_step": _int,
    "step_gap": _int,
    "dfs_error": _float,
    "hpc_threshold": _float,
    "z": _float,
    "margin": _float,
    "max_samples": _int,
}

PARETO_KEYS: dict[str, Callable] = {
    "sample_sizes": _list(_int),
    "thresholds": _list(_float),
    "repetitions": _int,
    "workers": _int,
}

# t_end is in the natural time unit of each case: physical time for the vortex
# and the plasma, t* = t sqrt(2 g / a) for the dam break.
DEFAULT_T_END = {"tgv": 2.6, "dambreak": 6.0, "two_stream": 50.0}

DEFAULT_PC = {
    "tgv": {},
    "dambreak": {},
    "two_stream": {"rhs_norm_tolerance": 0.02},
}

DEFAULT_SCALING = {"n_sides": [8, 12, 16, 24, 32], "seeds": 10, "start_step": 20, "step_gap": 10,
                   "dfs_error": 0.05, "hpc_threshold": 0.05, "z": 1.96, "margin": 0.05,
                   "max_samples": 1 << 26}

DEFAULT_PARETO = {"sample_sizes": [100, 200, 385, 1000], "thresholds": [0.01, 0.05, 0.1],
                  "repetitions": 5, "workers": 1}


@dataclass(frozen=True)
class ExperimentConfig:
    case: str = "tgv"
    pc: PcConfig = field(default_factory=PcConfig)
    resolution: dict = field(default_factory=dict)
    t_end: Optional[float] = None
    max_steps: Optional[int] = None
    output_dir: str = "results"
    snapshot_stride: int = 0
    repetitions: int = 1
    master_seed: int = 0
    compare_reference: bool = True
    scaling: dict = field(default_factory=lambda: dict(DEFAULT_SCALING))
    pareto: dict = field(default_factory=lambda: dict(DEFAULT_PARETO))

    def __post_init__(self):
        if self.case not in CASES:
            raise ConfigError(f"unknown case {self.case!r}; expected one of {CASES}")
        if self.t_end is not None and self.t_end <= 0:
            raise ConfigError("t_end must be positive")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if self.snapshot_stride < 0:
            raise ConfigError("snapshot_stride must be >= 0")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        unknown = set(self.resolution) - set(CASE_KEYS[self.case])
        if unknown:
            raise ConfigError(f"unknown [{self.case}] keys: {sorted(unknown)}")

    @property
    def end_time(self) -> float:
        return DEFAULT_T_END[self.case] if self.t_end is None else self.t_end

    @property
    def mode_label(self) -> str:
        return self.pc.mode + ("-staged" if self.pc.async_staged else "")

    def with_mode(self, mode: str, **pc_overrides) -> "ExperimentConfig":
        return replace(self, pc=replace(self.pc, mode=mode, **pc_overrides))


def _convert(section: str, raw: dict, schema: dict[str, Callable]) -> dict:
    out = {}
    for key, value in raw.items():
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        try:
            out[key] = schema[key](value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from exc
    return out


def config_from_dict(data: dict[str, dict[str, Any]]) -> ExperimentConfig:
    """Build and validate a config from ``{section: {key: value}}``; values may be strings."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping of sections")
    exp = _convert("experiment", dict(data.get("experiment", {})), EXPERIMENT_KEYS)
    case = exp.get("case", "tgv")
    if case not in CASES:
        raise ConfigError(f"unknown case {case!r}; expected one of {CASES}")
    allowed = {"experiment", "pc", case, "scaling", "pareto"}
    extra = set(data) - allowed
    if extra:
        raise ConfigError(f"unknown or mismatched sections for case {case!r}: {sorted(extra)}")
    pc = dict(DEFAULT_PC[case])
    pc.update(_convert("pc", dict(data.get("pc", {})), PC_KEYS))
    resolution = _convert(case, dict(data.get(case, {})), CASE_KEYS[case])
    scaling = dict(DEFAULT_SCALING)
    scaling.update(_convert("scaling", dict(data.get("scaling", {})), SCALING_KEYS))
    pareto = dict(DEFAULT_PARETO)
    pareto.update(_convert("pareto", dict(data.get("pareto", {})), PARETO_KEYS))
    try:
        pc_cfg = PcConfig(**pc)
    except ValueError as exc:
        raise ConfigError(f"[pc] {exc}") from exc
    try:
        return ExperimentConfig(
            case=case, pc=pc_cfg, resolution=resolution, t_end=exp.get("t_end"),
            max_steps=exp.get("max_steps"),
            output_dir=exp.get("output_dir", "results"), snapshot_stride=exp.get("snapshot_stride", 0),
            repetitions=exp.get("repetitions", 1), master_seed=exp.get("seed", 0),
            compare_reference=exp.get("compare_reference", True), scaling=scaling, pareto=pareto)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def config_to_dict(cfg: ExperimentConfig) -> dict[str, dict[str, Any]]:
    pc = asdict(cfg.pc)
    pc.pop("seed")
    return {
        "experiment": {"case": cfg.case, "t_end": cfg.t_end, "max_steps": cfg.max_steps, "output_dir": cfg.output_dir,
                       "snapshot_stride": cfg.snapshot_stride, "repetitions": cfg.repetitions,
                       "seed": cfg.master_seed, "compare_reference": cfg.compare_reference},
        "pc": pc,
        cfg.case: dict(cfg.resolution),
        "scaling": dict(cfg.scaling),
        "pareto": dict(cfg.pareto),
    }


def parse_config_text(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, default_section="__unused_default__")
    cp.optionxform = str                 # keys are case-sensitive (Re, L, U)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return config_from_dict({s: dict(cp.items(s)) for s in cp.sections()})


def load_config(path: str | Path) -> ExperimentConfig:
    """Read an INI config file, or a summary JSON whose ``config`` entry echoes one."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if path.suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON config: {exc}") from exc
        return config_from_dict(data.get("config", data))
    return parse_config_text(text)


