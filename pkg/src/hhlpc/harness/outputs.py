"""Result files.

Per run, with stem ``<case>_<mode>_<seed>``:

* ``.ledger.csv``   step,action,p_value,p0_estimate,samples_spent
* ``.series.csv``   t,umax (tgv) | t,leading_edge (dambreak, t in t*, x in column widths) | t,UK,UE (two_stream)
* ``.summary.csv``  field,value (every summary field except wall time)
* ``.summary.json`` summary, wall time included, plus the config echo
* ``.snapshot-<step>.csv``  id,kind,x,y,u,v,p (particles) or the phase-space grid (two_stream)
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..vlasov1d import write_energy_csv, write_f_snapshot
from .config import config_to_dict
from .runner import RunResult


def _num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def stem(result: RunResult) -> str:
    s = result.summary
    return f"{s.case}_{s.mode}_{s.seed}"


def write_series(path: Path, result: RunResult) -> None:
    if result.config.case == "two_stream":
        write_energy_csv(path, result.series)
        return
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(result.columns)
        for row in result.series:
            w.writerow([_num(v) for v in row])


def write_particle_snapshot(path: Path, data: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["id", "kind", "x", "y", "u", "v", "p"])
        for row in data:
            w.writerow([int(row[0]), int(row[1])] + [repr(float(v)) for v in row[2:]])


def summary_rows(result: RunResult) -> list[tuple[str, str]]:
    rows = []
    for key, value in result.summary.deterministic_fields().items():
        if key == "errors":
            for name, err in value.items():
                rows.append((f"error_{name}", _num(err)))
        else:
            rows.append((key, _num(value)))
    return rows


def write_summary_csv(path: Path, result: RunResult) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["field", "value"])
        w.writerows(summary_rows(result))


def summary_json(result: RunResult) -> dict:
    s = result.summary
    return {"summary": {**s.deterministic_fields(), "wall_time": s.wall_time},
            "config": config_to_dict(result.config)}


def emit_outputs(results: list[RunResult], out_dir: str | Path) -> list[Path]:
    """Write every file kind for each run; returns the paths written."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written: list[Path] = []
    for r in results:
        base = stem(r)
        p = out / f"{base}.ledger.csv"
        r.ledger.write_csv(p)
        written.append(p)
        p = out / f"{base}.series.csv"
        write_series(p, r)
        written.append(p)
        p = out / f"{base}.summary.csv"
        write_summary_csv(p, r)
        written.append(p)
        p = out / f"{base}.summary.json"
        p.write_text(json.dumps(summary_json(r), indent=2, sort_keys=True) + "\n")
        written.append(p)
        for step, payload in r.snapshots:
            p = out / f"{base}.snapshot-{step:06d}.csv"
            if r.config.case == "two_stream":
                write_f_snapshot(p, payload)
            else:
                write_particle_snapshot(p, payload)
            written.append(p)
    return written


def write_table(path: str | Path, header: list[str], rows: list[list]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_num(v) for v in row])
    return path
