"""Collects acceptance sub-check outcomes so the session can print one line per criterion."""

from __future__ import annotations

from collections import OrderedDict

CHECKS: "OrderedDict[int, list[tuple[str, bool, str]]]" = OrderedDict()


def check(criterion: int, label: str, ok: bool, detail: str) -> bool:
    CHECKS.setdefault(criterion, []).append((label, bool(ok), detail))
    return bool(ok)


def report_lines() -> list[str]:
    lines = []
    for crit in sorted(CHECKS):
        items = CHECKS[crit]
        verdict = "PASS" if all(ok for _, ok, _ in items) else "FAIL"
        parts = "; ".join(f"{label}: {detail} [{'ok' if ok else 'not met'}]" for label, ok, detail in items)
        lines.append(f"criterion {crit}: {verdict} - {parts}")
    return lines
