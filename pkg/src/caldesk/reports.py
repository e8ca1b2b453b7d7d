"""Verification records and deterministic report writers.

A record is one executed check instance; the JSON document is the list of
records with fields {check, point, value, tolerance, pass}, and the CSV
summary has one row per check class.  Formatting is deterministic (repr
floats, sorted keys, LF endings) so identical runs produce identical
bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence


@dataclass
class CheckRecord:
    check: str
    point: list[float]
    value: float
    tolerance: float
    passed: bool
    witness: list[float] | None = None

    def to_json_obj(self) -> dict:
        obj = {
            "check": self.check,
            "point": self.point,
            "value": self.value,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }
        if self.witness is not None:
            obj["witness"] = self.witness
        return obj


@dataclass
class VerificationReport:
    records: list[CheckRecord] = field(default_factory=list)

    def add(self, check: str, point: Sequence[float], value: float,
            tolerance: float, passed: bool,
            witness: Sequence[float] | None = None) -> CheckRecord:
        rec = CheckRecord(check, [float(x) for x in point], float(value),
                          float(tolerance), bool(passed),
                          None if witness is None else [float(x) for x in witness])
        self.records.append(rec)
        return rec

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def failures(self) -> list[CheckRecord]:
        return [r for r in self.records if not r.passed]

    def check_classes(self) -> list[str]:
        seen: list[str] = []
        for r in self.records:
            if r.check not in seen:
                seen.append(r.check)
        return seen

    def summary_rows(self) -> list[dict]:
        """One row per check class: sample count, worst deviation, verdict.

        The worst value is the record value farthest above (bound checks)
        or below (equality checks) its target; here simply the value of
        the record with the largest |value - 1| for *_eq checks and the
        max value otherwise, which is what the tolerances constrain.
        """
        rows = []
        for cls in self.check_classes():
            recs = [r for r in self.records if r.check == cls]
            if cls.endswith("_eq"):
                worst = max(recs, key=lambda r: abs(r.value - 1.0)).value
            else:
                worst = max(r.value for r in recs)
            rows.append({
                "check": cls,
                "samples": len(recs),
                "worst_value": worst,
                "tolerance": recs[0].tolerance,
                "pass": all(r.passed for r in recs),
            })
        return rows


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_report_json(path, report: VerificationReport) -> None:
    payload = [r.to_json_obj() for r in report.records]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def write_summary_csv(path, report: VerificationReport) -> None:
    header = ["check", "samples", "worst_value", "tolerance", "pass"]
    rows = [[r["check"], r["samples"], r["worst_value"], r["tolerance"], r["pass"]]
            for r in report.summary_rows()]
    write_csv(path, header, rows)
