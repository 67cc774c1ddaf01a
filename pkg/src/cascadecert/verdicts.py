"""Verdict values and the per-condition result record shared by the checkers."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class Verdict(str, enum.Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    INCONCLUSIVE = "INCONCLUSIVE"


def combine(verdicts) -> Verdict:
    """Conjunction: any FAIL fails; otherwise any INCONCLUSIVE is inconclusive."""
    verdicts = list(verdicts)
    if any(v is Verdict.FAIL for v in verdicts):
        return Verdict.FAIL
    if any(v is Verdict.INCONCLUSIVE for v in verdicts):
        return Verdict.INCONCLUSIVE
    return Verdict.PASS


def jsonable(obj):
    """Convert numpy scalars/arrays (and nested containers) to plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, enum.Enum):
        return obj.value
    return obj


@dataclass
class CheckResult:
    condition: str
    verdict: Verdict
    evidence: dict = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)
    witnesses: list = field(default_factory=list)
    evidence_grade: str = "sampled"

    @property
    def passed(self) -> bool:
        return self.verdict is Verdict.PASS

    def to_json(self) -> dict:
        return jsonable({
            "condition": self.condition,
            "verdict": self.verdict.value,
            "evidence_grade": self.evidence_grade,
            "evidence": self.evidence,
            "parameters": self.parameters,
            "witnesses": self.witnesses,
        })
