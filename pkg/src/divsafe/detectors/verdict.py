from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum


class Decision(str, Enum):
    ID = "ID"
    OOD = "OOD"


@dataclass(frozen=True)
class DetectorVerdict:
    """One detector's binary call on one sample.

    The decision is always ``score > threshold``; constructing a verdict whose
    decision disagrees with its own threshold raises.
    """

    detector_id: str
    score: float
    decision: Decision
    voter_eligible: bool
    threshold: float

    def __post_init__(self):
        expected = Decision.OOD if self.score > self.threshold else Decision.ID
        if Decision(self.decision) is not expected:
            raise ValueError(
                f"{self.detector_id}: decision {self.decision} contradicts score "
                f"{self.score!r} vs threshold {self.threshold!r}"
            )

    @classmethod
    def from_score(cls, detector_id: str, score: float, threshold: float, eligible: bool) -> "DetectorVerdict":
        score = float(score)
        decision = Decision.OOD if score > threshold else Decision.ID
        return cls(detector_id, score, decision, bool(eligible), float(threshold))

    @property
    def is_ood(self) -> bool:
        return self.decision is Decision.OOD

    def to_record(self, sample_id=None) -> dict:
        return {
            "sample_id": sample_id,
            "detector_id": self.detector_id,
            "score": self.score,
            "decision": self.decision.value,
            "eligible": self.voter_eligible,
        }

    def to_json(self, sample_id=None) -> str:
        return json.dumps(self.to_record(sample_id), sort_keys=True)
