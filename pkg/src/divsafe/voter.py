"""k-out-of-n voting over binary detector verdicts.

``koon`` declares OOD when at least ``k`` of the ``n`` channels say OOD. 1oo3
is the fail-safe reliability checker (any channel suffices), 2oo3 the majority
voter. A channel that delivers no verdict is a fault and raises, unless the
voter is explicitly configured fail-safe, in which case it counts as OOD.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .detectors.verdict import Decision, DetectorVerdict
from .errors import ChannelFaultError, ConfigurationError

DEFAULT_CHANNELS = ("isolation_forest", "lof", "reject_class")


@dataclass(frozen=True)
class VoterConfig:
    k: int
    n: int
    channels: tuple
    fail_safe: bool = False

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        if self.n < 1 or not 1 <= self.k <= self.n:
            raise ConfigurationError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")
        if len(self.channels) != self.n:
            raise ConfigurationError(f"{self.n} channels expected, got {len(self.channels)}")
        if len(set(self.channels)) != self.n:
            raise ConfigurationError("duplicate voter channel")

    @property
    def name(self) -> str:
        return f"{self.k}oo{self.n}"

    @classmethod
    def preset(cls, name: str, channels: Sequence[str] = DEFAULT_CHANNELS, fail_safe: bool = False) -> "VoterConfig":
        """Parse ``1oo3``, ``2oo3`` or ``koon:k,n``."""
        m = re.fullmatch(r"(\d+)oo(\d+)", name) or re.fullmatch(r"koon:(\d+),(\d+)", name)
        if not m:
            raise ConfigurationError(f"unknown voter preset {name!r}")
        k, n = int(m.group(1)), int(m.group(2))
        return cls(k, n, tuple(channels)[:n] if len(channels) >= n else tuple(channels), fail_safe)

    def to_dict(self) -> dict:
        return {"k": self.k, "n": self.n, "channels": list(self.channels), "fail_safe": self.fail_safe}

    @classmethod
    def from_dict(cls, d: dict) -> "VoterConfig":
        return cls(int(d["k"]), int(d["n"]), tuple(d["channels"]), bool(d.get("fail_safe", False)))


@dataclass(frozen=True)
class VoteDecision:
    config: VoterConfig
    verdicts: tuple
    ood_votes: int
    final: Decision

    @property
    def is_ood(self) -> bool:
        return self.final is Decision.OOD

    def to_record(self, sample_id=None) -> dict:
        return {
            "sample_id": sample_id,
            "voter": self.config.name,
            "k": self.config.k,
            "n": self.config.n,
            "channels": [
                None if v is None else {"detector_id": v.detector_id, "score": v.score, "decision": v.decision.value}
                for v in self.verdicts
            ],
            "ood_votes": self.ood_votes,
            "final": self.final.value,
        }


def vote(config: VoterConfig, verdicts: Sequence[Optional[DetectorVerdict]]) -> VoteDecision:
    """Combine one verdict per channel, in channel order."""
    if len(verdicts) != config.n:
        if not config.fail_safe or len(verdicts) > config.n:
            raise ChannelFaultError(f"{config.name}: expected {config.n} verdicts, got {len(verdicts)}")
        verdicts = list(verdicts) + [None] * (config.n - len(verdicts))
    votes = 0
    for channel, v in zip(config.channels, verdicts):
        if v is None:
            if not config.fail_safe:
                raise ChannelFaultError(f"channel {channel!r} delivered no verdict")
            votes += 1
            continue
        if v.detector_id != channel:
            raise ChannelFaultError(f"expected verdict from {channel!r}, got {v.detector_id!r}")
        if not v.voter_eligible:
            raise ConfigurationError(f"detector {channel!r} is not eligible to vote")
        votes += v.is_ood
    final = Decision.OOD if votes >= config.k else Decision.ID
    return VoteDecision(config, tuple(verdicts), votes, final)


def vote_counts(k: int, flags) -> np.ndarray:
    """Vectorised koon on a (samples x channels) boolean matrix."""
    return np.asarray(flags, dtype=bool).sum(axis=1) >= k


def dominance_check(decisions_1oo3: Iterable[VoteDecision], decisions_2oo3: Iterable[VoteDecision]) -> bool:
    """True iff every sample 2oo3 flags is also flagged by 1oo3."""
    a, b = list(decisions_1oo3), list(decisions_2oo3)
    if len(a) != len(b):
        raise ConfigurationError("decision streams differ in length")
    for x, y in zip(a, b):
        if x.config.channels != y.config.channels:
            raise ConfigurationError("decision streams use different channels")
        if tuple(v.detector_id if v else None for v in x.verdicts) != tuple(
            v.detector_id if v else None for v in y.verdicts
        ) or [v.decision if v else None for v in x.verdicts] != [v.decision if v else None for v in y.verdicts]:
            raise ConfigurationError("decision streams were built from different verdicts")
    return all(x.is_ood or not y.is_ood for x, y in zip(a, b))
