"""PHY scenario parameters and their JSON representation."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction


@dataclass(frozen=True)
class GompSettings:
    """Detector knobs.

    Selection stops once the residual energy falls to ``residual_stop`` times
    the received energy, or to ``noise_stop`` times the expected noise energy,
    or when ``max_groups`` groups are chosen. A selected user is declared
    inactive when its estimated received energy per symbol E (noise bias
    removed) gives E / (E + noise_var) below ``activity_threshold``, so the
    test is relative to the noise floor and vanishes in the noiseless limit. The defaults were calibrated once against the single-user
    capture probability at 10 dB and are frozen.
    """

    max_groups: int = 64
    residual_stop: float = 0.05
    activity_threshold: float = 0.78
    noise_stop: float = 0.9

    def __post_init__(self):
        if self.max_groups < 1:
            raise ValueError("max_groups must be >= 1")
        for name in ("residual_stop", "activity_threshold"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        if self.noise_stop < 0:
            raise ValueError("noise_stop must be non-negative")


@dataclass(frozen=True)
class PhyScenario:
    n_users: int = 128
    spreading_factor: int = 32
    symbols_per_frame: int = 8
    channel_taps: int = 6
    pdp_decay: float = 1.0
    code_rate: str = "1/2"
    generators: tuple = (0o7, 0o5)
    snr_db: float = 10.0
    detector: GompSettings = field(default_factory=GompSettings)
    seed: int = 0

    def __post_init__(self):
        if self.n_users < 1 or self.spreading_factor < 1 or self.symbols_per_frame < 1 or self.channel_taps < 1:
            raise ValueError("user count, spreading factor, frame length and tap count must be positive")
        if self.pdp_decay < 0:
            raise ValueError("pdp_decay must be non-negative")
        if Fraction(self.code_rate) != Fraction(1, len(self.generators)):
            raise ValueError(f"code_rate {self.code_rate} does not match {len(self.generators)} generators")
        if self.detector.max_groups > self.n_users:
            raise ValueError("detector max_groups cannot exceed n_users")

    @property
    def overloaded(self) -> bool:
        return self.spreading_factor < self.n_users

    @property
    def frame_chips(self) -> int:
        return self.symbols_per_frame * self.spreading_factor

    @property
    def received_chips(self) -> int:
        return self.frame_chips + self.channel_taps - 1

    @property
    def noise_var(self) -> float:
        """Complex noise variance per chip, 10**(-snr_db / 10).

        Spreading sequences have unit norm and channels unit expected power, so
        snr_db is the received energy per coded symbol over the per-chip noise
        variance.
        """
        return 10.0 ** (-self.snr_db / 10.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["generators"] = [oct(g) for g in self.generators]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PhyScenario":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario field(s): {', '.join(sorted(unknown))}")
        if "detector" in d:
            det = dict(d["detector"])
            bad = set(det) - {f.name for f in fields(GompSettings)}
            if bad:
                raise ValueError(f"unknown detector field(s): {', '.join(sorted(bad))}")
            d["detector"] = GompSettings(**det)
        if "generators" in d:
            d["generators"] = tuple(int(g, 8) if isinstance(g, str) else int(g) for g in d["generators"])
        return cls(**d)

    def with_(self, **changes) -> "PhyScenario":
        return replace(self, **changes)

    def digest(self) -> str:
        """Stable hash of every field except the seed."""
        d = self.to_dict()
        d.pop("seed")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]
