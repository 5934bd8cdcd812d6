"""Cotton growth stages, two-label metaclasses and the continuous stage scale."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

from ..errors import DataError


class Stage(IntEnum):
    RE = 1  # root establishment
    LD = 2  # leaf development
    S = 3  # squaring
    F = 4  # flowering
    BD = 5  # boll development
    BO = 6  # boll opening

    @classmethod
    def parse(cls, v) -> "Stage":
        if isinstance(v, Stage):
            return v
        if isinstance(v, str):
            key = v.strip().upper()
            if key in cls.__members__:
                return cls[key]
            v = int(key)
        return cls(int(v))


STAGES = tuple(Stage)

# day-of-year window in which each stage can occur
STAGE_DOY_RANGES = {
    Stage.RE: (110, 150),
    Stage.LD: (130, 190),
    Stage.S: (160, 215),
    Stage.F: (180, 250),
    Stage.BD: (220, 270),
    Stage.BO: (240, 315),
}


@dataclass(frozen=True)
class Metaclass:
    """Primary stage with an optional ordinally adjacent secondary stage."""

    primary: Stage
    secondary: Stage | None = None

    def __post_init__(self):
        object.__setattr__(self, "primary", Stage.parse(self.primary))
        if self.secondary is not None:
            sec = Stage.parse(self.secondary)
            if abs(int(sec) - int(self.primary)) != 1:
                raise ValueError(f"secondary {sec.name} is not adjacent to {self.primary.name}")
            object.__setattr__(self, "secondary", sec)

    @property
    def index(self) -> int:
        """Position 1..16 in the ordered list
        l1, (l1,l2), (l2,l1), l2, (l2,l3), (l3,l2), l3, ..., (l6,l5), l6."""
        p = int(self.primary)
        if self.secondary is None:
            return 3 * p - 2
        s = int(self.secondary)
        return 3 * p - 1 if s == p + 1 else 3 * s

    @classmethod
    def from_index(cls, idx: int) -> "Metaclass":
        return METACLASSES[idx - 1]

    @property
    def label(self) -> str:
        if self.secondary is None:
            return self.primary.name
        return f"{self.primary.name}/{self.secondary.name}"

    def __str__(self):
        return self.label


def _all_metaclasses():
    out = []
    for k in range(1, 7):
        out.append(Metaclass(Stage(k)))
        if k < 6:
            out.append(Metaclass(Stage(k), Stage(k + 1)))
            out.append(Metaclass(Stage(k + 1), Stage(k)))
    return tuple(out)


METACLASSES = _all_metaclasses()


@dataclass(frozen=True)
class ContinuousStage:
    """Value on the 100-700 scale: hundreds digit is the stage, the rest its completion."""

    value: float

    def __post_init__(self):
        if not 100 <= self.value <= 700:
            raise ValueError(f"continuous stage {self.value} outside [100, 700]")

    @property
    def stage(self) -> Stage:
        # 700 marks the end of boll opening
        return Stage(min(int(math.floor(self.value / 100)), 6))

    @property
    def completion(self) -> float:
        """Fraction of the stage completed, in [0, 1]."""
        if self.value >= 700:
            return 1.0
        return (self.value - 100 * int(self.stage)) / 100.0

    def describe(self) -> str:
        return f"{self.stage.name}, {round(100 * self.completion):d}% complete"


def admissible_stages(doy: float) -> list[Stage]:
    return [s for s, (lo, hi) in STAGE_DOY_RANGES.items() if lo <= doy <= hi]


@dataclass(frozen=True)
class GroundObservation:
    field_id: str
    day: float
    primary: Stage
    primary_pct: float = 100.0
    secondary: Stage | None = None
    secondary_pct: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "primary", Stage.parse(self.primary))
        if self.secondary is not None:
            object.__setattr__(self, "secondary", Stage.parse(self.secondary))
        if not 0 < self.primary_pct <= 100:
            raise DataError(f"primary prevalence {self.primary_pct} outside (0, 100]")
        if self.secondary is not None:
            if not 0 < self.secondary_pct <= 100:
                raise DataError(f"secondary prevalence {self.secondary_pct} outside (0, 100]")
            if self.secondary_pct > self.primary_pct:
                raise DataError("secondary prevalence exceeds primary prevalence")

    @property
    def metaclass(self) -> Metaclass:
        sec = self.secondary
        if sec is not None and abs(int(sec) - int(self.primary)) != 1:
            sec = None
        return Metaclass(self.primary, sec)
