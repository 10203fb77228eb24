"""Patient CBC records, reference ranges, and the clinical labeling rule.

Labeling follows standard CBC interpretation: anemia is called when
hemoglobin falls below the gender-specific threshold, and anemic samples
are typed by the red-cell indices (MCV, MCH, MCHC) against their
reference ranges.  The numeric thresholds are configurable; defaults are
standard adult values.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields, replace
from enum import Enum


class Gender(Enum):
    MALE = "male"
    FEMALE = "female"


class AnemiaLabel(Enum):
    NON_ANEMIC = "non_anemic"
    MICROCYTIC = "microcytic"
    NORMOCYTIC = "normocytic"
    MACROCYTIC = "macrocytic"

    @property
    def is_anemic(self) -> bool:
        return self is not AnemiaLabel.NON_ANEMIC


#: Anemia subtypes in cell-size order; the position is also the class index
#: used by the classification output encodings.
SUBTYPES = (AnemiaLabel.MICROCYTIC, AnemiaLabel.NORMOCYTIC, AnemiaLabel.MACROCYTIC)

ANALYTES = ("rbc", "hgb", "hct", "mcv", "mch", "mchc", "wbc")

#: Plausibility gates: values outside these are data errors, not clinical findings.
DEFAULT_BOUNDS: dict[str, tuple[float, float]] = {
    "rbc": (1.0, 8.0),
    "hgb": (3.0, 22.0),
    "mcv": (50.0, 150.0),
    "mch": (15.0, 45.0),
    "mchc": (25.0, 42.0),
    "wbc": (1.0, 50.0),
}


@dataclass(frozen=True)
class CbcRecord:
    """One patient's nine-field CBC panel plus demographics.

    Analyte units: rbc 10^6 cells/uL, hgb g/dL, hct percent, mcv fL,
    mch pg, mchc g/dL, wbc 10^3 cells/uL.
    """

    age: int
    gender: Gender
    rbc: float
    hgb: float
    hct: float
    mcv: float
    mch: float
    mchc: float
    wbc: float


@dataclass(frozen=True)
class ReferenceRanges:
    """Clinical thresholds driving the labeling rule.

    Every low must sit strictly below its high and all values must be
    positive; violations raise at construction.
    """

    hgb_low_male: float = 13.0
    hgb_low_female: float = 12.0
    mcv_low: float = 80.0
    mcv_high: float = 100.0
    mch_low: float = 27.0
    mch_high: float = 33.0
    mchc_low: float = 32.0
    mchc_high: float = 36.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValueError(f"{f.name} must be a positive finite number, got {value!r}")
        for name in ("mcv", "mch", "mchc"):
            low, high = getattr(self, f"{name}_low"), getattr(self, f"{name}_high")
            if not low < high:
                raise ValueError(f"{name}_low must be strictly below {name}_high")

    def hgb_low(self, gender: Gender) -> float:
        return self.hgb_low_male if gender is Gender.MALE else self.hgb_low_female

    def index_range(self, analyte: str) -> tuple[float, float]:
        """(low, high) for one of the typing indices mcv/mch/mchc."""
        return getattr(self, f"{analyte}_low"), getattr(self, f"{analyte}_high")

    @classmethod
    def from_json(cls, path) -> "ReferenceRanges":
        """Load overrides from a JSON object keyed by field name."""
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ValueError(f"{path}: expected a JSON object of range overrides")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"{path}: unknown range field(s): {', '.join(unknown)}")
        return replace(cls(), **data)


DEFAULT_RANGES = ReferenceRanges()


@dataclass(frozen=True)
class LabeledRecord:
    record: CbcRecord
    label: AnemiaLabel


class ValidationError(ValueError):
    """Raised when a record fails validation; carries every violation."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class UnclassifiableError(ValueError):
    """Raised in strict mode when the three typing indices disagree."""


def validate_record(record: CbcRecord, bounds: dict | None = None) -> list[str]:
    """Return every violated bound (empty list means the record is valid)."""
    bounds = DEFAULT_BOUNDS if bounds is None else bounds
    violations = []
    if not isinstance(record.age, int) or isinstance(record.age, bool):
        violations.append("age must be an integer")
    elif not 0 <= record.age <= 120:
        violations.append("age out of [0, 120]")
    if not isinstance(record.gender, Gender):
        violations.append("gender must be male or female")
    for name in ANALYTES:
        value = getattr(record, name)
        if not (isinstance(value, (int, float)) and math.isfinite(value)):
            violations.append(f"{name} must be finite")
            continue
        if value <= 0:
            violations.append(f"{name} must be positive")
            continue
        if name == "hct":
            if not 0 < value < 100:
                violations.append("hct out of (0, 100)")
        elif name in bounds:
            low, high = bounds[name]
            if not low <= value <= high:
                violations.append(f"{name} out of [{low:g}, {high:g}]")
    return violations


def check_record(record: CbcRecord, bounds: dict | None = None) -> None:
    """Raise ValidationError listing all violations if the record is invalid."""
    violations = validate_record(record, bounds)
    if violations:
        raise ValidationError(violations)


def rule_label(
    record: CbcRecord,
    ranges: ReferenceRanges = DEFAULT_RANGES,
    bounds: dict | None = None,
    strict: bool = False,
) -> AnemiaLabel:
    """Label a record with the clinical rule.

    Hemoglobin at or above the gender threshold means non-anemic.  Anemic
    samples are typed by MCV, MCH and MCHC: all three below their lows is
    microcytic, all three above their highs is macrocytic, all three
    within range is normocytic.  When the indices disagree, MCV (the
    cell-size index) decides alone; with ``strict=True`` the mixed case
    raises UnclassifiableError instead.
    """
    check_record(record, bounds)
    if record.hgb >= ranges.hgb_low(record.gender):
        return AnemiaLabel.NON_ANEMIC

    values = {name: getattr(record, name) for name in ("mcv", "mch", "mchc")}
    lows = {name: v < ranges.index_range(name)[0] for name, v in values.items()}
    highs = {name: v > ranges.index_range(name)[1] for name, v in values.items()}
    if all(lows.values()):
        return AnemiaLabel.MICROCYTIC
    if all(highs.values()):
        return AnemiaLabel.MACROCYTIC
    if not any(lows.values()) and not any(highs.values()):
        return AnemiaLabel.NORMOCYTIC
    if strict:
        raise UnclassifiableError(
            "typing indices disagree: "
            + ", ".join(f"{n}={v:g}" for n, v in values.items())
        )
    if lows["mcv"]:
        return AnemiaLabel.MICROCYTIC
    if highs["mcv"]:
        return AnemiaLabel.MACROCYTIC
    return AnemiaLabel.NORMOCYTIC
