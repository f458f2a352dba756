"""Stratified knowledge/validation/test splitting with seeded determinism."""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass

from .errors import MissingClassError, TooFewRecordsError, ValidationError
from .models import SEVERITY_ORDER, Severity, VulnerabilityRecord

logger = logging.getLogger(__name__)

SPLIT_NAMES = ("knowledge", "validation", "test")


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 42

    def __post_init__(self):
        if len(self.ratios) != len(SPLIT_NAMES):
            raise ValidationError(f"expected {len(SPLIT_NAMES)} ratios, got {len(self.ratios)}")
        if any(r <= 0 for r in self.ratios):
            raise ValidationError(f"every split ratio must be positive, got {self.ratios}")
        if abs(math.fsum(self.ratios) - 1.0) > 1e-9:
            raise ValidationError(f"split ratios must sum to 1.0, got {self.ratios}")


@dataclass
class SplitResult:
    knowledge: list[VulnerabilityRecord]
    validation: list[VulnerabilityRecord]
    test: list[VulnerabilityRecord]

    def as_dict(self) -> dict[str, list[VulnerabilityRecord]]:
        return {"knowledge": self.knowledge, "validation": self.validation, "test": self.test}


def _apportion(n: int, ratios: tuple[float, ...]) -> list[int]:
    """Largest-remainder apportionment of n items over the ratios.

    Remainder seats go to the largest fractional part; exact ties go to the
    larger-ratio split, then to the earlier split, so results never depend
    on dict or sort instability.
    """
    exact = [r * n for r in ratios]
    counts = [int(x) for x in exact]
    remainder = n - sum(counts)
    order = sorted(
        range(len(ratios)),
        key=lambda i: (-(exact[i] - counts[i]), -ratios[i], i),
    )
    for i in order[:remainder]:
        counts[i] += 1
    return counts


def stratified_split(records: list[VulnerabilityRecord], spec: SplitSpec) -> SplitResult:
    """Partition records per severity class at the given ratios.

    Each class is shuffled with its own seeded generator and sliced, so the
    per-class per-split count is always within 1 of ratio * class size, and
    the same seed reproduces the same partition.
    """
    by_class: dict[Severity, list[VulnerabilityRecord]] = {s: [] for s in SEVERITY_ORDER}
    for record in records:
        by_class[record.severity].append(record)

    missing = [s.label for s in SEVERITY_ORDER if not by_class[s]]
    if missing:
        raise MissingClassError(f"no records for severity class(es): {', '.join(missing)}")
    too_few = {s.label: len(by_class[s]) for s in SEVERITY_ORDER if len(by_class[s]) < 3}
    if too_few:
        raise TooFewRecordsError(
            f"class(es) too small to populate all three splits: {too_few}"
        )

    out = SplitResult(knowledge=[], validation=[], test=[])
    buckets = (out.knowledge, out.validation, out.test)
    for severity in SEVERITY_ORDER:
        group = sorted(by_class[severity], key=lambda r: r.cve_id)
        rng = random.Random(spec.seed * 1_000_003 + severity.value)
        rng.shuffle(group)
        counts = _apportion(len(group), spec.ratios)
        logger.debug("%s: %d records -> %s", severity.label, len(group), counts)
        start = 0
        for bucket, count in zip(buckets, counts):
            bucket.extend(group[start : start + count])
            start += count
    return out
