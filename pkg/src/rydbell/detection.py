"""Readout of simulated shots: Rydberg ejection, blow-away and atom counting.

Shot records are exported as CSV with the fixed column order::

    shot_index,series,group_value,scan_value,present1,present2,blowaway

``series`` names the data set inside an experiment (e.g. ``parity`` or
``recapture``), ``group_value`` is a secondary scan coordinate (the Ramsey
hold time, or 0), ``scan_value`` is the scanned variable in SI units and
``present1``, ``present2`` and ``blowaway`` are 0/1 flags. Floats are written
with ``repr`` so files round-trip exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .quantum import LEVEL_1, LEVEL_R, TwoAtomState, level_of, populations

CSV_COLUMNS = ("shot_index", "series", "group_value", "scan_value", "present1", "present2", "blowaway")
CATEGORIES = ("both", "only1", "only2", "none")


@dataclass(frozen=True)
class DetectionParams:
    eta_op: float = 0.95
    eta_r: float = 0.94
    blowaway_fidelity: float = 0.995
    background_loss: float = 0.0
    blowaway_enabled: bool = True

    def __post_init__(self):
        for name in ("eta_op", "eta_r", "blowaway_fidelity", "background_loss"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class ShotOutcome:
    present: tuple[bool, bool]
    scan_value: float
    blowaway: bool = True
    series: str = ""
    group_value: float = 0.0


def category(present: Sequence[bool]) -> int:
    """Index into CATEGORIES."""
    p1, p2 = bool(present[0]), bool(present[1])
    if p1 and p2:
        return 0
    if p1:
        return 1
    if p2:
        return 2
    return 3


def measure_shot(state: TwoAtomState, p: DetectionParams, rng: np.random.Generator) -> ShotOutcome:
    """Sample which atoms are still present at the end of a shot.

    The joint state is Born-sampled once; then per atom ``|r>`` is ejected
    with probability ``eta_r`` (survivors behave like ``|1>``), the blow-away
    removes ``|1>`` with probability ``blowaway_fidelity``, background loss
    strikes independently and atoms flagged lost are always absent.
    """
    probs = populations(state)
    total = probs.sum()
    if total <= 0:
        raise ValueError("cannot measure a zero state")
    k = int(rng.choice(len(probs), p=probs / total))
    present = []
    for atom in (0, 1):
        level = level_of(atom, k)
        here = True
        if level == LEVEL_R:
            if rng.random() < p.eta_r:
                here = False
            else:
                level = LEVEL_1
        if here and level == LEVEL_1 and p.blowaway_enabled:
            here = not (rng.random() < p.blowaway_fidelity)
        if p.background_loss > 0 and rng.random() < p.background_loss:
            here = False
        if state.lost[atom]:
            here = False
        present.append(here)
    return ShotOutcome((present[0], present[1]), 0.0, p.blowaway_enabled)


@dataclass
class CountsTable:
    """Counts per scan value in the order (both, only1, only2, none)."""

    scan_values: np.ndarray
    counts: np.ndarray
    blowaway: bool | None = None

    def __post_init__(self):
        self.scan_values = np.asarray(self.scan_values, dtype=float)
        self.counts = np.asarray(self.counts, dtype=np.int64).reshape(-1, 4)
        if len(self.scan_values) != len(self.counts):
            raise ValueError("scan_values and counts differ in length")

    @property
    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def probabilities(self) -> np.ndarray:
        return self.counts / self.totals[:, None]

    def presence(self, atom: int) -> np.ndarray:
        """Fraction of shots in which ``atom`` (0 or 1) was detected."""
        c = self.counts
        hits = c[:, 0] + (c[:, 1] if atom == 0 else c[:, 2])
        return hits / self.totals

    def both(self) -> np.ndarray:
        return self.counts[:, 0] / self.totals

    def merge(self, other: "CountsTable") -> "CountsTable":
        if self.blowaway is not None and other.blowaway is not None and self.blowaway != other.blowaway:
            raise ValueError("cannot merge tables taken with and without blow-away")
        values = np.union1d(self.scan_values, other.scan_values)
        counts = np.zeros((len(values), 4), dtype=np.int64)
        for table in (self, other):
            idx = np.searchsorted(values, table.scan_values)
            np.add.at(counts, idx, table.counts)
        mode = self.blowaway if self.blowaway is not None else other.blowaway
        return CountsTable(values, counts, mode)


def aggregate(outcomes: Iterable[ShotOutcome]) -> CountsTable:
    outcomes = list(outcomes)
    if not outcomes:
        raise ValueError("cannot aggregate an empty list of outcomes")
    modes = {o.blowaway for o in outcomes}
    if len(modes) > 1:
        raise ValueError("outcomes mix blow-away and recapture-only shots")
    values = np.unique([o.scan_value for o in outcomes])
    counts = np.zeros((len(values), 4), dtype=np.int64)
    for o in outcomes:
        counts[np.searchsorted(values, o.scan_value), category(o.present)] += 1
    return CountsTable(values, counts, modes.pop())


def recapture_probability(counts: CountsTable) -> float:
    """Fraction of shots with both atoms present, from a run without blow-away."""
    if counts.blowaway is not False:
        raise ValueError("recapture probability needs counts taken with blow-away disabled")
    return float(counts.counts[:, 0].sum() / counts.totals.sum())


@dataclass
class ShotRecords:
    """Flat shot table, one entry per simulated shot."""

    outcomes: list[ShotOutcome] = field(default_factory=list)

    def extend(self, outcomes: Iterable[ShotOutcome]) -> None:
        for o in outcomes:
            self.outcomes.append(o)

    def select(self, series: str, group_value: float | None = None) -> list[ShotOutcome]:
        return [
            o for o in self.outcomes
            if o.series == series and (group_value is None or o.group_value == group_value)
        ]

    def series_names(self) -> list[str]:
        return list(dict.fromkeys(o.series for o in self.outcomes))

    def group_values(self, series: str) -> list[float]:
        return sorted({o.group_value for o in self.outcomes if o.series == series})

    def table(self, series: str, group_value: float | None = None) -> CountsTable:
        return aggregate(self.select(series, group_value))

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for i, o in enumerate(self.outcomes):
                w.writerow([i, o.series, repr(float(o.group_value)), repr(float(o.scan_value)),
                            int(o.present[0]), int(o.present[1]), int(o.blowaway)])

    @classmethod
    def read_csv(cls, path: str | Path) -> "ShotRecords":
        records = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(header) != CSV_COLUMNS:
                raise ValueError(f"{path}: expected header {','.join(CSV_COLUMNS)}")
            for lineno, row in enumerate(reader, start=2):
                try:
                    _, series, group, value, p1, p2, bl = row
                    records.outcomes.append(ShotOutcome(
                        (p1 == "1", p2 == "1"), float(value), bl == "1", series, float(group)))
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: malformed shot record ({exc})") from None
        return records
