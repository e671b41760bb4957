"""Participant-level dataset parsing and empirical parameter estimation.

A prior-trial dataset is comma-separated text with a header row and one row
per participant, columns in fixed order: subpopulation (1 or 2), treatment
arm indicator (0 or 1), binary outcome (0 or 1).  Column identification is by
position; the header content is ignored.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

from .errors import DatasetError
from .model import PROBABILITY_CLIP, PopulationParams


@dataclass(frozen=True)
class ParticipantRecord:
    subpopulation: int  # 1 or 2
    treatment: int      # 1 = treatment arm, 0 = control arm
    outcome: int        # 1 = success


@dataclass(frozen=True)
class PopulationEstimate:
    """Empirical parameters computed from a dataset.

    ``p2t`` is reported separately because it is not part of
    :class:`PopulationParams` (designs sweep it over a grid).  ``warnings``
    lists estimates that had to be clipped into the open unit interval.
    """

    params: PopulationParams
    p2t: float
    counts: dict
    warnings: Tuple[str, ...]


def _parse_value(text: str, allowed: Sequence[int], column: str, row_number: int) -> int:
    try:
        value = int(text.strip())
    except ValueError:
        value = None
    if value not in allowed:
        raise DatasetError(
            f"row {row_number}: {column} must be one of {sorted(allowed)}, got {text.strip()!r}")
    return value


def parse_dataset(raw: Union[bytes, str]) -> List[ParticipantRecord]:
    """Parse comma-separated participant rows into validated records.

    The first row is treated as a header and skipped.  Errors name the
    offending file row (the header is row 1).
    """
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8-sig")
    rows = list(csv.reader(io.StringIO(raw)))
    rows = [(i + 1, row) for i, row in enumerate(rows) if any(cell.strip() for cell in row)]
    if not rows:
        raise DatasetError("dataset is empty (expected a header row and participant rows)")
    body = rows[1:]
    if not body:
        raise DatasetError("dataset contains a header but no participant rows")
    records = []
    for row_number, row in body:
        if len(row) != 3:
            raise DatasetError(
                f"row {row_number}: expected 3 columns "
                f"(subpopulation, treatment, outcome), got {len(row)}")
        records.append(ParticipantRecord(
            subpopulation=_parse_value(row[0], (1, 2), "subpopulation", row_number),
            treatment=_parse_value(row[1], (0, 1), "treatment", row_number),
            outcome=_parse_value(row[2], (0, 1), "outcome", row_number),
        ))
    return records


def _clip(name: str, value: float, warnings: List[str]) -> float:
    clipped = min(max(value, PROBABILITY_CLIP), 1.0 - PROBABILITY_CLIP)
    if clipped != value:
        warnings.append(
            f"{name} estimate {value:g} clipped to {clipped:g} to stay inside (0, 1)")
    return clipped


def estimate_population(records: Sequence[ParticipantRecord]) -> PopulationEstimate:
    """Estimate the population parameters from participant records.

    Success fractions are computed per (subpopulation, arm) stratum; an empty
    stratum is an error because its probability cannot be estimated.
    Estimates on the boundary of the unit interval are clipped inward (the
    statistic variances require open-interval probabilities) with a warning.
    """
    if not records:
        raise DatasetError("cannot estimate parameters from an empty dataset")
    counts = {(s, t): [0, 0] for s in (1, 2) for t in (0, 1)}  # [n, successes]
    n_subpop1 = 0
    for record in records:
        cell = counts[(record.subpopulation, record.treatment)]
        cell[0] += 1
        cell[1] += record.outcome
        n_subpop1 += record.subpopulation == 1

    arm_name = {0: "control", 1: "treatment"}
    for (s, t), (n, _) in counts.items():
        if n == 0:
            raise DatasetError(
                f"no participants in subpopulation {s}, {arm_name[t]} arm; "
                "cannot estimate its success probability")

    warnings: List[str] = []
    pi1 = _clip("pi1", n_subpop1 / len(records), warnings)
    rates = {key: _clip(name, counts[key][1] / counts[key][0], warnings)
             for key, name in (((1, 0), "p1c"), ((1, 1), "p1t"),
                               ((2, 0), "p2c"), ((2, 1), "p2t"))}
    params = PopulationParams(pi1=pi1, p1c=rates[(1, 0)], p1t=rates[(1, 1)],
                              p2c=rates[(2, 0)])
    stratum_counts = {f"subpop{s}_{arm_name[t]}": counts[(s, t)][0]
                      for s in (1, 2) for t in (0, 1)}
    return PopulationEstimate(params=params, p2t=rates[(2, 1)],
                              counts=stratum_counts, warnings=tuple(warnings))
