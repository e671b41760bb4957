"""Parameter-file serialization and CSV table exports.

The parameter format is two-column ``key,value`` comma-separated text with a
``format_version`` row (``interadapt-spec/1``).  Keys map one-to-one onto the
fields of :class:`PopulationParams`, :class:`DesignSpec`, and
:class:`MonteCarloConfig`; unknown keys are ignored with a warning and
missing keys fall back to the documented defaults, so older files keep
loading as the format grows.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import fields
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from .boundaries import BoundaryTable
from .errors import ValidationError
from .model import (
    DesignKind,
    DesignSpec,
    EnrollmentSchedule,
    MonteCarloConfig,
    PopulationParams,
)
from .simulate import PerformanceGrid

FORMAT_VERSION = "interadapt-spec/1"

_POP_KEYS = tuple(f.name for f in fields(PopulationParams))
_SPEC_KEYS = tuple(f.name for f in fields(DesignSpec))
_MC_KEYS = tuple(f.name for f in fields(MonteCarloConfig))
_INT_KEYS = {"stages", "k_star", "iterations", "seed", "calibration_paths",
             "calibration_seed", "grid_points"}
_OPTIONAL_KEYS = {"time_limit_s"}

PARAMETER_KEYS = ("format_version",) + _POP_KEYS + _SPEC_KEYS + _MC_KEYS


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def save_parameters(spec: DesignSpec, pop: PopulationParams, mc: MonteCarloConfig) -> str:
    """Serialize a full parameter set as ``key,value`` rows."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["format_version", FORMAT_VERSION])
    for obj, keys in ((pop, _POP_KEYS), (spec, _SPEC_KEYS), (mc, _MC_KEYS)):
        for key in keys:
            writer.writerow([key, _format_value(getattr(obj, key))])
    return out.getvalue()


def _parse_scalar(key: str, text: str):
    text = text.strip()
    if key in _OPTIONAL_KEYS and text == "":
        return None
    try:
        value = float(text)
    except ValueError:
        raise ValidationError(f"parameter {key!r} has non-numeric value {text!r}")
    if key in _INT_KEYS:
        if value != int(value):
            raise ValidationError(f"parameter {key!r} must be an integer, got {text!r}")
        return int(value)
    return value


def parse_parameter_mapping(values: Mapping[str, object]) -> Tuple[DesignSpec, PopulationParams, MonteCarloConfig, List[str]]:
    """Build validated parameter objects from a key/value mapping.

    String values are parsed; numbers pass through.  Returns the objects plus
    warnings for unknown keys.  Missing keys use the defaults.
    """
    warnings: List[str] = []
    parsed: Dict[str, object] = {}
    for key, value in values.items():
        key = str(key).strip()
        if key == "format_version":
            if str(value) != FORMAT_VERSION:
                warnings.append(f"unrecognized format_version {value!r}; "
                                f"attempting to load as {FORMAT_VERSION}")
            continue
        if key not in PARAMETER_KEYS:
            warnings.append(f"unknown parameter {key!r} ignored")
            continue
        if isinstance(value, str):
            parsed[key] = _parse_scalar(key, value)
        elif value is None:
            parsed[key] = None
        elif key in _INT_KEYS:
            if float(value) != int(value):
                raise ValidationError(f"parameter {key!r} must be an integer, got {value!r}")
            parsed[key] = int(value)
        else:
            parsed[key] = float(value)
    pop = PopulationParams(**{k: parsed[k] for k in _POP_KEYS if k in parsed})
    spec = DesignSpec(**{k: parsed[k] for k in _SPEC_KEYS if k in parsed})
    mc = MonteCarloConfig(**{k: parsed[k] for k in _MC_KEYS if k in parsed})
    return spec, pop, mc, warnings


def load_parameters(text: str) -> Tuple[DesignSpec, PopulationParams, MonteCarloConfig, List[str]]:
    """Parse a saved parameter file back into validated objects."""
    values: Dict[str, str] = {}
    for line_number, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or not any(cell.strip() for cell in row):
            continue
        if len(row) != 2:
            raise ValidationError(
                f"parameter file line {line_number}: expected key,value, got {len(row)} fields")
        values[row[0].strip()] = row[1]
    return parse_parameter_mapping(values)


def parameters_to_mapping(spec: DesignSpec, pop: PopulationParams,
                          mc: MonteCarloConfig) -> Dict[str, object]:
    """Flat dict of every parameter, as used by the JSON API."""
    doc: Dict[str, object] = {"format_version": FORMAT_VERSION}
    for obj, keys in ((pop, _POP_KEYS), (spec, _SPEC_KEYS), (mc, _MC_KEYS)):
        for key in keys:
            doc[key] = getattr(obj, key)
    return doc


# ---------------------------------------------------------------------------
# Table exports.
# ---------------------------------------------------------------------------

def _fmt(value: Optional[float]) -> str:
    """Render one numeric cell: 6 significant digits, literal Inf, blank for None."""
    if value is None:
        return ""
    value = float(value)
    if math.isinf(value):
        return "Inf" if value > 0 else "-Inf"
    return f"{value:.6g}"


def _fmt_count(value: Optional[float]) -> str:
    """Enrollment counts are display-rounded to whole participants."""
    if value is None:
        return ""
    return str(int(round(float(value))))


def export_design_table(table: BoundaryTable, sched: EnrollmentSchedule) -> str:
    """One row per stage: cumulative enrollment plus all boundaries.

    Cells that are undefined for a stage (combined-statistic columns after
    ``k_star`` in the adaptive design) are left blank; the subpopulation-2
    futility sentinel at ``k_star`` renders as ``Inf``.
    """
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    ks = sched.k_star

    def at(arr, i):
        if arr is None or i >= len(arr):
            return None
        return arr[i]

    if table.design is DesignKind.ADAPTIVE:
        writer.writerow(["stage", "cumulative_subpop1", "cumulative_subpop2",
                         "cumulative_combined", "efficacy_subpop1", "efficacy_combined",
                         "futility_subpop1", "futility_subpop2"])
        for i in range(sched.stages):
            writer.writerow([
                i + 1,
                _fmt_count(sched.subpop1[i]),
                _fmt_count(at(sched.subpop2, i)),
                _fmt_count(at(sched.combined, i)),
                _fmt(table.efficacy_subpop1[i]),
                _fmt(at(table.efficacy_combined, i)),
                _fmt(table.futility_subpop1[i]),
                _fmt(at(table.futility_subpop2, i)),
            ])
    elif table.design is DesignKind.STANDARD_COMBINED:
        writer.writerow(["stage", "cumulative_subpop1", "cumulative_subpop2",
                         "cumulative_combined", "efficacy_combined", "futility_combined"])
        for i in range(sched.stages):
            writer.writerow([
                i + 1,
                _fmt_count(sched.subpop1[i]),
                _fmt_count(sched.subpop2[i]),
                _fmt_count(sched.combined[i]),
                _fmt(table.efficacy_combined[i]),
                _fmt(table.futility_combined[i]),
            ])
    else:
        writer.writerow(["stage", "cumulative_subpop1", "efficacy_subpop1",
                         "futility_subpop1"])
        for i in range(sched.stages):
            writer.writerow([
                i + 1,
                _fmt_count(sched.subpop1[i]),
                _fmt(table.efficacy_subpop1[i]),
                _fmt(table.futility_subpop1[i]),
            ])
    return out.getvalue()


_PERFORMANCE_ROWS = (
    ("ad_power_h0c", DesignKind.ADAPTIVE, "reject_h0c"),
    ("ad_power_h01", DesignKind.ADAPTIVE, "reject_h01"),
    ("ad_power_any", DesignKind.ADAPTIVE, "reject_any"),
    ("sc_power_h0c", DesignKind.STANDARD_COMBINED, "reject_h0c"),
    ("ss_power_h01", DesignKind.STANDARD_SUBPOP1, "reject_h01"),
    ("ad_expected_size", DesignKind.ADAPTIVE, "expected_total"),
    ("ad_expected_size_subpop1", DesignKind.ADAPTIVE, "expected_subpop1"),
    ("ad_expected_size_subpop2", DesignKind.ADAPTIVE, "expected_subpop2"),
    ("sc_expected_size", DesignKind.STANDARD_COMBINED, "expected_total"),
    ("ss_expected_size", DesignKind.STANDARD_SUBPOP1, "expected_total"),
    ("ad_expected_duration", DesignKind.ADAPTIVE, "expected_duration"),
    ("sc_expected_duration", DesignKind.STANDARD_COMBINED, "expected_duration"),
    ("ss_expected_duration", DesignKind.STANDARD_SUBPOP1, "expected_duration"),
    ("ad_power_h0c_se", DesignKind.ADAPTIVE, "reject_h0c_se"),
    ("ad_power_h01_se", DesignKind.ADAPTIVE, "reject_h01_se"),
    ("ad_power_any_se", DesignKind.ADAPTIVE, "reject_any_se"),
    ("sc_power_h0c_se", DesignKind.STANDARD_COMBINED, "reject_h0c_se"),
    ("ss_power_h01_se", DesignKind.STANDARD_SUBPOP1, "reject_h01_se"),
)


def export_performance_table(grid: PerformanceGrid) -> str:
    """Metrics table with one column per subpopulation-2 treatment effect."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["metric"] + [_fmt(e) for e in grid.effects])
    for row_name, kind, attr in _PERFORMANCE_ROWS:
        values = getattr(grid.designs[kind], attr)
        writer.writerow([row_name] + [_fmt(v) for v in values])
    return out.getvalue()


def parse_table(text: str) -> List[List[str]]:
    """Parse an exported table back into rows of cells (for round-trip checks)."""
    return [row for row in csv.reader(io.StringIO(text)) if row]
