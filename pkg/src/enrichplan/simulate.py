"""Decision-rule execution and Monte Carlo operating characteristics.

The adaptive design applies the following steps at the end of each stage k,
on the cumulative statistics ``Z1`` (subpopulation 1), ``Z2`` (subpopulation
2) and ``ZC`` (combined population):

1. Efficacy: reject the subpopulation-1 hypothesis if ``Z1_k`` exceeds its
   efficacy boundary; reject the combined hypothesis if ``k <= k_star`` and
   ``ZC_k`` exceeds its boundary.  Any rejection stops the whole trial.
2. Whole-trial futility: if ``Z1_k`` is at or below its futility boundary, or
   this is the final stage, stop with no rejection.
3. Enrollment restriction: if ``Z2_k`` is at or below its futility boundary,
   or ``k >= k_star``, stop enrolling subpopulation 2.  From the next stage
   on, only steps 1-2 restricted to ``Z1`` are applied (the combined
   hypothesis is never tested again).
4. Otherwise continue enrolling from the combined population.

The standard designs run the classic group sequential loop on their single
statistic stream; their final-stage futility boundary equals the final
efficacy boundary so the last look always resolves the trial.

Futility boundaries are non-binding: error control is calibrated with them
ignored.  Performance metrics (power, expected sample size, expected
duration) assume they are adhered to; ``futility="ignored"`` reproduces the
calibration-side behaviour.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Callable, Dict, Mapping, Optional, Sequence

import numpy as np

from .boundaries import BoundaryTable
from .errors import ComputationAborted, TimeLimitError, ValidationError
from .model import (
    DesignKind,
    DesignSpec,
    EnrollmentSchedule,
    MonteCarloConfig,
    PopulationParams,
    alternative_law,
    build_schedule,
    p2t_grid,
)

_BATCH_SIZE = 1 << 16

FUTILITY_MODES = ("enforced", "ignored")


@dataclass(frozen=True)
class TrialOutcome:
    """Result of running one simulated path through a design's decision rules."""

    design: DesignKind
    rejected_h01: bool
    rejected_h0c: bool
    stop_stage: int
    subpop2_stop_stage: Optional[int]
    enrolled_subpop1: float
    enrolled_subpop2: float
    enrolled_total: float
    duration_years: float


def stage_duration_years(design: DesignKind, stage: int, spec: DesignSpec,
                         pop: PopulationParams) -> float:
    """Length of one stage in years.

    Enrollment rates are proportional to subpopulation sizes, so an adaptive
    stage through ``k_star`` takes ``n1_per_stage / rate`` years whether or
    not subpopulation 2 is still enrolled, and later stages take
    ``n2_per_stage / (pi1 * rate)``.  The SS design enrolls only
    subpopulation 1, at rate ``pi1 * rate``.
    """
    if spec.enrollment_rate <= 0:
        raise ValidationError("enrollment_rate must be positive")
    if design is DesignKind.ADAPTIVE:
        if stage <= spec.k_star:
            return spec.n1_per_stage / spec.enrollment_rate
        return spec.n2_per_stage / (pop.pi1 * spec.enrollment_rate)
    if design is DesignKind.STANDARD_COMBINED:
        return spec.n_sc / spec.enrollment_rate
    return spec.n_ss / (pop.pi1 * spec.enrollment_rate)


def compute_duration(outcome: TrialOutcome, spec: DesignSpec, pop: PopulationParams) -> float:
    """Total trial duration in years for a completed outcome."""
    return sum(stage_duration_years(outcome.design, k, spec, pop)
               for k in range(1, outcome.stop_stage + 1))


def _check_futility_mode(futility: str) -> bool:
    if futility not in FUTILITY_MODES:
        raise ValidationError(f"futility must be one of {FUTILITY_MODES}, got {futility!r}")
    return futility == "enforced"


def run_adaptive_rules(path: Mapping[str, Sequence[float]], table: BoundaryTable,
                       sched: EnrollmentSchedule, spec: DesignSpec,
                       pop: PopulationParams, futility: str = "enforced") -> TrialOutcome:
    """Run the adaptive decision rules on one path of z-values.

    ``path`` maps stream names (``subpop1``, ``subpop2``, ``combined``) to
    per-stage statistic values covering all stages of the adaptive law.
    """
    enforce = _check_futility_mode(futility)
    z1 = np.asarray(path["subpop1"], dtype=float)
    z2 = np.asarray(path["subpop2"], dtype=float)
    zc = np.asarray(path["combined"], dtype=float)
    k_total, ks = sched.stages, sched.k_star
    if z1.shape != (k_total,) or z2.shape != (ks,) or zc.shape != (ks,):
        raise ValidationError("path length does not match the adaptive schedule")
    u1, uc = table.efficacy_subpop1, table.efficacy_combined
    l1, l2 = table.futility_subpop1, table.futility_subpop2

    restricted_at: Optional[int] = None
    rejected_h01 = rejected_h0c = False
    stop = k_total
    for k in range(1, k_total + 1):
        i = k - 1
        combined_active = restricted_at is None
        if z1[i] > u1[i]:
            rejected_h01 = True
        if combined_active and zc[i] > uc[i]:
            rejected_h0c = True
        if rejected_h01 or rejected_h0c:
            stop = k
            break
        if (enforce and z1[i] <= l1[i]) or k == k_total:
            stop = k
            break
        if combined_active:
            threshold_hit = z2[i] <= l2[i] if enforce else False
            if threshold_hit or k >= ks:
                restricted_at = k
    subpop2_stop = restricted_at if (restricted_at is not None and stop > restricted_at) else None

    n1_total = float(sched.subpop1[stop - 1])
    stop2 = min(stop, restricted_at or ks, ks)
    n2_total = float(sched.subpop2[stop2 - 1])
    outcome = TrialOutcome(
        design=DesignKind.ADAPTIVE,
        rejected_h01=rejected_h01,
        rejected_h0c=rejected_h0c,
        stop_stage=stop,
        subpop2_stop_stage=subpop2_stop,
        enrolled_subpop1=n1_total,
        enrolled_subpop2=n2_total,
        enrolled_total=n1_total + n2_total,
        duration_years=0.0,
    )
    return _with_duration(outcome, spec, pop)


def run_standard_rules(path: Sequence[float], table: BoundaryTable,
                       sched: EnrollmentSchedule, spec: DesignSpec,
                       pop: PopulationParams, design: DesignKind,
                       futility: str = "enforced") -> TrialOutcome:
    """Run the group sequential loop for SC or SS on one statistic path."""
    enforce = _check_futility_mode(futility)
    if design is DesignKind.ADAPTIVE:
        raise ValidationError("run_standard_rules applies to the SC and SS designs")
    z = np.asarray(path, dtype=float)
    k_total = sched.stages
    if z.shape != (k_total,):
        raise ValidationError("path length does not match the schedule")
    if design is DesignKind.STANDARD_COMBINED:
        efficacy, fut = table.efficacy_combined, table.futility_combined
    else:
        efficacy, fut = table.efficacy_subpop1, table.futility_subpop1

    rejected = False
    stop = k_total
    for k in range(1, k_total + 1):
        i = k - 1
        if z[i] > efficacy[i]:
            rejected = True
            stop = k
            break
        if (enforce and z[i] <= fut[i]) or k == k_total:
            stop = k
            break

    if design is DesignKind.STANDARD_COMBINED:
        n1_total = float(sched.subpop1[stop - 1])
        n2_total = float(sched.subpop2[stop - 1])
    else:
        n1_total = float(sched.subpop1[stop - 1])
        n2_total = 0.0
    outcome = TrialOutcome(
        design=design,
        rejected_h01=rejected if design is DesignKind.STANDARD_SUBPOP1 else False,
        rejected_h0c=rejected if design is DesignKind.STANDARD_COMBINED else False,
        stop_stage=stop,
        subpop2_stop_stage=None,
        enrolled_subpop1=n1_total,
        enrolled_subpop2=n2_total,
        enrolled_total=n1_total + n2_total,
        duration_years=0.0,
    )
    return _with_duration(outcome, spec, pop)


def _with_duration(outcome: TrialOutcome, spec: DesignSpec, pop: PopulationParams) -> TrialOutcome:
    return replace(outcome, duration_years=compute_duration(outcome, spec, pop))


# ---------------------------------------------------------------------------
# Vectorized rule evaluation (one boolean pass over a batch of paths).
# ---------------------------------------------------------------------------

def _adaptive_outcomes_batch(z1: np.ndarray, z2: np.ndarray, zc: np.ndarray,
                             table: BoundaryTable, sched: EnrollmentSchedule,
                             spec: DesignSpec, pop: PopulationParams,
                             enforce: bool) -> Dict[str, np.ndarray]:
    n, k_total = z1.shape
    ks = z2.shape[1]
    rows = np.arange(n)
    cols = np.arange(k_total)

    # Restriction stage: first k with Z2 at/below its futility boundary; the
    # +inf sentinel at k_star makes the restriction unconditional there.
    if enforce:
        below_l2 = z2 <= table.futility_subpop2[None, :]
    else:
        below_l2 = np.zeros_like(z2, dtype=bool)
        below_l2[:, -1] = True
    restrict = np.argmax(below_l2, axis=1)

    cross1 = z1 > table.efficacy_subpop1[None, :]
    cross_c = np.zeros((n, k_total), dtype=bool)
    cross_c[:, :ks] = (zc > table.efficacy_combined[None, :]) & \
        (np.arange(ks)[None, :] <= restrict[:, None])

    fut_stop = np.zeros((n, k_total), dtype=bool)
    if enforce:
        fut_stop[:, :] = z1 <= table.futility_subpop1[None, :]
    fut_stop[:, -1] = True  # the trial always ends at the last stage

    stop_any = cross1 | cross_c | fut_stop
    stop = np.argmax(stop_any, axis=1)

    rejected_h01 = cross1[rows, stop]
    rejected_h0c = cross_c[rows, stop]
    stop2 = np.minimum(stop, restrict)
    n1_total = sched.subpop1[stop]
    n2_total = sched.subpop2[stop2]
    restricted = stop > restrict

    stage_time_combined = spec.n1_per_stage / spec.enrollment_rate
    stage_time_restricted = spec.n2_per_stage / (pop.pi1 * spec.enrollment_rate)
    combined_stages = np.minimum(stop, spec.k_star - 1) + 1
    restricted_stages = np.maximum(stop - (spec.k_star - 1), 0)
    duration = combined_stages * stage_time_combined + restricted_stages * stage_time_restricted

    return {
        "rejected_h01": rejected_h01,
        "rejected_h0c": rejected_h0c,
        "rejected_any": rejected_h01 | rejected_h0c,
        "stop_stage": stop + 1,
        "subpop2_stop_stage": np.where(restricted, restrict + 1, 0),
        "enrolled_subpop1": n1_total,
        "enrolled_subpop2": n2_total,
        "enrolled_total": n1_total + n2_total,
        "duration_years": duration,
    }


def _standard_outcomes_batch(z: np.ndarray, table: BoundaryTable,
                             sched: EnrollmentSchedule, spec: DesignSpec,
                             pop: PopulationParams, design: DesignKind,
                             enforce: bool) -> Dict[str, np.ndarray]:
    n, k_total = z.shape
    rows = np.arange(n)
    if design is DesignKind.STANDARD_COMBINED:
        efficacy, fut = table.efficacy_combined, table.futility_combined
    else:
        efficacy, fut = table.efficacy_subpop1, table.futility_subpop1

    cross = z > efficacy[None, :]
    fut_stop = np.zeros((n, k_total), dtype=bool)
    if enforce:
        fut_stop[:, :] = z <= fut[None, :]
    fut_stop[:, -1] = True
    stop = np.argmax(cross | fut_stop, axis=1)
    rejected = cross[rows, stop]

    n1_total = sched.subpop1[stop]
    n2_total = sched.subpop2[stop] if sched.subpop2 is not None else np.zeros(n)
    per_stage = stage_duration_years(design, 1, spec, pop)
    is_ss = design is DesignKind.STANDARD_SUBPOP1
    return {
        "rejected_h01": rejected if is_ss else np.zeros(n, dtype=bool),
        "rejected_h0c": rejected if not is_ss else np.zeros(n, dtype=bool),
        "rejected_any": rejected,
        "stop_stage": stop + 1,
        "subpop2_stop_stage": np.zeros(n, dtype=int),
        "enrolled_subpop1": n1_total,
        "enrolled_subpop2": n2_total,
        "enrolled_total": n1_total + n2_total,
        "duration_years": (stop + 1) * per_stage,
    }


# ---------------------------------------------------------------------------
# Performance sweep.
# ---------------------------------------------------------------------------

_PROB_METRICS = ("rejected_h0c", "rejected_h01", "rejected_any")
_MEAN_METRICS = ("enrolled_total", "enrolled_subpop1", "enrolled_subpop2", "duration_years")


@dataclass(frozen=True)
class DesignPerformance:
    """Grid-indexed operating characteristics of one design."""

    design: DesignKind
    reject_h0c: np.ndarray
    reject_h0c_se: np.ndarray
    reject_h01: np.ndarray
    reject_h01_se: np.ndarray
    reject_any: np.ndarray
    reject_any_se: np.ndarray
    expected_total: np.ndarray
    expected_total_se: np.ndarray
    expected_subpop1: np.ndarray
    expected_subpop2: np.ndarray
    expected_duration: np.ndarray
    expected_duration_se: np.ndarray


@dataclass(frozen=True)
class PerformanceGrid:
    """Operating characteristics over the subpopulation-2 effect grid."""

    p2t: np.ndarray
    effects: np.ndarray
    designs: Dict[DesignKind, DesignPerformance]
    iterations: int
    seed: int
    futility: str
    wall_time_s: float


class _Accumulator:
    """Running sums for one (design, grid point) cell."""

    __slots__ = ("n", "sums", "sumsq")

    def __init__(self):
        self.n = 0
        self.sums = {m: 0.0 for m in _PROB_METRICS + _MEAN_METRICS}
        self.sumsq = {m: 0.0 for m in _MEAN_METRICS}

    def add(self, outcomes: Dict[str, np.ndarray]) -> None:
        self.n += len(outcomes["rejected_any"])
        for m in _PROB_METRICS:
            self.sums[m] += float(outcomes[m].sum())
        for m in _MEAN_METRICS:
            values = outcomes[m]
            self.sums[m] += float(values.sum())
            self.sumsq[m] += float((values * values).sum())

    def probability(self, metric):
        p = self.sums[metric] / self.n
        return p, float(np.sqrt(p * (1.0 - p) / self.n))

    def mean(self, metric):
        mean = self.sums[metric] / self.n
        var = max(self.sumsq[metric] / self.n - mean * mean, 0.0)
        if self.n > 1:
            var *= self.n / (self.n - 1)
        return mean, float(np.sqrt(var / self.n))


def estimate_performance(spec: DesignSpec, pop: PopulationParams,
                         tables: Mapping[DesignKind, BoundaryTable],
                         mc: MonteCarloConfig,
                         p2t_values: Optional[Sequence[float]] = None,
                         futility: str = "enforced",
                         abort_check: Optional[Callable[[], bool]] = None) -> PerformanceGrid:
    """Simulate all three designs over a grid of subpopulation-2 alternatives.

    Each iteration draws one block of standard-normal increments per design;
    the same blocks are reused at every grid point (only the means and the
    variance weights change with ``p2t``), so performance curves are smooth in
    the effect size and the SS design, whose law does not involve
    subpopulation 2 at all, is reproduced bit-for-bit across the grid.

    Raises :class:`TimeLimitError` when ``mc.time_limit_s`` is exceeded, and
    calls ``abort_check`` between batches so a caller can cancel early.
    """
    enforce = _check_futility_mode(futility)
    grid = np.asarray(p2t_grid(pop, mc) if p2t_values is None else p2t_values, dtype=float)
    if grid.size == 0:
        raise ValidationError("the p2t grid must contain at least one point")
    for value in grid:
        if not 0.0 < value < 1.0:
            raise ValidationError(f"grid value p2t={value!r} must lie in (0, 1)")
    for kind in DesignKind:
        if kind not in tables:
            raise ValidationError(f"missing boundary table for design {kind.value}")

    scheds = {kind: build_schedule(spec, pop, kind) for kind in DesignKind}
    laws = [{kind: alternative_law(scheds[kind], pop, p2t) for kind in DesignKind}
            for p2t in grid]
    cells = {kind: [_Accumulator() for _ in grid] for kind in DesignKind}

    k_total, ks = spec.stages, spec.k_star
    started = time.monotonic()
    remaining = mc.iterations
    batch_index = 0
    while remaining > 0:
        if mc.time_limit_s is not None and time.monotonic() - started > mc.time_limit_s:
            raise TimeLimitError()
        if abort_check is not None and abort_check():
            raise ComputationAborted("computation aborted")
        nb = min(remaining, _BATCH_SIZE)
        rng = np.random.default_rng([mc.seed, batch_index])
        g_ad1 = rng.standard_normal((nb, k_total))
        g_ad2 = rng.standard_normal((nb, ks))
        g_sc = rng.standard_normal((nb, k_total))
        g_ss = rng.standard_normal((nb, k_total))
        base = {
            DesignKind.ADAPTIVE: np.concatenate([g_ad1, g_ad2], axis=1),
            DesignKind.STANDARD_COMBINED: g_sc,
            DesignKind.STANDARD_SUBPOP1: g_ss,
        }
        for gi in range(len(grid)):
            for kind in DesignKind:
                law = laws[gi][kind]
                paths = law.transform(base[kind])
                streams = law.streams()
                if kind is DesignKind.ADAPTIVE:
                    outcomes = _adaptive_outcomes_batch(
                        paths[:, streams["subpop1"]], paths[:, streams["subpop2"]],
                        paths[:, streams["combined"]], tables[kind], scheds[kind],
                        spec, pop, enforce)
                else:
                    stream = "combined" if kind is DesignKind.STANDARD_COMBINED else "subpop1"
                    outcomes = _standard_outcomes_batch(
                        paths[:, streams[stream]], tables[kind], scheds[kind],
                        spec, pop, kind, enforce)
                cells[kind][gi].add(outcomes)
        remaining -= nb
        batch_index += 1

    designs = {}
    for kind in DesignKind:
        metrics = {}
        for name, key in (("reject_h0c", "rejected_h0c"), ("reject_h01", "rejected_h01"),
                          ("reject_any", "rejected_any")):
            values, ses = zip(*(cells[kind][gi].probability(key) for gi in range(len(grid))))
            metrics[name] = np.array(values)
            metrics[name + "_se"] = np.array(ses)
        for name, key in (("expected_total", "enrolled_total"),
                          ("expected_duration", "duration_years")):
            values, ses = zip(*(cells[kind][gi].mean(key) for gi in range(len(grid))))
            metrics[name] = np.array(values)
            metrics[name + "_se"] = np.array(ses)
        for name, key in (("expected_subpop1", "enrolled_subpop1"),
                          ("expected_subpop2", "enrolled_subpop2")):
            metrics[name] = np.array([cells[kind][gi].mean(key)[0] for gi in range(len(grid))])
        designs[kind] = DesignPerformance(design=kind, **metrics)

    return PerformanceGrid(
        p2t=grid,
        effects=grid - pop.p2c,
        designs=designs,
        iterations=mc.iterations,
        seed=mc.seed,
        futility=futility,
        wall_time_s=time.monotonic() - started,
    )
