"""Efficacy/futility boundary calibration for the three designs.

All efficacy boundaries follow the Wang-Tsiatis shape
``constant * (N_k / N_K) ** delta`` where ``N_k`` is the stream's cumulative
enrollment.  The proportionality constants are calibrated so that, under the
global null hypothesis and ignoring futility, the probability of crossing any
efficacy boundary equals the familywise error level.

Calibration estimates crossing probabilities by Monte Carlo over a fixed,
pre-drawn block of standard-normal increments (common random numbers).  For a
fixed seed the estimate is a deterministic, nonincreasing step function of
each threshold, which makes bisection on the proportionality constant
converge without noise-induced oscillation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import numpy as np
from scipy.stats import norm

from .errors import CalibrationError, ValidationError
from .model import (
    DesignKind,
    DesignSpec,
    EnrollmentSchedule,
    MonteCarloConfig,
    PopulationParams,
    ZJointLaw,
    build_schedule,
    null_law,
)

#: Bisection stops once the bracket on the constant is narrower than this.
CONSTANT_TOLERANCE = 1e-4
MAX_BISECTION_STEPS = 60
_MAX_BRACKET_EXPANSIONS = 80


def wang_tsiatis_shape(cumulative: np.ndarray, delta: float) -> np.ndarray:
    """Per-stage shape multipliers ``(N_k / N_last) ** delta``."""
    n = np.asarray(cumulative, dtype=float)
    return (n / n[-1]) ** delta


@dataclass(frozen=True)
class BoundaryTable:
    """Calibrated per-stage boundaries for one design.

    Streams not used by a design are ``None``.  For the adaptive design the
    combined-statistic efficacy boundary and the subpopulation-2 futility
    boundary exist only through stage ``k_star``; the last subpopulation-2
    futility entry is ``+inf``, the sentinel for the unconditional stop of
    subpopulation-2 enrollment at ``k_star``.
    """

    design: DesignKind
    delta: float
    efficacy_subpop1: Optional[np.ndarray]
    efficacy_combined: Optional[np.ndarray]
    futility_subpop1: Optional[np.ndarray]
    futility_subpop2: Optional[np.ndarray]
    futility_combined: Optional[np.ndarray]
    constants: Dict[str, float]
    flags: Tuple[str, ...] = ()
    calibration_seed: Optional[int] = None
    diagnostics: Dict[str, dict] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("efficacy_subpop1", "efficacy_combined", "futility_subpop1",
                     "futility_subpop2", "futility_combined"):
            value = getattr(self, name)
            if value is not None:
                arr = np.asarray(value, dtype=float)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)


class CrossingEstimator:
    """Monte Carlo crossing probabilities over a fixed block of null paths.

    The block is drawn once from ``law`` at construction; every call to
    :meth:`probability` reuses it, so estimates are common-random-number
    coupled across candidate boundaries.
    """

    def __init__(self, law: ZJointLaw, n_paths: int, seed: int):
        if n_paths <= 0:
            raise ValidationError("crossing estimation requires at least one path")
        self.law = law
        self.n_paths = int(n_paths)
        self.seed = seed
        rng = np.random.default_rng(seed)
        paths = law.sample(self.n_paths, rng)
        self._streams = {name: paths[:, idx] for name, idx in law.streams().items()}

    def probability(self, bounds: Mapping[str, Optional[np.ndarray]]) -> float:
        """Fraction of paths on which any active stream exceeds its bound.

        ``bounds`` maps stream names (a subset of ``law.streams()``) to
        per-stage threshold vectors; ``None`` disables a stream.  Futility is
        ignored by construction: this is the pure boundary-crossing event.
        """
        crossed = np.zeros(self.n_paths, dtype=bool)
        for name, threshold in bounds.items():
            if threshold is None:
                continue
            if name not in self._streams:
                raise ValidationError(f"law has no stream named {name!r}")
            z = self._streams[name]
            t = np.asarray(threshold, dtype=float)
            if t.shape != (z.shape[1],):
                raise ValidationError(
                    f"threshold for {name!r} must have length {z.shape[1]}, got {t.shape}")
            crossed |= (z > t).any(axis=1)
        return float(crossed.mean())


def crossing_probability(law: ZJointLaw, bounds: Mapping[str, Optional[np.ndarray]],
                         mc: MonteCarloConfig) -> float:
    """One-shot Monte Carlo estimate of P(any efficacy boundary crossed).

    Uses ``mc.calibration_paths`` paths seeded by ``mc.calibration_seed``;
    futility plays no role.  Deterministic for fixed config, and nonincreasing
    in every threshold entry.
    """
    return CrossingEstimator(law, mc.calibration_paths, mc.calibration_seed).probability(bounds)


@dataclass(frozen=True)
class CalibratedConstants:
    """Proportionality constants for one design plus solver diagnostics."""

    design: DesignKind
    values: Dict[str, float]
    flags: Tuple[str, ...] = ()
    diagnostics: Dict[str, dict] = field(default_factory=dict)


def _smallest_constant(prob_of_constant, target: float) -> Tuple[float, dict]:
    """Smallest constant c (within tolerance) with ``prob_of_constant(c) <= target``.

    ``prob_of_constant`` must be nonincreasing, which the common-random-number
    estimator guarantees exactly.  The initial bracket expands until it
    straddles the transition.
    """
    lo, hi = 0.5, 4.0
    evaluations = 0

    def prob(c):
        nonlocal evaluations
        evaluations += 1
        return prob_of_constant(c)

    expansions = 0
    while prob(hi) > target:
        hi += max(hi, 1.0)
        expansions += 1
        if expansions > _MAX_BRACKET_EXPANSIONS:
            raise CalibrationError(
                "could not bracket the boundary constant from above; "
                "crossing probability stays above the target")
    expansions = 0
    while prob(lo) <= target:
        lo -= max(abs(lo), 1.0)
        expansions += 1
        if expansions > _MAX_BRACKET_EXPANSIONS:
            raise CalibrationError(
                "could not bracket the boundary constant from below; "
                "crossing probability never exceeds the target "
                "(Monte Carlo configuration too coarse?)")

    steps = 0
    while hi - lo > CONSTANT_TOLERANCE:
        steps += 1
        if steps > MAX_BISECTION_STEPS:
            raise CalibrationError(
                f"bisection did not converge within {MAX_BISECTION_STEPS} steps")
        mid = 0.5 * (lo + hi)
        if prob(mid) <= target:
            hi = mid
        else:
            lo = mid
    achieved = prob(hi)
    return hi, {"evaluations": evaluations, "bisection_steps": steps,
                "bracket": (lo, hi), "achieved": achieved, "target": target}


def solve_single_stream(spec: DesignSpec, law: ZJointLaw, mc: MonteCarloConfig) -> CalibratedConstants:
    """Calibrate the efficacy constant for a single-stream design (SC or SS).

    Finds the smallest ``e`` such that the probability of
    ``Z_k > e * (N_k / N_K) ** delta`` at any stage equals ``alpha`` under the
    global null.  A single-stage design reduces to the exact normal quantile.
    """
    if law.design is DesignKind.ADAPTIVE:
        raise ValidationError("solve_single_stream applies to the SC and SS designs")
    stream = "combined" if law.design is DesignKind.STANDARD_COMBINED else "subpop1"
    key = "e_sc" if law.design is DesignKind.STANDARD_COMBINED else "e_ss"
    cumulative = (law.schedule.combined if stream == "combined" else law.schedule.subpop1)
    if len(cumulative) == 1:
        value = float(norm.ppf(1.0 - spec.alpha))
        return CalibratedConstants(law.design, {key: value},
                                   diagnostics={key: {"method": "exact single look"}})
    shape = wang_tsiatis_shape(cumulative, spec.delta)
    estimator = CrossingEstimator(law, mc.calibration_paths, mc.calibration_seed)
    value, diag = _smallest_constant(
        lambda c: estimator.probability({stream: c * shape}), spec.alpha)
    return CalibratedConstants(law.design, {key: value}, diagnostics={key: diag})


def solve_adaptive(spec: DesignSpec, law: ZJointLaw, mc: MonteCarloConfig) -> CalibratedConstants:
    """Calibrate the two efficacy constants of the adaptive design.

    Stage one disables the subpopulation-1 boundary and finds the smallest
    constant for the combined statistic whose crossing probability under the
    global null is ``a_c * alpha``.  Stage two holds that constant fixed and
    finds the smallest subpopulation-1 constant keeping the probability of
    rejecting at least one hypothesis at or below ``alpha``.  Futility is
    ignored throughout, which is what makes the futility boundaries
    non-binding.
    """
    if law.design is not DesignKind.ADAPTIVE:
        raise ValidationError("solve_adaptive requires the adaptive design law")
    sched = law.schedule
    shape_c = wang_tsiatis_shape(sched.combined, spec.delta)
    shape_1 = wang_tsiatis_shape(sched.subpop1, spec.delta)
    flags = []
    diagnostics: Dict[str, dict] = {}
    estimator = None

    def get_estimator():
        nonlocal estimator
        if estimator is None:
            estimator = CrossingEstimator(law, mc.calibration_paths, mc.calibration_seed)
        return estimator

    target_c = spec.a_c * spec.alpha
    if spec.a_c == 0.0:
        e_c = math.inf
        flags.append("combined-statistic boundary disabled (no alpha allocated)")
        diagnostics["e_ad_c"] = {"method": "sentinel, a_c = 0"}
    elif sched.k_star == 1:
        e_c = float(norm.ppf(1.0 - target_c))
        diagnostics["e_ad_c"] = {"method": "exact single look"}
    else:
        e_c, diag = _smallest_constant(
            lambda c: get_estimator().probability({"combined": c * shape_c}), target_c)
        diagnostics["e_ad_c"] = diag

    if spec.a_c == 1.0:
        # The combined test already spends the whole budget; any finite
        # subpopulation-1 boundary would push the familywise error above it.
        e_1 = math.inf
        flags.append("subpopulation-1 boundary infeasible (all alpha allocated "
                     "to the combined test)")
        diagnostics["e_ad_1"] = {"method": "sentinel, a_c = 1"}
    elif spec.a_c == 0.0 and spec.stages == 1:
        e_1 = float(norm.ppf(1.0 - spec.alpha))
        diagnostics["e_ad_1"] = {"method": "exact single look"}
    else:
        uc_fixed = None if math.isinf(e_c) else e_c * shape_c
        e_1, diag = _smallest_constant(
            lambda c: get_estimator().probability(
                {"combined": uc_fixed, "subpop1": c * shape_1}),
            spec.alpha)
        diagnostics["e_ad_1"] = diag

    return CalibratedConstants(DesignKind.ADAPTIVE, {"e_ad_c": e_c, "e_ad_1": e_1},
                               tuple(flags), diagnostics)


def materialize_boundaries(spec: DesignSpec, sched: EnrollmentSchedule,
                           constants: CalibratedConstants,
                           calibration_seed: Optional[int] = None) -> BoundaryTable:
    """Expand calibrated constants into full per-stage boundary tables.

    Futility boundaries use the same shape exponent as efficacy with the
    user-supplied proportionality constants.  For SC and SS the final-stage
    futility boundary is set equal to the final efficacy boundary so the last
    statistic always resolves the trial; for the adaptive design the
    subpopulation-2 futility entry at ``k_star`` is the ``+inf`` sentinel.
    """
    d = spec.delta
    if sched.design is DesignKind.ADAPTIVE:
        shape_1 = wang_tsiatis_shape(sched.subpop1, d)
        shape_c = wang_tsiatis_shape(sched.combined, d)
        shape_2 = wang_tsiatis_shape(sched.subpop2, d)
        l2 = spec.f_ad2 * shape_2
        l2[-1] = math.inf
        return BoundaryTable(
            design=DesignKind.ADAPTIVE,
            delta=d,
            efficacy_subpop1=constants.values["e_ad_1"] * shape_1,
            efficacy_combined=constants.values["e_ad_c"] * shape_c,
            futility_subpop1=spec.f_ad1 * shape_1,
            futility_subpop2=l2,
            futility_combined=None,
            constants=dict(constants.values),
            flags=constants.flags,
            calibration_seed=calibration_seed,
            diagnostics=dict(constants.diagnostics),
        )
    if sched.design is DesignKind.STANDARD_COMBINED:
        shape = wang_tsiatis_shape(sched.combined, d)
        efficacy = constants.values["e_sc"] * shape
        futility = spec.f_sc * shape
        futility[-1] = efficacy[-1]
        return BoundaryTable(
            design=DesignKind.STANDARD_COMBINED,
            delta=d,
            efficacy_subpop1=None,
            efficacy_combined=efficacy,
            futility_subpop1=None,
            futility_subpop2=None,
            futility_combined=futility,
            constants=dict(constants.values),
            flags=constants.flags,
            calibration_seed=calibration_seed,
            diagnostics=dict(constants.diagnostics),
        )
    shape = wang_tsiatis_shape(sched.subpop1, d)
    efficacy = constants.values["e_ss"] * shape
    futility = spec.f_ss * shape
    futility[-1] = efficacy[-1]
    return BoundaryTable(
        design=DesignKind.STANDARD_SUBPOP1,
        delta=d,
        efficacy_subpop1=efficacy,
        efficacy_combined=None,
        futility_subpop1=futility,
        futility_subpop2=None,
        futility_combined=None,
        constants=dict(constants.values),
        flags=constants.flags,
        calibration_seed=calibration_seed,
        diagnostics=dict(constants.diagnostics),
    )


def calibrate_design(spec: DesignSpec, pop: PopulationParams, design: DesignKind,
                     mc: MonteCarloConfig) -> BoundaryTable:
    """Calibrate one design end to end: schedule, null law, constants, table."""
    sched = build_schedule(spec, pop, design)
    law = null_law(sched, pop)
    if design is DesignKind.ADAPTIVE:
        constants = solve_adaptive(spec, law, mc)
    else:
        constants = solve_single_stream(spec, law, mc)
    return materialize_boundaries(spec, sched, constants, mc.calibration_seed)


def calibrate_all(spec: DesignSpec, pop: PopulationParams,
                  mc: MonteCarloConfig) -> Dict[DesignKind, BoundaryTable]:
    """Boundary tables for AD, SC, and SS under one shared configuration."""
    return {kind: calibrate_design(spec, pop, kind, mc) for kind in DesignKind}
