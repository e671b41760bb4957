"""Domain parameters, enrollment schedules, and the joint law of the z-statistics.

Three designs are compared throughout the package:

* ``AD`` -- an adaptive design enrolling both subpopulations that may restrict
  enrollment to subpopulation 1 mid-trial, testing both the combined-population
  hypothesis and the subpopulation-1 hypothesis.
* ``SC`` -- a standard group sequential design enrolling the combined
  population and testing only the combined-population hypothesis.
* ``SS`` -- a standard group sequential design enrolling only subpopulation 1.

Every analysis is based on cumulative z-statistics (standardized differences
in sample means between arms).  Asymptotically the stacked statistics are
multivariate normal; :class:`ZJointLaw` materializes that law (mean vector,
covariance matrix, and a factor matrix used to sample paths from independent
standard-normal increments).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from .errors import ValidationError

MAX_STAGES = 20

#: Documented default seeds so that results are reproducible out of the box.
DEFAULT_CALIBRATION_SEED = 12345
DEFAULT_SIMULATION_SEED = 67890


class DesignKind(str, Enum):
    """The three trial designs handled by the workbench."""

    ADAPTIVE = "AD"
    STANDARD_COMBINED = "SC"
    STANDARD_SUBPOP1 = "SS"


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ValidationError(message)


def _open_unit(name: str, value: float) -> None:
    _require(0.0 < value < 1.0, f"{name} must lie strictly inside (0, 1), got {value!r}")


@dataclass(frozen=True)
class PopulationParams:
    """Subpopulation mix and success probabilities.

    Attributes:
        pi1: Proportion of the population in subpopulation 1.
        p1c: Success probability in subpopulation 1 under control.
        p1t: Success probability in subpopulation 1 under treatment.
        p2c: Success probability in subpopulation 2 under control.

    The subpopulation-2 treatment probability is never stored here; it is
    supplied per evaluation point (performance is swept over a grid of values).
    """

    pi1: float = 0.33
    p1c: float = 0.25
    p1t: float = 0.375
    p2c: float = 0.2

    def __post_init__(self):
        _open_unit("pi1", self.pi1)
        for name in ("p1c", "p1t", "p2c"):
            _open_unit(name, getattr(self, name))

    @property
    def pi2(self) -> float:
        return 1.0 - self.pi1


@dataclass(frozen=True)
class DesignSpec:
    """Structural parameters shared by the three designs.

    Attributes:
        stages: Total number of stages K (at most 20).
        k_star: Last stage at which subpopulation 2 may be enrolled in the
            adaptive design.  Setting ``k_star == stages`` keeps combined
            enrollment available throughout.
        n1_per_stage: Combined-population enrollment per stage of the adaptive
            design while both subpopulations are enrolled.
        n2_per_stage: Subpopulation-1 enrollment per stage of the adaptive
            design after stage ``k_star``.
        n_sc: Per-stage enrollment of the standard combined design.
        n_ss: Per-stage enrollment of the standard subpopulation-1 design.
        alpha: Familywise Type I error level (one-sided).
        a_c: Fraction of ``alpha`` initially allocated to the combined test in
            the adaptive design, in [0, 1].
        delta: Boundary shape exponent in [-0.5, 0.5]; -0.5 gives
            O'Brien-Fleming-type boundaries, 0 gives flat (Pocock-type) ones.
        f_ad1, f_ad2, f_sc, f_ss: Futility proportionality constants.
        enrollment_rate: Combined-population enrollment rate, participants
            per year.
    """

    stages: int = 5
    k_star: int = 3
    n1_per_stage: float = 280.0
    n2_per_stage: float = 148.0
    n_sc: float = 95.0
    n_ss: float = 102.0
    alpha: float = 0.025
    a_c: float = 0.09
    delta: float = -0.5
    f_ad1: float = 0.0
    f_ad2: float = 0.0
    f_sc: float = 0.0
    f_ss: float = 0.0
    enrollment_rate: float = 280.0

    def __post_init__(self):
        _require(isinstance(self.stages, int) and isinstance(self.k_star, int),
                 "stages and k_star must be integers")
        _require(1 <= self.stages <= MAX_STAGES,
                 f"stages must be in 1..{MAX_STAGES}, got {self.stages}")
        _require(1 <= self.k_star <= self.stages,
                 f"k_star must be in 1..stages, got k_star={self.k_star}, stages={self.stages}")
        _require(-0.5 <= self.delta <= 0.5,
                 f"delta must lie in [-0.5, 0.5], got {self.delta}")
        _open_unit("alpha", self.alpha)
        _require(0.0 <= self.a_c <= 1.0, f"a_c must lie in [0, 1], got {self.a_c}")
        for name in ("n1_per_stage", "n2_per_stage", "n_sc", "n_ss"):
            _require(getattr(self, name) > 0, f"{name} must be positive")
        _require(self.enrollment_rate > 0, "enrollment_rate must be positive")


def _frozen_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class EnrollmentSchedule:
    """Maximum cumulative enrollment by end of each stage, per subpopulation.

    Values are exact reals; ``pi1 * n1_per_stage`` is generally non-integer and
    is deliberately not rounded (boundaries depend on information fractions,
    not integer head counts).  ``subpop2``/``combined`` are ``None`` where the
    design never defines them (e.g. the SS design enrolls nobody from
    subpopulation 2), and stop at ``k_star`` for the adaptive design.
    """

    design: DesignKind
    k_star: int
    subpop1: np.ndarray
    subpop2: Optional[np.ndarray]
    combined: Optional[np.ndarray]

    def __post_init__(self):
        object.__setattr__(self, "subpop1", _frozen_array(self.subpop1))
        if self.subpop2 is not None:
            object.__setattr__(self, "subpop2", _frozen_array(self.subpop2))
        if self.combined is not None:
            object.__setattr__(self, "combined", _frozen_array(self.combined))

    @property
    def stages(self) -> int:
        return len(self.subpop1)

    def max_total(self) -> float:
        """Maximum total enrollment if the trial runs to the last stage."""
        total = float(self.subpop1[-1])
        if self.subpop2 is not None:
            total += float(self.subpop2[-1])
        return total


def build_schedule(spec: DesignSpec, pop: PopulationParams, design: DesignKind) -> EnrollmentSchedule:
    """Build the deterministic maximum-enrollment schedule for one design.

    For the adaptive design, both subpopulations are enrolled proportionally
    to their population shares through stage ``k_star`` (``n1_per_stage``
    participants per stage combined); afterwards only subpopulation 1 is
    enrolled at ``n2_per_stage`` per stage.  The standard designs enroll a
    constant number per stage.
    """
    k = np.arange(1, spec.stages + 1, dtype=float)
    if design is DesignKind.ADAPTIVE:
        ks = spec.k_star
        n1 = np.where(
            k <= ks,
            pop.pi1 * spec.n1_per_stage * k,
            pop.pi1 * spec.n1_per_stage * ks + spec.n2_per_stage * (k - ks),
        )
        n2 = pop.pi2 * spec.n1_per_stage * k[:ks]
        combined = spec.n1_per_stage * k[:ks]
        return EnrollmentSchedule(design, ks, n1, n2, combined)
    if design is DesignKind.STANDARD_COMBINED:
        combined = spec.n_sc * k
        return EnrollmentSchedule(design, spec.stages, pop.pi1 * combined,
                                  pop.pi2 * combined, combined)
    if design is DesignKind.STANDARD_SUBPOP1:
        return EnrollmentSchedule(design, spec.stages, spec.n_ss * k, None, None)
    raise ValidationError(f"unknown design kind: {design!r}")


def effect_variance(p_control: float, p_treatment: float) -> float:
    """Sum of the two arms' Bernoulli outcome variances.

    This is the variance unit of the z-statistics: a difference in sample
    means over ``N`` participants split evenly between arms has variance
    ``2 * effect_variance / N``.
    """
    for value in (p_control, p_treatment):
        if not 0.0 < value < 1.0:
            raise ValidationError(
                f"degenerate outcome variance: probability {value!r} not in (0, 1)")
    return p_control * (1.0 - p_control) + p_treatment * (1.0 - p_treatment)


def _serial_correlation(cumulative: np.ndarray) -> np.ndarray:
    """Within-stream correlation matrix: Corr(Z_j, Z_k) = sqrt(N_j / N_k), j <= k."""
    n = np.asarray(cumulative, dtype=float)
    ratio = np.minimum.outer(n, n) / np.maximum.outer(n, n)
    corr = np.sqrt(ratio)
    np.fill_diagonal(corr, 1.0)
    return corr


def _increment_factor(cumulative: np.ndarray) -> np.ndarray:
    """Lower-triangular factor mapping iid normals to a standardized stream.

    Row k is ``sqrt(increment_j) / sqrt(N_k)`` for j <= k, so that the product
    with a standard-normal vector has the serial correlation
    ``sqrt(N_j / N_k)`` and unit variance at every stage.
    """
    n = np.asarray(cumulative, dtype=float)
    increments = np.diff(n, prepend=0.0)
    factor = np.tril(np.tile(np.sqrt(increments), (len(n), 1)))
    return factor / np.sqrt(n)[:, None]


@dataclass(frozen=True)
class ZJointLaw:
    """Multivariate normal law of the stacked sequential z-statistics.

    The stacking order is design dependent:

    * AD: ``(Z1_1..Z1_K, Z2_1..Z2_kstar, ZC_1..ZC_kstar)``
    * SC: ``(ZC_1..ZC_K)``
    * SS: ``(Z1_1..Z1_K)``

    ``factor`` maps independent standard normals (one per enrollment
    increment) onto the zero-mean statistics, i.e. ``cov == factor @ factor.T``
    up to floating point; sampling uses this factorization rather than a dense
    Cholesky of ``cov``.
    """

    design: DesignKind
    schedule: EnrollmentSchedule
    mean: np.ndarray
    cov: np.ndarray
    factor: np.ndarray
    sigma1_sq: float
    sigma2_sq: float
    sigma_c_sq: float
    w1: float
    w2: float

    def __post_init__(self):
        for name in ("mean", "cov", "factor"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))

    @property
    def dimension(self) -> int:
        return len(self.mean)

    @property
    def n_factors(self) -> int:
        return self.factor.shape[1]

    def streams(self) -> dict:
        """Slices of the stacked vector, keyed by statistic stream."""
        k = self.schedule.stages
        ks = self.schedule.k_star
        if self.design is DesignKind.ADAPTIVE:
            return {
                "subpop1": slice(0, k),
                "subpop2": slice(k, k + ks),
                "combined": slice(k + ks, k + 2 * ks),
            }
        if self.design is DesignKind.STANDARD_COMBINED:
            return {"combined": slice(0, k)}
        return {"subpop1": slice(0, k)}

    def transform(self, base_normals: np.ndarray) -> np.ndarray:
        """Map iid standard normals (n, n_factors) to statistic paths (n, dim)."""
        if base_normals.shape[1] != self.n_factors:
            raise ValidationError(
                f"expected {self.n_factors} increment columns, got {base_normals.shape[1]}")
        return base_normals @ self.factor.T + self.mean

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` paths of the stacked statistics."""
        return self.transform(rng.standard_normal((n, self.n_factors)))


def _variances(pop: PopulationParams, p1t: float, p2t: float):
    s1 = effect_variance(pop.p1c, p1t)
    s2 = effect_variance(pop.p2c, p2t)
    sc = pop.pi1 * s1 + pop.pi2 * s2
    return s1, s2, sc


def z_mean_vector(sched: EnrollmentSchedule, pop: PopulationParams, p2t: float) -> np.ndarray:
    """Asymptotic mean of the stacked z-statistics at a given alternative.

    For each subpopulation stream ``E[Z_s_k] = (p_st - p_sc) *
    sqrt(N_s_k / (2 sigma_s^2))``; the combined stream uses the
    population-weighted effect and variance.
    """
    _open_unit("p2t", p2t)
    s1, s2, sc = _variances(pop, pop.p1t, p2t)
    d1 = pop.p1t - pop.p1c
    d2 = p2t - pop.p2c
    dc = pop.pi1 * d1 + pop.pi2 * d2
    if sched.design is DesignKind.ADAPTIVE:
        return np.concatenate([
            d1 * np.sqrt(sched.subpop1 / (2.0 * s1)),
            d2 * np.sqrt(sched.subpop2 / (2.0 * s2)),
            dc * np.sqrt(sched.combined / (2.0 * sc)),
        ])
    if sched.design is DesignKind.STANDARD_COMBINED:
        return dc * np.sqrt(sched.combined / (2.0 * sc))
    return d1 * np.sqrt(sched.subpop1 / (2.0 * s1))


def z_covariance(sched: EnrollmentSchedule, pop: PopulationParams, p2t: float) -> np.ndarray:
    """Covariance matrix of the stacked z-statistics.

    Within each stream ``Corr(Z_j, Z_k) = sqrt(N_j / N_k)``; the two
    subpopulation streams are independent, and the combined statistic is the
    linear combination ``ZC_k = w1 Z1_k + w2 Z2_k`` with
    ``w_s = sqrt(pi_s sigma_s^2 / sigma_C^2)``, which fixes every
    cross-covariance.  Diagonal entries are exactly 1.
    """
    _open_unit("p2t", p2t)
    s1, s2, sc = _variances(pop, pop.p1t, p2t)
    if sched.design is DesignKind.STANDARD_COMBINED:
        return _serial_correlation(sched.combined)
    if sched.design is DesignKind.STANDARD_SUBPOP1:
        return _serial_correlation(sched.subpop1)

    k, ks = sched.stages, sched.k_star
    w1 = math.sqrt(pop.pi1 * s1 / sc)
    w2 = math.sqrt(pop.pi2 * s2 / sc)
    corr1 = _serial_correlation(sched.subpop1)
    corr2 = _serial_correlation(sched.subpop2)
    dim = k + 2 * ks
    cov = np.zeros((dim, dim))
    i1, i2, ic = slice(0, k), slice(k, k + ks), slice(k + ks, dim)
    cov[i1, i1] = corr1
    cov[i2, i2] = corr2
    # Cov(Z1_j, ZC_k) = w1 Corr(Z1_j, Z1_k); ZC exists only for k <= k_star.
    cov[i1, ic] = w1 * corr1[:, :ks]
    cov[ic, i1] = cov[i1, ic].T
    cov[i2, ic] = w2 * corr2
    cov[ic, i2] = cov[i2, ic].T
    cov[ic, ic] = w1 * w1 * corr1[:ks, :ks] + w2 * w2 * corr2
    np.fill_diagonal(cov, 1.0)
    return cov


def _joint_law(sched: EnrollmentSchedule, pop: PopulationParams,
               p1t: float, p2t: float) -> ZJointLaw:
    s1, s2, sc = _variances(pop, p1t, p2t)
    w1 = math.sqrt(pop.pi1 * s1 / sc)
    w2 = math.sqrt(pop.pi2 * s2 / sc)
    pop_at = replace(pop, p1t=p1t)
    mean = z_mean_vector(sched, pop_at, p2t)
    cov = z_covariance(sched, pop_at, p2t)

    if sched.design is DesignKind.ADAPTIVE:
        k, ks = sched.stages, sched.k_star
        f1 = _increment_factor(sched.subpop1)
        f2 = _increment_factor(sched.subpop2)
        factor = np.zeros((k + 2 * ks, k + ks))
        factor[:k, :k] = f1
        factor[k:k + ks, k:] = f2
        factor[k + ks:, :k] = w1 * f1[:ks]
        factor[k + ks:, k:] = w2 * f2
    elif sched.design is DesignKind.STANDARD_COMBINED:
        factor = _increment_factor(sched.combined)
    else:
        factor = _increment_factor(sched.subpop1)
    return ZJointLaw(sched.design, sched, mean, cov, factor, s1, s2, sc, w1, w2)


def alternative_law(sched: EnrollmentSchedule, pop: PopulationParams, p2t: float) -> ZJointLaw:
    """Joint law at a specific alternative; variances use the true probabilities."""
    return _joint_law(sched, pop, pop.p1t, p2t)


def null_law(sched: EnrollmentSchedule, pop: PopulationParams) -> ZJointLaw:
    """Joint law under the global null (zero effect in both subpopulations).

    Boundary calibration evaluates the variances at the null, i.e.
    ``sigma_s^2 = 2 p_sc (1 - p_sc)``, and all means vanish.
    """
    return _joint_law(sched, pop, pop.p1c, pop.p2c)


@dataclass(frozen=True)
class MonteCarloConfig:
    """Iteration counts, seeds, time budget, and the effect grid.

    ``seed`` drives performance simulation; ``calibration_seed`` drives the
    common-random-number block used for boundary calibration.  Both default to
    fixed documented values so repeated runs are byte-identical.
    """

    iterations: int = 10_000
    seed: int = DEFAULT_SIMULATION_SEED
    time_limit_s: Optional[float] = None
    calibration_paths: int = 100_000
    calibration_seed: int = DEFAULT_CALIBRATION_SEED
    effect_min: float = -0.2
    effect_max: float = 0.2
    grid_points: int = 9

    def __post_init__(self):
        _require(isinstance(self.iterations, int) and self.iterations > 0,
                 "iterations must be a positive integer")
        _require(isinstance(self.calibration_paths, int) and self.calibration_paths > 0,
                 "calibration_paths must be a positive integer")
        if self.time_limit_s is not None:
            _require(self.time_limit_s > 0, "time_limit_s must be positive when set")
        _require(self.grid_points >= 1, "grid_points must be at least 1")
        _require(self.effect_min <= self.effect_max,
                 "effect_min must not exceed effect_max")


#: Probabilities estimated from data or derived from the effect grid are kept
#: strictly inside (0, 1) by clipping to this margin.
PROBABILITY_CLIP = 1e-3


def p2t_grid(pop: PopulationParams, mc: MonteCarloConfig) -> np.ndarray:
    """Subpopulation-2 treatment probabilities for the performance sweep.

    Evenly spaced treatment effects over ``[effect_min, effect_max]`` are
    added to ``p2c``; values are clipped into the open unit interval so the
    statistic variances stay non-degenerate at the grid edges.
    """
    effects = np.linspace(mc.effect_min, mc.effect_max, mc.grid_points)
    return np.clip(pop.p2c + effects, PROBABILITY_CLIP, 1.0 - PROBABILITY_CLIP)
