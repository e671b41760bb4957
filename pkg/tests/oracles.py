"""Independent oracles used by the tests.

Everything here is deliberately written from scratch against the statistic
definitions (participant-level simulation, direct random-walk Monte Carlo,
and closed-form normal quadrature for two-stage designs) so the production
engine is checked against code that shares none of its path construction or
decision-rule implementation.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import norm

# ---------------------------------------------------------------------------
# Participant-level micro-trial simulation of the z-statistics.
# ---------------------------------------------------------------------------


def simulate_micro_trial_statistics(pi1, p1c, p1t, p2c, p2t, n_per_stage, stages,
                                    reps, seed):
    """Simulate Bernoulli outcomes and form the combined and subpop-1 statistics.

    Enrollment per stage is split deterministically between subpopulations in
    proportion to ``pi1``; arm assignment is an independent fair coin per
    participant.  The statistics standardize the difference in sample means by
    the true-variance factor ``sqrt(2 * sigma^2 / N)``.

    Returns arrays of shape (reps, stages) for Z1 and ZC, with rows containing
    NaN dropped (an arm with zero participants cannot form a mean).
    """
    rng = np.random.default_rng(seed)
    n1_stage = int(round(pi1 * n_per_stage))
    n2_stage = n_per_stage - n1_stage

    def stream(n_stage, pc, pt):
        """Cumulative (treat_n, treat_successes, ctrl_n, ctrl_successes)."""
        treat_new = rng.binomial(n_stage, 0.5, size=(reps, stages))
        treat_succ_new = rng.binomial(treat_new, pt)
        ctrl_succ_new = rng.binomial(n_stage - treat_new, pc)
        treat_n = treat_new.cumsum(axis=1)
        total = n_stage * np.arange(1, stages + 1)
        return (treat_n, treat_succ_new.cumsum(axis=1),
                total[None, :] - treat_n, ctrl_succ_new.cumsum(axis=1), total)

    s1 = p1c * (1 - p1c) + p1t * (1 - p1t)
    s2 = p2c * (1 - p2c) + p2t * (1 - p2t)
    tn1, ts1, cn1, cs1, total1 = stream(n1_stage, p1c, p1t)
    tn2, ts2, cn2, cs2, total2 = stream(n2_stage, p2c, p2t)

    with np.errstate(divide="ignore", invalid="ignore"):
        z1 = (ts1 / tn1 - cs1 / cn1) * np.sqrt(total1[None, :] / (2.0 * s1))
        pi1_eff = n1_stage / n_per_stage
        sc = pi1_eff * s1 + (1 - pi1_eff) * s2
        total_c = total1 + total2
        diff_c = (ts1 + ts2) / (tn1 + tn2) - (cs1 + cs2) / (cn1 + cn2)
        zc = diff_c * np.sqrt(total_c[None, :] / (2.0 * sc))

    keep = np.isfinite(z1).all(axis=1) & np.isfinite(zc).all(axis=1)
    return z1[keep], zc[keep]


# ---------------------------------------------------------------------------
# Direct Monte Carlo calibration of a single-stream Wang-Tsiatis constant.
# ---------------------------------------------------------------------------


def single_stream_constant_mc(stages, delta, alpha, n_paths, seed, batch=1 << 20):
    """Estimate the boundary constant by a quantile of max_k Z_k / shape_k.

    Crossing ``Z_k > c * (k/K)^delta`` at any stage is equivalent to
    ``max_k Z_k * (k/K)^(-delta) > c``, so the smallest constant with crossing
    probability ``alpha`` is the (1 - alpha) quantile of that maximum.  Paths
    are built directly from equal-increment random walks.
    """
    t = np.arange(1, stages + 1) / stages
    inv_shape = t ** (-delta)
    rng = np.random.default_rng(seed)
    maxima = np.empty(n_paths)
    done = 0
    while done < n_paths:
        nb = min(batch, n_paths - done)
        g = rng.standard_normal((nb, stages))
        walk = g.cumsum(axis=1) / np.sqrt(np.arange(1, stages + 1))
        maxima[done:done + nb] = (walk * inv_shape[None, :]).max(axis=1)
        done += nb
    return float(np.quantile(maxima, 1.0 - alpha))


# ---------------------------------------------------------------------------
# Closed-form quadrature for two-stage designs.
# ---------------------------------------------------------------------------


def _gl_nodes(lo, hi, n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (hi - lo) * x + 0.5 * (hi + lo), 0.5 * (hi - lo) * w


def standard_rejection_2stage(mean, rho, efficacy, futility, nodes=400):
    """P(reject) for a two-look group sequential test, by quadrature.

    ``mean`` is the pair of statistic means, ``rho`` the first/second look
    correlation; the stage-2 futility boundary is assumed to equal the
    efficacy boundary (the final look always resolves).
    """
    m1, m2 = mean
    b1, b2 = efficacy
    f1 = futility[0]
    p_stage1 = norm.sf(b1 - m1)
    lo = min(f1, m1 - 10.0)
    x, w = _gl_nodes(lo if f1 == -np.inf else f1, b1, nodes)
    cond_mean = m2 + rho * (x - m1)
    cond_sd = np.sqrt(1.0 - rho * rho)
    inner = norm.sf((b2 - cond_mean) / cond_sd)
    p_stage2 = np.sum(w * norm.pdf(x - m1) * inner)
    return float(p_stage1 + p_stage2)


def adaptive_rejections_2stage(mean1, mean2, rho1, rho2, w1, w2,
                               u1, uc, l1, l2, k_star, nodes=200, span=9.0):
    """Rejection probabilities of the two-stage adaptive design, by quadrature.

    ``mean1``/``mean2`` are the per-stage means of the subpopulation streams,
    ``rho1``/``rho2`` their serial correlations, and the combined statistic is
    ``w1 Z1 + w2 Z2``.  With ``k_star == 2`` the combined test also runs at
    stage 2 on paths whose subpopulation-2 statistic stayed above its futility
    boundary at stage 1.  Futility is enforced.  All decision-region
    discontinuities sit at integration-interval endpoints, so every integrand
    is smooth and Gauss-Legendre converges fast.  Returns
    ``(p_reject_h0c, p_reject_h01, p_reject_any)``.
    """
    m11, m12 = mean1
    m21 = mean2[0]
    m22 = mean2[1] if len(mean2) > 1 else 0.0  # unused when k_star == 1
    s1c = np.sqrt(1.0 - rho1 * rho1)
    s2c = np.sqrt(1.0 - rho2 * rho2)

    def cm1(x):
        return m12 + rho1 * (x - m11)

    def cm2(z):
        return m22 + rho2 * (z - m21)

    def g(x):
        # zc1 <= uc[0]  <=>  z21 <= g(x)
        return (uc[0] - w1 * x) / w2

    # Stage 1, closed forms.
    p_rej1_s1 = float(norm.sf(u1[0] - m11))
    mu_c1 = w1 * m11 + w2 * m21
    p_rejc_s1 = float(norm.sf(uc[0] - mu_c1))

    lo1 = m11 - span
    x, wx = _gl_nodes(lo1, u1[0], nodes)
    p_any_s1 = p_rej1_s1 + float(np.sum(
        wx * norm.pdf(x - m11) * norm.sf(g(x) - m21)))

    # Continuation in stage-1 z1 requires l1[0] < x <= u1[0].
    if l1[0] >= u1[0]:
        return p_rejc_s1, p_rej1_s1, p_any_s1
    xc, wxc = _gl_nodes(l1[0], u1[0], nodes)
    phi1 = wxc * norm.pdf(xc - m11)
    p_cont_z2 = norm.cdf(g(xc) - m21)  # also requires zc1 <= uc[0]
    sf1_s2 = norm.sf((u1[1] - cm1(xc)) / s1c)

    p_h01 = p_rej1_s1 + float(np.sum(phi1 * p_cont_z2 * sf1_s2))

    if k_star == 1:
        # Always restricted after stage 1; the combined test never recurs.
        p_h0c = p_rejc_s1
        p_any = p_any_s1 + float(np.sum(phi1 * p_cont_z2 * sf1_s2))
        return p_h0c, p_h01, p_any

    # k_star == 2: split continuation paths by the stage-1 restriction.
    scc = np.sqrt((w1 * s1c) ** 2 + (w2 * s2c) ** 2)
    # g(x) decreasing; unrestricted region z21 in (l2[0], g(x)] is nonempty
    # only while g(x) > l2[0], i.e. x < x_star.
    x_star = (uc[0] - w2 * l2[0]) / w1 if np.isfinite(l2[0]) else -np.inf

    def unrestricted_terms(x_lo, x_hi):
        """Integrals over x in (x_lo, x_hi], z21 in (l2, g(x)]."""
        if x_hi <= x_lo:
            return 0.0, 0.0
        xs, ws = _gl_nodes(x_lo, x_hi, nodes)
        px = ws * norm.pdf(xs - m11)
        h0c = np.zeros_like(xs)
        any2 = np.zeros_like(xs)
        cmx = cm1(xs)
        sfx = norm.sf((u1[1] - cmx) / s1c)
        # Inner nodes for the both-cross probability, shared across x nodes.
        y_hi = max(u1[1] + 1.0, float(np.max(cmx)) + span * s1c)
        y, wy = _gl_nodes(u1[1], y_hi, nodes // 2)
        for i, xi in enumerate(xs):
            z_hi = g(xi)
            zs, wz = _gl_nodes(l2[0], z_hi, nodes)
            pz = wz * norm.pdf(zs - m21)
            cmz = cm2(zs)
            sfc = norm.sf((uc[1] - w1 * cmx[i] - w2 * cmz) / scc)
            h0c[i] = np.sum(pz * sfc)
            # P(Z12 > u1[1] and ZC2 > uc[1] | x, z21) by quadrature over Z12.
            py = wy * norm.pdf((y - cmx[i]) / s1c) / s1c
            tail = norm.sf((uc[1] - w1 * y[None, :] - w2 * cmz[:, None]) / (w2 * s2c))
            p_both = tail @ py
            any2[i] = np.sum(pz * (sfx[i] + sfc - p_both))
        return float(np.sum(px * h0c)), float(np.sum(px * any2))

    hi_unres = min(u1[0], x_star)
    p_h0c_s2, p_any_unres = unrestricted_terms(l1[0], hi_unres)

    # Restricted continuation: z21 <= min(l2[0], g(x)); only Z1 is tested at
    # stage 2.  min() switches branch at x_star, so integrate piecewise.
    def restricted_term(x_lo, x_hi, cap_at_l2):
        if x_hi <= x_lo:
            return 0.0
        xs, ws = _gl_nodes(x_lo, x_hi, nodes)
        cap = np.minimum(g(xs), l2[0]) if not cap_at_l2 else np.full_like(xs, l2[0])
        pz = norm.cdf(cap - m21)
        return float(np.sum(ws * norm.pdf(xs - m11) * pz *
                            norm.sf((u1[1] - cm1(xs)) / s1c)))

    split = min(max(x_star, l1[0]), u1[0])
    p_any_res = restricted_term(l1[0], split, True) + restricted_term(split, u1[0], False)

    p_h0c = p_rejc_s1 + p_h0c_s2
    p_any = p_any_s1 + p_any_res + p_any_unres
    return p_h0c, p_h01, p_any
