"""Closed-form prior quantities and their Monte-Carlo verifiers.

The analytic side covers the probability that two units share a
distribution, the probability of a tie between observations of different
units, the correlation of unit distributions on a common set, and the
truncation error bounds (expected total-variation distance) used to pick
truncation levels for the blocked Gibbs sampler.  Each quantity is paired
with a simulation-based estimate so the formulas are never trusted blind.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ValidationError
from .rng import RngStream, stick_weights


def _check_conc(alpha=None, beta=None):
    if alpha is not None and alpha <= 0:
        raise ValidationError("alpha must be positive")
    if beta is not None and beta <= 0:
        raise ValidationError("beta must be positive")


def prob_equal_distributions(alpha):
    """P(G_j = G_j') = 1 / (1 + alpha)."""
    _check_conc(alpha=alpha)
    return 1.0 / (1.0 + alpha)


def prob_tie_observations(alpha, beta):
    """Probability that observations in two different units share an atom."""
    _check_conc(alpha=alpha, beta=beta)
    q1 = 1.0 / (1.0 + alpha)
    return q1 * (1.0 / (1.0 + beta)) + (1.0 - q1) * (1.0 / (2.0 * beta + 1.0))


def correlation_same_set(alpha, beta):
    """Corr(G_j(A), G_j'(A)); always inside (1/2, 1) for finite parameters."""
    _check_conc(alpha=alpha, beta=beta)
    return 1.0 - (beta / (2.0 * beta + 1.0)) * (alpha / (1.0 + alpha))


def covariance_sets(alpha, beta, h_a, h_b, h_ab):
    """Cov(G_j(A), G_j'(B)) given H(A), H(B), H(A intersect B)."""
    _check_conc(alpha=alpha, beta=beta)
    if not (0.0 <= h_ab <= min(h_a, h_b) <= 1.0):
        raise ValidationError("require 0 <= H(AB) <= min(H(A), H(B)) <= 1")
    q1 = 1.0 / (1.0 + alpha)
    c = q1 / (1.0 + beta) + (1.0 - q1) / (1.0 + 2.0 * beta)
    return c * (h_ab - h_a * h_b)


def truncation_bound_single(alpha, beta, k, l):
    """Upper bound on E[d_TV] between a unit's distribution and its
    (K, L)-truncation."""
    _check_conc(alpha=alpha, beta=beta)
    if k < 1 or l < 1:
        raise ValidationError("truncation levels must be >= 1")
    ra = (alpha / (1.0 + alpha)) ** k
    rb = (beta / (1.0 + beta)) ** l
    return (1.0 - ra) * rb + ra


def truncation_bound_mixture(alpha, beta, k, l, n_obs):
    """Upper bound on d_TV between the data law and its truncated version."""
    _check_conc(alpha=alpha, beta=beta)
    if n_obs < 1:
        raise ValidationError("n_obs must be >= 1")
    ra = (alpha / (1.0 + alpha)) ** k
    rb = (beta / (1.0 + beta)) ** l
    return n_obs * (rb + ra)


# ---------------------------------------------------------------------------
# Monte-Carlo verification


@dataclass
class CheckLine:
    name: str
    analytic: float
    empirical: float
    se: float
    ok: bool
    kind: str = "match"  # "match" (4-SE window) or "bound" (one-sided)


@dataclass
class PriorCheckReport:
    alpha: float
    beta: float
    reps: int
    depth: int
    lines: list = field(default_factory=list)

    @property
    def ok(self):
        return all(line.ok for line in self.lines)

    def to_text(self):
        rows = [f"alpha={self.alpha!r}", f"beta={self.beta!r}",
                f"reps={self.reps}", f"depth={self.depth}"]
        for line in self.lines:
            rows.append(f"{line.name}.analytic={line.analytic!r}")
            rows.append(f"{line.name}.empirical={line.empirical!r}")
            rows.append(f"{line.name}.se={line.se!r}")
            rows.append(f"{line.name}.ok={line.ok}")
        rows.append(f"all_ok={self.ok}")
        return "\n".join(rows) + "\n"


def _gem_batch(gen, conc, depth, reps):
    """(reps, depth) stick-breaking weights plus the leftover tail mass."""
    sticks = gen.beta(1.0, conc, size=(reps, depth))
    w = stick_weights(sticks)
    remainder = 1.0 - np.sum(w, axis=1)
    return w, np.maximum(remainder, 0.0)


def _labels_from_rows(gen, weights):
    """One categorical label per row; tail mass maps to the label ``depth``."""
    cum = np.cumsum(weights, axis=1)
    u = gen.random(weights.shape[0])
    return (cum < u[:, None]).sum(axis=1)


def sample_coclustering_events(rng, alpha, beta, reps, depth):
    """Simulate prior draws for two units; return (same_G, same_atom) flags.

    same_G is the event that both units pick the same mixture component of
    the outer measure; same_atom the event that one observation from each
    unit lands on the same shared atom.
    """
    gen = rng.generator
    pi, _ = _gem_batch(gen, alpha, depth, reps)
    s1 = _labels_from_rows(gen, pi)
    s2 = _labels_from_rows(gen, pi)
    # Tail labels (prob < stick remainder) count as distinct fresh clusters.
    same_g = (s1 == s2) & (s1 < depth)

    w1, _ = _gem_batch(gen, beta, depth, reps)
    w2, _ = _gem_batch(gen, beta, depth, reps)
    w2 = np.where(same_g[:, None], w1, w2)
    m1 = _labels_from_rows(gen, w1)
    m2 = _labels_from_rows(gen, w2)
    same_atom = (m1 == m2) & (m1 < depth)
    return same_g, same_atom


def sample_truncation_tv(rng, alpha, beta, k, l, reps, depth):
    """Exact d_TV between depth-truncated prior draws and their (K, L)
    truncation, one value per replicate.

    The depth-truncated draw keeps its stick remainder as mass on a phantom
    extra atom, so the computed distance includes all tail mass exactly.
    """
    if l > depth or k > depth:
        raise ValidationError("truncation levels must not exceed the depth")
    gen = rng.generator
    pi, _ = _gem_batch(gen, alpha, depth, reps)
    xi = _labels_from_rows(gen, pi)

    w_own, rem_own = _gem_batch(gen, beta, depth, reps)
    w_sub, _ = _gem_batch(gen, beta, depth, reps)

    inside = xi < k  # 0-based: components 0..k-1 survive truncation
    tv = np.empty(reps)

    # Component survives: distance is the inner tail mass beyond level l.
    partial = np.cumsum(w_own, axis=1)[:, l - 1]
    tv[inside] = 1.0 - partial[inside]

    # Component truncated away: the truncated measure uses component K's
    # weights with the forced last stick; compare on the shared atom list.
    out = ~inside
    if np.any(out):
        a = w_own[out]
        b = np.zeros_like(a)
        b[:, :l - 1] = w_sub[out, :l - 1]
        b[:, l - 1] = 1.0 - np.sum(w_sub[out, :l - 1], axis=1)
        tv[out] = 0.5 * (np.abs(a - b).sum(axis=1) + rem_own[out])
    return tv


def mc_verify_prior(alpha, beta, reps=100_000, depth=150, rng=None,
                    levels=((5, 5), (10, 10)), tv_reps=10_000):
    """Verify the closed-form prior quantities by simulation.

    Flags any matched quantity outside 4 Monte-Carlo standard errors of its
    analytic value, and any empirical mean d_TV above its analytic bound.
    """
    _check_conc(alpha=alpha, beta=beta)
    if rng is None:
        rng = RngStream(0)
    rng_events, rng_tv = rng.split(2)

    report = PriorCheckReport(alpha=alpha, beta=beta, reps=reps, depth=depth)
    same_g, same_atom = sample_coclustering_events(
        rng_events, alpha, beta, reps, depth)

    for name, flags, target in (
            ("p_equal_distributions", same_g, prob_equal_distributions(alpha)),
            ("p_tie_observations", same_atom, prob_tie_observations(alpha, beta))):
        emp = float(np.mean(flags))
        se = float(np.sqrt(max(emp * (1.0 - emp), 1e-12) / len(flags)))
        report.lines.append(CheckLine(
            name=name, analytic=target, empirical=emp, se=se,
            ok=abs(emp - target) <= 4.0 * se))

    for (k, l), sub in zip(levels, rng_tv.split(len(levels))):
        tv = sample_truncation_tv(sub, alpha, beta, k, l, tv_reps, depth)
        bound = truncation_bound_single(alpha, beta, k, l)
        emp = float(np.mean(tv))
        se = float(np.std(tv) / np.sqrt(len(tv)))
        report.lines.append(CheckLine(
            name=f"mean_tv_K{k}_L{l}", analytic=bound, empirical=emp, se=se,
            ok=emp <= bound, kind="bound"))
    return report
