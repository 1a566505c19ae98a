"""Full-conditional building blocks shared by the slice and Gibbs samplers.

Everything here is a pure function of counts/sufficient statistics, so each
update can be checked against brute-force recounts and plug-in oracles
independently of any sampler loop.
"""

from __future__ import annotations

import numpy as np

from .rng import draw_truncated_normal


def outer_stick_params(S, k_levels, alpha):
    """Beta parameters (a_k, b_k) of the outer sticks, k = 0..k_levels-1.

    a_k = 1 + #{j: S_j = k}, b_k = alpha + #{j: S_j > k}.  Unoccupied levels
    fall back to the Beta(1, alpha) prior.
    """
    counts = np.bincount(S, minlength=k_levels)[:k_levels].astype(float)
    above = counts[::-1].cumsum()[::-1] - counts  # tail counts, excluding k
    return 1.0 + counts, alpha + above


def inner_stick_params(M, S_obs, l_levels, k_levels, beta):
    """Beta parameters of the inner sticks as (L, K) arrays.

    n_{l,k} counts observations with label l inside distributional cluster
    k; the second parameter adds the within-cluster tail count.
    """
    counts = np.zeros((l_levels, k_levels))
    np.add.at(counts, (M, S_obs), 1.0)
    above = counts[::-1].cumsum(axis=0)[::-1] - counts
    return 1.0 + counts, beta + above


def nig_posterior_params(M, values, l_levels, m0, k0, a0, b0):
    """Conjugate normal-inverse-gamma posterior parameters per atom.

    ``values`` are the (possibly rescaled / covariate-adjusted) responses
    pooled over all units; empty atoms keep the prior.
    """
    n = np.bincount(M, minlength=l_levels)[:l_levels].astype(float)
    s1 = np.bincount(M, weights=values, minlength=l_levels)[:l_levels]
    s2 = np.bincount(M, weights=values * values, minlength=l_levels)[:l_levels]
    mean = np.divide(s1, n, out=np.zeros_like(s1), where=n > 0)
    ssd = np.maximum(s2 - n * mean * mean, 0.0)

    k_post = k0 + n
    m_post = (k0 * m0 + s1) / k_post
    a_post = a0 + 0.5 * n
    b_post = b0 + 0.5 * (ssd + (k0 * n / k_post) * (mean - m0) ** 2)
    return m_post, k_post, a_post, b_post


def draw_atoms(rng, M, values, l_levels, hyper):
    """Draw all atoms from their NIG full conditionals (prior when empty)."""
    m_post, k_post, a_post, b_post = nig_posterior_params(
        M, values, l_levels, hyper.m0, hyper.k0, hyper.a0, hyper.b0)
    sigma2 = 1.0 / rng.generator.gamma(a_post, 1.0 / b_post)
    mu = rng.generator.normal(m_post, np.sqrt(sigma2 / k_post))
    return mu, sigma2


def draw_latent_cells(rng, z, mu, sigma2, grid, scale=None):
    """Latent continuous values conditioned to their count cells.

    mu/sigma2 are the per-observation atom parameters; with a scale gamma
    the kernel is N(gamma*mu, gamma^2*sigma2) while the cell thresholds stay
    on the raw latent axis.
    """
    lo, hi = grid.cell(z)
    mean = np.asarray(mu, dtype=float)
    sd = np.sqrt(np.asarray(sigma2, dtype=float))
    if scale is not None:
        mean = scale * mean
        sd = scale * sd
    return draw_truncated_normal(rng, mean, sd, lo, hi)


def escobar_west_mixture_weight(shape, k, n, rate, eta):
    """Weight of the higher-shape Gamma component in the two-stage update."""
    odds = (shape + k - 1.0) / (n * (rate - np.log(eta)))
    return odds / (1.0 + odds)


def draw_concentration_escobar_west(rng, current, k, n, shape, rate):
    """Two-stage Gamma-mixture refresh of a DP concentration parameter.

    Draws eta ~ Beta(current + 1, n), then the concentration from
    w * Gamma(shape + k, rate - log eta) + (1-w) * Gamma(shape + k - 1, .),
    with mixing odds (shape + k - 1) / (n * (rate - log eta)).
    """
    eta = rng.generator.beta(current + 1.0, n)
    new_rate = rate - np.log(eta)
    w = escobar_west_mixture_weight(shape, k, n, rate, eta)
    new_shape = shape + k if rng.generator.random() < w else shape + k - 1.0
    value = rng.generator.gamma(new_shape, 1.0 / new_rate)
    return max(value, 1e-12), eta


def draw_concentration_truncated(rng, sticks_log1m_sum, n_sticks, shape, rate):
    """Conjugate Gamma refresh from truncated stick values.

    ``sticks_log1m_sum`` is sum(log(1 - v)) over the free sticks and
    ``n_sticks`` their number.
    """
    return max(rng.generator.gamma(shape + n_sticks,
                                   1.0 / (rate - sticks_log1m_sum)), 1e-12)


def regression_posterior_params(x_obs, resid, sigma2_obs, m_reg, k_reg):
    """Posterior mean/variance of the shared linear covariate coefficient."""
    r1 = np.sum(x_obs * x_obs / sigma2_obs)
    r2 = np.sum(resid * x_obs / sigma2_obs)
    var = 1.0 / (k_reg + r1)
    return (m_reg * k_reg + r2) * var, var
