"""Joint-distribution validation for the samplers (getting it right).

Two simulators of the prior joint over (parameters, data) are compared:

* marginal-conditional: parameters from the prior, data given parameters,
  everything drawn independently each replicate;
* successive-conditional: alternate "regenerate data given the state" and
  "one MCMC sweep given the data", which has the same stationary joint iff
  the sweep is a correct posterior kernel.

Matching distributions of the test functions (checked by z-scores with
autocorrelation-robust standard errors on the chain side) is a sharp test
for sampler bugs: wrong conditionals, wrong truncation, invalid step order.

For count models the observable and its latent value are regenerated
jointly (y ~ kernel given its atom, z = cell(y)); regenerating z alone
would be degenerate because z is a deterministic function of the latent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gibbs_sampler import truncated_weights
from .model import DEFAULT_GRID, SamplerState
from .rng import RngStream

TEST_FUNCTIONS = ("alpha", "k_occupied", "mean_mu_occupied", "y_mean")


def lazy_gem_labels(gen, conc, n):
    """n categorical labels from an untruncated GEM(conc) weight sequence."""
    u = np.sort(gen.random(n))
    labels = np.empty(n, dtype=int)
    cum = 0.0
    leftover = 1.0
    k = 0
    filled = 0
    while filled < n:
        v = gen.beta(1.0, conc)
        cum += v * leftover
        leftover *= 1.0 - v
        while filled < n and u[filled] < cum:
            labels[filled] = k
            filled += 1
        k += 1
        if leftover <= 1e-300:  # remaining mass below resolution
            labels[filled:] = k
            break
    return gen.permutation(labels)


def _draw_concentration(gen, setting):
    if setting.is_random:
        shape, rate = setting.prior
        return gen.gamma(shape, 1.0 / rate)
    return setting.value


def sample_joint_infinite(rng, hyper, lengths, model="dcam",
                          grid=DEFAULT_GRID):
    """One draw of (state fields, data units) from the untruncated prior."""
    gen = rng.generator
    lengths = np.asarray(lengths, dtype=int)
    n_total = int(lengths.sum())
    alpha = _draw_concentration(gen, hyper.alpha)
    beta = _draw_concentration(gen, hyper.beta)

    S = lazy_gem_labels(gen, alpha, len(lengths))
    unit_of_obs = np.repeat(np.arange(len(lengths)), lengths)
    M = np.empty(n_total, dtype=int)
    for k in np.unique(S):
        sel = np.isin(unit_of_obs, np.flatnonzero(S == k))
        M[sel] = lazy_gem_labels(gen, beta, int(sel.sum()))

    l_lev = int(M.max()) + 1
    sigma2 = 1.0 / gen.gamma(hyper.a0, 1.0 / hyper.b0, size=l_lev)
    mu = gen.normal(hyper.m0, np.sqrt(sigma2 / hyper.k0))
    y = gen.normal(mu[M], np.sqrt(sigma2[M]))
    if model == "dcam":
        data = grid.cell_of(y)
    else:
        data = y
    return dict(alpha=alpha, beta=beta, S=S, M=M, mu=mu, sigma2=sigma2,
                y=y, data=data, unit_of_obs=unit_of_obs)


def sample_joint_truncated(rng, hyper, lengths, levels, model="dcam",
                           grid=DEFAULT_GRID):
    """One draw from the (K, L)-truncated prior with forced last sticks."""
    gen = rng.generator
    lengths = np.asarray(lengths, dtype=int)
    n_total = int(lengths.sum())
    alpha = _draw_concentration(gen, hyper.alpha)
    beta = _draw_concentration(gen, hyper.beta)

    v = gen.beta(1.0, alpha, size=max(levels.K - 1, 0))
    pi = truncated_weights(v)
    S = (np.cumsum(pi)[:, None] < gen.random(len(lengths))[None, :]) \
        .sum(axis=0)
    S = np.minimum(S, levels.K - 1)
    sticks = gen.beta(1.0, beta, size=(max(levels.L - 1, 0), levels.K))
    omega = truncated_weights(sticks.T).T
    unit_of_obs = np.repeat(np.arange(len(lengths)), lengths)
    col = omega[:, S[unit_of_obs]]
    M = (np.cumsum(col, axis=0) < gen.random(n_total)[None, :]).sum(axis=0)
    M = np.minimum(M, levels.L - 1)

    sigma2 = 1.0 / gen.gamma(hyper.a0, 1.0 / hyper.b0, size=levels.L)
    mu = gen.normal(hyper.m0, np.sqrt(sigma2 / hyper.k0))
    y = gen.normal(mu[M], np.sqrt(sigma2[M]))
    data = grid.cell_of(y) if model == "dcam" else y
    return dict(alpha=alpha, beta=beta, S=S, M=M, mu=mu, sigma2=sigma2,
                y=y, data=data, v=v, sticks=sticks, pi=pi, omega=omega,
                unit_of_obs=unit_of_obs)


def _stats_from_fields(alpha, S, M, mu, y):
    return dict(alpha=float(alpha),
                k_occupied=float(len(np.unique(S))),
                mean_mu_occupied=float(np.mean(mu[np.unique(M)])),
                y_mean=float(np.mean(y)))


def _stats_from_state(state, sampler):
    y = state.y_latent if state.y_latent is not None else sampler.y_all
    return dict(alpha=float(state.alpha),
                k_occupied=float(len(np.unique(state.S))),
                mean_mu_occupied=float(
                    np.mean(state.theta_mu[np.unique(state.M)])),
                y_mean=float(np.mean(y)))


def marginal_conditional_samples(rng, hyper, lengths, n_samples,
                                 model="dcam", levels=None):
    """Independent draws of the test functions under the prior joint."""
    out = {name: np.empty(n_samples) for name in TEST_FUNCTIONS}
    for i in range(n_samples):
        if levels is None:
            draw = sample_joint_infinite(rng, hyper, lengths, model=model)
        else:
            draw = sample_joint_truncated(rng, hyper, lengths, levels,
                                          model=model)
        stats = _stats_from_fields(draw["alpha"], draw["S"], draw["M"],
                                   draw["mu"], draw["y"])
        for name in TEST_FUNCTIONS:
            out[name][i] = stats[name]
    return out


def _state_from_prior_draw(draw, n_units, n_total):
    """Wrap a prior draw in a SamplerState; weight arrays are placeholders
    that every sweep rebuilds before use."""
    l_lev = int(draw["M"].max()) + 1
    k_lev = int(draw["S"].max()) + 1
    return SamplerState(
        S=draw["S"].copy(), M=draw["M"].copy(),
        v=np.full(k_lev, 0.5), pi=np.full(k_lev, 1.0 / k_lev),
        u_sticks=np.full((l_lev, k_lev), 0.5),
        omega=np.full((l_lev, k_lev), 1.0 / l_lev),
        theta_mu=draw["mu"][:l_lev].copy(),
        theta_sigma2=draw["sigma2"][:l_lev].copy(),
        u_d=np.zeros(n_units), u_o=np.zeros(n_total),
        alpha=draw["alpha"], beta=draw["beta"],
        y_latent=draw["y"].copy(), reg_coeff=None)


def _regenerate_data(gen, state, sampler, grid):
    """Joint redraw of (latent, observable) given labels and atoms."""
    mu = state.theta_mu[state.M]
    sd = np.sqrt(state.theta_sigma2[state.M])
    y = gen.normal(mu, sd)
    if sampler.model == "dcam":
        state.y_latent = y
        sampler.z_all = grid.cell_of(y)
        sampler.y_all = sampler.z_all.astype(float)
    else:
        sampler.y_all = y
    return y


def successive_conditional_samples(sampler, rng, lengths, n_samples,
                                   levels=None, grid=DEFAULT_GRID):
    """Test functions along the data-regenerating MCMC chain."""
    gen = rng.generator
    lengths = np.asarray(lengths, dtype=int)
    n_total = int(lengths.sum())
    if levels is None:
        draw = sample_joint_infinite(rng, sampler.hyper, lengths,
                                     model=sampler.model)
        state = _state_from_prior_draw(draw, len(lengths), n_total)
    else:
        draw = sample_joint_truncated(rng, sampler.hyper, lengths, levels,
                                      model=sampler.model)
        state = _state_from_prior_draw(draw, len(lengths), n_total)
        # The truncated sampler expects arrays at the full levels.
        state.v = draw["v"].copy()
        state.pi = draw["pi"].copy()
        state.u_sticks = draw["sticks"].copy()
        state.omega = draw["omega"].copy()
        full_l = levels.L
        state.theta_mu = draw["mu"].copy()
        state.theta_sigma2 = draw["sigma2"].copy()
        assert len(state.theta_mu) == full_l
    if sampler.model == "dcam":
        sampler.z_all = np.asarray(draw["data"], dtype=np.int64)
        sampler.y_all = sampler.z_all.astype(float)
    else:
        sampler.y_all = np.asarray(draw["data"], dtype=float)

    out = {name: np.empty(n_samples) for name in TEST_FUNCTIONS}
    for i in range(n_samples):
        _regenerate_data(gen, state, sampler, grid)
        sampler.sweep(state, rng)
        stats = _stats_from_state(state, sampler)
        for name in TEST_FUNCTIONS:
            out[name][i] = stats[name]
    return out


# ---------------------------------------------------------------------------
# Comparison


def batch_means_se(x, n_batches=100):
    """Standard error of the mean of an autocorrelated series."""
    x = np.asarray(x, dtype=float)
    usable = (len(x) // n_batches) * n_batches
    batches = x[:usable].reshape(n_batches, -1).mean(axis=1)
    return float(np.std(batches, ddof=1) / np.sqrt(n_batches))


@dataclass
class GirReport:
    zscores: dict
    means_marginal: dict
    means_successive: dict

    @property
    def max_abs_z(self):
        return max(abs(z) for z in self.zscores.values())

    def ok(self, limit=4.0):
        return self.max_abs_z < limit


def compare_simulators(marginal, successive):
    """z-scores of the test-function means between the two simulators."""
    zscores, mc_means, sc_means = {}, {}, {}
    for name in TEST_FUNCTIONS:
        mc = marginal[name]
        sc = successive[name]
        se_mc = float(np.std(mc, ddof=1) / np.sqrt(len(mc)))
        se_sc = batch_means_se(sc)
        z = (np.mean(mc) - np.mean(sc)) / np.hypot(se_mc, se_sc)
        zscores[name] = float(z)
        mc_means[name] = float(np.mean(mc))
        sc_means[name] = float(np.mean(sc))
    return GirReport(zscores=zscores, means_marginal=mc_means,
                     means_successive=sc_means)


def getting_it_right(sampler_factory, hyper, lengths, n_samples, seed,
                     levels=None, model="dcam"):
    """Run both simulators against one sampler and compare.

    ``sampler_factory(data_units)`` must build the sampler under test bound
    to placeholder data with the given unit lengths.
    """
    rng_mc, rng_sc = RngStream(seed).split(2)
    marginal = marginal_conditional_samples(
        rng_mc, hyper, lengths, n_samples, model=model, levels=levels)

    placeholder = [np.zeros(n, dtype=int) for n in lengths] \
        if model == "dcam" else [np.zeros(n) for n in lengths]
    sampler = sampler_factory(placeholder)
    successive = successive_conditional_samples(
        sampler, rng_sc, lengths, n_samples, levels=levels)
    return compare_simulators(marginal, successive)
