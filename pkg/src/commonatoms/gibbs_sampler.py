"""Truncated blocked Gibbs sampler: the independent second inference path.

Both stick-breaking layers are truncated at fixed levels (K outer, L inner)
with the last weight forced to the leftover mass, so every truncated weight
vector sums to one exactly.  The truncation error of the data law is bounded
a priori (see :func:`commonatoms.prior.truncation_bound_mixture`) and the
bound is recorded in the run metadata.

The label updates are collapsed: S is drawn with both the observational
labels and (for counts) the latent values integrated out, then M with the
latent values integrated out, then the latent values.  Running the collapsed
conditionals in this order keeps the sweep a valid partially collapsed Gibbs
sampler.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from . import updates
from .draws import DrawStore
from .model import (DEFAULT_GRID, Hyperparameters, SamplerState,
                    ValidationError, dcam_cell_logprob, normal_logpdf,
                    validate_dataset)
from .prior import truncation_bound_mixture
from .rng import ENGINE, RngStream, draw_categorical_log_rows, stick_weights

_STICK_LO = 1e-300
_STICK_HI = 1.0 - 1e-16


@dataclass(frozen=True)
class TruncationLevels:
    """Fixed truncation: K outer components, L shared atoms."""

    K: int = 35
    L: int = 50

    def __post_init__(self):
        if self.K < 1 or self.L < 1:
            raise ValidationError("truncation levels must be >= 1")


@dataclass(frozen=True)
class GibbsConfig:
    iters: int = 5000
    burnin: int = 5000
    thin: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.iters < 1 or self.burnin < 0 or self.thin < 1:
            raise ValidationError("iters >= 1, burnin >= 0, thin >= 1 required")
        if self.thin > self.iters:
            raise ValidationError("thin must not exceed iters")


def truncated_weights(sticks_free):
    """Stick weights with the last one forced so the vector sums to 1.

    ``sticks_free`` holds the first K-1 sticks along the last axis.
    """
    w = stick_weights(sticks_free)
    last = np.maximum(1.0 - w.sum(axis=-1, keepdims=True), 0.0)
    return np.concatenate([w, last], axis=-1)


class GibbsSampler:
    """One-chain truncated Gibbs sampler at fixed (K, L)."""

    def __init__(self, data, hyper, levels, config, model="cam",
                 grid=DEFAULT_GRID):
        if model not in ("cam", "dcam"):
            raise ValidationError(f"unknown model {model!r}")
        if model == "dcam" and data.kind != "count":
            raise ValidationError("dcam requires count data")
        if model == "cam" and data.kind != "continuous":
            raise ValidationError("cam requires continuous data")
        validate_dataset(data)
        self.data = data
        self.hyper = hyper
        self.levels = levels
        self.config = config
        self.model = model
        self.grid = grid

        self.J = data.n_units
        self.lengths = data.lengths
        self.N = int(self.lengths.sum())
        self.unit_starts = np.concatenate([[0], np.cumsum(self.lengths)[:-1]])
        self.unit_of_obs = data.unit_of_obs()
        self.y_all = data.pooled()
        self.z_all = self.y_all.astype(np.int64) if model == "dcam" else None
        self.gamma_obs = (data.scale[self.unit_of_obs]
                          if data.scale is not None else None)
        self.x_obs = (data.covariate[self.unit_of_obs]
                      if data.covariate is not None else None)

    # -- initialization -----------------------------------------------------

    def init_state(self, rng):
        K, L = self.levels.K, self.levels.L
        S = np.arange(self.J) % K
        if self.model == "dcam":
            y_latent = np.where(self.z_all == 0, -0.5, self.z_all - 0.5)
        else:
            y_latent = None
        values = self._atom_values(y_latent, reg=None)
        n_bins = int(min(24, L, len(np.unique(values))))
        edges = np.quantile(values, np.linspace(0, 1, n_bins + 1)[1:-1])
        M = np.digitize(values, np.unique(edges))

        state = SamplerState(
            S=S, M=M,
            v=np.full(max(K - 1, 0), 0.5), pi=np.full(K, 1.0 / K),
            u_sticks=np.full((max(L - 1, 0), K), 0.5),
            omega=np.full((L, K), 1.0 / L),
            theta_mu=np.zeros(L), theta_sigma2=np.ones(L),
            u_d=np.zeros(self.J), u_o=np.zeros(self.N),
            alpha=self.hyper.alpha.initial(),
            beta=self.hyper.beta.initial(),
            y_latent=y_latent,
            reg_coeff=(self.hyper.reg_prior[0]
                       if self.x_obs is not None and self.hyper.reg_prior
                       else (0.0 if self.x_obs is not None else None)))
        self.step_weights(state, rng)
        state.theta_mu, state.theta_sigma2 = updates.draw_atoms(
            rng, M, values, L, self.hyper)
        return state

    # -- full conditionals ----------------------------------------------------

    def _cell_loglik(self, state):
        """(N, L) log-likelihood of each observation under each atom,
        with the latent value integrated out for count data."""
        mu = state.theta_mu[None, :]
        if self.x_obs is not None and state.reg_coeff is not None:
            mu = mu + (state.reg_coeff * self.x_obs)[:, None]
        sigma2 = np.broadcast_to(state.theta_sigma2[None, :],
                                 (self.N, self.levels.L))
        if self.model == "dcam":
            scale = (self.gamma_obs[:, None]
                     if self.gamma_obs is not None else None)
            return dcam_cell_logprob(self.z_all[:, None], mu, sigma2,
                                     grid=self.grid, scale=scale)
        return normal_logpdf(self.y_all[:, None], mu, sigma2)

    def step_S(self, state, rng, loglik=None):
        """Distributional labels with M (and latent y) integrated out."""
        if loglik is None:
            loglik = self._cell_loglik(state)
        rowmax = loglik.max(axis=1)
        p = np.exp(loglik - rowmax[:, None])
        with np.errstate(divide="ignore"):
            mixed = np.log(p @ state.omega)  # (N, K)
        mixed += rowmax[:, None]
        unit_sums = np.add.reduceat(mixed, self.unit_starts, axis=0)
        with np.errstate(divide="ignore"):
            logits = np.log(state.pi)[None, :] + unit_sums
        state.S = draw_categorical_log_rows(rng, logits)

    def step_M(self, state, rng, loglik=None):
        """Observational labels with the latent value integrated out."""
        if loglik is None:
            loglik = self._cell_loglik(state)
        with np.errstate(divide="ignore"):
            logits = np.log(state.omega[:, state.S[self.unit_of_obs]].T)
        logits += loglik
        state.M = draw_categorical_log_rows(rng, logits)

    def step_latent_y(self, state, rng):
        mu = state.theta_mu[state.M]
        sigma2 = state.theta_sigma2[state.M]
        if self.x_obs is not None and state.reg_coeff is not None:
            mu = mu + state.reg_coeff * self.x_obs
        state.y_latent = updates.draw_latent_cells(
            rng, self.z_all, mu, sigma2, self.grid, scale=self.gamma_obs)

    def step_weights(self, state, rng):
        """Outer and inner sticks; the last weight is the forced remainder."""
        K, L = self.levels.K, self.levels.L
        a, b = updates.outer_stick_params(state.S, K, state.alpha)
        if K > 1:
            state.v = np.clip(rng.generator.beta(a[:-1], b[:-1]),
                              _STICK_LO, _STICK_HI)
        state.pi = truncated_weights(state.v)

        a, b = updates.inner_stick_params(
            state.M, state.S[self.unit_of_obs], L, K, state.beta)
        if L > 1:
            state.u_sticks = np.clip(rng.generator.beta(a[:-1], b[:-1]),
                                     _STICK_LO, _STICK_HI)
        state.omega = truncated_weights(state.u_sticks.T).T

    def step_atoms(self, state, rng):
        values = self._atom_values(state.y_latent, state.reg_coeff)
        state.theta_mu, state.theta_sigma2 = updates.draw_atoms(
            rng, state.M, values, self.levels.L, self.hyper)

    def step_concentrations(self, state, rng):
        """Conjugate Gamma refreshes from the truncated stick values."""
        if self.hyper.alpha.is_random and self.levels.K > 1:
            shape, rate = self.hyper.alpha.prior
            state.alpha = updates.draw_concentration_truncated(
                rng, float(np.sum(np.log1p(-state.v))),
                self.levels.K - 1, shape, rate)
        if self.hyper.beta.is_random and self.levels.L > 1:
            shape, rate = self.hyper.beta.prior
            state.beta = updates.draw_concentration_truncated(
                rng, float(np.sum(np.log1p(-state.u_sticks))),
                self.levels.K * (self.levels.L - 1), shape, rate)

    def step_regression(self, state, rng):
        if self.x_obs is None:
            return
        m_reg, k_reg = self.hyper.reg_prior or (0.0, 1.0)
        base = state.y_latent if self.model == "dcam" else self.y_all
        resid = base - state.theta_mu[state.M]
        mean, var = updates.regression_posterior_params(
            self.x_obs, resid, state.theta_sigma2[state.M], m_reg, k_reg)
        state.reg_coeff = rng.generator.normal(mean, np.sqrt(var))

    def _atom_values(self, y_latent, reg):
        values = y_latent if self.model == "dcam" else self.y_all
        if self.gamma_obs is not None:
            values = values / self.gamma_obs
        if self.x_obs is not None and reg is not None:
            values = values - reg * self.x_obs
        return values

    # -- driver ---------------------------------------------------------------

    def sweep(self, state, rng):
        loglik = self._cell_loglik(state)
        self.step_S(state, rng, loglik=loglik)
        self.step_M(state, rng, loglik=loglik)
        if self.model == "dcam":
            self.step_latent_y(state, rng)
        self.step_weights(state, rng)
        self.step_atoms(state, rng)
        self.step_concentrations(state, rng)
        self.step_regression(state, rng)

    def prior_truncation_bound(self):
        """Appendix-style a-priori bound at the concentration prior means."""
        return truncation_bound_mixture(
            self.hyper.alpha.initial(), self.hyper.beta.initial(),
            self.levels.K, self.levels.L, self.N)

    def run(self, rng=None):
        cfg = self.config
        if rng is None:
            rng = RngStream(cfg.seed)
        state = self.init_state(rng)
        store = DrawStore(unit_lengths=self.lengths)
        started = time.perf_counter()
        for sweep_idx in range(cfg.burnin + cfg.iters):
            self.sweep(state, rng)
            state.check_finite(sweep_idx)
            kept = sweep_idx - cfg.burnin
            if kept >= 0 and kept % cfg.thin == 0:
                store.append_state(state)
        store.meta = {
            "sampler": "gibbs",
            "model": self.model,
            "engine": ENGINE,
            "numpy_version": np.__version__,
            "seed": cfg.seed,
            "config": asdict(cfg),
            "levels": asdict(self.levels),
            "prior_truncation_bound": self.prior_truncation_bound(),
            "wall_time_s": time.perf_counter() - started,
            "warnings": [],
        }
        return store


def run_gibbs_chain(data, hyper=None, levels=None, config=None, model="cam"):
    """Convenience wrapper: validate, build, and run one Gibbs chain."""
    if hyper is None:
        hyper = Hyperparameters.from_data(data)
    if levels is None:
        levels = TruncationLevels()
    if config is None:
        config = GibbsConfig()
    return GibbsSampler(data, hyper, levels, config, model=model).run()
