"""Nested independent slice-efficient sampler for the shared-atoms model.

The sampler targets the exact posterior of the nested mixture (continuous
kernel, or rounded-Gaussian kernel for counts) by augmenting with two layers
of slice variables bounded by deterministic geometric envelopes.  Each sweep
stochastically truncates both stick-breaking layers at the levels needed to
enumerate every admissible label exactly, so no fixed truncation error is
incurred.

A configuration switch replaces the geometric envelopes with the dependent
variant (envelope = the weights themselves); that mode reorders two steps of
the sweep because the slice variables then depend on the sticks.

Concurrency contract: one chain owns one :class:`SamplerState` and one
:class:`~commonatoms.rng.RngStream`.  Within a step, label updates read a
consistent snapshot of the weights and write disjoint entries, so they are
safe to vectorize (as done here) or shard.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from . import updates
from .draws import DrawStore
from .model import (DEFAULT_GRID, Hyperparameters, NumericFailure,
                    SamplerState, ValidationError, log_slice_envelope,
                    normal_logpdf, slice_envelope, validate_dataset)
from .rng import ENGINE, RngStream, draw_categorical_log_rows, stick_weights

_STICK_LO = 1e-300
_STICK_HI = 1.0 - 1e-16


@dataclass(frozen=True)
class SliceConfig:
    """Chain-length, envelope, and safety settings for one slice run."""

    iters: int = 5000
    burnin: int = 5000
    thin: int = 1
    max_k: int = 200
    max_l: int = 200
    label_switch: bool = True
    dependent_envelopes: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.iters < 1 or self.burnin < 0 or self.thin < 1:
            raise ValidationError("iters >= 1, burnin >= 0, thin >= 1 required")
        if self.thin > self.iters:
            raise ValidationError("thin must not exceed iters")
        if self.max_k < 1 or self.max_l < 1:
            raise ValidationError("safety caps must be >= 1")


def slice_level(u_min, kappa, cap):
    """Largest stick position whose geometric envelope exceeds ``u_min``.

    Clamped to [1, cap]; returns (level, hit_cap).  Every label k with
    envelope value above the smallest slice variable satisfies k <= level,
    so enumerating 1..level never excludes an admissible label.
    """
    t = (np.log(u_min) - np.log1p(-kappa)) / np.log(kappa)
    level = max(int(np.floor(t)) + 1, 1)
    if level > cap:
        return cap, True
    return level, False


class SliceSampler:
    """One-chain slice sampler bound to a dataset and hyperparameters."""

    def __init__(self, data, hyper, config, model="cam", grid=DEFAULT_GRID):
        if model not in ("cam", "dcam"):
            raise ValidationError(f"unknown model {model!r}")
        if model == "dcam" and data.kind != "count":
            raise ValidationError("dcam requires count data")
        if model == "cam" and data.kind != "continuous":
            raise ValidationError("cam requires continuous data")
        validate_dataset(data)
        self.data = data
        self.hyper = hyper
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
        self.warnings = []
        self.ls_stats = {"outer_proposed": 0, "outer_accepted": 0,
                         "inner_proposed": 0, "inner_accepted": 0}

    # -- initialization -----------------------------------------------------

    def set_observations(self, units):
        """Replace observed values in place (lengths must match)."""
        y = np.concatenate([np.asarray(u, dtype=float) for u in units])
        if len(y) != self.N:
            raise ValidationError("replacement data must keep unit lengths")
        self.y_all = y
        self.z_all = y.astype(np.int64) if self.model == "dcam" else None

    def init_state(self, rng):
        """Deterministic-given-rng starting configuration.

        Units start in separate clusters and observations in fine
        frequency-ordered quantile bins: merging is the easy move for a
        conditional sampler, so the start must already resolve the
        observational structure or nearby units collapse early and take
        thousands of sweeps to separate again.
        """
        S = np.arange(self.J) % self.config.max_k

        if self.model == "dcam":
            y_latent = np.where(self.z_all == 0, -0.5, self.z_all - 0.5)
        else:
            y_latent = None
        values = self._atom_values(y_latent, reg=None)

        n_bins = int(min(24, self.config.max_l, len(np.unique(values))))
        edges = np.quantile(values, np.linspace(0, 1, n_bins + 1)[1:-1])
        M = np.digitize(values, np.unique(edges))
        order = np.argsort(-np.bincount(M, minlength=M.max() + 1),
                           kind="stable")
        M = np.argsort(order, kind="stable")[M]

        alpha = self.hyper.alpha.initial()
        beta = self.hyper.beta.initial()
        k_lev = int(S.max()) + 1
        l_lev = int(M.max()) + 1

        state = SamplerState(
            S=S, M=M,
            v=np.full(k_lev, 0.5), pi=np.empty(k_lev),
            u_sticks=np.full((l_lev, k_lev), 0.5),
            omega=np.empty((l_lev, k_lev)),
            theta_mu=np.zeros(l_lev), theta_sigma2=np.ones(l_lev),
            u_d=np.zeros(self.J), u_o=np.zeros(self.N),
            alpha=alpha, beta=beta, y_latent=y_latent,
            reg_coeff=(self.hyper.reg_prior[0]
                       if self.x_obs is not None and self.hyper.reg_prior
                       else (0.0 if self.x_obs is not None else None)))
        self.step_outer_sticks(state, rng, k_lev)
        self.step_inner_sticks(state, rng, k_lev, l_lev)
        state.theta_mu, state.theta_sigma2 = updates.draw_atoms(
            rng, M, values, l_lev, self.hyper)
        return state

    # -- individual full conditionals ----------------------------------------

    def step_latent_continuous(self, state, rng):
        """Latent values conditioned to their count cells (dcam only)."""
        mu = state.theta_mu[state.M]
        sigma2 = state.theta_sigma2[state.M]
        if self.x_obs is not None and state.reg_coeff is not None:
            mu = mu + state.reg_coeff * self.x_obs
        state.y_latent = updates.draw_latent_cells(
            rng, self.z_all, mu, sigma2, self.grid, scale=self.gamma_obs)

    def step_slice_variables(self, state, rng):
        """Uniform slice draws under the current envelopes."""
        if self.config.dependent_envelopes:
            env_d = state.pi[state.S]
            env_o = state.omega[state.M, state.S[self.unit_of_obs]]
        else:
            env_d = slice_envelope(state.S + 1, self.hyper.kappa_d)
            env_o = slice_envelope(state.M + 1, self.hyper.kappa_o)
        state.u_d = rng.generator.random(self.J) * env_d
        state.u_o = rng.generator.random(self.N) * env_o

    def compute_active_counts(self, state):
        """Stochastic truncation levels (K*, L*) for the current sweep."""
        k_lev, hit_k = slice_level(
            state.u_d.min(), self.hyper.kappa_d, self.config.max_k)
        l_lev, hit_l = slice_level(
            state.u_o.min(), self.hyper.kappa_o, self.config.max_l)
        k_lev = max(k_lev, int(state.S.max()) + 1)
        l_lev = max(l_lev, int(state.M.max()) + 1)
        if hit_k or hit_l:
            self.warnings.append(
                f"truncation cap hit (K={k_lev} capped={hit_k}, "
                f"L={l_lev} capped={hit_l})")
        return k_lev, l_lev

    def step_outer_sticks(self, state, rng, k_lev):
        a, b = updates.outer_stick_params(state.S, k_lev, state.alpha)
        state.v = np.clip(rng.generator.beta(a, b), _STICK_LO, _STICK_HI)
        state.pi = stick_weights(state.v)

    def step_inner_sticks(self, state, rng, k_lev, l_lev):
        a, b = updates.inner_stick_params(
            state.M, state.S[self.unit_of_obs], l_lev, k_lev, state.beta)
        state.u_sticks = np.clip(rng.generator.beta(a, b),
                                 _STICK_LO, _STICK_HI)
        state.omega = stick_weights(state.u_sticks.T).T

    def _resize_atoms(self, state, rng, l_lev):
        cur = state.l_levels
        if l_lev < cur:
            state.theta_mu = state.theta_mu[:l_lev]
            state.theta_sigma2 = state.theta_sigma2[:l_lev]
        elif l_lev > cur:
            sigma2 = 1.0 / rng.generator.gamma(
                self.hyper.a0, 1.0 / self.hyper.b0, size=l_lev - cur)
            mu = rng.generator.normal(self.hyper.m0,
                                      np.sqrt(sigma2 / self.hyper.k0))
            state.theta_mu = np.concatenate([state.theta_mu, mu])
            state.theta_sigma2 = np.concatenate([state.theta_sigma2, sigma2])

    def _distributional_logits(self, state):
        with np.errstate(divide="ignore"):
            log_om = np.log(state.omega)
        unit_sums = np.add.reduceat(log_om[state.M], self.unit_starts, axis=0)
        if self.config.dependent_envelopes:
            base = np.zeros(state.k_levels)  # pi_k / xi_k = 1
            admissible = state.u_d[:, None] < state.pi[None, :]
        else:
            k_pos = np.arange(state.k_levels) + 1
            with np.errstate(divide="ignore"):
                base = np.log(state.pi) - log_slice_envelope(
                    k_pos, self.hyper.kappa_d)
            admissible = state.u_d[:, None] < slice_envelope(
                k_pos, self.hyper.kappa_d)[None, :]
        logits = base[None, :] + unit_sums
        return np.where(admissible, logits, -np.inf)

    def step_distributional_labels(self, state, rng):
        """Redraw every S_j over its admissible set (inner slices collapsed)."""
        if self.config.dependent_envelopes:
            own_env = state.pi[state.S]
        else:
            own_env = slice_envelope(state.S + 1, self.hyper.kappa_d)
        if not np.all(state.u_d < own_env):
            raise NumericFailure("current distributional label inadmissible")
        state.S = draw_categorical_log_rows(
            rng, self._distributional_logits(state))

    def _observational_logits(self, state):
        if self.model == "dcam":
            mu = state.theta_mu[None, :]
            if self.x_obs is not None and state.reg_coeff is not None:
                mu = mu + (state.reg_coeff * self.x_obs)[:, None]
            sigma2 = state.theta_sigma2[None, :]
            if self.gamma_obs is not None:
                g = self.gamma_obs[:, None]
                loglik = normal_logpdf(state.y_latent[:, None], g * mu,
                                       g * g * sigma2)
            else:
                loglik = normal_logpdf(state.y_latent[:, None], mu, sigma2)
        else:
            mu = state.theta_mu[None, :]
            if self.x_obs is not None and state.reg_coeff is not None:
                mu = mu + (state.reg_coeff * self.x_obs)[:, None]
            loglik = normal_logpdf(self.y_all[:, None], mu,
                                   state.theta_sigma2[None, :])

        if self.config.dependent_envelopes:
            logits = loglik  # omega_l / xi_l = 1
            admissible = (state.u_o[:, None]
                          < state.omega[:, state.S[self.unit_of_obs]].T)
        else:
            with np.errstate(divide="ignore"):
                log_om_cols = np.log(
                    state.omega[:, state.S[self.unit_of_obs]].T)
            l_pos = np.arange(state.l_levels) + 1
            logits = (log_om_cols
                      - log_slice_envelope(l_pos, self.hyper.kappa_o)[None, :]
                      + loglik)
            admissible = state.u_o[:, None] < slice_envelope(
                l_pos, self.hyper.kappa_o)[None, :]
        return np.where(admissible, logits, -np.inf)

    def step_observational_labels(self, state, rng):
        """Redraw every M_ij over its admissible set."""
        if self.config.dependent_envelopes:
            own_env = state.omega[state.M, state.S[self.unit_of_obs]]
        else:
            own_env = slice_envelope(state.M + 1, self.hyper.kappa_o)
        if not np.all(state.u_o < own_env):
            raise NumericFailure("current observational label inadmissible")
        state.M = draw_categorical_log_rows(
            rng, self._observational_logits(state))

    def _atom_values(self, y_latent, reg):
        """Responses on the atom scale (scaled and covariate-adjusted)."""
        values = y_latent if self.model == "dcam" else self.y_all
        if self.gamma_obs is not None:
            values = values / self.gamma_obs
        if self.x_obs is not None and reg is not None:
            values = values - reg * self.x_obs
        return values

    def step_atoms(self, state, rng):
        values = self._atom_values(state.y_latent, state.reg_coeff)
        state.theta_mu, state.theta_sigma2 = updates.draw_atoms(
            rng, state.M, values, state.l_levels, self.hyper)

    def step_concentrations(self, state, rng):
        if self.hyper.alpha.is_random:
            shape, rate = self.hyper.alpha.prior
            state.alpha, _ = updates.draw_concentration_escobar_west(
                rng, state.alpha, len(np.unique(state.S)), self.J,
                shape, rate)
        if self.hyper.beta.is_random:
            shape, rate = self.hyper.beta.prior
            state.beta, _ = updates.draw_concentration_escobar_west(
                rng, state.beta, len(np.unique(state.M)), self.N,
                shape, rate)

    def step_regression(self, state, rng):
        if self.x_obs is None:
            return
        m_reg, k_reg = self.hyper.reg_prior or (0.0, 1.0)
        base = state.y_latent if self.model == "dcam" else self.y_all
        resid = base - state.theta_mu[state.M]
        mean, var = updates.regression_posterior_params(
            self.x_obs, resid, state.theta_sigma2[state.M], m_reg, k_reg)
        state.reg_coeff = rng.generator.normal(mean, np.sqrt(var))

    def step_label_switch(self, state, rng):
        """Metropolis swaps of adjacent labels, slice variables marginalized.

        Swapping two labels together with their sticks (and, for the outer
        level, their inner-weight columns; for the inner level, their atoms)
        leaves every likelihood factor unchanged except the stick-breaking
        leftovers of the swapped pair, so the acceptance ratio only involves
        the two stick values and the pair's occupancy counts.
        """
        gen = rng.generator
        if state.k_levels >= 2:
            k = int(gen.integers(state.k_levels - 1))
            n1 = int(np.sum(state.S == k))
            n2 = int(np.sum(state.S == k + 1))
            log_r = (n1 * np.log1p(-state.v[k + 1])
                     - n2 * np.log1p(-state.v[k]))
            self.ls_stats["outer_proposed"] += 1
            if np.log(gen.random()) < log_r:
                self.ls_stats["outer_accepted"] += 1
                sel1, sel2 = state.S == k, state.S == k + 1
                state.S[sel1], state.S[sel2] = k + 1, k
                state.v[[k, k + 1]] = state.v[[k + 1, k]]
                state.pi = stick_weights(state.v)
                state.u_sticks[:, [k, k + 1]] = state.u_sticks[:, [k + 1, k]]
                state.omega[:, [k, k + 1]] = state.omega[:, [k + 1, k]]
        if state.l_levels >= 2:
            l = int(gen.integers(state.l_levels - 1))
            s_obs = state.S[self.unit_of_obs]
            in1, in2 = state.M == l, state.M == l + 1
            c1 = np.bincount(s_obs[in1], minlength=state.k_levels).astype(float)
            c2 = np.bincount(s_obs[in2], minlength=state.k_levels).astype(float)
            log_r = float(c1 @ np.log1p(-state.u_sticks[l + 1])
                          - c2 @ np.log1p(-state.u_sticks[l]))
            self.ls_stats["inner_proposed"] += 1
            if np.log(gen.random()) < log_r:
                self.ls_stats["inner_accepted"] += 1
                state.M[in1], state.M[in2] = l + 1, l
                state.u_sticks[[l, l + 1]] = state.u_sticks[[l + 1, l]]
                state.omega = stick_weights(state.u_sticks.T).T
                state.theta_mu[[l, l + 1]] = state.theta_mu[[l + 1, l]]
                state.theta_sigma2[[l, l + 1]] = state.theta_sigma2[[l + 1, l]]

    # -- sweeps ---------------------------------------------------------------

    def sweep(self, state, rng):
        if self.model == "dcam":
            self.step_latent_continuous(state, rng)
        if self.config.dependent_envelopes:
            self._sweep_dependent(state, rng)
        else:
            self.step_slice_variables(state, rng)
            k_lev, l_lev = self.compute_active_counts(state)
            self.step_outer_sticks(state, rng, k_lev)
            self.step_inner_sticks(state, rng, k_lev, l_lev)
            self._resize_atoms(state, rng, l_lev)
            self.step_distributional_labels(state, rng)
            self.step_observational_labels(state, rng)
        self.step_atoms(state, rng)
        self.step_concentrations(state, rng)
        self.step_regression(state, rng)
        if self.config.label_switch:
            self.step_label_switch(state, rng)

    def _sweep_dependent(self, state, rng):
        # Sticks first: the slice draws depend on the weights, so the
        # collapsed stick update must precede them.
        k_cur = int(state.S.max()) + 1
        l_cur = int(state.M.max()) + 1
        self.step_outer_sticks(state, rng, k_cur)
        self.step_inner_sticks(state, rng, k_cur, l_cur)
        self._resize_atoms(state, rng, l_cur)
        self.step_slice_variables(state, rng)
        self._extend_dependent_outer(state, rng)
        self._extend_dependent_inner(state, rng)
        self.step_distributional_labels(state, rng)
        # S changed, so u_o (whose envelope is omega[M, S]) is refreshed
        # from its exact conditional before the M update reads it.
        state.u_o = (rng.generator.random(self.N)
                     * state.omega[state.M, state.S[self.unit_of_obs]])
        self._extend_dependent_inner(state, rng)
        self.step_observational_labels(state, rng)

    def _extend_dependent_outer(self, state, rng):
        target = 1.0 - float(state.u_d.min())
        total = float(state.pi.sum())
        while total < target and state.k_levels < self.config.max_k:
            grow = min(8, self.config.max_k - state.k_levels)
            v_new = np.clip(rng.generator.beta(1.0, state.alpha, size=grow),
                            _STICK_LO, _STICK_HI)
            leftover = max(1.0 - total, 0.0)
            pi_new = leftover * stick_weights(v_new)
            sticks_new = np.clip(
                rng.generator.beta(1.0, state.beta,
                                   size=(state.l_levels, grow)),
                _STICK_LO, _STICK_HI)
            state.v = np.concatenate([state.v, v_new])
            state.pi = np.concatenate([state.pi, pi_new])
            state.u_sticks = np.hstack([state.u_sticks, sticks_new])
            state.omega = np.hstack(
                [state.omega, stick_weights(sticks_new.T).T])
            total = float(state.pi.sum())
        if total < target:
            self.warnings.append("dependent-envelope outer cap hit")

    def _extend_dependent_inner(self, state, rng):
        target = 1.0 - float(state.u_o.min())
        while (state.omega.sum(axis=0).min() < target
               and state.l_levels < self.config.max_l):
            grow = min(8, self.config.max_l - state.l_levels)
            sticks_new = np.clip(
                rng.generator.beta(1.0, state.beta,
                                   size=(grow, state.k_levels)),
                _STICK_LO, _STICK_HI)
            leftover = np.maximum(1.0 - state.omega.sum(axis=0), 0.0)
            omega_new = leftover[None, :] * stick_weights(sticks_new.T).T
            state.u_sticks = np.vstack([state.u_sticks, sticks_new])
            state.omega = np.vstack([state.omega, omega_new])
            self._resize_atoms(state, rng, state.u_sticks.shape[0])
        if state.omega.sum(axis=0).min() < target:
            self.warnings.append("dependent-envelope inner cap hit")

    # -- driver ---------------------------------------------------------------

    def run(self, rng=None):
        """Burn in, then record every thin-th state projection."""
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
            "sampler": "slice",
            "model": self.model,
            "engine": ENGINE,
            "numpy_version": np.__version__,
            "seed": cfg.seed,
            "config": asdict(cfg),
            "wall_time_s": time.perf_counter() - started,
            "warnings": sorted(set(self.warnings)),
            "label_switch": dict(self.ls_stats),
        }
        return store


def run_chain(data, hyper=None, config=None, model="cam"):
    """Convenience wrapper: validate, build, and run one slice chain."""
    if hyper is None:
        hyper = Hyperparameters.from_data(data)
    if config is None:
        config = SliceConfig()
    return SliceSampler(data, hyper, config, model=model).run()
