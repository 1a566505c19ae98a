"""Model containers, hyperparameters, and the rounded-Gaussian count kernel.

Labels are 0-based throughout the package; the slice-envelope helpers take
1-based positions (the stick index k >= 1) to match the usual stick-breaking
indexing.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import log_ndtr, ndtr

from .rng import stick_weights


class ValidationError(ValueError):
    """Raised when inputs violate a documented invariant."""


class NumericFailure(RuntimeError):
    """Raised when a sampler hits non-finite values in a full conditional."""


class VerificationFailure(RuntimeError):
    """Raised when a Monte-Carlo verification check fails its tolerance."""


# ---------------------------------------------------------------------------
# Dataset


@dataclass(frozen=True)
class Dataset:
    """Nested observations: J units, unit j holding n_j values.

    ``kind`` is "continuous" or "count".  ``covariate`` is an optional real
    x_j per unit, ``scale`` an optional positive gamma_j per unit (for count
    data, the per-unit mean frequency used as a multiplicative kernel scale).
    """

    kind: str
    units: tuple
    covariate: np.ndarray | None = None
    scale: np.ndarray | None = None
    item_names: tuple | None = None
    unit_names: tuple | None = None

    def __post_init__(self):
        units = tuple(np.asarray(u) for u in self.units)
        if self.kind == "count":
            for j, u in enumerate(units):
                if u.size and not np.all(np.equal(np.mod(u, 1), 0)):
                    raise ValidationError(f"unit {j} has non-integer counts")
            units = tuple(u.astype(np.int64, copy=False) for u in units)
        else:
            units = tuple(u.astype(float, copy=False) for u in units)
        for u in units:
            u.setflags(write=False)
        object.__setattr__(self, "units", units)
        if self.covariate is not None:
            cov = np.asarray(self.covariate, dtype=float)
            cov.setflags(write=False)
            object.__setattr__(self, "covariate", cov)
        if self.scale is not None:
            sc = np.asarray(self.scale, dtype=float)
            sc.setflags(write=False)
            object.__setattr__(self, "scale", sc)

    @property
    def n_units(self):
        return len(self.units)

    @property
    def lengths(self):
        return np.array([len(u) for u in self.units], dtype=int)

    @property
    def total_n(self):
        return int(self.lengths.sum())

    def pooled(self):
        """All observations concatenated in unit order, as floats."""
        return np.concatenate([np.asarray(u, dtype=float) for u in self.units])

    def unit_of_obs(self):
        """Unit index of each pooled observation."""
        return np.repeat(np.arange(self.n_units), self.lengths)

    def with_library_scale(self):
        """Return a copy with gamma_j set to each unit's mean count."""
        if self.kind != "count":
            raise ValidationError("library-size scaling requires count data")
        gammas = np.array([float(np.mean(u)) for u in self.units])
        if np.any(gammas <= 0):
            j = int(np.flatnonzero(gammas <= 0)[0])
            raise ValidationError(
                f"unit {j} has zero mean count; its scale gamma_j is undefined")
        return replace(self, scale=gammas)


@dataclass(frozen=True)
class DatasetReport:
    """Outcome of :func:`validate_dataset`."""

    kind: str
    n_units: int
    lengths: np.ndarray
    gammas: np.ndarray | None = None


def validate_dataset(data, require_scale=False):
    """Check Dataset invariants; optionally compute per-unit scales.

    Raises ValidationError on an empty unit, a negative count, a non-integer
    count, or an all-zero unit when scaling is requested.
    """
    if data.kind not in ("continuous", "count"):
        raise ValidationError(f"unknown dataset kind {data.kind!r}")
    if data.n_units < 1:
        raise ValidationError("dataset must contain at least one unit")
    for j, u in enumerate(data.units):
        if len(u) < 1:
            raise ValidationError(f"unit {j} is empty")
        if data.kind == "count":
            if np.any(np.asarray(u) < 0):
                raise ValidationError(f"unit {j} contains negative counts")
        elif not np.all(np.isfinite(u)):
            raise ValidationError(f"unit {j} contains non-finite values")
    if data.covariate is not None and len(data.covariate) != data.n_units:
        raise ValidationError("covariate length must equal the number of units")
    if data.covariate is not None and data.scale is not None:
        raise ValidationError("unit covariate and library-size scale are exclusive")
    gammas = data.scale
    if require_scale and gammas is None:
        gammas = data.with_library_scale().scale
    if gammas is not None and np.any(gammas <= 0):
        raise ValidationError("scales gamma_j must be positive")
    return DatasetReport(kind=data.kind, n_units=data.n_units,
                         lengths=data.lengths, gammas=gammas)


# ---------------------------------------------------------------------------
# Hyperparameters


@dataclass(frozen=True)
class ConcentrationSetting:
    """Concentration parameter: fixed, or Gamma(shape, rate) hyperprior."""

    value: float = 1.0
    prior: tuple | None = (3.0, 3.0)

    @property
    def is_random(self):
        return self.prior is not None

    def initial(self):
        if self.is_random:
            shape, rate = self.prior
            return shape / rate
        return self.value


@dataclass(frozen=True)
class Hyperparameters:
    """Base-measure, concentration, envelope, and regression settings."""

    m0: float = 0.0
    k0: float = 1.0
    a0: float = 3.0
    b0: float = 1.0
    alpha: ConcentrationSetting = field(default_factory=ConcentrationSetting)
    beta: ConcentrationSetting = field(default_factory=ConcentrationSetting)
    kappa_d: float = 0.5
    kappa_o: float = 0.5
    reg_prior: tuple | None = None  # (m_reg, k_reg)

    def __post_init__(self):
        for name in ("k0", "a0", "b0"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        for name in ("kappa_d", "kappa_o"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValidationError(f"{name} must lie strictly inside (0, 1)")
        for label, setting in (("alpha", self.alpha), ("beta", self.beta)):
            if setting.is_random:
                a, b = setting.prior
                if a <= 0 or b <= 0:
                    raise ValidationError(f"{label} hyperprior must be positive")
            elif setting.value <= 0:
                raise ValidationError(f"fixed {label} must be positive")
        if self.reg_prior is not None and self.reg_prior[1] <= 0:
            raise ValidationError("regression prior precision must be positive")

    @classmethod
    def from_data(cls, data, **overrides):
        """Empirical defaults: m0 = grand mean and k0 = 1/variance of the
        (scaled) pooled data; b0 = 1, a0 = 3, Gamma(3,3) concentrations."""
        pooled = data.pooled()
        if data.scale is not None:
            pooled = pooled / data.scale[data.unit_of_obs()]
        var = float(np.var(pooled))
        defaults = dict(m0=float(np.mean(pooled)),
                        k0=1.0 / var if var > 0 else 1.0)
        defaults.update(overrides)
        return cls(**defaults)


# ---------------------------------------------------------------------------
# Slice envelopes


def slice_envelope(k, kappa):
    """Deterministic geometric envelope (1 - kappa) * kappa**(k-1), k >= 1."""
    k = np.asarray(k)
    if np.any(k < 1):
        raise ValueError("envelope position k must be >= 1")
    return (1.0 - kappa) * kappa ** (k - 1)


def log_slice_envelope(k, kappa):
    k = np.asarray(k)
    return np.log1p(-kappa) + (k - 1) * np.log(kappa)


# ---------------------------------------------------------------------------
# Rounding grid and count kernel


class RoundingGrid:
    """Thresholds a(0) = -inf, a(g) = g - 1 for g >= 1.

    A count z occupies the latent cell [a(z), a(z+1)); z = 0 collects all
    latent mass below zero, which gives the zero-inflated reading of count
    tables.
    """

    def threshold(self, g):
        g = np.asarray(g, dtype=float)
        return np.where(g <= 0, -np.inf, g - 1.0)

    def cell(self, z):
        """(lower, upper) latent thresholds of count z."""
        z = np.asarray(z)
        if np.any(z < 0):
            raise ValidationError("counts must be non-negative")
        return self.threshold(z), self.threshold(z + 1)

    def cell_of(self, y):
        """Count whose cell contains latent value y."""
        y = np.asarray(y, dtype=float)
        return np.where(y < 0, 0, np.floor(y).astype(np.int64) + 1)


DEFAULT_GRID = RoundingGrid()


def _log_interval_prob(lo, hi):
    """log(Phi(hi) - Phi(lo)) for standardized bounds, stable in both tails."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    out = np.empty(np.broadcast_shapes(lo.shape, hi.shape))
    lo, hi = np.broadcast_arrays(lo, hi)

    central = (lo <= 0) & (hi >= 0)
    if np.any(central):
        diff = ndtr(hi[central]) - ndtr(lo[central])
        out[central] = np.log(np.maximum(diff, np.finfo(float).tiny))

    left = hi < 0
    if np.any(left):
        la = log_ndtr(hi[left])
        lb = log_ndtr(lo[left])
        out[left] = la + _log1mexp(lb - la)

    right = lo > 0
    if np.any(right):
        la = log_ndtr(-lo[right])
        lb = log_ndtr(-hi[right])
        out[right] = la + _log1mexp(lb - la)
    return out


def _log1mexp(d):
    """log(1 - exp(d)) for d <= 0, with a density*width floor as d -> 0."""
    d = np.asarray(d, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(d < -0.693, np.log1p(-np.exp(d)), np.log(-np.expm1(d)))
    # d rounded to -0.0: the cell is narrower than the local resolution of
    # log_ndtr; fall back to the smallest representable log-difference.
    tiny = ~np.isfinite(out)
    if np.any(tiny):
        out = np.where(tiny, np.log(np.finfo(float).tiny), out)
    return out


def dcam_cell_logprob(z, mu, sigma2, grid=DEFAULT_GRID, scale=None):
    """Log-probability that a rounded Gaussian N(mu, sigma2) emits count z.

    With a unit scale gamma, the latent kernel is N(gamma*mu, gamma^2*sigma2).
    Never returns -inf or NaN for finite parameters.
    """
    if np.any(np.asarray(sigma2) <= 0):
        raise ValidationError("sigma2 must be positive")
    lo, hi = grid.cell(z)
    mean = np.asarray(mu, dtype=float)
    sd = np.sqrt(np.asarray(sigma2, dtype=float))
    if scale is not None:
        scale = np.asarray(scale, dtype=float)
        mean = scale * mean
        sd = scale * sd
    return _log_interval_prob((lo - mean) / sd, (hi - mean) / sd)


def dcam_cell_prob(z, mu, sigma2, grid=DEFAULT_GRID, scale=None):
    """Probability that the rounded Gaussian kernel emits count z."""
    return np.exp(dcam_cell_logprob(z, mu, sigma2, grid=grid, scale=scale))


def normal_logpdf(y, mu, sigma2):
    """Gaussian log-density, broadcasting over all arguments."""
    y = np.asarray(y, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    return -0.5 * (np.log(2.0 * np.pi * sigma2) + (y - mu) ** 2 / sigma2)


# ---------------------------------------------------------------------------
# Stick/weight conversions


def sticks_from_weights(weights):
    """Inverse of :func:`commonatoms.rng.stick_weights` along the last axis.

    Computed in extended precision: the leftover mass 1 - sum(weights)
    cancels catastrophically in double precision once the weights nearly
    exhaust the stick.
    """
    weights = np.asarray(weights, dtype=np.longdouble)
    remaining = 1.0 - np.cumsum(weights, axis=-1)
    denom = np.concatenate(
        [np.ones_like(weights[..., :1]), remaining[..., :-1]], axis=-1)
    return (weights / denom).astype(float)


# Re-exported here because weight reconstruction is a model invariant.
stick_breaking = stick_weights


# ---------------------------------------------------------------------------
# Sampler state


@dataclass
class SamplerState:
    """Full latent configuration owned by a single chain.

    S holds unit-level labels (J,), M observation-level labels pooled in
    unit order (N,).  Weight arrays are sized to the current truncation
    level; ``pi`` and ``omega`` are always the stick-breaking transforms of
    ``v`` and ``u_sticks``.
    """

    S: np.ndarray
    M: np.ndarray
    v: np.ndarray
    pi: np.ndarray
    u_sticks: np.ndarray
    omega: np.ndarray
    theta_mu: np.ndarray
    theta_sigma2: np.ndarray
    u_d: np.ndarray
    u_o: np.ndarray
    alpha: float
    beta: float
    y_latent: np.ndarray | None = None
    reg_coeff: float | None = None

    @property
    def k_levels(self):
        return len(self.pi)

    @property
    def l_levels(self):
        return len(self.theta_mu)

    def check_finite(self, sweep):
        arrays = [self.pi, self.omega, self.theta_mu, self.theta_sigma2,
                  np.array([self.alpha, self.beta])]
        if self.y_latent is not None:
            arrays.append(self.y_latent)
        if self.reg_coeff is not None:
            arrays.append(np.array([self.reg_coeff]))
        for arr in arrays:
            if not np.all(np.isfinite(arr)):
                raise NumericFailure(
                    f"non-finite value in sampler state at sweep {sweep}")
