import numpy as np
import pytest

from commonatoms.draws import DrawStore
from commonatoms.model import (Dataset, Hyperparameters, ValidationError,
                               slice_envelope)
from commonatoms.rng import RngStream
from commonatoms.slice_sampler import (SliceConfig, SliceSampler, run_chain,
                                       slice_level)
from commonatoms.summaries import coclustering


def _toy_sampler(units=None, kind="continuous", model="cam", **cfg_kwargs):
    if units is None:
        units = (np.array([0.1, -0.2, 0.3]), np.array([1.4, 1.6, 1.3, 1.5]))
    data = Dataset(kind=kind, units=tuple(units))
    hyper = Hyperparameters(m0=0.0, k0=1.0, a0=3.0, b0=1.0)
    config = SliceConfig(iters=10, burnin=0, thin=1, seed=0, **cfg_kwargs)
    return SliceSampler(data, hyper, config, model=model)


# ---------------------------------------------------------------------------
# truncation levels


def test_slice_level_covers_all_admissible_positions():
    for u_min, kappa in ((0.01, 0.5), (0.001, 0.5), (0.2, 0.3), (1e-9, 0.8)):
        level, hit = slice_level(u_min, kappa, cap=10_000)
        assert not hit
        assert slice_envelope(level, kappa) > u_min
        assert slice_envelope(level + 1, kappa) <= u_min


def test_slice_level_known_values():
    # floor((log u - log(1-kappa)) / log kappa) + 1
    assert slice_level(0.01, 0.5, 100)[0] == 6
    assert slice_level(0.001, 0.5, 100)[0] == 9


def test_slice_level_boundary_and_cap():
    level, hit = slice_level(0.5, 0.5, 100)
    assert level == 1 and not hit
    level, hit = slice_level(1e-30, 0.5, cap=20)
    assert level == 20 and hit


# ---------------------------------------------------------------------------
# slice variables


def test_slice_draw_support():
    sampler = _toy_sampler()
    rng = RngStream(1)
    state = sampler.init_state(rng)
    state.S = np.array([0, 2])
    state.M = np.array([0, 0, 1, 2, 2, 1, 0])[: sampler.N]
    sampler.step_slice_variables(state, rng)
    assert np.all(state.u_d < slice_envelope(state.S + 1, 0.5))
    assert np.all(state.u_d > 0)
    assert np.all(state.u_o < slice_envelope(state.M + 1, 0.5))
    # a label at position 3 has envelope 0.125
    three = state.M == 2
    assert np.all(state.u_o[three] < 0.125)


# ---------------------------------------------------------------------------
# label updates against brute-force enumeration


def _manual_state(sampler, S, M, pi, omega, mu, sigma2, rng):
    state = sampler.init_state(rng)
    state.S = np.asarray(S)
    state.M = np.asarray(M)
    state.pi = np.asarray(pi, dtype=float)
    state.v = np.full(len(pi), 0.5)
    state.omega = np.asarray(omega, dtype=float)
    state.u_sticks = np.full_like(state.omega, 0.5)
    state.theta_mu = np.asarray(mu, dtype=float)
    state.theta_sigma2 = np.asarray(sigma2, dtype=float)
    return state


def test_distributional_update_matches_brute_force():
    # one unit, three clusters, slice variable small enough to admit all
    sampler = _toy_sampler(units=(np.array([0.5, 1.0]),))
    rng = RngStream(2)
    omega = np.array([[0.5, 0.7, 0.2],
                      [0.3, 0.2, 0.5],
                      [0.2, 0.1, 0.3]])
    state = _manual_state(sampler, [0], [0, 2], [0.5, 0.3, 0.2], omega,
                          [0.0, 1.0, 2.0], [1.0, 1.0, 1.0], rng)
    state.u_d = np.array([1e-4])
    state.u_o = np.array([1e-6, 1e-6])

    logits = sampler._distributional_logits(state)[0]
    probs = np.exp(logits - logits.max())
    probs /= probs.sum()

    # brute force: P(S=k) prop. (pi_k / xi_k) * prod_i omega[M_i, k]
    xi = slice_envelope(np.arange(1, 4), 0.5)
    brute = np.array([state.pi[k] / xi[k] * omega[0, k] * omega[2, k]
                      for k in range(3)])
    brute = np.where(xi > state.u_d[0], brute, 0.0)
    brute /= brute.sum()
    assert np.allclose(probs, brute, atol=1e-12)


def test_distributional_update_hand_example():
    # two admissible clusters with equal pi/xi ratios; single observation
    # with omega 0.8 vs 0.2 -> P(S = first) = 0.8
    sampler = _toy_sampler(units=(np.array([0.5]),))
    rng = RngStream(3)
    xi = slice_envelope(np.arange(1, 3), 0.5)
    pi = xi * 0.9  # equal pi/xi ratio
    omega = np.array([[0.8, 0.2]])
    state = _manual_state(sampler, [0], [0], pi, omega, [0.0], [1.0], rng)
    state.u_d = np.array([1e-6])
    state.u_o = np.array([1e-9])
    logits = sampler._distributional_logits(state)[0]
    probs = np.exp(logits - logits.max())
    probs /= probs.sum()
    assert probs[0] == pytest.approx(0.8, abs=1e-12)

    # sampling frequencies agree with the exact conditional
    hits = 0
    reps = 20_000
    for _ in range(reps):
        state.S = np.array([0])
        sampler.step_distributional_labels(state, rng)
        hits += state.S[0] == 0
    assert abs(hits / reps - 0.8) < 0.01


def test_observational_update_hand_example():
    # equal omega/xi for two atoms, kernel values 0.3 and 0.1 -> 0.75/0.25
    sampler = _toy_sampler(units=(np.array([0.0]),))
    rng = RngStream(4)
    xi = slice_envelope(np.arange(1, 3), 0.5)
    omega = np.column_stack([xi * 0.8])
    # choose atoms whose normal densities at y=0 are exactly 0.3 and 0.1
    sigma2 = np.array([1.0, 1.0])
    dens = lambda c: np.sqrt(-2.0 * np.log(c * np.sqrt(2 * np.pi)))
    mu = np.array([dens(0.3), dens(0.1)])
    state = _manual_state(sampler, [0], [0], [1.0], omega, mu, sigma2, rng)
    state.u_d = np.array([1e-6])
    state.u_o = np.array([1e-9])
    logits = sampler._observational_logits(state)[0]
    probs = np.exp(logits - logits.max())
    probs /= probs.sum()
    assert probs[0] == pytest.approx(0.75, abs=1e-9)


def test_observational_update_single_admissible_atom():
    sampler = _toy_sampler(units=(np.array([0.0]),))
    rng = RngStream(5)
    state = _manual_state(sampler, [0], [0], [1.0],
                          np.array([[0.6], [0.3]]), [0.0, 5.0], [1.0, 1.0],
                          rng)
    state.u_d = np.array([1e-6])
    state.u_o = np.array([0.3])  # only the first envelope (0.5) admits it
    for _ in range(50):
        state.M = np.array([0])
        sampler.step_observational_labels(state, rng)
        assert state.M[0] == 0


# ---------------------------------------------------------------------------
# label switch


def test_label_switch_identical_clusters_always_accepts():
    sampler = _toy_sampler(units=(np.array([0.1, 0.2]), np.array([0.3, 0.1])))
    rng = RngStream(6)
    state = sampler.init_state(rng)
    state.S = np.array([0, 1])
    state.M = np.array([0, 0, 0, 0])
    state.v = np.array([0.4, 0.4])
    state.pi = np.array([0.4, 0.24])
    state.u_sticks = np.full((1, 2), 0.5)
    state.omega = np.full((1, 2), 0.5)
    state.theta_mu = np.array([0.0])
    state.theta_sigma2 = np.array([1.0])
    proposals_before = sampler.ls_stats["outer_proposed"]
    for _ in range(50):
        sampler.step_label_switch(state, rng)
    accepted = sampler.ls_stats["outer_accepted"]
    proposed = sampler.ls_stats["outer_proposed"] - proposals_before
    assert proposed == 50 and accepted == 50  # symmetric swap never rejected


def test_label_switch_preserves_posterior_coclustering():
    units = (np.random.default_rng(0).normal(0, 1, size=12),
             np.random.default_rng(1).normal(4, 1, size=12))
    results = {}
    for flag in (True, False):
        data = Dataset(kind="continuous", units=units)
        hyper = Hyperparameters(m0=2.0, k0=0.2, a0=3.0, b0=1.0)
        cfg = SliceConfig(iters=4000, burnin=1000, thin=1, seed=8,
                          label_switch=flag)
        store = SliceSampler(data, hyper, cfg, model="cam").run()
        results[flag] = coclustering(store.s_matrix())
    assert np.max(np.abs(results[True] - results[False])) < 0.08


# ---------------------------------------------------------------------------
# chain driver


def test_run_chain_thinning_count():
    data = Dataset(kind="continuous",
                   units=(np.array([0.0, 1.0]), np.array([2.0, 3.0])))
    store = run_chain(data, config=SliceConfig(iters=10, burnin=3, thin=2,
                                               seed=1))
    assert store.n_draws == 5


def test_run_chain_seed_reproducibility():
    data = Dataset(kind="continuous",
                   units=(np.array([0.0, 1.0, -0.5]), np.array([2.0, 3.0])))
    cfg = SliceConfig(iters=50, burnin=20, thin=1, seed=42)
    a = run_chain(data, config=cfg)
    b = run_chain(data, config=cfg)
    assert np.array_equal(a.s_matrix(), b.s_matrix())
    assert np.array_equal(a.m_matrix(), b.m_matrix())
    for t in range(a.n_draws):
        assert np.array_equal(a.atom_mu[t], b.atom_mu[t])
        assert np.array_equal(a.pi[t], b.pi[t])
    assert a.alpha == b.alpha
    c = run_chain(data, config=SliceConfig(iters=50, burnin=20, thin=1,
                                           seed=43))
    assert not all(np.array_equal(x, y)
                   for x, y in zip(a.s_matrix(), c.s_matrix()))


def test_dcam_requires_count_data():
    data = Dataset(kind="continuous", units=(np.array([0.0, 1.0]),))
    with pytest.raises(ValidationError):
        SliceSampler(data, Hyperparameters(), SliceConfig(), model="dcam")
    data2 = Dataset(kind="count", units=(np.array([0, 1]),))
    with pytest.raises(ValidationError):
        SliceSampler(data2, Hyperparameters(), SliceConfig(), model="cam")


def test_dcam_latent_values_stay_in_cells():
    data = Dataset(kind="count",
                   units=(np.array([0, 1, 5, 2]), np.array([3, 0, 0, 7])))
    hyper = Hyperparameters.from_data(data)
    cfg = SliceConfig(iters=30, burnin=0, thin=1, seed=2)
    sampler = SliceSampler(data, hyper, cfg, model="dcam")
    rng = RngStream(2)
    state = sampler.init_state(rng)
    z = sampler.z_all
    for _ in range(30):
        sampler.sweep(state, rng)
        lo, hi = sampler.grid.cell(z)
        assert np.all((state.y_latent >= lo) & (state.y_latent < hi))
        assert np.all(state.pi > 0)
        assert state.S.max() < state.k_levels
        assert state.M.max() < state.l_levels


def test_posterior_consistency_single_component():
    # data from one normal component: the dominant atom's posterior covers
    # the generating values in >= 18 of 20 seeded replications
    hits_mu = 0
    hits_s2 = 0
    for seed in range(20):
        gen = np.random.default_rng(1000 + seed)
        units = tuple(gen.normal(2.0, 1.0, size=50) for _ in range(3))
        data = Dataset(kind="continuous", units=units)
        hyper = Hyperparameters.from_data(data)
        cfg = SliceConfig(iters=400, burnin=300, thin=1, seed=seed)
        store = SliceSampler(data, hyper, cfg, model="cam").run()
        mus, s2s = [], []
        for t in range(store.n_draws):
            labels, counts = np.unique(store.M[t], return_counts=True)
            top = labels[np.argmax(counts)]
            mus.append(store.atom_mu[t][top])
            s2s.append(store.atom_sigma2[t][top])
        lo, hi = np.percentile(mus, [2.5, 97.5])
        hits_mu += lo <= 2.0 <= hi
        lo, hi = np.percentile(s2s, [2.5, 97.5])
        hits_s2 += lo <= 1.0 <= hi
    assert hits_mu >= 18
    assert hits_s2 >= 18


def test_dependent_envelope_variant_agrees_on_toy():
    units = (np.random.default_rng(3).normal(0, 1, size=10),
             np.random.default_rng(4).normal(5, 1, size=10))
    data = Dataset(kind="continuous", units=units)
    hyper = Hyperparameters(m0=2.5, k0=0.1, a0=3.0, b0=1.0)
    ccms = {}
    for dep in (False, True):
        cfg = SliceConfig(iters=4000, burnin=1000, thin=1, seed=5,
                          dependent_envelopes=dep)
        store = SliceSampler(data, hyper, cfg, model="cam").run()
        ccms[dep] = coclustering(store.s_matrix())
    assert np.max(np.abs(ccms[True] - ccms[False])) < 0.1


def test_cap_warning_recorded():
    data = Dataset(kind="continuous",
                   units=(np.array([0.0, 1.0]), np.array([5.0, 6.0]),
                          np.array([10.0, 11.0])))
    cfg = SliceConfig(iters=100, burnin=0, thin=1, seed=3, max_k=3, max_l=3)
    store = run_chain(data, config=cfg)
    assert any("cap" in w for w in store.meta["warnings"])


def test_config_validation():
    with pytest.raises(ValidationError):
        SliceConfig(iters=0)
    with pytest.raises(ValidationError):
        SliceConfig(iters=5, thin=6)
    with pytest.raises(ValidationError):
        SliceConfig(max_k=0)
