import numpy as np
import pytest

from commonatoms.draws import DrawStore, load_chains, merge_chains
from commonatoms.model import Dataset, Hyperparameters
from commonatoms.slice_sampler import SliceConfig, SliceSampler


def _small_store(seed=0, reg=False):
    data = Dataset(kind="continuous",
                   units=(np.array([0.2, -0.3, 0.5]), np.array([3.0, 2.5])),
                   covariate=np.array([0.5, -0.5]) if reg else None)
    hyper = Hyperparameters(m0=0.0, k0=0.5, a0=3.0, b0=1.0,
                            reg_prior=(0.0, 1.0) if reg else None)
    cfg = SliceConfig(iters=12, burnin=4, thin=2, seed=seed)
    return SliceSampler(data, hyper, cfg, model="cam").run()


def test_roundtrip_exact(tmp_path):
    store = _small_store()
    path = tmp_path / "chain000"
    store.save(path)
    back = DrawStore.load(path)
    assert back.n_draws == store.n_draws
    assert np.array_equal(back.s_matrix(), store.s_matrix())
    assert np.array_equal(back.m_matrix(), store.m_matrix())
    for t in range(store.n_draws):
        assert np.array_equal(back.atom_mu[t], store.atom_mu[t])
        assert np.array_equal(back.atom_sigma2[t], store.atom_sigma2[t])
        assert np.array_equal(back.pi[t], store.pi[t])
        assert np.array_equal(back.omega[t], store.omega[t])
    assert back.alpha == store.alpha
    assert back.beta == store.beta
    assert back.k_active == store.k_active
    assert back.l_active == store.l_active
    assert back.reg_coeff == store.reg_coeff


def test_roundtrip_with_regression(tmp_path):
    store = _small_store(reg=True)
    assert all(r is not None for r in store.reg_coeff)
    path = tmp_path / "c"
    store.save(path)
    back = DrawStore.load(path)
    assert back.reg_coeff == store.reg_coeff


def test_expected_files(tmp_path):
    store = _small_store()
    path = tmp_path / "chain000"
    store.save(path)
    names = {p.name for p in path.iterdir()}
    assert {"S.csv", "atoms.csv", "weights.csv", "scalars.csv",
            "meta.json"} <= names
    assert {"M_unit000.csv", "M_unit001.csv"} <= names


def test_load_chains_and_merge(tmp_path):
    a = _small_store(seed=1)
    b = _small_store(seed=2)
    a.save(tmp_path / "chain000")
    b.save(tmp_path / "chain001")
    stores = load_chains(tmp_path)
    assert len(stores) == 2
    merged = merge_chains(stores)
    assert merged.n_draws == a.n_draws + b.n_draws
    assert np.array_equal(merged.s_matrix()[:a.n_draws], a.s_matrix())


def test_load_single_chain_dir(tmp_path):
    store = _small_store()
    store.save(tmp_path / "chain000")
    stores = load_chains(tmp_path / "chain000")
    assert len(stores) == 1


def test_load_chains_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_chains(tmp_path)


def test_merge_rejects_mismatched_units():
    a = _small_store()
    b = DrawStore(unit_lengths=np.array([1, 2, 3]))
    with pytest.raises(ValueError):
        merge_chains([a, b])
