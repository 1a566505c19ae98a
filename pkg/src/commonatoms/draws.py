"""Thinned post-burn-in record of sampler states, with text serialization.

One directory per chain:

* ``S.csv``          rows = draws, columns = units (integer labels)
* ``M_unit###.csv``  per unit, rows = draws, columns = observations
* ``atoms.csv``      long format: draw,label,mu,sigma2
* ``weights.csv``    long format: draw,level,k,l,weight (level D rows leave l empty)
* ``scalars.csv``    draw,alpha,beta,reg_coeff,k_active,l_active
* ``meta.json``      seed, config echo, engine, wall time, warnings

Floats are written with ``repr`` so a save/load round trip is exact and
reruns with the same seed produce bitwise-identical data files.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np


def _fmt(x):
    return repr(float(x))


@dataclass
class DrawStore:
    """Columnar record of retained draws for one chain."""

    unit_lengths: np.ndarray
    meta: dict = field(default_factory=dict)
    S: list = field(default_factory=list)          # (J,) int arrays
    M: list = field(default_factory=list)          # (N,) int arrays (pooled)
    pi: list = field(default_factory=list)         # (K_t,) arrays
    omega: list = field(default_factory=list)      # (L_t, K_t) arrays
    atom_mu: list = field(default_factory=list)    # (L_t,) arrays
    atom_sigma2: list = field(default_factory=list)
    alpha: list = field(default_factory=list)
    beta: list = field(default_factory=list)
    reg_coeff: list = field(default_factory=list)  # float or None per draw
    k_active: list = field(default_factory=list)
    l_active: list = field(default_factory=list)

    @property
    def n_draws(self):
        return len(self.S)

    @property
    def n_units(self):
        return len(self.unit_lengths)

    def append_state(self, state):
        self.S.append(state.S.copy())
        self.M.append(state.M.copy())
        self.pi.append(state.pi.copy())
        self.omega.append(state.omega.copy())
        self.atom_mu.append(state.theta_mu.copy())
        self.atom_sigma2.append(state.theta_sigma2.copy())
        self.alpha.append(float(state.alpha))
        self.beta.append(float(state.beta))
        self.reg_coeff.append(
            None if state.reg_coeff is None else float(state.reg_coeff))
        self.k_active.append(state.k_levels)
        self.l_active.append(state.l_levels)

    def s_matrix(self):
        return np.asarray(self.S, dtype=int)

    def m_matrix(self):
        return np.asarray(self.M, dtype=int)

    def unit_slices(self):
        ends = np.cumsum(self.unit_lengths)
        starts = ends - self.unit_lengths
        return [slice(int(a), int(b)) for a, b in zip(starts, ends)]

    # -- serialization ------------------------------------------------------

    def save(self, path):
        os.makedirs(path, exist_ok=True)
        smat = self.s_matrix()
        with open(os.path.join(path, "S.csv"), "w") as fh:
            for row in smat:
                fh.write(",".join(str(int(v)) for v in row) + "\n")
        mmat = self.m_matrix()
        for j, sl in enumerate(self.unit_slices()):
            with open(os.path.join(path, f"M_unit{j:03d}.csv"), "w") as fh:
                for row in mmat[:, sl]:
                    fh.write(",".join(str(int(v)) for v in row) + "\n")
        with open(os.path.join(path, "atoms.csv"), "w") as fh:
            fh.write("draw,label,mu,sigma2\n")
            for t in range(self.n_draws):
                for l, (mu, s2) in enumerate(
                        zip(self.atom_mu[t], self.atom_sigma2[t])):
                    fh.write(f"{t},{l},{_fmt(mu)},{_fmt(s2)}\n")
        with open(os.path.join(path, "weights.csv"), "w") as fh:
            fh.write("draw,level,k,l,weight\n")
            for t in range(self.n_draws):
                for k, w in enumerate(self.pi[t]):
                    fh.write(f"{t},D,{k},,{_fmt(w)}\n")
                om = self.omega[t]
                for k in range(om.shape[1]):
                    for l in range(om.shape[0]):
                        fh.write(f"{t},O,{k},{l},{_fmt(om[l, k])}\n")
        with open(os.path.join(path, "scalars.csv"), "w") as fh:
            fh.write("draw,alpha,beta,reg_coeff,k_active,l_active\n")
            for t in range(self.n_draws):
                reg = "" if self.reg_coeff[t] is None else _fmt(self.reg_coeff[t])
                fh.write(f"{t},{_fmt(self.alpha[t])},{_fmt(self.beta[t])},"
                         f"{reg},{self.k_active[t]},{self.l_active[t]}\n")
        meta = dict(self.meta)
        meta["unit_lengths"] = [int(v) for v in self.unit_lengths]
        meta["n_draws"] = self.n_draws
        with open(os.path.join(path, "meta.json"), "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(os.path.join(path, "meta.json")) as fh:
            meta = json.load(fh)
        unit_lengths = np.asarray(meta["unit_lengths"], dtype=int)
        store = cls(unit_lengths=unit_lengths, meta=meta)

        smat = np.loadtxt(os.path.join(path, "S.csv"),
                          delimiter=",", dtype=int, ndmin=2)
        store.S = [row for row in smat]
        cols = []
        for j in range(len(unit_lengths)):
            mj = np.loadtxt(os.path.join(path, f"M_unit{j:03d}.csv"),
                            delimiter=",", dtype=int, ndmin=2)
            cols.append(mj)
        mmat = np.hstack(cols)
        store.M = [row for row in mmat]

        n_draws = meta["n_draws"]
        atom_mu = [[] for _ in range(n_draws)]
        atom_s2 = [[] for _ in range(n_draws)]
        with open(os.path.join(path, "atoms.csv")) as fh:
            next(fh)
            for line in fh:
                t, _, mu, s2 = line.rstrip("\n").split(",")
                atom_mu[int(t)].append(float(mu))
                atom_s2[int(t)].append(float(s2))
        store.atom_mu = [np.array(v) for v in atom_mu]
        store.atom_sigma2 = [np.array(v) for v in atom_s2]

        pi = [[] for _ in range(n_draws)]
        omega_entries = [[] for _ in range(n_draws)]
        with open(os.path.join(path, "weights.csv")) as fh:
            next(fh)
            for line in fh:
                t, level, k, l, w = line.rstrip("\n").split(",")
                if level == "D":
                    pi[int(t)].append(float(w))
                else:
                    omega_entries[int(t)].append((int(l), int(k), float(w)))
        store.pi = [np.array(v) for v in pi]
        store.omega = []
        for t in range(n_draws):
            k_lev = len(store.pi[t])
            l_lev = len(store.atom_mu[t])
            om = np.zeros((l_lev, k_lev))
            for l, k, w in omega_entries[t]:
                om[l, k] = w
            store.omega.append(om)

        with open(os.path.join(path, "scalars.csv")) as fh:
            next(fh)
            for line in fh:
                _, a, b, reg, ka, la = line.rstrip("\n").split(",")
                store.alpha.append(float(a))
                store.beta.append(float(b))
                store.reg_coeff.append(None if reg == "" else float(reg))
                store.k_active.append(int(ka))
                store.l_active.append(int(la))
        return store


def chain_dirs(path):
    """Sorted chain subdirectories of a fit output directory."""
    names = sorted(n for n in os.listdir(path)
                   if n.startswith("chain") and
                   os.path.isdir(os.path.join(path, n)))
    return [os.path.join(path, n) for n in names]


def load_chains(path):
    """Load every chain under ``path`` (or ``path`` itself if it is one)."""
    if os.path.exists(os.path.join(path, "meta.json")):
        return [DrawStore.load(path)]
    dirs = chain_dirs(path)
    if not dirs:
        raise FileNotFoundError(f"no chain directories under {path}")
    return [DrawStore.load(d) for d in dirs]


def merge_chains(stores):
    """Pool draws from several chains of the same run."""
    first = stores[0]
    merged = DrawStore(unit_lengths=first.unit_lengths,
                       meta={"merged_from": len(stores), **first.meta})
    for st in stores:
        if not np.array_equal(st.unit_lengths, first.unit_lengths):
            raise ValueError("chains disagree on unit lengths")
        merged.S.extend(st.S)
        merged.M.extend(st.M)
        merged.pi.extend(st.pi)
        merged.omega.extend(st.omega)
        merged.atom_mu.extend(st.atom_mu)
        merged.atom_sigma2.extend(st.atom_sigma2)
        merged.alpha.extend(st.alpha)
        merged.beta.extend(st.beta)
        merged.reg_coeff.extend(st.reg_coeff)
        merged.k_active.extend(st.k_active)
        merged.l_active.extend(st.l_active)
    return merged
