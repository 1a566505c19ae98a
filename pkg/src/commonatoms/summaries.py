"""Posterior summaries: co-clustering, optimal partitions, and metrics.

All partition metrics are label-permutation invariant.  The point-estimate
partition minimizes the Jensen lower bound of the expected variation of
information computed from the posterior co-clustering matrix (the standard
decision-theoretic device of Wade & Ghahramani), searched over the sampled
partitions plus average-linkage cuts of the co-clustering dissimilarity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import cut_tree, linkage
from scipy.spatial.distance import squareform

from .model import ValidationError


# ---------------------------------------------------------------------------
# Co-clustering


def coclustering(label_draws, chunk=None):
    """Pairwise same-cluster frequency matrix from (T, p) label draws."""
    draws = np.asarray(label_draws)
    if draws.ndim != 2 or draws.shape[0] < 1:
        raise ValidationError("need at least one draw of labels")
    t, p = draws.shape
    if chunk is None:
        chunk = max(1, int(2e8 // max(p * p, 1)))  # ~200 MB of bools
    acc = np.zeros((p, p))
    for start in range(0, t, chunk):
        block = draws[start:start + chunk]
        acc += (block[:, :, None] == block[:, None, :]).sum(axis=0)
    return acc / t


def true_coclustering(labels):
    """0/1 co-membership matrix of a single partition."""
    labels = np.asarray(labels)
    return (labels[:, None] == labels[None, :]).astype(float)


# ---------------------------------------------------------------------------
# Partition metrics


def _counts(labels):
    _, inv = np.unique(labels, return_inverse=True)
    return np.bincount(inv), inv


def _contingency(p1, p2):
    c1, i1 = _counts(p1)
    c2, i2 = _counts(p2)
    table = np.zeros((len(c1), len(c2)))
    np.add.at(table, (i1, i2), 1.0)
    return table, c1, c2


def vi(p1, p2):
    """Variation of information between two partitions, in nats."""
    p1, p2 = np.asarray(p1), np.asarray(p2)
    if p1.shape != p2.shape:
        raise ValidationError("partitions must have equal length")
    n = len(p1)
    table, c1, c2 = _contingency(p1, p2)
    pij = table / n
    pi_ = c1 / n
    pj_ = c2 / n
    h1 = -np.sum(pi_ * np.log(pi_))
    h2 = -np.sum(pj_ * np.log(pj_))
    nz = pij > 0
    mi = np.sum(pij[nz] * (np.log(pij[nz])
                           - np.log(np.outer(pi_, pj_)[nz])))
    return max(h1 + h2 - 2.0 * mi, 0.0)


def ari(p1, p2):
    """Adjusted Rand index (Hubert-Arabie) between two partitions."""
    p1, p2 = np.asarray(p1), np.asarray(p2)
    if p1.shape != p2.shape:
        raise ValidationError("partitions must have equal length")
    table, c1, c2 = _contingency(p1, p2)

    def comb2(x):
        return x * (x - 1.0) / 2.0

    sum_ij = comb2(table).sum()
    sum_i = comb2(c1).sum()
    sum_j = comb2(c2).sum()
    total = comb2(len(p1))
    expected = sum_i * sum_j / total
    max_index = 0.5 * (sum_i + sum_j)
    if max_index == expected:
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


def nfd(a, b):
    """Normalized squared Frobenius discrepancy sum((a-b)^2) / p^2."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError("need two square matrices of equal shape")
    return float(np.sum((a - b) ** 2) / a.shape[0] ** 2)


def crf(counts):
    """Cumulative relative frequency of descending-sorted counts."""
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if counts.size == 0 or total <= 0:
        raise ValidationError("need at least one positive count")
    if np.any(counts < 0):
        raise ValidationError("counts must be non-negative")
    ordered = counts[np.argsort(-counts, kind="stable")]
    return np.cumsum(ordered) / total


# ---------------------------------------------------------------------------
# Optimal partition under expected VI


@dataclass
class PartitionEstimate:
    labels: np.ndarray
    expected_loss: float
    provenance: str

    @property
    def n_clusters(self):
        return len(np.unique(self.labels))


def canonical_labels(labels):
    """Relabel clusters in order of first appearance (canonical form)."""
    labels = np.asarray(labels)
    _, first = np.unique(labels, return_index=True)
    order = labels[np.sort(first)]
    lut = {lab: i for i, lab in enumerate(order)}
    return np.array([lut[lab] for lab in labels], dtype=int)


def expected_vi_lower_bound(labels, ccm):
    """Jensen lower bound of posterior expected VI for one candidate."""
    labels = canonical_labels(labels)
    onehot = np.zeros((len(labels), labels.max() + 1))
    onehot[np.arange(len(labels)), labels] = 1.0
    sizes = onehot.sum(axis=0)
    cluster_mass = ccm @ onehot  # (n, C): sum of P_ij over j in cluster c
    n = len(labels)
    own = cluster_mass[np.arange(n), labels]
    row_mass = ccm.sum(axis=1)
    return float(np.mean(np.log(sizes[labels]) + np.log(row_mass)
                         - 2.0 * np.log(own)))


def hierarchical_candidates(ccm, max_cuts=None):
    """Average-linkage cuts of 1 - ccm at every merge height.

    ``max_cuts`` keeps only the coarsest cuts (1..max_cuts clusters).
    """
    p = ccm.shape[0]
    if p == 1:
        return [np.zeros(1, dtype=int)]
    dist = 1.0 - ccm
    np.fill_diagonal(dist, 0.0)
    dist = np.maximum(dist, 0.0)
    z = linkage(squareform(dist, checks=False), method="average")
    cuts = cut_tree(z)  # (p, p) columns with p..1 clusters
    keep = range(cuts.shape[1]) if max_cuts is None \
        else range(max(cuts.shape[1] - max_cuts, 0), cuts.shape[1])
    return [cuts[:, i].astype(int) for i in keep]


def minimize_expected_vi(ccm, sampled=None, candidates=None,
                         max_sampled=None, max_cuts=None):
    """Best partition in the candidate pool under the expected-VI bound.

    The default pool is every distinct sampled partition plus all
    average-linkage cuts of 1 - ccm; ``max_sampled``/``max_cuts`` thin the
    pool deterministically for large problems.  Ties break toward fewer
    clusters, then lexicographically smaller canonical labels.
    """
    ccm = np.asarray(ccm, dtype=float)
    pool = []
    if candidates is not None:
        pool.extend(("given", np.asarray(c, dtype=int)) for c in candidates)
    else:
        if sampled is not None:
            sampled = np.asarray(sampled, dtype=int)
            seen = {}
            for row in sampled:
                seen.setdefault(canonical_labels(row).tobytes(), row)
            distinct = list(seen.values())
            if max_sampled is not None and len(distinct) > max_sampled:
                idx = np.linspace(0, len(distinct) - 1,
                                  max_sampled).astype(int)
                distinct = [distinct[i] for i in idx]
            pool.extend(("sampled", row) for row in distinct)
        pool.extend(("hierarchical", c)
                    for c in hierarchical_candidates(ccm, max_cuts=max_cuts))
    if not pool:
        raise ValidationError("candidate pool is empty")

    best = None
    for provenance, labels in pool:
        labels = canonical_labels(labels)
        loss = expected_vi_lower_bound(labels, ccm)
        key = (loss, len(np.unique(labels)), tuple(labels))
        if best is None or key < best[0]:
            best = (key, labels, provenance)
    return PartitionEstimate(labels=best[1], expected_loss=best[0][0],
                             provenance=best[2])


# ---------------------------------------------------------------------------
# Abundance classes and co-occurrence


def oc_mean_intensity(store, partition_obs):
    """Posterior mean atom location behind each estimated cluster.

    For every observation, averages mu_{M} over draws, then averages within
    the clusters of ``partition_obs``.
    """
    partition_obs = np.asarray(partition_obs)
    mmat = store.m_matrix()
    per_obs = np.zeros(mmat.shape[1])
    for t in range(store.n_draws):
        per_obs += store.atom_mu[t][mmat[t]]
    per_obs /= store.n_draws
    return {int(c): float(per_obs[partition_obs == c].mean())
            for c in np.unique(partition_obs)}


def class_map_by_intensity(intensity, n_classes):
    """Group cluster labels into ordered classes, splitting at the largest
    gaps of their intensities."""
    labels = sorted(intensity, key=lambda c: intensity[c])
    if n_classes >= len(labels):
        return {lab: i for i, lab in enumerate(labels)}
    values = np.array([intensity[lab] for lab in labels])
    gaps = np.diff(values)
    splits = np.sort(np.argsort(-gaps, kind="stable")[:n_classes - 1])
    classes = np.zeros(len(labels), dtype=int)
    for s in splits:
        classes[s + 1:] += 1
    return {lab: int(c) for lab, c in zip(labels, classes)}


def abundance_classes(partition_obs, class_map):
    """Relabel an observational partition into abundance classes."""
    partition_obs = np.asarray(partition_obs)
    missing = set(np.unique(partition_obs)) - set(class_map)
    if missing:
        raise ValidationError(f"class map misses labels {sorted(missing)}")
    return np.array([class_map[int(c)] for c in partition_obs], dtype=int)


def pcm(class_matrix, dc_labels, k):
    """Pairwise class co-occurrence among subjects of one unit cluster.

    ``class_matrix`` is (n_items, J): the abundance class of each item per
    subject.  Entry (l, g) is the fraction of cluster-k subjects assigning
    items l and g to the same class.
    """
    class_matrix = np.asarray(class_matrix)
    dc_labels = np.asarray(dc_labels)
    members = class_matrix[:, dc_labels == k]
    if members.shape[1] == 0:
        raise ValidationError(f"distributional cluster {k} is empty")
    eq = members[:, None, :] == members[None, :, :]
    return eq.mean(axis=2)


def pcm_edges(matrix, names=None, threshold=0.5):
    """Upper-triangle (item, item, weight) edges above the threshold."""
    p = matrix.shape[0]
    if names is None:
        names = [str(i) for i in range(p)]
    edges = []
    for l in range(p):
        for g in range(l + 1, p):
            if matrix[l, g] > threshold:
                edges.append((names[l], names[g], float(matrix[l, g])))
    return edges
