"""Cluster the ensemble and rebuild the auxiliary from the clusters.

Clustering uses OPTICS reachability with xi-steepness extraction (the
ordering and the xi cluster hierarchy come from scikit-learn). The raw leaf
labels split single Gaussian blobs into many fragments, so clusters are
chosen top-down instead: starting from the whole ordering, an interval is
replaced by its maximal sub-clusters when at least two of them hold
``DEFAULT_MIN_FRACTION`` of the points and the reachability barrier between
them is ``DEFAULT_SEPARATION`` times the typical reachability inside.
Points outside the chosen intervals are noise. When the hierarchy is empty
the whole ordering is a cluster only if the reachability plot is flat (e.g.
all points coincide). Rows are
sorted before clustering and clusters numbered by their first member, so
the partition does not depend on the input row order.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.cluster import OPTICS

from .errors import NoClusters, TooFewPoints
from .models import GaussianDensity, GaussianMixtureDensity, regularize_covariance
from .sampler import run_chain

DEFAULT_MIN_PTS = 5
DEFAULT_XI = 0.05
DEFAULT_MIN_FRACTION = 0.05
DEFAULT_SEPARATION = 3.0


@dataclass
class ClusterLabeling:
    """Labels in ``{-1, 0, ..., C-1}`` with per-cluster moments.

    ``covs`` are the unbiased sample covariances after the ``lam I`` jitter.
    """

    labels: np.ndarray
    counts: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    @property
    def n_clusters(self):
        return len(self.counts)

    @property
    def n_clustered(self):
        return int(self.counts.sum())


def _maximal(intervals):
    intervals = sorted(intervals, key=lambda c: (c[0], -c[1]))
    chosen = []
    for start, end in intervals:
        if chosen and start <= chosen[-1][1]:
            continue  # nested in the previous maximal interval
        chosen.append((start, end))
    return chosen


def _split(interval, hierarchy, reachability, min_size, separation):
    """Recursively split ``interval`` into its well-separated large sub-clusters.

    A split is kept when at least two maximal sub-clusters hold ``min_size``
    points each and the highest reachability between consecutive ones is at
    least ``separation`` times the median reachability inside them.
    """
    start, end = interval
    kids = _maximal([c for c in hierarchy
                     if start <= c[0] and c[1] <= end and c != (start, end)])
    big = [c for c in kids if c[1] - c[0] + 1 >= min_size]
    if len(big) < 2:
        return [interval]
    inside = np.median(np.concatenate([reachability[a + 1:b + 1] for a, b in big]))
    barrier = min(np.max(reachability[big[i][1] + 1:big[i + 1][0] + 1])
                  for i in range(len(big) - 1))
    if not barrier >= separation * inside:
        return [interval]
    return [leaf for c in big
            for leaf in _split(c, hierarchy, reachability, min_size, separation)]


def _select_clusters(hierarchy, reachability, K, xi, min_fraction=DEFAULT_MIN_FRACTION,
                     separation=DEFAULT_SEPARATION):
    """Clusters from the xi hierarchy, split top-down from the whole ordering."""
    hierarchy = [tuple(int(v) for v in c) for c in hierarchy]
    root = (0, K - 1)
    if not any(c != root for c in hierarchy):
        finite = reachability[np.isfinite(reachability)]
        flat = finite.size == 0 or finite.max() * (1 - xi) <= finite.min()
        return [root] if flat and hierarchy else []
    return _split(root, hierarchy + [root], reachability, min_fraction * K, separation)


def optics_cluster(points, min_pts=DEFAULT_MIN_PTS, xi=DEFAULT_XI):
    """Density-based clustering of ``points`` (``K x d``).

    Raises:
        TooFewPoints: if ``K < min_pts``.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    K, d = X.shape
    if K < min_pts:
        raise TooFewPoints(f"{K} points but min_pts={min_pts}")
    perm = np.lexsort(X.T[::-1])
    Xs = X[perm]
    model = OPTICS(min_samples=min_pts, xi=xi, max_eps=np.inf, metric="euclidean").fit(Xs)
    order = model.ordering_
    reach = model.reachability_[order]
    intervals = _select_clusters(model.cluster_hierarchy_, reach, K, xi)

    labels_sorted = np.full(K, -1, dtype=int)
    for idx, (start, end) in enumerate(intervals):
        labels_sorted[order[start:end + 1]] = idx
    # renumber clusters by their first member in sorted-row order
    firsts = sorted(range(len(intervals)), key=lambda c: np.argmax(labels_sorted == c))
    relabel = np.full(len(intervals) + 1, -1)
    relabel[firsts] = np.arange(len(intervals))
    labels_sorted = relabel[labels_sorted]

    labels = np.empty(K, dtype=int)
    labels[perm] = labels_sorted
    return labeling_from_labels(X, labels)


def labeling_from_labels(X, labels):
    """Per-cluster counts, means and jittered covariances for given labels."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    labels = np.asarray(labels, dtype=int)
    d = X.shape[1]
    ids = sorted(set(labels.tolist()) - {-1})
    counts, means, covs = [], [], []
    for c in ids:
        members = X[labels == c]
        counts.append(len(members))
        mu = members.mean(axis=0)
        cov = np.cov(members, rowvar=False, ddof=1).reshape(d, d) if len(members) > 1 else np.zeros((d, d))
        means.append(mu)
        covs.append(regularize_covariance(cov))
    return ClusterLabeling(
        labels=labels,
        counts=np.array(counts, dtype=int),
        means=np.array(means).reshape(len(ids), d),
        covs=np.array(covs).reshape(len(ids), d, d),
    )


def skewness(cov):
    """Condition number of a covariance matrix."""
    ev = np.linalg.eigvalsh(cov)
    return ev[-1] / ev[0]


def adapt_single(labeling):
    """Gaussian of the most skewed cluster (largest covariance condition number).

    Ties go to the larger cluster, then to the lower label.
    """
    if labeling.n_clusters == 0:
        raise NoClusters("no clusters to adapt from")
    scores = [skewness(c) for c in labeling.covs]
    best = min(range(labeling.n_clusters),
               key=lambda c: (-scores[c], -labeling.counts[c], c))
    return GaussianDensity(labeling.means[best], labeling.covs[best])


def adapt_many(labeling):
    """Mixture of all cluster Gaussians weighted by ``s_c / S`` (noise excluded)."""
    if labeling.n_clusters == 0:
        raise NoClusters("no clusters to adapt from")
    comps = [GaussianDensity(m, c) for m, c in zip(labeling.means, labeling.covs)]
    return GaussianMixtureDensity(comps, labeling.counts / labeling.counts.sum())


ADAPTERS = {"adapt_single": adapt_single, "adapt_many": adapt_many}


def make_aux_update(scheme, n_a, min_pts=DEFAULT_MIN_PTS, xi=DEFAULT_XI):
    """Hook for :func:`run_chain` re-fitting the auxiliary every ``n_a`` iterations.

    When clustering finds nothing the current auxiliary is kept.
    """
    if n_a < 1:
        raise ValueError("n_a must be at least 1")
    build = ADAPTERS[scheme]

    def update(iteration, ens, aux):
        if iteration % n_a:
            return aux
        try:
            return build(optics_cluster(ens.particles, min_pts, xi))
        except (NoClusters, TooFewPoints):
            return aux

    return update


def adaptive_run(target, cfg, initial, n_iterations, seed, scheme="adapt_many", n_a=150,
                 replication=0, initial_aux=None, **chain_kwargs):
    """:func:`run_chain` with the auxiliary rebuilt from clusters every ``n_a`` iterations.

    The auxiliary starts as ``N(0, I)`` unless ``initial_aux`` is given.
    """
    aux = initial_aux or GaussianDensity.isotropic(target.dim)
    return run_chain(target, aux, cfg, initial, n_iterations, seed, replication,
                     aux_update=make_aux_update(scheme, n_a), **chain_kwargs)
