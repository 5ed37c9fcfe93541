"""Convergence diagnostics for particle ensembles.

Entropic optimal transport between point clouds (log-domain Sinkhorn), an
exact assignment-based Wasserstein distance for small clouds, a k-NN based
KL proxy for the logistic-regression posterior, and coupling estimates of
the coarse Ricci curvature of a Hamiltonian kernel.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist
from scipy.special import digamma, gammaln

from .errors import ConvergenceWarning, DegenerateEnsemble, DimensionMismatch, TooLarge
from .integrator import dQdq_norm, flow_map
from .linalg import nonsym_sqrt_pair

EXACT_MAX_POINTS = 16
STAGE_ITERS = 10
ABSORB_LOG = 30.0
KNN_K = 3


@dataclass(frozen=True)
class OtConfig:
    """Entropic OT settings.

    Attributes:
        p: cost exponent, 1 or 2.
        blur: entropic length scale; the regulariser is ``blur**p``. ``None``
            means 1% of the joint cloud diameter.
        max_iters: iteration cap over all annealing stages.
        tol: L1 marginal violation at which the final stage stops.
    """

    p: int = 2
    blur: float = None
    max_iters: int = 20000
    tol: float = 1e-3

    def __post_init__(self):
        if self.p not in (1, 2):
            raise ValueError("p must be 1 or 2")
        if self.blur is not None and not self.blur > 0:
            raise ValueError("blur must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


def _clouds(a, b):
    A = np.atleast_2d(np.asarray(a, dtype=float))
    B = np.atleast_2d(np.asarray(b, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"cloud dimensions differ: {A.shape[1]} vs {B.shape[1]}")
    if A.shape[0] < 1 or B.shape[0] < 1:
        raise ValueError("clouds must be non-empty")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise ValueError("cloud coordinates must be finite")
    return A, B


def diameter(*clouds):
    """Largest pairwise distance over the union, bounded via the bounding box."""
    X = np.vstack(clouds)
    return float(np.linalg.norm(X.max(axis=0) - X.min(axis=0)))


def cost_matrix(A, B, p):
    D = cdist(A, B)
    return D if p == 1 else D**2


@dataclass
class SinkhornResult:
    distance: float
    cost: float
    iterations: int
    marginal_error: float
    converged: bool


def sinkhorn(a, b, cfg=None):
    """Log-domain Sinkhorn between uniform empirical measures on ``a`` and ``b``.

    The regulariser is annealed geometrically from the cloud diameter down to
    ``blur**p`` (halving the scale each stage) to keep early iterations well
    conditioned; only the last stage runs to tolerance.

    The two clouds are put in a canonical order first, so swapping the
    arguments gives a bitwise-identical result.

    Returns:
        A :class:`SinkhornResult`; ``distance`` is ``<P, C>^(1/p)`` without
        debiasing.
    """
    cfg = cfg or OtConfig()
    A, B = _clouds(a, b)
    if (B.shape[0], B.tobytes()) < (A.shape[0], A.tobytes()):
        A, B = B, A
    n, m = A.shape[0], B.shape[0]
    C = cost_matrix(A, B, cfg.p)
    diam = diameter(A, B)
    blur = cfg.blur if cfg.blur is not None else 0.01 * diam
    if diam == 0.0 or (n == 1 and m == 1):
        cost = float(C.sum()) if n == 1 and m == 1 else 0.0
        return SinkhornResult(cost ** (1.0 / cfg.p), cost, 0, 0.0, True)
    log_a = np.full(n, -math.log(n))
    log_b = np.full(m, -math.log(m))
    a_w, b_w = np.exp(log_a), np.exp(log_b)
    eps_final = blur**cfg.p
    eps = max(diam**cfg.p, eps_final)
    g = np.zeros(m)
    it = 0
    err = np.inf

    def kernel(f, g, eps):
        return np.exp((f[:, None] + g[None, :] - C) / eps + log_a[:, None] + log_b[None, :])

    while True:
        last = eps <= eps_final
        stage_iters = 0
        # exact log-domain half steps re-centre the duals for the new scale
        f = _soft_min(C, g, log_b, eps, axis=1)
        g = _soft_min(C, f, log_a, eps, axis=0)
        K = kernel(f, g, eps)
        u = np.ones(n)
        v = np.ones(m)
        Kv = K @ v
        while it < cfg.max_iters:
            u = a_w / Kv
            v = b_w / (K.T @ u)
            it += 1
            stage_iters += 1
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
                # a scaling under- or overflowed: restart the stage from log-domain updates
                u = np.ones(n)
                v = np.ones(m)
                f = _soft_min(C, g, log_b, eps, axis=1)
                g = _soft_min(C, f, log_a, eps, axis=0)
                K = kernel(f, g, eps)
            elif max(np.abs(np.log(u)).max(), np.abs(np.log(v)).max()) > ABSORB_LOG:
                f = f + eps * np.log(u)
                g = g + eps * np.log(v)
                u = np.ones(n)
                v = np.ones(m)
                K = kernel(f, g, eps)
            Kv = K @ v
            # columns are exact after the v-update; the rows carry the violation
            err = float(np.abs(u * Kv - a_w).sum())
            if last and err <= cfg.tol:
                break
            if not last and stage_iters >= STAGE_ITERS:
                break
        f = f + eps * np.log(u)
        g = g + eps * np.log(v)
        if last or it >= cfg.max_iters:
            break
        eps = max(eps / 2 ** cfg.p, eps_final)
    P = kernel(f, g, eps)
    cost = float(max((P * C).sum(), 0.0))
    converged = err <= cfg.tol and eps <= eps_final
    if not converged:
        warnings.warn(f"Sinkhorn stopped after {it} iterations with marginal error {err:.3g}",
                      ConvergenceWarning, stacklevel=2)
    return SinkhornResult(cost ** (1.0 / cfg.p), cost, it, err, converged)


def sinkhorn_distance(a, b, cfg=None):
    """Entropic ``W_p`` between two point clouds (see :func:`sinkhorn`)."""
    return sinkhorn(a, b, cfg).distance


def _soft_min(C, h, log_w, eps, axis):
    """``-eps log sum_j w_j exp((h_j - C_ij) / eps)`` along ``axis``."""
    if axis == 1:
        Z = (h[None, :] - C) / eps + log_w[None, :]
    else:
        Z = (h[:, None] - C) / eps + log_w[:, None]
    top = Z.max(axis=axis)
    shift = top[:, None] if axis == 1 else top[None, :]
    return -eps * (top + np.log(np.exp(Z - shift).sum(axis=axis)))


def exact_wasserstein_small(a, b, p=2):
    """Exact ``W_p`` between two equal-size uniform clouds of at most 16 points.

    For uniform weights and equal sizes an optimal plan is a permutation, so
    the problem is a linear assignment.

    Raises:
        TooLarge: if there are more than 16 points.
    """
    A, B = _clouds(a, b)
    if A.shape[0] != B.shape[0]:
        raise ValueError("clouds must have the same number of points")
    if A.shape[0] > EXACT_MAX_POINTS:
        raise TooLarge(f"{A.shape[0]} points exceeds the limit of {EXACT_MAX_POINTS}")
    C = cost_matrix(A, B, p)
    rows, cols = linear_sum_assignment(C)
    return float(C[rows, cols].mean()) ** (1.0 / p)


def knn_entropy(points, k=KNN_K):
    """Kozachenko-Leonenko differential entropy estimate (nats).

    Duplicate points are separated by a deterministic jitter of
    ``1e-12 * diameter`` first.

    Raises:
        DegenerateEnsemble: if fewer than ``k + 1`` points or the cloud has zero
            extent.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = X.shape
    if n <= k:
        raise DegenerateEnsemble(f"need more than k={k} points, got {n}")
    diam = diameter(X)
    if diam == 0.0:
        raise DegenerateEnsemble("all particles coincide")
    tree = cKDTree(X)
    dist, _ = tree.query(X, k=k + 1)
    r = dist[:, k]
    if np.any(r == 0.0):
        nudge = np.random.default_rng(0).standard_normal(X.shape)
        X = X + 1e-12 * diam * nudge
        dist, _ = cKDTree(X).query(X, k=k + 1)
        r = dist[:, k]
        if np.any(r == 0.0):
            raise DegenerateEnsemble("particles are not pairwise distinct")
    log_vol = 0.5 * d * math.log(math.pi) - gammaln(0.5 * d + 1)
    return float(digamma(n) - digamma(k) + log_vol + d * np.mean(np.log(r)))


def kl_proxy_blr(ens, posterior, k=KNN_K):
    """KL proxy between the ensemble and the BLR posterior.

    ``-H(h) - mean log prior - mean log likelihood``: the KL divergence up to
    the unknown log normalising constant, with ``H`` the k-NN entropy.
    """
    X = getattr(ens, "particles", ens)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != posterior.dim:
        raise DimensionMismatch(f"ensemble has dimension {X.shape[1]}, posterior {posterior.dim}")
    H = knn_entropy(X, k)
    return float(-H - np.mean(posterior.prior.log_density(X)) - np.mean(posterior.log_likelihood(X)))


@dataclass(frozen=True)
class RicciEstimate:
    kappa_hat: float
    w1_upper: float
    pair_distance: float
    n_momenta: int


def ricci_estimate(target, aux, flow, q1, q2, n_momenta, rng):
    """Coarse Ricci curvature along ``(q1, q2)`` by a common-momentum coupling.

    Both chains take the same momentum draws; the mean endpoint distance of
    the coupled motions bounds ``W_1`` between the one-step laws from above.
    The Metropolis step is not applied.
    """
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    dist = float(np.linalg.norm(q1 - q2))
    if dist == 0.0:
        raise ValueError("q1 and q2 must differ")
    if n_momenta < 1:
        raise ValueError("n_momenta must be at least 1")
    p = aux.sample(rng, n_momenta)
    Q1, _, _ = flow_map(target, aux, flow, np.broadcast_to(q1, p.shape), p)
    Q2, _, _ = flow_map(target, aux, flow, np.broadcast_to(q2, p.shape), p)
    w1 = float(np.mean(np.linalg.norm(Q1 - Q2, axis=-1)))
    return RicciEstimate(1.0 - w1 / dist, w1, dist, int(n_momenta))


@dataclass(frozen=True)
class ContractionReport:
    """Contraction factor of the exact flow for a Gaussian pair.

    ``beta_prime`` holds ``(1 + beta) / 2``; the full rate also involves an
    unknown minorisation constant, flagged by ``epsilon_unknown``.
    """

    beta: float
    beta_prime: float
    T_threshold: float
    below_threshold: bool
    epsilon_unknown: bool = True


def contraction_bound(target, aux, T):
    """``beta = ||cos(T A)||`` and the threshold ``pi / ||A||``."""
    beta, below = dQdq_norm(target, aux, T)
    ops = nonsym_sqrt_pair(aux.precision, target.precision)
    return ContractionReport(float(beta), 0.5 * (1.0 + float(beta)), ops.T_threshold, below)


__all__ = [
    "OtConfig", "SinkhornResult", "sinkhorn", "sinkhorn_distance", "exact_wasserstein_small",
    "knn_entropy", "kl_proxy_blr", "RicciEstimate", "ricci_estimate", "ContractionReport",
    "contraction_bound", "diameter",
]
