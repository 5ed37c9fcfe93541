"""Independent reference computations used by the tests.

Nothing here imports the package: each oracle reaches its answer by a
different route (eigendecompositions, Taylor scaling-and-squaring, brute-force
enumeration, dense quadrature) than the code under test.
"""

import itertools
import math

import numpy as np


def random_spd(rng, d, cond=10.0):
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    ev = np.exp(rng.uniform(0.0, np.log(cond), d))
    return (Q * ev) @ Q.T


def eig_fn(M, fn):
    """``fn`` of a symmetric matrix through its eigendecomposition."""
    w, Q = np.linalg.eigh(0.5 * (M + M.T))
    return (Q * fn(w)) @ Q.T


def eig_sqrt(M):
    return eig_fn(M, np.sqrt)


def expm_taylor(M, terms=30):
    """Matrix exponential by scaling and squaring a truncated Taylor series."""
    M = np.asarray(M, dtype=float)
    norm = np.abs(M).sum(axis=1).max()
    s = max(0, int(math.ceil(math.log2(norm))) + 1) if norm > 0 else 0
    X = M / 2**s
    E = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, terms):
        term = term @ X / k
        E = E + term
    for _ in range(s):
        E = E @ E
    return E


def leapfrog_ref(grad_U, grad_V, q, p, h, n):
    """Plain scalar-loop leapfrog for one phase point."""
    q = np.array(q, dtype=float)
    p = np.array(p, dtype=float)
    for _ in range(n):
        p = p - 0.5 * h * grad_U(q)
        q = q + h * grad_V(p)
        p = p - 0.5 * h * grad_U(q)
    return q, p


def fd_grad(fn, x, rel=1e-5):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        h = rel * (1.0 + abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fn(x + e) - fn(x - e)) / (2 * h)
    return g


def brute_force_wasserstein(A, B, p=2):
    """Minimum over all permutations of the mean ``|a_i - b_sigma(i)|^p``."""
    n = len(A)
    D = np.linalg.norm(A[:, None, :] - B[None, :, :], axis=-1) ** p
    best = min(D[np.arange(n), list(perm)].mean() for perm in itertools.permutations(range(n)))
    return best ** (1.0 / p)


def normal_pdf(x, mu, sd):
    return np.exp(-0.5 * ((x - mu) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))
