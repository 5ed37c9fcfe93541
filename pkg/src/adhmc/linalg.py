"""Small dense matrix kernels for the linearised Hamiltonian flow.

Everything here works on plain ``numpy`` arrays of shape ``(d, d)`` with
``d`` small (the experiments never exceed ``d = 10``). The matrix functions
are evaluated by truncated power series and the square roots by a fixed-point
iteration rather than by eigendecomposition, so that the eigendecomposition
route stays available as an independent check in the tests.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceGuard, NoConvergence, NotPositiveDefinite, SingularMatrix

SERIES_RTOL = 1e-15
SERIES_MAX_TERMS = 200
SERIES_OVERFLOW = 1e300
# beyond this norm a double cannot resolve the phase of cos / sin at all
PHASE_LIMIT = 1e15
POWER_ITERATIONS = 100
POWER_RTOL = 1e-10
SQRT_MAX_ITER = 200_000


@dataclass(frozen=True)
class CurvatureOperators:
    """Square roots of the products of averaged curvature matrices.

    Attributes:
        A: ``sqrt(Vbar @ Ubar)``.
        B: ``sqrt(Ubar @ Vbar)``.
        opnorm_A: operator norm of ``A``.
        T_threshold: ``pi / opnorm_A``; exact motion shorter than this keeps
            ``|cos(T A)| < 1``.
    """

    A: np.ndarray
    B: np.ndarray
    opnorm_A: float
    T_threshold: float


def as_square(M, name="M"):
    M = np.asarray(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def check_symmetric(M, name="M", rtol=1e-12):
    M = as_square(M, name)
    scale = max(np.abs(M).max(), 1.0)
    if np.abs(M - M.T).max() > rtol * scale:
        raise ValueError(f"{name} is not symmetric")
    return M


def opnorm(M, n_iter=POWER_ITERATIONS, rtol=POWER_RTOL):
    """Operator 2-norm by power iteration on ``M^T M``."""
    M = as_square(M)
    G = M.T @ M
    d = M.shape[0]
    # fixed, non-degenerate start vector keeps the result deterministic
    v = 1.0 + np.arange(d, dtype=float) / (d + 1.0)
    v /= np.linalg.norm(v)
    if not np.any(G):
        return 0.0
    lam = 0.0
    for _ in range(n_iter):
        w = G @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            # start vector in the null space of G; restart on the largest column
            v = G[:, np.argmax(np.abs(G).sum(axis=0))].copy()
            v /= np.linalg.norm(v)
            continue
        lam_new = float(v @ w)
        v = w / nw
        converged = abs(lam_new - lam) <= rtol * abs(lam_new)
        lam = lam_new
        if converged:
            break
    return float(np.sqrt(max(lam, 0.0)))


def sym_sqrt(M, tol=1e-12, max_iter=SQRT_MAX_ITER):
    """Symmetric positive square root of an SPD matrix.

    ``M`` is first scaled by ``opnorm(M) + 1`` so that ``0 < V < I``; then
    ``sqrt(V) = I - R`` with ``R`` the limit of ``R <- (I - (V - R^2)) / 2``
    started from zero.

    Args:
        M: symmetric positive definite matrix.
        tol: relative Frobenius residual ``|R R - M| / |M|`` to reach.
        max_iter: iteration cap before :class:`NoConvergence` is raised.

    Returns:
        The symmetric square root as a new array.
    """
    M = check_symmetric(M)
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("matrix failed the Cholesky probe") from None
    d = M.shape[0]
    scale = opnorm(M) + 1.0
    V = M / scale
    eye = np.eye(d)
    R = np.zeros_like(V)
    target = tol * np.linalg.norm(V)
    for _ in range(max_iter):
        R_next = 0.5 * (eye - V + R @ R)
        # R_next - R is half the residual (I - R)^2 - V
        resid = 2.0 * np.linalg.norm(R_next - R)
        R = R_next
        if resid <= target:
            break
    else:
        raise NoConvergence(f"sym_sqrt did not converge in {max_iter} iterations")
    root = eye - R
    root = np.sqrt(scale) * 0.5 * (root + root.T)
    resid = np.linalg.norm(root @ root - M) / np.linalg.norm(M)
    if resid > 10 * max(tol, 1e-15):
        raise NoConvergence(f"sym_sqrt residual {resid:.3g} above tolerance")
    return root


def nonsym_sqrt_pair(Vbar, Ubar, tol=1e-12, cond_max=1e12):
    """Principal square roots ``A = sqrt(V U)`` and ``B = sqrt(U V)``.

    ``V U`` is similar to the SPD matrix ``sqrt(U) V sqrt(U)`` through
    ``sqrt(U)``, so ``A = sqrt(U)^-1 sqrt(sqrt(U) V sqrt(U)) sqrt(U)``, and
    symmetrically for ``B``.
    """
    Vbar = check_symmetric(Vbar, "Vbar")
    Ubar = check_symmetric(Ubar, "Ubar")
    if Vbar.shape != Ubar.shape:
        raise ValueError("Vbar and Ubar must have the same shape")

    def conj_root(S, X):
        rS = sym_sqrt(S, tol)
        if np.linalg.cond(rS) > cond_max:
            raise SingularMatrix("square root is not invertible to working tolerance")
        inner = rS @ X @ rS
        inner = 0.5 * (inner + inner.T)
        return np.linalg.solve(rS, sym_sqrt(inner, tol) @ rS)

    A = conj_root(Ubar, Vbar)
    B = conj_root(Vbar, Ubar)
    nA = opnorm(A)
    return CurvatureOperators(A=A, B=B, opnorm_A=nA, T_threshold=np.pi / nA)


def _even_series(M, denom):
    """Sum ``sum_n (-1)^n M^(2n) / denom(n)`` with term-norm truncation.

    ``denom(n)`` gives the ratio between consecutive coefficients.
    """
    M = as_square(M)
    d = M.shape[0]
    M2 = M @ M
    term = np.eye(d)
    total = term.copy()
    for n in range(SERIES_MAX_TERMS):
        term = -(term @ M2) / denom(n)
        tn = np.linalg.norm(term)
        if not np.isfinite(tn) or tn > SERIES_OVERFLOW:
            raise DivergenceGuard("power series terms overflowed")
        total += term
        if tn <= SERIES_RTOL * np.linalg.norm(total):
            break
    return total


def _cos_sinc(M):
    """``cos(M)`` and ``sinc(M)`` together, with argument halving.

    Large arguments make the alternating series cancel catastrophically, so
    the series runs on ``M / 2^s`` with norm at most one and the results are
    doubled back through ``cos(2X) = 2 cos(X)^2 - I`` and
    ``sinc(2X) = sinc(X) cos(X)``.
    """
    M = as_square(M)
    norm = np.linalg.norm(M)
    if not np.isfinite(norm) or norm > PHASE_LIMIT:
        raise DivergenceGuard(f"matrix argument norm {norm:.3g} too large for the power series")
    s = max(0, int(np.ceil(np.log2(norm)))) if norm > 1.0 else 0
    X = M / 2.0**s
    C = _even_series(X, lambda n: (2 * n + 1) * (2 * n + 2))
    S = _even_series(X, lambda n: (2 * n + 2) * (2 * n + 3))
    eye = np.eye(M.shape[0])
    for _ in range(s):
        S = S @ C
        C = 2.0 * C @ C - eye
    return C, S


def mat_cos(M):
    """Matrix cosine by its power series."""
    return _cos_sinc(M)[0]


def mat_sinc(M):
    """Matrix ``sin(M) M^-1`` by its power series; defined for singular ``M``."""
    return _cos_sinc(M)[1]


def block_flow_matrix(t, Vbar, Ubar):
    """Propagator of the linear system ``u' = Vbar w``, ``w' = -Ubar u``.

    Returns the ``2d x 2d`` matrix
    ``[[cos(tA), t Vbar sinc(tB)], [-t Ubar sinc(tA), cos(tB)]]`` which equals
    ``expm([[0, t Vbar], [-t Ubar, 0]])``.
    """
    ops = nonsym_sqrt_pair(Vbar, Ubar)
    Vbar = np.asarray(Vbar, dtype=float).reshape(ops.A.shape)
    Ubar = np.asarray(Ubar, dtype=float).reshape(ops.A.shape)
    tA = t * ops.A
    tB = t * ops.B
    top = np.hstack([mat_cos(tA), t * Vbar @ mat_sinc(tB)])
    bottom = np.hstack([-t * Ubar @ mat_sinc(tA), mat_cos(tB)])
    return np.vstack([top, bottom])
