"""Hamiltonian flow maps for ``H(q, p) = U(q) + V(p)``.

The motion solves ``dq/dt = grad V(p)``, ``dp/dt = -grad U(q)``. ``U`` comes
from the target model and ``V`` from the auxiliary (momentum) model, both as
``DensityModel`` potentials. Backward motion is obtained by negating the step
size, never by flipping the momentum: for an asymmetric ``V`` the two are not
equivalent.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteState
from .linalg import block_flow_matrix, mat_cos, nonsym_sqrt_pair, opnorm
from .models import GaussianDensity


@dataclass(frozen=True)
class PhasePoint:
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if q.shape != p.shape:
            raise ValueError(f"q and p shapes differ: {q.shape} vs {p.shape}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)


@dataclass(frozen=True)
class LeapfrogConfig:
    """``n_steps`` leapfrog steps of size ``step_size`` in ``direction`` (+1/-1)."""

    step_size: float
    n_steps: int
    direction: int = 1

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if int(self.n_steps) != self.n_steps or self.n_steps < 0:
            raise ValueError("n_steps must be a nonnegative integer")
        if self.direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")

    @property
    def T(self):
        return self.step_size * self.n_steps

    @property
    def signed_step(self):
        return self.direction * self.step_size

    def reversed(self):
        return LeapfrogConfig(self.step_size, self.n_steps, -self.direction)


@dataclass(frozen=True)
class ExactFlow:
    """Exact motion of length ``T`` in ``direction``; needs Gaussian target and auxiliary."""

    T: float
    direction: int = 1

    def __post_init__(self):
        if self.direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")

    @property
    def signed_time(self):
        return self.direction * self.T

    def reversed(self):
        return ExactFlow(self.T, -self.direction)


@dataclass
class Trajectory:
    points: list
    energies: list


def hamiltonian(U_model, V_model, q, p):
    return U_model.potential(q) + V_model.potential(p)


def leapfrog_batch(grad_U, grad_V, q, p, signed_step, n_steps):
    """Run leapfrog on a batch of phase points.

    Rows that leave the finite range are frozen at their last finite state
    and flagged; the remaining rows keep integrating.

    Returns:
        ``(q, p, diverged)`` with ``diverged`` a boolean vector (or scalar for
        a single point).
    """
    q = np.array(q, dtype=float)
    p = np.array(p, dtype=float)
    single = q.ndim == 1
    if single:
        q, p = q[None], p[None]
    diverged = np.zeros(q.shape[0], dtype=bool)
    h = signed_step
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        gU = grad_U(q)
        for _ in range(int(n_steps)):
            p_half = p - 0.5 * h * gU
            q_new = q + h * grad_V(p_half)
            gU_new = grad_U(q_new)
            p_new = p_half - 0.5 * h * gU_new
            bad = ~(np.isfinite(q_new).all(axis=1) & np.isfinite(p_new).all(axis=1)
                    & np.isfinite(gU_new).all(axis=1))
            if bad.any():
                diverged |= bad
                keep = ~diverged
                q[keep], p[keep], gU[keep] = q_new[keep], p_new[keep], gU_new[keep]
                if not keep.any():
                    break
            else:
                q, p, gU = q_new, p_new, gU_new
    if single:
        return q[0], p[0], bool(diverged[0])
    return q, p, diverged


def leapfrog(U_model, V_model, start, cfg):
    """Integrate a single trajectory and keep every intermediate point.

    Raises:
        NonFiniteState: with the index of the first step whose state is not
            finite.
    """
    h = cfg.signed_step
    q = np.array(start.q, dtype=float)
    p = np.array(start.p, dtype=float)
    points = [PhasePoint(q.copy(), p.copy())]
    energies = [float(hamiltonian(U_model, V_model, q, p))]
    with np.errstate(over="ignore", invalid="ignore"):
        gU = U_model.grad_potential(q)
        for step in range(1, cfg.n_steps + 1):
            p = p - 0.5 * h * gU
            q = q + h * V_model.grad_potential(p)
            gU = U_model.grad_potential(q)
            p = p - 0.5 * h * gU
            energy = float(hamiltonian(U_model, V_model, q, p))
            if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p)) and np.isfinite(energy)):
                raise NonFiniteState(step)
            points.append(PhasePoint(q.copy(), p.copy()))
            energies.append(energy)
    return Trajectory(points, energies)


def _gaussian_pair(target, aux):
    if not (isinstance(target, GaussianDensity) and isinstance(aux, GaussianDensity)):
        raise TypeError("exact flow needs Gaussian target and auxiliary densities")


def exact_flow_matrix(target, aux, t):
    """``2d x 2d`` propagator of the shifted coordinates for Gaussian models."""
    _gaussian_pair(target, aux)
    return block_flow_matrix(t, aux.precision, target.precision)


def exact_quadratic_flow(target, aux, t, start):
    """Exact Hamiltonian motion of signed length ``t`` for Gaussian ``U`` and ``V``.

    Works on a single ``PhasePoint`` or one whose ``q``/``p`` are ``(K, d)``
    batches.
    """
    Phi = exact_flow_matrix(target, aux, t)
    u = np.asarray(start.q, dtype=float) - target.mean
    w = np.asarray(start.p, dtype=float) - aux.mean
    z = np.concatenate([u, w], axis=-1) @ Phi.T
    d = target.dim
    return PhasePoint(z[..., :d] + target.mean, z[..., d:] + aux.mean)


def flow_map(U_model, V_model, flow, q, p):
    """Endpoint of the motion described by ``flow`` from ``(q, p)``.

    ``flow`` is a :class:`LeapfrogConfig` or an :class:`ExactFlow`.

    Returns:
        ``(Q, P, diverged)`` as :func:`leapfrog_batch`.
    """
    if isinstance(flow, ExactFlow):
        end = exact_quadratic_flow(U_model, V_model, flow.signed_time, PhasePoint(q, p))
        Q, P = end.q, end.p
        if Q.ndim == 1:
            return Q, P, False
        return Q, P, np.zeros(Q.shape[0], dtype=bool)
    return leapfrog_batch(U_model.grad_potential, V_model.grad_potential, q, p,
                          flow.signed_step, flow.n_steps)


def fd_hessian(model, x, rel_step=1e-5):
    """Hessian of the potential by central differences of its gradient."""
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    H = np.empty((d, d))
    for i in range(d):
        h = rel_step * (1.0 + abs(x[i]))
        e = np.zeros(d)
        e[i] = h
        H[:, i] = (model.grad_potential(x + e) - model.grad_potential(x - e)) / (2 * h)
    return 0.5 * (H + H.T)


def _hessian(model, x):
    H = model.hessian_potential(x)
    return fd_hessian(model, x) if H is None else np.asarray(H, dtype=float)


def flow_jacobian(U_model, V_model, start, cfg, method="variational", rel_step=1e-5):
    """Jacobian ``d(Q, P) / d(q, p)`` of the leapfrog flow map.

    Args:
        method: ``"variational"`` propagates the tangent map along the
            leapfrog path with the same discretisation (blocks
            ``[[0, V''], [-U'', 0]]``); ``"finite_difference"`` differentiates
            the whole flow map by central differences with step
            ``rel_step * (1 + |z_i|)``.
    """
    q = np.asarray(start.q, dtype=float)
    p = np.asarray(start.p, dtype=float)
    d = q.shape[0]
    if method == "finite_difference":
        z0 = np.concatenate([q, p])
        steps = rel_step * (1.0 + np.abs(z0))
        Zp = z0 + np.diag(steps)
        Zm = z0 - np.diag(steps)
        Z = np.vstack([Zp, Zm])
        Q, P, div = leapfrog_batch(U_model.grad_potential, V_model.grad_potential,
                                   Z[:, :d], Z[:, d:], cfg.signed_step, cfg.n_steps)
        if np.any(div):
            raise NonFiniteState(-1, "flow diverged while differencing")
        ends = np.hstack([Q, P])
        return ((ends[: 2 * d] - ends[2 * d:]) / (2 * steps[:, None])).T
    if method != "variational":
        raise ValueError(f"unknown method {method!r}")
    h = cfg.signed_step
    J = np.eye(2 * d)
    eye = np.eye(d)
    zero = np.zeros((d, d))
    gU = U_model.grad_potential(q)
    HU = _hessian(U_model, q)
    for step in range(1, cfg.n_steps + 1):
        p = p - 0.5 * h * gU
        kick = np.block([[eye, zero], [-0.5 * h * HU, eye]])
        HV = _hessian(V_model, p)
        q = q + h * V_model.grad_potential(p)
        drift = np.block([[eye, h * HV], [zero, eye]])
        gU = U_model.grad_potential(q)
        HU = _hessian(U_model, q)
        p = p - 0.5 * h * gU
        kick2 = np.block([[eye, zero], [-0.5 * h * HU, eye]])
        J = kick2 @ drift @ kick @ J
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p)) and np.all(np.isfinite(J))):
            raise NonFiniteState(step)
    return J


def dQdq_norm(target, aux, T):
    """Operator norm of ``dQ/dq = cos(T A)`` for the exact Gaussian flow.

    Returns:
        ``(beta, below_threshold)`` where ``below_threshold`` is
        ``0 <= T < pi / |A|``.
    """
    _gaussian_pair(target, aux)
    ops = nonsym_sqrt_pair(aux.precision, target.precision)
    beta = opnorm(mat_cos(T * ops.A))
    return beta, bool(0 <= T < ops.T_threshold)
