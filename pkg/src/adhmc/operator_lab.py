"""One-dimensional grid realisation of the Hamiltonian transfer operator.

For a density ``h`` on positions, one lift-move-project cycle maps it to

    (T h)(q) = int h(Q(q, p)) g(P(q, p)) dp,

where ``(Q, P)`` is the motion of length ``+T`` from ``(q, p)`` and ``g`` the
momentum density. The adjoint in the ``1/f``-weighted inner product uses the
motion of length ``-T``. The alternating operator is ``T_a = T_adj @ T``.

Everything is discretised on uniform grids with trapezoid weights; ``h`` is
evaluated off-grid by linear interpolation with zero extension, so each
operator is a dense ``n_q x n_q`` matrix assembled once.
"""

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import GridTooCoarse
from .integrator import ExactFlow, LeapfrogConfig, flow_map

INTEGRAL_WARN_RTOL = 0.01
DENSITY_FLOOR = 1e-300


def uniform_grid(a, b, n):
    if not b > a or n < 2:
        raise ValueError("need b > a and at least two nodes")
    return np.linspace(a, b, int(n))


def trapezoid_weights(nodes):
    nodes = np.asarray(nodes, dtype=float)
    dx = np.diff(nodes)
    w = np.zeros_like(nodes)
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    return w


@dataclass
class GridDensity:
    """Nonnegative function values on a sorted grid."""

    nodes: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.nodes.shape != self.values.shape or self.nodes.ndim != 1:
            raise ValueError("nodes and values must be 1D arrays of the same length")
        if np.any(np.diff(self.nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values must be finite")

    @classmethod
    def from_function(cls, nodes, fn):
        nodes = np.asarray(nodes, dtype=float)
        return cls(nodes, np.asarray(fn(nodes), dtype=float))

    @property
    def quad_weights(self):
        return trapezoid_weights(self.nodes)

    @property
    def integral(self):
        return float(self.quad_weights @ self.values)

    def __call__(self, x):
        return np.interp(x, self.nodes, self.values, left=0.0, right=0.0)

    def scaled(self, c):
        return GridDensity(self.nodes, c * self.values)


def density_on_grid(model, nodes):
    """Normalised-model density values at 1D nodes."""
    nodes = np.asarray(nodes, dtype=float)
    return GridDensity(nodes, np.exp(model.log_density(nodes[:, None])))


@dataclass
class L2Report:
    """Quadrature quantities in the ``1/f``-weighted space.

    ``inner`` maps reference names to ``<h, r>_f``.
    """

    norm_sq: float
    integral: float
    inner: dict

    @property
    def norm(self):
        return float(np.sqrt(self.norm_sq))


def _target_values(target, nodes):
    return np.maximum(np.exp(target.log_density(nodes[:, None])), DENSITY_FLOOR)


def inner_product(a, b, target):
    """``sum_i w_i a_i b_i / f_i`` on the nodes of ``a``."""
    f = _target_values(target, a.nodes)
    return float(a.quad_weights @ (a.values * b.values / f))


def l2_report(h, target, references=None):
    """Weighted squared norm ``int h^2 / f``, integral and inner products."""
    f = _target_values(target, h.nodes)
    w = h.quad_weights
    inner = {name: float(w @ (h.values * r.values / f)) for name, r in (references or {}).items()}
    return L2Report(float(w @ (h.values**2 / f)), float(w @ h.values), inner)


def _interp_matrix(points, nodes):
    """Rows of linear-interpolation weights (zero outside the grid)."""
    n = nodes.shape[0]
    x = points.reshape(-1)
    M = np.zeros((x.shape[0], n))
    inside = (x >= nodes[0]) & (x <= nodes[-1])
    xi = x[inside]
    k = np.clip(np.searchsorted(nodes, xi, side="right") - 1, 0, n - 2)
    t = (xi - nodes[k]) / (nodes[k + 1] - nodes[k])
    rows = np.flatnonzero(inside)
    M[rows, k] = 1.0 - t
    M[rows, k + 1] += t
    return M


class TransferOperator:
    """Discretised forward and adjoint transfer operators for a 1D problem.

    Args:
        target: 1D position model (potential ``U``).
        aux: 1D momentum model (potential ``V``), the density ``g``.
        flow: forward motion, a ``LeapfrogConfig`` or ``ExactFlow`` with
            direction +1.
        q_nodes: position grid.
        p_nodes: momentum quadrature grid.
    """

    def __init__(self, target, aux, flow, q_nodes, p_nodes):
        if target.dim != 1 or aux.dim != 1:
            raise ValueError("the operator lab works in one dimension")
        if not isinstance(flow, (LeapfrogConfig, ExactFlow)) or flow.direction != 1:
            raise ValueError("flow must be a forward LeapfrogConfig or ExactFlow")
        self.target = target
        self.aux = aux
        self.flow = flow
        self.q_nodes = np.asarray(q_nodes, dtype=float)
        self.p_nodes = np.asarray(p_nodes, dtype=float)
        self.forward = self._assemble(flow)
        self.backward = self._assemble(flow.reversed())
        self.f = density_on_grid(target, self.q_nodes)
        self._check_grid()

    def _assemble(self, flow):
        nq, npts = self.q_nodes.size, self.p_nodes.size
        qq = np.repeat(self.q_nodes, npts)[:, None]
        pp = np.tile(self.p_nodes, nq)[:, None]
        Q, P, _ = flow_map(self.target, self.aux, flow, qq, pp)
        gw = np.exp(self.aux.log_density(P)) * np.tile(trapezoid_weights(self.p_nodes), nq)
        gw = np.where(np.isfinite(gw), gw, 0.0)
        M = _interp_matrix(Q[:, 0], self.q_nodes) * gw[:, None]
        return M.reshape(nq, npts, nq).sum(axis=1)

    def _check_grid(self):
        w = self.f.quad_weights
        base = w @ self.f.values
        for M in (self.forward, self.backward):
            drift = abs(w @ (M @ self.f.values) - base) / base
            if drift > INTEGRAL_WARN_RTOL:
                warnings.warn(f"transfer operator changes the integral of f by {drift:.2%}",
                              GridTooCoarse, stacklevel=3)

    def _grid(self, h):
        if isinstance(h, GridDensity):
            if h.nodes.shape == self.q_nodes.shape and np.array_equal(h.nodes, self.q_nodes):
                return h.values
            return h(self.q_nodes)
        return np.asarray(h, dtype=float)

    def apply_T(self, h):
        return GridDensity(self.q_nodes, self.forward @ self._grid(h))

    def apply_T_adjoint(self, h):
        return GridDensity(self.q_nodes, self.backward @ self._grid(h))

    def apply_Ta(self, h):
        return self.apply_T_adjoint(self.apply_T(h))

    def iterate_Ta(self, h0, n):
        """Apply ``T_a`` ``n`` times and track the distance to ``alpha f``.

        ``alpha = int h0 / int f``, so ``alpha f`` is the fixed point with the
        same integral.

        Returns:
            List of ``(k, L2Report, distance)`` for ``k = 0..n`` where
            ``distance`` is the weighted norm of ``T_a^k h0 - alpha f``.
        """
        if n < 1:
            raise ValueError("n must be at least 1")
        h = GridDensity(self.q_nodes, self._grid(h0))
        alpha = h.integral / self.f.integral
        fixed = self.f.scaled(alpha)
        out = []
        for k in range(n + 1):
            if k:
                h = self.apply_Ta(h)
            diff = GridDensity(self.q_nodes, h.values - fixed.values)
            out.append((k, l2_report(h, self.target), l2_report(diff, self.target).norm))
        return out


def _checked(target, aux, flow, h, p_grid):
    return TransferOperator(target, aux, flow, h.nodes, p_grid)


def apply_T(h, target, aux, flow, p_grid):
    """One-shot ``T h`` on the nodes of ``h``."""
    return _checked(target, aux, flow, h, p_grid).apply_T(h)


def apply_T_adjoint(h, target, aux, flow, p_grid):
    """One-shot adjoint ``T_adj h`` on the nodes of ``h``."""
    return _checked(target, aux, flow, h, p_grid).apply_T_adjoint(h)


def iterate_Ta(h0, n, target, aux, flow, p_grid):
    return _checked(target, aux, flow, h0, p_grid).iterate_Ta(h0, n)


def log_linear_fit(ks, values):
    """Least-squares fit of ``log(values)`` against ``ks``.

    Returns:
        ``(slope, intercept, r_squared)``.
    """
    ks = np.asarray(ks, dtype=float)
    y = np.log(np.asarray(values, dtype=float))
    slope, intercept = np.polyfit(ks, y, 1)
    resid = y - (slope * ks + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def write_sequence_csv(path, records):
    """CSV with columns ``k, norm, distance_to_fixed_point``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "norm", "distance_to_fixed_point"])
        for k, rep, dist in records:
            w.writerow([k, repr(rep.norm), repr(dist)])


def default_domain(model, width=7.0):
    """Interval covering ``mean +/- width * sd`` of every Gaussian component."""
    comps = getattr(model, "components", [model])
    lo = min(float(c.mean[0] - width * np.sqrt(c.cov[0, 0])) for c in comps)
    hi = max(float(c.mean[0] + width * np.sqrt(c.cov[0, 0])) for c in comps)
    return lo, hi


def run_lab(target, aux, n_iters, T=1.0, n_steps=40, nodes=301, h0=None):
    """Iterate ``T_a`` from ``h0`` on default grids.

    The default ``h0`` is a narrow bump one standard deviation to the right of
    the target mean, so it is far from proportional to ``f``.

    Returns:
        ``(operator, records)`` with records as :meth:`TransferOperator.iterate_Ta`.
    """
    q = uniform_grid(*default_domain(target), nodes)
    p = uniform_grid(*default_domain(aux), nodes)
    op = TransferOperator(target, aux, LeapfrogConfig(T / n_steps, n_steps), q, p)
    if h0 is None:
        w = op.f.quad_weights * op.f.values
        m = float(w @ q)
        sd = float(np.sqrt(w @ (q - m) ** 2))
        h0 = GridDensity(q, np.exp(-0.5 * ((q - m - sd) / (0.5 * sd)) ** 2))
    return op, op.iterate_Ta(h0, n_iters)
