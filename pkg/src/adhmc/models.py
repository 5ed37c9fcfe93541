"""Target and auxiliary densities.

Every model exposes ``log_density``, ``potential`` (``-log_density``) and
``grad_potential``; Gaussians and mixtures can also draw exact samples. All
evaluation methods accept either a single point of shape ``(d,)`` or a batch of
shape ``(K, d)``; batch evaluation is what the samplers use, one row per
particle.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logsumexp

from .errors import DimensionMismatch, EmptyDataset, NonFiniteGradient, NoSampler, ParseError

LOG_2PI = math.log(2.0 * math.pi)


def regularize_covariance(cov, rel=1e-6, floor=1e-12):
    """Add ``lam * I`` with ``lam = rel * trace(cov) / d`` (at least ``floor``)."""
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    d = cov.shape[0]
    lam = max(rel * np.trace(cov) / d, floor)
    cov = 0.5 * (cov + cov.T)
    return cov + lam * np.eye(d)


class DensityModel:
    """Common interface for targets and auxiliaries.

    Subclasses set ``dim`` and implement ``log_density`` and
    ``grad_potential``; ``has_sampler`` is true when ``sample`` is exact.
    """

    dim: int
    has_gradient = True
    has_sampler = False

    def log_density(self, x):
        raise NotImplementedError

    def potential(self, x):
        return -self.log_density(x)

    def grad_potential(self, x):
        raise NotImplementedError

    def hessian_potential(self, x):
        """Closed-form Hessian of the potential, or ``None`` if unavailable."""
        return None

    def sample(self, rng, size=None):
        raise NoSampler(f"{type(self).__name__} has no exact sampler")

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,) or x.ndim > 2:
            raise DimensionMismatch(f"expected trailing dimension {self.dim}, got shape {x.shape}")
        return x


class GaussianDensity(DensityModel):
    """Multivariate normal ``N(mean, cov)`` with cached factorisations."""

    has_sampler = True

    def __init__(self, mean, cov):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        d = mean.shape[0]
        cov = np.asarray(cov, dtype=float)
        if cov.ndim == 0:
            cov = cov * np.eye(d)
        if cov.shape != (d, d):
            raise DimensionMismatch(f"covariance shape {cov.shape} does not match mean of length {d}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValueError("non-finite Gaussian parameters")
        self.dim = d
        self.mean = mean
        self.cov = 0.5 * (cov + cov.T)
        self.chol = np.linalg.cholesky(self.cov)
        self.precision = np.linalg.inv(self.cov)
        self.precision = 0.5 * (self.precision + self.precision.T)
        self.logdet = 2.0 * float(np.log(np.diag(self.chol)).sum())
        self._log_norm = -0.5 * (d * LOG_2PI + self.logdet)

    @classmethod
    def isotropic(cls, d, sd=1.0, mean=None):
        mean = np.zeros(d) if mean is None else mean
        return cls(mean, sd**2 * np.eye(d))

    def __repr__(self):
        return f"GaussianDensity(dim={self.dim}, mean={self.mean.tolist()})"

    def log_density(self, x):
        x = self._check(x)
        diff = x - self.mean
        z = diff @ self.precision
        return self._log_norm - 0.5 * np.sum(z * diff, axis=-1)

    def grad_potential(self, x):
        x = self._check(x)
        return (x - self.mean) @ self.precision

    def hessian_potential(self, x=None):
        return self.precision

    def sample(self, rng, size=None):
        n = 1 if size is None else size
        z = rng.standard_normal((n, self.dim))
        out = self.mean + z @ self.chol.T
        return out[0] if size is None else out


class GaussianMixtureDensity(DensityModel):
    """Finite mixture of Gaussians; log-density evaluated by log-sum-exp."""

    has_sampler = True

    def __init__(self, components, weights):
        components = list(components)
        if not components:
            raise ValueError("a mixture needs at least one component")
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (len(components),) or np.any(weights < 0) or weights.sum() <= 0:
            raise ValueError("weights must be a nonnegative vector with one entry per component")
        d = components[0].dim
        if any(c.dim != d for c in components):
            raise DimensionMismatch("mixture components must share a dimension")
        self.dim = d
        self.components = components
        self.weights = weights / weights.sum()
        self._means = np.stack([c.mean for c in components])
        self._precs = np.stack([c.precision for c in components])
        self._chols = np.stack([c.chol for c in components])
        with np.errstate(divide="ignore"):
            self._log_coef = np.log(self.weights) + np.array([c._log_norm for c in components])
        self._cumw = np.cumsum(self.weights)

    def __len__(self):
        return len(self.components)

    def __repr__(self):
        return f"GaussianMixtureDensity(dim={self.dim}, n_components={len(self)})"

    def _component_terms(self, x):
        # (C, K, d) offsets and precision-weighted offsets, (C, K) log terms
        X = x.reshape(-1, self.dim)
        diff = X[None, :, :] - self._means[:, None, :]
        z = np.matmul(diff, self._precs)
        logp = self._log_coef[:, None] - 0.5 * np.einsum("ckd,ckd->ck", z, diff)
        return z, logp

    def log_density(self, x):
        x = self._check(x)
        _, logp = self._component_terms(x)
        out = logsumexp(logp, axis=0)
        return out[0] if x.ndim == 1 else out

    def grad_potential(self, x):
        x = self._check(x)
        z, logp = self._component_terms(x)
        resp = np.exp(logp - logp.max(axis=0))
        resp /= resp.sum(axis=0)
        g = np.einsum("ck,ckd->kd", resp, z)
        return g[0] if x.ndim == 1 else g

    def sample(self, rng, size=None):
        n = 1 if size is None else size
        idx = np.searchsorted(self._cumw, rng.random(n), side="right")
        idx = np.minimum(idx, len(self) - 1)
        z = rng.standard_normal((n, self.dim))
        out = self._means[idx] + np.einsum("nij,nj->ni", self._chols[idx], z)
        return out[0] if size is None else out


@dataclass
class BlrPosterior(DensityModel):
    """Unnormalised Bayesian logistic-regression posterior.

    ``X`` is the ``(N, d)`` design matrix (first column the intercept), ``Y``
    the 0/1 labels and ``prior`` a Gaussian on the coefficients. ``N = 0`` is
    allowed and reduces the posterior to the prior.
    """

    X: np.ndarray
    Y: np.ndarray
    prior: GaussianDensity
    dim: int = field(init=False)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.Y = np.asarray(self.Y, dtype=float).reshape(-1)
        if self.X.shape[0] != self.Y.shape[0]:
            raise DimensionMismatch("X and Y must have the same number of rows")
        if self.X.shape[1] != self.prior.dim:
            raise DimensionMismatch("design matrix width must equal the prior dimension")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.Y))):
            raise ValueError("non-finite entries in the dataset")
        self.dim = self.prior.dim

    def log_likelihood(self, q):
        q = self._check(q)
        s = q @ self.X.T
        return np.sum(self.Y * s - np.logaddexp(0.0, s), axis=-1)

    def log_density(self, q):
        return self.prior.log_density(q) + self.log_likelihood(q)

    def grad_potential(self, q):
        q = self._check(q)
        s = q @ self.X.T
        return self.prior.grad_potential(q) + (expit(s) - self.Y) @ self.X


def potential(model, q):
    """``U(q) = -log density``, with the model's fixed normalisation."""
    return model.potential(model._check(q))


def grad_potential(model, q):
    if not model.has_gradient:
        raise TypeError(f"{type(model).__name__} has no gradient")
    g = model.grad_potential(model._check(q))
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradient("gradient has non-finite entries")
    return g


def sample(model, rng, size=None):
    if not model.has_sampler:
        raise NoSampler(f"{type(model).__name__} has no exact sampler")
    return model.sample(rng, size)


def _encode_yes(value):
    return 1.0 if value.strip() == "Y" else 0.0


def _encode_livch(value):
    value = value.strip()
    if value == "3+":
        return 3.0
    if value in ("0", "1", "2"):
        return float(value)
    raise ValueError(f"unknown livch level {value!r}")


def blr_from_csv(path, use_col="use", livch_col="livch", age_col="age",
                 urban_col="urban", prior_sd=10.0):
    """Build the contraceptive-use posterior from a CSV file.

    Columns are encoded as: ``use`` and ``urban`` ``"Y"`` -> 1 else 0;
    ``livch`` ``0/1/2/3+`` -> 0..3 as a single numeric feature; ``age`` parsed
    as a real and centred on its sample mean. The design matrix is
    ``[1, livch, age, urban]`` and the prior ``N(0, prior_sd^2 I)``.
    """
    columns = {"use": use_col, "livch": livch_col, "age": age_col, "urban": urban_col}
    encoders = {"use": _encode_yes, "livch": _encode_livch, "age": float, "urban": _encode_yes}
    rows = {k: [] for k in columns}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for key, col in columns.items():
            if col not in header:
                raise ParseError(f"column {col!r} ({key}) not found in header {header}")
        for lineno, record in enumerate(reader, start=2):
            for key, col in columns.items():
                raw = record.get(col)
                if raw is None:
                    raise ParseError(f"row {lineno}, column {col!r}: missing value")
                try:
                    rows[key].append(encoders[key](raw))
                except ValueError as exc:
                    raise ParseError(f"row {lineno}, column {col!r}: {exc}") from None
    n = len(rows["use"])
    if n == 0:
        raise EmptyDataset(f"{path} contains no data rows")
    age = np.asarray(rows["age"])
    X = np.column_stack([np.ones(n), rows["livch"], age - age.mean(), rows["urban"]])
    Y = np.asarray(rows["use"])
    prior = GaussianDensity(np.zeros(4), prior_sd**2 * np.eye(4))
    return BlrPosterior(X, Y, prior)
