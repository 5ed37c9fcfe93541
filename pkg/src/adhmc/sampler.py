"""HMC and alternating-direction HMC kernels over particle ensembles.

One kernel step moves every particle of an :class:`Ensemble` independently:
draw a momentum from the auxiliary, run the motion, and (optionally) apply a
Metropolis-Hastings correction. AD-HMC follows every forward motion of
length ``+T`` with a backward motion of length ``-T`` from a fresh momentum.

The acceptance test pairs each directional kernel with its
opposite-direction kernel as the reverse proposal. Under that pairing the
reverse momentum of ``(q0, p0) -> (qL, pL)`` is ``pL`` itself (the backward
motion from ``(qL, pL)`` retraces to ``q0``), so the ratio is
``exp(-H(qL, pL) + H(q0, p0))`` for symmetric and asymmetric auxiliaries
alike.

Random numbers: a step consumes, in order, the momenta (one row per particle)
and then the uniforms of each sub-step from the generator it is given.
:func:`step_rng` derives that generator from
``(seed, replication, iteration)`` with a counter-based bit generator, so a
chain is reproducible whatever the execution schedule.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .integrator import ExactFlow, LeapfrogConfig, flow_map, hamiltonian

SCHEMES = ("hmc_forward_only", "adhmc")


@dataclass
class Ensemble:
    particles: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        self.particles = np.atleast_2d(np.asarray(self.particles, dtype=float))
        if self.particles.shape[0] < 1:
            raise ValueError("an ensemble needs at least one particle")
        if not np.all(np.isfinite(self.particles)):
            raise ValueError("ensemble positions must be finite")

    @property
    def size(self):
        return self.particles.shape[0]

    @property
    def dim(self):
        return self.particles.shape[1]


@dataclass(frozen=True)
class KernelConfig:
    """Kernel settings.

    Attributes:
        flow: a ``LeapfrogConfig`` or an ``ExactFlow`` describing the forward
            motion; the backward sub-step of AD-HMC uses its reversal.
        mh_enabled: apply the Metropolis-Hastings correction.
        scheme: ``"hmc_forward_only"`` or ``"adhmc"``.
    """

    flow: object
    mh_enabled: bool = True
    scheme: str = "adhmc"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if not isinstance(self.flow, (LeapfrogConfig, ExactFlow)):
            raise TypeError("flow must be a LeapfrogConfig or ExactFlow")
        if self.flow.direction != 1:
            raise ValueError("the configured flow is the forward motion; use direction=+1")


@dataclass
class StepReport:
    """Acceptance statistics for one or more kernel steps.

    ``accepted_fraction`` pools every proposal (both sub-steps for AD-HMC);
    the forward and backward fractions are kept separately as well.
    """

    accepted: int = 0
    proposals: int = 0
    accepted_fwd: int = 0
    proposals_fwd: int = 0
    accepted_bwd: int = 0
    proposals_bwd: int = 0
    sum_abs_dH: float = 0.0
    n_dH: int = 0
    divergences: int = 0

    @property
    def accepted_fraction(self):
        return self.accepted / self.proposals if self.proposals else float("nan")

    @property
    def accepted_fraction_fwd(self):
        return self.accepted_fwd / self.proposals_fwd if self.proposals_fwd else float("nan")

    @property
    def accepted_fraction_bwd(self):
        return self.accepted_bwd / self.proposals_bwd if self.proposals_bwd else float("nan")

    @property
    def mean_abs_dH(self):
        return self.sum_abs_dH / self.n_dH if self.n_dH else float("nan")

    def add_substep(self, accepted, dH, diverged, backward):
        n = accepted.size
        k = int(accepted.sum())
        self.accepted += k
        self.proposals += n
        if backward:
            self.accepted_bwd += k
            self.proposals_bwd += n
        else:
            self.accepted_fwd += k
            self.proposals_fwd += n
        finite = np.isfinite(dH)
        self.sum_abs_dH += float(np.abs(dH[finite]).sum())
        self.n_dH += int(finite.sum())
        self.divergences += int(np.count_nonzero(diverged))

    def merge(self, other):
        for name in ("accepted", "proposals", "accepted_fwd", "proposals_fwd", "accepted_bwd",
                     "proposals_bwd", "sum_abs_dH", "n_dH", "divergences"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        return self


def step_rng(seed, replication, iteration):
    """Generator for one iteration of one replication (Philox, keyed by all three)."""
    ss = np.random.SeedSequence([int(seed), int(replication), int(iteration)])
    return np.random.Generator(np.random.Philox(ss))


def accept_batch(dH, u):
    """Boolean acceptance of ``u <= min(1, exp(-dH))``; non-finite ``dH`` rejects."""
    dH = np.asarray(dH, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        ok = np.isfinite(dH) & (u <= np.exp(-np.where(np.isfinite(dH), dH, np.inf)))
    return ok


def mh_accept(q0, p0, qL, pL, target, aux, rng):
    """Metropolis-Hastings decision for a single proposal ``(q0, p0) -> (qL, pL)``."""
    with np.errstate(over="ignore", invalid="ignore"):
        dH = hamiltonian(target, aux, qL, pL) - hamiltonian(target, aux, q0, p0)
    return bool(accept_batch(np.atleast_1d(dH), np.atleast_1d(rng.random()))[0])


def _substep(q, target, aux, flow, mh_enabled, rng, report, backward):
    K = q.shape[0]
    p0 = aux.sample(rng, K)
    Q, P, diverged = flow_map(target, aux, flow, q, p0)
    with np.errstate(over="ignore", invalid="ignore"):
        dH = hamiltonian(target, aux, Q, P) - hamiltonian(target, aux, q, p0)
    dH = np.where(diverged, np.inf, dH)
    if mh_enabled:
        accepted = accept_batch(dH, rng.random(K))
    else:
        accepted = ~diverged & np.isfinite(Q).all(axis=1)
    out = q.copy()
    out[accepted] = Q[accepted]
    report.add_substep(accepted, dH, diverged, backward)
    return out


def hmc_step(ens, target, aux, cfg, rng):
    """One forward-only HMC iteration (lift, motion ``+T``, accept, project)."""
    report = StepReport()
    q = _substep(ens.particles, target, aux, cfg.flow, cfg.mh_enabled, rng, report, False)
    return Ensemble(q, ens.iteration + 1), report


def adhmc_step(ens, target, aux, cfg, rng):
    """One AD-HMC iteration: forward sub-step, then backward sub-step.

    The backward sub-step always runs, from the accepted or the unchanged
    position.
    """
    report = StepReport()
    q = _substep(ens.particles, target, aux, cfg.flow, cfg.mh_enabled, rng, report, False)
    q = _substep(q, target, aux, cfg.flow.reversed(), cfg.mh_enabled, rng, report, True)
    return Ensemble(q, ens.iteration + 1), report


def kernel_step(ens, target, aux, cfg, rng):
    if cfg.scheme == "adhmc":
        return adhmc_step(ens, target, aux, cfg, rng)
    return hmc_step(ens, target, aux, cfg, rng)


@dataclass
class TraceRow:
    """One scheduled record of a chain.

    ``report`` aggregates the kernel steps since the previous row (``None``
    for the initial row); ``cpu_seconds`` is the mean wall time per iteration
    over the same window.
    """

    iteration: int
    report: object
    metrics: dict
    n_components: int
    cpu_seconds: float
    snapshot: object = None


@dataclass
class Trace:
    rows: list = field(default_factory=list)
    final: object = None
    auxiliaries: list = field(default_factory=list)


def n_components(aux):
    return len(getattr(aux, "components", [aux]))


def run_chain(target, aux, cfg, initial, n_iterations, seed, replication=0,
              metric_every=None, metrics=None, aux_update=None, keep_snapshots=False):
    """Drive a kernel for ``n_iterations`` with a metric schedule.

    Args:
        target, aux: position and momentum models.
        cfg: :class:`KernelConfig`.
        initial: starting :class:`Ensemble`.
        n_iterations: number of kernel iterations ``N``.
        seed, replication: keys of the per-iteration random streams.
        metric_every: record a row every this many iterations (and at 0 and
            ``N``); ``None`` records only the initial and final rows.
        metrics: ``callable(ensemble) -> dict`` evaluated at every row.
        aux_update: ``callable(iteration, ensemble, aux) -> aux`` called after
            each iteration; its return value becomes the auxiliary.
        keep_snapshots: store a copy of the particles in every row.

    Returns:
        A :class:`Trace`; deterministic given its arguments.
    """
    metrics = metrics or (lambda ens: {})
    ens = initial
    trace = Trace(auxiliaries=[(0, aux)])

    def record(it, report, seconds):
        trace.rows.append(TraceRow(it, report, metrics(ens), n_components(aux), seconds,
                                   ens.particles.copy() if keep_snapshots else None))

    record(ens.iteration, None, float("nan"))
    window = StepReport()
    window_start = time.perf_counter()
    window_len = 0
    for it in range(1, n_iterations + 1):
        ens, rep = kernel_step(ens, target, aux, cfg, step_rng(seed, replication, it))
        window.merge(rep)
        window_len += 1
        if aux_update is not None:
            new_aux = aux_update(it, ens, aux)
            if new_aux is not aux:
                aux = new_aux
                trace.auxiliaries.append((it, aux))
        if (metric_every and it % metric_every == 0) or it == n_iterations:
            elapsed = (time.perf_counter() - window_start) / window_len
            record(it, window, elapsed)
            window = StepReport()
            window_start = time.perf_counter()
            window_len = 0
    trace.final = ens
    return trace

