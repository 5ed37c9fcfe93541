"""Run configured experiments and write per-replication traces and a summary."""

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..adapt import make_aux_update
from ..errors import AdhmcError
from ..integrator import LeapfrogConfig
from ..metrics import kl_proxy_blr, sinkhorn_distance
from ..models import BlrPosterior
from ..sampler import Ensemble, KernelConfig, run_chain

TRACE_COLUMNS = [
    "replication", "iteration", "w2_to_target_samples", "accepted_fraction_fwd",
    "accepted_fraction_bwd", "mean_abs_dH", "n_mixture_components", "cpu_seconds",
    "kl_proxy", "status",
]
NUMERIC_COLUMNS = TRACE_COLUMNS[2:-1]

# sub-stream keys next to the per-iteration streams (seed, replication, iteration)
_INIT_KEY = 1
_REFERENCE_KEY = 2


def replication_rng(seed, replication, key):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(replication)], spawn_key=(key,)))


def initial_ensemble(cfg, dim, replication):
    """``K`` draws from ``N(0, init_sd^2 I)``."""
    rng = replication_rng(cfg.seed, replication, _INIT_KEY)
    return Ensemble(cfg.init_sd * rng.standard_normal((cfg.particles, dim)))


def reference_cloud(cfg, target, replication):
    if not target.has_sampler:
        return None
    return target.sample(replication_rng(cfg.seed, replication, _REFERENCE_KEY), cfg.reference_size)


def _fmt(x):
    if isinstance(x, str):
        return x
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    return repr(float(x)) if isinstance(x, float) else str(x)


def run_replication(cfg, replication, target=None):
    """One replication; returns trace rows as dicts (a status row on failure)."""
    try:
        target = target if target is not None else cfg.build_target()
        aux = cfg.build_aux(target.dim)
        kcfg = KernelConfig(LeapfrogConfig(cfg.step_size, cfg.n_steps), cfg.mh, cfg.kernel_scheme)
        ref = reference_cloud(cfg, target, replication)
        is_blr = isinstance(target, BlrPosterior)

        def metrics(ens):
            out = {"w2": float("nan"), "kl": float("nan")}
            if ref is not None:
                out["w2"] = sinkhorn_distance(ens.particles, ref, cfg.ot)
            if is_blr:
                out["kl"] = kl_proxy_blr(ens, target)
            return out

        update = make_aux_update(cfg.aux_name, cfg.n_a) if cfg.adaptive else None
        trace = run_chain(target, aux, kcfg, initial_ensemble(cfg, target.dim, replication),
                          cfg.effective_iterations, cfg.seed, replication,
                          metric_every=cfg.metric_every or None, metrics=metrics, aux_update=update)
    except AdhmcError as exc:
        return [_status_row(replication, f"error: {type(exc).__name__}: {exc}")]
    rows = []
    for r in trace.rows:
        rep = r.report
        rows.append({
            "replication": replication,
            "iteration": r.iteration,
            "w2_to_target_samples": r.metrics["w2"],
            "accepted_fraction_fwd": rep.accepted_fraction_fwd if rep else float("nan"),
            "accepted_fraction_bwd": rep.accepted_fraction_bwd if rep else float("nan"),
            "mean_abs_dH": rep.mean_abs_dH if rep else float("nan"),
            "n_mixture_components": r.n_components,
            "cpu_seconds": r.cpu_seconds if cfg.record_timing else float("nan"),
            "kl_proxy": r.metrics["kl"],
            "status": "ok",
        })
    return rows


def _status_row(replication, status):
    row = {c: float("nan") for c in TRACE_COLUMNS}
    row.update(replication=replication, iteration=-1, n_mixture_components=0, status=status)
    return row


def write_rows(path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def summarize(all_rows):
    """Across-replication mean and standard error of each numeric column per iteration.

    Non-finite entries are skipped; ``se`` is ``nan`` with fewer than two
    finite values.
    """
    by_iter = {}
    for rows in all_rows:
        for row in rows:
            if row["status"] == "ok":
                by_iter.setdefault(row["iteration"], []).append(row)
    out = []
    for it in sorted(by_iter):
        group = by_iter[it]
        rec = {"iteration": it, "n_replications": len(group)}
        for c in NUMERIC_COLUMNS:
            vals = np.array([float(g[c]) for g in group])
            vals = vals[np.isfinite(vals)]
            rec[f"{c}_mean"] = float(vals.mean()) if vals.size else float("nan")
            rec[f"{c}_se"] = (float(vals.std(ddof=1) / np.sqrt(vals.size))
                              if vals.size > 1 else float("nan"))
        out.append(rec)
    return out


def summary_columns():
    cols = ["iteration", "n_replications"]
    for c in NUMERIC_COLUMNS:
        cols += [f"{c}_mean", f"{c}_se"]
    return cols


def run_experiment(cfg, out_dir=None, threads=1):
    """Run every replication and write ``trace_<r>.csv`` and ``summary.csv``.

    Replication ``r`` draws its streams from ``(seed, r)``; output is
    byte-identical for any ``threads`` when ``record_timing`` is off.

    Returns:
        ``(per-replication rows, summary rows)``.
    """
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    reps = range(cfg.replications)
    target = cfg.build_target()
    if threads > 1 and cfg.replications > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            all_rows = list(pool.map(lambda r: run_replication(cfg, r, target), reps))
    else:
        all_rows = [run_replication(cfg, r, target) for r in reps]
    for r, rows in zip(reps, all_rows):
        write_rows(os.path.join(out_dir, f"trace_{r}.csv"), rows, TRACE_COLUMNS)
    summary = summarize(all_rows)
    write_rows(os.path.join(out_dir, "summary.csv"), summary, summary_columns())
    return all_rows, summary
