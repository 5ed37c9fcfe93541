"""Command-line entry point.

Exit codes: 0 on success, 2 for configuration or input errors, 3 for
runtime failures.
"""

import argparse
import sys

import numpy as np

from ..errors import AdhmcError, ConfigError, EmptyDataset, ParseError, UnknownTarget
from ..operator_lab import log_linear_fit, run_lab, write_sequence_csv
from .config import load_config, parse_config
from .experiment import run_experiment
from .registry import ENTRIES, names, registry

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

INPUT_ERRORS = (ConfigError, UnknownTarget, ParseError, EmptyDataset)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_run_options(p):
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, default=1, help="replications run in parallel")


def build_parser():
    parser = _Parser(prog="adhmc", description="HMC and AD-HMC experiments")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run an experiment from a config file")
    run.add_argument("--config", required=True)
    _add_run_options(run)

    targets = sub.add_parser("targets", help="inspect the target registry")
    tsub = targets.add_subparsers(dest="action", required=True, parser_class=_Parser)
    tsub.add_parser("list")
    show = tsub.add_parser("show")
    show.add_argument("name")

    blr = sub.add_parser("blr", help="sample a logistic-regression posterior from a CSV file")
    blr.add_argument("--data", required=True)
    blr.add_argument("--use-col", default="use")
    blr.add_argument("--livch-col", default="livch")
    blr.add_argument("--age-col", default="age")
    blr.add_argument("--urban-col", default="urban")
    blr.add_argument("--prior-sd", type=float, default=10.0)
    blr.add_argument("--scheme", default="adhmc")
    blr.add_argument("--aux", default="std_normal")
    blr.add_argument("--particles", type=int, default=900)
    blr.add_argument("--iterations", type=int, default=300)
    blr.add_argument("--step-size", type=float, default=0.025)
    blr.add_argument("--n-steps", type=int, default=100)
    blr.add_argument("--metric-every", type=int, default=50)
    blr.add_argument("--replications", type=int, default=1)
    _add_run_options(blr)

    lab = sub.add_parser("operator-lab", help="iterate the 1D alternating transfer operator")
    lab.add_argument("--target", required=True)
    lab.add_argument("--aux", required=True)
    lab.add_argument("--iters", type=int, default=30)
    lab.add_argument("--T", type=float, default=1.0)
    lab.add_argument("--n-steps", type=int, default=40)
    lab.add_argument("--nodes", type=int, default=301)
    lab.add_argument("--out", help="CSV path (default: stdout)")
    return parser


def _cmd_run(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    out = args.out or cfg.output_dir
    _, summary = run_experiment(cfg, out, max(1, args.threads))
    print(f"wrote {cfg.replications} trace file(s) and summary.csv to {out}")
    return EXIT_OK


def _cmd_targets(args):
    if args.action == "list":
        for name in names():
            desc = ENTRIES[name].description if name in ENTRIES else "parametric Gaussian"
            print(f"{name}\t{desc}")
        return EXIT_OK
    model = registry(args.name)
    entry = ENTRIES.get(args.name)
    comps = getattr(model, "components", [model])
    weights = getattr(model, "weights", np.ones(1))
    print(f"{args.name}: dimension {model.dim}, {len(comps)} component(s)")
    for i, (c, w) in enumerate(zip(comps, weights)):
        raw = f" (raw {entry.raw_weights[i]})" if entry else ""
        sd = np.sqrt(np.diag(c.cov))
        print(f"  {i}: mean={np.round(c.mean, 6).tolist()} sd={np.round(sd, 6).tolist()} "
              f"weight={w:.6f}{raw}")
    return EXIT_OK


def _cmd_blr(args):
    lines = [
        "target = blr",
        f"blr_data = {args.data}",
        f"blr_use_col = {args.use_col}",
        f"blr_livch_col = {args.livch_col}",
        f"blr_age_col = {args.age_col}",
        f"blr_urban_col = {args.urban_col}",
        f"blr_prior_sd = {args.prior_sd}",
        f"scheme = {args.scheme}",
        f"aux = {args.aux}",
        f"particles = {args.particles}",
        f"iterations = {args.iterations}",
        f"step_size = {args.step_size}",
        f"n_steps = {args.n_steps}",
        f"metric_every = {args.metric_every}",
        f"replications = {args.replications}",
        f"seed = {args.seed if args.seed is not None else 0}",
    ]
    if args.out:
        lines.append(f"output_dir = {args.out}")
    cfg = parse_config("\n".join(lines))
    cfg.build_target()  # surfaces parse errors before any sampling
    _, summary = run_experiment(cfg, cfg.output_dir, max(1, args.threads))
    if summary:
        last = summary[-1]
        print(f"iteration {last['iteration']}: kl_proxy={last['kl_proxy_mean']:.4f}")
    return EXIT_OK


def _cmd_lab(args):
    target = registry(args.target)
    aux = registry(args.aux)
    if target.dim != 1 or aux.dim != 1:
        raise ConfigError("target/aux", "the operator lab needs 1D models")
    if args.iters < 1:
        raise ConfigError("iters", "must be at least 1")
    _, records = run_lab(target, aux, args.iters, args.T, args.n_steps, args.nodes)
    if args.out:
        write_sequence_csv(args.out, records)
    else:
        print("k,norm,distance_to_fixed_point")
        for k, rep, dist in records:
            print(f"{k},{rep.norm!r},{dist!r}")
    dists = [r[2] for r in records[1:]]
    slope, _, r2 = log_linear_fit(range(1, len(dists) + 1), dists)
    print(f"# decay rate per step {np.exp(slope):.4f}, log-linear R^2 {r2:.4f}", file=sys.stderr)
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "targets": _cmd_targets, "blr": _cmd_blr, "operator-lab": _cmd_lab}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except INPUT_ERRORS as exc:
        print(f"adhmc: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AdhmcError, OSError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"adhmc: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
