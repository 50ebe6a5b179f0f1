"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 capacity error,
3 failed hard check (bound audit, pruning soundness).
"""
import argparse
import logging
import sys
from pathlib import Path

from ..errors import CapacityError, SpectrumError, SymmetryError
from .config import EXPERIMENTS, ConfigError, load_config
from .experiments import RUNNERS
from .tables import write_summary, write_table

EXIT_OK, EXIT_USAGE, EXIT_CAPACITY, EXIT_AUDIT = 0, 1, 2, 3

log = logging.getLogger("qlandscape")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _u64(text):
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return value


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON experiment configuration")
    common.add_argument("--out", metavar="DIR", help="output directory (default: the config's output field)")
    common.add_argument("--seed", type=_u64, help="global seed (unsigned 64-bit)")
    common.add_argument("--threads", type=_positive_int, default=1, help="worker processes for experiment cells")
    common.add_argument("--verbose", action="store_true", help="log progress to stderr")
    common.add_argument("--no-figures", action="store_true", help="skip PNG figures")

    parser = _Parser(prog="qlandscape", description="Quantum dynamical landscape experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "spectrum": "Lie-Fourier coefficients of Ising state-transfer landscapes",
        "surrogate-bench": "surrogate test error against training-set size",
        "taylor-order": "minimum Taylor order for a target error",
        "bounds-audit": "analytic bounds against sampled landscapes",
        "optimize": "DIRECT optimization with Lipschitz pruning",
        "kernel-bandwidth": "sinc-kernel error for several kernel bandwidths",
    }
    for name in EXPERIMENTS:
        p = sub.add_parser(name, parents=[common], help=helps[name], description=helps[name])
        if name == "optimize":
            p.add_argument("--budget", type=_positive_int, help="maximum number of objective evaluations")
            p.add_argument("--prune", choices=("on", "off"), help="Lipschitz pruning of rectangles")
            p.add_argument("--epsilon-prune", type=float, help="pruning tolerance (default 1e-4 times the observable range)")
    return parser


def _print_audit(summary, stream):
    stream.write(f"{'bound':45s} {'analytic':>12s} {'empirical':>12s}  status\n")
    for r in summary["reports"]:
        emp = "" if r["empirical_value"] is None else f"{r['empirical_value']:.4g}"
        status = "ok" if r["satisfied"] else ("FAIL" if r["hard"] else "warn")
        stream.write(f"{r['name']:45s} {r['analytic_value']:12.4g} {emp:>12s}  {status}\n")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {"seed": args.seed, "output": args.out}
    if args.command == "optimize":
        overrides.update(budget=args.budget, epsilon_prune=args.epsilon_prune)
        if args.prune is not None:
            overrides["prune"] = args.prune == "on"
    try:
        cfg = load_config(args.command, args.config, overrides)
        log.info("running %s (config %s)", cfg.experiment, cfg.config_hash)
        result = RUNNERS[cfg.experiment](cfg, threads=args.threads)
    except (ConfigError, FileNotFoundError, SpectrumError, SymmetryError, ValueError) as exc:
        print(f"qlandscape: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CapacityError as exc:
        print(f"qlandscape: capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY

    out = Path(cfg.output)
    for table in result.tables:
        write_table(table, out, cfg.config_hash)
    summary = dict(result.summary, config=cfg.canonical(), config_hash=cfg.config_hash, failures=result.failures)
    write_summary(summary, out)
    if not args.no_figures:
        from .plotting import PLOTTERS

        for path in PLOTTERS[cfg.experiment](result, out):
            log.info("wrote %s", path)
    if cfg.experiment == "bounds-audit":
        _print_audit(result.summary, sys.stdout)
    print(f"{cfg.experiment}: wrote {len(result.tables)} table(s) to {out}")
    if result.failures:
        print(f"failed checks: {', '.join(result.failures)}", file=sys.stderr)
        return EXIT_AUDIT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
