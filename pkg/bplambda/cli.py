# bplambda/cli.py v1.0
"""Command line: run / align an experiment config, or run the verification suite"""

import argparse
import os
from typing import Any, Dict, List, Optional

from . import __version__
from .config import OUTPUT_DIR, VERIFY_REPORT_NAME
from .errors import ConfigError, DivergenceError
from .exporters import write_jsonl
from .loaders import _parse_value, load_experiment_config
from .runner import run_experiment

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3


def print_header(command: str) -> None:
    print()
    print("=" * 80)
    print(f"🚀 BP(λ) SYNTHETIC GRADIENTS v{__version__} - {command.upper()}")
    print("=" * 80)
    print()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='bp_lambda',
        description="Online synthetic-gradient learning for RNNs with eligibility traces")
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='command', required=True)

    for name, help_text in (('run', "train a learner on a task config"),
                            ('align', "train with per-timestep gradient alignment logging")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument('config', help="JSON or key=value experiment config")
        p.add_argument('--seed', type=int, nargs='+', dest='seeds', help="seed list override")
        p.add_argument('--data-dir', help="directory with MNIST IDX files")
        p.add_argument('--out', help=f"output root (default from config, else {OUTPUT_DIR})")
        p.add_argument('--desk-scale', action='store_true', default=None,
                       help="per-task caps on epochs, batches, lengths, images and wall clock")
        p.add_argument('--workers', type=int, default=1, help="parallel seed workers")
        p.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                       help="dotted config override, e.g. trainer.gamma=0.9")

    p = sub.add_parser('verify', help="numerical checks of kernels, targets and equivalence")
    p.add_argument('--seed', type=int, nargs='+', dest='seeds', default=list(range(5)))
    p.add_argument('--out', default=OUTPUT_DIR, help="directory for the JSONL report")
    p.add_argument('--quick', action='store_true', help="fewer seeds and cell kinds")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {}
    for item in args.set:
        if '=' not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got '{item}'")
        key, value = item.split('=', 1)
        overrides[key.strip()] = _parse_value(value.strip())
    overrides.update({'seeds': args.seeds, 'data_dir': args.data_dir, 'out': args.out,
                      'desk_scale': args.desk_scale})
    if args.command == 'align':
        overrides['log_alignment'] = True
    return overrides


def cmd_run(args: argparse.Namespace) -> int:
    config = load_experiment_config(args.config, _overrides(args))
    summary = run_experiment(config, workers=max(1, args.workers))
    print()
    print("=" * 80)
    print(f"✅ Done: {len(summary['seeds'])} seed(s) -> {os.path.join(config.out, config.name)}")
    print("=" * 80)
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    from .theory_lab import run_verification_suite
    records = run_verification_suite(seeds=args.seeds, quick=args.quick)
    write_jsonl(os.path.join(args.out, VERIFY_REPORT_NAME), records)
    failed = [r for r in records if r['passed'] is False]
    return EXIT_FAILURE if failed else EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    print_header(args.command)
    try:
        if args.command == 'verify':
            return cmd_verify(args)
        return cmd_run(args)
    except ConfigError as e:
        print(f"❌ {e}")
        for err in e.errors:
            print(f"   - {err}")
        return EXIT_USAGE
    except DivergenceError as e:
        print()
        print("=" * 80)
        print(f"❌ Training diverged: {e}")
        print(f"   Last metrics: {e.last_metrics}")
        print("=" * 80)
        return EXIT_DIVERGED
