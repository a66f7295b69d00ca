import argparse
import sys

import torch

from pymfg.pipelines import EXIT_INVALID, PIPELINES, run


def parse_args(argv=None):
    parser = argparse.ArgumentParser(prog='pymfg', description='Solve mean-field games and test their N-player games')

    parser.add_argument('command', choices=list(PIPELINES), help='Pipeline to run')
    parser.add_argument('--config', type=str, required=True, help='Path to the YAML or JSON option file')
    parser.add_argument('--out', type=str, default='results', help='Root folder of run directories')
    parser.add_argument('--seed', type=int, default=None, help='Master seed, overrides the option file')
    parser.add_argument('--threads', type=int, default=1, help='Worker threads for replications and torch')
    parser.add_argument('--quiet', action='store_true', help='Only log warnings and hide progress bars')
    return parser.parse_args(argv)


def main(argv=None):
    try:
        args = parse_args(argv)
    except SystemExit as err:
        # argparse exits with 2 on usage errors, 0 on --help
        return err.code if isinstance(err.code, int) else EXIT_INVALID
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print(f'--seed must be an unsigned 64-bit integer, got {args.seed}', file=sys.stderr)
        return EXIT_INVALID
    torch.set_num_threads(max(args.threads, 1))
    status, run_dir = run(args.command, args.config, args.out, args.seed, args.threads, args.quiet)
    if run_dir is not None:
        print(run_dir)
    return status


if __name__ == '__main__':
    sys.exit(main())
