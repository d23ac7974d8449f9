# Licensed under an MIT open source license - see LICENSE

"""
Command-line entry point: ``coarse-cluster <subcommand> ...``.
"""

import argparse
import os
import sys

from astropy import log
from threadpoolctl import threadpool_limits

from .coarsen import multi_scale_coarsen, N_MIN
from .exceptions import (CoarseClusterError, ConfigError, FormatError,
                         NumericsError)
from .graphdata import load_graph
from .io_funcs import (write_coarsening, write_json, read_labels,
                       write_train_outputs, _ensure_dir)
from .metrics import clustering_metrics, summarize_reports
from .netfwd import ModelParams
from .spectral import verify_coarsening
from .trainer import TrainConfig, pretrain, train, gradient_check
from .utilities import thread_limit

__all__ = ['run_cli', 'main', 'build_parser']

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_NUMERICS = 3

GRADCHECK_TOL = 1e-4


class _Parser(argparse.ArgumentParser):
    '''
    Argument parser that raises instead of exiting.
    '''
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError("{0}: error: {1}".format(self.prog, message))


def _scales(text):
    try:
        return tuple(float(s) for s in text.split(',') if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError("scales must be comma-separated "
                                         "numbers, got '{}'".format(text))


def build_parser():
    parser = _Parser(prog='coarse-cluster',
                     description="Multi-scale contrastive graph clustering.")
    parser.add_argument('--verbose', action='store_true',
                        help="Log progress.")
    sub = parser.add_subparsers(dest='command', parser_class=_Parser)
    sub.required = True

    p = sub.add_parser('coarsen', help="Coarsen a dataset at several scales.")
    p.add_argument('--input', required=True)
    p.add_argument('--scales', type=_scales, required=True)
    p.add_argument('--min-nodes', type=int, default=N_MIN)
    p.add_argument('--out', required=True)

    p = sub.add_parser('verify-spectral',
                       help="Spectral checks of a coarsening cascade.")
    p.add_argument('--input', required=True)
    p.add_argument('--scales', type=_scales, required=True)
    p.add_argument('--min-nodes', type=int, default=N_MIN)
    p.add_argument('--report', required=True)

    for name in ('pretrain', 'train'):
        p = sub.add_parser(name)
        p.add_argument('--config')
        p.add_argument('--preset',
                       help="Built-in settings: acm, dblp, citeseer, cora, "
                            "reuters.")
        p.add_argument('--input', help="Dataset directory.")
        p.add_argument('--scales', type=_scales)
        p.add_argument('--seed', type=int)
        p.add_argument('--out', default='result')

    p = sub.choices['train']
    p.add_argument('--repeats', type=int, default=1)
    p.add_argument('--params', help="Pre-trained params.hdf5.")
    p.add_argument('--dump-embeddings')
    p.add_argument('--no-one-to-many', action='store_true')
    p.add_argument('--single-scale', action='store_true')
    p.add_argument('--single-view', action='store_true')

    p = sub.add_parser('eval', help="Score a label file.")
    p.add_argument('--pred', required=True)
    p.add_argument('--truth', required=True)
    p.add_argument('--report')

    p = sub.add_parser('gradcheck',
                       help="Finite-difference check of all gradients.")
    p.add_argument('--seed', type=int, default=7)
    p.add_argument('--report')

    return parser


def _config(args):
    if args.config:
        cfg = TrainConfig.from_toml(args.config)
    elif args.preset:
        cfg = TrainConfig.for_dataset(args.preset)
    else:
        cfg = TrainConfig()

    changes = {}
    if args.input:
        changes['dataset'] = args.input
    if args.scales:
        changes['scales'] = args.scales
    if args.seed is not None:
        changes['seed'] = args.seed
    if getattr(args, 'no_one_to_many', False):
        changes['one_to_many'] = False
    if getattr(args, 'single_view', False):
        changes['dual_view'] = False
    cfg = cfg.replace(**changes)
    if getattr(args, 'single_scale', False):
        cfg = cfg.replace(scales=cfg.scales[:1])
    cfg.validate()

    if cfg.dataset is None:
        raise ConfigError("No dataset: pass --input or set 'dataset' in the "
                          "config.")
    return cfg


def _cmd_coarsen(args):
    graph = load_graph(args.input)
    coarsened = multi_scale_coarsen(graph, args.scales, n_min=args.min_nodes,
                                    verbose=args.verbose)
    write_coarsening(coarsened, args.out)
    for cg in coarsened:
        print("scale {0}: {1} nodes{2}".format(cg.scale, cg.n_nodes,
                                               " (early stop)" if cg.early_stop
                                               else ""))
    return EXIT_OK


def _cmd_verify(args):
    graph = load_graph(args.input)
    coarsened = multi_scale_coarsen(graph, args.scales, n_min=args.min_nodes,
                                    verbose=args.verbose)
    reports = verify_coarsening(graph, coarsened)
    write_json([r.to_dict() for r in reports], args.report)
    for r in reports:
        print("scale {0}: interlacing_ok={1} condition_ok={2} weyl_ok={3}"
              .format(r.extra['scale'], r.interlacing_ok, r.condition_ok,
                      r.weyl_ok))
    return EXIT_OK


def _cmd_pretrain(args):
    cfg = _config(args)
    graph = load_graph(cfg.dataset)
    params, history = pretrain(graph, cfg, verbose=args.verbose,
                               return_history=True)
    _ensure_dir(args.out)
    params.to_hdf5(os.path.join(args.out, 'params.hdf5'), overwrite=True)
    write_json({'pretrain_losses': history, 'config': cfg.as_dict()},
               os.path.join(args.out, 'pretrain.json'))
    if history:
        print("reconstruction loss {0:.6g} -> {1:.6g}".format(history[0],
                                                              history[-1]))
    return EXIT_OK


def _print_metrics(report):
    print("acc={0} nmi={1} ari={2} f1={3}".format(report.acc, report.nmi,
                                                  report.ari, report.f1))


def _cmd_train(args):
    cfg = _config(args)
    if args.repeats < 1:
        raise ConfigError("--repeats must be at least 1.")
    graph = load_graph(cfg.dataset)
    params = ModelParams.from_hdf5(args.params) if args.params else None

    results = []
    for rep in range(args.repeats):
        run_cfg = cfg.replace(seed=cfg.seed + rep)
        result = train(graph, run_cfg, params=params, verbose=args.verbose)
        out = args.out if args.repeats == 1 else \
            os.path.join(args.out, "seed_{}".format(run_cfg.seed))
        write_train_outputs(result, out, dump_embeddings=args.dump_embeddings
                            if rep == 0 else None)
        results.append(result)
        if result.metrics is not None:
            _print_metrics(result.metrics)

    if args.repeats > 1 and all(r.metrics is not None for r in results):
        summary = summarize_reports([r.metrics for r in results])
        write_json(summary, os.path.join(args.out, 'summary.json'))
        for key in ('acc', 'nmi', 'ari', 'f1'):
            print("{0}: {1:.4f} +/- {2:.4f}".format(key, summary[key]['mean'],
                                                    summary[key]['std']))
    return EXIT_OK


def _cmd_eval(args):
    report = clustering_metrics(read_labels(args.pred), read_labels(args.truth))
    _print_metrics(report)
    if args.report:
        write_json(report.to_dict(), args.report)
    return EXIT_OK


def _cmd_gradcheck(args):
    result = gradient_check(seed=args.seed)
    print("max_rel_error={0:.3e} over {1} coordinates"
          .format(result['max_rel_error'], result['n_checked']))
    if args.report:
        write_json(result, args.report)
    return EXIT_OK if result['max_rel_error'] < GRADCHECK_TOL else EXIT_ERROR


COMMANDS = {'coarsen': _cmd_coarsen, 'verify-spectral': _cmd_verify,
            'pretrain': _cmd_pretrain, 'train': _cmd_train,
            'eval': _cmd_eval, 'gradcheck': _cmd_gradcheck}


def run_cli(argv=None):
    '''
    Run one subcommand and return its exit code.

    0 on success, 2 for usage, configuration and input-format errors, 3 for
    numerical failures and 1 for any other error of this package.
    '''
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        # --help
        return EXIT_OK if not exc.code else EXIT_USAGE

    if args.verbose:
        log.setLevel('INFO')

    try:
        with threadpool_limits(limits=thread_limit()):
            return COMMANDS[args.command](args)
    except (ConfigError, FormatError) as exc:
        print("error: {}".format(exc), file=sys.stderr)
        return EXIT_USAGE
    except NumericsError as exc:
        print("numerics error: {}".format(exc), file=sys.stderr)
        return EXIT_NUMERICS
    except CoarseClusterError as exc:
        print("error: {}".format(exc), file=sys.stderr)
        return EXIT_ERROR


def main():
    sys.exit(run_cli(sys.argv[1:]))
