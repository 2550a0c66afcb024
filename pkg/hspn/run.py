# -*- coding: utf-8 -*-
import argparse
import logging
import os
import sys
from pathlib import Path

import torch

from hspn.common.constants import VALID_SLICE_COUNTS
from hspn.experiments.ablation import MODULE_TAGS, POINT_COUNTS, robustness_points, robustness_slices, \
    run_ablation
from hspn.experiments.classification import classify_experiment, generate_clouds
from hspn.experiments.evaluation import evaluate, load_pipeline, write_report, write_table
from hspn.experiments.heatmap import export_heatmap
from hspn.models.train import train_with_gin
from hspn.models.utils import get_bindings_and_params
from hspn.synthetic_data.generate_dataset import generate_dataset

default_seed = 1111
DEFAULT_PREDICTOR_CONFIG = 'configs/predictor.gin'
DEFAULT_COMPLETION_CONFIG = 'configs/completion.gin'


class UsageErrorParser(argparse.ArgumentParser):
    """Reports usage errors as a single `hspn-error:` line, like every other failure of the CLI."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, 'hspn-error: UsageError: {}\n'.format(' '.join(message.split())))


def build_parser():
    parser = UsageErrorParser(
        description='Hierarchical shape perception: image slices to completed brain-like point clouds')

    parent_parser = UsageErrorParser(add_help=False)
    common = parent_parser.add_argument_group('Common arguments')
    common.add_argument('-c', '--config', default=None, dest="config", nargs='+', type=str,
                        help="Path to the gin config file(s).")
    common.add_argument('-b', '--binding', default=None, dest="binding", nargs='+', type=str,
                        help="Extra gin bindings, e.g. 'TrainConfig.n_critic = 1'.")
    common.add_argument('-sd', '--seed', default=default_seed, dest="seed", type=int,
                        help="Random seed at training and evaluation, default : 1111")
    common.add_argument('-l', '--out-dir', dest="out_dir", required=True, type=str,
                        help="Path to the output directory.")
    common.add_argument('--ckpt', dest="ckpt", default=None, type=str,
                        help="Checkpoint the command starts from or evaluates.")
    common.add_argument('--data-path', dest="data_path", default=None, type=str,
                        help="Path to a dataset directory written by datagen.")
    common.add_argument('--epochs', dest="epochs", default=None, type=int,
                        help="Number of training epochs.")
    common.add_argument('-bs', '--batch-size', dest="batch_size", default=None, type=int,
                        help="Batchsize for the model")
    common.add_argument('-lr', '--learning-rate', dest="lr", default=None, type=float,
                        help="Learning rate for the model")
    common.add_argument('--max-samples', dest="max_samples", default=None, type=int,
                        help="Use only the first samples of every split.")
    common.add_argument('-o', '--overwrite', dest="overwrite", action='store_true',
                        help="Overwrite a previous model in the output directory.")
    common.add_argument('--reproducible', default='True', dest="reproducible", type=str,
                        help="Whether to configure torch to be reproducible.")

    subparsers = parser.add_subparsers(title='Commands', dest='command', required=True)

    parser_datagen = subparsers.add_parser('datagen', help='Generate a synthetic dataset.', parents=[parent_parser])
    parser_datagen.add_argument('--num-samples', dest="num_samples", default=200, type=int)
    parser_datagen.add_argument('-nw', '--nr-workers', dest="nr_workers", default=1, type=int,
                                help='Number of process to use at generation, Default to 1')

    subparsers.add_parser('train-predictor', help='Train the image to partial cloud predictor.',
                          parents=[parent_parser])
    subparsers.add_parser('train-completion', help='Train the completion network on a frozen predictor.',
                          parents=[parent_parser])

    parser_eval = subparsers.add_parser('eval', help='Evaluate a completion checkpoint.', parents=[parent_parser])
    parser_eval.add_argument('--variant', default='full', type=str)
    parser_eval.add_argument('--split', default='test', type=str)

    parser_ablate = subparsers.add_parser('ablate', help='Train and compare ablation variants.',
                                          parents=[parent_parser])
    parser_ablate.add_argument('--variants', default=list(MODULE_TAGS), nargs='+', type=str)
    parser_ablate.add_argument('--predictor-config', dest="predictor_config", nargs='+',
                               default=[DEFAULT_PREDICTOR_CONFIG], type=str)
    parser_ablate.add_argument('--completion-config', dest="completion_config", nargs='+',
                               default=[DEFAULT_COMPLETION_CONFIG], type=str)

    parser_points = subparsers.add_parser('robust-points', help='CD against the partial cloud size.',
                                          parents=[parent_parser])
    parser_points.add_argument('--sizes', default=list(POINT_COUNTS), nargs='+', type=int)

    parser_slices = subparsers.add_parser('robust-slices', help='CD against the number of input slices.',
                                          parents=[parent_parser])
    parser_slices.add_argument('--slices', default=list(VALID_SLICE_COUNTS), nargs='+', type=int)
    parser_slices.add_argument('--predictor-config', dest="predictor_config", nargs='+',
                               default=[DEFAULT_PREDICTOR_CONFIG], type=str)
    parser_slices.add_argument('--completion-config', dest="completion_config", nargs='+',
                               default=[DEFAULT_COMPLETION_CONFIG], type=str)

    parser_classify = subparsers.add_parser('classify', help='Score generations with a real/generated classifier.',
                                            parents=[parent_parser])
    parser_classify.add_argument('--variant-ckpt', dest="variant_ckpt", nargs='+', required=True, type=str,
                                 help="tag=path pairs of completion checkpoints to score.")
    parser_classify.add_argument('--false-ckpt', dest="false_ckpt", nargs='+', required=True, type=str,
                                 help="tag=path pairs of half-trained checkpoints, one per variant, whose "
                                      "generations are the false examples.")

    parser_heatmap = subparsers.add_parser('heatmap', help='Export an error-coloured PLY of one sample.',
                                           parents=[parent_parser])
    parser_heatmap.add_argument('--sample-id', dest="sample_id", default=None, type=str)
    return parser


def require(args, *names):
    missing = ['--' + name.replace('_', '-') for name in names if getattr(args, name) is None]
    if missing:
        raise ValueError('Command {} needs {}'.format(args.command, ', '.join(missing)))


def parse_variant_ckpts(pairs):
    ckpts = {}
    for pair in pairs:
        tag, sep, path = pair.partition('=')
        if not sep or not tag or not path:
            raise ValueError('Expected tag=path, got {}'.format(pair))
        ckpts[tag] = path
    return ckpts


def run_command(args):
    reproducible = str(args.reproducible) == 'True'
    gin_bindings, log_dir = get_bindings_and_params(args)
    extra_configs = args.config or []

    if args.command == 'datagen':
        generate_dataset(Path(log_dir), args.num_samples, seed=args.seed, workers=args.nr_workers,
                         overwrite=args.overwrite)

    elif args.command in ('train-predictor', 'train-completion'):
        require(args, 'config')
        phase = 'predictor' if args.command == 'train-predictor' else 'completion'
        train_with_gin(phase, model_dir=log_dir, overwrite=args.overwrite, gin_config_files=args.config,
                       gin_bindings=gin_bindings, seed=args.seed, reproducible=reproducible,
                       predictor_ckpt=args.ckpt)

    elif args.command == 'eval':
        require(args, 'ckpt', 'data_path')
        wrapper, dataset, epoch = load_pipeline(args.ckpt, args.data_path, split=args.split,
                                                config_files=args.config, bindings=gin_bindings)
        report = evaluate(wrapper, dataset, variant=args.variant, epoch=epoch, seed=args.seed)
        write_report(report, log_dir)

    elif args.command == 'ablate':
        require(args, 'data_path')
        run_ablation(args.variants, log_dir, args.data_path, args.predictor_config + extra_configs,
                     args.completion_config + extra_configs, bindings=gin_bindings, seed=args.seed)

    elif args.command == 'robust-points':
        require(args, 'ckpt', 'data_path')
        wrapper, dataset, epoch = load_pipeline(args.ckpt, args.data_path, config_files=args.config,
                                                bindings=gin_bindings)
        os.makedirs(log_dir, exist_ok=True)
        write_table(robustness_points(wrapper, dataset, sizes=args.sizes, seed=args.seed, epoch=epoch),
                    os.path.join(log_dir, 'robustness_points.csv'))

    elif args.command == 'robust-slices':
        require(args, 'data_path')
        robustness_slices(log_dir, args.data_path, args.predictor_config + extra_configs,
                          args.completion_config + extra_configs, slices=args.slices, bindings=gin_bindings,
                          seed=args.seed)

    elif args.command == 'classify':
        require(args, 'data_path')
        variant_ckpts = parse_variant_ckpts(args.variant_ckpt)
        false_ckpts = parse_variant_ckpts(args.false_ckpt)
        if set(false_ckpts) != set(variant_ckpts):
            raise ValueError('Every scored variant needs one --false-ckpt, got {} for {}'.format(
                sorted(false_ckpts), sorted(variant_ckpts)))
        true_clouds, false_clouds, generations = None, {}, {}
        for tag, ckpt in variant_ckpts.items():
            false_wrapper, train_set, _ = load_pipeline(false_ckpts[tag], args.data_path, split='train',
                                                        config_files=args.config, bindings=gin_bindings)
            if true_clouds is None:
                true_clouds = torch.stack([train_set[i][2] for i in range(len(train_set))])
            false_clouds[tag] = generate_clouds(false_wrapper, train_set)
            wrapper, test_set, _ = load_pipeline(ckpt, args.data_path, config_files=args.config,
                                                 bindings=gin_bindings)
            generations[tag] = generate_clouds(wrapper, test_set)
        table = classify_experiment(true_clouds, false_clouds, generations, seed=args.seed)
        os.makedirs(log_dir, exist_ok=True)
        write_table(table, os.path.join(log_dir, 'classification.csv'))

    elif args.command == 'heatmap':
        require(args, 'ckpt', 'data_path')
        wrapper, dataset, _ = load_pipeline(args.ckpt, args.data_path, config_files=args.config,
                                            bindings=gin_bindings)
        sample_id = args.sample_id or dataset.ids[0]
        if sample_id not in dataset.ids:
            raise FileNotFoundError('Sample id {} not in the evaluated split'.format(sample_id))
        images, _, gt = dataset[dataset.ids.index(sample_id)]
        _, completed = wrapper.complete(images.unsqueeze(0))
        os.makedirs(log_dir, exist_ok=True)
        export_heatmap(completed[0].cpu().numpy(), gt.numpy(), os.path.join(log_dir, '{}.ply'.format(sample_id)))


def main(my_args=tuple(sys.argv[1:])):
    args = build_parser().parse_args(my_args)

    log_fmt = '%(asctime)s - %(levelname)s: %(message)s'
    logging.basicConfig(format=log_fmt)
    logging.getLogger().setLevel(logging.INFO)

    try:
        run_command(args)
    except Exception as e:
        logging.exception(e)
        message = ' '.join(str(e).split())
        sys.stderr.write('hspn-error: {}: {}\n'.format(type(e).__name__, message))
        sys.exit(1)

if __name__ == '__main__':
    main()
