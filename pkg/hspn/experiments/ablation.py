import logging
import os
import re
from dataclasses import dataclass

import pandas as pd

from hspn.common.constants import REFERENCE_AGB_GRID, REFERENCE_CD, REFERENCE_POINTS, REFERENCE_SLICES, \
    VALID_SLICE_COUNTS
from hspn.experiments.evaluation import evaluate, load_pipeline, write_per_sample, write_table
from hspn.models.train import train_with_gin

MODULE_TAGS = ('full', 'no_d', 'pointoutnet_like', 'fc_decoder', 'foldingnet_like', 'topnet_like', 'no_agb_all',
               'no_agb_pipeline', 'no_agb_self')
POINT_COUNTS = (2048, 1024, 512, 256)

TABLE_GROUPS = {'predictor': ('full', 'no_d', 'pointoutnet_like'),
                'decoder': ('full', 'fc_decoder', 'foldingnet_like', 'topnet_like'),
                'agb': ('no_agb_all', 'no_agb_pipeline', 'no_agb_self', 'full')}

PREDICTOR_BINDINGS = {'no_d': ['TrainConfig.adversarial = False'],
                      'pointoutnet_like': ['Predictor.generator = @FCGenerator()']}

COMPLETION_BINDINGS = {'fc_decoder': ['CompletionNetwork.decoder = @FCDecoder()'],
                       'foldingnet_like': ['CompletionNetwork.encoder = @PointNetEncoder()',
                                           'CompletionNetwork.decoder = @FoldingDecoder()'],
                       'topnet_like': ['CompletionNetwork.encoder = @PointNetEncoder()',
                                       'CompletionNetwork.decoder = @TopNetDecoder()'],
                       'no_agb_all': ['HierarchicalDecoder.use_pipeline_agb = False',
                                      'HierarchicalDecoder.use_self_agb = False'],
                       'no_agb_pipeline': ['HierarchicalDecoder.use_pipeline_agb = False'],
                       'no_agb_self': ['HierarchicalDecoder.use_self_agb = False']}

PARAMETRIC_RE = re.compile(r'^(points|slices)_([0-9]+)$')
CHECKPOINT_RE = re.compile(r'^model_epoch([0-9]+)\.torch$')


@dataclass(frozen=True)
class AblationVariant:
    """One row of an ablation table.

    Module tags swap or remove parts of the model. `points_<n>` evaluates the full model on partial
    clouds subsampled to n points, `slices_<k>` trains and evaluates it on k centred slices.
    """
    tag: str

    def __post_init__(self):
        match = PARAMETRIC_RE.match(self.tag)
        if self.tag in MODULE_TAGS:
            return
        if match is None:
            raise ValueError('Unknown ablation tag {}, expected one of {} or points_<n> / slices_<k>'.format(
                self.tag, MODULE_TAGS))
        kind, value = match.group(1), int(match.group(2))
        if kind == 'points' and value not in POINT_COUNTS:
            raise ValueError('points_<n> needs n in {}, got {}'.format(POINT_COUNTS, value))
        if kind == 'slices' and value not in VALID_SLICE_COUNTS:
            raise ValueError('slices_<k> needs k in {}, got {}'.format(VALID_SLICE_COUNTS, value))

    @property
    def kind(self):
        match = PARAMETRIC_RE.match(self.tag)
        return match.group(1) if match else None

    @property
    def value(self):
        match = PARAMETRIC_RE.match(self.tag)
        return int(match.group(2)) if match else None

    @property
    def num_points(self):
        return self.value if self.kind == 'points' else None

    @property
    def predictor_bindings(self):
        if self.kind == 'slices':
            return ['NUM_SLICES = {}'.format(self.value)]
        return list(PREDICTOR_BINDINGS.get(self.tag, []))

    @property
    def completion_bindings(self):
        return self.predictor_bindings + list(COMPLETION_BINDINGS.get(self.tag, []))

    @property
    def reference(self):
        """Published CD (x10^-1) of the matching configuration; an annotation only."""
        if self.kind == 'points':
            return REFERENCE_POINTS.get(self.value)
        if self.kind == 'slices':
            return REFERENCE_SLICES.get(self.value)
        return REFERENCE_CD.get(self.tag)

    @property
    def agb_flags(self):
        """(pipeline AGBs, self-attention AGB) switched on."""
        return ('no_agb_all' not in self.tag and 'no_agb_pipeline' not in self.tag,
                'no_agb_all' not in self.tag and 'no_agb_self' not in self.tag)


def checkpoint_paths(log_dir):
    """(epoch, path) of every intermediate checkpoint in `log_dir`, by epoch."""
    found = []
    for name in os.listdir(log_dir):
        match = CHECKPOINT_RE.match(name)
        if match:
            found.append((int(match.group(1)), os.path.join(log_dir, name)))
    return sorted(found)


def _train_once(cache, key, command, log_dir, config_files, bindings, seed, predictor_ckpt=None):
    if key not in cache:
        logging.info('Training {} into {}'.format(command, log_dir))
        train_with_gin(command, model_dir=log_dir, overwrite=True, gin_config_files=config_files,
                       gin_bindings=bindings, seed=seed, predictor_ckpt=predictor_ckpt)
        cache[key] = log_dir
    return cache[key]


def run_ablation(variants, out_dir, data_path, predictor_configs, completion_configs, bindings=(), seed=1111,
                 split='test'):
    """Trains and evaluates every variant under one seed and one dataset.

    Variants that share a predictor (or a whole pipeline) reuse its training run. Returns one row
    per variant with a CD(x10^-1) column per checkpoint epoch and the published reference value.
    """
    variants = [v if isinstance(v, AblationVariant) else AblationVariant(v) for v in variants]
    base_bindings = list(bindings) + ["DATA_PATH = '{}'".format(data_path)]
    predictor_runs, completion_runs = {}, {}
    rows = []

    for variant in variants:
        predictor_key = tuple(variant.predictor_bindings)
        predictor_dir = _train_once(predictor_runs, predictor_key, 'predictor',
                                    os.path.join(out_dir, 'predictor', variant.tag), predictor_configs,
                                    base_bindings + list(predictor_key), seed)
        completion_key = tuple(variant.completion_bindings)
        completion_dir = _train_once(completion_runs, completion_key, 'completion',
                                     os.path.join(out_dir, 'completion', variant.tag), completion_configs,
                                     base_bindings + list(completion_key), seed,
                                     predictor_ckpt=os.path.join(predictor_dir, 'model.torch'))

        scores, approximation = {}, False
        for epoch, path in checkpoint_paths(completion_dir):
            wrapper, dataset, _ = load_pipeline(path, data_path, split=split)
            report = evaluate(wrapper, dataset, variant=variant.tag, epoch=epoch, num_points=variant.num_points,
                              seed=seed)
            write_per_sample(report, os.path.join(out_dir, '{}_epoch{}_per_sample.jsonl'.format(variant.tag,
                                                                                            epoch)))
            scores['CD(x10^-1)@{}'.format(epoch)] = report.cd_scaled
            approximation = report.approximation
        rows.append(dict(variant=variant.tag, **scores, approximation=approximation,
                         **{'reference CD(x10^-1)': variant.reference}))

    table = pd.DataFrame(rows)
    write_table(table, os.path.join(out_dir, 'ablation.csv'))
    write_grouped_tables(table, out_dir)
    return table


def write_grouped_tables(table, out_dir):
    """Splits an ablation table into the predictor, decoder and AGB comparisons it covers."""
    for group, tags in TABLE_GROUPS.items():
        rows = table[table['variant'].isin(tags)]
        if len(rows) < 2:
            continue
        rows = rows.set_index('variant').loc[[t for t in tags if t in set(rows['variant'])]].reset_index()
        if group == 'agb':
            flags = [AblationVariant(t).agb_flags for t in rows['variant']]
            rows.insert(1, 'AGB_pipeline', [f[0] for f in flags])
            rows.insert(2, 'AGB_self', [f[1] for f in flags])
            rows['reference grid'] = [' / '.join('{:.3f}'.format(v) for v in REFERENCE_AGB_GRID[t])
                                      for t in rows['variant']]
        write_table(rows, os.path.join(out_dir, 'table_{}.csv'.format(group)))


def robustness_points(wrapper, dataset, sizes=POINT_COUNTS, seed=0, epoch=None):
    """CD of the pipeline when the predicted partial cloud is subsampled to each size before completion."""
    rows = []
    for size in sizes:
        variant = AblationVariant('points_{}'.format(size))
        report = evaluate(wrapper, dataset, variant=variant.tag, epoch=epoch, num_points=size, seed=seed)
        rows.append({'points': size, 'CD(x10^-1)': report.cd_scaled, 'cd_raw': report.cd_mean,
                     'cd_std': report.cd_std, 'reference CD(x10^-1)': variant.reference})
    return pd.DataFrame(rows)


def robustness_slices(out_dir, data_path, predictor_configs, completion_configs, slices=VALID_SLICE_COUNTS,
                      bindings=(), seed=1111):
    """Trains and evaluates the full model once per number of input slices, all under one seed."""
    table = run_ablation(['slices_{}'.format(k) for k in slices], out_dir, data_path, predictor_configs,
                         completion_configs, bindings=bindings, seed=seed)
    last = [c for c in table.columns if c.startswith('CD(x10^-1)@')][-1]
    result = pd.DataFrame({'slices': list(slices),
                           'CD(x10^-1)': table[last].values,
                           'reference CD(x10^-1)': table['reference CD(x10^-1)'].values})
    write_table(result, os.path.join(out_dir, 'robustness_slices.csv'))
    return result
