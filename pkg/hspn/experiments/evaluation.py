import logging
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import List, Optional

import gin
import numpy as np
import pandas as pd
import torch

from hspn.common.constants import CD_REPORT_SCALE, EMD_ORACLE_LIMIT, FLOAT_FORMAT
from hspn.data.loader import SyntheticShapeDataset
from hspn.geometry.distances import emd_exact
from hspn.models.metrics import Chamfer, PCToPCError
from hspn.models.train import TrainConfig  # noqa: F401, registers the training configurables with gin
from hspn.models.wrappers import CompletionWrapper


@dataclass
class MetricReport:
    """Per-sample metrics of one evaluated model and their aggregates.

    `cd` holds raw chamfer values; `cd_scaled` reports them in units of 1e-1.
    """
    variant: str
    ids: List[str]
    cd: np.ndarray
    pc_error: np.ndarray
    emd: np.ndarray
    epoch: Optional[int] = None
    approximation: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def cd_mean(self):
        return float(np.mean(self.cd))

    @property
    def cd_std(self):
        return float(np.std(self.cd))

    @property
    def cd_scaled(self):
        return self.cd_mean * CD_REPORT_SCALE

    def per_sample_frame(self):
        return pd.DataFrame({'id': self.ids,
                             'cd': self.cd,
                             'cd_x10': self.cd * CD_REPORT_SCALE,
                             'pc_error': self.pc_error,
                             'emd': self.emd})

    def summary(self):
        row = {'variant': self.variant,
               'CD(x10^-1)': self.cd_scaled,
               'epoch': self.epoch,
               'cd_raw': self.cd_mean,
               'cd_std': self.cd_std,
               'pc_error': float(np.mean(self.pc_error)),
               'emd': float(np.mean(self.emd)),
               'approximation': self.approximation}
        row.update(self.extra)
        return row


def subsampled_emd(pred, gt, seed, limit=EMD_ORACLE_LIMIT):
    """Exact EMD on an equal-size random subsample of at most `limit` points of both clouds."""
    pred, gt = np.asarray(pred), np.asarray(gt)
    rng = np.random.default_rng(seed)
    size = min(len(pred), len(gt), limit)
    pred_idx = np.sort(rng.choice(len(pred), size, replace=False))
    gt_idx = pred_idx if len(gt) == len(pred) else np.sort(rng.choice(len(gt), size, replace=False))
    return emd_exact(pred[pred_idx], gt[gt_idx]).cost


def evaluate_predictions(preds, gts, ids, variant='full', epoch=None, approximation=False, seed=0):
    """Scores already computed predictions against their ground truth, sample by sample."""
    if len(preds) != len(gts) or len(preds) != len(ids):
        raise ValueError('Got {} predictions, {} ground truths and {} ids'.format(len(preds), len(gts), len(ids)))
    chamfer_metric, error_metric = Chamfer(), PCToPCError()
    emd = []
    for i, (pred, gt) in enumerate(zip(preds, gts)):
        pred, gt = torch.as_tensor(pred).double(), torch.as_tensor(gt).double()
        chamfer_metric.update((pred.unsqueeze(0), gt.unsqueeze(0)))
        error_metric.update((pred.unsqueeze(0), gt.unsqueeze(0)))
        emd.append(subsampled_emd(pred, gt, seed + i))
    return MetricReport(variant=variant, ids=list(ids), cd=np.asarray(chamfer_metric.values),
                        pc_error=np.asarray(error_metric.values), emd=np.asarray(emd), epoch=epoch,
                        approximation=approximation)


def evaluate(wrapper: CompletionWrapper, dataset, variant='full', epoch=None, num_points=None, seed=0,
             batch_size=8):
    """Runs the pipeline on every sample of `dataset` and scores the completed clouds against gt.

    With `num_points` the predicted partial clouds are subsampled to that size before completion.
    """
    generator = torch.Generator().manual_seed(seed)
    preds, gts = [], []
    for images, _, gt in wrapper.make_loader(dataset, batch_size, seed, shuffle=False):
        preds.extend(wrapper.complete(images, num_points=num_points, generator=generator)[1].cpu())
        gts.extend(gt)
    report = evaluate_predictions(preds, gts, dataset.ids, variant=variant, epoch=epoch,
                                  approximation=wrapper.approximation, seed=seed)
    logging.info('{} epoch {}: CD(x10^-1) {:.4f}, raw {:.6f} +- {:.6f}'.format(
        variant, epoch, report.cd_scaled, report.cd_mean, report.cd_std))
    return report


def write_table(df, path):
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def write_per_sample(report: MetricReport, path):
    report.per_sample_frame().to_json(path, orient='records', lines=True, double_precision=6)


def write_report(report: MetricReport, out_dir, name='eval'):
    os.makedirs(out_dir, exist_ok=True)
    write_table(pd.DataFrame([report.summary()]), os.path.join(out_dir, '{}.csv'.format(name)))
    write_per_sample(report, os.path.join(out_dir, '{}_per_sample.jsonl'.format(name)))


@contextmanager
def gin_scope(config_files=None, bindings=None):
    gin.parse_config_files_and_bindings(config_files or [], bindings or [])
    try:
        yield
    finally:
        gin.clear_config()


def operative_config_of(ckpt):
    return os.path.join(os.path.dirname(os.path.abspath(ckpt)), 'train_config.gin')


def load_pipeline(ckpt, data_path, split='test', config_files=None, bindings=None):
    """Rebuilds the completion pipeline of a checkpoint and the dataset split it is evaluated on.

    Without `config_files` the operative config written next to the checkpoint is used.
    """
    if not os.path.isfile(ckpt):
        raise FileNotFoundError('No checkpoint at {}'.format(ckpt))
    config_files = config_files or [operative_config_of(ckpt)]
    with gin_scope(config_files, bindings):
        wrapper = CompletionWrapper()
        state = wrapper.load_weights(ckpt)
        dataset = SyntheticShapeDataset(data_path, split=split)
    return wrapper, dataset, state['epoch']
