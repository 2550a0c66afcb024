#!/usr/bin/env python
# coding: utf-8

import argparse
import functools
import json
import logging
from pathlib import Path

import h5py
import numpy as np
import pandas as pd

from hspn.common.constants import MANIFEST_NAME, MAX_SLICES, SAMPLE_FORMAT, SAMPLE_VERSION
from hspn.common.datasets import Dataset
from hspn.common.errors import ContainerFormatError
from hspn.common.processing import exec_parallel_on_parts
from hspn.synthetic_data.shapes import OcclusionSpec, SyntheticSample, make_sample, sample_id

ARRAY_FIELDS = ('image', 'gt', 'partial', 'visible_mask')


def sample_path(directory, sid):
    return Dataset(directory).samples_path / '{}.h5'.format(sid)


def write_sample(sample: SyntheticSample, path):
    with h5py.File(path, 'w') as f:
        f.attrs['format'] = SAMPLE_FORMAT
        f.attrs['version'] = SAMPLE_VERSION
        f.attrs['id'] = sample.id
        f.attrs['seed'] = sample.seed
        f.attrs['split'] = sample.split
        f.attrs['occlusion'] = json.dumps(sample.occ.to_dict())
        f.create_dataset('image', data=sample.image.astype(np.float32))
        f.create_dataset('gt', data=sample.gt.astype(np.float32))
        f.create_dataset('partial', data=sample.partial.astype(np.float32))
        f.create_dataset('visible_mask', data=sample.visible_mask.astype(bool))


def read_sample(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError('No sample file for id {} at {}'.format(path.stem, path))
    try:
        with h5py.File(path, 'r') as f:
            if f.attrs.get('format') != SAMPLE_FORMAT:
                raise ContainerFormatError('{} is not a {} container'.format(path, SAMPLE_FORMAT))
            if int(f.attrs.get('version', -1)) != SAMPLE_VERSION:
                raise ContainerFormatError('{} has unsupported version {}'.format(path, f.attrs.get('version')))
            missing = [name for name in ARRAY_FIELDS if name not in f]
            if missing:
                raise ContainerFormatError('{} lacks arrays {}'.format(path, missing))
            arrays = {name: f[name][()] for name in ARRAY_FIELDS}
            return SyntheticSample(id=str(f.attrs['id']), seed=int(f.attrs['seed']), split=str(f.attrs['split']),
                                   occ=OcclusionSpec.from_dict(json.loads(f.attrs['occlusion'])), **arrays)
    except (OSError, KeyError, json.JSONDecodeError) as e:
        raise ContainerFormatError('Cannot parse sample container {}: {}'.format(path, e)) from e


def manifest_frame(samples):
    return pd.DataFrame([{'id': s.id, 'seed': s.seed, 'split': s.split, 'occlusion': s.occ.to_dict()}
                         for s in samples])


def write_manifest(df, directory):
    df.to_json(Path(directory) / MANIFEST_NAME, orient='records', lines=True)


def read_manifest(directory):
    path = Path(directory) / MANIFEST_NAME
    if not path.exists():
        raise FileNotFoundError('No manifest at {}'.format(path))
    return pd.read_json(path, orient='records', lines=True, dtype={'id': str})


def write_dataset(samples, directory, force=False):
    """Writes `samples` into `directory`; a non-empty directory is only replaced with `force`."""
    ds = Dataset(directory, force=force)
    ds.prepare()
    for sample in samples:
        write_sample(sample, sample_path(directory, sample.id))
    write_manifest(manifest_frame(samples), directory)
    ds.mark_done()


def read_dataset(directory, split=None, ids=None):
    """Reads the samples of a dataset directory in manifest order, optionally restricted to a split or ids."""
    manifest = read_manifest(directory)
    if split is not None:
        manifest = manifest[manifest['split'] == split]
    if ids is not None:
        manifest = manifest[manifest['id'].isin(list(ids))]
        missing = set(ids) - set(manifest['id'])
        if missing:
            raise FileNotFoundError('Sample ids not in manifest: {}'.format(sorted(missing)))
    parts = Dataset(directory).parts_by_id()
    unlisted = [sid for sid in manifest['id'] if sid not in parts]
    if unlisted:
        raise FileNotFoundError('No sample file for ids {} in {}'.format(unlisted, directory))
    return [read_sample(parts[sid]) for sid in manifest['id']]


def _generate_and_write(seed, directory, num_slices):
    sample = make_sample(seed, num_slices=num_slices)
    write_sample(sample, sample_path(directory, sample.id))
    return {'id': sample.id, 'seed': sample.seed, 'split': sample.split, 'occlusion': sample.occ.to_dict()}


def generate_dataset(directory, num_samples, seed=0, workers=1, num_slices=MAX_SLICES, overwrite=False):
    """Generates `num_samples` samples with seeds seed, seed + 1, ... into `directory`."""
    ds = Dataset(directory, force=overwrite)
    if ds.is_done() and not overwrite:
        logging.info('Skipping generation, as a dataset seems to exist in {}'.format(directory))
        return read_manifest(directory)

    logging.info('Generating {} synthetic samples in {}'.format(num_samples, directory))
    ds.prepare()
    seeds = [seed + i for i in range(num_samples)]
    rows = exec_parallel_on_parts(functools.partial(_generate_and_write, directory=directory,
                                                    num_slices=num_slices), seeds, workers)
    manifest = pd.DataFrame(rows)
    write_manifest(manifest, directory)
    ds.mark_done()
    logging.info('{} train / {} test samples written'.format((manifest['split'] == 'train').sum(),
                                                            (manifest['split'] == 'test').sum()))
    return manifest


def get_parser():
    parser = argparse.ArgumentParser(description='Generate a synthetic dataset of occluded brain-like shapes')
    parser.add_argument('output_dir', type=Path)
    parser.add_argument('--num-samples', type=int, default=200)
    parser.add_argument('--seed', type=int, default=0)
    parser.add_argument('--workers', type=int, default=1)
    parser.add_argument('--force', action='store_true', help='Replace a non-empty output directory')
    return parser


def main():
    args = get_parser().parse_args()
    logging.basicConfig(format='%(asctime)s - %(levelname)s: %(message)s', level=logging.INFO)
    generate_dataset(args.output_dir, args.num_samples, seed=args.seed, workers=args.workers,
                     overwrite=args.force)


if __name__ == '__main__':
    main()
