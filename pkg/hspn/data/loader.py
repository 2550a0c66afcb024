import logging

import gin
import numpy as np
import torch
from torch.utils.data import Dataset

from hspn.common.constants import NUM_POINTS
from hspn.synthetic_data.generate_dataset import read_dataset


def resample_points(points, size, seed):
    """Deterministic resampling to `size` points: a subset when large enough, otherwise all points plus repeats."""
    rng = np.random.default_rng([seed, 3])
    n = len(points)
    if n >= size:
        idx = np.sort(rng.choice(n, size, replace=False))
    else:
        idx = np.concatenate([np.arange(n), rng.choice(n, size - n, replace=True)])
    return points[idx]


@gin.configurable('SyntheticShapeDataset')
class SyntheticShapeDataset(Dataset):
    """torch.Dataset over a synthetic dataset directory, held in RAM."""

    def __init__(self, source_path, split='train', num_slices=1, partial_points=NUM_POINTS, max_samples=None,
                 samples=None):
        """
        Args:
            source_path (string): Path to the dataset directory.
            split (string): Either 'train' or 'test', None for every sample.
            num_slices (int): Number of centred slices fed to the image encoder.
            partial_points (int): Size the partial clouds are resampled to.
            max_samples (int): Keep only the first samples of the split.
            samples (list): Already loaded samples, bypasses the directory.
        """
        if samples is None:
            samples = read_dataset(source_path, split=split)
        if max_samples is not None:
            samples = samples[:max_samples]
        if not samples:
            raise ValueError('No {} samples found in {}'.format(split, source_path))
        self.samples = samples
        self.split = split
        self.num_slices = num_slices
        self.partial_points = partial_points
        logging.info('Loaded {} {} samples'.format(len(samples), split))

    @property
    def ids(self):
        return [s.id for s in self.samples]

    def __len__(self):
        return len(self.samples)

    def __getitem__(self, idx):
        sample = self.samples[idx]
        images = torch.from_numpy(np.ascontiguousarray(sample.slices(self.num_slices)))
        partial = torch.from_numpy(resample_points(sample.partial, self.partial_points, sample.seed))
        return images, partial, torch.from_numpy(sample.gt)
