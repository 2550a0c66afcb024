import numpy as np
import pytest
import torch

from hspn.common.constants import IMAGE_HEIGHT, IMAGE_WIDTH, NUM_POINTS
from hspn.data.loader import SyntheticShapeDataset, resample_points


def test_resample_subset():
    points = np.arange(30, dtype=np.float32).reshape(10, 3)
    out = resample_points(points, 4, seed=0)
    assert out.shape == (4, 3)
    assert len({tuple(p) for p in out}) == 4
    assert np.array_equal(out, resample_points(points, 4, seed=0))


def test_resample_pads_with_repeats():
    points = np.arange(30, dtype=np.float32).reshape(10, 3)
    out = resample_points(points, 25, seed=1)
    assert out.shape == (25, 3)
    assert np.array_equal(out[:10], points)
    assert all(any(np.array_equal(p, q) for q in points) for p in out[10:])


def test_dataset_items(dataset_dir):
    dataset = SyntheticShapeDataset(str(dataset_dir))
    assert len(dataset) == 8
    images, partial, gt = dataset[0]
    assert images.shape == (1, IMAGE_HEIGHT, IMAGE_WIDTH)
    assert partial.shape == (NUM_POINTS, 3)
    assert gt.shape == (NUM_POINTS, 3)
    assert images.dtype == partial.dtype == gt.dtype == torch.float32
    assert torch.equal(dataset[0][1], partial)


def test_dataset_slices_and_limits(dataset_dir):
    dataset = SyntheticShapeDataset(str(dataset_dir), split='test', num_slices=5, partial_points=256)
    assert dataset.ids == ['sample-000008', 'sample-000009']
    images, partial, _ = dataset[1]
    assert images.shape == (5, IMAGE_HEIGHT, IMAGE_WIDTH)
    assert partial.shape == (256, 3)
    assert len(SyntheticShapeDataset(str(dataset_dir), max_samples=3)) == 3


def test_single_slice_is_the_centre(dataset_dir):
    one = SyntheticShapeDataset(str(dataset_dir), num_slices=1)[0][0]
    three = SyntheticShapeDataset(str(dataset_dir), num_slices=3)[0][0]
    assert torch.equal(one[0], three[1])


def test_empty_split(dataset_dir):
    with pytest.raises(ValueError):
        SyntheticShapeDataset(str(dataset_dir), split='validation')
