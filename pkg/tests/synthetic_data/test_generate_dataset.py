import h5py
import numpy as np
import pytest

from hspn.common.datasets import Dataset
from hspn.common.errors import ContainerFormatError
from hspn.synthetic_data import generate_dataset as gd
from hspn.synthetic_data.shapes import make_sample

ARRAYS = ('image', 'gt', 'partial', 'visible_mask')


def assert_same_sample(a, b):
    for name in ARRAYS:
        assert getattr(a, name).dtype == getattr(b, name).dtype
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert (a.id, a.seed, a.split, a.occ) == (b.id, b.seed, b.split, b.occ)


def test_dataset_round_trip(tmp_path):
    samples = [make_sample(seed) for seed in range(10)]
    gd.write_dataset(samples, tmp_path / 'ds')
    loaded = gd.read_dataset(tmp_path / 'ds')
    assert len(loaded) == 10
    for a, b in zip(samples, loaded):
        assert_same_sample(a, b)


def test_read_by_split_and_ids(dataset_dir):
    assert len(gd.read_dataset(dataset_dir, split='train')) == 8
    test = gd.read_dataset(dataset_dir, split='test')
    assert [s.id for s in test] == ['sample-000008', 'sample-000009']
    assert [s.id for s in gd.read_dataset(dataset_dir, ids=['sample-000003'])] == ['sample-000003']


def test_missing_sample_names_the_id(tmp_path, dataset_dir):
    with pytest.raises(FileNotFoundError, match='sample-000042'):
        gd.read_sample(gd.sample_path(tmp_path, 'sample-000042'))
    with pytest.raises(FileNotFoundError, match='sample-123456'):
        gd.read_dataset(dataset_dir, ids=['sample-123456'])
    with pytest.raises(FileNotFoundError):
        gd.read_manifest(tmp_path)


def test_corrupted_container(tmp_path):
    path = tmp_path / 'sample-000001.h5'
    gd.write_sample(make_sample(1), path)
    with h5py.File(path, 'a') as f:
        f.attrs['format'] = 'something-else'
    with pytest.raises(ContainerFormatError):
        gd.read_sample(path)

    with h5py.File(path, 'a') as f:
        f.attrs['format'] = 'hspn-sample'
        f.attrs['version'] = 7
    with pytest.raises(ContainerFormatError):
        gd.read_sample(path)

    garbage = tmp_path / 'sample-000002.h5'
    garbage.write_bytes(b'\x00' * 64)
    with pytest.raises(ContainerFormatError):
        gd.read_sample(garbage)


def test_container_missing_array(tmp_path):
    path = tmp_path / 'sample-000001.h5'
    gd.write_sample(make_sample(1), path)
    with h5py.File(path, 'a') as f:
        del f['partial']
    with pytest.raises(ContainerFormatError):
        gd.read_sample(path)


def test_generate_dataset(tmp_path):
    manifest = gd.generate_dataset(tmp_path / 'ds', 3, seed=5)
    assert manifest['id'].tolist() == ['sample-000005', 'sample-000006', 'sample-000007']
    assert set(manifest.columns) == {'id', 'seed', 'split', 'occlusion'}
    assert [p.name for p in Dataset(tmp_path / 'ds').list_parts()] == ['sample-000005.h5', 'sample-000006.h5',
                                                                       'sample-000007.h5']
    assert gd.read_manifest(tmp_path / 'ds')['id'].tolist() == manifest['id'].tolist()


def test_generation_is_reproducible(tmp_path):
    gd.generate_dataset(tmp_path / 'a', 2, seed=11)
    gd.generate_dataset(tmp_path / 'b', 2, seed=11, workers=2)
    for a, b in zip(gd.read_dataset(tmp_path / 'a'), gd.read_dataset(tmp_path / 'b')):
        assert_same_sample(a, b)


def test_existing_dataset_is_kept(tmp_path):
    gd.generate_dataset(tmp_path / 'ds', 2, seed=0)
    marker = tmp_path / 'ds' / 'keep'
    marker.touch()
    gd.generate_dataset(tmp_path / 'ds', 4, seed=0)
    assert marker.exists()
    assert len(gd.read_manifest(tmp_path / 'ds')) == 2

    gd.generate_dataset(tmp_path / 'ds', 4, seed=0, overwrite=True)
    assert not marker.exists()
    assert len(gd.read_manifest(tmp_path / 'ds')) == 4


def test_write_dataset_refuses_non_empty_directory(tmp_path):
    gd.write_dataset([make_sample(0)], tmp_path / 'ds')
    with pytest.raises(FileExistsError):
        gd.write_dataset([make_sample(1)], tmp_path / 'ds')
    assert gd.read_manifest(tmp_path / 'ds')['id'].tolist() == ['sample-000000']

    gd.write_dataset([make_sample(1)], tmp_path / 'ds', force=True)
    assert gd.read_manifest(tmp_path / 'ds')['id'].tolist() == ['sample-000001']


def test_read_dataset_needs_every_sample_file(tmp_path):
    gd.write_dataset([make_sample(seed) for seed in range(3)], tmp_path / 'ds')
    (tmp_path / 'ds' / 'samples' / 'sample-000001.h5').unlink()
    with pytest.raises(FileNotFoundError, match='sample-000001'):
        gd.read_dataset(tmp_path / 'ds')
    assert [s.id for s in gd.read_dataset(tmp_path / 'ds', ids=['sample-000002'])] == ['sample-000002']
