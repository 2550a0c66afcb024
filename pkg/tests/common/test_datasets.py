import logging

import pytest

from hspn.common.datasets import Dataset
from hspn.common.processing import exec_parallel_on_parts


def test_dataset_marks_completion(tmp_path):
    ds = Dataset(tmp_path / 'ds')
    ds.prepare()
    assert ds.samples_path.is_dir()
    assert not ds.is_done()
    ds.mark_done()
    assert ds.is_done()


def test_prepare_refuses_non_empty_directory(tmp_path):
    ds = Dataset(tmp_path / 'ds')
    ds.prepare()
    (ds.samples_path / 'sample-1.h5').touch()
    with pytest.raises(FileExistsError, match='not empty'):
        Dataset(tmp_path / 'ds').prepare()
    assert (ds.samples_path / 'sample-1.h5').exists()


def test_prepare_with_force_clears(tmp_path, caplog):
    ds = Dataset(tmp_path / 'ds')
    ds.prepare()
    (ds.samples_path / 'sample-1.h5').touch()
    with caplog.at_level(logging.WARNING):
        Dataset(tmp_path / 'ds', force=True).prepare()
    assert not (ds.samples_path / 'sample-1.h5').exists()
    assert ds.samples_path.is_dir()
    assert 'Removing existing dataset directory' in caplog.text


def test_prepare_accepts_empty_directory(tmp_path):
    (tmp_path / 'ds').mkdir()
    Dataset(tmp_path / 'ds').prepare()
    assert Dataset(tmp_path / 'ds').samples_path.is_dir()


def test_list_parts_is_numerically_sorted(tmp_path):
    ds = Dataset(tmp_path / 'ds')
    ds.prepare()
    for name in ('sample-10.h5', 'sample-2.h5', 'sample-1.h5', 'manifest.txt'):
        (ds.samples_path / name).touch()
    assert [p.name for p in ds.list_parts()] == ['sample-1.h5', 'sample-2.h5', 'sample-10.h5']


def test_list_parts_needs_directory(tmp_path):
    with pytest.raises(FileNotFoundError):
        Dataset(tmp_path / 'missing').list_parts()


@pytest.mark.parametrize("workers", [1, 2])
def test_exec_parallel_keeps_order(workers):
    assert exec_parallel_on_parts(lambda x: x * x, [3, 1, 2], workers) == [9, 1, 4]
