import pandas as pd
import pytest

from hspn.common.constants import REFERENCE_CD, REFERENCE_SLICES
from hspn.experiments.ablation import MODULE_TAGS, AblationVariant, checkpoint_paths, robustness_slices, \
    run_ablation, write_grouped_tables
from tests.conftest import CONFIGS, TINY_CONFIG


@pytest.mark.parametrize("tag", MODULE_TAGS + ('points_2048', 'points_256', 'slices_1', 'slices_7'))
def test_known_tags(tag):
    assert AblationVariant(tag).tag == tag


@pytest.mark.parametrize("tag", ['baseline', 'points_100', 'slices_2', 'slices_', 'points_-1', 'FULL'])
def test_unknown_tags(tag):
    with pytest.raises(ValueError):
        AblationVariant(tag)


def test_parametric_variants():
    points = AblationVariant('points_512')
    assert (points.kind, points.value, points.num_points) == ('points', 512, 512)
    assert points.predictor_bindings == []
    assert points.reference == 4.836

    slices = AblationVariant('slices_5')
    assert slices.num_points is None
    assert slices.predictor_bindings == ['NUM_SLICES = 5']
    assert slices.completion_bindings == ['NUM_SLICES = 5']
    assert slices.reference == 4.285


def test_module_variants():
    assert AblationVariant('full').predictor_bindings == []
    assert AblationVariant('no_d').predictor_bindings == ['TrainConfig.adversarial = False']
    assert 'CompletionNetwork.decoder = @FoldingDecoder()' in AblationVariant('foldingnet_like').completion_bindings
    assert AblationVariant('no_agb_pipeline').agb_flags == (False, True)
    assert AblationVariant('no_agb_self').agb_flags == (True, False)
    assert AblationVariant('no_agb_all').agb_flags == (False, False)
    assert AblationVariant('full').agb_flags == (True, True)
    assert AblationVariant('pointoutnet_like').reference == REFERENCE_CD['pointoutnet_like']


def test_checkpoint_paths(tmp_path):
    for name in ('model_epoch10.torch', 'model_epoch2.torch', 'model.torch', 'curves.csv'):
        (tmp_path / name).touch()
    assert [epoch for epoch, _ in checkpoint_paths(str(tmp_path))] == [2, 10]


def test_grouped_tables(tmp_path):
    table = pd.DataFrame({'variant': ['full', 'no_d', 'no_agb_all', 'no_agb_self'],
                          'CD(x10^-1)@1': [1.0, 2.0, 3.0, 4.0],
                          'reference CD(x10^-1)': [REFERENCE_CD[t] for t in ('full', 'no_d', 'no_agb_all',
                                                                               'no_agb_self')]})
    write_grouped_tables(table, str(tmp_path))

    predictor = pd.read_csv(tmp_path / 'table_predictor.csv')
    assert predictor['variant'].tolist() == ['full', 'no_d']
    agb = pd.read_csv(tmp_path / 'table_agb.csv')
    assert agb['variant'].tolist() == ['no_agb_all', 'no_agb_self', 'full']
    assert agb['AGB_pipeline'].tolist() == [False, True, True]
    assert agb['AGB_self'].tolist() == [False, False, True]
    assert agb['reference grid'][2] == '4.741 / 4.406 / 4.461'
    assert not (tmp_path / 'table_decoder.csv').exists()


def test_run_ablation_smoke(tmp_path, dataset_dir):
    table = run_ablation(['full', 'no_agb_self'], str(tmp_path), str(dataset_dir),
                         [str(CONFIGS / 'predictor.gin'), str(TINY_CONFIG)],
                         [str(CONFIGS / 'completion.gin'), str(TINY_CONFIG)], bindings=['EPOCHS = 1'])

    assert table['variant'].tolist() == ['full', 'no_agb_self']
    assert list(table.columns) == ['variant', 'CD(x10^-1)@1', 'approximation', 'reference CD(x10^-1)']
    assert table['reference CD(x10^-1)'].tolist() == [4.461, 5.178]
    assert (table['CD(x10^-1)@1'] > 0).all()
    assert (tmp_path / 'ablation.csv').exists()
    assert (tmp_path / 'table_agb.csv').exists()
    assert (tmp_path / 'full_epoch1_per_sample.jsonl').exists()
    # both variants share one predictor run
    assert (tmp_path / 'predictor' / 'full').is_dir()
    assert not (tmp_path / 'predictor' / 'no_agb_self').exists()


STAND_INS = ('pointoutnet_like', 'fc_decoder', 'foldingnet_like', 'topnet_like')


@pytest.mark.parametrize("tag", MODULE_TAGS)
def test_run_ablation_every_variant(tag, tmp_path, dataset_dir):
    table = run_ablation([tag], str(tmp_path), str(dataset_dir),
                         [str(CONFIGS / 'predictor.gin'), str(TINY_CONFIG)],
                         [str(CONFIGS / 'completion.gin'), str(TINY_CONFIG)], bindings=['EPOCHS = 1'])

    assert table['variant'].tolist() == [tag]
    assert table['CD(x10^-1)@1'][0] > 0
    assert bool(table['approximation'][0]) == (tag in STAND_INS)
    assert table['reference CD(x10^-1)'][0] == REFERENCE_CD[tag]
    assert (tmp_path / 'completion' / tag / 'model.torch').exists()


def test_robustness_slices(tmp_path, dataset_dir):
    table = robustness_slices(str(tmp_path), str(dataset_dir), [str(CONFIGS / 'predictor.gin'), str(TINY_CONFIG)],
                              [str(CONFIGS / 'completion.gin'), str(TINY_CONFIG)], slices=(1, 3),
                              bindings=['EPOCHS = 1'])

    assert table['slices'].tolist() == [1, 3]
    assert table['reference CD(x10^-1)'].tolist() == [REFERENCE_SLICES[1], REFERENCE_SLICES[3]]
    assert (table['CD(x10^-1)'] > 0).all()
    assert (tmp_path / 'robustness_slices.csv').exists()
    # one predictor run per slice count
    assert (tmp_path / 'predictor' / 'slices_1').is_dir()
    assert (tmp_path / 'predictor' / 'slices_3').is_dir()
