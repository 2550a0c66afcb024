import gin
import numpy as np
import pytest
import torch

from hspn.experiments.classification import _holdout_split, classifier_auc, classify_experiment, generate_clouds, \
    train_classifier, true_scores
from hspn.experiments.evaluation import load_pipeline
from hspn.models.encoders import HierarchicalEncoder, PointNet2Classifier
from tests.conftest import TINY_LEVELS


def tiny_classifier():
    torch.manual_seed(0)
    return PointNet2Classifier(encoder=HierarchicalEncoder(levels=TINY_LEVELS, global_mlp=(32, 32)), hidden=8)


def noisy_clouds(count, seed):
    generator = torch.Generator().manual_seed(seed)
    return torch.rand(count, 512, 3, generator=generator) * 2 - 1


def sphere_clouds(count, seed):
    generator = torch.Generator().manual_seed(seed)
    points = torch.randn(count, 512, 3, generator=generator)
    return points / points.norm(dim=-1, keepdim=True)


def test_zero_head_scores_one_half():
    classifier = tiny_classifier()
    torch.nn.init.zeros_(classifier.logit[-1].weight)
    torch.nn.init.zeros_(classifier.logit[-1].bias)
    assert torch.all(true_scores(classifier, noisy_clouds(3, 0)) == 0.5)


def test_holdout_split():
    train, hold = _holdout_split(8, 0.25, np.random.default_rng(0))
    assert len(train) == 6 and len(hold) == 2
    assert sorted(np.concatenate([train, hold]).tolist()) == list(range(8))
    assert len(_holdout_split(1, 0.25, np.random.default_rng(0))[1]) == 0


def test_classify_experiment_contract():
    gin.bind_parameter('train_classifier.epochs', 1)
    table = classify_experiment(sphere_clouds(8, 0), {'full': noisy_clouds(8, 1), 'no_d': noisy_clouds(4, 4)},
                                {'full': sphere_clouds(3, 2), 'no_d': noisy_clouds(3, 3)},
                                classifier=tiny_classifier(), batch_size=4)
    assert table['variant'].tolist() == ['full', 'no_d']
    assert table['mean_true_score'].between(0, 1).all()
    assert table['classifier_auc'].between(0, 1).all()


def test_classify_experiment_auc_per_variant(monkeypatch):
    seen = []
    monkeypatch.setattr('hspn.experiments.classification.train_classifier', lambda classifier, *args, **kw: classifier)
    monkeypatch.setattr('hspn.experiments.classification.classifier_auc',
                        lambda classifier, true, false, batch_size: seen.append(len(false)) or 0.5)
    table = classify_experiment(sphere_clouds(8, 0), {'full': noisy_clouds(8, 1), 'no_d': noisy_clouds(4, 4)},
                                {'full': sphere_clouds(3, 2), 'no_d': noisy_clouds(3, 3)},
                                classifier=tiny_classifier(), batch_size=4)
    assert seen == [2, 1]
    assert table['classifier_auc'].tolist() == [0.5, 0.5]


def test_classify_experiment_needs_false_clouds_per_variant():
    with pytest.raises(ValueError, match='do not match'):
        classify_experiment(sphere_clouds(4, 0), {'full': noisy_clouds(4, 1)},
                            {'full': sphere_clouds(2, 2), 'no_d': noisy_clouds(2, 3)}, classifier=tiny_classifier())


def test_generate_clouds(completion_run, dataset_dir):
    wrapper, dataset, _ = load_pipeline(str(completion_run[0] / 'model.torch'), str(dataset_dir))
    clouds = generate_clouds(wrapper, dataset, batch_size=1)
    assert clouds.shape == (2, 2048, 3)


@pytest.mark.slow
def test_classifier_learns_ground_truth():
    classifier = train_classifier(tiny_classifier(), sphere_clouds(16, 0), noisy_clouds(16, 1), epochs=20,
                                  batch_size=4)
    assert float(true_scores(classifier, sphere_clouds(8, 2)).mean()) > 0.5
    assert classifier_auc(classifier, sphere_clouds(8, 2), noisy_clouds(8, 3)) > 0.5
