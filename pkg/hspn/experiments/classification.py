import logging

import gin
import numpy as np
import pandas as pd
import torch
import torch.nn.functional as F
from ignite.contrib.metrics import ROC_AUC
from torch.utils.data import DataLoader, TensorDataset
from tqdm import tqdm

from hspn.models.encoders import PointNet2Classifier


def generate_clouds(wrapper, dataset, batch_size=8):
    """Completed clouds of the pipeline for every sample of `dataset`, shape [M, 2048, 3]."""
    clouds = [wrapper.complete(images)[1].cpu()
              for images, _, _ in wrapper.make_loader(dataset, batch_size, 0, shuffle=False)]
    return torch.cat(clouds)


def _holdout_split(n, holdout, rng):
    order = rng.permutation(n)
    n_hold = min(n - 1, max(1, int(round(holdout * n)))) if n > 1 else 0
    return order[n_hold:], order[:n_hold]


@gin.configurable('train_classifier')
def train_classifier(classifier, true_clouds, false_clouds, epochs=20, lr=1e-3, batch_size=8, seed=0):
    """Fits `classifier` to tell ground-truth clouds (label 1) from generated ones (label 0)."""
    clouds = torch.cat([torch.as_tensor(true_clouds), torch.as_tensor(false_clouds)]).float()
    labels = torch.cat([torch.ones(len(true_clouds)), torch.zeros(len(false_clouds))])
    loader = DataLoader(TensorDataset(clouds, labels), batch_size=batch_size, shuffle=True,
                        generator=torch.Generator().manual_seed(seed))
    optimizer = torch.optim.Adam(classifier.parameters(), lr=lr)

    for epoch in range(epochs):
        classifier.train()
        train_loss = []
        for data, target in tqdm(loader, desc='Classifier epoch {}'.format(epoch + 1), leave=False):
            loss = F.binary_cross_entropy_with_logits(classifier(data), target)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            train_loss.append(float(loss))
        logging.info('Classifier Epoch:{}, Loss:{:.4f}'.format(epoch + 1, float(np.mean(train_loss))))
    return classifier


def true_scores(classifier, clouds, batch_size=8):
    classifier.eval()
    with torch.no_grad():
        return torch.cat([classifier.true_probability(torch.as_tensor(batch).float())
                          for batch in torch.split(torch.as_tensor(clouds), batch_size)])


def classifier_auc(classifier, true_clouds, false_clouds, batch_size=8):
    metric = ROC_AUC()
    scores = torch.cat([true_scores(classifier, true_clouds, batch_size),
                        true_scores(classifier, false_clouds, batch_size)])
    labels = torch.cat([torch.ones(len(true_clouds)), torch.zeros(len(false_clouds))])
    metric.update((scores, labels))
    return float(metric.compute())


def classify_experiment(true_clouds, false_clouds, generations, classifier=None, holdout=0.25, seed=0,
                        batch_size=8):
    """Mean classifier probability of being ground truth for each variant's generations.

    One classifier is trained on `true_clouds` against the pooled `false_clouds` of every variant
    (generations of its half-trained checkpoint), minus a held-out share of each. Its ROC-AUC is
    reported per variant on the held-out ground truth against that variant's held-out false clouds.

    Args:
        true_clouds: Ground-truth clouds [M, N, 3].
        false_clouds: Mapping of variant tag to the clouds of its half-trained checkpoint [M', N, 3].
        generations: Mapping of variant tag to the clouds it generates at test time.
        classifier: Untrained PointNet2Classifier, a fresh one when None.
    """
    if set(false_clouds) != set(generations):
        raise ValueError('False clouds for {} do not match the scored variants {}'.format(
            sorted(false_clouds), sorted(generations)))
    classifier = PointNet2Classifier() if classifier is None else classifier
    rng = np.random.default_rng(seed)
    true_clouds = torch.as_tensor(true_clouds)
    true_train, true_hold = _holdout_split(len(true_clouds), holdout, rng)
    false_train, false_hold = {}, {}
    for tag in generations:
        clouds = torch.as_tensor(false_clouds[tag])
        train, hold = _holdout_split(len(clouds), holdout, rng)
        false_train[tag], false_hold[tag] = clouds[train], clouds[hold]

    train_classifier(classifier, true_clouds[true_train], torch.cat(list(false_train.values())),
                     batch_size=batch_size, seed=seed)

    rows = []
    for tag, clouds in generations.items():
        auc = None
        if len(true_hold) and len(false_hold[tag]):
            auc = classifier_auc(classifier, true_clouds[true_hold], false_hold[tag], batch_size)
            logging.info('Classifier held-out ROC-AUC against {} {:.4f}'.format(tag, auc))
        rows.append({'variant': tag,
                     'mean_true_score': float(true_scores(classifier, clouds, batch_size).double().mean()),
                     'classifier_auc': auc})
    return pd.DataFrame(rows)
