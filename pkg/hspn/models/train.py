import logging
import os
import random
import shutil
from dataclasses import asdict, dataclass
from typing import Optional, Tuple

import gin
import numpy as np
import torch

from hspn.common.constants import LAMBDA_CD_COMPLETION, LAMBDA_CD_END, LAMBDA_CD_START, LAMBDA_EMD, LAMBDA_GP, \
    LAMBDA_KL, LEARNING_RATE, N_CRITIC
from hspn.data.loader import SyntheticShapeDataset  # noqa: F401, registers the dataset with gin
from hspn.models.utils import save_config_file

COMPLETION_SOURCES = ('predicted', 'partial')


@gin.configurable('TrainConfig')
@dataclass(frozen=True)
class TrainConfig:
    """Loss weights and optimisation settings shared by both training phases.

    `lambda_cd` ramps linearly from `lambda_cd_start` to `lambda_cd_end` over the epochs.
    `emd_points` is the training-time subsample used for the EMD term, None for the full clouds.
    `completion_source` selects whether the completion network learns from the predictor's
    output ('predicted') or from the stored partial clouds ('partial').
    """
    lambda_kl: float = LAMBDA_KL
    lambda_cd_start: float = LAMBDA_CD_START
    lambda_cd_end: float = LAMBDA_CD_END
    lambda_cd_completion: float = LAMBDA_CD_COMPLETION
    lambda_emd: float = LAMBDA_EMD
    lambda_gp: float = LAMBDA_GP
    lr: float = LEARNING_RATE
    epochs: int = 100
    n_critic: int = N_CRITIC
    seed: int = 1111
    batch_size: int = 8
    adversarial: bool = True
    emd_epsilon: float = 0.02
    emd_iterations: int = 10
    emd_points: Optional[int] = 128
    completion_source: str = 'predicted'
    joint_finetune: bool = False
    checkpoints: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if self.epochs < 1 or self.n_critic < 1 or self.batch_size < 1:
            raise ValueError('epochs, n_critic and batch_size must be >= 1')
        if self.lr <= 0:
            raise ValueError('Learning rate must be positive, got {}'.format(self.lr))
        if self.completion_source not in COMPLETION_SOURCES:
            raise ValueError('completion_source must be one of {}, got {}'.format(COMPLETION_SOURCES,
                                                                               self.completion_source))
        if self.checkpoints is not None and any(not 1 <= e <= self.epochs for e in self.checkpoints):
            raise ValueError('Checkpoint epochs {} outside [1, {}]'.format(self.checkpoints, self.epochs))

    def lambda_cd(self, epoch_index):
        if self.epochs == 1:
            return self.lambda_cd_start
        progress = epoch_index / (self.epochs - 1)
        return self.lambda_cd_start + (self.lambda_cd_end - self.lambda_cd_start) * progress

    def checkpoint_epochs(self):
        if self.checkpoints is not None:
            return sorted(set(self.checkpoints))
        return sorted({max(1, self.epochs // 2), max(1, 3 * self.epochs // 4), self.epochs})

    def to_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def set_seed(seed, reproducible=True):
    os.environ['PYTHONHASHSEED'] = str(seed)
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)

    if reproducible:
        os.environ['CUBLAS_WORKSPACE_CONFIG'] = ':4096:8'
        torch.use_deterministic_algorithms(True, warn_only=True)
        torch.backends.cudnn.deterministic = True
        torch.backends.cudnn.benchmark = False


def train_with_gin(command,
                   model_dir=None,
                   overwrite=False,
                   gin_config_files=None,
                   gin_bindings=None,
                   seed=1111,
                   reproducible=True,
                   predictor_ckpt=None):
    """Trains one phase based on the provided gin configuration.

    This function will set the seeds, parse the gin files and bindings, call train_predictor() or
    train_completion() and clear the gin config.
    Args:
        command: Either 'predictor' or 'completion'.
        model_dir: String with path to directory where model output should be saved.
        overwrite: Boolean indicating whether to overwrite output directory.
        gin_config_files: List of gin config files to load.
        gin_bindings: List of gin bindings to use.
        seed: Integer corresponding to the common seed used for any random operation.
        predictor_ckpt: Predictor checkpoint the completion phase starts from.
    """
    if command not in ('predictor', 'completion'):
        raise ValueError('Unknown training phase {}'.format(command))

    # Setting the seed before gin parsing
    set_seed(seed, reproducible)

    gin.parse_config_files_and_bindings(gin_config_files or [], gin_bindings or [])
    try:
        if command == 'predictor':
            return train_predictor(model_dir, overwrite, seed=seed)
        return train_completion(model_dir, overwrite, seed=seed, predictor_ckpt=predictor_ckpt)
    finally:
        gin.clear_config()


def prepare_log_dir(log_dir, overwrite):
    if os.path.isdir(log_dir):
        if overwrite or not os.path.isfile(os.path.join(log_dir, 'model.torch')):
            shutil.rmtree(log_dir)
        else:
            raise ValueError('Directory {} already exists and overwrite is False.'.format(log_dir))
    os.makedirs(log_dir)


@gin.configurable('train_predictor')
def train_predictor(log_dir, overwrite=False, seed=1111, wrapper=gin.REQUIRED, dataset_fn=gin.REQUIRED,
                    data_path=gin.REQUIRED):
    """Phase one: image encoder and generator against the critic. Returns the loss curves."""
    prepare_log_dir(log_dir, overwrite)
    dataset = dataset_fn(data_path, split='train')
    config = TrainConfig(seed=seed)

    wrapper.set_logdir(log_dir)
    save_config_file(log_dir)  # We save the operative config before and also after training
    curves = wrapper.train(dataset, config)
    save_config_file(log_dir)
    return curves


@gin.configurable('train_completion')
def train_completion(log_dir, overwrite=False, seed=1111, predictor_ckpt=None, wrapper=gin.REQUIRED,
                     dataset_fn=gin.REQUIRED, data_path=gin.REQUIRED):
    """Phase two: hierarchical encoder and decoder on top of a frozen predictor. Returns the loss curves."""
    prepare_log_dir(log_dir, overwrite)
    dataset = dataset_fn(data_path, split='train')
    config = TrainConfig(seed=seed)
    if predictor_ckpt is None and config.completion_source == 'predicted':
        logging.warning('No predictor checkpoint given, completion will learn from an untrained predictor')

    wrapper.set_logdir(log_dir)
    save_config_file(log_dir)
    curves = wrapper.train(dataset, config, predictor_ckpt=predictor_ckpt)
    save_config_file(log_dir)
    return curves
