from pathlib import Path

import gin
import pytest
import torch

from hspn.models.encoders import BranchingConfig, CompletionNetwork, HierarchicalDecoder, HierarchicalEncoder, \
    ImageEncoder, PointCritic, Predictor, TreeGCNGenerator
from hspn.models.train import train_with_gin
from hspn.synthetic_data.generate_dataset import write_dataset
from hspn.synthetic_data.shapes import make_sample

TEST_ROOT = Path(__file__).parent
CONFIGS = TEST_ROOT.parent / 'configs'
TINY_CONFIG = TEST_ROOT / 'resources' / 'tiny.gin'

NUM_TRAIN = 8
NUM_TEST = 2
TINY_LEVELS = ((128, 0.3, 16, (8, 8, 16)), (32, 0.6, 16, (16, 16, 32)))


def central_difference(fn, x, index, eps=1e-6):
    """Derivative of the scalar fn(x) with respect to x[index] by central differences, x in double."""
    plus, minus = x.clone(), x.clone()
    plus[index] += eps
    minus[index] -= eps
    return (float(fn(plus)) - float(fn(minus))) / (2 * eps)


def module_gradcheck(module, inputs, build_args=None):
    """gradcheck of `module` in double precision with respect to `inputs` and every parameter.

    `build_args` turns the input tensors into the module's call arguments.
    """
    module = module.double()
    names = [name for name, _ in module.named_parameters()]
    params = tuple(p.detach().clone().requires_grad_(True) for _, p in module.named_parameters())
    inputs = tuple(x.detach().double().requires_grad_(True) for x in inputs)
    n_inputs = len(inputs)

    def fn(*tensors):
        args = tensors[:n_inputs] if build_args is None else build_args(*tensors[:n_inputs])
        return torch.func.functional_call(module, dict(zip(names, tensors[n_inputs:])), tuple(args))

    return torch.autograd.gradcheck(fn, inputs + params, eps=1e-5, atol=1e-6, rtol=1e-4)


def tiny_predictor(num_slices=1):
    config = BranchingConfig(degrees=(2, 2, 2, 2, 2, 64), feature_widths=(16, 8, 8, 8, 8, 8, 3), support=2)
    return Predictor(image_encoder=ImageEncoder(num_slices=num_slices, channels=(4, 8), hidden=16, latent_dim=16),
                     generator=TreeGCNGenerator(config))


def tiny_completion(use_pipeline_agb=True, use_self_agb=True):
    return CompletionNetwork(encoder=HierarchicalEncoder(levels=TINY_LEVELS, global_mlp=(32, 32)),
                             decoder=HierarchicalDecoder(global_width=32, skip_widths=(16, 32), widths=(16, 8, 8),
                                                         use_pipeline_agb=use_pipeline_agb,
                                                         use_self_agb=use_self_agb, score_width=8))


def tiny_critic():
    return PointCritic(widths=(8, 16), head=(8,))


@pytest.fixture(autouse=True)
def clear_gin():
    yield
    gin.clear_config()


@pytest.fixture()
def finite_difference():
    return central_difference


@pytest.fixture(scope='session')
def dataset_dir(tmp_path_factory):
    """Ten synthetic samples, the first eight in the train split and the last two in the test split."""
    samples = [make_sample(seed) for seed in range(NUM_TRAIN + NUM_TEST)]
    for i, sample in enumerate(samples):
        sample.split = 'train' if i < NUM_TRAIN else 'test'
    directory = tmp_path_factory.mktemp('synthetic')
    write_dataset(samples, directory)
    return directory


def data_binding(dataset_dir):
    return ["DATA_PATH = '{}'".format(dataset_dir)]


def train_tiny(command, log_dir, dataset_dir, bindings=(), seed=1111, predictor_ckpt=None):
    config = CONFIGS / '{}.gin'.format(command)
    return train_with_gin(command, model_dir=str(log_dir), overwrite=True,
                          gin_config_files=[str(config), str(TINY_CONFIG)],
                          gin_bindings=data_binding(dataset_dir) + list(bindings), seed=seed,
                          predictor_ckpt=predictor_ckpt)


@pytest.fixture(scope='session')
def predictor_run(tmp_path_factory, dataset_dir):
    log_dir = tmp_path_factory.mktemp('runs') / 'predictor'
    curves = train_tiny('predictor', log_dir, dataset_dir)
    return log_dir, curves


@pytest.fixture(scope='session')
def completion_run(tmp_path_factory, dataset_dir, predictor_run):
    log_dir = tmp_path_factory.mktemp('runs') / 'completion'
    curves = train_tiny('completion', log_dir, dataset_dir, predictor_ckpt=str(predictor_run[0] / 'model.torch'))
    return log_dir, curves
