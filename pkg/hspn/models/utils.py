import logging
import os
import random

import gin
import numpy as np
import torch

from hspn.common.constants import CHECKPOINT_FORMAT, CHECKPOINT_VERSION
from hspn.common.errors import ContainerFormatError


def capture_rng_state(generator=None):
    state = {'torch': torch.get_rng_state(),
             'numpy': np.random.get_state(),
             'python': random.getstate()}
    if generator is not None:
        state['generator'] = generator.get_state()
    return state


def restore_rng_state(state, generator=None):
    torch.set_rng_state(state['torch'])
    np.random.set_state(state['numpy'])
    random.setstate(state['python'])
    if generator is not None and 'generator' in state:
        generator.set_state(state['generator'])


def save_checkpoint(save_file, sections, epoch, optimizers=None, branching_config=None, train_config=None,
                    rng_state=None):
    """Writes the versioned checkpoint container.

    Args:
        save_file: Target path.
        sections: Mapping of section name ('predictor', 'critic', 'completion', ...) to module.
        epoch: Number of completed epochs.
        optimizers: Mapping of section name to optimizer.
        branching_config: BranchingConfig of the generator, if any.
        train_config: TrainConfig used for the run, if any.
        rng_state: Output of capture_rng_state().
    """
    state = {
        'format': CHECKPOINT_FORMAT,
        'version': CHECKPOINT_VERSION,
        'epoch': epoch,
        'sections': {name: module.state_dict() for name, module in sections.items()},
        'optimizers': {name: opt.state_dict() for name, opt in (optimizers or {}).items()},
        'branching_config': None if branching_config is None else branching_config.to_dict(),
        'train_config': None if train_config is None else train_config.to_dict(),
        'rng_state': rng_state,
    }
    torch.save(state, save_file)
    del state


def load_checkpoint(filepath):
    if not os.path.isfile(filepath):
        raise FileNotFoundError('No checkpoint at {}'.format(filepath))
    try:
        state = torch.load(filepath, map_location='cpu', weights_only=False)
    except Exception as e:
        raise ContainerFormatError('Cannot parse checkpoint {}: {}'.format(filepath, e)) from e
    if not isinstance(state, dict) or state.get('format') != CHECKPOINT_FORMAT:
        raise ContainerFormatError('{} is not a {} container'.format(filepath, CHECKPOINT_FORMAT))
    if state.get('version') != CHECKPOINT_VERSION:
        raise ContainerFormatError('{} has unsupported version {}'.format(filepath, state.get('version')))
    return state


def load_sections(filepath, sections, optimizers=None):
    """Loads named sections of a checkpoint into modules; returns the container."""
    state = load_checkpoint(filepath)
    for name, module in sections.items():
        if name not in state['sections']:
            raise ContainerFormatError('Checkpoint {} has no section {}'.format(filepath, name))
        module.load_state_dict(state['sections'][name])
    for name, optimizer in (optimizers or {}).items():
        if name in state['optimizers']:
            optimizer.load_state_dict(state['optimizers'][name])
    logging.info('Loaded sections {} from {}'.format(sorted(sections), filepath))
    return state


def save_diagnostic_snapshot(log_dir, epoch, step, terms, batch, sections):
    path = os.path.join(log_dir, 'diagnostic_snapshot.torch')
    torch.save({'epoch': epoch,
                'step': step,
                'terms': {k: float(v) for k, v in terms.items()},
                'batch': [t.detach().cpu() for t in batch],
                'sections': {name: module.state_dict() for name, module in sections.items()}}, path)
    return path


def save_config_file(log_dir):
    with open(os.path.join(log_dir, 'train_config.gin'), 'w') as f:
        f.write(gin.operative_config_str())


def get_bindings_and_params(args):
    gin_bindings = list(getattr(args, 'binding', None) or [])
    log_dir = args.out_dir

    if getattr(args, 'epochs', None):
        gin_bindings += ['EPOCHS = ' + str(args.epochs)]
    if getattr(args, 'batch_size', None):
        gin_bindings += ['BS = ' + str(args.batch_size)]
    if getattr(args, 'lr', None):
        gin_bindings += ['LR = ' + str(args.lr)]
    if getattr(args, 'max_samples', None):
        gin_bindings += ['MAX_SAMPLES = ' + str(args.max_samples)]
    if getattr(args, 'data_path', None):
        gin_bindings += ["DATA_PATH = '" + str(args.data_path) + "'"]

    return gin_bindings, str(log_dir)
