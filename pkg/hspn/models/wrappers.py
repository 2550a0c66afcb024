import logging
import os

import gin
import pandas as pd
import torch
from torch.utils.data import DataLoader
from torch.utils.tensorboard import SummaryWriter
from tqdm import tqdm

from hspn.common.constants import FLOAT_FORMAT
from hspn.common.errors import NonFiniteLossError
from hspn.geometry.sampling import index_points
from hspn.models.losses import gradient_penalty, kl_loss, loss_completion, loss_predictor_d, loss_predictor_g, \
    mean_chamfer
from hspn.models.metrics import Chamfer
from hspn.models.utils import capture_rng_state, load_sections, save_checkpoint, save_diagnostic_snapshot


class PointCloudWrapper(object):
    """Device handling, curve logging and checkpointing shared by the two training phases."""

    sections = ()

    def __init__(self):
        if torch.cuda.is_available():
            logging.info('Model will be trained using GPU Hardware')
            self.device = torch.device('cuda')
            self.pin_memory = True
        else:
            logging.info('Model will be trained using CPU Hardware. This should be considerably slower')
            self.device = torch.device('cpu')
            self.pin_memory = False
        self.n_worker = 0
        self.logdir = None
        self.curves = []

    def set_logdir(self, logdir):
        self.logdir = logdir

    def modules(self):
        return {name: getattr(self, name) for name in self.sections}

    def make_loader(self, dataset, batch_size, seed, shuffle=True):
        return DataLoader(dataset, batch_size=batch_size, shuffle=shuffle, num_workers=self.n_worker,
                          pin_memory=self.pin_memory, generator=torch.Generator().manual_seed(seed))

    def to_device(self, element):
        return [t.float().to(self.device) for t in element]

    def check_finite(self, terms, epoch, step, batch):
        if all(bool(torch.isfinite(v.detach()).all()) for v in terms.values()):
            return
        path = save_diagnostic_snapshot(self.logdir, epoch, step, terms, batch, self.modules())
        logging.error('Non-finite loss at epoch {} step {}, diagnostic snapshot written to {}'.format(
            epoch, step, path))
        raise NonFiniteLossError('Non-finite loss at epoch {} step {}: {}'.format(
            epoch, step, {k: float(v) for k, v in terms.items()}), snapshot_path=path)

    def log_epoch(self, writer, values):
        self.curves.append(values)
        epoch = values['epoch']
        log_string = 'Train Epoch:{}'.format(epoch)
        for name, value in values.items():
            if name != 'epoch':
                writer.add_scalar(name, value, epoch)
                log_string += ', {}:{:.4f}'.format(name, value)
        logging.info(log_string)
        pd.DataFrame(self.curves).to_csv(os.path.join(self.logdir, 'curves.csv'), index=False,
                                         float_format=FLOAT_FORMAT)

    def save_weights(self, epoch, save_path, optimizers=None, config=None, rng=None):
        generator = getattr(getattr(self, 'predictor', None), 'generator', None)
        save_checkpoint(save_path, self.modules(), epoch, optimizers=optimizers,
                        branching_config=getattr(generator, 'config', None), train_config=config,
                        rng_state=capture_rng_state(rng))

    def save_checkpoints(self, epoch, config, optimizers, rng):
        if epoch in config.checkpoint_epochs():
            save_path = os.path.join(self.logdir, 'model_epoch{}.torch'.format(epoch))
            self.save_weights(epoch, save_path, optimizers, config, rng)
            logging.info('Checkpoint for epoch {} written to {}'.format(epoch, save_path))
        if epoch == config.epochs:
            self.save_weights(epoch, os.path.join(self.logdir, 'model.torch'), optimizers, config, rng)

    def load_weights(self, load_path):
        return load_sections(load_path, self.modules())


@gin.configurable('PredictorWrapper')
class PredictorWrapper(PointCloudWrapper):
    """Adversarial training of the image-to-partial-cloud predictor against a point-cloud critic."""

    sections = ('predictor', 'critic')

    def __init__(self, predictor=gin.REQUIRED, critic=gin.REQUIRED):
        super().__init__()
        self.predictor = predictor.to(self.device)
        self.critic = critic.to(self.device)

    def critic_step(self, images, partial, rng, config):
        with torch.no_grad():
            _, fake = self.predictor(images, rng)
        real_scores = self.critic(partial)
        fake_scores = self.critic(fake)
        t = torch.rand(partial.shape[0], generator=rng).to(self.device)
        penalties = gradient_penalty(self.critic, partial, fake, t)
        return loss_predictor_d(real_scores, fake_scores, penalties, config.lambda_gp)

    def generator_step(self, images, partial, rng, config, lambda_cd):
        code, generated = self.predictor(images, rng)
        if config.adversarial:
            critic_value = self.critic(generated)
        else:
            critic_value = torch.zeros(generated.shape[0], device=self.device)
        loss = loss_predictor_g(code, generated, partial, critic_value, config.lambda_kl, lambda_cd)
        terms = {'loss_g': loss, 'kl': kl_loss(code.mu, code.log_var).detach(),
                 'cd': mean_chamfer(generated.detach(), partial)}
        return loss, terms

    def train(self, dataset, config):
        """Alternates `n_critic` critic updates with one predictor update per batch.

        Without the adversarial term the critic is left untouched and the predictor trains on
        KL and chamfer alone.
        """
        rng = torch.Generator().manual_seed(config.seed)
        loader = self.make_loader(dataset, config.batch_size, config.seed)
        optimizer = torch.optim.Adam(self.predictor.parameters(), lr=config.lr)
        critic_optimizer = torch.optim.Adam(self.critic.parameters(), lr=config.lr)
        optimizers = {'predictor': optimizer, 'critic': critic_optimizer}
        train_writer = SummaryWriter(os.path.join(self.logdir, 'tensorboard', 'train'))
        self.curves = []

        for epoch in range(1, config.epochs + 1):
            self.predictor.train()
            self.critic.train()
            lambda_cd = config.lambda_cd(epoch - 1)
            sums = {'loss_g': 0.0, 'loss_d': 0.0, 'cd': 0.0, 'kl': 0.0}
            for step, elem in enumerate(tqdm(loader, desc='Predictor epoch {}'.format(epoch), leave=False)):
                images, partial, gt = self.to_device(elem)
                loss_d = torch.zeros(())
                if config.adversarial:
                    for _ in range(config.n_critic):
                        loss_d = self.critic_step(images, partial, rng, config)
                        self.check_finite({'loss_d': loss_d}, epoch, step, [images, partial, gt])
                        critic_optimizer.zero_grad()
                        loss_d.backward()
                        critic_optimizer.step()

                loss_g, terms = self.generator_step(images, partial, rng, config, lambda_cd)
                self.check_finite(terms, epoch, step, [images, partial, gt])
                optimizer.zero_grad()
                loss_g.backward()
                optimizer.step()

                sums['loss_d'] += float(loss_d)
                for name in ('loss_g', 'cd', 'kl'):
                    sums[name] += float(terms[name])
            values = {'epoch': epoch, 'lambda_cd': lambda_cd}
            values.update({name: value / (step + 1) for name, value in sums.items()})
            self.log_epoch(train_writer, values)
            self.save_checkpoints(epoch, config, optimizers, rng)
        train_writer.close()
        return pd.DataFrame(self.curves)

    def predict(self, images):
        self.predictor.eval()
        with torch.no_grad():
            return self.predictor(images.float().to(self.device))[1]

    def evaluate(self, dataset, batch_size=8):
        """Mean chamfer between generated and target partial clouds with z = mu."""
        metric = Chamfer()
        for images, partial, _ in self.make_loader(dataset, batch_size, 0, shuffle=False):
            metric.update((self.predict(images), partial.float().to(self.device)))
        return metric.compute()


@gin.configurable('CompletionWrapper')
class CompletionWrapper(PointCloudWrapper):
    """Trains the completion network on the output of a frozen predictor and runs the full pipeline."""

    sections = ('completion', 'predictor')

    def __init__(self, completion=gin.REQUIRED, predictor=gin.REQUIRED):
        super().__init__()
        self.completion = completion.to(self.device)
        self.predictor = predictor.to(self.device)

    @property
    def approximation(self):
        return bool(getattr(self.completion, 'approximation', False)
                    or getattr(self.predictor.generator, 'approximation', False))

    def load_predictor(self, load_path):
        return load_sections(load_path, {'predictor': self.predictor})

    def freeze_predictor(self):
        self.predictor.eval()
        for param in self.predictor.parameters():
            param.requires_grad_(False)

    def source(self, images, partial, config, rng):
        if config.completion_source == 'partial':
            return partial
        if config.joint_finetune:
            return self.predictor(images, rng)[1]
        with torch.no_grad():
            return self.predictor(images)[1]

    def train(self, dataset, config, predictor_ckpt=None):
        """Optimizes the completion network with the joint perception loss.

        The predictor stays frozen unless `config.joint_finetune` is set, in which case it is
        fine-tuned through the completion loss.
        """
        if predictor_ckpt is not None:
            self.load_predictor(predictor_ckpt)
        rng = torch.Generator().manual_seed(config.seed)
        loader = self.make_loader(dataset, config.batch_size, config.seed)
        params = list(self.completion.parameters())
        if config.joint_finetune:
            params += list(self.predictor.parameters())
        else:
            self.freeze_predictor()
        optimizer = torch.optim.Adam(params, lr=config.lr)
        train_writer = SummaryWriter(os.path.join(self.logdir, 'tensorboard', 'train'))
        self.curves = []

        for epoch in range(1, config.epochs + 1):
            self.completion.train()
            if config.joint_finetune:
                self.predictor.train()
            sums = {'loss': 0.0, 'cd': 0.0}
            for step, elem in enumerate(tqdm(loader, desc='Completion epoch {}'.format(epoch), leave=False)):
                images, partial, gt = self.to_device(elem)
                pred = self.completion(self.source(images, partial, config, rng))
                loss = loss_completion(pred, gt, config.lambda_cd_completion, config.lambda_emd, generator=rng,
                                       emd_points=config.emd_points, epsilon=config.emd_epsilon,
                                       iterations=config.emd_iterations)
                terms = {'loss': loss, 'cd': mean_chamfer(pred.detach(), gt)}
                self.check_finite(terms, epoch, step, [images, partial, gt])
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                for name in sums:
                    sums[name] += float(terms[name])
            values = {'epoch': epoch}
            values.update({name: value / (step + 1) for name, value in sums.items()})
            self.log_epoch(train_writer, values)
            self.save_checkpoints(epoch, config, {'completion': optimizer}, rng)
        train_writer.close()
        return pd.DataFrame(self.curves)

    def complete(self, images, num_points=None, generator=None):
        """Image stack -> (predicted partial, completed cloud); the partial is subsampled to `num_points`."""
        self.predictor.eval()
        self.completion.eval()
        with torch.no_grad():
            partial = self.predictor(images.float().to(self.device))[1]
            if num_points is not None and num_points < partial.shape[1]:
                idx = torch.stack([torch.randperm(partial.shape[1], generator=generator)[:num_points]
                                   for _ in range(partial.shape[0])]).to(self.device)
                partial = index_points(partial, idx)
            return partial, self.completion(partial)

    def evaluate(self, dataset, batch_size=8):
        metric = Chamfer()
        for images, _, gt in self.make_loader(dataset, batch_size, 0, shuffle=False):
            metric.update((self.complete(images)[1], gt.float().to(self.device)))
        return metric.compute()
