import torch
from torch import autograd

from hspn.common.constants import LAMBDA_CD_COMPLETION, LAMBDA_EMD, LAMBDA_GP
from hspn.geometry.distances import EMD_EPSILON, EMD_ITERATIONS, chamfer, emd_debiased


def kl_loss(mu, log_var):
    """KL divergence of N(mu, diag(exp(log_var))) from N(0, I), summed over dimensions, averaged over the batch."""
    return (0.5 * (mu ** 2 + torch.exp(log_var) - 1 - log_var).sum(dim=-1)).mean()


def interpolate(real, fake, t):
    t = torch.as_tensor(t, dtype=real.dtype, device=real.device)
    if t.dim() == 1:
        t = t.view(-1, *([1] * (real.dim() - 1)))
    return t * real + (1 - t) * fake


def gradient_penalty(critic, real, fake, t):
    """Per-sample (||grad D(x_hat)||_2 - 1)^2 at x_hat = t * real + (1 - t) * fake.

    `critic` is any callable returning one score per cloud. A critic that ignores its input has a zero
    gradient and a penalty of 1.
    """
    if real.shape != fake.shape:
        raise ValueError('real and fake clouds differ in shape: {} vs {}'.format(tuple(real.shape),
                                                                                tuple(fake.shape)))
    x_hat = interpolate(real, fake, t).requires_grad_(True)
    scores = critic(x_hat)
    gradients = None
    if scores.requires_grad:
        gradients = autograd.grad(outputs=scores.sum(), inputs=x_hat, create_graph=True, retain_graph=True,
                                  allow_unused=True)[0]
    if gradients is None:
        gradients = torch.zeros_like(x_hat)
    gradients = gradients.reshape(gradients.shape[0], -1)
    return (gradients.norm(2, dim=1) - 1) ** 2


def mean_chamfer(pred, target):
    return chamfer(pred, target).mean()


def loss_predictor_g(code, generated, target_partial, critic_value, lambda_kl, lambda_cd):
    return (lambda_kl * kl_loss(code.mu, code.log_var)
            + lambda_cd * mean_chamfer(generated, target_partial)
            - critic_value.mean())


def loss_predictor_d(real_scores, fake_scores, penalties, lambda_gp=LAMBDA_GP):
    return fake_scores.mean() - real_scores.mean() + lambda_gp * penalties.mean()


def _subsample(cloud, size, generator):
    idx = torch.randperm(cloud.shape[-2], generator=generator)[:size].to(cloud.device)
    return cloud[..., idx, :]


def loss_completion(pred, gt, lambda_cd=LAMBDA_CD_COMPLETION, lambda_emd=LAMBDA_EMD, generator=None,
                    emd_points=None, epsilon=EMD_EPSILON, iterations=EMD_ITERATIONS):
    """Joint perception loss: weighted chamfer plus weighted debiased approximate EMD.

    The EMD term needs equal sizes: the larger cloud is subsampled to the smaller one with `generator`,
    and both are further subsampled to `emd_points` when given.
    """
    cd = mean_chamfer(pred, gt)
    emd_pred, emd_gt = pred, gt
    n_pred, n_gt = pred.shape[-2], gt.shape[-2]
    if n_pred > n_gt:
        emd_pred = _subsample(pred, n_gt, generator)
    elif n_gt > n_pred:
        emd_gt = _subsample(gt, n_pred, generator)
    if emd_points is not None and emd_pred.shape[-2] > emd_points:
        emd_pred = _subsample(emd_pred, emd_points, generator)
        emd_gt = _subsample(emd_gt, emd_points, generator)
    emd = emd_debiased(emd_pred, emd_gt, epsilon=epsilon, iterations=iterations).mean()
    return lambda_cd * cd + lambda_emd * emd
