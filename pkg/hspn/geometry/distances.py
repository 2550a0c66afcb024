import math
from typing import NamedTuple

import numpy as np
import torch
from scipy.optimize import linear_sum_assignment

from hspn.common.constants import EMD_ORACLE_LIMIT
from hspn.common.errors import SizeLimitError

EMD_EPSILON = 1e-3
EMD_ITERATIONS = 30
EMD_SCALING = 0.5
EMD_START = 1.0


class Assignment(NamedTuple):
    """Minimum-cost bijection between two clouds.

    `mapping[i]` is the index in the target cloud paired with source point i.
    """
    mapping: np.ndarray
    cost: float


class NormalizedCloud(NamedTuple):
    points: torch.Tensor
    centroid: torch.Tensor
    scale: torch.Tensor
    degenerate: torch.Tensor


def as_cloud(points, name='cloud'):
    """Returns `points` as a float tensor of shape [N, 3] or [B, N, 3], validating the cloud invariants."""
    points = torch.as_tensor(points)
    if not points.is_floating_point():
        points = points.float()
    if points.dim() not in (2, 3) or points.shape[-1] != 3:
        raise ValueError('{} must have shape [N, 3] or [B, N, 3], got {}'.format(name, tuple(points.shape)))
    if points.shape[-2] == 0:
        raise ValueError('{} is empty'.format(name))
    if not torch.isfinite(points).all():
        raise ValueError('{} holds non-finite coordinates'.format(name))
    return points


def _as_batched_pair(a, b):
    a = as_cloud(a, 'a')
    b = as_cloud(b, 'b')
    if a.dim() != b.dim():
        raise ValueError('Cannot compare a batched cloud with a single cloud')
    batched = a.dim() == 3
    if not batched:
        a, b = a.unsqueeze(0), b.unsqueeze(0)
    elif a.shape[0] != b.shape[0]:
        raise ValueError('Batch sizes differ: {} vs {}'.format(a.shape[0], b.shape[0]))
    return a, b, batched


def square_distance(src, dst):
    """Pairwise squared euclidean distance between [B, N, 3] and [B, M, 3], shape [B, N, M].

    Differences are formed explicitly rather than through the matrix-product expansion so that
    identical points are at distance exactly zero.
    """
    return torch.cdist(src, dst, compute_mode='donot_use_mm_for_euclid_dist').pow(2)


def chamfer(a, b):
    """Sum over both clouds of the squared distance of every point to its nearest neighbour in the other.

    Accepts [N, 3] clouds (returns a scalar) or [B, N, 3] batches (returns one value per batch element).
    """
    a, b, batched = _as_batched_pair(a, b)
    dist = square_distance(a, b)
    cost = dist.min(dim=1).values.sum(dim=-1) + dist.min(dim=2).values.sum(dim=-1)
    return cost if batched else cost[0]


def pc_to_pc_error(pred, gt):
    """Squared distance of every predicted point to its nearest ground-truth point."""
    pred, gt, batched = _as_batched_pair(pred, gt)
    errors = square_distance(pred, gt).min(dim=2).values
    return errors if batched else errors[0]


def emd_exact(a, b):
    a = as_cloud(a, 'a')
    b = as_cloud(b, 'b')
    if a.dim() != 2 or b.dim() != 2:
        raise ValueError('emd_exact compares single clouds of shape [N, 3]')
    if a.shape[0] != b.shape[0]:
        raise ValueError('emd_exact needs clouds of equal size, got {} and {}'.format(a.shape[0], b.shape[0]))
    if a.shape[0] > EMD_ORACLE_LIMIT:
        raise SizeLimitError('emd_exact refuses clouds larger than {} points, got {}'.format(EMD_ORACLE_LIMIT,
                                                                                          a.shape[0]))
    a = a.detach().cpu().double().numpy()
    b = b.detach().cpu().double().numpy()
    cost_matrix = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
    rows, mapping = linear_sum_assignment(cost_matrix)
    mapping = mapping[np.argsort(rows)]
    cost = float(np.linalg.norm(a - b[mapping], axis=-1).sum())
    return Assignment(mapping=mapping, cost=cost)


def epsilon_schedule(epsilon, scaling=EMD_SCALING, start=EMD_START):
    """Geometric sequence of temperatures from `start` down to `epsilon` (inclusive)."""
    if epsilon <= 0:
        raise ValueError('epsilon must be positive, got {}'.format(epsilon))
    if not 0 < scaling < 1:
        raise ValueError('scaling must lie in (0, 1), got {}'.format(scaling))
    schedule = []
    eps = max(start, epsilon)
    while eps > epsilon:
        schedule.append(eps)
        eps *= scaling
    schedule.append(epsilon)
    return schedule


def emd_approx(a, b, epsilon=EMD_EPSILON, iterations=EMD_ITERATIONS, scaling=EMD_SCALING):
    """Entropic approximation of the earth mover's distance, differentiable in both clouds.

    Log-domain Sinkhorn iterations on the euclidean cost with uniform masses, annealing the temperature
    from 1 down to `epsilon`. Returns n * <P, C> so the value is on the scale of `emd_exact(a, b).cost`.
    """
    a, b, batched = _as_batched_pair(a, b)
    n = a.shape[1]
    if b.shape[1] != n:
        raise ValueError('emd_approx needs clouds of equal size, got {} and {}'.format(n, b.shape[1]))

    cost = torch.cdist(a, b, compute_mode='donot_use_mm_for_euclid_dist')
    log_mass = -math.log(n)
    f = torch.zeros(cost.shape[:2], dtype=cost.dtype, device=cost.device)
    g = torch.zeros_like(f)
    for eps in epsilon_schedule(epsilon, scaling):
        for _ in range(iterations):
            f = -eps * torch.logsumexp((g.unsqueeze(1) - cost) / eps + log_mass, dim=2)
            g = -eps * torch.logsumexp((f.unsqueeze(2) - cost) / eps + log_mass, dim=1)

    plan = torch.exp((f.unsqueeze(2) + g.unsqueeze(1) - cost) / epsilon + 2 * log_mass)
    value = n * (plan * cost).sum(dim=(1, 2))
    return value if batched else value[0]


def emd_debiased(a, b, epsilon=EMD_EPSILON, iterations=EMD_ITERATIONS, scaling=EMD_SCALING):
    """`emd_approx(a, b)` minus half of each cloud's transport onto itself, clamped at zero.

    The self terms carry the entropic blur of the plan, so the result vanishes (up to rounding) when
    `b` is a permutation of `a`, at any cloud size.
    """
    cross = emd_approx(a, b, epsilon=epsilon, iterations=iterations, scaling=scaling)
    self_a = emd_approx(a, a, epsilon=epsilon, iterations=iterations, scaling=scaling)
    self_b = emd_approx(b, b, epsilon=epsilon, iterations=iterations, scaling=scaling)
    return (cross - 0.5 * (self_a + self_b)).clamp_min(0)


def normalize(points, eps=1e-12):
    """Centers a cloud on its centroid and scales it to unit maximum radius.

    A degenerate cloud (all points identical) is only centered; its scale is 1 and the flag is set.
    """
    points = as_cloud(points)
    centroid = points.mean(dim=-2, keepdim=True)
    centered = points - centroid
    radius = centered.norm(dim=-1).max(dim=-1, keepdim=True).values.unsqueeze(-1)
    degenerate = radius <= eps
    scale = torch.where(degenerate, torch.ones_like(radius), radius)
    return NormalizedCloud(points=centered / scale, centroid=centroid.squeeze(-2), scale=scale.view(scale.shape[:-2]),
                           degenerate=degenerate.view(degenerate.shape[:-2]))
