import math
from dataclasses import dataclass
from typing import Tuple

import torch

from hspn.geometry.distances import as_cloud, square_distance


@dataclass(frozen=True)
class GroupingSpec:
    """Parameters of one set-abstraction level.

    An infinite radius with a single centroid groups the whole cloud around the origin.
    """
    npoint: int
    radius: float
    kmax: int
    mlp_widths: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.npoint < 1:
            raise ValueError('npoint must be >= 1, got {}'.format(self.npoint))
        if not self.radius > 0:
            raise ValueError('radius must be > 0, got {}'.format(self.radius))
        if self.kmax < 1:
            raise ValueError('kmax must be >= 1, got {}'.format(self.kmax))

    @property
    def group_all(self):
        return math.isinf(self.radius) and self.npoint == 1


def index_points(points, idx):
    """Gathers `points` [B, N, C] at `idx` [B, S] or [B, S, K]."""
    batch = torch.arange(points.shape[0], device=points.device).view(-1, *([1] * (idx.dim() - 1)))
    return points[batch, idx]


def _batched(cloud):
    cloud = as_cloud(cloud)
    if cloud.dim() == 2:
        return cloud.unsqueeze(0), False
    return cloud, True


def farthest_point_sample(cloud, m, seed_index=0):
    """Greedy max-min sampling of `m` distinct indices.

    The first index is `seed_index`, or the point farthest from the centroid when it is None. Every
    following index maximizes the distance to the already chosen set; ties go to the lowest index.
    """
    cloud, batched = _batched(cloud)
    b, n, _ = cloud.shape
    if not 1 <= m <= n:
        raise ValueError('Cannot sample {} points from a cloud of {}'.format(m, n))

    with torch.no_grad():
        if seed_index is None:
            centroid = cloud.mean(dim=1, keepdim=True)
            farthest = square_distance(centroid, cloud)[:, 0].argmax(dim=1)
        else:
            if not 0 <= seed_index < n:
                raise ValueError('seed_index {} out of range for {} points'.format(seed_index, n))
            farthest = torch.full((b,), seed_index, dtype=torch.long, device=cloud.device)

        rows = torch.arange(b, device=cloud.device)
        centroids = torch.zeros(b, m, dtype=torch.long, device=cloud.device)
        distance = torch.full((b, n), float('inf'), dtype=cloud.dtype, device=cloud.device)
        for i in range(m):
            centroids[:, i] = farthest
            chosen = cloud[rows, farthest].unsqueeze(1)
            distance = torch.minimum(distance, ((cloud - chosen) ** 2).sum(-1))
            # chosen points can never win again, even among duplicates
            distance[rows, farthest] = -1
            farthest = distance.argmax(dim=1)
    return centroids if batched else centroids[0]


def ball_query(centers, cloud, spec):
    """Indices of up to `spec.kmax` points within `spec.radius` of every center, nearest first.

    A ball with no member falls back to the single nearest point. Groups are padded to `kmax` by
    repeating their first member.
    """
    centers, batched = _batched(centers)
    cloud, _ = _batched(cloud)
    with torch.no_grad():
        dist = square_distance(centers, cloud)
        k = min(spec.kmax, cloud.shape[1])
        sorted_dist, order = torch.sort(dist, dim=-1, stable=True)
        sorted_dist, order = sorted_dist[..., :k], order[..., :k]
        inside = sorted_dist <= spec.radius ** 2
        inside[..., 0] = True
        first = order[..., :1]
        group = torch.where(inside, order, first.expand_as(order))
        if k < spec.kmax:
            group = torch.cat([group, first.expand(*first.shape[:-1], spec.kmax - k)], dim=-1)
    return group if batched else group[0]


def set_abstraction(points, features, spec, mlp, seed_index=0):
    """Downsample, group and pool one level of a point hierarchy.

    Args:
        points: [B, M, 3] coordinates.
        features: [B, M, C] per-point features or None.
        spec: GroupingSpec of the level.
        mlp: callable applied to every grouped point, mapping [B, S, K, 3 + C] to [B, S, K, C'].
        seed_index: first FPS index, None for the point farthest from the centroid.
    Returns:
        (centroids [B, S, 3], pooled features [B, S, C'])
    """
    if spec.group_all:
        new_points = torch.zeros(points.shape[0], 1, 3, dtype=points.dtype, device=points.device)
        grouped = points.unsqueeze(1)
        grouped_features = None if features is None else features.unsqueeze(1)
    else:
        if spec.npoint > points.shape[1]:
            raise ValueError('Level needs {} centroids but only {} points are available'.format(spec.npoint,
                                                                                                points.shape[1]))
        fps_idx = farthest_point_sample(points, spec.npoint, seed_index)
        new_points = index_points(points, fps_idx)
        group_idx = ball_query(new_points, points, spec)
        grouped = index_points(points, group_idx) - new_points.unsqueeze(2)
        grouped_features = None if features is None else index_points(features, group_idx)

    if grouped_features is not None:
        grouped = torch.cat([grouped, grouped_features], dim=-1)
    new_features = mlp(grouped).max(dim=2).values
    return new_points, new_features
