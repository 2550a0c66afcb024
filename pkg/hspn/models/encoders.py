import math
from dataclasses import asdict, dataclass
from typing import NamedTuple, Tuple

import gin
import numpy as np
import torch
import torch.nn as nn

from hspn.common.constants import BRANCHING_DEGREES, BRANCHING_WIDTHS, ENCODER_LEVELS, GLOBAL_MLP, IMAGE_HEIGHT, \
    IMAGE_WIDTH, LATENT_DIM, LEAKY_SLOPE, NUM_POINTS, SUPPORT, VALID_SLICE_COUNTS
from hspn.geometry.sampling import GroupingSpec
from hspn.models.layers import Branching, DecodeBlock, SetAbstraction, SharedMLP, SkipFeature, TreeGCNBlock, \
    TreeState


class LatentCode(NamedTuple):
    mu: torch.Tensor
    log_var: torch.Tensor
    z: torch.Tensor
    noise: torch.Tensor


@gin.configurable('BranchingConfig')
@dataclass(frozen=True)
class BranchingConfig:
    degrees: Tuple[int, ...] = BRANCHING_DEGREES
    feature_widths: Tuple[int, ...] = BRANCHING_WIDTHS
    support: int = SUPPORT
    root_count: int = 1

    def __post_init__(self):
        if any(d < 1 for d in self.degrees):
            raise ValueError('Branching degrees must be >= 1, got {}'.format(self.degrees))
        if self.support < 1 or self.root_count < 1:
            raise ValueError('support and root_count must be >= 1')
        if len(self.feature_widths) != len(self.degrees) + 1:
            raise ValueError('Need one feature width per level: {} degrees, {} widths'.format(
                len(self.degrees), len(self.feature_widths)))
        if self.feature_widths[-1] != 3:
            raise ValueError('The last level must have width 3, got {}'.format(self.feature_widths[-1]))
        leaves = self.root_count * int(np.prod(self.degrees))
        if leaves != NUM_POINTS:
            raise ValueError('Branching schedule yields {} points instead of {}'.format(leaves, NUM_POINTS))

    def to_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, values):
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in values.items()})


def _conv_out(size, kernel=4, stride=2, padding=1):
    return (size + 2 * padding - kernel) // stride + 1


@gin.configurable('ImageEncoder')
class ImageEncoder(nn.Module):
    """Strided convolutions and a dense head turning k stacked slices into a Gaussian latent code."""

    def __init__(self, num_slices=1, latent_dim=LATENT_DIM, channels=(32, 64, 128, 256), hidden=256,
                 height=IMAGE_HEIGHT, width=IMAGE_WIDTH):
        super().__init__()
        if num_slices not in VALID_SLICE_COUNTS:
            raise ValueError('num_slices must be one of {}, got {}'.format(VALID_SLICE_COUNTS, num_slices))
        self.num_slices = num_slices
        self.latent_dim = latent_dim

        layers = []
        in_channels = num_slices
        for out_channels in channels:
            layers += [nn.Conv2d(in_channels, out_channels, kernel_size=4, stride=2, padding=1),
                       nn.LeakyReLU(LEAKY_SLOPE)]
            in_channels = out_channels
            height, width = _conv_out(height), _conv_out(width)
        self.network = nn.Sequential(*layers)
        self.dense = nn.Sequential(nn.Linear(in_channels * height * width, hidden), nn.LeakyReLU(LEAKY_SLOPE))
        self.mu = nn.Linear(hidden, latent_dim)
        self.log_var = nn.Linear(hidden, latent_dim)

    def forward(self, images, generator=None):
        if images.dim() == 3:
            images = images.unsqueeze(1)
        if images.shape[1] != self.num_slices:
            raise ValueError('Expected {} slices, got {}'.format(self.num_slices, images.shape[1]))
        if images.min() < 0 or images.max() > 1:
            raise ValueError('Pixel values must lie in [0, 1]')

        hidden = self.dense(self.network(images).flatten(1))
        mu, log_var = self.mu(hidden), self.log_var(hidden)
        if self.training:
            noise = torch.randn(mu.shape, generator=generator, dtype=mu.dtype).to(mu.device)
            z = mu + torch.exp(log_var / 2) * noise
        else:
            noise = torch.zeros_like(mu)
            z = mu
        return LatentCode(mu=mu, log_var=log_var, z=z, noise=noise)


@gin.configurable('TreeGCNGenerator')
class TreeGCNGenerator(nn.Module):
    def __init__(self, config=None):
        super().__init__()
        config = BranchingConfig() if config is None else config
        self.config = config
        widths = config.feature_widths
        self.root = nn.Linear(widths[0], widths[0] * config.root_count) if config.root_count > 1 else None
        self.branchings = nn.ModuleList([Branching(widths[l], d) for l, d in enumerate(config.degrees)])
        self.blocks = nn.ModuleList([
            TreeGCNBlock(widths[l], widths[l + 1], ancestor_widths=widths[:l + 1], support=config.support,
                         activation=l < len(config.degrees) - 1)
            for l in range(len(config.degrees))])

    def grow(self, z):
        """Runs the tree and returns the full TreeState; the last level holds the coordinates."""
        root = z.unsqueeze(1)
        if self.root is not None:
            root = self.root(z).view(z.shape[0], self.config.root_count, -1)
        state = TreeState.from_root(root)
        for l, (branching, block) in enumerate(zip(self.branchings, self.blocks)):
            state = branching(state, l)
            state.levels[l + 1] = block(state, l + 1)
        return state

    def forward(self, z):
        return self.grow(z).levels[-1]


@gin.configurable('FCGenerator')
class FCGenerator(nn.Module):
    """Fully connected point-set generator in the manner of single-image point-set networks."""

    def __init__(self, latent_dim=LATENT_DIM, hidden=(512, 1024)):
        super().__init__()
        self.network = nn.Sequential(SharedMLP(latent_dim, hidden), nn.Linear(hidden[-1], NUM_POINTS * 3))
        self.approximation = True

    def forward(self, z):
        return self.network(z).view(z.shape[0], NUM_POINTS, 3)


@gin.configurable('Predictor')
class Predictor(nn.Module):
    def __init__(self, image_encoder=gin.REQUIRED, generator=gin.REQUIRED):
        super().__init__()
        self.image_encoder = image_encoder
        self.generator = generator

    def forward(self, images, generator=None):
        code = self.image_encoder(images, generator)
        return code, self.generator(code.z)


@gin.configurable('PointCritic')
class PointCritic(nn.Module):
    """Per-point shared map, max-pool and dense head; one unbounded score per cloud."""

    def __init__(self, num_points=NUM_POINTS, widths=(64, 128, 256), head=(64,)):
        super().__init__()
        self.num_points = num_points
        self.point_map = SharedMLP(3, widths, activation=lambda: nn.LeakyReLU(LEAKY_SLOPE))
        self.head = nn.Sequential(SharedMLP(widths[-1], head, activation=lambda: nn.LeakyReLU(LEAKY_SLOPE)),
                                  nn.Linear(head[-1], 1))

    def forward(self, cloud):
        if cloud.dim() == 2:
            cloud = cloud.unsqueeze(0)
        if cloud.shape[1] != self.num_points or cloud.shape[2] != 3:
            raise ValueError('Critic expects clouds of shape [B, {}, 3], got {}'.format(self.num_points,
                                                                                      tuple(cloud.shape)))
        pooled = self.point_map(cloud).max(dim=1).values
        return self.head(pooled).squeeze(-1)


@gin.configurable('HierarchicalEncoder')
class HierarchicalEncoder(nn.Module):
    """Set-abstraction levels ending with a global feature; intermediate levels feed the pipelines."""

    def __init__(self, levels=ENCODER_LEVELS, global_mlp=GLOBAL_MLP):
        super().__init__()
        self.specs = [GroupingSpec(npoint, radius, kmax, tuple(mlp)) for npoint, radius, kmax, mlp in levels]
        in_width = 0
        abstractions = []
        for spec in self.specs:
            abstractions.append(SetAbstraction(spec, in_width))
            in_width = spec.mlp_widths[-1]
        self.abstractions = nn.ModuleList(abstractions)
        self.global_abstraction = SetAbstraction(GroupingSpec(1, math.inf, 1, tuple(global_mlp)), in_width)
        self.min_points = self.specs[0].npoint if self.specs else 1
        self.out_width = global_mlp[-1]
        self.skip_widths = [spec.mlp_widths[-1] for spec in self.specs]

    def forward(self, partial):
        if partial.dim() == 2:
            partial = partial.unsqueeze(0)
        n = partial.shape[1]
        if n < self.min_points:
            partial = partial.repeat(1, math.ceil(self.min_points / n), 1)

        points, features = partial, None
        skips = []
        for level, abstraction in enumerate(self.abstractions, start=1):
            points, features = abstraction(points, features)
            skips.append(SkipFeature(level=level, points=points, features=features))
        _, global_feature = self.global_abstraction(points, features)
        return global_feature.squeeze(1), skips


@gin.configurable('HierarchicalDecoder')
class HierarchicalDecoder(nn.Module):
    """Decoding blocks expanding the global feature to the full cloud.

    Block i attends to the pipeline of the mirrored encoder level; the last block uses self-attention.
    """

    def __init__(self, global_width=GLOBAL_MLP[-1], skip_widths=(128, 256), factors=(128, 4, 4),
                 widths=(256, 128, 64), use_pipeline_agb=True, use_self_agb=True, score_width=64):
        super().__init__()
        if int(np.prod(factors)) != NUM_POINTS:
            raise ValueError('Decoder factors yield {} points instead of {}'.format(int(np.prod(factors)),
                                                                                  NUM_POINTS))
        self.use_pipeline_agb = use_pipeline_agb
        mirrored = list(reversed(skip_widths))
        blocks = []
        in_width = global_width
        for i, (factor, width) in enumerate(zip(factors, widths)):
            last = i == len(factors) - 1
            skip_width = None if last or not use_pipeline_agb else mirrored[i]
            use_agb = use_self_agb if last else use_pipeline_agb
            blocks.append(DecodeBlock(i + 1, in_width, width, factor, skip_width=skip_width, use_agb=use_agb,
                                      project=last, score_width=score_width))
            in_width = width
        self.blocks = nn.ModuleList(blocks)

    def forward(self, global_feature, skips):
        by_level = {skip.level: skip for skip in skips}
        deepest = len(self.blocks) - 1
        features = global_feature.unsqueeze(1)
        for i, block in enumerate(self.blocks):
            skip = by_level.get(deepest - i) if block.needs_skip else None
            features = block(features, skip)
        return features


@gin.configurable('CompletionNetwork')
class CompletionNetwork(nn.Module):
    def __init__(self, encoder=gin.REQUIRED, decoder=gin.REQUIRED):
        super().__init__()
        self.encoder = encoder
        self.decoder = decoder

    @property
    def approximation(self):
        return getattr(self.encoder, 'approximation', False) or getattr(self.decoder, 'approximation', False)

    def forward(self, partial):
        global_feature, skips = self.encoder(partial)
        return self.decoder(global_feature, skips)


@gin.configurable('PointNetEncoder')
class PointNetEncoder(nn.Module):
    """Single-level shared map and max-pool; no pipelines."""

    def __init__(self, widths=(64, 128, 512)):
        super().__init__()
        self.point_map = SharedMLP(3, widths)
        self.out_width = widths[-1]
        self.approximation = True

    def forward(self, partial):
        if partial.dim() == 2:
            partial = partial.unsqueeze(0)
        return self.point_map(partial).max(dim=1).values, []


@gin.configurable('FCDecoder')
class FCDecoder(nn.Module):
    def __init__(self, global_width=GLOBAL_MLP[-1], widths=(96, 1024, 2048)):
        super().__init__()
        self.entry = nn.Linear(global_width, widths[0]) if global_width != widths[0] else nn.Identity()
        self.network = nn.Sequential(SharedMLP(widths[0], widths[1:]), nn.Linear(widths[-1], NUM_POINTS * 3))
        self.approximation = True

    def forward(self, global_feature, skips=()):
        return self.network(self.entry(global_feature)).view(-1, NUM_POINTS, 3)


@gin.configurable('FoldingDecoder')
class FoldingDecoder(nn.Module):
    """Two folding stages deforming a fixed 2D grid conditioned on the codeword."""

    def __init__(self, global_width=512, grid_shape=(32, 64), hidden=(512, 512)):
        super().__init__()
        if grid_shape[0] * grid_shape[1] != NUM_POINTS:
            raise ValueError('Folding grid must hold {} points'.format(NUM_POINTS))
        u = torch.linspace(-1, 1, grid_shape[0])
        v = torch.linspace(-1, 1, grid_shape[1])
        self.register_buffer('grid', torch.stack(torch.meshgrid(u, v, indexing='ij'), dim=-1).view(-1, 2))
        self.fold1 = nn.Sequential(SharedMLP(global_width + 2, hidden), nn.Linear(hidden[-1], 3))
        self.fold2 = nn.Sequential(SharedMLP(global_width + 3, hidden), nn.Linear(hidden[-1], 3))
        self.approximation = True

    def forward(self, global_feature, skips=()):
        code = global_feature.unsqueeze(1).expand(-1, NUM_POINTS, -1)
        grid = self.grid.unsqueeze(0).expand(global_feature.shape[0], -1, -1)
        folded = self.fold1(torch.cat([code, grid], dim=-1))
        return self.fold2(torch.cat([code, folded], dim=-1))


@gin.configurable('TopNetDecoder')
class TopNetDecoder(nn.Module):
    """Rooted tree decoder: every node emits its children from its own feature and the global code."""

    def __init__(self, global_width=512, degrees=(8, 8, 8, 4), node_width=8, hidden=(256, 64)):
        super().__init__()
        if int(np.prod(degrees)) != NUM_POINTS:
            raise ValueError('TopNet degrees yield {} points instead of {}'.format(int(np.prod(degrees)),
                                                                                 NUM_POINTS))
        self.degrees = degrees
        self.node_width = node_width
        self.root = nn.Sequential(SharedMLP(global_width, hidden), nn.Linear(hidden[-1], degrees[0] * node_width))
        levels = []
        for i, degree in enumerate(degrees[1:]):
            out_width = 3 if i == len(degrees) - 2 else node_width
            levels.append(nn.Sequential(SharedMLP(global_width + node_width, hidden),
                                        nn.Linear(hidden[-1], degree * out_width)))
        self.levels = nn.ModuleList(levels)
        self.approximation = True

    def forward(self, global_feature, skips=()):
        bs = global_feature.shape[0]
        nodes = torch.tanh(self.root(global_feature)).view(bs, self.degrees[0], self.node_width)
        for i, level in enumerate(self.levels):
            code = global_feature.unsqueeze(1).expand(-1, nodes.shape[1], -1)
            out = level(torch.cat([nodes, code], dim=-1))
            last = i == len(self.levels) - 1
            nodes = out.view(bs, -1, 3 if last else self.node_width)
            if not last:
                nodes = torch.tanh(nodes)
        return nodes


@gin.configurable('PointNet2Classifier')
class PointNet2Classifier(nn.Module):
    """Set-abstraction encoder with a dense head emitting one real/generated logit per cloud."""

    def __init__(self, encoder=None, hidden=256):
        super().__init__()
        self.encoder = HierarchicalEncoder() if encoder is None else encoder
        self.logit = nn.Sequential(nn.Linear(self.encoder.out_width, hidden), nn.ReLU(), nn.Linear(hidden, 1))

    def forward(self, cloud):
        global_feature, _ = self.encoder(cloud)
        return self.logit(global_feature).squeeze(-1)

    def true_probability(self, cloud):
        return torch.sigmoid(self(cloud))
