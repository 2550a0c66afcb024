from typing import List, NamedTuple, Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from hspn.common.constants import LEAKY_SLOPE
from hspn.geometry.sampling import GroupingSpec, set_abstraction


class TreeState(NamedTuple):
    """Per-level features of the branching generator.

    levels[l] has shape [B, n_l, w_l]; ancestors[l] is a LongTensor [n_l, l] whose column j holds the
    index of the point's ancestor at level j.
    """
    levels: List[torch.Tensor]
    ancestors: List[torch.Tensor]

    @classmethod
    def from_root(cls, root):
        if root.dim() == 2:
            root = root.unsqueeze(1)
        n = root.shape[1]
        return cls(levels=[root], ancestors=[torch.zeros(n, 0, dtype=torch.long, device=root.device)])


class SkipFeature(NamedTuple):
    level: int
    points: torch.Tensor
    features: torch.Tensor


class SharedMLP(nn.Sequential):
    """Per-point map applied on the last dimension."""

    def __init__(self, in_width, widths, activation=nn.ReLU, last_activation=True):
        layers = []
        for i, width in enumerate(widths):
            layers.append(nn.Linear(in_width, width))
            if last_activation or i < len(widths) - 1:
                layers.append(activation())
            in_width = width
        super().__init__(*layers)
        self.out_width = in_width


class SetAbstraction(nn.Module):
    def __init__(self, spec: GroupingSpec, in_width=0):
        super().__init__()
        self.spec = spec
        self.mlp = SharedMLP(3 + in_width, spec.mlp_widths)

    def forward(self, points, features=None):
        # FPS starts from the point farthest from the centroid so the level does not depend on input order
        return set_abstraction(points, features, self.spec, self.mlp, seed_index=None)


class Branching(nn.Module):
    """Maps each point of a level to `degree` children through per-child learned maps."""

    def __init__(self, width, degree):
        super().__init__()
        if degree < 1:
            raise ValueError('Branching degree must be >= 1, got {}'.format(degree))
        self.width = width
        self.degree = degree
        self.children_map = nn.Linear(width, width * degree)

    def forward(self, state: TreeState, level):
        parent = state.levels[level]
        bs, n, width = parent.shape
        children = F.leaky_relu(self.children_map(parent), LEAKY_SLOPE).view(bs, n * self.degree, width)

        # child i * degree + c extends the path of parent i with i
        paths = state.ancestors[level].repeat_interleave(self.degree, dim=0)
        parents = torch.arange(n, device=parent.device).repeat_interleave(self.degree).unsqueeze(1)
        ancestors = torch.cat([paths, parents], dim=1)

        return TreeState(levels=state.levels[:level + 1] + [children],
                         ancestors=state.ancestors[:level + 1] + [ancestors])


class TreeGCNBlock(nn.Module):
    """Graph convolution over a tree level: loop term, ancestor term and bias.

    The loop term is a K-support layer: the input is expanded into K support nodes and their
    images are summed into the output width. Every ancestor level j contributes through its own map.
    """

    def __init__(self, in_width, out_width, ancestor_widths, support=10, activation=True):
        super().__init__()
        if support < 1:
            raise ValueError('Support size must be >= 1, got {}'.format(support))
        self.in_width = in_width
        self.out_width = out_width
        self.support_nodes = nn.Linear(in_width, in_width * support, bias=False)
        self.support_merge = nn.Linear(in_width * support, out_width, bias=False)
        self.ancestor_maps = nn.ModuleList([nn.Linear(w, out_width, bias=False) for w in ancestor_widths])
        self.bias = nn.Parameter(torch.zeros(out_width))
        self.activation = activation
        nn.init.uniform_(self.bias, -1.0 / out_width ** 0.5, 1.0 / out_width ** 0.5)

    def forward(self, state: TreeState, level):
        features = state.levels[level]
        if features.shape[-1] != self.in_width:
            raise ValueError('Level {} has width {}, block expects {}'.format(level, features.shape[-1],
                                                                              self.in_width))
        ancestors = state.ancestors[level]
        if ancestors.shape[1] != len(self.ancestor_maps):
            raise ValueError('Level {} has {} ancestors, block expects {}'.format(level, ancestors.shape[1],
                                                                                len(self.ancestor_maps)))

        out = self.support_merge(self.support_nodes(features)) + self.bias
        for j, ancestor_map in enumerate(self.ancestor_maps):
            # map on the (smaller) ancestor level, then broadcast to the descendants
            out = out + ancestor_map(state.levels[j])[:, ancestors[:, j]]
        if self.activation:
            out = F.leaky_relu(out, LEAKY_SLOPE)
        return out


class AttentionGateBlock(nn.Module):
    """Gated attention of the points P over the points Q; self-attention when Q is absent."""

    def __init__(self, p_width, q_width=None, score_width=64):
        super().__init__()
        q_width = p_width if q_width is None else q_width
        self.p_width = p_width
        self.q_width = q_width
        self.f1 = nn.Linear(p_width, score_width)
        self.f2 = nn.Linear(q_width, score_width)
        self.f3 = nn.Linear(q_width, p_width)
        self.f4 = nn.Linear(p_width, p_width)

    def attention(self, p, q):
        return torch.softmax(torch.bmm(self.f1(p), self.f2(q).transpose(1, 2)), dim=-1)

    def forward(self, p, q=None, return_scores=False):
        if q is None:
            q = p
        if p.shape[-1] != self.p_width or q.shape[-1] != self.q_width:
            raise ValueError('AGB expects widths ({}, {}), got ({}, {})'.format(self.p_width, self.q_width,
                                                                                p.shape[-1], q.shape[-1]))
        scores = self.attention(p, q)
        out = self.f4(p + torch.bmm(scores, self.f3(q)))
        if return_scores:
            return out, scores
        return out


class DecodeBlock(nn.Module):
    """One level of the hierarchical decoder.

    Every input point emits `factor` children through a dense expansion. The children then attend to
    the pipeline features of the mirrored encoder level (cross-attention) or, without pipeline, to
    themselves. `project` maps the result to coordinates.
    """

    def __init__(self, level, in_width, out_width, factor, skip_width=None, use_agb=True, project=False,
                 score_width=64):
        super().__init__()
        self.level = level
        self.factor = factor
        self.out_width = out_width
        self.skip_width = skip_width
        self.expand = nn.Linear(in_width, out_width * factor)
        self.agb = AttentionGateBlock(out_width, skip_width, score_width) if use_agb else None
        self.project = nn.Linear(out_width, 3) if project else None

    @property
    def needs_skip(self):
        return self.skip_width is not None

    def forward(self, features, skip: Optional[SkipFeature] = None):
        if self.needs_skip and skip is None:
            raise ValueError('Decoding block {} needs pipeline features'.format(self.level))
        if not self.needs_skip and skip is not None:
            raise ValueError('Decoding block {} takes no pipeline features'.format(self.level))

        bs, n, _ = features.shape
        out = F.leaky_relu(self.expand(features), LEAKY_SLOPE).view(bs, n * self.factor, self.out_width)
        if self.agb is not None:
            out = self.agb(out, None if skip is None else skip.features)
        if self.project is not None:
            out = self.project(out)
        return out
