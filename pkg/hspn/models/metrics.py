from typing import Callable

import torch
from ignite.exceptions import NotComputableError
from ignite.metrics import Metric
from ignite.metrics.metric import reinit__is_reduced

from hspn.geometry.distances import chamfer, pc_to_pc_error


class Chamfer(Metric):
    """Running mean of the per-sample chamfer distance over (pred, target) batches.

    The per-sample values are kept so that reports can list them next to the aggregate.
    """

    def __init__(self, output_transform: Callable = lambda x: x, scale: float = 1.0) -> None:
        self.scale = scale
        super(Chamfer, self).__init__(output_transform=output_transform)

    @reinit__is_reduced
    def reset(self) -> None:
        self._values = []

    @reinit__is_reduced
    def update(self, output) -> None:
        pred, target = output[0].detach(), output[1].detach()
        values = chamfer(pred, target)
        self._values.extend((values.reshape(-1).double() * self.scale).cpu().tolist())

    @property
    def values(self):
        return list(self._values)

    def compute(self) -> float:
        if not self._values:
            raise NotComputableError('Chamfer must have at least one example before it can be computed.')
        return float(torch.tensor(self._values, dtype=torch.float64).mean())


class PCToPCError(Chamfer):
    """Running mean of the per-sample mean PC-to-PC error of the predictions."""

    @reinit__is_reduced
    def update(self, output) -> None:
        pred, target = output[0].detach(), output[1].detach()
        values = pc_to_pc_error(pred, target).double().mean(dim=-1)
        self._values.extend((values.reshape(-1) * self.scale).cpu().tolist())
