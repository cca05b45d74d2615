import numpy as np
import torch

from chanrecon import DenoiserCheckpoint, RGBImage
from chanrecon.schedule import VarianceSchedule


class ZeroEpsNet(torch.nn.Module):
    """Stub noise predictor: always zero."""

    def forward(self, x, t):
        return torch.zeros_like(x)


class ConstantEpsNet(torch.nn.Module):
    """Stub noise predictor: a fixed tensor broadcast over the batch."""

    def __init__(self, eps_hwc: np.ndarray):
        super().__init__()
        tensor = torch.from_numpy(np.asarray(eps_hwc, dtype=np.float32))
        self.register_buffer("eps", tensor.permute(2, 0, 1))

    def forward(self, x, t):
        return self.eps.expand_as(x).clone()


def zero_eps_checkpoint(sched: VarianceSchedule) -> DenoiserCheckpoint:
    return DenoiserCheckpoint.from_model(ZeroEpsNet(), sched)


def constant_eps_checkpoint(sched: VarianceSchedule, eps_hwc) -> DenoiserCheckpoint:
    return DenoiserCheckpoint.from_model(ConstantEpsNet(eps_hwc), sched)


def random_rgb(rng: np.random.Generator, h=8, w=8) -> RGBImage:
    return RGBImage(rng.random((h, w, 3)))
