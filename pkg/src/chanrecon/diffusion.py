"""DDPM machinery: forward noising, denoiser training, reverse denoising,
and the reconstruction operator applied to channel-removed images.

Conventions:
  - timesteps are 1-based, t in [1, T]; alpha_bar_0 == 1 is the identity.
  - the network predicts the injected noise (eps-prediction); the posterior
    mean is derived algebraically from it.
  - reverse-process variance is fixed to beta_t (not learned).
  - a clean corrupted image enters the chain by forward-noising to t_star and
    denoising back down; t_star is configurable (default T/2).

Array ops take H x W x 3 (or N x H x W x 3) float arrays; the torch network
is an internal detail of the checkpoint.
"""

from __future__ import annotations

import copy
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from . import checkpoints as ckpt_io
from .errors import CheckpointError, DataError, DimensionError, TrainingError
from .image import RGBImage
from .nets import build_denoiser
from .schedule import VarianceSchedule


@dataclass(frozen=True)
class NoiseTensor:
    """Standard-normal noise with the seed that produced it."""

    data: np.ndarray = field(repr=False)
    seed: int | None = None


def sample_noise(shape, seed: int) -> NoiseTensor:
    rng = np.random.default_rng(seed)
    return NoiseTensor(rng.standard_normal(shape).astype(np.float64), seed=seed)


def _as_array(noise) -> np.ndarray:
    return noise.data if isinstance(noise, NoiseTensor) else np.asarray(noise)


def derive_seed(*parts) -> int:
    """Stable sub-seed from heterogeneous parts (used for per-image noise)."""
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def forward_step(x_prev: np.ndarray, t: int, sched: VarianceSchedule, noise) -> np.ndarray:
    """One forward transition: sqrt(1-beta_t) * x_prev + sqrt(beta_t) * eps."""
    beta = sched.beta(t)
    eps = _as_array(noise)
    if eps.shape != np.shape(x_prev):
        raise DimensionError(f"noise shape {eps.shape} != input shape {np.shape(x_prev)}")
    return np.sqrt(1.0 - beta) * np.asarray(x_prev) + np.sqrt(beta) * eps


def forward_noise(x0: np.ndarray, t: int, sched: VarianceSchedule, noise) -> np.ndarray:
    """Closed-form jump to step t: sqrt(abar_t) * x0 + sqrt(1-abar_t) * eps.

    t == 0 is accepted and returns x0 unchanged (abar_0 == 1 convention).
    """
    abar = sched.alpha_bar(t)
    eps = _as_array(noise)
    if eps.shape != np.shape(x0):
        raise DimensionError(f"noise shape {eps.shape} != input shape {np.shape(x0)}")
    return np.sqrt(abar) * np.asarray(x0) + np.sqrt(1.0 - abar) * eps


def predict_x0(x_t: np.ndarray, t: int, eps: np.ndarray, sched: VarianceSchedule) -> np.ndarray:
    """Algebraic inversion of forward_noise: (x_t - sqrt(1-abar_t) eps) / sqrt(abar_t)."""
    abar = sched.alpha_bar(t)
    return (np.asarray(x_t) - np.sqrt(1.0 - abar) * np.asarray(eps)) / np.sqrt(abar)


@dataclass
class DenoiserCheckpoint:
    """Learned noise predictor bound to the schedule it was trained with."""

    model: torch.nn.Module
    arch_config: dict
    schedule_fingerprint: str
    train_meta: dict = field(default_factory=dict)

    @classmethod
    def from_model(cls, model: torch.nn.Module, sched: VarianceSchedule,
                   arch_config: dict | None = None, train_meta: dict | None = None):
        return cls(
            model=model,
            arch_config=arch_config or {"arch": "custom"},
            schedule_fingerprint=sched.fingerprint,
            train_meta=train_meta or {},
        )

    def check_schedule(self, sched: VarianceSchedule) -> None:
        if self.schedule_fingerprint != sched.fingerprint:
            raise CheckpointError(
                "checkpoint was trained with a different variance schedule "
                f"({self.schedule_fingerprint} != {sched.fingerprint})"
            )

    def predict_eps(self, x_batch: np.ndarray, t_batch: np.ndarray) -> np.ndarray:
        """eps_theta on an N x H x W x 3 batch; returns the same layout."""
        self.model.eval()
        with torch.no_grad():
            x = torch.from_numpy(np.ascontiguousarray(x_batch, dtype=np.float32))
            x = x.permute(0, 3, 1, 2)
            t = torch.as_tensor(np.asarray(t_batch), dtype=torch.long)
            eps = self.model(x, t)
        return eps.permute(0, 2, 3, 1).numpy().astype(np.float64)

    def save(self, path) -> None:
        ckpt_io.write_container(
            path, kind="denoiser",
            arch_config=self.arch_config,
            state_dict=self.model.state_dict(),
            train_meta=self.train_meta,
            extra={"schedule_fingerprint": self.schedule_fingerprint},
        )

    @classmethod
    def load(cls, path) -> "DenoiserCheckpoint":
        payload = ckpt_io.read_container(path, kind="denoiser")
        model = build_denoiser(payload["arch_config"])
        model.load_state_dict(payload["state_dict"])
        model.eval()
        return cls(
            model=model,
            arch_config=payload["arch_config"],
            schedule_fingerprint=payload["schedule_fingerprint"],
            train_meta=payload["train_meta"],
        )


def denoise_step(x_t: np.ndarray, t: int, ckpt: DenoiserCheckpoint,
                 sched: VarianceSchedule, noise=None) -> np.ndarray:
    """One reverse step x_t -> x_{t-1}.

    mu = (x_t - beta_t / sqrt(1-abar_t) * eps_theta(x_t, t)) / sqrt(1-beta_t),
    then adds sqrt(beta_t) * noise; at t == 1 the noise term is dropped.
    `noise=None` means a noiseless (deterministic) step.
    """
    ckpt.check_schedule(sched)
    beta = sched.beta(t)
    x = np.asarray(x_t, dtype=np.float64)
    single = x.ndim == 3
    batch = x[None] if single else x
    eps = ckpt.predict_eps(batch, np.full(batch.shape[0], t))
    mu = (batch - (beta / math.sqrt(1.0 - sched.alpha_bar(t))) * eps) / math.sqrt(1.0 - beta)
    if noise is not None and t > 1:
        z = _as_array(noise)
        z = z[None] if (single and z.ndim == 3) else z
        if z.shape != batch.shape:
            raise DimensionError(f"noise shape {z.shape} != state shape {batch.shape}")
        mu = mu + math.sqrt(beta) * z
    return mu[0] if single else mu


def _reverse_chain(x: np.ndarray, t_start: int, ckpt: DenoiserCheckpoint,
                   sched: VarianceSchedule, rngs: list[np.random.Generator] | None) -> np.ndarray:
    """Run denoise_step from t_start down to 1 on an N x H x W x 3 batch.

    `rngs` holds one generator per batch item (stochastic mode) or None for
    the all-noise-zeroed deterministic mode.
    """
    for t in range(t_start, 0, -1):
        if rngs is not None and t > 1:
            z = np.stack([rng.standard_normal(x.shape[1:]) for rng in rngs])
            x = denoise_step(x, t, ckpt, sched, noise=z)
        else:
            x = denoise_step(x, t, ckpt, sched, noise=None)
    return x


def reconstruct_batch(arrays: np.ndarray, ckpt: DenoiserCheckpoint, sched: VarianceSchedule,
                      t_star: int, seeds: list[int], stochastic: bool = True) -> np.ndarray:
    """Vectorized reconstruction of a batch; one noise stream per item.

    Each item's noise is drawn from its own seeded generator, so the result
    for a given (image, seed) does not depend on which other images share
    the batch call.
    """
    if not 1 <= t_star <= sched.T:
        raise IndexError(f"t_star {t_star} outside [1, {sched.T}]")
    x = np.asarray(arrays, dtype=np.float64)
    if x.ndim != 4:
        raise DimensionError(f"expected N x H x W x 3 batch, got shape {x.shape}")
    if len(seeds) != x.shape[0]:
        raise DimensionError("one seed per batch item required")
    rngs = [np.random.default_rng(s) for s in seeds]
    eps0 = np.stack([rng.standard_normal(x.shape[1:]) for rng in rngs])
    x = forward_noise(x, t_star, sched, eps0)
    x = _reverse_chain(x, t_star, ckpt, sched, rngs if stochastic else None)
    return np.clip(x, 0.0, 1.0)


def reconstruct(x_corrupt: RGBImage, ckpt: DenoiserCheckpoint, sched: VarianceSchedule,
                t_star: int, seed: int, stochastic: bool = True) -> RGBImage:
    """Reconstruction operator: noise the input to t_star, denoise back to 0.

    Deterministic for a fixed seed; output clamped to [0, 1].
    """
    out = reconstruct_batch(
        x_corrupt.data[None].astype(np.float64), ckpt, sched, t_star, [seed], stochastic
    )
    return RGBImage(out[0])


def sample_images(ckpt: DenoiserCheckpoint, sched: VarianceSchedule, n: int,
                  resolution: int, seed: int) -> list[RGBImage]:
    """Ancestral sampling from pure noise; the toy 'generated' images."""
    rngs = [np.random.default_rng(derive_seed(seed, "sample", i)) for i in range(n)]
    x = np.stack([rng.standard_normal((resolution, resolution, 3)) for rng in rngs])
    x = _reverse_chain(x, sched.T, ckpt, sched, rngs)
    x = np.clip(x, 0.0, 1.0)
    return [RGBImage(x[i]) for i in range(n)]


@dataclass
class DenoiserTrainConfig:
    epochs: int = 30
    batch_size: int = 64
    lr: float = 2e-3
    base_width: int = 32
    time_dim: int = 128

    def arch_config(self) -> dict:
        return {"arch": "unet_small", "base_width": self.base_width, "time_dim": self.time_dim}


def train_denoiser(dataset, sched: VarianceSchedule, config: DenoiserTrainConfig,
                   seed: int) -> DenoiserCheckpoint:
    """Train the eps-prediction network with the standard MSE objective.

    Deterministic for a fixed seed on CPU. Divergence (non-finite loss)
    raises TrainingError carrying the last finite-loss checkpoint.
    train_meta records the loss curve and the zero-predictor baseline
    (mean ||eps||^2 over the same batches) as a sanity reference.
    """
    images = [img.data if isinstance(img, RGBImage) else np.asarray(img) for img in dataset]
    if len(images) == 0:
        raise DataError("cannot train a denoiser on an empty dataset")
    shapes = {img.shape for img in images}
    if len(shapes) != 1:
        raise DataError(f"all training images must share one resolution, got {shapes}")

    torch.manual_seed(seed)
    model = build_denoiser(config.arch_config())
    gen = torch.Generator().manual_seed(derive_seed(seed, "batches"))
    data = torch.from_numpy(np.stack(images).astype(np.float32)).permute(0, 3, 1, 2)
    n = data.shape[0]
    abar = torch.from_numpy(sched.alpha_bars.astype(np.float32))
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)

    loss_curve: list[float] = []
    zero_losses: list[float] = []
    last_good: dict | None = None
    model.train()
    for epoch in range(config.epochs):
        perm = torch.randperm(n, generator=gen)
        epoch_loss, epoch_zero, batches = 0.0, 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            x0 = data[idx]
            t = torch.randint(1, sched.T + 1, (idx.numel(),), generator=gen)
            eps = torch.randn(x0.shape, generator=gen)
            a = abar[t - 1].view(-1, 1, 1, 1)
            x_t = torch.sqrt(a) * x0 + torch.sqrt(1.0 - a) * eps
            pred = model(x_t, t)
            loss = (pred - eps).square().mean()
            if not torch.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch + 1}; training diverged",
                    last_checkpoint=_package_denoiser(last_good, config, sched, seed,
                                                      loss_curve, zero_losses),
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_loss += float(loss.detach())
            epoch_zero += float(eps.square().mean())
            batches += 1
        loss_curve.append(epoch_loss / batches)
        zero_losses.append(epoch_zero / batches)
        last_good = copy.deepcopy(model.state_dict())

    return _package_denoiser(last_good, config, sched, seed, loss_curve, zero_losses)


def _package_denoiser(state_dict, config, sched, seed, loss_curve, zero_losses):
    model = build_denoiser(config.arch_config())
    if state_dict is not None:
        model.load_state_dict(state_dict)
    model.eval()
    return DenoiserCheckpoint(
        model=model,
        arch_config=config.arch_config(),
        schedule_fingerprint=sched.fingerprint,
        train_meta={
            "seed": seed,
            "epochs": len(loss_curve),
            "batch_size": config.batch_size,
            "lr": config.lr,
            "final_loss": loss_curve[-1] if loss_curve else None,
            "loss_curve": loss_curve,
            "zero_predictor_loss": zero_losses[-1] if zero_losses else None,
        },
    )
