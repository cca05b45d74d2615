"""Binary classifier over error maps.

The network maps an H x W x 3 error map to a single pre-sigmoid logit; the
loss is the numerically stable logit form of binary cross-entropy,

    L = (1/N) sum_i [ log(1 + exp(-z_i)) + (1 - y_i) * z_i ],

with label 0 = real, 1 = generated. Training follows the regimen: AdamW,
ReduceLROnPlateau on validation loss, early stopping, pad-and-crop plus
horizontal-flip augmentation, classes balanced 1:1 per epoch by resampling.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from . import checkpoints as ckpt_io
from .errors import ArgumentError, DataError, DimensionError, TrainingError
from .nets import build_classifier
from .residual import ErrorMap


@dataclass(frozen=True)
class LabeledErrorMap:
    map: ErrorMap
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ArgumentError(f"label must be 0 (real) or 1 (generated), got {self.label!r}")


@dataclass
class ClassifierCheckpoint:
    model: torch.nn.Module
    arch_config: dict
    train_meta: dict = field(default_factory=dict)

    @property
    def input_size(self) -> int:
        return int(self.arch_config["input_size"])

    def save(self, path) -> None:
        ckpt_io.write_container(
            path, kind="classifier",
            arch_config=self.arch_config,
            state_dict=self.model.state_dict(),
            train_meta=self.train_meta,
        )

    @classmethod
    def load(cls, path) -> "ClassifierCheckpoint":
        payload = ckpt_io.read_container(path, kind="classifier")
        model = build_classifier(payload["arch_config"])
        model.load_state_dict(payload["state_dict"])
        model.eval()
        return cls(model=model, arch_config=payload["arch_config"],
                   train_meta=payload["train_meta"])


def bce_logits_loss(logits, labels) -> float:
    """Mean of log(1 + e^{-z}) + (1 - y) z, stable for |z| up to ~1e3.

    Uses softplus(-z) = max(-z, 0) + log1p(exp(-|z|)) so neither branch
    overflows.
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if z.ndim != 1 or y.ndim != 1 or z.size != y.size:
        raise ArgumentError("logits and labels must be equal-length 1-D sequences")
    if z.size == 0:
        raise ArgumentError("cannot compute a loss over an empty batch")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ArgumentError("labels must be 0 or 1")
    softplus_neg = np.maximum(-z, 0.0) + np.log1p(np.exp(-np.abs(z)))
    return float(np.mean(softplus_neg + (1.0 - y) * z))


def _maps_to_tensor(maps: list[LabeledErrorMap]) -> tuple[torch.Tensor, torch.Tensor]:
    x = torch.from_numpy(np.stack([m.map.data for m in maps]).astype(np.float32))
    y = torch.tensor([m.label for m in maps], dtype=torch.float32)
    return x.permute(0, 3, 1, 2), y


def _torch_loss(z: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    # same logit form as bce_logits_loss, kept in torch for autograd
    return (F.softplus(-z) + (1.0 - y) * z).mean()


def _augment(x: torch.Tensor, gen: torch.Generator, padding: int, hflip: bool) -> torch.Tensor:
    """Zero-pad-and-crop plus optional horizontal flip, drawn from `gen`."""
    n, _, h, w = x.shape
    padded = F.pad(x, (padding,) * 4)
    dx = torch.randint(0, 2 * padding + 1, (n,), generator=gen)
    dy = torch.randint(0, 2 * padding + 1, (n,), generator=gen)
    flip = (torch.rand(n, generator=gen) < 0.5) if hflip else torch.zeros(n, dtype=torch.bool)
    out = torch.empty_like(x)
    for i in range(n):
        crop = padded[i, :, dy[i]:dy[i] + h, dx[i]:dx[i] + w]
        out[i] = torch.flip(crop, dims=[2]) if flip[i] else crop
    return out


@dataclass
class ClassifierTrainConfig:
    arch: str = "small_cnn"
    base_width: int = 32
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    weight_decay: float = 1e-4
    plateau_factor: float = 0.5
    plateau_patience: int = 2
    early_stop_patience: int = 5
    crop_padding: int = 4
    hflip: bool = True
    mixed_precision: bool = False

    def arch_config(self, input_size: int) -> dict:
        return {"arch": self.arch, "base_width": self.base_width, "input_size": input_size}


def _balanced_indices(labels: torch.Tensor, gen: torch.Generator) -> torch.Tensor:
    """1:1 class mix per epoch: minority class resampled with replacement."""
    idx0 = torch.nonzero(labels == 0).flatten()
    idx1 = torch.nonzero(labels == 1).flatten()
    target = max(idx0.numel(), idx1.numel())

    def grow(idx: torch.Tensor) -> torch.Tensor:
        if idx.numel() == target:
            return idx
        extra = idx[torch.randint(0, idx.numel(), (target - idx.numel(),), generator=gen)]
        return torch.cat([idx, extra])

    merged = torch.cat([grow(idx0), grow(idx1)])
    return merged[torch.randperm(merged.numel(), generator=gen)]


def train_classifier(train: list[LabeledErrorMap], val: list[LabeledErrorMap],
                     config: ClassifierTrainConfig, seed: int) -> ClassifierCheckpoint:
    """Train the detector; returns the best-validation checkpoint.

    Early stopping: training halts once validation loss has failed to improve
    for more than `early_stop_patience` consecutive epochs. Deterministic for
    a fixed seed on CPU.
    """
    for name, split in (("train", train), ("val", val)):
        if len(split) == 0:
            raise DataError(f"{name} split is empty")
        labels = {m.label for m in split}
        if labels != {0, 1}:
            raise DataError(f"{name} split must contain both classes, got labels {labels}")

    x_train, y_train = _maps_to_tensor(train)
    x_val, y_val = _maps_to_tensor(val)
    input_size = x_train.shape[-1]
    if x_train.shape[-2] != input_size:
        raise DimensionError("classifier expects square maps")

    torch.manual_seed(seed)
    model = build_classifier(config.arch_config(input_size))
    gen = torch.Generator().manual_seed(seed)
    opt = torch.optim.AdamW(model.parameters(), lr=config.lr,
                            weight_decay=config.weight_decay)
    scheduler = torch.optim.lr_scheduler.ReduceLROnPlateau(
        opt, mode="min", factor=config.plateau_factor, patience=config.plateau_patience
    )

    best_val = float("inf")
    best_state = copy.deepcopy(model.state_dict())
    best_epoch = 0
    bad_epochs = 0
    epochs_run = 0
    val_curve: list[float] = []

    for epoch in range(1, config.epochs + 1):
        epochs_run = epoch
        model.train()
        order = _balanced_indices(y_train, gen)
        for start in range(0, order.numel(), config.batch_size):
            idx = order[start:start + config.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            if config.crop_padding > 0 or config.hflip:
                xb = _augment(xb, gen, config.crop_padding, config.hflip)
            if config.mixed_precision:
                with torch.autocast("cpu", dtype=torch.bfloat16):
                    loss = _torch_loss(model(xb), yb)
            else:
                loss = _torch_loss(model(xb), yb)
            if not torch.isfinite(loss):
                raise TrainingError(
                    f"non-finite training loss at epoch {epoch}",
                    last_checkpoint=_package_classifier(best_state, config, input_size,
                                                        seed, best_val, best_epoch,
                                                        epochs_run, val_curve, True),
                )
            opt.zero_grad()
            loss.backward()
            opt.step()

        model.eval()
        with torch.no_grad():
            val_loss = float(_torch_loss(model(x_val), y_val))
        if not np.isfinite(val_loss):
            raise TrainingError(
                f"non-finite validation loss at epoch {epoch}",
                last_checkpoint=_package_classifier(best_state, config, input_size, seed,
                                                    best_val, best_epoch, epochs_run,
                                                    val_curve, True),
            )
        val_curve.append(val_loss)
        scheduler.step(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_state = copy.deepcopy(model.state_dict())
            best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs > config.early_stop_patience:
                break

    return _package_classifier(best_state, config, input_size, seed, best_val,
                               best_epoch, epochs_run, val_curve,
                               epochs_run < config.epochs)


def _package_classifier(state, config, input_size, seed, best_val, best_epoch,
                        epochs_run, val_curve, early_stopped):
    model = build_classifier(config.arch_config(input_size))
    model.load_state_dict(state)
    model.eval()
    return ClassifierCheckpoint(
        model=model,
        arch_config=config.arch_config(input_size),
        train_meta={
            "seed": seed,
            "epochs_run": epochs_run,
            "best_epoch": best_epoch,
            "best_val_loss": best_val,
            "val_curve": val_curve,
            "early_stopped": bool(early_stopped),
        },
    )


def classifier_forward(emap: ErrorMap, ckpt: ClassifierCheckpoint) -> float:
    """Single-map logit; deterministic in eval mode (always full precision)."""
    return classifier_forward_batch([emap], ckpt)[0]


def classifier_forward_batch(maps: list[ErrorMap], ckpt: ClassifierCheckpoint) -> np.ndarray:
    size = ckpt.input_size
    for m in maps:
        if m.data.shape[0] != size or m.data.shape[1] != size:
            raise DimensionError(
                f"map resolution {m.data.shape[:2]} != classifier input size {size}"
            )
    x = torch.from_numpy(np.stack([m.data for m in maps]).astype(np.float32))
    x = x.permute(0, 3, 1, 2)
    ckpt.model.eval()
    with torch.no_grad():
        z = ckpt.model(x)
    return z.numpy().astype(np.float64)


def predict(emap: ErrorMap, ckpt: ClassifierCheckpoint, threshold: float = 0.5) -> tuple[float, int]:
    """(probability, label); label is 1 iff sigmoid(logit) >= threshold."""
    if not 0.0 < threshold < 1.0:
        raise ArgumentError(f"threshold must lie in (0, 1), got {threshold}")
    z = classifier_forward(emap, ckpt)
    prob = float(1.0 / (1.0 + np.exp(-z))) if z >= 0 else float(np.exp(z) / (1.0 + np.exp(z)))
    return prob, int(prob >= threshold)
