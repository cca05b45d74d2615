"""Evaluation protocols: per-generator cross-model tables and the
perturbation robustness sweep.

Perturbations are applied to the RAW images; the whole channel-removal +
reconstruction + error pipeline is re-run on the perturbed inputs before
scoring, matching how a deployed detector would see them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .detector import ClassifierCheckpoint, LabeledErrorMap, classifier_forward_batch
from .diffusion import derive_seed
from .errors import ArgumentError, DataError
from .image import Channel, RGBImage
from .metrics import ScoredSet, accuracy, auc, average_precision
from .perturb import gaussian_blur, gaussian_noise, jpeg_compress
from .report import AVERAGE_ROW, EvalReport, EvalRow, SweepPoint
from .residual import FeaturePipeline


def score_maps(ckpt: ClassifierCheckpoint, maps: list) -> np.ndarray:
    """Sigmoid probabilities for a list of ErrorMap / LabeledErrorMap."""
    plain = [m.map if isinstance(m, LabeledErrorMap) else m for m in maps]
    z = classifier_forward_batch(plain, ckpt)
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)), np.exp(z) / (1.0 + np.exp(z)))


def cross_model_eval(ckpt: ClassifierCheckpoint, manifests: dict[str, list[LabeledErrorMap]],
                     threshold: float = 0.5, channel: str = "G",
                     split: str = "test") -> EvalReport:
    """One ACC/AUC/AP row per generator plus an arithmetic-mean Average row.

    Each manifest value must mix real (label 0) and that generator's fake
    (label 1) maps.
    """
    if not manifests:
        raise ArgumentError("no evaluation manifests supplied")
    rows: list[EvalRow] = []
    for generator in sorted(manifests):
        maps = manifests[generator]
        labels = np.array([m.label for m in maps])
        if not ((labels == 0).any() and (labels == 1).any()):
            raise DataError(f"manifest {generator!r} must contain real and generated samples")
        probs = score_maps(ckpt, maps)
        scored = ScoredSet(probs, labels)
        rows.append(EvalRow(
            channel=channel, generator=generator, split=split,
            acc=accuracy(scored, threshold), auc=auc(scored),
            ap=average_precision(scored),
            n_real=int((labels == 0).sum()), n_fake=int((labels == 1).sum()),
        ))
    rows.append(EvalRow(
        channel=channel, generator=AVERAGE_ROW, split=split,
        acc=float(np.mean([r.acc for r in rows])),
        auc=float(np.mean([r.auc for r in rows])),
        ap=float(np.mean([r.ap for r in rows])),
        n_real=int(sum(r.n_real for r in rows)),
        n_fake=int(sum(r.n_fake for r in rows)),
    ))
    return EvalReport(rows=rows)


@dataclass(frozen=True)
class PerturbationGrid:
    jpeg_qualities: tuple = (90, 70, 50, 40, 30)
    blur_sigmas: tuple = (0.0, 0.5, 1.0, 2.0, 3.0)
    noise_sigmas: tuple = (0.0, 0.05, 0.10, 0.15, 0.30)

    def cells(self) -> list[tuple[str, float]]:
        out = [("jpeg", float(q)) for q in self.jpeg_qualities]
        out += [("blur", float(s)) for s in self.blur_sigmas]
        out += [("noise", float(s)) for s in self.noise_sigmas]
        if not out:
            raise ArgumentError("perturbation grid is empty")
        return out


def _apply_perturbation(img: RGBImage, name: str, level: float, seed: int) -> RGBImage:
    if name == "jpeg":
        return jpeg_compress(img, int(level))
    if name == "blur":
        return gaussian_blur(img, level)
    if name == "noise":
        return gaussian_noise(img, level, seed)
    raise ArgumentError(f"unknown perturbation {name!r}")


def robustness_sweep(ckpt: ClassifierCheckpoint, labeled_images: list[tuple[RGBImage, int, str]],
                     pipeline: FeaturePipeline, grid: PerturbationGrid,
                     channel: Channel = Channel.G, split: str = "test") -> EvalReport:
    """AUC/AP per (perturbation, level) cell; unperturbed baseline included.

    `labeled_images` holds (raw image, label, image id) triples. Every cell
    re-featurizes the perturbed images through `pipeline` before scoring.
    """
    cells = grid.cells()
    labels = np.array([label for _, label, _ in labeled_images])
    if not ((labels == 0).any() and (labels == 1).any()):
        raise DataError("sweep evaluation set must contain both classes")

    points: list[SweepPoint] = []

    def evaluate(images: list[RGBImage], ids: list[str], name: str, level: float):
        maps = pipeline.error_maps(images, ids, channel)
        probs = score_maps(ckpt, maps)
        scored = ScoredSet(probs, labels)
        points.append(SweepPoint(
            channel=channel.name, perturbation=name, level=level, split=split,
            auc=auc(scored), ap=average_precision(scored), n=len(images),
        ))

    base_images = [img for img, _, _ in labeled_images]
    base_ids = [image_id for _, _, image_id in labeled_images]
    evaluate(base_images, base_ids, "none", 0.0)

    for name, level in cells:
        perturbed, ids = [], []
        for img, _, image_id in labeled_images:
            noise_seed = derive_seed(pipeline.seed, "perturb", name, level, image_id)
            perturbed.append(_apply_perturbation(img, name, level, noise_seed))
            # identity levels (blur/noise sigma 0) share the clean cache
            if name != "jpeg" and level == 0.0:
                ids.append(image_id)
            else:
                ids.append(f"{image_id}#{name}={level:g}")
        evaluate(perturbed, ids, name, level)

    return EvalReport(sweep_curves=points)
