"""Channel-removal reconstruction-error detection of AI-generated images.

Remove one RGB channel, reconstruct with a trainable denoising-diffusion
model, take the absolute reconstruction-error map, and classify real vs.
generated from that map; includes the evaluation and robustness harness.
"""

from .config import RunConfig, load_config
from .detector import (ClassifierCheckpoint, ClassifierTrainConfig, LabeledErrorMap,
                       bce_logits_loss, classifier_forward, predict, train_classifier)
from .diffusion import (DenoiserCheckpoint, DenoiserTrainConfig, NoiseTensor,
                        denoise_step, forward_noise, forward_step, predict_x0,
                        reconstruct, sample_images, sample_noise, train_denoiser)
from .errors import ChanreconError
from .evaluation import PerturbationGrid, cross_model_eval, robustness_sweep
from .image import Channel, RGBImage, load_image, remove_channel, save_image
from .manifest import DatasetManifest, build_manifest
from .metrics import ScoredSet, accuracy, auc, average_precision
from .perturb import gaussian_blur, gaussian_kernel1d, gaussian_noise, jpeg_compress
from .pipeline import audit, run_experiment
from .report import EvalReport, EvalRow, SweepPoint
from .residual import ErrorMap, FeaturePipeline, MapCache, channel_removed_error, compute_rre
from .schedule import VarianceSchedule, make_schedule
from .viz import export_visual_grid

__version__ = "0.1.0"

__all__ = [
    "Channel", "RGBImage", "load_image", "save_image", "remove_channel",
    "VarianceSchedule", "make_schedule",
    "NoiseTensor", "sample_noise", "forward_step", "forward_noise", "predict_x0",
    "denoise_step", "reconstruct", "sample_images",
    "DenoiserCheckpoint", "DenoiserTrainConfig", "train_denoiser",
    "ErrorMap", "compute_rre", "channel_removed_error", "FeaturePipeline", "MapCache",
    "ClassifierCheckpoint", "ClassifierTrainConfig", "LabeledErrorMap",
    "bce_logits_loss", "classifier_forward", "train_classifier", "predict",
    "ScoredSet", "accuracy", "auc", "average_precision",
    "jpeg_compress", "gaussian_blur", "gaussian_kernel1d", "gaussian_noise",
    "PerturbationGrid", "cross_model_eval", "robustness_sweep",
    "EvalReport", "EvalRow", "SweepPoint",
    "DatasetManifest", "build_manifest",
    "RunConfig", "load_config", "run_experiment", "audit", "export_visual_grid",
    "ChanreconError",
]
