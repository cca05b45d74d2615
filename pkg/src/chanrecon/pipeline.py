"""Experiment orchestration: dataset materialization, denoiser training,
error-map caching, classifier training, evaluation, robustness, reporting.

Every artifact lands under the run's out_dir, carries the config hash, and
is reachable from the report metadata; `audit` verifies that closure.
Rerunning with an identical config reuses checkpoints and cached maps and
regenerates an identical report.
"""

from __future__ import annotations

import logging
import os

import numpy as np

from .config import RunConfig
from .detector import (ClassifierCheckpoint, ClassifierTrainConfig, LabeledErrorMap,
                       train_classifier)
from .diffusion import (DenoiserCheckpoint, DenoiserTrainConfig, derive_seed,
                        train_denoiser)
from .errors import AuditError, ConfigError, DataError
from .evaluation import PerturbationGrid, cross_model_eval, robustness_sweep
from .image import Channel, load_image
from .manifest import SPLITS, DatasetManifest, build_manifest
from .perturb import JPEG_CODEC_ID
from .report import EvalReport
from .residual import FeaturePipeline, MapCache
from .schedule import VarianceSchedule, make_schedule
from .toydata import generate_fake_images, generate_real_images, split_counts
from .viz import build_store_entry, export_visual_grid

log = logging.getLogger("chanrecon")


class ExperimentPaths:
    def __init__(self, out_dir: str):
        self.out_dir = os.path.abspath(out_dir)
        self.config_snapshot = os.path.join(self.out_dir, "config.snapshot.yaml")
        self.data_root = os.path.join(self.out_dir, "data")
        self.manifest = os.path.join(self.out_dir, "manifest.json")
        self.checkpoint_dir = os.path.join(self.out_dir, "checkpoints")
        self.denoiser = os.path.join(self.checkpoint_dir, "denoiser.pt")
        self.cache_dir = os.path.join(self.out_dir, "cache")
        self.report_json = os.path.join(self.out_dir, "report.json")
        self.report_text = os.path.join(self.out_dir, "report.txt")
        self.channel_table = os.path.join(self.out_dir, "channel_comparison.txt")
        self.grid = os.path.join(self.out_dir, "grid.png")

    def classifier(self, channel: Channel) -> str:
        return os.path.join(self.checkpoint_dir, f"classifier_{channel.name}.pt")


def _stage(name: str):
    log.info("stage: %s", name)


def _prepare_out_dir(cfg: RunConfig, paths: ExperimentPaths) -> None:
    os.makedirs(paths.out_dir, exist_ok=True)
    os.makedirs(paths.checkpoint_dir, exist_ok=True)
    if os.path.exists(paths.config_snapshot):
        from .config import load_config

        previous = load_config(paths.config_snapshot)
        if previous.hash() != cfg.hash():
            raise ConfigError(
                f"output directory {paths.out_dir} was produced by a different "
                "config; use a fresh out_dir or restore the original config"
            )
    else:
        cfg.save(paths.config_snapshot)


def _materialize_toy_reals(cfg: RunConfig, paths: ExperimentPaths) -> str:
    root = paths.data_root
    counts = split_counts(cfg.data.n_real, cfg.data.split_fractions)
    existing = sum(
        len(os.listdir(os.path.join(root, split, "real")))
        for split in SPLITS
        if os.path.isdir(os.path.join(root, split, "real"))
    )
    if existing == cfg.data.n_real:
        return root
    if existing not in (0, cfg.data.n_real):
        raise DataError(f"partial real-image tree under {root}: {existing} files")
    _stage("ingest: rendering toy real images")
    generate_real_images(root, cfg.data.n_real, cfg.resolution,
                         derive_seed(cfg.seed, "toydata"), cfg.data.split_fractions)
    log.info("rendered %d real images (%s)", cfg.data.n_real, counts)
    return root


def _train_or_load_denoiser(cfg: RunConfig, paths: ExperimentPaths,
                            sched: VarianceSchedule, manifest: DatasetManifest) -> DenoiserCheckpoint:
    if os.path.exists(paths.denoiser):
        ckpt = DenoiserCheckpoint.load(paths.denoiser)
        ckpt.check_schedule(sched)
        log.info("loaded denoiser checkpoint %s", paths.denoiser)
        return ckpt
    _stage("train-diffusion")
    real_entries = [e for e in manifest.entries if e.label == 0]
    if not real_entries:
        raise DataError("no real images available for denoiser training")
    images = [load_image(manifest.abspath(e), (cfg.resolution, cfg.resolution))
              for e in real_entries]
    train_cfg = DenoiserTrainConfig(
        epochs=cfg.denoiser.epochs, batch_size=cfg.denoiser.batch_size,
        lr=cfg.denoiser.lr, base_width=cfg.denoiser.base_width,
        time_dim=cfg.denoiser.time_dim,
    )
    ckpt = train_denoiser(images, sched, train_cfg, derive_seed(cfg.seed, "denoiser"))
    ckpt.train_meta["config_hash"] = cfg.hash()
    ckpt.save(paths.denoiser)
    log.info("denoiser final loss %.4f (zero-predictor %.4f)",
             ckpt.train_meta["final_loss"], ckpt.train_meta["zero_predictor_loss"])
    return ckpt


def _materialize_toy_fakes(cfg: RunConfig, paths: ExperimentPaths, sched: VarianceSchedule,
                           ckpt: DenoiserCheckpoint) -> None:
    tag = cfg.data.generator_tag
    counts = split_counts(cfg.data.n_fake, cfg.data.split_fractions)
    existing = sum(
        len(os.listdir(os.path.join(paths.data_root, split, tag)))
        for split in SPLITS
        if os.path.isdir(os.path.join(paths.data_root, split, tag))
    )
    if existing == cfg.data.n_fake:
        return
    if existing != 0:
        raise DataError(f"partial fake-image tree under {paths.data_root}: {existing} files")
    _stage("ingest: sampling toy generated images")
    generate_fake_images(paths.data_root, ckpt, sched, cfg.data.n_fake, cfg.resolution,
                         derive_seed(cfg.seed, "fakes"), cfg.data.split_fractions, tag,
                         batch_size=cfg.denoiser.batch_size)
    log.info("sampled %d generated images (%s)", cfg.data.n_fake, counts)


def _load_split_images(cfg: RunConfig, manifest: DatasetManifest, split: str):
    entries = manifest.for_split(split)
    images = [load_image(manifest.abspath(e), (cfg.resolution, cfg.resolution))
              for e in entries]
    return entries, images


def _featurize_split(pipeline: FeaturePipeline, entries, images, channel: Channel):
    return pipeline.error_maps(
        images, [e.path for e in entries], channel,
        labels=[e.label for e in entries],
        generators=[e.generator for e in entries],
        splits=[e.split for e in entries],
    )


STAGES = ("ingest", "train-diffusion", "featurize", "train-detector", "report")


def _save_manifest(manifest: DatasetManifest, cfg: RunConfig, path: str) -> DatasetManifest:
    manifest.config_hash = cfg.hash()
    manifest.save(path)
    return manifest


def run_experiment(cfg: RunConfig, until: str = "report"):
    """Execute the pipeline through stage `until`; returns (report, paths).

    Partial runs (until before "report") return (None, paths); completed
    stages persist their artifacts, so later invocations pick up where the
    run stopped.
    """
    if until not in STAGES:
        raise ConfigError(f"unknown stage {until!r}; expected one of {STAGES}")
    cfg.validate()
    paths = ExperimentPaths(cfg.out_dir)
    _prepare_out_dir(cfg, paths)
    sched = make_schedule(cfg.schedule.T, cfg.schedule.beta_start,
                          cfg.schedule.beta_end, cfg.schedule.kind)
    channels = [Channel.parse(c) for c in cfg.channels]

    # ingest + denoiser + (toy) fake sampling
    if cfg.data.kind == "toy":
        data_root = _materialize_toy_reals(cfg, paths)
        manifest = _save_manifest(build_manifest(data_root), cfg, paths.manifest)
        if until == "ingest":
            return None, paths
        denoiser = _train_or_load_denoiser(cfg, paths, sched, manifest)
        _materialize_toy_fakes(cfg, paths, sched, denoiser)
        manifest = _save_manifest(build_manifest(data_root), cfg, paths.manifest)
    else:
        manifest = _save_manifest(build_manifest(cfg.data.root), cfg, paths.manifest)
        if until == "ingest":
            return None, paths
        denoiser = _train_or_load_denoiser(cfg, paths, sched, manifest)
    if until == "train-diffusion":
        return None, paths
    manifest.require_splits(SPLITS)

    # featurize every split for every requested channel
    _stage("featurize")
    cache = MapCache(paths.cache_dir)
    pipeline = FeaturePipeline(
        ckpt=denoiser, sched=sched, t_star=cfg.t_star, seed=cfg.seed,
        error_reference=cfg.error_reference, cache=cache,
        batch_size=cfg.denoiser.batch_size,
    )
    split_data = {split: _load_split_images(cfg, manifest, split) for split in SPLITS}
    maps: dict[tuple[str, str], list] = {}
    for channel in channels:
        for split in SPLITS:
            entries, images = split_data[split]
            maps[(channel.name, split)] = _featurize_split(pipeline, entries, images, channel)
    if until == "featurize":
        return None, paths

    # train one classifier per channel
    classifier_cfg = ClassifierTrainConfig(
        arch=cfg.classifier.arch, base_width=cfg.classifier.base_width,
        epochs=cfg.classifier.epochs, batch_size=cfg.classifier.batch_size,
        lr=cfg.classifier.lr, weight_decay=cfg.classifier.weight_decay,
        plateau_factor=cfg.classifier.plateau_factor,
        plateau_patience=cfg.classifier.plateau_patience,
        early_stop_patience=cfg.classifier.early_stop_patience,
        crop_padding=cfg.classifier.crop_padding, hflip=cfg.classifier.hflip,
        mixed_precision=cfg.classifier.mixed_precision,
    )
    classifiers: dict[str, ClassifierCheckpoint] = {}
    for channel in channels:
        path = paths.classifier(channel)
        if os.path.exists(path):
            classifiers[channel.name] = ClassifierCheckpoint.load(path)
            log.info("loaded classifier checkpoint %s", path)
            continue
        _stage(f"train-detector ({channel.name})")
        labeled = {
            split: [
                LabeledErrorMap(m, e.label)
                for m, e in zip(maps[(channel.name, split)], split_data[split][0])
            ]
            for split in ("train", "val")
        }
        ckpt = train_classifier(labeled["train"], labeled["val"], classifier_cfg,
                                derive_seed(cfg.seed, "classifier", channel.name))
        ckpt.train_meta["config_hash"] = cfg.hash()
        ckpt.save(path)
        classifiers[channel.name] = ckpt
        log.info("classifier %s best val loss %.4f (epoch %d)", channel.name,
                 ckpt.train_meta["best_val_loss"], ckpt.train_meta["best_epoch"])
    if until == "train-detector":
        return None, paths

    # evaluation: per-generator rows for each channel
    _stage("eval")
    report = EvalReport()
    test_entries, test_images = split_data["test"]
    for channel in channels:
        test_maps = maps[(channel.name, "test")]
        grouped: dict[str, list[LabeledErrorMap]] = {}
        generators = sorted({e.generator for e in test_entries if e.label == 1})
        for gen_tag in generators:
            grouped[gen_tag] = [
                LabeledErrorMap(m, e.label)
                for m, e in zip(test_maps, test_entries)
                if e.label == 0 or e.generator == gen_tag
            ]
        channel_report = cross_model_eval(classifiers[channel.name], grouped,
                                          threshold=cfg.threshold, channel=channel.name)
        report = report.merge(channel_report)

    # robustness sweep on the first channel
    if cfg.robustness.enabled:
        _stage("robustness")
        primary = channels[0]
        triples = [(img, e.label, e.path) for img, e in zip(test_images, test_entries)]
        if cfg.robustness.max_images is not None:
            triples = _stratified_subsample(triples, cfg.robustness.max_images)
        grid = PerturbationGrid(
            jpeg_qualities=tuple(cfg.robustness.jpeg_qualities),
            blur_sigmas=tuple(cfg.robustness.blur_sigmas),
            noise_sigmas=tuple(cfg.robustness.noise_sigmas),
        )
        sweep = robustness_sweep(classifiers[primary.name], triples, pipeline, grid,
                                 channel=primary)
        report = report.merge(sweep)

    # visual grid over a few test samples (half real, half generated)
    artifacts = {
        "config_snapshot": os.path.relpath(paths.config_snapshot, paths.out_dir),
        "manifest": os.path.relpath(paths.manifest, paths.out_dir),
        "denoiser_checkpoint": os.path.relpath(paths.denoiser, paths.out_dir),
        "classifier_checkpoints": {
            ch.name: os.path.relpath(paths.classifier(ch), paths.out_dir) for ch in channels
        },
        "cache_index": os.path.relpath(cache.index_path, paths.out_dir),
        "tables": [os.path.relpath(paths.report_text, paths.out_dir)],
    }
    if cfg.viz_samples > 0:
        _stage("visualize")
        sample_ids = _grid_samples(test_entries, cfg.viz_samples)
        store = _grid_store(cfg, sample_ids, test_entries, test_images, channels,
                            pipeline, maps)
        export_visual_grid(sample_ids, store, paths.grid, channels=channels,
                           config_hash=cfg.hash())
        artifacts["grid"] = os.path.relpath(paths.grid, paths.out_dir)
    if len(channels) > 1:
        artifacts["tables"].append(os.path.relpath(paths.channel_table, paths.out_dir))

    # report assembly
    _stage("report")
    report.metadata = {
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "threshold": cfg.threshold,
        "error_reference": cfg.error_reference,
        "t_star": cfg.t_star,
        "schedule_fingerprint": sched.fingerprint,
        "jpeg_codec": JPEG_CODEC_ID,
        "manifest_checksum": manifest.checksum,
        "checkpoints": {
            "denoiser": pipeline.ckpt_fingerprint,
            "classifiers": {name: c.train_meta.get("best_val_loss")
                            for name, c in classifiers.items()},
        },
        "timestamp": _timestamp() if cfg.record_timestamp else None,
        "artifacts": artifacts,
    }
    report.save(paths.report_json)
    with open(paths.report_text, "w", encoding="utf-8") as fh:
        fh.write(report.render_text())
    if len(channels) > 1:
        with open(paths.channel_table, "w", encoding="utf-8") as fh:
            fh.write(report.render_channel_table())
    log.info("report written to %s", paths.report_json)
    return report, paths


def _timestamp() -> str:
    import datetime

    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _stratified_subsample(triples, max_images: int):
    """Deterministic class-proportional head of the (sorted) test entries."""
    reals = [t for t in triples if t[1] == 0]
    fakes = [t for t in triples if t[1] == 1]
    total = len(triples)
    if total <= max_images:
        return triples
    k_real = max(2, round(max_images * len(reals) / total))
    k_fake = max(2, max_images - k_real)
    return reals[:k_real] + fakes[:k_fake]


def _grid_samples(test_entries, n: int) -> list[str]:
    reals = [e.path for e in test_entries if e.label == 0]
    fakes = [e.path for e in test_entries if e.label == 1]
    half = max(1, n // 2)
    picked = reals[:half] + fakes[: n - half]
    return picked[:n]


def _grid_store(cfg, sample_ids, test_entries, test_images, channels, pipeline, maps):
    from .diffusion import reconstruct_batch
    from .image import RGBImage, remove_channel

    by_id = {e.path: (e, img) for e, img in zip(test_entries, test_images)}
    index_of = {e.path: i for i, e in enumerate(test_entries)}
    store = {}
    for sample_id in sample_ids:
        entry, img = by_id[sample_id]
        cell = build_store_entry(img)
        for channel in channels:
            removed = remove_channel(img, channel)
            seed = pipeline._image_seed(sample_id, channel)
            restored = RGBImage(reconstruct_batch(
                removed.data[None].astype(np.float64), pipeline.ckpt, pipeline.sched,
                pipeline.t_star, [seed])[0])
            emap = maps[(channel.name, "test")][index_of[sample_id]]
            cell["channels"][channel] = {
                "removed": removed, "reconstructed": restored, "error": emap,
            }
        store[sample_id] = cell
    return store


def audit(out_dir) -> list[str]:
    """Return paths under out_dir not reachable from the report metadata."""
    paths = ExperimentPaths(out_dir)
    if not os.path.exists(paths.report_json):
        raise AuditError(f"no report.json under {out_dir}; run the experiment first")
    report = EvalReport.load(paths.report_json)
    artifacts = report.metadata.get("artifacts", {})

    reachable = {paths.report_json}

    def add(rel: str):
        reachable.add(os.path.abspath(os.path.join(paths.out_dir, rel)))

    for key in ("config_snapshot", "manifest", "denoiser_checkpoint", "grid", "cache_index"):
        if key in artifacts:
            add(artifacts[key])
    for rel in artifacts.get("classifier_checkpoints", {}).values():
        add(rel)
    for rel in artifacts.get("tables", []):
        add(rel)

    manifest_path = os.path.join(paths.out_dir, artifacts.get("manifest", "manifest.json"))
    if os.path.exists(manifest_path):
        manifest = DatasetManifest.load(manifest_path)
        for entry in manifest.entries:
            reachable.add(os.path.abspath(manifest.abspath(entry)))

    if os.path.exists(paths.cache_dir):
        cache = MapCache(paths.cache_dir)
        for f in cache.files():
            reachable.add(os.path.abspath(f))

    orphans = []
    for dirpath, _, filenames in os.walk(paths.out_dir):
        for fname in filenames:
            full = os.path.abspath(os.path.join(dirpath, fname))
            if full not in reachable:
                orphans.append(os.path.relpath(full, paths.out_dir))
    return sorted(orphans)
