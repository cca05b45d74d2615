"""Channel-removed reconstruction-error maps, the detector's input feature.

The pipeline per image: zero one channel, reconstruct with the diffusion
model, take the element-wise absolute difference against the ORIGINAL image
(the default error reference). A config flag switches the reference to the
channel-removed input instead, for ablation.

All three channel variants run the same code path; nothing in here is
specific to any particular channel.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .diffusion import DenoiserCheckpoint, derive_seed, reconstruct_batch
from .errors import ArgumentError, CacheError, DimensionError
from .image import Channel, RGBImage, remove_channel
from .schedule import VarianceSchedule

ERROR_REFERENCES = ("original", "channel_removed")


@dataclass(frozen=True)
class ErrorMap:
    """Nonnegative H x W x 3 residual tensor plus its provenance."""

    data: np.ndarray = field(repr=False)
    source_channel: Channel = Channel.G
    t_star: int | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise DimensionError(f"expected H x W x 3 map, got shape {arr.shape}")
        if not np.all((arr >= 0.0) & (arr <= 1.0)):
            raise DimensionError("error-map values must lie in [0, 1]")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)


def compute_rre(original: RGBImage, reconstructed: RGBImage, channel: Channel,
                t_star: int | None = None, provenance: dict | None = None) -> ErrorMap:
    """Element-wise |original - reconstructed| with the removed channel recorded."""
    if original.data.shape != reconstructed.data.shape:
        raise DimensionError(
            f"shape mismatch {original.data.shape} vs {reconstructed.data.shape}"
        )
    diff = np.abs(original.data.astype(np.float64) - reconstructed.data.astype(np.float64))
    return ErrorMap(diff, source_channel=channel, t_star=t_star,
                    provenance=provenance or {})


def channel_removed_error(img: RGBImage, channel: Channel, ckpt: DenoiserCheckpoint,
                          sched: VarianceSchedule, t_star: int, seed: int,
                          error_reference: str = "original",
                          reconstruct_override=None) -> ErrorMap:
    """Full per-image pipeline: remove channel, reconstruct, difference.

    Deterministic for a fixed seed. `reconstruct_override` substitutes the
    reconstruction operator (used by tests to isolate the difference logic).
    """
    if error_reference not in ERROR_REFERENCES:
        raise ArgumentError(f"error_reference must be one of {ERROR_REFERENCES}")
    corrupted = remove_channel(img, channel)
    if reconstruct_override is not None:
        restored = reconstruct_override(corrupted)
    else:
        restored = RGBImage(reconstruct_batch(
            corrupted.data[None].astype(np.float64), ckpt, sched, t_star, [seed],
        )[0])
    reference = img if error_reference == "original" else corrupted
    return compute_rre(reference, restored, channel, t_star=t_star,
                       provenance={"seed": seed, "error_reference": error_reference})


class MapCache:
    """Content-addressed store for error maps.

    Keys bind (image id, channel, checkpoint fingerprint, t_star, seed,
    error reference, schedule fingerprint), so changing any of them
    invalidates entries automatically. Maps live as .npy files next to an
    index that records each key's provenance.
    """

    def __init__(self, root):
        self.root = os.fspath(root)
        os.makedirs(self.root, exist_ok=True)
        self.index_path = os.path.join(self.root, "index.json")
        self._index: dict[str, dict] = {}
        if os.path.exists(self.index_path):
            with open(self.index_path, encoding="utf-8") as fh:
                self._index = json.load(fh)

    @staticmethod
    def key(image_id: str, channel: Channel, ckpt_fingerprint: str, t_star: int,
            seed: int, error_reference: str, schedule_fingerprint: str) -> str:
        raw = "|".join([image_id, channel.name, ckpt_fingerprint, str(t_star),
                        str(seed), error_reference, schedule_fingerprint])
        return hashlib.sha256(raw.encode()).hexdigest()[:32]

    def _path(self, key: str) -> str:
        return os.path.join(self.root, f"{key}.npy")

    def __contains__(self, key: str) -> bool:
        return key in self._index and os.path.exists(self._path(key))

    def get(self, key: str) -> ErrorMap:
        if key not in self:
            raise CacheError(f"missing cache entry {key}")
        meta = self._index[key]
        return ErrorMap(
            np.load(self._path(key)),
            source_channel=Channel[meta["channel"]],
            t_star=meta["t_star"],
            provenance=meta,
        )

    def put(self, key: str, emap: ErrorMap, image_id: str, label: int | None = None,
            generator: str | None = None, split: str | None = None) -> None:
        np.save(self._path(key), emap.data)
        self._index[key] = {
            "image_id": image_id,
            "channel": emap.source_channel.name,
            "t_star": emap.t_star,
            "label": label,
            "generator": generator,
            "split": split,
            **emap.provenance,
        }
        self.flush()

    def entry_meta(self, key: str) -> dict:
        return dict(self._index[key])

    def files(self) -> list[str]:
        return [self.index_path] + [self._path(k) for k in self._index]

    def flush(self) -> None:
        with open(self.index_path, "w", encoding="utf-8") as fh:
            json.dump(self._index, fh, indent=0, sort_keys=True)


@dataclass
class FeaturePipeline:
    """Bundles everything needed to turn raw images into error maps.

    Featurization batches across images for throughput, but each image's
    noise stream is derived from its own id, so results are reproducible
    per image regardless of batch composition.
    """

    ckpt: DenoiserCheckpoint
    sched: VarianceSchedule
    t_star: int
    seed: int
    error_reference: str = "original"
    cache: MapCache | None = None
    batch_size: int = 64
    ckpt_fingerprint: str = ""

    def __post_init__(self):
        if self.error_reference not in ERROR_REFERENCES:
            raise ArgumentError(f"error_reference must be one of {ERROR_REFERENCES}")
        if not self.ckpt_fingerprint:
            self.ckpt_fingerprint = _fingerprint_checkpoint(self.ckpt)

    def _key(self, image_id: str, channel: Channel) -> str:
        return MapCache.key(image_id, channel, self.ckpt_fingerprint, self.t_star,
                            self.seed, self.error_reference, self.sched.fingerprint)

    def _image_seed(self, image_id: str, channel: Channel) -> int:
        return derive_seed(self.seed, image_id, channel.name, self.t_star)

    def error_maps(self, images: list[RGBImage], image_ids: list[str], channel: Channel,
                   labels: list[int] | None = None, generators: list[str] | None = None,
                   splits: list[str] | None = None) -> list[ErrorMap]:
        """Maps for a list of images, reading/writing the cache when present."""
        out: list[ErrorMap | None] = [None] * len(images)
        todo: list[int] = []
        for i, image_id in enumerate(image_ids):
            if self.cache is not None:
                key = self._key(image_id, channel)
                if key in self.cache:
                    out[i] = self.cache.get(key)
                    continue
            todo.append(i)

        for start in range(0, len(todo), self.batch_size):
            chunk = todo[start:start + self.batch_size]
            corrupted = np.stack([remove_channel(images[i], channel).data for i in chunk])
            seeds = [self._image_seed(image_ids[i], channel) for i in chunk]
            restored = reconstruct_batch(corrupted.astype(np.float64), self.ckpt,
                                         self.sched, self.t_star, seeds)
            for j, i in enumerate(chunk):
                reference = (images[i].data if self.error_reference == "original"
                             else corrupted[j])
                emap = ErrorMap(
                    np.abs(reference.astype(np.float64) - restored[j]),
                    source_channel=channel, t_star=self.t_star,
                    provenance={"image_id": image_ids[i], "seed": self.seed,
                                "error_reference": self.error_reference,
                                "checkpoint": self.ckpt_fingerprint},
                )
                out[i] = emap
                if self.cache is not None:
                    self.cache.put(
                        self._key(image_ids[i], channel), emap, image_ids[i],
                        label=None if labels is None else labels[i],
                        generator=None if generators is None else generators[i],
                        split=None if splits is None else splits[i],
                    )
        return out  # type: ignore[return-value]

    def error_map(self, image: RGBImage, image_id: str, channel: Channel) -> ErrorMap:
        return self.error_maps([image], [image_id], channel)[0]


def _fingerprint_checkpoint(ckpt: DenoiserCheckpoint) -> str:
    digest = hashlib.sha256()
    digest.update(ckpt.schedule_fingerprint.encode())
    digest.update(json.dumps(ckpt.arch_config, sort_keys=True, default=str).encode())
    for name, tensor in sorted(ckpt.model.state_dict().items()):
        digest.update(name.encode())
        digest.update(tensor.numpy().tobytes())
    return digest.hexdigest()[:16]
