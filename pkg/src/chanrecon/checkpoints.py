"""Versioned on-disk container shared by denoiser and classifier checkpoints.

Layout: a torch-serialized dict with a header (format tag, kind, version),
the arch_config needed to rebuild the network, the parameter tensors, and
train_meta. Incompatible files fail loudly instead of deserializing into
garbage.
"""

from __future__ import annotations

import torch

from .errors import CheckpointError

FORMAT_TAG = "chanrecon.checkpoint"
VERSION = 1


def write_container(path, kind: str, arch_config: dict, state_dict: dict, train_meta: dict,
                    extra: dict | None = None) -> None:
    payload = {
        "format": FORMAT_TAG,
        "version": VERSION,
        "kind": kind,
        "arch_config": dict(arch_config),
        "state_dict": state_dict,
        "train_meta": dict(train_meta),
    }
    if extra:
        payload.update(extra)
    torch.save(payload, path)


def read_container(path, kind: str) -> dict:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint ({exc})") from exc
    if not isinstance(payload, dict) or payload.get("format") != FORMAT_TAG:
        raise CheckpointError(f"{path}: not a {FORMAT_TAG} file")
    if payload.get("version") != VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {payload.get('version')!r}"
        )
    if payload.get("kind") != kind:
        raise CheckpointError(
            f"{path}: checkpoint kind {payload.get('kind')!r}, expected {kind!r}"
        )
    return payload
