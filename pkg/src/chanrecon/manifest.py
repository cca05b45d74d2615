"""Dataset manifests over the `<root>/<split>/<real|generator-tag>/*` layout.

Label 0 for the `real` class directory, 1 for anything else (the directory
name is the generator tag). Entries are sorted and checksummed so a manifest
rebuilt over an unchanged tree is byte-identical on any machine.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field

from .errors import ManifestError

SPLITS = ("train", "val", "test")
IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")
REAL_CLASS = "real"


@dataclass(frozen=True)
class ManifestEntry:
    path: str  # relative to the manifest root, POSIX separators
    label: int
    generator: str
    split: str


@dataclass
class DatasetManifest:
    root: str
    entries: list[ManifestEntry] = field(default_factory=list)
    checksum: str = ""
    config_hash: str | None = None

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.path in seen:
                raise ManifestError(f"path listed twice in manifest: {e.path}")
            seen.add(e.path)
        if not self.checksum:
            self.checksum = _entries_checksum(self.entries)

    def for_split(self, split: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]

    def require_splits(self, names) -> None:
        for name in names:
            if not self.for_split(name):
                raise ManifestError(f"split {name!r} is empty or missing")

    def abspath(self, entry: ManifestEntry) -> str:
        return os.path.join(self.root, *entry.path.split("/"))

    def save(self, path) -> None:
        payload = {
            "root": os.path.abspath(self.root),
            "checksum": self.checksum,
            "config_hash": self.config_hash,
            "entries": [asdict(e) for e in self.entries],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        manifest = cls(
            root=payload["root"],
            entries=[ManifestEntry(**e) for e in payload["entries"]],
            checksum=payload["checksum"],
            config_hash=payload.get("config_hash"),
        )
        if manifest.checksum != payload["checksum"]:
            raise ManifestError(f"{path}: checksum mismatch")
        return manifest


def _entries_checksum(entries) -> str:
    canon = json.dumps([asdict(e) for e in entries], sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()[:32]


def build_manifest(root, required_splits=SPLITS) -> DatasetManifest:
    """Scan the dataset tree into a deterministic, sorted manifest.

    Basenames must be unique across class directories within a split,
    otherwise provenance of cached artifacts would be ambiguous.
    """
    root = os.fspath(root)
    if not os.path.isdir(root):
        raise ManifestError(f"dataset root {root!r} does not exist")
    entries: list[ManifestEntry] = []
    for split in required_splits:
        split_dir = os.path.join(root, split)
        if not os.path.isdir(split_dir):
            raise ManifestError(f"missing split directory {split!r} under {root}")
        basenames: dict[str, str] = {}
        split_entries: list[ManifestEntry] = []
        for class_name in sorted(os.listdir(split_dir)):
            class_dir = os.path.join(split_dir, class_name)
            if not os.path.isdir(class_dir):
                continue
            label = 0 if class_name == REAL_CLASS else 1
            for fname in sorted(os.listdir(class_dir)):
                if not fname.lower().endswith(IMAGE_EXTENSIONS):
                    continue
                if fname in basenames:
                    raise ManifestError(
                        f"ambiguous basename {fname!r} in split {split!r}: "
                        f"appears under both {basenames[fname]!r} and {class_name!r}"
                    )
                basenames[fname] = class_name
                split_entries.append(ManifestEntry(
                    path="/".join([split, class_name, fname]),
                    label=label, generator=class_name, split=split,
                ))
        if not split_entries:
            raise ManifestError(f"split {split!r} contains no images")
        entries.extend(split_entries)
    entries.sort(key=lambda e: (e.split, e.generator, e.path))
    return DatasetManifest(root=root, entries=entries)
