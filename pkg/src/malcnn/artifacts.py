"""Run manifests and content digests.

Every CLI command leaves a ``manifest.json`` next to its outputs listing
the exact files it wrote, the seeds and config digest that produced
them, and the tool version.  Manifests deliberately contain no
timestamps so a rerun with the same seeds is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .errors import ValidationError

MANIFEST_NAME = "run_manifest.json"  # distinct from a dataset's own manifest.json


def config_digest(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def tree_digest(root: str | Path, exclude: tuple[str, ...] = ()) -> str:
    """Digest of a directory: every file's relative path and content."""
    root = Path(root)
    h = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        rel = path.relative_to(root).as_posix()
        if rel in exclude:
            continue
        h.update(rel.encode("utf-8"))
        h.update(bytes.fromhex(file_digest(path)))
    return h.hexdigest()


@dataclass
class RunManifest:
    tool_version: str
    command: str
    config_digest: str
    seeds: dict = field(default_factory=dict)
    inputs: list = field(default_factory=list)
    files: list = field(default_factory=list)


def write_manifest(out_dir: str | Path, manifest: RunManifest) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(asdict(manifest), sort_keys=True, indent=2) + "\n")
    return path


def read_manifest(out_dir: str | Path) -> RunManifest:
    path = Path(out_dir) / MANIFEST_NAME
    if not path.is_file():
        raise ValidationError(f"no {MANIFEST_NAME} in {out_dir}")
    return RunManifest(**json.loads(path.read_text()))


def listed_files(out_dir: str | Path) -> set[str]:
    """All files under ``out_dir`` relative to it, except the manifest."""
    out_dir = Path(out_dir)
    return {
        p.relative_to(out_dir).as_posix()
        for p in out_dir.rglob("*")
        if p.is_file() and p.name != MANIFEST_NAME
    }
