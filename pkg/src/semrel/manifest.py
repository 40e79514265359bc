"""Run manifests: enough provenance to reproduce any artifact bit for bit.

A manifest records the tool version, the subcommand, the fully resolved
configuration, and a sha256 digest per input file.  No timestamps: two
runs with identical manifests must produce identical outputs.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from . import __version__


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(
    path: str | Path,
    command: str,
    config: dict,
    inputs: dict[str, str | Path],
    outputs: list[str] | None = None,
) -> dict:
    manifest = {
        "tool": "semrel",
        "version": __version__,
        "command": command,
        "config": config,
        "inputs": {
            name: {"path": str(p), "sha256": file_digest(p)} for name, p in inputs.items()
        },
        "outputs": sorted(outputs or []),
    }
    Path(path).write_text(
        json.dumps(manifest, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    return manifest
