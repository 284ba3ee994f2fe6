"""Run manifests: provenance records emitted beside every CLI artifact.

The manifest captures everything needed to reproduce a run (command
line, input digests, seed, tool version). It lives in a sidecar file so
report bodies can be compared byte for byte across reruns; only the
manifest timestamp differs between identical runs.
"""

from __future__ import annotations

import hashlib
import json
import shlex
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Optional, Sequence

from . import __version__


def file_digest(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_digest(config: Mapping) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class RunManifest:
    command_line: str
    config_digest: str
    input_digests: dict[str, str]
    tool_version: str
    seed: Optional[int]
    timestamp: str

    @classmethod
    def create(cls, argv: Sequence[str], config: Mapping,
               input_paths: Sequence, seed: Optional[int] = None) -> "RunManifest":
        return cls(
            command_line=shlex.join(str(a) for a in argv),
            config_digest=config_digest(config),
            input_digests={str(p): file_digest(p) for p in input_paths},
            tool_version=__version__,
            seed=seed,
            timestamp=datetime.now(timezone.utc).isoformat(),
        )

    def to_json_dict(self) -> dict:
        return {
            "command_line": self.command_line,
            "config_digest": self.config_digest,
            "input_digests": dict(self.input_digests),
            "tool_version": self.tool_version,
            "seed": self.seed,
            "timestamp": self.timestamp,
        }
