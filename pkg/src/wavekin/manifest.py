"""Result manifests and hash-tagged output files."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .lattice import UsageError

MANIFEST_NAME = "manifest.json"
TIMING_KEYS = ("elapsed", "seconds", "wall_clock", "resumed")   # run history, not results


def code_version() -> str:
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:
        from . import __version__
        return __version__


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def header_tag(path) -> str | None:
    """Config hash recorded in the first line of a text or binary output file."""
    with open(path, "rb") as fh:
        first = fh.readline(4096).decode(errors="replace")
    for tok in first.replace(",", " ").split():
        for key in ("config_hash=", "config="):
            if tok.startswith(key):
                return tok[len(key):]
    return None


def strip_timing(x):
    """Drop wall-clock and resume bookkeeping so hashed content is reproducible."""
    if isinstance(x, dict):
        return {k: strip_timing(v) for k, v in x.items() if not any(t in k for t in TIMING_KEYS)}
    if isinstance(x, list):
        return [strip_timing(v) for v in x]
    return x


@dataclass
class OutputFile:
    path: str           # relative to the manifest directory
    kind: str
    sha256: str
    meta: dict = field(default_factory=dict)


@dataclass
class ResultManifest:
    experiment: str
    config_hash: str
    code_version: str
    seeds: dict
    files: list
    checks: dict                    # name -> bool
    metrics: dict = field(default_factory=dict)
    wall_clock: float = 0.0
    directory: str = ""

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def content_hash(self) -> str:
        """Hash of everything except wall-clock times and the output location."""
        body = {"experiment": self.experiment, "config_hash": self.config_hash,
                "code_version": self.code_version, "seeds": self.seeds,
                "files": [[f.path, f.kind, f.sha256] for f in self.files],
                "checks": self.checks, "metrics": strip_timing(self.metrics)}
        blob = json.dumps(body, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("directory")
        d["manifest_hash"] = self.content_hash()
        return d

    def write(self, directory) -> Path:
        path = Path(directory) / MANIFEST_NAME
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True, default=str)
            fh.write("\n")
        return path

    @classmethod
    def load(cls, path) -> "ResultManifest":
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        try:
            with open(path) as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read manifest {path}: {e}")
        d.pop("manifest_hash", None)
        try:
            d["files"] = [OutputFile(**f) for f in d["files"]]
            return cls(**d, directory=str(path.parent))
        except TypeError as e:
            raise UsageError(f"malformed manifest {path}: {e}")

    def validate(self) -> list[str]:
        """Problems found: missing files, hash mismatches, tags that disagree."""
        bad = []
        for f in self.files:
            p = Path(self.directory) / f.path
            if not p.exists():
                bad.append(f"missing {f.path}")
                continue
            if file_sha256(p) != f.sha256:
                bad.append(f"content changed: {f.path}")
            if header_tag(p) != self.config_hash:
                bad.append(f"header tag mismatch: {f.path}")
        return bad

    def select(self, kind: str) -> list[OutputFile]:
        return [f for f in self.files if f.kind == kind]


def relpath(path, base) -> str:
    return os.path.relpath(path, base).replace(os.sep, "/")
