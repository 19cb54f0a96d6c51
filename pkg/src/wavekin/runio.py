"""Run manifests, deterministic CSV/JSON emission, and config files.

Every run writes a manifest echoing command, parameters and seed; the
manifest hash (sha256 of the canonical parameter echo, timestamps excluded)
is stamped as a header comment into each CSV so downstream plot tools can
verify provenance.  Identical (command, params, seed) produce byte-identical
data files; timestamps live only in the manifest.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

MANIFEST_PREFIX = "# manifest: "
OUTDIR_ENV = "WAVEKIN_OUTDIR"


def default_outdir() -> Path:
    return Path(os.environ.get(OUTDIR_ENV, "wavekin_out"))


def _canonical(obj: Any) -> Any:
    """JSON-stable form: floats via repr stay round-trip exact."""
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, float):
        return float(obj)
    if hasattr(obj, "item"):  # numpy scalar
        return _canonical(obj.item())
    return obj


def canonical_json(obj: Any) -> str:
    return json.dumps(_canonical(obj), sort_keys=True, separators=(",", ":"))


def params_hash(command: str, params: dict, seed: Any, version: str) -> str:
    payload = canonical_json({"command": command, "params": params,
                              "seed": seed, "version": version})
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass
class Manifest:
    command: str
    params: dict
    seed: Any
    version: str
    outputs: list[str] = field(default_factory=list)
    started_at: float = field(default_factory=time.time)
    finished_at: float | None = None

    @property
    def hash(self) -> str:
        return params_hash(self.command, self.params, self.seed, self.version)

    def add_output(self, path: Path | str) -> None:
        self.outputs.append(str(path))

    def write(self, directory: Path) -> Path:
        self.finished_at = time.time()
        path = Path(directory) / "manifest.json"
        doc = {
            "command": self.command,
            "params": _canonical(self.params),
            "seed": self.seed,
            "version": self.version,
            "manifest_hash": self.hash,
            "outputs": sorted(set(self.outputs)),
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path


def fmt_value(x: Any) -> str:
    """Deterministic cell formatting; floats use shortest round-trip repr."""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return repr(x)
    if hasattr(x, "item"):
        return fmt_value(x.item())
    return str(x)


def write_csv(path: Path | str, columns: Sequence[str],
              rows: Iterable[Sequence[Any]], manifest_hash: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(MANIFEST_PREFIX + manifest_hash + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt_value(x) for x in row])
    return path


def read_csv(path: Path | str) -> tuple[str, list[str], list[list[str]]]:
    """Returns (manifest_hash, columns, raw rows)."""
    with open(path, newline="") as fh:
        first = fh.readline().rstrip("\n")
        if not first.startswith(MANIFEST_PREFIX):
            raise ValueError(f"{path}: missing manifest header comment")
        h = first[len(MANIFEST_PREFIX):].strip()
        reader = csv.reader(fh)
        columns = next(reader)
        rows = [row for row in reader if row]
    return h, columns, rows


def write_json(path: Path | str, doc: dict, manifest_hash: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = dict(doc)
    doc["manifest_hash"] = manifest_hash
    path.write_text(json.dumps(_canonical(doc), indent=2, sort_keys=True) + "\n")
    return path


def _coerce(text: str) -> Any:
    t = text.strip()
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", ""):
        return None
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        pass
    if "," in t:
        return [_coerce(p) for p in t.split(",")]
    return t


def load_config(path: Path | str) -> dict[str, dict[str, Any]]:
    """Plain key = value sections; values coerced to int/float/bool/list."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = cp.read(path)
    if not read:
        raise FileNotFoundError(f"config file not found: {path}")
    return {sec: {k: _coerce(v) for k, v in cp[sec].items()}
            for sec in cp.sections()}


def apply_overrides(config: dict, overrides: Iterable[str]) -> dict:
    """Apply 'section.key=value' command-line overrides on top of file values."""
    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ValueError(f"override must look like section.key=value: {item!r}")
        target, value = item.split("=", 1)
        sec, key = target.split(".", 1)
        config.setdefault(sec, {})[key.strip()] = _coerce(value)
    return config
