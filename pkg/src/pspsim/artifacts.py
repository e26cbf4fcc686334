"""Deterministic writers for CSV tables, JSON summaries and JSONL traces.

Every artifact starts with the same metadata: a hash of the resolved
experiment settings, the master seed, the RNG id and the package version.
Nothing time- or host-dependent is written, so reruns are byte-identical.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

from . import __version__
from .stochastic import RNG_ID


def config_hash(settings: dict) -> str:
    blob = json.dumps(_plain(settings), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def metadata(settings: dict, seed: int) -> dict:
    return {"config_sha256": config_hash(settings), "seed": int(seed),
            "rng": RNG_ID, "version": __version__}


def _plain(x):
    """JSON-safe copy: numpy scalars and arrays unwrapped, non-finite floats to None."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def _cell(c):
    if isinstance(c, (bool, np.bool_)):
        return int(c)
    if isinstance(c, (float, np.floating)):
        return repr(float(c)) if math.isfinite(c) else ""
    if c is None:
        return ""
    return c


def csv_text(header: list, rows, meta: dict) -> str:
    """CSV with the metadata as leading ``# key value`` comment lines."""
    buf = io.StringIO()
    for k in sorted(meta):
        buf.write(f"# {k} {meta[k]}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(c) for c in row])
    return buf.getvalue()


def write_csv(path, header, rows, meta) -> Path:
    path = Path(path)
    path.write_text(csv_text(header, rows, meta))
    return path


def write_json(path, payload: dict, meta: dict) -> Path:
    path = Path(path)
    doc = {"meta": meta, **_plain(payload)}
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return path


def write_jsonl(path, records, meta: dict) -> Path:
    """One JSON object per line; the first line is ``{"meta": ...}``."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write(json.dumps({"meta": meta}, sort_keys=True) + "\n")
        for rec in records:
            fh.write(json.dumps(_plain(rec), sort_keys=True) + "\n")
    return path


def read_csv(path) -> tuple[dict, list[dict]]:
    """Metadata and rows (as string dicts) of a CSV written by ``write_csv``."""
    meta, body = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(" ")
            meta[key] = value
        else:
            body.append(line)
    return meta, list(csv.DictReader(body))
