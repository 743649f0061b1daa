"""Deterministic artifact writers, JSON schemas and the run manifest."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import xml.etree.ElementTree as ET
from pathlib import Path

import jsonschema
import numpy as np

SCHEMA_VERSION = 1

_num = {"type": ["number", "null"]}
_mesh = {
    "type": "object",
    "required": ["rings", "angles", "r_min"],
    "properties": {
        "rings": {"type": "integer", "minimum": 2},
        "angles": {"type": "integer", "minimum": 4, "multipleOf": 2},
        "r_min": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "Q", "n", "mesh", "trace"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "taylor": {"type": "array", "items": {"type": "number"}},
        "phi_poly": {"type": "array", "items": {"type": ["number", "array"]}},
        "Q": {"type": "integer", "minimum": 1, "maximum": 8},
        "n": {"type": "integer", "minimum": 1, "maximum": 8},
        "mesh": {
            "type": "object",
            "required": ["angles", "r_min"],
            "additionalProperties": False,
            "properties": {
                "rings": {"type": "integer", "minimum": 2},
                "angles": {"type": "integer", "minimum": 8, "multipleOf": 2},
                "r_min": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "radius": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "trace": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["catalog", "fixture", "modes", "random_fourier", "file"]},
            },
        },
        "analysis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: {"type": "boolean"} for k in
                           ("frequency", "tangent", "singularities", "decay", "oracle", "save_solution")},
        },
        "output_dir": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
    },
}

SOLVE_SCHEMA = {
    "type": "object",
    "required": ["energy", "per_block_energies", "residuals", "blocks", "Q", "n", "mesh"],
    "properties": {
        "energy": {"type": "number", "minimum": 0},
        "per_block_energies": {"type": "array", "items": {"type": "number"}},
        "residuals": {"type": "object", "additionalProperties": _num},
        "blocks": {"type": "array", "items": {"type": "object", "required": ["kind", "q", "k"]}},
        "Q": {"type": "integer", "minimum": 1},
        "n": {"type": "integer", "minimum": 1},
        "mesh": _mesh,
        "decay": {"type": "object"},
        "oracle": {"type": "object"},
    },
}

_point = {
    "type": "object",
    "required": ["x", "y", "boundary", "local_frequency", "nodes"],
    "properties": {"x": {"type": "number"}, "y": {"type": "number"}, "boundary": {"type": "boolean"},
                   "local_frequency": _num, "nodes": {"type": "integer"}, "r0": _num, "eps": _num},
}

SINGULAR_SCHEMA = {
    "type": "object",
    "required": ["interior", "boundary", "min_gap", "gap_cells", "generic"],
    "properties": {
        "interior": {"type": "array", "items": _point},
        "boundary": {"type": "array", "items": _point},
        "min_gap": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "gap_cells": _num,
        "generic": {"type": "object"},
    },
}

TANGENT_SCHEMA = {
    "type": "object",
    "required": ["alpha", "classification", "slope", "beta_floor"],
    "properties": {
        "alpha": {"type": "number"},
        "classification": {"type": "object", "required": ["case", "residual", "reason"]},
        "slope": _num,
        "beta_floor": {"type": "number"},
    },
}

DECAY_SCHEMA = {
    "type": "object",
    "required": ["exact", "alpha_limit", "beta_hat", "beta_floor", "H0", "D0", "passes"],
}

FREQUENCY_SUMMARY_SCHEMA = {
    "type": "object",
    "required": ["alpha", "alpha_spread", "monotone_violation", "hder_residual", "verdict"],
}

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "artifacts"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "artifacts": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["path", "sha256", "bytes", "kind"],
                "properties": {"path": {"type": "string"}, "sha256": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
                               "bytes": {"type": "integer"}, "kind": {"type": "string"}},
            },
        },
    },
}

JSON_SCHEMAS = {
    "config": CONFIG_SCHEMA,
    "solve": SOLVE_SCHEMA,
    "singular": SINGULAR_SCHEMA,
    "tangent": TANGENT_SCHEMA,
    "decay": DECAY_SCHEMA,
    "frequency": FREQUENCY_SUMMARY_SCHEMA,
    "manifest": MANIFEST_SCHEMA,
}

CSV_HEADERS = {
    "profile": ["r", "D", "H", "I"],
    "deviation": ["rho", "deviation"],
    "axis": ["x", "h_lower"],
}


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=1) + "\n"


def write_json(path: Path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def write_csv(path: Path, header, rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")
    return Path(path)


def read_csv(path: Path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    validate_config(cfg, base=Path(path).parent)
    return cfg


def validate_config(cfg: dict, base: Path | None = None):
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"schema error at {where}: {exc.message}") from exc
    tr = cfg["trace"]
    if tr["kind"] == "file":
        p = Path(tr.get("path", ""))
        if not p.is_absolute() and base is not None:
            p = base / p
        if not p.is_file():
            raise ConfigError(f"trace file does not exist: {tr.get('path')}")


def validate_artifact(path: Path, kind: str):
    """Re-validate one artifact; raises on failure."""
    path = Path(path)
    if kind in JSON_SCHEMAS:
        jsonschema.validate(json.loads(path.read_text(encoding="utf-8")), JSON_SCHEMAS[kind])
    elif kind in CSV_HEADERS:
        header, data = read_csv(path)
        if header != CSV_HEADERS[kind]:
            raise ValueError(f"{path.name}: unexpected header {header}")
        if data.size and data.shape[1] != len(header):
            raise ValueError(f"{path.name}: ragged rows")
    elif kind == "svg":
        root = ET.parse(path).getroot()
        if not root.tag.endswith("svg"):
            raise ValueError(f"{path.name}: not an SVG document")
    elif kind in ("solution", "trace", "catalog"):
        json.loads(path.read_text(encoding="utf-8"))
    else:
        raise ValueError(f"unknown artifact kind {kind!r}")


def write_manifest(out_dir: Path, entries) -> Path:
    """entries: list of (relative path, kind)."""
    out_dir = Path(out_dir)
    arts = []
    for rel, kind in sorted(entries):
        p = out_dir / rel
        arts.append({"path": rel, "kind": kind, "sha256": sha256(p), "bytes": p.stat().st_size})
    return write_json(out_dir / "manifest.json", {"schema_version": SCHEMA_VERSION, "artifacts": arts})
