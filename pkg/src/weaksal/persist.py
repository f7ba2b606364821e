"""On-disk formats: feature cache records, model files, dataset manifests,
and saliency map images.

Feature records ("LSALFEA1", little-endian):
    magic 8s | u32 n_regions | u32 global_dim | u32 n_edges | f64 clamp_eps
    f64 saliency matrix (n_regions x 35, row-major)
    f64 global descriptor | f64 areas | u8 border flags
    per edge: u32 j | u32 k | f64 weight
The log transforms are recomputed from the stored saliency matrix.

Model files ("LSSVMW01", little-endian):
    magic 8s | u32 global_dim | u32 regional_dim (= 35)
    f64 blocks: global[0] | global[1] | regional[0] | regional[1]
    f64 scalars: fg_prior[0] | fg_prior[1] | bg_prior[0] | bg_prior[1] | pairwise

Manifests are JSON lines with keys image, label, and optionally mask; paths
resolve relative to the manifest file.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .exceptions import DecodeError, ModelMismatch
from .features import ImageFeatures, N_REGIONAL, RegionSaliency
from .model import ModelParams
from .mrf import RegionGraph

FEATURE_MAGIC = b"LSALFEA1"
MODEL_MAGIC = b"LSSVMW01"


def save_features(path, feats, clamp_eps=1e-3):
    n = feats.n_regions
    edges = feats.graph.edges
    parts = [FEATURE_MAGIC,
             struct.pack("<IIId", n, len(feats.global_desc), len(edges), clamp_eps),
             np.ascontiguousarray(feats.regional.sal, dtype="<f8").tobytes(),
             np.ascontiguousarray(feats.global_desc, dtype="<f8").tobytes(),
             np.ascontiguousarray(feats.areas, dtype="<f8").tobytes(),
             np.ascontiguousarray(feats.is_border, dtype=np.uint8).tobytes()]
    for (j, k), w in zip(edges, feats.graph.weights):
        parts.append(struct.pack("<IId", int(j), int(k), float(w)))
    Path(path).write_bytes(b"".join(parts))


def load_features(path):
    blob = Path(path).read_bytes()
    if blob[:8] != FEATURE_MAGIC:
        raise DecodeError(f"{path}: not a feature record")
    n, e_dim, n_edges, clamp_eps = struct.unpack_from("<IIId", blob, 8)
    pos = 8 + struct.calcsize("<IIId")

    def take(count):
        nonlocal pos
        out = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).copy()
        pos += count * 8
        return out

    sal = take(n * N_REGIONAL).reshape(n, N_REGIONAL)
    glob = take(e_dim)
    areas = take(n)
    border = np.frombuffer(blob, dtype=np.uint8, count=n, offset=pos).astype(bool)
    pos += n
    edges = np.empty((n_edges, 2), dtype=np.intp)
    weights = np.empty(n_edges)
    for i in range(n_edges):
        j, k, w = struct.unpack_from("<IId", blob, pos)
        pos += struct.calcsize("<IId")
        edges[i] = (j, k)
        weights[i] = w
    clamped = np.clip(sal, clamp_eps, 1.0 - clamp_eps)
    regional = RegionSaliency(sal=sal, fg=-np.log1p(-clamped), bg=-np.log(clamped))
    return ImageFeatures(regional=regional, global_desc=glob, areas=areas,
                         is_border=border,
                         graph=RegionGraph(int(n), edges, weights))


def save_model(path, params):
    parts = [MODEL_MAGIC,
             struct.pack("<II", params.global_dim, N_REGIONAL),
             np.ascontiguousarray(params.w_global, dtype="<f8").tobytes(),
             np.ascontiguousarray(params.w_regional, dtype="<f8").tobytes(),
             np.ascontiguousarray(params.fg_prior, dtype="<f8").tobytes(),
             np.ascontiguousarray(params.bg_prior, dtype="<f8").tobytes(),
             struct.pack("<d", float(params.pairwise))]
    Path(path).write_bytes(b"".join(parts))


def load_model(path):
    blob = Path(path).read_bytes()
    if blob[:8] != MODEL_MAGIC:
        raise DecodeError(f"{path}: not a model file")
    e_dim, n_regional = struct.unpack_from("<II", blob, 8)
    if n_regional != N_REGIONAL:
        raise ModelMismatch(f"model has {n_regional} regional weights, "
                            f"expected {N_REGIONAL}")
    pos = 16
    expect = 2 * (e_dim + N_REGIONAL + 2) + 1
    vec = np.frombuffer(blob, dtype="<f8", count=expect, offset=pos).copy()
    return ModelParams.from_vector(vec, e_dim)


@dataclass
class ManifestRecord:
    image: Path
    label: int
    mask: Path | None = None


@dataclass
class Manifest:
    name: str
    records: list

    @property
    def labels(self):
        return [r.label for r in self.records]


def load_manifest(path):
    path = Path(path)
    base = path.parent
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "image" not in obj or "label" not in obj:
                raise ValueError(f"{path}:{lineno}: needs image and label keys")
            label = int(obj["label"])
            if label not in (0, 1):
                raise ValueError(f"{path}:{lineno}: label must be 0 or 1")
            mask = obj.get("mask")
            records.append(ManifestRecord(
                image=(base / obj["image"]).resolve(),
                label=label,
                mask=(base / mask).resolve() if mask else None))
    return Manifest(name=path.stem, records=records)


def save_manifest(path, manifest):
    path = Path(path)
    base = path.parent
    lines = []
    for rec in manifest.records:
        obj = {"image": _relative_or_absolute(rec.image, base),
               "label": rec.label}
        if rec.mask is not None:
            obj["mask"] = _relative_or_absolute(rec.mask, base)
        lines.append(json.dumps(obj))
    path.write_text("\n".join(lines) + "\n")


def _relative_or_absolute(target, base):
    try:
        return str(Path(target).resolve().relative_to(base.resolve()))
    except ValueError:
        return str(Path(target).resolve())


def save_saliency_png(path, saliency_map):
    """8-bit grayscale PNG with value = round(255 * pixel score)."""
    PILImage.fromarray(saliency_map.to_uint8(), mode="L").save(path)


def load_saliency_png(path):
    with PILImage.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)


def load_mask_png(path):
    with PILImage.open(path) as im:
        return (np.asarray(im.convert("L")) > 127).astype(np.uint8)
