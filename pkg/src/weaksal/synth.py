"""Desk-scale synthetic dataset: salient-rectangle images vs stationary
textures, with ground-truth masks for evaluation only (training never
reads them)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from scipy.ndimage import gaussian_filter
from skimage.color import rgb2lab

from .persist import Manifest, ManifestRecord, save_manifest

IMAGE_SIZE = 96
RECT_MARGIN = 8
MIN_LAB_DISTANCE = 0.35      # construction margin above the 0.3 requirement


def normalized_lab_distance(rgb_a, rgb_b):
    """Euclidean distance between two RGB colors in the normalized Lab scale."""
    pair = np.asarray([rgb_a, rgb_b], dtype=float).reshape(2, 1, 3)
    lab = rgb2lab(pair).reshape(2, 3)
    lab[:, 0] /= 100.0
    lab[:, 1:] = (lab[:, 1:] + 110.0) / 220.0
    return float(np.linalg.norm(lab[0] - lab[1]))


def _salient_image(rng):
    base = rng.uniform(0.15, 0.85, size=3)
    while True:
        fg = rng.uniform(0.0, 1.0, size=3)
        if normalized_lab_distance(base, fg) >= MIN_LAB_DISTANCE:
            break
    img = np.tile(base, (IMAGE_SIZE, IMAGE_SIZE, 1))
    img = img + rng.normal(scale=0.015, size=img.shape)
    rect_w = int(rng.integers(24, 49))
    rect_h = int(rng.integers(24, 49))
    x0 = int(rng.integers(RECT_MARGIN, IMAGE_SIZE - RECT_MARGIN - rect_w + 1))
    y0 = int(rng.integers(RECT_MARGIN, IMAGE_SIZE - RECT_MARGIN - rect_h + 1))
    img[y0:y0 + rect_h, x0:x0 + rect_w] = (
        fg + rng.normal(scale=0.015, size=(rect_h, rect_w, 3)))
    mask = np.zeros((IMAGE_SIZE, IMAGE_SIZE), dtype=np.uint8)
    mask[y0:y0 + rect_h, x0:x0 + rect_w] = 255
    return np.clip(img, 0.0, 1.0), mask


def _background_image(rng):
    mask = np.zeros((IMAGE_SIZE, IMAGE_SIZE), dtype=np.uint8)
    if rng.integers(2) == 0:
        base = rng.uniform(0.25, 0.75, size=3)
        noise = gaussian_filter(rng.normal(size=(IMAGE_SIZE, IMAGE_SIZE, 3)),
                                sigma=(6, 6, 0))
        noise = noise / max(1e-9, np.abs(noise).max())
        img = base + rng.uniform(0.1, 0.2) * noise
    else:
        c1 = rng.uniform(0.1, 0.9, size=3)
        c2 = np.clip(c1 + rng.uniform(-0.35, 0.35, size=3), 0.0, 1.0)
        theta = rng.uniform(0, np.pi)
        cycles = rng.uniform(4.0, 12.0)
        ys, xs = np.indices((IMAGE_SIZE, IMAGE_SIZE))
        phase = 2 * np.pi * cycles * (xs * np.cos(theta)
                                      + ys * np.sin(theta)) / IMAGE_SIZE
        blend = 0.5 * (1.0 + np.sin(phase + rng.uniform(0, 2 * np.pi)))
        img = c1 + (c2 - c1) * blend[..., None]
    return np.clip(img, 0.0, 1.0), mask


def synth_dataset(n, seed, out_dir):
    """Write n images (n/2 salient, n/2 background, interleaved), their
    masks, and a manifest; bit-identical across runs for a fixed seed.
    Returns the manifest path."""
    if n < 2 or n % 2 != 0:
        raise ValueError("n must be an even number >= 2")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        label = 1 if i % 2 == 0 else 0
        img, mask = _salient_image(rng) if label else _background_image(rng)
        img_path = out_dir / f"img_{i:04d}.png"
        mask_path = out_dir / f"mask_{i:04d}.png"
        PILImage.fromarray(np.round(img * 255).astype(np.uint8)).save(img_path)
        PILImage.fromarray(mask, mode="L").save(mask_path)
        records.append(ManifestRecord(image=img_path, label=label, mask=mask_path))
    manifest_path = out_dir / "manifest.jsonl"
    save_manifest(manifest_path, Manifest(name=out_dir.name, records=records))
    return manifest_path
