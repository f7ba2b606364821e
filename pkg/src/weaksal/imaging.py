"""Image loading, channel construction, superpixels, and region descriptors.

Everything downstream works on regions: the label map partitions the image
into 4-connected superpixels, and each region carries mean colors plus
marginal color/texture histograms over seven appearance channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage, UnidentifiedImageError
from skimage import measure
from skimage.color import rgb2hsv, rgb2lab

from .exceptions import DecodeError, DimensionMismatch

# a*, b* of sRGB colors stay within [-110, 110]; fixed affine maps keep the
# normalized Lab scale stable across images
LAB_AB_HALFRANGE = 110.0

HIST_BINS_PER_COMPONENT = 16
LBP_BINS = 59


def load_image(path):
    """Decode an 8-bit RGB PNG/JPEG into an (H, W, 3) float array in [0, 1]."""
    try:
        with PILImage.open(path) as im:
            if im.mode not in ("RGB", "L", "P", "RGBA"):
                raise DecodeError(f"{path}: unsupported mode {im.mode}")
            rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
    except UnidentifiedImageError as exc:
        raise DecodeError(str(exc)) from exc
    return rgb / 255.0


def check_image(img, min_size=1):
    """Validate an RGB float image; returns it as float64."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DimensionMismatch(f"expected (H, W, 3) image, got {img.shape}")
    h, w = img.shape[:2]
    if h < min_size or w < min_size:
        raise ValueError(f"image {w}x{h} below minimum size {min_size}")
    if img.min() < -1e-9 or img.max() > 1 + 1e-9:
        raise ValueError("image components must lie in [0, 1]")
    return img


@dataclass
class ChannelStack:
    """Per-pixel appearance planes, all components normalized to [0, 1]."""

    rgb: np.ndarray    # (H, W, 3)
    hsv: np.ndarray    # (H, W, 3)
    lab: np.ndarray    # (H, W, 3), L/100 and (a,b) mapped from [-110, 110]
    lbp: np.ndarray    # (H, W) uniform-pattern codes 0..58
    gray: np.ndarray   # (H, W)

    @property
    def shape(self):
        return self.gray.shape


def build_channels(img):
    """Compute HSV, Lab (D65), grayscale, and uniform LBP codes for an image."""
    img = check_image(img)
    hsv = rgb2hsv(img)
    lab = rgb2lab(img)
    lab_scaled = np.empty_like(lab)
    lab_scaled[..., 0] = lab[..., 0] / 100.0
    lab_scaled[..., 1] = (lab[..., 1] + LAB_AB_HALFRANGE) / (2 * LAB_AB_HALFRANGE)
    lab_scaled[..., 2] = (lab[..., 2] + LAB_AB_HALFRANGE) / (2 * LAB_AB_HALFRANGE)
    np.clip(lab_scaled, 0.0, 1.0, out=lab_scaled)
    gray = img @ np.array([0.2125, 0.7154, 0.0721])
    return ChannelStack(rgb=img, hsv=hsv, lab=lab_scaled,
                        lbp=uniform_lbp(gray), gray=gray)


# circular neighbor order (dy, dx), counterclockwise from East
_LBP_OFFSETS = [(0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1)]


def _uniform_code_table():
    """Map the 256 8-bit patterns to 59 labels: uniform patterns (at most
    two circular 0/1 transitions) get consecutive labels by byte value,
    everything else falls into bin 58."""
    table = np.full(256, 58, dtype=np.intp)
    nxt = 0
    for byte in range(256):
        bits = [(byte >> p) & 1 for p in range(8)]
        transitions = sum(bits[p] != bits[(p + 1) % 8] for p in range(8))
        if transitions <= 2:
            table[byte] = nxt
            nxt += 1
    assert nxt == 58
    return table


_UNIFORM_TABLE = _uniform_code_table()


def uniform_lbp(gray):
    """8-neighbor uniform LBP codes with clamped (edge-replicated) borders.

    A neighbor contributes its bit only when strictly brighter than the
    center, so constant patches map to the all-zeros pattern (bin 0).
    """
    gray = np.asarray(gray, dtype=np.float64)
    padded = np.pad(gray, 1, mode="edge")
    code = np.zeros(gray.shape, dtype=np.intp)
    for bit, (dy, dx) in enumerate(_LBP_OFFSETS):
        nbr = padded[1 + dy: 1 + dy + gray.shape[0], 1 + dx: 1 + dx + gray.shape[1]]
        code |= (nbr > gray).astype(np.intp) << bit
    return _UNIFORM_TABLE[code]


@dataclass
class Segmentation:
    """Superpixel partition plus per-region geometry.

    labels:     (H, W) region index in 0..N-1, every region 4-connected
    areas:      (N,) pixel counts, summing to H*W
    centroids:  (N, 2) normalized (x, y) in [0, 1]^2
    is_border:  (N,) True iff the region touches the outer 1-pixel frame
    """

    labels: np.ndarray
    areas: np.ndarray
    centroids: np.ndarray
    is_border: np.ndarray

    @property
    def n_regions(self):
        return len(self.areas)

    @property
    def shape(self):
        return self.labels.shape

    def validate(self):
        """Check the partition invariants; used by tests."""
        n = self.n_regions
        assert self.labels.min() >= 0 and self.labels.max() == n - 1
        assert np.all(self.areas > 0)
        assert int(self.areas.sum()) == self.labels.size
        assert np.array_equal(np.bincount(self.labels.ravel(), minlength=n), self.areas)
        comp = measure.label(self.labels, connectivity=1, background=-1)
        assert comp.max() == n, "regions must be 4-connected"
        frame = np.zeros(self.labels.shape, dtype=bool)
        frame[0, :] = frame[-1, :] = frame[:, 0] = frame[:, -1] = True
        assert np.array_equal(np.unique(self.labels[frame]), np.flatnonzero(self.is_border))


def segmentation_from_labels(labels):
    """Build a Segmentation (areas, centroids, border flags) from a label map
    that is already sequential and 4-connected."""
    labels = np.asarray(labels, dtype=np.intp)
    h, w = labels.shape
    n = int(labels.max()) + 1
    areas = np.bincount(labels.ravel(), minlength=n)
    if np.any(areas == 0):
        raise ValueError("label map skips a region index")
    rows, cols = np.indices(labels.shape)
    cy = np.bincount(labels.ravel(), weights=rows.ravel(), minlength=n) / areas
    cx = np.bincount(labels.ravel(), weights=cols.ravel(), minlength=n) / areas
    centroids = np.stack([(cx + 0.5) / w, (cy + 0.5) / h], axis=1)
    border = np.zeros(n, dtype=bool)
    for edge in (labels[0, :], labels[-1, :], labels[:, 0], labels[:, -1]):
        border[np.unique(edge)] = True
    return Segmentation(labels=labels, areas=areas, centroids=centroids,
                        is_border=border)


def slic_superpixels(img, n_target=200, compactness=10.0, n_iters=10):
    """SLIC superpixels in Lab space with strict 4-connectivity.

    Local k-means in (L, a, b, x, y) space from a regular grid of centers,
    followed by a connectivity pass that merges every orphan component (a
    piece of a cluster disconnected from the cluster's largest piece) into
    the adjacent region with the largest current area.  Output labels are
    renumbered in raster-scan order of first appearance; the whole
    procedure is deterministic for fixed inputs.
    """
    img = check_image(img)
    if n_target < 2:
        raise ValueError("n_target must be at least 2")
    if compactness <= 0:
        raise ValueError("compactness must be positive")
    raw = _slic_assign(rgb2lab(img), n_target, compactness, n_iters)
    merged = _merge_orphans(raw)
    return segmentation_from_labels(_relabel_raster(merged))


def _slic_assign(lab, n_target, compactness, n_iters):
    h, w = lab.shape[:2]
    step = np.sqrt(h * w / n_target)
    gx = max(1, round(w / step))
    gy = max(1, round(h / step))
    if gx * gy < 2:                       # guarantee at least two clusters
        if w >= h:
            gx = 2
        else:
            gy = 2
    cx = (np.arange(gx) + 0.5) * w / gx
    cy = (np.arange(gy) + 0.5) * h / gy
    centers_xy = np.stack(np.meshgrid(cx, cy, indexing="xy"), axis=-1).reshape(-1, 2)
    k = len(centers_xy)
    centers_lab = lab[np.clip(centers_xy[:, 1].astype(int), 0, h - 1),
                      np.clip(centers_xy[:, 0].astype(int), 0, w - 1)].copy()

    ys, xs = np.indices((h, w))
    spatial_scale = (compactness / step) ** 2
    half = int(np.ceil(1.25 * step))
    labels = np.full((h, w), -1, dtype=np.intp)

    for _ in range(n_iters):
        best = np.full((h, w), np.inf)
        labels.fill(-1)
        for c in range(k):
            x0 = max(0, int(centers_xy[c, 0]) - half)
            x1 = min(w, int(centers_xy[c, 0]) + half + 1)
            y0 = max(0, int(centers_xy[c, 1]) - half)
            y1 = min(h, int(centers_xy[c, 1]) + half + 1)
            win = (slice(y0, y1), slice(x0, x1))
            d_lab = np.sum((lab[win] - centers_lab[c]) ** 2, axis=-1)
            d_xy = ((xs[win] - centers_xy[c, 0]) ** 2
                    + (ys[win] - centers_xy[c, 1]) ** 2)
            d = d_lab + spatial_scale * d_xy
            view_best, view_lab = best[win], labels[win]
            closer = d < view_best
            view_best[closer] = d[closer]
            view_lab[closer] = c
        unassigned = labels < 0
        if unassigned.any():              # center drift left a gap: nearest center
            pts = np.stack([xs[unassigned], ys[unassigned]], axis=1)
            d = np.sum((pts[:, None, :] - centers_xy[None, :, :]) ** 2, axis=2)
            labels[unassigned] = np.argmin(d, axis=1)
        flat = labels.ravel()
        counts = np.bincount(flat, minlength=k).astype(np.float64)
        occupied = counts > 0
        for axis, coord in ((0, xs), (1, ys)):
            sums = np.bincount(flat, weights=coord.ravel(), minlength=k)
            centers_xy[occupied, axis] = sums[occupied] / counts[occupied]
        for ch in range(3):
            sums = np.bincount(flat, weights=lab[..., ch].ravel(), minlength=k)
            centers_lab[occupied, ch] = sums[occupied] / counts[occupied]
    return labels


def _merge_orphans(labels):
    comp = measure.label(labels, connectivity=1, background=-1) - 1  # 0-based ids
    n_comp = comp.max() + 1
    comp_sizes = np.bincount(comp.ravel(), minlength=n_comp)
    flat_c, flat_l = comp.ravel(), labels.ravel()
    first = np.unique(flat_c, return_index=True)[1]
    comp_cluster = flat_l[first]                          # SLIC cluster per component

    # largest component of each cluster keeps it; the rest are orphans
    region_of = np.full(n_comp, -1, dtype=np.intp)
    order = np.lexsort((np.arange(n_comp), -comp_sizes))  # by size desc, id asc
    seen = set()
    for c in order:
        cl = comp_cluster[c]
        if cl not in seen:
            seen.add(cl)
            region_of[c] = c                              # keeper: region id = comp id

    pairs = _component_adjacency(comp)
    nbrs = [[] for _ in range(n_comp)]
    for a, b in pairs:
        nbrs[a].append(b)
        nbrs[b].append(a)

    region_area = np.where(region_of >= 0, comp_sizes, 0).astype(np.int64)
    pending = [c for c in range(n_comp) if region_of[c] < 0]
    while pending:
        deferred = []
        progressed = False
        for c in pending:
            cand = {region_of[b] for b in nbrs[c] if region_of[b] >= 0}
            if not cand:
                deferred.append(c)
                continue
            target = max(cand, key=lambda r: (region_area[r], -r))
            region_of[c] = target
            region_area[target] += comp_sizes[c]
            progressed = True
        if not progressed:
            raise RuntimeError("disconnected components cannot be merged")
        pending = deferred
    return region_of[comp]


def _component_adjacency(comp):
    a = np.concatenate([
        np.stack([comp[:, :-1].ravel(), comp[:, 1:].ravel()], axis=1),
        np.stack([comp[:-1, :].ravel(), comp[1:, :].ravel()], axis=1),
    ])
    a = a[a[:, 0] != a[:, 1]]
    if len(a) == 0:
        return np.empty((0, 2), dtype=np.intp)
    return np.unique(np.sort(a, axis=1), axis=0)


def _relabel_raster(labels):
    flat = labels.ravel()
    uniq, first_idx = np.unique(flat, return_index=True)
    mapping = np.empty(uniq.max() + 1, dtype=np.intp)
    mapping[uniq[np.argsort(first_idx)]] = np.arange(len(uniq))
    return mapping[labels]


@dataclass
class RegionAppearance:
    """Per-region color means and L1-normalized marginal histograms."""

    mean_rgb: np.ndarray   # (N, 3)
    mean_hsv: np.ndarray   # (N, 3)
    mean_lab: np.ndarray   # (N, 3) in the normalized Lab scale
    hist_rgb: np.ndarray   # (N, 48)
    hist_hsv: np.ndarray   # (N, 48)
    hist_lab: np.ndarray   # (N, 48)
    hist_lbp: np.ndarray   # (N, 59)

    @property
    def n_regions(self):
        return len(self.mean_rgb)


def region_descriptors(stack, seg):
    """Area-weighted means plus marginal histograms for every region."""
    if stack.shape != seg.shape:
        raise DimensionMismatch(f"channels {stack.shape} vs labels {seg.shape}")
    labels = seg.labels.ravel()
    n = seg.n_regions
    areas = seg.areas.astype(np.float64)

    def mean_of(plane3):
        out = np.empty((n, 3))
        for c in range(3):
            out[:, c] = np.bincount(labels, weights=plane3[..., c].ravel(),
                                    minlength=n) / areas
        return out

    def hist_of(plane3):
        blocks = []
        for c in range(3):
            v = plane3[..., c].ravel()
            bins = np.minimum((v * HIST_BINS_PER_COMPONENT).astype(np.intp),
                              HIST_BINS_PER_COMPONENT - 1)
            counts = np.bincount(labels * HIST_BINS_PER_COMPONENT + bins,
                                 minlength=n * HIST_BINS_PER_COMPONENT)
            blocks.append(counts.reshape(n, HIST_BINS_PER_COMPONENT))
        h = np.concatenate(blocks, axis=1).astype(np.float64)
        return h / h.sum(axis=1, keepdims=True)

    lbp_counts = np.bincount(labels * LBP_BINS + stack.lbp.ravel(),
                             minlength=n * LBP_BINS)
    hist_lbp = lbp_counts.reshape(n, LBP_BINS).astype(np.float64)
    hist_lbp /= hist_lbp.sum(axis=1, keepdims=True)

    return RegionAppearance(
        mean_rgb=mean_of(stack.rgb), mean_hsv=mean_of(stack.hsv),
        mean_lab=mean_of(stack.lab), hist_rgb=hist_of(stack.rgb),
        hist_hsv=hist_of(stack.hsv), hist_lab=hist_of(stack.lab),
        hist_lbp=hist_lbp)
