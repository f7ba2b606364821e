"""Regional saliency features, the global existence descriptor, and the
explicit chi-square kernel map.

Five saliency cues (global contrast, spatial distribution, backgroundness,
manifold ranking, boundary connectivity) are each computed on seven
appearance channels, giving a 35-column matrix per image.  Columns are
min-max normalized per image per channel; a constant channel normalizes to
all zeros except for the inverted spatial-distribution feature, where a
constant spread means no discriminative signal and maps to all ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra
from skimage.transform import resize

from .exceptions import DegenerateInput, DimensionMismatch, SolveFailure
from .mrf import adjacency_pairs, build_graph

# channel order shared by all regional features
CHANNELS = ("rgb_mean", "rgb_hist", "hsv_mean", "hsv_hist",
            "lab_mean", "lab_hist", "lbp_hist")
N_CHANNELS = len(CHANNELS)
FAMILIES = ("contrast", "spread", "backgroundness", "ranking", "connectivity")
N_REGIONAL = N_CHANNELS * len(FAMILIES)          # 35

GRID_CELLS = 5                                   # existence pooling grid
GIST_SIZE = 128
GIST_SCALES = 4
GIST_ORIENTATIONS = 8
GIST_GRID = 4
GIST_DIM = GIST_SCALES * GIST_ORIENTATIONS * GIST_GRID ** 2   # 512
GLOBAL_DIM = GRID_CELLS ** 2 * N_REGIONAL + GIST_DIM          # 1387


def chi2_distance(p, q):
    """Chi-square histogram distance sum((p-q)^2 / (p+q)), empty bins ignored.

    For L1-normalized histograms the result lies in [0, 2].
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    denom = p + q
    num = (p - q) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        terms = np.where(denom > 0, num / denom, 0.0)
    return terms.sum(axis=-1)


def minmax(x, constant_fill=0.0):
    """Scale to [0, 1]; a constant vector maps to `constant_fill` everywhere."""
    x = np.asarray(x, dtype=np.float64)
    lo, hi = x.min(), x.max()
    if hi - lo <= 0:
        return np.full_like(x, constant_fill)
    return (x - lo) / (hi - lo)


def channel_distances(app):
    """Stack of 7 pairwise N x N distance matrices, one per channel:
    Euclidean for mean channels, chi-square for histogram channels."""
    n = app.n_regions
    out = np.empty((N_CHANNELS, n, n))
    for idx, mean in ((0, app.mean_rgb), (2, app.mean_hsv), (4, app.mean_lab)):
        diff = mean[:, None, :] - mean[None, :, :]
        out[idx] = np.sqrt(np.sum(diff ** 2, axis=2))
    for idx, hist in ((1, app.hist_rgb), (3, app.hist_hsv),
                      (5, app.hist_lab), (6, app.hist_lbp)):
        out[idx] = chi2_distance(hist[:, None, :], hist[None, :, :])
    return out


def global_contrast(app, seg, sigma_spatial=0.25, distances=None):
    """Area- and proximity-weighted appearance contrast of each region.

    raw_i = sum_{j != i} area_j * exp(-||p_i - p_j||^2 / (2 s^2)) * d_c(i, j),
    min-max normalized per channel.
    """
    dists = channel_distances(app) if distances is None else distances
    p = seg.centroids
    pd2 = np.sum((p[:, None, :] - p[None, :, :]) ** 2, axis=2)
    w = np.exp(-pd2 / (2.0 * sigma_spatial ** 2))
    areas = seg.areas.astype(np.float64)
    out = np.empty((seg.n_regions, N_CHANNELS))
    for c in range(N_CHANNELS):
        raw = (w * dists[c]) @ areas          # diagonal contributes zero
        out[:, c] = minmax(raw)
    return out


def spatial_distribution(app, seg, sigma_appearance=0.25, distances=None):
    """How widely each region's appearance spreads over the image; wider
    spread means lower saliency, so the min-max spread is inverted."""
    dists = channel_distances(app) if distances is None else distances
    p = seg.centroids
    p2 = np.sum(p ** 2, axis=1)
    out = np.empty((seg.n_regions, N_CHANNELS))
    for c in range(N_CHANNELS):
        w = np.exp(-dists[c] ** 2 / (2.0 * sigma_appearance ** 2))
        w /= w.sum(axis=1, keepdims=True)
        mu = w @ p
        spread = w @ p2 - np.sum(mu ** 2, axis=1)
        out[:, c] = 1.0 - minmax(spread)
    return out


def backgroundness(app, seg):
    """Appearance distance of each region to the pooled border appearance."""
    border = seg.is_border
    if not border.any():
        raise DegenerateInput("segmentation has no border region")
    bw = seg.areas[border].astype(np.float64)
    bw /= bw.sum()
    out = np.empty((seg.n_regions, N_CHANNELS))
    for c, name in enumerate(CHANNELS):
        if name.endswith("mean"):
            values = getattr(app, "mean_" + name.split("_")[0])
            pooled = bw @ values[border]
            raw = np.sqrt(np.sum((values - pooled) ** 2, axis=1))
        else:
            values = getattr(app, "hist_" + name.split("_")[0])
            pooled = bw @ values[border]
            pooled /= pooled.sum()
            raw = chi2_distance(values, pooled)
        out[:, c] = minmax(raw)
    return out


def manifold_ranking(app, seg, sigma_ranking=0.1, alpha=0.99, distances=None):
    """Graph-based relevance of each region to the four image sides.

    The ranking graph links adjacent regions, their 2-hop neighbors, and
    every pair of border regions.  For each side, regions touching that
    side form the query; ranking scores come from the regularized inverse
    (D - alpha W)^(-1) applied to the query indicator.  Low relevance to
    every side means salient.
    """
    n = seg.n_regions
    if n < 2:
        raise ValueError("manifold ranking needs at least two regions")
    dists = channel_distances(app) if distances is None else distances

    adj = np.zeros((n, n), dtype=bool)
    pairs = adjacency_pairs(seg.labels)
    adj[pairs[:, 0], pairs[:, 1]] = True
    adj |= adj.T
    two_hop = (adj.astype(np.int32) @ adj.astype(np.int32)) > 0
    link = adj | two_hop
    link[np.ix_(seg.is_border, seg.is_border)] = True
    np.fill_diagonal(link, False)

    sides = _side_queries(seg)
    out = np.empty((n, N_CHANNELS))
    for c in range(N_CHANNELS):
        w = np.where(link, np.exp(-dists[c] / sigma_ranking), 0.0)
        lhs = np.diag(w.sum(axis=1)) - alpha * w
        combined = np.ones(n)
        for query in sides:
            f = _ranking_solve(lhs, query.astype(np.float64))
            combined *= 1.0 - minmax(f)
        out[:, c] = minmax(combined)
    return out


def _ranking_solve(lhs, rhs):
    try:
        return np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError:
        try:
            return np.linalg.solve(lhs + 1e-9 * np.eye(len(lhs)), rhs)
        except np.linalg.LinAlgError as exc:
            raise SolveFailure("ranking system singular after regularization") from exc


def _side_queries(seg):
    labels = seg.labels
    n = seg.n_regions
    queries = []
    for strip in (labels[0, :], labels[-1, :], labels[:, 0], labels[:, -1]):
        q = np.zeros(n, dtype=bool)
        q[np.unique(strip)] = True
        queries.append(q)
    return queries


def boundary_connectivity(app, seg, sigma_geodesic=0.25, sigma_boundary=1.0,
                          distances=None):
    """Soft ratio of a region's border contact to its spanning area.

    Geodesic distances run over the region adjacency graph with appearance
    edge costs; a region strongly connected to the border gets a high
    ratio, which the Gaussian squashing turns into low saliency.
    """
    dists = channel_distances(app) if distances is None else distances
    n = seg.n_regions
    pairs = adjacency_pairs(seg.labels)
    rel_areas = seg.areas / seg.areas.sum()
    border = seg.is_border
    out = np.empty((n, N_CHANNELS))
    for c in range(N_CHANNELS):
        if len(pairs):
            costs = dists[c][pairs[:, 0], pairs[:, 1]]
            graph = coo_matrix((costs, (pairs[:, 0], pairs[:, 1])), shape=(n, n))
            geo = dijkstra(graph.tocsr(), directed=False)
        else:
            geo = np.full((n, n), np.inf)
            np.fill_diagonal(geo, 0.0)
        span = np.exp(-geo ** 2 / (2.0 * sigma_geodesic ** 2))
        soft_area = span @ rel_areas
        soft_border = span[:, border] @ rel_areas[border]
        ratio = soft_border / np.sqrt(soft_area)
        out[:, c] = minmax(np.exp(-ratio ** 2 / (2.0 * sigma_boundary ** 2)))
    return out


@dataclass
class RegionSaliency:
    """The 35-column regional feature matrix and its log transforms.

    sal entries live in [0, 1]; fg = -log(1 - clamp(sal)) rises with
    saliency, bg = -log(clamp(sal)) falls with it, and the clamp keeps both
    within [-log(1 - eps), -log(eps)].
    """

    sal: np.ndarray
    fg: np.ndarray
    bg: np.ndarray

    @property
    def n_regions(self):
        return len(self.sal)


def assemble_regional(contrast, spread, border_distance, ranking, connectivity,
                      clamp_eps=1e-3):
    """Concatenate the five 7-channel feature blocks and apply the clamped
    negative-log transforms."""
    blocks = (contrast, spread, border_distance, ranking, connectivity)
    n = blocks[0].shape[0]
    for b in blocks:
        if b.shape != (n, N_CHANNELS):
            raise DimensionMismatch(f"feature block shape {b.shape}")
    sal = np.concatenate(blocks, axis=1)
    clamped = np.clip(sal, clamp_eps, 1.0 - clamp_eps)
    return RegionSaliency(sal=sal, fg=-np.log1p(-clamped), bg=-np.log(clamped))


def gist_descriptor(img_or_gray):
    """512-dim scene descriptor: 4x8 band-pass filter bank pooled on a 4x4 grid.

    The grayscale plane is resized to 128x128 and filtered in the frequency
    domain; per filter, the mean response magnitude in each grid cell is
    recorded, and the concatenated vector is min-max normalized per image.
    """
    arr = np.asarray(img_or_gray, dtype=np.float64)
    gray = arr @ np.array([0.2125, 0.7154, 0.0721]) if arr.ndim == 3 else arr
    g = resize(gray, (GIST_SIZE, GIST_SIZE), anti_aliasing=True)
    spectrum = np.fft.fft2(g)
    cell = GIST_SIZE // GIST_GRID
    out = np.empty((GIST_SCALES * GIST_ORIENTATIONS, GIST_GRID ** 2))
    for k, transfer in enumerate(_gist_bank()):
        resp = np.abs(np.fft.ifft2(spectrum * transfer))
        pooled = resp.reshape(GIST_GRID, cell, GIST_GRID, cell).mean(axis=(1, 3))
        out[k] = pooled.ravel()
    return minmax(out.ravel())


_GIST_BANK_CACHE = None


def _gist_bank():
    """Transfer functions of 32 oriented band-pass filters, zero at DC."""
    global _GIST_BANK_CACHE
    if _GIST_BANK_CACHE is not None:
        return _GIST_BANK_CACHE
    f = np.fft.fftfreq(GIST_SIZE)
    fx, fy = np.meshgrid(f, f, indexing="xy")
    radius = np.hypot(fx, fy)
    angle = np.arctan2(fy, fx)
    sigma_theta = np.pi / GIST_ORIENTATIONS
    bank = []
    for s in range(GIST_SCALES):
        f0 = 0.25 / (2 ** s)
        sigma_r = f0 / 2.0
        radial = np.exp(-(radius - f0) ** 2 / (2 * sigma_r ** 2))
        for o in range(GIST_ORIENTATIONS):
            theta0 = o * np.pi / GIST_ORIENTATIONS
            lobes = np.zeros_like(radius)
            for center in (theta0, theta0 + np.pi):
                d = np.angle(np.exp(1j * (angle - center)))
                lobes += np.exp(-d ** 2 / (2 * sigma_theta ** 2))
            transfer = radial * lobes
            transfer[0, 0] = 0.0
            bank.append(transfer)
    _GIST_BANK_CACHE = bank
    return bank


def gist_peak_frequency(scale):
    """Center frequency (cycles/pixel on the 128x128 plane) of a scale."""
    return 0.25 / (2 ** scale)


def global_descriptor(sal, seg, gist512):
    """1387-dim existence descriptor: 5x5 grid-pooled saliency renderings of
    all 35 channels followed by the 512 scene-descriptor values."""
    if sal.shape != (seg.n_regions, N_REGIONAL):
        raise DimensionMismatch(f"saliency matrix shape {sal.shape}")
    if len(gist512) != GIST_DIM:
        raise DimensionMismatch(f"scene descriptor length {len(gist512)}")
    pooled = np.empty((N_REGIONAL, GRID_CELLS ** 2))
    side = 300
    cell = side // GRID_CELLS
    for ch in range(N_REGIONAL):
        rendered = sal[:, ch][seg.labels]
        big = resize(rendered, (side, side))
        pooled[ch] = big.reshape(GRID_CELLS, cell, GRID_CELLS, cell).mean(axis=(1, 3)).ravel()
    return np.concatenate([pooled.ravel(), np.asarray(gist512, dtype=np.float64)])


def chi2_map(v, order=2, period=0.6):
    """Explicit feature map approximating the additive chi-square kernel
    k(x, y) = sum_i 2 x_i y_i / (x_i + y_i).

    Each input component expands into 2*order + 1 values laid out in blocks
    [sqrt | cos_1 | sin_1 | ... | cos_order | sin_order]; the inner product
    of two mapped vectors approximates the kernel.  All inputs must be
    nonnegative.
    """
    v = np.atleast_1d(np.asarray(v, dtype=np.float64))
    if v.min() < 0:
        raise ValueError("chi-square map requires nonnegative inputs")
    nz = v > 0
    vnz = v[nz]
    blocks = [np.where(nz, np.sqrt(v * period), 0.0)]
    log_nz = np.log(vnz)
    for j in range(1, order + 1):
        factor = np.sqrt(2.0 * vnz * period / np.cosh(np.pi * j * period))
        phase = j * period * log_nz
        cos_b = np.zeros_like(v)
        sin_b = np.zeros_like(v)
        cos_b[nz] = factor * np.cos(phase)
        sin_b[nz] = factor * np.sin(phase)
        blocks.append(cos_b)
        blocks.append(sin_b)
    return np.concatenate(blocks)


@dataclass
class ImageFeatures:
    """Everything the model needs to score one image.

    Mirrors the on-disk feature record: regional saliency features with
    their log transforms, the global descriptor, region areas, border
    flags, and the smoothness graph.
    """

    regional: RegionSaliency
    global_desc: np.ndarray
    areas: np.ndarray
    is_border: np.ndarray
    graph: RegionGraph

    @property
    def n_regions(self):
        return self.regional.n_regions


def extract_features(img, cfg=None):
    """Full per-image pipeline: superpixels, descriptors, the five regional
    cues, the global descriptor, and the smoothness graph."""
    from .config import Config
    from .imaging import build_channels, check_image, region_descriptors, slic_superpixels

    cfg = cfg or Config()
    img = check_image(img, min_size=16)
    stack = build_channels(img)
    seg = slic_superpixels(img, n_target=cfg.n_segments, compactness=cfg.compactness)
    app = region_descriptors(stack, seg)
    dists = channel_distances(app)
    regional = assemble_regional(
        global_contrast(app, seg, cfg.sigma_spatial, distances=dists),
        spatial_distribution(app, seg, cfg.sigma_appearance, distances=dists),
        backgroundness(app, seg),
        manifold_ranking(app, seg, cfg.sigma_ranking, cfg.ranking_alpha,
                         distances=dists),
        boundary_connectivity(app, seg, cfg.sigma_geodesic, cfg.sigma_boundary,
                              distances=dists),
        clamp_eps=cfg.clamp_eps,
    )
    glob = global_descriptor(regional.sal, seg, gist_descriptor(stack.gray))
    graph = build_graph(seg, app, sigma_c=cfg.sigma_color)
    return ImageFeatures(regional=regional, global_desc=glob, areas=seg.areas,
                         is_border=seg.is_border, graph=graph), seg
