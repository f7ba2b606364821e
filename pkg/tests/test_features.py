import numpy as np
import pytest

from weaksal.exceptions import DegenerateInput, DimensionMismatch
from weaksal.features import (
    CHANNELS,
    GIST_DIM,
    GLOBAL_DIM,
    N_REGIONAL,
    assemble_regional,
    backgroundness,
    boundary_connectivity,
    channel_distances,
    chi2_distance,
    chi2_map,
    gist_descriptor,
    gist_peak_frequency,
    global_contrast,
    global_descriptor,
    manifold_ranking,
    minmax,
    spatial_distribution,
)
from weaksal.imaging import segmentation_from_labels


class FakeApp:
    """Region appearance with hand-set means and histograms."""

    def __init__(self, means, hists, lbp_hists=None):
        means = np.asarray(means, dtype=float)
        hists = np.asarray(hists, dtype=float)
        self.n_regions = len(means)
        self.mean_rgb = self.mean_hsv = self.mean_lab = means
        self.hist_rgb = self.hist_hsv = self.hist_lab = hists
        self.hist_lbp = hists if lbp_hists is None else np.asarray(lbp_hists, float)


def one_hot_hists(bins, size=8):
    out = np.zeros((len(bins), size))
    for i, b in enumerate(bins):
        out[i, b] = 1.0
    return out


def strip_segmentation(n, rows=4):
    """n vertical strip regions of equal width."""
    labels = np.repeat(np.arange(n), 4)[None, :].repeat(rows, axis=0)
    return segmentation_from_labels(labels)


def scalar_chi2(p, q):
    total = 0.0
    for a, b in zip(p, q):
        if a + b > 0:
            total += (a - b) ** 2 / (a + b)
    return total


def scalar_distance(app, c, i, j):
    name = CHANNELS[c]
    if name.endswith("mean"):
        m = getattr(app, "mean_" + name.split("_")[0])
        return float(np.sqrt(np.sum((m[i] - m[j]) ** 2)))
    h = getattr(app, "hist_" + name.split("_")[0])
    return scalar_chi2(h[i], h[j])


class TestChi2Distance:
    def test_range_on_random_histograms(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            p = rng.random(16)
            q = rng.random(16)
            p /= p.sum()
            q /= q.sum()
            d = chi2_distance(p, q)
            assert 0 <= d <= 2

    def test_disjoint_support(self):
        p = np.array([1.0, 0.0])
        q = np.array([0.0, 1.0])
        assert chi2_distance(p, q) == pytest.approx(2.0, abs=0)


class TestMinmax:
    def test_scales_to_unit_interval(self):
        x = np.array([2.0, 4.0, 3.0])
        out = minmax(x)
        assert out.min() == 0 and out.max() == 1

    def test_constant_fill(self):
        assert np.all(minmax(np.full(4, 3.3)) == 0)
        assert np.all(minmax(np.full(4, 3.3), constant_fill=1.0) == 1)


class TestGlobalContrast:
    def test_single_region_is_zero(self):
        app = FakeApp([[0.5, 0.5, 0.5]], one_hot_hists([0]))
        seg = strip_segmentation(1)
        assert np.all(global_contrast(app, seg) == 0)

    def test_constant_appearance_is_zero(self):
        app = FakeApp([[0.5] * 3] * 3, one_hot_hists([2, 2, 2]))
        seg = strip_segmentation(3)
        assert np.all(global_contrast(app, seg) == 0)

    def test_matches_scalar_recomputation(self):
        rng = np.random.default_rng(1)
        means = rng.random((3, 3))
        hists = rng.random((3, 8))
        hists /= hists.sum(axis=1, keepdims=True)
        app = FakeApp(means, hists)
        seg = strip_segmentation(3)
        sigma = 0.25
        got = global_contrast(app, seg, sigma_spatial=sigma)

        for c in range(7):
            raw = []
            for i in range(3):
                acc = 0.0
                for j in range(3):
                    if j == i:
                        continue
                    d2 = sum((seg.centroids[i, k] - seg.centroids[j, k]) ** 2
                             for k in range(2))
                    acc += (seg.areas[j] * np.exp(-d2 / (2 * sigma ** 2))
                            * scalar_distance(app, c, i, j))
                raw.append(acc)
            lo, hi = min(raw), max(raw)
            expect = [(r - lo) / (hi - lo) if hi > lo else 0.0 for r in raw]
            assert np.allclose(got[:, c], expect, atol=1e-12)


class TestSpatialDistribution:
    def test_single_region_is_one(self):
        app = FakeApp([[0.5, 0.5, 0.5]], one_hot_hists([0]))
        seg = strip_segmentation(1)
        assert np.all(spatial_distribution(app, seg) == 1)

    def test_matches_scalar_recomputation(self):
        rng = np.random.default_rng(2)
        means = rng.random((3, 3))
        hists = rng.random((3, 8))
        hists /= hists.sum(axis=1, keepdims=True)
        app = FakeApp(means, hists)
        seg = strip_segmentation(3)
        sigma = 0.25
        got = spatial_distribution(app, seg, sigma_appearance=sigma)

        for c in range(7):
            spreads = []
            for i in range(3):
                w = [np.exp(-scalar_distance(app, c, i, j) ** 2 / (2 * sigma ** 2))
                     for j in range(3)]
                total = sum(w)
                w = [x / total for x in w]
                mu = sum(w[j] * seg.centroids[j] for j in range(3))
                spreads.append(sum(w[j] * np.sum((seg.centroids[j] - mu) ** 2)
                               for j in range(3)))
            lo, hi = min(spreads), max(spreads)
            expect = [1.0 - ((s - lo) / (hi - lo) if hi > lo else 0.0)
                      for s in spreads]
            assert np.allclose(got[:, c], expect, atol=1e-10)


class TestBackgroundness:
    def test_identical_to_border_is_zero(self):
        app = FakeApp([[0.2, 0.4, 0.6]] * 4, one_hot_hists([1, 1, 1, 1]))
        seg = strip_segmentation(4)
        assert np.all(backgroundness(app, seg) == 0)

    def test_disjoint_interior_region_attains_one(self):
        # strip layout: every region touches the frame, so fake the border
        # flags to carve out an interior region with a disjoint histogram
        app = FakeApp([[0.5] * 3] * 4, one_hot_hists([0, 0, 2, 0]))
        seg = strip_segmentation(4)
        seg.is_border[2] = False
        out = backgroundness(app, seg)
        hist_cols = [1, 3, 5, 6]
        assert np.all(out[2, hist_cols] == 1.0)

    def test_requires_border_region(self):
        app = FakeApp([[0.5] * 3] * 2, one_hot_hists([0, 1]))
        seg = strip_segmentation(2)
        seg.is_border[:] = False
        with pytest.raises(DegenerateInput):
            backgroundness(app, seg)

    def test_matches_scalar_recomputation(self):
        rng = np.random.default_rng(3)
        means = rng.random((4, 3))
        hists = rng.random((4, 8))
        hists /= hists.sum(axis=1, keepdims=True)
        app = FakeApp(means, hists)
        seg = strip_segmentation(4)
        seg.is_border[1] = False
        got = backgroundness(app, seg)

        border = [0, 2, 3]
        bw = [seg.areas[i] for i in border]
        bw = [x / sum(bw) for x in bw]
        for c in range(7):
            name = CHANNELS[c]
            raw = []
            if name.endswith("mean"):
                pooled = sum(w * means[i] for w, i in zip(bw, border))
                for i in range(4):
                    raw.append(float(np.sqrt(np.sum((means[i] - pooled) ** 2))))
            else:
                pooled = sum(w * hists[i] for w, i in zip(bw, border))
                pooled = pooled / pooled.sum()
                for i in range(4):
                    raw.append(scalar_chi2(hists[i], pooled))
            lo, hi = min(raw), max(raw)
            expect = [(r - lo) / (hi - lo) if hi > lo else 0.0 for r in raw]
            assert np.allclose(got[:, c], expect, atol=1e-12)


class TestManifoldRanking:
    def test_identical_appearance_quad_is_zero(self):
        labels = np.array([[0, 1], [2, 3]])
        seg = segmentation_from_labels(labels)
        app = FakeApp([[0.5] * 3] * 4, one_hot_hists([1, 1, 1, 1]))
        out = manifold_ranking(app, seg)
        assert np.all(out == 0)

    def test_decoupled_limit_interior_scores_one(self):
        # 3x3 region grid; center region 4 is interior
        labels = np.repeat(np.repeat(np.arange(9).reshape(3, 3), 3, axis=0), 3, axis=1)
        seg = segmentation_from_labels(labels)
        hists = one_hot_hists(list(range(9)), size=9)  # pairwise disjoint
        means = np.linspace(0, 1, 9)[:, None].repeat(3, axis=1) * 10  # far apart
        app = FakeApp(means, hists)
        out = manifold_ranking(app, seg)
        hist_cols = [1, 3, 5, 6]
        assert np.all(out[4, hist_cols] == 1.0)
        assert np.all(out[[0, 1, 2, 3, 5, 6, 7, 8]][:, hist_cols] < 1.0)

    def test_matches_dense_inversion_oracle(self):
        rng = np.random.default_rng(4)
        labels = np.repeat(np.arange(4), 3)[None, :].repeat(4, axis=0)
        seg = segmentation_from_labels(labels)
        means = rng.random((4, 3))
        hists = rng.random((4, 8))
        hists /= hists.sum(axis=1, keepdims=True)
        app = FakeApp(means, hists)
        sigma, alpha = 0.1, 0.99
        got = manifold_ranking(app, seg, sigma_ranking=sigma, alpha=alpha)

        # strip of 4: adjacency (0,1),(1,2),(2,3); 2-hop adds (0,2),(1,3);
        # all four touch the frame so border-border links complete the graph
        links = {(0, 1), (1, 2), (2, 3), (0, 2), (1, 3), (0, 3)}
        queries = [
            [1, 1, 1, 1],          # top strip crosses all regions
            [1, 1, 1, 1],          # bottom
            [1, 0, 0, 0],          # left
            [0, 0, 0, 1],          # right
        ]
        for c in range(7):
            w = np.zeros((4, 4))
            for i, j in links:
                w[i, j] = w[j, i] = np.exp(-scalar_distance(app, c, i, j) / sigma)
            lhs = np.diag(w.sum(axis=1)) - alpha * w
            combined = np.ones(4)
            for q in queries:
                f = np.linalg.inv(lhs) @ np.asarray(q, dtype=float)
                lo, hi = f.min(), f.max()
                s = 1.0 - (f - lo) / (hi - lo) if hi > lo else np.ones(4)
                combined = combined * s
            lo, hi = combined.min(), combined.max()
            expect = (combined - lo) / (hi - lo) if hi > lo else np.zeros(4)
            assert np.allclose(got[:, c], expect, atol=1e-9)

    def test_requires_two_regions(self):
        app = FakeApp([[0.5] * 3], one_hot_hists([0]))
        seg = strip_segmentation(1)
        with pytest.raises(ValueError):
            manifold_ranking(app, seg)


class TestBoundaryConnectivity:
    def test_constant_image_all_zero(self):
        app = FakeApp([[0.5] * 3] * 4, one_hot_hists([1, 1, 1, 1]))
        seg = strip_segmentation(4)
        assert np.all(boundary_connectivity(app, seg) == 0)

    def test_isolated_interior_region_scores_one(self):
        labels = np.repeat(np.repeat(np.arange(9).reshape(3, 3), 3, axis=0), 3, axis=1)
        seg = segmentation_from_labels(labels)
        hists = one_hot_hists([0, 0, 0, 0, 4, 0, 0, 0, 0], size=5)
        app = FakeApp(np.zeros((9, 3)), hists)
        out = boundary_connectivity(app, seg)
        hist_cols = [1, 3, 5, 6]
        assert np.all(out[4, hist_cols] == 1.0)

    def test_matches_dijkstra_oracle_on_chain(self):
        seg = strip_segmentation(5)
        sigma_g, sigma_b = 0.25, 1.0
        # hand-set distances; only the chain edges (i, i+1) matter
        rng = np.random.default_rng(5)
        dmat = np.zeros((7, 5, 5))
        for c in range(7):
            m = rng.random((5, 5))
            m = (m + m.T) / 2
            np.fill_diagonal(m, 0.0)
            dmat[c] = m
        got = boundary_connectivity(app=FakeApp(np.zeros((5, 3)),
                                                one_hot_hists([0] * 5)),
                                    seg=seg, sigma_geodesic=sigma_g,
                                    sigma_boundary=sigma_b, distances=dmat)

        rel = seg.areas / seg.areas.sum()
        for c in range(7):
            # Floyd-Warshall over the 4 chain edges
            geo = np.full((5, 5), np.inf)
            np.fill_diagonal(geo, 0.0)
            for i in range(4):
                geo[i, i + 1] = geo[i + 1, i] = dmat[c, i, i + 1]
            for k in range(5):
                for i in range(5):
                    for j in range(5):
                        geo[i, j] = min(geo[i, j], geo[i, k] + geo[k, j])
            raw = []
            for i in range(5):
                span = np.exp(-geo[i] ** 2 / (2 * sigma_g ** 2))
                area = float(span @ rel)
                blen = float(span @ rel)        # all five strips touch the frame
                ratio = blen / np.sqrt(area)
                raw.append(np.exp(-ratio ** 2 / (2 * sigma_b ** 2)))
            lo, hi = min(raw), max(raw)
            expect = [(r - lo) / (hi - lo) if hi > lo else 0.0 for r in raw]
            assert np.allclose(got[:, c], expect, atol=1e-10)


class TestAssembleRegional:
    def _assemble(self, value):
        block = np.full((2, 7), value)
        return assemble_regional(block, block, block, block, block)

    def test_clamp_at_zero(self):
        rs = self._assemble(0.0)
        assert np.allclose(rs.fg, -np.log(1 - 1e-3))
        assert np.allclose(rs.bg, -np.log(1e-3))

    def test_clamp_at_one(self):
        rs = self._assemble(1.0)
        assert np.allclose(rs.fg, -np.log(1e-3))
        assert np.allclose(rs.bg, -np.log(1 - 1e-3))

    def test_midpoint_symmetry(self):
        rs = self._assemble(0.5)
        assert np.allclose(rs.fg, np.log(2))
        assert np.allclose(rs.bg, np.log(2))

    def test_column_order(self):
        blocks = [np.full((1, 7), v) for v in (0.1, 0.2, 0.3, 0.4, 0.5)]
        rs = assemble_regional(*blocks)
        assert rs.sal.shape == (1, N_REGIONAL)
        assert np.allclose(rs.sal[0, :7], 0.1)
        assert np.allclose(rs.sal[0, 28:], 0.5)

    def test_monotone_transforms(self):
        grid = np.linspace(0, 1, 101)[None, :].repeat(7, axis=0).T[:, :7]
        rs = assemble_regional(grid, grid, grid, grid, grid)
        col = rs.sal[:, 0].argsort()
        assert np.all(np.diff(rs.fg[col, 0]) >= 0)
        assert np.all(np.diff(rs.bg[col, 0]) <= 0)

    def test_shape_mismatch(self):
        good = np.zeros((3, 7))
        with pytest.raises(DimensionMismatch):
            assemble_regional(good, good, good, good, np.zeros((2, 7)))


class TestGist:
    def test_constant_image_is_zero_vector(self):
        out = gist_descriptor(np.full((64, 64), 0.5))
        assert out.shape == (GIST_DIM,)
        assert np.all(out == 0)

    def test_vertical_stripes_peak_at_matching_filter(self):
        scale = 1
        f0 = gist_peak_frequency(scale)
        x = np.arange(128)
        img = 0.5 + 0.4 * np.cos(2 * np.pi * f0 * x)[None, :].repeat(128, axis=0)
        out = gist_descriptor(img)
        energy = out.reshape(32, 16).sum(axis=1)
        best = int(np.argmax(energy))
        assert best == scale * 8 + 0     # scale 1, orientation 0 (horizontal freq)

    def test_length_and_range(self):
        rng = np.random.default_rng(6)
        out = gist_descriptor(rng.random((90, 110, 3)))
        assert len(out) == 512
        assert out.min() >= 0 and out.max() <= 1


class TestGlobalDescriptor:
    def test_zero_saliency_gives_zero_grid_block(self):
        seg = strip_segmentation(3)
        sal = np.zeros((3, N_REGIONAL))
        out = global_descriptor(sal, seg, np.zeros(GIST_DIM))
        assert len(out) == GLOBAL_DIM
        assert np.all(out[:875] == 0)

    def test_single_region_unit_channel(self):
        seg = segmentation_from_labels(np.zeros((16, 16), dtype=int))
        sal = np.zeros((1, N_REGIONAL))
        sal[0, 4] = 1.0
        out = global_descriptor(sal, seg, np.zeros(GIST_DIM))
        grid = out[:875].reshape(N_REGIONAL, 25)
        assert np.allclose(grid[4], 1.0)
        others = np.delete(grid, 4, axis=0)
        assert np.all(others == 0)

    def test_length_is_1387(self):
        assert GLOBAL_DIM == 1387


class TestPermutationEquivariance:
    def test_all_five_features_follow_region_relabeling(self):
        rng = np.random.default_rng(9)
        labels = np.repeat(np.arange(4), 3)[None, :].repeat(6, axis=0)
        seg = segmentation_from_labels(labels)
        means = rng.random((4, 3))
        hists = rng.random((4, 8))
        hists /= hists.sum(axis=1, keepdims=True)
        app = FakeApp(means, hists)

        perm = np.array([2, 3, 1, 0])          # new label of old region i
        seg_p = segmentation_from_labels(perm[labels])
        inv = np.empty(4, dtype=int)
        inv[perm] = np.arange(4)
        app_p = FakeApp(means[inv], hists[inv])

        for fn in (global_contrast, spatial_distribution, backgroundness,
                   manifold_ranking, boundary_connectivity):
            base = fn(app, seg)
            permuted = fn(app_p, seg_p)
            assert np.allclose(permuted[perm], base, atol=1e-10), fn.__name__


def exact_chi2_kernel(x, y):
    total = 0.0
    for a, b in zip(x, y):
        if a + b > 0:
            total += 2 * a * b / (a + b)
    return total


class TestChi2Map:
    def test_zero_maps_to_zero(self):
        out = chi2_map(np.zeros(5))
        assert out.shape == (25,)
        assert np.all(out == 0)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            chi2_map(np.array([0.5, -0.1]))

    def test_self_kernel(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            x = rng.random(30)
            x /= x.sum()
            m = chi2_map(x, order=2, period=0.6)
            assert abs(m @ m - exact_chi2_kernel(x, x)) <= 0.02

    def test_kernel_approximation_sup_error(self):
        rng = np.random.default_rng(8)
        worst = 0.0
        for _ in range(1000):
            x = rng.random(16)
            y = rng.random(16)
            x /= x.sum()
            y /= y.sum()
            mx = chi2_map(x, order=2, period=0.6)
            my = chi2_map(y, order=2, period=0.6)
            worst = max(worst, abs(mx @ my - exact_chi2_kernel(x, y)))
        assert worst <= 0.05

    def test_output_length(self):
        assert len(chi2_map(np.ones(10), order=3)) == 70
