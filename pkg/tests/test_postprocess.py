import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scarmap import (
    ConfigError,
    DataError,
    DegenerateMapError,
    IndexThresholds,
    MissingBandError,
    Raster,
    apply_index_filters,
    binarize,
    compute_ndvi,
    compute_ndwi,
    compute_tmbi,
    load_mask,
    otsu_threshold,
    remove_small_components,
    save_mask,
    select_thresholds,
)


def four_band(nir, red, green, blue):
    data = np.stack([np.asarray(b, dtype=np.float64) for b in (nir, red, green, blue)])
    return Raster(data, {"NIR": 0, "Red": 1, "Green": 2, "Blue": 3})


def random_raster(rng, shape=(16, 16)):
    return four_band(
        rng.uniform(0.3, 0.9, shape),
        rng.uniform(0.05, 0.4, shape),
        rng.uniform(0.05, 0.45, shape),
        rng.uniform(0.02, 0.3, shape),
    )


class TestIndexes:
    def test_ndvi_examples(self):
        r = four_band([[0.8, 0.3, 0.0]], [[0.2, 0.3, 0.0]], [[0.0] * 3], [[0.0] * 3])
        ndvi = compute_ndvi(r)
        assert abs(ndvi[0, 0] - 0.6) < 1e-12
        assert ndvi[0, 1] == 0.0
        assert ndvi[0, 2] == 0.0  # 0/0 rule

    def test_ndwi_examples(self):
        r = four_band([[0.2, 0.3, 0.4]], [[0.0] * 3], [[0.6, 0.3, 0.0]], [[0.0] * 3])
        ndwi = compute_ndwi(r)
        assert abs(ndwi[0, 0] - 0.5) < 1e-12
        assert ndwi[0, 1] == 0.0
        assert ndwi[0, 2] == -1.0

    def test_tmbi_examples(self):
        r = four_band([[0.0, 0.0, 0.0]], [[0.3, 0.0, 0.0]], [[0.3, 0.0, 0.0]], [[0.3, 0.0, 1.0]])
        tmbi = compute_tmbi(r)
        assert abs(tmbi[0, 0] - 0.3) < 1e-12
        assert tmbi[0, 1] == 0.0
        assert abs(tmbi[0, 2] - 1.0 / math.sqrt(3.0)) < 1e-12

    def test_pixelwise_against_scalar_reference(self, rng):
        r = random_raster(rng, shape=(100, 100))
        nir, red, green, blue = (r.data[i] for i in range(4))
        ndvi, ndwi, tmbi = compute_ndvi(r), compute_ndwi(r), compute_tmbi(r)
        for _ in range(300):
            i, j = rng.integers(0, 100), rng.integers(0, 100)
            n, rd, g, b = (float(x[i, j]) for x in (nir, red, green, blue))
            assert abs(ndvi[i, j] - (n - rd) / (n + rd)) <= 1e-12
            assert abs(ndwi[i, j] - (g - n) / (g + n)) <= 1e-12
            assert abs(tmbi[i, j] - math.sqrt((b * b + g * g + rd * rd) / 3.0)) <= 1e-12
        assert np.all(ndvi >= -1.0) and np.all(ndvi <= 1.0)
        assert np.all(ndwi >= -1.0) and np.all(ndwi <= 1.0)
        assert np.all(tmbi >= 0.0)

    def test_missing_roles(self):
        r = Raster(np.zeros((2, 2, 2)), {"NIR": 0, "Red": 1})
        with pytest.raises(MissingBandError):
            compute_ndwi(r)
        with pytest.raises(MissingBandError):
            compute_tmbi(r)

    def test_tmbi_with_auxiliary_blue(self, rng):
        r3 = Raster(rng.uniform(0.1, 0.9, (3, 4, 4)), {"NIR": 0, "Red": 1, "Green": 2})
        blue = Raster(rng.uniform(0.1, 0.9, (1, 4, 4)), {"Blue": 0})
        tmbi = compute_tmbi(r3, blue=blue)
        expected = np.sqrt((blue.data[0] ** 2 + r3.data[2] ** 2 + r3.data[1] ** 2) / 3.0)
        assert np.allclose(tmbi, expected, atol=1e-12)
        with pytest.raises(DataError):
            compute_tmbi(r3, blue=Raster(np.zeros((1, 5, 5)), {"Blue": 0}))


class TestBinarize:
    def test_fixed(self):
        assert np.array_equal(binarize(np.array([[0.2, 0.7]]), "fixed", 0.5), [[False, True]])

    def test_quantile_exact_count(self, rng):
        values = rng.permutation(np.linspace(0.0, 1.0, 100)).reshape(10, 10)
        mask = binarize(values, "quantile", 0.9)
        assert int(mask.sum()) == 10
        # sort-based reference
        threshold = np.sort(values.ravel())[89]
        assert np.array_equal(mask, values > np.quantile(values, 0.9))
        assert np.all(values[mask] > threshold)

    def test_otsu_two_value_map(self):
        values = np.concatenate([np.full(60, 0.1), np.full(40, 0.9)])
        values = np.random.default_rng(0).permutation(values).reshape(10, 10)
        t = otsu_threshold(values)
        assert 0.1 < t < 0.9
        mask = binarize(values, "otsu")
        assert np.array_equal(mask, values > 0.5)

    def test_otsu_matches_naive_scan(self, rng):
        scores = np.concatenate([rng.normal(0.1, 0.02, 400), rng.normal(0.8, 0.05, 100)])
        lo, hi = scores.min(), scores.max()
        counts, edges = np.histogram(scores, bins=256, range=(lo, hi))
        centers = 0.5 * (edges[:-1] + edges[1:])
        best_sigma, best_cut = -1.0, None
        total = counts.sum()
        for cut in range(255):
            w0 = counts[: cut + 1].sum() / total
            w1 = 1.0 - w0
            if w0 == 0 or w1 == 0:
                continue
            mu0 = (counts[: cut + 1] * centers[: cut + 1]).sum() / counts[: cut + 1].sum()
            mu1 = (counts[cut + 1 :] * centers[cut + 1 :]).sum() / counts[cut + 1 :].sum()
            sigma = w0 * w1 * (mu0 - mu1) ** 2
            if sigma > best_sigma:
                best_sigma, best_cut = sigma, cut
        assert otsu_threshold(scores) == pytest.approx(edges[best_cut + 1], abs=1e-12)

    def test_degenerate_map_errors(self):
        with pytest.raises(DegenerateMapError):
            binarize(np.full((3, 3), 0.5), "otsu")
        with pytest.raises(DegenerateMapError):
            binarize(np.full((3, 3), 0.5), "quantile", 0.5)

    def test_config_errors(self):
        with pytest.raises(ConfigError):
            binarize(np.zeros((2, 2)), "fixed")
        with pytest.raises(ConfigError):
            binarize(np.zeros((2, 2)), "quantile", 1.5)
        with pytest.raises(ConfigError):
            binarize(np.zeros((2, 2)), "ostu")

    def test_fixed_monotone_in_threshold(self, rng):
        values = rng.uniform(size=(12, 12))
        low = binarize(values, "fixed", 0.3)
        high = binarize(values, "fixed", 0.6)
        assert np.all(high <= low)

    def test_accepts_anomaly_map(self, rng):
        from scarmap import AnomalyMap

        amap = AnomalyMap(rng.uniform(size=(4, 4)))
        assert binarize(amap, "fixed", 0.5).shape == (4, 4)


class TestFilters:
    def test_rule_application(self, rng):
        r = random_raster(rng, (1, 1))
        r.data[2, 0, 0] = 0.85  # Green >> NIR -> NDWI high (water-like)
        r.data[0, 0, 0] = 0.15
        mask = np.array([[True]])
        out = apply_index_filters(mask, r, IndexThresholds(ndwi_max=0.3))
        assert out[0, 0] == False  # noqa: E712

    def test_disabled_is_identity(self, rng):
        r = random_raster(rng)
        mask = rng.random((16, 16)) > 0.5
        assert np.array_equal(apply_index_filters(mask, r, IndexThresholds()), mask)

    def test_monotone_and_idempotent(self, rng):
        r = random_raster(rng)
        mask = rng.random((16, 16)) > 0.4
        thr = IndexThresholds(ndvi_max=0.4, ndwi_max=0.0, tmbi_max=0.35)
        once = apply_index_filters(mask, r, thr)
        assert once.sum() <= mask.sum()
        assert not np.any(once & ~mask)  # never adds positives
        assert np.array_equal(apply_index_filters(once, r, thr), once)

    def test_missing_band_for_enabled_rule(self):
        r = Raster(np.zeros((3, 2, 2)), {"NIR": 0, "Red": 1, "Green": 2})
        with pytest.raises(MissingBandError):
            apply_index_filters(np.ones((2, 2), bool), r, IndexThresholds(tmbi_max=0.5))

    def test_threshold_validation(self):
        with pytest.raises(ConfigError):
            IndexThresholds(ndvi_max=1.5)
        with pytest.raises(ConfigError):
            IndexThresholds(tmbi_max=-0.1)
        with pytest.raises(ConfigError):
            IndexThresholds.from_dict({"ndvi": 0.2})

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**16), ndvi=st.floats(-1, 1), tmbi=st.floats(0, 1.5))
    def test_filter_never_grows(self, seed, ndvi, tmbi):
        rng = np.random.default_rng(seed)
        r = random_raster(rng, (8, 8))
        mask = rng.random((8, 8)) > 0.5
        out = apply_index_filters(mask, r, IndexThresholds(ndvi_max=ndvi, tmbi_max=tmbi))
        assert out.sum() <= mask.sum()


class TestSelectThresholds:
    def test_forced_optimum_no_filtering(self, rng):
        r = random_raster(rng, (8, 8))
        mask = rng.random((8, 8)) > 0.5
        thr, table = select_thresholds(mask, r, mask.copy(), {"ndvi": [-1.0, 1.0]})
        assert thr.ndvi_max == 1.0  # truth equals the mask: any filtering only hurts
        assert len(table) == 2

    def test_single_value_grid(self, rng):
        r = random_raster(rng, (8, 8))
        mask = np.ones((8, 8), bool)
        truth = rng.random((8, 8)) > 0.5
        thr, _ = select_thresholds(mask, r, truth, {"tmbi": [0.42]})
        assert thr.tmbi_max == 0.42
        assert thr.ndvi_max is None and thr.ndwi_max is None

    def test_matches_bruteforce_oracle(self, rng):
        for _ in range(25):
            r = random_raster(rng, (32, 32))
            mask = rng.random((32, 32)) > 0.6
            truth = rng.random((32, 32)) > 0.6
            if not truth.any():
                continue
            grids = {
                "ndvi": sorted(rng.uniform(-1, 1, size=8).tolist()),
                "tmbi": sorted(rng.uniform(0, 1, size=8).tolist()),
            }
            thr, _ = select_thresholds(mask, r, truth, grids)
            values = {"ndvi": compute_ndvi(r), "tmbi": compute_tmbi(r)}
            for name in grids:
                best = None
                for cand in grids[name]:
                    filtered = mask & (values[name] <= cand)
                    tp = int((filtered & truth).sum())
                    fp = int((filtered & ~truth).sum())
                    fn = int((~filtered & truth).sum())
                    f1 = 2 * tp / (2 * tp + fp + fn) if (tp + fp > 0 and tp + fn > 0) else -1.0
                    key = (f1, cand)
                    if best is None or key > best:
                        best = key
                chosen = thr.ndvi_max if name == "ndvi" else thr.tmbi_max
                assert chosen == best[1]

    def test_degenerate_truth(self, rng):
        r = random_raster(rng, (4, 4))
        with pytest.raises(DataError, match="no positive"):
            select_thresholds(np.ones((4, 4), bool), r, np.zeros((4, 4), bool), {"ndvi": [0.0]})

    def test_empty_or_unknown_grid(self, rng):
        r = random_raster(rng, (4, 4))
        truth = np.ones((4, 4), bool)
        with pytest.raises(ConfigError):
            select_thresholds(truth, r, truth, {"ndvi": []})
        with pytest.raises(ConfigError):
            select_thresholds(truth, r, truth, {"evi": [0.0]})

    def test_table_contents(self, rng):
        r = random_raster(rng, (8, 8))
        truth = rng.random((8, 8)) > 0.5
        _, table = select_thresholds(np.ones((8, 8), bool), r, truth, {"ndwi": [0.0, 0.5, 1.0]})
        assert [row["index"] for row in table] == ["ndwi"] * 3
        assert [row["threshold"] for row in table] == [0.0, 0.5, 1.0]
        for row in table:
            assert set(row) == {"index", "threshold", "precision", "recall", "f1"}


class TestComponents:
    def test_zero_is_identity(self, rng):
        mask = rng.random((10, 10)) > 0.5
        assert np.array_equal(remove_small_components(mask, 0), mask)

    def test_single_pixel_removed(self):
        mask = np.zeros((5, 5), bool)
        mask[2, 2] = True
        assert not remove_small_components(mask, 2).any()

    def test_size_filtering_against_floodfill(self):
        mask = np.zeros((10, 10), bool)
        mask[0, 0:3] = True  # size 3
        mask[5:7, 2:7] = True  # size 10
        out = remove_small_components(mask, 5)

        # BFS flood-fill reference with 8-connectivity
        def components(m):
            seen = np.zeros_like(m)
            comps = []
            for i in range(m.shape[0]):
                for j in range(m.shape[1]):
                    if m[i, j] and not seen[i, j]:
                        stack, pixels = [(i, j)], []
                        seen[i, j] = True
                        while stack:
                            y, x = stack.pop()
                            pixels.append((y, x))
                            for dy in (-1, 0, 1):
                                for dx in (-1, 0, 1):
                                    ny, nx = y + dy, x + dx
                                    if 0 <= ny < m.shape[0] and 0 <= nx < m.shape[1]:
                                        if m[ny, nx] and not seen[ny, nx]:
                                            seen[ny, nx] = True
                                            stack.append((ny, nx))
                        comps.append(pixels)
            return comps

        expected = np.zeros_like(mask)
        for comp in components(mask):
            if len(comp) >= 5:
                for y, x in comp:
                    expected[y, x] = True
        assert np.array_equal(out, expected)
        assert out.sum() == 10

    def test_diagonal_counts_as_connected(self):
        mask = np.zeros((4, 4), bool)
        mask[0, 0] = mask[1, 1] = mask[2, 2] = True  # one 8-connected component of size 3
        assert remove_small_components(mask, 3).sum() == 3
        assert remove_small_components(mask, 4).sum() == 0

    def test_negative_min_pixels(self):
        with pytest.raises(ValueError):
            remove_small_components(np.zeros((2, 2), bool), -1)


def test_mask_io_roundtrip(tmp_path, rng):
    mask = rng.random((9, 7)) > 0.5
    save_mask(mask, tmp_path / "m")
    assert np.array_equal(load_mask(tmp_path / "m"), mask)
