"""Contract tests for the linear-algebra / sampling toolbox."""

import numpy as np
import pytest
from scipy.integrate import quad

from asft import numkit
from asft.errors import ConfigurationError, DegenerateSpectrumError, DimensionError, ShapeError


class TestSymEig:
    def test_identity(self):
        w, v = numkit.sym_eig(np.eye(3))
        np.testing.assert_allclose(w, [1.0, 1.0, 1.0])
        np.testing.assert_allclose(v.T @ v, np.eye(3), atol=1e-12)

    def test_diagonal_sorting(self):
        w, v = numkit.sym_eig(np.diag([3.0, 1.0, 2.0]))
        np.testing.assert_allclose(w, [3.0, 2.0, 1.0])
        # eigenvectors are permuted axis vectors with positive peak
        expected = np.zeros((3, 3))
        expected[0, 0] = expected[2, 1] = expected[1, 2] = 1.0
        np.testing.assert_allclose(v, expected, atol=1e-12)

    def test_rank_one(self):
        g = np.array([3.0, 4.0])
        w, v = numkit.sym_eig(np.outer(g, g))
        np.testing.assert_allclose(w, [25.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(v[:, 0], [0.6, 0.8], atol=1e-12)

    def test_random_symmetric_properties(self):
        gen = np.random.default_rng(1234)
        for _ in range(20):
            n = int(gen.integers(2, 13))
            a = gen.normal(size=(n, n))
            a = a + a.T
            w, v = numkit.sym_eig(a)
            scale = np.max(np.abs(a))
            assert np.all(np.diff(w) <= 1e-12)
            np.testing.assert_allclose(v.T @ v, np.eye(n), atol=1e-10)
            np.testing.assert_allclose(v @ np.diag(w) @ v.T, a, atol=1e-8 * scale)
            np.testing.assert_allclose(a @ v, v * w, atol=1e-8 * scale)
            # sign convention
            peaks = v[np.argmax(np.abs(v), axis=0), np.arange(n)]
            assert np.all(peaks > 0)

    def test_rejects_nonsquare(self):
        with pytest.raises(DimensionError):
            numkit.sym_eig(np.zeros((2, 3)))

    def test_rejects_asymmetric(self):
        with pytest.raises(ShapeError):
            numkit.sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))


class TestGramTopk:
    def test_axis_aligned(self):
        g = np.array([[1.0, 0.0], [0.0, 1.0]])
        dirs, lam = numkit.gram_topk(g, 2)
        np.testing.assert_allclose(lam, [0.5, 0.5])
        np.testing.assert_allclose(dirs.T @ dirs, np.eye(2), atol=1e-12)

    def test_single_column(self):
        g = np.array([[3.0], [4.0]])
        dirs, lam = numkit.gram_topk(g, 1)
        np.testing.assert_allclose(dirs[:, 0], [0.6, 0.8], atol=1e-14)
        np.testing.assert_allclose(lam, [25.0])

    def test_matches_dense_eigendecomposition(self):
        gen = np.random.default_rng(7)
        g = gen.normal(size=(50, 20))
        dirs, lam = numkit.gram_topk(g, 5)
        w_ref, v_ref = numkit.sym_eig(g @ g.T / 20)
        np.testing.assert_allclose(lam, w_ref[:5], rtol=1e-8)
        # directions agree up to (already fixed) sign
        np.testing.assert_allclose(np.abs(np.sum(dirs * v_ref[:, :5], axis=0)), 1.0, atol=1e-8)
        np.testing.assert_allclose(dirs, v_ref[:, :5], atol=1e-8)

    def test_random_instances_match_dense(self):
        gen = np.random.default_rng(99)
        for _ in range(10):
            d = int(gen.integers(5, 200))
            n = int(gen.integers(3, min(d, 40) + 1))
            k = int(gen.integers(1, n + 1))
            g = gen.normal(size=(d, n))
            dirs, lam = numkit.gram_topk(g, k)
            w_ref, v_ref = numkit.sym_eig(g @ g.T / n)
            np.testing.assert_allclose(lam, w_ref[:k], rtol=1e-8, atol=1e-12)
            np.testing.assert_allclose(dirs.T @ dirs, np.eye(k), atol=1e-10)

    def test_k_too_large(self):
        with pytest.raises(ConfigurationError):
            numkit.gram_topk(np.ones((4, 2)), 3)

    def test_zero_gradients(self):
        with pytest.raises(DegenerateSpectrumError):
            numkit.gram_topk(np.zeros((5, 3)), 1)


def _star_discrepancy_on_grid(points: np.ndarray, grid: int = 64) -> float:
    """Brute-force star-discrepancy estimate over a grid of anchor boxes (2-d)."""
    n = len(points)
    worst = 0.0
    edges = (np.arange(1, grid + 1)) / grid
    for u in edges:
        inside_u = points[:, 0] < u
        for v in edges:
            frac = np.count_nonzero(inside_u & (points[:, 1] < v)) / n
            worst = max(worst, abs(frac - u * v))
    return worst


class TestSobol:
    def test_in_unit_interval(self):
        pts = numkit.sobol(5, 37)
        assert pts.shape == (37, 5)
        assert np.all(pts >= 0.0) and np.all(pts < 1.0)

    def test_distinct_points(self):
        pts = numkit.sobol(2, 64)
        assert len({tuple(p) for p in pts}) == 64

    def test_beats_uniform_discrepancy(self):
        sob = _star_discrepancy_on_grid(numkit.sobol(2, 64))
        gen = np.random.default_rng(0)
        uni = np.mean(
            [_star_discrepancy_on_grid(gen.random((64, 2))) for _ in range(20)]
        )
        assert sob < uni

    def test_bit_identical(self):
        a = numkit.sobol(8, 33, skip=5)
        b = numkit.sobol(8, 33, skip=5)
        assert a.tobytes() == b.tobytes()

    def test_skip_semantics(self):
        full = numkit.sobol(3, 5, skip=0)
        np.testing.assert_array_equal(full[0], np.zeros(3))
        np.testing.assert_array_equal(full[2:], numkit.sobol(3, 3, skip=2))

    def test_rejects_bad_dim(self):
        with pytest.raises(ConfigurationError):
            numkit.sobol(65, 4)
        with pytest.raises(ConfigurationError):
            numkit.sobol(0, 4)


class TestStdNormal:
    def test_cdf_at_zero(self):
        assert numkit.std_normal_cdf(0.0) == 0.5

    def test_pdf_at_zero(self):
        np.testing.assert_allclose(numkit.std_normal_pdf(0.0), 1.0 / np.sqrt(2 * np.pi), rtol=1e-15)

    def test_cdf_matches_quadrature(self):
        # independent oracle: adaptive quadrature of the density
        for x in (-2.0, -0.3, 0.5, 1.0, 3.0):
            ref = 0.5 + quad(numkit.std_normal_pdf, 0.0, x, epsabs=1e-14)[0]
            assert abs(numkit.std_normal_cdf(x) - ref) <= 1e-12

    def test_vectorized(self):
        x = np.linspace(-3, 3, 7)
        assert numkit.std_normal_cdf(x).shape == x.shape
        assert numkit.std_normal_pdf(x).shape == x.shape


class TestSeededRng:
    def test_reproducible(self):
        a = numkit.SeededRng(42, 3).generator().standard_normal(10)
        b = numkit.SeededRng(42, 3).generator().standard_normal(10)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ(self):
        a = numkit.SeededRng(42, 0).generator().standard_normal(10)
        b = numkit.SeededRng(42, 1).generator().standard_normal(10)
        assert not np.array_equal(a, b)

    def test_derive(self):
        base = numkit.SeededRng(5)
        assert base.derive(9) == numkit.SeededRng(5, 9)
