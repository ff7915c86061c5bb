import numpy as np
import pytest

from feedtune.params import (
    LayerPartition,
    as_parameters,
    axpy,
    gaussian_batch,
    layer_view,
    make_rng,
    split_rng,
    with_layer,
)


class TestAxpy:
    def test_zero_scale_is_identity(self):
        np.testing.assert_array_equal(axpy([1.0, 2.0], 0.0, [9.0, 9.0]), [1.0, 2.0])

    def test_unit_scale_adds(self):
        np.testing.assert_array_equal(axpy([0.0, 0.0], 1.0, [3.0, -4.0]), [3.0, -4.0])

    def test_half_scale(self):
        np.testing.assert_array_equal(axpy([1.0, 1.0], 0.5, [2.0, 4.0]), [2.0, 3.0])

    def test_inputs_untouched(self):
        dst, src = np.array([1.0, 2.0]), np.array([3.0, 4.0])
        axpy(dst, 2.0, src)
        np.testing.assert_array_equal(dst, [1.0, 2.0])
        np.testing.assert_array_equal(src, [3.0, 4.0])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            axpy([1.0, 2.0], 1.0, [1.0])

    def test_overflow_names_index(self):
        with pytest.raises(ValueError, match="index 1"):
            axpy([0.0, 1e308], 10.0, [0.0, 1e308])

    def test_non_finite_scale(self):
        with pytest.raises(ValueError):
            axpy([1.0], np.inf, [1.0])


class TestAsParameters:
    def test_float64_copy(self):
        src = np.array([1, 2, 3], dtype=np.int32)
        out = as_parameters(src)
        assert out.dtype == np.float64
        out[0] = 7
        assert src[0] == 1

    def test_rejects_nan(self):
        with pytest.raises(ValueError, match="index 2"):
            as_parameters([0.0, 1.0, np.nan])


class TestLayerPartition:
    def test_from_sizes(self):
        p = LayerPartition.from_sizes([2, 3])
        assert p.dim == 5
        assert p.names == ["layer1", "layer2"]
        assert p.segment(2).slice == slice(2, 5)

    def test_gap_rejected(self):
        with pytest.raises(ValueError, match="starts at"):
            LayerPartition([("a", 0, 2), ("b", 3, 1)])

    def test_overlap_rejected(self):
        with pytest.raises(ValueError):
            LayerPartition([("a", 0, 2), ("b", 1, 2)])

    def test_empty_layer_rejected(self):
        with pytest.raises(ValueError):
            LayerPartition([("a", 0, 0)])

    def test_no_layers_rejected(self):
        with pytest.raises(ValueError):
            LayerPartition([])

    def test_one_based_index(self):
        p = LayerPartition.single(4)
        assert p.segment(1).length == 4
        with pytest.raises(IndexError):
            p.segment(0)


class TestLayerView:
    def test_second_layer(self):
        p = LayerPartition([("A", 0, 2), ("B", 2, 2)])
        np.testing.assert_array_equal(layer_view([1.0, 2.0, 3.0, 4.0], p, 2), [3.0, 4.0])

    def test_single_layer(self):
        np.testing.assert_array_equal(layer_view([5.0], LayerPartition([("A", 0, 1)]), 1), [5.0])

    def test_out_of_range(self):
        p = LayerPartition([("A", 0, 1), ("B", 1, 2)])
        with pytest.raises(IndexError):
            layer_view([1.0, 2.0, 3.0], p, 3)

    def test_value_semantics(self):
        theta = np.arange(6.0)
        p = LayerPartition.from_sizes([1, 2, 3])
        view = layer_view(theta, p, 2)
        view[:] = -1
        np.testing.assert_array_equal(theta, np.arange(6.0))

    def test_write_back_leaves_other_layers(self):
        theta = np.arange(6.0)
        p = LayerPartition.from_sizes([1, 2, 3])
        out = with_layer(theta, p, 2, [10.0, 11.0])
        np.testing.assert_array_equal(out, [0.0, 10.0, 11.0, 3.0, 4.0, 5.0])

    def test_concatenation_reproduces_theta(self):
        theta = make_rng(3).standard_normal(10)
        p = LayerPartition.from_sizes([3, 3, 4])
        joined = np.concatenate([layer_view(theta, p, h) for h in range(1, 4)])
        np.testing.assert_array_equal(joined, theta)


class TestRng:
    def test_same_seed_same_batch(self):
        a = gaussian_batch(make_rng(11), 5, 3)
        b = gaussian_batch(make_rng(11), 5, 3)
        np.testing.assert_array_equal(a, b)

    def test_shape(self):
        assert gaussian_batch(make_rng(0), 7, 4).shape == (4, 7)

    def test_moments(self):
        dim, half = 10_000, 500
        x = gaussian_batch(make_rng(0), dim, half)
        assert abs(x.mean()) <= 4.0 / np.sqrt(half * dim)
        assert abs(x.var() - 1.0) <= 0.05

    def test_bad_sizes(self):
        with pytest.raises(ValueError):
            gaussian_batch(make_rng(0), 0, 2)

    def test_split_children_differ_and_replay(self):
        a, b = split_rng(5, 2)
        a2, _ = split_rng(5, 2)
        x, y, z = a.standard_normal(3), b.standard_normal(3), a2.standard_normal(3)
        assert not np.array_equal(x, y)
        np.testing.assert_array_equal(x, z)

    def test_generator_passthrough(self):
        g = make_rng(1)
        assert make_rng(g) is g
