import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fgfpca.binning import build_bins
from fgfpca.errors import ConfigError


class TestOverlap:
    def test_cyclic_wrap_at_first_midpoint(self):
        bins = build_bins(J=1440, width=6, overlap=True, cyclic=True)
        assert bins.L == 1440
        np.testing.assert_array_equal(bins.midpoint_indices, np.arange(1440))
        np.testing.assert_array_equal(bins.bins[0], [0, 1, 2, 3, 1437, 1438, 1439])
        np.testing.assert_array_equal(bins.bins[1439], [0, 1, 2, 1436, 1437, 1438, 1439])

    def test_cyclic_interior_bin(self):
        bins = build_bins(J=1440, width=6, overlap=True, cyclic=True)
        np.testing.assert_array_equal(bins.bins[720], np.arange(717, 724))

    def test_noncyclic_truncates_at_boundary(self):
        bins = build_bins(J=100, width=6, overlap=True, cyclic=False)
        np.testing.assert_array_equal(bins.bins[0], [0, 1, 2, 3])
        np.testing.assert_array_equal(bins.bins[1], [0, 1, 2, 3, 4])
        np.testing.assert_array_equal(bins.bins[99], [96, 97, 98, 99])
        np.testing.assert_array_equal(bins.bins[50], np.arange(47, 54))

    def test_one_bin_per_grid_point(self):
        for cyclic in (False, True):
            bins = build_bins(J=37, width=4, overlap=True, cyclic=cyclic)
            assert bins.L == 37
            np.testing.assert_array_equal(bins.midpoint_indices, np.arange(37))

    def test_truncated_bins_keep_min_size(self):
        bins = build_bins(J=50, width=10, overlap=True, cyclic=False)
        sizes = np.array([len(b) for b in bins.bins])
        assert sizes.min() == 10 // 2 + 1
        assert sizes.max() == 11


class TestNonOverlap:
    def test_partition_with_tail(self):
        bins = build_bins(J=10, width=2, overlap=False, cyclic=False)
        got = [list(b) for b in bins.bins]
        assert got == [[0, 1, 2], [3, 4, 5], [6, 7, 8], [9]]
        np.testing.assert_array_equal(bins.midpoint_indices, [1, 4, 7, 9])

    def test_exact_partition_no_tail(self):
        bins = build_bins(J=12, width=2, overlap=False, cyclic=False)
        assert bins.L == 4
        assert all(len(b) == 3 for b in bins.bins)

    def test_even_tail_midpoint_is_lower_middle(self):
        # J=11, step 3 -> tail {9, 10}, midpoint 9
        bins = build_bins(J=11, width=2, overlap=False, cyclic=False)
        assert list(bins.bins[-1]) == [9, 10]
        assert bins.midpoint_indices[-1] == 9

    def test_disjoint_cover(self):
        bins = build_bins(J=101, width=6, overlap=False, cyclic=False)
        seen = np.concatenate(bins.bins)
        assert seen.size == 101
        np.testing.assert_array_equal(np.sort(seen), np.arange(101))

    def test_j500_w50_bin_count(self):
        # the single-fit-per-block speedup comes from L = J/(w+1) bins
        bins = build_bins(J=500, width=50, overlap=False, cyclic=False)
        assert bins.L == 10


class TestValidation:
    def test_odd_width_message_is_exact(self):
        with pytest.raises(ConfigError) as exc:
            build_bins(J=100, width=7, overlap=True, cyclic=False)
        assert str(exc.value) == "width must be even"

    def test_width_too_small(self):
        with pytest.raises(ConfigError, match=">= 2"):
            build_bins(J=100, width=0, overlap=True, cyclic=False)

    def test_width_ge_j(self):
        with pytest.raises(ConfigError, match="width must be < J"):
            build_bins(J=10, width=10, overlap=True, cyclic=False)


@settings(max_examples=60, deadline=None)
@given(
    J=st.integers(min_value=5, max_value=300),
    half=st.integers(min_value=1, max_value=40),
    overlap=st.booleans(),
    cyclic=st.booleans(),
)
def test_bin_invariants(J, half, overlap, cyclic):
    width = 2 * half
    if width >= J:
        width = 2 * ((J - 1) // 2)
        if width < 2:
            return
    bins = build_bins(J=J, width=width, overlap=overlap, cyclic=cyclic)

    assert bins.L == len(bins.midpoint_indices)
    covered = np.zeros(J, dtype=bool)
    for mid, idx in zip(bins.midpoint_indices, bins.bins):
        assert idx.size > 0
        assert np.all((idx >= 0) & (idx < J))
        assert np.array_equal(idx, np.unique(idx))  # sorted, no repeats
        assert mid in idx
        covered[idx] = True
    assert covered.all()

    if overlap:
        assert bins.L == J
        if cyclic:
            assert all(len(idx) == width + 1 for idx in bins.bins)
    else:
        total = sum(len(idx) for idx in bins.bins)
        assert total == J  # partition: disjoint by count + cover
