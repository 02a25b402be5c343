import math
import time
from decimal import Decimal

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from circspace.ensembles import stream
from circspace.errors import DataError, InvalidArgument
from circspace.spacings import rz_constants
from circspace.zeros import (
    UnfoldedSequence,
    ZeroDataset,
    effective_dimension,
    low_zeros_path,
    parse_zeros,
    smooth_counting,
    stream_statistics,
    thin_dataset,
    thin_mask,
    unfold,
    zero_statistics,
)

E_WINDOW = 1.306643440879362112e22


def write(tmp_path, text, name="z.txt"):
    p = tmp_path / name
    p.write_text(text)
    return p


def lattice(n, spacing=1.0, start=100.0):
    return unfold(ZeroDataset(start + spacing * np.arange(n)), rho=1.0 / spacing)


class TestParse:
    def test_three_low_zeros(self, tmp_path):
        ds = parse_zeros(write(tmp_path, "14.134725\n21.022040\n25.010858"))
        assert len(ds) == 3
        assert np.all(np.diff(ds.heights) > 0)
        assert ds.heights[0] == pytest.approx(14.134725)

    def test_empty_file(self, tmp_path):
        assert len(parse_zeros(write(tmp_path, ""))) == 0

    def test_decreasing_pair_names_line(self, tmp_path):
        with pytest.raises(DataError) as info:
            parse_zeros(write(tmp_path, "14.1\n21.0\n20.5\n"))
        assert info.value.line == 3
        assert "3" in str(info.value)

    def test_unparseable(self, tmp_path):
        with pytest.raises(DataError) as info:
            parse_zeros(write(tmp_path, "14.1\nabc\n"))
        assert info.value.line == 2

    def test_offset_header(self, tmp_path):
        ds = parse_zeros(write(tmp_path, "1306643440879362112000000\n0.125\n0.25\n0.5\n"), "offset_header")
        assert ds.base == Decimal("1306643440879362112000000")
        np.testing.assert_array_equal(ds.offsets, [0.125, 0.25, 0.5])

    def test_unknown_format(self, tmp_path):
        with pytest.raises(InvalidArgument):
            parse_zeros(write(tmp_path, "1\n"), "binary")


class TestUnfold:
    def test_spacing_of_inverse_density(self):
        rho = rz_constants(1000.0).rho_bar
        seq = unfold(ZeroDataset(np.array([1000.0 - 0.5 / rho, 1000.0 + 0.5 / rho])))
        assert seq.points[1] - seq.points[0] == pytest.approx(1.0, abs=1e-12)

    def test_window_density(self):
        assert rz_constants(E_WINDOW).rho_bar == pytest.approx(7.81235220191727, abs=1e-11)

    def test_idempotent_on_unit_spacing(self):
        x = np.cumsum(np.random.default_rng(0).exponential(1.0, 500)) + 50
        seq = unfold(ZeroDataset(x), rho=1.0)
        np.testing.assert_array_equal(seq.points, x)

    def test_large_base_keeps_spacing_resolution(self):
        rho = rz_constants(E_WINDOW).rho_bar
        ds = ZeroDataset(np.arange(200) / rho, Decimal("13066434408793621120000"))
        seq = unfold(ds)
        assert seq.mean_spacing == pytest.approx(1.0, abs=1e-10)
        assert seq.N_eff == pytest.approx(11.2975909009547, abs=1e-9)

    def test_low_heights_rejected(self):
        with pytest.raises(InvalidArgument):
            unfold(ZeroDataset(np.array([1.0, 2.0])))
        with pytest.raises(InvalidArgument):
            unfold(ZeroDataset(np.array([20.0])))

    def test_smooth_counting_values(self):
        t = 2 * math.pi * math.e
        assert smooth_counting(t) == pytest.approx(7 / 8, abs=1e-15)


class TestEffectiveDimension:
    def test_window_value(self):
        assert effective_dimension(E_WINDOW) == pytest.approx(11.2975909009547, abs=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(10.0, 1e30))
    def test_density_identity(self, E):
        c = rz_constants(E)
        assert abs(c.N_eff - math.pi * c.rho_bar / math.sqrt(3 * c.Lambda)) <= 1e-12 * c.N_eff

    @settings(max_examples=30, deadline=None)
    @given(st.floats(1.0, 20.0))
    def test_linear_in_log_height(self, L):
        E1 = 2 * math.pi * math.exp(L)
        E2 = 2 * math.pi * math.exp(2 * L)
        assert effective_dimension(E2) == pytest.approx(2 * effective_dimension(E1), rel=1e-12)

    def test_rejects_low_height(self):
        with pytest.raises(InvalidArgument):
            effective_dimension(6.0)


class TestStatistics:
    def test_lattice_nearest_next(self):
        h = zero_statistics(lattice(200), "kth:0", bin_width=0.01, s_max=3.0)
        assert h.counts.sum() == h.total_draws > 0
        assert h.counts[100] == h.total_draws

    def test_lattice_origin(self):
        h = zero_statistics(lattice(2000), "origin", rng=stream(1), bin_width=0.05, s_max=1.0,
                            origins_per_unit=50)
        assert np.all(h.counts[10:] == 0)
        assert np.max(np.abs(h.density[:10] - 2.0)) <= 0.1

    def test_short_sequence(self):
        with pytest.raises(InvalidArgument):
            zero_statistics(lattice(15), "kth:0")

    def test_thinning_commutes_with_unfolding(self):
        x = 1000 + np.cumsum(np.random.default_rng(2).uniform(0.05, 0.15, 3000))
        ds = ZeroDataset(x)
        keep = thin_mask(len(ds), 0.6, stream(5))
        first = unfold(thin_dataset(ds, 0.6, stream(5)), "smooth_counting")
        full = unfold(ds, "smooth_counting")
        after = UnfoldedSequence(full.points[keep], full.window_mid_height, full.N_eff)
        np.testing.assert_array_equal(first.points, after.points)
        a = zero_statistics(first, "kth:1")
        b = zero_statistics(after, "kth:1")
        np.testing.assert_array_equal(a.counts, b.counts)

    def test_margin_insensitivity(self):
        seq = unfold(parse_zeros(low_zeros_path()), "smooth_counting")
        a = zero_statistics(seq, "kth:0", bin_width=0.1, margin=10)
        b = zero_statistics(seq, "kth:0", bin_width=0.1, margin=20)
        se = np.sqrt(np.maximum(a.counts, 1)) / (a.total_draws * a.bin_width)
        assert np.all(np.abs(a.density - b.density) <= se)

    def test_streamed_matches_whole(self, tmp_path):
        rng = np.random.default_rng(3)
        x = 5000 + np.cumsum(rng.uniform(0.5, 1.5, 5000))
        path = write(tmp_path, "\n".join(repr(float(v)) for v in x))
        whole = zero_statistics(unfold(ZeroDataset(x), rho=1.0), "kth:2", bin_width=0.05, s_max=6.0)
        streamed = stream_statistics(path, statistic="kth:2", rho=1.0, bin_width=0.05, s_max=6.0, chunk_size=700)
        np.testing.assert_array_equal(whole.counts, streamed.counts)
        assert whole.total_draws == streamed.total_draws


class TestLowZeroTable:
    def test_ingest_and_unit_spacing(self):
        t0 = time.perf_counter()
        ds = parse_zeros(low_zeros_path())
        elapsed = time.perf_counter() - t0
        assert len(ds) == 10_000 and np.all(np.diff(ds.heights) > 0)
        assert ds.heights[0] == pytest.approx(14.134725141734693, abs=1e-12)
        assert elapsed <= 1.0
        assert abs(unfold(ds, "smooth_counting").mean_spacing - 1.0) <= 0.01

    def test_closer_to_limit_than_to_poisson(self):
        from circspace.spacings import default_grid, spacing_curve

        seq = unfold(parse_zeros(low_zeros_path()), "smooth_counting")
        h = zero_statistics(seq, "kth:0", bin_width=0.1, s_max=3.0)
        centers = (h.edges[:-1] + h.edges[1:]) / 2
        curve = spacing_curve("kth:0", "CUE", 1.0, default_grid(3.0, 0.01))
        to_limit = np.max(np.abs(h.density - np.interp(centers, curve.grid, curve.p)))
        to_poisson = np.max(np.abs(h.density - np.exp(-centers)))
        # low zeros sit well away from the limit, so only a coarse bound applies
        assert to_limit <= 0.2
        assert to_poisson >= 3 * to_limit
