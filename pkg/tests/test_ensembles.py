import math

import numpy as np
import pytest
from scipy import stats

from circspace.ensembles import (
    EigenAngleSample,
    Histogram,
    bin_averages,
    cbe_angles,
    compare,
    empty_arc_probability,
    extract_statistic,
    haar_angles,
    haar_cue,
    sample_cbe,
    simulate,
    statistic_values,
    stream,
    thin,
)
from circspace.errors import InvalidArgument
from circspace.spacings import coe_generating, cse_generating, cue_generating, default_grid, spacing_curve


@pytest.fixture(scope="module")
def cue_curve():
    return spacing_curve("kth:0", "CUE", 1.0, default_grid(3.0, 0.01))


class TestSamplers:
    @pytest.mark.parametrize("beta", [1, 2, 4])
    def test_angle_contract(self, beta):
        sm = sample_cbe(beta, 20, stream(1))
        assert len(sm) == 20 and sm.N == 20 and sm.beta == beta
        assert np.all(np.diff(sm.angles) > 0)
        assert np.all((sm.angles > -np.pi) & (sm.angles <= np.pi))
        gaps = np.diff(np.append(sm.scaled, sm.scaled[0] + sm.N))
        assert gaps.mean() == pytest.approx(1.0, abs=1e-12)

    def test_haar_contract(self):
        sm = haar_cue(12, stream(2))
        assert len(sm) == 12 and np.all(np.diff(sm.angles) > 0)
        one = haar_cue(1, stream(3))
        assert len(one) == 1 and -np.pi < one.angles[0] <= np.pi

    def test_rejects_bad_parameters(self):
        with pytest.raises(InvalidArgument):
            sample_cbe(3, 10, stream(0))
        with pytest.raises(InvalidArgument):
            sample_cbe(2, 1, stream(0))

    @pytest.mark.parametrize("beta", [1, 2, 4])
    def test_single_angle_marginal_is_uniform(self, beta):
        rng = stream(10 + beta)
        A = cbe_angles(beta, 5, 100_000, rng)
        pick = A[np.arange(len(A)), rng.integers(0, 5, len(A))]
        assert stats.kstest(pick, "uniform", args=(-np.pi, 2 * np.pi)).pvalue > 0.01

    def test_finite_n_gap_probability(self):
        est = empty_arc_probability(2, 5, 100_000, 0.5, seed=3)
        exact = cue_generating(0.5, 1.0, 1.0, N=5)
        assert abs(est.value[0] - exact) <= 4 * est.standard_error[0]

    def test_haar_and_cmv_spacings_agree(self):
        a = statistic_values(haar_angles(20, 5000, stream(21)) * 20 / (2 * np.pi), "kth:0", 20)
        b = statistic_values(cbe_angles(2, 20, 5000, stream(22)) * 20 / (2 * np.pi), "kth:0", 20)
        assert len(a) == len(b) == 100_000
        assert stats.ks_2samp(a, b).pvalue > 0.01

    def test_rotation_invariance(self):
        rng = stream(31)
        X = cbe_angles(2, 20, 5000, rng)
        phi = rng.uniform(-np.pi, np.pi, (len(X), 1))
        R = np.sort(np.mod(X + phi + np.pi, 2 * np.pi) - np.pi, axis=1)
        a = statistic_values(X * 20 / (2 * np.pi), "origin", 20, stream(32), 5)
        b = statistic_values(R * 20 / (2 * np.pi), "origin", 20, stream(33), 5)
        assert stats.ks_2samp(a, b).pvalue > 0.01

    @pytest.mark.parametrize("beta,gen", [(1, coe_generating), (4, cse_generating)])
    def test_finite_n_reflected_ensembles(self, beta, gen):
        est = empty_arc_probability(beta, 20, 100_000, [0.5, 1.0], seed=7)
        for s, v, se in zip(est.s, est.value, est.standard_error):
            assert abs(v - gen(s / 2, 1.0, 1.0, N=20)) <= 4 * se


class TestThinning:
    def test_identity(self):
        sm = sample_cbe(2, 10, stream(4))
        assert thin(sm, 1.0, stream(5)) is sm

    def test_rejects_bad_xi(self):
        with pytest.raises(InvalidArgument):
            thin(sample_cbe(2, 4, stream(0)), 0.0, stream(0))

    def test_kept_count_and_spacing(self):
        xi, N, M = 0.6, 20, 10_000
        rng = stream(6)
        counts, gaps = [], []
        for row in cbe_angles(2, N, M, rng):
            t = thin(EigenAngleSample(2, N, row), xi, rng)
            counts.append(len(t))
            if len(t):
                x = t.scaled
                gaps.append(np.diff(np.append(x, x[0] + N)))
        counts = np.array(counts)
        sd = math.sqrt(M * N * xi * (1 - xi))
        assert abs(counts.sum() - M * N * xi) <= 3 * sd
        g = np.concatenate(gaps)
        assert abs(g.mean() - 1 / xi) <= 3 * g.std() / math.sqrt(len(g))

    def test_scale_uses_original_density(self):
        sm = EigenAngleSample(2, 4, np.array([-np.pi / 2, 0.0, np.pi / 2, np.pi]))
        t = thin(sm, 0.5, stream(8))
        np.testing.assert_allclose(t.scaled, t.angles * 4 / (2 * np.pi))


class TestStatistics:
    def test_two_opposite_points(self):
        sm = EigenAngleSample(2, 2, np.array([-np.pi / 2, np.pi / 2]))
        h = extract_statistic(sm, "kth:0", bin_width=0.01, s_max=3.0)
        assert h.total_draws == 2
        assert h.counts[100] == 2 and h.counts.sum() == 2

    def test_origin_on_lattice(self):
        N = 10
        lattice = EigenAngleSample(2, N, -np.pi + 2 * np.pi * (np.arange(N) + 1) / N)
        h = extract_statistic([lattice] * 20, "origin", bin_width=0.05, s_max=1.0,
                              origins_per_sample=5000, rng=stream(9))
        d = h.density
        assert np.all(d[10:] == 0)
        assert np.max(np.abs(d[:10] - 2.0)) <= 0.1

    def test_nn_on_lattice(self):
        lattice = EigenAngleSample(2, 8, -np.pi + 2 * np.pi * (np.arange(8) + 1) / 8)
        h = extract_statistic(lattice, "nn", bin_width=0.1, s_max=2.0)
        assert h.counts[10] == 8

    def test_origin_needs_origins(self):
        with pytest.raises(InvalidArgument):
            extract_statistic(sample_cbe(2, 5, stream(0)), "origin", origins_per_sample=0, rng=stream(0))

    def test_unknown_statistic(self):
        with pytest.raises(InvalidArgument):
            extract_statistic(sample_cbe(2, 5, stream(0)), "median")

    def test_density_normalisation(self):
        h = simulate(2, 20, 2000, "kth:0", seed=11, bin_width=0.05, s_max=5.0)
        assert np.all(h.density >= 0)
        assert np.sum(h.density) * h.bin_width <= 1 + 1e-12


class TestSimulate:
    def test_reproducible(self):
        a = simulate(2, 20, 3000, seed=5, chunk=1000)
        b = simulate(2, 20, 3000, seed=5, chunk=1000)
        np.testing.assert_array_equal(a.counts, b.counts)
        c = simulate(2, 20, 3000, seed=6, chunk=1000)
        assert not np.array_equal(a.counts, c.counts)

    def test_independent_of_workers(self):
        a = simulate(1, 10, 2000, "origin", seed=5, chunk=500, origins_per_sample=10)
        b = simulate(1, 10, 2000, "origin", seed=5, chunk=500, origins_per_sample=10, workers=2)
        np.testing.assert_array_equal(a.counts, b.counts)

    def test_chunk_merge_is_associative(self):
        full = simulate(4, 8, 1500, seed=2, chunk=500)
        assert full.total_draws == 1500 * 8
        h = Histogram(full.bin_width, full.s_max, np.zeros_like(full.counts), 0)
        assert np.array_equal(h.merged(full).counts, full.counts)

    def test_cue_chi_square(self, cue_curve):
        h = simulate(2, 20, 1_000_000, "kth:0", seed=2024, bin_width=0.01, s_max=3.0).rebinned(5)
        rep = compare(h, cue_curve, 20, s_range=(0.1, 2.5))
        assert stats.chi2.sf(rep.chi_square, rep.dof) > 0.01


class TestCompare:
    def _hist(self, curve, extra=0.0, N=20):
        edges = 0.05 * np.arange(61)
        dens = bin_averages(curve, "p", edges) + extra * bin_averages(curve, "r", edges) / N**2
        return Histogram(0.05, 3.0, dens * 0.05, 1)

    def test_exact_theory(self, cue_curve):
        rep = compare(self._hist(cue_curve), cue_curve, 20)
        assert np.max(np.abs(rep.residuals)) <= 1e-15
        assert rep.correlation is None
        assert len(rep.residuals) == len(rep.scaled_residuals) == len(rep.reference_r) == 60

    def test_injected_correction(self, cue_curve):
        rep = compare(self._hist(cue_curve, 1.0), cue_curve, 20)
        assert abs(rep.correlation - 1.0) <= 1e-12
        assert rep.sup_norm <= 1e-15

    def test_incompatible_grid(self, cue_curve):
        with pytest.raises(InvalidArgument):
            compare(Histogram(0.1, 5.0, np.zeros(50), 1), cue_curve, 20)

    def test_report_json(self, cue_curve, tmp_path):
        import json

        compare(self._hist(cue_curve, 1.0), cue_curve, 20).to_json(tmp_path / "r.json")
        data = json.loads((tmp_path / "r.json").read_text())
        assert {"chi_square", "sup_norm", "correlation", "scaled_residuals"} <= set(data)


class TestHistogramIO:
    def test_round_trip(self, tmp_path):
        h = simulate(2, 10, 500, seed=1, bin_width=0.05, s_max=2.0)
        h.to_csv(tmp_path / "h.csv")
        g = Histogram.from_csv(tmp_path / "h.csv")
        np.testing.assert_array_equal(g.counts, h.counts)
        assert g.total_draws == h.total_draws and g.bin_width == h.bin_width
        np.testing.assert_allclose(g.density, h.density, rtol=0)
        assert g.meta["seed"] == 1

    def test_rebin(self):
        h = Histogram(0.01, 0.1, np.arange(10), 100)
        r = h.rebinned(5)
        assert list(r.counts) == [10, 35] and r.bin_width == pytest.approx(0.05)

    def test_missing_header(self, tmp_path):
        (tmp_path / "bad.csv").write_text("bin_center,density,count\n")
        with pytest.raises(InvalidArgument):
            Histogram.from_csv(tmp_path / "bad.csv")
