"""Latency models: analytical forms vs the brute-force array simulator."""

import numpy as np
import pytest

from snnaccel.dataflow import (ArrayGeometry, WorkloadShape, latency_baseline,
                               latency_aer, simulate_systolic, compare,
                               rows_to_csv, STYLES)


class TestAnalyticalBasics:
    def test_unknown_style_rejected(self):
        with pytest.raises(ValueError, match="style"):
            latency_baseline("XX", ArrayGeometry(8, 8), WorkloadShape())

    def test_empty_reduction_costs_fill_and_drain_only(self):
        geom = ArrayGeometry(8, 8)
        shape = WorkloadShape(n_in=0, n_out=16, timesteps=1)
        os_cycles = latency_baseline("OS", geom, shape)
        assert os_cycles == 2 * (0 + 2 * 8 + 8 - 2)  # two column folds
        assert latency_baseline("WS", geom, shape) == 0
        assert latency_baseline("IS", geom, shape) == 0

    def test_baselines_ignore_sparsity(self):
        geom = ArrayGeometry(8, 8)
        for style in STYLES:
            dense = latency_baseline(style, geom, WorkloadShape(64, 64, 0.0))
            sparse = latency_baseline(style, geom, WorkloadShape(64, 64, 0.9))
            assert dense == sparse

    def test_invalid_geometry_rejected(self):
        with pytest.raises(ValueError):
            ArrayGeometry(0, 8)

    def test_invalid_sparsity_rejected(self):
        with pytest.raises(ValueError):
            WorkloadShape(sparsity=1.5)


class TestAerLatency:
    def test_full_sparsity_leaves_overheads_only(self):
        geom = ArrayGeometry(8, 8)
        quiet = latency_aer(geom, WorkloadShape(256, 256, 1.0, 1))
        dense = latency_aer(geom, WorkloadShape(256, 256, 0.0, 1))
        assert quiet < dense / 5
        assert quiet > 0

    def test_monotone_in_activity(self):
        geom = ArrayGeometry(8, 8)
        prev = None
        for sparsity in (0.0, 0.25, 0.5, 0.75, 1.0):
            c = latency_aer(geom, WorkloadShape(256, 256, sparsity, 1))
            if prev is not None:
                assert c <= prev
            prev = c

    def test_scales_linearly_in_timesteps(self):
        geom = ArrayGeometry(8, 8)
        one = latency_aer(geom, WorkloadShape(256, 256, 0.5, 1))
        ten = latency_aer(geom, WorkloadShape(256, 256, 0.5, 10))
        assert ten == 10 * one


class TestOracleAgreement:
    GEOM = ArrayGeometry(8, 8)

    def _check(self, style, m, k, n, rng):
        spikes = rng.integers(0, 2, (m, k))
        weights = rng.integers(-7, 8, (k, n))
        cycles, _product = simulate_systolic(style, self.GEOM, spikes, weights)
        shape = WorkloadShape(n_in=k, n_out=n, timesteps=m)
        assert cycles == latency_baseline(style, self.GEOM, shape), \
            f"{style} mismatch at M={m} K={k} N={n}"

    @pytest.mark.parametrize("style", STYLES)
    def test_exhaustive_shape_grid(self, style):
        """Every workload shape with n_in, n_out <= 32 (single timestep)."""
        rng = np.random.default_rng(hash(style) % 2 ** 31)
        for k in range(1, 33):
            for n in range(1, 33):
                self._check(style, 1, k, n, rng)

    @pytest.mark.parametrize("style", STYLES)
    def test_multi_timestep_sample(self, style):
        rng = np.random.default_rng(99)
        for m in (2, 5, 9):
            for k, n in ((1, 1), (7, 13), (16, 16), (32, 17), (20, 32)):
                self._check(style, m, k, n, rng)

    @pytest.mark.parametrize("style", STYLES)
    def test_other_geometries(self, style):
        rng = np.random.default_rng(7)
        for geom in (ArrayGeometry(4, 4), ArrayGeometry(2, 6),
                     ArrayGeometry(5, 3), ArrayGeometry(4, 16)):
            for m, k, n in ((1, 9, 9), (3, 12, 5), (2, 20, 20)):
                spikes = rng.integers(0, 2, (m, k))
                weights = rng.integers(-7, 8, (k, n))
                cycles, _ = simulate_systolic(style, geom, spikes, weights)
                shape = WorkloadShape(n_in=k, n_out=n, timesteps=m)
                assert cycles == latency_baseline(style, geom, shape)

    def test_simulator_validates_product_internally(self):
        """The oracle self-checks against the dense matmul; a healthy run
        returns the product."""
        rng = np.random.default_rng(3)
        spikes = rng.integers(0, 2, (4, 24))
        weights = rng.integers(-20, 20, (24, 10))
        for style in STYLES:
            _cycles, product = simulate_systolic(style, self.GEOM, spikes,
                                                 weights)
            assert np.array_equal(product, spikes @ weights)


class TestHeadlineComparisons:
    """The published operating points for the 256x256 single-step layer."""

    GEOM = ArrayGeometry(8, 8)

    def test_dense_aer_close_to_output_stationary(self):
        dense = WorkloadShape(256, 256, 0.0, 1)
        aer = latency_aer(self.GEOM, dense)
        os_c = latency_baseline("OS", self.GEOM, dense)
        assert aer <= 1.3 * os_c

    def test_dense_aer_beats_ws_and_is(self):
        dense = WorkloadShape(256, 256, 0.0, 1)
        aer = latency_aer(self.GEOM, dense)
        assert latency_baseline("WS", self.GEOM, dense) > aer
        assert latency_baseline("IS", self.GEOM, dense) > aer

    def test_sparse_aer_at_least_3x_all_baselines(self):
        sparse = WorkloadShape(256, 256, 0.75, 1)
        aer = latency_aer(self.GEOM, sparse)
        for style in STYLES:
            assert latency_baseline(style, self.GEOM, sparse) >= 3 * aer


class TestCompareHarness:
    def test_table_rows_and_csv(self):
        rows = compare([ArrayGeometry(8, 8)],
                       [WorkloadShape(64, 64, 0.0, 1),
                        WorkloadShape(64, 64, 0.75, 1)])
        assert len(rows) == 2 * 4  # three baselines + AER per shape
        csv_text = rows_to_csv(rows)
        lines = csv_text.strip().splitlines()
        assert lines[0].startswith("style,rows,cols")
        assert len(lines) == 1 + len(rows)

    def test_geometry_sweep_at_fixed_budget(self):
        geoms = [ArrayGeometry(4, 16), ArrayGeometry(8, 8),
                 ArrayGeometry(16, 4)]
        assert len({g.pes for g in geoms}) == 1
        rows = compare(geoms, [WorkloadShape(256, 256, 0.25, 1)])
        cycles = {(r["rows"], r["cols"]): r["cycles"]
                  for r in rows if r["style"] == "AER"}
        assert len(cycles) == 3
        assert all(c > 0 for c in cycles.values())
