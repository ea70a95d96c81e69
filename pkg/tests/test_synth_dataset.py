import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tidecast.dataset import load_dataset, pick_split, split_chronological, synthesize_dataset
from tidecast.grid import make_windows
from tidecast.synth import SynthConfig, generate_synthetic, water_level


class TestGenerator:
    def test_same_seed_same_data(self):
        a = generate_synthetic(SynthConfig(timesteps=48, seed=4))
        b = generate_synthetic(SynthConfig(timesteps=48, seed=4))
        for (sa, ea, _), (sb, eb, _) in zip(a, b):
            np.testing.assert_array_equal(sa.values, sb.values)
            np.testing.assert_array_equal(ea.values, eb.values)

    def test_dry_when_elevation_above_water(self):
        cfg = SynthConfig(
            timesteps=48, relief_low=20.0, relief_high=30.0, tidal_amplitude=2.0,
            diurnal_amplitude=0.5, noise_std=0.0,
        )
        for series, _, _ in generate_synthetic(cfg):
            assert np.all(series.values == 0.0)

    def test_bathtub_consistency(self):
        cfg = SynthConfig(timesteps=72, seed=9, noise_std=0.0)
        rows = generate_synthetic(cfg)
        for k, (series, elev, _) in enumerate(rows):
            rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, k]))
            rng.random((cfg.grid_size, cfg.grid_size))  # elevation field draw
            w = water_level(cfg, rng)
            expect = np.maximum(0.0, w[:, None, None] - elev.values[None])
            np.testing.assert_allclose(series.values, expect, rtol=1e-12)
            # monotone in -elevation at fixed t
            for t in (0, 24, 47):
                frame = series.values[t].reshape(-1)
                order = np.argsort(elev.values.reshape(-1))
                diffs = np.diff(frame[order])
                assert np.all(diffs <= 1e-9)

    def test_semidiurnal_autocorrelation_peak(self):
        cfg = SynthConfig(
            timesteps=240, seed=2, noise_std=0.0, diurnal_amplitude=0.0,
            relief_low=-4.0, relief_high=-1.0,  # always-wet cells: pure sinusoid
        )
        series, elev, _ = generate_synthetic(cfg)[0]
        cell = series.values[:, 0, 0]
        x = cell - cell.mean()
        ac = np.correlate(x, x, mode="full")[len(x) - 1 :]
        lags = np.arange(1, 30)
        peak = lags[np.argmax(ac[1:30])]
        assert peak in (12, 13)  # 12.42 h period, nearest integer lags

    def test_patches_tile_left_to_right(self):
        rows = generate_synthetic(SynthConfig(patches=3, timesteps=24, grid_size=8))
        origins = [series.origin for series, _, _ in rows]
        assert origins == [(0, 0), (0, 8), (0, 16)]

    def test_config_validation(self):
        with pytest.raises(ValueError, match="24 timesteps"):
            SynthConfig(timesteps=12)
        with pytest.raises(ValueError, match="relief"):
            SynthConfig(relief_low=2.0, relief_high=1.0)


class TestDatasetIO:
    def test_save_load_round_trip(self, tmp_path):
        data = synthesize_dataset(SynthConfig(patches=2, timesteps=30, seed=1), tmp_path)
        back = load_dataset(tmp_path)
        assert back.patch_ids() == data.patch_ids()
        for a, b in zip(back.patches, data.patches):
            np.testing.assert_array_equal(a.series.values, b.series.values)
            np.testing.assert_array_equal(a.elevation.values, b.elevation.values)
            assert a.series.origin == b.series.origin

    def test_missing_elevation_errors(self, tmp_path):
        synthesize_dataset(SynthConfig(patches=1, timesteps=30), tmp_path)
        (tmp_path / "patch00.gse").unlink()
        with pytest.raises(FileNotFoundError, match="elevation"):
            load_dataset(tmp_path)

    def test_grid_size_mismatch_errors(self, tmp_path):
        synthesize_dataset(SynthConfig(patches=1, timesteps=30), tmp_path)
        (tmp_path / "patch00.gse").write_text("GSE1 2\n0 0\n0 0\n")
        with pytest.raises(ValueError, match="does not match"):
            load_dataset(tmp_path)


class TestSplits:
    def test_default_split_requires_2136_steps(self):
        assert sum((1944, 24, 168)) == 2136
        data = synthesize_dataset(SynthConfig(patches=1, timesteps=2136, grid_size=8, seed=0))
        train, val, test = split_chronological(data, 1944, 24, 168)
        assert (train.num_steps, val.num_steps, test.num_steps) == (1944, 24, 168)

    def test_insufficient_steps(self):
        data = synthesize_dataset(SynthConfig(patches=1, timesteps=100, grid_size=8))
        with pytest.raises(ValueError, match="insufficient timesteps"):
            split_chronological(data, 90, 24, 24)

    def test_splits_are_ordered_and_disjoint(self):
        data = synthesize_dataset(SynthConfig(patches=2, timesteps=120, grid_size=8, seed=5))
        train, val, test = split_chronological(data, 72, 24, 24)
        for p_train, p_val, p_test in zip(train.patches, val.patches, test.patches):
            assert p_train.series.timestamps[-1] < p_val.series.timestamps[0]
            assert p_val.series.timestamps[-1] < p_test.series.timestamps[0]

    def test_pick_split_desk_scale(self):
        data = synthesize_dataset(SynthConfig(patches=1, timesteps=600, grid_size=8))
        assert pick_split(data, None) == (480, 24, 96)
        assert pick_split(data, (1, 2, 3)) == (1, 2, 3)

    @given(
        total=st.integers(60, 160),
        train=st.integers(30, 100),
        val=st.integers(13, 30),
    )
    @settings(max_examples=25, deadline=None)
    def test_windows_never_straddle_boundaries(self, total, train, val):
        test_steps = total - train - val
        if test_steps < 13:
            return
        data = synthesize_dataset(SynthConfig(patches=1, timesteps=total, grid_size=8, seed=2))
        train_ds, val_ds, test_ds = split_chronological(data, train, val, test_steps)
        boundary = train_ds.patches[0].series.timestamps[-1]
        windows = make_windows(
            train_ds.patches[0].series, train_ds.patches[0].covariates, 12, 1, 1
        )
        # every window's last timestamp stays inside the training split
        for w in windows:
            assert w.target_covariates.timestamps[-1] <= boundary
        first_val = val_ds.patches[0].series.timestamps[0]
        assert boundary < first_val
