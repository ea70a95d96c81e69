import math

import numpy as np
import pytest

from tidecast.model import Forecaster, load_checkpoint, load_model, save_checkpoint
from tidecast.training import (
    Adam,
    TrainConfig,
    TrainingDiverged,
    batch_loss,
    checkpoint_from_fit,
    clip_gradients,
    draw_noise_steps,
    fit,
    make_batch,
    parse_config_file,
    prepare_training_windows,
    standardized_elevations,
    train_step,
    write_history_csv,
)


@pytest.fixture(scope="module")
def prepared(tiny_splits, small_train_config):
    train, _, _ = tiny_splits
    windows = prepare_training_windows(train, small_train_config)
    elevs = standardized_elevations(train)
    return windows, elevs


class TestConfig:
    def test_defaults_match_shared_table(self):
        cfg = TrainConfig()
        assert cfg.learning_rate == 1e-3
        assert cfg.lr_step == 5
        assert cfg.lr_factor == 0.5
        assert cfg.epochs == 30
        assert cfg.batch_size == 32
        assert cfg.context_length == 12
        assert cfg.train_prediction_length == 1
        assert cfg.diffusion_steps == 20
        assert cfg.beta_min == 1e-4
        assert cfg.beta_max == 1.0
        assert cfg.val_scenarios == 2
        assert cfg.val_prediction_length == 12

    def test_lr_schedule_halves_every_five_epochs(self):
        cfg = TrainConfig()
        assert [cfg.lr_at(e) for e in (0, 4)] == [1e-3, 1e-3]
        assert [cfg.lr_at(e) for e in (5, 9)] == [5e-4, 5e-4]
        assert cfg.lr_at(10) == 2.5e-4

    def test_validation(self):
        with pytest.raises(ValueError, match="positive"):
            TrainConfig(epochs=0)

    def test_parse_config_file(self, tmp_path):
        path = tmp_path / "train.cfg"
        path.write_text("epochs = 3\nlearning_rate = 0.01  # fast\nablation = inun\n\n")
        cfg = parse_config_file(path)
        assert (cfg.epochs, cfg.learning_rate, cfg.ablation) == (3, 0.01, "inun")

    def test_parse_rejects_unknown_key(self, tmp_path):
        path = tmp_path / "train.cfg"
        path.write_text("nope = 3\n")
        with pytest.raises(ValueError, match="unknown key"):
            parse_config_file(path)


class TestNoiseStepSampling:
    def test_uniform_over_full_range(self):
        rng = np.random.default_rng(123)
        draws = draw_noise_steps(rng, 100_000, 20)
        counts = np.bincount(draws, minlength=21)[1:]
        assert counts.sum() == 100_000
        # every step within 5% of the expected 5000
        assert np.all(np.abs(counts - 5000) < 0.05 * 5000)
        chi2 = ((counts - 5000.0) ** 2 / 5000.0).sum()
        assert chi2 < 43.8  # 99.9th percentile of chi2(19)


class TestTrainStep:
    def test_perfect_prediction_gives_zero_loss(self, prepared, fresh_model):
        windows, elevs = prepared
        batch = make_batch(windows[:4], elevs, "all")
        model = fresh_model
        n = np.array([1, 1, 1, 1])
        noise = np.zeros_like(batch.targets)
        # with n=1 and zero noise, xn ~= x0; force gate prediction = xn exactly
        gate = model.denoiser.skip_gate.data.copy()
        out_w = model.denoiser.out_conv.weight.data.copy()
        out_b = model.denoiser.out_conv.bias.data.copy()
        model.denoiser.skip_gate.data = np.ones_like(gate)
        model.denoiser.out_conv.weight.data = np.zeros_like(out_w)
        model.denoiser.out_conv.bias.data = np.zeros_like(out_b)
        try:
            loss = batch_loss(model, batch, n, noise)
            # xn = sqrt(abar_1) x0, gate 1 -> prediction = sqrt(abar_1) x0
            expect = float(np.mean((batch.targets - np.sqrt(1 - 1e-4) * batch.targets) ** 2))
            assert float(loss.data) == pytest.approx(expect, rel=1e-9)
        finally:
            model.denoiser.skip_gate.data = gate
            model.denoiser.out_conv.weight.data = out_w
            model.denoiser.out_conv.bias.data = out_b

    def test_zero_predictor_loss_is_mean_square_target(self, prepared, fresh_model):
        windows, elevs = prepared
        batch = make_batch(windows[:8], elevs, "all")
        model = fresh_model
        saved = {k: v.copy() for k, v in model.state_dict().items()}
        for p in model.parameters():
            p.data = np.zeros_like(p.data)
        try:
            n = draw_noise_steps(np.random.default_rng(0), 8, 20)
            noise = np.random.default_rng(1).standard_normal(batch.targets.shape)
            loss = batch_loss(model, batch, n, noise)
            assert float(loss.data) == pytest.approx(float(np.mean(batch.targets**2)), rel=1e-12)
        finally:
            model.load_state_dict(saved)

    def test_nonfinite_loss_aborts_with_diagnostics(self, prepared, fresh_model):
        windows, elevs = prepared
        batch = make_batch(windows[:2], elevs, "all")
        model = fresh_model
        gate = model.denoiser.skip_gate.data.copy()
        model.denoiser.skip_gate.data = gate * np.nan
        optimizer = Adam(model.named_parameters(), lr=1e-3)
        try:
            with pytest.raises(TrainingDiverged, match="non-finite loss"):
                train_step(model, batch, optimizer, np.random.default_rng(0))
        finally:
            model.denoiser.skip_gate.data = gate

    def test_loss_invariant_under_batch_permutation(self, prepared, fresh_model):
        windows, elevs = prepared
        chosen = windows[:6]
        perm = [3, 1, 5, 0, 4, 2]
        batch_a = make_batch(chosen, elevs, "all")
        batch_b = make_batch([chosen[i] for i in perm], elevs, "all")
        n = np.array([4, 9, 17, 2, 11, 6])
        noise = np.random.default_rng(2).standard_normal(batch_a.targets.shape)
        loss_a = batch_loss(fresh_model, batch_a, n, noise)
        loss_b = batch_loss(fresh_model, batch_b, n[perm], noise[perm])
        assert float(loss_a.data) == pytest.approx(float(loss_b.data), rel=1e-12)


class TestGradientCheck:
    def test_full_loss_gradient_matches_finite_differences(self, tiny_splits):
        """Joint encoder+denoiser gradient of the training objective."""
        train, _, _ = tiny_splits
        cfg = TrainConfig(epochs=1, seed=2)
        from conftest import small_denoiser_config
        from tidecast.encoder import EncoderConfig
        from tidecast.model import ModelConfig

        enc = EncoderConfig(grid_size=16, token_dim=8, conv_channels=(4,), ablation="all")
        den = small_denoiser_config(skip_init=tuple(np.linspace(1, 0, 20)))
        model = Forecaster(
            ModelConfig(grid_size=16, ablation="all", encoder=enc, denoiser=den), seed=4
        )
        windows = prepare_training_windows(train, cfg)[:3]
        elevs = standardized_elevations(train)
        batch = make_batch(windows, elevs, "all")
        rng = np.random.default_rng(5)
        # a couple of optimizer steps so zero-initialized layers carry gradient
        optimizer = Adam(model.named_parameters(), lr=1e-3)
        for _ in range(2):
            train_step(model, batch, optimizer, rng)
        n = draw_noise_steps(rng, 3, 20)
        noise = rng.standard_normal(batch.targets.shape)

        def loss_value():
            return batch_loss(model, batch, n, noise)

        model.zero_grad()
        loss_value().backward()
        named = model.named_parameters()
        grads = {name: p.grad.copy() for name, p in named}
        rng_pick = np.random.default_rng(6)
        names = [name for name, _ in named]
        worst = 0.0
        for name in rng_pick.choice(names, size=12, replace=False):
            p = dict(named)[name]
            idx = int(rng_pick.integers(0, p.data.size))
            flat = p.data.reshape(-1)
            orig = flat[idx]
            h = 1e-3
            flat[idx] = orig + h
            fp = float(loss_value().data)
            flat[idx] = orig - h
            fm = float(loss_value().data)
            flat[idx] = orig
            fd = (fp - fm) / (2 * h)
            an = grads[name].reshape(-1)[idx]
            rel = abs(an - fd) / max(abs(an), abs(fd), 1e-8)
            worst = max(worst, rel)
        assert worst < 1e-3


class TestFit:
    def test_one_epoch_step_count(self, tiny_splits):
        train, val, _ = tiny_splits
        cfg = TrainConfig(epochs=1, seed=1, batch_size=32)
        result = fit(train, val, cfg)
        windows = prepare_training_windows(train, cfg)
        assert result.optimizer.step_count == math.ceil(len(windows) / 32)

    def test_loss_decreases_over_five_epochs(self, tiny_splits):
        train, _, _ = tiny_splits
        cfg = TrainConfig(epochs=5, seed=1)
        result = fit(train, None, cfg)
        assert result.history[-1].loss < result.history[0].loss

    def test_reproducible_loss_trace(self, tiny_splits, small_train_config):
        train, val, _ = tiny_splits
        a = fit(train, val, small_train_config)
        b = fit(train, val, small_train_config)
        assert [r.loss for r in a.history] == [r.loss for r in b.history]
        assert [r.val_nacrps for r in a.history] == [r.val_nacrps for r in b.history]
        for (ka, pa), (kb, pb) in zip(
            sorted(a.model.state_dict().items()), sorted(b.model.state_dict().items())
        ):
            assert ka == kb
            assert (pa == pb).all()

    def test_empty_dataset_errors(self, tiny_dataset):
        from tidecast.dataset import split_chronological

        train, _, _ = split_chronological(tiny_dataset, 10, 24, 24)
        with pytest.raises(ValueError, match="insufficient timesteps"):
            fit(train, None, TrainConfig(epochs=1))

    def test_history_csv(self, tmp_path, trained_small):
        path = tmp_path / "history.csv"
        write_history_csv(path, trained_small.history)
        lines = path.read_text().splitlines()
        assert lines[0] == "epoch,loss,val_nacrps,lr"
        assert len(lines) == len(trained_small.history) + 1


class TestCheckpoint:
    def test_round_trip_preserves_params(self, tmp_path, trained_small, small_train_config):
        ckpt = checkpoint_from_fit(trained_small, small_train_config)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, ckpt)
        assert path.read_bytes()[:8] == b"DFCKPT1\n"
        back = load_checkpoint(path)
        assert back.config == ckpt.config
        assert back.epoch == ckpt.epoch
        assert back.seed == ckpt.seed
        assert set(back.params) == set(ckpt.params)
        for name in ckpt.params:
            assert (back.params[name] == ckpt.params[name]).all()
        assert back.optimizer["step_count"] == trained_small.optimizer.step_count
        model, loaded = load_model(path)
        assert model.parameter_count() == trained_small.model.parameter_count()
        assert loaded.checkpoint_id == ckpt.checkpoint_id

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 32)
        with pytest.raises(ValueError, match="bad magic"):
            load_checkpoint(path)

    def test_model_outputs_survive_round_trip(self, tmp_path, trained_small, small_train_config):
        model = trained_small.model
        ckpt = checkpoint_from_fit(trained_small, small_train_config)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, ckpt)
        restored, _ = load_model(path)
        rng = np.random.default_rng(7)
        x = rng.standard_normal((1, 1, 16, 16))
        frames = rng.standard_normal((1, 12, 16, 16))
        elev = rng.standard_normal((16, 16))
        cov = rng.standard_normal((1, 12, 4))
        t_a = model.embed_context(frames, elev, cov)
        t_b = restored.embed_context(frames, elev, cov)
        assert (t_a.data == t_b.data).all()
        out_a = model.predict_x0(x, 5, t_a).data
        out_b = restored.predict_x0(x, 5, t_b).data
        assert (out_a == out_b).all()


class TestClip:
    def test_clip_scales_to_max_norm(self):
        from tidecast.nn.layers import parameter

        p = parameter(np.zeros(4))
        p.grad = np.full(4, 3.0)
        norm = clip_gradients([p], 1.0)
        assert norm == pytest.approx(6.0)
        assert np.linalg.norm(p.grad) == pytest.approx(1.0)
