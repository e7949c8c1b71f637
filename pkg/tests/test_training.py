import csv
import json
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from ridnet.sdk.autodiff import Tensor, backward, is_grad_enabled, mse
from ridnet.sdk.autodiff.tensor import tsum
from ridnet.sdk.data import PatchSample, build_dataset
from ridnet.sdk.errors import CheckpointError, NumericalFailure, ShapeError
from ridnet.sdk.model import ParameterSet, RIDnetGenerator, init_generator_parameters, make_rng
from ridnet.sdk.models.canonical_types import LossMode, Preset
from ridnet.sdk.models.config import RunConfig
from ridnet.sdk.training import (
    Adam,
    AdamState,
    Discriminator,
    FeatureExtractor,
    LOG_COLUMNS,
    Trainer,
    adam_step,
    copy_checkpoint,
    critic_sample_terms,
    decayed_lr,
    discriminator_loss,
    generator_loss,
    input_gradient_norm,
    load_checkpoint,
    perceptual_distance,
    reduce_gradients,
    save_checkpoint,
    train,
)


def micro_run(**train_overrides) -> RunConfig:
    overrides = {f"train.{k}": v for k, v in train_overrides.items()}
    return RunConfig.resolve(preset=Preset.MICRO, overrides=overrides)


@pytest.fixture
def micro_dataset(volume_pair, small_data_config):
    clean, noisy = volume_pair
    return build_dataset([(noisy, clean)], small_data_config.window, patch=16, max_patches=8)


class TestGradientPenalty:
    def test_unit_norm_linear_critic_has_no_penalty(self, rng):
        w = rng.normal(size=(6, 6))
        w /= np.linalg.norm(w)
        critic = lambda x: tsum(x * Tensor(w))  # noqa: E731
        terms = critic_sample_terms(rng.uniform(size=(6, 6)), rng.uniform(size=(6, 6)), 0.3, critic, 10.0)
        assert abs(terms.parts["gp"]) < 1e-10

    def test_constant_critic_penalty_equals_lambda(self, rng):
        critic = lambda x: tsum(x * 0.0) + 3.0  # noqa: E731
        terms = critic_sample_terms(rng.uniform(size=(6, 6)), rng.uniform(size=(6, 6)), 0.6, critic, 10.0)
        assert terms.loss.item() == pytest.approx(10.0, abs=1e-10)

    def test_input_gradient_norm_matches_finite_differences(self, rng):
        critic = Discriminator.initialize(seed=11)
        point = rng.uniform(size=(8, 8))
        analytic = input_gradient_norm(critic, point, create_graph=False).item()
        eps = 1e-6
        numeric = np.zeros_like(point)
        for idx in np.ndindex(point.shape):
            up, down = point.copy(), point.copy()
            up[idx] += eps
            down[idx] -= eps
            numeric[idx] = (critic(up).item() - critic(down).item()) / (2 * eps)
        assert analytic == pytest.approx(np.linalg.norm(numeric), rel=1e-4)

    def test_penalty_is_differentiable_in_critic_parameters(self, rng):
        critic = Discriminator.initialize(seed=3)
        terms = critic_sample_terms(rng.uniform(size=(8, 8)), rng.uniform(size=(8, 8)), 0.5, critic, 10.0)
        grads = backward(terms.loss, critic.params)
        assert all(np.all(np.isfinite(g.data)) for g in grads.values())
        assert any(np.any(g.data != 0) for g in grads.values())

    def test_batch_loss_is_mean_of_samples(self, rng):
        critic = Discriminator.initialize(seed=4)
        real = [rng.uniform(size=(8, 8)) for _ in range(3)]
        fake = [rng.uniform(size=(8, 8)) for _ in range(3)]
        draws = make_rng(9).uniform(0.0, 1.0, size=3)
        total = discriminator_loss(real, fake, critic, 10.0, make_rng(9)).item()
        expected = np.mean([critic_sample_terms(r, f, float(u), critic, 10.0).loss.item() for r, f, u in zip(real, fake, draws)])
        assert total == pytest.approx(expected, rel=1e-12)

    def test_mismatched_batches(self, rng):
        critic = Discriminator.initialize(seed=4)
        with pytest.raises(ShapeError):
            discriminator_loss([np.zeros((8, 8))], [], critic, 10.0, make_rng(0))


class TestGeneratorObjective:
    def test_mse_only_is_pixel_mse(self, rng, toy_config):
        generator = RIDnetGenerator(toy_config)
        phi = FeatureExtractor(seed=1)
        critic = Discriminator.initialize(seed=2)
        x = [rng.uniform(size=(3, 8, 8)) for _ in range(2)]
        y = [rng.uniform(size=(8, 8)) for _ in range(2)]
        loss = generator_loss(x, y, generator, critic, phi, 0.1, LossMode.MSE_ONLY).item()
        expected = np.mean([mse(generator(a), Tensor(b)).item() for a, b in zip(x, y)])
        assert loss == pytest.approx(expected, rel=1e-12)

    def test_perceptual_distance_of_identical_images_is_zero(self, rng):
        image = rng.uniform(size=(16, 16))
        assert perceptual_distance(Tensor(image), image, FeatureExtractor(seed=1)).item() == 0.0

    def test_feature_extractor_is_seeded(self, rng):
        image = rng.uniform(size=(16, 16))
        a = FeatureExtractor(seed=5)(image).data
        b = FeatureExtractor(seed=5)(image).data
        np.testing.assert_array_equal(a, b)
        assert a.shape == (16, 4, 4)
        assert FeatureExtractor(seed=5).describe() == {"kind": "seeded-conv", "seed": 5, "channels": [8, 16, 16]}

    def test_empty_batch(self, toy_config):
        with pytest.raises(ShapeError):
            generator_loss([], [], RIDnetGenerator(toy_config), Discriminator.initialize(0), FeatureExtractor(), 0.1)


class TestAdam:
    def test_decay_schedule(self):
        assert decayed_lr(1e-3, 0.5, 10, 25) == pytest.approx(2.5e-4)
        with pytest.raises(ValueError):
            decayed_lr(1e-3, 0.5, 0, 1)

    def test_first_step_moves_by_lr(self):
        params = ParameterSet({"w": Tensor([1.0, -1.0])})
        updated, state = adam_step(params, {"w": Tensor([0.5, -2.0])}, AdamState(), lr=0.1)
        np.testing.assert_allclose(updated["w"].data, [0.9, -0.9], atol=1e-6)
        assert state.steps["w"] == 1

    def test_zero_gradient_leaves_parameter_and_moments(self):
        params = ParameterSet({"w": Tensor([1.0]), "v": Tensor([2.0])})
        updated, state = adam_step(params, {"w": Tensor([0.0]), "v": Tensor([1.0])}, AdamState(), lr=0.1)
        assert updated["w"].data[0] == 1.0
        assert "w" not in state.m and "w" not in state.steps
        assert state.steps["v"] == 1

    def test_alpha_is_projected(self):
        params = ParameterSet({"block0.alpha": Tensor([0.99]), "w": Tensor([0.99])})
        grads = {"block0.alpha": Tensor([-1.0]), "w": Tensor([-1.0])}
        updated, _ = adam_step(params, grads, AdamState(), lr=0.5)
        assert updated["block0.alpha"].data[0] == 1.0
        assert updated["w"].data[0] > 1.0

    def test_gradient_shape_checked(self):
        params = ParameterSet({"w": Tensor([1.0, 2.0])})
        with pytest.raises(ShapeError):
            adam_step(params, {"w": Tensor([1.0])}, AdamState(), lr=0.1)

    def test_stateful_wrapper_decays(self):
        opt = Adam(lr=1.0, gamma=0.5, interval=2)
        params = ParameterSet({"w": Tensor([0.0])})
        rates = []
        for _ in range(4):
            rates.append(opt.lr)
            params = opt.step(params, {"w": Tensor([1.0])})
        assert rates == [1.0, 1.0, 0.5, 0.5]

    def test_linear_toy_problem_converges(self):
        x = Tensor(make_rng(0).uniform(-1.0, 1.0, size=32))
        y = Tensor(1.5 * x.data - 0.3)
        params = ParameterSet({"w": Tensor([0.0]), "b": Tensor([0.0])})
        opt = Adam(lr=0.05, gamma=0.5, interval=200)
        for _ in range(500):
            loss = mse(x * params["w"] + params["b"], y)
            params = opt.step(params, backward(loss, params))
        assert mse(x * params["w"] + params["b"], y).item() < 1e-3


class TestCheckpoint:
    def test_round_trip(self, tmp_path, toy_config):
        params = init_generator_parameters(toy_config, dtype=np.float32)
        critic = Discriminator.initialize(1, dtype=np.float32).params
        manifest = save_checkpoint(tmp_path / "ckpt", params, critic, {"epoch": 3})
        loaded = load_checkpoint(manifest)
        assert list(loaded.generator) == list(params)
        for name in params:
            np.testing.assert_array_equal(loaded.generator[name].data, params[name].data)
        assert list(loaded.critic) == list(critic)
        assert loaded.metadata == {"epoch": 3}

    def test_reloaded_forward_is_bit_identical(self, tmp_path, toy_config, toy_stack):
        params = init_generator_parameters(toy_config, dtype=np.float32)
        generator = RIDnetGenerator(toy_config, params=params, dtype=np.float32)
        manifest = save_checkpoint(tmp_path / "ckpt", params, None, {})
        reloaded = RIDnetGenerator(toy_config, params=load_checkpoint(manifest).generator, dtype=np.float32)
        np.testing.assert_array_equal(reloaded.denoise(toy_stack), generator.denoise(toy_stack))

    def test_bare_path_is_accepted(self, tmp_path, toy_config):
        save_checkpoint(tmp_path / "ckpt", init_generator_parameters(toy_config))
        assert load_checkpoint(tmp_path / "ckpt").critic is None

    def test_unknown_version(self, tmp_path, toy_config):
        manifest = save_checkpoint(tmp_path / "ckpt", init_generator_parameters(toy_config))
        document = json.loads(manifest.read_text())
        document["format_version"] = 99
        manifest.write_text(json.dumps(document))
        with pytest.raises(CheckpointError):
            load_checkpoint(manifest)

    def test_truncated_blob(self, tmp_path, toy_config):
        manifest = save_checkpoint(tmp_path / "ckpt", init_generator_parameters(toy_config))
        blob = tmp_path / "ckpt.bin"
        blob.write_bytes(blob.read_bytes()[:16])
        with pytest.raises(CheckpointError):
            load_checkpoint(manifest)

    def test_copy_alias(self, tmp_path, toy_config):
        manifest = save_checkpoint(tmp_path / "epoch_001", init_generator_parameters(toy_config), metadata={"epoch": 1})
        alias = copy_checkpoint(manifest, tmp_path / "best")
        assert alias.name == "best.json"
        assert (tmp_path / "best.bin").read_bytes() == (tmp_path / "epoch_001.bin").read_bytes()
        assert load_checkpoint(alias).metadata["epoch"] == 1


class TestTrainer:
    def test_reduce_gradients_sums_in_order(self):
        grads = [{"w": Tensor([1.0])}, {"w": Tensor([2.0])}, {"w": Tensor([3.5])}]
        assert reduce_gradients(grads)["w"].data[0] == 6.5

    def test_micro_run_writes_artifacts(self, tmp_path, micro_dataset):
        config = micro_run(batch_size=4, epochs=2)
        result = train(config, micro_dataset, tmp_path)
        assert result.steps == 4
        checkpoints = tmp_path / "checkpoints"
        for name in ("epoch_000", "epoch_001", "epoch_002", "best"):
            assert (checkpoints / f"{name}.json").is_file()
        with open(result.log_path, newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == LOG_COLUMNS
        assert len(rows) == 5
        final = load_checkpoint(result.final_checkpoint)
        assert final.metadata["epoch"] == 2
        assert final.metadata["hyperparameters"]["train"]["batch_size"] == 4
        assert final.metadata["window"] == {"width": 400.0, "level": 40.0}
        assert final.metadata["best_epoch"] == result.best_epoch
        assert final.critic is None

    def test_adversarial_run_saves_critic(self, tmp_path, micro_dataset):
        config = micro_run(batch_size=4, epochs=1, loss_mode="gan_perceptual")
        result = train(config, micro_dataset[:4], tmp_path)
        final = load_checkpoint(result.final_checkpoint)
        assert final.critic is not None
        with open(result.log_path, newline="") as f:
            row = list(csv.DictReader(f))[0]
        assert float(row["gp"]) >= 0.0
        assert float(row["lr_D"]) == pytest.approx(config.train.lr_d)

    def test_thread_count_does_not_change_results(self, tmp_path, micro_dataset):
        blobs = []
        for threads in (1, 3):
            config = micro_run(batch_size=4, epochs=1, loss_mode="gan_perceptual", threads=threads)
            train(config, micro_dataset, tmp_path / f"t{threads}")
            blobs.append((tmp_path / f"t{threads}" / "checkpoints" / "epoch_001.bin").read_bytes())
        assert blobs[0] == blobs[1]

    def test_validation_selects_best_epoch(self, tmp_path, micro_dataset):
        config = micro_run(batch_size=4, epochs=2)
        result = train(config, micro_dataset[:4], tmp_path, validation=micro_dataset[4:])
        assert result.best_epoch in (1, 2)
        assert "validation_mse" in load_checkpoint(result.final_checkpoint).metadata

    def test_non_finite_loss_keeps_last_checkpoint(self, tmp_path, micro_dataset):
        sample = micro_dataset[0]
        broken = PatchSample(sample.low_stack, np.full_like(sample.target, np.nan), 0, 1, 0, 0)
        with pytest.raises(NumericalFailure) as info:
            train(micro_run(batch_size=1, epochs=1), [broken], tmp_path)
        assert info.value.step == 0
        assert info.value.last_checkpoint.name == "epoch_000.json"
        assert info.value.last_checkpoint.is_file()

    def test_non_finite_gradient_aborts_before_the_update(self, tmp_path, micro_dataset, monkeypatch):
        calls = []

        def nan_on_second_step(loss, params):
            calls.append(1)
            grads = backward(loss, params)
            if len(calls) <= 4:
                return grads
            return {name: Tensor(np.full(g.shape, np.nan), dtype=g.dtype) for name, g in grads.items()}

        monkeypatch.setattr("ridnet.sdk.training.trainer.backward", nan_on_second_step)
        with pytest.raises(NumericalFailure) as info:
            train(micro_run(batch_size=4, epochs=1), micro_dataset, tmp_path)
        assert info.value.step == 1
        assert "gradient" in str(info.value)
        assert info.value.last_checkpoint.name == "epoch_000.json"
        assert not (tmp_path / "checkpoints" / "epoch_001.json").exists()

    def test_critic_fakes_are_untracked_in_worker_threads(self, tmp_path, micro_dataset):
        trainer = Trainer(micro_run(batch_size=4, loss_mode="gan_perceptual", threads=3), tmp_path)
        generator = trainer.generator
        seen = []

        def spy(stack):
            seen.append(is_grad_enabled())
            return generator(stack)

        trainer.generator = spy
        trainer._pool = ThreadPoolExecutor(max_workers=3)
        try:
            trainer._critic_step(micro_dataset[:4], Adam(1e-4), 0)
        finally:
            trainer._pool.shutdown()
        assert seen == [False] * 4

    def test_empty_dataset(self, tmp_path):
        with pytest.raises(ValueError):
            train(micro_run(), [], tmp_path)


@pytest.mark.slow
class TestDeskAcceptance:
    def test_denoising_gain(self, tmp_path):
        from ridnet.sdk.data import simulate_dataset, split_by_volume
        from ridnet.sdk.evaluation import glcm_features, psnr

        config = RunConfig.resolve(preset=Preset.DESK)
        pairs = [(noisy, clean) for clean, noisy in simulate_dataset(config.data)]
        train_pairs, held_out = split_by_volume(pairs, 0.25)
        tc = config.train
        dataset = build_dataset(train_pairs, config.data.window, tc.patch_size, tc.max_patches)
        evaluation = build_dataset(held_out, config.data.window, tc.patch_size, 64)
        result = train(config, dataset, tmp_path)

        denoised = [result.generator.denoise(s.low_stack) for s in evaluation]
        noisy_psnr = np.mean([psnr(s.low_stack[1], s.target) for s in evaluation])
        denoised_psnr = np.mean([psnr(d, s.target) for d, s in zip(denoised, evaluation)])
        assert denoised_psnr >= noisy_psnr + 1.0

        def contrast_loss(image, target):
            return abs(glcm_features(image).contrast - glcm_features(target).contrast)

        noisy_contrast = np.mean([contrast_loss(s.low_stack[1], s.target) for s in evaluation])
        denoised_contrast = np.mean([contrast_loss(d, s.target) for d, s in zip(denoised, evaluation)])
        assert denoised_contrast < noisy_contrast

    def test_identical_runs_are_bit_identical(self, tmp_path):
        from ridnet.sdk.data import simulate_dataset

        config = RunConfig.resolve(preset=Preset.DESK)
        pairs = [(noisy, clean) for clean, noisy in simulate_dataset(config.data)]
        dataset = build_dataset(pairs, config.data.window, config.train.patch_size, config.train.max_patches)
        for run in ("a", "b"):
            train(config, dataset, tmp_path / run)
        for name in ("checkpoints/epoch_002.bin", "checkpoints/epoch_002.json", "loss_log.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
