"""
Training loop: alternating critic and generator Adam steps with a per-step
CSV loss log, per-epoch versioned checkpoints and best-model bookkeeping.
"""

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, TypeVar

import numpy as np

from ..autodiff import Tensor, backward, grad_norm, no_grad
from ..autodiff.tensor import add_n
from ..data.patches import PatchSample
from ..errors import NumericalFailure
from ..model import RIDnetGenerator, init_generator_parameters, make_rng
from ..models.canonical_types import LossMode
from ..models.config import RunConfig, WindowSpec
from ..utils.timer import Timer
from .checkpoint import copy_checkpoint, save_checkpoint
from .losses import SampleTerms, critic_sample_terms, generator_sample_terms
from .networks import Discriminator, FeatureExtractor
from .optimizer import Adam

logger = logging.getLogger(__name__)

LOG_COLUMNS = ["step", "epoch", "mse", "perceptual", "adversarial_G", "critic_loss", "gp", "lr_G", "lr_D"]

T = TypeVar("T")
R = TypeVar("R")


@dataclass
class TrainResult:
    final_checkpoint: Path
    best_checkpoint: Optional[Path]
    log_path: Path
    steps: int
    initial_mse: float
    final_mse: float
    best_epoch: Optional[int]
    generator: RIDnetGenerator


def reduce_gradients(per_sample: Sequence[Mapping[str, Tensor]]) -> Dict[str, Tensor]:
    """Sum per-sample GradMaps name by name in sample order."""
    with no_grad():
        return {name: add_n([g[name] for g in per_sample]) for name in per_sample[0]}


def evaluate_mse(generator: RIDnetGenerator, samples: Iterable[PatchSample]) -> float:
    """Mean pixel MSE of clamped generator outputs against targets."""
    errors = [float(np.mean((generator.denoise(s.low_stack) - s.target) ** 2)) for s in samples]
    return float(np.mean(errors)) if errors else math.nan


class Trainer:
    """
    Owns generator, critic, perceptual extractor and both optimizers for one run.
    """

    def __init__(self, config: RunConfig, out_dir: Path, window: Optional[WindowSpec] = None):
        self.config = config
        self.out_dir = Path(out_dir)
        self.window = window or config.data.window
        tc = config.train
        self.dtype = np.float32 if tc.dtype == "float32" else np.float64
        self.generator = RIDnetGenerator(config.model, init_generator_parameters(config.model, dtype=self.dtype))
        self.critic = Discriminator.initialize(config.model.init_seed + 1, dtype=self.dtype)
        self.phi = FeatureExtractor(tc.phi_seed, dtype=self.dtype)
        self.rng = make_rng(tc.seed)
        self.adversarial = tc.loss_mode == LossMode.GAN_PERCEPTUAL
        self._pool: Optional[ThreadPoolExecutor] = None
        self.last_checkpoint: Optional[Path] = None

    def _map(self, fn: Callable[[T], R], items: Sequence[T]) -> List[R]:
        if self._pool is None:
            return [fn(item) for item in items]
        return list(self._pool.map(fn, items))

    def _metadata(self, epoch: int, step: int, **extra) -> Dict[str, object]:
        return {
            "hyperparameters": self.config.model_dump(mode="json"),
            "seed": self.config.train.seed,
            "phi": self.phi.describe(),
            "window": self.window.model_dump(),
            "epoch": epoch,
            "step": step,
            **extra,
        }

    def _save(self, name: str, epoch: int, step: int, **extra) -> Path:
        path = save_checkpoint(
            self.out_dir / "checkpoints" / name,
            self.generator.params,
            self.critic.params if self.adversarial else None,
            self._metadata(epoch, step, **extra),
        )
        self.last_checkpoint = path
        return path

    def _check_finite(self, value: float, what: str, step: int) -> None:
        if not math.isfinite(value):
            raise NumericalFailure(f"non-finite {what} at step {step}", step, self.last_checkpoint)

    def _reduced_finite(self, per_sample: Sequence[Mapping[str, Tensor]], what: str, step: int) -> Dict[str, Tensor]:
        reduced = reduce_gradients(per_sample)
        norm = grad_norm(reduced)
        self._check_finite(norm, f"{what} gradient", step)
        logger.debug("step %d: %s gradient norm %.6g", step, what, norm)
        return reduced

    def _critic_step(self, batch: Sequence[PatchSample], optimizer: Adam, step: int) -> Tuple[float, float]:
        n = len(batch)

        def fake(sample: PatchSample) -> np.ndarray:
            with no_grad():
                return self.generator(sample.low_stack).data

        fakes = self._map(fake, batch)
        draws = self.rng.uniform(0.0, 1.0, size=n)

        def sample_grads(item) -> Tuple[SampleTerms, Dict[str, Tensor]]:
            sample, generated, u = item
            real = Tensor(sample.target, dtype=self.dtype)
            terms = critic_sample_terms(real, Tensor(generated), float(u), self.critic, self.config.train.lambda_gp, n)
            return terms, backward(terms.loss, self.critic.params)

        results = self._map(sample_grads, list(zip(batch, fakes, draws)))
        critic_loss = float(np.mean([t.parts["critic_loss"] for t, _ in results]))
        gp = float(np.mean([t.parts["gp"] for t, _ in results]))
        self._check_finite(critic_loss, "critic loss", step)
        reduced = self._reduced_finite([g for _, g in results], "critic", step)
        self.critic = Discriminator(optimizer.step(self.critic.params, reduced))
        return critic_loss, gp

    def _generator_step(self, batch: Sequence[PatchSample], optimizer: Adam, step: int) -> Dict[str, float]:
        n = len(batch)
        tc = self.config.train
        critic = self.critic.frozen()

        def sample_grads(sample: PatchSample) -> Tuple[SampleTerms, Dict[str, Tensor]]:
            x = Tensor(sample.low_stack, dtype=self.dtype)
            y = Tensor(sample.target, dtype=self.dtype)
            terms = generator_sample_terms(x, y, self.generator, critic, self.phi, tc.lambda_perceptual, tc.loss_mode, n)
            return terms, backward(terms.loss, self.generator.params)

        results = self._map(sample_grads, batch)
        parts = {key: float(np.mean([t.parts[key] for t, _ in results])) for key in ("mse", "perceptual", "adversarial_G")}
        total = sum(t.loss.item() for t, _ in results)
        self._check_finite(total, "generator loss", step)
        reduced = self._reduced_finite([g for _, g in results], "generator", step)
        self.generator = self.generator.with_parameters(optimizer.step(self.generator.params, reduced))
        return parts

    def fit(self, dataset: Sequence[PatchSample], validation: Optional[Sequence[PatchSample]] = None) -> TrainResult:
        """
        Train on `dataset`; `validation` (if any) selects the best epoch.

        Raises:
            ValueError: empty dataset
            NumericalFailure: a loss or gradient became non-finite
        """
        if len(dataset) == 0:
            raise ValueError("training dataset is empty")
        tc = self.config.train
        self.out_dir.mkdir(parents=True, exist_ok=True)
        batch_size = min(tc.batch_size, len(dataset))
        steps_per_epoch = math.ceil(len(dataset) / batch_size)
        interval = tc.decay_interval or steps_per_epoch
        opt_g = Adam(tc.lr_g, tc.beta1, tc.beta2, tc.adam_eps, tc.decay_gamma, interval)
        opt_d = Adam(tc.lr_d, tc.beta1, tc.beta2, tc.adam_eps, tc.decay_gamma, interval * tc.critic_steps)

        log_path = self.out_dir / "loss_log.csv"
        best_path: Optional[Path] = None
        best_score, best_epoch = math.inf, None
        metric = "validation_mse" if validation else "train_mse"
        initial_mse = final_mse = math.nan
        step = 0
        logger.info(
            "training on %d samples (%d steps/epoch, %d epochs, loss=%s, threads=%d)",
            len(dataset),
            steps_per_epoch,
            tc.epochs,
            tc.loss_mode.value,
            tc.threads,
        )
        self._save("epoch_000", 0, 0)
        with open(log_path, "w", newline="", encoding="utf-8") as log_file:
            writer = csv.writer(log_file)
            writer.writerow(LOG_COLUMNS)
            self._pool = ThreadPoolExecutor(max_workers=tc.threads) if tc.threads > 1 else None
            try:
                for epoch in range(1, tc.epochs + 1):
                    with Timer() as timer:
                        order = self.rng.permutation(len(dataset))
                        epoch_mse = []
                        for start in range(0, len(order), batch_size):
                            batch = [dataset[int(i)] for i in order[start : start + batch_size]]
                            critic_loss = gp = 0.0
                            lr_d = opt_d.lr
                            if self.adversarial:
                                for _ in range(tc.critic_steps):
                                    critic_loss, gp = self._critic_step(batch, opt_d, step)
                            lr_g = opt_g.lr
                            parts = self._generator_step(batch, opt_g, step)
                            if step == 0:
                                initial_mse = parts["mse"]
                            final_mse = parts["mse"]
                            epoch_mse.append(parts["mse"])
                            writer.writerow(
                                [step, epoch, parts["mse"], parts["perceptual"], parts["adversarial_G"], critic_loss, gp, lr_g, lr_d]
                            )
                            log_file.flush()
                            step += 1
                        score = evaluate_mse(self.generator, validation) if validation else float(np.mean(epoch_mse))
                        improved = score < best_score
                        if improved:
                            best_score, best_epoch = score, epoch
                        checkpoint = self._save(f"epoch_{epoch:03d}", epoch, step, best_epoch=best_epoch, **{metric: score})
                        if improved:
                            best_path = copy_checkpoint(checkpoint, self.out_dir / "checkpoints" / "best")
                    logger.info("epoch %d/%d: %s=%.6f (%.1fs)", epoch, tc.epochs, metric, score, timer.elapsed)
            finally:
                if self._pool is not None:
                    self._pool.shutdown()
                    self._pool = None

        return TrainResult(
            final_checkpoint=self.last_checkpoint,
            best_checkpoint=best_path,
            log_path=log_path,
            steps=step,
            initial_mse=initial_mse,
            final_mse=final_mse,
            best_epoch=best_epoch,
            generator=self.generator,
        )


def train(
    config: RunConfig,
    dataset: Sequence[PatchSample],
    out_dir: Path,
    validation: Optional[Sequence[PatchSample]] = None,
    window: Optional[WindowSpec] = None,
) -> TrainResult:
    """Run one training job and return where its artifacts were written."""
    return Trainer(config, out_dir, window).fit(dataset, validation)
