import click
import functools
import logging
import sys
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from ridnet.cli.orchestrator import Orchestrator
from ridnet.sdk.data import (
    HU_MAX,
    HU_MIN,
    Volume,
    build_dataset,
    export_pgm,
    list_volume_pairs,
    read_volume,
    simulate_dataset,
    simulate_pair,
    split_by_volume,
    window_denormalize,
    window_normalize,
    write_volume,
)
from ridnet.sdk.errors import CheckpointError, NumericalFailure, RidnetError, VolumeFormatError
from ridnet.sdk.evaluation import evaluate_images, sweep as run_sweep
from ridnet.sdk.evaluation.sweep import config_echo
from ridnet.sdk.model import RIDnetGenerator
from ridnet.sdk.models.canonical_types import AuditScope, LossMode, Preset, Protocol, SweepAxis
from ridnet.sdk.models.config import RunConfig, WindowSpec
from ridnet.sdk.training import load_checkpoint, train as run_training
from ridnet.sdk.utils.logging import configure_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


def handle_errors(f):
    """Map SDK exceptions to the CLI exit-code convention."""

    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except NumericalFailure as e:
            click.echo(f"[ERROR] Numerical failure at step {e.step}: {e}", err=True)
            if e.last_checkpoint is not None:
                click.echo(f"[INFO] Last good checkpoint: {e.last_checkpoint}", err=True)
            sys.exit(EXIT_NUMERICAL)
        except (OSError, VolumeFormatError, CheckpointError) as e:
            click.echo(f"[ERROR] {e}", err=True)
            sys.exit(EXIT_IO)
        except (ValueError, RidnetError) as e:
            click.echo(f"[ERROR] {e}", err=True)
            sys.exit(EXIT_USAGE)

    return wrapper


def config_options(f):
    """Decorator to add configuration options shared by all commands."""
    f = click.option(
        "--preset",
        type=click.Choice([p.value for p in Preset]),
        default=None,
        help="Configuration bundle to start from.",
    )(f)
    f = click.option(
        "--config",
        "config_file",
        type=click.Path(dir_okay=False),
        default=None,
        help="Key-value config file with dotted keys (train.batch_size=8).",
    )(f)
    f = click.option(
        "--threads",
        type=int,
        default=None,
        help="Worker threads for per-sample work (overrides RIDNET_THREADS).",
    )(f)
    f = click.option(
        "--verbose",
        "-v",
        is_flag=True,
        help="Enable verbose logging to see detailed progress.",
    )(f)
    return f


def resolve_config(
    preset: Optional[str],
    config_file: Optional[str],
    verbose: bool,
    default_preset: Preset = Preset.DESK,
    log_file: Optional[Path] = None,
    **overrides,
) -> RunConfig:
    """Resolve the run configuration and set up logging for the command."""
    config = RunConfig.resolve(
        preset=Preset(preset) if preset else default_preset,
        config_file=config_file,
        overrides=overrides,
    )
    configure_logging("DEBUG" if verbose else config.log_level, log_file)
    return config


def parse_ints(text: str, what: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise click.BadParameter(f"{what} must be comma-separated integers, got '{text}'") from e


def load_pairs(directory: Path) -> Tuple[List[Tuple[Volume, Volume]], Optional[WindowSpec]]:
    """(noisy, clean) volume pairs of a gen-data directory and the window stored with them."""
    paths = list_volume_pairs(directory)
    if not paths:
        raise FileNotFoundError(f"no noisy_*/clean_* volume pairs found in '{directory}'")
    pairs = []
    window = None
    for noisy_path, clean_path in paths:
        noisy, noisy_window = read_volume(noisy_path)
        clean, _ = read_volume(clean_path)
        pairs.append((noisy, clean))
        window = window or noisy_window
    return pairs, window


def load_generator(ckpt: Path) -> Tuple[RIDnetGenerator, WindowSpec, RunConfig]:
    checkpoint = load_checkpoint(ckpt)
    try:
        trained = RunConfig.model_validate(checkpoint.metadata["hyperparameters"])
        window = WindowSpec(**checkpoint.metadata["window"])
    except KeyError as e:
        raise CheckpointError(f"checkpoint {ckpt} lacks metadata field {e}") from e
    dtype = np.float32 if trained.train.dtype == "float32" else np.float64
    generator = RIDnetGenerator(trained.model, checkpoint.generator.astype(dtype))
    return generator, window, trained


@click.group()
def cli():
    """A command-line tool for graph-convolutional low-dose CT denoising."""
    pass


@cli.command("gen-data")
@click.option("--seed", type=int, default=None, help="Base seed of phantoms and noise.")
@click.option("--volumes", type=int, default=None, help="Number of clean/noisy volume pairs.")
@click.option("--dims", default=None, help="Volume dims as slices,rows,cols.")
@click.option("--dose", type=float, default=None, help="Dose fraction in (0, 1].")
@click.option(
    "--protocol",
    type=click.Choice([p.value for p in Protocol]),
    default=None,
    help="Body-region protocol (sets anatomy, window and default dose).",
)
@click.option("--pgm", is_flag=True, help="Also export the middle slice of each volume as PGM.")
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output directory.")
@config_options
@handle_errors
def gen_data(seed, volumes, dims, dose, protocol, pgm, out, preset, config_file, threads, verbose):
    """
    Generates paired normal-dose phantoms and simulated low-dose volumes.
    """
    config = resolve_config(
        preset,
        config_file,
        verbose,
        **{
            "data.seed": seed,
            "data.volumes": volumes,
            "data.dims": dims,
            "data.dose": dose,
            "data.protocol": protocol,
            "train.threads": threads,
        },
    )
    out_dir = Path(out)
    data = config.data
    click.echo(f"[START] Generating {data.volumes} volume pairs ({data.protocol.value}, dose {data.dose:g}) in {out_dir}")
    for k in range(data.volumes):
        clean, noisy = simulate_pair(data, k)
        write_volume(clean, out_dir / f"clean_{k:03d}", data.window)
        write_volume(noisy, out_dir / f"noisy_{k:03d}", data.window)
        if pgm:
            middle = data.dims[0] // 2
            export_pgm(clean, middle, data.window, out_dir / f"clean_{k:03d}.pgm")
            export_pgm(noisy, middle, data.window, out_dir / f"noisy_{k:03d}.pgm")
        logger.info("volume %d: %d voxels flagged by the noise model", k, noisy.provenance["flagged_voxels"])
    config.write(out_dir)
    click.echo(f"[SUCCESS] Wrote {2 * data.volumes} volumes to {out_dir.resolve()}")


@cli.command()
@click.option("--data", "data_dir", required=True, type=click.Path(file_okay=False), help="gen-data output directory.")
@click.option("--loss", type=click.Choice([m.value for m in LossMode]), default=None, help="Generator objective.")
@click.option("--epochs", type=int, default=None, help="Override the preset epoch count.")
@click.option("--seed", type=int, default=None, help="Training seed (shuffling and penalty draws).")
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output directory.")
@config_options
@handle_errors
def train(data_dir, loss, epochs, seed, out, preset, config_file, threads, verbose):
    """
    Trains the generator on 3-slice patches of a gen-data directory.

    Writes per-epoch checkpoints (plus a `best` alias), loss_log.csv, train.log
    and resolved_config.json to the output directory.
    """
    out_dir = Path(out)
    config = resolve_config(
        preset,
        config_file,
        verbose,
        log_file=out_dir / "train.log",
        **{"train.loss_mode": loss, "train.epochs": epochs, "train.seed": seed, "train.threads": threads},
    )
    pairs, stored_window = load_pairs(Path(data_dir))
    window = stored_window or config.data.window
    tc = config.train
    train_pairs, held_out = split_by_volume(pairs, tc.validation_fraction)
    dataset = build_dataset(train_pairs, window, tc.patch_size, tc.max_patches, tc.random_offset, tc.seed)
    validation = build_dataset(held_out, window, tc.patch_size, tc.max_patches, False, tc.seed) if held_out else None
    config.write(out_dir)
    click.echo(
        f"[START] Training on {len(dataset)} patches from {len(train_pairs)} volumes "
        f"({len(held_out)} held out), preset {config.preset.value}, loss {tc.loss_mode.value}"
    )
    result = run_training(config, dataset, out_dir, validation, window)
    click.echo(f"[SUCCESS] {result.steps} steps, MSE {result.initial_mse:.6f} -> {result.final_mse:.6f}")
    click.echo(f"   Final checkpoint: {result.final_checkpoint}")
    if result.best_checkpoint is not None:
        click.echo(f"   Best checkpoint: {result.best_checkpoint} (epoch {result.best_epoch})")
    click.echo(f"   Loss log: {result.log_path}")


@cli.command()
@click.option("--ckpt", required=True, type=click.Path(dir_okay=False), help="Checkpoint manifest (.json).")
@click.option("--in", "in_path", required=True, type=click.Path(dir_okay=False), help="Input volume sidecar.")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Output volume path (sidecar).")
@click.option("--tile", type=int, default=None, help="Denoise in tile x tile pieces with a halo margin.")
@click.option("--verbose", "-v", is_flag=True, help="Enable verbose logging to see detailed progress.")
@handle_errors
def denoise(ckpt, in_path, out, tile, verbose):
    """
    Denoises every slice of a volume and writes the result back in HU.
    """
    configure_logging("DEBUG" if verbose else "INFO")
    generator, window, trained = load_generator(Path(ckpt))
    volume, _ = read_volume(Path(in_path))
    click.echo(f"[START] Denoising {volume.dims} volume with {Path(ckpt).name}")
    normalized = window_normalize(volume, window)
    restored = window_denormalize(generator.denoise_volume(normalized, tile=tile), window)
    provenance = {
        "source": volume.provenance,
        "checkpoint": Path(ckpt).name,
        "tile": tile,
    }
    result = Volume(hu=np.clip(restored, HU_MIN, HU_MAX), spacing=volume.spacing, provenance=provenance)
    out_path = write_volume(result, Path(out), window)
    trained.write(out_path.parent)
    click.echo(f"[SUCCESS] Denoised volume saved to {out_path.resolve()}")


@cli.command("eval")
@click.option("--pairs", "pairs_dir", required=True, type=click.Path(file_okay=False), help="gen-data output directory.")
@click.option("--ckpt", type=click.Path(dir_okay=False), default=None, help="Also score this checkpoint's outputs.")
@click.option("--tile", type=int, default=None, help="Tile size for denoising.")
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output directory.")
@config_options
@handle_errors
def evaluate(pairs_dir, ckpt, tile, out, preset, config_file, threads, verbose):
    """
    Scores noisy inputs (and denoised outputs with --ckpt) against the
    normal-dose volumes: PSNR, SSIM and GLCM radiomics losses per slice.
    """
    config = resolve_config(preset, config_file, verbose, **{"train.threads": threads})
    pairs, stored_window = load_pairs(Path(pairs_dir))
    window = stored_window or config.data.window
    generator = None
    workers = config.train.threads
    if ckpt:
        generator, window, config = load_generator(Path(ckpt))
    items = []
    for v, (noisy, clean) in enumerate(pairs):
        noisy_n = window_normalize(noisy, window)
        clean_n = window_normalize(clean, window)
        denoised_n = generator.denoise_volume(noisy_n, tile=tile) if generator is not None else None
        for i in range(1, noisy.dims[0] - 1):
            name = f"vol{v:03d}/slice{i:03d}"
            items.append((name, "noisy", noisy_n[i], clean_n[i]))
            if denoised_n is not None:
                items.append((name, "denoised", denoised_n[i], clean_n[i]))
    report = evaluate_images(items, config_echo(config), threads=workers)
    out_dir = Path(out)
    report.write_csv(out_dir / "metrics.csv")
    report.write_json(out_dir / "metrics.json")
    config.write(out_dir)
    for source in report.sources():
        summary = report.aggregate(source)
        click.echo(
            f"   {source:9s} PSNR {summary['psnr_db']:.3f} dB  SSIM {summary['ssim']:.4f}  "
            f"contrast loss {summary['glcm_contrast_loss']:.4f}  ({summary['images']} images)"
        )
    click.echo(f"[SUCCESS] Metrics saved to {out_dir.resolve()}")


@cli.command()
@click.option(
    "--scope",
    "scopes",
    type=click.Choice([s.value for s in AuditScope]),
    multiple=True,
    default=[AuditScope.OPS.value],
    help="Audit scope; repeat for several.",
)
@click.option("--only", default=None, help="Run only audits whose name contains this text.")
@click.option("--seed", type=int, default=0, help="Seed of audit inputs and sampled coordinates.")
@click.option("--verbose", "-v", is_flag=True, help="Enable verbose logging to see detailed progress.")
@handle_errors
def gradcheck(scopes, only, seed, verbose):
    """
    Compares analytic gradients with central differences (float64, eps 1e-4).
    Exits with code 3 if any audit exceeds its tolerance.
    """
    configure_logging("DEBUG" if verbose else "WARNING")
    orchestrator = Orchestrator(scopes=scopes, seed=seed)
    results = orchestrator.run(only=only)
    click.echo(f"{'scope':7s} {'audit':40s} {'max rel err':>12s} {'tol':>8s} {'coords':>7s} {'kinks':>6s}  status")
    for r in results:
        status = "ok" if r.passed else f"FAIL {r.check.failure or ''}".rstrip()
        click.echo(
            f"{r.scope.value:7s} {r.name:40s} {r.check.max_relative_error:12.3e} {r.tolerance:8.0e} "
            f"{r.check.checked:7d} {r.check.kinks:6d}  {status}"
        )
    failed = [r for r in results if not r.passed]
    if failed:
        click.echo(f"[ERROR] {len(failed)} of {len(results)} audits failed", err=True)
        sys.exit(EXIT_NUMERICAL)
    click.echo(f"[SUCCESS] {len(results)} audits passed")


@cli.command()
@click.option("--axis", required=True, type=click.Choice([a.value for a in SweepAxis]), help="Swept setting.")
@click.option("--values", "values_text", required=True, help="Comma-separated values, e.g. 2,4,8,12.")
@click.option(
    "--data",
    "data_dir",
    type=click.Path(file_okay=False),
    default=None,
    help="gen-data directory; phantoms are generated in memory when omitted.",
)
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output directory.")
@config_options
@handle_errors
def sweep(axis, values_text, data_dir, out, preset, config_file, threads, verbose):
    """
    Trains one model per value of K or of the block count and tabulates
    PSNR, SSIM and radiomics losses on held-out volumes.
    """
    config = resolve_config(preset, config_file, verbose, default_preset=Preset.MICRO, **{"train.threads": threads})
    values = parse_ints(values_text, "--values")
    if not values:
        raise click.BadParameter("--values must name at least one value")
    if data_dir:
        pairs, stored_window = load_pairs(Path(data_dir))
        window = stored_window or config.data.window
    else:
        pairs = [(noisy, clean) for clean, noisy in simulate_dataset(config.data, config.data.volumes + 1)]
        window = config.data.window
    if len(pairs) < 2:
        raise ValueError("sweep needs at least two volumes (one is held out for scoring)")
    tc = config.train
    train_pairs, eval_pairs = split_by_volume(pairs, tc.validation_fraction or 0.5)
    train_set = build_dataset(train_pairs, window, tc.patch_size, tc.max_patches, tc.random_offset, tc.seed)
    eval_set = build_dataset(eval_pairs, window, tc.patch_size, tc.max_patches, False, tc.seed)
    out_dir = Path(out)
    config.write(out_dir)
    click.echo(f"[START] Sweeping {axis} over {values} ({len(train_set)} training / {len(eval_set)} scoring patches)")
    rows = run_sweep(SweepAxis(axis), values, config, train_set, eval_set, out_dir)
    for row in rows:
        if row.failed:
            click.echo(f"   {axis}={row.value}: FAILED {row.error}")
        else:
            click.echo(
                f"   {axis}={row.value}: PSNR {row.metrics['psnr_db']:.3f} dB  SSIM {row.metrics['ssim']:.4f}  "
                f"contrast loss {row.metrics['glcm_contrast_loss']:.4f}  ({row.wall_time_s:.1f}s)"
            )
    click.echo(f"[SUCCESS] Sweep table saved to {(out_dir / f'sweep_{axis}.csv').resolve()}")
