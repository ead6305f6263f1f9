"""
Command line entry point: ``stdanet synth | train | eval | infer | gmacs``.

Library errors are printed to stderr with exit code 1; in debug mode (``STDANET_DEBUG=1``)
they are also reported to sentry and re-raised.
"""

import logging
from pathlib import Path
from typing import Optional

import click

from stdanet.checkpoint import load_checkpoint, restore_model
from stdanet.complexity import count_gmacs, gmacs_table
from stdanet.config import CONFIG, RunConfig
from stdanet.dataset import VideoDataset, load_synth_plan, write_dataset
from stdanet.evaluate import evaluate
from stdanet.exceptions import StdaError
from stdanet.infer import infer_directory
from stdanet.train import Trainer

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def init_error_reporting() -> bool:
    if not CONFIG["DEBUG_MODE"]:
        return False
    import sentry_sdk

    sentry_sdk.init(dsn=CONFIG["SENTRY_DSN"] or None, traces_sample_rate=1.0)
    return True


class StdaGroup(click.Group):
    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except StdaError as exc:
            if CONFIG["DEBUG_MODE"]:
                import sentry_sdk

                sentry_sdk.capture_exception(exc)
                raise
            click.echo(f"error: {exc}", err=True)
            ctx.exit(1)


@click.group(cls=StdaGroup)
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
@click.version_option(CONFIG["version"], prog_name="stdanet")
def cli(verbose: bool) -> None:
    """Video deblurring with spatio-temporal deformable attention."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format=LOG_FORMAT, force=True)


@cli.command()
@click.argument("spec_file", type=click.Path(dir_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--workers", type=int, default=None, help="Parallel sequence renderers.")
def synth(spec_file: str, out_dir: str, workers: Optional[int]) -> None:
    """Render and blur the sequences of SPEC_FILE into OUT_DIR."""
    manifest = write_dataset(load_synth_plan(spec_file), out_dir, workers)
    click.echo(f"wrote {len(manifest['sequences'])} sequences to {out_dir}")


@cli.command()
@click.argument("config_file", type=click.Path(dir_okay=False))
@click.option("--iterations", type=int, default=None, help="Override the configured step count.")
@click.option("--dataset-root", default=None)
@click.option("--checkpoint-dir", default=None)
@click.option("--quiet", is_flag=True, help="No progress bar.")
def train(
    config_file: str, iterations: Optional[int], dataset_root: Optional[str], checkpoint_dir: Optional[str], quiet: bool
) -> None:
    """Train on the train split described by CONFIG_FILE."""
    config = RunConfig.from_file(config_file)
    overrides = {
        k: v
        for k, v in (("iterations", iterations), ("dataset_root", dataset_root), ("checkpoint_dir", checkpoint_dir))
        if v is not None
    }
    config = config.replace(**overrides).validate()
    trainer = Trainer(config, VideoDataset(config.dataset_root, "train"))
    history = trainer.run(progress=False if quiet else None)
    last = history[-1]
    click.echo(f"step {last.step}: total={last.total:.6f} psnr={last.psnr:.2f} dB -> {trainer.run_dir}")


@cli.command("eval")
@click.argument("checkpoint", type=click.Path(dir_okay=False))
@click.option("--dataset-root", default=None, help="Defaults to the checkpoint's dataset root.")
@click.option("--split", default="test", show_default=True)
@click.option("--out", "out_file", type=click.Path(dir_okay=False), default=None, help="CSV table path.")
@click.option("--quiet", is_flag=True)
def eval_command(checkpoint: str, dataset_root: Optional[str], split: str, out_file: Optional[str], quiet: bool) -> None:
    """PSNR/SSIM of CHECKPOINT on a dataset split, with the blurry-input baseline."""
    saved = load_checkpoint(checkpoint)
    model = restore_model(saved)
    dataset = VideoDataset(dataset_root or saved.config.dataset_root, split)
    table = evaluate(model, dataset, progress=False if quiet else None)
    out_path = Path(out_file) if out_file else Path(checkpoint).parent / CONFIG["eval_table_name"]
    out_path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(out_path, index=False)
    click.echo(table.to_string(index=False))


@cli.command()
@click.argument("checkpoint", type=click.Path(dir_okay=False))
@click.argument("frames_dir", type=click.Path(file_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--stack", is_flag=True, help="Two-stage cascade over five-frame windows.")
@click.option("--dump-attention", is_flag=True, help="Write MSA attention heatmaps.")
@click.option("--quiet", is_flag=True)
def infer(checkpoint: str, frames_dir: str, out_dir: str, stack: bool, dump_attention: bool, quiet: bool) -> None:
    """Restore every frame of FRAMES_DIR into OUT_DIR."""
    model = restore_model(load_checkpoint(checkpoint), stack=stack)
    result = infer_directory(model, frames_dir, out_dir, dump_attention, progress=False if quiet else None)
    click.echo(f"restored {len(result.restored)} frames to {out_dir}")


@cli.command()
@click.argument("config_file", type=click.Path(dir_okay=False), required=False)
@click.option("--height", type=int, default=720, show_default=True)
@click.option("--width", type=int, default=1280, show_default=True)
@click.option("--per-layer", is_flag=True, help="Print every layer.")
def gmacs(config_file: Optional[str], height: int, width: int, per_layer: bool) -> None:
    """Analytic GMACs of the configured network at HEIGHT x WIDTH."""
    config = RunConfig.from_file(config_file) if config_file else RunConfig()
    table = gmacs_table(config.network, height, width)
    if per_layer:
        click.echo(table.to_string(index=False))
    else:
        click.echo(table.groupby("kind", sort=False)["gmacs"].sum().to_string())
    click.echo(f"total: {count_gmacs(config.network, height, width, config.stack):.3f} GMACs")


def main() -> None:
    init_error_reporting()
    cli()


if __name__ == "__main__":
    main()
