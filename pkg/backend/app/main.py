#!/usr/bin/env python3
"""
ETES Deblur - command-line entry point

Batch commands wiring the pipeline end to end:
- simulate-events: frames -> EVT1/CSV events
- synthesize: frames + events -> dataset-m-n samples and manifest
- edi: model-based deblurring of one sample
- train / eval: network training and PSNR/SSIM evaluation
- plot-activation: temporal activation CSV + SVG of one sample
- rerun: replay a run.json

Exit codes: 0 success, 1 usage, 2 input, 3 state/shape.
"""

import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import click
import numpy as np
import torch
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler

from backend.app import __version__
from backend.app.analytics.activation import build_profile, plot_activation_svg
from backend.app.analytics.metrics import psnr, ssim
from backend.app.analytics.models import ExposureSelectivity, ImageMetric, create_metric_report
from backend.app.core.config import (
    AppSettings,
    ModelConfig,
    SynthesisConfig,
    TrainingConfig,
    load_settings,
    parse_key_value_file,
)
from backend.app.core.enhanced_logging import create_component_logger
from backend.app.core.errors import ConfigError, DeblurError, InputError
from backend.app.io.checkpoint import load_checkpoint, load_into
from backend.app.io.formats import (
    read_evt1,
    read_frame_dir,
    read_tnsr,
    write_events_csv,
    write_evt1,
    write_pnm,
    write_tnsr,
)
from backend.app.models.network import DeblurNet, predict
from backend.app.physics.edi import edi_deblur, edi_latent_sequence, residual_sum
from backend.app.physics.events import simulate_events
from backend.app.physics.frames import FrameSequence
from backend.app.synthesis.shutter import (
    MANIFEST_NAME,
    PROTOCOLS,
    VARIANTS,
    ManifestRecord,
    ShutterConfig,
    build_dataset,
    load_sample,
    protocol_configs,
    read_manifest,
    variant_configs,
)
from backend.app.training.dataset import ManifestDataset, sample_arrays
from backend.app.training.trainer import Trainer

logger = create_component_logger("cli")

GLOBAL_KEYS = ("seed", "threads")


def setup_logging(level: str = "INFO"):
    """Rich console logging on stderr; artifacts never contain log output"""
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(message)s",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


def _jsonable(value: Any) -> Any:
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def start_run(ctx: click.Context, out_dir: Path) -> AppSettings:
    """Seed, fix the thread schedule and write run.json for the invoked command"""
    root = ctx.find_root()
    seed, threads = root.obj["seed"], root.obj["threads"]
    torch.manual_seed(seed)
    if threads is not None:
        torch.set_num_threads(threads)
        if threads == 1:
            torch.use_deterministic_algorithms(True)

    run = {
        "command": ctx.info_name,
        "params": {k: _jsonable(v) for k, v in sorted(ctx.params.items())},
        "seed": seed,
        "threads": threads,
        "settings_file": _jsonable(root.obj["settings_file"]),
        "version": __version__,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run.json").write_text(json.dumps(run, sort_keys=True, indent=2) + "\n")
    logger.log_system_event("run_started", {"command": ctx.info_name, "out_dir": str(out_dir)})
    return root.obj["settings"]


def _deterministic(ctx: click.Context) -> bool:
    return ctx.find_root().obj["threads"] == 1


def _existing(path: Path, kind: str = "file") -> Path:
    if not path.exists():
        raise InputError(f"{kind} not found", path=str(path))
    return path


def _int_list(text: str, hint: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got '{text}'", param_hint=hint)


def _parse_sample_ref(ref: str) -> Tuple[Path, int]:
    manifest, sep, index = ref.rpartition(":")
    if not sep or not manifest or not index.isdigit():
        raise click.BadParameter(f"expected MANIFEST:IDX, got '{ref}'", param_hint="--sample")
    return Path(manifest), int(index)


def _record(manifest: Path, index: int) -> ManifestRecord:
    records = read_manifest(_existing(manifest, "manifest"))
    for record in records:
        if record.index == index:
            return record
    raise InputError(f"manifest has no sample {index}", path=str(manifest))


def _load_model(ckpt: Path) -> DeblurNet:
    arrays, metadata = load_checkpoint(_existing(ckpt, "checkpoint"))
    if "model" not in metadata:
        raise ConfigError(f"checkpoint {ckpt} carries no model configuration")
    model = DeblurNet(ModelConfig(**metadata["model"]))
    load_into(model, arrays)
    model.eval()
    return model


def _crop4(arrays: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    height, width = arrays["blur"].shape[-2:]
    h4, w4 = height - height % 4, width - width % 4
    return {k: v[..., :h4, :w4] for k, v in arrays.items()}


def _image(planar: np.ndarray) -> np.ndarray:
    """[C, H, W] -> H x W or H x W x C"""
    return planar[0] if planar.shape[0] == 1 else np.moveaxis(planar, 0, -1)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", "config_file", type=click.Path(dir_okay=False, path_type=Path),
              help="key = value run-config file for the invoked command")
@click.option("--settings", "settings_file", type=click.Path(dir_okay=False, path_type=Path),
              help="YAML settings (default: config/default.yaml)")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--threads", type=click.IntRange(min=1), default=None,
              help="Torch intra-op threads; 1 enables the deterministic mode")
@click.option("--log-level", default="INFO", show_default=True,
              type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False))
@click.version_option(__version__, prog_name="etes")
@click.pass_context
def cli(ctx, config_file, settings_file, seed, threads, log_level):
    """Event-guided motion deblurring with exposure time-based event selection"""
    setup_logging(log_level)
    ctx.ensure_object(dict)
    ctx.obj.update(
        settings=load_settings(settings_file),
        settings_file=settings_file,
        seed=seed,
        threads=threads,
    )
    if config_file is None:
        return

    values = parse_key_value_file(_existing(config_file, "run config"))
    command = cli.get_command(ctx, ctx.invoked_subcommand) if ctx.invoked_subcommand else None
    allowed = {p.name for p in command.params} if command else set()
    unknown = sorted(set(values) - allowed - set(GLOBAL_KEYS))
    if unknown:
        raise ConfigError(f"unknown keys in {config_file}: {unknown}")
    for key in GLOBAL_KEYS:
        if key in values and ctx.get_parameter_source(key) == click.core.ParameterSource.DEFAULT:
            ctx.obj[key] = int(values[key])
    if command is not None:
        ctx.default_map = {command.name: {k: v for k, v in values.items() if k in allowed}}


@cli.command("simulate-events")
@click.option("--frames", required=True, type=click.Path(path_type=Path), help="Directory of PGM/PPM frames")
@click.option("--beta", required=True, type=float, help="Contrast threshold")
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path), help="Event file to write")
@click.option("--fps", type=float, default=240.0, show_default=True)
@click.option("--log-floor", type=float, default=None)
@click.option("--format", "fmt", type=click.Choice(["evt1", "csv"]), default="evt1", show_default=True)
@click.pass_context
def simulate_events_cmd(ctx, frames, beta, out, fps, log_floor, fmt):
    """Simulate the events a sensor would emit for a frame sequence"""
    if beta <= 0:
        raise click.BadParameter("must be positive", param_hint="--beta")
    settings = start_run(ctx, out.parent)
    seq = FrameSequence.uniform(read_frame_dir(frames), fps)
    floor = log_floor if log_floor is not None else settings.physics.log_floor
    stream = simulate_events(seq, beta=beta, log_floor=floor)

    if fmt == "csv":
        write_events_csv(stream, out)
    else:
        write_evt1(stream, out)
    duration = int(seq.timestamps[-1] - seq.timestamps[0])
    diagnostics = {
        "events": len(stream),
        "positive": int((stream.p > 0).sum()),
        "negative": int((stream.p < 0).sum()),
        "frames": len(seq),
        "beta": beta,
        "duration_us": duration,
        "events_per_second": len(stream) / (duration * 1e-6) if duration > 0 else 0.0,
        "sensor_size": list(stream.sensor_size),
    }
    out.with_name(out.name + ".json").write_text(json.dumps(diagnostics, sort_keys=True, indent=2) + "\n")
    logger.success("Events written", diagnostics)


@cli.command("synthesize")
@click.option("--frames", required=True, type=click.Path(path_type=Path))
@click.option("--events", "events_path", required=True, type=click.Path(path_type=Path))
@click.option("--m", type=click.IntRange(min=1), default=None, help="Exposure frames")
@click.option("--n", type=click.IntRange(min=0), default=None, help="Readout frames")
@click.option("--protocol", type=click.Choice(sorted(PROTOCOLS)), default=None,
              help="Use a preset list of (m, n) instead of --m/--n")
@click.option("--variant", type=click.Choice(VARIANTS), default=None,
              help="Training-set variant over --exposures with a fixed --period")
@click.option("--exposures", default=None, help="Comma-separated exposure counts for --variant, e.g. 9,11,13,15")
@click.option("--period", type=click.IntRange(min=1), default=None, help="Frames per shutter period for --variant")
@click.option("--noise/--no-noise", default=None, help="Readout noise (protocol default or settings when omitted)")
@click.option("--noise-factor", type=float, default=None)
@click.option("--fps", type=float, default=None)
@click.option("--out", required=True, type=click.Path(file_okay=False, path_type=Path))
@click.pass_context
def synthesize_cmd(ctx, frames, events_path, m, n, protocol, variant, exposures, period, noise, noise_factor,
                   fps, out):
    """Build dataset-m-n blur samples and manifest.jsonl"""
    if protocol is not None and variant is not None:
        raise click.UsageError("--protocol and --variant are mutually exclusive")
    if variant is not None and noise is not None:
        raise click.UsageError("--variant decides the readout noise; drop --noise/--no-noise")
    syn: SynthesisConfig = ctx.find_root().obj["settings"].synthesis
    seed = ctx.find_root().obj["seed"]
    factor = noise_factor if noise_factor is not None else syn.noise_factor
    try:
        if protocol is not None:
            configs = protocol_configs(protocol, seed=seed, noise=noise, noise_factor=factor)
        elif variant is not None:
            configs = variant_configs(
                variant,
                _int_list(exposures, "--exposures") if exposures is not None else [m or syn.m],
                period if period is not None else syn.m + syn.n,
                seed=seed,
                noise_factor=factor,
            )
        else:
            configs = [ShutterConfig(
                m=m if m is not None else syn.m,
                n=n if n is not None else syn.n,
                noise_enabled=noise if noise is not None else syn.noise, noise_factor=factor, seed=seed,
            )]
    except ValidationError as e:
        raise ConfigError(f"invalid shutter parameters: {e}")

    start_run(ctx, out)

    seq = FrameSequence.uniform(read_frame_dir(frames), fps if fps is not None else syn.source_fps)
    events = read_evt1(_existing(events_path, "event file"))
    height, width = seq.shape
    if events.sensor_size != (width, height):
        raise InputError(
            f"event sensor {events.sensor_size} does not match frames {(width, height)}", path=str(events_path)
        )
    records = build_dataset(seq, events, configs, out)
    logger.success("Dataset synthesized", {"samples": len(records), "manifest": str(out / MANIFEST_NAME)})


@cli.command("edi")
@click.option("--sample", "sample_ref", required=True, help="MANIFEST:IDX")
@click.option("--out", required=True, type=click.Path(file_okay=False, path_type=Path))
@click.option("--export-sequence", is_flag=True, default=False, help="Also write the recovered exposure frames")
@click.pass_context
def edi_cmd(ctx, sample_ref, out, export_sequence):
    """Model-based deblurring of one sample with its events"""
    start_run(ctx, out)
    manifest, index = _parse_sample_ref(sample_ref)
    record = _record(manifest, index)
    sample = load_sample(manifest, record)

    S = residual_sum(sample.events, record.anchor_time, record.exposure_times)
    deblurred = edi_deblur(sample.blur, S)
    write_tnsr(deblurred, out / "deblurred.tnsr")
    write_pnm(deblurred, out / ("deblurred.ppm" if deblurred.ndim == 3 else "deblurred.pgm"))

    if export_sequence:
        latents = edi_latent_sequence(deblurred, sample.events, record.anchor_time, record.exposure_times)
        for i, latent in enumerate(latents):
            write_pnm(latent, out / "sequence" / (f"latent_{i:03d}" + (".ppm" if latent.ndim == 3 else ".pgm")))

    metrics = [
        ImageMetric(name="blurred", config_tag=record.config_tag,
                    psnr_db=psnr(sample.blur, sample.sharp), ssim=ssim(sample.blur, sample.sharp)),
        ImageMetric(name="deblurred", config_tag=record.config_tag,
                    psnr_db=psnr(deblurred, sample.sharp), ssim=ssim(deblurred, sample.sharp)),
    ]
    report = create_metric_report(metrics)
    (out / "report.json").write_text(report.model_dump_json(indent=2) + "\n")
    (out / "report.csv").write_text(report.to_csv())
    logger.success("EDI deblurring done", {m.name: round(m.psnr_db, 4) for m in metrics})


def _model_config(settings: AppSettings, image_channels: int, overrides: Dict[str, Optional[bool]]) -> ModelConfig:
    data = settings.model.model_dump()
    data["image_channels"] = image_channels
    data["voxel_bins"] = settings.representation.voxel_bins
    data["num_units"] = settings.representation.num_units
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ModelConfig(**data)


@cli.command("train")
@click.option("--manifest", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--steps", type=click.IntRange(min=0), default=None)
@click.option("--out", required=True, type=click.Path(file_okay=False, path_type=Path))
@click.option("--batch-size", type=click.IntRange(min=1), default=None)
@click.option("--crop", type=click.IntRange(min=4), default=None)
@click.option("--lr", type=float, default=None)
@click.option("--tag", "tags", multiple=True, help="Restrict training to these dataset tags")
@click.option("--etes/--no-etes", "use_etes", default=None)
@click.option("--recurrent/--no-recurrent", "use_recurrent_encoding", default=None)
@click.option("--fusion/--no-fusion", "use_fusion", default=None)
@click.option("--multi-scale/--single-scale", "multi_scale_loss", default=None)
@click.pass_context
def train_cmd(ctx, manifest, steps, out, batch_size, crop, lr, tags,
              use_etes, use_recurrent_encoding, use_fusion, multi_scale_loss):
    """Train the deblurring network on a synthesized dataset"""
    settings = start_run(ctx, out)
    seed = ctx.find_root().obj["seed"]
    updates: Dict[str, Any] = {"seed": seed, "record_wall_time": not _deterministic(ctx)}
    for key, value in (("steps", steps), ("batch_size", batch_size), ("crop_size", crop),
                       ("learning_rate", lr), ("multi_scale_loss", multi_scale_loss)):
        if value is not None:
            updates[key] = value
    rep = settings.representation
    dataset = ManifestDataset(
        _existing(manifest, "manifest"), rep.voxel_bins, rep.num_units, seed=seed, tags=list(tags) or None,
    )
    channels, height, width = dataset.arrays(0)["blur"].shape
    if crop is None:
        # the configured crop shrinks to fit small samples; an explicit --crop never does
        fit = min(height, width) - min(height, width) % 4
        updates["crop_size"] = min(settings.training.crop_size, fit)
    try:
        training = TrainingConfig(**{**settings.training.model_dump(), **updates})
    except ValueError as e:
        raise ConfigError(f"invalid training parameters: {e}")
    dataset.crop_size = training.crop_size
    config = _model_config(settings, channels, {
        "use_etes": use_etes, "use_recurrent_encoding": use_recurrent_encoding, "use_fusion": use_fusion,
    })
    model = DeblurNet(config)
    result = Trainer(model, dataset, training, out).fit()
    logger.success("Training done", {"checkpoint": str(result.final_checkpoint), "steps": len(result.losses)})


@cli.command("eval")
@click.option("--manifest", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--ckpt", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.option("--predictions", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="Directory of sample_XXXXX.tnsr predictions to score instead of a checkpoint")
@click.option("--out", required=True, type=click.Path(file_okay=False, path_type=Path))
@click.option("--tag", "tags", multiple=True)
@click.pass_context
def eval_cmd(ctx, manifest, ckpt, predictions, out, tags):
    """PSNR/SSIM of a checkpoint (or of stored predictions) per sample and per dataset tag"""
    settings = start_run(ctx, out)
    if (ckpt is None) == (predictions is None):
        raise click.UsageError("exactly one of --ckpt and --predictions is required")
    cfg = settings.eval
    records = read_manifest(_existing(manifest, "manifest"))
    if tags:
        records = [r for r in records if r.config_tag in tags]
    if not records:
        raise InputError("manifest selects no samples", path=str(manifest))
    model = _load_model(ckpt) if ckpt is not None else None

    metrics: List[ImageMetric] = []
    selectivity: Dict[str, List[ExposureSelectivity]] = {}
    for record in records:
        loaded = load_sample(manifest, record)
        name = f"sample_{record.index:05d}"
        if model is not None:
            arrays = _crop4(sample_arrays(
                loaded.blur, loaded.sharp, loaded.events, tuple(record.past_window),
                tuple(record.events_window), model.config.voxel_bins, model.config.num_units,
            ))
            result = predict(model, arrays)
            prediction = _image(result.outputs.clamped()[0][0].double().numpy())
            target = _image(arrays["sharp"])
            profile = build_profile(result.activation, record.past_window, record.events_window,
                                    record.exposure_window, name, record.config_tag)
            selectivity.setdefault(record.config_tag, []).append(profile.selectivity)
        else:
            prediction = read_tnsr(_existing(predictions / f"{name}.tnsr", "prediction")).astype(np.float64)
            target = loaded.sharp
        metrics.append(ImageMetric(
            name=name, config_tag=record.config_tag,
            psnr_db=psnr(prediction, target, cfg.psnr_cap),
            ssim=ssim(prediction, target, cfg.ssim_window, cfg.ssim_sigma, cfg.ssim_k1, cfg.ssim_k2),
        ))

    report = create_metric_report(metrics, selectivity or None)
    (out / "report.json").write_text(report.model_dump_json(indent=2) + "\n")
    (out / "report.csv").write_text(report.to_csv())
    logger.success("Evaluation done", {"psnr_db": round(report.psnr_db, 4), "ssim": round(report.ssim, 6)})


@cli.command("plot-activation")
@click.option("--ckpt", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--sample", "sample_ref", required=True, help="MANIFEST:IDX")
@click.option("--out", required=True, type=click.Path(file_okay=False, path_type=Path))
@click.pass_context
def plot_activation_cmd(ctx, ckpt, sample_ref, out):
    """Temporal activation per slot as CSV and SVG"""
    start_run(ctx, out)
    manifest, index = _parse_sample_ref(sample_ref)
    record = _record(manifest, index)
    model = _load_model(ckpt)
    loaded = load_sample(manifest, record)
    arrays = _crop4(sample_arrays(
        loaded.blur, loaded.sharp, loaded.events, tuple(record.past_window),
        tuple(record.events_window), model.config.voxel_bins, model.config.num_units,
    ))
    result = predict(model, arrays)
    profile = build_profile(result.activation, record.past_window, record.events_window,
                            record.exposure_window, f"sample_{record.index:05d}", record.config_tag)
    (out / "activation.csv").write_text(profile.to_csv())
    (out / "activation.json").write_text(profile.model_dump_json(indent=2) + "\n")
    plot_activation_svg(profile, out / "activation.svg")
    logger.success("Activation profile written", profile.selectivity.model_dump())


def replay_args(run: Dict[str, Any]) -> List[str]:
    """Rebuild the argument vector of a recorded run"""
    command = cli.commands.get(run.get("command"))
    if command is None:
        raise InputError(f"run.json names an unknown command: {run.get('command')}")
    args = ["--seed", str(run.get("seed", 0))]
    if run.get("threads") is not None:
        args += ["--threads", str(run["threads"])]
    if run.get("settings_file"):
        args += ["--settings", run["settings_file"]]
    args.append(command.name)

    params = run.get("params", {})
    for param in command.params:
        if not isinstance(param, click.Option) or param.name not in params:
            continue
        value = params[param.name]
        if value is None:
            continue
        if param.is_flag and param.secondary_opts:
            args.append(param.opts[0] if value else param.secondary_opts[0])
        elif param.is_flag:
            if value:
                args.append(param.opts[0])
        elif param.multiple:
            for item in value:
                args += [param.opts[0], str(item)]
        else:
            args += [param.opts[0], str(value)]
    return args


@cli.command("rerun")
@click.argument("run_json", type=click.Path(dir_okay=False, path_type=Path))
def rerun_cmd(run_json):
    """Replay a recorded run.json"""
    try:
        run = json.loads(_existing(run_json, "run file").read_text())
    except json.JSONDecodeError as e:
        raise InputError(f"run file is not JSON: {e}", path=str(run_json))
    args = replay_args(run)
    logger.info("Replaying run", {"args": args})
    cli.main(args=args, prog_name="etes", standalone_mode=False)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI and map failures to exit codes"""
    try:
        cli.main(args=list(argv) if argv is not None else None, prog_name="etes", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("Aborted!", err=True)
        return 1
    except click.ClickException as e:
        e.show()
        return 1
    except DeblurError as e:
        logger.error(e.message, e.details)
        click.echo(f"error: {e.message}", err=True)
        return e.exit_code
    except ValidationError as e:
        logger.error("Invalid parameters", {"error_count": e.error_count()})
        click.echo(f"error: invalid parameters: {e}", err=True)
        return ConfigError.exit_code
    return 0


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
