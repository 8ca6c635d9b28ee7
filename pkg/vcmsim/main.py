from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import wraps
from pathlib import Path

import click
import numpy as np
import yaml

from vcmsim.config import (
    DEFAULT_COEFFS_DIR,
    DEFAULT_SIGMA,
    NoiseSelector,
    RunConfig,
    Settings,
    load_run_config,
    select_noise,
)
from vcmsim.device.calibration import CalibrationGrid, CalibrationReport
from vcmsim.device.dynamics import (
    MATCH_GAP_TARGET,
    PulseTrace,
    apply_pulse,
    match_set_reset,
    switching_curve,
    trajectory_gap,
)
from vcmsim.device.noise import NoiseSpec, realize_device
from vcmsim.device.pulses import PulseScheme, PulseSpec
from vcmsim.errors import VcmSimError
from vcmsim.repositories.checkpoints import CheckpointRepository, TileCheckpoint
from vcmsim.repositories.parameter_files import KeyValueRecord, ParameterFileRepository
from vcmsim.services.coefficients import CoefficientService, uncovered_amplitudes
from vcmsim.services.results import ResultsService, run_metadata
from vcmsim.training.mnist import load_mnist
from vcmsim.training.trainer import Backend, DeviceSetup, train

logger = logging.getLogger(__name__)


@dataclass
class Context:
    settings: Settings
    config: RunConfig
    params_record: KeyValueRecord | None = None
    coeffs_record: KeyValueRecord | None = None
    coeffs_report: CalibrationReport | None = None
    threads: int = 1

    @property
    def results(self) -> ResultsService:
        return ResultsService(self.settings.out)

    @property
    def coefficients(self) -> CoefficientService:
        return CoefficientService(DEFAULT_COEFFS_DIR)

    def load_params(self):
        params, self.params_record = ParameterFileRepository().load_params(self.config.params_file)
        return params

    def load_coeffs(self):
        """The configured coefficient file, or the calibrated default for the parameter file."""
        if self.config.coeffs_file is None:
            fitted = self.coefficients.default_for(self.load_params(), self.params_record)
        else:
            fitted = self.coefficients.load(self.config.coeffs_file)
        self.coeffs_record, self.coeffs_report = fitted.record, fitted.report
        return fitted.coeffs

    def check_pulses(self, *pulses: PulseSpec) -> list[float]:
        return uncovered_amplitudes(self.coeffs_report, pulses)

    def metadata(self, seed: int | None, **extra) -> dict:
        return run_metadata(
            self.params_record, self.coeffs_record, seed, self.config.model_dump(mode="json"), **extra
        )


def reports_errors(command):
    """Runtime failures exit with status 1; click usage errors keep status 2."""

    @wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except VcmSimError as e:
            logger.debug("command failed", exc_info=True)
            raise click.ClickException(str(e)) from e

    return wrapper


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False, path_type=Path), help="Run config YAML.")
@click.option("--params", "params_path", type=click.Path(path_type=Path), help="Physical parameter file.")
@click.option("--coeffs", "coeffs_path", type=click.Path(path_type=Path), help="Fit coefficient file.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), help="Output directory.")
@click.option("--threads", type=click.IntRange(min=1), default=1, show_default=True, help="Worker cap.")
@click.pass_context
@reports_errors
def cli(ctx, config_path, params_path, coeffs_path, out_dir, threads):
    """VCM memristor device, crossbar and training simulator."""
    settings = Settings.from_env()
    logging.basicConfig(
        level=getattr(logging, settings.log_level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if out_dir is not None:
        settings = Settings(settings.params, settings.coeffs, out_dir, settings.mnist, settings.log_level)
    config = load_run_config(config_path) if config_path else RunConfig()
    config = config.model_copy(
        update={
            "params_file": params_path or config.params_file,
            "coeffs_file": coeffs_path or config.coeffs_file,
        }
    ).resolved(settings)
    ctx.obj = Context(settings=settings, config=config, threads=threads)


def _amplitudes(values, span) -> list[float]:
    amplitudes = list(values)
    if span is not None:
        start, stop, count = span
        amplitudes.extend(np.linspace(start, stop, int(count)).tolist())
    if not amplitudes:
        raise click.UsageError("empty amplitude range: give --amplitude or --amplitude-range with count >= 1")
    if any(a == 0 for a in amplitudes):
        raise click.UsageError("pulse amplitude must be non-zero")
    return amplitudes


@cli.command()
@click.option("--amplitude", "-a", "amplitudes", type=float, multiple=True, help="Pulse amplitude in V.")
@click.option("--amplitude-range", type=(float, float, int), default=None, help="START STOP COUNT in V.")
@click.option("--duration", "-d", "durations", type=click.FloatRange(min=0, min_open=True), multiple=True)
@click.option("--n-pulses", type=click.IntRange(min=1), default=100, show_default=True)
@click.option("--trace", is_flag=True, help="Also write the substep trace of every curve.")
@click.pass_obj
@reports_errors
def sweep(ctx: Context, amplitudes, amplitude_range, durations, n_pulses, trace):
    """Switching curves for every (amplitude, duration) pair."""
    amplitudes = _amplitudes(amplitudes, amplitude_range)
    durations = list(durations) or [ctx.config.pulses.set.duration]
    params, coeffs = ctx.load_params(), ctx.load_coeffs()
    window = ctx.config.window
    ctx.check_pulses(*(PulseSpec(amplitude=a, duration=d) for a in amplitudes for d in durations))

    def run(amplitude: float, duration: float) -> list[Path]:
        pulse = PulseSpec(amplitude=amplitude, duration=duration)
        start = window.G_min if amplitude < 0 else window.G_max
        device = realize_device(params, coeffs, NoiseSpec(), window, 0, initial_conductance=start)
        stem = f"sweep_{amplitude:+.4f}V_{duration:.4g}s"
        meta = ctx.metadata(None)
        curve = switching_curve(coeffs, params, device, pulse, n_pulses, window.read_voltage)
        written = [ctx.results.save_switching_curve(f"{stem}.csv", curve, meta)]
        if trace:
            full = PulseTrace()
            state = device
            for k in range(1, n_pulses + 1):
                state, part = apply_pulse(
                    coeffs, params, state, pulse, record_trace=True, pulse_index=k, v_read=window.read_voltage
                )
                full.extend(part)
            written.append(ctx.results.save_trace(f"{stem}_trace.csv", full, meta))
        return written

    jobs = [(a, d) for a in amplitudes for d in durations]
    with ThreadPoolExecutor(max_workers=ctx.threads) as pool:
        for paths in pool.map(lambda job: run(*job), jobs):
            for path in paths:
                click.echo(f"wrote {path}")


@cli.command()
@click.option("--set-amplitude", type=float, default=None, help="Defaults to the configured SET pulse.")
@click.option("--duration", type=click.FloatRange(min=0, min_open=True), default=None)
@click.option("--reset-range", type=(float, float), default=(0.3, 2.0), show_default=True)
@click.option("--n-pulses", type=click.IntRange(min=1), default=100, show_default=True)
@click.option("--name", default="matched_pulses.yaml", show_default=True)
@click.pass_obj
@reports_errors
def match(ctx: Context, set_amplitude, duration, reset_range, n_pulses, name):
    """Find the RESET amplitude whose curve mirrors the SET curve."""
    params, coeffs = ctx.load_params(), ctx.load_coeffs()
    window = ctx.config.window
    base = ctx.config.pulses.set
    set_pulse = base.model_copy(
        update={
            "amplitude": base.amplitude if set_amplitude is None else set_amplitude,
            "duration": base.duration if duration is None else duration,
        }
    )
    if set_pulse.amplitude >= 0:
        raise click.UsageError("--set-amplitude must be negative")
    low = realize_device(params, coeffs, NoiseSpec(), window, 0, initial_conductance=window.G_min)
    high = realize_device(params, coeffs, NoiseSpec(), window, 0, initial_conductance=window.G_max)
    reset_pulse, score = match_set_reset(
        coeffs, params, set_pulse, reset_range, low, high, window.G_min, window.G_max, n_pulses,
        window.read_voltage,
    )  # fmt: skip
    rising = switching_curve(coeffs, params, low, set_pulse, n_pulses, window.read_voltage)
    falling = switching_curve(coeffs, params, high, reset_pulse, n_pulses, window.read_voltage)
    gap = trajectory_gap(rising.trajectory(), falling.trajectory(), window.G_min, window.G_max)
    ctx.check_pulses(set_pulse, reset_pulse)
    scheme = PulseScheme(set=set_pulse, reset=reset_pulse)
    fragment = {"pulses": scheme.model_dump(mode="json")}
    ctx.settings.out.mkdir(parents=True, exist_ok=True)
    path = ctx.settings.out / name
    header = f"# mismatch {score:.6g}, max gap {gap:.6g} of the conductance range\n"
    path.write_text(header + yaml.safe_dump(fragment, sort_keys=False), encoding="utf-8")
    click.echo(f"RESET {reset_pulse.amplitude:.4f} V, mismatch {score:.4g}, max gap {gap:.4g}")
    if gap > MATCH_GAP_TARGET:
        click.echo(f"warning: max gap exceeds {MATCH_GAP_TARGET:.0%} of the range; try a wider --reset-range or more --n-pulses", err=True)
    click.echo(f"wrote {path}")


@cli.command(name="calibrate")
@click.option("--name", default="calibrated", show_default=True, help="Output file stem.")
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--starts", type=click.IntRange(min=1), default=8, show_default=True)
@click.option("--n-voltage", type=click.IntRange(min=2), default=20, show_default=True)
@click.option("--n-concentration", type=click.IntRange(min=2), default=20, show_default=True)
@click.option("--install", is_flag=True, help="Write the default set for the parameter file instead.")
@click.option("--strict", is_flag=True, help="Exit 1 when the fit misses the error targets.")
@click.pass_obj
@reports_errors
def calibrate_command(ctx: Context, name, seed, starts, n_voltage, n_concentration, install, strict):
    """Fit the closed-form current model to the full model."""
    params = ctx.load_params()
    initial = None
    if ctx.config.coeffs_file is not None and Path(ctx.config.coeffs_file).exists():
        initial, _ = ParameterFileRepository().load_coeffs(ctx.config.coeffs_file)
    grid = CalibrationGrid(n_voltage=n_voltage, n_concentration=n_concentration)
    service = ctx.coefficients
    path = service.default_path(ctx.params_record) if install else ctx.settings.out / f"{name}.coeffs"
    fitted = service.install(
        params, ctx.params_record, path, grid, seed=seed, starts=starts, initial=initial, strict=strict
    )
    report = fitted.report
    click.echo(f"max rel error {report.max_rel_error:.4g}, mean {report.mean_rel_error:.4g}")
    for branch, result in report.branches.items():
        click.echo(
            f"{branch}: solvable for V_M in [{result.v_min:.3g}, {result.v_max:.3g}] V, "
            f"{result.excluded} grid points excluded"
        )
    if not report.meets_targets:
        click.echo("warning: fit misses the 5% max / 1% mean error targets", err=True)
    click.echo(f"wrote {path}")


@cli.command(name="train")
@click.option("--backend", type=click.Choice([b.value for b in Backend]), default=None)
@click.option("--noise", "selector", type=click.Choice([s.value for s in NoiseSelector]), default=None)
@click.option("--sigma", type=click.FloatRange(min=0), default=DEFAULT_SIGMA, show_default=True)
@click.option("--seed", type=click.IntRange(min=0), default=None)
@click.option("--epochs", type=click.IntRange(min=1), default=None)
@click.option("--train-limit", type=click.IntRange(min=1), default=None)
@click.option("--test-limit", type=click.IntRange(min=1), default=None)
@click.option("--mnist", "mnist_dir", type=click.Path(file_okay=False, path_type=Path), default=None)
@click.option("--checkpoint", is_flag=True, help="Save every trained tile as .npz.")
@click.pass_obj
@reports_errors
def train_command(
    ctx: Context, backend, selector, sigma, seed, epochs, train_limit, test_limit, mnist_dir, checkpoint
):
    """Train the MNIST network and write its per-epoch results."""
    config = ctx.config if seed is None else ctx.config.with_seed(seed)
    overrides = {"backend": backend, "epochs": epochs, "train_limit": train_limit, "test_limit": test_limit}
    train_config = config.train.model_copy(update={k: v for k, v in overrides.items() if v is not None})
    train_config = type(train_config).model_validate(train_config.model_dump())
    noise = config.noise
    if selector is not None:
        noise = select_noise(selector, config.window, sigma, seed=train_config.seed)
    config = config.model_copy(update={"train": train_config, "noise": noise})
    ctx.config = config

    directory = mnist_dir or config.mnist_dir
    if directory is None:
        raise click.UsageError("no MNIST directory: pass --mnist or set VCMSIM_MNIST")
    try:
        data = load_mnist(directory)
    except FileNotFoundError as e:
        raise click.ClickException(str(e)) from e

    # every run records both input files, whichever backend consumes them
    params, coeffs = ctx.load_params(), ctx.load_coeffs()
    setup = None
    if train_config.backend is Backend.ANALOG:
        ctx.check_pulses(config.pulses.set, config.pulses.reset)
        setup = DeviceSetup(params, coeffs, noise, config.window, config.pulses)
    result, network = train(train_config, data, setup)

    label = selector or "config"
    stem = f"train_{train_config.backend.value}_{label}_seed{train_config.seed}"
    meta = ctx.metadata(train_config.seed, noise_selector=selector, sigma=sigma if selector else None)
    path = ctx.results.save_run(f"{stem}.csv", result, meta)
    click.echo(f"final accuracy {result.final_accuracy:.4f}")
    click.echo(f"wrote {path}")
    if checkpoint and setup is not None:
        repo = CheckpointRepository()
        for k, tile in enumerate(network.stores):
            saved = repo.save(TileCheckpoint.from_tile(tile), ctx.settings.out / f"{stem}_layer{k}.npz", meta)
            click.echo(f"wrote {saved}")


def main():
    cli()


if __name__ == "__main__":
    main()
