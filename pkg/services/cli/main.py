"""The `kidot` command-line surface.

Every subcommand reads an optional JSON run config, applies flag overrides and
writes its outputs under the run directory (KIDOT_RUN_DIR by default):

    data/            dataset written by gen-data (or by train on first use)
    checkpoint.kdt   latest training checkpoint
    history.csv      one row per completed epoch
    recon/           endpoint images from reconstruct
    metrics.csv      per-sample metrics from eval, plus summary.json
    ablation.csv     one row per swept value

Exit codes: 0 success, 1 usage or validation error, 2 numerical failure.
"""

import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import click
import numpy as np
import pydantic

from config import settings
from shared.autodiff.gradcheck import check_grad
from shared.exceptions import KidotError, NumericalError, ValidationError
from shared.imaging.operators import FourierModel, adjoint_test
from shared.imaging.synthdata import (
    Dataset,
    dataset_from_config,
    forward_models,
    load_dataset,
    make_mask,
    make_phantom,
    save_dataset,
    simulate_measurement,
    stack_images,
    stack_measurements,
)
from shared.models.configs import CriticArch, NoiseConfig, RegularizerArch, RunConfig, TrainConfig
from shared.models.enums import AblationAxis, OperatorKind
from shared.networks.convnets import init_params
from shared.networks.lipschitz import clip_weights
from shared.optimal_transport.straightline import straightline_check
from shared.transport.export import export_path
from shared.transport.flow import reconstruct_batch, transport_batch, transport_path
from shared.utils.arrays import write_pgm16, write_raw
from shared.utils.logging import bind_run_context, clear_run_context, get_logger, setup_logging
from shared.utils.seeding import derive_rng
from services.evaluation.ablation import run_ablation
from services.evaluation.report import (
    evaluate,
    evaluation_split,
    tikhonov_report,
    write_metrics_csv,
    write_report_json,
    zero_filled_report,
)
from services.evaluation.statistics import bootstrap_metric, paired_ttest
from services.training.checkpoint import CHECKPOINT_FILE, load_checkpoint
from services.training.losses import generator_objective
from services.training.trainer import train

logger = get_logger(__name__)

DATA_DIR = "data"
ADJOINT_TOLERANCE = 1e-10
STRAIGHT_PATH_TOLERANCE = 1e-3
GRAD_CHECK_NOISE = 0.01


# ----------------------------------------------------------------- config

def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(document: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """Apply dotted `section.key=value` assignments; values are parsed as JSON when possible"""
    for item in overrides:
        if "=" not in item:
            raise ValidationError(f"override '{item}' is not of the form key=value")
        dotted, raw = item.split("=", 1)
        keys = dotted.strip().split(".")
        target = document
        for key in keys[:-1]:
            target = target.setdefault(key, {})
            if not isinstance(target, dict):
                raise ValidationError(f"override '{dotted}' descends into a non-section key")
        target[keys[-1]] = _parse_value(raw)
    return document


def load_run_config(
    path: Optional[str],
    overrides: Sequence[str] = (),
    seed: Optional[int] = None,
    epochs: Optional[int] = None,
) -> RunConfig:
    """Config file, then --set overrides, then the dedicated --seed/--epochs flags"""
    document: Dict[str, Any] = {}
    if path is not None:
        try:
            document = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ValidationError(f"cannot read config {path}: {e}")
        if not isinstance(document, dict):
            raise ValidationError(f"config {path} must hold a JSON object")
    document = apply_overrides(document, overrides)
    if seed is not None:
        document.setdefault("data", {})["seed"] = seed
        document.setdefault("train", {})["seed"] = seed
    if epochs is not None:
        document.setdefault("train", {})["epochs"] = epochs
    try:
        cfg = RunConfig.model_validate(document)
    except pydantic.ValidationError as e:
        raise ValidationError(
            "invalid run configuration",
            field_errors=[{"loc": ".".join(str(p) for p in err["loc"]), "msg": err["msg"]} for err in e.errors()],
        )
    bind_run_context(seed=cfg.train.seed)
    return cfg


def _run_dir(path: Optional[str]) -> Path:
    root = Path(path) if path is not None else settings.run.run_dir
    root.mkdir(parents=True, exist_ok=True)
    bind_run_context(run_dir=str(root))
    return root


def _dataset(cfg: RunConfig, root: Path) -> Dataset:
    """The run's dataset: loaded when present, generated and saved otherwise"""
    directory = root / DATA_DIR
    if (directory / "meta.json").exists():
        return load_dataset(directory)
    dataset = dataset_from_config(cfg.data)
    save_dataset(dataset, directory)
    return dataset


def _checkpoint(root: Path, cfg: TrainConfig):
    return load_checkpoint(root / CHECKPOINT_FILE, expected=cfg)


def config_options(func):
    """--config, --set and --seed"""
    func = click.option("--seed", type=int, default=None, help="Seed for data and training.")(func)
    func = click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
                        help="Override a config key, e.g. train.lambda=0.5.")(func)
    func = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
                        help="JSON run config.")(func)
    return func


def common_options(func):
    """config_options plus --run-dir, shared by the run-level subcommands"""
    func = click.option("--run-dir", type=click.Path(file_okay=False), default=None, help="Output directory.")(func)
    return config_options(func)


# ----------------------------------------------------------------- commands

@click.group()
@click.option("--log-level", default=None, help="Overrides LOG_LEVEL.")
@click.option("--log-format", type=click.Choice(["console", "json"]), default=None, help="Overrides LOG_FORMAT.")
@click.pass_context
def kidot(ctx: click.Context, log_level: Optional[str], log_format: Optional[str]) -> None:
    """Knowledge-informed dynamic optimal transport reconstruction."""
    setup_logging(log_level, log_format)
    bind_run_context(command=ctx.invoked_subcommand)


@kidot.command("gen-data")
@common_options
def gen_data(config_path, overrides, run_dir, seed):
    """Generate the synthetic dataset into RUN_DIR/data."""
    cfg = load_run_config(config_path, overrides, seed)
    root = _run_dir(run_dir)
    dataset = dataset_from_config(cfg.data)
    save_dataset(dataset, root / DATA_DIR)
    click.echo(
        f"dataset written to {root / DATA_DIR}: {len(dataset.unpaired_measurements)} unpaired, "
        f"{len(dataset.clean_images)} clean, {len(dataset.paired)} paired, {len(dataset.validation)} validation"
    )


@kidot.command("train")
@common_options
@click.option("--epochs", type=int, default=None, help="Overrides train.epochs.")
@click.option("--resume", is_flag=True, help="Continue from RUN_DIR/checkpoint.kdt.")
def train_command(config_path, overrides, run_dir, seed, epochs, resume):
    """Train the regularizer field and the critic."""
    cfg = load_run_config(config_path, overrides, seed, epochs)
    root = _run_dir(run_dir)
    dataset = _dataset(cfg, root)
    (root / "config.json").write_text(cfg.model_dump_json(by_alias=True, indent=2), encoding="utf-8")
    state = _checkpoint(root, cfg.train) if resume else None
    _, _, history = train(dataset, cfg.train, run_dir=root, resume=state)
    best = history.best_psnr()
    click.echo(
        f"trained {len(history.records)} epochs"
        + (" (early stop)" if history.stopped_early else "")
        + ("" if np.isnan(best) else f", best validation PSNR {best:.2f} dB")
    )


@kidot.command("reconstruct")
@common_options
@click.option("--export-path", "export_index", type=int, default=None,
              help="Also write every transport state of this sample.")
def reconstruct_command(config_path, overrides, run_dir, seed, export_index):
    """Write endpoint images for the evaluation split."""
    cfg = load_run_config(config_path, overrides, seed)
    root = _run_dir(run_dir)
    dataset = _dataset(cfg, root)
    state = _checkpoint(root, cfg.train)
    samples, fm = evaluation_split(dataset)
    tc = cfg.train
    recons = reconstruct_batch(
        stack_measurements([y for y, _ in samples]), fm, state.hphi, tc.n_steps, tc.regularizer.nonlinearity, tc.physics
    )
    out = root / "recon"
    out.mkdir(parents=True, exist_ok=True)
    scaling = []
    for i, recon in enumerate(recons):
        write_raw(out / f"recon_{i:05d}.bin", recon)
        scaling.append((i,) + write_pgm16(out / f"recon_{i:05d}.pgm", recon))
    (out / "pgm_scaling.json").write_text(
        json.dumps([{"sample": i, "min": lo, "max": hi} for i, lo, hi in scaling], indent=2), encoding="utf-8"
    )
    if export_index is not None:
        if not 0 <= export_index < len(samples):
            raise ValidationError(f"--export-path index {export_index} outside 0..{len(samples) - 1}")
        path = transport_path(
            samples[export_index][0], fm, state.hphi, tc.n_steps, tc.regularizer.nonlinearity, tc.physics
        )
        export_path(path, out / f"path_{export_index:05d}")
    click.echo(f"{len(recons)} reconstructions written to {out}")


@kidot.command("eval")
@common_options
@click.option("--n-boot", type=int, default=1000, show_default=True, help="Bootstrap replicates.")
@click.option("--baselines/--no-baselines", default=True, show_default=True,
              help="Also score zero-filled and tuned Tikhonov reconstructions.")
def eval_command(config_path, overrides, run_dir, seed, n_boot, baselines):
    """Score the trained model (and baselines) on the evaluation split."""
    cfg = load_run_config(config_path, overrides, seed)
    root = _run_dir(run_dir)
    dataset = _dataset(cfg, root)
    state = _checkpoint(root, cfg.train)
    samples, fm = evaluation_split(dataset)
    reference = stack_images(dataset.clean_images)[:, 0] if dataset.clean_images else None

    reports = {"kidot": evaluate(state.hphi, samples, fm, cfg.train, reference)}
    extra: Dict[str, Any] = {}
    if baselines:
        reports["zero_filled"] = zero_filled_report(samples, fm, reference)
        tuning, tuning_fm = (dataset.paired, dataset.fm_train) if dataset.paired else (samples, fm)
        reports["tikhonov"], lam = tikhonov_report(samples, fm, tuning, reference, tuning_fm=tuning_fm)
        extra["tikhonov_lambda"] = lam
        ours = [r.psnr for r in reports["kidot"].records]
        for name in ("zero_filled", "tikhonov"):
            if len(samples) >= 2:
                test = paired_ttest(ours, [r.psnr for r in reports[name].records])
                reports["kidot"].p_values[f"psnr_vs_{name}"] = test.p_value
    boot = bootstrap_metric([r.psnr for r in reports["kidot"].records], np.mean, n_boot=n_boot, seed=cfg.train.seed)
    extra["psnr_bootstrap"] = boot.model_dump()

    write_metrics_csv(reports["kidot"], root / "metrics.csv")
    write_report_json(reports, root / "summary.json", extra)
    for name, report in reports.items():
        click.echo(
            f"{name:12s} PSNR {report.aggregates['psnr'].mean:7.2f} ± {report.aggregates['psnr'].std:.2f} dB"
            f"   SSIM {report.aggregates['ssim'].mean:.4f}"
        )


@kidot.command("check-adjoint")
@common_options
@click.option("--operator", type=click.Choice([k.value for k in OperatorKind]), default=None,
              help="Overrides data.operator.")
@click.option("--n", "side", type=int, default=None, help="Overrides data.n.")
@click.option("--trials", type=int, default=100, show_default=True)
def check_adjoint(config_path, overrides, run_dir, seed, operator, side, trials):
    """Test <Ax, y> = <x, A*y> on random vectors."""
    extra = list(overrides)
    if operator is not None:
        extra.append(f"data.operator={operator}")
    if side is not None:
        extra.append(f"data.n={side}")
    cfg = load_run_config(config_path, extra, seed)
    fm, _ = forward_models(cfg.data)
    worst = adjoint_test(fm, trials=trials, seed=cfg.data.seed)
    click.echo(f"{fm.kind.value} n={fm.n}: max relative discrepancy {worst:.3e}")
    if worst >= ADJOINT_TOLERANCE:
        raise NumericalError(f"adjoint discrepancy {worst:.3e} exceeds {ADJOINT_TOLERANCE:.0e}")


@kidot.command("check-grad")
@config_options
@click.option("--n", "side", type=int, default=8, show_default=True, help="Image side.")
@click.option("--steps", type=int, default=3, show_default=True, help="Transport steps N.")
@click.option("--tol", type=float, default=1e-4, show_default=True)
def check_grad_command(config_path, overrides, seed, side, steps, tol):
    """Audit the generator-loss gradient against central differences."""
    cfg = load_run_config(config_path, overrides, seed)
    report = generator_grad_report(side, steps, cfg.train.seed, tol, lam=cfg.train.lambda_, gamma=cfg.train.gamma)
    click.echo(
        f"generator loss gradient: max relative error {report.max_abs_rel_err:.3e} "
        f"at coordinate {report.worst_index} ({report.analytic.size} parameters, {report.reseeds} reseeds)"
    )
    if not report.passed:
        raise NumericalError(f"gradient check failed: {report.max_abs_rel_err:.3e} > {tol:.0e}")


def generator_grad_report(
    side: int,
    steps: int,
    seed: int,
    tol: float = 1e-4,
    lam: float = 1.0,
    gamma: float = 1e4,
):
    """Gradient check of loss_kidot + gamma·loss_sup on a tiny noisy masked-Fourier problem.

    The point is reseeded while any absolute-value argument of the loss (step
    residuals of the unpaired paths, endpoint errors of the paired path) lies
    within the kink margin.
    """
    cfg = TrainConfig(
        N=steps,
        lambda_=lam,
        gamma=gamma,
        seed=seed,
        regularizer=RegularizerArch(channels=[1, 3, 1]),
        critic=CriticArch(channels=[1, 3]),
    )
    fm = FourierModel(make_mask(side, 2.0, 0.25, seed))
    noise = NoiseConfig(gaussian_sigma=GRAD_CHECK_NOISE)
    images = [make_phantom(kind, side, seed + i) for i, kind in enumerate(["ellipses", "blocks", "ellipses"])]
    ys = [simulate_measurement(x, fm, noise, seed + i) for i, x in enumerate(images)]
    batch_p = stack_measurements(ys[:2])
    batch_q = stack_images(images[1:])[:, 0]
    paired = (stack_measurements(ys[2:]), stack_images(images[2:])[:, 0])
    act = cfg.regularizer.nonlinearity

    base = init_params(cfg.regularizer, seed)

    def point(attempt: int):
        # the last layer starts at zero; move off it so every layer carries gradient
        rng = derive_rng(seed, "check_grad", attempt)
        return base.with_values(base.values + 0.1 * rng.standard_normal(len(base)))

    def residuals(hphi):
        states, _ = transport_batch(batch_p, fm, hphi, cfg.n_steps, act, cfg.physics)
        # the initial residual does not depend on the parameters
        steps_r = [fm.forward_real(s.data) - batch_p for s in states[1:-1]]
        paired_states, _ = transport_batch(paired[0], fm, hphi, cfg.n_steps, act, cfg.physics)
        return np.concatenate([r.ravel() for r in steps_r] + [(paired_states[-1].data - paired[1]).ravel()])

    critic = clip_weights(init_params(cfg.critic, seed), cfg.clip_c)

    def loss(bound):
        return generator_objective(bound, critic, batch_p, batch_q, fm, cfg, paired)

    return check_grad(loss, point(0), tol=tol, residuals=residuals, reseed=point)


@kidot.command("check-theorem31")
@config_options
@click.option("--dim", type=int, default=2, show_default=True, help="Dimension of the endpoints.")
@click.option("--M", "speed_ratio", type=float, default=2.0, show_default=True,
              help="Speed bound as a multiple of ||x - y||.")
@click.option("--K", "knots", type=int, default=32, show_default=True, help="Number of path knots.")
@click.option("--iters", type=int, default=2000, show_default=True)
def check_straight_path(config_path, overrides, seed, dim, speed_ratio, knots, iters):
    """Check that the optimal speed-bounded path is the straight segment."""
    if dim < 1:
        raise ValidationError(f"--dim must be >= 1, got {dim}")
    seed = load_run_config(config_path, overrides, seed).train.seed
    rng = derive_rng(seed, "straight_path")
    y, x = rng.standard_normal(dim), rng.standard_normal(dim)
    distance = float(np.linalg.norm(x - y))
    solution = straightline_check(y, x, speed_ratio * distance, n_knots=knots, iters=iters, seed=seed)
    click.echo(
        f"dim={dim} |x-y|={distance:.6f} M={speed_ratio * distance:.6f} K={knots}: "
        f"deviation {solution.deviation:.3e}, objective {solution.objective:.6f}"
    )
    if solution.deviation >= STRAIGHT_PATH_TOLERANCE:
        raise NumericalError(f"path deviates {solution.deviation:.3e} from the segment")


def parse_ablation_values(axis: AblationAxis, raw: str) -> List[Any]:
    """Comma-separated values typed for the axis"""
    items = [v.strip() for v in raw.split(",") if v.strip()]
    if not items:
        raise ValidationError("--values needs at least one value")
    try:
        if axis == AblationAxis.N:
            return [int(v) for v in items]
        if axis == AblationAxis.WITHOUT_A:
            return items
        return [float(v) for v in items]
    except ValueError as e:
        raise ValidationError(f"cannot parse ablation values '{raw}' for axis {axis.value}: {e}")


@kidot.command("ablate")
@common_options
@click.option("--epochs", type=int, default=None, help="Overrides train.epochs.")
@click.option("--axis", type=click.Choice([a.value for a in AblationAxis]), required=True)
@click.option("--values", "raw_values", required=True, help="Comma-separated, e.g. 6,12 or true,false.")
def ablate(config_path, overrides, run_dir, seed, epochs, axis, raw_values):
    """Train and evaluate one model per value of a hyperparameter."""
    cfg = load_run_config(config_path, overrides, seed, epochs)
    root = _run_dir(run_dir)
    axis = AblationAxis(axis)
    rows = run_ablation(_dataset(cfg, root), cfg.train, axis, parse_ablation_values(axis, raw_values), run_dir=root)
    for row in rows:
        click.echo(f"{row['axis']}={row['value']}: PSNR {row['psnr_mean']:.2f} dB, SSIM {row['ssim_mean']:.4f}")


# ----------------------------------------------------------------- entry points

def cli(argv: Optional[Sequence[str]] = None) -> int:
    """Run the command line and map failures to exit codes"""
    try:
        kidot.main(args=list(argv) if argv is not None else None, prog_name="kidot", standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.ClickException as e:
        e.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except KidotError as e:
        logger.error("command failed", error=e.message, kind=type(e).__name__, details=e.details)
        click.echo(f"error: {e.message}", err=True)
        for item in getattr(e, "field_errors", []):
            click.echo(f"  {item['loc']}: {item['msg']}", err=True)
        return e.exit_code
    finally:
        clear_run_context()
    return 0


def run() -> None:
    sys.exit(cli())
