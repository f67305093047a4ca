"""Hyperparameter sweeps: one training run per value with shared seeds"""

from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from shared.exceptions import ValidationError
from shared.imaging.synthdata import Dataset
from shared.models.configs import TrainConfig
from shared.models.enums import AblationAxis
from shared.utils.arrays import write_dict_csv
from shared.utils.logging import get_logger
from services.evaluation.report import evaluate, evaluation_split
from services.training.trainer import train

logger = get_logger(__name__)

# config key (by alias) swept by each axis
AXIS_KEYS = {
    AblationAxis.N: "N",
    AblationAxis.GAMMA: "gamma",
    AblationAxis.LAMBDA: "lambda",
    AblationAxis.WITHOUT_A: "physics",
}


def config_for(base: TrainConfig, axis: AblationAxis, value: Any) -> TrainConfig:
    """Base config with the axis set to value; without_A=True drops the physics term"""
    axis = AblationAxis(axis)
    if axis == AblationAxis.WITHOUT_A:
        value = not _as_flag(value)
    document = base.model_dump(by_alias=True)
    document[AXIS_KEYS[axis]] = value
    return TrainConfig.model_validate(document)


def _as_flag(value: Any) -> bool:
    if isinstance(value, str):
        lowered = value.strip().lower()
        if lowered in ("1", "true", "yes"):
            return True
        if lowered in ("0", "false", "no"):
            return False
        raise ValidationError(f"cannot read '{value}' as a boolean")
    return bool(value)


def run_ablation(
    dataset: Dataset,
    base_cfg: TrainConfig,
    axis: AblationAxis,
    values: Sequence[Any],
    run_dir: Optional[Union[str, Path]] = None,
) -> List[Dict[str, Any]]:
    """Train and evaluate once per value; rows are also written to ablation.csv under run_dir"""
    axis = AblationAxis(axis)
    if not values:
        raise ValidationError("ablation needs at least one value")
    samples, fm = evaluation_split(dataset)
    rows = []
    for value in values:
        cfg = config_for(base_cfg, axis, value)
        hphi, _, history = train(dataset, cfg)
        report = evaluate(hphi, samples, fm, cfg)
        row = {
            "axis": axis.value,
            "value": value,
            "psnr_mean": report.aggregates["psnr"].mean,
            "psnr_std": report.aggregates["psnr"].std,
            "ssim_mean": report.aggregates["ssim"].mean,
            "ssim_std": report.aggregates["ssim"].std,
            "l1_residual_mean": report.aggregates["l1_residual"].mean,
            "sliced_w1": report.sliced_w1,
            "epochs_run": len(history.records),
        }
        logger.info("ablation point", axis=axis.value, value=value, psnr=row["psnr_mean"])
        rows.append(row)
    if run_dir is not None:
        root = Path(run_dir)
        root.mkdir(parents=True, exist_ok=True)
        write_dict_csv(root / "ablation.csv", rows)
    return rows
