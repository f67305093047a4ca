"""Per-sample reconstruction metrics and their aggregates"""

import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from shared.autodiff.params import ParamVector
from shared.exceptions import ValidationError
from shared.imaging.metrics import l1_residual, psnr, ssim
from shared.imaging.operators import ForwardModel, Image, Measurement
from shared.imaging.synthdata import Dataset, stack_images, stack_measurements
from shared.models.configs import TrainConfig
from shared.models.enums import RegularizerKind
from shared.models.records import EvalReport, MetricRecord, MetricSummary
from shared.optimal_transport.distances import PointCloud, sliced_w1
from shared.transport.baseline import baseline_gradient_flow, tune_tikhonov
from shared.transport.flow import reconstruct_batch
from shared.utils.arrays import write_csv
from shared.utils.logging import get_logger

logger = get_logger(__name__)

SSIM_WINDOW = 11

METRIC_FIELDS = ["sample_id", "psnr", "ssim", "l1_residual"]
Pair = Tuple[Measurement, Image]


def evaluation_split(dataset: Dataset) -> Tuple[List[Pair], ForwardModel]:
    """Validation pairs under the prospective model, else the paired split"""
    if dataset.validation:
        return dataset.validation, dataset.fm_test
    if dataset.paired:
        return dataset.paired, dataset.fm_train
    raise ValidationError("dataset has neither a validation nor a paired split to evaluate on")


def _ssim_window(n: int) -> int:
    """Largest odd SSIM window that fits an n×n image, at most 11"""
    if n < 3:
        raise ValidationError(f"image side {n} is too small for SSIM (needs at least 3)")
    window = min(SSIM_WINDOW, n if n % 2 else n - 1)
    if window < SSIM_WINDOW:
        logger.warning("ssim window shrunk", image_side=n, window=window, default=SSIM_WINDOW)
    return window


def score(recons: np.ndarray, samples: Sequence[Pair], fm: ForwardModel) -> List[MetricRecord]:
    """MetricRecords for a (B, n, n) stack of reconstructions of the given pairs"""
    if recons.shape[0] != len(samples):
        raise ValidationError(f"{recons.shape[0]} reconstructions for {len(samples)} samples")
    predicted = fm.forward_real(recons)
    window = _ssim_window(recons.shape[-1])
    records = []
    for i, ((y, x), recon) in enumerate(zip(samples, recons)):
        image = Image(recon)
        records.append(
            MetricRecord(
                sample_id=f"{i:05d}",
                psnr=psnr(image, x),
                ssim=ssim(image, x, window=window),
                l1_residual=l1_residual(y, predicted[i]),
            )
        )
    return records


def aggregate(records: Sequence[MetricRecord]) -> Dict[str, MetricSummary]:
    summary = {}
    for key in METRIC_FIELDS[1:]:
        values = np.array([getattr(r, key) for r in records])
        summary[key] = MetricSummary(mean=float(values.mean()), std=float(values.std()))
    return summary


def build_report(
    recons: np.ndarray,
    samples: Sequence[Pair],
    fm: ForwardModel,
    reference: Optional[np.ndarray] = None,
    seed: int = 0,
) -> EvalReport:
    records = score(recons, samples, fm)
    if reference is None:
        reference = stack_images([x for _, x in samples])[:, 0]
    distance = sliced_w1(PointCloud.from_images(recons), PointCloud.from_images(reference), seed=seed)
    return EvalReport(records=records, aggregates=aggregate(records), sliced_w1=distance)


def evaluate(
    hphi: ParamVector,
    samples: Sequence[Pair],
    fm: ForwardModel,
    cfg: TrainConfig,
    reference: Optional[np.ndarray] = None,
) -> EvalReport:
    """Reconstruct every sample along the transport path and score the endpoints"""
    if not samples:
        raise ValidationError("evaluate needs at least one sample")
    y_batch = stack_measurements([y for y, _ in samples])
    recons = reconstruct_batch(y_batch, fm, hphi, cfg.n_steps, cfg.regularizer.nonlinearity, cfg.physics)
    report = build_report(recons, samples, fm, reference, seed=cfg.seed)
    logger.info(
        "evaluated reconstructions",
        samples=len(samples),
        psnr=report.aggregates["psnr"].mean,
        ssim=report.aggregates["ssim"].mean,
        sliced_w1=report.sliced_w1,
    )
    return report


def zero_filled_report(samples: Sequence[Pair], fm: ForwardModel, reference: Optional[np.ndarray] = None) -> EvalReport:
    recons = fm.adjoint_real(stack_measurements([y for y, _ in samples]))
    return build_report(recons, samples, fm, reference)


def tikhonov_report(
    samples: Sequence[Pair],
    fm: ForwardModel,
    tuning: Sequence[Pair],
    reference: Optional[np.ndarray] = None,
    steps: int = 50,
    step_size: float = 0.25,
    tuning_fm: Optional[ForwardModel] = None,
) -> Tuple[EvalReport, float]:
    """Baseline with the weight tuned on `tuning` (measured through tuning_fm, default fm)"""
    lam, _ = tune_tikhonov(tuning, tuning_fm or fm, steps=steps, step_size=step_size)
    recons = np.stack(
        [baseline_gradient_flow(y, fm, RegularizerKind.TIKHONOV, lam, steps, step_size).data for y, _ in samples]
    )
    return build_report(recons, samples, fm, reference), lam


def write_metrics_csv(report: EvalReport, path: Union[str, Path]) -> None:
    write_csv(path, METRIC_FIELDS, ([r.sample_id, r.psnr, r.ssim, r.l1_residual] for r in report.records))


def write_report_json(reports: Dict[str, EvalReport], path: Union[str, Path], extra: Optional[Dict] = None) -> None:
    """Aggregates of several methods (and any extra fields) as one JSON summary"""
    summary = {
        name: {
            "aggregates": {k: v.model_dump() for k, v in report.aggregates.items()},
            "sliced_w1": report.sliced_w1,
            "p_values": report.p_values,
        }
        for name, report in reports.items()
    }
    if extra:
        summary.update(extra)
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8")
