"""Result records written to CSV/JSON by the training and evaluation services"""

import math
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, field_validator

from shared.models.configs import NoiseConfig
from shared.models.enums import OperatorKind, PhantomKind


class MetricRecord(BaseModel):
    """Per-image reconstruction quality"""
    sample_id: str
    psnr: float
    ssim: float = Field(ge=-1.0, le=1.0)
    l1_residual: float = Field(ge=0.0)

    @field_validator("psnr", "ssim", "l1_residual")
    @classmethod
    def finite(cls, v):
        if not math.isfinite(v):
            raise ValueError("metric values must be finite")
        return v


class MetricSummary(BaseModel):
    mean: float
    std: float


class EvalReport(BaseModel):
    """Per-sample records plus aggregates recomputable from them"""
    records: List[MetricRecord]
    aggregates: Dict[str, MetricSummary]
    sliced_w1: Optional[float] = None
    p_values: Dict[str, float] = Field(default_factory=dict)


class EpochRecord(BaseModel):
    epoch: int = Field(ge=0)
    generator_loss: float
    critic_loss: float
    path_cost: float
    supervised: float
    val_psnr: Optional[float] = None
    val_ssim: Optional[float] = None
    lipschitz: float
    lr_transport: float
    lr_critic: float

    @field_validator(
        "generator_loss", "critic_loss", "path_cost", "supervised",
        "val_psnr", "val_ssim", "lipschitz",
    )
    @classmethod
    def finite(cls, v):
        if v is not None and not math.isfinite(v):
            raise ValueError("history values must be finite")
        return v


class TrainHistory(BaseModel):
    """One record per completed epoch"""
    records: List[EpochRecord] = Field(default_factory=list)
    stopped_early: bool = False

    def best_psnr(self) -> float:
        return max((r.val_psnr for r in self.records if r.val_psnr is not None), default=float("nan"))


class TTestResult(BaseModel):
    statistic: float
    p_value: float = Field(ge=0.0, le=1.0)
    dof: float
    degenerate: bool = False


class BootstrapResult(BaseModel):
    """Replicate mean and spread plus the metric on the full sample"""
    estimate: float
    mean: float
    std: float
    ci_low: float
    ci_high: float
    n_boot: int


class DatasetMeta(BaseModel):
    """Everything needed to regenerate a dataset bit for bit.

    Sampling masks are stored as hex-encoded packed bits (row-major), so the
    meta document alone is enough to rebuild both forward models.
    """
    format_version: int = 1
    operator: OperatorKind
    n: int = Field(ge=2)
    phantom: PhantomKind = PhantomKind.ELLIPSES
    seed: int
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    n_unpaired: int = Field(ge=0)
    n_clean: int = Field(ge=0)
    n_paired: int = Field(ge=0)
    n_val: int = Field(default=0, ge=0)
    train_mask_bits: Optional[str] = None
    test_mask_bits: Optional[str] = None
    acceleration: float = 1.0
    n_angles: Optional[int] = None
    n_detectors: Optional[int] = None
