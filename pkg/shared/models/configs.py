"""Validated configuration models.

Run configs are JSON documents; keys mirror the field aliases below
("lambda", "N") and unknown keys are rejected.
"""

import math
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from shared.models.enums import Activation, FlipGranularity, OperatorKind, PhantomKind


class NoiseConfig(BaseModel):
    """Measurement noise: per-component Gaussian plus optional photon counting"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    gaussian_sigma: float = Field(default=0.0, ge=0.0)
    poisson_photon_flux: Optional[float] = Field(default=None, gt=0.0)

    @property
    def noiseless(self) -> bool:
        return self.gaussian_sigma == 0.0 and self.poisson_photon_flux is None


class RadonGeometry(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    n_angles: int = Field(default=24, ge=1)
    n_detectors: Optional[int] = Field(default=None, ge=2)

    def detectors_for(self, n: int) -> int:
        return self.n_detectors if self.n_detectors is not None else int(math.ceil(math.sqrt(2.0) * n))


class RegularizerArch(BaseModel):
    """Convolution stack for the learned regularizer field H_phi"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    channels: List[int] = Field(default_factory=lambda: [1, 16, 16, 1], min_length=2)
    kernel: int = Field(default=3, ge=1)
    nonlinearity: Activation = Activation.TANH

    @field_validator("channels")
    @classmethod
    def image_in_image_out(cls, v):
        if v[0] != 1 or v[-1] != 1:
            raise ValueError("first and last channel widths must be 1")
        if any(c < 1 for c in v):
            raise ValueError("channel widths must be positive")
        return v

    @field_validator("kernel")
    @classmethod
    def odd_kernel(cls, v):
        if v % 2 != 1:
            raise ValueError("kernel size must be odd")
        return v


class CriticArch(BaseModel):
    """Convolution stack, global average pooling and an affine scalar head"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    channels: List[int] = Field(default_factory=lambda: [1, 16, 16], min_length=1)
    kernel: int = Field(default=3, ge=1)
    nonlinearity: Activation = Activation.TANH

    @field_validator("channels")
    @classmethod
    def image_in(cls, v):
        if v[0] != 1:
            raise ValueError("first channel width must be 1")
        if any(c < 1 for c in v):
            raise ValueError("channel widths must be positive")
        return v

    @field_validator("kernel")
    @classmethod
    def odd_kernel(cls, v):
        if v % 2 != 1:
            raise ValueError("kernel size must be odd")
        return v


class DataConfig(BaseModel):
    """Synthetic dataset recipe"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    n: int = Field(default=16, ge=8)
    phantom: PhantomKind = PhantomKind.ELLIPSES
    operator: OperatorKind = OperatorKind.FOURIER
    acceleration: float = Field(default=4.0, ge=1.0)
    center_fraction: float = Field(default=0.125, ge=0.0, lt=1.0)
    flip_fraction: float = Field(default=0.03, ge=0.0, le=1.0)
    flip_granularity: FlipGranularity = FlipGranularity.ROWS
    radon: RadonGeometry = Field(default_factory=RadonGeometry)
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    n_unpaired: int = Field(default=200, ge=0)
    n_clean: int = Field(default=200, ge=0)
    n_paired: int = Field(default=50, ge=0)
    n_val: int = Field(default=20, ge=0)
    seed: int = 0


class TrainConfig(BaseModel):
    """Hyperparameters of the alternating min-max training loop"""
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    lambda_: float = Field(default=1.0, ge=0.0, alias="lambda")
    gamma: float = Field(default=1e4, ge=0.0)
    n_steps: int = Field(default=12, ge=1, alias="N")
    lr_transport: float = Field(default=1e-4, gt=0.0)
    lr_critic: float = Field(default=2e-4, gt=0.0)
    n_critic: int = Field(default=1, ge=1)
    clip_c: float = Field(default=0.05, gt=0.0)
    batch: int = Field(default=8, ge=1)
    paired_batch: Optional[int] = Field(default=None, ge=1)
    epochs: int = Field(default=30, ge=0)
    lr_decay_every: int = Field(default=30, ge=1)
    lr_decay_factor: float = Field(default=10.0, gt=0.0)
    rmsprop_rho: float = Field(default=0.9, ge=0.0, lt=1.0)
    rmsprop_eps: float = Field(default=1e-8, gt=0.0)
    patience: int = Field(default=10, ge=1)
    physics: bool = True
    regularizer: RegularizerArch = Field(default_factory=RegularizerArch)
    critic: CriticArch = Field(default_factory=CriticArch)
    seed: int = 0

    @property
    def effective_paired_batch(self) -> int:
        return self.paired_batch if self.paired_batch is not None else self.batch


class RunConfig(BaseModel):
    """Top-level document read by the command-line tools"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    data: DataConfig = Field(default_factory=DataConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)

    @model_validator(mode="after")
    def critic_fits_image(self):
        if self.train.critic.kernel > self.data.n or self.train.regularizer.kernel > self.data.n:
            raise ValueError("kernel size exceeds the image side")
        return self
