from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class LoggingSettings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore"
    )

    level: str = Field(default="INFO", alias="LOG_LEVEL")
    format: str = Field(default="console", alias="LOG_FORMAT")


class RunSettings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore"
    )

    run_dir: Path = Field(default=Path("runs"), alias="KIDOT_RUN_DIR")


class NumericsSettings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore"
    )

    # a transport state whose norm exceeds this multiple of the initial norm aborts the path
    divergence_factor: float = Field(default=1e6, gt=1.0, alias="KIDOT_DIVERGENCE_FACTOR")
    max_assignment_points: int = Field(default=256, ge=1, alias="KIDOT_MAX_ASSIGNMENT_POINTS")
    psnr_cap_db: float = Field(default=100.0, gt=0.0, alias="KIDOT_PSNR_CAP_DB")


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore"
    )

    # Sub-settings
    logging: LoggingSettings = Field(default_factory=LoggingSettings)
    run: RunSettings = Field(default_factory=RunSettings)
    numerics: NumericsSettings = Field(default_factory=NumericsSettings)


# Global settings instance
settings = Settings()
