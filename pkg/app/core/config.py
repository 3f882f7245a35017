"""
Application configuration using Pydantic Settings
"""
from pathlib import Path
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process settings loaded from environment variables"""

    # Application
    workbench_version: str = "1.0.0"
    environment: str = "development"

    # Artifacts
    output_dir: str = "runs"
    default_config: str = "configs/desk.toml"

    # Evaluation fan-out
    eval_workers: int = 4

    # Logging
    log_level: str = "INFO"
    log_dir: str = "logs"

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
        env_prefix=""
    )

    @property
    def log_file(self) -> Path:
        """Path of the per-environment log file"""
        return Path(self.log_dir) / f"logfile_{self.environment}.log"


# Global settings instance
settings = Settings()
