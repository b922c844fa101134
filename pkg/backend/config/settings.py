from __future__ import annotations

from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

from .runtime import get_runtime_config

_runtime = get_runtime_config()
_PROJECT_ROOT = Path(__file__).resolve().parents[2]


def _resolve_output_path(path_value: str) -> str:
    path = Path(path_value).expanduser()
    if path.is_absolute():
        return str(path.resolve())
    return str((_PROJECT_ROOT / path).resolve())


class Settings(BaseSettings):
    # Environment overrides, prefixed CAREER_ (e.g. CAREER_LOG_LEVEL=DEBUG).
    log_level: str = _runtime.cli.log_level
    output_dir: str = _runtime.cli.output_dir
    default_seed: int = Field(default=_runtime.cli.default_seed, ge=0, lt=2**64)

    def model_post_init(self, __context: object) -> None:
        self.output_dir = _resolve_output_path(self.output_dir)
        self.log_level = self.log_level.strip().upper()

    model_config = SettingsConfigDict(
        env_prefix="CAREER_",
        env_file=str(_PROJECT_ROOT / ".env"),
        env_file_encoding="utf-8",
        extra="ignore",
    )


_settings: Settings | None = None


def get_settings() -> Settings:
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings
