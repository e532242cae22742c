from enum import StrEnum  # type: ignore
from typing import Optional

from pydantic import NonNegativeInt, PositiveInt, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict  # type: ignore

DEFAULT_SEED = 20240521


class LogLevel(StrEnum):
    DEBUG = "DEBUG"
    INFO = "INFO"
    WARNING = "WARNING"
    ERROR = "ERROR"
    CRITICAL = "CRITICAL"


class RuntimeSettings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="FACTOR_EVAL_")

    seed: NonNegativeInt = DEFAULT_SEED
    max_worker_count: PositiveInt = 4
    r_max: PositiveInt = 10
    output_precision: PositiveInt = 3
    log_level: LogLevel = LogLevel.INFO  # type: ignore

    @field_validator("log_level", mode="before")
    @classmethod
    def set_log_level(cls, v: str) -> LogLevel:
        if isinstance(v, str):
            v = v.upper()  # Convert input to uppercase
        if (
            v in LogLevel._value2member_map_
        ):  # Check if the converted value is in enum members
            return LogLevel(v)
        raise ValueError(f"Invalid log level: {v}")


class Setting(BaseSettings):
    runtime: RuntimeSettings = {}  # type: ignore


class SettingsManager:
    _setting_instance: Optional[Setting] = (
        None  # Private class attribute, initially None
    )

    @classmethod
    def get_setting(cls):
        if cls._setting_instance is None:
            cls._setting_instance = Setting()
        return cls._setting_instance

    @classmethod
    def initialize_with_params(
        cls,
        seed: int | None = None,
        max_worker_count: int | None = None,
        r_max: int | None = None,
        log_level: str | None = None,
    ):
        overrides = {
            "seed": seed,
            "max_worker_count": max_worker_count,
            "r_max": r_max,
            "log_level": log_level,
        }
        runtime_settings = RuntimeSettings(
            **{key: value for key, value in overrides.items() if value is not None}
        )
        cls._setting_instance = Setting(runtime=runtime_settings)
        return cls._setting_instance

    @classmethod
    def reset(cls):
        cls._setting_instance = None
