"""Settings management for RLCk MOR."""
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from core.errors import ValidationError
from core.logger import Logger, LOG_LEVELS


METHODS = ("dense", "eksm")
SPACINGS = ("linear", "log")
# f_max value asking for twice the dominant resonance of the model
AUTO = "auto"


@dataclass
class RunConfig:
    """All parameters of one command run."""
    tol: float = 1e-2
    target_error: float = 1e-2
    f_min: float = 1e8
    f_max: float = 1e10
    f_max_auto: bool = True
    points: int = 20
    spacing: str = "linear"
    maxiter: int = 50
    basis_cap: int = 2000
    z0: float = 50.0
    method: str = "eksm"
    seed: int = 0
    out_dir: str = "."
    c_min: float = 1e-18
    regularize: bool = True
    log_level: str = "INFO"
    record_timing: bool = True

    def validate(self, allow_zero_tol: bool = False) -> "RunConfig":
        """Check every field; raises ValidationError on the first bad one."""
        if not self.f_min > 0:
            raise ValidationError(f"fmin must be > 0, got {self.f_min}")
        if not self.f_max_auto and not self.f_min < self.f_max:
            raise ValidationError(f"need 0 < fmin < fmax, got fmin={self.f_min}, fmax={self.f_max}")
        if self.points < 2:
            raise ValidationError(f"points must be >= 2, got {self.points}")
        if self.spacing not in SPACINGS:
            raise ValidationError(f"spacing must be one of {SPACINGS}, got {self.spacing!r}")
        if self.tol < 0 or (self.tol == 0 and not allow_zero_tol):
            raise ValidationError(f"tol must be > 0, got {self.tol}")
        if self.target_error <= 0:
            raise ValidationError(f"target_error must be > 0, got {self.target_error}")
        if self.maxiter < 1:
            raise ValidationError(f"maxiter must be >= 1, got {self.maxiter}")
        if self.basis_cap < 1:
            raise ValidationError(f"basis_cap must be >= 1, got {self.basis_cap}")
        if self.z0 <= 0:
            raise ValidationError(f"z0 must be > 0, got {self.z0}")
        if self.method not in METHODS:
            raise ValidationError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.c_min < 0:
            raise ValidationError(f"c_min must be >= 0, got {self.c_min}")
        if self.log_level not in LOG_LEVELS:
            raise ValidationError(f"log_level must be one of {tuple(LOG_LEVELS)}, got {self.log_level!r}")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def get_thread_count() -> int:
    """Worker threads from ``RLCK_MOR_THREADS`` (default 1)."""
    value = os.environ.get("RLCK_MOR_THREADS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


class Settings:
    """Layered configuration: code defaults < YAML config file < CLI flags."""

    def __init__(self, config_file: Optional[str] = None):
        self.logger = Logger()
        self.config_file = Path(config_file).expanduser() if config_file else None

    def _default_settings(self) -> Dict[str, Any]:
        """Return default settings."""
        return RunConfig().to_dict()

    def _read_config_file(self) -> Dict[str, Any]:
        """Read the optional YAML file; empty dict when none was given."""
        if self.config_file is None:
            return {}
        if not self.config_file.exists():
            raise ValidationError(f"config file not found: {self.config_file}")
        try:
            with open(self.config_file, 'r', encoding='utf-8') as f:
                data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ValidationError(f"invalid YAML in {self.config_file}: {e}") from e
        if data is None:
            return {}
        if not isinstance(data, dict):
            raise ValidationError(f"config file {self.config_file} must contain a mapping")
        self.logger.debug(f"Loaded config file: {self.config_file}")
        return {str(key).replace("-", "_"): value for key, value in data.items()}

    def load(self, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
        """
        Build a RunConfig from defaults, config file and flag overrides.

        Args:
            overrides: flag values; ``None`` entries mean "flag not given"

        Returns:
            RunConfig with coerced field types (not yet validated)
        """
        merged = self._default_settings()
        known = {f.name: f.type for f in fields(RunConfig)}

        layers = [self._read_config_file(), {k: v for k, v in (overrides or {}).items() if v is not None}]
        for layer in layers:
            for key, value in layer.items():
                if key not in known:
                    raise ValidationError(f"unknown configuration key: {key}")
                if key == "f_max":
                    auto = isinstance(value, str) and value.strip().lower() == AUTO
                    merged["f_max_auto"] = auto
                    if auto:
                        continue
                merged[key] = self._coerce(key, value, merged[key])

        return RunConfig(**merged)

    @staticmethod
    def _coerce(key: str, value: Any, default: Any) -> Any:
        """Convert a raw config value to the type of its default."""
        try:
            if isinstance(default, bool):
                if isinstance(value, str):
                    return value.lower() in ('true', '1', 'yes', 'on')
                return bool(value)
            if isinstance(default, int):
                if isinstance(value, float) and not value.is_integer():
                    raise ValueError(value)
                return int(value)
            if isinstance(default, float):
                return float(value)
            return str(value)
        except (TypeError, ValueError) as e:
            raise ValidationError(f"invalid value for {key}: {value!r}") from e
