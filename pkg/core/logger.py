"""Logging utilities for RLCk MOR."""
import logging
import os
from datetime import datetime
from pathlib import Path
from typing import Optional


LOG_LEVELS = {
    "DEBUG": logging.DEBUG,
    "INFO": logging.INFO,
    "WARNING": logging.WARNING,
    "ERROR": logging.ERROR
}


def get_log_dir() -> Path:
    """Directory for daily log files (``RLCK_MOR_LOG_DIR`` wins)."""
    env_dir = os.environ.get("RLCK_MOR_LOG_DIR")
    if env_dir:
        return Path(env_dir).expanduser()
    return Path.home() / ".rlck_mor" / "logs"


class Logger:
    """Singleton logger with file and console handlers."""
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
            cls._instance._initialized = False
        return cls._instance

    def __init__(self):
        if self._initialized:
            return

        self.logger = logging.getLogger("RlckMor")
        self.logger.setLevel(logging.INFO)
        self.logger.propagate = False

        formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')

        console = logging.StreamHandler()
        console.setFormatter(formatter)
        self.logger.addHandler(console)

        self.log_file: Optional[Path] = None
        try:
            log_dir = get_log_dir()
            log_dir.mkdir(parents=True, exist_ok=True)
            self.log_file = log_dir / f"mor_{datetime.now().strftime('%Y%m%d')}.log"
            file_handler = logging.FileHandler(self.log_file)
            file_handler.setFormatter(formatter)
            self.logger.addHandler(file_handler)
        except OSError:
            # Read-only home: console only
            self.log_file = None

        self._initialized = True

    def set_log_level(self, level: str):
        """Set log level dynamically."""
        if level in LOG_LEVELS:
            self.logger.setLevel(LOG_LEVELS[level])
            for handler in self.logger.handlers:
                handler.setLevel(LOG_LEVELS[level])

    def info(self, message: str):
        """Log info message."""
        self.logger.info(message)

    def error(self, message: str):
        """Log error message."""
        self.logger.error(message)

    def warning(self, message: str):
        """Log warning message."""
        self.logger.warning(message)

    def debug(self, message: str):
        """Log debug message."""
        self.logger.debug(message)
