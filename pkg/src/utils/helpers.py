"""
Utility functions for the Euler-Coriolis toolkit
"""

import hashlib
import json
import sys
from pathlib import Path
from typing import Any, List, Mapping, Optional

from loguru import logger


def setup_logging(log_level: Optional[str] = None, log_dir: Optional[Path] = None):
    """Setup logging configuration"""
    from src.config import config

    level = log_level or config.LOG_LEVEL
    log_dir = Path(log_dir or config.LOGS_DIR)

    # Create logs directory if it doesn't exist
    log_dir.mkdir(parents=True, exist_ok=True)

    # Remove default logger
    logger.remove()

    # Add console logger
    logger.add(
        sys.stderr,
        format="<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | <cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>",
        level=level
    )

    # Add file logger
    logger.add(
        log_dir / "ec_toolkit.log",
        format="{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} - {message}",
        level=level,
        rotation="10 MB",
        retention="7 days"
    )


class WarningRecorder:
    """loguru sink collecting WARNING-or-above messages for strict mode"""

    def __init__(self):
        self.messages: List[str] = []
        self.handler_id: Optional[int] = None

    def __call__(self, message):
        self.messages.append(message.record["message"])

    def install(self):
        self.handler_id = logger.add(self, level="WARNING", format="{message}")
        return self

    def remove(self):
        if self.handler_id is not None:
            logger.remove(self.handler_id)
            self.handler_id = None


def check_dependencies():
    """Check if all required dependencies are installed"""
    critical_packages = [
        'numpy', 'scipy', 'pandas', 'sklearn', 'pydantic', 'dotenv', 'loguru'
    ]

    missing_packages = []

    for package in critical_packages:
        try:
            __import__(package)
        except ImportError:
            missing_packages.append(package)

    if missing_packages:
        logger.error(f"Missing critical packages: {missing_packages}")
        logger.info("Run: pip install -r requirements.txt")
        return False

    logger.debug("✅ All critical dependencies are available")
    return True


def package_versions() -> dict:
    """Versions of the scientific stack, recorded in run manifests"""
    versions = {}
    for package in ('numpy', 'scipy', 'pandas', 'sklearn', 'pydantic'):
        try:
            versions[package] = __import__(package).__version__
        except (ImportError, AttributeError):
            versions[package] = "unknown"
    return versions


def content_hash(payload: Mapping[str, Any], *arrays) -> str:
    """sha256 over a canonical JSON rendering of ``payload`` followed by raw array bytes"""
    digest = hashlib.sha256()
    digest.update(json.dumps(payload, sort_keys=True, default=str).encode())
    for array in arrays:
        digest.update(array.tobytes())
    return digest.hexdigest()


def file_hash(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_json(path: Path, payload: Any):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
    logger.debug(f"Wrote {path}")
