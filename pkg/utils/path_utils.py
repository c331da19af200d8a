"""Path utilities for RLCk MOR."""
from pathlib import Path

import yaml

from core.errors import ValidationError
from utils.file_utils import ensure_directory
from utils.matrix_market import MANIFEST_NAME


NETLIST = "netlist"
MATRIX_BUNDLE = "matrix_bundle"
ROM_BUNDLE = "rom_bundle"


def classify_model_path(path: str) -> str:
    """
    Tell what a model path holds.

    Returns:
        ``netlist`` for a file, ``rom_bundle`` for a directory whose manifest
        says ``kind: rom``, ``matrix_bundle`` for any other directory
    """
    source = Path(path).expanduser()
    if not source.exists():
        raise ValidationError(f"input not found: {source}")
    if source.is_file():
        return NETLIST
    manifest = source / MANIFEST_NAME
    if manifest.exists():
        try:
            with open(manifest, 'r', encoding='utf-8') as f:
                data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ValidationError(f"invalid manifest {manifest}: {e}") from e
        if isinstance(data, dict) and data.get("kind") == "rom":
            return ROM_BUNDLE
    return MATRIX_BUNDLE


def output_file(out_dir: str, name: str) -> str:
    """Path of ``name`` inside the output directory (created on demand)."""
    return str(ensure_directory(out_dir) / name)
