"""File operation utilities for RLCk MOR."""
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Union

import yaml


def ensure_directory(path: str) -> Path:
    """Ensure directory exists, create if not."""
    dir_path = Path(path).expanduser()
    dir_path.mkdir(parents=True, exist_ok=True)
    return dir_path


def write_atomic(file_path: str, data: Union[str, bytes]) -> Path:
    """Write ``data`` to a temp file next to the target, then rename over it."""
    path = Path(file_path).expanduser()
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = data.encode('utf-8') if isinstance(data, str) else data
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=str(path.parent))
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.remove(tmp_name)
        except OSError:
            pass
        raise
    return path


def write_json(file_path: str, data: Dict[str, Any]) -> Path:
    """Write data to JSON file atomically (sorted keys, stable output)."""
    text = json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    return write_atomic(file_path, text)


def read_yaml(file_path: str) -> Dict[str, Any]:
    """Read a YAML mapping; empty dict for an empty file."""
    with open(file_path, 'r', encoding='utf-8') as f:
        data = yaml.safe_load(f)
    return data or {}


def write_yaml(file_path: str, data: Dict[str, Any]) -> Path:
    """Write a YAML mapping atomically with sorted keys."""
    text = yaml.safe_dump(data, sort_keys=True, default_flow_style=False)
    return write_atomic(file_path, text)
