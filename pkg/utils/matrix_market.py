"""Matrix Market helpers for RLCk MOR model bundles.

A bundle is a directory holding ``G.mtx``, ``C.mtx``, ``B.mtx``, ``L.mtx``
and a ``manifest.yaml`` describing dimensions and names.
"""
import io
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
import scipy.io
import scipy.sparse as sp

from core.errors import ValidationError
from utils.file_utils import read_yaml, write_atomic, write_yaml


BUNDLE_MATRICES = ("G", "C", "B", "L")
MANIFEST_NAME = "manifest.yaml"


def write_mtx(file_path: str, matrix: Union[np.ndarray, sp.spmatrix]) -> Path:
    """Write coordinate (sparse) or array (dense) Matrix Market, full precision."""
    buffer = io.BytesIO()
    if sp.issparse(matrix):
        matrix = sp.coo_matrix(matrix)
    else:
        matrix = np.asarray(matrix, dtype=float)
    scipy.io.mmwrite(buffer, matrix, precision=17, symmetry='general')
    return write_atomic(file_path, buffer.getvalue())


def read_mtx(file_path: str, dense: bool = False) -> Union[np.ndarray, sp.csc_matrix]:
    """Read a Matrix Market file; ``dense`` forces an ndarray result."""
    path = Path(file_path)
    if not path.exists():
        raise ValidationError(f"missing Matrix Market file: {path}")
    try:
        data = scipy.io.mmread(str(path))
    except (ValueError, OSError) as e:
        raise ValidationError(f"cannot read {path}: {e}") from e
    if dense:
        return data.toarray() if sp.issparse(data) else np.asarray(data, dtype=float)
    return sp.csc_matrix(data, dtype=float)


def write_manifest(bundle_dir: str, manifest: Dict[str, Any]) -> Path:
    return write_yaml(str(Path(bundle_dir) / MANIFEST_NAME), manifest)


def read_manifest(bundle_dir: str) -> Dict[str, Any]:
    path = Path(bundle_dir) / MANIFEST_NAME
    if not path.exists():
        raise ValidationError(f"bundle {bundle_dir} has no {MANIFEST_NAME}")
    manifest = read_yaml(str(path))
    if not isinstance(manifest, dict):
        raise ValidationError(f"{path} must contain a mapping")
    return manifest


def check_finite(name: str, matrix: Union[np.ndarray, sp.spmatrix]):
    values = matrix.data if sp.issparse(matrix) else matrix
    if not np.all(np.isfinite(values)):
        raise ValidationError(f"{name} has non-finite entries")
