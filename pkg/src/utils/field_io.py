"""
Binary field dumps: little-endian float64 (re, im) pairs in ascending wavevector order
m in [-n/2, n/2)^3, row-major over (m1, m2, m3), with a JSON sidecar of the same basename.
"""

import json
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
from loguru import logger
from scipy import fft

from src.exceptions import FieldIOError
from src.models import GridSpec

ENDIANNESS_TAG = "LE64"
ORDERING = "ascending m in [-n/2, n/2) per axis, row-major (m1, m2, m3)"


def sidecar_path(path: Union[str, Path]) -> Path:
    return Path(path).with_suffix(".json")


def write_array(path: Union[str, Path], array: np.ndarray, meta: Dict[str, Any]):
    """Write a complex array and its sidecar"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.ascontiguousarray(array, dtype="<c16").tofile(path)
    sidecar = dict(meta, endianness=ENDIANNESS_TAG, shape=list(array.shape))
    with open(sidecar_path(path), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)


def read_array(path: Union[str, Path]) -> Tuple[np.ndarray, Dict[str, Any]]:
    path = Path(path)
    meta_path = sidecar_path(path)
    if not path.exists():
        raise FieldIOError(f"Field dump not found: {path}")
    if not meta_path.exists():
        raise FieldIOError(f"Sidecar not found for {path}: expected {meta_path}")
    try:
        with open(meta_path) as fh:
            meta = json.load(fh)
    except json.JSONDecodeError as e:
        raise FieldIOError(f"Corrupt sidecar {meta_path}: {e}") from e
    if meta.get("endianness") != ENDIANNESS_TAG:
        raise FieldIOError(f"Unsupported endianness tag {meta.get('endianness')!r} in {meta_path}")
    data = np.fromfile(path, dtype="<c16")
    shape = tuple(meta["shape"])
    if data.size != int(np.prod(shape)):
        raise FieldIOError(f"{path} holds {data.size} values, sidecar announces shape {shape}")
    return data.reshape(shape).astype(complex), meta


def dump_field(field, path: Union[str, Path], kind: str = "scalar", extra: Optional[Dict[str, Any]] = None):
    """Write a SpectralField in the dump convention"""
    meta = {
        "n": field.spec.n,
        "L": field.spec.L,
        "real": bool(field.real),
        "kind": kind,
        "ordering": ORDERING,
    }
    meta.update(extra or {})
    write_array(path, fft.fftshift(field.coeffs), meta)
    logger.debug(f"Dumped {kind} field to {path}")


def load_field(path: Union[str, Path]):
    """Read a SpectralField written by dump_field; returns (field, metadata)"""
    from src.fields import SpectralField

    data, meta = read_array(path)
    try:
        spec = GridSpec(n=int(meta["n"]), L=float(meta["L"]))
    except (KeyError, ValueError) as e:
        raise FieldIOError(f"Sidecar for {path} lacks a valid grid description: {e}") from e
    if data.shape != spec.shape:
        raise FieldIOError(f"{path} has shape {data.shape}, grid expects {spec.shape}")
    return SpectralField(spec, fft.ifftshift(data), bool(meta.get("real", True))), meta
