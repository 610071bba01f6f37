"""
Tests for binary field dumps
"""

import json

import numpy as np
import pytest

from src.exceptions import FieldIOError
from src.fields import SpectralField
from src.utils.field_io import ENDIANNESS_TAG, dump_field, load_field, read_array, sidecar_path, write_array


def test_dump_and_load(tmp_path, small_grid, rng):
    coeffs = rng.standard_normal(small_grid.shape) + 1j * rng.standard_normal(small_grid.shape)
    field = SpectralField(small_grid, coeffs, real=False)
    path = tmp_path / "field.bin"
    dump_field(field, path, kind="scalar", extra={"t": 1.5})

    loaded, meta = load_field(path)
    assert loaded.spec == small_grid
    assert loaded.real is False
    assert meta["t"] == 1.5
    np.testing.assert_array_equal(loaded.coeffs, coeffs)


def test_ascending_order_on_disk(tmp_path, small_grid):
    """The zero mode sits at index n/2 of each axis in the file"""
    coeffs = np.zeros(small_grid.shape, dtype=complex)
    coeffs[0, 0, 0] = 3.0
    path = tmp_path / "delta.bin"
    dump_field(SpectralField(small_grid, coeffs), path)

    raw = np.fromfile(path, dtype="<f8").reshape(16, 16, 16, 2)
    assert raw[8, 8, 8, 0] == 3.0
    assert np.count_nonzero(raw) == 1


def test_sidecar_contents(tmp_path, small_grid):
    path = tmp_path / "zero.bin"
    dump_field(SpectralField.zeros(small_grid), path, kind="A")
    meta = json.loads(sidecar_path(path).read_text())
    assert meta["endianness"] == ENDIANNESS_TAG
    assert meta["shape"] == [16, 16, 16]
    assert meta["kind"] == "A"
    assert meta["n"] == 16 and meta["L"] == 8.0


class TestFailures:
    def test_missing_dump(self, tmp_path):
        with pytest.raises(FieldIOError, match="not found"):
            read_array(tmp_path / "absent.bin")

    def test_missing_sidecar(self, tmp_path):
        path = tmp_path / "orphan.bin"
        np.zeros(8, dtype="<c16").tofile(path)
        with pytest.raises(FieldIOError, match="Sidecar"):
            read_array(path)

    def test_wrong_endianness(self, tmp_path):
        path = tmp_path / "be.bin"
        write_array(path, np.zeros(4, dtype=complex), {})
        meta = json.loads(sidecar_path(path).read_text())
        meta["endianness"] = "BE64"
        sidecar_path(path).write_text(json.dumps(meta))
        with pytest.raises(FieldIOError, match="endianness"):
            read_array(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "short.bin"
        write_array(path, np.zeros(4, dtype=complex), {})
        np.zeros(3, dtype="<c16").tofile(path)
        with pytest.raises(FieldIOError, match="holds 3 values"):
            read_array(path)

    def test_corrupt_sidecar(self, tmp_path):
        path = tmp_path / "corrupt.bin"
        write_array(path, np.zeros(4, dtype=complex), {})
        sidecar_path(path).write_text("{not json")
        with pytest.raises(FieldIOError, match="Corrupt"):
            read_array(path)

    def test_sidecar_without_grid(self, tmp_path):
        path = tmp_path / "nogrid.bin"
        write_array(path, np.zeros((16, 16, 16), dtype=complex), {})
        with pytest.raises(FieldIOError, match="grid"):
            load_field(path)
