import json
import os
import tempfile

import numpy as np
import pandas as pd
import pytest

from kinetik.errors import ValidationError
from kinetik.fields import AlgebraicDecay, VelocityGrid, sample
from kinetik.storage import (
    HEADER,
    read_field,
    read_table,
    write_field,
    write_json,
    write_table,
)


def test_field_file_preserves_samples():
    """Test that a KFLD file restores samples, grid and tail bit for bit"""
    f = sample(AlgebraicDecay(1.5, 7.0), VelocityGrid(2, 16, 3.0))
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "f.kfld")
        write_field(path, f)
        assert os.path.getsize(path) == HEADER.itemsize + 8 * 16 * 16
        g = read_field(path, "cubic")
    assert g.grid == f.grid
    np.testing.assert_array_equal(g.values, f.values)
    assert g.tail_c == f.tail_c
    assert g.tail_q == f.tail_q
    assert g.interpolation == "cubic"


def test_read_field_rejects_bad_files():
    """Test magic, truncation and size checks"""
    f = sample(AlgebraicDecay(), VelocityGrid(2, 8, 1.0))
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "f.kfld")
        with open(path, "wb") as handle:
            handle.write(b"KF")
        with pytest.raises(ValidationError, match="Truncated"):
            read_field(path)
        with open(path, "wb") as handle:
            handle.write(b"XXXX" + bytes(HEADER.itemsize))
        with pytest.raises(ValidationError, match="Not a KFLD"):
            read_field(path)
        write_field(path, f)
        with open(path, "ab") as handle:
            handle.write(bytes(8))
        with pytest.raises(ValidationError, match="samples"):
            read_field(path)


def test_table_round_trips_doubles():
    """Test that CSV tables keep full double precision"""
    values = [0.1, 1.0 / 3.0, 2.0**-40, 12345.678901234567]
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "t.csv")
        write_table(path, [{"a": v, "b": i} for i, v in enumerate(values)])
        with open(path) as handle:
            assert handle.readline().strip() == "a,b"
        frame = read_table(path)
    assert frame["a"].tolist() == values


def test_json_is_sorted_and_numpy_aware():
    """Test that JSON artifacts serialize numpy values with sorted keys"""
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "x.json")
        write_json(path, {"b": np.float64(1.5), "a": np.arange(3), "c": np.bool_(True)})
        with open(path) as handle:
            text = handle.read()
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    assert json.loads(text) == {"a": [0, 1, 2], "b": 1.5, "c": True}


def test_write_table_accepts_frames():
    """Test that DataFrames are written unchanged"""
    frame = pd.DataFrame({"x": [1.0, 2.0]})
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "f.csv")
        written = write_table(path, frame)
        assert written is frame
        assert read_table(path)["x"].tolist() == [1.0, 2.0]
