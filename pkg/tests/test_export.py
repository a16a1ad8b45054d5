import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pnrlab.export import atomic_write, fmt, table_csv, table_json, write_table


def test_fmt_normalises_numpy_scalars():
    assert fmt(np.float64(0.1)) == "0.1"
    assert fmt(np.int64(3)) == "3"
    assert fmt(np.bool_(True)) == "1"
    assert fmt(True) == "1" and fmt(False) == "0"
    assert fmt(math.nan) == "nan"


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_round_trips_floats(x):
    assert float(fmt(x)) == x
    assert fmt(np.float64(x)) == fmt(x)


def test_csv_layout():
    text = table_csv(["a", "b"], [[1, 0.5], [2, np.float64(1.25)]])
    assert text == "a,b\n1,0.5\n2,1.25\n"


def test_json_layout_maps_nan_to_null():
    doc = json.loads(table_json(["a", "b"], [[1, math.nan], [np.int64(2), np.float64(0.5)]]))
    assert doc == {"columns": ["a", "b"], "rows": [[1, None], [2, 0.5]]}


def test_write_table_and_atomic_write(tmp_path):
    p = write_table(tmp_path / "sub", "t", ["x"], [[1]])
    assert p.read_bytes() == b"x\n1\n"
    q = write_table(tmp_path, "t", ["x"], [[1]], as_json=True)
    assert q.suffix == ".json"
    atomic_write(tmp_path / "f.txt", "hello")
    assert (tmp_path / "f.txt").read_text() == "hello"
    assert not [f for f in tmp_path.iterdir() if f.name.startswith(".")]


def test_atomic_write_leaves_no_temp_on_error(tmp_path):
    with pytest.raises(TypeError):
        atomic_write(tmp_path / "f.txt", 123)
    assert list(tmp_path.iterdir()) == []
