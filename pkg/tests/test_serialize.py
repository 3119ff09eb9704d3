import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phyres import serialize


def test_float_seventeen_digits_round_trip():
    x = 0.1 + 0.2
    assert float(json.loads(serialize.dumps(x))) == x


def test_nested_structures():
    obj = {"a": [1, 2.5, None, True], "b": {"c": "text"}}
    assert json.loads(serialize.dumps(obj)) == obj


def test_numpy_types():
    obj = {"arr": np.array([1.5, 2.5]), "i": np.int64(3),
           "f": np.float64(0.25), "flag": np.bool_(True)}
    parsed = json.loads(serialize.dumps(obj))
    assert parsed == {"arr": [1.5, 2.5], "i": 3, "f": 0.25, "flag": True}


@pytest.mark.parametrize("bad", [float("nan"), float("inf"), float("-inf")])
def test_non_finite_rejected(bad):
    with pytest.raises(ValueError):
        serialize.dumps({"x": bad})


def test_unserializable_type_rejected():
    with pytest.raises(TypeError):
        serialize.dumps({"x": object()})


def test_write_and_read_json(tmp_path):
    path = tmp_path / "obj.json"
    obj = {"v": [0.1, 0.2, 0.30000000000000004]}
    serialize.write_json(path, obj)
    assert serialize.read_json(path) == obj


@given(st.floats(allow_nan=False, allow_infinity=False))
@settings(max_examples=200, deadline=None)
def test_any_finite_float_round_trips_exactly(x):
    restored = float(json.loads(serialize.dumps(x)))
    assert restored == x or (x == 0.0 and restored == 0.0)


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False,
                          min_value=-1e12, max_value=1e12), max_size=20))
@settings(max_examples=100, deadline=None)
def test_array_round_trip(values):
    arr = np.array(values, dtype=float)
    restored = np.array(json.loads(serialize.dumps(arr)), dtype=float)
    assert restored.shape == arr.shape
    assert all(a == b for a, b in zip(arr, restored))


def test_deterministic_output():
    obj = {"b": 2.0, "a": [1, math.pi]}
    assert serialize.dumps(obj) == serialize.dumps(obj)
