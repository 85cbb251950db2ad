import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from jsonschema import Draft202012Validator

from nsvt.serialize import SCHEMAS, dumps, fmt, load_schema

finite = st.floats(allow_nan=False, allow_infinity=False)


@given(finite)
def test_fmt_round_trips(x):
    assert float(fmt(x)) == x


@given(st.recursive(
    st.none() | st.booleans() | st.integers(-10**12, 10**12) | finite | st.text(max_size=5),
    lambda children: st.lists(children, max_size=3) | st.dictionaries(st.text(max_size=4), children, max_size=3),
    max_leaves=10,
))
def test_dumps_matches_json(obj):
    assert json.loads(dumps(obj)) == obj


def test_numpy_and_non_finite():
    text = dumps({"a": np.float64(0.1), "b": np.arange(2), "c": math.nan, "d": np.bool_(True), "e": ()})
    assert json.loads(text) == {"a": 0.1, "b": [0, 1], "c": None, "d": True, "e": []}
    assert "0.10000000000000001" in text


def test_unserializable():
    with pytest.raises(TypeError):
        dumps({"x": object()})


@pytest.mark.parametrize("name", SCHEMAS)
def test_schemas_are_valid(name):
    Draft202012Validator.check_schema(load_schema(name))


def test_unknown_schema():
    with pytest.raises(KeyError):
        load_schema("nope")
