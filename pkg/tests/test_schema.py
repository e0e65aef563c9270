import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from patientstab import schema
from patientstab.delay import DelayedSwitchedSystem, DelayPolicy, delayed_system
from patientstab.systems import IntervalEnsemble, MapSpec, SwitchedSystem

from conftest import FIXTURES

ALL = sorted(p.stem for p in FIXTURES.glob("*.json") if p.stem != "dh_blocks")


@pytest.mark.parametrize("name", ALL)
def test_fixture_round_trip(name):
    obj = schema.load(FIXTURES / f"{name}.json")
    a = schema.parse_system(obj)
    b = schema.parse_system(json.loads(schema.dumps(schema.system_to_dict(a))))
    assert schema.system_to_dict(a) == schema.system_to_dict(b)
    base_a = a.system if isinstance(a, DelayedSwitchedSystem) else a
    base_b = b.system if isinstance(b, DelayedSwitchedSystem) else b
    assert base_a == base_b


finite = st.floats(-1e6, 1e6, allow_nan=False, width=64)


@st.composite
def systems(draw):
    n = draw(st.integers(1, 3))
    k = draw(st.integers(1, 3))
    mat = arrays(np.float64, (n, n), elements=finite)
    maps = tuple(MapSpec(draw(mat), draw(mat), draw(arrays(np.float64, (n,), elements=finite))) for _ in range(k))
    w = np.full(k, 1.0 / k)
    w[-1] = 1.0 - w[:-1].sum()
    sys = SwitchedSystem(maps, w)
    if draw(st.booleans()):
        L = draw(st.integers(0, 3))
        kind = draw(st.sampled_from(["none", "fixed", "iid_uniform_entries", "explicit"]))
        dmat = arrays(np.int64, (n, n), elements=st.integers(0, L))
        if kind == "fixed":
            pol = DelayPolicy.fixed(draw(dmat))
        elif kind == "explicit":
            pol = DelayPolicy.explicit([[(draw(dmat), 0.25), (draw(dmat), 0.75)] for _ in range(k)])
        else:
            pol = DelayPolicy(kind)
        return delayed_system(sys, pol, L)
    return sys


@settings(max_examples=100, deadline=None)
@given(systems())
def test_round_trip_property(sys):
    text = schema.dumps(schema.system_to_dict(sys))
    again = schema.parse_system(schema.loads(text))
    assert schema.system_to_dict(again) == schema.system_to_dict(sys)
    base = sys.system if isinstance(sys, DelayedSwitchedSystem) else sys
    again_base = again.system if isinstance(again, DelayedSwitchedSystem) else again
    assert again_base == base
    for f, g in zip(base.maps, again_base.maps):
        assert np.array_equal(f.linear, g.linear) and np.array_equal(f.bias, g.bias)


def test_ensemble_round_trip():
    e = IntervalEnsemble(np.array([[-1.0, 0.0], [0.1, 0.2]]), np.array([[1.0, 0.5], [0.3, 0.2]]))
    assert schema.parse_system(schema.system_to_dict(e)) == e


def test_defaults():
    s = schema.parse_system({"n": 2, "maps": [{"weight": 1}]})
    assert np.array_equal(s.maps[0].linear, np.zeros((2, 2)))
    assert np.array_equal(s.maps[0].bias, np.zeros(2))


def test_malformed_json_reports_position():
    with pytest.raises(schema.SchemaError) as info:
        schema.loads('{\n  "n": 2,\n  "maps": [,]\n}')
    assert info.value.line == 3 and info.value.column == 12
    assert "line 3" in str(info.value)


@pytest.mark.parametrize("obj, where", [
    ({"n": 2, "maps": []}, "maps"),
    ({"maps": [{"weight": 1}]}, "n"),
    ({"n": 2}, "spec"),
    ({"n": 2, "maps": [{"weight": 1}], "ensemble": {}}, "spec"),
    ({"n": 2, "maps": [{"gain": [[1, 2], [3]], "weight": 1}]}, "maps[0].gain"),
    ({"n": 2, "maps": [{"gain": [[1, 2]], "weight": 1}]}, "maps[0].gain"),
    ({"n": 2, "maps": [{"bias": [1, "x"], "weight": 1}]}, "maps[0].bias"),
    ({"n": 2, "maps": [{"linear": [[1, 0], [0, 1]]}]}, "maps[0]"),
    ({"n": 2, "maps": [{"weight": 0.5}]}, "maps"),
    ({"n": 2, "maps": [{"weight": 1, "extra": 1}]}, "maps[0]"),
    ({"n": 1, "ensemble": {"lower": [[1]], "upper": [[0]]}}, "ensemble"),
    ({"n": 1, "ensemble": {"lower": [[1]]}}, "ensemble"),
    ({"n": 1, "maps": [{"weight": 1}], "delay": {"L": -1, "policy": {"kind": "none"}}}, "delay.L"),
    ({"n": 1, "maps": [{"weight": 1}], "delay": {"L": 1, "policy": {"kind": "bogus"}}}, "delay.policy.kind"),
    ({"n": 1, "maps": [{"weight": 1}], "delay": {"L": 1, "policy": {"kind": "fixed"}}}, "delay.policy"),
    ({"n": 1, "maps": [{"weight": 1}], "delay": {"L": 1, "policy": {"kind": "fixed", "matrix": [[2]]}}}, "delay"),
    ({"n": 1, "maps": [{"weight": 1}], "delay": {"L": 1, "policy": {"kind": "fixed", "matrix": [[0.5]]}}},
     "delay.policy.matrix"),
    ({"n": 1, "maps": [{"weight": 1}],
      "delay": {"L": 1, "policy": {"kind": "explicit", "choices": [[{"delay": [[0]], "prob": 0.4}]]}}},
     "delay.policy.choices"),
    ({"n": 1, "maps": [{"weight": 1}], "delay": {"L": 1, "policy": {"kind": "explicit", "choices": []}}},
     "delay.policy.choices"),
    ({"n": 1, "maps": [{"weight": 1}], "lipschitz": [[[1], [2]]]}, "lipschitz[0]"),
])
def test_schema_errors(obj, where):
    with pytest.raises(schema.SchemaError) as info:
        schema.parse_system(obj)
    assert info.value.where == where


def test_delay_error_names_entry():
    obj = {"n": 2, "maps": [{"weight": 1}], "delay": {"L": 1, "policy": {"kind": "fixed", "matrix": [[0, 0], [2, 0]]}}}
    with pytest.raises(schema.SchemaError, match=r"\(1, 0\)"):
        schema.parse_system(obj)


def test_blocks():
    blocks = schema.parse_blocks(schema.load(FIXTURES / "dh_blocks.json"))
    assert len(blocks) == 2 and blocks[0].shape == (3, 3)
    with pytest.raises(schema.SchemaError):
        schema.parse_blocks({"blocks": [[[1, 2]]]})
    with pytest.raises(schema.SchemaError):
        schema.parse_blocks({"blocks": []})


def test_custom_map_not_serializable():
    from patientstab.systems import CustomMap

    s = SwitchedSystem((CustomMap(np.sin, np.eye(1)),), np.ones(1))
    with pytest.raises(TypeError):
        schema.system_to_dict(s)


def test_missing_file(tmp_path):
    with pytest.raises(schema.SchemaError, match="cannot read"):
        schema.load(tmp_path / "nope.json")
