"""JSON system specifications.

A spec is one JSON object::

    {"n": 2,
     "maps": [{"linear": [[..]], "gain": [[..]], "bias": [..], "weight": 0.9}, ...],
     "delay": {"L": 1, "policy": {"kind": "iid_uniform_entries"}}}

or, for an interval ensemble of linear maps,
``{"n": 2, "ensemble": {"lower": [[..]], "upper": [[..]]}}``. Missing
``linear``, ``gain`` or ``bias`` default to zero; weights are always
explicit. The optional ``delay`` fragment turns the system into a delayed
one. An optional top-level ``lipschitz`` array (one matrix per map) is
accepted as annotation and only shape-checked. Policies:

* ``{"kind": "none"}``
* ``{"kind": "fixed", "matrix": [[..]]}``
* ``{"kind": "iid_uniform_entries"}``
* ``{"kind": "explicit", "choices": [[{"delay": [[..]], "prob": p}, ...], ...]}``
  with one list per map.

A block file for ``reduce`` is ``{"blocks": [[[..]], ...]}``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from .delay import DelayedSwitchedSystem, DelayPolicy, POLICY_KINDS, delayed_system
from .systems import CustomMap, IntervalEnsemble, MapSpec, SwitchedSystem

__all__ = [
    "SchemaError",
    "loads",
    "load",
    "parse_system",
    "parse_policy",
    "parse_blocks",
    "system_to_dict",
    "policy_to_dict",
    "dumps",
]


class SchemaError(ValueError):
    """Malformed or invalid spec; ``where`` locates the problem."""

    def __init__(self, msg: str, where: str = "", line: int | None = None, column: int | None = None):
        self.where = where
        self.line = line
        self.column = column
        loc = ""
        if line is not None:
            loc = f"line {line}, column {column}: "
        elif where:
            loc = f"{where}: "
        super().__init__(loc + msg)


def loads(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"malformed JSON: {exc.msg}", line=exc.lineno, column=exc.colno) from None


def load(path) -> Any:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc.strerror}") from None
    return loads(text)


def _matrix(v, where: str, shape=None, integer: bool = False) -> np.ndarray:
    if not isinstance(v, list) or not v or not all(isinstance(r, list) for r in v):
        raise SchemaError("expected a non-empty array of arrays", where)
    width = len(v[0])
    for i, row in enumerate(v):
        if len(row) != width:
            raise SchemaError(f"row {i} has {len(row)} entries, row 0 has {width}", where)
        for j, x in enumerate(row):
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                raise SchemaError(f"entry ({i}, {j}) is not a number", where)
            if integer and int(x) != x:
                raise SchemaError(f"entry ({i}, {j}) is not an integer", where)
    m = np.array(v, dtype=np.int64 if integer else float)
    if shape is not None and m.shape != shape:
        raise SchemaError(f"expected shape {shape}, got {m.shape}", where)
    if not integer and not np.all(np.isfinite(m)):
        raise SchemaError("entries must be finite", where)
    return m


def _vector(v, where: str, size: int) -> np.ndarray:
    if not isinstance(v, list) or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v):
        raise SchemaError("expected an array of numbers", where)
    if len(v) != size:
        raise SchemaError(f"expected {size} entries, got {len(v)}", where)
    return np.array(v, dtype=float)


def _number(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError("expected a number", where)
    return float(v)


def _object(v, where: str, allowed: set) -> dict:
    if not isinstance(v, dict):
        raise SchemaError("expected an object", where)
    extra = set(v) - allowed
    if extra:
        raise SchemaError(f"unknown field(s) {sorted(extra)}", where)
    return v


def parse_policy(obj, n: int, num_maps: int) -> DelayPolicy:
    obj = _object(obj, "delay.policy", {"kind", "matrix", "choices"})
    kind = obj.get("kind")
    if kind not in POLICY_KINDS:
        raise SchemaError(f"kind must be one of {list(POLICY_KINDS)}, got {kind!r}", "delay.policy.kind")
    if kind == "fixed":
        if "matrix" not in obj:
            raise SchemaError("missing field 'matrix'", "delay.policy")
        return DelayPolicy.fixed(_matrix(obj["matrix"], "delay.policy.matrix", (n, n), integer=True))
    if kind == "explicit":
        choices = obj.get("choices")
        if not isinstance(choices, list):
            raise SchemaError("missing or non-array field 'choices'", "delay.policy")
        if len(choices) != num_maps:
            raise SchemaError(f"need one choice list per map ({num_maps}), got {len(choices)}", "delay.policy.choices")
        parsed = []
        for k, opts in enumerate(choices):
            where = f"delay.policy.choices[{k}]"
            if not isinstance(opts, list):
                raise SchemaError("expected an array", where)
            row = []
            for q, o in enumerate(opts):
                o = _object(o, f"{where}[{q}]", {"delay", "prob"})
                for key in ("delay", "prob"):
                    if key not in o:
                        raise SchemaError(f"missing field '{key}'", f"{where}[{q}]")
                row.append((_matrix(o["delay"], f"{where}[{q}].delay", (n, n), integer=True),
                            _number(o["prob"], f"{where}[{q}].prob")))
            parsed.append(row)
        try:
            return DelayPolicy.explicit(parsed)
        except ValueError as exc:
            raise SchemaError(str(exc), "delay.policy.choices") from None
    return DelayPolicy(kind)


def parse_system(obj):
    """Build a system from a decoded spec. Returns a :class:`SwitchedSystem`,
    :class:`IntervalEnsemble` or :class:`DelayedSwitchedSystem`."""
    obj = _object(obj, "spec", {"n", "maps", "ensemble", "delay", "description", "lipschitz"})
    n = obj.get("n")
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise SchemaError("field 'n' must be a positive integer", "n")
    if ("maps" in obj) == ("ensemble" in obj):
        raise SchemaError("exactly one of 'maps' or 'ensemble' is required", "spec")
    if "maps" in obj:
        maps_in = obj["maps"]
        if not isinstance(maps_in, list) or not maps_in:
            raise SchemaError("must be a non-empty array", "maps")
        maps, weights = [], []
        for k, m in enumerate(maps_in):
            where = f"maps[{k}]"
            m = _object(m, where, {"linear", "gain", "bias", "weight", "name"})
            if "weight" not in m:
                raise SchemaError("missing field 'weight'", where)
            lin = _matrix(m["linear"], f"{where}.linear", (n, n)) if "linear" in m else None
            gain = _matrix(m["gain"], f"{where}.gain", (n, n)) if "gain" in m else None
            bias = _vector(m["bias"], f"{where}.bias", n) if "bias" in m else None
            maps.append(MapSpec.build(n, lin, gain, bias))
            weights.append(_number(m["weight"], f"{where}.weight"))
        try:
            system = SwitchedSystem(tuple(maps), np.array(weights))
        except ValueError as exc:
            raise SchemaError(str(exc), "maps") from None
        num_maps = len(maps)
    else:
        e = _object(obj["ensemble"], "ensemble", {"lower", "upper"})
        for key in ("lower", "upper"):
            if key not in e:
                raise SchemaError(f"missing field '{key}'", "ensemble")
        try:
            system = IntervalEnsemble(_matrix(e["lower"], "ensemble.lower", (n, n)),
                                      _matrix(e["upper"], "ensemble.upper", (n, n)))
        except SchemaError:
            raise
        except ValueError as exc:
            raise SchemaError(str(exc), "ensemble") from None
        num_maps = 1
    if "lipschitz" in obj:
        # informational; written by ``embed --lipschitz``, checked for shape only
        lip = obj["lipschitz"]
        if not isinstance(lip, list) or len(lip) != num_maps:
            raise SchemaError(f"expected one matrix per map ({num_maps})", "lipschitz")
        for k, a in enumerate(lip):
            _matrix(a, f"lipschitz[{k}]", (n, n))
    if "delay" not in obj:
        return system
    d = _object(obj["delay"], "delay", {"L", "policy"})
    L = d.get("L")
    if isinstance(L, bool) or not isinstance(L, int) or L < 0:
        raise SchemaError("'L' must be a nonnegative integer", "delay.L")
    if "policy" not in d:
        raise SchemaError("missing field 'policy'", "delay")
    policy = parse_policy(d["policy"], n, num_maps)
    try:
        return delayed_system(system, policy, L)
    except ValueError as exc:
        raise SchemaError(str(exc), "delay") from None


def parse_blocks(obj) -> list[np.ndarray]:
    obj = _object(obj, "spec", {"blocks", "description"})
    blocks = obj.get("blocks")
    if not isinstance(blocks, list) or not blocks:
        raise SchemaError("must be a non-empty array of square matrices", "blocks")
    out = [_matrix(b, f"blocks[{k}]") for k, b in enumerate(blocks)]
    shape = out[0].shape
    for k, b in enumerate(out):
        if b.shape != shape or shape[0] != shape[1]:
            raise SchemaError(f"expected a square block of shape {shape}, got {b.shape}", f"blocks[{k}]")
    return out


def _list(a) -> list:
    return np.asarray(a).tolist()


def policy_to_dict(policy: DelayPolicy) -> dict:
    out: dict[str, Any] = {"kind": policy.kind}
    if policy.kind == "fixed":
        out["matrix"] = _list(np.asarray(policy.matrix, dtype=int))
    elif policy.kind == "explicit":
        out["choices"] = [[{"delay": _list(np.asarray(D, dtype=int)), "prob": float(p)} for D, p in opts]
                          for opts in policy.choices]
    return out


def system_to_dict(sys) -> dict:
    """Inverse of :func:`parse_system`. Raises ``TypeError`` for custom maps."""
    if isinstance(sys, DelayedSwitchedSystem):
        out = system_to_dict(sys.system)
        out["delay"] = {"L": sys.L, "policy": policy_to_dict(sys.policy)}
        return out
    if isinstance(sys, IntervalEnsemble):
        return {"n": sys.n, "ensemble": {"lower": _list(sys.lower), "upper": _list(sys.upper)}}
    if isinstance(sys, SwitchedSystem):
        maps = []
        for f, w in zip(sys.maps, sys.weights):
            if isinstance(f, CustomMap):
                raise TypeError("custom maps have no JSON form")
            maps.append({"linear": _list(f.linear), "gain": _list(f.gain), "bias": _list(f.bias), "weight": float(w)})
        return {"n": sys.n, "maps": maps}
    raise TypeError(f"cannot serialize {type(sys).__name__}")


def dumps(obj, indent: int | None = 2) -> str:
    return json.dumps(obj, indent=indent) + "\n"
