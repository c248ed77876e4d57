"""JSON file formats and deterministic report serialization.

Loaders accept either the plain formats below or a report produced by the
command-line tool, in which case the first output carrying the expected key
is used.

    groupoid    {"points": [...], "classes": [[...], ...], "nu_hat": {point: w}, "class_ids": [...]}
    potential   {"values": {point: v}}
    measure     {"mass": {point: v}}
    modular     {"values": {point: V}}  or  {"table": [[x, y, delta], ...]}
    transverse  {"per_class": {class_id: {point: w}}}
    xy          {"alphabet": [...], "a_priori": [...], "depth": k, "potential": nested, "base_symbol": s}
    cylinder    {"table": nested}
    markov      {"transition": [[...]], "stationary": [...]}
    map         {"map": {point: image}, "codomain": [...]}
"""
from __future__ import annotations

import hashlib
import json
import math
from collections.abc import Mapping
from pathlib import Path

import numpy as np

from .errors import InputError
from .groupoid import (
    FiniteGroupoid,
    Measure,
    ModularFunction,
    PointSpace,
    Potential,
    TransverseFunction,
    build_partition_groupoid,
)
from .xy import CylinderFunction, XYSpec
from .dyn import MarkovSpec


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc


def file_digest(path) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc


def _find(doc, key: str, path):
    """``doc[key]``, looking inside report outputs if needed."""
    if isinstance(doc, Mapping):
        if key in doc:
            return doc
        for out in doc.get("outputs", {}).values():
            val = out.get("value") if isinstance(out, Mapping) else None
            if isinstance(val, Mapping) and key in val:
                return val
    raise InputError(f"{path}: expected a {key!r} entry")


def _labels(space: PointSpace) -> dict:
    return {str(p): p for p in space}


def _point_dict(raw, space: PointSpace, what: str, path) -> dict:
    lookup = _labels(space)
    if isinstance(raw, list):
        if len(raw) != len(space):
            raise InputError(f"{path}: {what} list has {len(raw)} entries for {len(space)} points")
        return dict(zip(space, raw))
    if not isinstance(raw, Mapping):
        raise InputError(f"{path}: {what} must be an object keyed by point")
    out = {}
    for k, v in raw.items():
        p = k if k in space else lookup.get(str(k))
        if p is None:
            raise InputError(f"{path}: unknown point {k!r} in {what}")
        out[p] = v
    return out


def groupoid_from_dict(doc: Mapping, path="<groupoid>") -> tuple[FiniteGroupoid, TransverseFunction]:
    """Groupoid and its ``nu_hat`` (uniform per class if absent), normalized per class."""
    try:
        space = PointSpace(tuple(doc["points"]))
        classes = doc["classes"]
    except (KeyError, TypeError):
        raise InputError(f"{path}: groupoid needs 'points' and 'classes'") from None
    G = build_partition_groupoid(space, classes, doc.get("class_ids"))
    if "nu_hat" in doc:
        vals = _point_dict(doc["nu_hat"], space, "nu_hat", path)
        w = np.array([float(vals.get(p, 0.0)) for p in space])
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise InputError(f"{path}: nu_hat weights must be finite and nonnegative")
        tot = G.class_sum(w)
        if np.any(tot <= 0):
            raise InputError(f"{path}: nu_hat vanishes on class {G.class_ids[int(np.argmin(tot))]!r}")
        nu_hat = TransverseFunction(G, w / tot[G.class_of])
    else:
        nu_hat = TransverseFunction.uniform(G)
    return G, nu_hat


def load_groupoid(path) -> tuple[FiniteGroupoid, TransverseFunction]:
    return groupoid_from_dict(read_json(path), path)


def load_potential(path, space: PointSpace) -> Potential:
    doc = _find(read_json(path), "values", path)
    vals = _point_dict(doc["values"], space, "values", path)
    missing = [p for p in space if p not in vals]
    if missing:
        raise InputError(f"{path}: potential has no value at {missing[0]!r}")
    return Potential.from_dict(space, {p: float(v) for p, v in vals.items()})


def load_measure(path, space: PointSpace) -> Measure:
    doc = _find(read_json(path), "mass", path)
    vals = _point_dict(doc["mass"], space, "mass", path)
    return Measure(space, np.array([float(vals.get(p, 0.0)) for p in space]))


def seed_measure(arg: str, space: PointSpace) -> Measure:
    """``delta:<point>``, ``uniform``, or a measure file."""
    if arg == "uniform":
        return Measure.uniform(space)
    if arg.startswith("delta:"):
        label = arg[len("delta:"):]
        p = label if label in space else _labels(space).get(label)
        if p is None:
            raise InputError(f"unknown point {label!r} in seed measure")
        return Measure.point_mass(space, p)
    return load_measure(arg, space)


def load_modular(path, G: FiniteGroupoid) -> ModularFunction:
    doc = read_json(path)
    if isinstance(doc, Mapping) and "table" in doc:
        lookup = _labels(G.space)
        table = {}
        for row in doc["table"]:
            try:
                x, y, v = row
            except (TypeError, ValueError):
                raise InputError(f"{path}: table rows must be [x, y, value]") from None
            px, py = lookup.get(str(x)), lookup.get(str(y))
            if px is None or py is None:
                raise InputError(f"{path}: unknown point in modular table row {row!r}")
            table[(px, py)] = float(v)
        return ModularFunction.from_table(table)
    return ModularFunction.from_potential(load_potential(path, G.space))


def load_transverse(path, G: FiniteGroupoid) -> TransverseFunction:
    doc = _find(read_json(path), "per_class", path)
    lookup = _labels(G.space)
    per_class = {}
    cids = {str(c): c for c in G.class_ids}
    for cid, row in doc["per_class"].items():
        c = cid if cid in G.class_ids else cids.get(str(cid))
        if c is None:
            raise InputError(f"{path}: unknown class {cid!r}")
        per_class[c] = {lookup.get(str(p), p): float(v) for p, v in row.items()}
    return TransverseFunction.from_per_class(G, per_class)


def load_xy(path) -> XYSpec:
    doc = _find(read_json(path), "potential", path)
    try:
        spec = XYSpec(tuple(doc["alphabet"]), doc["a_priori"], np.asarray(doc["potential"], dtype=float),
                      doc.get("base_symbol"))
    except KeyError as exc:
        raise InputError(f"{path}: XY spec needs {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"{path}: malformed XY spec ({exc})") from None
    if "depth" in doc and int(doc["depth"]) != spec.depth:
        raise InputError(f"{path}: declared depth {doc['depth']} but the potential table has depth {spec.depth}")
    return spec


def xy_to_dict(spec: XYSpec) -> dict:
    return {"alphabet": list(spec.alphabet), "a_priori": spec.a_priori.tolist(), "depth": spec.depth,
            "potential": spec.potential.tolist(), "base_symbol": spec.base_symbol}


def load_cylinder(path, spec: XYSpec) -> CylinderFunction:
    doc = _find(read_json(path), "table", path)
    try:
        table = np.asarray(doc["table"], dtype=float)
    except (TypeError, ValueError):
        raise InputError(f"{path}: cylinder table must be a nested numeric array") from None
    if any(s != spec.d for s in table.shape):
        raise InputError(f"{path}: every axis of the cylinder table must have length {spec.d}")
    return CylinderFunction(table)


def load_markov(path) -> MarkovSpec:
    doc = _find(read_json(path), "transition", path)
    return MarkovSpec(np.asarray(doc["transition"], dtype=float), doc.get("stationary"))


def load_map(path) -> tuple[PointSpace, dict, PointSpace | None]:
    doc = _find(read_json(path), "map", path)
    if not isinstance(doc["map"], Mapping):
        raise InputError(f"{path}: 'map' must be an object from point to image")
    domain = PointSpace(tuple(doc["map"]))
    codomain = PointSpace(tuple(doc["codomain"])) if "codomain" in doc else None
    T = dict(doc["map"])
    if codomain is not None:
        lookup = {str(q): q for q in codomain}
        T = {p: lookup.get(str(q), q) for p, q in T.items()}
    else:
        lookup = _labels(domain)
        T = {p: lookup.get(str(q), q) for p, q in T.items()}
    return domain, T, codomain


def _key(k) -> str:
    return k if isinstance(k, str) else json.dumps(k) if isinstance(k, (list, tuple)) else str(k)


def to_jsonable(obj):
    """Convert numpy values, tuples and label keys to plain JSON types."""
    if isinstance(obj, Mapping):
        return {_key(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def format_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    s = format(x, ".17g")
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """Deterministic JSON with floats at 17 significant digits; non-finite floats become null."""
    obj = to_jsonable(obj) if _level == 0 else obj
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return format_float(obj)
    return json.dumps(obj)
