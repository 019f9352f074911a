"""JSON permuton specifications: loading, dumping and hashing."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

import numpy as np

from .measures import GridPermuton, MixturePermuton, Permuton, PermutonError, SegmentPermuton, lebesgue, mix
from .patterns import parse_permutation

BUILTINS = ("lebesgue", "xi", "xi11", "xi22", "mu_ell", "rect_z", "sstar")


def build_builtin(name: str, params: dict | None = None) -> Permuton:
    from . import models

    params = dict(params or {})
    if name == "lebesgue":
        return lebesgue()
    if name == "xi":
        return models.xi()
    if name == "xi11":
        return models.xi11()
    if name == "xi22":
        return models.xi22()
    if name == "mu_ell":
        return models.mu_ell(float(_need(params, "ell", name)))
    if name == "rect_z":
        return models.rect_permuton(float(_need(params, "z", name)))
    if name == "sstar":
        eta = params.get("eta", "2143")
        eta = parse_permutation(eta) if isinstance(eta, str) else tuple(eta)
        return models.sstar_inflate(eta, float(_need(params, "z", name)))
    raise PermutonError(f"unknown builtin permuton {name!r}; choose from {', '.join(BUILTINS)}")


def _need(params: dict, key: str, name: str):
    if key not in params or params[key] is None:
        raise PermutonError(f"builtin {name!r} needs parameter {key!r}")
    return params[key]


def from_spec(spec: dict[str, Any]) -> Permuton:
    """Build a permuton from its JSON description (validated)."""
    if not isinstance(spec, dict) or "type" not in spec:
        raise PermutonError("permuton spec must be an object with a 'type'")
    kind = spec["type"]
    if kind == "grid":
        dens = np.asarray(spec["density"], dtype=float)
        if "m" in spec and dens.shape != (spec["m"], spec["m"]):
            raise PermutonError(f"grid density shape {dens.shape} does not match m={spec['m']}")
        return GridPermuton(dens)
    if kind == "segments":
        rows = [(tuple(s["from"]), tuple(s["to"]), float(s["weight"])) for s in spec["segments"]]
        return SegmentPermuton(rows)
    if kind == "mixture":
        comps = [from_spec(c) for c in spec["components"]]
        return mix(comps, spec["weights"])
    if kind == "builtin":
        return build_builtin(spec["name"], spec.get("params"))
    raise PermutonError(f"unknown permuton type {kind!r}")


def to_spec(mu: Permuton) -> dict[str, Any]:
    if isinstance(mu, GridPermuton):
        return {"type": "grid", "m": mu.m, "density": mu.density.tolist()}
    if isinstance(mu, SegmentPermuton):
        return {
            "type": "segments",
            "segments": [{"from": [a, b], "to": [c, d], "weight": w} for a, b, c, d, w in mu.segments.tolist()],
        }
    if isinstance(mu, MixturePermuton):
        return {"type": "mixture", "weights": mu.weights.tolist(), "components": [to_spec(c) for c in mu.components]}
    raise PermutonError(f"cannot serialise {type(mu).__name__}")


def spec_hash(spec: dict[str, Any]) -> str:
    """Short SHA-256 of the canonical JSON form."""
    text = json.dumps(spec, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def resolve(source: str, params: dict | None = None) -> tuple[Permuton, dict[str, Any]]:
    """Permuton and its spec from ``builtin:<name>``, a JSON file path or inline JSON."""
    if source.startswith("builtin:"):
        name = source.split(":", 1)[1]
        used = {k: v for k, v in (params or {}).items() if v is not None}
        spec = {"type": "builtin", "name": name, "params": _relevant(name, used)}
    elif source.lstrip().startswith("{"):
        spec = json.loads(source)
    else:
        spec = json.loads(Path(source).read_text())
    return from_spec(spec), spec


def _relevant(name: str, params: dict) -> dict:
    keys = {"mu_ell": ("ell",), "rect_z": ("z",), "sstar": ("z", "eta")}.get(name, ())
    return {k: params[k] for k in keys if k in params}
