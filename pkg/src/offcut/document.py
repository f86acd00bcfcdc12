"""Design document persistence: strict-schema JSON with a canonical form.

A document carries the material, master boards, the design (either raw plank
parameters or a parametric model with affine expressions), the design
constraints and the effectiveness spec.  Serialization is canonical (sorted
keys, fixed layout, shortest-repr floats), so saves are byte-stable and
round-trip exactly: parameters adopted from the optimizer keep full precision
and stay on the constraint manifold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import jsonschema
import numpy as np

from .constraints import ConstraintSystem, compile_constraint
from .design import (
    AffineExpr,
    ConstrainedPlankDesign,
    DesignParams,
    ParametricDesign,
    PlankSpec,
)
from .effectiveness import EffectivenessSpec, InnerVolume, SagSpec
from .fem import Material, PartLoad


class DesignDocumentError(ValueError):
    """Schema violation, with a path-qualified message."""


_REF = {"type": "array", "prefixItems": [{"type": "integer"}, {"enum": ["lx", "ly"]}],
        "items": False, "minItems": 2, "maxItems": 2}

_AXIS = {"enum": ["x", "y", "z"]}

_CONSTRAINT = {
    "type": "object",
    "properties": {
        "kind": {"enum": [
            "equal-length", "sum-of-lengths", "fixed-length", "equal-position",
            "symmetry", "ground", "fixed-position", "linear",
        ]},
        "a": {},
        "b": {},
        "plus": {"type": "array", "items": _REF},
        "minus": {"type": "array", "items": _REF},
        "axis": _AXIS,
        "value": {"type": "number"},
        "target": {"type": "number"},
        "offset": {"type": "number"},
        "terms": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "part": {"type": "integer"},
                    "field": {"enum": ["cx", "cy", "cz", "lx", "ly"]},
                    "coef": {"type": "number"},
                },
                "required": ["part", "field", "coef"],
                "additionalProperties": False,
            },
        },
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_EXPR = {
    "type": "object",
    "properties": {
        "const": {"type": "number"},
        "terms": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "param": {"type": "string"},
                    "coef": {"type": "number"},
                },
                "required": ["param", "coef"],
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}

_SHAPE = {
    "oneOf": [
        {"enum": ["rect", "u", "l", "quarter_disc"]},
        {
            "type": "array",
            "minItems": 3,
            "items": {
                "type": "array",
                "prefixItems": [{"type": "number"}, {"type": "number"}],
                "items": False,
                "minItems": 2,
                "maxItems": 2,
            },
        },
    ]
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "schema": {"const": 1},
        "material": {
            "type": "object",
            "properties": {
                "thickness_mm": {"type": "number", "exclusiveMinimum": 0},
                "youngs_mpa": {"type": "number", "exclusiveMinimum": 0},
                "poisson": {"type": "number"},
                "density_kg_m3": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["thickness_mm"],
            "additionalProperties": False,
        },
        "boards": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    "width_mm": {"type": "number", "exclusiveMinimum": 0},
                    "height_mm": {"type": "number", "exclusiveMinimum": 0},
                },
                "required": ["width_mm", "height_mm"],
                "additionalProperties": False,
            },
        },
        "design": {
            "type": "object",
            "properties": {
                "type": {"enum": ["planks", "parametric"]},
                "parts": {"type": "array", "minItems": 1},
                "parameters": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "properties": {
                            "name": {"type": "string"},
                            "value": {"type": "number"},
                            "kind": {"enum": ["length", "position", "free"]},
                            "min_length": {"type": "number"},
                        },
                        "required": ["name", "value"],
                        "additionalProperties": False,
                    },
                },
            },
            "required": ["type", "parts"],
            "additionalProperties": False,
        },
        "constraints": {"type": "array", "items": _CONSTRAINT},
        "effectiveness": {
            "type": "object",
            "properties": {
                "inner_volumes": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "properties": {
                            "support": {"type": "integer"},
                            "height_mm": {"type": "number", "exclusiveMinimum": 0},
                        },
                        "required": ["support", "height_mm"],
                        "additionalProperties": False,
                    },
                },
                "fit_volume": {
                    "type": "object",
                    "properties": {
                        "min": {"type": "array", "items": {"type": "number"},
                                "minItems": 3, "maxItems": 3},
                        "max": {"type": "array", "items": {"type": "number"},
                                "minItems": 3, "maxItems": 3},
                    },
                    "required": ["min", "max"],
                    "additionalProperties": False,
                },
                "sag": {
                    "type": "object",
                    "properties": {
                        "enabled": {"type": "boolean"},
                        "element_size_mm": {"type": "number", "exclusiveMinimum": 0},
                        "threshold_mm": {"type": "number", "exclusiveMinimum": 0},
                        "loads": {
                            "type": "array",
                            "items": {
                                "type": "object",
                                "properties": {
                                    "part": {"type": "integer"},
                                    "newtons": {"type": "number"},
                                    "direction": {"type": "array",
                                                  "items": {"type": "number"},
                                                  "minItems": 3, "maxItems": 3},
                                },
                                "required": ["part", "newtons"],
                                "additionalProperties": False,
                            },
                        },
                    },
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
    },
    "required": ["schema", "material", "boards", "design"],
    "additionalProperties": False,
}

_PLANK_PART = {
    "type": "object",
    "properties": {
        "shape": _SHAPE,
        "center": {"type": "array", "items": {"type": "number"},
                   "minItems": 3, "maxItems": 3},
        "lx": {"type": "number", "exclusiveMinimum": 0},
        "ly": {"type": "number", "exclusiveMinimum": 0},
        "normal_axis": {"enum": [0, 1, 2]},
        "min_length": {"type": "number"},
    },
    "required": ["center", "lx", "ly"],
    "additionalProperties": False,
}

_PARAMETRIC_PART = {
    "type": "object",
    "properties": {
        "shape": _SHAPE,
        "normal_axis": {"enum": [0, 1, 2]},
        "fields": {
            "type": "object",
            "properties": {f: _EXPR for f in ("cx", "cy", "cz", "lx", "ly")},
            "required": ["cx", "cy", "cz", "lx", "ly"],
            "additionalProperties": False,
        },
    },
    "required": ["fields"],
    "additionalProperties": False,
}


@dataclass
class DesignDocument:
    data: dict

    @property
    def thickness(self) -> float:
        return float(self.data["material"]["thickness_mm"])

    @property
    def boards_mm(self) -> list[tuple[float, float]]:
        return [(b["width_mm"], b["height_mm"]) for b in self.data["boards"]]

    def copy(self) -> "DesignDocument":
        return DesignDocument(json.loads(json.dumps(self.data)))


def _validate(data: dict):
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        path = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise DesignDocumentError(f"{path}: {e.message}")
    part_schema = _PLANK_PART if data["design"]["type"] == "planks" else _PARAMETRIC_PART
    pv = jsonschema.Draft202012Validator(part_schema)
    for i, part in enumerate(data["design"]["parts"]):
        for e in sorted(pv.iter_errors(part), key=lambda e: list(e.absolute_path)):
            path = "/".join(["design", "parts", str(i), *map(str, e.absolute_path)])
            raise DesignDocumentError(f"{path}: {e.message}")
    if data["design"]["type"] == "parametric" and "parameters" not in data["design"]:
        raise DesignDocumentError("design: parametric designs require 'parameters'")


def load_design(raw: bytes | str) -> DesignDocument:
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise DesignDocumentError(f"<root>: not valid JSON ({exc})") from exc
    _validate(data)
    return DesignDocument(data)


def save_design(doc: DesignDocument) -> bytes:
    return (json.dumps(doc.data, sort_keys=True, indent=2) + "\n").encode()


# --- runtime construction ----------------------------------------------------------


@dataclass
class Runtime:
    evaluator: object
    x0: DesignParams
    system: ConstraintSystem
    spec: EffectivenessSpec
    boards_mm: list[tuple[float, float]]


def _shape_of(part: dict):
    shape = part.get("shape", "rect")
    if isinstance(shape, list):
        return np.array(shape, dtype=float)
    return shape


def _build_evaluator(doc: DesignDocument):
    design = doc.data["design"]
    if design["type"] == "planks":
        planks = [
            PlankSpec(
                shape=_shape_of(p),
                center=tuple(p["center"]),
                lx=float(p["lx"]),
                ly=float(p["ly"]),
                normal_axis=int(p.get("normal_axis", 2)),
                min_length=float(p.get("min_length", 10.0)),
            )
            for p in design["parts"]
        ]
        return ConstrainedPlankDesign(planks, thickness=doc.thickness)

    params = design["parameters"]
    names = [p["name"] for p in params]
    index = {n: i for i, n in enumerate(names)}
    length_params = {
        index[p["name"]]: float(p.get("min_length", 10.0))
        for p in params
        if p.get("kind") == "length"
    }

    def expr_of(spec: dict) -> AffineExpr:
        terms = tuple((index[t["param"]], float(t["coef"])) for t in spec.get("terms", []))
        return AffineExpr(float(spec.get("const", 0.0)), terms)

    part_exprs = [
        {f: expr_of(p["fields"][f]) for f in ("cx", "cy", "cz", "lx", "ly")}
        for p in design["parts"]
    ]
    return ParametricDesign(
        parameter_names=names,
        initial_values=[float(p["value"]) for p in params],
        part_exprs=part_exprs,
        shapes=[_shape_of(p) for p in design["parts"]],
        normal_axes=[int(p.get("normal_axis", 2)) for p in design["parts"]],
        thickness=doc.thickness,
        length_params=length_params,
    )


def _ground_spec(doc: DesignDocument, evaluator, part: int) -> dict:
    normal = int(doc.data["design"]["parts"][part].get("normal_axis", 2))
    if normal == 2:
        return {"a": part, "z_length_field": "thickness", "thickness": doc.thickness}
    # plane axes in ascending order carry local (x, y); z is always the
    # second one for normal_axis 0 or 1
    return {"a": part, "z_length_field": "ly"}


def build_runtime(doc: DesignDocument) -> Runtime:
    evaluator = _build_evaluator(doc)
    system = ConstraintSystem(
        evaluator.parameter_count,
        [],
        evaluator.length_var_indices(),
        evaluator.min_lengths(),
    )
    for c in doc.data.get("constraints", []):
        kind = c["kind"]
        spec = {k: v for k, v in c.items() if k != "kind"}
        if kind in ("equal-length", "fixed-length"):
            spec["a"] = tuple(c["a"])
            if "b" in c:
                spec["b"] = tuple(c["b"])
        if kind == "sum-of-lengths":
            spec["plus"] = [tuple(r) for r in c["plus"]]
            spec["minus"] = [tuple(r) for r in c.get("minus", [])]
        if kind == "ground":
            spec = _ground_spec(doc, evaluator, int(c["a"]))
        for row in compile_constraint(kind, spec, evaluator.field_row):
            system.add_row(row)

    eff = doc.data.get("effectiveness", {})
    spec = EffectivenessSpec(
        inner_volumes=[
            InnerVolume(int(v["support"]), float(v["height_mm"]))
            for v in eff.get("inner_volumes", [])
        ],
        fit_volume=(
            (tuple(eff["fit_volume"]["min"]), tuple(eff["fit_volume"]["max"]))
            if "fit_volume" in eff
            else None
        ),
    )
    sag = eff.get("sag")
    if sag and sag.get("enabled", True):
        mat = doc.data["material"]
        spec.sag = SagSpec(
            material=Material(
                youngs_mpa=float(mat.get("youngs_mpa", 3000.0)),
                poisson=float(mat.get("poisson", 0.3)),
                density_t_mm3=float(mat.get("density_kg_m3", 700.0)) * 1e-12,
            ),
            loads=[
                PartLoad(
                    int(l["part"]),
                    float(l["newtons"]),
                    tuple(l.get("direction", (0.0, 0.0, -1.0))),
                )
                for l in sag.get("loads", [])
            ],
            element_size=float(sag.get("element_size_mm", 10.0)),
            threshold_mm=float(sag.get("threshold_mm", 0.2)),
        )
    return Runtime(evaluator, evaluator.initial_params(), system, spec, doc.boards_mm)


def doc_with_params(doc: DesignDocument, evaluator, values: np.ndarray) -> DesignDocument:
    """A copy of the document with the design moved to the given parameters."""
    out = doc.copy()
    design = out.data["design"]
    if design["type"] == "planks":
        for i, part in enumerate(design["parts"]):
            part["center"] = [float(values[5 * i + k]) for k in range(3)]
            part["lx"] = float(values[5 * i + 3])
            part["ly"] = float(values[5 * i + 4])
    else:
        for i, p in enumerate(design["parameters"]):
            p["value"] = float(values[i])
    return out
