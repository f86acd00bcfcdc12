"""Parameterised designs: evaluation, part-size gradients, targeted size edits.

A design is a function from a parameter vector X to a fixed list of parts.
Part sizes in material space are driven through gradients computed by central
finite differencing, and size edits solve the first-order system in the
least-squares (over-constrained) or least-norm (under-constrained) sense.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linsolve import min_norm_lstsq
from .parts import Part, contour_for, material_extents

# Central finite-difference step (mm); small against the raster resolution,
# large against solver tolerances.  Configurable per evaluator.
FD_STEP = 0.1

# Gradient entries (and predicted size changes) below this are treated as zero.
GRAD_EPS = 1e-9


class NoInfluenceError(ValueError):
    """No parameter combination can move the requested part size."""


@dataclass(frozen=True, eq=False)
class DesignParams:
    """The configuration vector: named real-valued entries in mm."""

    values: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        if len(self.names) != v.shape[0]:
            raise ValueError("names/values length mismatch")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, DesignParams)
            and self.names == other.names
            and np.array_equal(self.values, other.values)
        )

    def __len__(self) -> int:
        return self.values.shape[0]

    def with_values(self, values: np.ndarray) -> "DesignParams":
        return DesignParams(np.array(values, dtype=float), self.names)

    def key(self) -> bytes:
        return self.values.tobytes()


def size_vector(parts: list[Part]) -> np.ndarray:
    """Material-space sizes s with s[2i] = w_i and s[2i+1] = h_i."""
    s = np.empty(2 * len(parts))
    for i, p in enumerate(parts):
        w, h = material_extents(p)
        s[2 * i] = w
        s[2 * i + 1] = h
    return s


class DesignEvaluator:
    """Maps a parameter vector to parts; subclasses implement `evaluate`.

    Evaluators must be cheap to duplicate and continuous: a parameter
    perturbation of d mm moves every part vertex by O(d).
    """

    parameter_names: tuple[str, ...] = ()
    part_count: int = 0
    thickness: float = 3.0
    fd_step: float = FD_STEP

    def evaluate(self, x: np.ndarray) -> list[Part]:
        raise NotImplementedError

    @property
    def parameter_count(self) -> int:
        return len(self.parameter_names)

    def initial_params(self) -> DesignParams:
        raise NotImplementedError

    def length_var_indices(self) -> set[int]:
        """Parameter indices that represent plank side lengths."""
        return set()

    def min_lengths(self) -> dict[int, float]:
        """Lower bounds for length-type parameters (mm)."""
        return {}

    def field_row(self, part_index: int, fld: str) -> tuple[np.ndarray, float]:
        """Affine map X -> part box field (one of cx, cy, cz, lx, ly).

        Returns (coeffs, const) with field = coeffs @ X + const.  The default
        differentiates numerically; both bundled evaluators are affine so the
        result is exact.
        """
        x0 = self.initial_params().values
        h = self.fd_step
        coeffs = np.zeros(len(x0))
        for j in range(len(x0)):
            xp = x0.copy()
            xm = x0.copy()
            xp[j] += h
            xm[j] -= h
            coeffs[j] = (self._field(xp, part_index, fld) - self._field(xm, part_index, fld)) / (2 * h)
        coeffs[np.abs(coeffs) < GRAD_EPS] = 0.0
        const = self._field(x0, part_index, fld) - coeffs @ x0
        return coeffs, const

    def _field(self, x: np.ndarray, part_index: int, fld: str) -> float:
        p = self.evaluate(x)[part_index]
        if fld == "lx":
            return p.lx
        if fld == "ly":
            return p.ly
        if fld in ("cx", "cy", "cz"):
            return float(p.center["cxcycz".index(fld) // 2])
        raise KeyError(fld)


@dataclass
class PlankSpec:
    """Template for one plank in a ConstrainedPlankDesign."""

    shape: str | np.ndarray = "rect"
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    lx: float = 100.0
    ly: float = 100.0
    normal_axis: int = 2
    min_length: float = 10.0


class ConstrainedPlankDesign(DesignEvaluator):
    """X holds every plank's centre and side lengths: (cx, cy, cz, lx, ly)."""

    FIELDS = ("cx", "cy", "cz", "lx", "ly")

    def __init__(self, planks: list[PlankSpec], thickness: float = 3.0):
        self.planks = planks
        self.thickness = thickness
        self.part_count = len(planks)
        names = []
        for i in range(len(planks)):
            names.extend(f"p{i}.{f}" for f in self.FIELDS)
        self.parameter_names = tuple(names)

    def initial_params(self) -> DesignParams:
        vals = []
        for p in self.planks:
            vals.extend([*p.center, p.lx, p.ly])
        return DesignParams(np.array(vals), self.parameter_names)

    def evaluate(self, x: np.ndarray) -> list[Part]:
        parts = []
        for i, spec in enumerate(self.planks):
            cx, cy, cz, lx, ly = x[5 * i : 5 * i + 5]
            parts.append(
                Part(
                    id=i,
                    contour=contour_for(spec.shape, lx, ly),
                    center=np.array([cx, cy, cz]),
                    lx=float(lx),
                    ly=float(ly),
                    thickness=self.thickness,
                    normal_axis=spec.normal_axis,
                )
            )
        return parts

    def length_var_indices(self) -> set[int]:
        return {5 * i + k for i in range(self.part_count) for k in (3, 4)}

    def min_lengths(self) -> dict[int, float]:
        out = {}
        for i, spec in enumerate(self.planks):
            out[5 * i + 3] = spec.min_length
            out[5 * i + 4] = spec.min_length
        return out

    def var_index(self, part_index: int, fld: str) -> int:
        return 5 * part_index + self.FIELDS.index(fld)

    def field_row(self, part_index: int, fld: str) -> tuple[np.ndarray, float]:
        coeffs = np.zeros(5 * self.part_count)
        coeffs[self.var_index(part_index, fld)] = 1.0
        return coeffs, 0.0


@dataclass
class AffineExpr:
    """const + sum(coef * X[param_index]) for one part box field."""

    const: float = 0.0
    terms: tuple[tuple[int, float], ...] = ()

    def value(self, x: np.ndarray) -> float:
        return self.const + sum(c * x[j] for j, c in self.terms)

    def coeffs(self, n: int) -> np.ndarray:
        row = np.zeros(n)
        for j, c in self.terms:
            row[j] += c
        return row


class ParametricDesign(DesignEvaluator):
    """A few named parameters mapped to part box fields by affine expressions."""

    def __init__(
        self,
        parameter_names: list[str],
        initial_values: list[float],
        part_exprs: list[dict[str, AffineExpr]],
        shapes: list[str | np.ndarray] | None = None,
        normal_axes: list[int] | None = None,
        thickness: float = 3.0,
        length_params: dict[int, float] | None = None,
    ):
        self.parameter_names = tuple(parameter_names)
        self._initial = np.array(initial_values, dtype=float)
        self.part_exprs = part_exprs
        self.shapes = shapes or ["rect"] * len(part_exprs)
        self.normal_axes = normal_axes or [2] * len(part_exprs)
        self.thickness = thickness
        self.part_count = len(part_exprs)
        # parameter index -> min length; declares the parameter length-typed
        self._length_params = dict(length_params or {})

    def initial_params(self) -> DesignParams:
        return DesignParams(self._initial.copy(), self.parameter_names)

    def evaluate(self, x: np.ndarray) -> list[Part]:
        parts = []
        for i, exprs in enumerate(self.part_exprs):
            cx = exprs["cx"].value(x)
            cy = exprs["cy"].value(x)
            cz = exprs["cz"].value(x)
            lx = exprs["lx"].value(x)
            ly = exprs["ly"].value(x)
            parts.append(
                Part(
                    id=i,
                    contour=contour_for(self.shapes[i], lx, ly),
                    center=np.array([cx, cy, cz]),
                    lx=float(lx),
                    ly=float(ly),
                    thickness=self.thickness,
                    normal_axis=self.normal_axes[i],
                )
            )
        return parts

    def length_var_indices(self) -> set[int]:
        return set(self._length_params)

    def min_lengths(self) -> dict[int, float]:
        return dict(self._length_params)

    def field_row(self, part_index: int, fld: str) -> tuple[np.ndarray, float]:
        expr = self.part_exprs[part_index][fld]
        return expr.coeffs(self.parameter_count), expr.const


class GradientCache:
    """Part-size gradients keyed by the parameter vector bytes."""

    def __init__(self, evaluator: DesignEvaluator):
        self.evaluator = evaluator
        self._key: bytes | None = None
        self._value: np.ndarray | None = None

    def gradients(self, x: np.ndarray, orientations: list[int] | None = None) -> np.ndarray:
        key = x.tobytes() + bytes(orientations or [])
        if key != self._key:
            self._value = size_gradients(self.evaluator, x, orientations)
            self._key = key
        return self._value


def _sizes_at(evaluator: DesignEvaluator, x: np.ndarray, orientations: list[int] | None) -> np.ndarray:
    parts = evaluator.evaluate(x)
    if orientations is not None:
        for p, o in zip(parts, orientations):
            p.pose.o = o
    return size_vector(parts)


def size_gradients(
    evaluator: DesignEvaluator, x: np.ndarray, orientations: list[int] | None = None
) -> np.ndarray:
    """G[i, j] = d s_i / d x_j by central differences at step `fd_step`."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    h = evaluator.fd_step
    g = np.empty((2 * evaluator.part_count, n))
    for j in range(n):
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        g[:, j] = (_sizes_at(evaluator, xp, orientations) - _sizes_at(evaluator, xm, orientations)) / (2 * h)
    g[np.abs(g) < GRAD_EPS] = 0.0
    return g


@dataclass
class SizeChange:
    """Result of a targeted size edit."""

    params: DesignParams
    predicted: np.ndarray  # first-order size changes for the returned delta
    dependence: int  # nonzero entries of `predicted`
    residual: float  # ||G delta - target||


def change_part_sizes(
    x: DesignParams,
    target: np.ndarray,
    evaluator: DesignEvaluator,
    orientations: list[int] | None = None,
    gradients: np.ndarray | None = None,
) -> SizeChange:
    """Solve for a parameter delta whose first-order size change matches `target`."""
    g = gradients if gradients is not None else size_gradients(evaluator, x.values, orientations)
    target = np.asarray(target, dtype=float)
    delta = min_norm_lstsq(g, target)
    predicted = g @ delta
    predicted[np.abs(predicted) < GRAD_EPS] = 0.0
    dep = int(np.count_nonzero(predicted))
    residual = float(np.linalg.norm(predicted - target))
    return SizeChange(x.with_values(x.values + delta), predicted, dep, residual)


def change_part_size(
    x: DesignParams,
    size_index: int,
    amount: float,
    evaluator: DesignEvaluator,
    orientations: list[int] | None = None,
    gradients: np.ndarray | None = None,
) -> SizeChange:
    """Change one material-space size by `amount` mm, others held where possible."""
    g = gradients if gradients is not None else size_gradients(evaluator, x.values, orientations)
    if not np.any(g[size_index] != 0.0):
        raise NoInfluenceError(f"size s_{size_index} is not influenced by any parameter")
    target = np.zeros(g.shape[0])
    target[size_index] = amount
    return change_part_sizes(x, target, evaluator, orientations, gradients=g)
