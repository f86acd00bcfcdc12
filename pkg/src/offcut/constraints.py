"""Linear design constraints and sparse correction solving.

The system C(X) = s holds linear rows over the design parameter vector.  When
an edit X+u breaks it, `correct_for_design_constraint` computes a sparse
correction d with d_i = 0 wherever u_i != 0, growing the support greedily
(orthogonal-matching-pursuit style) and preferring position variables over
length variables.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .linsolve import min_norm_lstsq

# Residual acceptance threshold in mm.
EPS_RES = 1e-9


class Status(enum.Enum):
    SOLVED = "solved"
    FAILED = "failed"


@dataclass
class ConstraintRow:
    coeffs: tuple[tuple[int, float], ...]  # (variable index, coefficient)
    target: float
    kind: str = "equal-length"
    dynamic: bool = False

    def dense(self, n: int) -> np.ndarray:
        row = np.zeros(n)
        for j, c in self.coeffs:
            row[j] += c
        return row


@dataclass
class ConstraintSystem:
    """Rows C, targets s, plus variable typing for the greedy scorer."""

    nvars: int
    rows: list[ConstraintRow] = field(default_factory=list)
    length_vars: set[int] = field(default_factory=set)
    min_lengths: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        for row in self.rows:
            self._check_row(row)

    def _check_row(self, row: ConstraintRow):
        for j, _ in row.coeffs:
            if not 0 <= j < self.nvars:
                raise IndexError(f"constraint references variable {j} of {self.nvars}")

    def add_row(self, row: ConstraintRow):
        self._check_row(row)
        self.rows.append(row)

    def add_dynamic_row(self, row: ConstraintRow) -> bool:
        """Append a dynamic row unless an identical row already exists."""
        row.dynamic = True
        sig = (row.kind, row.coeffs, round(row.target, 9))
        for r in self.rows:
            if (r.kind, r.coeffs, round(r.target, 9)) == sig:
                return False
        self.add_row(row)
        return True

    def drop_dynamic_rows(self, keep: int | None = None):
        """Remove dynamic rows; with `keep`, only rows appended after index `keep`."""
        if keep is None:
            self.rows = [r for r in self.rows if not r.dynamic]
        else:
            del self.rows[keep:]

    def matrix(self) -> np.ndarray:
        m = np.zeros((len(self.rows), self.nvars))
        for i, row in enumerate(self.rows):
            for j, c in row.coeffs:
                m[i, j] += c
        return m

    def targets(self) -> np.ndarray:
        return np.array([r.target for r in self.rows])

    def copy(self) -> "ConstraintSystem":
        return ConstraintSystem(
            self.nvars,
            [ConstraintRow(r.coeffs, r.target, r.kind, r.dynamic) for r in self.rows],
            set(self.length_vars),
            dict(self.min_lengths),
        )

    def signature(self) -> tuple:
        return tuple((r.kind, r.coeffs, r.target, r.dynamic) for r in self.rows)

    def satisfies_min_lengths(self, p: np.ndarray, tol: float = 1e-9) -> bool:
        return all(p[j] >= m - tol for j, m in self.min_lengths.items())


@dataclass
class CorrectionResult:
    d: np.ndarray
    active_set: list[int]
    residual: float
    status: Status

    @property
    def solved(self) -> bool:
        return self.status is Status.SOLVED


def residual(system: ConstraintSystem, p: np.ndarray) -> np.ndarray:
    """r_i = c_i . p - s_i for every row."""
    return system.matrix() @ p - system.targets()


def violated_rows(system: ConstraintSystem, p: np.ndarray, tol: float = EPS_RES) -> list[dict]:
    """Diagnostics for rows not satisfied at p (used by the service's override mode)."""
    r = residual(system, p)
    out = []
    for i, row in enumerate(system.rows):
        if abs(r[i]) > tol:
            out.append({"row": i, "kind": row.kind, "residual": float(r[i])})
    return out


def score_variable(
    var: int,
    column: np.ndarray,
    res: np.ndarray,
    system: ConstraintSystem,
    value: float,
) -> float:
    """Greedy selection score: positions free, lengths penalised, bounds fatal.

    The predicted single-variable move is the 1D least-squares step
    m = -(c.r)/(c.c).
    """
    cc = float(column @ column)
    if cc == 0.0:
        return -np.inf
    m = -float(column @ res) / cc
    if var not in system.length_vars:
        return 0.0
    bound = system.min_lengths.get(var)
    if bound is not None and value + m < bound:
        return -np.inf
    return -abs(m)


def solve_partial_correction(
    active: list[int], system: ConstraintSystem, p: np.ndarray
) -> np.ndarray:
    """Minimal-norm least-squares correction supported on `active` only."""
    d = np.zeros(system.nvars)
    if not active:
        return d
    m = system.matrix()
    rhs = system.targets() - m @ p
    d_active = min_norm_lstsq(m[:, active], rhs)
    d[active] = d_active
    return d


def correct_for_design_constraint(
    system: ConstraintSystem,
    x: np.ndarray,
    u: np.ndarray,
    seed_vars: list[int] | None = None,
) -> CorrectionResult:
    """Sparse correction d restoring C(X+u+d) = s with d zero on u's support.

    Greedy loop: among variables of unsatisfied rows (excluding the active set
    and u-touched variables) pick the best-scoring one, grow the active set,
    re-solve the restricted system, stop when the residual drops below EPS_RES.
    Ties resolve to the lowest variable index.  On failure the best partial
    correction found is returned with status FAILED.
    """
    p0 = x + u
    frozen = {int(i) for i in np.nonzero(u)[0]}
    active: list[int] = [v for v in (seed_vars or []) if v not in frozen]

    d = solve_partial_correction(active, system, p0)
    r = residual(system, p0 + d)
    best_d, best_res = d, float(np.linalg.norm(r))
    cmat = system.matrix()

    while True:
        rnorm = float(np.linalg.norm(r))
        if rnorm < best_res:
            best_d, best_res = d, rnorm
        if rnorm < EPS_RES:
            return CorrectionResult(d, active, rnorm, Status.SOLVED)

        unsatisfied = np.abs(r) > EPS_RES
        candidates = sorted(
            {
                j
                for i in np.nonzero(unsatisfied)[0]
                for j, c in system.rows[i].coeffs
                if c != 0.0
            }
            - set(active)
            - frozen
        )
        if not candidates:
            return CorrectionResult(best_d, active, best_res, Status.FAILED)

        best_var = None
        best_score = -np.inf
        for v in candidates:
            sc = score_variable(v, cmat[:, v], r, system, float(p0[v] + d[v]))
            if best_var is None or sc > best_score:
                best_var = v
                best_score = sc

        active.append(best_var)
        d = solve_partial_correction(active, system, p0)
        r = residual(system, p0 + d)


# --- constraint compilation ---------------------------------------------------
#
# User-facing constraint kinds compile to linear rows at construction time.
# `var` resolution (name -> X index) is evaluator-specific and supplied by the
# caller as a resolve function.


def compile_constraint(kind: str, spec: dict, field_row) -> list[ConstraintRow]:
    """Compile one document-level constraint into linear rows.

    `field_row(part, fld)` yields the affine row (coeffs over X, const) of a
    part box field, as provided by the design evaluator.
    """

    def row_from_fields(pairs: list[tuple[int, str, float]], target: float, kind: str) -> ConstraintRow:
        coeffs: dict[int, float] = {}
        const = 0.0
        for part, fld, w in pairs:
            vec, c0 = field_row(part, fld)
            const += w * c0
            for j in np.nonzero(vec)[0]:
                coeffs[int(j)] = coeffs.get(int(j), 0.0) + w * float(vec[j])
        items = tuple(sorted(coeffs.items()))
        return ConstraintRow(items, target - const, kind)

    if kind == "equal-length":
        a_part, a_fld = spec["a"]
        b_part, b_fld = spec["b"]
        return [row_from_fields([(a_part, a_fld, 1.0), (b_part, b_fld, -1.0)], 0.0, kind)]
    if kind == "sum-of-lengths":
        pairs = [(p, f, 1.0) for p, f in spec["plus"]]
        pairs += [(p, f, -1.0) for p, f in spec.get("minus", [])]
        return [row_from_fields(pairs, float(spec.get("target", 0.0)), kind)]
    if kind == "fixed-length":
        part, fld = spec["a"]
        return [row_from_fields([(part, fld, 1.0)], float(spec["value"]), kind)]
    if kind == "equal-position":
        axis = spec["axis"]
        fld = "c" + axis
        a, b = spec["a"], spec["b"]
        rows = [row_from_fields([(a, fld, 1.0), (b, fld, -1.0)], float(spec.get("offset", 0.0)), kind)]
        return rows
    if kind == "symmetry":
        # mirror about axis=value: equal lengths plus mirrored centres
        a, b = spec["a"], spec["b"]
        axis = spec["axis"]
        mirror = float(spec["value"])
        fld = "c" + axis
        rows = [
            row_from_fields([(a, "lx", 1.0), (b, "lx", -1.0)], 0.0, kind),
            row_from_fields([(a, "ly", 1.0), (b, "ly", -1.0)], 0.0, kind),
            row_from_fields([(a, fld, 1.0), (b, fld, 1.0)], 2.0 * mirror, kind),
        ]
        other = [ax for ax in "xyz" if ax != axis]
        for ax in other:
            rows.append(row_from_fields([(a, "c" + ax, 1.0), (b, "c" + ax, -1.0)], 0.0, kind))
        return rows
    if kind == "ground":
        # part bottom touches z=0: cz - 0.5 * (extent along z) = 0
        part = spec["a"]
        zfld = spec["z_length_field"]  # which side length runs along global z
        if zfld == "thickness":
            vec, c0 = field_row(part, "cz")
            items = tuple((int(j), float(vec[j])) for j in np.nonzero(vec)[0])
            return [ConstraintRow(items, 0.5 * float(spec["thickness"]) - c0, kind)]
        return [row_from_fields([(part, "cz", 1.0), (part, zfld, -0.5)], 0.0, kind)]
    if kind == "fixed-position":
        part, axis = spec["a"], spec["axis"]
        return [row_from_fields([(part, "c" + axis, 1.0)], float(spec["value"]), kind)]
    if kind == "linear":
        pairs = [(t["part"], t["field"], float(t["coef"])) for t in spec["terms"]]
        return [row_from_fields(pairs, float(spec.get("target", 0.0)), kind)]
    raise KeyError(f"unknown constraint kind {kind!r}")
