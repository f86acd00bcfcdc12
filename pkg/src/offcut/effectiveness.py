"""Non-linear design effectiveness constraints and their dynamic enforcement.

Effectiveness covers what linear rows cannot express directly: planks must not
sag under load, user-declared inner volumes (shelf clearances) must stay
clear, and the design must stay inside an optional fit volume.  Violations are
resolved by bisecting along the requested change vector to the first
violation, inserting equality rows that neutralise it, and recursing; all rows
inserted this way are discarded on exit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fem
from .constraints import (
    ConstraintRow,
    ConstraintSystem,
    CorrectionResult,
    Status,
    correct_for_design_constraint,
)
from .design import DesignEvaluator
from .parts import Part

# Bisection resolution along the change vector (dimensionless fraction of u).
EPS_ALPHA = 1e-3

# When a sag freezes a length, the new fixed length is this fraction of the
# last known-good value.
SAG_FREEZE_FACTOR = 0.98

MAX_RECURSION = 16

_PENETRATION_TOL = 1e-9


@dataclass
class InnerVolume:
    """Clear box of height `height` sitting on top of the supporting plank."""

    support: int
    height: float


@dataclass
class SagSpec:
    material: fem.Material = field(default_factory=fem.Material)
    loads: list[fem.PartLoad] = field(default_factory=list)
    element_size: float = 10.0
    threshold_mm: float = fem.SAG_THRESHOLD
    include_gravity: bool = True


@dataclass
class EffectivenessSpec:
    inner_volumes: list[InnerVolume] = field(default_factory=list)
    fit_volume: tuple[tuple[float, float, float], tuple[float, float, float]] | None = None
    sag: SagSpec | None = None


@dataclass
class Violation:
    kind: str  # sag | inner-volume | fit-volume
    parts: tuple[int, ...]
    magnitude: float
    axis: int | None = None  # offending axis for fit-volume / sag span


@dataclass
class EffectivenessVerdict:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _support_box(part: Part) -> tuple[np.ndarray, np.ndarray]:
    return part.box_min(), part.box_max()


def _inner_volume_violations(parts: list[Part], spec: EffectivenessSpec) -> list[Violation]:
    out = []
    by_id = {p.id: p for p in parts}
    for vol in spec.inner_volumes:
        support = by_id[vol.support]
        smin, smax = _support_box(support)
        axis = support.normal_axis
        top = smax[axis]
        vmin = smin.copy()
        vmax = smax.copy()
        vmin[axis] = top
        vmax[axis] = top + vol.height
        for other in parts:
            if other.id == vol.support:
                continue
            omin, omax = other.box_min(), other.box_max()
            overlap = np.minimum(vmax, omax) - np.maximum(vmin, omin)
            if np.all(overlap > _PENETRATION_TOL):
                bottom = max(omin[axis], top)
                magnitude = float(top + vol.height - bottom)
                out.append(
                    Violation("inner-volume", (vol.support, other.id), magnitude, axis)
                )
    return out


def _fit_volume_violations(parts: list[Part], spec: EffectivenessSpec) -> list[Violation]:
    if spec.fit_volume is None:
        return []
    fmin = np.asarray(spec.fit_volume[0], dtype=float)
    fmax = np.asarray(spec.fit_volume[1], dtype=float)
    out = []
    for p in parts:
        pmin, pmax = p.box_min(), p.box_max()
        for axis in range(3):
            over = max(fmin[axis] - pmin[axis], pmax[axis] - fmax[axis])
            if over > _PENETRATION_TOL:
                out.append(Violation("fit-volume", (p.id,), float(over), axis))
    return out


def _sag_violations(parts: list[Part], spec: EffectivenessSpec) -> list[Violation]:
    if spec.sag is None:
        return []
    s = spec.sag
    try:
        report = fem.sag_check(
            parts,
            material=s.material,
            loads=s.loads,
            element_size=s.element_size,
            threshold_mm=s.threshold_mm,
            include_gravity=s.include_gravity,
        )
    except (fem.SingularSystemError, fem.SolveFailedError):
        # conservative: an unsolvable design counts as sagging
        return [Violation("sag", tuple(p.id for p in parts), float("inf"))]
    out = []
    by_id = {p.id: p for p in parts}
    for plank in report.planks:
        if plank.sagging:
            part = by_id[plank.part]
            # span axis: the local direction with the larger deflection run
            rows_max = plank.deflections.max(axis=1)
            cols_max = plank.deflections.max(axis=0)
            axis = 0 if rows_max.max() >= cols_max.max() else 1
            out.append(Violation("sag", (plank.part,), plank.max_deflection, axis))
    return out


def check_effectiveness(
    x: np.ndarray, evaluator: DesignEvaluator, spec: EffectivenessSpec
) -> EffectivenessVerdict:
    """Aggregate sag, inner-volume and fit-volume tests at the point x."""
    parts = evaluator.evaluate(x)
    violations = []
    violations += _inner_volume_violations(parts, spec)
    violations += _fit_volume_violations(parts, spec)
    violations += _sag_violations(parts, spec)
    return EffectivenessVerdict(violations)


def add_dynamic_constraints(
    x_before: np.ndarray,
    x_after: np.ndarray,
    system: ConstraintSystem,
    verdict: EffectivenessVerdict,
    evaluator: DesignEvaluator,
    spec: EffectivenessSpec,
) -> bool:
    """Insert equality rows neutralising the verdict's violations.

    Values are taken at the last known-good point x_before.  Returns False
    when no row could be added (unknown violation kinds or duplicates only),
    which is the caller's termination signal.
    """
    parts_before = evaluator.evaluate(x_before)
    by_id = {p.id: p for p in parts_before}
    added = False
    for vio in verdict.violations:
        if vio.kind == "sag":
            if len(vio.parts) != 1:
                continue
            pid = vio.parts[0]
            part = by_id[pid]
            fld = "lx" if vio.axis == 0 else "ly"
            coeffs, const = evaluator.field_row(pid, fld)
            value = part.lx if fld == "lx" else part.ly
            target = SAG_FREEZE_FACTOR * value - const
            row = ConstraintRow(_row_items(coeffs), target, "dynamic")
            added |= system.add_dynamic_row(row)
        elif vio.kind == "inner-volume":
            support_id, collider_id = vio.parts
            support = by_id[support_id]
            vol = next(v for v in spec.inner_volumes if v.support == support_id)
            axis = "xyz"[vio.axis]
            sc, s0 = evaluator.field_row(support_id, "c" + axis)
            cc, c0 = evaluator.field_row(collider_id, "c" + axis)
            # centre distance that keeps the collider `height` above the
            # support surface
            gap = (
                vol.height
                + 0.5 * support.box_sides()[vio.axis]
                + 0.5 * by_id[collider_id].box_sides()[vio.axis]
            )
            row = ConstraintRow(_row_items(cc - sc), gap - (c0 - s0), "dynamic")
            added |= system.add_dynamic_row(row)
        elif vio.kind == "fit-volume":
            pid = vio.parts[0]
            part = by_id[pid]
            a, b = part.plane_axes()
            if vio.axis == part.normal_axis:
                continue  # thickness is not a design variable
            fld = "lx" if vio.axis == a else "ly"
            coeffs, const = evaluator.field_row(pid, fld)
            value = part.lx if fld == "lx" else part.ly
            row = ConstraintRow(_row_items(coeffs), value - const, "dynamic")
            added |= system.add_dynamic_row(row)
    return added


def _row_items(coeffs: np.ndarray) -> tuple[tuple[int, float], ...]:
    return tuple((int(j), float(coeffs[j])) for j in np.nonzero(coeffs)[0])


@dataclass
class EffectivenessResult:
    """Outcome of the dynamic enforcement along a change vector u.

    `scale` is the fraction of u actually applied (1.0 on success), `d` the
    design-constraint correction on top of x + scale*u, and `point` the final
    corrected parameter vector.  `brackets` records the bisection bracket l at
    every dynamic-row insertion.
    """

    status: Status
    scale: float
    d: np.ndarray
    point: np.ndarray
    residual: float
    active_set: list[int]
    brackets: list[float] = field(default_factory=list)

    @property
    def solved(self) -> bool:
        return self.status is Status.SOLVED


def dynamic_effectiveness_constraints(
    system: ConstraintSystem,
    evaluator: DesignEvaluator,
    spec: EffectivenessSpec,
    x: np.ndarray,
    u: np.ndarray,
    alpha_start: float = 0.0,
    seed_vars: list[int] | None = None,
) -> EffectivenessResult:
    """Correct x+u against both constraint families (bisection enforcement).

    The static constraint system is restored exactly before returning; on
    failure the best feasible partial application of u found so far is
    returned with status FAILED.
    """
    n_static = len(system.rows)
    brackets: list[float] = []
    # fallback: applying none of u leaves the valid starting point
    best = EffectivenessResult(
        Status.FAILED, 0.0, -u.copy(), x.copy(), 0.0, [], brackets
    )

    def effective(pv: np.ndarray) -> bool:
        return check_effectiveness(pv, evaluator, spec).ok

    def probe(scale: float) -> tuple[CorrectionResult, np.ndarray, bool]:
        c = correct_for_design_constraint(system, x, scale * u, seed_vars)
        point = x + scale * u + c.d
        return c, point, c.solved and effective(point)

    def note_best(scale: float, c: CorrectionResult, point: np.ndarray):
        nonlocal best
        if scale >= best.scale:
            best = EffectivenessResult(
                Status.FAILED, scale, (scale * u - u) + c.d, point,
                c.residual, c.active_set, brackets,
            )

    def attempt(alpha: float, depth: int) -> EffectivenessResult:
        corr = correct_for_design_constraint(system, x, u, seed_vars)
        if corr.solved:
            point = x + u + corr.d
            if effective(point):
                return EffectivenessResult(
                    Status.SOLVED, 1.0, corr.d, point, corr.residual,
                    corr.active_set, brackets,
                )

        # bracket the first violation along u in [alpha, 1]
        lo, hi = alpha, 1.0
        lo_corr, lo_point, lo_ok = probe(lo)
        hi_corr, hi_point = corr, x + u + corr.d
        if not lo_ok:
            # the last known-good point stopped being reachable (a freshly
            # inserted row contradicts it): no further progress possible
            return best
        while abs(hi - lo) > EPS_ALPHA:
            mid = 0.5 * (lo + hi)
            c, point, ok = probe(mid)
            if ok:
                lo, lo_corr, lo_point = mid, c, point
            else:
                hi, hi_corr, hi_point = mid, c, point
        note_best(lo, lo_corr, lo_point)

        verdict = check_effectiveness(hi_point, evaluator, spec)
        added = add_dynamic_constraints(
            lo_point, hi_point, system, verdict, evaluator, spec
        )
        brackets.append(lo)
        if not added or depth >= MAX_RECURSION:
            return best
        return attempt(lo, depth + 1)

    try:
        result = attempt(alpha_start, 0)
    finally:
        system.drop_dynamic_rows(keep=n_static)
    return result
