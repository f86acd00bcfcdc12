"""Plank parts: extruded polygon contours with a material-space pose.

Coordinates are millimetres throughout.  A part is a planar contour extruded
by the material thickness.  In the 3D assembly the extrusion direction is one
of the global axes (``normal_axis``); the contour's local x/y axes map onto
the two remaining global axes in ascending order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Orientation in material space is a quarter-turn index; the corresponding
# angles are 0, pi/2, pi, -pi/2 (index 3 is the clockwise quarter turn).
ORIENTATIONS = (0.0, math.pi / 2.0, math.pi, -math.pi / 2.0)


def orientation_angle(o: int) -> float:
    return ORIENTATIONS[o % 4]


@dataclass
class Pose:
    """Material-space placement: lower-left corner of the part's extent box."""

    u: float = 0.0
    v: float = 0.0
    o: int = 0


@dataclass
class Part:
    """One plank: contour centred on the origin inside an lx-by-ly box."""

    id: int
    contour: np.ndarray  # (n, 2) CCW polygon, centred, fits [-lx/2,lx/2]x[-ly/2,ly/2]
    center: np.ndarray  # 3-vector, assembly position of the box centre
    lx: float
    ly: float
    thickness: float
    normal_axis: int = 2  # global axis aligned with part thickness
    pose: Pose = field(default_factory=Pose)

    def plane_axes(self) -> tuple[int, int]:
        """Global axes carrying the local x and y directions."""
        ax = [a for a in (0, 1, 2) if a != self.normal_axis]
        return ax[0], ax[1]

    def box_min(self) -> np.ndarray:
        return self.center - 0.5 * self.box_sides()

    def box_max(self) -> np.ndarray:
        return self.center + 0.5 * self.box_sides()

    def box_sides(self) -> np.ndarray:
        sides = np.empty(3)
        a, b = self.plane_axes()
        sides[a] = self.lx
        sides[b] = self.ly
        sides[self.normal_axis] = self.thickness
        return sides


def material_extents(part: Part) -> tuple[float, float]:
    """Material-space extent (w, h) of the part under its orientation."""
    if part.pose.o % 2 == 0:
        return part.lx, part.ly
    return part.ly, part.lx


def polygon_area(points: np.ndarray) -> float:
    """Signed shoelace area (positive for CCW contours)."""
    x = points[:, 0]
    y = points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def points_in_polygon(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Vectorised even-odd test; boundary points are implementation-defined."""
    px = points[:, 0][:, None]
    py = points[:, 1][:, None]
    x0 = polygon[:, 0][None, :]
    y0 = polygon[:, 1][None, :]
    x1 = np.roll(polygon[:, 0], -1)[None, :]
    y1 = np.roll(polygon[:, 1], -1)[None, :]
    crosses = (y0 > py) != (y1 > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
    hits = crosses & (px < xint)
    return np.count_nonzero(hits, axis=1) % 2 == 1


def rotate_contour(contour: np.ndarray, o: int) -> np.ndarray:
    """Rotate a centred contour by the orientation angle about the origin."""
    k = o % 4
    x = contour[:, 0]
    y = contour[:, 1]
    if k == 0:
        return contour.copy()
    if k == 1:
        return np.column_stack([-y, x])
    if k == 2:
        return np.column_stack([-x, -y])
    return np.column_stack([y, -x])


# --- contour templates -------------------------------------------------------
#
# Shapes are defined on the unit square [-0.5, 0.5]^2 and scaled by (lx, ly),
# which keeps part evaluation continuous in the design parameters.


def rect_contour(lx: float, ly: float) -> np.ndarray:
    hx, hy = 0.5 * lx, 0.5 * ly
    return np.array([[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]])


def scaled_contour(points_norm: np.ndarray, lx: float, ly: float) -> np.ndarray:
    return points_norm * np.array([lx, ly])


def u_shape_norm(leg_frac: float = 0.3, base_frac: float = 0.35) -> np.ndarray:
    """U-shape opening towards +y (concavity up at o=0), CCW, unit box."""
    a = leg_frac
    b = base_frac
    return np.array(
        [
            [-0.5, -0.5],
            [0.5, -0.5],
            [0.5, 0.5],
            [0.5 - a, 0.5],
            [0.5 - a, -0.5 + b],
            [-0.5 + a, -0.5 + b],
            [-0.5 + a, 0.5],
            [-0.5, 0.5],
        ]
    )


def l_shape_norm(cut_x: float = 0.45, cut_y: float = 0.45) -> np.ndarray:
    """L-shape with the notch at the +x/+y corner, CCW, unit box."""
    return np.array(
        [
            [-0.5, -0.5],
            [0.5, -0.5],
            [0.5, 0.5 - cut_y],
            [0.5 - cut_x, 0.5 - cut_y],
            [0.5 - cut_x, 0.5],
            [-0.5, 0.5],
        ]
    )


def quarter_disc_norm(segments: int = 48) -> np.ndarray:
    """Quarter disc with the right angle at the -x/-y corner of the unit box."""
    angles = np.linspace(0.0, math.pi / 2.0, segments + 1)
    arc = np.column_stack([np.cos(angles) - 0.5, np.sin(angles) - 0.5])
    return np.vstack([[-0.5, -0.5], arc])


SHAPES = {
    "rect": None,
    "u": u_shape_norm(),
    "l": l_shape_norm(),
    "quarter_disc": quarter_disc_norm(),
}


def contour_for(shape: str | np.ndarray, lx: float, ly: float) -> np.ndarray:
    if isinstance(shape, str):
        if shape not in SHAPES:
            raise KeyError(f"unknown shape template {shape!r}")
        norm = SHAPES[shape]
        if norm is None:
            return rect_contour(lx, ly)
        return scaled_contour(norm, lx, ly)
    return scaled_contour(np.asarray(shape, dtype=float), lx, ly)
