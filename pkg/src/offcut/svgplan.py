"""Cutting-plan export: one SVG per board, mm units, shared-edge annotations.

Each placed part becomes one closed path at its layout pose.  Pairs of planks
whose 3D boxes touch face-to-face share a cut edge; those contact segments are
emitted on a separate annotation layer (class "shared") so a downstream tool
can add connectors.  Connector geometry itself is out of scope.
"""

from __future__ import annotations

import numpy as np

from .layout import Layout
from .parts import Part, rotate_contour

_CONTACT_TOL = 1e-6


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _pose_transform(part: Part, u_px: int, v_px: int, o: int, res: float) -> np.ndarray:
    """Contour in board mm coordinates for a placement."""
    pts = rotate_contour(part.contour, o)
    # rotate_contour keeps the contour centred; shift its extent box to (u, v)
    if o % 2 == 0:
        half = np.array([0.5 * part.lx, 0.5 * part.ly])
    else:
        half = np.array([0.5 * part.ly, 0.5 * part.lx])
    return pts + half + np.array([u_px * res, v_px * res])


def shared_edges(parts: list[Part]) -> list[tuple[int, np.ndarray, np.ndarray]]:
    """Face-to-face contact segments between plank boxes.

    Returns (part id, p0, p1) with endpoints in the part's local 2D frame:
    the contact patch projected onto the part plane, reduced to its midline
    along the longer patch dimension.
    """
    out = []
    for i, a in enumerate(parts):
        for b in parts[i + 1 :]:
            lo = np.maximum(a.box_min(), b.box_min())
            hi = np.minimum(a.box_max(), b.box_max())
            ext = hi - lo
            touching = np.isclose(ext, 0.0, atol=_CONTACT_TOL)
            if touching.sum() != 1 or np.any(ext < -_CONTACT_TOL):
                continue
            if not np.all(ext[~touching] > _CONTACT_TOL):
                continue
            mid = 0.5 * (lo + hi)
            for part in (a, b):
                ax, ay = part.plane_axes()
                c0 = np.array([lo[ax], lo[ay]])
                c1 = np.array([hi[ax], hi[ay]])
                center = np.array([mid[ax], mid[ay]]) - np.array(
                    [part.center[ax], part.center[ay]]
                )
                span = c1 - c0
                if span[0] >= span[1]:
                    p0 = center + np.array([-0.5 * span[0], 0.0])
                    p1 = center + np.array([0.5 * span[0], 0.0])
                else:
                    p0 = center + np.array([0.0, -0.5 * span[1]])
                    p1 = center + np.array([0.0, 0.5 * span[1]])
                out.append((part.id, p0, p1))
    return out


def _local_to_board(pt: np.ndarray, part: Part, u_px: int, v_px: int, o: int, res: float):
    p = rotate_contour(pt[None, :], o)[0]
    if o % 2 == 0:
        half = np.array([0.5 * part.lx, 0.5 * part.ly])
    else:
        half = np.array([0.5 * part.ly, 0.5 * part.lx])
    return p + half + np.array([u_px * res, v_px * res])


def export_svg(
    layouts: list[Layout],
    parts: list[Part],
    boards_mm: list[tuple[float, float]],
    raster_res: float,
) -> list[str]:
    """One SVG document per board; pure function of its inputs."""
    by_id = {p.id: p for p in parts}
    edges = shared_edges(parts)
    docs = []
    for layout, (bw, bh) in zip(layouts, boards_mm):
        placed = {pl.part: pl for pl in layout.placements}
        lines = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(bw)}mm" '
            f'height="{_fmt(bh)}mm" viewBox="0 0 {_fmt(bw)} {_fmt(bh)}">',
            f'<g transform="translate(0,{_fmt(bh)}) scale(1,-1)">',
            '<g class="parts" fill="none" stroke="black" stroke-width="0.2">',
        ]
        for pl in layout.placements:
            part = by_id[pl.part]
            pts = _pose_transform(part, pl.u, pl.v, pl.o, raster_res)
            d = "M " + " L ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts) + " Z"
            lines.append(f'<path id="part-{part.id}" d="{d}"/>')
        lines.append("</g>")
        lines.append('<g class="shared" fill="none" stroke="red" stroke-width="0.2">')
        for pid, p0, p1 in edges:
            if pid not in placed:
                continue
            pl = placed[pid]
            part = by_id[pid]
            q0 = _local_to_board(p0, part, pl.u, pl.v, pl.o, raster_res)
            q1 = _local_to_board(p1, part, pl.u, pl.v, pl.o, raster_res)
            lines.append(
                f'<line class="shared" x1="{_fmt(q0[0])}" y1="{_fmt(q0[1])}" '
                f'x2="{_fmt(q1[0])}" y2="{_fmt(q1[1])}"/>'
            )
        lines.append("</g>")
        lines.append("</g>")
        lines.append("</svg>")
        docs.append("\n".join(lines) + "\n")
    return docs
