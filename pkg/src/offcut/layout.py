"""Discretized master-board layouts: rasterization, docking and sliding.

Parts are handled as bitmaps on a pixel grid (raster_res mm per pixel).  The
board keeps per-column and per-row skylines so docking positions come from a
cheap height-field contact computation.  Docking places parts deterministically
by scanning every drop location and ranking (wastage, enclosed-area)
lexicographically; sliding repairs a layout after part-size changes with
bounded left/down collapses and right/up de-collisions.

Pixel conventions: masks and the occupancy grid are indexed [y, x] with row 0
at the board bottom; a placement (u, v) is the lower-left pixel of the part
bitmap.  Wastage is 1 - (part area / bounding-rectangle area); an empty layout
has wastage 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .parts import Part, points_in_polygon

RASTER_RES = 0.5  # mm per pixel
SLIDE_ITERS = 4

_BIG = 10**9


class DegenerateContourError(ValueError):
    """Contour rasterized to an empty bitmap."""


class PackingOverflow(RuntimeError):
    """A part fits no drop position on the board."""

    def __init__(self, part: int):
        super().__init__(f"part {part} fits no docking position")
        self.part = part


class OrientedMask:
    """A binary part mask plus the pre-computed height-field profiles."""

    def __init__(self, mask: np.ndarray):
        self.mask = mask
        self.h, self.w = mask.shape
        self.area = int(mask.sum())

        occ_cols = mask.any(axis=0)
        occ_rows = mask.any(axis=1)
        self.occ_cols = occ_cols
        self.occ_rows = occ_rows

        first_row = mask.argmax(axis=0)
        last_row = self.h - mask[::-1, :].argmax(axis=0)
        self.bottom = np.where(occ_cols, first_row, _BIG).astype(np.int64)
        self.top = np.where(occ_cols, last_row, -_BIG).astype(np.int64)

        first_col = mask.argmax(axis=1)
        last_col = self.w - mask[:, ::-1].argmax(axis=1)
        self.left = np.where(occ_rows, first_col, _BIG).astype(np.int64)
        self.right = np.where(occ_rows, last_col, -_BIG).astype(np.int64)

        xs = np.nonzero(occ_cols)[0]
        ys = np.nonzero(occ_rows)[0]
        # tight bbox (x0, x1, y0, y1), upper bounds exclusive
        self.bbox = (int(xs[0]), int(xs[-1]) + 1, int(ys[0]), int(ys[-1]) + 1)

        self._transposed: OrientedMask | None = None

    def transposed(self) -> "OrientedMask":
        if self._transposed is None:
            self._transposed = OrientedMask(self.mask.T.copy())
            self._transposed._transposed = self
        return self._transposed


def _rotate_mask(mask: np.ndarray, o: int) -> np.ndarray:
    """Rotate a [y, x] mask by o quarter turns CCW (y up)."""
    k = o % 4
    if k == 0:
        return mask
    if k == 1:
        return mask.T[:, ::-1].copy()
    if k == 2:
        return mask[::-1, ::-1].copy()
    return mask.T[::-1, :].copy()


class PartBitmap:
    """Rasterized part with masks for all four orientations."""

    def __init__(self, part_id: int, base_mask: np.ndarray, raster_res: float):
        if not base_mask.any():
            raise DegenerateContourError(f"part {part_id} rasterizes to an empty mask")
        self.part = part_id
        self.raster_res = raster_res
        self._oriented: dict[int, OrientedMask] = {0: OrientedMask(base_mask)}

    def oriented(self, o: int) -> OrientedMask:
        o = o % 4
        if o not in self._oriented:
            self._oriented[o] = OrientedMask(_rotate_mask(self._oriented[0].mask, o))
        return self._oriented[o]

    @property
    def area(self) -> int:
        return self._oriented[0].area


def rasterize(part: Part, raster_res: float = RASTER_RES) -> PartBitmap:
    """Pixel is 1 iff its centre lies inside the contour (o=0 extents)."""
    pw = math.ceil(part.lx / raster_res - 1e-9)
    ph = math.ceil(part.ly / raster_res - 1e-9)
    if pw <= 0 or ph <= 0:
        raise DegenerateContourError(f"part {part.id} has degenerate extents")
    xs = (np.arange(pw) + 0.5) * raster_res - 0.5 * part.lx
    ys = (np.arange(ph) + 0.5) * raster_res - 0.5 * part.ly
    if len(part.contour) == 4:
        mask = (
            (np.abs(ys)[:, None] <= 0.5 * part.ly)
            & (np.abs(xs)[None, :] <= 0.5 * part.lx)
        )
    else:
        gx, gy = np.meshgrid(xs, ys, indexing="xy")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        mask = points_in_polygon(pts, part.contour).reshape(ph, pw)
    return PartBitmap(part.id, mask, raster_res)


def rasterize_parts(parts: list[Part], raster_res: float = RASTER_RES) -> dict[int, PartBitmap]:
    return {p.id: rasterize(p, raster_res) for p in parts}


@dataclass
class Placement:
    part: int
    u: int
    v: int
    o: int


class Layout:
    """Occupancy grid plus right/top skylines for one master board."""

    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self.occ = np.zeros((height, width), dtype=np.int32)
        self.top = np.zeros(width, dtype=np.int64)  # H^t: max occupied y+1 per column
        self.right = np.zeros(height, dtype=np.int64)  # H^r: max occupied x+1 per row
        self.placements: list[Placement] = []
        self.total_area = 0
        self.bbox: tuple[int, int, int, int] | None = None

    def place(self, om: OrientedMask, part_id: int, u: int, v: int, o: int):
        region = self.occ[v : v + om.h, u : u + om.w]
        region[om.mask] = part_id + 1
        cols = np.nonzero(om.occ_cols)[0]
        self.top[u + cols] = np.maximum(self.top[u + cols], v + om.top[cols])
        rows = np.nonzero(om.occ_rows)[0]
        self.right[v + rows] = np.maximum(self.right[v + rows], u + om.right[rows])
        bx0, bx1, by0, by1 = om.bbox
        pb = (u + bx0, u + bx1, v + by0, v + by1)
        if self.bbox is None:
            self.bbox = pb
        else:
            x0, x1, y0, y1 = self.bbox
            self.bbox = (min(x0, pb[0]), max(x1, pb[1]), min(y0, pb[2]), max(y1, pb[3]))
        self.total_area += om.area
        self.placements.append(Placement(part_id, u, v, o))

    def admissible(self, om: OrientedMask, u: int, v: int) -> bool:
        """Mask fully on the board and free of already-placed pixels."""
        if u < 0 or v < 0 or u + om.w > self.width or v + om.h > self.height:
            return False
        region = self.occ[v : v + om.h, u : u + om.w]
        return not bool(np.any(region[om.mask]))

    def copy_empty(self) -> "Layout":
        return Layout(self.width, self.height)


def wastage(layout: Layout | None) -> float:
    """1 - usage; the empty (or failed) layout scores 1."""
    if layout is None or layout.total_area == 0:
        return 1.0
    x0, x1, y0, y1 = layout.bbox
    return 1.0 - layout.total_area / float((x1 - x0) * (y1 - y0))


def boards_wastage(layouts: list[Layout] | None) -> float:
    """Combined wastage over boards, weighted by bounding-rectangle area."""
    if layouts is None:
        return 1.0
    total = 0
    boxes = 0
    for lt in layouts:
        if lt.total_area == 0:
            continue
        x0, x1, y0, y1 = lt.bbox
        total += lt.total_area
        boxes += (x1 - x0) * (y1 - y0)
    if boxes == 0:
        return 1.0
    return 1.0 - total / float(boxes)


def compute_docking_position(
    layout: Layout, om: OrientedMask, side: str, x: int
) -> tuple[int, int] | None:
    """Slide the part from infinity along the drop axis at offset x.

    Returns the placement (u, v) at first skyline contact, or None when the
    resulting placement exceeds the board.
    """
    if side == "top":
        if x < 0 or x + om.w > layout.width:
            return None
        cols = np.nonzero(om.occ_cols)[0]
        v = int(max(0, (layout.top[x + cols] - om.bottom[cols]).max()))
        if v + om.h > layout.height:
            return None
        return (x, v)
    if side == "right":
        if x < 0 or x + om.h > layout.height:
            return None
        rows = np.nonzero(om.occ_rows)[0]
        u = int(max(0, (layout.right[x + rows] - om.left[rows]).max()))
        if u + om.w > layout.width:
            return None
        return (u, x)
    raise ValueError(f"unknown drop side {side!r}")


def enclosed_area(layout: Layout, om: OrientedMask, u: int, v: int) -> int:
    """Space sealed off by the placement: skyline growth beyond the part area.

    Sum over the right and top skylines of max(0, growth - part area).
    """
    cols = np.nonzero(om.occ_cols)[0]
    growth_t = np.maximum(layout.top[u + cols], v + om.top[cols]) - layout.top[u + cols]
    rows = np.nonzero(om.occ_rows)[0]
    growth_r = np.maximum(layout.right[v + rows], u + om.right[rows]) - layout.right[v + rows]
    e_t = max(0, int(growth_t.sum()) - om.area)
    e_r = max(0, int(growth_r.sum()) - om.area)
    return e_t + e_r


def _scan_drops(
    sky_main: np.ndarray,
    sky_cross: np.ndarray,
    main_len: int,
    cross_len: int,
    om: OrientedMask,
    cur_bbox: tuple[int, int, int, int] | None,
    cur_area: int,
):
    """Score every drop offset along the main axis (vectorised).

    The part (in main/cross coordinates) falls along the cross axis onto
    sky_main.  Returns (contact, wastage, enclosed, valid) arrays indexed by
    the drop offset.
    """
    w, h = om.w, om.h
    nx = main_len - w + 1
    if nx <= 0 or h > cross_len:
        return None
    win = sliding_window_view(sky_main, w)  # (nx, w)
    contact = np.maximum((win - om.bottom[None, :]).max(axis=1), 0)
    valid = contact + h <= cross_len
    if not valid.any():
        return None
    c_safe = np.minimum(contact, cross_len - h)

    xs = np.arange(nx)
    bx0, bx1, by0, by1 = om.bbox
    nx0 = xs + bx0
    nx1 = xs + bx1
    ny0 = c_safe + by0
    ny1 = c_safe + by1
    if cur_bbox is not None:
        x0, x1, y0, y1 = cur_bbox
        nx0 = np.minimum(nx0, x0)
        nx1 = np.maximum(nx1, x1)
        ny0 = np.minimum(ny0, y0)
        ny1 = np.maximum(ny1, y1)
    box_area = (nx1 - nx0) * (ny1 - ny0)
    waste = 1.0 - (cur_area + om.area) / box_area.astype(float)

    # enclosed area: growth of both skylines beyond the part area
    new_top = c_safe[:, None] + om.top[None, :]
    growth_main = (np.maximum(win, new_top) - win).sum(axis=1)
    rows = np.arange(h)
    idx = np.clip(c_safe[:, None] + rows[None, :], 0, cross_len - 1)
    cross_vals = sky_cross[idx]
    cand = xs[:, None] + om.right[None, :]
    growth_cross = (np.maximum(cross_vals, cand) - cross_vals).sum(axis=1)
    enclosed = np.maximum(growth_main - om.area, 0) + np.maximum(growth_cross - om.area, 0)
    return contact, waste, enclosed, valid


def _best_drop(layout: Layout, pb: PartBitmap, use_enclosed: bool = True):
    """Best (side, x, o) drop for the part under the lexicographic criterion.

    Candidates rank by (wastage, enclosed area); remaining ties resolve to
    right-drops first, then the smaller offset, then the smaller orientation.
    Returns (u, v, o) or None when nothing fits.
    """
    overall = None  # comparison key (w, e, side_rank, x, o) plus placement
    for side_rank, side in enumerate(("right", "top")):
        for o in range(4):
            om = pb.oriented(o)
            if side == "top":
                scan = _scan_drops(
                    layout.top, layout.right, layout.width, layout.height,
                    om, layout.bbox, layout.total_area,
                )
            else:
                omt = om.transposed()
                bb = layout.bbox
                bb_t = None if bb is None else (bb[2], bb[3], bb[0], bb[1])
                scan = _scan_drops(
                    layout.right, layout.top, layout.height, layout.width,
                    omt, bb_t, layout.total_area,
                )
            if scan is None:
                continue
            contact, waste, enclosed, valid = scan
            if not use_enclosed:
                enclosed = np.zeros_like(enclosed)
            wv = np.where(valid, waste, np.inf)
            ev = np.where(valid, enclosed, _BIG)
            order = np.lexsort((np.arange(len(wv)), ev, wv))
            i = int(order[0])
            if not valid[i]:
                continue
            key = (float(wv[i]), int(ev[i]), side_rank, i, o)
            if overall is None or key < overall[0]:
                if side == "top":
                    placement = (i, int(contact[i]), o)
                else:
                    placement = (int(contact[i]), i, o)
                overall = (key, placement)
    return None if overall is None else overall[1]


def dock_part(layout: Layout, pb: PartBitmap, use_enclosed: bool = True) -> bool:
    best = _best_drop(layout, pb, use_enclosed)
    if best is None:
        return False
    u, v, o = best
    layout.place(pb.oriented(o), pb.part, u, v, o)
    return True


def docking(
    bitmaps: dict[int, PartBitmap],
    order: list[int] | tuple[int, ...],
    width: int,
    height: int,
    use_enclosed: bool = True,
) -> Layout:
    """Deterministic sequential placement; raises PackingOverflow on failure."""
    layout = Layout(width, height)
    for part_id in order:
        if not dock_part(layout, bitmaps[part_id], use_enclosed):
            raise PackingOverflow(part_id)
    return layout


# --- sliding -------------------------------------------------------------------


def _collapse_shift(occ: np.ndarray, om: OrientedMask, u: int, v: int) -> int:
    """Largest leftward shift closing the gap to the nearest obstacle.

    Assumes the current position is admissible.  Board edge counts as an
    obstacle; pixel-exact against every occupied pixel of the part.
    """
    board_w = occ.shape[1]
    region = occ[v : v + om.h, :] != 0
    cols = np.arange(board_w)
    prev = np.maximum.accumulate(np.where(region, cols[None, :], -1), axis=1)
    prev_strict = np.concatenate(
        [np.full((om.h, 1), -1, dtype=np.int64), prev[:, :-1]], axis=1
    )
    pixmask = np.zeros((om.h, board_w), dtype=bool)
    pixmask[:, u : u + om.w] = om.mask
    gaps = np.where(pixmask, cols[None, :] - prev_strict - 1, _BIG)
    return int(gaps.min())


def _decollide_shift(occ: np.ndarray, om: OrientedMask, u: int, v: int) -> int | None:
    """Smallest rightward shift reaching an admissible position, if any."""
    board_h, board_w = occ.shape
    if v < 0 or v + om.h > board_h:
        return None
    for delta in range(1, board_w - om.w - u + 1):
        region = occ[v : v + om.h, u + delta : u + delta + om.w]
        if not np.any(region[om.mask]):
            return delta
    return None


def _axis_move(layout: Layout, om: OrientedMask, u: int, v: int) -> int | None:
    """Signed horizontal move: negative collapse if free, else positive de-collision."""
    if layout.admissible(om, u, v):
        return -_collapse_shift(layout.occ, om, u, v)
    d = _decollide_shift(layout.occ, om, u, v)
    return None if d is None else d


def _box_area_with(layout: Layout, om: OrientedMask, u: int, v: int) -> int:
    bx0, bx1, by0, by1 = om.bbox
    x0, x1, y0, y1 = u + bx0, u + bx1, v + by0, v + by1
    if layout.bbox is not None:
        x0 = min(x0, layout.bbox[0])
        x1 = max(x1, layout.bbox[1])
        y0 = min(y0, layout.bbox[2])
        y1 = max(y1, layout.bbox[3])
    return (x1 - x0) * (y1 - y0)


def slide(prev: Layout, bitmaps: dict[int, PartBitmap]) -> Layout | None:
    """Continuously repair the layout after part changes (docking order kept).

    Each part performs up to SLIDE_ITERS single-axis moves: collapse the
    smallest free interval to the left/bottom, or de-collide to the
    right/top; the move producing the smaller bounding box wins, ties prefer
    the smaller nonzero displacement and then the vertical move.  Returns
    None when a part cannot fit (the empty layout, wastage 1).
    """
    out = prev.copy_empty()
    for pl in prev.placements:
        om = bitmaps[pl.part].oriented(pl.o)
        u, v = pl.u, pl.v
        for _ in range(SLIDE_ITERS):
            dx = _axis_move(out, om, u, v)
            dy = _axis_move_vertical(out, om, u, v)
            if dx is None and dy is None:
                return None
            if dx == 0 and dy == 0:
                break
            if dx is None:
                v += dy
            elif dy is None:
                u += dx
            else:
                area_x = _box_area_with(out, om, u + dx, v)
                area_y = _box_area_with(out, om, u, v + dy)
                if area_x < area_y:
                    u += dx
                elif area_x > area_y:
                    v += dy
                elif dx < dy and abs(dx) > 0:
                    u += dx
                else:
                    v += dy
        if not out.admissible(om, u, v):
            return None
        out.place(om, pl.part, u, v, pl.o)
    return out


def _axis_move_vertical(layout: Layout, om: OrientedMask, u: int, v: int) -> int | None:
    """Signed vertical move: the horizontal logic on the transposed board."""
    if layout.admissible(om, u, v):
        return -_collapse_shift(layout.occ.T, om.transposed(), v, u)
    d = _decollide_shift(layout.occ.T, om.transposed(), v, u)
    return None if d is None else d


# --- multi-board packing ---------------------------------------------------------


def pack_boards(
    bitmaps: dict[int, PartBitmap],
    order: list[int] | tuple[int, ...],
    boards: list[tuple[int, int]],
    use_enclosed: bool = True,
) -> list[Layout]:
    """Dock parts onto the first board they fit; overflow moves to later boards."""
    layouts = [Layout(w, h) for w, h in boards]
    for part_id in order:
        for lt in layouts:
            if dock_part(lt, bitmaps[part_id], use_enclosed):
                break
        else:
            raise PackingOverflow(part_id)
    return layouts


def slide_boards(
    prev: list[Layout], bitmaps: dict[int, PartBitmap]
) -> list[Layout] | None:
    """Slide each board independently; any failure fails the whole set."""
    out = []
    for lt in prev:
        slid = slide(lt, bitmaps)
        if slid is None:
            return None
        out.append(slid)
    return out


def board_pixels(width_mm: float, height_mm: float, raster_res: float) -> tuple[int, int]:
    return (
        int(math.floor(width_mm / raster_res + 1e-9)),
        int(math.floor(height_mm / raster_res + 1e-9)),
    )
