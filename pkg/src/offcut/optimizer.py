"""Design-space search minimizing layout wastage.

The search runs G generations over a population of (parameters, docking
ordering) lineages.  Each generation explores orderings by stochastic pair
swaps, then improves the design continuously: grow part sizes one pixel at a
time while wastage drops, shrink the sizes participating in border-to-border
locking chains, slide the layout, and keep the best state seen.  All random
draws come from per-task generators derived from the master seed, so results
are identical for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .constraints import ConstraintSystem
from .design import (
    DesignParams,
    GradientCache,
    NoInfluenceError,
    change_part_size,
    change_part_sizes,
)
from .effectiveness import EffectivenessSpec, dynamic_effectiveness_constraints
from .layout import (
    DegenerateContourError,
    Layout,
    PackingOverflow,
    PartBitmap,
    board_pixels,
    boards_wastage,
    pack_boards,
    rasterize_parts,
    slide_boards,
)


@dataclass
class OptimConfig:
    seed: int = 0
    generations: int = 3  # G
    keep: int = 8  # K: population size survivors
    improve_iters: int = 20  # N: grow/shrink rounds per ordering
    workers: int = 8
    raster_res: float = 0.5
    boards_mm: list[tuple[float, float]] = field(default_factory=lambda: [(600.0, 400.0)])
    explore_top_k: int = 2  # orderings carried out of each exploration
    suggestions: int = 3
    chain_limit: int = 4096


@dataclass
class SearchContext:
    """Worker-local problem bundle; cheap to duplicate, no shared state."""

    evaluator: object
    system: ConstraintSystem
    spec: EffectivenessSpec
    config: OptimConfig

    def __post_init__(self):
        self.boards_px = [
            board_pixels(w, h, self.config.raster_res) for w, h in self.config.boards_mm
        ]
        self._grads = GradientCache(self.evaluator)

    def clone(self) -> "SearchContext":
        return SearchContext(self.evaluator, self.system.copy(), self.spec, self.config)

    def parts_at(self, x: np.ndarray, orientations: list[int] | None = None):
        parts = self.evaluator.evaluate(x)
        if orientations is not None:
            for p, o in zip(parts, orientations):
                p.pose.o = o
        return parts

    def bitmaps_at(self, x: np.ndarray) -> dict[int, PartBitmap]:
        return rasterize_parts(self.evaluator.evaluate(x), self.config.raster_res)

    def gradients(self, x: np.ndarray, orientations: list[int] | None):
        return self._grads.gradients(x, orientations)


def layout_orientations(ctx: SearchContext, layouts: list[Layout] | None) -> list[int] | None:
    if layouts is None:
        return None
    out = [0] * ctx.evaluator.part_count
    for lt in layouts:
        for pl in lt.placements:
            out[pl.part] = pl.o
    return out


def corrected_point(ctx: SearchContext, x_from: np.ndarray, x_to: np.ndarray) -> np.ndarray | None:
    """Enforce design + effectiveness constraints on the edit x_from -> x_to."""
    u = x_to - x_from
    if not np.any(u):
        return x_from.copy()
    res = dynamic_effectiveness_constraints(ctx.system, ctx.evaluator, ctx.spec, x_from, u)
    if not res.solved:
        return None
    if not ctx.system.satisfies_min_lengths(res.point):
        return None
    return res.point


@dataclass
class PathSnapshot:
    values: np.ndarray
    wastage: float
    boards: list[list[tuple[int, int, int, int]]]  # per board: (part, u, v, o)


def snapshot(x: np.ndarray, layouts: list[Layout] | None, w: float) -> PathSnapshot:
    boards = []
    for lt in layouts or []:
        boards.append([(p.part, p.u, p.v, p.o) for p in lt.placements])
    return PathSnapshot(x.copy(), w, boards)


def replay_snapshot(ctx: SearchContext, snap: PathSnapshot) -> float:
    """Recompute the snapshot's wastage from scratch (placements + fresh masks)."""
    bitmaps = ctx.bitmaps_at(snap.values)
    layouts = []
    for (bw, bh), board in zip(ctx.boards_px, snap.boards):
        lt = Layout(bw, bh)
        for part, u, v, o in board:
            lt.place(bitmaps[part].oriented(o), part, u, v, o)
        layouts.append(lt)
    return boards_wastage(layouts)


@dataclass
class ExplorationResult:
    params: DesignParams
    ordering: tuple[int, ...]
    layouts: list[Layout]
    wastage: float
    path: list[PathSnapshot]


@dataclass
class Lineage:
    values: np.ndarray
    ordering: tuple[int, ...]
    wastage: float
    path: list[PathSnapshot]


# --- ordering exploration --------------------------------------------------------


def try_pack(ctx: SearchContext, x: np.ndarray, order) -> list[Layout] | None:
    try:
        return pack_boards(ctx.bitmaps_at(x), order, ctx.boards_px)
    except PackingOverflow:
        return None


def explore_orderings(
    ctx: SearchContext, x: np.ndarray, start: tuple[int, ...], rng: np.random.Generator
) -> list[tuple[int, ...]]:
    """Stochastic pair-swap search; |parts|^2 iterations, greedy acceptance.

    Returns the best distinct orderings found (at most explore_top_k).
    """
    n = ctx.evaluator.part_count
    if n < 2:
        return [tuple(start)]
    current = tuple(start)
    w_cur = boards_wastage(try_pack(ctx, x, current))
    found: list[tuple[float, tuple[int, ...]]] = [(w_cur, current)]
    for _ in range(n * n):
        i, j = rng.choice(n, size=2, replace=False)
        cand = list(current)
        cand[i], cand[j] = cand[j], cand[i]
        cand = tuple(cand)
        w_new = boards_wastage(try_pack(ctx, x, cand))
        if w_new < w_cur:
            current, w_cur = cand, w_new
            found.append((w_new, cand))
    found.sort(key=lambda t: t[0])
    out: list[tuple[int, ...]] = []
    for _, order in found:
        if order not in out:
            out.append(order)
        if len(out) >= ctx.config.explore_top_k:
            break
    return out


# --- grow step --------------------------------------------------------------------


def grow_parts(
    ctx: SearchContext,
    x_b: np.ndarray,
    l_b: list[Layout] | None,
    x_c: np.ndarray,
    l_c: list[Layout] | None,
    order: tuple[int, ...],
    rng: np.random.Generator,
) -> tuple[np.ndarray, list[Layout] | None]:
    """Grow sizes one pixel at a time while wastage improves.

    Each size grows until no improvement; a worsening slide is given one
    docking retry.  Candidates failing constraint correction count as
    non-improving.  Returns the best (parameters, layouts) seen.
    """
    step = ctx.config.raster_res
    n_sizes = 2 * ctx.evaluator.part_count
    improvement = True
    while improvement:
        improvement = False
        for s_i in rng.permutation(n_sizes):
            w_e = 1.0
            x_e, l_e = x_c, l_c
            while True:
                orientations = layout_orientations(ctx, l_e)
                try:
                    grads = ctx.gradients(x_e, orientations)
                    cand = change_part_size(
                        DesignParams(x_e, ctx.evaluator.parameter_names),
                        int(s_i), step, ctx.evaluator, orientations, grads,
                    )
                except NoInfluenceError:
                    break
                x_try = corrected_point(ctx, x_e, cand.params.values)
                if x_try is None:
                    break
                try:
                    bitmaps = ctx.bitmaps_at(x_try)
                except DegenerateContourError:
                    break
                l_try = slide_boards(l_e, bitmaps) if l_e is not None else None
                w_try = boards_wastage(l_try)
                if w_try > w_e:
                    try:
                        l_dock = pack_boards(bitmaps, order, ctx.boards_px)
                        w_dock = boards_wastage(l_dock)
                        if w_dock < w_try:
                            l_try, w_try = l_dock, w_dock
                    except PackingOverflow:
                        pass
                if w_try < w_e:
                    w_e, x_e, l_e = w_try, x_try, l_try
                else:
                    break
            if w_e < boards_wastage(l_c):
                x_c, l_c = x_e, l_e
                improvement = True
    if boards_wastage(l_c) < boards_wastage(l_b):
        x_b, l_b = x_c, l_c
    return x_b, l_b


# --- shrink step -------------------------------------------------------------------


def _axis_contacts(lt: Layout, axis: int) -> tuple[set[tuple[int, int]], set[int], set[int]]:
    """Pixel-adjacency contacts along an axis plus the border part sets.

    Returns (edges from the far part to the near part, far-border parts,
    near-border parts) where far/near mean right/left or top/bottom.
    Borders are the edges of the layout bounding rectangle.
    """
    if lt.bbox is None:
        return set(), set(), set()
    occ = lt.occ
    x0, x1, y0, y1 = lt.bbox
    if axis == 0:
        a = occ[y0:y1, x0 : x1 - 1]
        b = occ[y0:y1, x0 + 1 : x1]
        near_border = set(occ[y0:y1, x0][occ[y0:y1, x0] != 0] - 1)
        far_border = set(occ[y0:y1, x1 - 1][occ[y0:y1, x1 - 1] != 0] - 1)
    else:
        a = occ[y0 : y1 - 1, x0:x1]
        b = occ[y0 + 1 : y1, x0:x1]
        near_border = set(occ[y0, x0:x1][occ[y0, x0:x1] != 0] - 1)
        far_border = set(occ[y1 - 1, x0:x1][occ[y1 - 1, x0:x1] != 0] - 1)
    touching = (a != 0) & (b != 0) & (a != b)
    pairs = np.unique(np.stack([b[touching], a[touching]]), axis=1)
    edges = {(int(p) - 1, int(q) - 1) for p, q in pairs.T}
    return edges, {int(p) for p in far_border}, {int(p) for p in near_border}


def _contact_chains(
    edges: set[tuple[int, int]],
    far_border: set[int],
    near_border: set[int],
    limit: int,
) -> list[tuple[int, ...]]:
    """Border-to-border part chains by DFS; cycles skipped, count capped."""
    succ: dict[int, list[int]] = {}
    for a, b in sorted(edges):
        succ.setdefault(a, []).append(b)
    chains: list[tuple[int, ...]] = []
    for start in sorted(far_border):
        stack = [(start, (start,))]
        while stack and len(chains) < limit:
            node, path = stack.pop()
            if node in near_border:
                chains.append(path)
                continue
            for nxt in succ.get(node, []):
                if nxt in path:  # cycle: same part repeated
                    continue
                stack.append((nxt, path + (nxt,)))
    return chains


def select_part_sizes_to_shrink(
    ctx: SearchContext,
    layouts: list[Layout],
    x: np.ndarray,
    rng: np.random.Generator,
) -> list[int]:
    """Pick the sizes whose shrink unlocks every border-to-border chain.

    Sizes are drawn by occurrence count first (parts on many chains resolve
    several at once) and then inversely to their design-coupling dependence.
    """
    orientations = layout_orientations(ctx, layouts)
    grads = ctx.gradients(x, orientations)
    influential = [bool(np.any(grads[s] != 0.0)) for s in range(grads.shape[0])]

    chains: list[tuple[int, ...]] = []
    for lt in layouts:
        for axis in (0, 1):
            edges, far, near = _axis_contacts(lt, axis)
            for chain in _contact_chains(edges, far, near, ctx.config.chain_limit):
                sizes = tuple(2 * p + axis for p in chain)
                if any(influential[s] for s in sizes):
                    chains.append(sizes)

    dep_cache: dict[int, int] = {}

    def dep(s: int) -> int:
        if s not in dep_cache:
            try:
                out = change_part_size(
                    DesignParams(x, ctx.evaluator.parameter_names),
                    s, -ctx.config.raster_res, ctx.evaluator, orientations, grads,
                )
                dep_cache[s] = out.dependence
            except NoInfluenceError:
                dep_cache[s] = 0
        return dep_cache[s]

    selected: list[int] = []
    while chains:
        occ: dict[int, int] = {}
        for chain in chains:
            for s in set(chain):
                if influential[s]:
                    occ[s] = occ.get(s, 0) + 1
        if not occ:
            break
        # stage 1: draw an occurrence count, mass proportional to the total
        # occurrences of the sizes having that count
        counts = sorted(set(occ.values()))
        mass = np.array(
            [sum(c for s, c in occ.items() if c == o) for o in counts], dtype=float
        )
        o_pick = counts[int(rng.choice(len(counts), p=mass / mass.sum()))]
        group = sorted(s for s, c in occ.items() if c == o_pick)
        # stage 2: within the group, prefer weakly coupled sizes
        if len(group) == 1:
            s_pick = group[0]
        else:
            deps = np.array([dep(s) for s in group], dtype=float)
            total = deps.sum()
            weights = 1.0 - deps / total if total > 0 else np.ones(len(group))
            weights = np.clip(weights, 0.0, None)
            if weights.sum() == 0:
                weights = np.ones(len(group))
            s_pick = group[int(rng.choice(len(group), p=weights / weights.sum()))]
        selected.append(int(s_pick))
        chains = [c for c in chains if s_pick not in c]
    return selected


def shrink_parts(
    ctx: SearchContext,
    x_b: np.ndarray,
    layouts: list[Layout],
    selection: list[int],
) -> np.ndarray:
    """Shrink every selected size by one pixel (least-squares when coupled)."""
    if not selection:
        return x_b.copy()
    orientations = layout_orientations(ctx, layouts)
    grads = ctx.gradients(x_b, orientations)
    target = np.zeros(2 * ctx.evaluator.part_count)
    for s in selection:
        if np.any(grads[s] != 0.0):  # sizes with no influence are skipped
            target[s] = -ctx.config.raster_res
    if not np.any(target):
        return x_b.copy()
    out = change_part_sizes(
        DesignParams(x_b, ctx.evaluator.parameter_names),
        target, ctx.evaluator, orientations, grads,
    )
    corrected = corrected_point(ctx, x_b, out.params.values)
    return x_b.copy() if corrected is None else corrected


# --- improvement loop ---------------------------------------------------------------


def improve_design(
    ctx: SearchContext,
    x: np.ndarray,
    order: tuple[int, ...],
    rng: np.random.Generator,
    base_path: list[PathSnapshot],
) -> Lineage | None:
    """Alternate grow and shrink rounds, tracking the best design seen."""
    layouts = try_pack(ctx, x, order)
    if layouts is None:
        return None
    x_b, l_b = x.copy(), layouts
    w_b = boards_wastage(l_b)
    path = list(base_path)
    if not path:
        path.append(snapshot(x_b, l_b, w_b))
    x_c, l_c = x_b, l_b
    for _ in range(ctx.config.improve_iters):
        x_b, l_b = grow_parts(ctx, x_b, l_b, x_c, l_c, order, rng)
        if boards_wastage(l_b) < w_b:
            w_b = boards_wastage(l_b)
            path.append(snapshot(x_b, l_b, w_b))
        if l_b is None:
            break
        selection = select_part_sizes_to_shrink(ctx, l_b, x_b, rng)
        x_c = shrink_parts(ctx, x_b, l_b, selection)
        l_c = slide_boards(l_b, ctx.bitmaps_at(x_c)) if np.any(x_c != x_b) else l_b
        w_c = boards_wastage(l_c)
        if w_c < w_b:
            x_b, l_b, w_b = x_c, l_c, w_c
            path.append(snapshot(x_b, l_b, w_b))
    return Lineage(x_b, tuple(order), w_b, path)


# --- top level ----------------------------------------------------------------------


def _run_member(args) -> list[Lineage]:
    ctx, lineage, master_seed, gen, idx = args
    ctx = ctx.clone()
    rng = np.random.default_rng(np.random.SeedSequence([master_seed, gen, idx]))
    orders = explore_orderings(ctx, lineage.values, lineage.ordering, rng)
    out = []
    for order in orders:
        res = improve_design(ctx, lineage.values, order, rng, lineage.path)
        if res is not None:
            out.append(res)
    return out


def keep_bests(k: int, lineages: list[Lineage]) -> list[Lineage]:
    """K best by wastage; stable on ties, exact duplicates dropped."""
    seen = set()
    unique = []
    for ln in lineages:
        key = (ln.values.tobytes(), ln.ordering)
        if key in seen:
            continue
        seen.add(key)
        unique.append(ln)
    order = sorted(range(len(unique)), key=lambda i: (unique[i].wastage, i))
    return [unique[i] for i in order[:k]]


def min_wastage(
    ctx: SearchContext,
    x_start: np.ndarray,
    progress_cb=None,
    cancel=None,
) -> list[ExplorationResult]:
    """G generations of ordering exploration + design improvement.

    Deterministic for a fixed (seed, config, design) regardless of the worker
    count: every task owns an RNG stream derived from (seed, generation, task
    index) and results merge in task order.
    """
    cfg = ctx.config
    identity = tuple(range(ctx.evaluator.part_count))
    start_layouts = try_pack(ctx, x_start, identity)
    start_w = boards_wastage(start_layouts)
    start_path = [] if start_layouts is None else [snapshot(x_start, start_layouts, start_w)]
    population = [Lineage(x_start.copy(), identity, start_w, start_path)]

    for gen in range(cfg.generations):
        if cancel is not None and cancel.is_set():
            break
        tasks = [
            (ctx, lineage, cfg.seed, gen, idx)
            for idx, lineage in enumerate(population)
        ]
        if cfg.workers > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=min(cfg.workers, len(tasks))) as pool:
                produced = list(pool.map(_run_member, tasks))
        else:
            produced = [_run_member(t) for t in tasks]
        merged = list(population)
        for batch in produced:
            merged.extend(batch)
        population = keep_bests(cfg.keep, merged)
        if progress_cb is not None:
            progress_cb(gen + 1, cfg.generations)

    results = []
    for lineage in population:
        layouts = try_pack(ctx, lineage.values, lineage.ordering)
        if layouts is None:
            continue
        results.append(
            ExplorationResult(
                DesignParams(lineage.values, ctx.evaluator.parameter_names),
                lineage.ordering,
                layouts,
                boards_wastage(layouts),
                lineage.path,
            )
        )
    results.sort(key=lambda r: r.wastage)
    return results[: cfg.keep]


def select_suggestions(results: list[ExplorationResult], ctx: SearchContext, n: int = 3):
    """Greedy farthest-point picking in plank-length space, best result first."""
    if not results:
        return []
    features = []
    for r in results:
        parts = ctx.evaluator.evaluate(r.params.values)
        features.append(np.array([v for p in parts for v in (p.lx, p.ly)]))
    chosen = [0]
    while len(chosen) < min(n, len(results)):
        best_i, best_d = None, -1.0
        for i in range(len(results)):
            if i in chosen:
                continue
            d = min(float(np.linalg.norm(features[i] - features[j])) for j in chosen)
            if d > best_d:
                best_i, best_d = i, d
        chosen.append(best_i)
    return [results[i] for i in chosen]
