"""Voxelized hexahedral FEM for plank sag detection.

The design is smeared onto a uniform grid of cubic elements; each element's
stiffness is its density fraction times the unit-cube stiffness matrix.  The
displacement solve is linear elasticity with nodes near the ground fixed.
Sagging is a relative measure: plank surface samples are compared against the
straight line through the row's edge displacements.

Units: mm, N, MPa; density in tonne/mm^3 so gravity forces come out in N.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .parts import Part, points_in_polygon

GRAVITY = 9810.0  # mm/s^2

# Void elements keep a small stiffness floor so the global matrix stays
# non-singular for disconnected regions.
RHO_MIN = 1e-4

SUBSAMPLES = 4  # 4x4 in-plane subsampling for non-rectangular cross-sections
SAG_SAMPLES = 32
SAG_THRESHOLD = 0.2  # mm


class SingularSystemError(RuntimeError):
    """Stiffness system has no ground attachment."""


class SolveFailedError(RuntimeError):
    """Iterative displacement solve did not converge."""


@dataclass
class Material:
    youngs_mpa: float = 3000.0  # MDF-like
    poisson: float = 0.3
    density_t_mm3: float = 7e-10  # 700 kg/m^3


@dataclass
class PartLoad:
    part: int
    newtons: float
    direction: tuple[float, float, float] = (0.0, 0.0, -1.0)


@dataclass
class DensityGrid:
    origin: np.ndarray  # grid corner (mm)
    element_size: float
    rho: np.ndarray  # (nx, ny, nz) densities in [0, 1]

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.rho.shape

    def node_count(self) -> int:
        nx, ny, nz = self.dims
        return (nx + 1) * (ny + 1) * (nz + 1)

    def node_index(self, ix, iy, iz):
        nx, ny, nz = self.dims
        return (ix * (ny + 1) + iy) * (nz + 1) + iz

    def node_coords(self) -> np.ndarray:
        nx, ny, nz = self.dims
        xs = self.origin[0] + self.element_size * np.arange(nx + 1)
        ys = self.origin[1] + self.element_size * np.arange(ny + 1)
        zs = self.origin[2] + self.element_size * np.arange(nz + 1)
        gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])


@dataclass
class DisplacementField:
    grid: DensityGrid
    displacements: np.ndarray  # (n_nodes, 3), zero at fixed nodes
    fixed_nodes: np.ndarray

    def sample(self, points: np.ndarray) -> np.ndarray:
        """Trilinear interpolation of nodal displacements at arbitrary points."""
        nx, ny, nz = self.grid.dims
        h = self.grid.element_size
        local = (np.asarray(points, dtype=float) - self.grid.origin) / h
        cell = np.clip(np.floor(local).astype(int), 0, [nx - 1, ny - 1, nz - 1])
        frac = np.clip(local - cell, 0.0, 1.0)
        u = self.displacements.reshape(nx + 1, ny + 1, nz + 1, 3)
        ix, iy, iz = cell[:, 0], cell[:, 1], cell[:, 2]
        fx, fy, fz = frac[:, 0][:, None], frac[:, 1][:, None], frac[:, 2][:, None]
        out = np.zeros((len(points), 3))
        for dx in (0, 1):
            wx = fx if dx else 1.0 - fx
            for dy in (0, 1):
                wy = fy if dy else 1.0 - fy
                for dz in (0, 1):
                    wz = fz if dz else 1.0 - fz
                    out += wx * wy * wz * u[ix + dx, iy + dy, iz + dz]
        return out


@dataclass
class PlankSag:
    part: int
    sagging: bool
    max_deflection: float
    deflections: np.ndarray  # (32, 32) per-sample deflection magnitude


@dataclass
class SagReport:
    planks: list[PlankSag] = field(default_factory=list)

    @property
    def any_sagging(self) -> bool:
        return any(p.sagging for p in self.planks)


# --- voxelization --------------------------------------------------------------


def _axis_coverage(lo: float, hi: float, origin: float, h: float, n: int) -> np.ndarray:
    """Exact 1D overlap fraction of [lo, hi] with each of n grid cells."""
    edges = origin + h * np.arange(n + 1)
    overlap = np.minimum(edges[1:], hi) - np.maximum(edges[:-1], lo)
    return np.clip(overlap, 0.0, h) / h


def _inplane_fraction(part: Part, oa: float, ob: float, h: float, na: int, nb: int) -> np.ndarray:
    """Covered in-plane area fraction per cell for a polygon contour.

    Subsamples each cell on a SUBSAMPLES x SUBSAMPLES grid of pixel centres.
    """
    s = SUBSAMPLES
    pa, pb = part.plane_axes()
    ca, cb = part.center[pa], part.center[pb]
    xs = oa + (np.arange(na * s) + 0.5) * (h / s) - ca
    ys = ob + (np.arange(nb * s) + 0.5) * (h / s) - cb
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    inside = points_in_polygon(pts, part.contour).reshape(na * s, nb * s)
    return inside.reshape(na, s, nb, s).mean(axis=(1, 3))


def voxelize(parts: list[Part], element_size: float = 10.0) -> DensityGrid:
    """Per-element density = fraction of intersected element volume.

    Overlaps are exact per axis for the box extents (so thin planks land on
    the exact thickness fraction); non-rectangular contours use in-plane
    subsampling for the cross-section.  Overlapping parts accumulate and the
    result clamps to [0, 1].
    """
    mins = np.min([p.box_min() for p in parts], axis=0)
    maxs = np.max([p.box_max() for p in parts], axis=0)
    h = element_size
    lo = np.floor(mins / h).astype(int) - 1
    hi = np.ceil(maxs / h).astype(int) + 1
    dims = hi - lo
    origin = lo.astype(float) * h

    rho = np.zeros(tuple(dims))
    for part in parts:
        pmin, pmax = part.box_min(), part.box_max()
        cover = [
            _axis_coverage(pmin[k], pmax[k], origin[k], h, dims[k]) for k in range(3)
        ]
        if len(part.contour) == 4:  # rectangle: box coverage is exact
            rho += np.einsum("i,j,k->ijk", cover[0], cover[1], cover[2])
            continue
        pa, pb = part.plane_axes()
        n = part.normal_axis
        frac2d = _inplane_fraction(part, origin[pa], origin[pb], h, dims[pa], dims[pb])
        contrib = np.einsum("ab,n->abn", frac2d, cover[n])
        # contrib axes are (pa, pb, n); reorder to (x, y, z)
        order = np.argsort([pa, pb, n])
        rho += np.transpose(contrib, axes=order)
    return DensityGrid(origin, h, np.clip(rho, 0.0, 1.0))


# --- stiffness assembly ---------------------------------------------------------

_GAUSS = 1.0 / np.sqrt(3.0)
_NODE_LOCS = np.array(
    [
        [0, 0, 0],
        [1, 0, 0],
        [1, 1, 0],
        [0, 1, 0],
        [0, 0, 1],
        [1, 0, 1],
        [1, 1, 1],
        [0, 1, 1],
    ],
    dtype=float,
)


def element_stiffness(material: Material, h: float, gauss_order: int = 2) -> np.ndarray:
    """24x24 H8 stiffness for a cube of side h by Gauss quadrature."""
    e, nu = material.youngs_mpa, material.poisson
    lam = e * nu / ((1 + nu) * (1 - 2 * nu))
    mu = e / (2 * (1 + nu))
    cmat = np.zeros((6, 6))
    cmat[:3, :3] = lam
    cmat[np.arange(3), np.arange(3)] += 2 * mu
    cmat[3:, 3:] = np.eye(3) * mu

    if gauss_order == 2:
        pts1d = np.array([-_GAUSS, _GAUSS])
        wts1d = np.array([1.0, 1.0])
    else:
        pts1d, wts1d = np.polynomial.legendre.leggauss(gauss_order)

    signs = 2.0 * _NODE_LOCS - 1.0  # node corner signs in [-1, 1]^3
    ke = np.zeros((24, 24))
    for gi, wi in zip(pts1d, wts1d):
        for gj, wj in zip(pts1d, wts1d):
            for gk, wk in zip(pts1d, wts1d):
                xi = np.array([gi, gj, gk])
                dn = np.zeros((8, 3))
                for node in range(8):
                    sx, sy, sz = signs[node]
                    dn[node, 0] = 0.125 * sx * (1 + sy * xi[1]) * (1 + sz * xi[2])
                    dn[node, 1] = 0.125 * sy * (1 + sx * xi[0]) * (1 + sz * xi[2])
                    dn[node, 2] = 0.125 * sz * (1 + sx * xi[0]) * (1 + sy * xi[1])
                dn_dx = dn * (2.0 / h)
                detj = (h / 2.0) ** 3
                b = np.zeros((6, 24))
                for node in range(8):
                    c = 3 * node
                    dx, dy, dz = dn_dx[node]
                    b[0, c] = dx
                    b[1, c + 1] = dy
                    b[2, c + 2] = dz
                    b[3, c] = dy
                    b[3, c + 1] = dx
                    b[4, c + 1] = dz
                    b[4, c + 2] = dy
                    b[5, c] = dz
                    b[5, c + 2] = dx
                ke += wi * wj * wk * detj * (b.T @ cmat @ b)
    return ke


def ground_nodes(grid: DensityGrid) -> np.ndarray:
    """Nodes within half an element of z=0 that touch a solid element."""
    nx, ny, nz = grid.dims
    coords = grid.node_coords()
    near_ground = np.abs(coords[:, 2]) <= 0.5 * grid.element_size
    touching = np.zeros(grid.node_count(), dtype=bool)
    ex, ey, ez = np.nonzero(grid.rho > 0.0)
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                idx = ((ex + dx) * (ny + 1) + (ey + dy)) * (nz + 1) + (ez + dz)
                touching[idx] = True
    return np.nonzero(near_ground & touching)[0]


def _element_node_indices(grid: DensityGrid) -> np.ndarray:
    nx, ny, nz = grid.dims
    ex, ey, ez = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    ex, ey, ez = ex.ravel(), ey.ravel(), ez.ravel()
    nodes = np.empty((len(ex), 8), dtype=np.int64)
    for k, (dx, dy, dz) in enumerate(_NODE_LOCS.astype(int)):
        nodes[:, k] = ((ex + dx) * (ny + 1) + (ey + dy)) * (nz + 1) + (ez + dz)
    return nodes


def assemble_stiffness(
    grid: DensityGrid,
    material: Material,
    fixed_nodes: np.ndarray | None = None,
) -> tuple[sp.csr_matrix, np.ndarray, np.ndarray]:
    """Global K with fixed-node rows/cols eliminated.

    Returns (K_free, free_dof_indices, fixed_nodes).  Elements below the
    density floor contribute RHO_MIN * K_c.
    """
    if fixed_nodes is None:
        fixed_nodes = ground_nodes(grid)
    fixed_nodes = np.asarray(fixed_nodes, dtype=np.int64)
    if fixed_nodes.size == 0:
        raise SingularSystemError("no ground attachment nodes")

    kc = element_stiffness(material, grid.element_size)
    nodes = _element_node_indices(grid)
    rho = np.maximum(grid.rho.ravel(), RHO_MIN)

    dof = np.empty((nodes.shape[0], 24), dtype=np.int64)
    dof[:, 0::3] = 3 * nodes
    dof[:, 1::3] = 3 * nodes + 1
    dof[:, 2::3] = 3 * nodes + 2

    data = (rho[:, None, None] * kc[None, :, :]).ravel()
    rows = np.repeat(dof, 24, axis=1).ravel()
    cols = np.tile(dof, (1, 24)).ravel()
    n_dof = 3 * grid.node_count()
    k = sp.coo_matrix((data, (rows, cols)), shape=(n_dof, n_dof)).tocsr()

    fixed_dof = np.concatenate([3 * fixed_nodes, 3 * fixed_nodes + 1, 3 * fixed_nodes + 2])
    free = np.setdiff1d(np.arange(n_dof), fixed_dof)
    return k[free][:, free].tocsr(), free, fixed_nodes


def gravity_forces(grid: DensityGrid, material: Material) -> np.ndarray:
    """Self-weight nodal forces (N), negative z."""
    h = grid.element_size
    w_elem = grid.rho.ravel() * h**3 * material.density_t_mm3 * GRAVITY
    nodes = _element_node_indices(grid)
    f = np.zeros(3 * grid.node_count())
    np.add.at(f, 3 * nodes + 2, -(w_elem / 8.0)[:, None])
    return f


def part_load_forces(
    grid: DensityGrid, parts: list[Part], loads: list[PartLoad]
) -> np.ndarray:
    """Distribute each part load equally over the grid nodes inside its box."""
    f = np.zeros(3 * grid.node_count())
    if not loads:
        return f
    coords = grid.node_coords()
    pad = 0.5 * grid.element_size
    by_id = {p.id: p for p in parts}
    for load in loads:
        part = by_id[load.part]
        lo = part.box_min() - pad
        hi = part.box_max() + pad
        sel = np.all((coords >= lo) & (coords <= hi), axis=1)
        idx = np.nonzero(sel)[0]
        if idx.size == 0:
            continue
        direction = np.asarray(load.direction, dtype=float)
        direction = direction / np.linalg.norm(direction)
        share = load.newtons / idx.size
        for k in range(3):
            f[3 * idx + k] += share * direction[k]
    return f


def solve_displacements(
    grid: DensityGrid,
    material: Material,
    forces: np.ndarray,
    fixed_nodes: np.ndarray | None = None,
    direct_limit: int = 30000,
) -> DisplacementField:
    """Solve K(rho) u = f; direct for small systems, CG (rtol 1e-8) otherwise."""
    k_free, free, fixed = assemble_stiffness(grid, material, fixed_nodes)
    f_free = forces[free]
    if k_free.shape[0] <= direct_limit:
        u_free = spla.spsolve(k_free.tocsc(), f_free)
    else:
        precond = sp.diags(1.0 / k_free.diagonal())
        u_free, info = spla.cg(k_free, f_free, rtol=1e-8, maxiter=20000, M=precond)
        if info != 0:
            raise SolveFailedError(f"CG did not converge (info={info})")
    u = np.zeros(3 * grid.node_count())
    u[free] = u_free
    return DisplacementField(grid, u.reshape(-1, 3), fixed)


# --- sag detection --------------------------------------------------------------


def _surface_samples(part: Part, n: int = SAG_SAMPLES) -> np.ndarray:
    """Mid-surface sample points, (n, n, 3); rows vary local x, cols local y."""
    a, b = part.plane_axes()
    su = np.linspace(-0.5 * part.lx, 0.5 * part.lx, n)
    sv = np.linspace(-0.5 * part.ly, 0.5 * part.ly, n)
    pts = np.tile(part.center, (n * n, 1))
    gu, gv = np.meshgrid(su, sv, indexing="ij")
    pts[:, a] += gu.ravel()
    pts[:, b] += gv.ravel()
    return pts.reshape(n, n, 3)


def _row_deflections(disp: np.ndarray) -> np.ndarray:
    """Deflection of each sample against the line through its row's edges.

    disp has shape (rows, cols, 3); the line is interpolated along axis 1.
    """
    n = disp.shape[1]
    t = np.linspace(0.0, 1.0, n)[None, :, None]
    line = disp[:, :1, :] * (1 - t) + disp[:, -1:, :] * t
    return np.linalg.norm(disp - line, axis=2)


def detect_sagging(
    field: DisplacementField,
    parts: list[Part],
    threshold_mm: float = SAG_THRESHOLD,
) -> SagReport:
    """Per-plank 32x32 sampling; sagging if any deflection exceeds threshold."""
    report = SagReport()
    for part in parts:
        samples = _surface_samples(part)
        disp = field.sample(samples.reshape(-1, 3)).reshape(samples.shape)
        along_y = _row_deflections(disp)  # lines along local y (axis 1)
        along_x = _row_deflections(disp.transpose(1, 0, 2))  # lines along local x
        deflections = np.maximum(along_y, along_x.T)
        max_deflection = float(deflections.max())
        report.planks.append(
            PlankSag(part.id, max_deflection > threshold_mm, max_deflection, deflections)
        )
    return report


def sag_check(
    parts: list[Part],
    material: Material | None = None,
    loads: list[PartLoad] | None = None,
    element_size: float = 10.0,
    threshold_mm: float = SAG_THRESHOLD,
    fixed_nodes: np.ndarray | None = None,
    include_gravity: bool = True,
) -> SagReport:
    """Full pipeline: voxelize, assemble, solve, classify."""
    material = material or Material()
    grid = voxelize(parts, element_size)
    forces = gravity_forces(grid, material) if include_gravity else np.zeros(3 * grid.node_count())
    forces = forces + part_load_forces(grid, parts, loads or [])
    fieldout = solve_displacements(grid, material, forces, fixed_nodes)
    return detect_sagging(fieldout, parts, threshold_mm)
