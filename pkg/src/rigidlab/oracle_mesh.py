"""Triangulated meshes of immersions and angle-defect total curvature.

This is a cross-check for the quadrature pipeline: only vertex positions of
the immersion are used, and curvature comes from triangle corner angles.

Punctured-plane domains are meshed in log-polar coordinates
z = s exp(t + i theta).  A point left out of the chart (the origin or
infinity) is closed with a single pole vertex when it has a finite image:
a regular point, a limit, or a marked point with a known image.  Truncated
ends become boundary loops.  Marked pole vertices of branch order m carry
a concentrated defect of about -2 pi m, which is added back so that the
reported total estimates the integral of K over the regular part.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .surface import INF, Immersion, to_points

MIN_MESH_RESOLUTION = 16
MIN_ANGLE = 1e-3
# log-polar half-range used where the chart reaches a regular point
CAP_SPAN = 4.0


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Vertices in R^n, oriented index triples and boundary index cycles.

    ``singular`` maps pole vertices at marked points to their branch order.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_loops: tuple = ()
    singular: dict | None = None
    label: dict | None = None

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def edges(self) -> np.ndarray:
        T = self.triangles
        e = np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    @property
    def euler_characteristic(self) -> int:
        return int(self.n_vertices - len(self.edges()) + len(self.triangles))

    def boundary_vertices(self) -> np.ndarray:
        if not self.boundary_loops:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate([np.asarray(b, dtype=np.int64) for b in self.boundary_loops]))

    def validate(self) -> None:
        """Check orientability, manifold edges, boundary and triangle quality."""
        T = self.triangles
        if T.ndim != 2 or T.shape[1] != 3 or len(T) == 0:
            raise ValueError("triangles must be a nonempty (F, 3) index array")
        if T.min() < 0 or T.max() >= self.n_vertices:
            raise ValueError("triangle index out of range")
        if not np.all(np.isfinite(self.vertices)):
            raise ValueError("non-finite vertex position")
        directed = np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]])
        if len(np.unique(directed, axis=0)) != len(directed):
            raise ValueError("mesh is not consistently oriented")
        und, counts = np.unique(np.sort(directed, axis=1), axis=0, return_counts=True)
        if counts.max() > 2:
            raise ValueError("edge shared by more than two triangles")
        open_edges = und[counts == 1]
        bverts = np.unique(open_edges) if len(open_edges) else np.zeros(0, dtype=np.int64)
        if not np.array_equal(bverts, self.boundary_vertices()):
            raise ValueError("boundary loops do not match the open edges of the mesh")
        ang = triangle_angles(self)
        if ang.min() <= MIN_ANGLE:
            raise ValueError(f"degenerate triangle: minimum angle {ang.min():.2e} rad")

    def to_off(self) -> str:
        """ASCII OFF text (``4OFF`` etc. for ambient dimension other than 3)."""
        n = self.vertices.shape[1]
        head = "OFF" if n == 3 else f"{n}OFF" if n == 4 else f"nOFF\n{n}"
        lines = [head, f"{self.n_vertices} {len(self.triangles)} 0"]
        lines += [" ".join(repr(float(c)) for c in v) for v in self.vertices]
        lines += [f"3 {a} {b} {c}" for a, b, c in self.triangles]
        return "\n".join(lines) + "\n"

    def write_off(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(self.to_off())


def triangle_angles(mesh: TriMesh) -> np.ndarray:
    return _kernels.corner_angles_kernel(mesh.vertices, mesh.triangles)


# ---------------------------------------------------------------------------
# construction


def _check_resolution(resolution) -> tuple:
    if np.isscalar(resolution):
        resolution = (int(resolution), int(resolution))
    res = tuple(int(r) for r in resolution)
    if len(res) != 2 or min(res) < MIN_MESH_RESOLUTION:
        raise ValueError(f"mesh resolution must be at least {MIN_MESH_RESOLUTION} per axis")
    return res


def _grid_triangles(idx: np.ndarray, wrap_cols: bool) -> np.ndarray:
    """Split each cell of an index grid (rows x cols) along one diagonal."""
    right = np.roll(idx, -1, axis=1) if wrap_cols else idx[:, 1:]
    left = idx if wrap_cols else idx[:, :-1]
    a, b = left[:-1], right[:-1]
    c, d = left[1:], right[1:]
    lower = np.stack([a, b, d], axis=-1).reshape(-1, 3)
    upper = np.stack([a, d, c], axis=-1).reshape(-1, 3)
    return np.concatenate([lower, upper])


def _positions(f: Immersion, pts: np.ndarray) -> np.ndarray:
    pos = np.asarray(f.jet(pts).position, dtype=float)
    if not np.all(np.isfinite(pos)):
        raise FloatingPointError("non-finite vertex position")
    return pos


def _strip_mesh(f: Immersion, res: tuple) -> TriMesh:
    dom = f.domain
    axes = []
    for ax in range(2):
        lo, hi = dom.bounds[ax]
        if ax in dom.periodic_axes:
            axes.append(lo + (hi - lo) * np.arange(res[ax]) / res[ax])
        else:
            axes.append(np.linspace(lo, hi, res[ax] + 1))
    U, V = np.meshgrid(axes[0], axes[1], indexing="ij")
    verts = _positions(f, np.stack([U, V], -1).reshape(-1, 2))
    idx = np.arange(U.size).reshape(U.shape)
    # make axis 0 the rows; close it by repeating the first row if periodic
    if 0 in dom.periodic_axes:
        idx = np.concatenate([idx, idx[:1]], axis=0)
    tris = _grid_triangles(idx, 1 in dom.periodic_axes)
    loops = []
    if 0 not in dom.periodic_axes and 1 in dom.periodic_axes:
        loops = [tuple(idx[0][::-1]), tuple(idx[-1])]
    elif not dom.periodic_axes:
        loops = [tuple(np.concatenate([idx[:, 0], idx[-1, 1:], idx[-2::-1, -1], idx[0, -2:0:-1]]))]
    elif dom.periodic_axes == frozenset({0}):
        loops = [tuple(idx[:-1, 0]), tuple(idx[-2::-1, -1])]
    return TriMesh(verts, tris, tuple(loops), {}, dict(f.label))


def _pole(f: Immersion, where, puncture):
    """(position, branch order, is_boundary) for the origin or infinity."""
    loc = 0j if where == 0 else INF
    if puncture is not None and puncture.is_end:
        return None, 0, True
    marks = [m for m in f.marked_points if m.location == loc or (where == 0 and m.location == 0)]
    if puncture is not None:
        if not marks or marks[0].image is None:
            raise ValueError(f"excluded point at {loc} has no finite image to close the mesh")
        return np.asarray(marks[0].image, dtype=float), marks[0].order, False
    if where == 0:
        return _positions(f, np.zeros((1, 2)))[0], 0, False
    if INF not in f.limits:
        raise ValueError("immersion has no limit at infinity to close the mesh")
    return np.asarray(f.limits[INF], dtype=float), 0, False


def _plane_mesh(f: Immersion, res: tuple) -> TriMesh:
    dom = f.domain
    p0 = pinf = None
    for p in dom.punctures:
        if p.location is None:
            pinf = p
        elif p.location == 0:
            p0 = p
        else:
            raise ValueError("meshing supports exclusions at the origin and infinity only")
    t_lo = math.log(p0.rho) if p0 is not None else -CAP_SPAN
    t_hi = -math.log(pinf.rho) if pinf is not None else CAP_SPAN
    if not t_hi > t_lo:
        raise ValueError("exclusion discs cover the whole chart")
    n_t, n_th = res
    t = np.linspace(t_lo, t_hi, n_t + 1)
    th = 2 * math.pi * np.arange(n_th) / n_th
    Tt, Th = np.meshgrid(t, th, indexing="ij")
    z = dom.scale * np.exp(Tt + 1j * Th)
    verts = [_positions(f, to_points(z.reshape(-1)))]
    idx = np.arange(z.size).reshape(z.shape)
    tris = [_grid_triangles(idx, True)]
    loops, singular = [], {}
    n = z.size
    for where, punct, ring, inward in ((0, p0, idx[0], True), (INF, pinf, idx[-1], False)):
        pos, order, boundary = _pole(f, where, punct)
        if boundary:
            loops.append(tuple(ring[::-1]) if inward else tuple(ring))
            continue
        verts.append(pos[None, :])
        nxt = np.roll(ring, -1)
        fan = np.stack([np.full_like(ring, n), nxt, ring], -1) if inward else \
            np.stack([np.full_like(ring, n), ring, nxt], -1)
        tris.append(fan)
        if punct is not None:
            singular[n] = int(order)
        n += 1
    return TriMesh(np.concatenate(verts), np.concatenate(tris), tuple(loops), singular, dict(f.label))


def mesh_from_immersion(f: Immersion, resolution) -> TriMesh:
    """Triangulate ``f`` on a structured grid of its chart.

    Strip and rectangle domains use the chart grid directly with periodic
    axes stitched; punctured planes use log-polar rings (``resolution`` is
    then radial intervals by angular nodes).
    """
    res = _check_resolution(resolution)
    if f.domain.kind == "punctured-plane":
        mesh = _plane_mesh(f, res)
    else:
        mesh = _strip_mesh(f, res)
    mesh.validate()
    return mesh


# ---------------------------------------------------------------------------
# angle defect


@dataclass(frozen=True)
class DefectReport:
    """Split of the discrete Gauss-Bonnet sum.

    ``interior`` sums 2 pi minus the angle sum over interior vertices,
    ``boundary`` sums pi minus the angle sum over boundary vertices; their
    sum equals 2 pi chi(mesh) up to rounding.  ``singular_correction`` is
    2 pi times the branch orders of marked pole vertices, and
    ``total_curvature`` = interior + singular_correction.
    """

    interior: float
    boundary: float
    singular_correction: float
    total_curvature: float
    euler_characteristic: int
    gauss_bonnet_residual: float

    def to_json(self) -> dict:
        return dict(self.__dict__)


def angle_defect_report(mesh: TriMesh) -> DefectReport:
    ang = triangle_angles(mesh)
    sums = np.bincount(mesh.triangles.reshape(-1), weights=ang.reshape(-1), minlength=mesh.n_vertices)
    on_bd = np.zeros(mesh.n_vertices, dtype=bool)
    on_bd[mesh.boundary_vertices()] = True
    interior = float(math.fsum(2 * math.pi - sums[~on_bd]))
    boundary = float(math.fsum(math.pi - sums[on_bd]))
    sing = 2 * math.pi * sum((mesh.singular or {}).values())
    chi = mesh.euler_characteristic
    resid = interior + boundary - 2 * math.pi * chi
    return DefectReport(interior, boundary, sing, interior + sing, chi, resid)


def angle_defect_total_curvature(mesh: TriMesh) -> float:
    """Discrete total Gauss curvature of the regular part of the mesh."""
    return angle_defect_report(mesh).total_curvature
