"""Basic design, design variables, admissibility surrogate and voxel meshing.

The design variable ``alpha`` is a height function sampled on a uniform
node grid over the rectangular cross-section. The component is

    {x in block : x3 <= alpha_min} minus the closed clamp ball
    union {(x1, x2) in cross-section, alpha_min < x3 < alpha(x1, x2)}

and is discretized by cubic voxels whose centers fall inside that set.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from scipy import ndimage
from scipy.integrate import trapezoid
from scipy.interpolate import RegularGridInterpolator

from .errors import ConfigError, ConstraintError, MeshingError


class Tag(IntEnum):
    DIRICHLET = 1
    NEUMANN = 2
    DESIGNED = 3


ALL_TAGS = (Tag.DIRICHLET, Tag.NEUMANN, Tag.DESIGNED)
LOADED_TAGS = (Tag.NEUMANN, Tag.DESIGNED)

# VTK hexahedron node order as lattice offsets
HEX_OFFSETS = np.array(
    [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
     [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]]
)
# face directions: -x, +x, -y, +y, -z, +z
FACE_DIRS = np.array(
    [[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]]
)
FACE_LOCAL_NODES = np.array(
    [[0, 3, 7, 4], [1, 2, 6, 5], [0, 1, 5, 4], [3, 2, 6, 7], [0, 1, 2, 3], [4, 5, 6, 7]]
)
FACE_CENTERS_LOCAL = 0.5 + 0.5 * FACE_DIRS


@dataclass(frozen=True)
class BasicDesign:
    """Box-shaped basic design with a spherical clamp cavity.

    The fixed block spans ``xlim x ylim x [z_bottom, alpha_min]``; the
    designed part grows upwards from ``alpha_min`` to at most ``alpha_max``.
    """

    xlim: tuple
    ylim: tuple
    z_bottom: float
    alpha_min: float
    alpha_max: float
    center: tuple
    radius: float
    r_ext: float | None = None

    def __post_init__(self):
        x0, x1 = self.xlim
        y0, y1 = self.ylim
        if not (x1 > x0 and y1 > y0 and self.alpha_min > self.z_bottom):
            raise ValueError("degenerate basic design box")
        if not self.alpha_max > self.alpha_min:
            raise ValueError("alpha_max must exceed alpha_min")
        z = np.asarray(self.center, dtype=float)
        r = self.radius
        if r <= 0:
            raise ValueError("clamp radius must be positive")
        inside = (
            z[0] - r > x0 and z[0] + r < x1 and z[1] - r > y0 and z[1] + r < y1
            and z[2] - r > self.z_bottom
        )
        if not inside:
            raise ValueError("clamp ball B(z, r) must lie inside the basic design")
        if not z[2] + r < self.alpha_min:
            raise ValueError("clamp ball must lie strictly below alpha_min (z3 + r < alpha_min)")
        if self.r_ext is None:
            object.__setattr__(self, "r_ext", self._enclosing_radius() * (1 + 1e-9))
        elif self.r_ext < self._enclosing_radius():
            raise ValueError("r_ext too small to contain every admissible domain")

    def _enclosing_radius(self):
        z = np.asarray(self.center, dtype=float)
        corners = np.array(
            [[x, y, zz] for x in self.xlim for y in self.ylim for zz in (self.z_bottom, self.alpha_max)]
        )
        return float(np.max(np.linalg.norm(corners - z, axis=1)))

    @property
    def cross_section_area(self):
        return (self.xlim[1] - self.xlim[0]) * (self.ylim[1] - self.ylim[0])

    def grid(self, n1, n2):
        """Empty design field (alpha == alpha_min) with n1 x n2 nodes over the cross-section."""
        dx = (self.xlim[1] - self.xlim[0]) / (n1 - 1)
        dy = (self.ylim[1] - self.ylim[0]) / (n2 - 1)
        return DesignField(
            np.full((n1, n2), float(self.alpha_min)), dx, dy, origin=(self.xlim[0], self.ylim[0])
        )


@dataclass(frozen=True)
class DesignConstraints:
    """Discrete surrogate of the admissible design set.

    ``boundary_derivatives`` maps a multi-index ``(i, j)`` (d^i/dx1^i d^j/dx2^j,
    ``1 <= i + j <= k``) to its prescribed boundary value; missing entries are 0.
    One-sided difference stencils at the boundary carry a discretization
    error, so those conditions are checked to ``derivative_tol * L2``.
    """

    L1: float
    L2: float
    L3: float
    k: int = 4
    boundary_derivatives: dict = field(default_factory=dict)
    derivative_tol: float = 0.05

    def __post_init__(self):
        if not (self.L1 > 0 and self.L2 > 0 and self.L3 > 0):
            raise ValueError("L1, L2, L3 must be positive")
        if self.k < 1:
            raise ValueError("smoothness order k must be >= 1")
        if self.derivative_tol < 0:
            raise ValueError("derivative_tol must be nonnegative")

    def check_volume_range(self, basic: BasicDesign):
        area = basic.cross_section_area
        lo, hi = basic.alpha_min * area, basic.alpha_max * area
        if not lo <= self.L1 <= hi:
            raise ValueError(f"L1={self.L1} outside achievable range [{lo}, {hi}]")


@dataclass(frozen=True)
class DesignField:
    """Nodal heights ``values[i, j]`` at ``(origin[0] + i*dx, origin[1] + j*dy)``."""

    values: np.ndarray
    dx: float
    dy: float
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("design values must be a 2-d grid")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape

    @property
    def x(self):
        return self.origin[0] + self.dx * np.arange(self.shape[0])

    @property
    def y(self):
        return self.origin[1] + self.dy * np.arange(self.shape[1])

    def with_values(self, values):
        return DesignField(values, self.dx, self.dy, self.origin)

    def same_grid(self, other):
        return (
            self.shape == other.shape
            and math.isclose(self.dx, other.dx, rel_tol=1e-12)
            and math.isclose(self.dy, other.dy, rel_tol=1e-12)
        )

    def volume(self):
        """Trapezoid-rule integral of alpha over the cross-section."""
        return float(trapezoid(trapezoid(self.values, dx=self.dy, axis=1), dx=self.dx))

    def interpolator(self):
        return RegularGridInterpolator((self.x, self.y), self.values, method="linear",
                                       bounds_error=False, fill_value=None)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n1", "n2", "dx", "dy"])
            w.writerow([self.shape[0], self.shape[1], repr(float(self.dx)), repr(float(self.dy))])
            for row in self.values:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, origin=(0.0, 0.0)):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if [c.strip() for c in rows[0]] != ["n1", "n2", "dx", "dy"]:
            raise ValueError(f"{path}: bad design-field header {rows[0]!r}")
        n1, n2 = int(rows[1][0]), int(rows[1][1])
        dx, dy = float(rows[1][2]), float(rows[1][3])
        values = np.array([[float(v) for v in r] for r in rows[2:2 + n1]])
        if values.shape != (n1, n2):
            raise ValueError(f"{path}: expected {n1}x{n2} values, got {values.shape}")
        return cls(values, dx, dy, origin)


def trapezoid_weights(shape, dx, dy):
    w1 = np.full(shape[0], dx)
    w1[[0, -1]] *= 0.5
    w2 = np.full(shape[1], dy)
    w2[[0, -1]] *= 0.5
    return np.outer(w1, w2)


def boundary_mask(shape):
    mask = np.zeros(shape, dtype=bool)
    mask[[0, -1], :] = True
    mask[:, [0, -1]] = True
    return mask


def fd_derivatives(values, dx, dy, k):
    """All mixed finite-difference partials of order <= k.

    Returns ``{(i, j): array}`` for d^i/dx1^i d^j/dx2^j; second-order centered
    differences inside, second-order one-sided stencils on the boundary.
    """
    values = np.asarray(values, dtype=float)
    if min(values.shape) < 3:
        raise ConfigError("design.grid", "need at least 3 nodes per direction for derivatives")
    out = {}
    along_x = values
    for i in range(k + 1):
        if i:
            along_x = np.gradient(along_x, dx, axis=0, edge_order=2)
        d = along_x
        for j in range(k + 1 - i):
            if j:
                d = np.gradient(d, dy, axis=1, edge_order=2)
            out[(i, j)] = d
    return out


def order_norms(derivs, k):
    """Max-norm of the finite-difference derivatives, per total order 0..k."""
    norms = np.zeros(k + 1)
    for (i, j), d in derivs.items():
        norms[i + j] = max(norms[i + j], float(np.max(np.abs(d))))
    return norms


def lipschitz_constant(derivs, k, dx, dy):
    """Largest neighbour difference quotient of the order-k derivatives."""
    lip = 0.0
    for (i, j), d in derivs.items():
        if i + j != k:
            continue
        lip = max(lip, float(np.max(np.abs(np.diff(d, axis=0)))) / dx,
                  float(np.max(np.abs(np.diff(d, axis=1)))) / dy)
    return lip


@dataclass(frozen=True)
class ConstraintCheck:
    value: float
    bound: float
    margin: float
    passed: bool


@dataclass(frozen=True)
class AdmissibilityReport:
    checks: dict
    order_norms: np.ndarray
    volume: float

    @property
    def passed(self):
        return all(c.passed for c in self.checks.values())

    @property
    def volume_violation(self):
        return self.checks["volume"].value

    def failures(self):
        return [name for name, c in self.checks.items() if not c.passed]

    def summary(self):
        lines = []
        for name, c in self.checks.items():
            status = "ok" if c.passed else "FAIL"
            lines.append(f"{name:22s} {status:4s} value={c.value:.6g} bound={c.bound:.6g} margin={c.margin:.6g}")
        return "\n".join(lines)


def _upper_check(value, bound, slack):
    return ConstraintCheck(value, bound, bound - value, value <= bound + slack)


def check_admissible(alpha: DesignField, c: DesignConstraints, basic: BasicDesign, tol=1e-6):
    """Evaluate every admissibility constraint on the grid.

    Margins are signed so that a nonnegative margin means the constraint
    holds exactly; ``tol`` adds slack (relative to the natural scale of each
    constraint) before a check is declared failed.
    """
    n1, n2 = alpha.shape
    if min(n1, n2) < max(3, c.k + 1):
        raise ConfigError("design.grid", f"{n1}x{n2} grid too coarse for order-{c.k} differences")
    v = alpha.values
    span = basic.alpha_max - basic.alpha_min
    bdry = boundary_mask(v.shape)
    derivs = fd_derivatives(v, alpha.dx, alpha.dy, c.k)
    norms = order_norms(derivs, c.k)
    volume = alpha.volume()

    checks = {}
    lo = float(v.min())
    checks["lower_bound"] = ConstraintCheck(lo, basic.alpha_min, lo - basic.alpha_min,
                                            lo >= basic.alpha_min - tol * span)
    checks["upper_bound"] = _upper_check(float(v.max()), basic.alpha_max, tol * span)
    bval = float(np.max(np.abs(v[bdry] - basic.alpha_min)))
    checks["boundary_value"] = _upper_check(bval, 0.0, tol * span)
    rel = abs(volume - c.L1) / c.L1
    checks["volume"] = ConstraintCheck(rel, 0.0, c.L1 - volume, rel <= tol)
    checks["ck_norm"] = _upper_check(float(norms.max()), c.L2, tol * c.L2)
    lip = lipschitz_constant(derivs, c.k, alpha.dx, alpha.dy)
    checks["lipschitz"] = _upper_check(lip, c.L3, tol * c.L3)
    worst = 0.0
    for (i, j), d in derivs.items():
        if 1 <= i + j <= c.k:
            target = c.boundary_derivatives.get((i, j), 0.0)
            worst = max(worst, float(np.max(np.abs(d[bdry] - target))))
    # one-sided stencils at the edge do not resolve exact zeros; allowance scales with L2
    checks["boundary_derivatives"] = _upper_check(worst, c.derivative_tol * c.L2, tol * c.L2)
    return AdmissibilityReport(checks, norms, volume)


def project_volume(alpha: DesignField, c: DesignConstraints, basic: BasicDesign,
                   profile=None, rtol=1e-10, max_iter=200):
    """Restore the volume equality by shifting interior nodes, then clipping.

    The shift is ``t * profile`` with ``profile`` = 1 on interior nodes by
    default; passing a smooth nonnegative profile that vanishes at the
    boundary keeps the field smooth. Boundary nodes are never touched.
    """
    v = alpha.values.copy()
    W = trapezoid_weights(v.shape, alpha.dx, alpha.dy)
    interior = ~boundary_mask(v.shape)
    prof = np.where(interior, 1.0, 0.0) if profile is None else np.where(interior, profile, 0.0)
    if np.any(prof < 0):
        raise ValueError("projection profile must be nonnegative")
    movable = prof > 0
    base = np.sum(W[~movable] * v[~movable])
    vmin = base + basic.alpha_min * np.sum(W[movable])
    vmax = base + basic.alpha_max * np.sum(W[movable])
    if not vmin - rtol * c.L1 <= c.L1 <= vmax + rtol * c.L1:
        raise ConstraintError(f"L1={c.L1} outside achievable volume range [{vmin}, {vmax}]")
    for _ in range(max_iter):
        vol = float(np.sum(W * v))
        r = c.L1 - vol
        if abs(r) <= rtol * c.L1:
            return alpha.with_values(v)
        free = movable & ((v < basic.alpha_max) if r > 0 else (v > basic.alpha_min))
        denom = float(np.sum(W[free] * prof[free]))
        if denom <= 0:
            break
        v = np.where(free, v + r / denom * prof, v)
        v = np.where(interior, np.clip(v, basic.alpha_min, basic.alpha_max), v)
    raise ConstraintError("volume projection did not converge")


def ck_distance(a1: DesignField, a2: DesignField, k: int) -> float:
    """Discrete C^k distance: max over orders 0..k of the max-norm of derivatives of a1 - a2."""
    if not a1.same_grid(a2):
        raise ValueError("ck_distance needs fields on the same grid")
    derivs = fd_derivatives(a1.values - a2.values, a1.dx, a1.dy, k)
    return float(order_norms(derivs, k).max())


@dataclass(frozen=True)
class Mesh:
    """Voxel hexahedral mesh with tagged boundary faces.

    ``elements`` use VTK hexahedron node order. Per boundary face:
    owning element, direction index into ``FACE_DIRS``, tag, outward normal
    and center.
    """

    h: float
    origin: np.ndarray
    voxels: np.ndarray
    nodes: np.ndarray
    elements: np.ndarray
    face_element: np.ndarray
    face_dir: np.ndarray
    face_tag: np.ndarray

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def face_normals(self):
        return FACE_DIRS[self.face_dir].astype(float)

    @property
    def face_centers(self):
        return self.origin + self.h * (self.voxels[self.face_element] + FACE_CENTERS_LOCAL[self.face_dir])

    @property
    def face_nodes(self):
        return self.elements[self.face_element[:, None], FACE_LOCAL_NODES[self.face_dir]]

    @property
    def element_centers(self):
        return self.origin + self.h * (self.voxels + 0.5)

    def volume(self):
        return self.n_elements * self.h ** 3

    def faces_with(self, tags):
        return np.isin(self.face_tag, [int(t) for t in tags])

    def tagged_nodes(self, tags):
        return np.unique(self.face_nodes[self.faces_with(tags)])


def mesh_from_mask(mask, origin, h, tagger):
    """Build a Mesh from a boolean voxel occupancy array.

    ``tagger(voxel_ijk, direction, neighbour_ijk)`` returns the Tag of each
    boundary face (arrays in, int array out).
    """
    mask = np.asarray(mask, dtype=bool)
    voxels = np.argwhere(mask)
    if len(voxels) == 0:
        raise MeshingError("empty mesh")
    shape = np.array(mask.shape)
    lattice = voxels[:, None, :] + HEX_OFFSETS[None, :, :]
    stride = np.array([(shape[1] + 1) * (shape[2] + 1), shape[2] + 1, 1])
    flat = lattice @ stride
    used, inverse = np.unique(flat, return_inverse=True)
    elements = inverse.reshape(-1, 8)
    node_ijk = np.stack(np.unravel_index(used, tuple(shape + 1)), axis=1)
    nodes = np.asarray(origin, dtype=float) + h * node_ijk

    padded = np.pad(mask, 1)
    f_el, f_dir, f_tag = [], [], []
    for d, step in enumerate(FACE_DIRS):
        nb = voxels + step
        occupied = padded[nb[:, 0] + 1, nb[:, 1] + 1, nb[:, 2] + 1]
        idx = np.flatnonzero(~occupied)
        if len(idx) == 0:
            continue
        f_el.append(idx)
        f_dir.append(np.full(len(idx), d))
        f_tag.append(np.asarray(tagger(voxels[idx], d, nb[idx]), dtype=int))
    return Mesh(
        h=float(h),
        origin=np.asarray(origin, dtype=float),
        voxels=voxels,
        nodes=nodes,
        elements=elements,
        face_element=np.concatenate(f_el),
        face_dir=np.concatenate(f_dir),
        face_tag=np.concatenate(f_tag),
    )


def box_mesh(n, h, origin=(0.0, 0.0, 0.0), dirichlet_dirs=(), designed_dirs=(5,)):
    """Full rectangular voxel block of n = (nx, ny, nz) cells.

    Faces whose direction index is in ``dirichlet_dirs`` are DIRICHLET, those
    in ``designed_dirs`` DESIGNED, the rest NEUMANN.
    """
    def tagger(_vox, d, _nb):
        if d in dirichlet_dirs:
            return np.full(len(_vox), Tag.DIRICHLET)
        if d in designed_dirs:
            return np.full(len(_vox), Tag.DESIGNED)
        return np.full(len(_vox), Tag.NEUMANN)

    return mesh_from_mask(np.ones(tuple(n), dtype=bool), origin, h, tagger)


def voxel_grid(basic: BasicDesign, h):
    x0, x1 = basic.xlim
    y0, y1 = basic.ylim
    counts = [
        math.ceil((x1 - x0) / h - 1e-9),
        math.ceil((y1 - y0) / h - 1e-9),
        math.ceil((basic.alpha_max - basic.z_bottom) / h - 1e-9),
    ]
    origin = np.array([x0, y0, basic.z_bottom], dtype=float)
    return origin, counts


def domain_mask(basic: BasicDesign, alpha: DesignField, h):
    """Voxel occupancy of the component and of the clamp cavity."""
    origin, (nx, ny, nz) = voxel_grid(basic, h)
    xc = origin[0] + h * (np.arange(nx) + 0.5)
    yc = origin[1] + h * (np.arange(ny) + 0.5)
    zc = origin[2] + h * (np.arange(nz) + 0.5)
    X, Y, Z = np.meshgrid(xc, yc, zc, indexing="ij")
    in_xy = (X >= basic.xlim[0]) & (X <= basic.xlim[1]) & (Y >= basic.ylim[0]) & (Y <= basic.ylim[1])
    z = np.asarray(basic.center, dtype=float)
    cavity = (X - z[0]) ** 2 + (Y - z[1]) ** 2 + (Z - z[2]) ** 2 <= basic.radius ** 2
    lower = in_xy & (Z >= basic.z_bottom) & (Z <= basic.alpha_min) & ~cavity
    a = alpha.interpolator()(np.column_stack([X[:, :, 0].ravel(), Y[:, :, 0].ravel()]))
    a = a.reshape(nx, ny)[:, :, None]
    upper = in_xy & (Z > basic.alpha_min) & (Z < a)
    return lower | upper, cavity & in_xy, origin


def build_mesh(basic: BasicDesign, alpha: DesignField, h) -> Mesh:
    """Voxelize the component for design ``alpha`` at voxel size ``h``.

    Faces against the clamp cavity are DIRICHLET, upward-facing outer faces
    form the designed surface, everything else is NEUMANN.
    """
    if not h < basic.radius / 2:
        raise MeshingError(f"voxel size h={h} must be below r/2={basic.radius / 2} to resolve the cavity")
    x0, x1 = basic.xlim
    y0, y1 = basic.ylim
    if not (math.isclose(alpha.x[-1], x1, rel_tol=1e-9, abs_tol=1e-12)
            and math.isclose(alpha.y[-1], y1, rel_tol=1e-9, abs_tol=1e-12)
            and math.isclose(alpha.origin[0], x0, abs_tol=1e-12)
            and math.isclose(alpha.origin[1], y0, abs_tol=1e-12)):
        raise MeshingError("design grid does not span the cross-section")
    occupied, cavity, origin = domain_mask(basic, alpha, h)
    labels, count = ndimage.label(occupied)
    if count != 1:
        raise MeshingError(f"voxelized domain has {count} connected components")
    cav_pad = np.pad(cavity, 1)

    def tagger(_vox, d, nb):
        against_cavity = cav_pad[nb[:, 0] + 1, nb[:, 1] + 1, nb[:, 2] + 1]
        tags = np.where(against_cavity, Tag.DIRICHLET, Tag.DESIGNED if d == 5 else Tag.NEUMANN)
        return tags

    mesh = mesh_from_mask(occupied, origin, h, tagger)
    if not np.any(mesh.face_tag == Tag.DIRICHLET):
        raise MeshingError("no DIRICHLET faces: cavity not resolved")
    return mesh


@dataclass(frozen=True)
class SurfaceQuadrature:
    """Face-center quadrature: one point per selected boundary face."""

    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    element: np.ndarray
    face_dir: np.ndarray
    tags: np.ndarray
    size: float

    def __len__(self):
        return len(self.weights)

    def __iter__(self):
        return iter(zip(self.points, self.normals, self.weights))

    @property
    def local_points(self):
        return FACE_CENTERS_LOCAL[self.face_dir]


def surface_quadrature(mesh: Mesh, tags=ALL_TAGS) -> SurfaceQuadrature:
    sel = mesh.faces_with(tags)
    n = int(sel.sum())
    return SurfaceQuadrature(
        points=mesh.face_centers[sel],
        normals=mesh.face_normals[sel],
        weights=np.full(n, mesh.h ** 2),
        element=mesh.face_element[sel],
        face_dir=mesh.face_dir[sel],
        tags=mesh.face_tag[sel],
        size=mesh.h,
    )


def analytic_volume(basic: BasicDesign, alpha: DesignField):
    """Lebesgue volume of the continuum domain (trapezoid rule for the designed part)."""
    block = basic.cross_section_area * (basic.alpha_min - basic.z_bottom)
    return block - 4.0 / 3.0 * math.pi * basic.radius ** 3 + alpha.volume() - basic.alpha_min * basic.cross_section_area
