"""Linear isotropic elasticity on voxel meshes.

Trilinear hexahedra with 2x2x2 Gauss quadrature, Dirichlet elimination and a
Jacobi-preconditioned conjugate-gradient solve. All voxels are congruent
cubes, so a single reference element stiffness scaled by ``h`` serves the
whole mesh.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyError, ConvergenceError
from .geometry import HEX_OFFSETS, LOADED_TAGS, Mesh, SurfaceQuadrature, Tag
from .material import MaterialParams, n_det, stress, von_mises

_GAUSS_1D = 0.5 + np.array([-0.5, 0.5]) / np.sqrt(3.0)
GAUSS_POINTS = np.array([[a, b, c] for a in _GAUSS_1D for b in _GAUSS_1D for c in _GAUSS_1D])
GAUSS_WEIGHTS = np.full(8, 1.0 / 8.0)


def shape_functions(xi):
    """Trilinear shape functions on [0, 1]^3, shape (n, 8)."""
    xi = np.atleast_2d(xi)
    f = np.where(HEX_OFFSETS[None, :, :] == 1, xi[:, None, :], 1.0 - xi[:, None, :])
    return f.prod(axis=2)


def shape_gradients(xi):
    """d N_a / d xi_j on [0, 1]^3, shape (n, 8, 3)."""
    xi = np.atleast_2d(xi)
    f = np.where(HEX_OFFSETS[None, :, :] == 1, xi[:, None, :], 1.0 - xi[:, None, :])
    df = np.where(HEX_OFFSETS == 1, 1.0, -1.0)[None, :, :]
    out = np.empty(f.shape)
    for j in range(3):
        others = [k for k in range(3) if k != j]
        out[:, :, j] = df[:, :, j] * f[:, :, others[0]] * f[:, :, others[1]]
    return out


@lru_cache(maxsize=32)
def _unit_stiffness(lam, mu):
    G = shape_gradients(GAUSS_POINTS)
    K = np.zeros((8, 3, 8, 3))
    for g, w in zip(G, GAUSS_WEIGHTS):
        dot = g @ g.T
        K += w * (
            lam * np.einsum("ai,bj->aibj", g, g)
            + mu * np.einsum("ab,ij->aibj", dot, np.eye(3))
            + mu * np.einsum("aj,bi->aibj", g, g)
        )
    K = K.reshape(24, 24)
    K = 0.5 * (K + K.T)
    K.setflags(write=False)
    return K


def element_stiffness(p: MaterialParams, h=1.0):
    """24x24 stiffness of an axis-aligned cube of edge h (dof order node*3 + component)."""
    return h * _unit_stiffness(float(p.lam), float(p.mu))


def _as_field(value, with_normals=False):
    if value is None:
        return None
    if callable(value):
        return value
    vec = np.asarray(value, dtype=float).reshape(3)
    if with_normals:
        return lambda x, n: np.broadcast_to(vec, x.shape)
    return lambda x: np.broadcast_to(vec, x.shape)


@dataclass
class LoadCase:
    """Body force, surface traction and warranty time.

    ``body_force(x)`` maps (n, 3) points to (n, 3) force densities;
    ``traction(x, normals)`` maps face centers and outward normals to (n, 3)
    tractions. Constant 3-vectors are accepted for either. Tractions act on
    faces tagged with one of ``traction_tags``.
    """

    body_force: object = None
    traction: object = None
    t_star: float = 0.0
    traction_tags: tuple = LOADED_TAGS

    def __post_init__(self):
        if self.t_star < 0:
            raise ValueError("warranty time t_star must be nonnegative")
        self.body_force = _as_field(self.body_force)
        self.traction = _as_field(self.traction, with_normals=True)

    def scaled(self, s):
        f, g = self.body_force, self.traction
        return LoadCase(
            body_force=None if f is None else (lambda x: s * np.asarray(f(x))),
            traction=None if g is None else (lambda x, n: s * np.asarray(g(x, n))),
            t_star=self.t_star,
            traction_tags=self.traction_tags,
        )


@dataclass
class LinearSystem:
    mesh: Mesh
    K: sp.csr_matrix
    F: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    u_fixed: np.ndarray
    K_full: sp.csr_matrix = field(repr=False)
    F_full: np.ndarray = field(repr=False)

    @property
    def n_free(self):
        return len(self.free)


@dataclass
class DisplacementField:
    mesh: Mesh
    u: np.ndarray
    iterations: int = 0
    residual: float = 0.0


def _element_dofs(mesh):
    return (3 * mesh.elements[:, :, None] + np.arange(3)).reshape(-1, 24)


def load_vector(mesh: Mesh, load: LoadCase):
    F = np.zeros(3 * mesh.n_nodes)
    h = mesh.h
    if load.body_force is not None:
        N = shape_functions(GAUSS_POINTS)  # (8 gp, 8 nodes)
        corners = mesh.origin + h * mesh.voxels
        pts = corners[:, None, :] + h * GAUSS_POINTS[None, :, :]
        f = np.asarray(load.body_force(pts.reshape(-1, 3)), dtype=float).reshape(-1, 8, 3)
        fe = np.einsum("g,ga,egi->eai", GAUSS_WEIGHTS * h ** 3, N, f)
        np.add.at(F, _element_dofs(mesh).ravel(), fe.ravel())
    if load.traction is not None:
        sel = mesh.faces_with(load.traction_tags)
        if sel.any():
            centers = mesh.face_centers[sel]
            g = np.asarray(load.traction(centers, mesh.face_normals[sel]), dtype=float).reshape(-1, 3)
            nodes = mesh.face_nodes[sel]
            contrib = np.repeat(g[:, None, :] * (h * h / 4.0), 4, axis=1)
            dofs = 3 * nodes[:, :, None] + np.arange(3)
            np.add.at(F, dofs.ravel(), contrib.ravel())
    return F


def stiffness_matrix(mesh: Mesh, p: MaterialParams):
    Ke = element_stiffness(p, mesh.h)
    dofs = _element_dofs(mesh)
    rows = np.repeat(dofs, 24, axis=1).ravel()
    cols = np.tile(dofs, (1, 24)).ravel()
    data = np.tile(Ke.ravel(), mesh.n_elements)
    n = 3 * mesh.n_nodes
    K = sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    # duplicate summation order differs between (i, j) and (j, i); mirror one
    # triangle so the assembled matrix is symmetric bit for bit
    upper = sp.triu(K, format="csr")
    return (upper + sp.triu(K, k=1, format="csr").T).tocsr()


def assemble(mesh: Mesh, p: MaterialParams, load: LoadCase, dirichlet_values=None,
             dirichlet_tags=(Tag.DIRICHLET,)) -> LinearSystem:
    """Assemble the reduced system on the free degrees of freedom.

    Nodes touching a DIRICHLET face are fixed; their displacement is 0 unless
    ``dirichlet_values(points) -> (n, 3)`` prescribes it, in which case the
    known values are moved to the right-hand side.
    """
    fixed_nodes = mesh.tagged_nodes(dirichlet_tags)
    if len(fixed_nodes) == 0:
        raise AssemblyError("no DIRICHLET faces: the system is singular up to rigid motions")
    K = stiffness_matrix(mesh, p)
    F = load_vector(mesh, load)
    fixed = (3 * fixed_nodes[:, None] + np.arange(3)).ravel()
    is_fixed = np.zeros(3 * mesh.n_nodes, dtype=bool)
    is_fixed[fixed] = True
    free = np.flatnonzero(~is_fixed)
    u_fixed = np.zeros(len(fixed))
    if dirichlet_values is not None:
        u_fixed = np.asarray(dirichlet_values(mesh.nodes[fixed_nodes]), dtype=float).reshape(-1)
    Kff = K[free][:, free].tocsr()
    Ff = F[free]
    if np.any(u_fixed):
        Ff = Ff - K[free][:, fixed] @ u_fixed
    return LinearSystem(mesh, Kff, Ff, free, fixed, u_fixed, K, F)


def pcg(A, b, rel_tol=1e-10, max_iter=None):
    """Jacobi-preconditioned conjugate gradients from x0 = 0.

    Stops when ||r|| <= rel_tol * ||b||. Returns (x, iterations, relative residual).
    """
    n = len(b)
    if max_iter is None:
        max_iter = max(1000, 10 * n)
    bnorm = np.linalg.norm(b)
    x = np.zeros(n)
    if n == 0 or bnorm == 0:
        return x, 0, 0.0
    dinv = 1.0 / A.diagonal()
    r = b.copy()
    z = dinv * r
    d = z.copy()
    rz = r @ z
    target = rel_tol * bnorm
    for it in range(1, max_iter + 1):
        Ad = A @ d
        step = rz / (d @ Ad)
        x += step * d
        r -= step * Ad
        rnorm = np.linalg.norm(r)
        if rnorm <= target:
            return x, it, rnorm / bnorm
        z = dinv * r
        rz_new = r @ z
        d = z + (rz_new / rz) * d
        rz = rz_new
    raise ConvergenceError(
        f"CG did not reach rel_tol={rel_tol} in {max_iter} iterations",
        residual=float(np.linalg.norm(r) / bnorm), iterations=max_iter,
    )


def solve(system: LinearSystem, rel_tol=1e-10, max_iter=None) -> DisplacementField:
    x, iters, res = pcg(system.K, system.F, rel_tol=rel_tol, max_iter=max_iter)
    u = np.zeros(3 * system.mesh.n_nodes)
    u[system.free] = x
    u[system.fixed] = system.u_fixed
    return DisplacementField(system.mesh, u.reshape(-1, 3), iters, res)


def grad_at(field: DisplacementField, element, xi):
    """Gradient of the trilinear interpolant, shape (n, 3, 3) with [i, j] = du_i/dx_j."""
    element = np.atleast_1d(element)
    xi = np.atleast_2d(xi)
    dN = shape_gradients(xi) / field.mesh.h  # (n, 8, 3)
    ue = field.u[field.mesh.elements[element]]  # (n, 8, 3)
    return np.einsum("nai,naj->nij", ue, dN)


def displacement_at(field: DisplacementField, element, xi):
    element = np.atleast_1d(element)
    N = shape_functions(np.atleast_2d(xi))
    return np.einsum("na,nai->ni", N, field.u[field.mesh.elements[element]])


@dataclass(frozen=True)
class SurfaceField:
    """Per-quadrature-point state on the boundary.

    ``sigma_v`` is the elastic von Mises stress of the peak load; ``n_det``
    the deterministic life derived from it (``inf`` where stress-free).
    """

    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    element: np.ndarray
    face_dir: np.ndarray
    tags: np.ndarray
    size: float
    grad: np.ndarray
    sigma_v: np.ndarray
    n_det: np.ndarray

    def __len__(self):
        return len(self.weights)

    @property
    def area(self):
        return float(np.sum(self.weights))

    def select(self, tags):
        keep = np.isin(self.tags, [int(t) for t in tags])
        return SurfaceField(
            self.points[keep], self.normals[keep], self.weights[keep], self.element[keep],
            self.face_dir[keep], self.tags[keep], self.size, self.grad[keep],
            self.sigma_v[keep], self.n_det[keep],
        )

    @classmethod
    def constant(cls, n_det_value, weights, sigma_v=0.0):
        """Synthetic field with one life value everywhere (for closed-form checks)."""
        w = np.asarray(weights, dtype=float)
        n = len(w)
        return cls(
            points=np.zeros((n, 3)), normals=np.tile([0.0, 0.0, 1.0], (n, 1)), weights=w,
            element=np.zeros(n, dtype=int), face_dir=np.full(n, 5), tags=np.full(n, int(Tag.NEUMANN)),
            size=1.0, grad=np.zeros((n, 3, 3)), sigma_v=np.full(n, float(sigma_v)),
            n_det=np.full(n, float(n_det_value)),
        )


def surface_field(field: DisplacementField, quad: SurfaceQuadrature, p: MaterialParams) -> SurfaceField:
    """Evaluate gradient, von Mises stress and life at each face center.

    The gradient is taken one-sided from the element owning the face.
    """
    G = grad_at(field, quad.element, quad.local_points) if len(quad) else np.zeros((0, 3, 3))
    sv = np.asarray(von_mises(stress(G, p))).reshape(-1)
    life = np.asarray(n_det(G, p)).reshape(-1)
    return SurfaceField(
        points=quad.points, normals=quad.normals, weights=quad.weights, element=quad.element,
        face_dir=quad.face_dir, tags=quad.tags, size=quad.size, grad=G, sigma_v=sv, n_det=life,
    )


def energy(system: LinearSystem, field: DisplacementField):
    """(B(u, u), L(u)) on the reduced system."""
    x = field.u.reshape(-1)[system.free]
    return float(x @ (system.K @ x)), float(system.F @ x)
