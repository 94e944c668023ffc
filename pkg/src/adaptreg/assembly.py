"""P1 finite elements: assembly of the coupled state/adjoint system.

The discrete problem seeks ``(u_h, z_h)`` in ``V_h x V_h`` with

    <alpha_h grad u_h, grad phi> - <z_h, phi> + <grad z_h, grad psi> + <u_h, psi> = <d, psi>

for all test pairs.  Boundary vertices are eliminated, and the unknowns are
ordered block-wise (all u-dofs, then all z-dofs), giving the matrix

    [[A_alpha, -M],
     [M,        A]].
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import kernels
from .linsolve import lu_factor, lu_solve, relative_residual
from .problems import AnalyticFunction
from .quadrature import REFERENCE_VOLUME, quadrature_rule

DEFAULT_ORDER = {1: 10, 2: 6}
_CHUNK = 100_000


@dataclass
class NodalField:
    """Continuous piecewise-linear function given by its vertex values."""

    mesh: object
    values: np.ndarray
    dirichlet_zero: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_vertices,):
            raise ValueError("nodal field needs one value per mesh vertex")
        if self.dirichlet_zero and np.any(self.values[self.mesh.boundary_vertex_flags] != 0.0):
            raise ValueError("field tagged dirichlet_zero is nonzero on the boundary")


@dataclass
class ElementField:
    """Piecewise-constant function, one value per element."""

    mesh: object
    values: np.ndarray

    def __post_init__(self):
        self.values = np.broadcast_to(np.asarray(self.values, dtype=float),
                                      (self.mesh.n_elements,)).copy()


@dataclass
class LinearSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    mesh: object
    free_vertices: np.ndarray
    alpha_h: Optional[np.ndarray] = None
    blocks: dict = field(default_factory=dict, repr=False)

    @property
    def n_free(self):
        return len(self.free_vertices)

    def free_dof_map(self, row):
        """``(field, vertex)`` for a matrix row of the coupled system."""
        nf = self.n_free
        if not 0 <= row < 2 * nf:
            raise IndexError(row)
        return ("u", int(self.free_vertices[row])) if row < nf else \
            ("z", int(self.free_vertices[row - nf]))


@dataclass
class CoupledSolution:
    u: NodalField
    z: NodalField
    alpha_h: ElementField
    residual: float


def _values(f):
    return f.values if isinstance(f, (NodalField, ElementField)) else np.asarray(f, dtype=float)


def _coef(mesh, alpha_h):
    a = np.broadcast_to(_values(alpha_h), (mesh.n_elements,)).astype(float)
    if not np.all(np.isfinite(a)) or np.any(a <= 0.0):
        raise ValueError("alpha_h must be strictly positive on every element")
    return a


def quadrature_points(mesh, order, elements=None):
    """Physical quadrature points and weights.

    Returns ``(points, weights, bary)`` with shapes (ne, nq, dim), (ne, nq)
    and (nq, dim + 1); weights include the element volume.
    """
    bary, w = quadrature_rule(mesh.dim, order)
    el = slice(None) if elements is None else elements
    coords = mesh.coords[el]
    pts = np.einsum("qi,eid->eqd", bary, coords)
    wts = np.outer(mesh.volumes[el] / REFERENCE_VOLUME[mesh.dim], w)
    return pts, wts, bary


def _chunks(n):
    for s in range(0, n, _CHUNK):
        yield slice(s, min(n, s + _CHUNK))


def _eval_at(mesh, f, pts, bary, el):
    """Values of ``f`` at quadrature points of elements ``el``."""
    if f is None:
        return np.zeros(pts.shape[:2])
    if isinstance(f, NodalField) or isinstance(f, np.ndarray):
        vals = _values(f)
        return vals[mesh.elements[el]] @ bary.T
    if np.isscalar(f):
        return np.full(pts.shape[:2], float(f))
    ne, nq, dim = pts.shape
    return np.asarray(f(pts.reshape(-1, dim)), dtype=float).reshape(ne, nq)


def _grad_at(mesh, f, pts, el):
    if f is None:
        return np.zeros(pts.shape)
    if isinstance(f, NodalField) or isinstance(f, np.ndarray):
        g = mesh.gradient(_values(f))[el]
        return np.broadcast_to(g[:, None, :], pts.shape)
    if not isinstance(f, AnalyticFunction) or f.grad is None:
        raise ValueError("a gradient evaluator is required")
    ne, nq, dim = pts.shape
    return f.gradient(pts.reshape(-1, dim)).reshape(ne, nq, dim)


def l2_norm_sq_elementwise(mesh, f, g=None, order=None):
    """Per-element ``||f - g||_T^2``; ``f``, ``g`` nodal, analytic or scalar."""
    order = order or DEFAULT_ORDER[mesh.dim]
    out = np.empty(mesh.n_elements)
    for el in _chunks(mesh.n_elements):
        pts, wts, bary = quadrature_points(mesh, order, el)
        diff = _eval_at(mesh, f, pts, bary, el) - _eval_at(mesh, g, pts, bary, el)
        out[el] = np.sum(wts * diff ** 2, axis=1)
    return out


def h1_seminorm_sq_elementwise(mesh, f, g=None, order=None):
    order = order or DEFAULT_ORDER[mesh.dim]
    out = np.empty(mesh.n_elements)
    for el in _chunks(mesh.n_elements):
        pts, wts, _ = quadrature_points(mesh, order, el)
        diff = _grad_at(mesh, f, pts, el) - _grad_at(mesh, g, pts, el)
        out[el] = np.sum(wts * np.sum(diff ** 2, axis=2), axis=1)
    return out


def l2_norm(mesh, f, g=None, order=None):
    """``||f - g||`` over the whole domain."""
    return float(np.sqrt(l2_norm_sq_elementwise(mesh, f, g, order).sum()))


def h1_seminorm(mesh, f, g=None, order=None):
    """``||grad (f - g)||`` over the whole domain."""
    return float(np.sqrt(h1_seminorm_sq_elementwise(mesh, f, g, order).sum()))


def interpolate(mesh, g):
    """Nodal interpolant of an analytic function."""
    return NodalField(mesh, np.asarray(g(mesh.vertices), dtype=float))


def load_vector(mesh, d, order=None):
    """``<d, phi_i>`` for every vertex basis function."""
    order = order or DEFAULT_ORDER[mesh.dim]
    b = np.zeros(mesh.n_vertices)
    for el in _chunks(mesh.n_elements):
        pts, wts, bary = quadrature_points(mesh, order, el)
        vals = _eval_at(mesh, d, pts, bary, el)
        local = (vals * wts) @ bary
        np.add.at(b, mesh.elements[el].ravel(), local.ravel())
    return b


def _global(mesh, local, rows_map, n):
    el = mesh.elements
    nloc = el.shape[1]
    r = np.repeat(rows_map[el], nloc, axis=1).ravel()
    c = np.tile(rows_map[el], (1, nloc)).ravel()
    v = local.reshape(len(el), -1).ravel()
    keep = (r >= 0) & (c >= 0)
    return sp.csr_matrix((v[keep], (r[keep], c[keep])), shape=(n, n))


def stiffness_and_mass(mesh, coef=1.0, free_only=False):
    """Stiffness with elementwise coefficient and mass matrices.

    With ``free_only`` the boundary rows and columns are dropped.
    """
    coef = np.broadcast_to(np.asarray(coef, dtype=float), (mesh.n_elements,))
    kloc, mloc = kernels.p1_local(np.ascontiguousarray(mesh.vertices),
                                  np.ascontiguousarray(mesh.elements), coef)
    if free_only:
        free = mesh.free_vertices
        rows_map = np.full(mesh.n_vertices, -1, dtype=np.int64)
        rows_map[free] = np.arange(len(free))
        n = len(free)
    else:
        rows_map = np.arange(mesh.n_vertices)
        n = mesh.n_vertices
    return _global(mesh, kloc, rows_map, n), _global(mesh, mloc, rows_map, n)


def assemble_coupled(mesh, alpha_h, d, order=None):
    """Assemble the reduced coupled system for ``(u_h, z_h)``.

    Parameters
    ----------
    mesh : Mesh
    alpha_h : ElementField, array or float
        Elementwise regularisation, strictly positive.
    d : AnalyticFunction, NodalField or float
        Target state.

    Returns
    -------
    LinearSystem
    """
    a = _coef(mesh, alpha_h)
    free = mesh.free_vertices
    if len(free) == 0:
        raise ValueError("mesh has no interior vertices")
    ka, m = stiffness_and_mass(mesh, a, free_only=True)
    k, _ = stiffness_and_mass(mesh, 1.0, free_only=True)
    mat = sp.bmat([[ka, -m], [m, k]], format="csr")
    b = load_vector(mesh, d, order)[free]
    rhs = np.concatenate([np.zeros(len(free)), b])
    return LinearSystem(mat, rhs, mesh, free, alpha_h=a,
                        blocks={"alpha_stiffness": ka, "stiffness": k, "mass": m})


def solve_coupled(system):
    """Solve the coupled system and expand to full vertex vectors."""
    fact = lu_factor(system)
    x = lu_solve(fact, system.rhs)
    res = relative_residual(system.matrix, x, system.rhs)
    mesh = system.mesh
    nf = system.n_free
    u = np.zeros(mesh.n_vertices)
    z = np.zeros(mesh.n_vertices)
    u[system.free_vertices] = x[:nf]
    z[system.free_vertices] = x[nf:]
    return CoupledSolution(NodalField(mesh, u, True), NodalField(mesh, z, True),
                           ElementField(mesh, system.alpha_h), res)


def solve(mesh, alpha_h, d, order=None):
    return solve_coupled(assemble_coupled(mesh, alpha_h, d, order))


def assemble_weighted_mass(mesh, alpha_h, z_h):
    """System ``<alpha_h f_h, tau> = <z_h, tau>`` over all P1 functions.

    No boundary conditions are imposed on the control.
    """
    a = _coef(mesh, alpha_h)
    _, ma = stiffness_and_mass(mesh, 1.0)
    # weighted mass: scale local mass matrices by alpha_h
    _, mloc = kernels.p1_local(np.ascontiguousarray(mesh.vertices),
                               np.ascontiguousarray(mesh.elements), 1.0)
    mw = _global(mesh, a[:, None, None] * mloc, np.arange(mesh.n_vertices), mesh.n_vertices)
    rhs = ma @ _values(z_h)
    return LinearSystem(mw.tocsr(), rhs, mesh, np.arange(mesh.n_vertices), alpha_h=a,
                        blocks={"mass": ma, "weighted_mass": mw})


def reconstruct_control(mesh, alpha_h, z_h):
    """``f_h``: the alpha_h-weighted L2 projection of ``z_h / alpha_h``."""
    system = assemble_weighted_mass(mesh, alpha_h, z_h)
    fact = lu_factor(system)
    return NodalField(mesh, lu_solve(fact, system.rhs))
