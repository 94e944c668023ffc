"""Simplicial meshes in 1D and 2D with newest vertex bisection.

Triangles are stored as ``(newest, b, c)``: local vertex 0 is the newest
vertex and the refinement edge is local edge 0, the edge ``(b, c)``
opposite it.  Local facet ``i`` of any element is the facet opposite local
vertex ``i``.  A mesh is treated as immutable; :func:`bisect` returns a new
mesh whose ``parent_of`` points into the mesh it was refined from.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels


class MeshError(ValueError):
    """Raised for invalid mesh input or a broken topology."""


@dataclass(frozen=True)
class Facet:
    vertex_indices: tuple
    adjacent_elements: tuple
    size_hE: float
    is_boundary: bool


@dataclass(frozen=True)
class FacetTable:
    """Facet topology stored column-wise.

    ``elements[:, 1]`` is -1 on boundary facets.  ``normal`` is the unit
    normal pointing out of ``elements[:, 0]``.  ``measure`` is the facet
    length in 2D and 1 in 1D (counting measure on points).
    """

    vertices: np.ndarray
    elements: np.ndarray
    local: np.ndarray
    size: np.ndarray
    measure: np.ndarray
    normal: np.ndarray
    is_boundary: np.ndarray

    def __len__(self):
        return len(self.size)

    def __getitem__(self, i):
        adj = tuple(int(t) for t in self.elements[i] if t >= 0)
        return Facet(
            vertex_indices=tuple(int(v) for v in self.vertices[i]),
            adjacent_elements=adj,
            size_hE=float(self.size[i]),
            is_boundary=bool(self.is_boundary[i]),
        )


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class Mesh:
    """Conforming simplicial mesh of an interval or a polygon.

    Parameters
    ----------
    vertices : array_like, shape (nv, dim)
    elements : array_like of int, shape (ne, dim + 1)
    refinement_edge : array_like of int, optional
        Local index of each triangle's refinement edge.  Elements are
        rotated on construction so that it becomes local edge 0; the stored
        array is therefore all zeros in 2D.  Ignored in 1D.
    parent_of : array_like of int, optional
        Index of each element's ancestor in the previous generation.
    generation : int
    boundary_vertex_flags : array_like of bool, optional
        Defaults to the vertices of facets with a single neighbour.
    vertex_parents : array_like of int, shape (nv - n_old, 2), optional
        Edge endpoints (in the previous generation) of every vertex created
        by the last refinement.  New vertices are always appended.
    """

    def __init__(self, vertices, elements, *, refinement_edge=None,
                 parent_of=None, generation=0, boundary_vertex_flags=None,
                 vertex_parents=None):
        vertices = np.asarray(vertices, dtype=float)
        if vertices.ndim == 1:
            vertices = vertices[:, None]
        elements = np.asarray(elements, dtype=np.int64)
        dim = vertices.shape[1]
        if dim not in (1, 2):
            raise MeshError(f"only 1D and 2D meshes are supported, got dim={dim}")
        if elements.ndim != 2 or elements.shape[1] != dim + 1:
            raise MeshError("elements must have dim + 1 vertex indices")
        if len(elements) == 0:
            raise MeshError("mesh has no elements")
        if elements.min() < 0 or elements.max() >= len(vertices):
            raise MeshError("element vertex index out of range")

        if dim == 2 and refinement_edge is not None:
            r = np.asarray(refinement_edge, dtype=np.int64) % 3
            if r.shape != (len(elements),):
                raise MeshError("refinement_edge must have one entry per element")
            cols = (np.arange(3)[None, :] + r[:, None]) % 3
            elements = np.take_along_axis(elements, cols, axis=1)
        if dim == 1:
            # orient every interval left to right
            swap = vertices[elements[:, 0], 0] > vertices[elements[:, 1], 0]
            elements = np.where(swap[:, None], elements[:, ::-1], elements)

        self.dim = dim
        self.vertices = _readonly(vertices)
        self.elements = _readonly(elements)
        self.refinement_edge = (
            _readonly(np.zeros(len(elements), dtype=np.int64)) if dim == 2 else None
        )
        if parent_of is None:
            parent_of = np.arange(len(elements))
        self.parent_of = _readonly(np.asarray(parent_of, dtype=np.int64))
        if self.parent_of.shape != (len(elements),):
            raise MeshError("parent_of must have one entry per element")
        self.generation = int(generation)
        if vertex_parents is None:
            vertex_parents = np.zeros((0, 2), dtype=np.int64)
        self.vertex_parents = _readonly(np.asarray(vertex_parents, dtype=np.int64).reshape(-1, 2))
        if np.any(self.volumes <= 0.0):
            raise MeshError("degenerate element with non-positive volume")
        if boundary_vertex_flags is None:
            flags = np.zeros(len(vertices), dtype=bool)
            f = self.facets
            flags[f.vertices[f.is_boundary].ravel()] = True
        else:
            flags = np.asarray(boundary_vertex_flags, dtype=bool)
            if flags.shape != (len(vertices),):
                raise MeshError("boundary_vertex_flags must have one entry per vertex")
        self.boundary_vertex_flags = _readonly(flags)

    def __repr__(self):
        return (f"Mesh(dim={self.dim}, n_vertices={self.n_vertices}, "
                f"n_elements={self.n_elements}, generation={self.generation})")

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def free_vertices(self):
        return np.flatnonzero(~self.boundary_vertex_flags)

    @cached_property
    def coords(self):
        """Vertex coordinates per element, shape (ne, dim + 1, dim)."""
        return self.vertices[self.elements]

    @cached_property
    def volumes(self):
        c = self.coords
        if self.dim == 1:
            vol = c[:, 1, 0] - c[:, 0, 0]
        else:
            e1 = c[:, 1] - c[:, 0]
            e2 = c[:, 2] - c[:, 0]
            vol = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        return _readonly(vol)

    @cached_property
    def diameters(self):
        """Element diameters h_T (longest edge in 2D)."""
        if self.dim == 1:
            return self.volumes
        c = self.coords
        lens = [np.linalg.norm(c[:, (i + 1) % 3] - c[:, (i + 2) % 3], axis=1) for i in range(3)]
        return _readonly(np.max(lens, axis=0))

    @cached_property
    def centroids(self):
        return _readonly(self.coords.mean(axis=1))

    @cached_property
    def barycentric_gradients(self):
        """Gradients of the P1 shape functions, shape (ne, dim + 1, dim)."""
        c = self.coords
        if self.dim == 1:
            h = self.volumes
            return _readonly(np.stack([-1.0 / h, 1.0 / h], axis=1)[:, :, None])
        e1 = c[:, 1] - c[:, 0]
        e2 = c[:, 2] - c[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        g1 = np.column_stack([e2[:, 1], -e2[:, 0]]) / det[:, None]
        g2 = np.column_stack([-e1[:, 1], e1[:, 0]]) / det[:, None]
        return _readonly(np.stack([-g1 - g2, g1, g2], axis=1))

    @cached_property
    def _topology(self):
        return _build_facets(self)

    @property
    def facets(self):
        return self._topology[0]

    @property
    def element_facets(self):
        """Facet index of local facet ``i`` (opposite vertex ``i``), shape (ne, dim + 1)."""
        return self._topology[1]

    def facet(self, i):
        return self.facets[i]

    def gradient(self, values):
        """Elementwise constant gradient of a P1 field, shape (ne, dim)."""
        values = np.asarray(values, dtype=float)
        return np.einsum("ei,eid->ed", values[self.elements], self.barycentric_gradients)

    def min_angles(self):
        """Smallest interior angle of each triangle (radians)."""
        if self.dim != 2:
            raise MeshError("angles are only defined for triangles")
        c = self.coords
        out = np.full(self.n_elements, np.pi)
        for i in range(3):
            u = c[:, (i + 1) % 3] - c[:, i]
            v = c[:, (i + 2) % 3] - c[:, i]
            cosang = np.einsum("ed,ed->e", u, v) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            out = np.minimum(out, np.arccos(np.clip(cosang, -1.0, 1.0)))
        return out

    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def is_conforming(self, tol=1e-12):
        """True when every single-neighbour facet lies on the bounding box.

        A hanging node leaves interior facets with one neighbour, which this
        catches.  Facets with more than two neighbours are rejected when the
        topology is built.
        """
        f = self.facets
        lo, hi = self.bounding_box()
        pts = self.vertices[f.vertices[f.is_boundary]]  # (nb, nfv, dim)
        on_side = (np.abs(pts - lo) <= tol) | (np.abs(pts - hi) <= tol)
        return bool(np.all(np.any(np.all(on_side, axis=1), axis=1)))

    def prolong(self, values):
        """Interpolate a P1 field from the parent mesh onto this mesh."""
        values = np.asarray(values, dtype=float)
        n_old = self.n_vertices - len(self.vertex_parents)
        if values.shape[0] != n_old:
            raise MeshError("field does not live on the parent mesh")
        mid = 0.5 * (values[self.vertex_parents[:, 0]] + values[self.vertex_parents[:, 1]])
        return np.concatenate([values, mid])

    def dump(self, path):
        """Write the plain-text mesh format (see :func:`load_mesh`)."""
        with open(path, "w") as fh:
            fh.write(f"{self.dim} {self.n_vertices} {self.n_elements}\n")
            for p in self.vertices:
                fh.write(" ".join(repr(float(x)) for x in p) + "\n")
            for t, el in enumerate(self.elements):
                items = [str(int(v)) for v in el]
                if self.dim == 2:
                    items.append(str(int(self.refinement_edge[t])))
                fh.write(" ".join(items) + "\n")


def load_mesh(path):
    """Read a mesh written by :meth:`Mesh.dump`.

    Format: a header ``dim n_vertices n_elements``, one vertex per line,
    then one element per line (vertex indices, followed in 2D by the local
    refinement-edge index).
    """
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    dim, nv, ne = (int(x) for x in lines[0])
    verts = np.array([[float(x) for x in ln] for ln in lines[1:1 + nv]]).reshape(nv, dim)
    rows = np.array([[int(x) for x in ln] for ln in lines[1 + nv:1 + nv + ne]], dtype=np.int64)
    if dim == 2:
        return Mesh(verts, rows[:, :3], refinement_edge=rows[:, 3])
    return Mesh(verts, rows[:, :2])


def _build_facets(mesh):
    el = mesh.elements
    ne, nloc = el.shape
    nv = mesh.n_vertices
    if mesh.dim == 1:
        loc = el[:, [1, 0]][:, :, None]
    else:
        loc = np.stack([el[:, [1, 2]], el[:, [2, 0]], el[:, [0, 1]]], axis=1)
    flat = np.sort(loc.reshape(ne * nloc, mesh.dim), axis=1)
    key = flat[:, 0] if mesh.dim == 1 else flat[:, 0] * nv + flat[:, 1]
    _, first, inv, counts = np.unique(key, return_index=True, return_inverse=True,
                                      return_counts=True)
    inv = inv.ravel()
    if counts.max() > 2:
        raise MeshError("non-manifold facet shared by more than two elements")
    nf = len(counts)
    order = np.argsort(inv, kind="stable")
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    owner = order // nloc
    lidx = order % nloc
    f_el = np.full((nf, 2), -1, dtype=np.int64)
    f_loc = np.full((nf, 2), -1, dtype=np.int64)
    f_el[:, 0] = owner[starts]
    f_loc[:, 0] = lidx[starts]
    two = counts == 2
    f_el[two, 1] = owner[starts[two] + 1]
    f_loc[two, 1] = lidx[starts[two] + 1]
    fverts = flat[first]
    is_bnd = counts == 1

    plus = f_el[:, 0]
    if mesh.dim == 1:
        measure = np.ones(nf)
        h = mesh.volumes
        # a point has no diameter: use the smaller neighbour, so that h_E
        # shrinks whenever either side is bisected (the mean would stay
        # pinned to a coarse neighbour under one-sided refinement)
        size = np.where(two, np.minimum(h[plus], h[np.where(two, f_el[:, 1], plus)]), h[plus])
        normal = np.sign(mesh.vertices[fverts[:, 0], 0] - mesh.centroids[plus, 0])[:, None]
    else:
        p0 = mesh.vertices[fverts[:, 0]]
        p1 = mesh.vertices[fverts[:, 1]]
        t = p1 - p0
        measure = np.linalg.norm(t, axis=1)
        size = measure
        normal = np.column_stack([t[:, 1], -t[:, 0]]) / measure[:, None]
        flip = np.einsum("fd,fd->f", normal, 0.5 * (p0 + p1) - mesh.centroids[plus]) < 0
        normal[flip] *= -1.0

    table = FacetTable(
        vertices=_readonly(fverts),
        elements=_readonly(f_el),
        local=_readonly(f_loc),
        size=_readonly(size),
        measure=_readonly(measure),
        normal=_readonly(normal),
        is_boundary=_readonly(is_bnd),
    )
    return table, _readonly(inv.reshape(ne, nloc))


def build_uniform_interval(n, a=0.0, b=1.0):
    """Uniform partition of ``(a, b)`` into ``n`` intervals."""
    if int(n) != n or n < 1:
        raise MeshError("n must be a positive integer")
    if not a < b:
        raise MeshError("need a < b")
    n = int(n)
    x = np.linspace(a, b, n + 1)
    el = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    return Mesh(x[:, None], el)


def build_uniform_triangle_mesh(n):
    """Unit square split into ``n x n`` squares, two right triangles each.

    The diagonal of every square is the initial refinement edge.
    """
    if int(n) != n or n < 1:
        raise MeshError("n must be a positive integer")
    n = int(n)
    s = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(s, s, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    i, j = i.ravel(), j.ravel()
    sw = j * (n + 1) + i
    se = sw + 1
    nw = sw + (n + 1)
    ne_ = nw + 1
    lower = np.column_stack([se, ne_, sw])
    upper = np.column_stack([nw, sw, ne_])
    el = np.empty((2 * n * n, 3), dtype=np.int64)
    el[0::2] = lower
    el[1::2] = upper
    return Mesh(verts, el)


def bisect(mesh, marked):
    """Refine the marked elements by bisection.

    In 1D the marked intervals are halved.  In 2D the marked triangles are
    bisected across their refinement edge and the newest vertex bisection
    closure refines further triangles until the mesh is conforming again.

    Parameters
    ----------
    mesh : Mesh
    marked : iterable of int or bool mask
        Element indices (or a mask) to refine.

    Returns
    -------
    Mesh
        Next-generation mesh; ``parent_of`` maps into ``mesh``.
    """
    mask = np.zeros(mesh.n_elements, dtype=bool)
    m = np.asarray(list(marked) if isinstance(marked, (set, frozenset)) else marked)
    if m.dtype == bool:
        if m.shape != mask.shape:
            raise IndexError("boolean mark mask has the wrong length")
        mask = m.copy()
    elif m.size:
        m = m.astype(np.int64).ravel()
        if m.min() < 0 or m.max() >= mesh.n_elements:
            raise IndexError("marked element index out of range")
        mask[m] = True

    if not mask.any():
        return Mesh(mesh.vertices, mesh.elements,
                    refinement_edge=mesh.refinement_edge,
                    parent_of=np.arange(mesh.n_elements),
                    generation=mesh.generation + 1,
                    boundary_vertex_flags=mesh.boundary_vertex_flags)

    if mesh.dim == 1:
        return _bisect_1d(mesh, mask)
    return _bisect_2d(mesh, mask)


def _bisect_1d(mesh, mask):
    el = mesh.elements
    nv = mesh.n_vertices
    idx = np.flatnonzero(mask)
    new_ids = nv + np.arange(len(idx))
    mids = 0.5 * (mesh.vertices[el[idx, 0]] + mesh.vertices[el[idx, 1]])
    counts = 1 + mask.astype(np.int64)
    children = np.repeat(el, counts, axis=0)
    parent = np.repeat(np.arange(mesh.n_elements), counts)
    starts = np.cumsum(counts) - counts
    children[starts[idx], 1] = new_ids
    children[starts[idx] + 1, 0] = new_ids
    flags = np.concatenate([mesh.boundary_vertex_flags, np.zeros(len(idx), dtype=bool)])
    return Mesh(np.vstack([mesh.vertices, mids]), children, parent_of=parent,
                generation=mesh.generation + 1, boundary_vertex_flags=flags,
                vertex_parents=el[idx])


def _bisect_2d(mesh, mask):
    f = mesh.facets
    elem_edges = np.ascontiguousarray(mesh.element_facets, dtype=np.int64)
    edge_elems = np.ascontiguousarray(f.elements, dtype=np.int64)
    split = kernels.nvb_closure(elem_edges, edge_elems, mask)
    edges = np.flatnonzero(split)
    nv = mesh.n_vertices
    edge_mid = np.full(len(f), -1, dtype=np.int64)
    edge_mid[edges] = nv + np.arange(len(edges))
    ev = f.vertices[edges]
    mids = 0.5 * (mesh.vertices[ev[:, 0]] + mesh.vertices[ev[:, 1]])
    children, parent = kernels.nvb_split(
        np.ascontiguousarray(mesh.elements, dtype=np.int64), elem_edges, edge_mid)
    flags = np.concatenate([mesh.boundary_vertex_flags, f.is_boundary[edges]])
    return Mesh(np.vstack([mesh.vertices, mids]), children, parent_of=parent,
                generation=mesh.generation + 1, boundary_vertex_flags=flags,
                vertex_parents=ev)


def uniform_refine(mesh, times=1):
    """Bisect every element ``times`` times (two bisections quarter a triangle)."""
    for _ in range(times):
        mesh = bisect(mesh, np.ones(mesh.n_elements, dtype=bool))
    return mesh
