"""Pure numpy implementations of the hot kernels.

Signatures and results match the compiled ``_kernels`` module exactly;
``adaptreg.kernels`` picks one of the two at import time.
"""
import numpy as np


def nvb_closure(elem_edges, edge_elems, marked):
    """Close a set of marked triangles under newest vertex bisection.

    Parameters
    ----------
    elem_edges : int64 array, shape (ne, 3)
        Edge index of local edge ``i`` (opposite local vertex ``i``).  Local
        edge 0 is the refinement edge.
    edge_elems : int64 array, shape (nedges, 2)
        Unused here, kept for signature parity with the compiled kernel.
    marked : bool array, shape (ne,)

    Returns
    -------
    edge_marked : bool array, shape (nedges,)
        Edges to be split.  Every element touching a split edge also has its
        refinement edge split, which is what makes the result conforming.
    """
    edge_marked = np.zeros(edge_elems.shape[0], dtype=bool)
    edge_marked[elem_edges[np.asarray(marked, dtype=bool), 0]] = True
    ref = elem_edges[:, 0]
    while True:
        need = edge_marked[elem_edges].any(axis=1) & ~edge_marked[ref]
        if not need.any():
            return edge_marked
        edge_marked[ref[need]] = True


def nvb_split(elements, elem_edges, edge_mid):
    """Bisect every triangle whose refinement edge carries a midpoint.

    ``edge_mid[e]`` is the new vertex on edge ``e`` or -1.  Triangles are
    stored as ``(newest, b, c)`` with refinement edge ``(b, c)``; a split
    triangle yields 2, 3 or 4 children in the same orientation.

    Returns
    -------
    children : int64 array, shape (n_new, 3)
    parent : int64 array, shape (n_new,)
    """
    a, b, c = elements[:, 0], elements[:, 1], elements[:, 2]
    m = edge_mid[elem_edges[:, 0]]
    q = edge_mid[elem_edges[:, 1]]
    p = edge_mid[elem_edges[:, 2]]
    idx = np.arange(len(elements), dtype=np.int64)

    split = m >= 0
    left2 = split & (p >= 0)
    right2 = split & (q >= 0)
    left1 = split & ~left2
    right1 = split & ~right2
    keep = ~split

    # (triangle, parent, slot); slots order the children of one parent
    pieces = [
        (np.column_stack([a, b, c])[keep], idx[keep], 0),
        (np.column_stack([m, a, b])[left1], idx[left1], 0),
        (np.column_stack([p, m, a])[left2], idx[left2], 0),
        (np.column_stack([p, b, m])[left2], idx[left2], 1),
        (np.column_stack([m, c, a])[right1], idx[right1], 2),
        (np.column_stack([q, m, c])[right2], idx[right2], 2),
        (np.column_stack([q, a, m])[right2], idx[right2], 3),
    ]
    tris = np.concatenate([t for t, _, _ in pieces]).astype(np.int64)
    parent = np.concatenate([pa for _, pa, _ in pieces]).astype(np.int64)
    slot = np.concatenate([np.full(len(pa), s) for _, pa, s in pieces])
    order = np.argsort(parent * 4 + slot, kind="stable")
    return tris[order], parent[order]


def p1_local(vertices, elements, coef):
    """Element stiffness (scaled by ``coef``) and mass matrices for P1.

    Returns
    -------
    kloc, mloc : float arrays, shape (ne, nloc, nloc)
    """
    dim = vertices.shape[1]
    coords = vertices[elements]
    coef = np.asarray(coef, dtype=float)
    if dim == 1:
        h = coords[:, 1, 0] - coords[:, 0, 0]
        base = np.array([[1.0, -1.0], [-1.0, 1.0]])
        kloc = (coef / h)[:, None, None] * base
        mloc = (h / 6.0)[:, None, None] * np.array([[2.0, 1.0], [1.0, 2.0]])
        return kloc, mloc
    e1 = coords[:, 1] - coords[:, 0]
    e2 = coords[:, 2] - coords[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    area = 0.5 * np.abs(det)
    # gradients of barycentric coordinates: rows of inv([e1 e2])^T
    g1 = np.column_stack([e2[:, 1], -e2[:, 0]]) / det[:, None]
    g2 = np.column_stack([-e1[:, 1], e1[:, 0]]) / det[:, None]
    grads = np.stack([-g1 - g2, g1, g2], axis=1)
    kloc = (coef * area)[:, None, None] * np.einsum("eid,ejd->eij", grads, grads)
    mloc = (area / 12.0)[:, None, None] * (np.ones((3, 3)) + np.eye(3))
    return kloc, mloc
