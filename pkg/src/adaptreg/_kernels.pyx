# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels.  Same contracts as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


def nvb_closure(const cnp.int64_t[:, ::1] elem_edges,
                const cnp.int64_t[:, ::1] edge_elems,
                marked):
    cdef Py_ssize_t ne = elem_edges.shape[0]
    cdef Py_ssize_t nedge = edge_elems.shape[0]
    cdef cnp.uint8_t[::1] mk = np.ascontiguousarray(marked, dtype=np.uint8)
    out = np.zeros(nedge, dtype=np.uint8)
    cdef cnp.uint8_t[::1] em = out
    # each edge is marked at most once, so at most 2 pushes per edge
    cdef cnp.int64_t[::1] stack = np.empty(ne + 2 * nedge + 1, dtype=np.int64)
    cdef Py_ssize_t top = 0, t, k
    cdef cnp.int64_t e, nb
    for t in range(ne):
        if mk[t]:
            stack[top] = t
            top += 1
    while top > 0:
        top -= 1
        t = stack[top]
        e = elem_edges[t, 0]
        if em[e]:
            continue
        em[e] = 1
        for k in range(2):
            nb = edge_elems[e, k]
            if nb >= 0 and nb != t:
                stack[top] = nb
                top += 1
    return out.astype(bool)


def nvb_split(const cnp.int64_t[:, ::1] elements,
              const cnp.int64_t[:, ::1] elem_edges,
              const cnp.int64_t[::1] edge_mid):
    cdef Py_ssize_t ne = elements.shape[0]
    tris_arr = np.empty((4 * ne, 3), dtype=np.int64)
    par_arr = np.empty(4 * ne, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] tris = tris_arr
    cdef cnp.int64_t[::1] par = par_arr
    cdef Py_ssize_t t, n = 0
    cdef cnp.int64_t a, b, c, m, p, q
    for t in range(ne):
        a = elements[t, 0]
        b = elements[t, 1]
        c = elements[t, 2]
        m = edge_mid[elem_edges[t, 0]]
        if m < 0:
            tris[n, 0] = a; tris[n, 1] = b; tris[n, 2] = c
            par[n] = t
            n += 1
            continue
        q = edge_mid[elem_edges[t, 1]]
        p = edge_mid[elem_edges[t, 2]]
        if p >= 0:
            tris[n, 0] = p; tris[n, 1] = m; tris[n, 2] = a
            par[n] = t
            n += 1
            tris[n, 0] = p; tris[n, 1] = b; tris[n, 2] = m
            par[n] = t
            n += 1
        else:
            tris[n, 0] = m; tris[n, 1] = a; tris[n, 2] = b
            par[n] = t
            n += 1
        if q >= 0:
            tris[n, 0] = q; tris[n, 1] = m; tris[n, 2] = c
            par[n] = t
            n += 1
            tris[n, 0] = q; tris[n, 1] = a; tris[n, 2] = m
            par[n] = t
            n += 1
        else:
            tris[n, 0] = m; tris[n, 1] = c; tris[n, 2] = a
            par[n] = t
            n += 1
    return tris_arr[:n].copy(), par_arr[:n].copy()


def p1_local(const double[:, ::1] vertices, const cnp.int64_t[:, ::1] elements, coef):
    cdef Py_ssize_t ne = elements.shape[0]
    cdef Py_ssize_t dim = vertices.shape[1]
    cdef Py_ssize_t nloc = dim + 1
    cdef double[::1] cf = np.broadcast_to(
        np.asarray(coef, dtype=np.float64), (ne,)).copy()
    k_arr = np.empty((ne, nloc, nloc))
    m_arr = np.empty((ne, nloc, nloc))
    cdef double[:, :, ::1] K = k_arr
    cdef double[:, :, ::1] M = m_arr
    cdef Py_ssize_t t, i, j
    cdef double h, x0, y0, e1x, e1y, e2x, e2y, det, area, s
    cdef double gx[3]
    cdef double gy[3]
    for t in range(ne):
        if dim == 1:
            h = vertices[elements[t, 1], 0] - vertices[elements[t, 0], 0]
            s = cf[t] / h
            K[t, 0, 0] = s; K[t, 1, 1] = s
            K[t, 0, 1] = -s; K[t, 1, 0] = -s
            M[t, 0, 0] = h / 3.0; M[t, 1, 1] = h / 3.0
            M[t, 0, 1] = h / 6.0; M[t, 1, 0] = h / 6.0
            continue
        x0 = vertices[elements[t, 0], 0]
        y0 = vertices[elements[t, 0], 1]
        e1x = vertices[elements[t, 1], 0] - x0
        e1y = vertices[elements[t, 1], 1] - y0
        e2x = vertices[elements[t, 2], 0] - x0
        e2y = vertices[elements[t, 2], 1] - y0
        det = e1x * e2y - e1y * e2x
        area = 0.5 * fabs(det)
        gx[1] = e2y / det
        gy[1] = -e2x / det
        gx[2] = -e1y / det
        gy[2] = e1x / det
        gx[0] = -gx[1] - gx[2]
        gy[0] = -gy[1] - gy[2]
        for i in range(3):
            for j in range(3):
                K[t, i, j] = cf[t] * area * (gx[i] * gx[j] + gy[i] * gy[j])
                M[t, i, j] = area / 12.0 * (2.0 if i == j else 1.0)
    return k_arr, m_arr
