"""Quadrature rules on the reference interval and triangle.

Points are returned in barycentric coordinates so that a rule can be
pushed onto any simplex by a linear combination of its vertices.  Weights
sum to the reference volume (1 for the interval, 1/2 for the triangle).
"""
from functools import lru_cache

import numpy as np

# Symmetric Dunavant rules, weights normalised to unit area.
_TRI_RULES = {
    2: [
        (1.0 / 3.0, (2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0), 3),
    ],
    4: [
        (0.223381589678011, (0.108103018168070, 0.445948490915965, 0.445948490915965), 3),
        (0.109951743655322, (0.816847572980459, 0.091576213509771, 0.091576213509771), 3),
    ],
    6: [
        (0.116786275726379, (0.501426509658179, 0.249286745170910, 0.249286745170910), 3),
        (0.050844906370207, (0.873821971016996, 0.063089014491502, 0.063089014491502), 3),
        (0.082851075618374, (0.053145049844817, 0.310352451033784, 0.636502499121399), 6),
    ],
}

REFERENCE_VOLUME = {1: 1.0, 2: 0.5}


def _orbit(b, multiplicity):
    a0, a1, a2 = b
    if multiplicity == 3:
        return [(a0, a1, a2), (a1, a0, a2), (a2, a1, a0)]
    return [(a0, a1, a2), (a0, a2, a1), (a1, a0, a2),
            (a1, a2, a0), (a2, a0, a1), (a2, a1, a0)]


@lru_cache(maxsize=None)
def quadrature_rule(dim, order):
    """Return ``(bary, weights)`` for a rule exact to polynomial ``order``.

    Parameters
    ----------
    dim : int
        1 (Gauss-Legendre on [0, 1]) or 2 (symmetric triangle rules).
    order : int
        Polynomial degree integrated exactly.  2..10 in 1D, {2, 4, 6} in 2D.

    Returns
    -------
    bary : ndarray, shape (nq, dim + 1)
    weights : ndarray, shape (nq,)
    """
    if dim == 1:
        if not 2 <= order <= 10:
            raise ValueError(f"unsupported 1D quadrature order {order}")
        npts = order // 2 + 1
        x, w = np.polynomial.legendre.leggauss(npts)
        s = 0.5 * (x + 1.0)
        bary = np.column_stack([1.0 - s, s])
        weights = 0.5 * w
    elif dim == 2:
        if order not in _TRI_RULES:
            raise ValueError(f"unsupported 2D quadrature order {order}")
        pts, wts = [], []
        for w, b, mult in _TRI_RULES[order]:
            for p in _orbit(b, mult):
                pts.append(p)
                wts.append(w)
        bary = np.array(pts)
        weights = 0.5 * np.array(wts)
    else:
        raise ValueError(f"unsupported dimension {dim}")
    bary.setflags(write=False)
    weights.setflags(write=False)
    return bary, weights
