"""Residual a posteriori estimators, energy errors and effectivity.

For piecewise linears the elementwise Laplacians vanish, so on an element T

    R_z^2 = h_T^2 ||d - u_h||_T^2,        R_u^2 = h_T^2 / alpha ||z_h||_T^2,

and on an interior facet E with normal gradient jumps [.]

    J_z^2 = h_E ||[grad z_h]||_E^2,       J_u^2 = h_E alpha ||[grad u_h]||_E^2.

Each interior facet gives half of ``J_u^2 + J_z^2`` to both neighbours.
The inconsistency indicator is ``alpha^-1 (alpha_h - alpha)^2 ||grad u_h||_T^2``.
``alpha`` is always the target parameter, never alpha_h.
"""
from dataclasses import dataclass

import numpy as np

from .assembly import (ElementField, NodalField, _values, h1_seminorm,
                       l2_norm, l2_norm_sq_elementwise)


@dataclass
class EstimatorBreakdown:
    """Squared local estimator contributions, one entry per element."""

    r_z2: np.ndarray
    r_u2: np.ndarray
    jump2: np.ndarray
    eta_alpha_T2: np.ndarray

    @property
    def eta_h_T2(self):
        return self.r_z2 + self.r_u2 + self.jump2

    @property
    def eta_h_T(self):
        return np.sqrt(self.eta_h_T2)

    @property
    def eta_alpha_T(self):
        return np.sqrt(self.eta_alpha_T2)

    @property
    def eta_h(self):
        return float(np.sqrt(self.eta_h_T2.sum()))

    @property
    def eta_alpha(self):
        return float(np.sqrt(self.eta_alpha_T2.sum()))

    @property
    def total(self):
        return float(np.hypot(self.eta_h, self.eta_alpha))


@dataclass
class ErrorReport:
    err_X: float
    err_u_h1: float
    err_z_h1: float
    effectivity: float = float("nan")
    target_misfit: float = float("nan")


def _check_alpha(alpha):
    if not alpha > 0.0:
        raise ValueError("alpha must be positive")


def facet_jumps(mesh, values):
    """Normal jump of the gradient of a P1 field on every facet (0 on the boundary)."""
    g = mesh.gradient(_values(values))
    f = mesh.facets
    plus, minus = f.elements[:, 0], f.elements[:, 1]
    interior = minus >= 0
    jump = np.zeros(len(f))
    diff = g[plus[interior]] - g[minus[interior]]
    jump[interior] = np.einsum("fd,fd->f", diff, f.normal[interior])
    return jump


def _facet_to_elements(mesh, per_facet):
    """Give half of each interior facet's value to each neighbour."""
    f = mesh.facets
    out = np.zeros(mesh.n_elements)
    interior = f.elements[:, 1] >= 0
    half = 0.5 * per_facet[interior]
    np.add.at(out, f.elements[interior, 0], half)
    np.add.at(out, f.elements[interior, 1], half)
    return out


def compute_eta_h(mesh, u_h, z_h, alpha, d, order=None):
    """Discretisation estimator; the alpha part of the result is zero."""
    _check_alpha(alpha)
    h2 = mesh.diameters ** 2
    r_z2 = h2 * l2_norm_sq_elementwise(mesh, u_h, d, order)
    r_u2 = h2 / alpha * l2_norm_sq_elementwise(mesh, z_h, None, order=2)
    f = mesh.facets
    ju = facet_jumps(mesh, u_h)
    jz = facet_jumps(mesh, z_h)
    per_facet = f.size * f.measure * (alpha * ju ** 2 + jz ** 2)
    jump2 = _facet_to_elements(mesh, per_facet)
    return EstimatorBreakdown(r_z2, r_u2, jump2, np.zeros(mesh.n_elements))


def compute_eta_alpha(mesh, u_h, alpha_h, alpha, upper=1.0):
    """Squared inconsistency indicator per element.

    Raises if ``alpha_h`` leaves ``[alpha, upper]``.
    """
    _check_alpha(alpha)
    a = np.broadcast_to(_values(alpha_h), (mesh.n_elements,))
    if np.any(a < alpha) or np.any(a > upper):
        raise ValueError("alpha_h must satisfy alpha <= alpha_h <= 1")
    g = mesh.gradient(_values(u_h))
    return (a - alpha) ** 2 / alpha * np.sum(g ** 2, axis=1) * mesh.volumes


def estimate(mesh, u_h, z_h, alpha_h, alpha, d, order=None):
    """Both estimators for one discrete solution."""
    br = compute_eta_h(mesh, u_h, z_h, alpha, d, order)
    br.eta_alpha_T2 = compute_eta_alpha(mesh, u_h, alpha_h, alpha)
    return br


def energy_error(mesh, u_h, z_h, exact_u, exact_z, alpha, d=None, order=None):
    """``||(u - u_h, z - z_h)||_X`` by quadrature of the exact gradients."""
    _check_alpha(alpha)
    if exact_u.grad is None or exact_z.grad is None:
        raise ValueError("exact solutions need gradient evaluators")
    eu = h1_seminorm(mesh, u_h, exact_u, order)
    ez = h1_seminorm(mesh, z_h, exact_z, order)
    rep = ErrorReport(float(np.sqrt(alpha * eu ** 2 + ez ** 2)), eu, ez)
    if d is not None:
        rep.target_misfit = target_misfit(mesh, u_h, d, order)
    return rep


def effectivity(report, breakdown):
    """``(eta_h^2 + eta_alpha^2)^(1/2) / ||e||_X``.

    With alpha_h = alpha the inconsistency part is exactly zero and this is
    ``eta_h / ||e||_X``.
    """
    eff = breakdown.total / report.err_X if report.err_X > 0 else float("inf")
    report.effectivity = eff
    return eff


def target_misfit(mesh, u_h, d, order=None):
    """``||u_h - d||``."""
    return l2_norm(mesh, u_h, d, order)


def target_misfit_elementwise(mesh, u_h, d, order=None):
    return np.sqrt(l2_norm_sq_elementwise(mesh, u_h, d, order))


__all__ = [
    "EstimatorBreakdown", "ErrorReport", "NodalField", "ElementField",
    "compute_eta_h", "compute_eta_alpha", "estimate", "energy_error",
    "effectivity", "target_misfit", "target_misfit_elementwise", "facet_jumps",
]
