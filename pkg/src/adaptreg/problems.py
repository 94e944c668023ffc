"""Model problems with manufactured solutions.

Every problem is posed on the unit interval or the unit square with
homogeneous Dirichlet data.  ``exact_u`` and ``exact_z`` satisfy

    -alpha u'' = z,    -z'' + u = d,

so that ``alpha u'''' + u = d`` with ``u = u'' = 0`` on the boundary.
Point arrays passed to the evaluators have shape ``(N, dim)``.
"""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .mesh import build_uniform_interval, build_uniform_triangle_mesh


@dataclass(frozen=True)
class AnalyticFunction:
    """Vectorised point evaluator with an optional gradient."""

    value: Callable[[np.ndarray], np.ndarray]
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, x):
        return self.value(np.atleast_2d(np.asarray(x, dtype=float)))

    def gradient(self, x):
        if self.grad is None:
            raise ValueError("no gradient evaluator available")
        return self.grad(np.atleast_2d(np.asarray(x, dtype=float)))

    @classmethod
    def constant(cls, c, dim=1):
        return cls(lambda x: np.full(len(x), float(c)),
                   lambda x: np.zeros((len(x), dim)))


@dataclass(frozen=True)
class Problem:
    label: str
    dim: int
    alpha: float
    d: AnalyticFunction
    exact_u: Optional[AnalyticFunction] = None
    exact_z: Optional[AnalyticFunction] = None

    @property
    def has_exact(self):
        return self.exact_u is not None and self.exact_z is not None

    def initial_mesh(self, n):
        if self.dim == 1:
            return build_uniform_interval(n, 0.0, 1.0)
        return build_uniform_triangle_mesh(n)

    def exact_control(self, x):
        """Control ``f = z / alpha``."""
        return self.exact_z(x) / self.alpha


def _check_alpha(alpha):
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")


K1 = 500.0


def example1(alpha):
    """Smooth target concentrated at the centre of (0, 1)."""
    _check_alpha(alpha)
    k2 = 1.0 / (1.0 + 12.0 * alpha * K1 ** 2)

    def y_of(x):
        return -K1 * (x[:, 0] - 0.5) ** 2

    def dy(x):
        return -2.0 * K1 * (x[:, 0] - 0.5)

    def d(x):
        y = y_of(x)
        return k2 * (1.0 + 4.0 * alpha * K1 ** 2 * (4 * y ** 2 + 12 * y + 3)) * np.exp(y)

    def u(x):
        return k2 * np.exp(y_of(x))

    def du(x):
        return (k2 * np.exp(y_of(x)) * dy(x))[:, None]

    # z = -alpha u''
    def z(x):
        y = y_of(x)
        return 2.0 * alpha * K1 * k2 * (2 * y + 1) * np.exp(y)

    def dz(x):
        y = y_of(x)
        return (2.0 * alpha * K1 * k2 * np.exp(y) * dy(x) * (2 * y + 3))[:, None]

    return Problem("ex1", 1, alpha, AnalyticFunction(d), AnalyticFunction(u, du),
                   AnalyticFunction(z, dz))


def example2(alpha):
    """Constant target ``d = 1``; boundary layers of width ~ alpha**(1/4)."""
    _check_alpha(alpha)
    w = (4.0 * alpha) ** -0.25
    # cosh(t)/D and sinh(t)/D with D = cosh(w) + cos(w), free of overflow
    den = 1.0 + np.exp(-2 * w) + 2.0 * np.cos(w) * np.exp(-w)
    sq = np.sqrt(alpha)

    def ch(t):
        return (np.exp(t - w) + np.exp(-t - w)) / den

    def sh(t):
        return (np.exp(t - w) - np.exp(-t - w)) / den

    def u(x):
        y = w * x[:, 0]
        s = w - y
        return 1.0 - (np.cos(y) * ch(s) + ch(y) * np.cos(s))

    def du(x):
        y = w * x[:, 0]
        s = w - y
        g = (-np.sin(y) * ch(s) - np.cos(y) * sh(s)
             + sh(y) * np.cos(s) + ch(y) * np.sin(s))
        return (-w * g)[:, None]

    def z(x):
        y = w * x[:, 0]
        s = w - y
        return sq * (np.sin(y) * sh(s) + sh(y) * np.sin(s))

    def dz(x):
        y = w * x[:, 0]
        s = w - y
        g = (np.cos(y) * sh(s) - np.sin(y) * ch(s)
             + ch(y) * np.sin(s) - sh(y) * np.cos(s))
        return (sq * w * g)[:, None]

    return Problem("ex2", 1, alpha, AnalyticFunction.constant(1.0), AnalyticFunction(u, du),
                   AnalyticFunction(z, dz))


def example3(alpha=1e-8, center=(0.5, 0.5), radius=0.1):
    """Indicator of a closed disc on the unit square; no closed-form solution."""
    _check_alpha(alpha)
    c = np.asarray(center, dtype=float)

    def d(x):
        return (np.sum((x - c) ** 2, axis=1) <= radius ** 2).astype(float)

    return Problem("ex3", 2, alpha, AnalyticFunction(d))


PROBLEMS = {"ex1": example1, "ex2": example2, "ex3": example3}


def get_problem(name, alpha):
    try:
        return PROBLEMS[name](alpha)
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
