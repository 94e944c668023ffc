"""Combined regularisation and mesh adaptivity.

One iteration is: solve, estimate, reduce alpha_h where the inconsistency
indicator is large, then mark (maximum strategy) and bisect.  Each part
stops on its own once its estimator is below tolerance; the loop ends when
both are.  After the loop the control is recovered from the adjoint.
"""
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .assembly import ElementField, NodalField, reconstruct_control, solve
from .estimators import EstimatorBreakdown, effectivity, energy_error, estimate
from .mesh import Mesh, bisect

log = logging.getLogger(__name__)

DEFAULT_INITIAL_N = {1: 128, 2: 8}


@dataclass
class AdaptiveConfig:
    """Parameters of the adaptive loop.

    ``tol_h = inf`` disables mesh refinement (regularisation-only runs);
    ``alpha0 = alpha`` disables regularisation refinement.  ``initial_n``
    is the number of uniform subdivisions per direction of the starting
    mesh (a per-dimension default when None).  With
    ``resume_alpha_when_blocked`` alpha_h keeps being reduced after
    ``eta_alpha < tol_alpha`` in iterations where the exclusion rule leaves
    nothing to mark; otherwise such an iteration ends the run as stalled.
    """

    alpha: float
    alpha0: float = 1.0
    rho: float = 0.5
    theta: float = 0.5
    tol_alpha: float = 1e-8
    tol_h: float = math.inf
    max_iterations: int = 500
    initial_n: Optional[int] = None
    resume_alpha_when_blocked: bool = True
    quad_order: Optional[int] = None

    def __post_init__(self):
        if not 0.0 < self.alpha <= self.alpha0 <= 1.0:
            raise ValueError("need 0 < alpha <= alpha0 <= 1")
        if not (0.0 <= self.rho <= 1.0 and 0.0 <= self.theta <= 1.0):
            raise ValueError("rho and theta must lie in [0, 1]")
        if not (self.tol_alpha > 0 and self.tol_h > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass
class IterationRecord:
    iteration: int
    dim_Vh: int
    n_elements: int
    eta_h: float
    eta_alpha: float
    err_X: float
    effectivity: float
    alpha_min: float
    alpha_max: float
    alpha_mean: float
    elements_marked: int
    target_misfit: float
    wall_time: float

    def as_row(self):
        return asdict(self)


@dataclass
class AdaptiveResult:
    records: List[IterationRecord]
    mesh: Mesh
    alpha_h: ElementField
    u_h: NodalField
    z_h: NodalField
    f_h: NodalField
    breakdown: EstimatorBreakdown
    status: str
    marked_history: list = field(default_factory=list, repr=False)

    @property
    def converged(self):
        return self.status == "converged"

    @property
    def iterations(self):
        return len(self.records)


def relative_estimator_size(eta_alpha_T):
    """Affine rescaling of the local indicators onto [0, 1].

    When all indicators are equal the rescaling is undefined and every
    element gets ``r = 1`` (uniform reduction).
    """
    e = np.asarray(eta_alpha_T, dtype=float)
    lo, hi = e.min(), e.max()
    if hi == lo:
        return np.ones_like(e)
    return (e - lo) / (hi - lo)


def reduce_alpha(alpha_h, r, cfg):
    """``alpha + (alpha_h - alpha) * (1 + r (rho - 1))``, elementwise."""
    a = np.asarray(getattr(alpha_h, "values", alpha_h), dtype=float)
    r = np.asarray(getattr(r, "values", r), dtype=float)
    if np.any(a < cfg.alpha) or np.any(a > 1.0):
        raise ValueError("alpha_h outside [alpha, 1]")
    if np.any(r < 0.0) or np.any(r > 1.0):
        raise ValueError("relative sizes must lie in [0, 1]")
    new = cfg.alpha + (a - cfg.alpha) * (1.0 + r * (cfg.rho - 1.0))
    # rounding must not break alpha <= new <= old
    return np.clip(new, cfg.alpha, a)


def mark_elements(eta_h_T, eta_alpha_T, theta):
    """Maximum strategy, skipping elements where the inconsistency dominates."""
    eh = np.asarray(eta_h_T, dtype=float)
    ea = np.asarray(eta_alpha_T, dtype=float)
    if eh.shape != ea.shape:
        raise ValueError("estimators live on different meshes")
    return np.flatnonzero((eh >= theta * eh.max()) & (eh >= ea))


def transfer_alpha(alpha_h, new_mesh, old_mesh=None):
    """Children inherit their parent's value (exact for nested P0 fields)."""
    if isinstance(alpha_h, ElementField):
        old_mesh = alpha_h.mesh
        values = alpha_h.values
    else:
        values = np.asarray(alpha_h, dtype=float)
    if old_mesh is not None:
        if new_mesh is old_mesh:
            return values.copy()
        if new_mesh.generation != old_mesh.generation + 1:
            raise ValueError("new mesh is not the next generation of the old one")
    if new_mesh.parent_of.max() >= len(values):
        raise ValueError("parent_of points outside the old mesh")
    return values[new_mesh.parent_of]


def _record(it, mesh, sol, br, alpha_h, problem, cfg, n_marked, t0):
    err = eff = misfit = float("nan")
    if problem.has_exact:
        rep = energy_error(mesh, sol.u, sol.z, problem.exact_u, problem.exact_z,
                           problem.alpha, d=problem.d, order=cfg.quad_order)
        err = rep.err_X
        eff = effectivity(rep, br)
        misfit = rep.target_misfit
    return IterationRecord(
        iteration=it,
        dim_Vh=len(mesh.free_vertices),
        n_elements=mesh.n_elements,
        eta_h=br.eta_h,
        eta_alpha=br.eta_alpha,
        err_X=err,
        effectivity=eff,
        alpha_min=float(alpha_h.min()),
        alpha_max=float(alpha_h.max()),
        alpha_mean=float(alpha_h.mean()),
        elements_marked=int(n_marked),
        target_misfit=misfit,
        wall_time=time.perf_counter() - t0,
    )


def run_adaptive(problem, cfg, mesh=None, callback: Optional[Callable] = None):
    """Run the adaptive loop.

    Parameters
    ----------
    problem : Problem
    cfg : AdaptiveConfig
    mesh : Mesh, optional
        Initial mesh; defaults to a uniform mesh with ``cfg.initial_n``.
    callback : callable, optional
        Called as ``callback(record, state)`` after every iteration, where
        ``state`` holds the mesh, solution, breakdown, alpha_h and marks.

    Returns
    -------
    AdaptiveResult
        ``status`` is ``"converged"``, ``"max_iterations"`` or ``"stalled"``
        (nothing left to refine although a tolerance is still missed).
    """
    if not math.isclose(cfg.alpha, problem.alpha, rel_tol=1e-14):
        raise ValueError("config alpha differs from the problem's alpha")
    if mesh is None:
        mesh = problem.initial_mesh(cfg.initial_n or DEFAULT_INITIAL_N[problem.dim])
    alpha_h = np.full(mesh.n_elements, cfg.alpha0)
    records, marks = [], []
    status = "max_iterations"
    for it in range(1, cfg.max_iterations + 1):
        t0 = time.perf_counter()
        sol = solve(mesh, alpha_h, problem.d, cfg.quad_order)
        br = estimate(mesh, sol.u, sol.z, alpha_h, cfg.alpha, problem.d, cfg.quad_order)
        eta_h, eta_a = br.eta_h, br.eta_alpha
        done = eta_a < cfg.tol_alpha and eta_h < cfg.tol_h

        new_alpha, new_mesh = alpha_h, mesh
        marked = np.zeros(0, dtype=np.int64)
        if not done:
            if eta_a >= cfg.tol_alpha:
                r = relative_estimator_size(br.eta_alpha_T)
                new_alpha = reduce_alpha(alpha_h, r, cfg)
            if eta_h >= cfg.tol_h:
                marked = mark_elements(br.eta_h_T, br.eta_alpha_T, cfg.theta)
                if not marked.size and eta_a < cfg.tol_alpha and cfg.resume_alpha_when_blocked:
                    # every candidate is dominated by its inconsistency: only
                    # reducing alpha_h there can unblock the mesh refinement
                    r = relative_estimator_size(br.eta_alpha_T)
                    new_alpha = reduce_alpha(alpha_h, r, cfg)
                if marked.size:
                    new_mesh = bisect(mesh, marked)
                    new_alpha = transfer_alpha(new_alpha, new_mesh, mesh)

        rec = _record(it, mesh, sol, br, alpha_h, problem, cfg, marked.size, t0)
        records.append(rec)
        marks.append(marked)
        log.debug("it %d dim %d eta_h %.3e eta_a %.3e marked %d", it, rec.dim_Vh,
                  eta_h, eta_a, marked.size)
        if callback is not None:
            callback(rec, dict(mesh=mesh, solution=sol, breakdown=br,
                               alpha_h=alpha_h, marked=marked))
        if done:
            status = "converged"
            break
        if new_mesh is mesh and np.array_equal(new_alpha, alpha_h):
            status = "stalled"
            break
        if it == cfg.max_iterations:
            break
        mesh, alpha_h = new_mesh, new_alpha

    if status != "converged":
        log.warning("adaptive loop ended without convergence (%s) after %d iterations",
                    status, len(records))
    f_h = reconstruct_control(mesh, alpha_h, sol.z)
    return AdaptiveResult(records, mesh, ElementField(mesh, alpha_h), sol.u, sol.z, f_h,
                          br, status, marks)
