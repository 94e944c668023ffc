"""Command-line experiment harness.

Every subcommand writes CSV tables (header row always present) into
``--out-dir`` and returns an exit code: 0 pass, 1 acceptance violation,
2 usage error, 3 non-convergence.  Settings come from subcommand defaults,
then an optional ``key = value`` file (``--config``), then explicit flags.
"""
import argparse
import csv
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from . import plotting
from .adaptive import AdaptiveConfig, run_adaptive
from .assembly import assemble_coupled, solve
from .estimators import effectivity, energy_error, estimate
from .linsolve import dense_extremes, eig_extremes
from .mesh import build_uniform_interval
from .problems import get_problem

log = logging.getLogger("adaptreg")

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_NONCONVERGED = 0, 1, 2, 3

PROBLEM_ALPHA = {"ex1": 1e-8, "ex2": 1e-6, "ex3": 1e-8}

DEFAULTS = {
    "uniform-convergence": dict(problem="ex1", n_list=[2 ** k for k in range(6, 14)]),
    "effectivity-sweep": dict(problem="ex1", n=100_000, alphas=[1e-2, 1e-4, 1e-6, 1e-8]),
    "uniform-alpha": dict(problem="ex1", n=100_000, steps_per_decade=4),
    "reg-adapt": dict(problem="ex1", n=10_000, rho=0.5, tol_h=math.inf,
                      tol_alpha={"ex1": 1e-8, "ex2": 1e-7}),
    "full-adapt": dict(problem="ex1", n=128, rho=0.5, theta=0.5,
                       tol_alpha={"ex1": 1e-6, "ex2": 1e-6},
                       tol_h={"ex1": 1e-6, "ex2": 1e-5}),
    "solve-2d": dict(problem="ex3", n=8, rho=0.5, theta=0.2, tol_alpha=1e-5, tol_h=1e-4),
    "cond-study": dict(problem="ex2", alphas=[1e-2, 1e-4, 1e-6, 1e-8],
                       n_list=[64, 128, 256, 512, 1024], rho=0.3, theta=0.5,
                       tol_alpha=1e-5, tol_h=1e-5, n=16),
}

# exponent bands (h, alpha) of the uniform condition-number sweep
COND_BANDS = {"lambda_min": ((1.0, 0.5), 0.15),
              "lambda_max": ((-1.0, 0.0), 0.15),
              "cond": ((-2.0, -0.5), 0.2)}


class UsageError(Exception):
    pass


@dataclass
class ExperimentSpec:
    command: str
    problem: str = "ex1"
    alpha: Optional[float] = None
    alpha0: float = 1.0
    rho: float = 0.5
    theta: float = 0.5
    tol_alpha: float = 1e-8
    tol_h: float = math.inf
    max_iter: int = 500
    n: Optional[int] = None
    n_list: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    steps_per_decade: int = 4
    adaptive: bool = False
    out_dir: str = "runs"
    emit_plots: bool = False
    dump_mesh: bool = False
    seed: int = 0

    def adaptive_config(self):
        return AdaptiveConfig(alpha=self.alpha, alpha0=self.alpha0, rho=self.rho,
                              theta=self.theta, tol_alpha=self.tol_alpha, tol_h=self.tol_h,
                              max_iterations=self.max_iter, initial_n=self.n)


def _float(s):
    return math.inf if str(s).strip().lower() in ("inf", "infinity") else float(s)


def _bool(s):
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _list(conv):
    def parse(s):
        if isinstance(s, (list, tuple)):
            return [conv(v) for v in s]
        items = [v for v in str(s).replace(" ", "").split(",") if v]
        if not items:
            raise ValueError("empty list")
        return [conv(v) for v in items]
    return parse


CONVERTERS = {
    "problem": str, "alpha": _float, "alpha0": _float, "rho": _float, "theta": _float,
    "tol_alpha": _float, "tol_h": _float, "max_iter": int, "n": int,
    "n_list": _list(int), "alphas": _list(_float), "steps_per_decade": int,
    "adaptive": _bool, "out_dir": str, "emit_plots": _bool, "dump_mesh": _bool, "seed": int,
}


def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in CONVERTERS:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                out[key] = CONVERTERS[key](value)
            except ValueError as exc:
                raise UsageError(f"{path}:{lineno}: {exc}") from None
    return out


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common options")
    g.add_argument("--problem", choices=["ex1", "ex2", "ex3"])
    g.add_argument("--alpha", type=_float, help="target regularisation parameter")
    g.add_argument("--alpha0", type=_float, help="initial alpha_h (default 1)")
    g.add_argument("--rho", type=_float, help="regularisation reduction factor")
    g.add_argument("--theta", type=_float, help="maximum-strategy marking fraction")
    g.add_argument("--tol-alpha", type=_float)
    g.add_argument("--tol-h", type=_float, help="'inf' disables mesh refinement")
    g.add_argument("--max-iter", type=int)
    g.add_argument("--n", type=int, help="elements (1D) or subdivisions per side (2D)")
    g.add_argument("--n-list", type=_list(int), help="comma-separated mesh sizes")
    g.add_argument("--alphas", type=_list(_float), help="comma-separated alpha sweep")
    g.add_argument("--out-dir")
    g.add_argument("--emit-plots", action="store_const", const=True)
    g.add_argument("--dump-mesh", action="store_const", const=True)
    g.add_argument("--config", help="file with 'key = value' lines")
    g.add_argument("--seed", type=int)
    g.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="adaptreg", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "uniform-convergence": "error and estimator under uniform refinement, alpha_h = alpha",
        "effectivity-sweep": "effectivity index across alpha on a fixed mesh",
        "uniform-alpha": "constant alpha_h decreased from 1 to alpha on a fixed mesh",
        "reg-adapt": "regularisation-only adaptivity on a fixed mesh",
        "full-adapt": "combined regularisation and mesh adaptivity (1D)",
        "solve-2d": "combined adaptivity for the 2D disc target",
        "cond-study": "extreme eigenvalues and condition numbers",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, parents=[common], help=text, description=text)
        if name == "uniform-alpha":
            sp.add_argument("--steps-per-decade", type=int)
        if name == "cond-study":
            sp.add_argument("--adaptive", action="store_const", const=True,
                            help="track eigenvalues along a full adaptive run instead")
    return p


def resolve_spec(args):
    """Merge subcommand defaults, config file and flags into an ExperimentSpec."""
    values = dict(DEFAULTS[args.command])
    if args.config:
        values.update(read_config(args.config))
    for key in CONVERTERS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    problem = values.get("problem", "ex1")
    # per-problem defaults
    for key, v in list(values.items()):
        if isinstance(v, dict):
            if problem not in v:
                raise UsageError(f"{args.command} has no default {key} for {problem}")
            values[key] = v[problem]
    if values.get("alpha") is None:
        values["alpha"] = PROBLEM_ALPHA[problem]
    known = {f.name for f in fields(ExperimentSpec)}
    spec = ExperimentSpec(command=args.command, **{k: v for k, v in values.items() if k in known})
    _validate(spec)
    return spec


def _validate(spec):
    if not 0.0 < spec.alpha <= 1.0:
        raise UsageError("alpha must lie in (0, 1]")
    if spec.command in ("uniform-convergence", "effectivity-sweep", "uniform-alpha",
                        "reg-adapt", "full-adapt") and spec.problem == "ex3":
        raise UsageError(f"{spec.command} needs a 1D problem with an exact solution")
    if spec.command == "solve-2d" and spec.problem != "ex3":
        raise UsageError("solve-2d runs the 2D problem ex3")
    if spec.command == "uniform-convergence" and not spec.n_list:
        raise UsageError("n_list must be nonempty")
    if spec.command == "effectivity-sweep" and not spec.alphas:
        raise UsageError("alphas must be nonempty")
    if spec.command == "cond-study" and not spec.adaptive and (not spec.alphas or not spec.n_list):
        raise UsageError("cond-study needs nonempty alphas and n_list")
    if (spec.n is not None and spec.n < 1) or any(n < 1 for n in spec.n_list):
        raise UsageError("mesh sizes must be positive")
    if any(not 0.0 < a <= 1.0 for a in spec.alphas):
        raise UsageError("sweep alphas must lie in (0, 1]")
    if spec.command in ("reg-adapt", "full-adapt", "solve-2d") or spec.adaptive:
        try:
            spec.adaptive_config()
        except ValueError as exc:
            raise UsageError(str(exc)) from None


def write_csv(path, header, rows):
    """Write atomically: a partial file never replaces a complete one."""
    tmp = f"{path}.part"
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    os.replace(tmp, path)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def loglog_slope(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def _uniform_row(problem, n):
    mesh = problem.initial_mesh(n)
    sol = solve(mesh, problem.alpha, problem.d)
    br = estimate(mesh, sol.u, sol.z, problem.alpha, problem.alpha, problem.d)
    rep = energy_error(mesh, sol.u, sol.z, problem.exact_u, problem.exact_z, problem.alpha)
    return mesh, br, rep, effectivity(rep, br)


def cmd_uniform_convergence(spec):
    problem = get_problem(spec.problem, spec.alpha)
    rows = []
    for n in spec.n_list:
        mesh, br, rep, eff = _uniform_row(problem, n)
        rows.append((float(mesh.diameters.max()), len(mesh.free_vertices), rep.err_X, br.eta_h, eff))
        log.info("n=%d err_X=%.3e eta_h=%.3e eff=%.3f", n, rep.err_X, br.eta_h, eff)
    path = os.path.join(spec.out_dir, "uniform_convergence.csv")
    write_csv(path, ["h", "dim_Vh", "err_X", "eta_h", "effectivity"], rows)
    if spec.emit_plots:
        r = np.array(rows)
        plotting.line_chart(os.path.join(spec.out_dir, "uniform_convergence.svg"),
                            {"err_X": (r[:, 1], r[:, 2]), "eta_h": (r[:, 1], r[:, 3])},
                            title=f"{spec.problem}, alpha_h = alpha = {spec.alpha:g}",
                            xlabel="dim V_h", logx=True)
    if len(rows) < 2:
        return EXIT_OK
    r = np.array(rows)
    s_err, s_eta = loglog_slope(r[:, 1], r[:, 2]), loglog_slope(r[:, 1], r[:, 3])
    print(f"slope err_X {s_err:.3f}, slope eta_h {s_eta:.3f}")
    return EXIT_OK if abs(s_err + 1.0) <= 0.1 else EXIT_VIOLATION


def cmd_effectivity_sweep(spec):
    rows = []
    for a in spec.alphas:
        problem = get_problem(spec.problem, a)
        _, br, rep, eff = _uniform_row(problem, spec.n)
        rows.append((a, eff, br.eta_h, rep.err_X))
        log.info("alpha=%g effectivity=%.4f", a, eff)
    write_csv(os.path.join(spec.out_dir, "effectivity_sweep.csv"),
              ["alpha", "effectivity", "eta_h", "err_X"], rows)
    effs = np.array([r[1] for r in rows])
    if spec.emit_plots:
        plotting.line_chart(os.path.join(spec.out_dir, "effectivity_sweep.svg"),
                            {"effectivity": ([r[0] for r in rows], effs)},
                            title=spec.problem, xlabel="alpha", logx=True, logy=False)
    ratio = effs.max() / effs.min()
    print(f"effectivity in [{effs.min():.4f}, {effs.max():.4f}], max/min {ratio:.4f}")
    return EXIT_OK if ratio <= 1.1 else EXIT_VIOLATION


def uniform_alpha_sequence(alpha, steps_per_decade=4):
    """``10^(-k/steps)`` from 1 down to (not below) alpha, ending at alpha itself."""
    seq, k = [], 0
    while True:
        v = 10.0 ** (-k / steps_per_decade)
        if v <= alpha * (1 + 1e-12):
            break
        seq.append(v)
        k += 1
    return seq + [alpha]


def uniform_alpha_rows(problem, n, seq):
    mesh = problem.initial_mesh(n)
    rows = []
    for ah in seq:
        sol = solve(mesh, ah, problem.d)
        br = estimate(mesh, sol.u, sol.z, ah, problem.alpha, problem.d)
        rep = energy_error(mesh, sol.u, sol.z, problem.exact_u, problem.exact_z, problem.alpha)
        rows.append((ah, rep.err_X, br.eta_alpha, br.eta_h, br.total))
    return rows


def cmd_uniform_alpha(spec):
    problem = get_problem(spec.problem, spec.alpha)
    seq = uniform_alpha_sequence(spec.alpha, spec.steps_per_decade)
    rows = uniform_alpha_rows(problem, spec.n, seq)
    write_csv(os.path.join(spec.out_dir, "uniform_alpha.csv"),
              ["alpha_h_uniform", "err_X", "eta_alpha", "eta_h", "total_estimate"], rows)
    if spec.emit_plots:
        r = np.array(rows)
        plotting.line_chart(os.path.join(spec.out_dir, "uniform_alpha.svg"),
                            {"err_X": (r[:, 0], r[:, 1]), "eta_alpha": (r[:, 0], r[:, 2]),
                             "eta_h": (r[:, 0], r[:, 3]), "total": (r[:, 0], r[:, 4])},
                            title=spec.problem, xlabel="alpha_h", logx=True)
    for r in rows:
        print(f"alpha_h={r[0]:.3e} err_X={r[1]:.3e} eta_alpha={r[2]:.3e} eta_h={r[3]:.3e}")
    return EXIT_OK


HISTORY_FIELDS = ["iteration", "dim_Vh", "n_elements", "eta_h", "eta_alpha", "err_X",
                  "effectivity", "alpha_min", "alpha_max", "alpha_mean", "elements_marked",
                  "target_misfit", "wall_time"]


def dump_fields(out_dir, result, dump_mesh=False):
    mesh = result.mesh
    v = mesh.vertices
    coord_names = ["x", "y"][:mesh.dim]
    write_csv(os.path.join(out_dir, "nodal_fields.csv"),
              ["vertex"] + coord_names + ["u_h", "z_h", "f_h"],
              (([i] + list(v[i]) + [result.u_h.values[i], result.z_h.values[i],
                                    result.f_h.values[i]]) for i in range(mesh.n_vertices)))
    c = mesh.centroids
    br = result.breakdown
    write_csv(os.path.join(out_dir, "element_fields.csv"),
              ["element_id"] + [f"{n}_centroid" for n in coord_names]
              + ["eta_h_T", "eta_alpha_T", "alpha_h_T"],
              (([t] + list(c[t]) + [br.eta_h_T[t], br.eta_alpha_T[t], result.alpha_h.values[t]])
               for t in range(mesh.n_elements)))
    if dump_mesh:
        mesh.dump(os.path.join(out_dir, "mesh.txt"))


def _history_plots(spec, records, tag):
    it = [r.iteration for r in records]
    series = {"eta_h": (it, [r.eta_h for r in records]),
              "eta_alpha": (it, [r.eta_alpha for r in records])}
    if np.isfinite(records[0].err_X):
        series["err_X"] = (it, [r.err_X for r in records])
    plotting.line_chart(os.path.join(spec.out_dir, f"{tag}_history.svg"), series,
                        title=f"{spec.problem} {tag}", xlabel="iteration")
    plotting.line_chart(os.path.join(spec.out_dir, f"{tag}_alpha_range.svg"),
                        {"max": (it, [r.alpha_max for r in records]),
                         "mean": (it, [r.alpha_mean for r in records]),
                         "min": (it, [r.alpha_min for r in records])},
                        title="alpha_h range", xlabel="iteration")


def _run_adaptive(spec, tag):
    problem = get_problem(spec.problem, spec.alpha)
    cfg = spec.adaptive_config()
    path = os.path.join(spec.out_dir, f"{tag}_history.csv")
    tmp = path + ".part"
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HISTORY_FIELDS)

        def stream(rec, state):
            w.writerow([_fmt(getattr(rec, k)) for k in HISTORY_FIELDS])
            fh.flush()
            log.info("it %d dim %d eta_h %.3e eta_alpha %.3e", rec.iteration, rec.dim_Vh,
                     rec.eta_h, rec.eta_alpha)

        result = run_adaptive(problem, cfg, callback=stream)
    os.replace(tmp, path)
    dump_fields(spec.out_dir, result, spec.dump_mesh)
    if spec.emit_plots:
        _history_plots(spec, result.records, tag)
        if result.mesh.dim == 2:
            plotting.element_map(os.path.join(spec.out_dir, f"{tag}_alpha_map.svg"),
                                 result.mesh, result.alpha_h.values, title="alpha_h")
    last = result.records[-1]
    print(f"{result.status} after {result.iterations} iterations: dim V_h {last.dim_Vh}, "
          f"eta_h {last.eta_h:.3e}, eta_alpha {last.eta_alpha:.3e}, "
          f"alpha_h in [{last.alpha_min:.3e}, {last.alpha_max:.3e}]")
    return result


def cmd_reg_adapt(spec):
    return EXIT_OK if _run_adaptive(spec, "reg_adapt").converged else EXIT_NONCONVERGED


def cmd_full_adapt(spec):
    return EXIT_OK if _run_adaptive(spec, "full_adapt").converged else EXIT_NONCONVERGED


def cmd_solve_2d(spec):
    return EXIT_OK if _run_adaptive(spec, "solve_2d").converged else EXIT_NONCONVERGED


DENSE_LIMIT = 200


def cond_sweep(alphas, n_list, seed=0):
    rows = []
    for a in alphas:
        for n in n_list:
            system = assemble_coupled(build_uniform_interval(n), a, 1.0)
            est = eig_extremes(system, seed=seed)
            dim = system.matrix.shape[0]
            dmax = dmin = float("nan")
            if dim <= DENSE_LIMIT:
                dmax, dmin = dense_extremes(system)
            rows.append((a, n, dim, est.lambda_max_mag, est.lambda_min_mag, est.cond,
                         est.iterations_used, est.converged, dmax, dmin))
    return rows


def cond_exponents(rows):
    """Least-squares exponents of each quantity in h = 1/n and alpha."""
    r = np.array([row[:6] for row in rows], dtype=float)
    X = np.column_stack([np.ones(len(r)), np.log(1.0 / r[:, 1]), np.log(r[:, 0])])
    out = {}
    for name, col in (("lambda_max", 3), ("lambda_min", 4), ("cond", 5)):
        coef = np.linalg.lstsq(X, np.log(r[:, col]), rcond=None)[0]
        out[name] = (float(coef[1]), float(coef[2]))
    return out


def cmd_cond_study(spec):
    if spec.adaptive:
        return _cond_adaptive(spec)
    rows = cond_sweep(spec.alphas, spec.n_list, spec.seed)
    write_csv(os.path.join(spec.out_dir, "cond_study.csv"),
              ["alpha", "n", "dim", "lambda_max", "lambda_min", "cond", "iterations",
               "converged", "dense_lambda_max", "dense_lambda_min"], rows)
    ok = True
    for r in rows:
        if not r[7]:
            print(f"warning: eigenvalue iteration not converged at alpha={r[0]:g}, n={r[1]}")
        if r[2] <= DENSE_LIMIT:
            dev = max(abs(r[3] / r[8] - 1), abs(r[4] / r[9] - 1))
            if dev > 0.05:
                ok = False
                print(f"dense cross-check off by {dev:.1%} at alpha={r[0]:g}, n={r[1]}")
    if len(set(spec.alphas)) > 1 and len(set(spec.n_list)) > 1:
        exps = cond_exponents(rows)
        for name, (target, tol) in COND_BANDS.items():
            got = exps[name]
            good = all(abs(g - t) <= tol for g, t in zip(got, target))
            ok &= good
            print(f"{name}: h^{got[0]:+.3f} alpha^{got[1]:+.3f} "
                  f"(expected h^{target[0]:+g} alpha^{target[1]:+g} +-{tol}) "
                  f"{'ok' if good else 'VIOLATION'}")
    if spec.emit_plots:
        series = {f"cond a={a:g}": ([r[1] for r in rows if r[0] == a],
                                    [r[5] for r in rows if r[0] == a]) for a in spec.alphas}
        plotting.line_chart(os.path.join(spec.out_dir, "cond_study.svg"), series,
                            title="condition number", xlabel="n", logx=True)
    return EXIT_OK if ok else EXIT_VIOLATION


def _cond_adaptive(spec):
    problem = get_problem(spec.problem, spec.alpha)
    rows = []

    def track(rec, state):
        system = assemble_coupled(state["mesh"], state["alpha_h"], problem.d)
        est = eig_extremes(system, seed=spec.seed)
        rows.append((rec.iteration, rec.dim_Vh, est.lambda_max_mag, est.lambda_min_mag,
                     est.cond, est.converged, rec.alpha_min, rec.alpha_max))

    result = run_adaptive(problem, spec.adaptive_config(), callback=track)
    write_csv(os.path.join(spec.out_dir, "cond_adaptive.csv"),
              ["iteration", "dim", "lambda_max", "lambda_min", "cond", "converged",
               "alpha_min", "alpha_max"], rows)
    print(f"{result.status} after {result.iterations} iterations; final cond {rows[-1][4]:.3e}")
    return EXIT_OK if result.converged else EXIT_NONCONVERGED


COMMANDS = {
    "uniform-convergence": cmd_uniform_convergence,
    "effectivity-sweep": cmd_effectivity_sweep,
    "uniform-alpha": cmd_uniform_alpha,
    "reg-adapt": cmd_reg_adapt,
    "full-adapt": cmd_full_adapt,
    "solve-2d": cmd_solve_2d,
    "cond-study": cmd_cond_study,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        spec = resolve_spec(args)
        os.makedirs(spec.out_dir, exist_ok=True)
        if not os.access(spec.out_dir, os.W_OK):
            raise UsageError(f"output directory {spec.out_dir} is not writable")
    except (UsageError, OSError) as exc:
        print(f"adaptreg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    t0 = time.perf_counter()
    code = COMMANDS[spec.command](spec)
    log.info("%s finished in %.1f s", spec.command, time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
