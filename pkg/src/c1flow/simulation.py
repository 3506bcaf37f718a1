"""Build a discrete problem from a RunConfig, run it, and run refinement sweeps."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field


from .c1space import C1Space, Field, interpolate
from .config import RunConfig
from .diagnostics import (NORMS, NormReport, StabilityMonitor, compute_norms, error_against,
                          error_between, nested_quadrature, rate_table)
from .expr import VectorExpression, manufactured_forcing
from .forms import Discretisation, elliptic_projection
from .mesh import build_interval_mesh, build_structured_triangulation
from .quadrature import default_rule
from .stepper import StepperOptions, new_state, run

log = logging.getLogger(__name__)


@dataclass
class Problem:
    cfg: RunConfig
    space: C1Space
    disc: Discretisation
    U0: Field
    forcing: VectorExpression | None
    exact: VectorExpression | None

    @property
    def options(self) -> StepperOptions:
        c = self.cfg
        return StepperOptions(linearisation=c.linearisation, cn_fallback=c.cn_fallback,
                              solver={"method": c.solver, "tol": c.solver_tol})


def build_mesh(cfg: RunConfig, nx: int | None = None):
    nx = nx or cfg.nx
    if cfg.dim == 1:
        return build_interval_mesh(0.0, cfg.lx, nx)
    ny = nx if not cfg.ny else cfg.ny * nx // cfg.nx
    return build_structured_triangulation(cfg.lx, cfg.ly, nx, ny)


def build_problem(cfg: RunConfig, nx: int | None = None) -> Problem:
    cfg.validate()
    coeffs = cfg.coefficients()
    space = C1Space(build_mesh(cfg, nx), default_rule(cfg.dim, cfg.quad_degree))
    disc = Discretisation(space, coeffs, cfg.convection_form)
    exact = cfg.exact_solution()
    if exact is not None:
        forcing = manufactured_forcing(exact, coeffs, coeffs.j_field)
    elif cfg.forcing:
        forcing = VectorExpression(list(cfg.forcing), cfg.dim)
    else:
        forcing = None
    u0 = exact if exact is not None else cfg.initial_data()
    if cfg.initializer == "interpolant":
        U0 = interpolate(space, cfg.m, u0, 0.0)
    else:
        U0 = elliptic_projection(space, coeffs, cfg.alpha, u0, 0.0,
                                 {"method": cfg.solver, "tol": cfg.solver_tol})
    return Problem(cfg, space, disc, U0, forcing, exact)


@dataclass
class Trajectory:
    problem: Problem
    steps: list = field(default_factory=list)
    times: list = field(default_factory=list)
    norms: list = field(default_factory=list)
    errors: list = field(default_factory=list)   # vs exact solution, when known
    fields: list = field(default_factory=list)   # kept only on request
    monitor: StabilityMonitor | None = None

    def rows(self):
        return list(zip(self.steps, self.times, self.norms))

    def linf(self, which: str = "errors") -> NormReport:
        reps = getattr(self, which)
        return NormReport(**{n: max(r[n] for r in reps) for n in NORMS})


def simulate(problem: Problem, keep_fields: bool = False, every: int | None = None,
             monitor: bool = False) -> Trajectory:
    """Run ``problem`` to ``t_end``; records norms (and errors against the exact
    solution) every ``every`` steps and at the last step."""
    cfg = problem.cfg
    every = every or cfg.output_every
    nsteps = cfg.n_steps
    traj = Trajectory(problem)
    callbacks = []
    if monitor:
        traj.monitor = StabilityMonitor(cfg.k, bdf2=cfg.scheme == "bdf2")
        callbacks.append(traj.monitor)

    def record(step, t, U):
        if step % every and step != nsteps:
            return
        traj.steps.append(step)
        traj.times.append(t)
        traj.norms.append(compute_norms(U))
        if problem.exact is not None:
            traj.errors.append(error_against(U, problem.exact, t))
        if keep_fields:
            traj.fields.append(U.copy())

    callbacks.append(record)
    state = new_state(problem.disc, problem.U0, cfg.scheme, cfg.k)
    run(state, problem.disc, nsteps * cfg.k + 0.5 * cfg.k, problem.forcing, callbacks,
        problem.options)
    return traj


def refinement_sweep(cfg: RunConfig, levels: int | None = None, every: int = 1):
    """Rates over meshes nx, 2nx, ...: errors against the exact solution when
    the config has one, otherwise extrapolated differences u_h - u_{h/2}.

    Returns the RateTable and the per-level trajectories.
    """
    levels = levels or cfg.levels
    nxs = [cfg.nx * 2**i for i in range(levels)]
    exact = bool(cfg.exact)
    trajs = []
    for nx in nxs:
        log.info("level nx = %d", nx)
        trajs.append(simulate(build_problem(cfg, nx), keep_fields=not exact, every=every))
    h = [cfg.lx / nx for nx in nxs]
    if exact:
        errs = [(hi, tr.linf("errors")) for hi, tr in zip(h, trajs)]
    else:
        errs = []
        for i in range(levels - 1):
            coarse, fine = trajs[i], trajs[i + 1]
            nq = nested_quadrature(coarse.problem.space, fine.problem.space)
            reps = [error_between(a, b, nq) for a, b in zip(coarse.fields, fine.fields)]
            errs.append((h[i], NormReport(**{n: max(r[n] for r in reps) for n in NORMS})))
    return rate_table(errs), trajs
