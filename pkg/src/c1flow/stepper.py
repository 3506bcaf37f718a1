"""Semi-implicit time stepping: linearised backward Euler and BDF2 with a
Crank-Nicolson first step.

Every step solves one linear system whose nonlinear coefficients are frozen
at a known field, restricted to the Neumann-constrained subspace.
"""

from __future__ import annotations

import math
import time
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .c1space import Field
from .forms import Discretisation, ModelCoefficients, solve_constrained
from .linalg import LinearSolveError

EULER = "euler"
BDF2 = "bdf2"


class StepError(RuntimeError):
    """A time step failed; carries the step index and time."""

    def __init__(self, step: int, t: float, reason: str):
        super().__init__(f"step {step} (t = {t:.6g}): {reason}")
        self.step = step
        self.t = t


class PicardError(StepError):
    def __init__(self, iterations: int, residual: float):
        super().__init__(1, float("nan"), f"Picard iteration did not converge in {iterations} "
                                          f"iterations (last relative update {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


def compute_lambda(coeffs: ModelCoefficients) -> float:
    """Step-size constant: time steps k < lambda / 2 are L2-stable.

    Returns ``inf`` when beta1 = beta6 = 0, where the bound places no restriction.
    """
    b1, b2, b3, b6 = coeffs.beta1, coeffs.beta2, coeffs.beta3, coeffs.beta6
    if b1 >= 0:
        den = b6 * b6 + 2.0 * b1 * b3
        return math.inf if den == 0 else 2.0 * b1 / den
    return 4.0 * b2 / (b1 * b1 + b6 * b6 + 4.0 * b2 * b3)


@dataclass
class StepperOptions:
    """Knobs of the time loop.

    ``linearisation`` selects the field at which the BDF2 coefficients are
    frozen: ``"lagged"`` uses U^{n-1}; ``"extrapolated"`` uses 2U^{n-1} - U^{n-2}.
    """

    linearisation: str = "lagged"
    picard_tol: float = 1e-10
    picard_maxiter: int = 50
    cn_fallback: bool = False
    fallback_max_substeps: int = 10_000
    solver: dict = field(default_factory=dict)
    history_size: int = 256

    def __post_init__(self):
        if self.linearisation not in ("lagged", "extrapolated"):
            raise ValueError(f"unknown linearisation {self.linearisation!r}")


@dataclass
class StepperState:
    scheme: str
    k: float
    t: float
    U_prev: Field
    U_prev2: Field | None = None
    step_count: int = 0
    lam: float = math.inf
    history: deque = field(default_factory=lambda: deque(maxlen=256))
    picard_log: list = field(default_factory=list)
    residuals: list = field(default_factory=list)

    def __post_init__(self):
        if self.scheme not in (EULER, BDF2):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not self.k > 0:
            raise ValueError(f"time step must be positive, got {self.k}")
        if self.U_prev2 is not None and (self.U_prev2.space is not self.U_prev.space
                                         or self.U_prev2.m != self.U_prev.m):
            raise ValueError("U_prev and U_prev2 live on different spaces")


def new_state(disc: Discretisation, U0: Field, scheme: str, k: float, t0: float = 0.0,
              history_size: int = 256) -> StepperState:
    """Fresh state at ``t0``; warns if k violates the stability guard."""
    if U0.space is not disc.space or U0.m != disc.m:
        raise ValueError("initial field does not live on the discretisation's space")
    lam = compute_lambda(disc.coeffs)
    check_step_size(k, lam)
    return StepperState(scheme, float(k), float(t0), U0.copy(), None, 0, lam,
                        deque(maxlen=history_size))


def check_step_size(k: float, lam: float) -> bool:
    """Warn (without failing) when k >= lambda / 2."""
    if k >= lam / 2:
        warnings.warn(f"time step k = {k:g} violates the stability guard k < lambda/2 = {lam / 2:g}",
                      RuntimeWarning, stacklevel=3)
        return False
    return True


def _load(disc: Discretisation, forcing, t: float) -> np.ndarray | None:
    if forcing is None:
        return None
    return disc.load(forcing, t)


def _solve(disc: Discretisation, A, b, opts: StepperOptions, state: StepperState, step: int,
           t: float) -> np.ndarray:
    try:
        x, report = solve_constrained(A, b, disc.P, **opts.solver)
    except LinearSolveError as exc:
        raise StepError(step, t, f"linear solve failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise StepError(step, t, "solution contains NaN or Inf")
    state.residuals.append(report.residual_norm)
    return x


def euler_system(disc: Discretisation, U_prev: Field, k: float, F: np.ndarray | None):
    """Matrix and right-hand side of (M + k S(U_prev)) U = M U_prev + k F."""
    A = disc.mass + k * disc.step_operator(U_prev)
    b = disc.mass @ U_prev.coeffs
    if F is not None:
        b = b + k * F
    return A, b


def bdf2_system(disc: Discretisation, U_prev: Field, U_prev2: Field, k: float,
                F: np.ndarray | None, linearisation: str = "lagged"):
    """Matrix and right-hand side of
    (3/(2k) M + S(W)) U = M (4 U_prev - U_prev2) / (2k) + F, with W = U_prev
    or the extrapolation 2 U_prev - U_prev2."""
    W = U_prev if linearisation == "lagged" else 2.0 * U_prev - U_prev2
    A = (1.5 / k) * disc.mass + disc.step_operator(W)
    b = disc.mass @ (4.0 * U_prev.coeffs - U_prev2.coeffs) / (2.0 * k)
    if F is not None:
        b = b + F
    return A, b


def euler_step(state: StepperState, disc: Discretisation, forcing=None,
               opts: StepperOptions | None = None) -> Field:
    opts = opts or StepperOptions()
    n = state.step_count + 1
    t = state.t + state.k
    A, b = euler_system(disc, state.U_prev, state.k, _load(disc, forcing, t))
    U = Field(disc.space, disc.m, _solve(disc, A, b, opts, state, n, t))
    state.U_prev2, state.U_prev = state.U_prev, U
    state.t, state.step_count = t, n
    return U


def _cn_picard(state: StepperState, disc: Discretisation, forcing, opts: StepperOptions) -> Field:
    k = state.k
    U0 = state.U_prev
    F = _load(disc, forcing, state.t + 0.5 * k)
    rhs0 = disc.mass @ U0.coeffs / k
    W = U0
    log = state.picard_log
    log.clear()
    for it in range(1, opts.picard_maxiter + 1):
        S = disc.step_operator(0.5 * (U0 + W))
        A = disc.mass / k + 0.5 * S
        b = rhs0 - 0.5 * (S @ U0.coeffs)
        if F is not None:
            b = b + F
        W_new = Field(disc.space, disc.m, _solve(disc, A, b, opts, state, 1, state.t + k))
        diff = W_new - W
        num = math.sqrt(max(diff.coeffs @ (disc.mass @ diff.coeffs), 0.0))
        den = math.sqrt(max(W_new.coeffs @ (disc.mass @ W_new.coeffs), 0.0))
        rel = num / den if den > 0 else num
        log.append(rel)
        W = W_new
        if disc.is_linear or num <= opts.picard_tol * den:
            return W
    raise PicardError(opts.picard_maxiter, log[-1])


def _cn_euler_substeps(state: StepperState, disc: Discretisation, forcing,
                       opts: StepperOptions) -> Field:
    nsub = min(math.ceil(1.0 / state.k), opts.fallback_max_substeps)
    dt = state.k / nsub
    U = state.U_prev
    scratch = StepperState(EULER, dt, state.t, U)
    for _ in range(nsub):
        U = euler_step(scratch, disc, forcing, opts)
    state.residuals.extend(scratch.residuals)
    return U


def cn_start(state: StepperState, disc: Discretisation, forcing=None,
             opts: StepperOptions | None = None) -> Field:
    """First BDF2 step by a Crank-Nicolson step solved with Picard iteration
    (coefficients frozen at the midpoint average); optional fallback to Euler
    sub-steps when Picard fails."""
    opts = opts or StepperOptions()
    if state.scheme != BDF2 or state.step_count != 0:
        raise ValueError("cn_start needs a BDF2 state at step 0")
    try:
        U1 = _cn_picard(state, disc, forcing, opts)
    except PicardError as exc:
        if not opts.cn_fallback:
            raise
        warnings.warn(f"{exc}; falling back to Euler sub-steps", RuntimeWarning, stacklevel=2)
        U1 = _cn_euler_substeps(state, disc, forcing, opts)
    state.U_prev2, state.U_prev = state.U_prev, U1
    state.t += state.k
    state.step_count = 1
    return U1


def bdf2_step(state: StepperState, disc: Discretisation, forcing=None,
              opts: StepperOptions | None = None) -> Field:
    opts = opts or StepperOptions()
    if state.step_count < 1 or state.U_prev2 is None:
        raise ValueError("bdf2_step needs two previous levels; call cn_start first")
    n = state.step_count + 1
    t = state.t + state.k
    A, b = bdf2_system(disc, state.U_prev, state.U_prev2, state.k, _load(disc, forcing, t),
                       opts.linearisation)
    U = Field(disc.space, disc.m, _solve(disc, A, b, opts, state, n, t))
    state.U_prev2, state.U_prev = state.U_prev, U
    state.t, state.step_count = t, n
    return U


def step(state: StepperState, disc: Discretisation, forcing=None,
         opts: StepperOptions | None = None) -> Field:
    """Advance one step with the state's scheme."""
    if state.scheme == EULER:
        return euler_step(state, disc, forcing, opts)
    if state.step_count == 0:
        return cn_start(state, disc, forcing, opts)
    return bdf2_step(state, disc, forcing, opts)


@dataclass
class RunSummary:
    steps: int
    t_end: float
    l2_min: float
    l2_max: float
    wall_time: float


def n_steps_to(t: float, T_end: float, k: float) -> int:
    """Number of whole steps of size k from t to T_end (tolerant to rounding)."""
    return max(0, int(math.floor((T_end - t) / k + 1e-9)))


def run(state: StepperState, disc: Discretisation, T_end: float, forcing=None,
        callbacks=(), opts: StepperOptions | None = None) -> RunSummary:
    """Advance to the last whole step before ``T_end``.

    Each callback is called as ``cb(step, t, field)`` after every step (and once
    for the starting state when no step has been taken yet).
    """
    opts = opts or StepperOptions()
    n = n_steps_to(state.t, T_end, state.k)
    M = disc.mass

    def l2(U):
        return math.sqrt(max(U.coeffs @ (M @ U.coeffs), 0.0))

    norms = [l2(state.U_prev)]
    if state.step_count == 0:
        for cb in callbacks:
            cb(0, state.t, state.U_prev)
    t0 = time.perf_counter()
    for _ in range(n):
        try:
            U = step(state, disc, forcing, opts)
        except StepError:
            raise
        except (LinearSolveError, FloatingPointError) as exc:
            raise StepError(state.step_count + 1, state.t + state.k, str(exc)) from exc
        norms.append(l2(U))
        state.history.append((state.step_count, state.t, norms[-1]))
        for cb in callbacks:
            cb(state.step_count, state.t, U)
    return RunSummary(n, state.t, min(norms), max(norms), time.perf_counter() - t0)
