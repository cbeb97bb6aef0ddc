"""Time integration of the coupled bulk/surface system.

One step from (mu^n, rho^n) with time step tau:

1. rho-step, backward Euler with the convex part beta' implicit and the
   smooth part pi' and the source mu^n g'(rho^n) explicit.  In nodal
   (dual) form, with M the lumped bulk + surface mass and K the bulk +
   surface stiffness,

       M (rho - rho^n)/tau + K rho + W beta'(rho) + W_G beta_G'(rho_G)
           = W (mu^n g'(rho^n) - pi'(rho^n)) - W_G pi_G'(rho^n_G).

   This is the Euler-Lagrange equation of a strictly convex functional;
   it is solved by damped Newton with CG on the SPD Jacobian.

2. mu-step, linear backward Euler with frozen coefficients:

       W [(eps + 2g^n)/tau + g'^n (rho^{n+1} - rho^n)/tau] mu + K_b mu
           = W (eps + 2g^n)/tau mu^n.

   Positive diagonal, nonpositive off-diagonal: an M-matrix, so mu stays
   nonnegative.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from . import diagnostics
from .linsolve import cg_solve
from .mesh import FieldState, Grid
from .potentials import PotentialConfig, SeparationBounds, convex_smooth_split, eval_g, separation_bounds

log = logging.getLogger(__name__)

GUARD_EPS = 1e-12
DT_GROWTH = 1.2


class StepRejected(Exception):
    """The step failed at the attempted dt; the caller should shrink it."""


class HardFailure(RuntimeError):
    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump or {}


@dataclass(frozen=True)
class SchemeParams:
    eps: float = 0.05
    dt: float = 1e-3
    dt_min: float = 1e-8
    dt_max: float = 1e-1
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    lin_tol: float = 1e-10
    positivity_guard: bool = True

    def __post_init__(self):
        if not (0.0 <= self.eps <= 1.0):
            raise ValueError("eps must lie in [0, 1]")
        if not (0 < self.dt_min <= self.dt <= self.dt_max):
            raise ValueError("need 0 < dt_min <= dt <= dt_max")
        if self.newton_tol <= 0 or self.lin_tol <= 0 or self.newton_max_iter < 1:
            raise ValueError("tolerances must be positive and newton_max_iter >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SchemeParams":
        return cls(**data)

    def replace(self, **changes) -> "SchemeParams":
        return SchemeParams(**{**asdict(self), **changes})

    @classmethod
    def fixed(cls, dt: float, **kw) -> "SchemeParams":
        """Constant step size: no growth, no rejection retries."""
        return cls(dt=dt, dt_min=dt, dt_max=dt, **kw)


@dataclass
class StepOutcome:
    next_state: FieldState
    dt_used: float
    dt_next: float
    newton_iters: int
    cg_reports: list = field(default_factory=list)
    flags: frozenset = frozenset()
    rejections: int = 0


def weighted_norm(residual, grid: Grid) -> float:
    """Dual norm sqrt(sum R_i^2 / m_i) of a nodal residual."""
    return float(np.sqrt(np.sum(residual * residual / grid.total_mass)))


def explicit_source(rho_prev, mu_frozen, cfg: PotentialConfig, grid: Grid):
    """Right-hand side W (mu g'(rho^n) - pi'(rho^n)) - W_G pi_G'(rho^n_G)."""
    bi = grid.boundary_index
    dg = eval_g(rho_prev, cfg)[1]
    dpi = convex_smooth_split(rho_prev, cfg, "bulk")[4]
    src = grid.bulk_weights * (mu_frozen * dg - dpi)
    src[bi] -= grid.boundary_weights * convex_smooth_split(rho_prev[bi], cfg, "surface")[4]
    return src


def rho_step_residual(rho, rho_prev, mu_frozen, tau, cfg: PotentialConfig, grid: Grid, source=None):
    """Nodal residual of the rho-step; tau = inf gives the stationary residual."""
    if source is None:
        source = explicit_source(rho_prev, mu_frozen, cfg, grid)
    bi = grid.boundary_index
    res = grid.stiffness @ rho - source
    res += grid.bulk_weights * convex_smooth_split(rho, cfg, "bulk")[1]
    res[bi] += grid.boundary_weights * convex_smooth_split(rho[bi], cfg, "surface")[1]
    if np.isfinite(tau):
        res += grid.total_mass * (rho - rho_prev) / tau
    return res


def rho_step_jacobian(rho, tau, cfg: PotentialConfig, grid: Grid):
    bi = grid.boundary_index
    d = grid.bulk_weights * convex_smooth_split(rho, cfg, "bulk")[2]
    d[bi] += grid.boundary_weights * convex_smooth_split(rho[bi], cfg, "surface")[2]
    if np.isfinite(tau):
        d += grid.total_mass / tau
    return (grid.stiffness + sp.diags(d)).tocsr()


@dataclass
class NewtonResult:
    rho: np.ndarray
    passes: int
    history: list
    reports: list
    converged: bool
    reason: str = ""


def newton_solve(residual, jacobian, rho0, grid, lo, hi, tol, max_iter, lin_tol,
                 on_indefinite=None, merit=None) -> NewtonResult:
    """Damped Newton with interior clamping.

    ``passes`` counts residual checks including the final one, so an
    already converged guess reports 1.  Every iterate is clamped to
    [lo, hi] before the residual is evaluated; the step is halved until
    the weighted residual norm decreases.

    If CG fails on the Jacobian and ``on_indefinite`` is given, the
    Jacobian is replaced by ``on_indefinite(rho, J)`` (an SPD shift).  The
    shifted direction need not reduce the residual norm, so for that
    iteration the step is instead accepted once ``merit`` (a potential
    whose gradient is the residual) decreases.
    """
    rho = np.clip(rho0, lo, hi)
    R = residual(rho)
    nrm = weighted_norm(R, grid)
    history = [nrm]
    reports = []
    for it in range(1, max_iter + 1):
        if nrm <= tol:
            return NewtonResult(rho, it, history, reports, True)
        J = jacobian(rho)
        d, rep = cg_solve(J, -R, lin_tol)
        shifted = False
        if not rep.converged and on_indefinite is not None:
            # negative curvature met, or CG stalled on an indefinite matrix
            d, rep = cg_solve(on_indefinite(rho, J), -R, lin_tol)
            shifted = True
        reports.append(rep)
        if not rep.converged:
            return NewtonResult(rho, it, history, reports, False,
                                f"inner CG failed (residual {rep.residual:.2e})")
        use_merit = shifted and merit is not None
        ref = merit(rho) if use_merit else nrm
        s = 1.0
        while True:
            trial = np.clip(rho + s * d, lo, hi)
            Rt = residual(trial)
            nt = weighted_norm(Rt, grid)
            if (merit(trial) if use_merit else nt) < ref:
                break
            s *= 0.5
            if s < 2.0**-30:
                return NewtonResult(rho, it, history, reports, False, "line search stalled")
        rho, R, nrm = trial, Rt, nt
        history.append(nrm)
    ok = nrm <= tol
    return NewtonResult(rho, max_iter + 1, history, reports, ok,
                        "" if ok else f"no convergence in {max_iter} iterations (residual {nrm:.2e})")


def solve_rho_implicit(state: FieldState, mu_frozen, params: SchemeParams, cfg: PotentialConfig,
                       grid: Grid, dt: float | None = None):
    """Implicit rho update; returns (rho_next, newton_passes)."""
    res = _solve_rho(state, mu_frozen, params, cfg, grid, dt)
    return res.rho, res.passes


def _solve_rho(state, mu_frozen, params, cfg, grid, dt):
    tau = params.dt if dt is None else dt
    m = cfg.clip_margin
    src = explicit_source(state.rho, mu_frozen, cfg, grid)
    res = newton_solve(
        lambda r: rho_step_residual(r, state.rho, mu_frozen, tau, cfg, grid, src),
        lambda r: rho_step_jacobian(r, tau, cfg, grid),
        state.rho, grid, -1.0 + m, 1.0 - m,
        params.newton_tol, params.newton_max_iter, params.lin_tol,
    )
    if not res.converged:
        raise StepRejected(res.reason)
    return res


def mu_system(state: FieldState, rho_next, params: SchemeParams, cfg: PotentialConfig, grid: Grid,
              dt: float | None = None):
    """Matrix, right-hand side and nodal reaction coefficients of the mu-step."""
    tau = params.dt if dt is None else dt
    g, dg, _ = eval_g(state.rho, cfg)
    w = grid.bulk_weights
    react = (params.eps + 2.0 * g + dg * (rho_next - state.rho)) / tau
    A = (grid.stiffness_bulk + sp.diags(w * react)).tocsr()
    b = w * (params.eps + 2.0 * g) / tau * state.mu
    return A, b, react



def solve_mu_linear(state: FieldState, rho_next, params: SchemeParams, cfg: PotentialConfig,
                    grid: Grid, dt: float | None = None):
    A, b, react = mu_system(state, rho_next, params, cfg, grid, dt)
    if params.positivity_guard and np.any(react <= GUARD_EPS):
        raise StepRejected("mu-step reaction coefficient lost positivity")
    # solve for the increment so the relative tolerance scales with the change, not with 1/tau
    delta, rep = cg_solve(A, b - A @ state.mu, params.lin_tol)
    mu_next = state.mu + delta
    if not rep.converged:
        raise StepRejected(f"mu-step CG failed (residual {rep.residual:.2e})")
    return mu_next, rep


def step(state: FieldState, params: SchemeParams, cfg: PotentialConfig, grid: Grid,
         bounds: SeparationBounds, dt: float | None = None) -> StepOutcome:
    """Advance one accepted step, halving dt on rejection down to dt_min."""
    dt = params.dt if dt is None else dt
    rejections = 0
    floored = False
    while True:
        try:
            newton = _solve_rho(state, state.mu, params, cfg, grid, dt)
            rho_next = newton.rho
            mu_next, mu_rep = solve_mu_linear(state, rho_next, params, cfg, grid, dt)
            break
        except StepRejected as exc:
            rejections += 1
            if dt <= params.dt_min:
                raise HardFailure(
                    f"step rejected at dt_min: {exc}",
                    {"t": state.t, "dt": dt, "reason": str(exc),
                     "min_rho": float(state.rho.min()), "max_rho": float(state.rho.max()),
                     "min_mu": float(state.mu.min())},
                ) from exc
            log.debug("t=%g: rejected dt=%g (%s)", state.t, dt, exc)
            dt = max(0.5 * dt, params.dt_min)
            floored = dt == params.dt_min

    if not np.all(np.abs(rho_next) < 1.0):
        raise HardFailure("rho left (-1, 1)", {"t": state.t + dt})
    flags = set()
    if floored:
        flags.add(diagnostics.DT_FLOORED)
    if rho_next.min() < bounds.rho_lo - diagnostics.SEPARATION_TOL or \
            rho_next.max() > bounds.rho_hi + diagnostics.SEPARATION_TOL:
        flags.add(diagnostics.SEPARATION)
    if mu_next.min() < -diagnostics.POSITIVITY_TOL:
        flags.add(diagnostics.POSITIVITY)
    return StepOutcome(
        FieldState(state.t + dt, mu_next, rho_next), dt, min(DT_GROWTH * dt, params.dt_max),
        newton.passes, newton.reports + [mu_rep], frozenset(flags), rejections,
    )


def validate_initial(initial: FieldState, grid: Grid):
    if initial.mu.shape != (grid.n_nodes,) or initial.rho.shape != (grid.n_nodes,):
        raise ValueError("initial fields must be sized to the grid")
    if np.any(initial.mu < 0):
        raise ValueError("initial chemical potential must be nonnegative")
    if not np.all(np.abs(initial.rho) < 1.0):
        raise ValueError("initial order parameter must lie strictly inside (-1, 1)")


def simulate(initial: FieldState, t_end: float, params: SchemeParams, cfg: PotentialConfig,
             grid: Grid, sink=None, bounds: SeparationBounds | None = None,
             observer=None) -> FieldState:
    """Integrate to t_end.

    ``sink`` receives one DiagnosticsRecord for the initial state and one
    per accepted step; ``observer(k, state)`` likewise sees every accepted
    state with its step index (0 for the initial state).
    """
    validate_initial(initial, grid)
    if bounds is None:
        bounds = separation_bounds(cfg, float(initial.rho.min()), float(initial.rho.max()))
    acc = diagnostics.Accumulator()
    state = initial.copy()
    if sink is not None:
        sink(diagnostics.record(state, state, 0.0, cfg, grid, params, acc))
    if observer is not None:
        observer(0, state)
    dt = params.dt
    k = 0
    while state.t < t_end:
        remaining = t_end - state.t
        last = remaining <= dt * (1.0 + 1e-6)
        h = remaining if last else dt
        out = step(state, params, cfg, grid, bounds, dt=h)
        nxt = out.next_state
        if last and out.dt_used == h:
            nxt.t = t_end
        if sink is not None:
            sink(diagnostics.record(state, nxt, out.dt_used, cfg, grid, params, acc,
                                    out.newton_iters, out.flags))
        state = nxt
        k += 1
        if observer is not None:
            observer(k, state)
        if not last or out.dt_used != h:
            dt = out.dt_next
    return state


def l2_distance(u, v, grid: Grid) -> float:
    d = u - v
    return float(np.sqrt(np.sum(grid.bulk_weights * d * d)))


@dataclass
class EpsSweepReport:
    eps: list
    d: list
    ratios: list
    finals: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"eps": self.eps, "d": self.d, "ratios": self.ratios}


def sweep_epsilon(initial: FieldState, t_end: float, eps_list, params: SchemeParams,
                  cfg: PotentialConfig, grid: Grid) -> EpsSweepReport:
    """Run from identical data for each eps and measure the distance to the eps = 0 run."""
    eps_list = [float(e) for e in eps_list]
    if not eps_list or eps_list[-1] != 0.0 or any(a <= b for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly descending and end with 0")
    finals = [simulate(initial, t_end, params.replace(eps=e), cfg, grid) for e in eps_list]
    ref = finals[-1]
    d = [l2_distance(f.rho, ref.rho, grid) + l2_distance(f.mu, ref.mu, grid) for f in finals]
    ratios = [d[i + 1] / d[i] for i in range(len(d) - 2)]
    return EpsSweepReport(eps_list, d, ratios, finals)
