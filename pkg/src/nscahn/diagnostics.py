"""Discrete energy balances and qualitative checks along a trajectory."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import FieldState, Grid, discrete_energy, _edge_form
from .potentials import PotentialConfig, SeparationBounds, eval_F, eval_g

SEPARATION_TOL = 1e-3
POSITIVITY_TOL = 1e-10

SEPARATION = "separation_violated"
POSITIVITY = "positivity_violated"
DT_FLOORED = "dt_floored"

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(8)


class InteriorViolation(RuntimeError):
    """rho left the open interval (-1, 1)."""


@dataclass
class Accumulator:
    """Time integrals of the dissipation, rectangle rule (left end for grad mu)."""

    grad_mu2: float = 0.0
    rho_t2: float = 0.0
    rho_gamma_t2: float = 0.0

    @property
    def dissipation(self) -> float:
        return self.rho_t2 + self.rho_gamma_t2


@dataclass
class DiagnosticsRecord:
    t: float
    dt_used: float
    E_total: float
    E_bulk_grad: float
    E_bulk_pot: float
    E_surf_grad: float
    E_surf_pot: float
    coupling_term: float
    lyapunov: float
    first_estimate_quantity: float
    grad_mu_norm: float
    rho_increment_rate: float
    min_rho: float
    max_rho: float
    min_mu: float
    newton_iters: int = 0
    flags: frozenset = field(default_factory=frozenset)
    # accumulated int int |d_t rho|^2 + |d_t rho_Gamma|^2, for the Lyapunov balance
    dissipation: float = 0.0


def record(state_prev: FieldState, state_next: FieldState, dt: float, cfg: PotentialConfig,
           grid: Grid, params, accumulator: Accumulator, newton_iters: int = 0,
           flags=()) -> DiagnosticsRecord:
    """Build the record for the step state_prev -> state_next and advance the accumulator.

    ``dt = 0`` produces the record of the initial state without accumulating.
    """
    eps = params.eps
    w = grid.bulk_weights
    Kb = grid.stiffness_bulk
    mu, rho = state_next.mu, state_next.rho

    energy = discrete_energy(state_next, cfg, grid)
    g = eval_g(rho, cfg)[0]
    coupling = float(np.sum(w * (eps + 2.0 * g) * mu))

    if dt > 0:
        d = rho - state_prev.rho
        accumulator.grad_mu2 += dt * float(state_prev.mu @ (Kb @ state_prev.mu))
        accumulator.rho_t2 += float(np.sum(w * d * d)) / dt
        bi = grid.boundary_index
        accumulator.rho_gamma_t2 += float(np.sum(grid.boundary_weights * d[bi] ** 2)) / dt
        rate = float(np.sqrt(np.sum(grid.total_mass * d * d))) / dt
    else:
        rate = 0.0

    q = float(np.sum(w * (0.5 * eps + g) * mu * mu)) + accumulator.grad_mu2
    grad_mu = float(np.sqrt(max(mu @ (Kb @ mu), 0.0)))
    return DiagnosticsRecord(
        t=state_next.t,
        dt_used=dt,
        E_total=energy[0],
        E_bulk_grad=energy[1],
        E_bulk_pot=energy[2],
        E_surf_grad=energy[3],
        E_surf_pot=energy[4],
        coupling_term=coupling,
        lyapunov=energy[0] - coupling,
        first_estimate_quantity=q,
        grad_mu_norm=grad_mu,
        rho_increment_rate=rate,
        min_rho=float(rho.min()),
        max_rho=float(rho.max()),
        min_mu=float(mu.min()),
        newton_iters=newton_iters,
        flags=frozenset(flags),
        dissipation=accumulator.dissipation,
    )


def check_separation_positivity(rec: DiagnosticsRecord, bounds: SeparationBounds) -> frozenset:
    if not (-1.0 < rec.min_rho and rec.max_rho < 1.0):
        raise InteriorViolation(f"rho outside (-1, 1) at t={rec.t}: [{rec.min_rho}, {rec.max_rho}]")
    flags = set()
    if rec.min_rho < bounds.rho_lo - SEPARATION_TOL or rec.max_rho > bounds.rho_hi + SEPARATION_TOL:
        flags.add(SEPARATION)
    if rec.min_mu < -POSITIVITY_TOL:
        flags.add(POSITIVITY)
    return frozenset(flags)


def stationarity_residuals(rec: DiagnosticsRecord) -> tuple[float, float]:
    return rec.grad_mu_norm, rec.rho_increment_rate


def relative_drift(records, attr: str = "first_estimate_quantity") -> float:
    """max_t |Q(t) - Q(0)| / |Q(0)| over a record sequence."""
    vals = np.array([getattr(r, attr) for r in records])
    return float(np.max(np.abs(vals - vals[0])) / abs(vals[0]))


def lyapunov_violation(records) -> float:
    """Total positive part of the stepwise increments of the Lyapunov value."""
    lv = np.array([r.lyapunov for r in records])
    return float(np.sum(np.maximum(np.diff(lv), 0.0)))


def rearrangement_defect(state_prev: FieldState, state_next: FieldState, params, cfg: PotentialConfig,
                         grid: Grid) -> float:
    """Per-step defect of d/dt int (eps + 2g(rho)) mu = int mu g'(rho) d_t rho.

    Computed as int (eps + 2g^{n+1}) mu^{n+1} - int (eps + 2g^n) mu^n
    - int mu^{n+1} g'(rho^n) (rho^{n+1} - rho^n).  For the scheme in
    ``dynamics`` it equals -2 g_b int mu^{n+1} (rho^{n+1} - rho^n)^2, so it is
    O(tau^2) on smooth runs.
    """
    w = grid.bulk_weights
    g0, dg0, _ = eval_g(state_prev.rho, cfg)
    g1 = eval_g(state_next.rho, cfg)[0]
    d = state_next.rho - state_prev.rho
    new = np.sum(w * (params.eps + 2.0 * g1) * state_next.mu)
    old = np.sum(w * (params.eps + 2.0 * g0) * state_prev.mu)
    return float(new - old - np.sum(w * state_next.mu * dg0 * d))


def _potential_increment(a, b, cfg: PotentialConfig, which: str):
    # F(b) - F(a) as the integral of F' along the segment, so no large values cancel
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    total = np.zeros_like(a)
    for x, wt in zip(_GAUSS_X, _GAUSS_W):
        total += wt * eval_F(mid + half * x, cfg, which)[1]
    return half * total


def energy_increment(rho_prev, rho_next, cfg: PotentialConfig, grid: Grid) -> float:
    """E(rho_next) - E(rho_prev) evaluated without subtracting the two totals.

    Differencing two recorded energies of size O(1) loses everything below
    one unit in the last place, which swamps the true decrease once a run
    settles.  Here the gradient part is 1/2 (d, rho_next + rho_prev) in the
    stiffness form and each potential part is an 8-point Gauss-Legendre
    integral of F' over [rho_prev, rho_next], so the result carries a
    relative error of a few ulp of the increment itself.
    """
    d = rho_next - rho_prev
    s = rho_next + rho_prev
    bi = grid.boundary_index
    inc = 0.5 * (_edge_form(grid.bulk_edges, d, s) + _edge_form(grid.surface_edges, d, s))
    inc += float(np.sum(grid.bulk_weights * _potential_increment(rho_prev, rho_next, cfg, "bulk")))
    inc += float(np.sum(grid.boundary_weights * _potential_increment(rho_prev[bi], rho_next[bi], cfg, "surface")))
    return inc
