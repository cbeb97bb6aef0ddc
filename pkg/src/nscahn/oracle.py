"""Dense brute-force reference for one time step on the unit interval.

Everything here is rebuilt from scratch with explicit loops and closed-form
derivatives of the logarithmic potential, so it shares no assembly code
with ``mesh``, ``potentials`` or ``dynamics``.  Only the dense direct
solver from ``linsolve`` is reused.
"""

from __future__ import annotations

import numpy as np

from .dynamics import SchemeParams, step
from .linsolve import DENSE_MAX, dense_solve_oracle
from .mesh import FieldState, build_grid
from .potentials import PotentialConfig, separation_bounds

ORACLE_TOL = 1e-8
DEFAULT_SIZES = (4, 8, 16)


def dense_interval_system(n: int):
    """Stiffness K (n x n), bulk weights w and boundary weights (nodes 0 and n-1)."""
    h = 1.0 / (n - 1)
    K = np.zeros((n, n))
    for i in range(n - 1):
        K[i, i] += 1.0 / h
        K[i + 1, i + 1] += 1.0 / h
        K[i, i + 1] -= 1.0 / h
        K[i + 1, i] -= 1.0 / h
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    wg = np.zeros(n)
    wg[0] = wg[-1] = 1.0
    return K, w, wg


def _log_parts(r, a1, a2):
    # beta' , beta'' and pi' of (1+r)ln(1+r) + (1-r)ln(1-r) + a1 (1 - r^2) + a2 r
    return np.log((1 + r) / (1 - r)), 2.0 / ((1 + r) * (1 - r)), -2.0 * a1 * r + a2


def oracle_step(state: FieldState, params: SchemeParams, cfg: PotentialConfig, dt: float,
                tol: float = 1e-13, max_iter: int = 100):
    """One rho-then-mu step by undamped dense Newton and a dense linear solve."""
    if cfg.bulk_kind != "logarithmic":
        raise ValueError("the dense oracle covers the logarithmic potential only")
    n = state.rho.size
    K, w, wg = dense_interval_system(n)
    mass = w + wg
    rho_n, mu_n = state.rho, state.mu

    g = cfg.g_a - cfg.g_b * rho_n ** 2
    dg = -2.0 * cfg.g_b * rho_n
    _, _, dpi = _log_parts(rho_n, cfg.alpha1, cfg.alpha2)
    _, _, dpi_g = _log_parts(rho_n, cfg.alpha1_gamma, cfg.alpha2_gamma)
    src = w * (mu_n * dg - dpi) - wg * dpi_g

    rho = rho_n.copy()
    for _ in range(max_iter):
        db, d2b, _ = _log_parts(rho, 0.0, 0.0)
        R = mass * (rho - rho_n) / dt + K @ rho + (w + wg) * db - src
        if np.sqrt(np.sum(R * R / mass)) <= tol:
            break
        J = K + np.diag(mass / dt + (w + wg) * d2b)
        delta = dense_solve_oracle(J, -R)
        rho = rho + delta
        if np.max(np.abs(delta)) <= 1e-13:
            break
    else:
        raise RuntimeError("dense Newton did not converge")

    react = (params.eps + 2.0 * g + dg * (rho - rho_n)) / dt
    A = K.copy()
    for i in range(n):
        # only the bulk part of the stiffness acts on mu; in 1D it is all of K
        A[i, i] += w[i] * react[i]
    b = w * (params.eps + 2.0 * g) / dt * mu_n
    mu = dense_solve_oracle(A, b)
    return mu, rho


def random_state(n: int, seed: int) -> FieldState:
    rng = np.random.default_rng(seed)
    return FieldState(0.0, rng.uniform(0.0, 2.0, n), rng.uniform(-0.8, 0.8, n))


def compare_step(n: int, seed: int = 0, dt: float = 1e-2, cfg: PotentialConfig | None = None,
                 params: SchemeParams | None = None) -> float:
    """Max nodal deviation between dynamics.step and the dense oracle."""
    if not 4 <= n <= DENSE_MAX:
        raise ValueError(f"oracle size must lie in [4, {DENSE_MAX}]")
    cfg = cfg or PotentialConfig()
    # a tighter inner tolerance keeps CG well inside ORACLE_TOL up to DENSE_MAX nodes
    params = params or SchemeParams.fixed(dt, lin_tol=1e-12)
    grid = build_grid("interval1d", n)
    state = random_state(n, seed)
    bounds = separation_bounds(cfg, float(state.rho.min()), float(state.rho.max()))
    out = step(state, params, cfg, grid, bounds, dt=dt)
    mu_ref, rho_ref = oracle_step(state, params, cfg, dt)
    return float(max(np.max(np.abs(out.next_state.rho - rho_ref)),
                     np.max(np.abs(out.next_state.mu - mu_ref))))


def oracle_suite(sizes=DEFAULT_SIZES, seeds=(0, 1, 2)) -> dict:
    """Deviation per size (max over seeds) and the overall maximum."""
    per_size = {int(n): max(compare_step(int(n), s) for s in seeds) for n in sizes}
    return {"deviations": per_size, "max_deviation": max(per_size.values()), "tolerance": ORACLE_TOL}
