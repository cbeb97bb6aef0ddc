import numpy as np
import pytest

from nscahn import diagnostics as D
from nscahn.dynamics import SchemeParams, simulate, step
from nscahn.initial import make_initial
from nscahn.mesh import FieldState, build_grid
from nscahn.potentials import PotentialConfig, SeparationBounds, separation_bounds


def _records(init, t_end, params, cfg, grid):
    recs = []
    simulate(init, t_end, params, cfg, grid, recs.append)
    return recs


def test_fixed_point_trajectory(cfg, grid2d):
    n = grid2d.n_nodes
    init = FieldState(0.0, np.full(n, 0.5), np.zeros(n))
    recs = _records(init, 0.05, SchemeParams(), cfg, grid2d)
    for r in recs:
        assert D.stationarity_residuals(r) == (0.0, 0.0)
        assert r.flags == frozenset()
    L = [r.lyapunov for r in recs]
    assert max(L) - min(L) <= 1e-12


def test_zero_mu_run(cfg, grid2d, rng):
    n = grid2d.n_nodes
    init = FieldState(0.0, np.zeros(n), rng.uniform(-0.3, 0.3, n))
    recs = _records(init, 0.3, SchemeParams(), cfg, grid2d)
    for r in recs:
        assert r.coupling_term == 0.0 and r.grad_mu_norm == 0.0
        assert r.lyapunov == r.E_total
    assert np.all(np.diff([r.lyapunov for r in recs]) <= 0.0)


def test_initial_record(cfg, grid1d, spinodal_1d):
    acc = D.Accumulator()
    r = D.record(spinodal_1d, spinodal_1d, 0.0, cfg, grid1d, SchemeParams(), acc)
    assert r.dt_used == 0.0 and r.rho_increment_rate == 0.0 and acc.dissipation == 0.0
    assert r.first_estimate_quantity > 0
    assert r.lyapunov == pytest.approx(r.E_total - r.coupling_term)


def test_record_is_replayable(cfg, grid1d, spinodal_1d):
    params = SchemeParams()
    bounds = separation_bounds(cfg, -0.5, 0.5)
    out = step(spinodal_1d, params, cfg, grid1d, bounds)
    a = D.record(spinodal_1d, out.next_state, out.dt_used, cfg, grid1d, params, D.Accumulator())
    b = D.record(spinodal_1d.copy(), out.next_state.copy(), out.dt_used, cfg, grid1d, params, D.Accumulator())
    assert a == b


def test_separation_positivity_flags():
    bounds = SeparationBounds(-0.95, 0.95, 0.1, 10.0)
    base = dict(t=0.0, dt_used=0.0, E_total=0, E_bulk_grad=0, E_bulk_pot=0, E_surf_grad=0, E_surf_pot=0,
                coupling_term=0, lyapunov=0, first_estimate_quantity=0, grad_mu_norm=0,
                rho_increment_rate=0, min_rho=-0.95, max_rho=0.95, min_mu=0.0)
    assert D.check_separation_positivity(D.DiagnosticsRecord(**base), bounds) == frozenset()
    flags = D.check_separation_positivity(D.DiagnosticsRecord(**{**base, "min_mu": -1e-9}), bounds)
    assert flags == {D.POSITIVITY}
    flags = D.check_separation_positivity(D.DiagnosticsRecord(**{**base, "max_rho": 0.9512}), bounds)
    assert flags == {D.SEPARATION}
    with pytest.raises(D.InteriorViolation):
        D.check_separation_positivity(D.DiagnosticsRecord(**{**base, "max_rho": 1.0}), bounds)


def test_drift_and_violation_helpers():
    class R:
        def __init__(self, q, lv):
            self.first_estimate_quantity, self.lyapunov = q, lv

    recs = [R(2.0, 1.0), R(2.1, 0.5), R(1.9, 0.7), R(2.0, 0.6)]
    assert D.relative_drift(recs) == pytest.approx(0.05)
    assert D.lyapunov_violation(recs) == pytest.approx(0.2)


def test_first_estimate_drift_first_order(cfg):
    g = build_grid("interval1d", 33)
    init = make_initial({"kind": "sinusoidal", "amplitude": 0.5, "modes": 2, "mu0": 1.0}, g)
    drifts = [D.relative_drift(_records(init, 1.0, SchemeParams.fixed(dt), cfg, g)) for dt in (2e-3, 1e-3, 5e-4)]
    assert drifts[0] <= 0.05
    for a, b in zip(drifts, drifts[1:]):
        assert 1.6 <= a / b <= 2.4


def test_lyapunov_balance_first_order(cfg):
    # L(t) + accumulated dissipation stays at L(0) up to O(dt)
    g = build_grid("interval1d", 33)
    init = make_initial({"kind": "sinusoidal", "amplitude": 0.5, "modes": 2, "mu0": 1.0}, g)
    defects = []
    for dt in (2e-3, 1e-3, 5e-4):
        recs = _records(init, 1.0, SchemeParams.fixed(dt), cfg, g)
        L = np.array([r.lyapunov for r in recs])
        diss = np.array([r.dissipation for r in recs])
        defects.append(np.max(np.abs(L + diss - L[0])))
    for a, b in zip(defects, defects[1:]):
        assert 1.6 <= a / b <= 2.4


def test_rearrangement_defect_closed_form(cfg, grid2d, rng):
    n = grid2d.n_nodes
    params = SchemeParams()
    bounds = separation_bounds(cfg, -0.5, 0.5)
    state = FieldState(0.0, rng.uniform(0.5, 1.5, n), rng.uniform(-0.4, 0.4, n))
    out = step(state, params, cfg, grid2d, bounds)
    nxt = out.next_state
    defect = D.rearrangement_defect(state, nxt, params, cfg, grid2d)
    d = nxt.rho - state.rho
    expected = -2 * cfg.g_b * np.sum(grid2d.bulk_weights * nxt.mu * d * d)
    assert defect == pytest.approx(expected, rel=1e-6, abs=1e-14)


def test_rearrangement_defect_is_second_order(cfg, grid1d):
    init = make_initial({"kind": "sinusoidal", "amplitude": 0.5, "modes": 1, "mu0": 1.0}, grid1d)
    bounds = separation_bounds(cfg, -0.5, 0.5)
    scaled = []
    for dt in (1e-3, 5e-4, 2.5e-4):
        params = SchemeParams.fixed(dt)
        out = step(init, params, cfg, grid1d, bounds)
        scaled.append(abs(D.rearrangement_defect(init, out.next_state, params, cfg, grid1d)) / dt**2)
    assert max(scaled) <= 2 * min(scaled)


def test_stationarity_residuals_decay(cfg, grid1d, spinodal_1d):
    recs = _records(spinodal_1d, 20.0, SchemeParams(), cfg, grid1d)
    at1 = next(r for r in recs if r.t >= 1.0)
    last = recs[-1]
    assert last.grad_mu_norm <= at1.grad_mu_norm / 10
    assert last.rho_increment_rate <= at1.rho_increment_rate / 10


def test_energy_increment_matches_difference(cfg, grid2d, rng):
    n = grid2d.n_nodes
    zero = np.zeros(n)
    for _ in range(5):
        a = rng.uniform(-0.9, 0.9, n)
        b = np.clip(a + rng.uniform(-0.05, 0.05, n), -0.95, 0.95)
        naive = D.discrete_energy(FieldState(0, zero, b), cfg, grid2d)[0] - \
            D.discrete_energy(FieldState(0, zero, a), cfg, grid2d)[0]
        assert D.energy_increment(a, b, cfg, grid2d) == pytest.approx(naive, abs=1e-12)


def test_energy_increment_resolves_tiny_steps(cfg, grid2d, rng):
    from nscahn.stationary import stationary_residual

    n = grid2d.n_nodes
    a = rng.uniform(-0.9, 0.9, n)
    d = 1e-10 * rng.standard_normal(n)
    # to first order the increment is the energy gradient applied to d
    linear = float(stationary_residual(a + 0.5 * d, 0.0, cfg, grid2d) @ d)
    assert D.energy_increment(a, a + d, cfg, grid2d) == pytest.approx(linear, rel=1e-6)
    assert D.energy_increment(a, a, cfg, grid2d) == 0.0
    assert D.energy_increment(a + d, a, cfg, grid2d) == pytest.approx(-linear, rel=1e-6)
