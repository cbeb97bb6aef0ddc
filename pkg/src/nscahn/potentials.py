"""Bulk/surface potentials, the concave mobility g, and structural checks.

All evaluators accept scalars or numpy arrays and return arrays of the
same shape.  The surface potential F_Gamma is always of logarithmic type;
``bulk_kind`` only selects the bulk potential F.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

LOGARITHMIC = "logarithmic"
REGULAR_QUARTIC = "regular_quartic"
BULK_KINDS = (LOGARITHMIC, REGULAR_QUARTIC)

ROOT_TOL = 1e-12


class DomainError(ValueError):
    """Argument outside the domain of a potential or of the mobility."""


@dataclass(frozen=True)
class PotentialConfig:
    bulk_kind: str = LOGARITHMIC
    alpha1: float = 2.0
    alpha2: float = 0.0
    alpha1_gamma: float = 2.0
    alpha2_gamma: float = 0.0
    g_a: float = 1.0
    g_b: float = 1.0
    clip_margin: float = 1e-9
    # quartic bulk violates the blow-up hypothesis; only accepted when relaxed
    relaxed: bool = False

    def __post_init__(self):
        if self.bulk_kind not in BULK_KINDS:
            raise ValueError(f"unknown bulk_kind {self.bulk_kind!r}")
        if not (self.g_b > 0 and self.g_a >= self.g_b):
            raise ValueError("mobility needs g_a >= g_b > 0")
        if not (0 < self.clip_margin < 0.5):
            raise ValueError("clip_margin must lie in (0, 0.5)")
        if self.bulk_kind == REGULAR_QUARTIC and not self.relaxed:
            raise ValueError("regular_quartic bulk requires relaxed=True")
        for name in ("alpha1", "alpha2", "alpha1_gamma", "alpha2_gamma"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PotentialConfig":
        return cls(**data)


def _interior(r, what):
    r = np.asarray(r, dtype=float)
    if np.any(~(np.abs(r) < 1.0)):
        raise DomainError(f"{what} requires |r| < 1")
    return r


def eval_g(r, cfg: PotentialConfig):
    """Mobility g(r) = g_a - g_b r^2 with its first two derivatives."""
    r = np.asarray(r, dtype=float)
    if np.any(~(np.abs(r) <= 1.0)):
        raise DomainError("g is defined on [-1, 1]")
    g = cfg.g_a - cfg.g_b * r * r
    return g, -2.0 * cfg.g_b * r, np.full_like(r, -2.0 * cfg.g_b)


def _coefficients(cfg, which):
    if which == "bulk":
        return cfg.bulk_kind, cfg.alpha1, cfg.alpha2
    if which == "surface":
        return LOGARITHMIC, cfg.alpha1_gamma, cfg.alpha2_gamma
    raise ValueError(f"which must be 'bulk' or 'surface', got {which!r}")


def convex_smooth_split(r, cfg: PotentialConfig, which: str = "bulk"):
    """Return (beta, beta', beta'', pi, pi', pi'') with F = beta + pi.

    Logarithmic kind: beta is the entropy part (1+r)ln(1+r) + (1-r)ln(1-r),
    pi = a1 (1 - r^2) + a2 r.  Quartic kind: beta = (1 + r^4)/4,
    pi = -r^2/2 + a2 r.
    """
    r = _interior(r, "F")
    kind, a1, a2 = _coefficients(cfg, which)
    if kind == LOGARITHMIC:
        lp, lm = np.log1p(r), np.log1p(-r)
        beta = (1.0 + r) * lp + (1.0 - r) * lm
        dbeta = lp - lm
        ddbeta = 2.0 / ((1.0 - r) * (1.0 + r))
        pi = a1 * (1.0 - r * r) + a2 * r
        dpi = -2.0 * a1 * r + a2
        ddpi = np.full_like(r, -2.0 * a1)
    else:
        beta = 0.25 * (1.0 + r**4)
        dbeta = r**3
        ddbeta = 3.0 * r * r
        pi = -0.5 * r * r + a2 * r
        dpi = -r + a2
        ddpi = np.full_like(r, -1.0)
    return beta, dbeta, ddbeta, pi, dpi, ddpi


def eval_F(r, cfg: PotentialConfig, which: str = "bulk"):
    """Potential F (or F_Gamma) and its first two derivatives on (-1, 1)."""
    b, db, ddb, p, dp, ddp = convex_smooth_split(r, cfg, which)
    return b + p, db + dp, ddb + ddp


@dataclass
class HypothesisReport:
    hpg_ok: bool
    hpF_blowup_ok: bool
    hpF_lower_bound_ok: bool
    domination_ok: bool
    C_lower: float
    eta_dom: float
    C_dom: float
    samples: list = field(default_factory=list)

    @property
    def all_ok(self) -> bool:
        return self.hpg_ok and self.hpF_blowup_ok and self.hpF_lower_bound_ok and self.domination_ok

    def to_dict(self) -> dict:
        d = asdict(self)
        d["all_ok"] = self.all_ok
        return d


def probe_points(n_uniform: int = 201) -> np.ndarray:
    """Geometric tails r = +-(1 - 2^-k), k = 1..40, plus a uniform interior grid."""
    tail = 1.0 - 2.0 ** -np.arange(1, 41)
    uniform = np.linspace(-0.99, 0.99, n_uniform)
    return np.unique(np.concatenate([-tail, uniform, tail]))


def _min_second_derivative(cfg, which):
    # F'' = 2/(1-r^2) - 2 a1 (log) or 3 r^2 - 1 (quartic): both minimal at r = 0
    kind, a1, _ = _coefficients(cfg, which)
    return 2.0 - 2.0 * a1 if kind == LOGARITHMIC else -1.0


def _diverges(values: np.ndarray) -> bool:
    # eventually monotone along the tail (probes k = 30..40) and still growing
    # there: log growth adds about ln 2 per probe, a bounded derivative stalls
    # geometrically.  Polynomial terms change by O(2^-30) per probe, so any
    # practical alpha1 leaves the verdict unchanged.
    far = values[29:]
    return bool(np.all(np.diff(far) > 0) and far[-1] - far[0] > 1.0)


def check_hypotheses(cfg: PotentialConfig) -> HypothesisReport:
    """Sampled certificate of the structural hypotheses on g, F and F_Gamma."""
    rs = probe_points()
    tail = 1.0 - 2.0 ** -np.arange(1, 41)

    ends = np.array([-1.0, 1.0])
    _, g1_end, _ = eval_g(ends, cfg)
    gv, _, g2v = eval_g(np.linspace(-1.0, 1.0, 401), cfg)
    hpg_ok = bool(np.all(gv >= 0) and np.all(g2v <= 0) and g1_end[0] > 0 and g1_end[1] < 0)

    blowup = True
    for which in ("bulk", "surface"):
        _, up, _ = eval_F(tail, cfg, which)
        _, down, _ = eval_F(-tail, cfg, which)
        blowup = blowup and _diverges(up) and _diverges(-down)

    C_lower = max(0.0, -_min_second_derivative(cfg, "bulk"), -_min_second_derivative(cfg, "surface"))
    _, _, F2 = eval_F(rs, cfg, "bulk")
    _, _, FG2 = eval_F(rs, cfg, "surface")
    lower_ok = bool(np.isfinite(C_lower) and np.all(F2 >= -C_lower - 1e-9) and np.all(FG2 >= -C_lower - 1e-9))

    _, F1, _ = eval_F(rs, cfg, "bulk")
    _, FG1, _ = eval_F(rs, cfg, "surface")
    y, x = np.abs(F1), np.abs(FG1)
    # slope from a least-squares fit through the origin on the far tails
    far = np.abs(rs) >= 1.0 - 2.0**-20
    eta = float(np.dot(x[far], y[far]) / np.dot(x[far], x[far]))
    eta = max(eta, 1e-12)
    C_dom = max(0.0, float(np.max(y - eta * x)))
    margins = eta * x + C_dom - y
    domination_ok = bool(np.isfinite(eta) and np.isfinite(C_dom) and np.all(margins >= 0))

    samples = [
        {"r": float(r), "dF": float(a), "dF_gamma": float(b), "margin": float(m)}
        for r, a, b, m in zip(rs, F1, FG1, margins)
    ]
    return HypothesisReport(hpg_ok, blowup, lower_ok, domination_ok, C_lower, eta, C_dom, samples)


@dataclass(frozen=True)
class SeparationBounds:
    rho_lo: float
    rho_hi: float
    g_star: float
    C_star: float

    def to_dict(self) -> dict:
        return asdict(self)


def _bisect(f, a, b, tol=ROOT_TOL):
    fa = f(a)
    while b - a > tol:
        m = 0.5 * (a + b)
        fm = f(m)
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def _upper_threshold(cfg, cap):
    """Smallest r* with g' < 0 and F', F_Gamma' > 0 on [r*, cap]."""

    def bad(r):
        # positive where the sign conditions fail
        _, dF, _ = eval_F(r, cfg, "bulk")
        _, dFG, _ = eval_F(r, cfg, "surface")
        _, dg, _ = eval_g(r, cfg)
        return np.maximum(np.maximum(-dF, -dFG), dg)

    if bad(cap) >= 0:
        raise ValueError("no separation bound below 1 - clip_margin")
    grid = np.linspace(-1.0 + 1e-9, cap, 20001)
    vals = bad(grid)
    failing = np.nonzero(vals >= 0)[0]
    if failing.size == 0:
        return -1.0 + 1e-9
    k = failing[-1]
    return _bisect(lambda r: -float(bad(r)), grid[k], grid[k + 1])


def _mirror(cfg: PotentialConfig) -> PotentialConfig:
    # r -> -r maps the lower threshold onto an upper one
    return PotentialConfig(
        cfg.bulk_kind, cfg.alpha1, -cfg.alpha2, cfg.alpha1_gamma, -cfg.alpha2_gamma,
        cfg.g_a, cfg.g_b, cfg.clip_margin, cfg.relaxed,
    )


def separation_bounds(cfg: PotentialConfig, rho0_min: float, rho0_max: float) -> SeparationBounds:
    """Invariant interval [rho_lo, rho_hi] for solutions started in [rho0_min, rho0_max].

    Above rho_hi both F' and F_Gamma' are positive and g' is negative, so a
    nonnegative chemical potential can only push the solution back down;
    symmetrically below rho_lo.
    """
    if not (-1.0 < rho0_min <= rho0_max < 1.0):
        raise ValueError("need -1 < rho0_min <= rho0_max < 1")
    cap = 1.0 - cfg.clip_margin
    r_up = _upper_threshold(cfg, cap) + ROOT_TOL
    r_down = -(_upper_threshold(_mirror(cfg), cap) + ROOT_TOL)
    rho_hi = max(rho0_max, r_up)
    rho_lo = min(rho0_min, r_down)
    if rho_hi >= cap or rho_lo <= -cap:
        raise ValueError("no separation bound below 1 - clip_margin")

    rs = np.linspace(rho_lo, rho_hi, 4001)
    g, g1, g2 = eval_g(rs, cfg)
    vals = [g, g1, g2, *eval_F(rs, cfg, "bulk"), *eval_F(rs, cfg, "surface")]
    g_star = float(min(np.min(g), *eval_g(np.array([rho_lo, rho_hi]), cfg)[0]))
    C_star = float(max(np.max(np.abs(v)) for v in vals))
    return SeparationBounds(float(rho_lo), float(rho_hi), g_star, C_star)
