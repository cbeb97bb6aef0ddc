"""Initial data: constant, sinusoidal and seeded-random fields.

Random fields come from a fixed 64-bit linear congruential generator so
that initial data is identical on every platform and numpy version::

    state <- (6364136223846793005 * state + 1442695040888963407) mod 2**64
    u      = (state >> 11) / 2**53          # top 53 bits, in [0, 1)
    value  = 2 u - 1                        # in [-1, 1)

The generator is advanced once before each draw; the seed is the initial
state.
"""

from __future__ import annotations

import numpy as np

from .mesh import FieldState, Grid

LCG_MULT = 6364136223846793005
LCG_INC = 1442695040888963407
_MASK = (1 << 64) - 1

KINDS = ("constant", "sinusoidal", "seeded_random")


def lcg_uniform(seed: int, n: int) -> np.ndarray:
    """n draws uniform in [-1, 1) from the documented LCG."""
    state = seed & _MASK
    out = np.empty(n)
    for k in range(n):
        state = (LCG_MULT * state + LCG_INC) & _MASK
        out[k] = 2.0 * ((state >> 11) / float(1 << 53)) - 1.0
    return out


def _band_limited(seed: int, modes: int, grid: Grid) -> np.ndarray:
    """Random combination of the lowest Neumann/periodic modes, scaled to max |value| = 1."""
    if grid.dim == "slab2d":
        xs = [np.cos(2 * np.pi * k * grid.x) for k in range(modes + 1)]
        xs += [np.sin(2 * np.pi * k * grid.x) for k in range(1, modes + 1)]
        ys = [np.cos(np.pi * l * grid.y) for l in range(modes + 1)]
        basis = [bx * by for bx in xs for by in ys]
    else:
        basis = [np.cos(np.pi * k * grid.x) for k in range(modes + 1)]
    coef = lcg_uniform(seed, len(basis))
    field = sum(c * b for c, b in zip(coef, basis))
    return field / np.max(np.abs(field))


def make_initial(spec: dict, grid: Grid) -> FieldState:
    """Build (mu_0, rho_0) from an initial-data spec dict (see README)."""
    kind = spec["kind"]
    mu0 = float(spec.get("mu0", 0.0))
    if mu0 < 0:
        raise ValueError("mu0 must be nonnegative")
    n = grid.n_nodes
    if kind == "constant":
        rho = np.full(n, float(spec["rho0"]))
    elif kind == "sinusoidal":
        amp, k = float(spec["amplitude"]), int(spec.get("modes", 1))
        rho = amp * np.cos(k * np.pi * grid.x)
        if grid.dim == "slab2d":
            rho = amp * np.cos(2 * k * np.pi * grid.x) * np.cos(k * np.pi * grid.y)
        rho = rho + float(spec.get("offset", 0.0))
    elif kind == "seeded_random":
        amp = float(spec["amplitude"])
        modes = spec.get("modes")
        if modes is None:
            noise = lcg_uniform(int(spec["seed"]), n)
        else:
            noise = _band_limited(int(spec["seed"]), int(modes), grid)
        rho = float(spec.get("offset", 0.0)) + amp * noise
    else:
        raise ValueError(f"unknown initial kind {kind!r}")
    if np.max(np.abs(rho)) > 0.9:
        raise ValueError("initial rho must stay within [-0.9, 0.9]")
    return FieldState(0.0, np.full(n, mu0), rho)
