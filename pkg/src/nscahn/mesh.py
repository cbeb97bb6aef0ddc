"""Desk-scale geometries, discrete operators and the discrete free energy.

Two geometries are provided:

* ``interval1d``: nodes x_i = i/(n_x-1) on [0, 1]; the boundary is the two
  end points (unit weight each) and the surface Laplacian vanishes.
* ``slab2d``: x periodic with n_x cells of width 1/n_x, y in [0, 1] with n_y
  nodes; the boundary is the two lines y = 0 and y = 1 and the surface
  Laplacian is the periodic second difference along x.

Nodes are numbered ``j * n_x + i`` (x fastest).  The surface unknowns are
the bulk unknowns at ``boundary_index``, so the trace constraint holds by
construction.  Quadrature weights are the ones induced by the difference
stencils, which makes summation by parts exact:
``-sum(w * lap(u) * v) == a_bulk(u, v)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .potentials import DomainError, PotentialConfig, eval_F

INTERVAL1D = "interval1d"
SLAB2D = "slab2d"


@dataclass(frozen=True, eq=False)
class Grid:
    dim: str
    n_x: int
    n_y: int
    h_x: float
    h_y: float
    x: np.ndarray
    y: np.ndarray
    bulk_weights: np.ndarray
    boundary_index: np.ndarray
    boundary_weights: np.ndarray
    periodic_x: bool
    # edges as (p, q, c): contribution c * (u_p - u_q) * (v_p - v_q)
    bulk_edges: tuple
    surface_edges: tuple

    @property
    def n_nodes(self) -> int:
        return self.x.size

    @property
    def n_boundary(self) -> int:
        return self.boundary_index.size

    def spec(self) -> dict:
        return {"dim": self.dim, "n_x": self.n_x, "n_y": self.n_y}

    @cached_property
    def surface_mass(self) -> np.ndarray:
        """Boundary weights scattered to a bulk-sized array (zero in the interior)."""
        m = np.zeros(self.n_nodes)
        m[self.boundary_index] = self.boundary_weights
        return m

    @cached_property
    def total_mass(self) -> np.ndarray:
        """Diagonal of the lumped bulk + surface mass matrix."""
        return self.bulk_weights + self.surface_mass

    @cached_property
    def stiffness_bulk(self) -> sp.csr_matrix:
        return _assemble(self.bulk_edges, self.n_nodes)

    @cached_property
    def stiffness_surface(self) -> sp.csr_matrix:
        return _assemble(self.surface_edges, self.n_nodes)

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        return (self.stiffness_bulk + self.stiffness_surface).tocsr()


def _assemble(edges, n):
    p, q, c = edges
    rows = np.concatenate([p, q, p, q])
    cols = np.concatenate([p, q, q, p])
    vals = np.concatenate([c, c, -c, -c])
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def _edges(p, q, c):
    p = np.asarray(p, dtype=np.int64)
    q = np.asarray(q, dtype=np.int64)
    return p, q, np.broadcast_to(np.asarray(c, dtype=float), p.shape).copy()


def build_grid(dim: str, n_x: int, n_y: int | None = None) -> Grid:
    if dim == INTERVAL1D:
        if n_x < 4:
            raise ValueError("interval1d needs n_x >= 4")
        h = 1.0 / (n_x - 1)
        x = np.arange(n_x) * h
        w = np.full(n_x, h)
        w[[0, -1]] = 0.5 * h
        idx = np.arange(n_x - 1)
        bulk = _edges(idx, idx + 1, 1.0 / h)
        empty = _edges([], [], [])
        return Grid(dim, n_x, 1, h, 0.0, x, np.zeros(n_x), w,
                    np.array([0, n_x - 1]), np.ones(2), False, bulk, empty)

    if dim == SLAB2D:
        if n_x < 4 or n_y is None or n_y < 4:
            raise ValueError("slab2d needs n_x >= 4 and n_y >= 4")
        hx, hy = 1.0 / n_x, 1.0 / (n_y - 1)
        i, j = np.meshgrid(np.arange(n_x), np.arange(n_y))
        node = j * n_x + i
        x, y = (i * hx).ravel(), (j * hy).ravel()
        row_w = np.full(n_y, hy)
        row_w[[0, -1]] = 0.5 * hy
        w = (hx * row_w[j]).ravel()

        right = j * n_x + (i + 1) % n_x
        # x-edges carry the row weight (halved on the boundary rows)
        px, qx, cx = node.ravel(), right.ravel(), (row_w[j] / hx).ravel()
        py, qy = node[:-1].ravel(), node[1:].ravel()
        bulk = (np.concatenate([px, py]), np.concatenate([qx, qy]),
                np.concatenate([cx, np.full(py.size, hx / hy)]))
        bnd = np.concatenate([node[0], node[-1]])
        surf = _edges(bnd, np.concatenate([right[0], right[-1]]), 1.0 / hx)
        return Grid(dim, n_x, n_y, hx, hy, x, y, w, bnd,
                    np.full(bnd.size, hx), True, bulk, surf)

    raise ValueError(f"unknown geometry {dim!r}")


@dataclass
class FieldState:
    t: float
    mu: np.ndarray
    rho: np.ndarray

    def trace(self, grid: Grid) -> np.ndarray:
        return self.rho[grid.boundary_index]

    def copy(self) -> "FieldState":
        return FieldState(self.t, self.mu.copy(), self.rho.copy())


def apply_edges(edges, u, n: int) -> np.ndarray:
    """Stiffness product K u accumulated edge by edge; exactly zero on constants."""
    p, q, c = edges
    flux = c * (u[p] - u[q])
    return np.bincount(p, flux, minlength=n) - np.bincount(q, flux, minlength=n)


def laplacian_neumann(u, grid: Grid) -> np.ndarray:
    """Bulk Laplacian with homogeneous Neumann data (mirrored ghost nodes)."""
    u = np.asarray(u, dtype=float)
    return -apply_edges(grid.bulk_edges, u, grid.n_nodes) / grid.bulk_weights


def _edge_form(edges, u, v):
    p, q, c = edges
    return math.fsum(c * (u[p] - u[q]) * (v[p] - v[q]))


def coupled_gradient_form(rho, v, grid: Grid) -> float:
    """a(rho, v) = int grad rho . grad v + int_Gamma grad_G rho . grad_G v."""
    rho, v = np.asarray(rho, float), np.asarray(v, float)
    return _edge_form(grid.bulk_edges, rho, v) + _edge_form(grid.surface_edges, rho, v)


def weighted_inner(u, v, grid: Grid, domain: str = "bulk") -> float:
    u, v = np.asarray(u, float), np.asarray(v, float)
    if domain == "bulk":
        return float(np.sum(grid.bulk_weights * u * v))
    if domain == "boundary":
        if u.size == grid.n_nodes:
            u = u[grid.boundary_index]
        if v.size == grid.n_nodes:
            v = v[grid.boundary_index]
        return float(np.sum(grid.boundary_weights * u * v))
    raise ValueError(f"domain must be 'bulk' or 'boundary', got {domain!r}")


def discrete_energy(state: FieldState, cfg: PotentialConfig, grid: Grid):
    """Free energy split as (total, bulk gradient, bulk potential, surface gradient, surface potential)."""
    rho = state.rho
    if np.any(~(np.abs(rho) < 1.0)):
        raise DomainError("energy needs rho strictly inside (-1, 1)")
    rg = rho[grid.boundary_index]
    e_bg = 0.5 * _edge_form(grid.bulk_edges, rho, rho)
    e_sg = 0.5 * _edge_form(grid.surface_edges, rho, rho)
    # exactly rounded sums keep differences of nearby energies free of summation noise
    e_bp = math.fsum(grid.bulk_weights * eval_F(rho, cfg, "bulk")[0])
    e_sp = math.fsum(grid.boundary_weights * eval_F(rg, cfg, "surface")[0])
    return e_bg + e_bp + e_sg + e_sp, e_bg, e_bp, e_sg, e_sp
