"""Space-time grid and the staggered finite-difference operators.

Scalar fields (u, m2, phi, psi) are arrays of shape ``(nt, nx1, nx2)``.
The spatial flux m1 is stored as one array of shape ``(2, nt, nx1, nx2)``:
``m1[0][n, j, l]`` is the x1 flux through the left face of cell ``(j, l)``
and ``m1[1][n, j, l]`` the x2 flux through its lower face. Faces ``j = 0``
and ``j = nx1`` (resp. ``l = 0``, ``l = nx2``) lie on the boundary and carry
no flux; the stencils below ignore whatever is stored on face 0.

Time level 0 holds the initial datum. The continuity constraint lives on
levels ``1..nt-1``; level 0 of ``phi`` is a ghost equal to level 1.
"""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Grid:
    nx1: int
    nx2: int
    nt: int

    def __post_init__(self):
        if self.nx1 < 2 or self.nx2 < 2 or self.nt < 2:
            raise ValueError(f"grid needs nx1, nx2, nt >= 2, got {self}")

    @property
    def dx1(self):
        return 1.0 / self.nx1

    @property
    def dx2(self):
        return 1.0 / self.nx2

    @property
    def dt(self):
        return 1.0 / (self.nt - 1)

    @property
    def shape(self):
        return (self.nt, self.nx1, self.nx2)

    @property
    def flux_shape(self):
        return (2, self.nt, self.nx1, self.nx2)

    @property
    def cell_area(self):
        return self.dx1 * self.dx2

    @property
    def weight(self):
        """Space-time quadrature weight dt*dx1*dx2."""
        return self.dt * self.dx1 * self.dx2

    def zeros(self):
        return np.zeros(self.shape)

    def zeros_flux(self):
        return np.zeros(self.flux_shape)

    def cell_centers(self):
        x1 = (np.arange(self.nx1) + 0.5) * self.dx1
        x2 = (np.arange(self.nx2) + 0.5) * self.dx2
        return np.meshgrid(x1, x2, indexing="ij")

    def times(self):
        return np.arange(self.nt) * self.dt


def div_m1(m1, grid):
    """Forward-difference divergence with zero flux on all boundary faces.

    Works on a full flux field or on a single time slice ``(2, nx1, nx2)``.
    """
    mx = m1[0]
    my = m1[1]
    out = np.zeros(mx.shape)
    out[..., :-1, :] += mx[..., 1:, :] / grid.dx1
    out[..., 1:, :] -= mx[..., 1:, :] / grid.dx1
    out[..., :, :-1] += my[..., :, 1:] / grid.dx2
    out[..., :, 1:] -= my[..., :, 1:] / grid.dx2
    return out


def grad_phi(phi, grid):
    """Backward-difference gradient with Neumann ghosts; boundary faces get 0."""
    g = np.zeros((2,) + phi.shape)
    g[0][..., 1:, :] = (phi[..., 1:, :] - phi[..., :-1, :]) / grid.dx1
    g[1][..., :, 1:] = (phi[..., :, 1:] - phi[..., :, :-1]) / grid.dx2
    return g


def dt_u(u, grid):
    """Backward difference in time; level 0 is the Dirichlet datum and gets 0."""
    out = np.zeros(u.shape)
    out[1:] = (u[1:] - u[:-1]) / grid.dt
    return out


def dt_phi(phi, grid):
    """Forward difference in time on levels 0..nt-2; the last level is left 0.

    The terminal level is governed by the terminal condition, not by this
    stencil. With the ghost convention ``phi[0] == phi[1]`` level 0 is 0 too.
    """
    out = np.zeros(phi.shape)
    out[:-1] = (phi[1:] - phi[:-1]) / grid.dt
    return out


def apply_A(m1, m2, u, grid):
    """Continuity residual dt_u + div m1 - m2 on levels 1..nt-1 (level 0 is 0)."""
    r = dt_u(u, grid) + div_m1(m1, grid) - m2
    r[0] = 0.0
    return r


def apply_At(phi, grid, free_terminal=False):
    """Transpose of the linear part of ``apply_A``.

    The linear part acts on ``(m1, m2, u)`` with level 0 of every field
    fixed (u[0] is data, m1[0], m2[0] never enter the constraint) and, unless
    ``free_terminal``, u[nt-1] fixed as well. Returns the three components
    ``(-grad_phi, -phi, u-part)`` with zeros on the fixed entries.
    """
    gm1 = -grad_phi(phi, grid)
    gm2 = -phi.copy()
    gu = -dt_phi(phi, grid)
    gm1[:, 0] = 0.0
    gm2[0] = 0.0
    gu[0] = 0.0
    gu[-1] = phi[-1] / grid.dt if free_terminal else 0.0
    return gm1, gm2, gu


def inner(a, b, grid):
    """Space-time inner product with weight dt*dx1*dx2."""
    return grid.weight * float(np.sum(a * b))


def spatial_sum(f, grid):
    """Spatial quadrature of each time level (or of a single slice)."""
    return grid.cell_area * np.sum(f, axis=(-2, -1))
