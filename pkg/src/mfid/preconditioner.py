"""Fast solver for the dual metric operator A A^T.

The dual potential lives on the constraint levels 1..K (K = nt - 1). On
those levels A A^T is

    -D_tt - Lap_N + I

with the Neumann spatial Laplacian, a Neumann ghost at level 0 (u[0] is
data) and, at level K, a Neumann ghost when the terminal density is fixed
or a zero ghost when it is a free unknown. Both time closures have explicit
cosine eigenbases, so the operator is diagonalized by a spatial DCT-II and a
small dense cosine transform in time.
"""
import os
from dataclasses import dataclass

import numpy as np
import scipy.fft


def fft_workers():
    """Worker count for the transforms, capped by MFID_THREADS when set."""
    val = os.environ.get("MFID_THREADS")
    if not val:
        return 1
    try:
        return max(1, int(val))
    except ValueError:
        return 1


def _neumann_symbol(n, h):
    k = np.arange(n)
    return (2.0 / h**2) * (1.0 - np.cos(np.pi * k / n))


def _time_basis(K, free_terminal):
    """Orthonormal eigenvectors (columns) and eigenvalues of -D_tt on K levels."""
    i = np.arange(K) + 0.5
    if free_terminal:
        theta = np.pi * (np.arange(K) + 0.5) / (K + 0.5)
    else:
        theta = np.pi * np.arange(K) / K
    basis = np.cos(np.outer(i, theta))
    basis /= np.linalg.norm(basis, axis=0)
    return basis, 2.0 * (1.0 - np.cos(theta))


@dataclass(frozen=True)
class TransformPlan:
    grid: object
    free_terminal: bool
    eigenvalues: np.ndarray  # shape (K, nx1, nx2)
    time_basis: np.ndarray  # shape (K, K), columns are modes

    @property
    def levels(self):
        return self.eigenvalues.shape[0]


def build_plan(grid, free_terminal=False):
    K = grid.nt - 1
    basis, tsym = _time_basis(K, free_terminal)
    tsym = tsym / grid.dt**2
    s1 = _neumann_symbol(grid.nx1, grid.dx1)
    s2 = _neumann_symbol(grid.nx2, grid.dx2)
    lam = tsym[:, None, None] + s1[None, :, None] + s2[None, None, :] + 1.0
    if lam.min() < 1.0 - 1e-12:
        raise AssertionError("operator symbol dropped below 1")
    lam.setflags(write=False)
    basis.setflags(write=False)
    return TransformPlan(grid=grid, free_terminal=free_terminal, eigenvalues=lam,
                         time_basis=basis)


def _forward(plan, r):
    w = fft_workers()
    c = scipy.fft.dctn(r, type=2, norm="ortho", axes=(1, 2), workers=w)
    return np.tensordot(plan.time_basis.T, c, axes=(1, 0))


def _inverse(plan, c):
    w = fft_workers()
    r = np.tensordot(plan.time_basis, c, axes=(1, 0))
    return scipy.fft.idctn(r, type=2, norm="ortho", axes=(1, 2), workers=w)


def solve_AAt(plan, r):
    """Solve (A A^T) q = r for r of shape (K, nx1, nx2)."""
    r = np.asarray(r, dtype=float)
    return _inverse(plan, _forward(plan, r) / plan.eigenvalues)


def apply_AAt(plan, q):
    """Stencil application of A A^T on the K constraint levels."""
    g = plan.grid
    q = np.asarray(q, dtype=float)
    out = q.copy()
    # time: -(q[n+1] - 2 q[n] + q[n-1]) / dt^2 with the closures above
    qt = np.concatenate([q[:1], q, np.zeros_like(q[:1]) if plan.free_terminal else q[-1:]])
    out -= (qt[2:] - 2 * q + qt[:-2]) / g.dt**2
    # space: Neumann Laplacian
    qx = np.concatenate([q[:, :1], q, q[:, -1:]], axis=1)
    out -= (qx[:, 2:] - 2 * q + qx[:, :-2]) / g.dx1**2
    qy = np.concatenate([q[:, :, :1], q, q[:, :, -1:]], axis=2)
    out -= (qy[:, :, 2:] - 2 * q + qy[:, :, :-2]) / g.dx2**2
    return out


def h_norm_squared(plan, q):
    """Explicit quadrature of |D_t q|^2 + |grad q|^2 + q^2 (grid weights dropped)."""
    g = plan.grid
    q = np.asarray(q, dtype=float)
    dt_fwd = np.diff(q, axis=0) / g.dt
    total = float(np.sum(dt_fwd**2))
    if plan.free_terminal:
        total += float(np.sum((q[-1] / g.dt) ** 2))
    total += float(np.sum((np.diff(q, axis=1) / g.dx1) ** 2))
    total += float(np.sum((np.diff(q, axis=2) / g.dx2) ** 2))
    return total + float(np.sum(q**2))
