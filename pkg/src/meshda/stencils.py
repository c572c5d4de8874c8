"""Nonuniform finite-difference stencils on 1D meshes.

First derivative: backward difference.  Second derivative: nested difference
of backward slopes.  Fourth derivative: the second-difference stencil applied
to itself, kept in its fully expanded five-point form.  The second-derivative
stencil is exact for quadratics on arbitrary strictly increasing meshes.

Boundary rows are closed with ghost nodes mirrored about each endpoint, with
values odd-reflected about the boundary point (u(x0-s) = 2 u(x0) - u(x0+s)),
which leaves linear functions untouched and enforces a vanishing second
derivative at the ends.
"""

from __future__ import annotations

import numpy as np

from .mesh1d import Mesh1D


def extend_mesh(x: np.ndarray, nghost: int = 2) -> np.ndarray:
    """Append mirrored ghost coordinates on both sides."""
    left = 2.0 * x[0] - x[nghost:0:-1]
    right = 2.0 * x[-1] - x[-2 : -2 - nghost : -1]
    return np.concatenate((left, x, right))


def extend_odd(u: np.ndarray, nghost: int = 2) -> np.ndarray:
    """Append ghost values odd-reflected about the boundary points."""
    left = 2.0 * u[0] - u[nghost:0:-1]
    right = 2.0 * u[-1] - u[-2 : -2 - nghost : -1]
    return np.concatenate((left, u, right))


def _backward_slopes(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.diff(u) / np.diff(x)


def first_derivative(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Backward difference at nodes 1..end (length n-1)."""
    return _backward_slopes(x, u)


def second_derivative(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Nested-difference second derivative at interior nodes (length n-2)."""
    s = _backward_slopes(x, u)
    return 2.0 * (s[1:] - s[:-1]) / (x[2:] - x[:-2])


def fourth_derivative(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Expanded five-point fourth derivative at nodes 2..n-3 (length n-4)."""
    c = fourth_coeffs(x)
    n = x.size
    out = np.zeros(n - 4)
    for k in range(5):
        out += c[:, k] * u[k : n - 4 + k]
    return out


def fourth_coeffs(x: np.ndarray) -> np.ndarray:
    """Coefficients of the expanded fourth-derivative stencil.

    Row j (for node j+2 of ``x``) holds the weights of u[j] .. u[j+4].
    """
    n = x.size
    j = np.arange(2, n - 2)
    g1 = 1.0 / (x[j + 2] - x[j + 1])
    g2 = 1.0 / (x[j + 1] - x[j])
    g3 = 1.0 / (x[j] - x[j - 1])
    g4 = 1.0 / (x[j - 1] - x[j - 2])
    pre = 2.0 / (x[j + 1] - x[j - 1])
    A = 2.0 / ((x[j + 2] - x[j]) * (x[j + 1] - x[j]))
    B = 2.0 / ((x[j + 1] - x[j - 1]) * (x[j + 1] - x[j]))
    C = 2.0 / ((x[j + 1] - x[j - 1]) * (x[j] - x[j - 1]))
    D = 2.0 / ((x[j] - x[j - 2]) * (x[j] - x[j - 1]))
    c = np.empty((n - 4, 5))
    c[:, 0] = pre * D * g4
    c[:, 1] = pre * (-(B + C) * g3 - D * (g3 + g4))
    c[:, 2] = pre * (A * g2 + (B + C) * (g2 + g3) + D * g3)
    c[:, 3] = pre * (-A * (g1 + g2) - (B + C) * g2)
    c[:, 4] = pre * A * g1
    return c


def second_coeffs(x: np.ndarray) -> np.ndarray:
    """Three-point second-derivative weights for nodes 1..n-2 of ``x``."""
    hm = x[1:-1] - x[:-2]
    hp = x[2:] - x[1:-1]
    s = x[2:] - x[:-2]
    c = np.empty((x.size - 2, 3))
    c[:, 0] = 2.0 / (s * hm)
    c[:, 1] = -2.0 / s * (1.0 / hp + 1.0 / hm)
    c[:, 2] = 2.0 / (s * hp)
    return c


def first_coeffs(x: np.ndarray) -> np.ndarray:
    """Backward-difference weights (u[j-1], u[j]) for nodes 1..n-1 of ``x``."""
    h = np.diff(x)
    c = np.empty((x.size - 1, 2))
    c[:, 0] = -1.0 / h
    c[:, 1] = 1.0 / h
    return c


def fd_apply(u: np.ndarray, mesh: Mesh1D, order: int) -> np.ndarray:
    """Derivative of given order at every node, ghost-closed at the ends."""
    x = mesh.nodes
    u = np.asarray(u, dtype=float)
    if order == 1:
        xe = extend_mesh(x, 1)[: x.size + 1]  # one left ghost only
        ue = extend_odd(u, 1)[: x.size + 1]
        return first_derivative(xe, ue)
    if order == 2:
        if x.size < 3:
            raise ValueError("second derivative needs >= 3 nodes")
        xe = extend_mesh(x, 1)
        ue = extend_odd(u, 1)
        return second_derivative(xe, ue)
    if order == 4:
        if x.size < 5:
            raise ValueError("fourth derivative needs >= 5 nodes")
        xe = extend_mesh(x, 2)
        ue = extend_odd(u, 2)
        return fourth_derivative(xe, ue)
    raise ValueError(f"unsupported derivative order {order}")


class FdStencils:
    """Precomputed stencil coefficient tables for one mesh.

    Tables are built on the ghost-extended mesh so that every physical node
    has a full-width row; ``fold_*`` accessors return the rows with ghost
    columns folded back onto physical nodes assuming homogeneous Dirichlet
    values at the endpoints (odd reflection).
    """

    def __init__(self, mesh: Mesh1D):
        self.mesh = mesh
        n = mesh.n_nodes
        xe = extend_mesh(mesh.nodes, 2)
        # rows for physical nodes 0..n-1; offsets relative to the node
        self.c1 = first_coeffs(xe)[1 : n + 1]          # offsets (-1, 0)
        self.c2 = second_coeffs(xe)[1 : n + 1]         # offsets (-1, 0, 1)
        self.c4 = fourth_coeffs(xe)[: n]               # offsets (-2 .. 2)

    def apply(self, u: np.ndarray, order: int) -> np.ndarray:
        return fd_apply(u, self.mesh, order)
