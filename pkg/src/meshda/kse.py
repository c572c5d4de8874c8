"""Coupled Kuramoto-Sivashinsky pair on a shared nonuniform mesh.

Two components with different physical domain lengths are rescaled to the
computational interval [0, 1]; derivatives pick up 1/L, 1/L^2, mu/L^4
factors.  Time stepping is linearly implicit backward Euler with the Burgers
nonlinearity split as (u u_x)_{n+1} ~ u_n (u_x)_{n+1} + u_{n+1} (u_x)_n
- u_n (u_x)_n, so each step is one banded solve for the interleaved (u, v)
unknowns.  Boundary conditions u = v = 0 and u_xx = v_xx = 0 are enforced by
Dirichlet rows plus odd-reflection ghost folding in the fourth-derivative
stencil.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy.linalg import solve_banded

from .mesh1d import Mesh1D, StateField
from .stencils import FdStencils, fd_apply


class KseSolveError(RuntimeError):
    pass


@dataclasses.dataclass(frozen=True)
class KseParams:
    l1: float = 1.5 * math.pi
    l2: float = 4.0 * math.pi
    mu1: float = 2.5e-3
    mu_min: float = 2.5e-3
    mu_max: float = 5.0e-2
    omega: float = 0.2
    c1: float = 0.1
    c2: float = 0.1
    mu2_literal: bool = False  # keep the degenerate constant-mu_min variant

    def __post_init__(self):
        if min(self.l1, self.l2, self.mu1, self.mu_min, self.mu_max) <= 0.0:
            raise ValueError("lengths and viscosities must be positive")
        if self.mu_min > self.mu_max:
            raise ValueError("mu_min must not exceed mu_max")
        if self.c1 < 0.0 or self.c2 < 0.0:
            raise ValueError("couplings must be nonnegative")


def mu2(x, t: float, p: KseParams):
    """Slow-component viscosity, largest where the moving tracker is quiet."""
    z = math.pi * (np.asarray(x, float) + p.omega * math.sin(2.0 * math.pi * t))
    spread = 0.0 if p.mu2_literal else (p.mu_max - p.mu_min)
    return p.mu_min + spread * (1.0 - np.abs(np.sin(z))) ** 2


def _fold_fourth(c4: np.ndarray) -> np.ndarray:
    """Fold ghost columns of the 5-point stencil onto interior unknowns.

    Ghost values are the odd reflections -u_1 and -u_{n-2} (the boundary
    values themselves are pinned to zero by Dirichlet rows).
    """
    out = c4.copy()
    out[1, 2] -= out[1, 0]
    out[1, 0] = 0.0
    out[-2, 2] -= out[-2, 4]
    out[-2, 4] = 0.0
    return out


class KseStepper:
    """Banded backward-Euler stepper bound to one mesh."""

    def __init__(self, mesh: Mesh1D, p: KseParams):
        self.mesh = mesh
        self.p = p
        st = FdStencils(mesh)
        self.c1t = st.c1  # offsets (-1, 0)
        self.c2t = st.c2  # offsets (-1, 0, 1)
        self.c4t = _fold_fourth(st.c4)  # offsets (-2..2)

    def step(self, state: StateField, dt: float, t: float) -> StateField:
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        if state.n_comp != 2:
            raise ValueError("coupled stepper expects exactly two components")
        p = self.p
        x = self.mesh.nodes
        n = x.size
        un, vn = state.values
        h = np.diff(x)
        uxn = np.concatenate(([0.0], np.diff(un) / h))
        vxn = np.concatenate(([0.0], np.diff(vn) / h))
        mu2_vals = mu2(x, t + dt, p)

        ab = np.zeros((9, 2 * n))
        rhs = np.empty(2 * n)
        jj = np.arange(1, n - 1)

        for comp, (w, wx, length, mu, coup) in enumerate(
            (
                (un, uxn, p.l1, np.full(n, p.mu1), p.c1),
                (vn, vxn, p.l2, mu2_vals, p.c2),
            )
        ):
            rows = 2 * jj + comp
            # fourth derivative, offsets -2..2
            for k in range(5):
                off = k - 2
                cols = rows + 2 * off
                valid = (jj + off >= 0) & (jj + off <= n - 1)
                ab[4 - 2 * off, cols[valid]] += (
                    dt * mu[jj[valid]] / length**4 * self.c4t[jj[valid], k]
                )
            # second derivative, offsets -1..1
            for k in range(3):
                off = k - 1
                cols = rows + 2 * off
                ab[4 - 2 * off, cols] += dt / length**2 * self.c2t[jj, k]
            # implicit advection u_n * (u_x)_{n+1}, offsets -1, 0
            for k in range(2):
                off = k - 1
                cols = rows + 2 * off
                ab[4 - 2 * off, cols] += dt / length * w[jj] * self.c1t[jj, k]
            # identity, lagged advection diagonal, coupling diagonal
            ab[4, rows] += 1.0 + dt / length * wx[jj] + dt * coup
            # coupling to the other component at the same node
            other = rows + (1 if comp == 0 else -1)
            ab[4 - (1 if comp == 0 else -1), other] += -dt * coup
            rhs[rows] = w[jj] + dt / length * w[jj] * wx[jj]

        for col in (0, 1, 2 * n - 2, 2 * n - 1):
            ab[4, col] = 1.0
            rhs[col] = 0.0

        try:
            z = solve_banded((4, 4), ab, rhs)
        except np.linalg.LinAlgError as exc:
            raise KseSolveError(f"banded solve failed at t={t:g}, dt={dt:g}") from exc
        if not np.all(np.isfinite(z)):
            raise KseSolveError(f"non-finite update at t={t:g}, dt={dt:g}")
        z[[0, 1, -2, -1]] = 0.0  # keep the pinned boundary values exact
        return StateField(self.mesh, np.stack((z[0::2], z[1::2])))


def kse_step(state: StateField, dt: float, p: KseParams, t: float) -> StateField:
    """One backward-Euler step (stencils rebuilt; use KseStepper in loops)."""
    return KseStepper(state.mesh, p).step(state, dt, t)


def kse_rhs(state: StateField, t: float, p: KseParams) -> np.ndarray:
    """Spatial right-hand side (du/dt, dv/dt) with ghost-closed stencils."""
    mesh = state.mesh
    un, vn = state.values
    out = np.empty_like(state.values)
    for comp, (w, other, length, mu, coup) in enumerate(
        (
            (un, vn, p.l1, np.full(mesh.n_nodes, p.mu1), p.c1),
            (vn, un, p.l2, mu2(mesh.nodes, t, p), p.c2),
        )
    ):
        wx = fd_apply(w, mesh, 1)
        wxx = fd_apply(w, mesh, 2)
        wxxxx = fd_apply(w, mesh, 4)
        out[comp] = -(
            w * wx / length
            + wxx / length**2
            + mu * wxxxx / length**4
            + coup * (w - other)
        )
    return out


def default_initial_state(mesh: Mesh1D) -> StateField:
    """Deterministic multi-mode seed compatible with the zero boundary values."""
    x = mesh.nodes
    u0 = 0.4 * np.sin(2 * np.pi * x) + 0.12 * np.sin(6 * np.pi * x) + 0.07 * np.sin(
        14 * np.pi * x
    )
    v0 = 0.4 * np.sin(2 * np.pi * x) - 0.10 * np.sin(4 * np.pi * x) + 0.05 * np.sin(
        10 * np.pi * x
    )
    return StateField(mesh, np.stack((u0, v0)))


def spin_up_truth(
    mesh: Mesh1D, p: KseParams, spin_time: float, dt: float
) -> StateField:
    """Integrate the deterministic seed onto the attractor (fixed mesh)."""
    stepper = KseStepper(mesh, p)
    state = default_initial_state(mesh)
    t = -spin_time
    n_steps = int(round(spin_time / dt))
    for _ in range(n_steps):
        state = stepper.step(state, dt, t)
        t += dt
    return state
