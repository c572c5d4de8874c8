"""Bistable reaction-diffusion (Nagumo) model on nonuniform meshes.

u_t = eps^2 u_xx - u(u-1)(u-a) with Dirichlet boundary values taken from the
exact traveling wave.  Time stepping is linearly implicit backward Euler with
one Newton linearization of the reaction term about the current state; the
adaptive driver wraps it in step-doubling local error control.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy.linalg import solve_banded

from .mesh1d import Mesh1D, MeshError, StateField, interp_linear
from .metric import MetricField, arclength_metric, smooth_metric
from .stencils import second_coeffs


class StepFailure(RuntimeError):
    """Time stepper could not proceed; carries step diagnostics."""


@dataclasses.dataclass(frozen=True)
class NagumoParams:
    eps2: float = 1e-2
    a: float = 0.95
    length: float = 20.0
    x_front: float | None = None  # initial front position, default length/4

    def __post_init__(self):
        if not (0.0 < self.a < 1.0):
            raise ValueError(f"threshold a must be in (0, 1), got {self.a}")
        if self.eps2 <= 0.0:
            raise ValueError("eps2 must be positive")
        if self.x_front is None:
            object.__setattr__(self, "x_front", self.length / 4.0)

    @property
    def eps(self) -> float:
        return math.sqrt(self.eps2)

    @property
    def wave_speed(self) -> float:
        # from a = 1/2 + c/(eps*sqrt(2))
        return (self.a - 0.5) * self.eps * math.sqrt(2.0)


def nagumo_exact(x, t: float, p: NagumoParams):
    """Exact traveling wave 0.5*(1 + tanh((x - c t)/(2 sqrt(2) eps)))."""
    xi = (np.asarray(x, float) - p.wave_speed * t) / (2.0 * math.sqrt(2.0) * p.eps)
    return 0.5 * (1.0 + np.tanh(xi))


def wave_profile(x, t: float, p: NagumoParams):
    """The traveling wave shifted so the front starts at x_front."""
    return nagumo_exact(np.asarray(x, float) - p.x_front, t, p)


def reaction(u: np.ndarray, a: float) -> np.ndarray:
    return u * (u - 1.0) * (u - a)


def reaction_prime(u: np.ndarray, a: float) -> np.ndarray:
    return 3.0 * u**2 - 2.0 * (1.0 + a) * u + a


def nagumo_step(
    u: StateField,
    dt: float,
    p: NagumoParams,
    t: float,
    *,
    bc: str = "exact",
    with_reaction: bool = True,
) -> StateField:
    """One linearly implicit backward-Euler step on the field's mesh.

    ``bc="exact"`` pins both endpoints to the traveling wave at t + dt;
    ``bc="zero"`` pins them to 0.  ``with_reaction=False`` drops the cubic
    term (pure heat equation), used by solver verification tests.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    x = u.mesh.nodes
    n = x.size
    un = u.component(0)
    c2 = second_coeffs(x)  # rows for interior nodes 1..n-2

    if with_reaction:
        f = reaction(un, p.a)
        fp = reaction_prime(un, p.a)
    else:
        f = np.zeros(n)
        fp = np.zeros(n)

    # tridiagonal system in LAPACK banded storage: ab[1 + i - j, j]
    ab = np.zeros((3, n))
    rhs = np.empty(n)
    i = np.arange(1, n - 1)
    ab[0, i + 1] = -dt * p.eps2 * c2[:, 2]          # superdiagonal
    ab[1, i] = 1.0 - dt * p.eps2 * c2[:, 1] + dt * fp[i]
    ab[2, i - 1] = -dt * p.eps2 * c2[:, 0]          # subdiagonal
    rhs[i] = un[i] - dt * f[i] + dt * fp[i] * un[i]

    ab[1, 0] = 1.0
    ab[1, -1] = 1.0
    if bc == "exact":
        rhs[0] = wave_profile(x[0], t + dt, p)
        rhs[-1] = wave_profile(x[-1], t + dt, p)
    elif bc == "zero":
        rhs[0] = 0.0
        rhs[-1] = 0.0
    else:
        raise ValueError(f"unknown bc {bc!r}")

    try:
        unew = solve_banded((1, 1), ab, rhs)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
        raise StepFailure(
            f"linear solve failed at t={t:g}, dt={dt:g}, n={n}"
        ) from exc
    if not np.all(np.isfinite(unew)):
        raise StepFailure(f"non-finite solution at t={t:g}, dt={dt:g}, n={n}")
    return StateField(u.mesh, unew)


def arclength_remesher(smooth_sweeps: int = 3):
    """Remesh callback: equidistribute the smoothed arc-length metric."""
    from .mesh1d import equidistribute

    def remesh(state: StateField) -> tuple[StateField, MetricField]:
        m = arclength_metric(state.component(0), state.mesh)
        m_s = smooth_metric(m, smooth_sweeps)
        new_mesh = equidistribute(m_s, state.mesh, state.mesh.n_elements)
        return interp_linear(state, new_mesh), m

    return remesh


@dataclasses.dataclass
class AdaptiveRun:
    """Result of an adaptive integration: final state and step diagnostics."""

    state: StateField
    times: np.ndarray          # accepted step end times
    steps: np.ndarray          # accepted step sizes
    n_rejected: int

    @property
    def n_steps(self) -> int:
        return self.steps.size


def nagumo_run_adaptive(
    u0: StateField,
    t_span: tuple[float, float],
    p: NagumoParams,
    tol: float,
    *,
    dt_init: float | None = None,
    dt_min: float = 1e-12,
    remesh=None,
    on_accept=None,
    safety: float = 0.9,
) -> AdaptiveRun:
    """Integrate with step-doubling error control around ``nagumo_step``.

    A trial step is accepted when the max-norm gap between one full step and
    two half steps is at most ``tol``; the next step size is scaled by
    safety*(tol/err)^(1/2) (first-order method).  ``remesh(state)`` runs
    after every accepted step and may move the state to a new mesh;
    ``on_accept(t, state, metric)`` observes accepted states.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    t0, t1 = t_span
    if t1 <= t0:
        raise ValueError("empty integration interval")
    state = u0
    t = t0
    dt = dt_init if dt_init is not None else (t1 - t0) / 100.0
    times = []
    steps = []
    n_rejected = 0
    while t < t1 - 1e-14 * (t1 - t0):
        dt = min(dt, t1 - t)
        if dt < dt_min:
            raise StepFailure(
                f"step underflow at t={t:g} (dt={dt:g} < dt_min={dt_min:g}) "
                f"after {len(steps)} accepted / {n_rejected} rejected steps"
            )
        full = nagumo_step(state, dt, p, t)
        half = nagumo_step(state, 0.5 * dt, p, t)
        two_half = nagumo_step(half, 0.5 * dt, p, t + 0.5 * dt)
        err = float(np.max(np.abs(full.values - two_half.values)))
        if err <= tol:
            state = two_half
            t += dt
            times.append(t)
            steps.append(dt)
            metric = None
            if remesh is not None:
                state, metric = remesh(state)
            if on_accept is not None:
                on_accept(t, state, metric)
        else:
            n_rejected += 1
        factor = safety * math.sqrt(tol / err) if err > 0.0 else 5.0
        dt = dt * min(5.0, max(0.2, factor))
    return AdaptiveRun(
        state=state,
        times=np.asarray(times),
        steps=np.asarray(steps),
        n_rejected=n_rejected,
    )


def initial_wave(mesh: Mesh1D, p: NagumoParams, t: float = 0.0) -> StateField:
    """Exact wave sampled on a mesh, front at x_front when t = 0."""
    return StateField(mesh, wave_profile(mesh.nodes, t, p))
