"""Observation operators and synthetic observation generation.

Pointwise observations interpolate the state linearly at the requested
locations (which need not be mesh nodes).  Nonlocal observations are kernel
averages: a Gaussian kernel integrated against the state by the midpoint rule
over the elements whose midpoints fall inside a support ball around each
observer; the kernel keeps its global normalization (no renormalization after
truncation).

Multi-component systems carry one location set per component and the
observation vector is the component-major concatenation.
"""

from __future__ import annotations

import dataclasses
import math
import warnings

import numpy as np

from .mesh1d import Mesh1D, StateField


@dataclasses.dataclass(frozen=True)
class GaussKernel:
    """Normalized Gaussian kernel of width delta (d = 1)."""

    delta: float
    dim: int = 1

    def __post_init__(self):
        if self.delta <= 0.0:
            raise ValueError("kernel width must be positive")

    def __call__(self, r):
        r = np.asarray(r, float)
        norm = (math.sqrt(2.0 * math.pi) * self.delta) ** self.dim
        return np.exp(-(r**2) / (2.0 * self.delta**2)) / norm


def moving_locations(
    t: float, base: np.ndarray, amplitude: float, omega: float
) -> np.ndarray:
    """Locations base + amplitude*sin(omega*pi*t), rigid in-phase motion."""
    return np.asarray(base, float) + amplitude * math.sin(omega * math.pi * t)


def obs_pointwise(u: StateField, locs: np.ndarray, component: int = 0) -> np.ndarray:
    """Linear interpolation of one component at the observation locations."""
    locs = np.asarray(locs, float)
    x = u.mesh.nodes
    if locs.size and (locs.min() < x[0] - 1e-12 or locs.max() > x[-1] + 1e-12):
        raise ValueError(
            f"observation location outside domain [{x[0]:g}, {x[-1]:g}]"
        )
    return np.interp(np.clip(locs, x[0], x[-1]), x, u.values[component])


def obs_nonlocal(
    u: StateField,
    locs: np.ndarray,
    kernel: GaussKernel,
    r_obs: float,
    component: int = 0,
) -> np.ndarray:
    """Kernel averages over elements with midpoints within r_obs of each observer."""
    if r_obs <= 0.0:
        raise ValueError("support radius must be positive")
    locs = np.asarray(locs, float)
    mid = u.mesh.midpoints
    widths = u.mesh.widths
    vals = u.values[component]
    elem_avg = 0.5 * (vals[:-1] + vals[1:])
    weights = widths * elem_avg
    out = np.empty(locs.size)
    lo = np.searchsorted(mid, locs - r_obs, side="left")
    hi = np.searchsorted(mid, locs + r_obs, side="right")
    for i, xhat in enumerate(locs):
        sl = slice(lo[i], hi[i])
        if lo[i] >= hi[i]:
            warnings.warn(
                f"observer at {xhat:g} has empty support (r_obs={r_obs:g})",
                stacklevel=2,
            )
            out[i] = 0.0
            continue
        out[i] = np.dot(kernel(xhat - mid[sl]), weights[sl])
    return out


@dataclasses.dataclass
class ObservationSet:
    """Observation layout, operator kind, error variances, and (once
    synthesized) values at a specific time."""

    kind: str  # "pointwise" | "nonlocal"
    base_locations: tuple[np.ndarray, ...]  # per component, each sorted
    r_var: float  # diagonal observation-error variance
    domain: tuple[float, float] = (0.0, 1.0)
    amplitude: float = 0.0
    omega: float = 0.0
    delta: float = 1e-3
    r_obs: float = 2e-2
    time: float = 0.0
    values: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("pointwise", "nonlocal"):
            raise ValueError(f"unknown observation kind {self.kind!r}")
        if self.r_var <= 0.0:
            raise ValueError("observation error variance must be positive")
        locs = tuple(np.sort(np.asarray(a, float)) for a in self.base_locations)
        object.__setattr__(self, "base_locations", locs)
        lo, hi = self.domain
        for a in locs:
            if a.size == 0:
                continue
            if a.min() - abs(self.amplitude) < lo - 1e-12 or a.max() + abs(
                self.amplitude
            ) > hi + 1e-12:
                raise ValueError(
                    "observation excursion leaves the domain "
                    f"[{lo:g}, {hi:g}] (amplitude {self.amplitude:g})"
                )

    @property
    def n_comp(self) -> int:
        return len(self.base_locations)

    @property
    def n_obs(self) -> int:
        return sum(a.size for a in self.base_locations)

    def locations_at(self, t: float) -> tuple[np.ndarray, ...]:
        if self.amplitude == 0.0:
            return self.base_locations
        return tuple(
            moving_locations(t, a, self.amplitude, self.omega)
            for a in self.base_locations
        )

    def kernel(self) -> GaussKernel:
        return GaussKernel(self.delta)

    def r_diag(self) -> np.ndarray:
        return np.full(self.n_obs, self.r_var)


def apply_operator(obs: ObservationSet, state: StateField, t: float) -> np.ndarray:
    """Component-major concatenated observation of a (multi-component) state."""
    if state.n_comp != obs.n_comp:
        raise ValueError(
            f"state has {state.n_comp} components, observations {obs.n_comp}"
        )
    locs = obs.locations_at(t)
    parts = []
    for q in range(obs.n_comp):
        if obs.kind == "pointwise":
            parts.append(obs_pointwise(state, locs[q], component=q))
        else:
            parts.append(
                obs_nonlocal(state, locs[q], obs.kernel(), obs.r_obs, component=q)
            )
    return np.concatenate(parts)


def synthesize_observations(
    truth: StateField, obs: ObservationSet, rng: np.random.Generator, t: float
) -> ObservationSet:
    """Apply the operator to the truth and add independent N(0, R) noise."""
    clean = apply_operator(obs, truth, t)
    noisy = clean + math.sqrt(obs.r_var) * rng.standard_normal(clean.size)
    return dataclasses.replace(obs, time=t, values=noisy)


def uniform_interior_locations(n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """n locations uniformly spaced strictly inside (lo, hi), cell midpoints."""
    h = (hi - lo) / n
    return lo + h * (np.arange(n) + 0.5)
