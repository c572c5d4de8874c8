"""1D nonuniform meshes: construction, linear interpolation, equidistribution.

Meshes are immutable node-coordinate vectors with fixed endpoints.  Mesh
generation from a mesh density function is done by exact inversion of the
piecewise-linear cumulative density integral, which equidistributes the
density over the elements in closed form (no pseudo-time mesh equation is
needed in 1D, where the alignment condition is vacuous).
"""

from __future__ import annotations

import dataclasses

import numpy as np


class MeshError(ValueError):
    """Invalid mesh or mesh operation."""


@dataclasses.dataclass(frozen=True)
class Mesh1D:
    """Strictly increasing node coordinates on a fixed interval."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise MeshError(f"need >= 2 node coordinates, got shape {nodes.shape}")
        if not np.all(np.isfinite(nodes)):
            raise MeshError("non-finite node coordinate")
        if np.any(np.diff(nodes) <= 0.0):
            k = int(np.argmin(np.diff(nodes)))
            raise MeshError(
                f"nodes must be strictly increasing; min gap {np.diff(nodes)[k]:g} "
                f"at interval {k}"
            )
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, lo: float, hi: float, n_elements: int) -> "Mesh1D":
        return cls(np.linspace(lo, hi, n_elements + 1))

    @property
    def lo(self) -> float:
        return float(self.nodes[0])

    @property
    def hi(self) -> float:
        return float(self.nodes[-1])

    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    @property
    def n_elements(self) -> int:
        return self.nodes.size - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[:-1] + self.nodes[1:])

    def same_nodes(self, other: "Mesh1D") -> bool:
        return self.nodes.shape == other.nodes.shape and np.array_equal(
            self.nodes, other.nodes
        )


@dataclasses.dataclass(frozen=True)
class StateField:
    """One or more nodal component vectors supported on a single mesh."""

    mesh: Mesh1D
    values: np.ndarray  # (n_comp, n_nodes)

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if values.shape[1] != self.mesh.n_nodes:
            raise MeshError(
                f"component length {values.shape[1]} != node count {self.mesh.n_nodes}"
            )
        object.__setattr__(self, "values", values)

    @property
    def n_comp(self) -> int:
        return self.values.shape[0]

    def component(self, i: int) -> np.ndarray:
        return self.values[i]


def interp_array(x_from: np.ndarray, y: np.ndarray, x_to: np.ndarray) -> np.ndarray:
    """Piecewise-linear interpolation of one nodal vector onto new coordinates."""
    return np.interp(x_to, x_from, y)


def interp_linear(u: StateField, mesh_to: Mesh1D) -> StateField:
    """Interpolate every component of ``u`` onto ``mesh_to`` (piecewise linear).

    Targets must lie inside the source domain (a roundoff-size overhang at
    the endpoints is tolerated and clipped).
    """
    src = u.mesh.nodes
    tgt = mesh_to.nodes
    slack = 1e-12 * (src[-1] - src[0])
    if tgt[0] < src[0] - slack or tgt[-1] > src[-1] + slack:
        raise MeshError(
            f"target domain [{tgt[0]:g}, {tgt[-1]:g}] outside source "
            f"[{src[0]:g}, {src[-1]:g}]"
        )
    tgt = np.clip(tgt, src[0], src[-1])
    out = np.empty((u.n_comp, mesh_to.n_nodes))
    for q in range(u.n_comp):
        out[q] = np.interp(tgt, src, u.values[q])
    return StateField(mesh_to, out)


def _density_from_field(M) -> np.ndarray:
    """Nodal density sqrt(det M) of a node-located metric field."""
    if getattr(M, "location", "node") != "node":
        raise MeshError("equidistribution needs a node-located metric field")
    vals = np.asarray(M.values, dtype=float)
    if vals.shape[1] == 1:
        det = vals[:, 0, 0]
    else:
        det = np.linalg.det(vals)
    if np.any(~np.isfinite(det)) or np.any(det <= 0.0):
        raise MeshError("metric determinant must be strictly positive")
    return np.sqrt(det)


def _cumulative(x: np.ndarray, rho: np.ndarray) -> np.ndarray:
    c = np.empty_like(x)
    c[0] = 0.0
    np.cumsum(0.5 * (rho[:-1] + rho[1:]) * np.diff(x), out=c[1:])
    return c


def density_integral(
    x_src: np.ndarray, rho_src: np.ndarray, x_eval: np.ndarray
) -> np.ndarray:
    """Exact integral of the piecewise-linear density from x_src[0] to x_eval."""
    c = _cumulative(x_src, rho_src)
    k = np.clip(np.searchsorted(x_src, x_eval, side="right") - 1, 0, x_src.size - 2)
    s = x_eval - x_src[k]
    r_at = np.interp(x_eval, x_src, rho_src)
    return c[k] + 0.5 * s * (rho_src[k] + r_at)


def equidistribute(M, mesh_old: Mesh1D, n: int) -> Mesh1D:
    """Mesh with equal integrals of the density sqrt(det M) over every element.

    The density is taken piecewise linear in the node values on ``mesh_old``
    and its cumulative integral is inverted exactly (one quadratic per new
    node).  Endpoints are kept fixed.
    """
    if n < 2:
        raise MeshError(f"need at least 2 elements, got {n}")
    x = mesh_old.nodes
    rho = _density_from_field(M)
    if rho.size != x.size:
        raise MeshError("metric field does not match mesh_old")
    c = _cumulative(x, rho)
    sigma = c[-1]
    targets = sigma * np.arange(1, n) / n
    k = np.clip(np.searchsorted(c, targets, side="right") - 1, 0, x.size - 2)
    tau = targets - c[k]
    h = np.diff(x)[k]
    slope = (rho[k + 1] - rho[k]) / h
    # stable root of rho_k*s + slope*s^2/2 = tau on [0, h]
    disc = np.maximum(rho[k] ** 2 + 2.0 * slope * tau, 0.0)
    s = 2.0 * tau / (rho[k] + np.sqrt(disc))
    interior = x[k] + s
    nodes = np.concatenate(([x[0]], interior, [x[-1]]))
    return Mesh1D(nodes)


def equidistribution_residual(mesh: Mesh1D, density_mesh: Mesh1D, rho: np.ndarray) -> float:
    """Max relative deviation of per-element density mass from its mean.

    The density is piecewise linear on ``density_mesh`` (which may differ
    from ``mesh``) and is integrated exactly over the elements of ``mesh``.
    """
    c_at = density_integral(density_mesh.nodes, np.asarray(rho, float), mesh.nodes)
    masses = np.diff(c_at)
    target = c_at[-1] / mesh.n_elements
    return float(np.max(np.abs(masses - target)) / target)


@dataclasses.dataclass(frozen=True)
class MeshQuality:
    equid_residual: float
    min_width: float
    max_width: float
    energy: float
    alignment: float = 0.0  # scalar identity in 1D


def mesh_quality(mesh: Mesh1D, M) -> MeshQuality:
    """Equidistribution residual, width extremes, and energy of a mesh.

    ``M`` may be supported on a different mesh, in which case its density is
    integrated exactly (as a piecewise-linear function on its own mesh) over
    the elements of ``mesh``.
    """
    from .metric import MetricField, mesh_energy, metric_field_interp

    rho = _density_from_field(M)
    res = equidistribution_residual(mesh, M.mesh, rho)
    widths = mesh.widths
    if M.mesh.same_nodes(mesh):
        M_here = M
    else:
        M_here = metric_field_interp(M, mesh)
    assert isinstance(M_here, MetricField)
    energy = mesh_energy(mesh, M_here)
    return MeshQuality(
        equid_residual=res,
        min_width=float(widths.min()),
        max_width=float(widths.max()),
        energy=energy,
    )
