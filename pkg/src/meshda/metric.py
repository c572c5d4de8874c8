"""SPD mesh density functions (metric tensors): intersection and constructors.

The intersection of two SPD matrices is computed by simultaneous
diagonalization: with P A P^T = I and P B P^T = diag(b), the combination
P^{-1} diag(max(1, b_i)) P^{-T} dominates both operands in the Loewner order,
so the mesh it generates inherits the finer resolution of both.  P is built
from the Cholesky factor of A composed with the eigenbasis of the congruence
of B, which avoids a generalized eigensolver.

Field constructors (curvature-based, arc-length, observation-location, and
goal-oriented for kernel-averaged observations) all return per-node or
per-element fields of d x d SPD matrices; in 1D these are positive scalars.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .mesh1d import Mesh1D, interp_array
from .stencils import second_derivative

SPD_REL_TOL = 1e-12


class NonSpdError(ValueError):
    """Input matrix is not symmetric positive definite within tolerance."""


def check_spd(a: np.ndarray, rel_tol: float = SPD_REL_TOL) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NonSpdError(f"expected a square matrix, got shape {a.shape}")
    scale = np.abs(a).max()
    if not np.isfinite(scale):
        raise NonSpdError("non-finite entries")
    if np.abs(a - a.T).max() > rel_tol * max(scale, 1.0):
        raise NonSpdError("matrix is not symmetric to within tolerance")
    eigmin = float(np.linalg.eigvalsh(a)[0])
    if eigmin <= rel_tol * np.trace(a):
        raise NonSpdError(f"matrix is numerically singular (eigmin={eigmin:g})")
    return a


def spd_intersect(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Loewner-dominating combination of two SPD matrices of equal size."""
    a = check_spd(a)
    b = check_spd(b)
    if a.shape != b.shape:
        raise NonSpdError(f"dimension mismatch {a.shape} vs {b.shape}")
    if a.shape[0] == 1:
        return np.array([[max(a[0, 0], b[0, 0])]])
    L = np.linalg.cholesky(a)
    Linv = np.linalg.inv(L)
    c = Linv @ b @ Linv.T
    lam, q = np.linalg.eigh(0.5 * (c + c.T))
    pinv = L @ q  # inverse of P = q.T @ Linv
    m = (pinv * np.maximum(1.0, lam)) @ pinv.T
    return 0.5 * (m + m.T)


@dataclasses.dataclass(frozen=True)
class MetricField:
    """One SPD matrix per node (or per element) of a mesh."""

    mesh: Mesh1D
    values: np.ndarray  # (n, d, d)
    location: str = "node"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None, None]
        if vals.ndim != 3 or vals.shape[1] != vals.shape[2]:
            raise NonSpdError(f"expected (n, d, d) values, got {vals.shape}")
        if self.location not in ("node", "element"):
            raise ValueError(f"unknown location tag {self.location!r}")
        n_expect = self.mesh.n_nodes if self.location == "node" else self.mesh.n_elements
        if vals.shape[0] != n_expect:
            raise NonSpdError(
                f"{vals.shape[0]} values for {n_expect} {self.location}s"
            )
        vals = np.ascontiguousarray(vals)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def dets(self) -> np.ndarray:
        if self.dim == 1:
            return self.values[:, 0, 0].copy()
        return np.linalg.det(self.values)

    def validate_spd(self) -> None:
        for v in self.values:
            check_spd(v)


def identity_field(mesh: Mesh1D, dim: int = 1, location: str = "node") -> MetricField:
    n = mesh.n_nodes if location == "node" else mesh.n_elements
    vals = np.broadcast_to(np.eye(dim), (n, dim, dim)).copy()
    return MetricField(mesh, vals, location)


def scalar_field(mesh: Mesh1D, m: np.ndarray, location: str = "node") -> MetricField:
    return MetricField(mesh, np.asarray(m, float)[:, None, None], location)


def element_to_node(M: MetricField) -> MetricField:
    """Adjacent-element mean of an element field, copied at the boundary."""
    if M.location == "node":
        return M
    v = M.values
    nodal = np.empty((v.shape[0] + 1,) + v.shape[1:])
    nodal[0] = v[0]
    nodal[-1] = v[-1]
    nodal[1:-1] = 0.5 * (v[:-1] + v[1:])
    return MetricField(M.mesh, nodal, "node")


def metric_field_interp(M: MetricField, mesh_to: Mesh1D) -> MetricField:
    """Entrywise linear interpolation of a node field onto another mesh."""
    M = element_to_node(M)
    if M.mesh.same_nodes(mesh_to):
        return MetricField(mesh_to, M.values, "node")
    d = M.dim
    out = np.empty((mesh_to.n_nodes, d, d))
    for i in range(d):
        for j in range(d):
            out[:, i, j] = interp_array(M.mesh.nodes, M.values[:, i, j], mesh_to.nodes)
    return MetricField(mesh_to, out, "node")


def metric_intersect_field(fields: list[MetricField]) -> MetricField:
    """Pointwise left-to-right fold of spd_intersect over matching fields."""
    if not fields:
        raise ValueError("no fields to intersect")
    first = fields[0]
    for f in fields[1:]:
        if not f.mesh.same_nodes(first.mesh):
            raise ValueError("fields must share one mesh")
        if f.location != first.location or f.dim != first.dim:
            raise ValueError("fields must share location tag and dimension")
    if len(fields) == 1:
        return first
    if first.dim == 1:
        vals = fields[0].values
        for f in fields[1:]:
            vals = np.maximum(vals, f.values)
        return MetricField(first.mesh, vals, first.location)
    out = fields[0].values.copy()
    for f in fields[1:]:
        for k in range(out.shape[0]):
            out[k] = spd_intersect(out[k], f.values[k])
    return MetricField(first.mesh, out, first.location)


def recovered_hessian(mesh: Mesh1D, u: np.ndarray) -> np.ndarray:
    """Nodal second differences, one-sided copy at the two boundary nodes."""
    x = mesh.nodes
    if x.size < 3:
        raise ValueError("Hessian recovery needs >= 3 nodes")
    h = np.empty(x.size)
    h[1:-1] = second_derivative(x, np.asarray(u, float))
    h[0] = h[1]
    h[-1] = h[-2]
    return h


def hessian_metric(u, mesh: Mesh1D, alpha_h: float = 1.0) -> MetricField:
    """Curvature-based node metric m = (1 + |u_xx|/alpha_h)^(4/5) (1D).

    Optimal-scaling exponent -1/(d+4) applied to det(I + |H|/alpha_h) times
    the matrix itself; in 1D this collapses to the scalar power above.
    """
    if alpha_h <= 0.0:
        raise ValueError("alpha_h must be positive")
    vals = u.component(0) if hasattr(u, "component") else np.asarray(u, float)
    habs = np.abs(recovered_hessian(mesh, vals))
    m = (1.0 + habs / alpha_h) ** 0.8
    return scalar_field(mesh, m)


def arclength_metric(u, mesh: Mesh1D) -> MetricField:
    """Arc-length node metric m = sqrt(1 + u_x^2), slopes averaged to nodes."""
    vals = u.component(0) if hasattr(u, "component") else np.asarray(u, float)
    slopes = np.diff(vals) / mesh.widths
    ux = np.empty(mesh.n_nodes)
    ux[0] = slopes[0]
    ux[-1] = slopes[-1]
    ux[1:-1] = 0.5 * (slopes[:-1] + slopes[1:])
    return scalar_field(mesh, np.sqrt(1.0 + ux**2))


def adhoc_obs_metric(
    obs_locs: np.ndarray, mesh: Mesh1D, sigma: float, ens_metric: MetricField
) -> MetricField:
    """Observation-location node metric with bump height tied to the ensemble.

    m(x) = 1 + sum_j chi(|x - x_j|), chi(w) = 1/(exp(w^2/sigma^2) - 1 + 2/D)
    with D the max over elements of sqrt(det) of the ensemble metric.
    """
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    locs = np.asarray(obs_locs, float).ravel()
    if locs.size == 0:
        return identity_field(mesh)
    ens_nodal = element_to_node(ens_metric)
    dets = ens_nodal.dets()
    elem_dets = 0.5 * (dets[:-1] + dets[1:])
    dmax = float(np.sqrt(elem_dets.max()))
    x = mesh.nodes
    w = np.abs(x[:, None] - locs[None, :])
    # clip the exponent: far observations contribute exactly 0
    expo = np.minimum((w / sigma) ** 2, 700.0)
    chi = 1.0 / (np.expm1(expo) + 2.0 / dmax)
    return scalar_field(mesh, 1.0 + chi.sum(axis=1))


def nonlocal_obs_metric(
    u, mesh: Mesh1D, obs_locs: np.ndarray, kernel, alpha_h: float = 1.0
) -> MetricField:
    """Goal-oriented element metric for kernel-averaged observations.

    A_K = I + |H_K|/alpha_h * sum_i |G(x_i - x_K)|, M_K = det(A_K)^(-1/(d+2)) A_K,
    with x_K the element midpoint; in 1D M_K = A_K^(2/3).
    """
    if alpha_h <= 0.0:
        raise ValueError("alpha_h must be positive")
    vals = u.component(0) if hasattr(u, "component") else np.asarray(u, float)
    h_node = np.abs(recovered_hessian(mesh, vals))
    h_elem = 0.5 * (h_node[:-1] + h_node[1:])
    xk = mesh.midpoints
    locs = np.asarray(obs_locs, float).ravel()
    if locs.size == 0:
        gsum = np.zeros(xk.size)
    else:
        gsum = np.abs(kernel(xk[:, None] - locs[None, :])).sum(axis=1)
    a = 1.0 + h_elem / alpha_h * gsum
    return scalar_field(mesh, a ** (2.0 / 3.0), location="element")


def smooth_metric(M: MetricField, sweeps: int = 3) -> MetricField:
    """Entrywise 1/4-1/2-1/4 neighbor averaging; boundary values copied.

    Each sweep forms convex combinations of SPD matrices, so SPD-ness and the
    field's eigenvalue range are preserved.
    """
    if sweeps < 0:
        raise ValueError("sweeps must be >= 0")
    v = M.values.copy()
    for _ in range(sweeps):
        out = v.copy()
        out[1:-1] = 0.25 * v[:-2] + 0.5 * v[1:-1] + 0.25 * v[2:]
        v = out
    return MetricField(M.mesh, v, M.location)


def mesh_energy(mesh: Mesh1D, M: MetricField) -> float:
    """Equidistribution/alignment energy of a mesh under a metric (1D).

    Reference elements have length 1/N; element metrics are the averages of
    the nodal values.  Diagnostic only: the mesh generator does not descend
    on this functional, it equidistributes directly.
    """
    if M.dim != 1:
        raise ValueError("mesh energy is a 1D diagnostic (d = 1 fields only)")
    M = element_to_node(M)
    if not M.mesh.same_nodes(mesh):
        M = metric_field_interp(M, mesh)
    dets = M.dets()
    mk = 0.5 * (dets[:-1] + dets[1:])  # d=1: element-average metric value
    widths = mesh.widths
    n = mesh.n_elements
    fk = widths * n  # Jacobian of the map from a reference element of size 1/N
    sqrt_mk = np.sqrt(mk)
    term1 = np.sum(widths * sqrt_mk * (1.0 / (mk * fk**2)) ** 0.75)
    term2 = np.sum(widths * sqrt_mk * (fk * sqrt_mk) ** -1.5)
    return float((term1 + term2) / 3.0)
