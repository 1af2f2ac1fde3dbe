"""Exterior Stokes resistance of a rigid body by regularized-Stokeslet collocation.

The six rigid-mode exterior problems (unit translations and unit rotations
about a reference point) are discretised with a first-kind single-layer
representation: one blob-regularized Stokeslet per panel, collocated at the
panel centroids. Forces and torques follow from the panel densities.

Conventions
-----------
* ``K`` force per translational velocity, ``C`` force per angular velocity,
  ``S`` torque per translational velocity, ``Theta`` torque per angular
  velocity. With this naming the steady force/torque on a body moving with
  (gamma, omega) is ``K gamma + C omega`` and ``S gamma + Theta omega``
  (``S = C^T`` for an exact solve).
* Signs are chosen so that the drag tensor of a sphere is ``+6 pi nu a``:
  the tensors give the load the body exerts on the liquid.
* All tensors carry the kinematic viscosity ``nu`` as a factor.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack, lu_factor, lu_solve

from .errors import (BemSolveError, ConvergenceWarning, IllConditionedWarning,
                     ResistanceDefectError, ValidationError)
from .mesh import TriMesh, ellipsoid, icosphere, mass_properties

DEFAULT_BLOB_COEFF = 0.35
DEFAULT_MAX_PANELS = 20_000
CONDITION_WARN = 1e8
DEFAULT_SYM_TOL = 1e-6
RECIPROCITY_TOL = 1e-2
_CHUNK = 256


def cross_matrix(c) -> np.ndarray:
    """Matrix ``[c]x`` with ``[c]x @ v == cross(c, v)``."""
    c = np.asarray(c, dtype=float)
    return np.array([[0.0, -c[2], c[1]],
                     [c[2], 0.0, -c[0]],
                     [-c[1], c[0], 0.0]])


# --------------------------------------------------------------------------
# resistance set

@dataclass(frozen=True, eq=False)
class ResistanceSet:
    K: np.ndarray
    C: np.ndarray
    S: np.ndarray
    Theta: np.ndarray
    reference_point: np.ndarray
    viscosity: float
    mesh_hash: str = ""
    panel_count: int = 0
    length_scale: float = 1.0

    def __post_init__(self):
        for name in ("K", "C", "S", "Theta"):
            a = np.array(getattr(self, name), dtype=float)
            if a.shape != (3, 3):
                raise ValidationError(f"{name} must be 3x3, got shape {a.shape}")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        ref = np.array(self.reference_point, dtype=float)
        ref.setflags(write=False)
        object.__setattr__(self, "reference_point", ref)
        if not self.viscosity > 0:
            raise ValidationError(f"viscosity must be positive, got {self.viscosity!r}")

    @property
    def grand(self) -> np.ndarray:
        """6x6 grand resistance matrix [[K, C], [S, Theta]]."""
        return np.block([[self.K, self.C], [self.S, self.Theta]])

    def defects(self) -> dict:
        """Measured departures from the structural invariants."""
        fro = np.linalg.norm
        a = self.length_scale
        grand = self.grand
        sym = 0.5 * (grand + grand.T)
        schur_k = self.K - self.C @ np.linalg.solve(self.Theta, self.C.T)
        schur_t = self.Theta - self.C.T @ np.linalg.solve(self.K, self.C)
        return {
            "K_asymmetry": float(fro(self.K - self.K.T) / fro(self.K)),
            "Theta_asymmetry": float(fro(self.Theta - self.Theta.T) / fro(self.Theta)),
            "reciprocity": float(fro(self.S - self.C.T) / max(fro(self.S), 1.0)),
            "reciprocity_scaled": float(fro(self.S - self.C.T)
                                        / max(fro(self.K) * a, fro(self.Theta) / a)),
            "min_grand_eigenvalue": float(np.linalg.eigvalsh(sym).min()),
            "schur_K_condition": float(np.linalg.cond(schur_k)),
            "schur_Theta_condition": float(np.linalg.cond(schur_t)),
        }

    def check(self, sym_tol: float = DEFAULT_SYM_TOL) -> dict:
        """Raise ``ResistanceDefectError`` if an invariant is violated."""
        d = self.defects()
        for key in ("K_asymmetry", "Theta_asymmetry", "reciprocity"):
            if not d[key] <= sym_tol:
                raise ResistanceDefectError(f"{key} = {d[key]:.3e} exceeds {sym_tol:.1e}", defect=d[key])
        if not d["reciprocity_scaled"] <= RECIPROCITY_TOL:
            raise ResistanceDefectError(
                f"scaled reciprocity defect {d['reciprocity_scaled']:.3e}", defect=d["reciprocity_scaled"])
        if not d["min_grand_eigenvalue"] > 0:
            raise ResistanceDefectError(
                f"grand resistance matrix not positive definite (min eigenvalue "
                f"{d['min_grand_eigenvalue']:.3e})", defect=d["min_grand_eigenvalue"])
        for key in ("schur_K_condition", "schur_Theta_condition"):
            if not np.isfinite(d[key]) or d[key] > 1e12:
                raise ResistanceDefectError(f"{key} = {d[key]:.3e}: Schur complement singular", defect=d[key])
        return d

    def rotated(self, Q) -> "ResistanceSet":
        """Same body rotated by the orthogonal matrix ``Q``."""
        Q = np.asarray(Q, dtype=float)
        return ResistanceSet(Q @ self.K @ Q.T, Q @ self.C @ Q.T, Q @ self.S @ Q.T,
                             Q @ self.Theta @ Q.T, Q @ self.reference_point, self.viscosity,
                             self.mesh_hash, self.panel_count, self.length_scale)

    def to_dict(self) -> dict:
        return {
            "k": [float(x) for x in self.K.reshape(-1)],
            "c": [float(x) for x in self.C.reshape(-1)],
            "s": [float(x) for x in self.S.reshape(-1)],
            "theta": [float(x) for x in self.Theta.reshape(-1)],
            "reference_point": [float(x) for x in self.reference_point],
            "viscosity": float(self.viscosity),
            "mesh_hash": self.mesh_hash,
            "panel_count": int(self.panel_count),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResistanceSet":
        def m(key):
            values = d[key]
            if len(values) != 9:
                raise ValidationError(f"{key!r} must have 9 entries")
            return np.asarray(values, dtype=float).reshape(3, 3)

        return cls(m("k"), m("c"), m("s"), m("theta"), d["reference_point"], d["viscosity"],
                   d.get("mesh_hash", ""), d.get("panel_count", 0))


def transport_tensors(R: ResistanceSet, new_reference) -> ResistanceSet:
    """Refer torques and rotations to ``new_reference`` instead of ``R.reference_point``.

    With ``c = old - new``, a rotation about the new point is the same
    rotation about the old point plus the translation ``omega x c``, and the
    torque about the new point picks up ``c x force``.
    """
    new = np.asarray(new_reference, dtype=float)
    X = cross_matrix(R.reference_point - new)
    K = R.K
    C = R.C - K @ X
    S = R.S + X @ K
    Theta = R.Theta - R.S @ X + X @ R.C - X @ K @ X
    return ResistanceSet(K, C, S, Theta, new, R.viscosity, R.mesh_hash, R.panel_count, R.length_scale)


# --------------------------------------------------------------------------
# kernel and assembly

def regularized_stokeslet(r, eps) -> np.ndarray:
    """Blob-regularized Oseen tensor without the 1/(8 pi nu) factor.

    ``G_ij = ((|r|^2 + 2 eps^2) delta_ij + r_i r_j) / (|r|^2 + eps^2)^(3/2)``,
    finite at ``r = 0`` and equal to ``delta_ij/|r| + r_i r_j/|r|^3`` far away.
    """
    r = np.asarray(r, dtype=float)
    eps2 = np.asarray(eps, dtype=float) ** 2
    r2 = np.einsum("...i,...i->...", r, r)
    inv = (r2 + eps2) ** -1.5
    eye = np.eye(3)
    return (((r2 + 2.0 * eps2) * inv)[..., None, None] * eye
            + r[..., :, None] * r[..., None, :] * inv[..., None, None])


def blob_sizes(mesh: TriMesh, blob_coeff: float = DEFAULT_BLOB_COEFF) -> np.ndarray:
    return blob_coeff * np.sqrt(mesh.areas)


def assemble(mesh: TriMesh, viscosity: float, blob_coeff: float = DEFAULT_BLOB_COEFF) -> np.ndarray:
    """Dense ``3N x 3N`` single-layer collocation matrix (Fortran order).

    Block ``(p, q)`` is ``G_eps(x_p - x_q) * area_q / (8 pi nu)`` with the
    pair blob ``eps_pq^2 = (eps_p^2 + eps_q^2) / 2`` and
    ``eps_q = blob_coeff * sqrt(area_q)``.
    """
    if not viscosity > 0:
        raise ValidationError(f"viscosity must be positive, got {viscosity!r}")
    x = mesh.centroids
    area = mesh.areas
    e2 = blob_sizes(mesh, blob_coeff) ** 2
    n = len(x)
    A = np.empty((3 * n, 3 * n), order="F")
    # A.T is C-ordered, so B[q, j, p, i] aliases A[3p+i, 3q+j]
    B = A.T.reshape(n, 3, n, 3)
    scale = area / (8.0 * math.pi * viscosity)
    for q0 in range(0, n, _CHUNK):
        q1 = min(n, q0 + _CHUNK)
        d = x[None, :, :] - x[q0:q1, None, :]
        r2 = np.einsum("qpk,qpk->qp", d, d)
        E2 = 0.5 * (e2[q0:q1, None] + e2[None, :])
        inv = (r2 + E2) ** -1.5 * scale[q0:q1, None]
        diag = (r2 + 2.0 * E2) * inv
        for i in range(3):
            for j in range(i, 3):
                block = d[..., i] * d[..., j] * inv
                if i == j:
                    block += diag
                B[q0:q1, j, :, i] = block
                if i != j:
                    B[q0:q1, i, :, j] = block
    return A


def apply_single_layer(mesh: TriMesh, density, viscosity: float,
                       blob_coeff: float = DEFAULT_BLOB_COEFF) -> np.ndarray:
    """Collocation-point velocities of traction densities ``(..., N, 3)``,
    evaluated matrix-free in row chunks."""
    f = np.asarray(density, dtype=float)
    lead = f.shape[:-2]
    f = f.reshape((-1,) + f.shape[-2:])
    x = mesh.centroids
    e2 = blob_sizes(mesh, blob_coeff) ** 2
    g = f * (mesh.areas / (8.0 * math.pi * viscosity))[None, :, None]
    out = np.empty_like(f)
    n = len(x)
    for p0 in range(0, n, _CHUNK):
        p1 = min(n, p0 + _CHUNK)
        d = x[p0:p1, None, :] - x[None, :, :]
        r2 = np.einsum("pqk,pqk->pq", d, d)
        E2 = 0.5 * (e2[p0:p1, None] + e2[None, :])
        inv = (r2 + E2) ** -1.5
        iso = (r2 + 2.0 * E2) * inv
        dg = np.einsum("pqk,mqk->mpq", d, g)
        out[:, p0:p1] = (np.einsum("pq,mqk->mpk", iso, g)
                         + np.einsum("pq,mpq,pqk->mpk", inv, dg, d))
    return out.reshape(lead + out.shape[-2:])


def rigid_mode_velocities(mesh: TriMesh, reference_point) -> np.ndarray:
    """(6, N, 3) collocation velocities of the unit modes e_i and e_i x (x - ref)."""
    rel = mesh.centroids - np.asarray(reference_point, dtype=float)
    n = len(rel)
    U = np.zeros((6, n, 3))
    for i in range(3):
        e = np.zeros(3)
        e[i] = 1.0
        U[i, :, i] = 1.0
        U[3 + i] = np.cross(e, rel)
    return U


# --------------------------------------------------------------------------
# solve

@dataclass(frozen=True, eq=False)
class BemSolution:
    """Traction densities of the six rigid modes on one mesh.

    ``density[m]`` is the (N, 3) density of mode ``m``: translations along
    e_1..e_3 for m = 0..2, rotations about e_1..e_3 through
    ``reference_point`` for m = 3..5.
    """

    mesh: TriMesh
    viscosity: float
    blob_coeff: float
    reference_point: np.ndarray
    density: np.ndarray
    epsilon: np.ndarray
    condition: float
    residual: float = field(default=float("nan"))


def _one_norm(A: np.ndarray) -> float:
    best = 0.0
    for j0 in range(0, A.shape[1], 4 * _CHUNK):
        best = max(best, float(np.abs(A[:, j0:j0 + 4 * _CHUNK]).sum(axis=0).max()))
    return best


def solve_rigid_modes(mesh: TriMesh, viscosity: float, reference_point=None,
                      blob_coeff: float = DEFAULT_BLOB_COEFF,
                      max_panels: int = DEFAULT_MAX_PANELS,
                      check_residual: bool = True) -> BemSolution:
    """Solve the six rigid-mode exterior problems by dense LU.

    ``reference_point`` defaults to the volume centroid of ``mesh``.
    Emits ``IllConditionedWarning`` above a 1-norm condition estimate of
    1e8; raises ``BemSolveError`` if the system is numerically singular.
    """
    if mesh.n_panels > max_panels:
        raise ValidationError(f"{mesh.n_panels} panels exceeds max_panels={max_panels}")
    if reference_point is None:
        reference_point = mass_properties(mesh)[1]
    reference_point = np.asarray(reference_point, dtype=float)
    n = mesh.n_panels
    A = assemble(mesh, viscosity, blob_coeff)
    anorm = _one_norm(A)
    lu, piv = lu_factor(A, overwrite_a=True, check_finite=False)
    del A
    if not np.all(np.isfinite(np.diagonal(lu))) or np.any(np.diagonal(lu) == 0.0):
        raise BemSolveError("collocation matrix is singular", condition=float("inf"))
    rcond, info = lapack.dgecon(lu, anorm, norm="1")
    condition = float("inf") if rcond == 0 else 1.0 / rcond
    if info != 0 or not np.isfinite(condition) or condition > 1.0 / np.finfo(float).eps:
        raise BemSolveError("collocation matrix is numerically singular", condition=condition)
    if condition > CONDITION_WARN:
        warnings.warn(f"collocation matrix condition estimate {condition:.3e} exceeds "
                      f"{CONDITION_WARN:.0e}", IllConditionedWarning, stacklevel=2)
    U = rigid_mode_velocities(mesh, reference_point)
    rhs = U.reshape(6, 3 * n).T
    f = lu_solve((lu, piv), rhs, check_finite=False)
    del lu
    density = np.ascontiguousarray(f.T).reshape(6, n, 3)
    residual = float("nan")
    if check_residual:
        u = apply_single_layer(mesh, density, viscosity, blob_coeff)
        residual = float(np.abs(u - U).max() / np.abs(U).max())
    return BemSolution(mesh, float(viscosity), float(blob_coeff), reference_point,
                       density, blob_sizes(mesh, blob_coeff), condition, residual)


def resistance_tensors(sol: BemSolution, sym_tol: float = DEFAULT_SYM_TOL,
                       check: bool = True) -> ResistanceSet:
    """Force and torque resultants of the rigid-mode densities."""
    mesh = sol.mesh
    g = sol.density * mesh.areas[None, :, None]
    rel = mesh.centroids - sol.reference_point
    force = g.sum(axis=1)                                  # (6, 3)
    torque = np.cross(rel[None, :, :], g).sum(axis=1)      # (6, 3)
    # column i of each tensor is the response to mode i
    K = force[:3].T
    C = force[3:].T
    S = torque[:3].T
    Theta = torque[3:].T
    a_char = float(np.linalg.norm(mesh.vertices - sol.reference_point, axis=1).max())
    R = ResistanceSet(K, C, S, Theta, sol.reference_point, sol.viscosity,
                      mesh.digest, mesh.n_panels, a_char)
    if check:
        R.check(sym_tol)
    return R


def compute_resistance(mesh: TriMesh, viscosity: float, reference_point=None,
                       blob_coeff: float = DEFAULT_BLOB_COEFF, **kwargs) -> ResistanceSet:
    """``resistance_tensors(solve_rigid_modes(...))`` in one call."""
    sol = solve_rigid_modes(mesh, viscosity, reference_point, blob_coeff, **kwargs)
    return resistance_tensors(sol)


# --------------------------------------------------------------------------
# convergence

def richardson(values, ratio: float = 2.0, order: float | None = None):
    """Extrapolate a sequence computed on meshes refined by ``ratio``.

    With three or more values and no ``order`` the observed order is
    estimated from the last three. Returns ``(extrapolated, order)``.
    """
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        raise ValueError("need at least two refinement levels")
    if order is None:
        if len(v) >= 3:
            d1, d2 = v[-2] - v[-3], v[-1] - v[-2]
            if d1 == 0 or d2 == 0 or d1 * d2 < 0:
                order = 1.0
            else:
                order = math.log(abs(d1 / d2)) / math.log(ratio)
        else:
            order = 1.0
    return float(v[-1] + (v[-1] - v[-2]) / (ratio ** order - 1.0)), float(order)


@dataclass
class ConvergenceRow:
    subdivisions: int
    panel_count: int
    K11: float
    Theta11: float
    K_error: float
    Theta_error: float


@dataclass
class ConvergenceStudy:
    shape: str
    K_exact: float
    Theta_exact: float
    rows: list
    extrapolated_K11: float | None
    extrapolated_error: float | None
    observed_order: float | None
    monotone: bool

    @property
    def error_ratios(self):
        e = [abs(r.K_error) for r in self.rows]
        return [a / b for a, b in zip(e, e[1:])]


def convergence_study(levels, shape: str = "sphere", radius: float = 1.0, semi_axes=None,
                      viscosity: float = 1.0, blob_coeff: float = DEFAULT_BLOB_COEFF,
                      max_panels: int = DEFAULT_MAX_PANELS) -> ConvergenceStudy:
    """Drag and rotational resistance against the analytic values over
    successive subdivision levels, with Richardson extrapolation of K11."""
    from .oracles import ellipsoid_resistance

    levels = sorted(int(s) for s in levels)
    if shape == "sphere":
        K_exact = 6.0 * math.pi * viscosity * radius
        Theta_exact = 8.0 * math.pi * viscosity * radius ** 3

        def make(s):
            return icosphere(radius, s)
    elif shape == "ellipsoid":
        if semi_axes is None:
            raise ValidationError("ellipsoid convergence study needs semi_axes")
        k, t = ellipsoid_resistance(semi_axes, viscosity)
        K_exact, Theta_exact = float(k[0]), float(t[0])

        def make(s):
            return ellipsoid(semi_axes, s)
    else:
        raise ValidationError(f"no analytic oracle for shape {shape!r}")

    rows = []
    for s in levels:
        mesh = make(s)
        R = compute_resistance(mesh, viscosity, np.zeros(3), blob_coeff, max_panels=max_panels)
        rows.append(ConvergenceRow(s, mesh.n_panels, float(R.K[0, 0]), float(R.Theta[0, 0]),
                                   float(R.K[0, 0] / K_exact - 1.0),
                                   float(R.Theta[0, 0] / Theta_exact - 1.0)))
        del R, mesh
    errs = [abs(r.K_error) for r in rows]
    monotone = all(b < a for a, b in zip(errs, errs[1:]))
    if not monotone:
        warnings.warn("drag error does not decrease monotonically with refinement; "
                      "consider retuning blob_coeff", ConvergenceWarning, stacklevel=2)
    extrap = err = order = None
    if len(rows) >= 2:
        extrap, order = richardson([r.K11 for r in rows])
        err = extrap / K_exact - 1.0
    return ConvergenceStudy(shape, K_exact, Theta_exact, rows, extrap, err, order, monotone)
