"""Order-delta propulsion criterion and average velocities from resistance tensors.

A force ``f(t) b_hat`` with ``f = delta F`` and ``F`` T-periodic is applied at
offset ``r`` from the centre of mass. To leading order in ``delta`` the
average translational velocity is

    gamma_bar = delta F_bar (K - C Theta^-1 C^T)^-1 (b_hat - C Theta^-1 (r x b_hat)),

so the body propels iff the bracket (the *mismatch*) is nonzero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bem import ResistanceSet, cross_matrix, transport_tensors
from .errors import DegenerateResistanceError, ValidationError

DEFAULT_TOL = 1e-9


def _vec3(x, name):
    v = np.asarray(x, dtype=float)
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise ValidationError(f"{name} must be a finite 3-vector, got {x!r}")
    return v


def _unit(b_hat, tol=1e-12):
    b = _vec3(b_hat, "b_hat")
    if abs(np.linalg.norm(b) - 1.0) > tol:
        raise ValidationError(f"b_hat must be a unit vector (|b_hat| = {np.linalg.norm(b)!r})")
    return b


@dataclass(frozen=True, eq=False)
class BodyInertia:
    """Density-normalised mass ``M``, inertia ``I`` about the centre of mass,
    and force application offset ``r`` (from the centre of mass)."""

    M: float
    I: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        if not (np.isfinite(self.M) and self.M > 0):
            raise ValidationError(f"mass must be positive, got {self.M!r}")
        I = np.array(self.I, dtype=float)
        if I.shape == (3,):
            I = np.diag(I)
        if I.shape != (3, 3) or not np.all(np.isfinite(I)):
            raise ValidationError("inertia must be a 3x3 matrix or 3 principal moments")
        if np.abs(I - I.T).max() > 1e-12 * max(np.abs(I).max(), 1.0):
            raise ValidationError("inertia tensor must be symmetric")
        I = 0.5 * (I + I.T)
        if np.linalg.eigvalsh(I).min() <= 0:
            raise ValidationError("inertia tensor must be positive definite")
        I.setflags(write=False)
        r = _vec3(self.r, "r")
        r.setflags(write=False)
        object.__setattr__(self, "M", float(self.M))
        object.__setattr__(self, "I", I)
        object.__setattr__(self, "r", r)


@dataclass(frozen=True, eq=False)
class Forcing:
    """Applied force ``delta * F(t) * b_hat`` with a Fourier waveform.

    ``F(t) = mean + sum_k cos_k cos(2 pi k t / T) + sin_k sin(2 pi k t / T)``.
    """

    period: float
    delta: float
    mean: float
    b_hat: np.ndarray
    cos: tuple = field(default=())
    sin: tuple = field(default=())

    def __post_init__(self):
        if not (np.isfinite(self.period) and self.period > 0):
            raise ValidationError(f"period must be positive, got {self.period!r}")
        if not (np.isfinite(self.delta) and self.delta >= 0):
            raise ValidationError(f"delta must be non-negative, got {self.delta!r}")
        if not np.isfinite(self.mean):
            raise ValidationError("mean must be finite")
        b = _unit(self.b_hat)
        b.setflags(write=False)
        object.__setattr__(self, "b_hat", b)
        for name in ("cos", "sin"):
            coeffs = tuple(float(c) for c in getattr(self, name))
            if not all(np.isfinite(coeffs)):
                raise ValidationError(f"{name} coefficients must be finite")
            object.__setattr__(self, name, coeffs)
        object.__setattr__(self, "period", float(self.period))
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "mean", float(self.mean))

    @property
    def F_bar(self) -> float:
        return self.mean

    def waveform(self, t):
        """Scaled waveform ``F(t)``."""
        t = np.asarray(t, dtype=float)
        out = np.full_like(t, self.mean)
        w = 2.0 * math.pi / self.period
        for k, a in enumerate(self.cos, start=1):
            out = out + a * np.cos(k * w * t)
        for k, b in enumerate(self.sin, start=1):
            out = out + b * np.sin(k * w * t)
        return out

    def force(self, t):
        """Force magnitude ``delta * F(t)``."""
        return self.delta * self.waveform(t)

    def with_delta(self, delta: float) -> "Forcing":
        return Forcing(self.period, delta, self.mean, self.b_hat, self.cos, self.sin)

    def rotated(self, Q) -> "Forcing":
        return Forcing(self.period, self.delta, self.mean, np.asarray(Q) @ self.b_hat, self.cos, self.sin)

    def to_dict(self) -> dict:
        return {"period": self.period, "delta": self.delta, "mean": self.mean,
                "cos": list(self.cos), "sin": list(self.sin),
                "direction": [float(x) for x in self.b_hat]}


# --------------------------------------------------------------------------

def _inv(A, what):
    try:
        cond = np.linalg.cond(A)
        if not np.isfinite(cond) or cond > 1e13:
            raise np.linalg.LinAlgError
        return np.linalg.inv(A)
    except np.linalg.LinAlgError:
        raise DegenerateResistanceError(f"{what} is singular") from None


def schur_complements(R: ResistanceSet):
    """``(K - C Theta^-1 C^T, Theta - C^T K^-1 C)``."""
    Ti = _inv(R.Theta, "Theta")
    Ki = _inv(R.K, "K")
    return R.K - R.C @ Ti @ R.C.T, R.Theta - R.C.T @ Ki @ R.C


def steady_velocities(R: ResistanceSet, F_bar: float, b_hat, r):
    """Steady translational and angular velocity balancing a constant force
    ``F_bar b_hat`` applied at ``r``.

    Solves ``K xi + C zeta = F_bar b_hat``, ``C^T xi + Theta zeta = r x F_bar b_hat``
    in closed form through the Schur complements and cross-checks the
    result against a direct 6x6 solve.
    """
    b = _unit(b_hat)
    r = _vec3(r, "r")
    force = F_bar * b
    torque = np.cross(r, force)
    Ti = _inv(R.Theta, "Theta")
    Ki = _inv(R.K, "K")
    schur_k, schur_t = schur_complements(R)
    xi = _inv(schur_k, "K - C Theta^-1 C^T") @ (force - R.C @ Ti @ torque)
    zeta = _inv(schur_t, "Theta - C^T K^-1 C") @ (torque - R.C.T @ Ki @ force)

    grand = np.block([[R.K, R.C], [R.C.T, R.Theta]])
    direct = np.linalg.solve(grand, np.concatenate([force, torque]))
    scale = np.abs(direct).max()
    if np.abs(np.concatenate([xi, zeta]) - direct).max() > 1e-9 * max(scale, 1e-300):
        raise DegenerateResistanceError("Schur and direct balance solutions disagree")
    return xi, zeta


def mismatch(R: ResistanceSet, b_hat, r) -> np.ndarray:
    """``b_hat - C Theta^-1 (r x b_hat)``."""
    b = _unit(b_hat)
    return b - R.C @ np.linalg.solve(R.Theta, np.cross(_vec3(r, "r"), b))


def propulsion_condition(R: ResistanceSet, b_hat, r, tol: float = DEFAULT_TOL):
    """``(propels, mismatch)``; propels iff ``|mismatch| > tol``."""
    m = mismatch(R, b_hat, r)
    return bool(np.linalg.norm(m) > tol), m


def leading_average_velocity(R: ResistanceSet, forcing: Forcing, r) -> np.ndarray:
    schur_k, _ = schur_complements(R)
    m = mismatch(R, forcing.b_hat, r)
    return forcing.delta * forcing.F_bar * np.linalg.solve(schur_k, m)


def translation_only_velocity(R: ResistanceSet, forcing: Forcing) -> np.ndarray:
    """Leading average velocity when rotation is suppressed: ``delta F_bar K^-1 b_hat``."""
    return forcing.delta * forcing.F_bar * np.linalg.solve(R.K, forcing.b_hat)


# --------------------------------------------------------------------------
# sphere

def sphere_tensors(a: float, viscosity: float = 1.0, center=(0.0, 0.0, 0.0)) -> ResistanceSet:
    """Exact resistance of a sphere of radius ``a``, referred to its centre."""
    if not a > 0:
        raise ValidationError(f"radius must be positive, got {a!r}")
    eye = np.eye(3)
    zero = np.zeros((3, 3))
    return ResistanceSet(6.0 * math.pi * viscosity * a * eye, zero, zero,
                         8.0 * math.pi * viscosity * a ** 3 * eye, center, viscosity,
                         f"analytic:sphere({float(a)!r})", 0, float(a))


def offcenter_sphere_tensors(a: float, d: float, viscosity: float = 1.0) -> ResistanceSet:
    """Sphere of radius ``a`` referred to a point at distance ``d`` along e_1
    from its centre. The reference point is the origin; the geometric
    centre sits at ``(-d, 0, 0)``."""
    if not 0 < d < a:
        raise ValidationError(f"need 0 < d < a, got a={a!r}, d={d!r}")
    R = transport_tensors(sphere_tensors(a, viscosity, center=(-d, 0.0, 0.0)), np.zeros(3))
    return ResistanceSet(R.K, R.C, R.S, R.Theta, R.reference_point, viscosity,
                         f"analytic:sphere({float(a)!r},{float(d)!r})", 0, float(a))


def offcenter_discrepancy(a: float, d: float, viscosity: float = 1.0) -> dict:
    """Compare the transverse rotational resistance and the non-propelling
    offset with alternative closed forms carrying a cubic ``d`` term.

    The alternatives, ``2 pi a (4 a^2 + 3 d^3)`` and
    ``r_1 = -1 / (12 pi^2 a^2 d (4 a^2 + 3 d^3))``, are dimensionally
    inconsistent; they are evaluated only so the discrepancy can be reported.
    """
    R = offcenter_sphere_tensors(a, d, viscosity)
    b = np.array([0.0, 1.0, 0.0])
    r_solved = find_non_propelling_r(R, b, bound=np.inf)
    r1_alt = -1.0 / (12.0 * math.pi ** 2 * a ** 2 * d * (4 * a ** 2 + 3 * d ** 3))
    m_alt = mismatch(R, b, [r1_alt, 0.0, 0.0])
    return {
        "a": a, "d": d, "viscosity": viscosity,
        "theta22_transport": float(R.Theta[1, 1]),
        "theta22_cubic_variant": float(2 * math.pi * viscosity * a * (4 * a ** 2 + 3 * d ** 3)),
        "r1_solved": None if r_solved is None else float(r_solved[0]),
        "r1_closed_form": float(-(4 * a ** 2 + 3 * d ** 2) / (3 * d)),
        "r1_cubic_variant": float(r1_alt),
        "r1_cubic_variant_mismatch": float(np.linalg.norm(m_alt)),
        "interior_bound": float(a - d),
        "r1_solved_is_interior": bool(r_solved is not None and abs(r_solved[0]) < a - d),
    }


def find_non_propelling_r(R: ResistanceSet, b_hat, bound: float = np.inf):
    """Offset ``r`` with ``C Theta^-1 (r x b_hat) = b_hat``, or ``None``.

    The map is linear in ``r`` (rank at most 2); the minimum-norm solution
    is returned. If it violates ``max|r_i| < bound`` the smallest max-norm
    solution is tried before giving up.
    """
    b = _unit(b_hat)
    L = -R.C @ np.linalg.solve(R.Theta, cross_matrix(b))
    r, *_ = np.linalg.lstsq(L, b, rcond=None)
    if np.linalg.norm(L @ r - b) > 1e-9:
        return None
    if np.abs(r).max() < bound:
        return r
    r_inf = _min_maxnorm_solution(L, b)
    if r_inf is not None and np.abs(r_inf).max() < bound:
        return r_inf
    return None


def _min_maxnorm_solution(L, b):
    from scipy.optimize import linprog

    # variables (r, t): minimise t subject to L r = b, -t <= r_i <= t
    c = np.array([0, 0, 0, 1.0])
    A_ub = np.vstack([np.hstack([np.eye(3), -np.ones((3, 1))]),
                      np.hstack([-np.eye(3), -np.ones((3, 1))])])
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(6), A_eq=np.hstack([L, np.zeros((3, 1))]), b_eq=b,
                  bounds=[(None, None)] * 4, method="highs")
    if not res.success:
        return None
    r = res.x[:3]
    return r if np.linalg.norm(L @ r - b) <= 1e-9 else None


# --------------------------------------------------------------------------

@dataclass
class PropulsionReport:
    xi0: np.ndarray
    zeta0: np.ndarray
    mismatch: np.ndarray
    gamma_bar_leading: np.ndarray
    propelling: bool
    tol: float
    resistance_ref: str = ""
    note: str = ""

    def to_dict(self) -> dict:
        out = {
            "xi0": [float(x) for x in self.xi0],
            "zeta0": [float(x) for x in self.zeta0],
            "mismatch": [float(x) for x in self.mismatch],
            "gamma_bar_leading": [float(x) for x in self.gamma_bar_leading],
            "propelling": bool(self.propelling),
            "tol": float(self.tol),
            "resistance_ref": self.resistance_ref,
        }
        if self.note:
            out["note"] = self.note
        return out


def evaluate_propulsion(R: ResistanceSet, forcing: Forcing, r, tol: float = DEFAULT_TOL) -> PropulsionReport:
    """Full order-delta verdict for one configuration.

    ``xi0``/``zeta0`` are the steady velocities per unit ``F_bar`` scaled by
    ``F_bar`` (i.e. the averaged velocities divided by ``delta``).
    """
    xi0, zeta0 = steady_velocities(R, forcing.F_bar, forcing.b_hat, r)
    geometric, m = propulsion_condition(R, forcing.b_hat, r, tol)
    note = ""
    propelling = geometric
    if forcing.F_bar == 0.0:
        propelling = False
        note = "leading order vanishes (zero mean force); any propulsion is of higher order in delta"
    elif not geometric:
        note = "mismatch vanishes: purely oscillatory motion at leading order"
    return PropulsionReport(xi0, zeta0, m, leading_average_velocity(R, forcing, r), propelling,
                            tol, R.mesh_hash, note)
