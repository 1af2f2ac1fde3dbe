"""Body-frame rigid-body motion under a T-periodic force with a quasi-steady
Stokes load.

State per body: translational velocity ``gamma``, angular velocity
``omega`` and the force direction ``b`` seen from the body, packed as a
length-9 vector ``[gamma, omega, b]``. The liquid is represented by its
steady resistance: force ``K gamma + C omega`` and torque
``C^T gamma + Theta omega`` opposing the motion. Fluid memory (added mass,
history forces) is not modelled.

Periodic orbits are located by iterating the period map from rest. Modes
that contract slowly (the drift of ``b`` is only damped at order delta)
are handled by switching to Newton iterations on the period map.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bem import ResistanceSet
from .errors import ConvergenceError, ConvergenceWarning, NoPropulsionError, ValidationError
from .propulsion import BodyInertia, Forcing, schur_complements, mismatch, steady_velocities

DEFAULT_STEPS = 1024
DEFAULT_ORBIT_TOL = 1e-10
DEFAULT_MAX_PERIODS = 200
_FD_STEP = 1e-6


@dataclass(frozen=True)
class BodyState:
    gamma: np.ndarray
    omega: np.ndarray
    b: np.ndarray
    t: float = 0.0

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.gamma, self.omega, self.b]).astype(float)

    @classmethod
    def from_array(cls, s, t: float = 0.0) -> "BodyState":
        s = np.asarray(s, dtype=float)
        return cls(s[0:3].copy(), s[3:6].copy(), s[6:9].copy(), float(t))

    @classmethod
    def at_rest(cls, b_hat, t: float = 0.0) -> "BodyState":
        return cls(np.zeros(3), np.zeros(3), np.array(b_hat, dtype=float), t)


def rhs(state, t, body: BodyInertia, R: ResistanceSet, forcing: Forcing, force=None) -> np.ndarray:
    """Time derivative of ``[gamma, omega, b]``.

    ``state`` may be a ``BodyState`` or an array with trailing dimension 9
    (any leading batch shape). ``force`` overrides ``forcing.force(t)``.

    M (gamma' + omega x gamma) = f b - K gamma - C omega
    I omega' + omega x I omega = f (r x b) - C^T gamma - Theta omega
    b' = omega x b
    """
    s = state.to_array() if isinstance(state, BodyState) else np.asarray(state, dtype=float)
    f = forcing.force(t) if force is None else force
    return _full_rhs(body, R)(s, f)


def _full_rhs(body: BodyInertia, R: ResistanceSet):
    """Right-hand side as a function of (batched state, force magnitude).

    The only place the equations of motion and the sign of ``b'`` live.
    """
    Iinv_T = np.linalg.inv(body.I).T
    K_T, C, C_T, Th_T, I_T = R.K.T, R.C, R.C.T, R.Theta.T, body.I.T
    M, r = body.M, body.r

    def deriv(s, f):
        gamma, omega, b = s[..., 0:3], s[..., 3:6], s[..., 6:9]
        dgamma = (f * b - gamma @ K_T - omega @ C_T) / M - np.cross(omega, gamma)
        torque = f * np.cross(r, b) - gamma @ C - omega @ Th_T - np.cross(omega, omega @ I_T)
        return np.concatenate([dgamma, torque @ Iinv_T, np.cross(omega, b)], axis=-1)
    return deriv


def _as_array(state) -> np.ndarray:
    s = state.to_array() if isinstance(state, BodyState) else np.array(state, dtype=float)
    if s.shape != (9,):
        raise ValidationError(f"state must have 9 components, got shape {s.shape}")
    return s


def _translation_rhs(K, M, b_hat):
    KT = np.asarray(K).T

    def f(s, force):
        return (force * b_hat - s @ KT) / M
    return f


# --------------------------------------------------------------------------
# period map

class _PeriodMap:
    """One period of fixed-step RK4 for a batch of states."""

    def __init__(self, deriv, forcing: Forcing, steps: int, unit_slice=None):
        self.deriv = deriv
        self.steps = steps
        self.T = forcing.period
        self.dt = self.T / steps
        half_grid = np.arange(2 * steps + 1) * (0.5 * self.dt)
        self.forces = forcing.force(half_grid)
        self.unit_slice = unit_slice

    def __call__(self, s0, record=False):
        s = np.array(s0, dtype=float)
        dt = self.dt
        F = self.forces
        drift = 0.0
        samples = [s[0].copy()] if record else None
        for k in range(self.steps):
            f0, fh, f1 = F[2 * k], F[2 * k + 1], F[2 * k + 2]
            k1 = self.deriv(s, f0)
            k2 = self.deriv(s + 0.5 * dt * k1, fh)
            k3 = self.deriv(s + 0.5 * dt * k2, fh)
            k4 = self.deriv(s + dt * k3, f1)
            s = s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if self.unit_slice is not None:
                nb = np.linalg.norm(s[..., self.unit_slice], axis=-1, keepdims=True)
                drift += float(np.abs(nb[0] - 1.0).max())
                s[..., self.unit_slice] /= nb
            if record:
                samples.append(s[0].copy())
        return s, (np.array(samples) if record else None), drift


def _newton_step(pmap, s, s_next):
    """Newton update for the fixed point of the period map (central FD Jacobian).

    Returns the updated state and the raw step.
    """
    n = len(s)
    h = _FD_STEP
    batch = np.vstack([s + h * np.eye(n), s - h * np.eye(n)])
    out, _, _ = pmap(batch)
    J = (out[:n] - out[n:]).T / (2.0 * h) - np.eye(n)
    step, *_ = np.linalg.lstsq(J, -(s_next - s), rcond=1e-12)
    s_new = s + step
    if pmap.unit_slice is not None:
        s_new[pmap.unit_slice] /= np.linalg.norm(s_new[pmap.unit_slice])
    return s_new, step


def _find_orbit(pmap, s0, max_periods, orbit_tol, accelerate=True):
    """Iterate the period map until the boundary defect is below ``orbit_tol``.

    Once Newton steps have been taken the contraction is known to be slow,
    so a small defect alone does not bound the distance to the fixed point;
    convergence then also requires the Newton correction to be below
    ``orbit_tol``.
    """
    s = np.array(s0, dtype=float)
    history = []
    newton_used = False
    for _ in range(max_periods):
        out, samples, drift = pmap(s[None, :], record=True)
        s_next = out[0]
        defect = float(np.abs(s_next - s).max())
        history.append(defect)
        if defect <= orbit_tol:
            if not newton_used:
                return samples, defect, history, drift
            s_new, step = _newton_step(pmap, s, s_next)
            if np.abs(step).max() <= orbit_tol:
                return samples, defect, history, drift
            s = s_new
            continue
        slow = len(history) >= 2 and defect > 0.1 * history[-2]
        if accelerate and slow:
            s, _ = _newton_step(pmap, s, s_next)
            newton_used = True
        else:
            s = s_next
    raise ConvergenceError(
        f"no periodic orbit within {max_periods} periods (last defect {history[-1]:.3e}); "
        "reduce delta or refine the time step", history)


# --------------------------------------------------------------------------
# orbits

@dataclass
class Orbit:
    """One converged period of the periodic solution.

    Arrays hold ``steps_per_period + 1`` uniform samples on ``[0, T]``.
    """

    t: np.ndarray
    gamma: np.ndarray
    omega: np.ndarray
    b: np.ndarray
    period: float
    periodicity_defect: float
    defect_history: list = field(default_factory=list)
    b_drift: float = 0.0

    @property
    def gamma_bar(self) -> np.ndarray:
        return np.trapezoid(self.gamma, self.t, axis=0) / self.period

    @property
    def omega_bar(self) -> np.ndarray:
        return np.trapezoid(self.omega, self.t, axis=0) / self.period

    @property
    def net_displacement_per_period(self) -> np.ndarray:
        return self.period * self.gamma_bar

    @property
    def periods(self) -> int:
        return len(self.defect_history)

    def state(self, i: int) -> BodyState:
        return BodyState(self.gamma[i], self.omega[i], self.b[i], float(self.t[i]))

    def summary(self) -> dict:
        return {
            "period": self.period,
            "gamma_bar": [float(x) for x in self.gamma_bar],
            "omega_bar": [float(x) for x in self.omega_bar],
            "net_displacement_per_period": [float(x) for x in self.net_displacement_per_period],
            "periodicity_defect": self.periodicity_defect,
            "periods": self.periods,
            "b_drift_per_period": self.b_drift,
            "samples": len(self.t),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "gamma_1", "gamma_2", "gamma_3", "omega_1", "omega_2", "omega_3",
                    "b_1", "b_2", "b_3"])
        for row in zip(self.t, self.gamma, self.omega, self.b):
            w.writerow([repr(float(row[0]))] + [repr(float(x)) for v in row[1:] for x in v])
        return buf.getvalue()


def _steps(forcing: Forcing, steps_per_period, dt):
    if dt is not None:
        steps = int(round(forcing.period / dt))
        if steps < 1 or abs(steps * dt - forcing.period) > 1e-12 * forcing.period:
            raise ValidationError(f"dt={dt!r} does not divide the period {forcing.period!r}")
        return steps
    if int(steps_per_period) != steps_per_period or steps_per_period < 1:
        raise ValidationError(f"steps_per_period must be a positive integer, got {steps_per_period!r}")
    return int(steps_per_period)


def integrate_periodic(body: BodyInertia, R: ResistanceSet, forcing: Forcing,
                       steps_per_period: int = DEFAULT_STEPS, max_periods: int = DEFAULT_MAX_PERIODS,
                       orbit_tol: float = DEFAULT_ORBIT_TOL, initial_state=None, dt=None,
                       accelerate: bool = True) -> Orbit:
    """Periodic orbit of the full (translation + rotation + b) system.

    Starts from rest with ``b = b_hat`` unless ``initial_state`` is given,
    and stops once successive period-boundary states differ by at most
    ``orbit_tol`` in the max norm. Raises ``ConvergenceError`` otherwise.
    """
    steps = _steps(forcing, steps_per_period, dt)
    if initial_state is None:
        initial_state = BodyState.at_rest(forcing.b_hat)
    pmap = _PeriodMap(_full_rhs(body, R), forcing, steps, unit_slice=slice(6, 9))
    samples, defect, history, drift = _find_orbit(pmap, _as_array(initial_state), max_periods,
                                                  orbit_tol, accelerate)
    t = np.linspace(0.0, forcing.period, steps + 1)
    return Orbit(t, samples[:, 0:3], samples[:, 3:6], samples[:, 6:9], forcing.period,
                 defect, history, drift)


def integrate_translation_only(body: BodyInertia, K, forcing: Forcing,
                               steps_per_period: int = DEFAULT_STEPS,
                               max_periods: int = DEFAULT_MAX_PERIODS,
                               orbit_tol: float = DEFAULT_ORBIT_TOL, initial_state=None,
                               dt=None) -> Orbit:
    """Periodic orbit of ``M gamma' = delta F(t) b_hat - K gamma`` (rotation suppressed)."""
    steps = _steps(forcing, steps_per_period, dt)
    K = K.K if isinstance(K, ResistanceSet) else np.asarray(K, dtype=float)
    pmap = _PeriodMap(_translation_rhs(K, body.M, forcing.b_hat), forcing, steps)
    s0 = np.zeros(3) if initial_state is None else np.asarray(initial_state, dtype=float)
    samples, defect, history, _ = _find_orbit(pmap, s0, max_periods, orbit_tol)
    t = np.linspace(0.0, forcing.period, steps + 1)
    n = len(t)
    return Orbit(t, samples, np.zeros((n, 3)), np.tile(forcing.b_hat, (n, 1)), forcing.period,
                 defect, history, 0.0)


def trajectory(body: BodyInertia, R: ResistanceSet, forcing: Forcing, initial_state,
               periods: int = 1, steps_per_period: int = DEFAULT_STEPS):
    """Plain RK4 trajectory from ``initial_state`` over whole periods.

    Returns ``(t, states, drift)`` with states of shape ``(n + 1, 9)`` and the
    largest per-period sum of pre-normalisation deviations of ``|b|`` from 1.
    """
    steps = _steps(forcing, steps_per_period, None)
    pmap = _PeriodMap(_full_rhs(body, R), forcing, steps, unit_slice=slice(6, 9))
    s = _as_array(initial_state)
    chunks, drift = [s[None, :]], 0.0
    for _ in range(int(periods)):
        _, samples, d = pmap(s[None, :], record=True)
        chunks.append(samples[1:])
        s = samples[-1]
        drift = max(drift, d)
    t = np.linspace(0.0, periods * forcing.period, periods * steps + 1)
    return t, np.vstack(chunks), drift


def net_distance(orbit, distance: float) -> int:
    """Smallest number of whole periods covering ``distance``."""
    if distance < 0:
        raise ValidationError("distance must be non-negative")
    speed = float(np.linalg.norm(orbit.gamma_bar))
    if distance == 0:
        return 0
    if speed == 0.0:
        raise NoPropulsionError("zero average velocity: the distance is never covered")
    return int(math.ceil(distance / (orbit.period * speed)))


# --------------------------------------------------------------------------
# delta sweep

@dataclass
class SweepRow:
    delta: float
    gamma_bar_over_delta: np.ndarray
    residual: float
    periodicity_defect: float
    periods: int


@dataclass
class SweepResult:
    leading_coefficient: np.ndarray
    rows: list

    @property
    def residuals(self):
        return [row.residual for row in self.rows]

    @property
    def ratios(self):
        res = self.residuals
        return [b / a if a > 0 else float("nan") for a, b in zip(res, res[1:])]

    @property
    def orders(self):
        out = []
        for r0, r1 in zip(self.rows, self.rows[1:]):
            if r0.residual > 0 and r1.residual > 0:
                out.append(math.log(r0.residual / r1.residual) / math.log(r0.delta / r1.delta))
            else:
                out.append(float("nan"))
        return out

    @property
    def monotone(self) -> bool:
        res = self.residuals
        return all(b < a for a, b in zip(res, res[1:]))

    def to_dict(self) -> dict:
        return {
            "leading_coefficient": [float(x) for x in self.leading_coefficient],
            "deltas": [row.delta for row in self.rows],
            "residuals": self.residuals,
            "ratios": self.ratios,
            "empirical_orders": self.orders,
            "monotone": self.monotone,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["delta", "gamma_bar_over_delta_1", "gamma_bar_over_delta_2",
                    "gamma_bar_over_delta_3", "residual", "periodicity_defect", "periods"])
        for row in self.rows:
            w.writerow([repr(row.delta)] + [repr(float(x)) for x in row.gamma_bar_over_delta]
                       + [repr(row.residual), repr(row.periodicity_defect), row.periods])
        return buf.getvalue()


def leading_coefficient(R: ResistanceSet, forcing: Forcing, r) -> np.ndarray:
    """Average translational velocity per unit ``delta`` at leading order."""
    schur_k, _ = schur_complements(R)
    return forcing.F_bar * np.linalg.solve(schur_k, mismatch(R, forcing.b_hat, r))


def _sweep_point(args):
    body, R, forcing, steps, max_periods, orbit_tol, translation_only = args
    if translation_only:
        return integrate_translation_only(body, R.K, forcing, steps, max_periods, orbit_tol)
    return integrate_periodic(body, R, forcing, steps, max_periods, orbit_tol)


def delta_sweep(body: BodyInertia, R: ResistanceSet, forcing: Forcing, deltas,
                steps_per_period: int = DEFAULT_STEPS, max_periods: int = DEFAULT_MAX_PERIODS,
                orbit_tol: float = DEFAULT_ORBIT_TOL, translation_only: bool = False,
                workers: int = 1) -> SweepResult:
    """Simulated ``gamma_bar / delta`` against its leading-order value over
    decreasing amplitudes.

    A T-periodic orbit near ``b_hat`` exists only if the leading-order
    mean rotation is parallel to ``b_hat``; otherwise the body tumbles on a
    1/delta time scale and a ``ConvergenceWarning`` is issued.
    """
    deltas = [float(d) for d in deltas]
    if not deltas or any(d <= 0 for d in deltas):
        raise ValidationError("deltas must be positive")
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValidationError("deltas must be strictly decreasing")
    if translation_only:
        coeff = forcing.F_bar * np.linalg.solve(R.K, forcing.b_hat)
    else:
        coeff = leading_coefficient(R, forcing, body.r)
        if forcing.F_bar != 0:
            _, zeta0 = steady_velocities(R, forcing.F_bar, forcing.b_hat, body.r)
            tilt = np.linalg.norm(np.cross(zeta0, forcing.b_hat))
            if tilt > 1e-9 * max(np.linalg.norm(zeta0), 1e-300):
                warnings.warn("leading-order mean rotation is not parallel to b_hat; no periodic "
                              "orbit with b near b_hat exists", ConvergenceWarning, stacklevel=2)
    jobs = [(body, R, forcing.with_delta(d), steps_per_period, max_periods, orbit_tol, translation_only)
            for d in deltas]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            orbits = list(pool.map(_sweep_point, jobs))
    else:
        orbits = [_sweep_point(job) for job in jobs]
    rows = []
    for d, orbit in zip(deltas, orbits):
        ratio = orbit.gamma_bar / d
        rows.append(SweepRow(d, ratio, float(np.linalg.norm(ratio - coeff)),
                             orbit.periodicity_defect, orbit.periods))
    return SweepResult(coeff, rows)
