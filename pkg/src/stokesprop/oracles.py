"""Closed-form reference solutions used to validate the numerical paths.

Nothing here calls into the BEM or the time integrator.
"""
import math

import numpy as np
from scipy.integrate import quad


def _ellipsoid_integrals(a, b, c):
    def delta(lam):
        return math.sqrt((a * a + lam) * (b * b + lam) * (c * c + lam))

    chi = quad(lambda lam: 1.0 / delta(lam), 0.0, np.inf, epsabs=0, epsrel=1e-12)[0]
    alphas = [quad(lambda lam, s=s: 1.0 / ((s * s + lam) * delta(lam)), 0.0, np.inf,
                   epsabs=0, epsrel=1e-12)[0] for s in (a, b, c)]
    return chi, alphas


def ellipsoid_resistance(semi_axes, viscosity=1.0):
    """Diagonal translational and rotational resistance of an ellipsoid.

    Oberbeck's drag ``16 pi nu / (chi + alpha_i a_i^2)`` and Jeffery's torque
    ``16 pi nu (a_j^2 + a_k^2) / (3 (a_j^2 alpha_j + a_k^2 alpha_k))``, in the
    principal-axis frame. Returns two length-3 arrays.
    """
    axes = [float(s) for s in semi_axes]
    chi, alpha = _ellipsoid_integrals(*axes)
    K = np.array([16.0 * math.pi * viscosity / (chi + alpha[i] * axes[i] ** 2) for i in range(3)])
    Theta = np.empty(3)
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        Theta[i] = (16.0 * math.pi * viscosity * (axes[j] ** 2 + axes[k] ** 2)
                    / (3.0 * (axes[j] ** 2 * alpha[j] + axes[k] ** 2 * alpha[k])))
    return K, Theta


def linear_periodic_response(t, mass, drag, delta, period, mean, cos_coeffs=(), sin_coeffs=()):
    """T-periodic solution of ``mass * y' = delta * F(t) - drag * y``.

    ``F(t) = mean + sum_k a_k cos(2 pi k t / T) + b_k sin(2 pi k t / T)``.
    Each harmonic is solved independently in closed form.
    """
    t = np.asarray(t, dtype=float)
    y = np.full_like(t, delta * mean / drag)
    for k, (a, b) in enumerate(zip(_pad(cos_coeffs, sin_coeffs), _pad(sin_coeffs, cos_coeffs)), start=1):
        w = 2.0 * math.pi * k / period
        den = drag * drag + (mass * w) ** 2
        A = (drag * a - mass * w * b) / den
        B = (drag * b + mass * w * a) / den
        y += delta * (A * np.cos(w * t) + B * np.sin(w * t))
    return y


def _pad(x, other):
    x = list(x)
    return x + [0.0] * (max(len(other) - len(x), 0))
