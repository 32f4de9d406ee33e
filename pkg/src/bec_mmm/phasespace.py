"""Single-particle characteristic-function machinery.

The MMM generator acts multiplicatively on characteristic functions, so the
interaction-picture solution is an explicit exponent (an error-function
integral) times the free characteristic function.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import erf

from .core import HBAR, MmmParams, tau_from_tau_e

_HALF_SQRT_PI = 0.5 * math.sqrt(math.pi)
# odd Taylor coefficients of int_0^u (exp(-v^2) - 1) dv, n = 1..16
_F_COEFS = np.array([(-1) ** n / (math.factorial(n) * (2 * n + 1)) for n in range(1, 17)])
_F_COEFS_REV = tuple(float(c) for c in _F_COEFS[::-1])


class QuadratureError(RuntimeError):
    pass


class RegimeWarning(UserWarning):
    """A formula is used outside the regime it was derived for."""


def _gauss_defect_integral(u):
    """F(u) = int_0^u (exp(-v^2) - 1) dv, accurate also for small |u|."""
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < 0.5
    out = np.empty_like(u)
    us = u[small]
    if us.size:
        u2 = us * us
        acc = np.zeros_like(us)
        for c in _F_COEFS[::-1]:
            acc = acc * u2 + c
        out[small] = acc * u2 * us
    ul = u[~small]
    out[~small] = _HALF_SQRT_PI * erf(ul) - ul
    return out


def gauss_defect_mean(u0, u1):
    """Mean of exp(-u^2) - 1 over [u0, u1], with a midpoint series for tiny intervals."""
    u0, u1 = np.broadcast_arrays(np.asarray(u0, dtype=float), np.asarray(u1, dtype=float))
    du = u1 - u0
    um = 0.5 * (u0 + u1)
    close = np.abs(du) < 1e-3
    out = np.empty(u0.shape)
    if np.any(close):
        m, d = um[close], du[close]
        m2 = m * m
        g = np.exp(-m2)
        out[close] = (
            np.expm1(-m2)
            + g * (4 * m2 - 2) * d ** 2 / 24
            + g * (16 * m2 * m2 - 48 * m2 + 12) * d ** 4 / 1920
        )
    far = ~close
    if np.any(far):
        out[far] = (_gauss_defect_integral(u1[far]) - _gauss_defect_integral(u0[far])) / du[far]
    return out


def _defect_integral_scalar(u: float) -> float:
    if abs(u) < 0.5:
        u2 = u * u
        acc = 0.0
        for c in _F_COEFS_REV:
            acc = acc * u2 + c
        return acc * u2 * u
    return _HALF_SQRT_PI * math.erf(u) - u


def _defect_mean_scalar(u0: float, u1: float) -> float:
    """Scalar twin of gauss_defect_mean for the quadrature hot loop."""
    du = u1 - u0
    if abs(du) < 1e-3:
        m2 = 0.25 * (u0 + u1) ** 2
        g = math.exp(-m2)
        return (math.expm1(-m2) + g * (4 * m2 - 2) * du * du / 24
                + g * (16 * m2 * m2 - 48 * m2 + 12) * du ** 4 / 1920)
    return (_defect_integral_scalar(u1) - _defect_integral_scalar(u0)) / du


def decoherence_exponent(x, p, t, params: MmmParams, mass: float | None = None):
    """Exponent of the MMM decoherence factor on a characteristic function.

    Returns  int_0^t dt'/tau exp(-sigma_q^2 (x + p t'/m)^2 / 2 hbar^2) - t/tau,
    which is <= 0 and vanishes at the origin of phase space.
    """
    m = params.mass if mass is None else mass
    tau = tau_from_tau_e(params.tau_e, m)
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be >= 0")
    k = params.sigma_q / (math.sqrt(2.0) * HBAR)
    u0 = k * x
    u1 = k * (x + p * t / m)
    out = (t / tau) * gauss_defect_mean(u0, u1)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class GaussianModePair:
    """Two Gaussian arm modes of width ``width`` a distance ``separation`` apart."""

    width: float
    separation: float
    mass: float

    def __post_init__(self):
        if not (self.width > 0 and self.separation > 0 and self.mass > 0):
            raise ValueError("width, separation and mass must be > 0")

    @property
    def dispersion_time(self) -> float:
        return self.mass * self.width ** 2 / HBAR

    def complex_width(self, t: float) -> float:
        """|w_x(t)| for the freely dispersing packet."""
        return self.width * (1.0 + (HBAR * t / (2 * self.mass * self.width ** 2)) ** 2) ** 0.25

    def P_a(self, x, p):
        w = self.width
        return np.exp(-x ** 2 / (8 * w * w) - (p * w / HBAR) ** 2 / 2)

    def P_b(self, x, p):
        return self.P_a(x, p) * np.exp(1j * p * self.separation / HBAR)

    def M_ab(self, x, p):
        w, d = self.width, self.separation
        return np.exp(-(x - d) ** 2 / (8 * w * w) - (p * w / HBAR) ** 2 / 2 + 1j * p * d / (2 * HBAR))

    def M_ba(self, x, p):
        return np.conj(self.M_ab(-np.asarray(x), -np.asarray(p)))


def survival_overlap(modes: GaussianModePair, params: MmmParams, T: float,
                     rtol: float = 1e-10, box: float = 8.0) -> float:
    """Probability that one atom is still found in its arm mode after time T.

    Direct 2D adaptive quadrature of the characteristic-function overlap with
    the exact decoherence exponent (dispersion included).
    """
    w = modes.width
    sx = math.sqrt(2.0) * w            # std of P_a^2 along x
    sp = HBAR / (math.sqrt(2.0) * w)   # std of P_a^2 along p

    # dimensionless variables: x = sx*a, p = sp*b; measure dx dp / (2 pi hbar)
    jac = sx * sp / (2 * math.pi * HBAR)

    m = modes.mass
    tau = tau_from_tau_e(params.tau_e, m)
    k = params.sigma_q / (math.sqrt(2.0) * HBAR)
    rate = T / tau

    def integrand(b, a):
        x, p = sx * a, sp * b
        return jac * math.exp(-0.5 * (a * a + b * b) + rate * _defect_mean_scalar(k * x, k * (x + p * T / m)))

    val, err = integrate.dblquad(integrand, -box, box, -box, box, epsabs=0.0, epsrel=rtol)
    if not err <= max(10 * rtol * abs(val), 1e-14):
        raise QuadratureError(f"survival overlap did not converge: achieved abs error {err:.3g} on {val:.6g}")
    return val


def dispersion_corrected_survival(modes: GaussianModePair, params: MmmParams, T: float) -> float:
    """Dephasing-regime expansion of the survival overlap including dispersion."""
    s = params.sigma_q
    tau = tau_from_tau_e(params.tau_e, modes.mass)
    if s * modes.complex_width(T) / HBAR > 0.3:
        warnings.warn("sigma_q |w_x(T)| is not << hbar; expansion is outside its regime",
                      RegimeWarning, stacklevel=2)
    w, m = modes.width, modes.mass
    bracket = (1 + (HBAR * T / (m * w * w)) ** 2 / 6
               + (T / (24 * tau)) * (s * T / (m * w)) ** 2)
    return (1 + 2 * (s * w / HBAR) ** 2 * (T / tau) * bracket) ** -0.5


def effective_arm_separation(delta_p: float, T: float, mass: float) -> float:
    """Static separation equivalent to a momentum split delta_p reversed at T/2."""
    if not (delta_p > 0 and T > 0 and mass > 0):
        raise ValueError("delta_p, T and mass must be > 0")
    return delta_p * T / (2 * math.sqrt(3.0) * mass)


def momentum_split_coherence(delta_p: float, T: float, mass: float, params: MmmParams,
                             width: float | None = None) -> float:
    """Coherence multiplier for a momentum-split, mirrored, recombined pair of arms."""
    if width is not None and not delta_p * T / (2 * mass) > 10 * width:
        warnings.warn("arms are not well separated against the packet width",
                      RegimeWarning, stacklevel=2)
    tau = tau_from_tau_e(params.tau_e, mass)
    y = params.sigma_q * delta_p * T / (2 * math.sqrt(2.0) * mass * HBAR)
    # 1 - sqrt(pi)/(2y) erf(y) written as -F(y)/y; small y ~ y^2/3
    rate = float(-_gauss_defect_integral(y)[()] / y) if y > 0 else 0.0
    return math.exp(-(T / tau) * rate)
