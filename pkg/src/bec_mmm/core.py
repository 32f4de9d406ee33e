"""Constants, MMM parameters, interferometer geometry and the D/H factors.

Everything here is in strict SI units. Convenience units (amu, mm, hbar/sigma_q
in metres) are converted at the CLI boundary only.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np

# CODATA 2018 values.
HBAR = 1.054571817e-34          # J s        (1.05457182e-34 to 9 digits)
M_E = 9.1093837015e-31          # kg         (9.10938370e-31)
AMU = 1.66053906660e-27         # kg         (1.66053907e-27)

BALANCED_THETA = math.pi / 4


class SeparationWarning(UserWarning):
    """Arm separation is not large against the packet width."""


@dataclass(frozen=True)
class MmmParams:
    """A point (sigma_q, tau_e) of the MMM parameter space.

    ``tau_e`` is referenced to the electron mass; the single-particle time for
    a test particle of mass ``mass`` is ``tau = tau_e * (m_e / m)**2``.
    """

    sigma_q: float
    tau_e: float
    mass: float

    def __post_init__(self):
        if not self.sigma_q > 0:
            raise ValueError(f"sigma_q must be > 0, got {self.sigma_q!r}")
        if not self.tau_e > 0:
            raise ValueError(f"tau_e must be > 0, got {self.tau_e!r}")
        if not self.mass > 0:
            raise ValueError(f"mass must be > 0, got {self.mass!r}")

    @property
    def tau(self) -> float:
        return tau_from_tau_e(self.tau_e, self.mass)

    @property
    def rate(self) -> float:
        """Single-particle kick rate 1/tau."""
        return 1.0 / self.tau

    @property
    def critical_length(self) -> float:
        return HBAR / self.sigma_q

    @classmethod
    def from_tau(cls, sigma_q: float, tau: float, mass: float) -> "MmmParams":
        return cls(sigma_q, tau_e_from_tau(tau, mass), mass)

    @classmethod
    def from_critical_length(cls, length: float, tau_e: float, mass: float) -> "MmmParams":
        return cls(HBAR / length, tau_e, mass)


def tau_from_tau_e(tau_e, mass):
    return tau_e * (M_E / mass) ** 2


def tau_e_from_tau(tau, mass):
    return tau * (mass / M_E) ** 2


@dataclass(frozen=True)
class Interferometer:
    """Geometry and timing of the two-arm Mach-Zehnder setup.

    Parameters
    ----------
    n_atoms : int
        Total atom number N.
    mass : float
        Atomic mass in kg.
    duration : float
        Interference time T in s.
    arm_separation : float
        Effective static arm separation in m.
    widths : tuple of float
        Initial packet widths (w_x, w_y, w_z) in m.
    phi, alpha : float
        Relative arm phase and beam-splitter phase; the fringe phase is
        ``phi - alpha``.
    theta : float
        Beam-splitter mixing angle. Closed forms require pi/4.
    """

    n_atoms: int
    mass: float
    duration: float
    arm_separation: float
    widths: tuple[float, float, float]
    phi: float = 0.0
    alpha: float = 0.0
    theta: float = BALANCED_THETA
    well_separated: bool = field(init=False, repr=False)

    def __post_init__(self):
        if int(self.n_atoms) != self.n_atoms or self.n_atoms < 1:
            raise ValueError(f"n_atoms must be a positive integer, got {self.n_atoms!r}")
        object.__setattr__(self, "n_atoms", int(self.n_atoms))
        widths = tuple(float(w) for w in self.widths)
        if len(widths) != 3:
            raise ValueError("widths must be (w_x, w_y, w_z)")
        object.__setattr__(self, "widths", widths)
        for name in ("mass", "duration", "arm_separation"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if not all(w > 0 for w in widths):
            raise ValueError("all widths must be > 0")
        ok = self.arm_separation > 10.0 * widths[0]
        object.__setattr__(self, "well_separated", ok)
        if not ok:
            warnings.warn(
                f"arm separation {self.arm_separation:g} m is not >> w_x = {widths[0]:g} m; "
                "closed forms assume well separated arms",
                SeparationWarning,
                stacklevel=2,
            )

    @property
    def width(self) -> float:
        """Combined width sqrt(w_x^2 + w_y^2 + w_z^2)."""
        return math.sqrt(sum(w * w for w in self.widths))

    @property
    def w_x(self) -> float:
        return self.widths[0]

    @property
    def phi_tilde(self) -> float:
        return self.phi - self.alpha

    @property
    def dispersion_time(self) -> float:
        return self.mass * self.w_x ** 2 / HBAR

    @property
    def balanced(self) -> bool:
        return math.isclose(self.theta, BALANCED_THETA, rel_tol=0, abs_tol=1e-15)

    @classmethod
    def from_momentum_split(cls, n_atoms, mass, duration, delta_p, widths, **kw) -> "Interferometer":
        from .phasespace import effective_arm_separation

        dx = effective_arm_separation(delta_p, duration, mass)
        return cls(n_atoms, mass, duration, dx, widths, **kw)

    def replace(self, **changes) -> "Interferometer":
        from dataclasses import replace

        return replace(self, **changes)


# -- condensate states -------------------------------------------------------

@dataclass(frozen=True)
class ProductState:
    """Coherently split condensate, every atom in (a + e^{i phi} b)/sqrt 2."""

    phi: float = 0.0
    kind = "PS"


@dataclass(frozen=True)
class PhaseAveragedState:
    """Product state averaged uniformly over the relative phase."""

    kind = "PAPS"


@dataclass(frozen=True)
class DualFockState:
    """Two independent condensates with definite arm populations."""

    n_a_arm: int
    n_b_arm: int
    kind = "DFS"

    def __post_init__(self):
        if self.n_a_arm < 0 or self.n_b_arm < 0:
            raise ValueError("arm populations must be non-negative")

    @property
    def n_atoms(self) -> int:
        return self.n_a_arm + self.n_b_arm

    @property
    def balanced(self) -> bool:
        return self.n_a_arm == self.n_b_arm

    @classmethod
    def balanced_state(cls, n_atoms: int) -> "DualFockState":
        if n_atoms % 2:
            raise ValueError(f"a balanced dual Fock state needs even N, got {n_atoms}")
        return cls(n_atoms // 2, n_atoms // 2)


TwoModeState = Union[ProductState, PhaseAveragedState, DualFockState]


def check_state(state: TwoModeState, n_atoms: int) -> None:
    if isinstance(state, DualFockState) and state.n_atoms != n_atoms:
        raise ValueError(
            f"DFS populations {state.n_a_arm}+{state.n_b_arm} do not add up to N={n_atoms}"
        )


# -- dephasing and depletion -------------------------------------------------

def decay_factor(sigma_q, tau, duration, length, scale=1.0):
    """exp[-(T/tau)(1 - exp(-scale * sigma_q^2 L^2 / hbar^2))], vectorised.

    ``sigma_q = 0`` is allowed here and gives exactly 1.
    """
    sigma_q = np.asarray(sigma_q, dtype=float)
    arg = scale * (sigma_q * length / HBAR) ** 2
    rate = -np.expm1(-arg)
    out = np.exp(-(duration / np.asarray(tau, dtype=float)) * rate)
    return out if out.ndim else float(out)


def dephasing(sigma_q, tau, duration, separation):
    return decay_factor(sigma_q, tau, duration, separation, 0.5)


def depletion(sigma_q, tau, duration, width):
    return decay_factor(sigma_q, tau, duration, width, 1.0)


def _check_mass(params: MmmParams, cfg: Interferometer) -> None:
    if not math.isclose(params.mass, cfg.mass, rel_tol=1e-12):
        raise ValueError(f"parameter mass {params.mass} differs from interferometer mass {cfg.mass}")


def dephasing_factor(params: MmmParams, cfg: Interferometer) -> float:
    """Inter-arm coherence multiplier D for separation ``cfg.arm_separation``."""
    _check_mass(params, cfg)
    return dephasing(params.sigma_q, params.tau, cfg.duration, cfg.arm_separation)


def depletion_factor(params: MmmParams, cfg: Interferometer) -> float:
    """Per-atom survival H, using the combined 3D width."""
    _check_mass(params, cfg)
    return depletion(params.sigma_q, params.tau, cfg.duration, cfg.width)


def macroscopicity(tau_e_max: float) -> float:
    if not tau_e_max > 0:
        raise ValueError("tau_e_max must be > 0")
    return math.log10(tau_e_max / 1.0)


def macroscopicity_from_visibility(cfg: Interferometer, v_obs: float) -> float:
    """Macroscopicity of a phase-stable interferogram seen at contrast ``v_obs``."""
    if not 0.0 < v_obs < 1.0:
        raise ValueError(
            f"observed visibility must lie in (0, 1), got {v_obs!r}; "
            "perfect contrast can never be established with certainty"
        )
    tau_e = abs(1.0 / math.log(v_obs)) * (cfg.mass / M_E) ** 2 * cfg.duration
    return macroscopicity(tau_e)
