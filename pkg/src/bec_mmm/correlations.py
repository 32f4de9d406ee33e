"""Output-port correlation functions of the balanced interferometer under MMM.

All closed forms assume a balanced beam splitter (theta = pi/4). The
``*_moments`` functions take the reduced inputs (N, fringe phase, D, H)
directly; the ``(state, params, cfg)`` wrappers compute D and H first.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .core import (
    HBAR,
    DualFockState,
    Interferometer,
    MmmParams,
    PhaseAveragedState,
    ProductState,
    check_state,
    dephasing_factor,
    depletion,
    depletion_factor,
)


class SecondOrderTriple(NamedTuple):
    """Normally ordered second moments of the output-port operators."""

    same_a: float
    same_b: float
    cross: float


class KthOrderDepletion(NamedTuple):
    determinant: float
    bridged: float


def _require_balanced(cfg: Interferometer) -> None:
    if not cfg.balanced:
        raise ValueError(
            f"closed forms need theta = pi/4, got {cfg.theta!r}; use the oracle module instead"
        )


def _phase(state, cfg: Interferometer) -> float:
    return state.phi - cfg.alpha if isinstance(state, ProductState) else 0.0


def first_order_moments(state, n_atoms: int, phi_tilde: float, D: float, H: float):
    """Mean counts (mean_a, mean_b) in the two output ports."""
    N = n_atoms
    if isinstance(state, ProductState):
        fringe = math.cos(phi_tilde) * D
        return 0.5 * N * (H - fringe), 0.5 * N * (H + fringe)
    check_state(state, N)
    return 0.5 * N * H, 0.5 * N * H


def first_order_counts(state, params: MmmParams, cfg: Interferometer):
    _require_balanced(cfg)
    check_state(state, cfg.n_atoms)
    D = dephasing_factor(params, cfg)
    H = depletion_factor(params, cfg)
    return first_order_moments(state, cfg.n_atoms, _phase(state, cfg), D, H)


def second_order_moments(state, n_atoms: int, phi_tilde: float, D: float, H: float) -> SecondOrderTriple:
    """Second-order port correlations from the rate law D(tau/4) = D^4, H(tau/2) = H^2.

    Parameters
    ----------
    state : ProductState, PhaseAveragedState or DualFockState
    n_atoms : int
        Total atom number, at least 2.
    phi_tilde : float
        Fringe phase phi - alpha (ignored for phase-free states).
    D, H : float
        Single-particle dephasing and depletion factors.
    """
    N = int(n_atoms)
    if N < 2:
        raise ValueError("second-order correlations need N >= 2")
    H2 = H * H
    if isinstance(state, ProductState):
        pre = N * (N - 1) / 8
        c1 = 4 * math.cos(phi_tilde) * D
        c2 = math.cos(2 * phi_tilde) * D ** 4
        return SecondOrderTriple(
            pre * (3 * H2 + c2 - c1),
            pre * (3 * H2 + c2 + c1),
            pre * (H2 - c2),
        )
    if isinstance(state, PhaseAveragedState):
        same = 3 * N * (N - 1) / 8 * H2
        return SecondOrderTriple(same, same, N * (N - 1) / 8 * H2)
    if isinstance(state, DualFockState):
        check_state(state, N)
        na, nb = state.n_a_arm, state.n_b_arm
        pairs = na * (na - 1) + nb * (nb - 1)
        same = H2 * (pairs + 4 * na * nb) / 4
        return SecondOrderTriple(same, same, H2 * pairs / 4)
    raise TypeError(f"unknown state {state!r}")


def second_order(state, params: MmmParams, cfg: Interferometer) -> SecondOrderTriple:
    _require_balanced(cfg)
    check_state(state, cfg.n_atoms)
    D = dephasing_factor(params, cfg)
    H = depletion_factor(params, cfg)
    return second_order_moments(state, cfg.n_atoms, _phase(state, cfg), D, H)


def fringe_decay(D, k: int):
    """Decay of the cos(k phi) component of a k-th order moment, D(tau/k^2) = D^(k^2)."""
    return np.asarray(D, dtype=float) ** (k * k)


def kth_order_depletion(K: int, params: MmmParams, cfg: Interferometer) -> KthOrderDepletion:
    """K-th order depletion in the dephasing regime and its regime-bridging value.

    Returns the Gaussian-determinant form (1 + 2K w_x^2 sigma_q^2 T / hbar^2 tau)^(-1/2)
    and the 1D bridging value H(sigma_q, tau/K) = H^K, both with the width w_x.
    """
    if int(K) != K or K < 1:
        raise ValueError("K must be a positive integer")
    tau = params.tau
    x = (params.sigma_q * cfg.w_x / HBAR) ** 2
    det = (1 + 2 * K * x * cfg.duration / tau) ** -0.5
    bridged = depletion(params.sigma_q, tau / K, cfg.duration, cfg.w_x)
    return KthOrderDepletion(det, bridged)
