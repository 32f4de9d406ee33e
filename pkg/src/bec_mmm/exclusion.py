"""Excluded regions of the MMM parameter space and their macroscopicity.

For each sigma_q the boundary is the largest single-particle time tau for
which the predicted signal is worse than the observed one; every shorter
tau is ruled out. Physics is evaluated in tau, and converted to tau_e only
when a bound is returned.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np
from scipy import optimize

from . import counts
from .core import HBAR, Interferometer, decay_factor, macroscopicity, tau_e_from_tau

BISECT_RTOL = 1e-9


class NotExcluded(Exception):
    """The criterion cannot exclude any tau at this sigma_q."""


@dataclass(frozen=True)
class AtomLoss:
    """Observed per-atom survival of at least ``min_survival``."""

    min_survival: float = 0.95

    def __post_init__(self):
        _open_unit("min_survival", self.min_survival)


@dataclass(frozen=True)
class Visibility:
    """Observed phase-stable fringe contrast of at least ``min_contrast``.

    By default the contrast is compared with D. With ``relative_to_survival``
    it is compared with D/H, the contrast among the atoms that remain.
    """

    min_contrast: float = 0.95
    relative_to_survival: bool = False

    def __post_init__(self):
        _open_unit("min_contrast", self.min_contrast)


@dataclass(frozen=True)
class VarianceFactor:
    """Observed n_a variance at most ``max_factor`` times the ideal N sin^2(phi)/4."""

    max_factor: float = 40.0
    n_atoms: int = 100_000
    phi_tilde: float = math.pi / 2

    def __post_init__(self):
        if not self.max_factor > 1:
            raise ValueError("max_factor must be > 1")
        if int(self.n_atoms) != self.n_atoms or self.n_atoms < 2:
            raise ValueError("n_atoms must be an integer >= 2")
        if abs(math.sin(self.phi_tilde)) < 1e-12:
            raise ValueError("the ideal variance vanishes at this phase")


@dataclass(frozen=True)
class HomThreshold:
    """Observed parity signal above ``min_fraction`` of its ideal value N/2."""

    min_fraction: float = 0.8
    n_atoms: int = 30
    use_fit: bool = False

    def __post_init__(self):
        _open_unit("min_fraction", self.min_fraction)
        if int(self.n_atoms) != self.n_atoms or self.n_atoms < 2 or self.n_atoms % 2:
            raise ValueError("n_atoms must be an even integer >= 2")


Criterion = Union[AtomLoss, Visibility, VarianceFactor, HomThreshold]


def _open_unit(name, v):
    if not 0 < v < 1:
        raise ValueError(f"{name} must lie in (0, 1), got {v!r}")


@dataclass(frozen=True)
class ExclusionCurve:
    """Boundary tau_e(sigma_q); shorter tau_e is excluded at each sigma_q."""

    points: tuple[tuple[float, float], ...]
    mu: float
    gaps: tuple[float, ...] = ()

    @property
    def sigma_q(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def tau_e(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])

    @property
    def critical_length(self) -> np.ndarray:
        return HBAR / self.sigma_q


# -- per-point bounds ----------------------------------------------------------

def _loss_rate(sigma_q, length, scale):
    return -math.expm1(-scale * (sigma_q * length / HBAR) ** 2)


@lru_cache(maxsize=64)
def _hom_threshold(n_atoms, min_fraction, use_fit):
    return counts.hom_exclusion_threshold(n_atoms, min_fraction, use_fit=use_fit)


def _excluded(criterion: Criterion, sigma_q: float, tau: float, cfg: Interferometer) -> bool:
    """Whether the prediction at (sigma_q, tau) contradicts the observation."""
    T = cfg.duration
    H = decay_factor(sigma_q, tau, T, cfg.width, 1.0)
    D = decay_factor(sigma_q, tau, T, cfg.arm_separation, 0.5)
    if isinstance(criterion, AtomLoss):
        return H < criterion.min_survival
    if isinstance(criterion, Visibility):
        if criterion.relative_to_survival:
            # log space: D and H can both underflow
            rate = _loss_rate(sigma_q, cfg.arm_separation, 0.5) - _loss_rate(sigma_q, cfg.width, 1.0)
            return -(T / tau) * rate < math.log(criterion.min_contrast)
        return D < criterion.min_contrast
    if isinstance(criterion, VarianceFactor):
        N, ph = criterion.n_atoms, criterion.phi_tilde
        ideal = N * math.sin(ph) ** 2 / 4
        return counts.ps_variance(N, ph, D, H) > criterion.max_factor * ideal
    if isinstance(criterion, HomThreshold):
        return H < _hom_threshold(criterion.n_atoms, criterion.min_fraction, criterion.use_fit)
    raise TypeError(f"unknown criterion {criterion!r}")


def _closed_form_tau(criterion: Criterion, sigma_q: float, cfg: Interferometer) -> float:
    T = cfg.duration
    if isinstance(criterion, AtomLoss):
        rate, thr = _loss_rate(sigma_q, cfg.width, 1.0), criterion.min_survival
    elif isinstance(criterion, Visibility):
        rate = _loss_rate(sigma_q, cfg.arm_separation, 0.5)
        if criterion.relative_to_survival:
            rate -= _loss_rate(sigma_q, cfg.width, 1.0)
        thr = criterion.min_contrast
    elif isinstance(criterion, HomThreshold):
        rate = _loss_rate(sigma_q, cfg.width, 1.0)
        thr = _hom_threshold(criterion.n_atoms, criterion.min_fraction, criterion.use_fit)
    else:
        raise TypeError(f"no closed form for {type(criterion).__name__}")
    if not rate > 0:
        raise NotExcluded(f"prediction does not degrade at sigma_q = {sigma_q:.3g}")
    return T * rate / abs(math.log(thr))


def _bisect_tau(criterion: Criterion, sigma_q: float, cfg: Interferometer,
                decades_above: float = 12.0, decades_below: float = 8.0, step: float = 0.25) -> float:
    """Largest excluded tau by a downward log scan followed by bisection."""
    T = cfg.duration
    hi = math.log(T) + decades_above * math.log(10)
    lo_end = math.log(T) - decades_below * math.log(10)
    if _excluded(criterion, sigma_q, math.exp(hi), cfg):
        raise NotExcluded("excluded even at the top of the scan range")
    x = hi
    while x > lo_end:
        x_next = x - step * math.log(10)
        if _excluded(criterion, sigma_q, math.exp(x_next), cfg):
            root = optimize.bisect(
                lambda y: 0.5 - float(_excluded(criterion, sigma_q, math.exp(y), cfg)),
                x_next, x, xtol=BISECT_RTOL * 1e-3, rtol=4 * np.finfo(float).eps, maxiter=200,
            )
            return math.exp(root)
        x = x_next
    raise NotExcluded(f"no excluded tau found at sigma_q = {sigma_q:.3g}")


def tau_bound(criterion: Criterion, sigma_q: float, cfg: Interferometer, method: str = "auto") -> float:
    """Largest excluded electron-referenced time tau_e at this sigma_q.

    ``method`` is "closed", "bisect" or "auto" (closed form where one exists).
    Raises NotExcluded if the criterion cannot exclude anything here.
    """
    if not sigma_q > 0:
        raise NotExcluded("sigma_q = 0 leaves every prediction ideal")
    if method not in ("auto", "closed", "bisect"):
        raise ValueError(f"unknown method {method!r}")
    if method == "bisect" or (method == "auto" and isinstance(criterion, VarianceFactor)):
        tau = _bisect_tau(criterion, sigma_q, cfg)
    else:
        tau = _closed_form_tau(criterion, sigma_q, cfg)
    return tau_e_from_tau(tau, cfg.mass)


# -- curves ----------------------------------------------------------------

def critical_length_grid(lo: float = 1e-14, hi: float = 10.0, n_points: int = 200) -> np.ndarray:
    if not (0 < lo < hi) or n_points < 2:
        raise ValueError("need 0 < lo < hi and n_points >= 2")
    return np.logspace(math.log10(lo), math.log10(hi), n_points)


def _workers(workers):
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("BEC_MMM_THREADS")
    return max(1, int(env)) if env else min(8, os.cpu_count() or 1)


def exclusion_curve(criterion: Criterion, cfg: Interferometer, lengths=None,
                    workers: int | None = None, method: str = "auto") -> ExclusionCurve:
    """Boundary over a grid of critical lengths hbar/sigma_q (default 1e-14..10 m, 200 points)."""
    lengths = critical_length_grid() if lengths is None else np.asarray(lengths, dtype=float)
    sigmas = np.sort(HBAR / lengths)

    def one(s):
        try:
            return float(s), tau_bound(criterion, float(s), cfg, method)
        except NotExcluded:
            return float(s), None

    nw = _workers(workers)
    if nw > 1:
        with ThreadPoolExecutor(max_workers=nw) as ex:
            res = list(ex.map(one, sigmas))
    else:
        res = [one(s) for s in sigmas]
    pts = tuple((s, t) for s, t in res if t is not None)
    gaps = tuple(s for s, t in res if t is None)
    if not pts:
        raise NotExcluded("criterion excludes nothing on this grid")
    return ExclusionCurve(pts, macroscopicity(max(t for _, t in pts)), gaps)


def plateau(curve: ExclusionCurve) -> float:
    """tau_e at the largest sigma_q of the curve."""
    return curve.points[-1][1]


def knee_length(curve: ExclusionCurve, fraction: float = 1 - math.exp(-1)) -> float:
    """Critical length where the bound reaches ``fraction`` of its plateau.

    Interpolated log-linearly. For the saturating kernel 1 - exp(-L^2/l^2)
    the default fraction puts the knee at l = L.
    """
    L = curve.critical_length[::-1]  # increasing sigma -> decreasing length; flip
    t = curve.tau_e[::-1]
    target = fraction * plateau(curve)
    # L increasing now, t decreasing; first index where t drops below target
    idx = np.nonzero(t < target)[0]
    if idx.size == 0 or idx[0] == 0:
        raise ValueError("curve does not cross the knee fraction")
    i = idx[0]
    x0, x1 = math.log(L[i - 1]), math.log(L[i])
    y0, y1 = math.log(t[i - 1]), math.log(t[i])
    y = math.log(target)
    return math.exp(x0 + (y - y0) * (x1 - x0) / (y1 - y0))
