"""Reference engines: two-mode Fock-space density matrices and Monte Carlo kicks.

Basis convention: index n of an N-atom matrix is the Fock state |n, N - n>
with n atoms in mode a. Before the beam splitter the modes are the arms,
after it the output ports.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, NamedTuple

import mpmath
import numpy as np

from . import correlations, counts
from .core import (
    BALANCED_THETA,
    HBAR,
    DualFockState,
    Interferometer,
    MmmParams,
    PhaseAveragedState,
    ProductState,
)
from .counts import CountDistribution

HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10
UNITARY_TOL = 1e-10
MAX_N = 64


class UnitarityError(ArithmeticError):
    pass


@dataclass(frozen=True)
class FockDensityMatrix:
    """(N+1) x (N+1) density matrix of N atoms in two modes."""

    n_atoms: int
    elements: np.ndarray

    def __post_init__(self):
        rho = np.array(self.elements, dtype=complex)
        if rho.shape != (self.n_atoms + 1, self.n_atoms + 1):
            raise ValueError(f"expected a {self.n_atoms + 1}-square matrix, got {rho.shape}")
        scale = max(1.0, float(np.abs(rho).max(initial=0.0)))
        if np.abs(rho - rho.conj().T).max(initial=0.0) > HERMITIAN_TOL * scale:
            raise ValueError("density matrix is not Hermitian")
        rho.flags.writeable = False
        object.__setattr__(self, "elements", rho)

    @property
    def trace(self) -> float:
        return float(np.trace(self.elements).real)

    @property
    def diagonal(self) -> np.ndarray:
        return self.elements.diagonal().real.copy()

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.elements)[0])

    def is_physical(self, tol: float = PSD_TOL) -> bool:
        return self.min_eigenvalue() > -tol and -tol < self.trace <= 1 + tol


@dataclass(frozen=True)
class SectorState:
    """Block-diagonal state over detected atom numbers N_d (losses included)."""

    sectors: Mapping[int, FockDensityMatrix]

    @property
    def n_atoms(self) -> int:
        return max(self.sectors)

    @property
    def trace(self) -> float:
        return math.fsum(r.trace for r in self.sectors.values())

    def is_physical(self, tol: float = PSD_TOL) -> bool:
        return all(r.min_eigenvalue() > -tol for r in self.sectors.values())


# -- states and channel ------------------------------------------------------

def build_state(state, n_atoms: int | None = None) -> FockDensityMatrix:
    """Arm-basis density matrix of a PS, PAPS or DFS.

    The product state (a^+ + e^{i phi} b^+)^N |0> has amplitude
    sqrt(C(N, n) / 2^N) e^{i (N - n) phi} on |n, N - n>.
    """
    if isinstance(state, DualFockState):
        N = state.n_atoms
        if n_atoms is not None and n_atoms != N:
            raise ValueError(f"DFS holds {N} atoms, not {n_atoms}")
        rho = np.zeros((N + 1, N + 1), dtype=complex)
        rho[state.n_a_arm, state.n_a_arm] = 1.0
        return FockDensityMatrix(N, rho)
    if n_atoms is None or n_atoms < 1:
        raise ValueError("n_atoms >= 1 is required for product states")
    N = int(n_atoms)
    n = np.arange(N + 1)
    pops = np.array([math.comb(N, k) for k in n], dtype=float) / 2.0 ** N
    if isinstance(state, ProductState):
        amp = np.sqrt(pops) * np.exp(1j * (N - n) * state.phi)
        return FockDensityMatrix(N, np.outer(amp, amp.conj()))
    if isinstance(state, PhaseAveragedState):
        return FockDensityMatrix(N, np.diag(pops).astype(complex))
    raise TypeError(f"unknown state {state!r}")


def _coherence_weights(N: int, D: float) -> np.ndarray:
    n = np.arange(N + 1)
    return np.power(float(D), (n[:, None] - n[None, :]) ** 2)


def apply_mmm_channel(rho: FockDensityMatrix, D: float, H: float) -> FockDensityMatrix:
    """All-atoms-survive block of the MMM channel.

    Populations are multiplied by H^N and the coherence between |n> and |n'>
    by D^((n - n')^2), which reproduces the order-k fringe law D(tau/k^2).
    """
    N = rho.n_atoms
    g = _coherence_weights(N, D)
    np.fill_diagonal(g, float(H) ** N)
    return FockDensityMatrix(N, rho.elements * g)


def apply_mmm_channel_with_loss(rho: FockDensityMatrix, D: float, H: float) -> SectorState:
    """Full channel: the surviving block plus Bernoulli-thinned lower sectors.

    Lost atoms carry away coherence, so sectors with N_d < N are diagonal.
    """
    N = rho.n_atoms
    top = apply_mmm_channel(rho, D, H)
    pops = rho.diagonal
    pa = [np.array([math.comb(k, i) * H ** i * (1 - H) ** (k - i) for i in range(k + 1)]) for k in range(N + 1)]
    lower = {Nd: np.zeros(Nd + 1) for Nd in range(N)}
    for n, w in enumerate(pops):
        if w == 0:
            continue
        # n atoms in arm a thin to i, N - n in arm b thin to j
        for i, wi in enumerate(pa[n]):
            for j, wj in enumerate(pa[N - n]):
                if i + j < N:
                    lower[i + j][i] += w * wi * wj
    sectors = {Nd: FockDensityMatrix(Nd, np.diag(v).astype(complex)) for Nd, v in lower.items()}
    sectors[N] = top
    return SectorState(dict(sorted(sectors.items())))


def channel_is_positive(N: int, D: float, H: float, tol: float = PSD_TOL) -> bool:
    """Whether the surviving block is completely positive for these factors.

    The block acts as a Schur product with G = [D^((m-m')^2)] - (1 - H^N) I,
    so it is CP exactly when lambda_min(G) >= 0.
    """
    lam = float(np.linalg.eigvalsh(_coherence_weights(N, D))[0])
    return lam - (1 - float(H) ** N) >= -tol


# -- beam splitter -------------------------------------------------------------

@lru_cache(maxsize=256)
def beam_splitter_unitary(N: int, theta: float, alpha: float, dps: int = 40) -> np.ndarray:
    """U[k, j] = <k, N-k|_out |j, N-j>_in for the balanced-phase mode transform.

    The output creation operators are a_out^+ = cos(theta) a^+ - sin(theta) e^{i alpha} b^+
    and b_out^+ = sin(theta) e^{-i alpha} a^+ + cos(theta) b^+.
    """
    if N > MAX_N:
        raise ValueError(f"oracle is limited to N <= {MAX_N}")
    with mpmath.workdps(dps):
        c = mpmath.cos(theta)
        s = mpmath.sin(theta)
        ea = mpmath.expj(alpha)
        fac = [mpmath.factorial(k) for k in range(N + 1)]
        binom = [[mpmath.binomial(k, i) for i in range(k + 1)] for k in range(N + 1)]
        pc = [c ** k for k in range(N + 1)]
        pa_ = [(-s * ea) ** k for k in range(N + 1)]
        pb_ = [(s / ea) ** k for k in range(N + 1)]
        U = np.empty((N + 1, N + 1), dtype=complex)
        for k in range(N + 1):
            coeff = [mpmath.mpc(0)] * (N + 1)
            # (a_out^+)^k (b_out^+)^(N-k) expanded in a^+ powers
            for i in range(k + 1):
                ti = binom[k][i] * pc[i] * pa_[k - i]
                for l in range(N - k + 1):
                    coeff[i + l] += ti * binom[N - k][l] * pb_[l] * pc[N - k - l]
            norm = mpmath.sqrt(fac[k] * fac[N - k])
            for j in range(N + 1):
                v = coeff[j] * mpmath.sqrt(fac[j] * fac[N - j]) / norm
                U[k, j] = complex(mpmath.conj(v))
    err = np.abs(U.conj().T @ U - np.eye(N + 1)).max()
    if err > UNITARY_TOL:
        raise UnitarityError(f"beam-splitter unitary fails self-check, |U^+U - 1| = {err:.3g}")
    U.flags.writeable = False
    return U


def beam_splitter(rho, theta: float = BALANCED_THETA, alpha: float = 0.0):
    """Map an arm-basis state to the output-port basis."""
    if isinstance(rho, SectorState):
        return SectorState({Nd: beam_splitter(r, theta, alpha) for Nd, r in rho.sectors.items()})
    U = beam_splitter_unitary(rho.n_atoms, float(theta), float(alpha))
    return FockDensityMatrix(rho.n_atoms, U @ rho.elements @ U.conj().T)


# -- readout ---------------------------------------------------------------

def count_statistics(rho) -> CountDistribution:
    """Distribution of n_a; for sector states all N_d are summed."""
    if isinstance(rho, SectorState):
        N = rho.n_atoms
        probs = np.zeros(N + 1)
        detected = np.zeros(N + 1)
        for Nd, r in rho.sectors.items():
            probs[: Nd + 1] += r.diagonal
            detected[Nd] = r.trace
        return CountDistribution(N, probs, math.fsum(probs), detected=detected)
    d = rho.diagonal
    return CountDistribution(rho.n_atoms, d, math.fsum(d))


def _falling(n: int, k: int) -> float:
    return float(math.perm(n, k)) if 0 <= k <= n else 0.0


def expectation(rho, powers: tuple[int, int, int, int]) -> complex:
    """<a^+^p b^+^q a^r b^s> for powers (p, q, r, s), exact ladder algebra."""
    p, q, r, s = powers
    if min(powers) < 0:
        raise ValueError("powers must be non-negative")
    if isinstance(rho, SectorState):
        return complex(sum(expectation(x, powers) for x in rho.sectors.values()))
    if p + q != r + s:
        return 0j
    N = rho.n_atoms
    total = 0j
    for m in range(N + 1):
        n = m - r + p
        if not 0 <= n <= N:
            continue
        amp = math.sqrt(_falling(m, r) * _falling(N - m, s) * _falling(n, p) * _falling(N - n, q))
        if amp:
            total += rho.elements[m, n] * amp
    return complex(total)


MEAN_A = (1, 0, 1, 0)
MEAN_B = (0, 1, 0, 1)
SAME_A = (2, 0, 2, 0)
SAME_B = (0, 2, 0, 2)
CROSS = (1, 1, 1, 1)


# -- pipelines ---------------------------------------------------------------

def pipeline(state, n_atoms: int | None, D: float, H: float, theta: float = BALANCED_THETA,
             alpha: float = 0.0, with_loss: bool = True):
    """State -> MMM channel -> beam splitter, in the output-port basis."""
    rho = build_state(state, n_atoms)
    out = apply_mmm_channel_with_loss(rho, D, H) if with_loss else apply_mmm_channel(rho, D, H)
    return beam_splitter(out, theta, alpha)


class CheckResult(NamedTuple):
    name: str
    max_error: float
    n_cases: int
    passed: bool


def oracle_check(n_max: int = 12, Ds=(1.0, 0.9, 0.6, 0.3, 0.05), Hs=(1.0, 0.99, 0.9, 0.7, 0.4),
                 phis=(0.0, math.pi / 3, math.pi / 2, -3 * math.pi / 8), tol: float = 1e-10,
                 alpha: float = 0.3) -> list[CheckResult]:
    """Compare every closed form against the Fock-space pipelines.

    The beam-splitter phase ``alpha`` is nonzero so the fringe phase
    phi - alpha is exercised; PS phases are shifted by alpha to keep the
    requested fringe phases.
    """
    errs: dict[str, list[float]] = {}

    def rec(name, a, b):
        errs.setdefault(name, []).append(float(np.max(np.abs(np.asarray(a) - np.asarray(b)))))

    paps_s, dfs_s = PhaseAveragedState(), None
    for N in range(1, n_max + 1):
        for D in Ds:
            for H in Hs:
                for ph in phis:
                    ps = ProductState(ph + alpha)
                    top = pipeline(ps, N, D, H, alpha=alpha, with_loss=False)
                    rec("ps_counts", count_statistics(top).probs,
                        counts.ps_counts(N, ph, D, H, check=False).probs)
                    full = pipeline(ps, N, D, H, alpha=alpha)
                    m = correlations.first_order_moments(ps, N, ph, D, H)
                    rec("ps_first_order", [expectation(full, MEAN_A), expectation(full, MEAN_B)], m)
                    if N >= 2:
                        t = correlations.second_order_moments(ps, N, ph, D, H)
                        rec("ps_second_order", [expectation(full, SAME_A), expectation(full, SAME_B),
                                                expectation(full, CROSS)], t)
                # phase-free states: phi grid is irrelevant
                top = pipeline(paps_s, N, D, H, alpha=alpha, with_loss=False)
                rec("paps_counts", count_statistics(top).probs, counts.paps_counts(N, H).probs)
                full = pipeline(paps_s, N, D, H, alpha=alpha)
                rec("paps_depleted_counts", count_statistics(full).probs,
                    counts.bernoulli_depletion(lambda k: counts.paps_counts(k), N, H).probs)
                rec("paps_first_order", [expectation(full, MEAN_A), expectation(full, MEAN_B)],
                    correlations.first_order_moments(paps_s, N, 0.0, D, H))
                if N >= 2:
                    rec("paps_second_order", [expectation(full, SAME_A), expectation(full, SAME_B),
                                              expectation(full, CROSS)],
                        correlations.second_order_moments(paps_s, N, 0.0, D, H))
                for na in range(N + 1):
                    dfs_s = DualFockState(na, N - na)
                    full = pipeline(dfs_s, None, D, H, alpha=alpha)
                    if na == N - na:
                        top = pipeline(dfs_s, None, D, H, alpha=alpha, with_loss=False)
                        rec("dfs_counts", count_statistics(top).probs, counts.dfs_counts(N, H).probs)
                    rec("dfs_depleted_counts", count_statistics(full).probs,
                        counts.dfs_bernoulli_depletion(N, H, na).probs)
                    if H == 1.0:
                        rec("dfs_general_counts", count_statistics(full).probs,
                            counts.dfs_counts_general(na, N - na, alpha).probs)
                    rec("dfs_first_order", [expectation(full, MEAN_A), expectation(full, MEAN_B)],
                        correlations.first_order_moments(dfs_s, N, 0.0, D, H))
                    if N >= 2:
                        rec("dfs_second_order", [expectation(full, SAME_A), expectation(full, SAME_B),
                                                 expectation(full, CROSS)],
                            correlations.second_order_moments(dfs_s, N, 0.0, D, H))
    return [CheckResult(k, max(v), len(v), max(v) <= tol) for k, v in errs.items()]


# -- Monte Carlo -------------------------------------------------------------

class McEstimate(NamedTuple):
    visibility: float
    survival: float
    visibility_se: float
    survival_se: float
    n_traj: int


def _mc_shard(seed_seq: np.random.SeedSequence, n: int, lam: float, sigma_q: float,
              phase_per_q: float, retention: float):
    rng = np.random.Generator(np.random.Philox(seed_seq))
    k = rng.poisson(lam, size=n)
    q = rng.normal(0.0, sigma_q, size=int(k.sum()))
    owner = np.repeat(np.arange(n), k)
    total_q = np.bincount(owner, weights=q, minlength=n)
    vis = np.cos(phase_per_q * total_q)
    # probability that the trajectory's atom stays in its mode: r per kick
    surv = np.power(retention, k)
    return vis, surv


def mc_single_particle(params: MmmParams, cfg: Interferometer, n_traj: int, seed: int,
                       shard_size: int = 1 << 14, workers: int | None = None) -> McEstimate:
    """Monte Carlo estimate of D and H from Poisson-timed Gaussian momentum kicks.

    Each trajectory receives Poisson(T/tau) kicks q ~ Normal(0, sigma_q).
    Its coherence estimator is cos(dx sum(q) / hbar), the real part of the
    accumulated relative phase factor, with expectation exactly D. Its
    survival weight is r^k with r = exp(-sigma_q^2 w^2 / hbar^2), the
    probability of passing k independent retention trials, with expectation
    exactly H. Shards use counter-based Philox streams keyed by shard index,
    so results do not depend on the worker count.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    lam = cfg.duration / params.tau
    retention = math.exp(-(params.sigma_q * cfg.width / HBAR) ** 2)
    phase_per_q = cfg.arm_separation / HBAR
    sizes = [shard_size] * (n_traj // shard_size)
    if n_traj % shard_size:
        sizes.append(n_traj % shard_size)
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    if workers is None:
        workers = int(os.environ.get("BEC_MMM_THREADS", "0")) or min(4, os.cpu_count() or 1)
    args = [(s, n, lam, params.sigma_q, phase_per_q, retention) for s, n in zip(seqs, sizes)]
    if workers > 1 and len(args) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda a: _mc_shard(*a), args))
    else:
        parts = [_mc_shard(*a) for a in args]
    vis = np.concatenate([p[0] for p in parts])
    surv = np.concatenate([p[1] for p in parts])
    se = (lambda x: float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else float("nan"))
    return McEstimate(float(vis.mean()), float(surv.mean()), se(vis), se(surv), n_traj)
