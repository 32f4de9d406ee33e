"""Atom-count distributions in output port a, depletion averaging and derived observables."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy import optimize
from scipy.special import gammaln
from scipy.stats import binom

EXACT_MAX_N = 64
MATERIALIZE_MAX_N = 2000
NEGATIVE_TOL = 1e-12


class ConsistencyError(ArithmeticError):
    """A computed probability violates its invariants beyond round-off."""


@dataclass(frozen=True)
class CountDistribution:
    """Probabilities P(n_a) for n_a = 0..N and their sum ``survival``.

    ``detected`` optionally holds the distribution of the detected atom
    number N_d = 0..N for depletion-averaged distributions.
    """

    n_atoms: int
    probs: np.ndarray
    survival: float
    detected: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.shape != (self.n_atoms + 1,):
            raise ValueError(f"need {self.n_atoms + 1} probabilities, got shape {p.shape}")
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_probs(cls, probs, detected=None) -> "CountDistribution":
        probs = np.asarray(probs, dtype=float)
        return cls(len(probs) - 1, probs, math.fsum(probs), detected)

    @property
    def n(self) -> np.ndarray:
        return np.arange(self.n_atoms + 1)

    def moment(self, k: int) -> float:
        """Raw moment sum n^k P(n), not normalized."""
        return math.fsum(self.n.astype(float) ** k * self.probs)

    @property
    def mean(self) -> float:
        """Mean of n_a conditioned on the events the distribution covers."""
        return self.moment(1) / self.survival

    @property
    def variance(self) -> float:
        m = self.mean
        return self.moment(2) / self.survival - m * m

    def is_nonnegative(self, tol: float = NEGATIVE_TOL) -> bool:
        return bool(np.all(self.probs >= -tol))


def _check_unit(name, v, allow_zero=True):
    lo_ok = v >= 0 if allow_zero else v > 0
    if not (lo_ok and v <= 1):
        raise ValueError(f"{name} must lie in {'[0, 1]' if allow_zero else '(0, 1]'}, got {v!r}")


def _check_n(N):
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N!r}")
    return int(N)


# -- product state -----------------------------------------------------------

def _autocorrelations_exact(N: int) -> list[list[int]]:
    """R_n(d) = sum_s A_n(s) A_n(s+d) for A_n(x) = (1-x)^n (1+x)^(N-n), as integers."""
    a = [math.comb(N, s) for s in range(N + 1)]
    out = []
    for n in range(N + 1):
        out.append([sum(a[s] * a[s + d] for s in range(N + 1 - d)) for d in range(N + 1)])
        if n < N:
            # multiply by (1 - x)/(1 + x); the division is exact
            q, prev = [], 0
            for s in range(N):
                prev = a[s] - prev
                q.append(prev)
            a = [q[0]] + [q[s] - q[s - 1] for s in range(1, N)] + [-q[N - 1]]
    return out


@lru_cache(maxsize=32)
def _fourier_coefficients(N: int, exact: bool) -> np.ndarray:
    """c[n, d], the cos(d phi) content of the ideal PS distribution P(n | phi).

    P_ideal(n | phi) = c[n, 0] + 2 sum_d c[n, d] cos(d phi).
    """
    if exact:
        scale = -2 * N
        coef = np.empty((N + 1, N + 1))
        for n, r in enumerate(_autocorrelations_exact(N)):
            cn = math.comb(N, n)
            coef[n] = [math.ldexp(float(cn * x), scale) for x in r]
    else:
        # trig polynomial of degree N sampled above the Nyquist rate; the
        # binomial pmf is evaluated in log-gamma form by scipy
        M = 2 * N + 1
        phi = 2 * np.pi * np.arange(M) / M
        p = 0.5 * (1 - np.cos(phi))
        pmf = binom.pmf(np.arange(N + 1)[:, None], N, p[None, :])
        coef = np.fft.rfft(pmf, axis=1).real[:, : N + 1] / M
    coef.flags.writeable = False
    return coef


def ps_counts(N: int, phi_tilde: float, D: float, H: float, check: bool = True,
              exact: bool | None = None) -> CountDistribution:
    """Count distribution of a product state when all N atoms survive.

    Coherences of order d = s - s' are weighted by cos(d phi_tilde) D^(d^2),
    populations by H^N, so the distribution sums to H^N.

    Parameters
    ----------
    N : int
        Atom number, at most 2000.
    phi_tilde : float
        Fringe phase phi - alpha.
    D, H : float
        Dephasing and depletion factors.
    check : bool
        Raise ConsistencyError if a probability is below -1e-12. Coherences
        carry no depletion factor, so H < 1 can give negative entries even
        for (D, H) from one model; `bernoulli_depletion` over undepleted
        conditionals stays non-negative.
    exact : bool, optional
        Use exact integer arithmetic. Defaults to True for N <= 64.
    """
    N = _check_n(N)
    _check_unit("D", D)
    _check_unit("H", H)
    if N > MATERIALIZE_MAX_N:
        raise ValueError(f"distributions are not materialized above N = {MATERIALIZE_MAX_N}; use ps_variance")
    if exact is None:
        exact = N <= EXACT_MAX_N
    c = _fourier_coefficients(N, bool(exact))
    d = np.arange(1, N + 1)
    weights = 2 * np.cos(d * phi_tilde) * np.power(float(D), d * d)
    HN = float(H) ** N
    probs = np.array([math.fsum(np.concatenate(([HN * row[0]], row[1:] * weights))) for row in c])
    if check and probs.min() < -NEGATIVE_TOL:
        raise ConsistencyError(
            f"negative probability {probs.min():.3g} for N={N}, D={D}, H={H}; "
            "these factors are not jointly realizable"
        )
    return CountDistribution(N, probs, HN)


def ps_variance(N: int, phi_tilde: float, D: float, H: float) -> float:
    """Variance of n_a for a product state, dephasing and depletion included."""
    N = _check_n(N)
    c = math.cos(phi_tilde)
    c2 = math.cos(2 * phi_tilde)
    # (4 + 4NcD)H - 4NcD regrouped as 4H + 4NcD(H - 1) so that c ~ 1e-17 at
    # phi = pi/2 cannot leak in at large N
    return N / 8 * ((N - 3) * H * H + 4 * H + 4 * N * c * D * (H - 1.0) + (N - 1) * c2 * D ** 4
                    - 2 * N * c * c * D * D)


def ps_variance_quadrature(N: int, D: float, H: float) -> float:
    """Reduced variance at the maximally sensitive phase phi_tilde = +-pi/2."""
    N = _check_n(N)
    return N / 8 * ((N - 3) * H * H + 4 * H + (1 - N) * D ** 4)


# -- phase-averaged and dual Fock states -------------------------------------

def paps_counts(N: int, H: float = 1.0) -> CountDistribution:
    N = _check_n(N)
    _check_unit("H", H, allow_zero=False)
    n = np.arange(N + 1)
    base = np.exp(gammaln(n + 0.5) + gammaln(N - n + 0.5) - gammaln(n + 1) - gammaln(N - n + 1)) / math.pi
    HN = float(H) ** N
    return CountDistribution(N, HN * base, HN)


def paps_classical(N: int, H: float = 1.0) -> np.ndarray:
    """Continuous large-N form H^N / (pi sqrt(n (N - n))); NaN at the endpoints."""
    N = _check_n(N)
    n = np.arange(N + 1, dtype=float)
    with np.errstate(divide="ignore"):
        out = float(H) ** N / (math.pi * np.sqrt(n * (N - n)))
    out[[0, N]] = np.nan
    return out


def dfs_counts(N: int, H: float = 1.0) -> CountDistribution:
    """Balanced dual Fock state; exact zeros at every odd n_a."""
    N = _check_n(N)
    if N % 2:
        raise ValueError(f"balanced dual Fock state needs even N, got {N}")
    _check_unit("H", H, allow_zero=False)
    j = np.arange(N // 2 + 1)
    h = N // 2
    vals = np.exp(gammaln(2 * j + 1) + gammaln(h - j + 0.5) - 2 * gammaln(j + 1) - gammaln(h - j + 1)
                  - 2 * j * math.log(2.0)) / math.sqrt(math.pi)
    probs = np.zeros(N + 1)
    HN = float(H) ** N
    probs[::2] = HN * vals
    return CountDistribution(N, probs, HN)


@lru_cache(maxsize=4096)
def _dfs_general_exact(n_a_arm: int, n_b_arm: int) -> tuple[float, ...]:
    Na, Nb = n_a_arm, n_b_arm
    N = Na + Nb
    # image of a^Na b^Nb: (x + y)^Na (y - x)^Nb up to an overall phase
    coef = [0] * (N + 1)
    for i in range(Na + 1):
        ci = math.comb(Na, i)
        for j in range(Nb + 1):
            coef[i + j] += ci * math.comb(Nb, j) * (-1) ** j
    den = math.factorial(Na) * math.factorial(Nb) * 2 ** N
    return tuple(float(Fraction(coef[n] ** 2 * math.factorial(n) * math.factorial(N - n), den))
                 for n in range(N + 1))


def dfs_counts_general(n_a_arm: int, n_b_arm: int, alpha: float = 0.0) -> CountDistribution:
    """Ideal count distribution of |N_a, N_b> behind a balanced beam splitter.

    The beam-splitter phase only multiplies each output amplitude by a global
    phase, so the result does not depend on ``alpha``.
    """
    if n_a_arm < 0 or n_b_arm < 0 or n_a_arm + n_b_arm < 0:
        raise ValueError("arm populations must be non-negative")
    N = int(n_a_arm) + int(n_b_arm)
    if N == 0:
        return CountDistribution(0, np.ones(1), 1.0)
    return CountDistribution(N, np.array(_dfs_general_exact(int(n_a_arm), int(n_b_arm))), 1.0)


# -- depletion ---------------------------------------------------------------

def bernoulli_depletion(conditional: Callable[[int], CountDistribution], N: int, H: float) -> CountDistribution:
    """Average conditional distributions over a Binomial(N, H) detected atom number.

    ``conditional(N_d)`` returns the undepleted distribution for N_d >= 1
    detected atoms; N_d = 0 contributes to n_a = 0.
    """
    N = _check_n(N)
    _check_unit("H", H, allow_zero=False)
    w = binom.pmf(np.arange(N + 1), N, H)
    probs = np.zeros(N + 1)
    probs[0] = w[0]
    for Nd in range(1, N + 1):
        if w[Nd] == 0.0:
            continue
        cond = conditional(Nd)
        if cond.n_atoms != Nd:
            raise ValueError(f"conditional({Nd}) returned a distribution for {cond.n_atoms} atoms")
        probs[: Nd + 1] += w[Nd] * cond.probs
    return CountDistribution(N, probs, math.fsum(probs), detected=w)


def dfs_bernoulli_depletion(N: int, H: float, n_a_arm: int | None = None) -> CountDistribution:
    """Dual Fock state with independent Binomial losses in each condensate."""
    N = _check_n(N)
    _check_unit("H", H, allow_zero=False)
    if n_a_arm is None:
        if N % 2:
            raise ValueError(f"balanced dual Fock state needs even N, got {N}")
        n_a_arm = N // 2
    n_b_arm = N - n_a_arm
    wa = binom.pmf(np.arange(n_a_arm + 1), n_a_arm, H)
    wb = binom.pmf(np.arange(n_b_arm + 1), n_b_arm, H)
    probs = np.zeros(N + 1)
    for a in range(n_a_arm + 1):
        for b in range(n_b_arm + 1):
            probs[: a + b + 1] += wa[a] * wb[b] * dfs_counts_general(a, b).probs
    detected = np.convolve(wa, wb)
    return CountDistribution(N, probs, math.fsum(probs), detected=detected)


def mix_atom_number(weights: Mapping[int, float], factory: Callable[[int], CountDistribution]) -> CountDistribution:
    """Weighted average of distributions over an uncertain atom number.

    ``weights`` maps N to its probability; no prior is assumed.
    """
    if not weights:
        raise ValueError("weights must not be empty")
    if any(w < 0 for w in weights.values()):
        raise ValueError("weights must be non-negative")
    total = math.fsum(weights.values())
    Nmax = max(weights)
    probs = np.zeros(Nmax + 1)
    for N, w in weights.items():
        dist = factory(N)
        probs[: dist.n_atoms + 1] += (w / total) * dist.probs
    return CountDistribution(Nmax, probs, math.fsum(probs))


# -- parity observable ---------------------------------------------------------

class HomFit(NamedTuple):
    exponent: float
    max_rel_residual: float
    n_points: int


def hom_parity_observable(dist: CountDistribution) -> float:
    """Parity-weighted mean count sum n (-1)^n P(n)."""
    n = dist.n
    return math.fsum(np.where(n % 2, -1.0, 1.0) * n * dist.probs)


def hom_model(N: int, H: float, exponent: float = 4.0 / 3.0) -> float:
    """Fitted parity observable (N/2) H^(exponent N)."""
    return 0.5 * N * H ** (exponent * N)


def hom_observable(N: int, H: float) -> float:
    """Exact parity observable of a Bernoulli-depleted balanced dual Fock state."""
    return hom_parity_observable(dfs_bernoulli_depletion(N, H))


def fit_hom_exponent(Ns: Sequence[int], Hs: Sequence[float]) -> HomFit:
    """Least-squares fit of obs = (N/2) H^(c N) in log space over the grid Ns x Hs.

    Returns the fitted c and the largest relative deviation of the model
    from the exact observable on the grid.
    """
    xs, ys, obs = [], [], []
    for N in Ns:
        for H in Hs:
            if H >= 1.0:
                continue
            o = hom_observable(N, H)
            if o <= 0:
                continue
            xs.append(N * math.log(H))
            ys.append(math.log(2 * o / N))
            obs.append((N, H, o))
    if not xs:
        raise ValueError("no usable grid points (need H < 1 and a positive observable)")
    x, y = np.array(xs), np.array(ys)
    c = float(x @ y / (x @ x))
    resid = max(abs(hom_model(N, H, c) - o) / o for N, H, o in obs)
    return HomFit(c, resid, len(obs))


def hom_exclusion_threshold(N: int, min_fraction: float = 0.8, use_fit: bool = False,
                            exponent: float = 4.0 / 3.0, xtol: float = 1e-13) -> float:
    """Survival H at which the parity observable equals min_fraction * N/2.

    Observing a larger value excludes every smaller H. With ``use_fit`` the
    fitted model is inverted instead of the exact pipeline.
    """
    if not 0 < min_fraction < 1:
        raise ValueError("min_fraction must lie in (0, 1)")
    if use_fit:
        return min_fraction ** (1.0 / (exponent * N))
    target = min_fraction * 0.5 * N

    def f(H):
        return hom_observable(N, H) - target

    # walk the loss 1 - H up by octaves until the observable drops below target
    for k in range(-30, 0):
        lo = 1.0 - 2.0 ** k
        if f(lo) < 0:
            break
    else:
        raise ConsistencyError("no bracket for the parity threshold")
    return optimize.brentq(f, lo, 1.0, xtol=xtol, rtol=4 * np.finfo(float).eps)
