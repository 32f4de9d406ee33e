import math

import numpy as np
import pytest

from bec_mmm.core import (
    AMU,
    HBAR,
    DualFockState,
    Interferometer,
    MmmParams,
    PhaseAveragedState,
    ProductState,
    dephasing_factor,
    depletion_factor,
)
from bec_mmm.correlations import (
    first_order_counts,
    first_order_moments,
    fringe_decay,
    kth_order_depletion,
    second_order,
    second_order_moments,
)
from bec_mmm.phasespace import GaussianModePair, dispersion_corrected_survival

M = 87 * AMU
PS0 = ProductState(0.0)
PAPS = PhaseAveragedState()


def setup(N=30, T=1.0, dx=0.5, w=1e-6, T_over_tau=0.2, sdx=1.0, **kw):
    cfg = Interferometer(N, M, T, dx, (w, w, w), **kw)
    params = MmmParams.from_tau(sdx * HBAR / dx, T / T_over_tau, M)
    return params, cfg


def test_first_order_ideal_port_a_dark():
    assert first_order_moments(PS0, 10, 0.0, 1.0, 1.0) == (0.0, 10.0)


def test_first_order_moderate_dephasing_phase_pi():
    params, cfg = setup(alpha=0.0)
    D = dephasing_factor(params, cfg)
    H = depletion_factor(params, cfg)
    assert H == pytest.approx(1.0, abs=1e-9)
    a, b = first_order_counts(ProductState(math.pi), params, cfg)
    assert D == pytest.approx(0.92433, abs=1e-5)
    assert a == pytest.approx(15 * (H + D), rel=1e-14)
    assert a == pytest.approx(15 * (1 + 0.92433), abs=2e-4)


@pytest.mark.parametrize("phi", [0.0, 0.7, 2.0])
def test_first_order_dfs_phase_free(phi):
    params, cfg = setup(phi=phi)
    H = depletion_factor(params, cfg)
    assert first_order_counts(DualFockState(15, 15), params, cfg) == pytest.approx((15 * H, 15 * H))
    assert first_order_counts(PAPS, params, cfg) == pytest.approx((15 * H, 15 * H))


def test_fringe_phase_uses_beam_splitter_phase():
    params, cfg = setup(alpha=0.4)
    D = dephasing_factor(params, cfg)
    H = depletion_factor(params, cfg)
    a, _ = first_order_counts(ProductState(1.0), params, cfg)
    assert a == pytest.approx(15 * (H - math.cos(0.6) * D))


def test_unbalanced_splitter_rejected():
    params, cfg = setup(theta=0.3)
    with pytest.raises(ValueError, match="oracle"):
        second_order(PS0, params, cfg)


def test_second_order_needs_two_atoms():
    with pytest.raises(ValueError):
        second_order_moments(PS0, 1, 0.0, 1.0, 1.0)


def test_second_order_ideal_ps_dark_port():
    t = second_order_moments(PS0, 12, 0.0, 1.0, 1.0)
    assert t.same_a == 0 and t.cross == 0
    assert t.same_b == pytest.approx(12 * 11)


def test_hom_two_atoms():
    t = second_order_moments(DualFockState(1, 1), 2, 0.0, 1.0, 1.0)
    assert t.same_a == pytest.approx(1.0) and t.same_b == pytest.approx(1.0)
    assert t.cross == 0.0


def test_general_dfs_reduces_to_balanced():
    for N in (2, 10, 30, 100):
        t = second_order_moments(DualFockState(N // 2, N // 2), N, 0.0, 1.0, 0.9)
        assert t.same_a == pytest.approx(N * (3 * N - 2) / 8 * 0.81, rel=1e-14)
        assert t.cross == pytest.approx(N * (N - 2) / 8 * 0.81, rel=1e-14, abs=1e-14)


def test_paps_dfs_differ_by_n_over_8():
    N, H = 40, 0.95
    p = second_order_moments(PAPS, N, 0.0, 1.0, H)
    d = second_order_moments(DualFockState(N // 2, N // 2), N, 0.0, 1.0, H)
    assert d.same_a - p.same_a == pytest.approx(N / 8 * H * H)
    assert p.cross - d.cross == pytest.approx(N / 8 * H * H)


@pytest.mark.parametrize("state", [PAPS, "dfs"])
def test_large_n_asymptotes(state):
    N = 2000
    st = DualFockState(N // 2, N // 2) if state == "dfs" else state
    t = second_order_moments(st, N, 0.0, 1.0, 1.0)
    assert t.same_a / N ** 2 == pytest.approx(3 / 8, rel=2e-3)
    assert t.cross / N ** 2 == pytest.approx(1 / 8, rel=2e-3)


@pytest.mark.parametrize("D,H", [(1.0, 1.0), (0.8, 0.95), (0.2, 0.5)])
def test_ps_phase_average_gives_paps(D, H):
    N = 20
    phis = 2 * np.pi * np.arange(16) / 16
    avg = np.mean([second_order_moments(ProductState(p), N, p, 0.0, H) for p in phis], axis=0)
    paps = second_order_moments(PAPS, N, 0.0, D, H)
    assert np.allclose(avg, paps, rtol=0, atol=1e-12 * N * N)
    avg_d = np.mean([second_order_moments(ProductState(p), N, p, D, H) for p in phis], axis=0)
    assert np.allclose(avg_d, paps, rtol=0, atol=1e-12 * N * N)


def test_fringe_components_decay_as_k_squared():
    # extract cos(phi) and cos(2 phi) parts at two dephasing strengths
    N, H = 10, 1.0
    def parts(D):
        p0 = second_order_moments(PS0, N, 0.0, D, H)
        pp = second_order_moments(PS0, N, math.pi, D, H)
        ph = second_order_moments(PS0, N, math.pi / 2, D, H)
        c1 = (pp.same_a - p0.same_a) / 2
        c2 = (p0.same_a + pp.same_a) / 2 - ph.same_a
        return c1, c2
    D1, D2 = 0.9, 0.6
    a1, b1 = parts(D1)
    a2, b2 = parts(D2)
    assert math.log(a2 / a1) / math.log(D2 / D1) == pytest.approx(1.0, rel=1e-12)
    assert math.log(b2 / b1) / math.log(D2 / D1) == pytest.approx(4.0, rel=1e-12)
    assert fringe_decay(D1, 2) == pytest.approx(D1 ** 4)


def test_kth_order_example():
    w, T = 1e-6, 1.0
    cfg = Interferometer(2, M, T, 20 * w, (w, w, w))
    params = MmmParams.from_tau(0.1 * HBAR / w, T, M)
    det, bridged = kth_order_depletion(2, params, cfg)
    assert det == pytest.approx(0.98058, abs=5e-6)
    assert bridged == pytest.approx(0.98030, abs=5e-6)


def test_kth_order_k1_matches_dispersion_free_survival():
    w, T = 1e-6, 1.0
    cfg = Interferometer(2, M, T, 20 * w, (w, w, w))
    params = MmmParams.from_tau(0.1 * HBAR / w, T, M)
    det, _ = kth_order_depletion(1, params, cfg)
    modes = GaussianModePair(w, 20 * w, M)
    # dispersion terms vanish as hbar T / m w^2 -> 0; remove them by hand
    x = (0.1) ** 2
    assert det == pytest.approx((1 + 2 * x * T / params.tau) ** -0.5, rel=1e-15)
    tiny_T = 1e-9 * modes.dispersion_time
    p2 = MmmParams.from_tau(0.1 * HBAR / w, tiny_T, M)
    cfg2 = Interferometer(2, M, tiny_T, 20 * w, (w, w, w))
    assert kth_order_depletion(1, p2, cfg2).determinant == pytest.approx(
        dispersion_corrected_survival(modes, p2, tiny_T), rel=1e-12)


@pytest.mark.parametrize("K", [1, 2, 3])
@pytest.mark.parametrize("T_over_tau", [0.1, 0.5, 1.0])
@pytest.mark.parametrize("sw", [0.01, 0.05, 0.1, 0.2, 0.3])
def test_kth_order_branches_agree_to_fourth_order(K, T_over_tau, sw):
    w, T = 1e-6, 1.0
    cfg = Interferometer(2, M, T, 20 * w, (w, w, w))
    params = MmmParams.from_tau(sw * HBAR / w, T / T_over_tau, M)
    det, bridged = kth_order_depletion(K, params, cfg)
    assert abs(det - bridged) / bridged < 10 * sw ** 4


def test_kth_order_saturates_at_k_over_tau():
    w, T = 1e-6, 1.0
    cfg = Interferometer(2, M, T, 20 * w, (w, w, w))
    params = MmmParams.from_tau(100 * HBAR / w, T / 0.3, M)
    for K in (1, 2, 5):
        assert kth_order_depletion(K, params, cfg).bridged == pytest.approx(math.exp(-0.3 * K), rel=1e-12)
    with pytest.raises(ValueError):
        kth_order_depletion(0, params, cfg)
