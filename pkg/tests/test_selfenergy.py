import numpy as np
import pytest

from fermi2d import selfenergy as se
from fermi2d.config import ScaleParams
from fermi2d.scales import ScaleModel, quadratic_model


@pytest.fixture(scope="module")
def budget_params():
    return ScaleParams(lambda0=1e-3, upsilon=0.2, jmax=5)


@pytest.fixture(scope="module")
def budget_scales(budget_params):
    return ScaleModel(budget_params, quadratic_model())


@pytest.fixture(scope="module")
def qfam(budget_params):
    return se.saturating_q_family(budget_params)


# ---------------------------------------------------------------------------
# resummation basics


def test_resum_single_term_and_empty(scales):
    fam = se.ScaleFamily()
    assert se.resum_P(fam, 0.3, 1.0, 0.2) == 0.0
    assert se.resum_Q(fam, 0.3, 1.0, 0.2) == 0.0

    def p2(k0, kx, ky):
        return 1j * 0.01 * k0 * np.exp(-kx ** 2 - ky ** 2)

    fam.p[2] = p2
    k = (0.4, 0.7, -0.3)
    assert se.resum_P(fam, *k) == p2(*k)


def test_p_family_vanishes_at_zero_frequency(budget_params):
    fam = se.linear_p_family(budget_params)
    for i in fam.p:
        assert fam.p[i](0.0, 0.8, 0.2) == 0.0


def test_reality_propagates(budget_params, qfam, budget_scales):
    pfam = se.linear_p_family(budget_params)
    fam = se.ScaleFamily(p=pfam.p, q=qfam.q, lambda0=1e-3, upsilon=0.2)
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(50):
        k0 = rng.uniform(0.01, 2.0)
        kx, ky = rng.uniform(-1.3, 1.3, 2)
        for f in (se.resum_P, se.resum_Q):
            a = complex(f(fam, k0, kx, ky))
            b = complex(f(fam, -k0, kx, ky))
            worst = max(worst, abs(b - np.conj(a)))
        P = lambda *k: se.resum_P(fam, *k)
        Q = lambda *k: se.resum_Q(fam, *k)
        s1 = se.proper_sigma(budget_scales, k0, kx, ky, P, Q)
        s2 = se.proper_sigma(budget_scales, -k0, kx, ky, P, Q)
        worst = max(worst, abs(s2 - np.conj(s1)))
    assert worst <= 1e-12


# ---------------------------------------------------------------------------
# budget checker


def test_budget_zero_family_all_pass(budget_params, budget_scales):
    fam = se.ScaleFamily(lambda0=1e-3, upsilon=0.2)
    fam.q[(2, 2)] = lambda k0, kx, ky: 0.0 * np.asarray(k0)
    fam.q_desc[(2, 2)] = se.QDescriptor(i=2, l=2, amp=0.0, k0_center=11.0,
                                        k0_width=10.0, kx_width=1.4,
                                        kx_plateau=0.6)
    rep = se.check_q_budget(fam, budget_params, scales=budget_scales)
    assert rep.all_pass
    assert rep.worst_ratio() == 0.0


def test_budget_saturating_family(budget_params, budget_scales, qfam):
    rep = se.check_q_budget(qfam, budget_params, scales=budget_scales)
    assert rep.all_pass
    assert rep.reality_residual <= 1e-12
    assert rep.support_violation <= 1e-12
    for ratio in rep.max_ratio_per_pair().values():
        assert 0.5 < ratio <= 1.0
    assert all(r.ratio <= 1.0 for r in rep.rows)
    assert min(r.ratio for r in rep.rows) > 0.5


def test_budget_scaled_family_fails(budget_params, budget_scales):
    fam3 = se.saturating_q_family(budget_params, scale=3.0)
    rep = se.check_q_budget(fam3, budget_params, scales=budget_scales)
    assert not rep.all_pass
    assert rep.worst_ratio() > 1.0


def test_budget_oracle_on_finer_grid(budget_params, qfam):
    # independent oracle: re-measure a representative subset of members on
    # a finer grid; ratios must agree and stay below the budget
    subset = se.ScaleFamily(lambda0=qfam.lambda0, upsilon=qfam.upsilon)
    for key in ((2, 2), (2, 4), (4, 5)):
        subset.q[key] = qfam.q[key]
        subset.q_desc[key] = qfam.q_desc[key]
    coarse = se.check_q_budget(subset, budget_params, npts=(112, 112, 112))
    fine = se.check_q_budget(subset, budget_params, npts=(168, 168, 168))
    cmap = {(r.i, r.l, r.delta): r.ratio for r in coarse.rows}
    for r in fine.rows:
        assert abs(cmap[(r.i, r.l, r.delta)] - r.ratio) <= 0.06
        assert r.ratio <= 1.0


def test_budget_detects_support_violation(budget_params, budget_scales):
    fam = se.ScaleFamily(lambda0=1e-3, upsilon=0.2)
    # constant in space: does not vanish off the ultraviolet cutoff
    fam.q[(2, 2)] = lambda k0, kx, ky: 1e-6 * np.ones_like(np.asarray(k0, dtype=float))
    fam.q_desc[(2, 2)] = se.QDescriptor(i=2, l=2, amp=1e-6, k0_center=11.0,
                                        k0_width=10.0, kx_width=1.4,
                                        kx_plateau=0.6)
    rep = se.check_q_budget(fam, budget_params, scales=budget_scales)
    assert rep.support_violation > 0.0
    assert not rep.all_pass


def test_budget_reality_residual(budget_params):
    fam = se.ScaleFamily(lambda0=1e-3, upsilon=0.2)
    # odd real part in k0 breaks the reflection-reality condition
    fam.q[(2, 2)] = lambda k0, kx, ky: 1e-9 * np.asarray(k0)
    fam.q_desc[(2, 2)] = se.QDescriptor(i=2, l=2, amp=1e-9, k0_center=11.0,
                                        k0_width=10.0, kx_width=1.4,
                                        kx_plateau=0.6)
    rep = se.check_q_budget(fam, budget_params)
    assert rep.reality_residual > 0.0


# ---------------------------------------------------------------------------
# partial sums


def test_partial_sum_bound(scales):
    # |Q - Q_j| <= lambda0^(1-3u) l_j min(|i k0 - e|, 1) for small lambda0
    params = ScaleParams(lambda0=1e-5, upsilon=0.2, jmax=8)
    fam = se.saturating_q_family(params)
    la, up = params.lambda0, params.upsilon
    sm = ScaleModel(params, quadratic_model())
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(200):
        k0 = rng.uniform(-2, 2)
        kx, ky = rng.uniform(-1.9, 1.9, 2)
        r = float(sm.radius(k0, kx, ky))
        for j in (3, 4, 5, 6):
            tail = abs(se.resum_Q(fam, k0, kx, ky)
                       - se.resum_Q(fam, k0, kx, ky, jcut=j))
            bound = la ** (1 - 3 * up) * params.sector_length(j) * min(r, 1.0)
            worst = max(worst, tail / bound)
    assert worst <= 1.0


def test_q_tail_decay_slope():
    params = ScaleParams(lambda0=1e-3, upsilon=0.2, jmax=12)
    sm = ScaleModel(params, quadratic_model())
    fam = se.saturating_q_family(params)
    fit = se.q_tail_decay(fam, params, sm, js=list(range(3, 9)))
    assert abs(fit.slope - fit.expected) <= 0.1 * abs(fit.expected)


def test_p_tail_decay_slope():
    params = ScaleParams(lambda0=1e-3, upsilon=0.2, jmax=8)
    fam = se.linear_p_family(params, imin=2, imax=16)
    fit = se.p_tail_decay(fam, params, js=list(range(3, 9)))
    assert abs(fit.slope - fit.expected) <= 0.1 * abs(fit.expected)


def test_resum_bound_report(budget_params, budget_scales, qfam):
    pfam = se.linear_p_family(budget_params)
    fam = se.ScaleFamily(p=pfam.p, q=qfam.q, lambda0=1e-3, upsilon=0.2)
    report = se.check_resum_bounds(fam, budget_params, budget_scales)
    assert report["P_ratio"] <= 1.0
    assert report["Q_ratio"] <= 1.0


# ---------------------------------------------------------------------------
# two-point assembly and proper self-energy


def _smooth_pq():
    def P(k0, kx, ky):
        return 0.02j * k0 / (1 + k0 ** 2) * np.exp(-0.2 * (kx ** 2 + ky ** 2))

    def dP(k0, kx, ky):
        return 0.02j * (1 - k0 ** 2) / (1 + k0 ** 2) ** 2 \
            * np.exp(-0.2 * (kx ** 2 + ky ** 2))

    def Q(k0, kx, ky):
        e = 0.5 * (kx ** 2 + ky ** 2) - 1.0
        z = 1j * k0 - e
        return 0.01 * z ** 2 / (1.0 + np.abs(z) ** 2) \
            * np.exp(-0.1 * (kx ** 2 + ky ** 2))

    def dQ(k0, kx, ky, h=1e-6):
        return (Q(k0 + h, kx, ky) - Q(k0 - h, kx, ky)) / (2 * h)

    return P, dP, Q, dQ


def test_green2_trivial(scales, fermi_point):
    _, kx, ky = fermi_point
    Z = lambda k0, kx_, ky_: 0.0
    k0 = 0.4
    A = complex(scales.amputation(k0, kx, ky))
    U = float(scales.disp.U(kx, ky))
    assert abs(se.green2(scales, k0, kx, ky, Z, Z) - U / A) <= 1e-14
    # Q = 0: a simple shifted pole
    P, _, _, _ = _smooth_pq()
    want = U / (A - P(k0, kx, ky))
    assert abs(se.green2(scales, k0, kx, ky, P, Z) - want) <= 1e-14
    # (1, 1) lies exactly on the curve in floating point
    with pytest.raises(se.SingularityError):
        se.green2(scales, 0.0, 1.0, 1.0, Z, Z)


def test_green2_continuity_off_shell(scales):
    # continuity along a path that avoids i k0 = e(k)
    P, _, Q, _ = _smooth_pq()
    ts = np.linspace(0.0, 1.0, 60)
    vals = [se.green2(scales, 0.4 + 0.2 * t, 1.0 + 0.3 * t, 0.1, P, Q)
            for t in ts]
    diffs = np.abs(np.diff(vals))
    assert diffs.max() <= 0.1


def test_proper_sigma_trivials(scales, fermi_point):
    _, kx, ky = fermi_point
    P, _, Q, _ = _smooth_pq()
    Z = lambda k0, kx_, ky_: 0.0
    k = (0.3, kx, ky)
    assert abs(se.proper_sigma(scales, *k, P, Z) - P(*k)) <= 1e-15
    A = complex(scales.amputation(*k))
    qv = complex(Q(*k))
    assert abs(se.proper_sigma(scales, *k, Z, Q) - qv / (1 + qv / A)) <= 1e-15


def test_sigma_identity_and_derivative(scales):
    P, dP, Q, dQ = _smooth_pq()
    rng = np.random.default_rng(42)
    worst_g2 = worst_ds = 0.0
    n = 0
    while n < 60:
        k0 = rng.uniform(-1.5, 1.5)
        kx, ky = rng.uniform(-1.8, 1.8, 2)
        A = complex(scales.amputation(k0, kx, ky))
        if abs(A) < 0.15 or abs(k0) < 0.05:
            continue
        n += 1
        S = se.proper_sigma(scales, k0, kx, ky, P, Q)
        lhs = 1.0 / (A - S)
        rhs = 1.0 / (A - P(k0, kx, ky)) + Q(k0, kx, ky) / A ** 2
        worst_g2 = max(worst_g2, abs(lhs - rhs) / abs(rhs))
        ds = se.sigma_k0_derivative(scales, k0, kx, ky, P, Q, dP, dQ)
        h = 1e-5 * max(abs(k0), abs(A))
        fd = (se.proper_sigma(scales, k0 + h, kx, ky, P, Q)
              - se.proper_sigma(scales, k0 - h, kx, ky, P, Q)) / (2 * h)
        worst_ds = max(worst_ds, abs(ds - fd) / max(abs(fd), 1e-12))
    assert worst_g2 <= 1e-12
    assert worst_ds <= 1e-6


def test_amputations(scales, fermi_point):
    _, kx, ky = fermi_point
    P, _, Q, _ = _smooth_pq()
    Z = lambda k0, kx_, ky_: 0.0
    k = (0.3, kx, ky)
    # P = Q = 0: A1 is the cumulative scale function, A2 is one
    assert abs(se.amputation_A1(scales, 4, *k, Z)
               - float(scales.nu_le(4, *k))) <= 1e-15
    assert abs(se.amputation_A2(scales, *k, Z, Z) - 1.0) <= 1e-15
    # Q = 0 means Sigma = P and A2 = 1
    assert abs(se.amputation_A2(scales, *k, P, Z) - 1.0) <= 1e-14
    # |A2| <= 2 sampled over the cutoff support
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(200):
        k0 = rng.uniform(-1.5, 1.5)
        kx_, ky_ = rng.uniform(-1.8, 1.8, 2)
        if abs(complex(scales.amputation(k0, kx_, ky_))) < 0.1:
            continue
        worst = max(worst, abs(se.amputation_A2(scales, k0, kx_, ky_, P, Q)))
    assert worst <= 2.0


def test_family_text_roundtrip(budget_params, qfam):
    pfam = se.linear_p_family(budget_params)
    fam = se.ScaleFamily(p=pfam.p, dp_dk0=pfam.dp_dk0, p_amp=pfam.p_amp,
                         q=qfam.q, q_desc=qfam.q_desc,
                         lambda0=qfam.lambda0, upsilon=qfam.upsilon)
    text = se.family_to_text(fam, budget_params)
    back = se.family_from_text(text, budget_params)
    assert set(back.q) == set(fam.q)
    assert set(back.p) == set(fam.p)
    k = (0.37, 0.8, -0.3)
    for key in fam.q:
        assert abs(complex(fam.q[key](*k)) - complex(back.q[key](*k))) <= 1e-15
    for key in fam.p:
        assert abs(complex(fam.p[key](*k)) - complex(back.p[key](*k))) <= 1e-15
