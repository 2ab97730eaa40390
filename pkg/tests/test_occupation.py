import math

import numpy as np
import pytest

from fermi2d import occupation as oc


@pytest.fixture(scope="module")
def model():
    return oc.linear_self_energy(0.2, lambda kx, ky: 1.0)


def test_model_validation(disp, model):
    model.validate(disp)
    bad = oc.SelfEnergyModel(S=lambda k0, kx, ky: 0.9 + 0 * np.asarray(k0),
                             dS_dk0=lambda k0, kx, ky: 0.0 * np.asarray(k0),
                             eps=1.0, C=0.0)
    with pytest.raises(oc.ModelHypothesisError):
        bad.validate(disp)


def test_free_occupation_step(disp):
    # S = 0: N is 1 inside the Fermi curve and 0 outside (pure residue)
    free = oc.linear_self_energy(0.0, lambda kx, ky: 1.0)
    for off, want in ((-0.07, 1.0), (0.07, 0.0)):
        rad = math.sqrt(2) + off
        val, resid = oc.occupation_limit(disp, free, rad, 0.0)
        assert abs(val - want) <= 1e-10
        assert resid <= 1e-9


def test_i1_closed_spot_value(disp, model):
    # A = 1, E = e = 1, eta = 1 gives -arctan(1)/pi = -1/4
    free = oc.linear_self_energy(0.0, lambda kx, ky: 1.0)
    rad = 2.0  # e = 1 for the quadratic model
    got = oc.i1_closed_limit(disp, free, rad, 0.0, eta=1.0)
    assert abs(got - (-0.25)) <= 1e-14


def test_i1_closed_vs_quadrature(disp, model):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(20):
        th = rng.uniform(0, 2 * np.pi)
        rad = math.sqrt(2) * (1 + rng.uniform(-0.3, 0.3))
        kx, ky = rad * math.cos(th), rad * math.sin(th)
        eta = rng.uniform(0.05, 0.8)
        closed = oc.i1_closed_limit(disp, model, kx, ky, eta)
        quadv = oc.i1_quad(disp, model, kx, ky, eta, 0.0, 1e-12)
        worst = max(worst, abs(closed - quadv.real), abs(quadv.imag))
    assert worst <= 1e-8


def test_i1_limit_jump_is_inverse_a(disp, model):
    # at fixed eta, the difference of the inside/outside limits of the I1
    # closed form approaches 1/A(kbar)
    lam = 0.2
    A = 1.0 - lam
    eta = 0.2
    diffs = []
    for d in (1e-4, 1e-6):
        rad_in = math.sqrt(2) - d
        rad_out = math.sqrt(2) + d
        diffs.append(oc.i1_closed_limit(disp, model, rad_in, 0.0, eta)
                     - oc.i1_closed_limit(disp, model, rad_out, 0.0, eta))
    assert abs(diffs[0] - 1.0 / A) <= 1e-3
    assert abs(diffs[1] - 1.0 / A) <= 1e-5


def test_i3_spot_values(disp):
    # e = -1 at the origin-side radius 0, tau = 1/2
    assert abs(oc.i3_closed(disp, 0.0, 0.0, 0.5) - math.exp(-0.5)) <= 1e-15
    # e > 0 gives zero
    assert oc.i3_closed(disp, 2.0, 0.0, 0.5) == 0.0
    # (1, 1) sits exactly on the curve in floating point
    with pytest.raises(oc.SingularPointError):
        oc.i3_closed(disp, 1.0, 1.0, 0.5)


def test_i3_cutoff_extrapolation(disp):
    worst = 0.0
    for e_sign in (-1, 1):
        for tau in (0.3, 0.5, 0.7):
            rad = math.sqrt(2 * (1 + e_sign * 0.3))
            closed = oc.i3_closed(disp, rad, 0.0, tau)
            extr = oc.i3_cutoff_extrapolated(disp, rad, 0.0, tau)
            worst = max(worst, abs(closed - extr))
    assert worst <= 1e-6


def test_eta_splitting_consistency(disp, model):
    tol = 1e-9
    kx, ky = math.sqrt(2) * 1.02, 0.0
    v1, _ = oc.occupation_limit(disp, model, kx, ky, eta=0.1, quad_tol=tol)
    v2, _ = oc.occupation_limit(disp, model, kx, ky, eta=0.4, quad_tol=tol)
    assert abs(v1 - v2) <= 2 * tol


def test_occupation_real_for_symmetric_model(disp, model):
    rng = np.random.default_rng(4)
    for _ in range(10):
        rad = math.sqrt(2) * (1 + rng.uniform(0.02, 0.3) * rng.choice([-1, 1]))
        th = rng.uniform(0, 2 * np.pi)
        _, resid = oc.occupation_limit(disp, model, rad * math.cos(th),
                                       rad * math.sin(th))
        assert resid <= 1e-8


def test_occupation_continuity_off_curve(disp, model):
    # sampled Lipschitz-type bound along a path avoiding the Fermi curve
    rads = np.linspace(math.sqrt(2) * 1.05, math.sqrt(2) * 1.3, 30)
    vals = [oc.occupation_limit(disp, model, r, 0.0)[0] for r in rads]
    diffs = np.abs(np.diff(vals))
    assert diffs.max() <= 0.05


def test_jump_free_model(disp):
    free = oc.linear_self_energy(0.0, lambda kx, ky: 1.0)
    measured, predicted = oc.jump_at(disp, free, 0.3)
    assert predicted == 1.0
    assert abs(measured - 1.0) <= 1e-6


def test_jump_constant_g(disp, model):
    measured, predicted = oc.jump_at(disp, model, 0.3)
    assert abs(predicted - 1.25) <= 1e-14
    assert abs(measured - predicted) <= 1e-3


def test_jump_unaffected_by_compliant_q(disp, model):
    def Qc(k0, kx, ky):
        r = abs(1j * k0 - (0.5 * (kx ** 2 + ky ** 2) - 1.0))
        return 0.05 * min(r ** 1.5, 1.0) * math.exp(-0.3 * (kx * kx + ky * ky))

    m0, p0 = oc.jump_at(disp, model, 0.7)
    mq, pq = oc.jump_at(disp, model, 0.7, Q=Qc)
    assert p0 == pq
    assert abs(m0 - p0) <= 1e-3
    assert abs(mq - pq) <= 1e-3
    assert abs(mq - m0) <= 1e-3


def test_occupation_n_converges_to_limit(disp, model):
    kx, ky = math.sqrt(2) * 1.03, 0.0
    lim, _ = oc.occupation_limit(disp, model, kx, ky)
    drift = [abs(oc.occupation_N(disp, model, kx, ky, tau)[0] - lim)
             for tau in (0.04, 0.02, 0.01)]
    assert drift[0] > drift[1] > drift[2]
    assert drift[2] <= 0.01


def test_time_domain_free_cases(disp):
    # chi table: decaying exponential inside, zero outside for x0 >= 0
    inside = 0.5  # rad where e < 0
    outside = 1.9
    assert oc.time_domain_free(disp, inside, 0.0, 0.3, 0.2) > 0.0
    assert oc.time_domain_free(disp, outside, 0.0, 0.3, 0.2) == 0.0
    assert oc.time_domain_free(disp, outside, 0.0, -0.3, 0.2) < 0.0
    with pytest.raises(ValueError):
        oc.time_domain_free(disp, inside, 0.0, 0.3, 1.2)


def test_time_domain_free_ft(disp):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(10):
        th = rng.uniform(0, 2 * np.pi)
        rad = math.sqrt(2) * (1 + rng.uniform(-0.25, 0.25))
        kx, ky = rad * math.cos(th), rad * math.sin(th)
        k0 = rng.uniform(-2, 2)
        w = rng.uniform(-0.4, 0.4)
        ft = oc.time_domain_free_ft(disp, kx, ky, k0, w)
        e = float(disp.e(kx, ky))
        U = float(disp.U(kx, ky))
        worst = max(worst, abs(ft - U / (1j * (1 - w) * k0 - e)))
    assert worst <= 1e-6


def test_fermi_sweep_free_and_angular(disp):
    free = oc.linear_self_energy(0.0, lambda kx, ky: 1.0)
    rows = oc.fermi_sweep(disp, free, npoints=6)
    assert len(rows) == 6
    assert all(r.flag == "" for r in rows)
    assert all(abs(r.jump_measured - 1.0) <= 1e-3 for r in rows)
    assert all(r.jump_predicted == 1.0 for r in rows)
    # angle-dependent g: predicted tracks 1/(1 - lam g(theta))
    lam = 0.2
    g = lambda kx, ky: 0.6 + 0.3 * np.cos(np.arctan2(ky, kx))
    m = oc.linear_self_energy(lam, g)
    rows = oc.fermi_sweep(disp, m, npoints=6)
    for r in rows:
        kx = math.sqrt(2) * math.cos(r.theta)
        ky = math.sqrt(2) * math.sin(r.theta)
        want = 1.0 / (1.0 - lam * float(g(kx, ky)))
        assert abs(r.jump_predicted - want) <= 1e-12
        assert r.abs_err <= 1e-3
    # constant-g model: constant predicted column
    rows = oc.fermi_sweep(disp, oc.linear_self_energy(0.1, lambda kx, ky: 1.0),
                          npoints=4)
    preds = {r.jump_predicted for r in rows}
    assert len(preds) == 1


def test_occupation_limit_on_curve_raises(disp, model):
    with pytest.raises(oc.SingularPointError):
        oc.occupation_limit(disp, model, 1.0, 1.0)
