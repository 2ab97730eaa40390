"""Occupation number and its jump across the Fermi curve.

N(k, tau) = int dk0/2pi e^(i k0 tau) / (i k0 - e(k) - S(k0, k)) splits,
for any eta > 0, into

    N = I1 + I2 + I3 - I3' + I4

with I1 the linearized propagator on |k0| < eta, I2 the remainder there
(controlled by the Hoelder modulus of dS/dk0), I3 the free integral over
the whole line (known by residues), I3' its |k0| < eta part, and I4 the
interacting-minus-free tail.  The tau -> 0+ limit is evaluated through the
closed forms for I1, I3, I3' plus direct quadrature of I2 and I4, whose
integrands stay dominated at tau = 0.  Across the Fermi curve the limit
jumps by 1 / (1 - (1/i) dS/dk0(0, kbar)).
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np
from scipy import integrate

from .scales import DispersionModel


class ModelHypothesisError(ValueError):
    """The self-energy model violates a smallness/reality hypothesis."""


class QuadratureError(ArithmeticError):
    """Quadrature failed to reach the requested tolerance."""


@dataclass
class SelfEnergyModel:
    """Self-energy S(k0, k) with k0-derivative and Hoelder data for it."""

    S: Callable
    dS_dk0: Callable
    eps: float
    C: float

    def validate(self, disp: DispersionModel, samples: int = 200,
                 seed: int = 5) -> None:
        rng = np.random.default_rng(seed)
        for _ in range(samples):
            k0 = rng.uniform(-30, 30)
            kx, ky = rng.uniform(-2, 2, size=2)
            s = complex(self.S(k0, kx, ky))
            ds = complex(self.dS_dk0(k0, kx, ky))
            if abs(s) > 0.5 + 1e-12 or abs(ds) > 0.5 + 1e-12:
                raise ModelHypothesisError(
                    f"|S| or |dS/dk0| exceeds 1/2 at ({k0},{kx},{ky})")
            s0 = complex(self.S(0.0, kx, ky))
            if abs(s0) > 0.5 * abs(float(disp.e(kx, ky))) + 1e-12:
                raise ModelHypothesisError("|S(0,k)| exceeds |e(k)|/2")
            if abs(s0.imag) > 1e-12 or abs(complex(self.dS_dk0(0.0, kx, ky)).real) > 1e-12:
                raise ModelHypothesisError(
                    "S(0,k) and (1/i) dS/dk0(0,k) must be real")


def linear_self_energy(lam: float, g: Callable, k_sat: float = 1.0) -> SelfEnergyModel:
    """S = i lam q(k0) g(k), q(k0) = k0/sqrt(1+(k0/k_sat)^2).

    Linear in k0 near zero (so the jump is 1/(1 - lam g(kbar))) and
    saturating beyond |k0| ~ k_sat so that |S| <= lam sup|g| k_sat
    globally, meeting the boundedness hypotheses.
    """

    def q(k0):
        return k0 / np.sqrt(1.0 + (k0 / k_sat) ** 2)

    def dq(k0):
        return (1.0 + (k0 / k_sat) ** 2) ** -1.5

    def S(k0, kx, ky):
        return 1j * lam * q(np.asarray(k0)) * g(kx, ky)

    def dS(k0, kx, ky):
        return 1j * lam * dq(np.asarray(k0)) * g(kx, ky)

    return SelfEnergyModel(S=S, dS_dk0=dS, eps=1.0, C=1.5 * lam / k_sat ** 2)


# ---------------------------------------------------------------------------
# pointwise data


def _aer(disp, model, kx, ky):
    """A(k) = 1 - (1/i) dS/dk0(0,k), E(k) = e(k) + S(0,k), both real."""
    A = 1.0 - (complex(model.dS_dk0(0.0, kx, ky)) / 1j).real
    E = float(disp.e(kx, ky)) + complex(model.S(0.0, kx, ky)).real
    return A, E


def default_eta(disp, model, kx, ky) -> float:
    """0.5 min(1, 10 |E(k)|), floored away from zero."""
    _, E = _aer(disp, model, kx, ky)
    return max(0.5 * min(1.0, 10.0 * abs(E)), 1e-5)


def _quad_complex(f, a, b, tol, **kw):
    re, ere = integrate.quad(lambda x: f(x).real, a, b, epsabs=tol,
                             epsrel=tol, limit=300, **kw)
    im, eim = integrate.quad(lambda x: f(x).imag, a, b, epsabs=tol,
                             epsrel=tol, limit=300, **kw)
    if max(ere, eim) > 50 * tol + 1e-12:
        raise QuadratureError(f"estimated error {max(ere, eim):.2e}")
    return re + 1j * im


def _fourier_tail_quad(g, a: float, tau: float, tol: float) -> complex:
    """int_{|k0| >= a} e^(i k0 tau) g(k0) dk0 for decaying g, through
    Fourier-weight panels of the symmetric and antisymmetric parts."""

    def gp_re(x):
        return (g(x) + g(-x)).real

    def gp_im(x):
        return (g(x) + g(-x)).imag

    def gm_re(x):
        return (g(x) - g(-x)).real

    def gm_im(x):
        return (g(x) - g(-x)).imag

    kw = dict(wvar=tau, epsabs=tol, limit=400)
    c_pr, _ = integrate.quad(gp_re, a, np.inf, weight="cos", **kw)
    c_pi, _ = integrate.quad(gp_im, a, np.inf, weight="cos", **kw)
    s_mr, _ = integrate.quad(gm_re, a, np.inf, weight="sin", **kw)
    s_mi, _ = integrate.quad(gm_im, a, np.inf, weight="sin", **kw)
    # e^(i k0 tau) g + e^(-i k0 tau) g(-k0) = cos * (g+g(-)) + i sin * (g-g(-))
    return (c_pr - s_mi) + 1j * (c_pi + s_mr)


# ---------------------------------------------------------------------------
# the five pieces


def i1_quad(disp, model, kx, ky, eta: float, tau: float = 0.0,
            tol: float = 1e-10) -> complex:
    A, E = _aer(disp, model, kx, ky)

    def f(k0):
        return np.exp(1j * k0 * tau) / (1j * A * k0 - E) / (2 * math.pi)

    return _quad_complex(f, -eta, eta, tol)


def i1_closed_limit(disp, model, kx, ky, eta: float) -> float:
    """lim_{tau->0} I1 = -(sgn e / (pi A)) arctan(eta |A/E|)."""
    A, E = _aer(disp, model, kx, ky)
    e = float(disp.e(kx, ky))
    if e == 0.0:
        raise SingularPointError("on the Fermi curve")
    return -math.copysign(1.0, e) / (math.pi * A) * math.atan(eta * abs(A / E))


class SingularPointError(ZeroDivisionError):
    pass


def i2_quad(disp, model, kx, ky, eta: float, tau: float = 0.0,
            tol: float = 1e-10) -> complex:
    A, E = _aer(disp, model, kx, ky)
    S0 = complex(model.S(0.0, kx, ky))
    dS0 = complex(model.dS_dk0(0.0, kx, ky))

    def f(k0):
        R = complex(model.S(k0, kx, ky)) - S0 - dS0 * k0
        lin = 1j * A * k0 - E
        return np.exp(1j * k0 * tau) * R / (lin * (lin - R)) / (2 * math.pi)

    return _quad_complex(f, -eta, eta, tol, points=[0.0])


def i3_closed(disp, kx, ky, tau: float) -> float:
    """By residues: e^(e tau) for e < 0, zero for e > 0 (tau > 0)."""
    if tau <= 0:
        raise ValueError("closed form needs tau > 0")
    e = float(disp.e(kx, ky))
    if e == 0.0:
        raise SingularPointError("on the Fermi curve")
    return math.exp(e * tau) if e < 0 else 0.0


def i3_cutoff_quad(disp, kx, ky, tau: float, cutoff: float,
                   tol: float = 1e-10) -> complex:
    """The free integral truncated to |k0| <= cutoff (oscillatory)."""
    e = float(disp.e(kx, ky))

    def fr(k0):
        return (1.0 / (1j * k0 - e)).real / (2 * math.pi)

    def fi(k0):
        return (1.0 / (1j * k0 - e)).imag / (2 * math.pi)

    re_c, _ = integrate.quad(fr, -cutoff, cutoff, weight="cos", wvar=tau,
                             epsabs=tol, epsrel=tol, limit=3000)
    re_s, _ = integrate.quad(fi, -cutoff, cutoff, weight="sin", wvar=tau,
                             epsabs=tol, epsrel=tol, limit=3000)
    im_c, _ = integrate.quad(fi, -cutoff, cutoff, weight="cos", wvar=tau,
                             epsabs=tol, epsrel=tol, limit=3000)
    im_s, _ = integrate.quad(fr, -cutoff, cutoff, weight="sin", wvar=tau,
                             epsabs=tol, epsrel=tol, limit=3000)
    return (re_c - re_s) + 1j * (im_c + im_s)


def i3_cutoff_extrapolated(disp, kx, ky, tau: float, base_cutoff: float = 60.0,
                           tol: float = 1e-10) -> float:
    """Richardson in the inverse cutoff, cutoffs pinned to whole periods so
    the oscillatory error terms carry fixed phases (then the tail is a pure
    power series in 1/K, eliminated through 1/K^3)."""
    period = 2 * math.pi / tau
    n0 = max(1, int(math.ceil(base_cutoff / period)))
    ks = [n0 * period * 2 ** m for m in range(4)]
    vals = [complex(i3_cutoff_quad(disp, kx, ky, tau, K, tol)).real for K in ks]
    a = [2 * vals[m + 1] - vals[m] for m in range(3)]
    b = [(4 * a[m + 1] - a[m]) / 3.0 for m in range(2)]
    return (8 * b[1] - b[0]) / 7.0


def i3p_closed_limit(disp, kx, ky, eta: float) -> float:
    """tau -> 0 limit of the |k0| < eta free piece (I1 form at A=1, E=e)."""
    e = float(disp.e(kx, ky))
    if e == 0.0:
        raise SingularPointError("on the Fermi curve")
    return -math.copysign(1.0, e) / math.pi * math.atan(eta / abs(e))


def i4_quad(disp, model, kx, ky, eta: float, tau: float = 0.0,
            tol: float = 1e-10) -> complex:
    """Interacting-minus-free tail over |k0| >= eta, folded symmetrically;
    at tau > 0 the oscillation is handled by Fourier-weight panels."""
    e = float(disp.e(kx, ky))

    def g(k0):
        S = complex(model.S(k0, kx, ky))
        free = 1j * k0 - e
        return S / (free * (free - S)) / (2 * math.pi)

    if tau == 0.0:
        return _quad_complex(lambda k0: g(k0) + g(-k0), eta, np.inf, tol)
    return _fourier_tail_quad(g, eta, tau, tol)


# ---------------------------------------------------------------------------
# assembled quantities


def nq_term(disp, Q: Callable, kx, ky, tau: float = 0.0,
            tol: float = 1e-10) -> complex:
    """Contribution int dk0/2pi e^(i k0 tau) Q(k)/(i k0 - e)^2 of a
    two-point correction obeying the |Q| <= const |i k0 - e|^(3/2) bound."""
    e = float(disp.e(kx, ky))

    def g(k0):
        return complex(Q(k0, kx, ky)) / (1j * k0 - e) ** 2 / (2 * math.pi)

    if tau == 0.0:
        return _quad_complex(lambda k0: g(k0) + g(-k0), 0.0, np.inf, tol)
    return _fourier_tail_quad(g, 0.0, tau, tol)


def occupation_limit(disp, model, kx, ky, eta: Optional[float] = None,
                     quad_tol: float = 1e-9, Q: Optional[Callable] = None):
    """N(k) = lim_{tau->0+} N(k, tau) via the closed forms for I1, I3, I3'
    and direct quadrature of I2, I4 at tau = 0.

    Returns (value, imaginary residual); the residual must stay within the
    quadrature tolerance for reality-symmetric models.
    """
    e = float(disp.e(kx, ky))
    if e == 0.0:
        raise SingularPointError("N(k) jumps across the Fermi curve")
    if eta is None:
        eta = default_eta(disp, model, kx, ky)
    total = complex(i1_closed_limit(disp, model, kx, ky, eta))
    total += i2_quad(disp, model, kx, ky, eta, 0.0, quad_tol)
    total += 1.0 if e < 0 else 0.0
    total -= i3p_closed_limit(disp, kx, ky, eta)
    total += i4_quad(disp, model, kx, ky, eta, 0.0, quad_tol)
    if Q is not None:
        total += nq_term(disp, Q, kx, ky, 0.0, quad_tol)
    return total.real, abs(total.imag)


def occupation_N(disp, model, kx, ky, tau: float, eta: Optional[float] = None,
                 quad_tol: float = 1e-9, Q: Optional[Callable] = None):
    """N(k, tau) at tau > 0 (all five pieces, oscillatory tails included)."""
    if tau <= 0:
        raise ValueError("use occupation_limit for the tau -> 0+ value")
    if eta is None:
        eta = default_eta(disp, model, kx, ky)
    total = i1_quad(disp, model, kx, ky, eta, tau, quad_tol)
    total += i2_quad(disp, model, kx, ky, eta, tau, quad_tol)
    total += i3_closed(disp, kx, ky, tau)
    total -= i1_quad(disp, _free_model(), kx, ky, eta, tau, quad_tol)
    total += i4_quad(disp, model, kx, ky, eta, tau, quad_tol)
    if Q is not None:
        total += nq_term(disp, Q, kx, ky, tau, quad_tol)
    return total.real, abs(total.imag)


def _free_model() -> SelfEnergyModel:
    zero = lambda k0, kx, ky: 0.0 * np.asarray(k0)
    return SelfEnergyModel(S=zero, dS_dk0=zero, eps=1.0, C=0.0)


def jump_predicted(model, kx, ky) -> float:
    """[1 - (1/i) dS/dk0(0, kbar)]^(-1)."""
    A = 1.0 - (complex(model.dS_dk0(0.0, kx, ky)) / 1j).real
    return 1.0 / A


def jump_at(disp, model, theta: float, deltas=(4e-3, 2e-3, 1e-3),
            quad_tol: float = 1e-9, Q: Optional[Callable] = None):
    """Measure the jump at the Fermi point with angle theta.

    N is evaluated at radial offsets straddling the curve and extrapolated
    to the curve by polynomial (Richardson-style) extrapolation in the
    offset.  Returns (measured, predicted).
    """
    rad = float(disp.fermi_radius(theta))
    nx, ny = math.cos(theta), math.sin(theta)
    kbx, kby = rad * nx, rad * ny

    def n_at(offset):
        val, _ = occupation_limit(disp, model, (rad + offset) * nx,
                                  (rad + offset) * ny, quad_tol=quad_tol, Q=Q)
        return val

    ds = np.asarray(deltas, dtype=float)
    inside = [n_at(-d) for d in ds]    # e < 0 side
    outside = [n_at(+d) for d in ds]
    n_in = _extrapolate_to_zero(ds, inside)
    n_out = _extrapolate_to_zero(ds, outside)
    return (n_in - n_out), jump_predicted(model, kbx, kby)


def _extrapolate_to_zero(xs, ys) -> float:
    """Neville polynomial extrapolation to x = 0."""
    xs = list(map(float, xs))
    ys = list(map(float, ys))
    n = len(xs)
    tab = list(ys)
    for m in range(1, n):
        for i in range(n - m):
            tab[i] = ((0.0 - xs[i + m]) * tab[i] + (xs[i] - 0.0) * tab[i + 1]) \
                / (xs[i] - xs[i + m])
    return tab[0]


@dataclass
class SweepRow:
    theta: float
    n_in: float
    n_out: float
    jump_measured: float
    jump_predicted: float
    abs_err: float
    flag: str = ""


def fermi_sweep(disp, model, npoints: int = 16, deltas=(4e-3, 2e-3, 1e-3),
                quad_tol: float = 1e-9, Q: Optional[Callable] = None,
                workers: Optional[int] = None) -> List[SweepRow]:
    """Jump measurement at npoints equally spaced Fermi-curve angles.

    Rows are deterministic and ordered by angle; per-point failures are
    recorded in the row flag rather than raised.  Worker-count only chunks
    the evaluation (ordered map), so results never depend on it.
    """
    thetas = [2 * math.pi * t / npoints for t in range(npoints)]
    if workers is None:
        workers = int(os.environ.get("FERMI2D_WORKERS", "1"))

    def one(theta):
        rad = float(disp.fermi_radius(theta))
        nx, ny = math.cos(theta), math.sin(theta)
        try:
            measured, predicted = jump_at(disp, model, theta, deltas,
                                          quad_tol, Q)
            n_in, _ = occupation_limit(disp, model, (rad - deltas[-1]) * nx,
                                       (rad - deltas[-1]) * ny,
                                       quad_tol=quad_tol, Q=Q)
            n_out, _ = occupation_limit(disp, model, (rad + deltas[-1]) * nx,
                                        (rad + deltas[-1]) * ny,
                                        quad_tol=quad_tol, Q=Q)
            return SweepRow(theta=theta, n_in=n_in, n_out=n_out,
                            jump_measured=measured, jump_predicted=predicted,
                            abs_err=abs(measured - predicted))
        except (QuadratureError, SingularPointError, ModelHypothesisError) as exc:
            return SweepRow(theta=theta, n_in=math.nan, n_out=math.nan,
                            jump_measured=math.nan, jump_predicted=math.nan,
                            abs_err=math.nan, flag=type(exc).__name__)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, thetas))
    else:
        rows = [one(t) for t in thetas]
    return rows


# ---------------------------------------------------------------------------
# time-domain free kernel


def time_domain_free(disp, kx, ky, x0: float, w: float) -> float:
    """Free time-domain kernel with quasiparticle weight renormalized by w:

        (1/(1-w)) U(k) exp(x0 e/(1-w)) chi(k, x0)

    where chi is 1 for e < 0, x0 >= 0; -1 for e > 0, x0 < 0; else 0.
    Its temporal Fourier transform is U(k) / (i (1-w) k0 - e(k)).
    """
    if abs(w) >= 1.0:
        raise ValueError("|w| must be below 1")
    e = float(disp.e(kx, ky))
    if e < 0 and x0 >= 0:
        chi = 1.0
    elif e > 0 and x0 < 0:
        chi = -1.0
    else:
        chi = 0.0
    if chi == 0.0:
        return 0.0
    U = float(disp.U(kx, ky))
    return U / (1.0 - w) * math.exp(x0 * e / (1.0 - w)) * chi


def time_domain_free_ft(disp, kx, ky, k0: float, w: float,
                        tol: float = 1e-11) -> complex:
    """Quadrature of the temporal Fourier transform of the free kernel
    (one-sided decaying exponential times e^(-i k0 x0), via Fourier-weight
    panels on the half line)."""
    e = float(disp.e(kx, ky))
    if e == 0.0:
        raise SingularPointError("on the Fermi curve")

    def envelope(t):
        # |kernel| along the active half line, in the variable t >= 0
        return time_domain_free(disp, kx, ky, t if e < 0 else -t, w)

    if k0 == 0.0:
        val, _ = integrate.quad(envelope, 0.0, np.inf, epsabs=tol, epsrel=tol)
        return complex(val)
    cosi, _ = integrate.quad(envelope, 0.0, np.inf, weight="cos", wvar=k0,
                             epsabs=tol, limit=300)
    sini, _ = integrate.quad(envelope, 0.0, np.inf, weight="sin", wvar=k0,
                             epsabs=tol, limit=300)
    if e < 0:
        # int_0^inf env(t) e^(-i k0 t) dt
        return cosi - 1j * sini
    # int_{-inf}^0 env(-x0) ... dx0 = int_0^inf env(t) e^(+i k0 t) dt
    return cosi + 1j * sini
