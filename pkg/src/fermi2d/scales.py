"""Dispersion model, UV cutoff, scale functions and cutoff covariances.

The scale decomposition lives in the single variable r(k) = |i k0 - e(k)|.
The j-th scale function nu_j is supported on the shell

    1/(sqrt(M) M^j)  <=  r(k)  <=  sqrt(2 M)/M^j

and only adjacent shells overlap.  The first scale j0 is special: it
absorbs everything between the top of its shell and the ultraviolet cutoff
(the first scales are always integrated out together), so that

    sum_{j=j0..J} nu_j(k) + nu_{>J}(k) = U(k)    pointwise, exactly.

Covariances are C^I_u(k) = nu^I(k) / (i k0 - e(k) - u(k)) for a scale
interval I, under the smallness hypothesis |u| <= |i k0 - e|/2 on the
support of nu^I.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np


class NotInSupportError(ValueError):
    """Momentum lies outside the ultraviolet cutoff / all shells."""


class ScaleRangeError(ValueError):
    """Scale index outside [j0, Jmax]."""


class HypothesisViolationError(ValueError):
    """A smallness hypothesis (|u| <= |A|/2 on shell support) failed."""


class Momentum(NamedTuple):
    """A (d+1)-momentum (k0, kx, ky) with d = 2."""

    k0: float
    kx: float
    ky: float


def momentum(k0: float, kvec) -> Momentum:
    k = Momentum(float(k0), float(kvec[0]), float(kvec[1]))
    if not all(math.isfinite(c) for c in k):
        raise ValueError(f"non-finite momentum {k}")
    return k


def _smoothstep(t):
    """C^2 quintic step: 0 at t<=0, 1 at t>=1, vanishing s' and s'' at ends."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 + t * (6.0 * t - 15.0))


def ramp_down(x, lo, hi):
    """C^2 ramp: 1 for x <= lo, 0 for x >= hi."""
    return 1.0 - _smoothstep((np.asarray(x, dtype=float) - lo) / (hi - lo))


@dataclass(frozen=True)
class DispersionModel:
    """Dispersion e(k) (chemical potential absorbed) and UV cutoff U(k).

    e and U take (kx, ky) as scalars or numpy arrays.  fermi_radius(theta)
    parametrizes the Fermi curve e = 0 radially; it exists for every model
    this package ships (radially monotone dispersions).
    """

    e: Callable
    U: Callable
    mu: float
    name: str
    fermi_radius: Callable

    def grad_e(self, kx, ky, h: float = 1e-6):
        """Central-difference gradient of the dispersion."""
        gx = (self.e(kx + h, ky) - self.e(kx - h, ky)) / (2 * h)
        gy = (self.e(kx, ky + h) - self.e(kx, ky - h)) / (2 * h)
        return gx, gy


def quadratic_model(anisotropy: float = 1.0) -> DispersionModel:
    """e(k) = (kx^2 + a ky^2)/2 - 1, UV cutoff supported in |e| <= 1.

    a = 1 gives the circular Fermi curve of radius sqrt(2); a != 1 is a
    config-selectable anisotropic variant (unused by the shipped tests).
    """
    a = float(anisotropy)
    if a <= 0:
        raise ValueError("anisotropy must be positive")

    def e(kx, ky):
        return 0.5 * (np.asarray(kx) ** 2 + a * np.asarray(ky) ** 2) - 1.0

    def U(kx, ky):
        return ramp_down(np.abs(e(kx, ky)), 0.5, 1.0)

    def fermi_radius(theta):
        th = np.asarray(theta, dtype=float)
        return np.sqrt(2.0 / (np.cos(th) ** 2 + a * np.sin(th) ** 2))

    name = "quadratic" if a == 1.0 else f"quadratic:{a}"
    return DispersionModel(e=e, U=U, mu=1.0, name=name, fermi_radius=fermi_radius)


def make_model(name: str) -> DispersionModel:
    """Build a dispersion model from its config name."""
    if name == "quadratic":
        return quadratic_model()
    if name.startswith("quadratic:"):
        return quadratic_model(float(name.split(":", 1)[1]))
    raise ValueError(f"unknown dispersion model {name!r}")


@dataclass(frozen=True)
class ScaleInterval:
    """A set of scales: single shell, finite range, or half-line.

    lo=None means "from the first scale j0"; hi=None means "all scales
    deeper than lo-1" (including everything below the deepest shell).
    """

    lo: Optional[int]
    hi: Optional[int]

    @staticmethod
    def at(j: int) -> "ScaleInterval":
        return ScaleInterval(j, j)

    @staticmethod
    def le(j: int) -> "ScaleInterval":
        return ScaleInterval(None, j)

    @staticmethod
    def ge(j: int) -> "ScaleInterval":
        return ScaleInterval(j, None)

    @staticmethod
    def range(i: int, j: int) -> "ScaleInterval":
        return ScaleInterval(i, j)

    def __str__(self):
        if self.lo is None and self.hi is None:
            return "(all)"
        if self.lo is None:
            return f"(<= {self.hi})"
        if self.hi is None:
            return f"(>= {self.lo})"
        if self.lo == self.hi:
            return f"({self.lo})"
        return f"[{self.lo}, {self.hi}]"


@dataclass(frozen=True)
class Propagator:
    """A momentum-space covariance with a recorded scale support."""

    eval: Callable
    support: ScaleInterval
    label: str = ""

    def __call__(self, k0, kx, ky):
        return self.eval(k0, kx, ky)


class ScaleModel:
    """Scale functions, shells and covariances for one dispersion model."""

    def __init__(self, params, disp: DispersionModel):
        self.params = params
        self.disp = disp
        self._a = math.sqrt(params.M)
        self._b = math.sqrt(2.0 * params.M)

    # -- geometry -----------------------------------------------------

    def radius(self, k0, kx, ky):
        """r(k) = |i k0 - e(k)|."""
        e = self.disp.e(kx, ky)
        return np.hypot(np.asarray(k0, dtype=float), e)

    def amputation(self, k0, kx, ky):
        """A(k) = i k0 - e(k), the amputation factor of external legs."""
        return 1j * np.asarray(k0, dtype=float) - self.disp.e(kx, ky)

    def _phi(self, j: int, r):
        """Cumulative profile: 1 deep inside scale >= j, 0 above its shell."""
        return ramp_down((self.params.M ** j) * np.asarray(r, dtype=float),
                         self._a, self._b)

    def _check_scale(self, j: int, hi_slack: int = 0):
        p = self.params
        if not (p.j0 <= j <= p.jmax + hi_slack):
            raise ScaleRangeError(f"scale {j} outside [{p.j0}, {p.jmax + hi_slack}]")

    # -- scale functions ----------------------------------------------

    def nu(self, j: int, k0, kx, ky):
        """nu^(j)(k).  The first scale absorbs the ultraviolet remainder."""
        self._check_scale(j)
        p = self.params
        r = self.radius(k0, kx, ky)
        U = self.disp.U(kx, ky)
        if j == p.j0:
            return U * (1.0 - self._phi(j + 1, r))
        return U * (self._phi(j, r) - self._phi(j + 1, r))

    def nu_le(self, j: int, k0, kx, ky):
        """nu^(<=j) = sum_{m=j0..j} nu^(m)."""
        self._check_scale(j)
        U = self.disp.U(kx, ky)
        return U * (1.0 - self._phi(j + 1, self.radius(k0, kx, ky)))

    def nu_ge(self, j: int, k0, kx, ky):
        """nu^(>=j) = sum_{m>=j} nu^(m), including the deep tail."""
        self._check_scale(j, hi_slack=1)
        p = self.params
        U = self.disp.U(kx, ky)
        if j == p.j0:
            return U * np.ones_like(np.asarray(k0, dtype=float))
        return U * self._phi(j, self.radius(k0, kx, ky))

    def nu_gt(self, j: int, k0, kx, ky):
        return self.nu_ge(j + 1, k0, kx, ky)

    def nu_interval(self, interval: ScaleInterval, k0, kx, ky):
        lo, hi = interval.lo, interval.hi
        if lo is None and hi is None:
            return self.disp.U(kx, ky) * np.ones_like(np.asarray(k0, dtype=float))
        if lo is None:
            return self.nu_le(hi, k0, kx, ky)
        if hi is None:
            return self.nu_ge(lo, k0, kx, ky)
        if lo == hi:
            return self.nu(lo, k0, kx, ky)
        self._check_scale(lo)
        self._check_scale(hi)
        if lo > hi:
            raise ScaleRangeError(f"empty interval [{lo}, {hi}]")
        p = self.params
        r = self.radius(k0, kx, ky)
        U = self.disp.U(kx, ky)
        if lo == p.j0:
            return U * (1.0 - self._phi(hi + 1, r))
        return U * (self._phi(lo, r) - self._phi(hi + 1, r))

    def scale_of(self, k0, kx, ky) -> int:
        """Smallest m with nu^(m)(k) > 0; deep points go to Jmax."""
        p = self.params
        if not self.disp.U(kx, ky) > 0.0:
            raise NotInSupportError(f"k=({k0},{kx},{ky}) outside supp U")
        for m in range(p.j0, p.jmax + 1):
            if self.nu(m, k0, kx, ky) > 0.0:
                return m
        return p.jmax

    # -- covariances ---------------------------------------------------

    def covariance(self, interval: ScaleInterval, u: Optional[Callable],
                   k0, kx, ky):
        """C^I_u(k) = nu^I(k) / (i k0 - e(k) - u(k)).

        Raises HypothesisViolationError when the denominator drops below
        half the free amputation factor on the support of nu^I.
        """
        nu = self.nu_interval(interval, k0, kx, ky)
        A = self.amputation(k0, kx, ky)
        if u is None:
            uval = 0.0
        else:
            uval = u(k0, kx, ky)
        den = A - uval
        nu_arr = np.asarray(nu)
        bad = (nu_arr > 0) & (np.abs(den) < 0.5 * np.abs(A))
        if np.any(bad):
            raise HypothesisViolationError(
                f"|i k0 - e - u| < |i k0 - e|/2 on the support of nu^{interval}")
        out = np.where(nu_arr > 0, nu_arr / np.where(nu_arr > 0, den, 1.0), 0.0)
        if np.ndim(nu) == 0:
            return complex(out)
        return out

    def propagator(self, interval: ScaleInterval, u: Optional[Callable] = None,
                   label: str = "") -> Propagator:
        def ev(k0, kx, ky):
            return self.covariance(interval, u, k0, kx, ky)

        return Propagator(eval=ev, support=interval, label=label or f"C^{interval}")
