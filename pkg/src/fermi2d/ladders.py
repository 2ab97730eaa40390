"""Bubble propagators, ladder convolutions and iterated ladder recursions.

The bubble propagator of two momentum-space lines A, B is the symmetrized
two-line product A(.)B(.) + B(.)A(.); between sectorized rung legs each
line is diagonal in (momentum, spin), flips the creation/annihilation
index, and leaves the sector sums free.  Ladders compose rungs through
bubbles by contracting the adjoining internal legs only.

Three recursions are provided: the scale-dependent iterated particle-hole
ladder (counterterm sum u_j grows with the scale), the compound ladder
with one fixed momentum function v in both covariance lines, and the
closed-form route through flipped kernels (24F + L + L^f chains); the two
compound routes agree identically, and the difference between iterated
and compound telescopes over scales.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .kernels import (EXT, INT, Kernel4, KernelSpace, Leg, MomentumGrid,
                      antisymmetrize, flip, reduce_ph, sector_norm_p,
                      value_ph, zero_kernel)
from .scales import HypothesisViolationError, ScaleInterval, ScaleModel
from .sectors import Sectorization, build_fermi_curve, build_sectorization, \
    hat_weights


class LadderDivergenceError(RuntimeError):
    """The rung-bubble iteration stopped decaying."""


# ---------------------------------------------------------------------------
# bubbles and single ladders


@dataclass(frozen=True)
class BubbleProp:
    """Symmetrized two-line bubble over one kernel space."""

    space: KernelSpace
    line_a: np.ndarray  # (n_int, n_int) line matrix of the first propagator
    line_b: np.ndarray
    label: str = ""


def line_matrix(space: KernelSpace, vals_per_k: np.ndarray) -> np.ndarray:
    """Propagator line between internal legs: diagonal in (momentum, spin),
    bar-flipping on directed spaces, sector sums left free."""
    ii = space.field_indices(INT)
    legs = [space.legs[i] for i in ii]
    M = np.zeros((len(ii), len(ii)), dtype=complex)
    for a, ga in enumerate(legs):
        for b, gb in enumerate(legs):
            if ga.k != gb.k or ga.spin != gb.spin:
                continue
            if space.directed and ga.bar == gb.bar:
                continue
            M[a, b] = vals_per_k[ga.k]
    return M


def propagator_line_values(space: KernelSpace, prop: Callable) -> np.ndarray:
    g = space.grid
    return np.array([prop(g.k0[i], g.kx[i], g.ky[i]) for i in range(len(g))],
                    dtype=complex)


def bubble(space: KernelSpace, A: Callable, B: Callable,
           label: str = "") -> BubbleProp:
    """Bubble propagator of two momentum-space propagators."""
    va = propagator_line_values(space, A)
    vb = propagator_line_values(space, B)
    return BubbleProp(space=space, line_a=line_matrix(space, va),
                      line_b=line_matrix(space, vb), label=label)


def compose(left: np.ndarray, bub: BubbleProp, rung: np.ndarray) -> np.ndarray:
    """left . C(A,B) . rung, contracting the adjoining internal legs."""
    ii = bub.space.field_indices(INT)
    lv = left[:, :, ii, :][:, :, :, ii]
    rv = rung[ii][:, ii]
    t = np.einsum("abwx,wp,xq->abpq", lv, bub.line_a, bub.line_b, optimize=True) \
        + np.einsum("abwx,wp,xq->abpq", lv, bub.line_b, bub.line_a, optimize=True)
    return np.einsum("abpq,pqcd->abcd", t, rv, optimize=True)


def ladder_L(ell: int, rung: Kernel4, bub: BubbleProp) -> Kernel4:
    """The ladder with ell+1 identical rungs and ell bubbles."""
    if ell < 1:
        raise ValueError("ladders need at least one bubble")
    vals = rung.values
    for _ in range(ell):
        vals = compose(vals, bub, rung.values)
    return Kernel4(rung.space, vals)


def bubble_ph_kernel(und_space: KernelSpace, a_vals_per_k: np.ndarray,
                     b_vals_per_k: np.ndarray) -> Kernel4:
    """The ph-reduced bubble as a four-legged kernel over undirected
    internal legs (diagonal pairing), for symmetry checks."""
    ii = und_space.field_indices(INT)
    legs = [und_space.legs[i] for i in ii]
    vals = np.zeros((und_space.n,) * 4, dtype=complex)
    for a, ga in enumerate(legs):
        for b, gb in enumerate(legs):
            v = a_vals_per_k[ga.k] * b_vals_per_k[gb.k] \
                + b_vals_per_k[ga.k] * a_vals_per_k[gb.k]
            vals[ii[a], ii[b], ii[a], ii[b]] = v
    return Kernel4(und_space, vals)


# ---------------------------------------------------------------------------
# desk-scale geometry scheme


@dataclass
class LadderScheme:
    """Per-scale kernel spaces over one shared momentum grid, with
    sector-refinement maps between consecutive scales."""

    scales: ScaleModel
    grid: MomentumGrid
    nspin: int
    sectorizations: Dict[int, Sectorization]
    sec_ids: Dict[int, List[int]]
    dir_spaces: Dict[int, KernelSpace]
    und_spaces: Dict[int, KernelSpace]
    _resect_cache: Dict[Tuple[int, int, bool], np.ndarray] = field(default_factory=dict)

    def space(self, j: int, directed: bool = True) -> KernelSpace:
        return self.dir_spaces[j] if directed else self.und_spaces[j]

    def _resect_matrix(self, i: int, j: int, directed: bool) -> np.ndarray:
        key = (i, j, directed)
        if key in self._resect_cache:
            return self._resect_cache[key]
        src = self.space(i, directed)
        dst = self.space(j, directed)
        secz = self.sectorizations[j]
        hats = hat_weights(secz)
        curve = secz.curve
        R = np.zeros((dst.n, src.n), dtype=float)
        for col, g in enumerate(src.legs):
            if g.field != INT:
                R[dst.index[g], col] = 1.0
                continue
            s_arc = float(curve.arc_position(self.grid.kx[g.k], self.grid.ky[g.k]))
            placed = 0.0
            for loc, full in enumerate(self.sec_ids[j]):
                w = float(hats[full](s_arc))
                if w <= 0.0:
                    continue
                tgt = Leg(INT, g.k, g.spin, g.bar, loc)
                if tgt not in dst.index:
                    raise RuntimeError(
                        f"refinement target sector {full} at scale {j} lost "
                        f"grid point {g.k}")
                R[dst.index[tgt], col] += w
                placed += w
            if abs(placed - 1.0) > 1e-12:
                raise RuntimeError(
                    f"refinement weights sum to {placed}, expected 1")
        self._resect_cache[key] = R
        return R

    def resectorize(self, kern: Kernel4, i: int, j: int) -> Kernel4:
        """Distribute a scale-i kernel over the scale-j sectorization."""
        if i == j:
            return kern
        if j < i:
            raise ValueError("resectorization must go to a finer scale")
        directed = kern.space.directed
        R = self._resect_matrix(i, j, directed)
        from .kernels import _apply_per_axis
        return Kernel4(self.space(j, directed),
                       _apply_per_axis(kern.values, [R] * 4))

    def covariance_values(self, interval: ScaleInterval,
                          u: Optional[Callable]) -> np.ndarray:
        g = self.grid
        return np.array([self.scales.covariance(interval, u, g.k0[i],
                                                g.kx[i], g.ky[i])
                         for i in range(len(g))], dtype=complex)

    def scale_bubble(self, j: int, u: Optional[Callable],
                     directed: bool = True) -> BubbleProp:
        """C(C^(j)_u, C^(>=j+1)_u) over the scale-j space."""
        sp = self.space(j, directed)
        va = self.covariance_values(ScaleInterval.at(j), u)
        vb = self.covariance_values(ScaleInterval.ge(j + 1), u)
        return BubbleProp(space=sp, line_a=line_matrix(sp, va),
                          line_b=line_matrix(sp, vb),
                          label=f"C(C^({j}), C^(>= {j + 1}))")


def build_scheme(params, disp, grid: MomentumGrid, scales_needed,
                 nspin: int = 1,
                 sector_lengths: Optional[Dict[int, float]] = None) -> LadderScheme:
    """Construct per-scale spaces; sectors are restricted to those whose
    extended support contains at least one grid momentum."""
    model = ScaleModel(params, disp)
    curve = build_fermi_curve(disp)
    sector_lengths = sector_lengths or {}
    sectorizations, sec_ids, dir_spaces, und_spaces = {}, {}, {}, {}
    for j in scales_needed:
        secz = build_sectorization(params, curve, j,
                                   length_override=sector_lengths.get(j))
        ids = []
        ok_rows = []
        for s in secz:
            row = np.array([s.ext_contains(disp, grid.kx[i], grid.ky[i])
                            for i in range(len(grid))], dtype=bool)
            if row.any():
                ids.append(s.index)
                ok_rows.append(row)
        if not ids:
            raise ValueError(f"no scale-{j} sector touches the grid")
        sec_ok = np.array(ok_rows, dtype=bool)
        sectorizations[j] = secz
        sec_ids[j] = ids
        dir_spaces[j] = KernelSpace(grid, nspin=nspin, nsec=len(ids),
                                    sec_ok=sec_ok, fields=(EXT, INT),
                                    directed=True)
        und_spaces[j] = dir_spaces[j].undirected()
    return LadderScheme(scales=model, grid=grid, nspin=nspin,
                        sectorizations=sectorizations, sec_ids=sec_ids,
                        dir_spaces=dir_spaces, und_spaces=und_spaces)


# ---------------------------------------------------------------------------
# scale families and recursions


@dataclass
class LadderFamily:
    """Rung family F^(i) (directed kernels at their native scales) and
    counterterm momentum functions p^(i)."""

    F: Dict[int, Kernel4]
    p: Dict[int, Callable]

    def u_below(self, j: int) -> Optional[Callable]:
        """u_j = sum_{i < j} p^(i) as a momentum function."""
        funcs = [f for i, f in sorted(self.p.items()) if i < j]
        if not funcs:
            return None

        def u(k0, kx, ky):
            return sum(f(k0, kx, ky) for f in funcs)

        return u

    def v_total(self) -> Optional[Callable]:
        funcs = [f for _, f in sorted(self.p.items())]
        if not funcs:
            return None

        def v(k0, kx, ky):
            return sum(f(k0, kx, ky) for f in funcs)

        return v


@dataclass
class RecursionTrace:
    """Per-scale record of one recursion run."""

    w: Dict[int, Kernel4] = field(default_factory=dict)
    delta: Dict[int, Kernel4] = field(default_factory=dict)
    ell_norms: Dict[int, List[float]] = field(default_factory=dict)


def _ladder_sum_ph(scheme: LadderScheme, j: int, w: Kernel4, bub: BubbleProp,
                   lmax: int, ltol: float,
                   bub_alt: Optional[BubbleProp] = None,
                   norms_out: Optional[List[float]] = None):
    """2 sum_l (-1)^l 12^(l+1) L_l(w; .)^ph, optionally minus the same sum
    with an alternate bubble (used for the telescoping difference)."""
    und = scheme.space(j, directed=False)
    acc = zero_kernel(und)
    vals = w.values
    vals_alt = w.values if bub_alt is not None else None
    total = 0.0
    prev_tnorm = None
    grow = 0
    for ell in range(1, lmax + 1):
        vals = compose(vals, bub, w.values)
        coef = 2.0 * ((-1) ** ell) * 12.0 ** (ell + 1)
        term = coef * reduce_ph(Kernel4(w.space, vals), und).values
        if bub_alt is not None:
            vals_alt = compose(vals_alt, bub_alt, w.values)
            term = term - coef * reduce_ph(Kernel4(w.space, vals_alt), und).values
        tnorm = float(np.abs(term).max())
        if norms_out is not None:
            norms_out.append(tnorm)
        acc.values += term
        total = max(total, tnorm)
        if prev_tnorm is not None and tnorm >= prev_tnorm > 0.0:
            grow += 1
            if grow >= 3:
                raise LadderDivergenceError(
                    f"ladder terms not decaying at scale {j} (ell={ell})")
        else:
            grow = 0
        prev_tnorm = tnorm
        if ltol > 0.0 and tnorm <= ltol * max(total, 1e-300):
            break
    return acc


def _assemble_w(scheme: LadderScheme, j: int, family_F: Dict[int, Kernel4],
                Lprev: Kernel4, lscale: int) -> Kernel4:
    dsp = scheme.space(j, directed=True)
    w = zero_kernel(dsp)
    for i in sorted(family_F):
        if i <= j:
            w.values += scheme.resectorize(family_F[i], i, j).values
    emb = antisymmetrize(value_ph(Lprev, scheme.space(lscale, directed=True)))
    w.values += scheme.resectorize(emb, lscale, j).values / 8.0
    return w


def _check_small(scheme: LadderScheme, v: Optional[Callable]):
    if v is None:
        return
    g = scheme.grid
    for i in range(len(g)):
        A = scheme.scales.amputation(g.k0[i], g.kx[i], g.ky[i])
        if abs(v(g.k0[i], g.kx[i], g.ky[i])) > 0.5 * abs(A):
            raise HypothesisViolationError(
                f"|v(k)| > |i k0 - e|/2 at grid point {i}")


def iterated_ladder(scheme: LadderScheme, jtop: int, family: LadderFamily,
                    lmax: int = 12, ltol: float = 1e-10,
                    trace: Optional[RecursionTrace] = None,
                    v_alt: Optional[Callable] = "unset") -> Kernel4:
    """Iterated particle-hole ladder up to scale jtop (covariances built
    from the running counterterm sum u_j).  When v_alt is given, the trace
    also records the per-scale covariance-swap differences delta L^(j)."""
    j0 = scheme.scales.params.j0
    L = zero_kernel(scheme.space(j0, directed=False))
    lscale = j0
    want_delta = v_alt != "unset"
    for j in range(j0, jtop):
        Lj = scheme.resectorize(L, lscale, j)
        w = _assemble_w(scheme, j, family.F, L, lscale)
        uj = family.u_below(j)
        _check_small(scheme, uj)
        norms: List[float] = []
        bub = scheme.scale_bubble(j, uj)
        step = _ladder_sum_ph(scheme, j, w, bub, lmax, ltol, norms_out=norms)
        if trace is not None:
            trace.w[j] = w
            trace.ell_norms[j] = norms
            if want_delta:
                bub_v = scheme.scale_bubble(j, v_alt)
                trace.delta[j] = _ladder_sum_ph(scheme, j, w, bub, lmax, ltol,
                                                bub_alt=bub_v)
        L = Kernel4(Lj.space, Lj.values + step.values)
        lscale = j
    return L


def compound_ladder(scheme: LadderScheme, jtop: int, v: Optional[Callable],
                    family_F: Dict[int, Kernel4], lmax: int = 12,
                    ltol: float = 1e-10,
                    trace: Optional[RecursionTrace] = None) -> Kernel4:
    """Compound particle-hole ladder: one fixed v in both covariances."""
    _check_small(scheme, v)
    j0 = scheme.scales.params.j0
    L = zero_kernel(scheme.space(j0, directed=False))
    lscale = j0
    for j in range(j0, jtop):
        Lj = scheme.resectorize(L, lscale, j)
        w = _assemble_w(scheme, j, family_F, L, lscale)
        bub = scheme.scale_bubble(j, v)
        step = _ladder_sum_ph(scheme, j, w, bub, lmax, ltol)
        if trace is not None:
            trace.w[j] = w
        L = Kernel4(Lj.space, Lj.values + step.values)
        lscale = j
    return L


def ladder_closed_form(scheme: LadderScheme, jtop: int, v: Optional[Callable],
                      family_F: Dict[int, Kernel4], lmax: int = 12,
                      ltol: float = 1e-10) -> Kernel4:
    """Compound ladder through the flipped-kernel closed form:
    chains of (24 F + L + L^f) joined by ph-reduced bubbles; agrees with
    compound_ladder identically."""
    _check_small(scheme, v)
    j0 = scheme.scales.params.j0
    L = zero_kernel(scheme.space(j0, directed=False))
    lscale = j0
    for j in range(j0, jtop):
        und = scheme.space(j, directed=False)
        Lj = scheme.resectorize(L, lscale, j)
        F = zero_kernel(und)
        for i in sorted(family_F):
            if i <= j:
                F.values += reduce_ph(scheme.resectorize(family_F[i], i, j)).values
        big = Kernel4(und, 24.0 * F.values + Lj.values + flip(Lj).values)
        bub = scheme.scale_bubble(j, v, directed=False)
        acc = np.zeros_like(big.values)
        vals = big.values
        for ell in range(1, lmax + 1):
            vals = compose(vals, bub, big.values)
            term = ((-1.0) ** ell) * vals
            acc += term
            if ltol > 0.0 and np.abs(term).max() <= ltol * max(np.abs(acc).max(), 1e-300):
                break
        L = Kernel4(und, Lj.values + acc)
        lscale = j
    return L


@dataclass
class TelescopeReport:
    residual: float
    per_scale_delta_norms: Dict[int, float]
    iterated: Kernel4
    compound: Kernel4


def delta_ladder_telescope(scheme: LadderScheme, jtop: int,
                           family: LadderFamily, lmax: int = 12,
                           ltol: float = 1e-10) -> TelescopeReport:
    """Evaluate the scale-swap telescoping identity.

    The iterated ladder (running u_j) and the compound ladder with the full
    counterterm sum v and the corrected rung family F' are computed
    independently; their difference must equal the sum of the per-scale
    covariance-swap corrections, resectorized to the final scale.
    """
    v = family.v_total()
    trace = RecursionTrace()
    it = iterated_ladder(scheme, jtop, family, lmax, ltol, trace=trace,
                         v_alt=v)
    # corrected rung family F' (scale by scale, from the recorded w_j)
    fam_prime: Dict[int, Kernel4] = {}
    j0 = scheme.scales.params.j0
    for i in sorted(family.F):
        fam_prime[i] = family.F[i].copy()
    for j in range(j0, jtop - 1):
        w = trace.w[j]
        und = scheme.space(j, directed=False)
        bub_v = scheme.scale_bubble(j, v)
        bub_u = scheme.scale_bubble(j, family.u_below(j))
        diff = _ladder_sum_ph(scheme, j, w, bub_v, lmax, ltol, bub_alt=bub_u)
        # diff = 2 sum (-1)^l 12^(l+1) [L_l(v) - L_l(u_j)]^ph ; the rung
        # correction carries 1/4 of the embedded difference
        corr = antisymmetrize(value_ph(diff, scheme.space(j, directed=True)))
        corr = scheme.resectorize(corr, j, j + 1)
        tgt = j + 1
        if tgt not in fam_prime:
            fam_prime[tgt] = zero_kernel(scheme.space(tgt, directed=True))
        fam_prime[tgt] = Kernel4(fam_prime[tgt].space,
                                 fam_prime[tgt].values - corr.values / 8.0)
    comp = compound_ladder(scheme, jtop, v, fam_prime, lmax, ltol)
    # sum of per-scale corrections at the final sectorization
    total = zero_kernel(scheme.space(jtop - 1, directed=False))
    norms = {}
    for j, d in trace.delta.items():
        norms[j] = d.max_abs()
        total.values += scheme.resectorize(d, j, jtop - 1).values
    residual = float(np.abs(it.values - comp.values - total.values).max())
    return TelescopeReport(residual=residual, per_scale_delta_norms=norms,
                           iterated=it, compound=comp)


# ---------------------------------------------------------------------------
# decay report


@dataclass
class DecayReport:
    entries: List[Tuple[int, float]]
    slope: float


def ladder_decay_report(rung: Kernel4, bub: BubbleProp, lmax: int) -> DecayReport:
    """Per-ell sector norms of L_ell and the fitted log-linear slope."""
    entries: List[Tuple[int, float]] = []
    vals = rung.values
    for ell in range(1, lmax + 1):
        vals = compose(vals, bub, rung.values)
        entries.append((ell, sector_norm_p(Kernel4(rung.space, vals), 3)))
    pos = [(ell, n) for ell, n in entries if n > 0.0]
    if len(pos) >= 2:
        xs = np.array([e for e, _ in pos], dtype=float)
        ys = np.log([n for _, n in pos])
        slope = float(np.polyfit(xs, ys, 1)[0])
    else:
        slope = float("-inf")
    return DecayReport(entries=entries, slope=slope)
