"""Scenario runner: config parsing, batch drivers, CSV/JSON emission.

Exit codes: 0 success, 1 config/validation error, 2 budget or identity
violation, 3 numerical-tolerance failure.  Every failure also prints a
machine-readable JSON diagnostic to stderr.  Output formatting is fixed
(17 significant digits, stable column order) and all parallelism is an
ordered map, so identical configs produce byte-identical files for any
worker count.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from typing import List, Optional, Sequence

import numpy as np

from . import config as cfg
from . import hoelder as hl
from . import ladders as ld
from . import occupation as oc
from . import selfenergy as se
from .kernels import is_inversion_symmetric, make_grid, random_kernel
from .scales import ScaleModel, make_model

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_VIOLATION = 2
EXIT_TOLERANCE = 3


# ---------------------------------------------------------------------------
# emission


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def emit_csv(rows: List[dict], columns: Sequence[str]) -> str:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in columns))
    return "\n".join(lines) + "\n"


def emit_json(rows: List[dict], columns: Sequence[str]) -> str:
    payload = {"columns": list(columns),
               "rows": [[row[c] for c in columns] for row in rows]}
    return json.dumps(payload, sort_keys=True) + "\n"


def emit(rows: List[dict], columns: Sequence[str], fmt: str) -> str:
    if fmt == "csv":
        return emit_csv(rows, columns)
    if fmt == "json":
        return emit_json(rows, columns)
    raise ValueError(f"unknown format {fmt!r}")


SWEEP_COLUMNS = ("theta", "n_in", "n_out", "jump_measured", "jump_predicted",
                 "abs_err", "flag")
LADDER_COLUMNS = ("i1", "i2", "i3", "i4", "t0", "tabs", "re", "im",
                  "telescope_residual")
BUDGET_COLUMNS = ("i", "l", "d0", "d1", "d2", "measured", "allowed",
                  "ratio", "pass")
RESUM_COLUMNS = ("k0", "kx", "ky", "re_p", "im_p", "re_q", "im_q")


def _diag(kind: str, err: str, detail: str):
    print(json.dumps({"scenario": kind, "error": err, "detail": detail},
                     sort_keys=True), file=sys.stderr)


# ---------------------------------------------------------------------------
# g profiles for the jump sweep


def g_profile(name: str):
    if name == "constant":
        return lambda kx, ky: 1.0
    if name == "cosine":
        return lambda kx, ky: 0.6 + 0.3 * np.cos(np.arctan2(ky, kx))
    if name == "twolobe":
        return lambda kx, ky: 0.5 + 0.3 * np.cos(2 * np.arctan2(ky, kx))
    raise ValueError(f"unknown g profile {name!r}")


# ---------------------------------------------------------------------------
# scenarios


def run_jump_sweep(args) -> int:
    try:
        params, model_name, sections = cfg.load_config(args.config)
        sc = sections.get("scenario", {})
        disp = make_model(model_name)
        lam = float(sc.get("lambda", "0.2"))
        gname = sc.get("gprofile", "constant")
        npoints = int(sc.get("npoints", "16"))
        tol = float(sc.get("tol", "1e-3"))
        model = oc.linear_self_energy(lam, g_profile(gname))
    except (ValueError, KeyError, OSError) as exc:
        _diag("jump-sweep", "config", str(exc))
        return EXIT_CONFIG
    rows = oc.fermi_sweep(disp, model, npoints=npoints)
    table = [{"theta": r.theta, "n_in": r.n_in, "n_out": r.n_out,
              "jump_measured": r.jump_measured,
              "jump_predicted": r.jump_predicted,
              "abs_err": r.abs_err, "flag": r.flag} for r in rows]
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(emit(table, SWEEP_COLUMNS, args.format))
    bad = [r for r in rows if r.flag or not (r.abs_err <= tol)]
    if bad:
        _diag("jump-sweep", "tolerance",
              f"{len(bad)} of {len(rows)} points beyond {tol}")
        return EXIT_TOLERANCE
    return EXIT_OK


def _demo_scheme_and_family(params, disp, gridn: int, seed: int, scales_list):
    """Small momentum grid with one live shell-overlap radius per processed
    scale (so every scale's bubble lines are nonzero), shared angles to
    keep the admissible sector count small, and a random rung family."""
    from fermi2d.sectors import build_fermi_curve

    rng = np.random.default_rng(seed)
    curve = build_fermi_curve(disp)
    pts = []
    for g in range(gridn):
        th = 0.45 + 0.9 * g
        rad = float(disp.fermi_radius(th))
        for j in scales_list:
            r_t = 0.84 * params.shell_hi(j + 1)  # in shell j and nu^(>=j+1)
            e_off = 0.3 * r_t
            k0 = math.sqrt(r_t ** 2 - e_off ** 2)
            drad = e_off / rad
            pts.append((k0, (rad + drad) * math.cos(th),
                        (rad + drad) * math.sin(th)))
    grid = make_grid(pts)
    lengths = {j: curve.length / (2 * j - 1) for j in scales_list}
    scheme = ld.build_scheme(params, disp, grid, scales_list, nspin=1,
                             sector_lengths=lengths)
    fam = ld.LadderFamily(F={}, p={})
    for i in scales_list:
        fam.F[i] = random_kernel(scheme.space(i), rng, amp=1e-5, antisym=True)
    pfam = se.linear_p_family(params, imin=params.j0,
                              imax=scales_list[-1] + 1, amp0=5e-3)
    fam.p = pfam.p
    return scheme, fam


def run_ladder_demo(args) -> int:
    try:
        params = cfg.ScaleParams()
        disp = make_model("quadratic")
        nscales = int(args.scales)
        if nscales < 1 or nscales > params.jmax - params.j0:
            raise ValueError(f"--scales must be in [1, {params.jmax - params.j0}]")
        jtop = params.j0 + nscales
        scales_list = list(range(params.j0, jtop))
        scheme, fam = _demo_scheme_and_family(params, disp, int(args.grid),
                                              int(args.seed), scales_list)
    except ValueError as exc:
        _diag("ladder-demo", "config", str(exc))
        return EXIT_CONFIG
    report = ld.delta_ladder_telescope(scheme, jtop, fam, lmax=4, ltol=0.0)
    kern = report.iterated
    sp = kern.space
    ext = sp.field_indices(0)
    g = sp.grid
    rows = []
    for i1 in ext:
        for i2 in ext:
            for i3 in ext:
                for i4 in ext:
                    v = kern.values[i1, i2, i3, i4]
                    if v == 0:
                        continue
                    t0 = g.k0[sp.leg_k[i1]] - g.k0[sp.leg_k[i2]]
                    tx = g.kx[sp.leg_k[i1]] - g.kx[sp.leg_k[i2]]
                    ty = g.ky[sp.leg_k[i1]] - g.ky[sp.leg_k[i2]]
                    rows.append({"i1": int(i1), "i2": int(i2), "i3": int(i3),
                                 "i4": int(i4), "t0": float(t0),
                                 "tabs": float(math.hypot(tx, ty)),
                                 "re": float(v.real), "im": float(v.imag),
                                 "telescope_residual": float(report.residual)})
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(emit(rows, LADDER_COLUMNS, args.format))
    sym_ok = is_inversion_symmetric(report.iterated, tol=1e-11) \
        and is_inversion_symmetric(report.compound, tol=1e-11)
    if report.residual > 1e-12 or not sym_ok:
        _diag("ladder-demo", "identity",
              f"telescope residual {report.residual:.3e}, "
              f"inversion symmetric: {sym_ok}")
        return EXIT_VIOLATION
    return EXIT_OK


def _budget_table(report: se.BudgetReport) -> List[dict]:
    return [{"i": r.i, "l": r.l, "d0": r.delta[0], "d1": r.delta[1],
             "d2": r.delta[2], "measured": r.measured, "allowed": r.allowed,
             "ratio": r.ratio, "pass": int(r.passed)} for r in report.rows]


def run_norm_budget(args) -> int:
    try:
        params = cfg.ScaleParams(lambda0=float(args.lambda0),
                                 upsilon=float(args.upsilon),
                                 jmax=int(args.jmax))
        with open(args.family, "r", encoding="utf-8") as fh:
            fam = se.family_from_text(fh.read(), params)
    except (ValueError, OSError) as exc:
        _diag("norm-budget", "config", str(exc))
        return EXIT_CONFIG
    scales = ScaleModel(params, make_model("quadratic"))
    report = se.check_q_budget(fam, params, scales=scales)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(emit(_budget_table(report), BUDGET_COLUMNS, args.format))
    if not report.all_pass:
        nbad = sum(1 for r in report.rows if not r.passed)
        _diag("norm-budget", "budget",
              f"{nbad} rows violate the derivative budget; reality residual "
              f"{report.reality_residual:.3e}")
        return EXIT_VIOLATION
    return EXIT_OK


def run_resum(args) -> int:
    try:
        params = cfg.ScaleParams(lambda0=float(args.lambda0),
                                 upsilon=float(args.upsilon),
                                 jmax=int(args.jmax))
        with open(args.family, "r", encoding="utf-8") as fh:
            fam = se.family_from_text(fh.read(), params)
    except (ValueError, OSError) as exc:
        _diag("resum", "config", str(exc))
        return EXIT_CONFIG
    rng = np.random.default_rng(int(args.seed))
    rows = []
    for _ in range(int(args.nsamples)):
        k0 = float(rng.uniform(-2, 2))
        kx = float(rng.uniform(-1.4, 1.4))
        ky = float(rng.uniform(-1.4, 1.4))
        P = se.resum_P(fam, k0, kx, ky)
        Q = se.resum_Q(fam, k0, kx, ky)
        rows.append({"k0": k0, "kx": kx, "ky": ky,
                     "re_p": float(P.real), "im_p": float(P.imag),
                     "re_q": float(Q.real), "im_q": float(Q.imag)})
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(emit(rows, RESUM_COLUMNS, args.format))
    if args.check_budget:
        scales = ScaleModel(params, make_model("quadratic"))
        report = se.check_q_budget(fam, params, scales=scales)
        if not report.all_pass:
            _diag("resum", "budget", "family violates the derivative budget")
            return EXIT_VIOLATION
    return EXIT_OK


def run_hoelder_check(args) -> int:
    try:
        b = hl.ScaleBounds(alpha=float(args.alpha), beta=float(args.beta),
                           C0=float(args.c0), C1=float(args.c1),
                           M=float(args.m))
    except ValueError as exc:
        _diag("hoelder-check", "config", str(exc))
        return EXIT_CONFIG
    family = hl.saturating_family(b)
    report = hl.verify_family(b, family)
    expo, band = hl.empirical_exponent(
        lambda t: sum(f(t) for f, _ in family))
    out = {"exponent": report.exponent, "constant": report.constant,
           "maxRatio": report.max_ratio,
           "worstPair": list(report.worst_pair),
           "fittedExponent": expo, "fittedBand": band,
           "hypothesesOk": report.hypotheses_ok}
    text = json.dumps(out, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if not report.hypotheses_ok or report.max_ratio > 1.0:
        _diag("hoelder-check", "certificate",
              f"max ratio {report.max_ratio:.6f}")
        return EXIT_VIOLATION
    if abs(expo - report.exponent) > 0.05:
        _diag("hoelder-check", "tolerance",
              f"fitted exponent {expo:.4f} vs {report.exponent:.4f}")
        return EXIT_TOLERANCE
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fermi2d",
                                 description="2d Fermi liquid RG toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("jump-sweep", help="occupation jump across the Fermi curve")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--format", default="csv", choices=("csv", "json"))
    sp.set_defaults(func=run_jump_sweep)

    sp = sub.add_parser("ladder-demo", help="ladder recursions and telescoping")
    sp.add_argument("--scales", default="2")
    sp.add_argument("--grid", default="1")
    sp.add_argument("--seed", default="0")
    sp.add_argument("--out", required=True)
    sp.add_argument("--format", default="csv", choices=("csv", "json"))
    sp.set_defaults(func=run_ladder_demo)

    sp = sub.add_parser("resum", help="resum a counterterm/two-point family")
    sp.add_argument("--family", required=True)
    sp.add_argument("--check-budget", action="store_true")
    sp.add_argument("--out", default="")
    sp.add_argument("--format", default="csv", choices=("csv", "json"))
    sp.add_argument("--lambda0", default="1e-3")
    sp.add_argument("--upsilon", default="0.2")
    sp.add_argument("--jmax", default="8")
    sp.add_argument("--nsamples", default="50")
    sp.add_argument("--seed", default="0")
    sp.set_defaults(func=run_resum)

    sp = sub.add_parser("hoelder-check", help="Hoelder certificate check")
    sp.add_argument("--alpha", required=True)
    sp.add_argument("--beta", required=True)
    sp.add_argument("--c0", required=True)
    sp.add_argument("--c1", required=True)
    sp.add_argument("--m", required=True)
    sp.add_argument("--out", default="")
    sp.set_defaults(func=run_hoelder_check)

    sp = sub.add_parser("norm-budget", help="derivative-budget checker")
    sp.add_argument("--family", required=True)
    sp.add_argument("--out", default="")
    sp.add_argument("--format", default="csv", choices=("csv", "json"))
    sp.add_argument("--lambda0", default="1e-3")
    sp.add_argument("--upsilon", default="0.2")
    sp.add_argument("--jmax", default="8")
    sp.set_defaults(func=run_norm_budget)

    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
