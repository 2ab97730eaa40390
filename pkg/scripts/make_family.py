#!/usr/bin/env python3
"""Generate a counterterm/two-point family file for the budget tools.

The q members saturate the derivative budget at the given fraction; pass
--scale 3 to produce a violating family for negative tests.
"""
import argparse
import sys

from fermi2d import selfenergy as se
from fermi2d.config import ScaleParams


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lambda0", type=float, default=1e-3)
    ap.add_argument("--upsilon", type=float, default=0.2)
    ap.add_argument("--jmax", type=int, default=5)
    ap.add_argument("--scale", type=float, default=1.0)
    ap.add_argument("--out", default="family.txt")
    args = ap.parse_args()

    params = ScaleParams(lambda0=args.lambda0, upsilon=args.upsilon,
                         jmax=args.jmax)
    fam = se.saturating_q_family(params, scale=args.scale)
    pfam = se.linear_p_family(params)
    fam.p, fam.dp_dk0, fam.p_amp = pfam.p, pfam.dp_dk0, pfam.p_amp
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(se.family_to_text(fam, params))
    print(f"{len(fam.q)} q members, {len(fam.p)} p members -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
