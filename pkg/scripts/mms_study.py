"""Grid-refinement study of the linear march against a manufactured solution."""

import argparse
import json

from vortexsheet.geometry import HalfSpaceGrid
from vortexsheet.numerics import mms_study
from vortexsheet.stability import reference_sheet


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--nx", type=int, default=32)
    p.add_argument("--json", default=None, help="write the full study here")
    args = p.parse_args()
    base = HalfSpaceGrid(X=0.5, Nx=args.nx, Ymax=1.0, Ny=17, Z=1.0, Nz=16)
    st = mms_study(reference_sheet(), base, args.levels)
    print(f"{'h':>10} {'U_l2':>12} {'phi_l2':>12} {'bc_trunc':>12} {'interior':>10} {'boundary':>10}")
    for r in st["rows"]:
        print(f"{r['h']:10.5f} {r['U_l2']:12.4e} {r['phi_l2']:12.4e} {r['bc_truncation']:12.4e}"
              f" {r['interior_max']:10.2e} {r['boundary_max']:10.2e}")
    print(f"order U {st['order_U']:.3f}  phi {st['order_phi']:.3f}  bc {st['order_bc']:.3f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(st, fh, indent=2, default=float)


if __name__ == "__main__":
    main()
