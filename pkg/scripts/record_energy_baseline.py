"""Record energy ratios of the manufactured linear problem on the base grid."""

import argparse
import json
from pathlib import Path

from vortexsheet.geometry import HalfSpaceGrid
from vortexsheet.linearized import planar_background
from vortexsheet.numerics import ManufacturedSolution, energy_ratio, march_linearized
from vortexsheet.stability import reference_sheet

BASE = HalfSpaceGrid(X=0.5, Nx=32, Ymax=1.0, Ny=17, Z=1.0, Nz=16)


def energy_rows(grid: HalfSpaceGrid) -> list:
    bg = planar_background(reference_sheet(), grid)
    prob, _, _ = ManufacturedSolution().problem(bg)
    sol = march_linearized(prob)
    return energy_ratio(sol.U, sol.phi, prob.f, prob.g, bg)


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "tests/data/energy_baseline.json"))
    args = p.parse_args()
    data = {"grid": BASE.to_dict(), "rows": energy_rows(BASE)}
    Path(args.out).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    for r in data["rows"]:
        print(f"gamma={r['gamma']:>3}  ratio={r['ratio']:.6e}")


if __name__ == "__main__":
    main()
