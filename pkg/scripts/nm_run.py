"""Run the iteration on the reference data and print the per-step ledger."""

import argparse

from vortexsheet.nash_moser import (NMConfig, build_approximate_solution, build_compatible_traces,
                                    default_grid, reference_perturbation, run)
from vortexsheet.stability import reference_sheet


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--delta", type=float, default=1e-3)
    p.add_argument("--steps", type=int, default=8)
    p.add_argument("--theta0", type=float, default=2.0)
    args = p.parse_args()
    sheet, grid = reference_sheet(), default_grid()
    data = build_compatible_traces(*reference_perturbation(grid, args.delta), sheet, grid)
    approx = build_approximate_solution(data)
    print(f"compatibility order {data.order}, L U^a at x=0: {approx.report['L_at_x0_max']:.2e}")
    res = run(approx, sheet, NMConfig(theta0=args.theta0, N=args.steps))
    print(f"{'n':>2} {'theta':>7} {'S=I':>4} {'interior':>10} {'boundary':>10} {'eikonal':>10}"
          f" {'telescope':>10} {'constraint':>10}")
    for e in res.ledger:
        print(f"{e['n']:2d} {e['theta']:7.3f} {str(e['smoother_identity'])[0]:>4}"
              f" {e['interior_residual']:10.2e} {e['boundary_residual']:10.2e}"
              f" {e['eikonal_residual']:10.2e} {max(e['telescoping'].values()):10.2e}"
              f" {e['modified_state_constraint']:10.2e}")
    s = res.summary
    print(f"status {res.status}; ratios {s['interior_ratio']:.2e} / {s['boundary_ratio']:.2e};"
          f" wall {s['wall_time']:.1f}s")


if __name__ == "__main__":
    main()
