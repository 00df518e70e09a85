"""Print fitted constants of the smoothing bound families and their spreads."""

import argparse

from vortexsheet.smoothing import default_bound_check


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--scale", type=float, default=4.0)
    args = p.parse_args()
    rep = default_bound_check(scale=args.scale)
    d = rep.to_dict()
    print("thetas", rep.thetas)
    for fam, consts in rep.constants.items():
        print(f"[{fam}]")
        for key, vals in consts.items():
            cs = " ".join(f"{v:9.3e}" for v in vals)
            print(f"  {key:>6} spread {d['spread'][fam][key]:6.3f}  {cs}")


if __name__ == "__main__":
    main()
