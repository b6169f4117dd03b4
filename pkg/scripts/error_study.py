#!/usr/bin/env python3
"""Mean reconstruction error against fit order for several noise levels.

Prints one row per order plus the minimising order for each sigma.
"""

import argparse
from dataclasses import replace

import numpy as np

from pmcont.preset import load_preset
from pmcont.protocols import error_vs_order_study


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--preset", default="fig8")
    ap.add_argument("--sigmas", type=float, nargs="+", default=[1e-3, 1e-5, 1e-7])
    ap.add_argument("--probe-time", type=float)
    args = ap.parse_args()
    preset, _ = load_preset(args.preset)
    if args.probe_time is not None:
        preset = replace(preset, probe_time=args.probe_time)
    res = error_vs_order_study(preset, sigmas=args.sigmas)
    print("sigma,M,mean_error,stderr,stability_bound")
    for sigma, rows in res.items():
        for r in rows:
            print(f"{sigma!r},{r.order_M},{r.mean_error!r},{r.stderr!r},{r.stability_bound!r}")
    for sigma, rows in res.items():
        e = np.array([r.mean_error for r in rows])
        k = int(np.argmin(e))
        print(f"# sigma={sigma:g}: best M={rows[k].order_M}, err(M={rows[0].order_M})/min={e[0] / e[k]:.1f}, "
              f"err(M={rows[-1].order_M})/min={e[-1] / e[k]:.1f}")


if __name__ == "__main__":
    main()
