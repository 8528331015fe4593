#!/usr/bin/env python3
"""Dump schedule coefficients over a time grid as CSV (stdout)."""

import argparse

import numpy as np

from sysbridge import schedule


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--variant", default="sb", choices=schedule.VARIANTS)
    ap.add_argument("--b0", type=float, default=0.1)
    ap.add_argument("--b1", type=float, default=0.3)
    ap.add_argument("--sigma-max", type=float, default=10.0)
    ap.add_argument("--points", type=int, default=21)
    args = ap.parse_args()

    spec = schedule.ScheduleSpec(
        args.variant, b0=args.b0, b1=args.b1, sigma_max=args.sigma_max
    )
    cols = (
        "t,alpha,beta,gamma,dalpha_dt,dbeta_dt,dgamma_dt,"
        "dlog_alpha_dt,gnull_sq,f_range,f_null"
    )
    print(cols)
    for t in np.linspace(spec.t_min, spec.t_max, args.points):
        c = schedule.evaluate(spec, float(t))
        print(
            f"{c.t!r},{c.alpha!r},{c.beta!r},{c.gamma!r},{c.dalpha_dt!r},"
            f"{c.dbeta_dt!r},{c.dgamma_dt!r},{c.dlog_alpha_dt!r},"
            f"{c.gnull_sq!r},{c.f_range!r},{c.f_null!r}"
        )


if __name__ == "__main__":
    main()
