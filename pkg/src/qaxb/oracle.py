"""Independent high-precision oracle for the quantum exponential function.

Everything here is computed with mpmath (tanh-sinh / Gauss-Legendre in
arbitrary precision) in the original integration variable, with no code
shared with the double-precision evaluators:

* plain values come from the defining integral on (0, inf);
* shifted values come from a contour displaced into the upper half-plane
  around the pole at a = e^-x.  The contour stays inside the sector
  |arg a| < pi/theta, where the principal branch of log(1 + a^-theta) is
  the analytic continuation from the positive axis, so no branch tracking
  is needed.

The module doubles as an executable that emits a CSV table with columns
``theta,x,re,im`` for consumption by the test suite:

    qaxb-oracle --theta 6 --kind plain --grid -8:8:65 --out table.csv
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import tempfile

import mpmath as mp

DEFAULT_DPS = 40


def _phase_integral_mp(theta, x):
    """Defining integral at real x, as an mpf."""
    a0 = mp.e ** (-mp.mpf(x))

    def integrand(a):
        return mp.log(1 + a ** (-theta)) / (a + a0)

    points = sorted({mp.mpf(0), mp.mpf(1), a0}) + [mp.inf]
    return mp.quad(integrand, points)


def theta_fn_oracle(theta, x, dps: int = DEFAULT_DPS):
    """High-precision value of the unimodular function at real x."""
    with mp.workdps(dps):
        val = mp.e ** (_phase_integral_mp(theta, x) / (2 * mp.pi * 1j))
        return complex(val)


def _contour_integral_mp(theta, x):
    """Integral of log(1+a^-theta)/(a - a0) along a contour above the pole."""
    a0 = mp.e ** (-mp.mpf(x))
    h = mp.mpf("0.8") * a0 * mp.tan(mp.pi / (2 * theta))

    def integrand(a):
        return mp.log(1 + a ** (-theta)) / (a - a0)

    path = [
        mp.mpf(0),
        a0 / 2,
        a0 / 2 + 1j * h,
        3 * a0 / 2 + 1j * h,
        3 * a0 / 2,
        4 * a0,
        mp.inf,
    ]
    return mp.quad(integrand, path)


def theta_fn_shifted_oracle(theta, x, dps: int = DEFAULT_DPS):
    """High-precision boundary value at x - i*pi via the deformed contour."""
    with mp.workdps(dps):
        val = mp.e ** (_contour_integral_mp(theta, x) / (2 * mp.pi * 1j))
        return complex(val)


def qexp_oracle(theta, r, rho: int = 0, dps: int = DEFAULT_DPS):
    """High-precision quantum exponential at (r, rho)."""
    if r == 0:
        return 1.0 + 0.0j
    if r > 0:
        if rho != 0:
            raise ValueError("r > 0 requires rho = 0")
        return theta_fn_oracle(theta, math.log(r), dps)
    if rho not in (-1, 1):
        raise ValueError("r < 0 requires rho = +-1")
    with mp.workdps(dps):
        x = mp.log(-mp.mpf(r))
        vs = mp.e ** (_contour_integral_mp(theta, x) / (2 * mp.pi * 1j))
        val = (1 + 1j * rho * mp.e ** (theta * x / 2)) * vs
        return complex(val)


def _parse_grid(spec: str):
    lo, hi, n = spec.split(":")
    lo, hi, n = float(lo), float(hi), int(n)
    if n < 1:
        raise ValueError("grid must have at least one point")
    if n == 1:
        return [lo]
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def emit_table(theta, xs, kind, dps, stream):
    stream.write("theta,x,re,im\n")
    fn = theta_fn_oracle if kind == "plain" else theta_fn_shifted_oracle
    for x in xs:
        v = fn(theta, x, dps)
        stream.write(f"{theta:.17g},{x:.17g},{v.real:.17g},{v.imag:.17g}\n")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="qaxb-oracle",
        description="emit a high-precision CSV table (theta,x,re,im) of the "
                    "unimodular special function or its shifted boundary value")
    parser.add_argument("--theta", type=float, required=True)
    parser.add_argument("--kind", choices=("plain", "shifted"), default="plain")
    parser.add_argument("--grid", default="-8:8:65", help="lo:hi:count, inclusive")
    parser.add_argument("--dps", type=int, default=DEFAULT_DPS)
    parser.add_argument("--out", default="-", help="output path, '-' for stdout")
    args = parser.parse_args(argv)

    xs = _parse_grid(args.grid)
    if args.out == "-":
        emit_table(args.theta, xs, args.kind, args.dps, sys.stdout)
        return 0
    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    fd, tmp = tempfile.mkstemp(dir=out_dir, suffix=".csv.tmp")
    try:
        with os.fdopen(fd, "w") as stream:
            emit_table(args.theta, xs, args.kind, args.dps, stream)
        os.replace(tmp, args.out)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
