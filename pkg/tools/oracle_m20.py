"""Brute-force high-precision oracle for matrix elements with m, n <= 20.

Independent of the library: Hermite functions come from exact integer
polynomial coefficients evaluated by Horner's rule in 32-digit arithmetic,
and the integral is a fixed composite Gauss-Legendre rule (one panel per
local oscillation, geometric grading toward the origin).  Writes
tests/data/oracle_m20.json.

    python3 tools/oracle_m20.py [--degree 20] [--check-degree 28]
"""

import argparse
import itertools
import json
import math
import sys
import time
from pathlib import Path

import mpmath
from mpmath import mp, mpf

MMAX = 20
CUTOFF = 12.0
KS = (1.0, -1.0, 3.0, -3.0)
BETAS = (1.5, 2.0, 3.0)
MUS = (0.0, 0.1)


def hermite_coeffs(deg):
    """Physicists' H_deg as integer coefficients, lowest order first."""
    c = [[1], [0, 2]]
    for j in range(1, deg):
        prev, cur = c[j - 1], c[j]
        nxt = [0] * (j + 2)
        for i, v in enumerate(cur):
            nxt[i + 1] += 2 * v
        for i, v in enumerate(prev):
            nxt[i] -= 2 * j * v
        c.append(nxt)
    return c[: deg + 1]


def rule(degree):
    xs, ws = mpmath.gauss_quadrature(degree, "legendre")
    return [mpf(x) for x in xs], [mpf(w) for w in ws]


def panels(k, beta):
    lam_max = 2 * MMAX - 1
    edges = [mpf(0)]
    first = mpf("0.5")
    for i in range(60, 0, -1):
        edges.append(first * mpf(2) ** (-i))
    edges.append(first)
    x = float(first)
    while x < CUTOFF:
        fmax = abs(k) * beta * (x + 0.5) ** (beta - 1) + 2 * math.sqrt(lam_max)
        step = min(0.5, 2 * math.pi / fmax)
        x = min(CUTOFF, x + step)
        edges.append(mpf(x))
    return edges


def oracle_config(k, beta, mu, degree):
    coeffs = hermite_coeffs(MMAX - 1)
    norms = [1 / mpmath.sqrt(mpf(2) ** j * mpmath.factorial(j) * mpmath.sqrt(mp.pi)) for j in range(MMAX)]
    gx, gw = rule(degree)
    edges = panels(k, beta)
    acc = {}
    for m in range(1, MMAX + 1):
        for n in range(m, MMAX + 1):
            if (m + n) % 2 == 0:
                acc[(m, n)] = mpmath.mpc(0)
    kk, bb, mm = mpf(k), mpf(beta), mpf(mu)
    for a, b in zip(edges[:-1], edges[1:]):
        c, hl = (a + b) / 2, (b - a) / 2
        for t, w in zip(gx, gw):
            x = c + hl * t
            g = mpmath.exp(-x * x / 2)
            h = []
            for j in range(MMAX):
                p = mpf(0)
                for cj in reversed(coeffs[j]):
                    p = p * x + cj
                h.append(p * g * norms[j])
            wt = 2 * hl * w * (1 + x * x) ** (mm / 2) * mpmath.expj(kk * x**bb)
            for (m, n) in acc:
                acc[(m, n)] += wt * h[m - 1] * h[n - 1]
    return acc, len(edges) - 1


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--degree", type=int, default=20)
    ap.add_argument("--check-degree", type=int, default=28)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "tests" / "data" / "oracle_m20.json"))
    args = ap.parse_args(argv)
    mp.dps = 32
    out = {"meta": {"mmax": MMAX, "cutoff": CUTOFF, "dps": mp.dps, "degree": args.degree}, "configs": []}
    for beta, mu, k in itertools.product(BETAS, MUS, KS):
        t0 = time.time()
        acc, npan = oracle_config(k, beta, mu, args.degree)
        entry = {"k": k, "beta": beta, "mu": mu, "panels": npan,
                 "values": {f"{m},{n}": [float(v.real), float(v.imag)] for (m, n), v in acc.items()}}
        if k == 3.0 and mu == 0.1:
            # self-consistency of the rule at a higher degree
            acc2, _ = oracle_config(k, beta, mu, args.check_degree)
            entry["degree_check"] = float(max(abs(acc[key] - acc2[key]) for key in acc))
        out["configs"].append(entry)
        print(f"beta={beta} mu={mu} k={k}: {npan} panels, {time.time() - t0:.1f}s", file=sys.stderr, flush=True)
    Path(args.out).write_text(json.dumps(out, indent=1))


if __name__ == "__main__":
    main()
