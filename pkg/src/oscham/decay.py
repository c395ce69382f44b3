"""Decay exponents and grid verification of the matrix-element decay bound.

The bound ``|I(m,n)| <= C C_{k,beta} (mn)^{-l(beta,mu)}`` has an unspecified
absolute constant, so a scan can only test that the compensated sequence
``|I| (mn)^l`` does not grow.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from ._pool import pmap
from .quadrature import OscIntegralQuery, matrix_element

__all__ = [
    "DecayLaw",
    "DecayScanReport",
    "ScanPoint",
    "l_exponent",
    "mu_window",
    "mu_admissible",
    "c_k_beta",
    "decay_law",
    "decay_scan",
    "doubling_modes",
    "DEFAULT_BANDS",
]

DEFAULT_BANDS = (0, 2, 8, 32)
FIT_MIN_MN = 1e3
SLOPE_TOL = 0.02


def _check_beta(beta: float) -> None:
    if not beta > 1 or not math.isfinite(beta):
        raise ValueError(f"beta must be > 1 (got {beta}); beta = 1 is a different regime")


def mu_window(beta: float) -> float:
    """Supremum of admissible mu for the given beta (strict upper bound)."""
    _check_beta(beta)
    if beta < 2:
        return beta / 6.0
    if beta == 2:
        return 2.0 / 9.0
    return (beta - 2.0) / (4.0 * beta - 2.0)


def l_exponent(beta: float, mu: float) -> float:
    """Decay exponent ``l(beta, mu) = (window(beta) - mu) / 4``."""
    if not mu >= 0:
        raise ValueError(f"mu must be >= 0, got {mu}")
    return 0.25 * (mu_window(beta) - mu)


def mu_admissible(beta: float, mu: float) -> bool:
    return 0.0 <= mu < mu_window(beta)


def c_k_beta(k: float, beta: float) -> float:
    _check_beta(beta)
    if k == 0 or not math.isfinite(k):
        raise ValueError("k must be nonzero")
    ak = abs(k)
    if beta < 2:
        return max(abs(beta * (beta - 1) * (beta - 2) * k) ** (-1.0 / 3.0), 1.0 / ak, ak ** (1.0 / (4 - 2 * beta)))
    if beta == 2:
        return max(1.0 / ak, 1.0)
    return max(1.0 / (beta * ak), 1.0)


@dataclass(frozen=True)
class DecayLaw:
    k: float
    beta: float
    mu: float
    l_star: float
    c_k_beta: float


def decay_law(k: float, beta: float, mu: float) -> DecayLaw:
    return DecayLaw(k=k, beta=beta, mu=mu, l_star=l_exponent(beta, mu), c_k_beta=c_k_beta(k, beta))


@dataclass(frozen=True)
class ScanPoint:
    m: int
    n: int
    value: complex
    abs_err: float

    @property
    def magnitude(self) -> float:
        return abs(self.value)


@dataclass
class DecayScanReport:
    law: DecayLaw
    grid: list = field(default_factory=list)
    envelope_sup: float = 0.0
    fit_slope: float = float("nan")
    compensated_slope: float = float("nan")
    half_ratio: float = 1.0
    passed: bool = True

    def compensated(self, p: ScanPoint) -> float:
        return p.magnitude * (p.m * p.n) ** self.law.l_star / self.law.c_k_beta

    def rows(self):
        for p in self.grid:
            yield (p.m, p.n, p.value.real, p.value.imag, p.magnitude, self.compensated(p))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["m", "n", "reI", "imI", "absI", "compensated"])
        for m, n, re, im, ab, comp in self.rows():
            w.writerow([m, n] + [format(v, ".17g") for v in (re, im, ab, comp)])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "k": self.law.k,
            "beta": self.law.beta,
            "mu": self.law.mu,
            "l_star": self.law.l_star,
            "c_k_beta": self.law.c_k_beta,
            "points": len(self.grid),
            "envelope_sup": self.envelope_sup,
            "fit_slope": _json_float(self.fit_slope),
            "compensated_slope": _json_float(self.compensated_slope),
            "half_ratio": self.half_ratio,
            "pass": self.passed,
        }


def _json_float(v):
    return None if not math.isfinite(v) else v


def doubling_modes(lo: int, hi: int, per_octave: int = 1) -> list[int]:
    """Geometric mode grid ``lo * 2^(i/per_octave)`` rounded, up to ``hi``."""
    out = []
    i = 0
    while True:
        m = int(round(lo * 2.0 ** (i / per_octave)))
        if m > hi:
            break
        if not out or m != out[-1]:
            out.append(m)
        i += 1
    return out


def _pairs(modes, diag_only, bands):
    if diag_only:
        return [(m, m) for m in modes]
    if bands is None:
        return [(m, n) for i, m in enumerate(modes) for n in modes[i:] if (m + n) % 2 == 0]
    offsets = sorted(set(int(b) for b in bands))
    if any(d < 0 for d in offsets):
        raise ValueError("band offsets must be >= 0")
    return [(m, m + d) for m in modes for d in offsets]


def _element(pair, k, beta, mu, abs_tol, rel_tol):
    m, n = pair
    r = matrix_element(OscIntegralQuery(m, n, k, beta, mu), abs_tol=abs_tol, rel_tol=rel_tol)
    return ScanPoint(m, n, r.value, r.abs_error_estimate)


def _slope(x, y):
    if len(x) < 2:
        return float("nan")
    return float(np.polyfit(x, y, 1)[0])


def decay_scan(
    k: float,
    beta: float,
    mu: float,
    modes,
    diag_only: bool = True,
    bands=None,
    workers: int | None = None,
    abs_tol: float = 1e-10,
    rel_tol: float = 1e-8,
) -> DecayScanReport:
    """Scan ``|I(m,n)|`` over a mode grid and test the compensated trend.

    ``pass`` requires a finite envelope and a least-squares slope of
    ``log(|I| (mn)^l)`` against ``log(mn)`` of at most +0.02 on diagonal
    points with ``mn >= 1000`` (all diagonal points if fewer than two qualify).
    Odd ``m + n`` entries are exact zeros and are left out of every fit.
    """
    if not mu_admissible(beta, mu):
        raise ValueError(f"mu={mu} outside the admissible window [0, {mu_window(beta):.6g}) for beta={beta}")
    modes = [int(m) for m in modes]
    if any(m < 1 for m in modes):
        raise ValueError("modes must be positive")
    if modes != sorted(modes):
        raise ValueError("modes must be sorted ascending")
    law = decay_law(k, beta, mu)
    report = DecayScanReport(law=law)
    if not modes:
        return report

    pairs = _pairs(modes, diag_only, bands)
    job = partial(_element, k=k, beta=beta, mu=mu, abs_tol=abs_tol, rel_tol=rel_tol)
    report.grid = pmap(job, pairs, workers)

    nonzero = [p for p in report.grid if p.magnitude > 0]
    comps = np.array([report.compensated(p) for p in nonzero])
    report.envelope_sup = float(max((p.magnitude * (p.m * p.n) ** law.l_star for p in nonzero), default=0.0))

    diag = [p for p in nonzero if p.m == p.n]
    fit = [p for p in diag if p.m * p.n >= FIT_MIN_MN]
    if len(fit) < 2:
        fit = diag
    lx = np.log([p.m * p.n for p in fit]) if fit else np.zeros(0)
    report.fit_slope = _slope(lx, np.log([p.magnitude for p in fit])) if fit else float("nan")
    report.compensated_slope = _slope(lx, np.log([report.compensated(p) for p in fit])) if fit else float("nan")

    if diag:
        dcomp = [report.compensated(p) for p in diag]
        half = dcomp[: max(1, (len(dcomp) + 1) // 2)]
        report.half_ratio = float(max(half) / max(dcomp))
    trend_ok = not (report.compensated_slope > SLOPE_TOL)
    report.passed = bool(np.all(np.isfinite(comps)) and math.isfinite(report.envelope_sup) and trend_ok)
    return report
