"""Harmonic-oscillator eigenfunctions and turning-point quantities.

Indices follow the convention ``T h_m = (2m - 1) h_m`` with ``m >= 1``, so
``h_m`` is the physicists' Hermite function of degree ``m - 1``.
Only this convention is exposed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import hankel1

__all__ = [
    "OscillatorMode",
    "EvalRegime",
    "LangerApproximant",
    "TurningPointError",
    "oscillator_mode",
    "eigenvalue",
    "turning_point",
    "hermite_eval",
    "hermite_rows",
    "hermite_deriv",
    "zeta",
    "zeta_evanescent",
    "eval_regime",
    "wkb_amplitude",
    "langer_psi1",
    "langer_approximant",
    "lp_exponent",
    "lp_norm",
]

_PI_M14 = np.pi ** -0.25
_RENORM_EVERY = 32


class TurningPointError(ValueError):
    """Raised when the Langer approximant is requested too close to X_m."""


@dataclass(frozen=True)
class OscillatorMode:
    m: int
    lam: float
    turning_point: float


@dataclass(frozen=True)
class EvalRegime:
    tag: str  # "oscillatory" | "turning" | "evanescent"
    w: float


@dataclass(frozen=True)
class LangerApproximant:
    mode: OscillatorMode
    x: float
    zeta: float
    value: complex


def _check_index(m) -> int:
    if isinstance(m, (bool, np.bool_)) or int(m) != m:
        raise ValueError(f"mode index must be an integer, got {m!r}")
    m = int(m)
    if m < 1:
        raise ValueError(f"mode index must be >= 1, got {m}")
    return m


def eigenvalue(m: int) -> float:
    """Return ``lambda_m = 2m - 1``."""
    m = _check_index(m)
    return float(2 * m - 1)


def turning_point(m: int) -> float:
    return float(np.sqrt(eigenvalue(m)))


def oscillator_mode(m: int) -> OscillatorMode:
    lam = eigenvalue(m)
    return OscillatorMode(m=int(m), lam=lam, turning_point=float(np.sqrt(lam)))


def hermite_rows(rows, x) -> np.ndarray:
    """Evaluate ``h_m(x)`` for every ``m`` in ``rows``.

    Returns an array of shape ``(len(rows),) + np.shape(x)``.  The normalized
    three-term recurrence is run on a scaled pair; every 32 steps the pair is
    divided by its magnitude and the logarithm of the divisor is carried
    separately, so neither the Gaussian factor nor the polynomial growth
    overflows.
    """
    rows = [_check_index(r) for r in np.atleast_1d(rows)]
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    out = np.zeros((len(rows),) + x.shape)
    if not rows:
        return out
    want: dict[int, list[int]] = {}
    for pos, r in enumerate(rows):
        want.setdefault(r, []).append(pos)
    top = max(rows)

    log_scale = -0.5 * x * x
    p_prev = np.zeros_like(x)
    p_cur = np.full_like(x, _PI_M14)
    for j in range(top):
        m = j + 1
        if m in want:
            val = _unscale(p_cur, log_scale)
            for pos in want[m]:
                out[pos] = val
        if m == top:
            break
        p_next = np.sqrt(2.0 / (j + 1)) * x * p_cur - np.sqrt(j / (j + 1.0)) * p_prev
        p_prev, p_cur = p_cur, p_next
        if (j + 1) % _RENORM_EVERY == 0:
            s = np.maximum(np.abs(p_prev), np.abs(p_cur))
            s = np.where(s > 0, s, 1.0)
            p_prev = p_prev / s
            p_cur = p_cur / s
            log_scale = log_scale + np.log(s)
    return out


def _unscale(p, log_scale):
    with np.errstate(divide="ignore"):
        mag = np.log(np.abs(p)) + log_scale
    return np.sign(p) * np.exp(mag)


def hermite_eval(m: int, x):
    """Normalized Hermite function ``h_m(x)``, ``||h_m||_{L^2} = 1``."""
    val = hermite_rows([m], x)[0]
    return float(val) if np.ndim(val) == 0 else val


def hermite_deriv(m: int, x):
    """``h_m'(x) = -x h_m(x) + sqrt(2(m-1)) h_{m-1}(x)``."""
    m = _check_index(m)
    x = np.asarray(x, dtype=float)
    if m == 1:
        d = -x * hermite_rows([1], x)[0]
    else:
        hm1, hm = hermite_rows([m - 1, m], x)
        d = -x * hm + np.sqrt(2.0 * (m - 1)) * hm1
    return float(d) if np.ndim(d) == 0 else d


def zeta(m: int, x):
    """Oscillatory-side action ``int_{X_m}^x sqrt(lambda_m - t^2) dt`` for 0 <= x <= X_m."""
    lam = eigenvalue(m)
    X = np.sqrt(lam)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("zeta is defined for x >= 0")
    if np.any(x > X * (1 + 1e-14)):
        raise ValueError("zeta requires x <= X_m; use zeta_evanescent beyond the turning point")
    x = np.minimum(x, X)
    val = 0.5 * (x * np.sqrt(np.maximum(lam - x * x, 0.0)) + lam * np.arcsin(x / X)) - 0.25 * np.pi * lam
    val = np.minimum(np.where(x == X, 0.0, val), 0.0)
    return float(val) if np.ndim(val) == 0 else val


def zeta_evanescent(m: int, x):
    """``int_{X_m}^x sqrt(t^2 - lambda_m) dt`` for x >= X_m (nonnegative)."""
    lam = eigenvalue(m)
    X = np.sqrt(lam)
    x = np.asarray(x, dtype=float)
    if np.any(x < X * (1 - 1e-14)):
        raise ValueError("zeta_evanescent requires x >= X_m")
    x = np.maximum(x, X)
    val = 0.5 * (x * np.sqrt(x * x - lam) - lam * np.arccosh(x / X))
    val = np.maximum(val, 0.0)
    return float(val) if np.ndim(val) == 0 else val


def eval_regime(m: int, x: float) -> EvalRegime:
    """Classify ``|x|`` relative to X_m with half-width ``w = X_m^{-1/3}``."""
    X = turning_point(m)
    w = X ** (-1.0 / 3.0)
    ax = abs(float(x))
    if abs(ax - X) <= w:
        tag = "turning"
    elif ax < X:
        tag = "oscillatory"
    else:
        tag = "evanescent"
    return EvalRegime(tag=tag, w=w)


def wkb_amplitude(m: int, x):
    """Local amplitude ``sqrt(2/pi) (lambda_m - x^2)^{-1/4}`` inside the well."""
    lam = eigenvalue(m)
    x = np.asarray(x, dtype=float)
    return np.sqrt(2.0 / np.pi) * (lam - x * x) ** -0.25


def langer_psi1(m: int, x):
    """Hankel-form turning-point approximant of ``h_m``.

    Inside the well the result is the travelling-wave combination
    ``sqrt(2/pi) e^{i pi/6} (lambda-x^2)^{-1/4} sqrt(pi|zeta|/2) H^{(1)}_{1/3}(|zeta|)``
    whose real part approximates ``h_m``; beyond X_m the Hankel function is
    taken at ``i zeta`` and the value is real.  Not defined within
    ``X_m^{-1/3}/8`` of the turning point.
    """
    lam = eigenvalue(m)
    X = np.sqrt(lam)
    xs = np.asarray(x, dtype=float)
    if np.any(xs < 0):
        raise ValueError("langer_psi1 is defined for x >= 0")
    excl = X ** (-1.0 / 3.0) / 8.0
    if np.any(np.abs(xs - X) < excl):
        raise TurningPointError(f"|x - X_{m}| < {excl:.3g}: Langer approximant unreliable near the turning point")
    out = np.empty(xs.shape, dtype=complex)
    pre = np.sqrt(2.0 / np.pi) * np.exp(1j * np.pi / 6.0)
    inside = xs < X
    if np.any(inside):
        xi = xs[inside]
        s = -np.asarray(zeta(m, xi))
        out[inside] = pre * (lam - xi * xi) ** -0.25 * np.sqrt(0.5 * np.pi * s) * hankel1(1.0 / 3.0, s)
    if np.any(~inside):
        xo = xs[~inside]
        s = np.asarray(zeta_evanescent(m, xo))
        val = 0.5j * pre * (xo * xo - lam) ** -0.25 * np.sqrt(0.5 * np.pi * s) * hankel1(1.0 / 3.0, 1j * s)
        out[~inside] = np.where(np.isfinite(val), val, 0.0)
    return complex(out) if out.ndim == 0 else out


def langer_approximant(m: int, x: float) -> LangerApproximant:
    mode = oscillator_mode(m)
    x = float(x)
    z = zeta(m, x) if x <= mode.turning_point else zeta_evanescent(m, x)
    return LangerApproximant(mode=mode, x=x, zeta=float(z), value=langer_psi1(m, x))


def lp_exponent(p: float) -> float:
    """Exponent rho(p) in ``||h||_p <= mu^{rho(p)} ||h||_2`` (eigenvalue mu^2)."""
    if p == np.inf:
        return -1.0 / 6.0
    if 2 <= p < 4:
        return -(0.5 - 1.0 / p)
    if p > 4:
        return -1.0 / 3.0 + (0.5 - 1.0 / p) / 3.0
    raise ValueError(f"rho(p) is not defined for p={p}")


def lp_norm(m: int, p: float) -> float:
    """Numerical ``||h_m||_{L^p(R)}`` on a grid resolving the local wavelength."""
    X = turning_point(m)
    right = X + 6.0 * X ** (-1.0 / 3.0) + 8.0
    h = min(0.02, 0.05 / X, 0.02 * X ** (-1.0 / 3.0))
    npts = int(np.ceil(right / h)) + 1
    x = np.linspace(0.0, right, npts)
    v = np.abs(hermite_rows([m], x)[0])
    if p == np.inf:
        i = int(np.argmax(v))
        lo, hi = x[max(i - 1, 0)], x[min(i + 1, npts - 1)]
        fine = np.linspace(lo, hi, 201)
        return float(max(v.max(), np.abs(hermite_rows([m], fine)[0]).max()))
    # even integrand in |h|^p: twice the half-line integral
    return float((2.0 * np.trapezoid(v**p, x)) ** (1.0 / p))
