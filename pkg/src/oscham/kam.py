"""Reducibility iteration for xi' = -i (N + eps P(omega t)) xi on a mode truncation.

Each step conjugates by ``U = exp(-i F(theta))`` with ``F`` solving the
homological equation ``omega . dF + i [N, F] = R - [R]`` (harmonics up to K),
moves the theta-average diagonal ``[R]`` into ``N`` and pushes the rest of
``R`` through the Lie series.  The new remainder is

    R+ = [R] + R_{>K} + sum_{n>=1} ad^n (R / n! - res / (n+1)!),   ad(Y) = Y X - X Y,

with ``X = -i F`` and ``res`` the part removed by ``F``; ``[R]`` is then moved to N.
The series is evaluated pointwise on a uniform theta grid.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .perturbation import TruncatedOperator, malpha_norm, malpha_weights

__all__ = [
    "SpectrumModel",
    "MelnikovParams",
    "KamSchedule",
    "KamState",
    "MeasureEstimate",
    "SmallDivisorError",
    "ResonanceError",
    "DivergenceError",
    "spectrum_model",
    "check_A1",
    "is_nonresonant",
    "excluded_measure",
    "excluded_measure_exact_1d",
    "fit_measure_exponents",
    "homological_solve",
    "homological_residual",
    "kam_iterate",
    "compose_transform",
    "transform_closeness",
    "normal_form_shift",
    "GOLDEN",
]

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


class SmallDivisorError(ArithmeticError):
    def __init__(self, j, a, b, divisor, threshold):
        self.j, self.a, self.b = tuple(int(v) for v in j), int(a), int(b)
        self.divisor, self.threshold = float(divisor), float(threshold)
        super().__init__(f"small divisor {self.divisor:.3e} < {self.threshold:.3e} at j={self.j}, a={self.a}, b={self.b}")


class ResonanceError(ArithmeticError):
    pass


class DivergenceError(ArithmeticError):
    pass


@dataclass(frozen=True)
class SpectrumModel:
    lambdas: np.ndarray
    c0: float = 1.0
    c1: float = 2.0
    c2: float = 1.0


def spectrum_model(A: int) -> SpectrumModel:
    return SpectrumModel(lambdas=2.0 * np.arange(1, A + 1) - 1.0)


def check_A1(A: int, c0: float = 1.0, c1: float = 2.0, c2: float = 1.0):
    """Exhaustive check of ``c1 a >= lambda_a >= c2 a`` and ``|lambda_a - lambda_b| >= c0 |a - b|``."""
    if A < 2:
        raise ValueError("A must be >= 2")
    a = np.arange(1, A + 1, dtype=float)
    lam = 2 * a - 1
    ok = bool(np.all(c1 * a >= lam) and np.all(lam >= c2 * a))
    gap = np.abs(lam[:, None] - lam[None, :])
    ok = ok and bool(np.all(gap >= c0 * np.abs(a[:, None] - a[None, :])))
    return (c0, c1, c2, ok)


@dataclass(frozen=True)
class MelnikovParams:
    kappa: float
    K: float

    def __post_init__(self):
        if not 0 < self.kappa < 0.25:
            raise ValueError(f"kappa must lie in (0, 1/4), got {self.kappa}")
        if not self.K > 0:
            raise ValueError(f"K must be positive, got {self.K}")


def _k_vectors(n: int, K: float) -> np.ndarray:
    """Integer vectors with 0 < |k|_1 <= K, one of each pair {k, -k}."""
    Kf = int(math.floor(K))
    rng = range(-Kf, Kf + 1)
    ks = [k for k in itertools.product(rng, repeat=n) if 0 < sum(map(abs, k)) <= Kf]
    # the condition is symmetric under (k, j) -> (-k, -j)
    ks = [k for k in ks if k > tuple(-v for v in k)]
    return np.array(ks, dtype=float).reshape(-1, n)


def _resonant_mask(omegas: np.ndarray, kappa: float, K: float, A: int) -> np.ndarray:
    """True where some ``0 < |k| <= K``, ``|j| <= 2A`` violates ``|k.omega + j| >= kappa (1 + |j|)``."""
    n = omegas.shape[1]
    ks = _k_vectors(n, K)
    jmax = 2 * A
    out = np.zeros(len(omegas), dtype=bool)
    for k in ks:
        x = omegas @ k
        # a violating j satisfies |x + j| < kappa (1 + |x|) / (1 - kappa)
        reach = kappa * (1 + np.abs(x)) / (1 - kappa)
        span = int(math.ceil(float(reach.max(initial=0.0)))) + 1
        jc = np.rint(-x)
        for d in range(-span, span + 1):
            j = jc + d
            out |= (np.abs(j) <= jmax) & (np.abs(x + j) < kappa * (1 + np.abs(j)))
    return out


def is_nonresonant(omega, p: MelnikovParams, A: int) -> bool:
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if np.any(omega < 0) or np.any(omega > 2 * math.pi):
        raise ValueError("omega must lie in [0, 2 pi]^n")
    return not bool(_resonant_mask(omega[None, :], p.kappa, p.K, A)[0])


@dataclass(frozen=True)
class MeasureEstimate:
    estimate: float
    std_err: float
    samples: int
    ceiling: float
    c3: float

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "std_err": self.std_err, "samples": self.samples,
                "ceiling": self.ceiling, "c3": self.c3}


def excluded_measure(p: MelnikovParams, A: int, samples: int, n: int = 1, seed: int = 0,
                     c3: float | None = None, chunk: int = 200_000) -> MeasureEstimate:
    """Monte-Carlo measure of the resonant set in ``[0, 2 pi]^n``.

    ``ceiling = c3 K^(n+1) kappa``; ``c3`` defaults to the reference scale ``(2 pi)^(n+1)``.
    """
    if samples < 1000:
        raise ValueError("samples must be >= 1000")
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        om = rng.uniform(0.0, 2 * math.pi, size=(m, n))
        hits += int(_resonant_mask(om, p.kappa, p.K, A).sum())
        done += m
    vol = (2 * math.pi) ** n
    frac = hits / samples
    c3 = (2 * math.pi) ** (n + 1) if c3 is None else c3
    return MeasureEstimate(estimate=vol * frac, std_err=vol * math.sqrt(frac * (1 - frac) / samples),
                           samples=samples, ceiling=c3 * p.K ** (n + 1) * p.kappa, c3=c3)


def excluded_measure_exact_1d(p: MelnikovParams, A: int) -> float:
    """Length of the union of resonance intervals in ``[0, 2 pi]`` (n = 1)."""
    lo, hi = [], []
    j = np.arange(-2 * A, 2 * A + 1, dtype=float)
    for k in range(1, int(math.floor(p.K)) + 1):
        c = -j / k
        r = p.kappa * (1 + np.abs(j)) / k
        a, b = np.maximum(c - r, 0.0), np.minimum(c + r, 2 * math.pi)
        keep = b > a
        lo.append(a[keep])
        hi.append(b[keep])
    lo, hi = np.concatenate(lo), np.concatenate(hi)
    if lo.size == 0:
        return 0.0
    order = np.argsort(lo)
    lo, hi = lo[order], hi[order]
    total, cur_a, cur_b = 0.0, lo[0], hi[0]
    for a, b in zip(lo[1:], hi[1:]):
        if a > cur_b:
            total += cur_b - cur_a
            cur_a, cur_b = a, b
        else:
            cur_b = max(cur_b, b)
    return float(total + cur_b - cur_a)


def fit_measure_exponents(rows) -> tuple[float, float, float]:
    """Least squares ``log m = log c3 + a1 log K + a2 log kappa`` over ``(kappa, K, m)`` rows."""
    r = np.array([(math.log(K), math.log(kap), math.log(m)) for kap, K, m in rows])
    X = np.c_[np.ones(len(r)), r[:, 0], r[:, 1]]
    coef = np.linalg.lstsq(X, r[:, 2], rcond=None)[0]
    return float(math.exp(coef[0])), float(coef[1]), float(coef[2])


# -- homological equation ---------------------------------------------------

def _divisors(j, omega, lam):
    return float(np.dot(j, omega)) + lam[:, None] - lam[None, :]


def homological_solve(P: TruncatedOperator, N, omega, p: MelnikovParams, trunc_K: float):
    """Generator ``F`` and the part of ``P`` it removes.

    Harmonics with ``0 < |j|_1 <= trunc_K`` are solved entrywise, as is the
    off-diagonal of the ``j = 0`` block.  The ``j = 0`` diagonal (normal form)
    and harmonics beyond the cutoff are not touched.
    """
    N = np.asarray(N, dtype=float)
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    A = P.dim
    if len(N) != A:
        raise ValueError("N and P have different truncations")
    gap = np.abs(N[:, None] - N[None, :])
    floor = 0.5 * p.kappa * (1 + gap / 2)
    offdiag = ~np.eye(A, dtype=bool)
    F_blocks = np.zeros_like(P.blocks)
    res_blocks = np.zeros_like(P.blocks)
    for h, j in enumerate(P.harmonics):
        order = int(np.abs(j).sum())
        if order > trunc_K:
            continue
        d = _divisors(j, omega, N)
        mask = offdiag if order == 0 else np.ones((A, A), dtype=bool)
        active = mask & (P.blocks[h] != 0)
        bad = active & (np.abs(d) < floor)
        if bad.any():
            a, b = np.argwhere(bad)[np.argmin(np.abs(d)[bad] / floor[bad])]
            raise SmallDivisorError(j, a + 1, b + 1, d[a, b], floor[a, b])
        safe = np.where(mask, d, 1.0)
        F_blocks[h] = np.where(mask, P.blocks[h] / (1j * safe), 0.0)
        res_blocks[h] = np.where(mask, P.blocks[h], 0.0)
    F = TruncatedOperator(P.harmonics.copy(), F_blocks)
    res = TruncatedOperator(P.harmonics.copy(), res_blocks)
    return F, res


def homological_residual(F: TruncatedOperator, N, omega, resolved: TruncatedOperator) -> float:
    """max entrywise ``|omega . dF + i [N, F] - resolved|`` over harmonics."""
    N = np.asarray(N, dtype=float)
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    worst = 0.0
    for h, j in enumerate(F.harmonics):
        lhs = 1j * _divisors(j, omega, N) * F.blocks[h]
        worst = max(worst, float(np.max(np.abs(lhs - resolved.block(j)), initial=0.0)))
    return worst


# -- iteration --------------------------------------------------------------

@dataclass
class KamSchedule:
    K0: float = 4.0
    kappa0: float = 1e-4
    K_max: float = 24.0
    max_steps: int = 12
    tol: float = 1e-12
    n_theta: int = 64
    max_harmonic: int = 24
    series_tol: float = 1e-16
    threshold: float = 0.1

    def K(self, j: int) -> float:
        return min(self.K0 * 2.0**j, self.K_max)

    def kappa(self, j: int) -> float:
        return self.kappa0 * 2.0 ** (-j)

    @staticmethod
    def sigma(sigma0: float, j: int) -> float:
        return sigma0 - sigma0 * sum(1.0 / (2.0 * (i + 1) ** 2) for i in range(j))

    @classmethod
    def from_file(cls, path) -> "KamSchedule":
        data = json.loads(Path(path).read_text())
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown schedule keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class KamState:
    step: int
    N: np.ndarray
    R: TruncatedOperator
    eps: float
    kappa: float
    K: float
    sigma: float
    N0: np.ndarray
    omega: np.ndarray
    transform_log: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    tails: list = field(default_factory=list)
    alpha: float = 0.0
    converged: bool = False


def _merge(ops, dim, n) -> TruncatedOperator:
    acc = {}
    for op in ops:
        for j, blk in zip(op.harmonics, op.blocks):
            key = tuple(int(v) for v in j)
            acc[key] = acc[key] + blk if key in acc else blk.copy()
    if not acc:
        return TruncatedOperator.zero(dim, n)
    keys = sorted(acc)
    return TruncatedOperator(np.array(keys, dtype=np.int64), np.array([acc[k] for k in keys]))


def _split_by_order(R: TruncatedOperator, K: float):
    order = np.abs(R.harmonics).sum(axis=1)
    low, high = order <= K, order > K
    lo = TruncatedOperator(R.harmonics[low], R.blocks[low])
    hi = TruncatedOperator(R.harmonics[high], R.blocks[high])
    return lo, hi


def _lie_update(R, res, F, sched: KamSchedule):
    """Grid evaluation of ``sum_{n>=1} ad^n (R/n! - res/(n+1)!)``; returns (values, tail_bound)."""
    nt = sched.n_theta
    Rg, Sg = R.to_grid(nt), res.to_grid(nt)
    Xg = -1j * F.to_grid(nt)
    lead = Rg.shape[:-2]
    A = Rg.shape[-1]
    Rg, Sg, Xg = (v.reshape(-1, A, A) for v in (Rg, Sg, Xg))
    x = float(np.max(np.linalg.norm(Xg, ord=2, axis=(1, 2)), initial=0.0))
    r = float(np.max(np.linalg.norm(Rg, ord=2, axis=(1, 2)), initial=0.0)) + \
        float(np.max(np.linalg.norm(Sg, ord=2, axis=(1, 2)), initial=0.0))
    total = np.zeros_like(Rg)
    T, S = Rg, Sg
    n = 0
    fact = 1.0
    with np.errstate(all="ignore"):
        while True:
            n += 1
            fact *= n
            T = T @ Xg - Xg @ T
            S = S @ Xg - Xg @ S
            term = T / fact - S / (fact * (n + 1))
            total += term
            size = np.max(np.abs(term), initial=0.0)
            if not np.isfinite(size) or size < sched.series_tol or n >= 60:
                break
    q = 2 * x / (n + 2)
    try:
        tail = r * (2 * x) ** (n + 1) / (fact * (n + 1)) / (1 - q) if q < 1 else math.inf
    except OverflowError:
        tail = math.inf
    return total.reshape(lead + (A, A)), tail


def kam_iterate(P0: TruncatedOperator, eps: float, alpha: float, sigma: float, omega,
                schedule: KamSchedule | None = None, N=None):
    """Run the reducibility iteration; returns ``(final_state, trace)``.

    ``trace`` rows are ``(j, eps_j, kappa_j, K_j)``.
    """
    sched = schedule or KamSchedule()
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if P0.angle_dim != len(omega):
        raise ValueError("omega dimension does not match the operator's angle dimension")
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    if not eps >= 0:
        raise ValueError("eps must be >= 0")
    A, n = P0.dim, P0.angle_dim
    N = spectrum_model(A).lambdas.copy() if N is None else np.asarray(N, dtype=float).copy()
    size0 = eps * malpha_norm(P0, alpha)
    if size0 > sched.threshold:
        raise ValueError(f"eps * |P0|_alpha = {size0:.3g} exceeds the threshold {sched.threshold}")

    R = P0.scaled(eps)
    sig = sigma
    e = malpha_norm(R, alpha, sigma_prime=sig) if eps > 0 else 0.0
    state = KamState(step=0, N=N, R=R, eps=e, kappa=sched.kappa(0), K=sched.K(0), sigma=sig,
                     N0=N.copy(), omega=omega, alpha=alpha)
    trace = [(0, e, state.kappa, state.K)]
    rises = 0
    weights_max = float(malpha_weights(A, alpha).max())
    j = 0
    while e >= sched.tol and j < sched.max_steps and eps > 0:
        K, kap = sched.K(j), sched.kappa(j)
        p = MelnikovParams(kap, K)
        if not is_nonresonant(np.mod(omega, 2 * math.pi), p, A):
            raise ResonanceError(f"omega={omega.tolist()} fails the Melnikov screen at kappa={kap:.3g}, K={K:g}")
        low, high = _split_by_order(R, K)
        F, res = homological_solve(low, N, omega, p, K)
        state.residuals.append(homological_residual(F, N, omega, res))
        avg = np.real(np.diag(R.block(np.zeros(n, dtype=np.int64))))

        values, tail = _lie_update(R, res, F, sched)
        if not np.all(np.isfinite(values)):
            raise DivergenceError(f"Lie series overflowed at step {j + 1}")
        series = TruncatedOperator.from_grid(values, sched.max_harmonic)
        coef = np.abs(np.fft.fftn(values, axes=tuple(range(n)))) / sched.n_theta**n
        dropped = float(np.max(coef.sum(axis=tuple(range(n))) - np.abs(series.blocks).sum(axis=0), initial=0.0))
        R_next = _merge([series, high], A, n)
        N = N + avg

        sig = KamSchedule.sigma(sigma, j + 1)
        e_next = malpha_norm(R_next, alpha, sigma_prime=sig) + (tail + dropped) * weights_max
        if not math.isfinite(e_next):
            raise DivergenceError(f"remainder is no longer finite at step {j + 1}")
        state.tails.append(tail + dropped)
        state.transform_log.append(F)
        rises = rises + 1 if e_next > e else 0
        j += 1
        R, e = R_next, e_next
        trace.append((j, e, sched.kappa(j), sched.K(j)))
        if rises >= 2:
            raise DivergenceError(f"eps increased two steps in a row (eps={e:.3e} at step {j})")

    state.step, state.N, state.R, state.eps = j, N, R, e
    state.kappa, state.K, state.sigma = sched.kappa(j), sched.K(j), sig
    state.converged = bool(e < sched.tol or eps == 0)
    return state, trace


def normal_form_shift(state: KamState) -> float:
    """``|N_inf - N|`` in the M_alpha norm (a diagonal, theta-independent operator)."""
    d = state.N - state.N0
    if not np.any(d):
        return 0.0
    op = TruncatedOperator.constant(np.diag(d).astype(complex), len(state.omega))
    return malpha_norm(op, state.alpha)


def _expm_skew(F: np.ndarray) -> np.ndarray:
    """``exp(-i F)`` for Hermitian ``F`` (batched)."""
    F = 0.5 * (F + np.conj(np.swapaxes(F, -1, -2)))
    w, V = np.linalg.eigh(F)
    return (V * np.exp(-1j * w)[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))


def compose_transform(state: KamState, theta) -> np.ndarray:
    """``U_0(theta) U_1(theta) ...`` from the stored generators (``theta`` of shape (n,) or (S, n))."""
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim == 1
    theta = np.atleast_2d(theta)
    A = state.N.shape[0]
    U = np.broadcast_to(np.eye(A, dtype=complex), (len(theta), A, A)).copy()
    for F in state.transform_log:
        phase = np.exp(1j * theta @ F.harmonics.T)
        Fv = np.tensordot(phase, F.blocks, axes=(1, 0))
        U = U @ _expm_skew(Fv)
    return U[0] if single else U


def transform_closeness(state: KamState, samples: int = 64, weighted: bool = False) -> dict:
    """sup over sampled theta of ``|Phi(theta) - Id|`` (l2 operator norm) and the unitarity defect.

    ``weighted`` also reports ``|diag(a^(2 alpha)) (Phi - Id)|``, the truncated
    stand-in for the smoothing norm.
    """
    n = len(state.omega)
    per = max(2, int(round(samples ** (1.0 / n))))
    axis = 2 * math.pi * np.arange(per) / per
    theta = np.array(list(itertools.product(axis, repeat=n)))
    U = compose_transform(state, theta)
    A = U.shape[-1]
    eye = np.eye(A)
    dist = float(np.max(np.linalg.norm(U - eye, ord=2, axis=(1, 2)), initial=0.0))
    unit = float(np.max(np.linalg.norm(np.conj(np.swapaxes(U, -1, -2)) @ U - eye, ord=2, axis=(1, 2)), initial=0.0))
    out = {"norm_estimate": dist, "unitarity_defect": unit}
    if weighted:
        w = np.arange(1, A + 1, dtype=float) ** (2 * state.alpha)
        out["weighted_estimate"] = float(np.max(np.linalg.norm(w[:, None] * (U - eye), ord=2, axis=(1, 2)), initial=0.0))
    return out
