"""Truncated perturbation matrices P(theta) and the M_alpha norms.

``P_m^n(theta) = sum_k a_k(theta) S_k[m, n] + b_k(theta) C_k[m, n]`` where
``C_k + i S_k`` is the matrix of oscillatory elements ``I(m, n; k, beta, mu)``.
The coefficient functions are finite Fourier polynomials on the n-torus.

Container layout (``TruncatedOperator.save``): a numpy ``.npz`` archive with

* ``dims``      int64 ``[A, n, H]`` (mode truncation, angle dimension, harmonic count)
* ``harmonics`` int64 array of shape ``(H, n)``
* ``blocks``    complex128 array of shape ``(H, A, A)``, C order; ``blocks[h, a-1, b-1]``
  is the coefficient of ``exp(i harmonics[h] . theta)`` in entry ``(a, b)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from ._pool import pmap
from .quadrature import OscIntegralQuery, matrix_element

__all__ = [
    "PerturbationSpec",
    "TruncatedOperator",
    "load_spec",
    "element_table",
    "assemble_P",
    "evaluate_direct",
    "malpha_norm",
    "malpha_weights",
]


def _harm_key(j) -> tuple:
    return tuple(int(v) for v in j)


@dataclass
class PerturbationSpec:
    """Data defining ``X(x, theta)``.

    ``coeffs[k]["a"]`` and ``coeffs[k]["b"]`` map integer harmonics ``j`` (tuples
    of length ``angle_dim``) to complex Fourier coefficients; ``a_k`` and
    ``b_k`` must be real on the real torus, i.e. ``c_{-j} = conj(c_j)``.
    """

    beta: float
    mu: float
    freqs: tuple
    angle_dim: int
    sigma: float
    coeffs: dict
    coef_bound: float | None = None

    def __post_init__(self):
        if not self.beta > 1:
            raise ValueError(f"beta must be > 1, got {self.beta}")
        if not self.mu >= 0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")
        if int(self.angle_dim) != self.angle_dim or self.angle_dim < 1:
            raise ValueError("angle dimension n must be a positive integer")
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        self.freqs = tuple(float(k) for k in self.freqs)
        if len(set(self.freqs)) != len(self.freqs):
            raise ValueError("frequency set contains duplicates")
        for k in self.freqs:
            if k == 0 or not math.isfinite(k):
                raise ValueError("frequencies must be nonzero and finite")
        clean = {}
        for k in self.freqs:
            entry = self.coeffs.get(k, {})
            clean[k] = {}
            for part in ("a", "b"):
                terms = {}
                for j, c in dict(entry.get(part, {})).items():
                    j = _harm_key(j)
                    if len(j) != self.angle_dim:
                        raise ValueError(f"harmonic {j} does not have length n={self.angle_dim}")
                    terms[j] = terms.get(j, 0) + complex(c)
                clean[k][part] = terms
        extra = set(self.coeffs) - set(self.freqs)
        if extra:
            raise ValueError(f"coefficients given for frequencies not in Lambda: {sorted(extra)}")
        self.coeffs = clean
        self._validate_reality()
        self._validate_decay()

    def _validate_reality(self):
        for k, parts in self.coeffs.items():
            for part, terms in parts.items():
                scale = max((abs(c) for c in terms.values()), default=0.0)
                for j, c in terms.items():
                    partner = terms.get(tuple(-v for v in j), 0j)
                    if abs(partner - c.conjugate()) > 1e-12 * max(scale, 1e-300):
                        raise ValueError(f"{part}_{k} is not real-valued: coefficient of {j} lacks its conjugate partner")

    def _validate_decay(self):
        if self.coef_bound is None:
            return
        for k, parts in self.coeffs.items():
            for part, terms in parts.items():
                for j, c in terms.items():
                    if abs(c) > self.coef_bound * math.exp(-self.sigma * sum(abs(v) for v in j)) * (1 + 1e-12):
                        raise ValueError(f"{part}_{k} coefficient at {j} exceeds A exp(-sigma |j|)")

    def harmonics(self) -> list:
        hs = set()
        for parts in self.coeffs.values():
            for terms in parts.values():
                hs.update(terms)
        return sorted(hs)

    def coefficient_value(self, k: float, part: str, theta) -> float:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        total = 0j
        for j, c in self.coeffs[k][part].items():
            total += c * np.exp(1j * float(np.dot(j, theta)))
        return float(total.real)

    @classmethod
    def from_dict(cls, d: dict) -> "PerturbationSpec":
        n = int(d["n"])
        freqs = [float(k) for k in d["Lambda"]]
        coeffs = {}
        for key, parts in d.get("coeffs", {}).items():
            k = float(key)
            coeffs[k] = {}
            for part in ("a", "b"):
                terms = {}
                for row in parts.get(part, []):
                    if len(row) != n + 2:
                        raise ValueError(f"coefficient row {row} must have n + 2 = {n + 2} entries")
                    j = _harm_key(row[:n])
                    terms[j] = terms.get(j, 0) + complex(row[n], row[n + 1])
                coeffs[k][part] = terms
        return cls(beta=float(d["beta"]), mu=float(d["mu"]), freqs=tuple(freqs), angle_dim=n,
                   sigma=float(d["sigma"]), coeffs=coeffs, coef_bound=d.get("coef_bound"))

    def to_dict(self) -> dict:
        out = {"beta": self.beta, "mu": self.mu, "Lambda": list(self.freqs), "n": self.angle_dim,
               "sigma": self.sigma, "coeffs": {}}
        for k in self.freqs:
            out["coeffs"][repr(k)] = {
                part: [list(j) + [c.real, c.imag] for j, c in sorted(self.coeffs[k][part].items())]
                for part in ("a", "b")
            }
        if self.coef_bound is not None:
            out["coef_bound"] = self.coef_bound
        return out


def load_spec(path) -> PerturbationSpec:
    return PerturbationSpec.from_dict(json.loads(Path(path).read_text()))


@dataclass
class TruncatedOperator:
    """``Q(theta) = sum_h blocks[h] exp(i harmonics[h] . theta)`` on modes 1..dim."""

    harmonics: np.ndarray
    blocks: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.blocks = np.asarray(self.blocks, dtype=complex)
        harms = np.asarray(self.harmonics, dtype=np.int64)
        self.harmonics = harms.reshape(len(self.blocks), harms.shape[-1] if harms.ndim == 2 else -1)
        if self.blocks.ndim != 3 or self.blocks.shape[1] != self.blocks.shape[2]:
            raise ValueError("blocks must have shape (H, A, A)")

    @property
    def dim(self) -> int:
        return self.blocks.shape[1]

    @property
    def angle_dim(self) -> int:
        return self.harmonics.shape[1]

    @classmethod
    def zero(cls, dim: int, angle_dim: int) -> "TruncatedOperator":
        return cls(np.zeros((1, angle_dim), dtype=np.int64), np.zeros((1, dim, dim), dtype=complex))

    @classmethod
    def constant(cls, matrix, angle_dim: int) -> "TruncatedOperator":
        matrix = np.asarray(matrix, dtype=complex)
        return cls(np.zeros((1, angle_dim), dtype=np.int64), matrix[None])

    def block(self, j) -> np.ndarray:
        j = np.asarray(j, dtype=np.int64)
        hit = np.nonzero(np.all(self.harmonics == j, axis=1))[0]
        if hit.size == 0:
            return np.zeros((self.dim, self.dim), dtype=complex)
        return self.blocks[hit].sum(axis=0)

    def evaluate(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        phase = np.exp(1j * (self.harmonics @ theta))
        return np.tensordot(phase, self.blocks, axes=(0, 0))

    def scaled(self, c) -> "TruncatedOperator":
        return TruncatedOperator(self.harmonics.copy(), self.blocks * c, dict(self.meta))

    def reality_defect(self) -> float:
        """max |Q_{-j} - conj(Q_j)| (zero iff Q(theta) is real for real theta)."""
        worst = 0.0
        for h, j in enumerate(self.harmonics):
            partner = self.block(-j)
            worst = max(worst, float(np.max(np.abs(partner - self.blocks[h].conj()), initial=0.0)))
        return worst

    def symmetry_defect(self) -> float:
        return float(np.max(np.abs(self.blocks - np.transpose(self.blocks, (0, 2, 1))), initial=0.0))

    def to_grid(self, n_theta: int) -> np.ndarray:
        """Values on the uniform grid ``2 pi i / n_theta`` per angle, shape ``(n_theta,)*n + (A, A)``."""
        n = self.angle_dim
        grid = np.zeros((n_theta,) * n + (self.dim, self.dim), dtype=complex)
        idx = tuple((self.harmonics % n_theta).T)
        np.add.at(grid, idx, self.blocks)
        return np.fft.ifftn(grid, axes=tuple(range(n))) * n_theta**n

    @classmethod
    def from_grid(cls, values, max_harmonic: int, drop_below: float = 0.0) -> "TruncatedOperator":
        """Fourier modes ``|j|_inf <= max_harmonic`` of grid samples from :meth:`to_grid`."""
        n = values.ndim - 2
        n_theta = values.shape[0]
        if 2 * max_harmonic >= n_theta:
            raise ValueError("max_harmonic must be below the grid Nyquist index")
        coef = np.fft.fftn(values, axes=tuple(range(n))) / n_theta**n
        rng = np.arange(-max_harmonic, max_harmonic + 1)
        harms = np.array(np.meshgrid(*([rng] * n), indexing="ij")).reshape(n, -1).T
        blocks = coef[tuple((harms % n_theta).T)]
        keep = np.max(np.abs(blocks), axis=(1, 2)) > drop_below
        keep |= np.all(harms == 0, axis=1)
        return cls(harms[keep], blocks[keep])

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            np.savez(fh, dims=np.array([self.dim, self.angle_dim, len(self.blocks)], dtype=np.int64),
                     harmonics=self.harmonics, blocks=np.ascontiguousarray(self.blocks))

    @classmethod
    def load(cls, path) -> "TruncatedOperator":
        with np.load(path) as z:
            A, n, H = (int(v) for v in z["dims"])
            harms = z["harmonics"].reshape(H, n)
            blocks = z["blocks"].reshape(H, A, A)
        return cls(harms, blocks)


def _one(job, beta, mu, abs_tol, rel_tol):
    k, m, n = job
    return matrix_element(OscIntegralQuery(m, n, k, beta, mu), abs_tol=abs_tol, rel_tol=rel_tol)


def element_table(spec: PerturbationSpec, dim: int, workers: int | None = None,
                  abs_tol: float = 1e-10, rel_tol: float = 1e-8) -> dict:
    """``{k: (I_k, err_k)}`` with ``I_k[m-1, n-1] = I(m, n; k, beta, mu)``."""
    if int(dim) != dim or dim < 1:
        raise ValueError("dim must be a positive integer")
    jobs = [(k, m, n) for k in spec.freqs for m in range(1, dim + 1) for n in range(m, dim + 1) if (m + n) % 2 == 0]
    results = pmap(partial(_one, beta=spec.beta, mu=spec.mu, abs_tol=abs_tol, rel_tol=rel_tol), jobs, workers)
    out = {k: (np.zeros((dim, dim), dtype=complex), np.zeros((dim, dim))) for k in spec.freqs}
    for (k, m, n), r in zip(jobs, results):
        mat, err = out[k]
        mat[m - 1, n - 1] = mat[n - 1, m - 1] = r.value
        err[m - 1, n - 1] = err[n - 1, m - 1] = r.abs_error_estimate
    return out


def assemble_P(spec: PerturbationSpec, dim: int, workers: int | None = None, tables: dict | None = None,
               abs_tol: float = 1e-10, rel_tol: float = 1e-8) -> TruncatedOperator:
    """Fourier blocks of ``P(theta)`` on modes ``1..dim``."""
    if tables is None:
        tables = element_table(spec, dim, workers, abs_tol, rel_tol)
    harms = spec.harmonics() or [(0,) * spec.angle_dim]
    if (0,) * spec.angle_dim not in harms:
        harms = [(0,) * spec.angle_dim] + harms
    blocks = np.zeros((len(harms), dim, dim), dtype=complex)
    max_err = 0.0
    for k in spec.freqs:
        I, err = tables[k]
        S, C = I.imag, I.real
        for h, j in enumerate(harms):
            a = spec.coeffs[k]["a"].get(j, 0j)
            b = spec.coeffs[k]["b"].get(j, 0j)
            blocks[h] += a * S + b * C
        coef_mass = sum(abs(c) for part in ("a", "b") for c in spec.coeffs[k][part].values())
        max_err += coef_mass * float(err.max(initial=0.0))
    return TruncatedOperator(np.array(harms, dtype=np.int64), blocks, meta={"abs_err": max_err})


def evaluate_direct(spec: PerturbationSpec, tables: dict, theta) -> np.ndarray:
    """``P(theta)`` assembled with ``a_k(theta)``, ``b_k(theta)`` evaluated pointwise."""
    dim = next(iter(tables.values()))[0].shape[0]
    out = np.zeros((dim, dim))
    for k in spec.freqs:
        I, _ = tables[k]
        out += spec.coefficient_value(k, "a", theta) * I.imag + spec.coefficient_value(k, "b", theta) * I.real
    return out


def malpha_weights(dim: int, alpha: float, plus: bool = False) -> np.ndarray:
    a = np.arange(1, dim + 1, dtype=float)
    w = np.outer(a, a) ** alpha
    if plus:
        w = w * (1.0 + np.abs(a[:, None] - a[None, :]))
    return w


def malpha_norm(Q: TruncatedOperator, alpha: float, plus: bool = False, sigma_prime: float | None = None) -> float:
    """``sup (ab)^alpha |Q_a^b|`` (times ``1 + |a-b|`` when ``plus``).

    Without ``sigma_prime`` the sup also runs over harmonics.  With it, the
    bound over the strip ``|Im theta| < sigma_prime`` is used:
    ``sup_{a,b} (ab)^alpha sum_j |(Q_j)_a^b| exp(sigma_prime |j|_1)``.
    """
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    w = malpha_weights(Q.dim, alpha, plus)
    mags = np.abs(Q.blocks)
    if sigma_prime is None:
        return float(np.max(mags * w[None], initial=0.0))
    env = np.tensordot(np.exp(sigma_prime * np.abs(Q.harmonics).sum(axis=1)), mags, axes=(0, 0))
    return float(np.max(env * w, initial=0.0))
