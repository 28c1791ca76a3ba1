"""Estimators shared by the verification runs.

Standard errors:

* mean: ``sqrt(diag(cov) / n_eff)`` from the replica spread;
* covariance element ``(p, q)``: normal-theory
  ``sqrt((s_pp s_qq + s_pq²) / (n_eff - 1))``;

where ``n_eff = 1 / Σ w_i²`` (``n`` for unweighted samples).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtr


@dataclass(frozen=True, eq=False)
class SampleSet:
    """``values`` of shape ``(n, dim)`` with optional weights summing to 1."""

    values: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        v = np.asarray(self.values, float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] == 0:
            raise ValueError("SampleSet needs a non-empty (n, dim) array")
        object.__setattr__(self, "values", v)
        if self.weights is not None:
            w = np.asarray(self.weights, float)
            if w.shape != (v.shape[0],) or np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
                raise ValueError("weights must be non-negative, one per sample, sum 1")
            object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def effective_n(self) -> float:
        if self.weights is None:
            return float(self.n)
        return 1.0 / float(np.sum(self.weights ** 2))

    def column(self, j: int) -> "SampleSet":
        return SampleSet(self.values[:, j], self.weights)


@dataclass(frozen=True, eq=False)
class GaussianLimit:
    """Normal law ``N(mean, cov)`` with optional elementwise covariance bounds."""

    mean: np.ndarray
    cov: np.ndarray
    cov_lower: Optional[np.ndarray] = None
    cov_upper: Optional[np.ndarray] = None

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, float))
        cov = np.atleast_2d(np.asarray(self.cov, float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError("covariance shape does not match the mean")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        for name in ("cov_lower", "cov_upper"):
            b = getattr(self, name)
            if b is not None:
                object.__setattr__(self, name, np.atleast_2d(np.asarray(b, float)))

    @property
    def dim(self) -> int:
        return self.mean.size

    def is_psd(self, tol: float = 1e-12) -> bool:
        if not np.allclose(self.cov, self.cov.T, atol=tol):
            return False
        return bool(np.linalg.eigvalsh(self.cov).min() >= -tol * max(1.0, np.abs(self.cov).max()))

    def marginal(self, j: int) -> "GaussianLimit":
        sl = (slice(j, j + 1), slice(j, j + 1))
        return GaussianLimit(self.mean[j:j + 1], self.cov[sl],
                             None if self.cov_lower is None else self.cov_lower[sl],
                             None if self.cov_upper is None else self.cov_upper[sl])

    def cf(self, t) -> complex:
        t = np.atleast_1d(np.asarray(t, float))
        return complex(np.exp(1j * t @ self.mean - 0.5 * t @ self.cov @ t))

    def cdf(self, x):
        """Marginal CDF of a one-dimensional law (``scipy.special.ndtr``)."""
        if self.dim != 1:
            raise ValueError("cdf needs a one-dimensional law")
        x = np.asarray(x, float)
        var = self.cov[0, 0]
        if var == 0:
            return np.where(x >= self.mean[0], 1.0, 0.0)
        return ndtr((x - self.mean[0]) / np.sqrt(var))

    def pdf(self, x):
        x = np.asarray(x, float)
        var = self.cov[0, 0]
        return np.exp(-0.5 * (x - self.mean[0]) ** 2 / var) / np.sqrt(2 * np.pi * var)

    def to_dict(self) -> dict:
        d = {"mean": self.mean.tolist(), "cov": self.cov.tolist()}
        if self.cov_lower is not None:
            d["cov_lower"] = self.cov_lower.tolist()
        if self.cov_upper is not None:
            d["cov_upper"] = self.cov_upper.tolist()
        return d


def _as_samples(samples) -> SampleSet:
    return samples if isinstance(samples, SampleSet) else SampleSet(samples)


def empirical_cf(samples, t):
    """Empirical characteristic function ``mean(exp(i<t, x>))``.

    ``t`` may be one frequency of shape ``(dim,)`` (a scalar for ``dim == 1``)
    or a stack of shape ``(k, dim)``; the result is a complex scalar or a
    length-``k`` array accordingly.
    """
    s = _as_samples(samples)
    t = np.asarray(t, float)
    single = t.ndim == 0 or (t.ndim == 1 and s.dim > 1)
    tt = t.reshape(-1, s.dim)
    phase = np.exp(1j * (s.values @ tt.T))
    if s.weights is None:
        out = phase.mean(axis=0)
    else:
        out = s.weights @ phase
    return complex(out[0]) if single else out


def cf_sup_error(samples, law: GaussianLimit, freqs) -> float:
    """``max_t |empirical_cf(t) - law.cf(t)|`` over the frequency list."""
    s = _as_samples(samples)
    freqs = np.asarray(freqs, float).reshape(-1, s.dim)
    emp = empirical_cf(s, freqs)
    model = np.array([law.cf(f) for f in freqs])
    return float(np.max(np.abs(emp - model)))


def ks_distance(samples, law: GaussianLimit) -> float:
    """Kolmogorov–Smirnov distance between a 1-d sample and a normal law.

    A zero-variance law is treated as a point mass at its mean.
    """
    s = _as_samples(samples)
    if s.dim != 1 or law.dim != 1:
        raise ValueError("ks_distance is one-dimensional")
    x = s.values[:, 0]
    order = np.argsort(x, kind="stable")
    x = x[order]
    if s.weights is None:
        k = np.arange(s.n + 1)
        upper, lower = k[1:] / s.n, k[:-1] / s.n
    else:
        upper = np.cumsum(s.weights[order])
        lower = upper - s.weights[order]
    # ties: the ECDF only jumps after the last of equal values
    last = np.r_[x[1:] != x[:-1], True]
    first = np.r_[True, x[1:] != x[:-1]]
    F = law.cdf(x)
    d_plus = np.max((upper - F)[last])
    d_minus = np.max((F - lower)[first])
    return float(min(1.0, max(d_plus, d_minus, 0.0)))


@dataclass(frozen=True, eq=False)
class Moments:
    mean: np.ndarray
    mean_se: np.ndarray
    cov: np.ndarray
    cov_se: np.ndarray
    n: int

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "mean_se": self.mean_se.tolist(),
                "cov": self.cov.tolist(), "cov_se": self.cov_se.tolist(), "n": self.n}


def moments(samples) -> Moments:
    """Unbiased mean and covariance with standard errors (see module notes)."""
    s = _as_samples(samples)
    if s.n < 2:
        raise ValueError("covariance needs at least two samples")
    x = s.values
    if s.weights is None:
        mean = x.mean(axis=0)
        centred = x - mean
        cov = centred.T @ centred / (s.n - 1)
    else:
        w = s.weights
        mean = w @ x
        centred = x - mean
        cov = (centred * w[:, None]).T @ centred / (1.0 - np.sum(w * w))
    n_eff = s.effective_n
    d = np.diag(cov)
    mean_se = np.sqrt(np.maximum(d, 0.0) / n_eff)
    cov_se = np.sqrt(np.maximum(np.outer(d, d) + cov ** 2, 0.0) / max(n_eff - 1, 1.0))
    return Moments(mean, mean_se, cov, cov_se, s.n)


def eigen_spectrum(samples):
    """Covariance eigenvalues (descending) with delta-method standard errors.

    ``Var(λ_j) ≈ Var((v_jᵀ(x - mean))²) / n`` using the sample fourth moment
    along each eigenvector, so no normality is assumed.
    """
    s = _as_samples(samples)
    m = moments(s)
    vals, vecs = np.linalg.eigh(m.cov)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    proj = (s.values - m.mean) @ vecs
    sq = proj ** 2
    se = sq.std(axis=0, ddof=1) / np.sqrt(s.n)
    return vals, se
