"""Grouped characteristic functions and normalised angle statistics.

The partial sums of interest are ``Q_n = Σ_k Z_k`` where the summands fall
into ``h`` groups of ``m_k`` variables sharing drift ``A_k`` and covariance
``Σ_k``.  Their characteristic function has the product form
``c(t) Π λ_k(t)^{m_k} + d_n(t)`` with ``λ_k(t) ≈ exp(i<t, A_k> - tᵀΣ_k t / 2)``,
which leads to the Gaussian limit ``N(0, lim Σ m_k Σ_k / n)`` of
``(Q_n - Σ m_k A_k) / sqrt(n)``.

For simulated systems the summands are ``θ_{kδ} / (kδ)``; the centring
``Σ m_k A_k`` is estimated by the cross-replica mean of the raw sums.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy import integrate

from .errors import AlignmentError, DomainError, SpecificationError
from .noise import LevyTriplet
from .sim import ActionAnglePath, SimConfig, SystemSpec
from .stats import GaussianLimit

__all__ = [
    "GroupSpec", "CfModel", "GaussianLimit", "CltStatistic",
    "gaussian_limit_from_groups", "gaussian_limit_sequence",
    "continuous_limit_from_density", "cf_product", "extract_convergent_subsequence",
    "angle_terms", "assemble_statistic", "statistic_from_terms", "predicted_limit",
]


@dataclass(frozen=True, eq=False)
class GroupSpec:
    """Multiplicities ``m``, drifts ``A`` (h, d) and covariances ``Sigma`` (h, d, d)."""

    m: np.ndarray
    A: np.ndarray
    Sigma: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m)
        if m.ndim != 1 or m.size == 0 or np.any(m < 0) or np.any(m != np.round(m)):
            raise SpecificationError("multiplicities must be non-negative integers")
        h = m.size
        A = np.asarray(self.A, float).reshape(h, -1)
        d = A.shape[1]
        Sigma = np.asarray(self.Sigma, float).reshape(h, d, d)
        for k, S in enumerate(Sigma):
            if not np.allclose(S, S.T, atol=1e-12, rtol=0):
                raise SpecificationError(f"Sigma[{k}] is not symmetric")
            if np.linalg.eigvalsh(S).min() < -1e-12:
                raise SpecificationError(f"Sigma[{k}] is not positive semidefinite")
        object.__setattr__(self, "m", m.astype(np.int64))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "Sigma", Sigma)

    @property
    def h(self) -> int:
        return self.m.size

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def n(self) -> int:
        return int(self.m.sum())


def _check_n(groups: GroupSpec, n: int):
    if groups.n != n:
        raise SpecificationError(f"multiplicities sum to {groups.n}, expected n = {n}")


def gaussian_limit_from_groups(groups: GroupSpec, n: int) -> GaussianLimit:
    """Mean ``Σ m_k A_k`` and covariance ``Σ m_k Sigma_k / n``."""
    _check_n(groups, n)
    mean = groups.m @ groups.A
    cov = np.tensordot(groups.m, groups.Sigma, axes=1) / n
    return GaussianLimit(mean, cov)


def gaussian_limit_sequence(family: Mapping[int, GroupSpec]):
    """Limits along a family ``{n: GroupSpec}``.

    Returns the limit at the largest ``n`` and a Cauchy-tail diagnostic: the
    largest elementwise covariance spread over the upper half of the indices.
    """
    if not family:
        raise SpecificationError("empty family")
    ns = sorted(family)
    limits = {n: gaussian_limit_from_groups(family[n], n) for n in ns}
    tail = ns[len(ns) // 2:]
    covs = np.stack([limits[n].cov for n in tail])
    spread = float(np.max(covs.max(axis=0) - covs.min(axis=0)))
    return limits[ns[-1]], spread


def continuous_limit_from_density(m: Callable, A: Callable, Sigma: Callable, h: float,
                                  T: float, tol: float = 1e-9) -> GaussianLimit:
    """Continuous-index analogue over ``s ∈ [1, h]`` with ``∫ m_s ds = T``.

    Mean ``∫ m_s A_s ds`` and covariance ``∫ m_s Sigma_s ds / T``, each entry by
    adaptive quadrature.
    """
    def quad(f):
        val, _ = integrate.quad(f, 1.0, h, epsabs=1e-12, epsrel=1e-12, limit=200)
        return val

    mass = quad(m)
    if abs(mass - T) > tol * max(1.0, abs(T)):
        raise SpecificationError(f"∫ m_s ds = {mass:.12g} differs from T = {T}")
    A1 = np.atleast_1d(np.asarray(A(1.0), float))
    d = A1.size
    mean = np.array([quad(lambda s, i=i: m(s) * np.atleast_1d(A(s))[i]) for i in range(d)])
    cov = np.empty((d, d))
    for i in range(d):
        for j in range(i, d):
            cov[i, j] = cov[j, i] = quad(
                lambda s, i=i, j=j: m(s) * np.atleast_2d(Sigma(s))[i, j]) / T
    return GaussianLimit(mean, cov)


@dataclass(frozen=True, eq=False)
class CfModel:
    """Product-form characteristic function model of a grouped partial sum.

    ``c`` must be continuous at 0 with ``c(0) = 1``; ``d_n`` is the remainder
    and ``d_bounds`` an optional table of its sup-norms for growing ``n``.
    ``radius`` is the neighbourhood of 0 on which the model is declared.
    """

    groups: GroupSpec
    c: Callable = field(default=lambda t: 1.0)
    d_n: Callable = field(default=lambda t: 0.0)
    d_bounds: Sequence[float] = ()
    radius: float = math.inf

    def __post_init__(self):
        c0 = complex(self.c(np.zeros(self.groups.dim)))
        if abs(c0 - 1) > 1e-12:
            raise SpecificationError(f"c(0) = {c0}, must be 1")


def cf_product(model: CfModel, t) -> complex:
    """``c(t) exp(Σ m_k (i<t, A_k> - tᵀ Sigma_k t / 2)) + d_n(t)``."""
    t = np.atleast_1d(np.asarray(t, float))
    if t.size != model.groups.dim:
        raise ValueError(f"frequency has dim {t.size}, model has {model.groups.dim}")
    if np.linalg.norm(t) > model.radius:
        raise DomainError(f"|t| = {np.linalg.norm(t):.3g} outside the declared "
                          f"neighbourhood of radius {model.radius}")
    g = model.groups
    quad_form = np.einsum("i,kij,j->k", t, g.Sigma, t)
    log_lam = 1j * (g.A @ t) - 0.5 * quad_form
    return complex(model.c(t)) * complex(np.exp(g.m @ log_lam)) + complex(model.d_n(t))


def extract_convergent_subsequence(x, tol: float, bound=None):
    """Pick a convergent subsequence of a bounded sequence of matrices.

    Rule: with window ``W = max(10, len/10)``, take the smallest term (by
    trace) among the last ``W``; the cluster value is the mean of the trailing
    terms within ``tol`` of it, and the subsequence is every term of the whole
    sequence within ``tol`` of that value.  Returns ``(indices, limit)``;
    scalars come back as scalars.
    """
    arr = np.asarray(x, float)
    scalar = arr.ndim == 1
    if arr.size == 0 or arr.shape[0] == 0:
        raise SpecificationError("empty sequence")
    arr = arr.reshape(arr.shape[0], -1)
    L = arr.shape[0]
    W = min(L, max(10, L // 10))
    trailing = arr[L - W:]
    side = int(round(math.sqrt(arr.shape[1])))
    keys = trailing.reshape(W, side, side).trace(axis1=1, axis2=2) if side * side == arr.shape[1] \
        else trailing.sum(axis=1)
    anchor = trailing[int(np.argmin(keys))]
    near = np.max(np.abs(trailing - anchor), axis=1) <= tol
    limit = trailing[near].mean(axis=0)
    members = np.flatnonzero(np.max(np.abs(arr - limit), axis=1) <= tol)
    if bound is not None:
        b = np.broadcast_to(np.asarray(bound, float).reshape(-1), limit.shape)
        if np.any(limit > b + tol):
            raise SpecificationError("cluster value exceeds the declared bound")
    if scalar:
        return members, float(limit[0])
    return members, limit.reshape(np.asarray(x, float).shape[1:])


# -- statistics of simulated paths ------------------------------------------

def _sample_indices(path_grid, delta: float, n: int) -> np.ndarray:
    ratio = delta / path_grid.dt
    r = int(round(ratio))
    if r < 1 or abs(r - ratio) > 1e-9 * ratio:
        raise AlignmentError(f"delta={delta} is not a multiple of dt={path_grid.dt}", 1)
    offset = -path_grid.t0 / path_grid.dt
    o = int(round(offset))
    if abs(o - offset) > 1e-9 * max(1.0, abs(offset)):
        raise AlignmentError(f"grid origin t0={path_grid.t0} is not on the delta lattice", 0)
    idx = o + r * np.arange(1, n + 1)
    if idx[0] < 0:
        raise AlignmentError("sampling time before the grid start", 1)
    bad = np.flatnonzero(idx > path_grid.steps)
    if bad.size:
        k = int(bad[0]) + 1
        raise AlignmentError(f"sampling time k={k} (t={k * delta}) beyond the path end "
                             f"t={path_grid.t0 + path_grid.horizon}", k)
    return idx


def angle_terms(path: ActionAnglePath, delta: float, n: int) -> np.ndarray:
    """Summands ``θ_{kδ} / (kδ)`` for ``k = 1..n``; shape ``(n, dim)``."""
    idx = _sample_indices(path.grid, delta, n)
    k = np.arange(1, n + 1)[:, None]
    return path.theta[idx] / (k * delta)


@dataclass(frozen=True, eq=False)
class CltStatistic:
    """Normalised sums ``(D_n - centring) / sqrt(nδ)`` across replicas.

    ``raw_sum`` has shape ``(replicas, dim)``; ``centering`` is the replica
    mean of ``raw_sum`` and ``centering_se`` its standard error.
    ``autocorrelation`` is the replica-averaged lag-1 correlation of the
    centred summands along a path (``nan`` when unavailable).
    """

    n: int
    delta: float
    raw_sum: np.ndarray
    centering: np.ndarray
    centering_se: np.ndarray
    normalized: np.ndarray
    autocorrelation: float = math.nan

    @property
    def replicas(self) -> int:
        return self.raw_sum.shape[0]

    @property
    def dim(self) -> int:
        return self.raw_sum.shape[1]

    def scaled(self, exponent: float = 0.5) -> np.ndarray:
        """Centred sums divided by ``(nδ)^exponent``."""
        return (self.raw_sum - self.centering) / (self.n * self.delta) ** exponent


def _lag1_autocorrelation(terms: np.ndarray) -> float:
    # terms: (replicas, n, dim); centre each summand across replicas
    if terms.shape[0] < 2 or terms.shape[1] < 3:
        return math.nan
    c = terms - terms.mean(axis=0, keepdims=True)
    a, b = c[:, :-1, :], c[:, 1:, :]
    num = np.sum(a * b, axis=1)
    den = np.sqrt(np.sum(a * a, axis=1) * np.sum(b * b, axis=1))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = num / den
    r = r[np.isfinite(r)]
    return float(r.mean()) if r.size else math.nan


def statistic_from_terms(terms: np.ndarray, delta: float) -> CltStatistic:
    """Build the statistic from summands of shape ``(replicas, n, dim)``."""
    terms = np.asarray(terms, float)
    if terms.ndim != 3 or terms.shape[0] == 0:
        raise ValueError("terms must have shape (replicas, n, dim)")
    R, n, _ = terms.shape
    raw = terms.sum(axis=1)
    centering = raw.mean(axis=0)
    se = raw.std(axis=0, ddof=1) / math.sqrt(R) if R > 1 else np.zeros_like(centering)
    normalized = (raw - centering) / math.sqrt(n * delta)
    return CltStatistic(n, delta, raw, centering, se, normalized,
                        _lag1_autocorrelation(terms))


def assemble_statistic(paths: Sequence[ActionAnglePath], delta: float, n: int) -> CltStatistic:
    """``D_n = Σ_{k≤n} θ_{kδ}/(kδ)`` per path, centred by the replica mean."""
    if not paths:
        raise ValueError("no paths")
    return statistic_from_terms(np.stack([angle_terms(p, delta, n) for p in paths]), delta)


def predicted_limit(spec: SystemSpec, cfg: SimConfig, w_bar) -> GaussianLimit:
    """Predicted normal law of the normalised statistic.

    Brownian angle noise: ``N(0, w wᵀ)`` with ``w`` the long-time frequency
    average.  Lévy angle noise (drift ``γ``, intensity ``η = cfg.zeta``): the
    covariance is bracketed by ``lower = w wᵀ`` and
    ``upper = lower + η²(γ_p + γ_q)² + 2 w_p w_q``; for ``d = 1`` the upper
    bound is ``w² + 2η²γ²``.
    """
    w = np.atleast_1d(np.asarray(w_bar, float))
    if w.size != spec.dim:
        raise SpecificationError(f"w_bar has dim {w.size}, system has {spec.dim}")
    lower = np.outer(w, w)
    mean = np.zeros_like(w)
    noise = cfg.angle_noise
    if isinstance(noise, str):
        return GaussianLimit(mean, lower)
    if not isinstance(noise, LevyTriplet) or noise.dim != w.size:
        raise SpecificationError("Lévy angle noise needs a triplet of matching dimension")
    eta2 = cfg.zeta ** 2
    g = noise.gamma
    if w.size == 1:
        upper = lower + 2 * eta2 * g[0] ** 2
    else:
        upper = lower + eta2 * (g[:, None] + g[None, :]) ** 2 + 2 * lower
    return GaussianLimit(mean, lower, cov_lower=lower, cov_upper=upper)
