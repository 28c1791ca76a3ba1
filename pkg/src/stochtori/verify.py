"""Verification runs: CLT check on simulated ensembles, sampler CF check, period table."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import __version__
from .clt import CltStatistic, predicted_limit, statistic_from_terms
from .config import RunConfig
from .ensemble import EnsembleResult, run_ensemble
from .errors import ConfigError, IntegrationError
from .models import build_oscillator_chart, cached_chart, period_oracle
from .noise import LevyTriplet, TimeGrid, levy_khintchine_exponent, sample_levy
from .rng import child
from .sim import BirkhoffEstimate, birkhoff_average
from .stats import GaussianLimit, cf_sup_error, eigen_spectrum, ks_distance, moments

CF_FREQUENCIES = np.linspace(-3.0, 3.0, 61)
BIRKHOFF_REPLICAS = 200
PERIOD_TOL = 1e-8


def _criterion(passed: bool, value, bound) -> dict:
    return {"pass": bool(passed), "value": value, "bound": bound}


def _noise_dict(cfg) -> dict:
    def one(x):
        return "brownian" if isinstance(x, str) else x.to_dict()
    return {"sigma": cfg.sigma, "zeta": cfg.zeta, "action": one(cfg.action_noise),
            "angle": one(cfg.angle_noise), "interlace": cfg.interlace,
            "domain_policy": cfg.domain_policy}


@dataclass(frozen=True, eq=False)
class CltRun:
    report: dict
    statistic: CltStatistic
    limit: GaussianLimit
    ensemble: EnsembleResult
    birkhoff: BirkhoffEstimate

    @property
    def passed(self) -> bool:
        return bool(self.report["pass"])


def _birkhoff(run: RunConfig) -> BirkhoffEstimate:
    st = run.statistic
    b = run.birkhoff
    horizon = b.horizon if b else st.n * st.delta
    replicas = b.replicas if b else BIRKHOFF_REPLICAS
    seed = b.seed if b and b.seed is not None else child(st.seed, "birkhoff")
    return birkhoff_average(run.system, run.sim, horizon, replicas, seed)


def _criteria_1d(stat, limit, mom, tol, w_se, levy) -> dict:
    k = tol.se_multiplier
    var, var_se = float(mom.cov[0, 0]), float(mom.cov_se[0, 0])
    out = {}
    if levy:
        lo, hi = float(limit.cov_lower[0, 0]), float(limit.cov_upper[0, 0])
        out["variance_bounds"] = _criterion(lo - k * var_se <= var <= hi + k * var_se, var,
                                            [lo - k * var_se, hi + k * var_se])
    elif tol.variance_min is not None or tol.variance_max is not None:
        lo = -math.inf if tol.variance_min is None else tol.variance_min
        hi = math.inf if tol.variance_max is None else tol.variance_max
        out["variance_range"] = _criterion(lo <= var <= hi, var, [lo, hi])
    else:
        pred = float(limit.cov[0, 0])
        combined = math.hypot(var_se, w_se)
        out["variance_match"] = _criterion(abs(var - pred) <= k * combined, var,
                                           [pred - k * combined, pred + k * combined])
    x = stat.normalized[:, 0]
    if tol.ks_max is not None:
        ks = ks_distance(x, limit)
        out["ks"] = _criterion(ks <= tol.ks_max, ks, tol.ks_max)
    if tol.cf_sup_max is not None:
        err = cf_sup_error(x, limit, CF_FREQUENCIES)
        out["cf_sup"] = _criterion(err <= tol.cf_sup_max, err, tol.cf_sup_max)
    return out


def _criteria_nd(stat, limit, mom, tol, levy) -> dict:
    k = tol.se_multiplier
    cov, se = mom.cov, mom.cov_se
    out = {}
    if levy:
        lo, hi = limit.cov_lower - k * se, limit.cov_upper + k * se
        ok = bool(np.all((cov >= lo) & (cov <= hi)))
        out["covariance_bounds"] = _criterion(ok, cov.tolist(), [lo.tolist(), hi.tolist()])
    else:
        lo, hi = limit.cov - k * se, limit.cov + k * se
        ok = bool(np.all((cov >= lo) & (cov <= hi)))
        out["covariance_match"] = _criterion(ok, cov.tolist(), [lo.tolist(), hi.tolist()])
    if tol.rank_one_factor is not None:
        vals, vse = eigen_spectrum(stat.normalized)
        bound = tol.rank_one_factor * float(vse[1])
        out["rank_one"] = _criterion(float(vals[1]) <= bound, float(vals[1]), bound)
    if tol.ks_max is not None:
        ks = [ks_distance(stat.normalized[:, j], limit.marginal(j)) for j in range(stat.dim)]
        out["ks"] = _criterion(max(ks) <= tol.ks_max, ks, tol.ks_max)
    if tol.cf_sup_max is not None:
        errs = [cf_sup_error(stat.normalized[:, j], limit.marginal(j), CF_FREQUENCIES)
                for j in range(stat.dim)]
        out["cf_sup"] = _criterion(max(errs) <= tol.cf_sup_max, errs, tol.cf_sup_max)
    return out


def verify_clt(run: RunConfig, threads: int = 1) -> CltRun:
    """Simulate the ensemble, build the statistic and score it against the predicted law."""
    if run.system is None or run.statistic is None:
        raise ConfigError("verify-clt needs [system], [initial], [noise], [grid] and "
                          "[statistic] with n and delta_s")
    st, tol = run.statistic, run.tolerance
    ens = run_ensemble(run.system, run.sim, st.seed, st.replicas, st.delta, st.n,
                       threads=threads, max_discard_fraction=tol.max_discard_fraction)
    stat = statistic_from_terms(ens.terms, st.delta)
    birk = _birkhoff(run)
    limit = predicted_limit(run.system, run.sim, birk.w_bar)
    mom = moments(stat.normalized)
    levy = isinstance(run.sim.angle_noise, LevyTriplet)
    if stat.dim == 1:
        w_se = 2 * abs(float(birk.w_bar[0])) * float(birk.se[0])
        criteria = _criteria_1d(stat, limit, mom, tol, w_se, levy)
    else:
        criteria = _criteria_nd(stat, limit, mom, tol, levy)
    criteria["discard_budget"] = _criterion(
        ens.discarded <= tol.max_discard_fraction * ens.replicas, ens.discarded,
        tol.max_discard_fraction * ens.replicas)

    vals, vse = eigen_spectrum(stat.normalized)
    report = {
        "command": "verify-clt",
        "version": __version__,
        "system": run.system.to_dict(),
        "noise": _noise_dict(run.sim),
        "n": st.n,
        "delta": st.delta,
        "replicas": ens.replicas,
        "kept_replicas": int(ens.terms.shape[0]),
        "discarded": ens.discarded,
        "flagged": ens.flagged,
        "seed": st.seed,
        "centering": stat.centering.tolist(),
        "centering_se": stat.centering_se.tolist(),
        "normalized_mean": mom.mean.tolist(),
        "covariance": mom.cov.tolist(),
        "covariance_se": mom.cov_se.tolist(),
        "eigenvalues": vals.tolist(),
        "eigenvalue_se": vse.tolist(),
        "within_path_lag1_autocorrelation": stat.autocorrelation,
        "predicted_limit": limit.to_dict(),
        "birkhoff": birk.to_dict(),
        "criteria": criteria,
        "pass": all(c["pass"] for c in criteria.values()),
        "config": run.to_dict(),
    }
    if stat.dim == 1:
        report["empirical_variance"] = float(mom.cov[0, 0])
        report["empirical_variance_se"] = float(mom.cov_se[0, 0])
        report["ks_distance"] = ks_distance(stat.normalized[:, 0], limit)
        report["cf_sup_error"] = cf_sup_error(stat.normalized[:, 0], limit, CF_FREQUENCIES)
    else:
        report["rank_one"] = {"second_eigenvalue": float(vals[1]),
                              "second_eigenvalue_se": float(vse[1])}
        report["ks_distance"] = [ks_distance(stat.normalized[:, j], limit.marginal(j))
                                 for j in range(stat.dim)]
        report["cf_sup_error"] = [cf_sup_error(stat.normalized[:, j], limit.marginal(j),
                                               CF_FREQUENCIES) for j in range(stat.dim)]
    return CltRun(report, stat, limit, ens, birk)


@dataclass(frozen=True, eq=False)
class LevyCheck:
    u: np.ndarray
    empirical: np.ndarray
    analytic: np.ndarray
    gap: np.ndarray
    report: dict

    @property
    def passed(self) -> bool:
        return bool(self.report["pass"])


def levy_endpoints(triplet: LevyTriplet, horizon: float, dt: float, replicas: int, seed,
                   interlace: bool = False) -> np.ndarray:
    """``X(horizon)`` for ``replicas`` independent paths; replica ``r`` uses ``child(seed, r)``."""
    grid = TimeGrid.covering(horizon, dt)
    out = np.empty((replicas, triplet.dim))
    for r in range(replicas):
        out[r] = sample_levy(triplet, grid, child(seed, r), interlace=interlace).endpoint()
    return out


def levy_check(run: RunConfig) -> LevyCheck:
    """Empirical CF of ``X(T)`` against the Lévy–Khintchine formula on a grid of ``u``.

    For ``d > 1`` the frequency runs along the diagonal ``u·(1, ..., 1)``.
    """
    lc = run.levy_check
    if lc is None:
        raise ConfigError("levy-check needs a [levy_check] section")
    tri = lc.triplet
    grid = TimeGrid.covering(lc.horizon, lc.dt)
    x = levy_endpoints(tri, lc.horizon, lc.dt, lc.replicas, lc.seed, lc.interlace)
    u = np.linspace(-lc.u_max, lc.u_max, lc.frequencies)
    direction = np.ones(tri.dim)
    freqs = u[:, None] * direction[None, :]
    emp = np.exp(1j * (x @ freqs.T)).mean(axis=0)
    ana = np.array([levy_khintchine_exponent(tri, f, grid.horizon, lc.interlace) for f in freqs])
    gap = np.abs(emp - ana)
    sup = float(gap.max())
    report = {
        "command": "levy-check",
        "version": __version__,
        "triplet": tri.to_dict(),
        "horizon": grid.horizon,
        "dt": lc.dt,
        "replicas": lc.replicas,
        "seed": lc.seed,
        "interlace": lc.interlace,
        "sup_gap": sup,
        "sup_gap_max": lc.sup_gap_max,
        "criteria": {"sup_gap": _criterion(sup <= lc.sup_gap_max, sup, lc.sup_gap_max)},
        "pass": sup <= lc.sup_gap_max,
        "config": run.to_dict(),
    }
    return LevyCheck(u, emp, ana, gap, report)


@dataclass(frozen=True)
class PeriodRow:
    m: int
    T_star: float
    oracle: float
    difference: float
    energy_drift: float
    status: str


def period_table(ms, tol: float = 1e-10, cache_dir=None) -> list[PeriodRow]:
    """Minimal period and chart drift per ``m``, cross-checked against quadrature.

    A row's status is ``ok``, ``mismatch`` (oracle gap above 1e-8),
    ``drift`` (chart drift above ``tol``) or ``failed: <reason>``.
    """
    rows = []
    for m in ms:
        if m < 1:
            raise ConfigError(f"m must be >= 1, got {m}")
        try:
            oracle = period_oracle(m)
        except Exception as exc:  # quadrature failure is reported per row
            oracle = math.nan
            rows.append(PeriodRow(m, math.nan, oracle, math.nan, math.nan,
                                  f"failed: oracle {exc}"))
            continue
        try:
            chart = (cached_chart(m, tol, cache_dir) if cache_dir is not None
                     else build_oscillator_chart(m, tol))
        except IntegrationError as exc:
            rows.append(PeriodRow(m, math.nan, oracle, math.nan,
                                  float(exc.residual) if exc.residual is not None else math.nan,
                                  f"failed: {exc}"))
            continue
        diff = abs(chart.T_star - oracle)
        status = "ok"
        if diff > PERIOD_TOL:
            status = "mismatch"
        elif chart.energy_drift > tol:
            status = "drift"
        rows.append(PeriodRow(m, chart.T_star, oracle, diff, chart.energy_drift, status))
    return rows
