import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stochtori.clt import (CfModel, GroupSpec, assemble_statistic, cf_product,
                           continuous_limit_from_density, extract_convergent_subsequence,
                           gaussian_limit_from_groups, gaussian_limit_sequence,
                           predicted_limit, statistic_from_terms)
from stochtori.ensemble import run_ensemble
from stochtori.errors import AlignmentError, DomainError, SpecificationError
from stochtori.models import FrequencyMap
from stochtori.noise import JumpMeasureSpec, LevyTriplet, TimeGrid
from stochtori.rng import child
from stochtori.sim import SimConfig, SystemSpec, simulate

PENDULUM = SystemSpec.pendulum_system(9.81, 9.81)


def groups_1d(m, A, S):
    return GroupSpec(np.array(m), np.array(A, float).reshape(-1, 1),
                     np.array(S, float).reshape(-1, 1, 1))


# -- group limits ----------------------------------------------------------

def test_single_group_limit():
    lim = gaussian_limit_from_groups(groups_1d([10], [0.3], [2.5]), 10)
    assert lim.cov[0, 0] == pytest.approx(2.5)
    assert lim.mean[0] == pytest.approx(3.0)


def test_two_equal_groups_average_covariance():
    lim = gaussian_limit_from_groups(groups_1d([5, 5], [0, 0], [1.0, 3.0]), 10)
    assert lim.cov[0, 0] == pytest.approx(2.0)
    assert lim.mean[0] == 0.0


def test_multiplicity_mismatch():
    with pytest.raises(SpecificationError):
        gaussian_limit_from_groups(groups_1d([5, 4], [0, 0], [1, 1]), 10)


def test_group_validation():
    with pytest.raises(SpecificationError):
        GroupSpec(np.array([2]), np.zeros((1, 2)), np.array([[[1.0, 0.5], [0.0, 1.0]]]))
    with pytest.raises(SpecificationError):
        GroupSpec(np.array([2]), np.zeros((1, 2)), np.array([[[1.0, 2.0], [2.0, 1.0]]]))


@given(st.lists(st.tuples(st.integers(0, 20), st.floats(-1, 1), st.floats(-1, 1),
                          st.floats(-1, 1)), min_size=1, max_size=5))
def test_group_limit_is_psd(rows):
    m = [r[0] for r in rows]
    if sum(m) == 0:
        m[0] = 1
    sig = []
    for _, a, b, c in rows:
        L = np.array([[a, 0.0], [b, c]])
        sig.append(L @ L.T)
    g = GroupSpec(np.array(m), np.zeros((len(m), 2)), np.array(sig))
    assert gaussian_limit_from_groups(g, sum(m)).is_psd(tol=1e-10)


def test_limit_sequence_reports_tail_spread():
    fam = {n: groups_1d([n], [0.0], [1.0 + 1.0 / n]) for n in (10, 100, 1000, 10_000)}
    lim, spread = gaussian_limit_sequence(fam)
    assert lim.cov[0, 0] == pytest.approx(1.0001)
    assert spread == pytest.approx(1 / 1000 - 1 / 10_000)


def test_continuous_limit_constant():
    h = 3.0
    T = h - 1
    lim = continuous_limit_from_density(lambda s: 1.0, lambda s: 0.0, lambda s: 0.7, h, T)
    assert lim.cov[0, 0] == pytest.approx(0.7)
    assert lim.mean[0] == 0.0


def test_continuous_limit_linear_weights():
    lim = continuous_limit_from_density(lambda s: s, lambda s: 0.0, lambda s: s, 2.0, 1.5)
    assert lim.cov[0, 0] == pytest.approx(14 / 9, abs=1e-12)


def test_continuous_limit_normalisation_checked():
    with pytest.raises(SpecificationError):
        continuous_limit_from_density(lambda s: s, lambda s: 0.0, lambda s: s, 2.0, 2.0)


# -- product characteristic function ---------------------------------------

def test_cf_product_at_origin():
    g = groups_1d([3, 4], [0.2, -0.1], [1.0, 2.0])
    assert cf_product(CfModel(g), 0.0) == 1.0
    model = CfModel(g, d_n=lambda t: 0.01 * math.cos(float(np.sum(t))))
    assert cf_product(model, 0.0) == pytest.approx(1.01)


@given(st.integers(1, 10_000), st.floats(-4, 4))
def test_cf_product_standard_scaling(n, t):
    g = groups_1d([n], [0.0], [1.0])
    assert cf_product(CfModel(g), t / math.sqrt(n)) == pytest.approx(math.exp(-t * t / 2),
                                                                     abs=1e-12)


def test_cf_product_radius():
    model = CfModel(groups_1d([1], [0], [1]), radius=1.0)
    with pytest.raises(DomainError):
        cf_product(model, 1.5)


def test_cf_model_requires_unit_prefactor():
    with pytest.raises(SpecificationError):
        CfModel(groups_1d([1], [0], [1]), c=lambda t: 2.0)


# -- subsequence selection -------------------------------------------------

def test_subsequence_of_constant():
    v = np.array([[2.0, 0.5], [0.5, 1.0]])
    idx, lim = extract_convergent_subsequence(np.repeat(v[None], 30, axis=0), 1e-9)
    assert np.array_equal(idx, np.arange(30))
    assert np.array_equal(lim, v)


def test_subsequence_of_alternating():
    a, b = 1.0, 3.0
    x = np.array([a if k % 2 == 0 else b for k in range(40)])
    idx, lim = extract_convergent_subsequence(x, 1e-6)
    assert lim == a
    assert np.array_equal(idx, np.arange(0, 40, 2))


def test_subsequence_of_convergent():
    v = 2.0
    x = v + 1.0 / np.arange(1, 201)
    idx, lim = extract_convergent_subsequence(x, 0.05)
    assert lim == pytest.approx(v, abs=0.05)
    assert idx[-1] == 199 and np.array_equal(idx, np.arange(idx[0], 200))


def test_subsequence_empty():
    with pytest.raises(SpecificationError):
        extract_convergent_subsequence(np.array([]), 0.1)


# -- statistics of simulated paths -----------------------------------------

def _paths(spec, c, count, seed=1):
    return [simulate(spec, c, child(seed, r)) for r in range(count)]


def test_identical_deterministic_paths_give_zero():
    c = SimConfig(np.array([0.5]), np.array([0.1]), TimeGrid(0.5, 40))
    stat = assemble_statistic(_paths(PENDULUM, c, 5), 1.0, 20)
    assert np.all(stat.normalized == 0.0)
    k = np.arange(1, 21)
    assert stat.centering[0] == pytest.approx(np.sum(0.1 / k + 1.0))


def test_misaligned_delta_names_index():
    c = SimConfig(np.array([0.5]), np.array([0.0]), TimeGrid(0.3, 40))
    with pytest.raises(AlignmentError):
        assemble_statistic(_paths(PENDULUM, c, 2), 1.0, 5)
    c = SimConfig(np.array([0.5]), np.array([0.0]), TimeGrid(0.5, 10))
    with pytest.raises(AlignmentError) as err:
        assemble_statistic(_paths(PENDULUM, c, 2), 1.0, 8)
    assert err.value.index == 6


def test_pendulum_variance_exact_finite_n():
    # Var of Σ B_k / k is Σ_{j,k} 1/max(j,k) = 2n - H_n, so the normalised
    # statistic has variance ζ²(2n - H_n)/n for δ = 1
    n, zeta, R = 64, 0.5, 4000
    c = SimConfig(np.array([0.5]), np.array([0.0]), TimeGrid(0.5, 2 * n), sigma=0.1,
                  zeta=zeta)
    ens = run_ensemble(PENDULUM, c, 77, R, 1.0, n)
    stat = statistic_from_terms(ens.terms, 1.0)
    harmonic = np.sum(1.0 / np.arange(1, n + 1))
    exact = zeta ** 2 * (2 * n - harmonic) / n
    var = stat.normalized[:, 0].var(ddof=1)
    assert abs(var - exact) <= 3 * exact * math.sqrt(2 / (R - 1))


def test_ensemble_order_independent_of_threads():
    c = SimConfig(np.array([0.5]), np.array([0.0]), TimeGrid(0.5, 40), sigma=0.1, zeta=0.5)
    a = run_ensemble(PENDULUM, c, 5, 16, 1.0, 20, threads=1)
    b = run_ensemble(PENDULUM, c, 5, 16, 1.0, 20, threads=4)
    assert np.array_equal(a.terms, b.terms)


def test_statistic_reports_within_path_correlation():
    c = SimConfig(np.array([0.5]), np.array([0.0]), TimeGrid(0.5, 200), sigma=0.1, zeta=0.5)
    stat = assemble_statistic(_paths(PENDULUM, c, 50), 1.0, 100)
    # θ_k/k share the driving noise, so neighbouring summands are strongly correlated
    assert stat.autocorrelation > 0.5


def test_n_scaling_reduces_variance():
    c = SimConfig(np.array([0.5]), np.array([0.0]), TimeGrid(1.0, 256), sigma=0.1, zeta=0.5)
    ens = run_ensemble(PENDULUM, c, 6, 1000, 1.0, 256)
    v_small = statistic_from_terms(ens.terms[:, :32], 1.0).scaled(1.0).var()
    v_large = statistic_from_terms(ens.terms, 1.0).scaled(1.0).var()
    assert v_large < v_small / 4


# -- predicted limits ------------------------------------------------------

def _cfg(dim, **kw):
    return SimConfig(np.ones(dim), np.zeros(dim), TimeGrid(0.1, 10), **kw)


def test_predicted_pendulum_gaussian():
    lim = predicted_limit(PENDULUM, _cfg(1, sigma=0.1, zeta=0.5), np.array([1.0]))
    assert lim.cov[0, 0] == 1.0 and lim.mean[0] == 0.0


def test_predicted_levy_bounds_1d():
    tri = LevyTriplet([0.3], 1.0, JumpMeasureSpec.uniform(-0.5, 0.5, 2.0))
    lim = predicted_limit(PENDULUM, _cfg(1, zeta=0.2, angle_noise=tri), np.array([1.0]))
    assert lim.cov_lower[0, 0] == 1.0
    assert lim.cov_upper[0, 0] == pytest.approx(1.0072, abs=1e-12)


def test_predicted_rank_one_2d():
    sysm = SystemSpec.custom(FrequencyMap.constant_map([1.0, 2.0]))
    lim = predicted_limit(sysm, _cfg(2, zeta=0.5), np.array([1.0, 2.0]))
    assert np.array_equal(lim.cov, [[1, 2], [2, 4]])
    assert np.linalg.matrix_rank(lim.cov) == 1


def test_predicted_levy_bounds_2d():
    sysm = SystemSpec.custom(FrequencyMap.constant_map([1.0, 2.0]))
    tri = LevyTriplet([0.3, 0.1], 1.0)
    lim = predicted_limit(sysm, _cfg(2, zeta=0.2, angle_noise=tri), np.array([1.0, 2.0]))
    g = np.array([0.3, 0.1])
    w = np.array([1.0, 2.0])
    expected = np.outer(w, w) + 0.04 * (g[:, None] + g[None, :]) ** 2 + 2 * np.outer(w, w)
    assert np.allclose(lim.cov_upper, expected)


def test_predicted_dimension_mismatch():
    with pytest.raises(SpecificationError):
        predicted_limit(PENDULUM, _cfg(1), np.array([1.0, 2.0]))
