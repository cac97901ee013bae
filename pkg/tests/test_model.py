import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from saia.model import (BlrDataset, DatasetError, FrequencySummary, FunctionModel,
                        GaussianModelSpec, PowerIterationWarning, frequencies_from_hessians,
                        load_dataset, make_blr_model, make_gaussian_diag_mixture,
                        make_gaussian_model, make_gaussian_wishart,
                        max_frequency_power_iteration)

from conftest import GERMAN_CSV


def _fd_gradient(f, x, eps=1e-6):
    g = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = eps
        g[i] = (f(x + e) - f(x - e)) / (2 * eps)
    return g


def _random_blr(rng, K=60, D=4, prior=0.7):
    X = rng.standard_normal((K, D))
    y = np.where(rng.uniform(size=K) < 0.5, -1.0, 1.0)
    return make_blr_model(BlrDataset(X, y, prior))


# --------------------------------------------------------------------------
# Gaussian targets
# --------------------------------------------------------------------------

def test_gaussian_potential_gradient_hessian(rng):
    P = np.array([[2.0, 0.3], [0.3, 1.0]])
    mean = np.array([0.5, -1.0])
    m = make_gaussian_model(GaussianModelSpec(P, mean))
    x = rng.standard_normal(2)
    r = x - mean
    assert m.potential(x) == pytest.approx(0.5 * r @ P @ r)
    np.testing.assert_allclose(m.gradient(x), _fd_gradient(m.potential, x), rtol=1e-7)
    np.testing.assert_array_equal(m.hessian(x), P)
    assert m.hessian_is_constant


def test_gaussian_spec_validation():
    with pytest.raises(ValueError, match="square"):
        GaussianModelSpec(np.ones((2, 3)))
    with pytest.raises(ValueError, match="symmetric"):
        GaussianModelSpec(np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ValueError, match="length"):
        GaussianModelSpec(np.eye(2), np.zeros(3))


def test_diagonal_and_dense_paths_agree(rng):
    diag = np.array([1.0, 4.0, 9.0])
    dense = np.diag(diag) + 1e-300 * np.ones((3, 3))  # defeats the diagonal shortcut
    md = make_gaussian_model(GaussianModelSpec(np.diag(diag)))
    mf = make_gaussian_model(GaussianModelSpec(dense))
    assert md.spec.is_diagonal and not mf.spec.is_diagonal
    theta, p = rng.standard_normal(3), rng.standard_normal(3)
    kicks, drifts = np.array([0.2, 0.6, 0.2]), np.array([0.5, 0.5])
    a = md.integrate(theta, p, kicks, drifts, 0.3, 4)
    b = mf.integrate(theta, p, kicks, drifts, 0.3, 4)
    np.testing.assert_allclose(a[0], b[0], rtol=1e-13)
    np.testing.assert_allclose(a[1], b[1], rtol=1e-13)


def test_compiled_leg_matches_generic_loop(rng):
    P = np.array([[2.0, 0.3], [0.3, 1.0]])
    m = make_gaussian_model(GaussianModelSpec(P))
    generic = FunctionModel(2, m.potential, m.gradient)
    theta, p = rng.standard_normal(2), rng.standard_normal(2)
    kicks, drifts = np.array([0.12, 0.38, 0.38, 0.12]), np.array([0.3, 0.4, 0.3])
    a = m.integrate(theta, p, kicks, drifts, 0.4, 7)
    b = generic.integrate(theta, p, kicks, drifts, 0.4, 7)
    np.testing.assert_allclose(a[0], b[0], rtol=1e-12)
    np.testing.assert_allclose(a[1], b[1], rtol=1e-12)
    assert a[2] == b[2] == 22


def test_wishart_one_dimensional_is_chi_square():
    spec = make_gaussian_wishart(1, seed=3)
    g2 = np.random.default_rng(3).chisquare(1)
    assert spec.precision[0, 0] == pytest.approx(g2)


def test_wishart_is_symmetric_positive_definite():
    P = make_gaussian_wishart(3, seed=7).precision
    np.testing.assert_allclose(P, P.T, atol=1e-12)
    assert np.linalg.eigvalsh(P).min() > 0


def test_wishart_trace_follows_chi_square():
    # tr W ~ chi^2 with D * D degrees of freedom for W ~ Wishart(D, I_D)
    D = 5
    traces = [np.trace(make_gaussian_wishart(D, seed=s).precision) for s in range(400)]
    assert stats.kstest(traces, stats.chi2(D * D).cdf).pvalue > 1e-3


def test_wishart_mean_eigenvalue_is_dimension():
    D = 50
    means = [np.trace(make_gaussian_wishart(D, seed=s).precision) / D for s in range(100)]
    sd = math.sqrt(2.0) / 10.0  # sd of the mean of 100 draws of chi^2(D^2) / D
    assert abs(np.mean(means) - D) < 4 * sd


def test_wishart_is_reproducible():
    a = make_gaussian_wishart(10, seed=1).precision
    b = make_gaussian_wishart(10, seed=1).precision
    np.testing.assert_array_equal(a, b)


def test_diag_mixture_degenerate_scale():
    spec = make_gaussian_diag_mixture(1, 0, 4.0, 0.0, 1.0, 1.0, seed=0)
    np.testing.assert_array_equal(spec.precision, [[4.0]])
    assert spec.eigenvalues()[0] == 4.0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_diag_mixture_entries_positive(seed):
    spec = make_gaussian_diag_mixture(990, 10, 1.0, 1.0, 10.0, 5.0, seed)
    d = np.diag(spec.precision)
    assert spec.dimension == 1000 and spec.is_diagonal and np.all(d > 0)


def test_diag_mixture_gives_up():
    with pytest.raises(ValueError):
        make_gaussian_diag_mixture(3, 0, -100.0, 1.0, 0.0, 1.0, seed=0, max_redraws=5)


# --------------------------------------------------------------------------
# Logistic regression
# --------------------------------------------------------------------------

def test_blr_single_observation_at_origin():
    m = make_blr_model(BlrDataset(np.array([[1.0]]), np.array([1.0]), 1.0))
    assert m.potential(np.zeros(1)) == pytest.approx(math.log(2))
    np.testing.assert_allclose(m.gradient(np.zeros(1)), [-0.5])
    np.testing.assert_allclose(m.hessian(np.zeros(1)), [[1.25]])


def test_blr_hessian_at_origin(rng):
    m = _random_blr(rng)
    X = m.data.X
    np.testing.assert_allclose(m.hessian(np.zeros(4)), 0.25 * X.T @ X + 0.7 * np.eye(4),
                               rtol=1e-12)


def test_blr_derivatives_match_finite_differences(rng):
    m = _random_blr(rng)
    x = 0.3 * rng.standard_normal(4)
    np.testing.assert_allclose(m.gradient(x), _fd_gradient(m.potential, x), rtol=1e-6)
    H_fd = np.array([_fd_gradient(lambda t, i=i: m.gradient(t)[i], x) for i in range(4)])
    np.testing.assert_allclose(m.hessian(x), H_fd, rtol=1e-5, atol=1e-8)
    v = rng.standard_normal(4)
    np.testing.assert_allclose(m.hessian_vector_product(x, v), m.hessian(x) @ v, rtol=1e-6)


def test_blr_potential_survives_large_margins():
    m = make_blr_model(BlrDataset(np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])))
    assert math.isfinite(m.potential(np.array([800.0])))


def test_blr_dataset_validation():
    with pytest.raises(ValueError, match="labels"):
        BlrDataset(np.ones((2, 1)), np.array([0.0, 1.0]))
    with pytest.raises(ValueError, match="rows"):
        BlrDataset(np.ones((2, 1)), np.array([1.0]))
    with pytest.raises(ValueError, match="non-finite"):
        BlrDataset(np.array([[np.nan]]), np.array([1.0]))


# --------------------------------------------------------------------------
# Dataset loading
# --------------------------------------------------------------------------

def test_load_toy_csv(tmp_path):
    path = tmp_path / "toy.csv"
    path.write_text("1,0,1\n0,1,0\n")
    data = load_dataset(path, standardize=False, intercept=False)
    np.testing.assert_array_equal(data.X, [[1, 0], [0, 1]])
    np.testing.assert_array_equal(data.y, [1, -1])


def test_load_labels_first_and_whitespace(tmp_path):
    path = tmp_path / "toy.txt"
    path.write_text("2 1.5 3\n1 0.5 4\n")
    data = load_dataset(path, format="csv_labels_first", standardize=False, intercept=False)
    np.testing.assert_array_equal(data.X, [[1.5, 3], [0.5, 4]])
    np.testing.assert_array_equal(data.y, [1, -1])


def test_load_standardizes_and_appends_intercept(tmp_path):
    path = tmp_path / "toy.csv"
    path.write_text("h1,h2,label\n1,5,1\n2,5,0\n3,5,1\n")
    data = load_dataset(path, header=True)
    np.testing.assert_allclose(data.X[:, 0], [-1.2247448714, 0, 1.2247448714])
    np.testing.assert_array_equal(data.X[:, 1], 0.0)  # constant column: centred only
    np.testing.assert_array_equal(data.X[:, 2], 1.0)


def test_load_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "absent.csv")


@pytest.mark.parametrize("text,needle", [
    ("1,2,1\n1,x,0\n", "row 2, column 2"),
    ("1,2,1\n1,0\n", "row 2 has 2 fields"),
    ("1,2,1\n1,2,2\n3,4,3\n", "exactly two values"),
    ("1,nan,1\n1,2,0\n", "non-finite"),
])
def test_load_reports_bad_rows(tmp_path, text, needle):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(DatasetError, match=needle):
        load_dataset(path)


def test_musk_shaped_file_dimension(tmp_path, rng):
    X = rng.standard_normal((476, 166)).round(3)
    y = rng.integers(0, 2, 476)
    path = tmp_path / "musk.csv"
    np.savetxt(path, np.column_stack([X, y]), delimiter=",", fmt="%.3f")
    data = load_dataset(path)
    assert (data.K, data.D) == (476, 167)


def test_german_file_dimension():
    data = load_dataset(GERMAN_CSV)
    assert (data.K, data.D) == (1000, 25)
    assert make_blr_model(data).dimension == 25
    assert set(np.unique(data.y)) == {-1.0, 1.0}


# --------------------------------------------------------------------------
# Frequencies
# --------------------------------------------------------------------------

def test_frequencies_single_diagonal_sample():
    f = frequencies_from_hessians([np.diag([4.0, 9.0])])
    np.testing.assert_allclose(f.omegas, [2, 3])
    assert f.omega_max == 3 and f.sigma == pytest.approx(0.5)


def test_frequencies_rank_matched_average():
    f = frequencies_from_hessians([np.eye(2), 9 * np.eye(2)])
    np.testing.assert_allclose(f.omegas, [2, 2])


def test_frequencies_of_gaussian_are_sqrt_precision_eigenvalues():
    spec = make_gaussian_wishart(6, seed=2)
    f = frequencies_from_hessians([spec.precision] * 3)
    np.testing.assert_allclose(f.omegas, np.sqrt(np.linalg.eigvalsh(spec.precision)),
                               rtol=1e-12)


def test_frequencies_clamp_negative_eigenvalues():
    f = frequencies_from_hessians([np.diag([-1.0, 4.0])])
    np.testing.assert_allclose(f.omegas, [0, 2])


def test_frequency_summary_sum_omega6():
    assert FrequencySummary.from_omegas([1.0, 2.0]).sum_omega6() == 65.0
    with pytest.raises(ValueError):
        FrequencySummary(3.0).sum_omega6()
    with pytest.raises(ValueError):
        frequencies_from_hessians([])


@pytest.mark.parametrize("diag,want", [([4.0, 9.0], 3.0), ([1.0, 1.0, 1.0], 1.0)])
def test_power_iteration_gaussian(diag, want, rng):
    m = make_gaussian_model(GaussianModelSpec(np.diag(diag)))
    assert max_frequency_power_iteration(m, rng.standard_normal(len(diag))) == \
        pytest.approx(want, rel=1e-6)


def test_power_iteration_blr_matches_dense_eigen(rng):
    m = _random_blr(rng, K=200, D=6)
    want = math.sqrt(np.linalg.eigvalsh(m.hessian(np.zeros(6)))[-1])
    got = max_frequency_power_iteration(m, np.zeros(6))
    assert got == pytest.approx(want, rel=1e-3)


def test_power_iteration_warns_when_not_converged():
    m = make_gaussian_model(GaussianModelSpec(np.diag([1.0, 1.0001, 0.5])))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        max_frequency_power_iteration(m, np.zeros(3), tol=1e-15, max_iters=3)
    assert any(issubclass(w.category, PowerIterationWarning) for w in caught)
