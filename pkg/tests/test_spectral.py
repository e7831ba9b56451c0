import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergosde import (
    ConstantKernel,
    GaussianKernel,
    NumericError,
    PolynomialKernel,
    RankError,
    TrainingSet,
    UnsupportedKernelError,
    assemble_empirical_kernel,
    eigendecompose,
    fit_spectral,
    lipschitz_bound,
    nystrom_extend,
    predict,
)
from ergosde.kernels import Kernel, make_kernel
from ergosde.sde import EmConfig, finite_difference_labels, make_benchmark_model, simulate, subsample
from ergosde.spectral import SpectralEstimator, eigendecompose_features


def rbf_problem(n=200, d=2, seed=0):
    x = np.random.default_rng(seed).normal(size=(n, d))
    return x, GaussianKernel(1.0)


def ou_labels(N, delta=0.1, stride=10, seed=0, sigma=math.sqrt(2)):
    ou = make_benchmark_model("ou", {"theta": 1.0, "sigma": sigma})
    traj = simulate(ou, [0.0], EmConfig(delta, N * stride + 500, 500, seed))
    return subsample(finite_difference_labels(traj), stride, 500)


class BrokenKernel(Kernel):
    name = "broken"

    def __call__(self, X, Y):
        K = np.ones((np.asarray(X).shape[0], np.asarray(Y).shape[0]))
        K[1, 2] = np.inf
        return K


# --- kernels -----------------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(-5, 5), min_size=2, max_size=2),
    st.lists(st.floats(-5, 5), min_size=2, max_size=2),
    st.sampled_from(["constant", "poly1", "rbf"]),
)
def test_kernel_symmetry(x, y, name):
    k = make_kernel(name)
    assert k.eval(x, y) == k.eval(y, x)


def test_kernel_diag_matches_eval():
    x = np.random.default_rng(1).normal(size=(5, 3))
    for k in (ConstantKernel(2.0), PolynomialKernel(0.5), GaussianKernel(0.7)):
        np.testing.assert_allclose(k.diag(x), [k.eval(r, r) for r in x])


def test_rbf_gradient_bound_by_sampling():
    h = 0.8
    k = GaussianKernel(h)
    x = np.zeros(1)
    z = np.linspace(-5, 5, 20001)
    grad = np.abs(z / h**2 * np.exp(-(z**2) / (2 * h**2)))
    assert grad.max() == pytest.approx(k.grad_sup([x])[0], rel=1e-6)


def test_poly1_gradient_bound_is_norm():
    x = np.array([[3.0, 4.0], [0.0, 0.0]])
    np.testing.assert_allclose(PolynomialKernel().grad_sup(x), [5.0, 0.0])


# --- empirical kernel --------------------------------------------------------


def test_constant_kernel_matrix():
    ek = assemble_empirical_kernel(np.zeros((3, 1)), ConstantKernel())
    np.testing.assert_allclose(ek.matrix, np.full((3, 3), 1 / 3))


def test_poly1_matrix_example():
    ek = assemble_empirical_kernel(np.array([[0.0], [1.0]]), PolynomialKernel())
    np.testing.assert_allclose(ek.matrix, 0.5 * np.array([[1, 1], [1, 2]]))


def test_rbf_matrix_psd_and_symmetric():
    x, k = rbf_problem(50)
    ek = assemble_empirical_kernel(x, k)
    assert np.array_equal(ek.matrix, ek.matrix.T)
    w = np.linalg.eigvalsh(ek.matrix)
    assert w.min() >= -1e-10 * w.max()


def test_non_finite_kernel_value_names_pair():
    with pytest.raises(NumericError, match="x_1, x_2"):
        assemble_empirical_kernel(np.zeros((4, 1)), BrokenKernel())


# --- eigensystem -------------------------------------------------------------


def test_constant_kernel_eigensystem():
    es = eigendecompose(assemble_empirical_kernel(np.random.default_rng(0).normal(size=(7, 2)), ConstantKernel()))
    assert es.rank == 1
    assert es.eigenvalues[0] == pytest.approx(1.0)
    np.testing.assert_allclose(es.eigenvectors[:, 0], np.ones(7))


def test_two_by_two_eigenvalues_closed_form():
    ek = assemble_empirical_kernel(np.array([[0.0], [1.0]]), PolynomialKernel())
    es = eigendecompose(ek)
    # roots of t^2 - (3/2) t + 1/4
    np.testing.assert_allclose(es.eigenvalues, [(3 + math.sqrt(5)) / 4, (3 - math.sqrt(5)) / 4], rtol=1e-14)


def test_eigensystem_invariants_rbf():
    x, k = rbf_problem(120)
    ek = assemble_empirical_kernel(x, k)
    es = eigendecompose(ek)
    lam, U = es.eigenvalues, es.eigenvectors
    assert np.all(np.diff(lam) <= 0) and np.all(lam > 0)
    np.testing.assert_allclose(U.T @ U / es.N, np.eye(es.rank), atol=1e-8)
    assert np.max(np.linalg.norm(ek.matrix @ U - U * lam, axis=0) / math.sqrt(es.N)) <= 1e-8 * lam[0]
    # sign convention: largest-magnitude entry of each column is positive
    assert np.all(U[np.argmax(np.abs(U), axis=0), np.arange(es.rank)] > 0)


def test_full_rank_reconstruction():
    x, k = rbf_problem(40, d=3)
    ek = assemble_empirical_kernel(x, k)
    es = eigendecompose(ek, rank_tol=0.0)
    rec = (es.eigenvectors * es.eigenvalues) @ es.eigenvectors.T / es.N
    assert np.linalg.norm(ek.matrix - rec) <= 1e-8 * np.linalg.norm(ek.matrix)


def test_feature_route_matches_dense_route():
    x = np.random.default_rng(4).normal(size=(60, 2))
    k = PolynomialKernel(0.3)
    dense = eigendecompose(assemble_empirical_kernel(x, k))
    feat = eigendecompose_features(k.features(x))
    assert dense.rank == feat.rank == 3
    np.testing.assert_allclose(dense.eigenvalues, feat.eigenvalues, rtol=1e-10)
    np.testing.assert_allclose(dense.eigenvectors, feat.eigenvectors, atol=1e-7)


# --- Nystrom -----------------------------------------------------------------


def test_nystrom_identity_at_samples():
    x, k = rbf_problem(200)
    es = eigendecompose(assemble_empirical_kernel(x, k))
    for j in range(0, es.rank, 7):
        v = nystrom_extend(es, k, x, j, x)
        np.testing.assert_allclose(v, math.sqrt(es.eigenvalues[j]) * es.eigenvectors[:, j], atol=1e-8)


def test_nystrom_constant_kernel_is_one():
    x = np.random.default_rng(2).normal(size=(9, 2))
    es = eigendecompose(assemble_empirical_kernel(x, ConstantKernel()))
    for q in ([0.0, 0.0], [10.0, -3.0]):
        assert nystrom_extend(es, ConstantKernel(), x, 0, q) == pytest.approx(1.0)


def test_nystrom_orthonormality():
    x, k = rbf_problem(80)
    es = eigendecompose(assemble_empirical_kernel(x, k))
    r = min(es.rank, 15)
    V = np.stack([nystrom_extend(es, k, x, j, x) for j in range(r)], axis=1)
    G = (V.T @ V) / es.N / np.sqrt(np.outer(es.eigenvalues[:r], es.eigenvalues[:r]))
    np.testing.assert_allclose(G, np.eye(r), atol=1e-8)


def test_nystrom_index_out_of_range():
    x, k = rbf_problem(10)
    es = eigendecompose(assemble_empirical_kernel(x, k))
    with pytest.raises(IndexError):
        nystrom_extend(es, k, x, es.rank, x[0])


# --- fit / predict -------------------------------------------------------------


def test_constant_labels_constant_kernel():
    x = np.random.default_rng(3).normal(size=(30, 1))
    est = fit_spectral(TrainingSet(x, np.full((30, 1), 2.5), 0.1), ConstantKernel(), 1)
    np.testing.assert_allclose(predict(est, np.array([[-100.0], [0.0], [7.0]])), 2.5)


def test_poly1_interpolates_linear_labels():
    x = np.random.default_rng(5).uniform(-3, 3, size=(500, 1))
    est = fit_spectral(TrainingSet(x, -x, 0.1), PolynomialKernel(), 2)
    assert est.rank == 2
    assert np.max(np.abs(predict(est, x) + x)) <= 1e-6


def test_prediction_formula_matches_projection_form():
    x, k = rbf_problem(60)
    y = np.sin(x)
    est = fit_spectral(TrainingSet(x, y, 0.1), k, 10)
    q = np.random.default_rng(9).normal(size=(5, 2))
    N = x.shape[0]
    Kq = k(x, q)  # (N, 5)
    direct = np.zeros((5, 2))
    for j in range(10):
        u = est.eigenvectors[:, j]
        direct += np.outer(u @ Kq / N, u @ y / N) / est.eigenvalues[j]
    np.testing.assert_allclose(predict(est, q), direct, atol=1e-10)


def test_rank_error_reports_rank():
    x = np.random.default_rng(0).normal(size=(20, 1))
    with pytest.raises(RankError) as info:
        fit_spectral(TrainingSet(x, x, 0.1), PolynomialKernel(), 3)
    assert info.value.rank == 2


def test_prediction_linear_in_labels():
    x, k = rbf_problem(70)
    g = np.random.default_rng(1)
    y1, y2 = g.normal(size=(70, 2)), g.normal(size=(70, 2))
    es = eigendecompose(assemble_empirical_kernel(x, k))
    q = g.normal(size=(25, 2))
    p1 = predict(fit_spectral(TrainingSet(x, y1, 0.1), k, 12, es=es), q)
    p2 = predict(fit_spectral(TrainingSet(x, y2, 0.1), k, 12, es=es), q)
    p12 = predict(fit_spectral(TrainingSet(x, 2.0 * y1 - 0.5 * y2, 0.1), k, 12, es=es), q)
    np.testing.assert_allclose(p12, 2.0 * p1 - 0.5 * p2, atol=1e-10)


def test_projection_idempotent_at_data():
    x, k = rbf_problem(90)
    y = np.cos(x).sum(axis=1, keepdims=True)
    est = fit_spectral(TrainingSet(x, y, 0.1), k, 8)
    p = predict(est, x)
    again = fit_spectral(TrainingSet(x, p, 0.1), k, 8)
    np.testing.assert_allclose(predict(again, x), p, atol=1e-8)


def heldout_error(N, seed):
    ts = ou_labels(N, seed=seed)
    est = fit_spectral(ts, PolynomialKernel(), 2)
    ho = ou_labels(4000, seed=10_000 + seed).points
    return float(np.mean((predict(est, ho) + ho) ** 2))


def test_heldout_error_decreases_with_sample_size():
    # the squared L2 error of an order-2 fit is O(1/N) here, so N -> 4N cuts the
    # median by about 4; require at least a factor 2
    e_small = np.median([heldout_error(2000, s) for s in range(12)])
    e_large = np.median([heldout_error(8000, s) for s in range(12)])
    assert e_large < e_small / 2


def test_growth_constant_reported_and_bounds_audit():
    ts = ou_labels(1000, seed=3)
    est = fit_spectral(ts, PolynomialKernel(), 2)
    C = est.diagnostics["growth_constant"]
    assert np.isfinite(C)
    assert est.diagnostics["growth_audit"] <= C
    R = 10 * np.max(np.abs(ts.points))
    grid = np.linspace(-R, R, 1001)[:, None]
    assert np.all(np.abs(predict(est, grid)[:, 0]) / np.sqrt(1 + grid[:, 0] ** 2) <= C + 1e-12)
    assert est.diagnostics["noise_floor"][0] > 0


def test_rkhs_norm_matches_gram_form():
    x, k = rbf_problem(50)
    est = fit_spectral(TrainingSet(x, np.sin(x), 0.1), k, 6)
    w = est.weights
    G = k(x, x)
    np.testing.assert_allclose(est.diagnostics["rkhs_norm"], np.sqrt(np.einsum("ic,ij,jc->c", w, G, w)), rtol=1e-8)


# --- Lipschitz bound ---------------------------------------------------------


def test_constant_kernel_bound_zero():
    x = np.random.default_rng(0).normal(size=(10, 1))
    est = fit_spectral(TrainingSet(x, np.sin(x), 0.1), ConstantKernel(), 1)
    assert lipschitz_bound(est) == 0.0
    assert np.ptp(predict(est, np.linspace(-5, 5, 11)[:, None])) == 0.0


def test_poly1_L_is_norm():
    x = np.random.default_rng(0).normal(size=(10, 3))
    np.testing.assert_allclose(PolynomialKernel().grad_sup(x), np.linalg.norm(x, axis=1))


def test_unsupported_kernel():
    class Plain(Kernel):
        name = "plain"

        def __call__(self, X, Y):
            return np.asarray(X) @ np.asarray(Y).T + 1.0

    x = np.random.default_rng(0).normal(size=(10, 1))
    est = fit_spectral(TrainingSet(x, x, 0.1), Plain(), 2)
    with pytest.raises(UnsupportedKernelError):
        lipschitz_bound(est)


@pytest.mark.parametrize("kernel,M", [(PolynomialKernel(), 2), (GaussianKernel(0.7), 6)])
def test_lipschitz_audit(kernel, M):
    ts = ou_labels(300, seed=2)
    est = fit_spectral(ts, kernel, M)
    bound = lipschitz_bound(est)
    g = np.random.default_rng(7)
    a = g.uniform(-6, 6, size=(10_000, 1))
    b = a + g.normal(scale=0.5, size=a.shape)
    q = np.abs(predict(est, a) - predict(est, b))[:, 0] / np.abs(a - b)[:, 0]
    assert np.all(q <= bound)


def test_json_round_trip():
    x, k = rbf_problem(40)
    est = fit_spectral(TrainingSet(x, np.sin(x), 0.1), k, 5)
    back = SpectralEstimator.from_json(est.to_json())
    q = np.random.default_rng(0).normal(size=(20, 2))
    np.testing.assert_allclose(predict(back, q), predict(est, q), rtol=0, atol=1e-12)
    doc = json.loads(est.to_json())
    assert doc["kernel"] == {"name": "rbf", "bandwidth": 1.0} and doc["M"] == 5
