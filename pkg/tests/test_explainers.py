import itertools
import math

import numpy as np
import pytest

from conftest import FunctionLogits, LinearLogits, linear_network
from tetrobench.datagen import ScenarioSpec, build_dataset
from tetrobench.explainers import (AttributionRequest, METHODS, available_methods, deconvolution,
                                   explain, explain_batch, gradient_shap, guided_backprop,
                                   integrated_gradients, kernel_shap, laplace, lime, lrp_epsilon,
                                   permutation_feature_importance, rectified_input,
                                   resolve_params, saliency, shapley_value_sampling, sobel)
from tetrobench.explainers.baselines import LAPLACE, SOBEL_X, SOBEL_Y
from tetrobench.models import Network, TrainingConfig, build_architecture, train


def exact_shapley(f, x, b):
    """Shapley values of pixels by enumerating every ordering."""
    x, b = x.ravel(), b.ravel()
    M = len(x)
    phi = np.zeros(M)
    for order in itertools.permutations(range(M)):
        z = b.copy()
        prev = f(z)
        for j in order:
            z[j] = x[j]
            cur = f(z)
            phi[j] += cur - prev
            prev = cur
    return phi / math.factorial(M)


def toy_f(z):
    """Nonlinear logit over 4 pixels, vectorised over (..., 4)."""
    return z[..., 0] * z[..., 1] + z[..., 2] ** 2 + 2 * z[..., 3] + z[..., 0] * z[..., 2] * z[..., 3]


toy_model = FunctionLogits(lambda x: toy_f(x.reshape(len(x), 4)))


@pytest.fixture
def mlp(rng):
    return Network.init(build_architecture("MLP", 8), 7)


@pytest.fixture(scope="module")
def trained_mlp():
    data = build_dataset(ScenarioSpec.paper_defaults("XOR", "CORR", alpha=0.15, n_samples=600))
    model = train(build_architecture("MLP", 8), data,
                  TrainingConfig.for_scenario("XOR", 8, epochs=15))
    return model.network, data


# ---------------------------------------------------------------- gradient family

def test_saliency_of_linear_model_is_weight_column(rng):
    W = rng.standard_normal((64, 2))
    net = linear_network(W)
    x = rng.standard_normal((3, 8, 8))
    np.testing.assert_allclose(saliency(net, x, [1, 0, 1])[0], W[:, 1].reshape(8, 8))
    np.testing.assert_allclose(saliency(net, x, [1, 0, 1])[1], W[:, 0].reshape(8, 8))
    W = np.zeros((64, 2))
    W[5, 1] = 3.0
    g = saliency(linear_network(W), x[0], 1)
    assert g.ravel()[5] == 3.0 and np.count_nonzero(g) == 1


def test_saliency_matches_finite_differences(mlp, rng):
    x = rng.standard_normal((8, 8))
    g = saliency(mlp, x, 1)
    h = 1e-6
    fd = np.empty(64)
    for i in range(64):
        e = np.zeros(64)
        e[i] = h
        fd[i] = (mlp.logits(x + e.reshape(8, 8))[1] - mlp.logits(x - e.reshape(8, 8))[1]) / (2 * h)
    np.testing.assert_allclose(g.ravel(), fd, rtol=1e-4, atol=1e-8)


def test_ig_on_affine_model_is_weight_times_input(rng):
    W = rng.standard_normal((64, 2))
    net = linear_network(W, b=[0.3, -0.2])
    x = rng.standard_normal((8, 8))
    for m in (1, 7, 64):
        np.testing.assert_allclose(integrated_gradients(net, x, 0, steps=m),
                                   W[:, 0].reshape(8, 8) * x, atol=1e-12)
    assert not np.any(integrated_gradients(net, np.zeros((8, 8)), 0))


def _completeness_gap(net, x, y, steps):
    attr = integrated_gradients(net, x, y, steps=steps)
    f = net.logits(x)[np.arange(len(x)), y]
    f0 = net.logits(np.zeros((1,) + x.shape[1:]))[0][y]
    return np.abs(attr.sum(axis=(1, 2)) - (f - f0)), np.abs(f - f0)


def test_ig_complete_on_homogeneous_net(rng):
    # without biases the activation pattern is constant along t * x, so any m is exact
    net = Network.init(build_architecture("MLP", 8), 2)
    x = rng.standard_normal((6, 8, 8))
    gap, scale = _completeness_gap(net, x, np.array([0, 1, 0, 1, 0, 1]), steps=3)
    assert np.all(gap <= 1e-12 * np.maximum(scale, 1))


def test_ig_completeness_converges_on_trained_mlp(trained_mlp):
    net, data = trained_mlp
    x = data.test.x[:20].astype(np.float64)
    y = data.test.y[:20].astype(np.int64)
    totals = []
    for m in (256, 1024, 4096, 16384):
        gap, scale = _completeness_gap(net, x, y, m)
        totals.append(gap.sum())
    # midpoint error on a piecewise-linear path shrinks roughly like 1/m
    assert all(a > 2.5 * b for a, b in zip(totals, totals[1:]))
    assert np.all(gap <= 1e-3 * scale + 1e-6)


def test_guided_and_deconv_equal_saliency_without_relu(rng):
    net = linear_network(rng.standard_normal((64, 2)))
    x = rng.standard_normal((4, 8, 8))
    t = [0, 1, 1, 0]
    s = saliency(net, x, t)
    np.testing.assert_array_equal(guided_backprop(net, x, t), s)
    np.testing.assert_array_equal(deconvolution(net, x, t), s)


def test_guided_zero_when_first_layer_inactive(mlp):
    params = [p.copy() for p in mlp.params]
    params[0] = -np.abs(params[0])
    net = Network(mlp.arch, params)
    x = np.abs(np.random.default_rng(1).standard_normal((2, 8, 8))) + 0.1
    assert not np.any(guided_backprop(net, x, [0, 1]))


def test_guided_sign_agrees_with_gradient_on_one_hidden_layer(rng):
    arch = build_architecture("MLP", 8, mlp_widths=(16,))
    W1 = rng.standard_normal((64, 16))
    W2 = rng.standard_normal((16, 2))
    W2[:, 1] = np.abs(W2[:, 1])
    net = Network(arch, [W1, np.zeros(16), W2, np.zeros(2)])
    x = rng.standard_normal((5, 8, 8))
    g = saliency(net, x, 1)
    gb = guided_backprop(net, x, 1)
    nz = gb != 0
    assert nz.any()
    assert np.all(np.sign(gb[nz]) == np.sign(g[nz]))


def test_gradient_shap_affine_and_zero(rng):
    W = rng.standard_normal((64, 2))
    net = linear_network(W)
    x = rng.standard_normal((8, 8))
    gs = gradient_shap(net, x, 1, samples=64, noise=0.3, seed=3)
    np.testing.assert_allclose(gs, W[:, 1].reshape(8, 8) * x, atol=1e-12)
    assert not np.any(gradient_shap(net, np.zeros((8, 8)), 1, noise=0.0))


def test_gradient_shap_converges_to_ig(trained_mlp):
    net, data = trained_mlp
    x = data.test.x[0].astype(np.float64)
    y = int(data.test.y[0])
    ig = integrated_gradients(net, x, y, steps=10_000)
    gs = gradient_shap(net, x, y, samples=10_000, noise=0.0, seed=1)
    assert np.linalg.norm(gs - ig) <= 0.05 * np.linalg.norm(ig)


def test_gradient_shap_is_seeded(mlp, rng):
    x = rng.standard_normal((8, 8))
    a = gradient_shap(mlp, x, 0, seed=5, sample_ids=[3])
    np.testing.assert_array_equal(a, gradient_shap(mlp, x, 0, seed=5, sample_ids=[3]))
    assert not np.array_equal(a, gradient_shap(mlp, x, 0, seed=6, sample_ids=[3]))


# ---------------------------------------------------------------- relevance propagation

def test_lrp_single_layer(rng):
    W = rng.standard_normal((64, 2))
    x = rng.standard_normal((8, 8))
    R = lrp_epsilon(linear_network(W), x, 0, eps=1e-12)
    np.testing.assert_allclose(R, W[:, 0].reshape(8, 8) * x, rtol=1e-9, atol=1e-12)
    assert not np.any(lrp_epsilon(linear_network(W), np.zeros((8, 8)), 0))


@pytest.mark.parametrize("kind", ["MLP", "CNN"])
def test_lrp_conservation_bias_free(kind, rng):
    net = Network.init(build_architecture(kind, 8), 11)
    x = rng.standard_normal((6, 8, 8))
    t = np.array([0, 1, 0, 1, 1, 0])
    R = lrp_epsilon(net, x, t)
    f = net.logits(x)[np.arange(6), t]
    np.testing.assert_allclose(R.sum(axis=(1, 2)), f, rtol=1e-2)


# ---------------------------------------------------------------- perturbation family

def test_pfi_constant_pixel_and_signal_pixel():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((40, 3, 3))
    X[:, 0, 0] = np.repeat([-1.0, 1.0], 20)
    X[:, 2, 2] = 0.7
    W = np.zeros((9, 2))
    W[0, 1] = 3.0
    W[8, 0] = 5.0
    y = (X[:, 0, 0] > 0).astype(int)
    imp = permutation_feature_importance(LinearLogits(W), X, y, repeats=5)
    assert imp[0, 0] > 0
    assert imp[2, 2] == 0.0
    others = np.ones((3, 3), bool)
    others[0, 0] = False
    assert np.all(imp[others] == 0.0)
    with pytest.raises(ValueError):
        permutation_feature_importance(LinearLogits(W), X, y, repeats=0)


def test_shapley_sampling_additive_model_exact(rng):
    W = rng.standard_normal((64, 2))
    x = rng.standard_normal((8, 8))
    for P in (1, 3):
        np.testing.assert_allclose(shapley_value_sampling(LinearLogits(W), x, 0, permutations=P),
                                   W[:, 0].reshape(8, 8) * x, atol=1e-12)
    patched = shapley_value_sampling(LinearLogits(W), x, 0, permutations=2, patch=4)
    contrib = (W[:, 0].reshape(8, 8) * x).reshape(2, 4, 2, 4).sum(axis=(1, 3))
    np.testing.assert_allclose(patched[::4, ::4], contrib, atol=1e-12)


def test_shapley_sampling_matches_enumeration():
    x = np.array([[1.0, -0.8], [1.5, 0.6]])
    b = np.zeros((2, 2))
    exact = exact_shapley(toy_f, x, b)
    est = shapley_value_sampling(toy_model, x, 0, permutations=10_000, seed=2)
    assert np.max(np.abs(est.ravel() - exact)) <= 0.02 * np.max(np.abs(exact))


def test_shapley_symmetry_and_null_feature():
    f = FunctionLogits(lambda x: x[:, 0, 0] * x[:, 0, 1] + 0.0 * x[:, 1, 1])
    x = np.array([[1.0, 1.0], [0.5, 2.0]])
    est, se = shapley_value_sampling(f, x, 0, permutations=200, return_stderr=True)
    assert abs(est[0, 0] - est[0, 1]) <= 3 * math.hypot(se[0, 0], se[0, 1]) + 1e-12
    assert abs(est[1, 1]) <= 3 * se[1, 1] + 1e-12
    assert est[1, 0] == 0.0


def test_kernel_shap_enumeration_equals_exact():
    x = np.array([[1.0, -0.8], [1.5, 0.6]])
    exact = exact_shapley(toy_f, x, np.zeros((2, 2)))
    np.testing.assert_allclose(kernel_shap(toy_model, x, 0).ravel(), exact, atol=1e-9)


def test_kernel_shap_additive_and_efficiency(rng):
    W = rng.standard_normal((64, 2))
    x = rng.standard_normal((8, 8))
    est = kernel_shap(LinearLogits(W), x, 1, seed=4)
    np.testing.assert_allclose(est, W[:, 1].reshape(8, 8) * x, atol=1e-8)
    f = FunctionLogits(lambda z: np.tanh(z.reshape(len(z), -1) @ W[:, 0]) * 3)
    est = kernel_shap(f, x, 0, coalitions=200, seed=4)
    delta = f.logits(x[None])[0, 0] - f.logits(np.zeros((1, 8, 8)))[0, 0]
    assert est.sum() == pytest.approx(delta, abs=1e-6)


def test_kernel_shap_budget_errors(rng):
    W = rng.standard_normal((9, 2))
    x = rng.standard_normal((3, 3))
    with pytest.raises(ValueError, match="at least 11 coalitions"):
        kernel_shap(LinearLogits(W), x, 0, coalitions=10)
    with pytest.raises(np.linalg.LinAlgError, match="coalition"):
        kernel_shap(LinearLogits(W), x, 0, coalitions=11)


def test_lime_additive_within_shrinkage(rng):
    W = rng.standard_normal((64, 2))
    x = rng.standard_normal((8, 8))
    est = lime(LinearLogits(W), x, 0, seed=1)
    truth = W[:, 0].reshape(8, 8) * x
    assert np.linalg.norm(est - truth) <= 0.05 * np.linalg.norm(truth)
    np.testing.assert_array_equal(est, lime(LinearLogits(W), x, 0, seed=1))


def test_lime_constant_model_and_degenerate_set(rng):
    x = rng.standard_normal((8, 8))
    const = FunctionLogits(lambda z: np.full(len(z), 2.5))
    np.testing.assert_allclose(lime(const, x, 0), 0.0, atol=1e-12)
    with pytest.raises(ValueError):
        lime(const, x, 0, perturbations=10)


# ---------------------------------------------------------------- baselines

def loop_filter(img, k):
    """Per-pixel positive-minus-negative tap sums, each summed pairwise in row-major order."""
    h, w = img.shape
    p = np.pad(img, 1)
    out = np.zeros((h, w))

    def pairwise(t):
        if len(t) == 1:
            return t[0]
        half = [t[i] + t[i + 1] for i in range(0, len(t) - 1, 2)]
        return pairwise(half + t[len(half) * 2:])
    for i in range(h):
        for j in range(w):
            pos = [k[a, b] * p[i + a, j + b] for a in range(3) for b in range(3) if k[a, b] > 0]
            neg = [-k[a, b] * p[i + a, j + b] for a in range(3) for b in range(3) if k[a, b] < 0]
            out[i, j] = (pairwise(pos) if pos else 0.0) - (pairwise(neg) if neg else 0.0)
    return out


def test_sobel_step_edge_and_constant():
    h = 2.5
    img = np.zeros((8, 8))
    img[:, 4:] = h
    s = sobel(img)
    np.testing.assert_array_equal(s[1:-1, 3], 4 * h)
    np.testing.assert_array_equal(s[1:-1, 4], 4 * h)
    assert not np.any(s[1:-1, [0, 1, 2, 5, 6]])
    c = np.full((8, 8), 3.0)
    assert not np.any(sobel(c)[1:-1, 1:-1]) and not np.any(laplace(c)[1:-1, 1:-1])


def test_filters_bit_exact_against_loop(rng):
    for _ in range(5):
        img = rng.standard_normal((8, 8))
        gx, gy = loop_filter(img, SOBEL_X), loop_filter(img, SOBEL_Y)
        ref = np.array([[math.sqrt(a * a + b * b) for a, b in zip(r1, r2)] for r1, r2 in zip(gx, gy)])
        assert sobel(img).tobytes() == ref.tobytes()
        assert laplace(img).tobytes() == loop_filter(img, LAPLACE).tobytes()


def test_input_baseline_is_abs(rng):
    x = rng.standard_normal((8, 8))
    np.testing.assert_array_equal(rectified_input(x), np.abs(x))


# ---------------------------------------------------------------- registry

def test_dispatch_matches_direct_calls(mlp, rng):
    x = rng.standard_normal((8, 8))
    req = AttributionRequest("saliency", mlp, x, 1, sample_id=4)
    m = explain(req)
    np.testing.assert_array_equal(m.grid, saliency(mlp, x, 1))
    assert m.method == "saliency" and m.sample_id == 4 and m.provenance["seed"] == 0
    req = AttributionRequest("integrated_gradients", mlp, x, 0, params={"steps": 8})
    np.testing.assert_allclose(explain(req).grid, integrated_gradients(mlp, x, 0, steps=8),
                               atol=1e-15)
    req = AttributionRequest("lime", mlp, x, 0, seed=3, sample_id=2)
    np.testing.assert_array_equal(explain(req).grid, lime(mlp, x, 0, seed=3, sample_ids=[2]))


def test_unknown_method_and_hyperparameter(mlp):
    with pytest.raises(KeyError) as exc:
        explain_batch("gradcam", mlp, np.zeros((1, 8, 8)), [0])
    for name in available_methods():
        assert name in str(exc.value)
    with pytest.raises(ValueError, match="unknown hyperparameter"):
        resolve_params("saliency", {"steps": 3}, 8)


def test_resolved_defaults():
    assert resolve_params("kernel_shap", None, 8) == {"coalitions": 144, "patch": 1}
    assert resolve_params("kernel_shap", None, 64)["coalitions"] == 2 * 256 + 16
    assert resolve_params("lime", None, 64)["kernel_width"] == pytest.approx(4.0)
    assert resolve_params("lime", None, 8)["kernel_width"] == pytest.approx(2.0)


def test_batch_cardinality_and_determinism(mlp, rng):
    X = rng.standard_normal((5, 8, 8))
    y = rng.integers(0, 2, 5)
    ids = np.array([10, 11, 12, 13, 14])
    ref = (X, y)
    for name in available_methods():
        params = {"perturbations": 80} if name == "lime" else None
        maps = explain_batch(name, mlp, X, y, ids, params=params, seed=1, reference=ref)
        again = explain_batch(name, mlp, X, y, ids, params=params, seed=1, reference=ref)
        assert len(maps) == 5 and [m.sample_id for m in maps] == list(ids)
        for a, b in zip(maps, again):
            assert a.grid.shape == (8, 8) and np.array_equal(a.grid, b.grid)
            assert a.provenance["method"] == name == a.method
    assert set(METHODS) == set(available_methods())


def test_random_baseline_depends_on_sample_id(mlp):
    X = np.zeros((2, 8, 8))
    a = explain_batch("random", mlp, X, [0, 0], [1, 2], seed=0)
    b = explain_batch("random", mlp, X, [0, 0], [2, 1], seed=0)
    np.testing.assert_array_equal(a[0].grid, b[1].grid)
    assert np.all(np.abs(a[0].grid) <= 1)
