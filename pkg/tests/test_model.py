"""Network forward passes: bank features, layer maps, escort-sampled
training pass on the tape, posterior-sampled prediction, likelihood heads.
"""
import numpy as np
import pytest

from tsinks import autodiff as ad
from tsinks.errors import DomainError, UsageError
from tsinks.model import (ClassificationTask, ClassPrediction, FEATURE_BOUND,
                          LayerNodes, LayerNoise, LayerParams, Network,
                          RegressionTask, SampledLayer,
                          classification_log_lik_nodes, draw_train_noise,
                          feature, forward_predict, forward_train,
                          forward_train_nodes, layer_forward,
                          log_lik_classification, log_lik_regression,
                          network_leaves, posterior_draw,
                          regression_log_lik_nodes)
from tsinks.rng import RngStream, sample_std_t
from tsinks.tdist import DiagStudentT, reparam_sample


def make_layer(rng, d_in, out_width, bank_size, nu_omega=2.5, nu_w=3.5):
    q_omega = DiagStudentT(rng.normal(size=d_in) * 0.8,
                           rng.uniform(0.3, 1.5, size=d_in), nu_omega)
    q_w = DiagStudentT(rng.normal(size=out_width * bank_size) * 0.8,
                       rng.uniform(0.3, 1.5, size=out_width * bank_size), nu_w)
    return LayerParams(q_omega=q_omega, q_w=q_w, d_in=d_in, out_width=out_width,
                       bank_size=bank_size)


def make_net(rng, dims=(3, 2, 1), bank_size=5, task=None, prior_nu=2.1):
    layers = tuple(make_layer(rng, dims[i], dims[i + 1], bank_size)
                   for i in range(len(dims) - 1))
    return Network(layers=layers, task=task or RegressionTask(np.exp(-2.0)),
                   prior_nu=prior_nu)


def zero_noise(net, k_draws):
    return [LayerNoise(np.zeros((layer.bank_size, layer.d_in)),
                       np.zeros((k_draws, layer.out_width * layer.bank_size)))
            for layer in net.layers]


def random_noise(rng, net, k_draws):
    return [LayerNoise(rng.normal(size=(layer.bank_size, layer.d_in)),
                       rng.normal(size=(k_draws, layer.out_width * layer.bank_size)))
            for layer in net.layers]


def mean_sampled_layers(net):
    return [SampledLayer(np.tile(layer.q_omega.mu, (layer.bank_size, 1)),
                         layer.q_w.mu.reshape(1, layer.out_width, layer.bank_size))
            for layer in net.layers]


def chain_layers(x, sampled):
    h = np.asarray(x, dtype=float)
    for layer in sampled:
        h = layer_forward(h, layer)
    return h


# -- feature -------------------------------------------------------------------

def test_feature_zero_direction():
    assert feature([1.0, -2.0], [0.0, 0.0]) == pytest.approx(0.5, abs=1e-15)


def test_feature_at_pi():
    assert feature([np.pi], [1.0]) == pytest.approx(-0.5, abs=1e-12)


def test_feature_maximum():
    assert feature([np.pi / 4.0], [1.0]) == pytest.approx(FEATURE_BOUND,
                                                          rel=1e-12)


def test_feature_identity_and_bound():
    rng = np.random.default_rng(3)
    for _ in range(500):
        d = int(rng.integers(1, 7))
        x = rng.uniform(-100.0, 100.0, size=d)
        omega = rng.uniform(-100.0, 100.0, size=d)
        got = feature(x, omega)
        z = float(x @ omega)
        assert got == pytest.approx(FEATURE_BOUND * np.sin(z + np.pi / 4.0),
                                    abs=1e-9)
        assert abs(got) <= FEATURE_BOUND + 1e-15


def test_feature_usage_errors():
    with pytest.raises(UsageError):
        feature([1.0, 2.0], [1.0])
    with pytest.raises(UsageError):
        feature(np.ones((2, 2)), np.ones((2, 2)))


# -- layer_forward -------------------------------------------------------------

def test_layer_forward_uniform_mixer():
    bank_size = 4
    sampled = SampledLayer(np.zeros((bank_size, 3)),
                           np.full((1, 1, bank_size), 1.0 / bank_size))
    out = layer_forward(np.array([0.3, -1.0, 2.0]), sampled)
    assert out.shape == (1,)
    assert out[0] == pytest.approx(0.5, abs=1e-15)


def test_layer_forward_zero_mixer():
    rng = np.random.default_rng(5)
    sampled = SampledLayer(rng.normal(size=(6, 2)), np.zeros((3, 4, 6)))
    out = layer_forward(rng.normal(size=2), sampled)
    assert np.array_equal(out, np.zeros(4))


def test_layer_forward_matches_per_draw_mean():
    rng = np.random.default_rng(7)
    h = rng.normal(size=3)
    sampled = SampledLayer(rng.normal(size=(5, 3)),
                           rng.normal(size=(3, 2, 5)))
    phi = np.array([feature(h, omega) for omega in sampled.omega_bank])
    want = np.mean([w @ phi for w in sampled.w_draws], axis=0)
    assert layer_forward(h, sampled) == pytest.approx(want, rel=1e-12)


def test_layer_forward_usage_error():
    sampled = SampledLayer(np.zeros((4, 3)), np.zeros((1, 2, 4)))
    with pytest.raises(UsageError):
        layer_forward(np.zeros(2), sampled)


# -- container validation --------------------------------------------------------

def test_sampled_layer_validation():
    with pytest.raises(DomainError):
        SampledLayer(np.zeros(3), np.zeros((1, 2, 3)))
    with pytest.raises(DomainError):
        SampledLayer(np.zeros((4, 3)), np.zeros((1, 2, 5)))
    with pytest.raises(DomainError):
        SampledLayer(np.zeros((4, 3)), np.zeros((0, 2, 4)))


def test_layer_params_validation():
    q3 = DiagStudentT(np.zeros(3), np.ones(3), 2.1)
    q10 = DiagStudentT(np.zeros(10), np.ones(10), 2.1)
    LayerParams(q_omega=q3, q_w=q10, d_in=3, out_width=2, bank_size=5)
    with pytest.raises(DomainError):
        LayerParams(q_omega=q3, q_w=q10, d_in=4, out_width=2, bank_size=5)
    with pytest.raises(DomainError):
        LayerParams(q_omega=q3, q_w=q10, d_in=3, out_width=3, bank_size=5)
    with pytest.raises(DomainError):
        LayerParams(q_omega=q3, q_w=q10, d_in=3, out_width=0, bank_size=5)


def test_network_validation():
    rng = np.random.default_rng(11)
    l1 = make_layer(rng, 3, 2, 4)
    l2 = make_layer(rng, 2, 1, 4)
    bad = make_layer(rng, 5, 1, 4)
    Network(layers=(l1, l2), task=RegressionTask(0.1), prior_nu=2.1)
    with pytest.raises(DomainError):
        Network(layers=(l1, bad), task=RegressionTask(0.1), prior_nu=2.1)
    with pytest.raises(DomainError):
        Network(layers=(), task=RegressionTask(0.1), prior_nu=2.1)
    with pytest.raises(DomainError):
        Network(layers=(l1, l2), task=RegressionTask(0.1), prior_nu=0.0)
    with pytest.raises(DomainError):
        Network(layers=(l1, l2), task=ClassificationTask(3), prior_nu=2.1)
    Network(layers=(l1, l2), task=ClassificationTask(1), prior_nu=2.1)
    with pytest.raises(DomainError):
        RegressionTask(-1.0)
    with pytest.raises(DomainError):
        ClassificationTask(0)


# -- forward_train ---------------------------------------------------------------

def test_forward_train_zero_noise_is_mean_network():
    rng = np.random.default_rng(13)
    net = make_net(rng, dims=(3, 2, 2), bank_size=5)
    x = rng.uniform(-1.0, 1.0, size=3)
    out, sampled = forward_train(x, net, zero_noise(net, k_draws=3))
    want = chain_layers(x, mean_sampled_layers(net))
    assert out == pytest.approx(want, rel=1e-12)
    for got_layer, mean_layer in zip(sampled, mean_sampled_layers(net)):
        assert np.allclose(got_layer.omega_bank, mean_layer.omega_bank)
        assert got_layer.w_draws.shape[0] == 3
        assert np.allclose(got_layer.w_draws[0], mean_layer.w_draws[0])


def test_forward_train_zero_mean_mixer_gives_zero_output():
    rng = np.random.default_rng(17)
    layer = make_layer(rng, 3, 2, 6)
    q_w = DiagStudentT(np.zeros(layer.q_w.dim), layer.q_w.sigma2,
                       layer.q_w.nu)
    net = Network(layers=(LayerParams(q_omega=layer.q_omega, q_w=q_w,
                                      d_in=3, out_width=2, bank_size=6),),
                  task=RegressionTask(np.exp(-2.0)), prior_nu=2.1)
    noise = [LayerNoise(rng.normal(size=(6, 3)), np.zeros((2, 12)))]
    for _ in range(3):
        out, _ = forward_train(rng.uniform(-2.0, 2.0, size=3), net, noise)
        assert np.array_equal(out, np.zeros(2))


def test_forward_train_matches_layer_forward_chain():
    rng = np.random.default_rng(19)
    net = make_net(rng, dims=(3, 4, 2), bank_size=5)
    noise = random_noise(rng, net, k_draws=3)
    X = rng.uniform(-1.0, 1.0, size=(4, 3))
    out, sampled = forward_train(X, net, noise)
    assert out.shape == (4, 2)
    for b in range(4):
        assert out[b] == pytest.approx(chain_layers(X[b], sampled), rel=1e-10)


def test_forward_train_draws_are_escort_reparam_samples():
    rng = np.random.default_rng(23)
    net = make_net(rng, dims=(3, 2), bank_size=4)
    noise = random_noise(rng, net, k_draws=3)
    _, sampled = forward_train(np.zeros(3), net, noise)
    layer, eps = net.layers[0], noise[0]
    want_omega = reparam_sample(layer.q_omega, eps.eps_omega)
    want_w = reparam_sample(layer.q_w, eps.eps_w)
    assert sampled[0].omega_bank == pytest.approx(want_omega, rel=1e-14)
    assert sampled[0].w_draws.reshape(3, -1) == pytest.approx(want_w,
                                                              rel=1e-14)


def test_forward_train_bank_permutation_equivariance():
    rng = np.random.default_rng(29)
    net = make_net(rng, dims=(3, 2, 2), bank_size=5)
    noise = random_noise(rng, net, k_draws=2)
    X = rng.uniform(-1.0, 1.0, size=(3, 3))
    out, _ = forward_train(X, net, noise)

    perm = np.array([3, 0, 4, 1, 2])
    first = net.layers[0]
    q_w = DiagStudentT(
        first.q_w.mu.reshape(2, 5)[:, perm].ravel(),
        first.q_w.sigma2.reshape(2, 5)[:, perm].ravel(), first.q_w.nu)
    permuted_layer = LayerParams(q_omega=first.q_omega, q_w=q_w, d_in=3,
                                 out_width=2, bank_size=5)
    permuted_net = Network(layers=(permuted_layer,) + net.layers[1:],
                           task=net.task, prior_nu=net.prior_nu)
    permuted_noise = [
        LayerNoise(noise[0].eps_omega[perm],
                   noise[0].eps_w.reshape(2, 2, 5)[:, :, perm].reshape(2, 10)),
        noise[1]]
    out_perm, _ = forward_train(X, permuted_net, permuted_noise)
    assert out_perm == pytest.approx(out, rel=1e-12)


def test_forward_train_shape_errors():
    rng = np.random.default_rng(31)
    net = make_net(rng, dims=(3, 2), bank_size=4)
    good = zero_noise(net, k_draws=2)
    with pytest.raises(UsageError):
        forward_train(np.zeros(5), net, good)
    with pytest.raises(UsageError):
        forward_train(np.zeros(3), net,
                      [LayerNoise(np.zeros((4, 2)), np.zeros((2, 8)))])
    with pytest.raises(UsageError):
        forward_train(np.zeros(3), net,
                      [LayerNoise(np.zeros((4, 3)), np.zeros((2, 7)))])
    with pytest.raises(UsageError):
        forward_train(np.zeros(3), net, [])


def test_draw_train_noise_shapes_and_determinism():
    rng = np.random.default_rng(37)
    net = make_net(rng, dims=(3, 2, 1), bank_size=4)
    noise_a = draw_train_noise(RngStream(9), net, k_draws=3)
    noise_b = draw_train_noise(RngStream(9), net, k_draws=3)
    assert [n.eps_omega.shape for n in noise_a] == [(4, 3), (4, 2)]
    assert [n.eps_w.shape for n in noise_a] == [(3, 8), (3, 4)]
    for a, b in zip(noise_a, noise_b):
        assert np.array_equal(a.eps_omega, b.eps_omega)
        assert np.array_equal(a.eps_w, b.eps_w)


# -- forward_predict -------------------------------------------------------------

def test_forward_predict_degenerate_posterior_is_mean_network():
    rng = np.random.default_rng(41)
    layers = []
    for d_in, out_width in ((3, 2), (2, 2)):
        base = make_layer(rng, d_in, out_width, 5)
        layers.append(LayerParams(
            q_omega=DiagStudentT(base.q_omega.mu,
                                 np.full(d_in, 1e-24), 2.1),
            q_w=DiagStudentT(base.q_w.mu, np.full(out_width * 5, 1e-24), 2.1),
            d_in=d_in, out_width=out_width, bank_size=5))
    net = Network(layers=tuple(layers), task=RegressionTask(np.exp(-2.0)),
                  prior_nu=2.1)
    x = rng.uniform(-1.0, 1.0, size=3)
    got = forward_predict(x, net, RngStream(3), mc_rounds=8, k_draws=4)
    want = chain_layers(x, mean_sampled_layers(net))
    assert got == pytest.approx(want, abs=1e-6)


def test_forward_predict_classification_probabilities():
    rng = np.random.default_rng(43)
    net = make_net(rng, dims=(3, 4, 3), bank_size=5,
                   task=ClassificationTask(3))
    X = rng.uniform(-1.0, 1.0, size=(6, 3))
    pred = forward_predict(X, net, RngStream(11), mc_rounds=16, k_draws=4)
    assert isinstance(pred, ClassPrediction)
    assert pred.probabilities.shape == (6, 3)
    assert np.all(pred.probabilities >= 0.0)
    assert np.all(pred.probabilities <= 1.0)
    assert pred.probabilities.sum(axis=1) == pytest.approx(np.ones(6),
                                                           abs=1e-12)
    assert np.array_equal(pred.labels, pred.probabilities.argmax(axis=1))

    single = forward_predict(X[0], net, RngStream(11), mc_rounds=4, k_draws=4)
    assert single.probabilities.shape == (3,)
    assert isinstance(single.labels, int)


def test_forward_predict_deterministic_given_stream():
    rng = np.random.default_rng(47)
    net = make_net(rng, dims=(2, 1), bank_size=4)
    x = np.array([0.4, -0.2])
    a = forward_predict(x, net, RngStream(5), mc_rounds=10, k_draws=3)
    b = forward_predict(x, net, RngStream(5), mc_rounds=10, k_draws=3)
    c = forward_predict(x, net, RngStream(6), mc_rounds=10, k_draws=3)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_forward_predict_uses_posterior_draws_in_order():
    rng = np.random.default_rng(53)
    net = make_net(rng, dims=(2, 1), bank_size=3)
    layer = net.layers[0]
    x = np.array([0.7, -1.1])

    got = forward_predict(x, net, RngStream(21), mc_rounds=1, k_draws=2)

    manual_rng = RngStream(21)
    eps_o = sample_std_t(manual_rng, layer.q_omega.nu, 6).reshape(3, 2)
    omega = layer.q_omega.mu + np.sqrt(layer.q_omega.sigma2) * eps_o
    eps_w = sample_std_t(manual_rng, layer.q_w.nu, 6).reshape(2, 3)
    w_bar = (layer.q_w.mu + np.sqrt(layer.q_w.sigma2) * eps_w).mean(axis=0)
    z = omega @ x
    phi = 0.5 * np.cos(z) + 0.5 * np.sin(z)
    want = np.array([phi @ w_bar])
    assert got == pytest.approx(want, rel=1e-14)


def test_forward_predict_mc_convergence():
    rng = np.random.default_rng(59)
    net = make_net(rng, dims=(2, 1), bank_size=8)
    net = Network(layers=tuple(
        LayerParams(q_omega=DiagStudentT(l.q_omega.mu, l.q_omega.sigma2, 10.0),
                    q_w=DiagStudentT(l.q_w.mu, l.q_w.sigma2, 10.0),
                    d_in=l.d_in, out_width=l.out_width, bank_size=l.bank_size)
        for l in net.layers), task=net.task, prior_nu=net.prior_nu)
    x = np.array([0.9, -0.4])

    root = RngStream(101)
    reps = np.array([forward_predict(x, net, root.split(i), mc_rounds=100,
                                     k_draws=2)[0] for i in range(30)])
    se_100 = reps.std(ddof=1)
    assert se_100 > 0.0
    se_1k = se_100 * np.sqrt(100.0 / 1000.0)
    se_10k = se_100 * np.sqrt(100.0 / 10000.0)

    p_1k = forward_predict(x, net, RngStream(7), mc_rounds=1000, k_draws=2)[0]
    p_10k = forward_predict(x, net, RngStream(8), mc_rounds=10000,
                            k_draws=2)[0]
    assert abs(p_10k - p_1k) <= 5.0 * np.hypot(se_1k, se_10k)


def test_posterior_draw_moments():
    q = DiagStudentT(np.array([1.0, -2.0]), np.array([4.0, 0.25]), 10.0)
    draws = posterior_draw(RngStream(77), q, 200_000)
    assert draws.shape == (200_000, 2)
    assert draws.mean(axis=0) == pytest.approx(q.mu, abs=0.02)
    want_var = q.sigma2 * 10.0 / 8.0
    assert draws.var(axis=0) == pytest.approx(want_var, rel=0.05)


def test_forward_predict_input_errors():
    rng = np.random.default_rng(61)
    net = make_net(rng, dims=(2, 1), bank_size=3)
    with pytest.raises(UsageError):
        forward_predict(np.zeros(3), net, RngStream(1), mc_rounds=2)
    with pytest.raises(DomainError):
        forward_predict(np.zeros(2), net, RngStream(1), mc_rounds=0)


# -- likelihood heads -------------------------------------------------------------

def test_log_lik_regression_frozen_value():
    got = log_lik_regression(np.array([0.3]), np.array([0.3]), np.exp(-2.0))
    assert got == pytest.approx(1.0 - 0.5 * np.log(2.0 * np.pi), rel=1e-12)
    assert got == pytest.approx(0.0810614, abs=1e-6)


def test_log_lik_regression_quadratic_decrease():
    y = np.array([1.0, -0.5])
    mean = np.array([0.2, 0.1])
    sigma_y2 = 0.37
    quad = float(np.sum((y - mean) ** 2))
    base = log_lik_regression(y, mean, sigma_y2)
    doubled = log_lik_regression(mean + np.sqrt(2.0) * (y - mean), mean,
                                 sigma_y2)
    assert base - doubled == pytest.approx(quad / (2.0 * sigma_y2), rel=1e-12)


def test_log_lik_regression_isotropy():
    rng = np.random.default_rng(67)
    y = rng.normal(size=3)
    mean = rng.normal(size=3)
    total = log_lik_regression(y, mean, 0.2)
    parts = sum(log_lik_regression(y[i:i + 1], mean[i:i + 1], 0.2)
                for i in range(3))
    assert total == pytest.approx(parts, rel=1e-12)


def test_log_lik_regression_errors():
    with pytest.raises(DomainError):
        log_lik_regression(np.zeros(2), np.zeros(2), 0.0)
    with pytest.raises(UsageError):
        log_lik_regression(np.zeros(2), np.zeros(3), 1.0)


def test_log_lik_classification_uniform():
    assert log_lik_classification(2, np.full(5, 1.7)) == pytest.approx(
        -np.log(5.0), rel=1e-12)


def test_log_lik_classification_stabilized():
    assert log_lik_classification(0, np.array([1e6, 0.0])) == pytest.approx(
        0.0, abs=1e-12)
    assert np.isfinite(log_lik_classification(1, np.array([1e6, 0.0])))


def test_log_lik_classification_matches_naive():
    rng = np.random.default_rng(71)
    for _ in range(50):
        c = int(rng.integers(2, 6))
        logits = rng.uniform(-5.0, 5.0, size=c)
        label = int(rng.integers(0, c))
        naive = np.log(np.exp(logits[label]) / np.exp(logits).sum())
        assert log_lik_classification(label, logits) == pytest.approx(
            naive, rel=1e-12, abs=1e-12)


def test_log_lik_classification_errors():
    with pytest.raises(UsageError):
        log_lik_classification(3, np.zeros(3))
    with pytest.raises(UsageError):
        log_lik_classification(-1, np.zeros(3))
    with pytest.raises(UsageError):
        log_lik_classification(0.5, np.zeros(3))


def test_batch_heads_match_scalar_heads():
    rng = np.random.default_rng(73)
    mean = rng.normal(size=(4, 2))
    y = rng.normal(size=(4, 2))
    tape = ad.Tape()
    node = tape.leaf(mean, "mean")
    total = regression_log_lik_nodes(node, y, 0.3)
    want = sum(log_lik_regression(y[i], mean[i], 0.3) for i in range(4))
    assert float(total.value) == pytest.approx(want, rel=1e-12)

    logits = rng.normal(size=(5, 3))
    labels = rng.integers(0, 3, size=5)
    tape2 = ad.Tape()
    node2 = tape2.leaf(logits, "logits")
    total2 = classification_log_lik_nodes(node2, labels)
    want2 = sum(log_lik_classification(int(labels[i]), logits[i])
                for i in range(5))
    assert float(total2.value) == pytest.approx(want2, rel=1e-12)


# -- composed gradient fidelity ----------------------------------------------------

TOY_DIMS = (3, 2, 2)
TOY_BANK = 5
TOY_K = 2


def toy_problem(task):
    rng = np.random.default_rng(79)
    layers = []
    for i in range(len(TOY_DIMS) - 1):
        d_in, out_width = TOY_DIMS[i], TOY_DIMS[i + 1]
        layers.append((rng.normal(size=d_in) * 0.6,
                       rng.uniform(0.4, 1.6, size=d_in),
                       2.7 + 0.9 * i,
                       rng.normal(size=out_width * TOY_BANK) * 0.6,
                       rng.uniform(0.4, 1.6, size=out_width * TOY_BANK),
                       4.2 - 0.8 * i))
    noise = [LayerNoise(rng.normal(size=(TOY_BANK, TOY_DIMS[i])) * 0.8,
                        rng.normal(size=(TOY_K,
                                         TOY_DIMS[i + 1] * TOY_BANK)) * 0.8)
             for i in range(len(TOY_DIMS) - 1)]
    X = rng.uniform(-1.0, 1.0, size=(4, 3))
    if task == "regression":
        target = rng.normal(size=(4, 2))
    else:
        target = rng.integers(0, 2, size=4)
    return layers, noise, X, target


def toy_loss(params, noise, X, target, task):
    tape = ad.Tape()
    leaves = []
    for mo, so, no, mw, sw, nw in params:
        leaves.append(LayerNodes(
            tape.leaf(mo, "mu_omega"), tape.leaf(so, "sigma_omega"),
            tape.leaf(np.asarray(no), "nu_omega"), tape.leaf(mw, "mu_w"),
            tape.leaf(sw, "sigma_w"), tape.leaf(np.asarray(nw), "nu_w")))
    out, _ = forward_train_nodes(X, leaves, noise)
    if task == "regression":
        loss = -regression_log_lik_nodes(out, target, np.exp(-2.0))
    else:
        loss = -classification_log_lik_nodes(out, target)
    return tape, leaves, loss


@pytest.mark.parametrize("task", ["regression", "classification"])
def test_composed_gradient_matches_finite_differences(task):
    params, noise, X, target = toy_problem(task)
    tape, leaves, loss = toy_loss(params, noise, X, target, task)
    tape.backward(loss)

    def value_at(mod_params):
        _, _, l = toy_loss(mod_params, noise, X, target, task)
        return float(l.value)

    step = 1e-6
    checked = 0
    for li, group in enumerate(params):
        for gi, arr in enumerate(group):
            arr = np.asarray(arr, dtype=float)
            grad = np.asarray(leaves[li][gi].grad)
            for idx in np.ndindex(arr.shape if arr.ndim else ()):
                hi = [list(g) for g in params]
                lo = [list(g) for g in params]
                a_hi, a_lo = arr.copy(), arr.copy()
                a_hi[idx] += step
                a_lo[idx] -= step
                hi[li][gi], lo[li][gi] = a_hi, a_lo
                fd = (value_at(hi) - value_at(lo)) / (2.0 * step)
                got = grad[idx] if arr.ndim else float(grad)
                assert got == pytest.approx(fd, rel=1e-4, abs=1e-6), \
                    f"layer {li} group {gi} index {idx}"
                checked += 1
            if arr.ndim == 0:
                hi = [list(g) for g in params]
                lo = [list(g) for g in params]
                hi[li][gi] = float(arr) + step
                lo[li][gi] = float(arr) - step
                fd = (value_at(hi) - value_at(lo)) / (2.0 * step)
                assert float(grad) == pytest.approx(fd, rel=1e-4, abs=1e-6)
                checked += 1
    assert checked >= 50


def test_network_leaves_round_trip():
    rng = np.random.default_rng(83)
    net = make_net(rng, dims=(3, 2), bank_size=4)
    tape = ad.Tape()
    nodes = network_leaves(tape, net)
    assert len(nodes) == 1
    assert np.array_equal(nodes[0].mu_omega.value, net.layers[0].q_omega.mu)
    assert np.allclose(nodes[0].sigma_omega.value ** 2,
                       net.layers[0].q_omega.sigma2)
    assert float(nodes[0].nu_w.value) == net.layers[0].q_w.nu
