import numpy as np
import pytest

from helpers import TickClock, centroid_accuracy
from setnet.activations import ActivationKind
from setnet.data import make_synthetic
from setnet.network import NetworkConfig, build_network
from setnet.trainer import (
    DivergenceError,
    TrainConfig,
    evaluate,
    sgd_momentum_step,
    train,
)


def test_sgd_reduces_to_vanilla_without_momentum():
    p = np.array([1.0, 2.0])
    v = np.zeros(2)
    sgd_momentum_step(p, np.array([10.0, -10.0]), v, lr=0.1, mu=0.0)
    assert np.allclose(p, [0.0, 3.0], atol=1e-15)


def test_sgd_zero_gradient_is_fixed_point():
    p = np.array([3.0])
    v = np.zeros(1)
    for _ in range(5):
        sgd_momentum_step(p, np.zeros(1), v, lr=0.1, mu=0.9)
    assert p[0] == 3.0 and v[0] == 0.0


def test_sgd_hand_iteration():
    # p=1, v=0, g=1, lr=0.1, mu=0.9: two steps give p 1 -> 0.9 -> 0.71
    p = np.array([1.0])
    v = np.zeros(1)
    g = np.array([1.0])
    sgd_momentum_step(p, g, v, lr=0.1, mu=0.9)
    assert np.isclose(v[0], -0.1, atol=1e-15) and np.isclose(p[0], 0.9, atol=1e-15)
    sgd_momentum_step(p, g, v, lr=0.1, mu=0.9)
    assert np.isclose(v[0], -0.19, atol=1e-15) and np.isclose(p[0], 0.71, atol=1e-15)


def test_sgd_rejects_non_finite_gradient():
    with pytest.raises(DivergenceError, match="non-finite"):
        sgd_momentum_step(np.ones(1), np.array([np.nan]), np.zeros(1), 0.1, 0.9)


def test_train_config_validation():
    with pytest.raises(ValueError, match="learning_rate"):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError, match="momentum"):
        TrainConfig(momentum=1.0)
    with pytest.raises(ValueError, match="batch_size"):
        TrainConfig(batch_size=0)


def _zero_logit_net(classes=4, features=3):
    cfg = NetworkConfig(layer_dims=(features, classes), sparsity=0.0,
                        dropout_rate=0.0, seed=0)
    net = build_network(cfg)
    net.out_w[:] = 0.0
    net.out_b[:] = 0.0
    return net


def test_evaluate_argmax_tie_breaks_to_lowest_class():
    # all-zero logits: uniform probabilities, prediction must be class 0
    net = _zero_logit_net()
    rng = np.random.default_rng(0)
    x = rng.normal(size=(40, 3))
    labels = np.zeros((40, 4))
    labels[np.arange(40), rng.integers(0, 4, size=40)] = 1.0
    acc, loss = evaluate(net, x, labels)
    assert acc == float(np.mean(labels[:, 0] == 1.0))
    assert np.isclose(loss, np.log(4.0), atol=1e-12)


def test_evaluate_perfect_predictions():
    net = _zero_logit_net(classes=2)
    net.out_b[:] = [5.0, 0.0]  # always predicts class 0
    x = np.zeros((6, 3))
    labels = np.tile([1.0, 0.0], (6, 1))
    acc, _ = evaluate(net, x, labels)
    assert acc == 1.0


def test_evaluate_empty_split_rejected():
    net = _zero_logit_net()
    with pytest.raises(ValueError, match="empty"):
        evaluate(net, np.zeros((0, 3)), np.zeros((0, 4)))


def test_untrained_ten_class_net_is_at_chance():
    # balanced labels with no feature signal: accuracy ~ 10%
    ds = make_synthetic(10, 16, 200, 0.0, seed=21)
    cfg = NetworkConfig(layer_dims=(16, 32, 16, 32, 10), activation=ActivationKind.RELU,
                        sparsity=0.885, dropout_rate=0.0, seed=4)
    net = build_network(cfg)
    acc, _ = evaluate(net, ds.val_x, ds.val_y)
    assert abs(acc - 0.10) <= 0.03


def test_epoch_record_overfit_identity_and_batches():
    ds = make_synthetic(2, 8, 30, 5.0, seed=1)  # train size 48, not divisible by 20
    cfg = NetworkConfig(layer_dims=(8, 12, 6, 12, 2), sparsity=0.5,
                        dropout_rate=0.2, seed=2)
    net = build_network(cfg)
    tc = TrainConfig(epochs=3, batch_size=20, seed=2)
    records = list(train(net, ds, tc, clock=TickClock()))
    assert [r.epoch for r in records] == [1, 2, 3]
    for rec in records:
        assert rec.overfit == rec.train_accuracy - rec.val_accuracy
        assert 0.0 <= rec.train_accuracy <= 1.0
        assert rec.train_loss >= 0.0 and rec.val_loss >= 0.0
        assert rec.wall_time > 0.0


def test_toy_separable_set_learns():
    ds = make_synthetic(2, 16, 100, 10.0, seed=7)
    # the separability oracle first: nearest centroid is essentially perfect
    assert centroid_accuracy(ds.train_x, ds.train_y, ds.train_x, ds.train_y) >= 0.95
    cfg = NetworkConfig(layer_dims=(16, 24, 12, 24, 2), activation=ActivationKind.RELU,
                        sparsity=0.5, dropout_rate=0.1, seed=7)
    net = build_network(cfg)
    tc = TrainConfig(epochs=20, batch_size=20, seed=7)
    records = list(train(net, ds, tc))
    assert records[-1].train_accuracy >= 0.9


def test_fixed_seed_runs_are_bit_identical():
    ds = make_synthetic(3, 10, 40, 3.0, seed=5)

    def one_run():
        cfg = NetworkConfig(layer_dims=(10, 14, 7, 14, 3), activation=ActivationKind.SRELU,
                            sparsity=0.6, dropout_rate=0.3, seed=9)
        net = build_network(cfg)
        tc = TrainConfig(epochs=4, batch_size=16, seed=9)
        return list(train(net, ds, tc, clock=TickClock()))

    assert one_run() == one_run()  # dataclass equality is exact float equality


def test_evolution_keeps_connection_counts():
    ds = make_synthetic(2, 12, 40, 4.0, seed=3)
    cfg = NetworkConfig(layer_dims=(12, 20, 10, 20, 2), sparsity=0.7,
                        dropout_rate=0.0, seed=1)
    net = build_network(cfg)
    initial = [layer.weights.nnz for layer in net.hidden]
    tc = TrainConfig(epochs=5, batch_size=16, seed=1, evolution_enabled=True)
    structures = []
    for _ in train(net, ds, tc):
        assert [layer.weights.nnz for layer in net.hidden] == initial
        structures.append([set(zip(l.weights.rows.tolist(), l.weights.cols.tolist()))
                           for l in net.hidden])
    # evolution actually rewires (connection sets change between epochs)
    assert structures[0] != structures[-1]


def test_evolution_disabled_keeps_structure():
    ds = make_synthetic(2, 8, 20, 4.0, seed=3)
    cfg = NetworkConfig(layer_dims=(8, 10, 2), sparsity=0.5, dropout_rate=0.0, seed=1)
    net = build_network(cfg)
    before = set(zip(net.hidden[0].weights.rows.tolist(),
                     net.hidden[0].weights.cols.tolist()))
    tc = TrainConfig(epochs=3, batch_size=8, seed=1, evolution_enabled=False)
    list(train(net, ds, tc))
    after = set(zip(net.hidden[0].weights.rows.tolist(),
                    net.hidden[0].weights.cols.tolist()))
    assert before == after


def test_divergence_raises_mid_stream():
    ds = make_synthetic(2, 8, 40, 4.0, seed=3)
    cfg = NetworkConfig(layer_dims=(8, 16, 2), sparsity=0.0, dropout_rate=0.0, seed=1)
    net = build_network(cfg)
    tc = TrainConfig(learning_rate=1e12, epochs=10, batch_size=8, seed=1,
                     evolution_enabled=False)
    with pytest.raises(DivergenceError):
        list(train(net, ds, tc))


def test_dense_run_matches_independent_reference():
    """Sparsity 0 + no evolution is a plain dense MLP: its first-epoch loss
    must match a from-scratch numpy implementation to 1e-10."""
    ds = make_synthetic(3, 6, 20, 3.0, seed=13)
    n = ds.n_train
    cfg = NetworkConfig(layer_dims=(6, 8, 3), activation=ActivationKind.RELU,
                        sparsity=0.0, dropout_rate=0.0, seed=31)
    net = build_network(cfg)
    # single full batch: shuffle order cannot matter
    tc = TrainConfig(learning_rate=0.05, momentum=0.9, epochs=1, batch_size=n,
                     seed=31, evolution_enabled=False)

    w1 = net.hidden[0].weights.copy()
    b1 = net.hidden[0].bias.copy()
    w2 = net.out_w.copy()
    b2 = net.out_b.copy()

    record = next(iter(train(net, ds, tc)))

    # independent reference: one momentum step on the same initial weights
    x, y = ds.train_x, ds.train_y
    z1 = x @ w1 + b1
    h = np.maximum(z1, 0.0)
    logits = h @ w2 + b2
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs = e / e.sum(axis=1, keepdims=True)
    delta = (probs - y) / n
    g_w2, g_b2 = h.T @ delta, delta.sum(axis=0)
    g_h = delta @ w2.T
    g_z1 = g_h * (z1 > 0.0)
    g_w1, g_b1 = x.T @ g_z1, g_z1.sum(axis=0)
    for p, g in ((w1, g_w1), (b1, g_b1), (w2, g_w2), (b2, g_b2)):
        p -= 0.05 * g  # first step: velocity term is zero

    z1 = x @ w1 + b1
    h = np.maximum(z1, 0.0)
    logits = h @ w2 + b2
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs = e / e.sum(axis=1, keepdims=True)
    ref_loss = float(-np.mean(np.log(np.sum(probs * y, axis=1))))

    assert abs(record.train_loss - ref_loss) <= 1e-10
