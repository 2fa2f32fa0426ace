import numpy as np
import pytest

from weldkge.baselines import (MlpConfig, classification_report, fit_encoding, kge_mlp_predict, kge_mlp_train,
                               load_mlp, mlp_init, mlp_predict, mlp_train, one_hot_encode, save_mlp, softmax)
from weldkge.errors import DataError
from weldkge.evaluation import evaluate
from weldkge.models import init_params
from _gradcheck import mlp_worst_error


def test_block_widths_and_row_sums(small_build):
    _, schemes, (train, valid, _) = small_build
    enc = fit_encoding(train, schemes, "Q1")
    for source, vals in enc.blocks:
        if source in schemes:
            assert len(vals) == schemes[source].k
        else:
            assert vals == sorted({v for v in train.values(source) if v is not None})
    X, y, spots = one_hot_encode(train, schemes, enc)
    assert X.shape == (len(train), enc.width)
    # exactly one active entry per block for fully observed training rows
    assert np.all(X.sum(axis=1) == len(enc.blocks))
    assert set(np.unique(X)) <= {0.0, 1.0}
    assert len(spots) == len(train) and y.min() >= 0


def test_unseen_value_gives_zero_block(small_build):
    _, schemes, (train, _, _) = small_build
    enc = fit_encoding(train, schemes, "Q2")
    row = dict(train.rows[0])
    row["machine"] = "never_seen"
    X, _, _ = one_hot_encode(train.__class__(train.columns, (row,)), schemes, enc)
    names = [s for s, _ in enc.blocks]
    off = sum(len(v) for s, v in enc.blocks[: names.index("machine")])
    width = len(enc.blocks[names.index("machine")][1])
    assert X[0, off:off + width].sum() == 0
    assert X[0].sum() == len(enc.blocks) - 1


def test_unseen_label_is_minus_one(small_build):
    _, schemes, (train, _, _) = small_build
    enc = fit_encoding(train, schemes, "Q2")
    row = dict(train.rows[0])
    row["carbody"] = "B999"
    _, y, _ = one_hot_encode(train.__class__(train.columns, (row,)), schemes, enc)
    assert y[0] == -1
    probs = np.full((1, len(enc.labels)), 1.0 / len(enc.labels))
    rep = classification_report(probs, y, ["x"], enc.labels, "Q2")
    assert rep.ranks == [len(enc.labels) + 1]


def test_softmax_rows_sum_to_one(rng):
    z = rng.normal(size=(20, 7)) * 50
    p = softmax(z)
    assert np.allclose(p.sum(axis=1), 1.0) and np.all(p >= 0)


def test_separable_toy_reaches_full_accuracy(rng):
    X = np.eye(4)[rng.integers(4, size=200)]
    y = X.argmax(axis=1) % 2
    p, losses = mlp_train(X, y, MlpConfig(hidden=(16,), epochs=500, batch_size=32, seed=1))
    assert np.mean(mlp_predict(p, X).argmax(axis=1) == y) == 1.0
    assert losses[-1] < losses[0]


def test_mlp_deterministic(rng):
    X = rng.random((50, 6))
    y = rng.integers(3, size=50)
    cfg = MlpConfig(hidden=(8,), epochs=5, seed=3)
    a, _ = mlp_train(X, y, cfg)
    b, _ = mlp_train(X, y, cfg)
    assert all(np.array_equal(u, v) for u, v in zip(a.arrays(), b.arrays()))


def test_mlp_gradient():
    assert mlp_worst_error(10) <= 1e-4


def test_mlp_checkpoint_round_trip(tmp_path):
    p = mlp_init([5, 4, 3], 2)
    save_mlp(p, tmp_path / "m.ckpt", {"question": "Q1"})
    back = load_mlp(tmp_path / "m.ckpt")
    assert back.sizes == p.sizes and back.extra["question"] == "Q1"
    assert all(np.array_equal(u, v) for u, v in zip(back.arrays(), p.arrays()))
    with pytest.raises(DataError):
        mlp_train(np.zeros((2, 3)), np.array([-1, -1]))


def test_kge_mlp(small_build):
    kg, schemes, _ = small_build
    kge = init_params("TransE", kg.n_entities, kg.n_relations, 8, 0)
    model, losses = kge_mlp_train(kg, kge, "Q1", MlpConfig(hidden=(16,), epochs=3, seed=0))
    assert len(losses) == 3 and np.all(np.isfinite(losses))
    probs = kge_mlp_predict(model, 0, np.arange(10))
    assert probs.shape == (10,) and np.all((probs >= 0) & (probs <= 1))
    rep = evaluate(model, kg, "Q1", schemes["diameter"])
    assert 0 <= rep.mrr <= 1
    with pytest.raises(DataError):
        kge_mlp_train(kg, init_params("TransE", kg.n_entities + 1, kg.n_relations, 8, 0), "Q1")
    with pytest.raises(DataError):
        kge_mlp_train(kg, init_params("RotatE", kg.n_entities, kg.n_relations, 8, 0), "Q1")
