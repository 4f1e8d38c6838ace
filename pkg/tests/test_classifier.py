import math

import numpy as np
import pytest

from oracles import central_diff, max_rel_err
from semcond.autodiff import MlpParams, init_mlp
from semcond.classifier import (
    ClassifierModel,
    V2SModel,
    cosine_nearest,
    cross_entropy,
    decode_classifier,
    encode_classifier,
    mean_loss,
    predict,
    synthesize_training_set,
    train_classifier,
    v2s_baseline_train,
    v2s_predict,
)
from semcond.condgan import CondGanModel
from semcond.datamodel import ClassCatalog, ClassifierConfig, LabeledFeatureSet, TaskMode
from semcond.errors import FormatError, ShapeError
from semcond.synthbench import make_world, planar_world, simplex_world, draw_test_set


def catalog(n):
    return ClassCatalog(tuple(f"c{i}" for i in range(n)))


def tiny_gan(b=2, d=3, nz=2, seed=0):
    rng = np.random.default_rng(seed)
    return CondGanModel(init_mlp([d + nz, 4, b], rng), init_mlp([b + d, 4, 1], rng), nz, b, d)


def fixed_logits(logits, labels):
    """A model whose logits ignore the input: zero weights, biases = logits."""
    logits = np.asarray(logits, float)
    return ClassifierModel(MlpParams([np.zeros((len(logits), 1))], [logits], ["identity"]), labels)


def two_blobs(n=200, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.repeat([0, 1], n // 2)
    x = np.where(labels[:, None] == 0, -5.0, 5.0) + rng.normal(size=(n, 1))
    return LabeledFeatureSet(x, labels, catalog(2))


# --- synthesis -------------------------------------------------------------------


def test_one_row_per_label_at_k_1():
    fs = synthesize_training_set(tiny_gan(), np.eye(3), catalog(3), [0, 2], 1, np.random.default_rng(0))
    assert len(fs) == 2 and fs.labels.tolist() == [0, 2]


def test_zero_generator_rows_are_zero_but_balanced():
    g = tiny_gan()
    gen = g.generator.with_arrays(np.zeros_like(a) for a in g.generator.arrays())
    zero = CondGanModel(gen, g.discriminator, 2, 2, 3)
    fs = synthesize_training_set(zero, np.eye(3), catalog(3), [0, 1, 2], 7, np.random.default_rng(0))
    assert not fs.features.any()
    assert np.bincount(fs.labels).tolist() == [7, 7, 7]


def test_label_histogram_is_k():
    fs = synthesize_training_set(tiny_gan(), np.eye(3), catalog(3), [1, 2], 50, np.random.default_rng(1))
    assert np.bincount(fs.labels, minlength=3).tolist() == [0, 50, 50]


def test_synthesis_conditions_on_the_right_semantic():
    g = tiny_gan()
    emb = np.random.default_rng(3).normal(size=(3, 3))
    fs = synthesize_training_set(g, emb, catalog(3), [2], 4, np.random.default_rng(5))
    rng = np.random.default_rng(5)
    z = rng.standard_normal((4, 2))
    from oracles import chain_forward

    expected = chain_forward(g.generator.weights, g.generator.biases, g.generator.activations,
                             np.concatenate([np.tile(emb[2], (4, 1)), z], axis=1))
    np.testing.assert_allclose(fs.features, expected, atol=1e-12)


def test_synthesis_dim_mismatch():
    with pytest.raises(ShapeError):
        synthesize_training_set(tiny_gan(d=3), np.eye(4)[:3], catalog(3), [0], 1, np.random.default_rng(0))


# --- training --------------------------------------------------------------------


def test_separable_blobs_reach_full_training_accuracy():
    fs = two_blobs()
    cfg = ClassifierConfig(epochs=30, batch=32, lr=0.01, hidden=[4])
    model = train_classifier(fs, cfg, np.random.default_rng(0))
    assert (predict(model, fs.features) == fs.labels).all()


def test_zero_epochs_is_initialisation():
    fs = two_blobs()
    cfg = ClassifierConfig(epochs=0, batch=32, lr=0.01, hidden=[4])
    model = train_classifier(fs, cfg, np.random.default_rng(3))
    ref = init_mlp([1, 4, 2], np.random.default_rng(3))
    assert model.params.equals(ref) and model.labels == (0, 1)


def test_one_epoch_does_not_increase_loss():
    fs = two_blobs()
    before = train_classifier(fs, ClassifierConfig(epochs=0, batch=len(fs), lr=1e-3, hidden=[4]), np.random.default_rng(1))
    after = train_classifier(fs, ClassifierConfig(epochs=1, batch=len(fs), lr=1e-3, hidden=[4]), np.random.default_rng(1))
    assert mean_loss(after, fs) <= mean_loss(before, fs)


def test_single_class_is_rejected():
    fs = LabeledFeatureSet(np.zeros((3, 1)), np.zeros(3, dtype=int), catalog(2))
    with pytest.raises(ValueError):
        train_classifier(fs, ClassifierConfig(epochs=1, batch=2), np.random.default_rng(0))


def test_training_is_deterministic():
    fs = two_blobs()
    cfg = ClassifierConfig(epochs=2, batch=16, lr=0.01, hidden=[3])
    a = train_classifier(fs, cfg, np.random.default_rng(8))
    b = train_classifier(fs, cfg, np.random.default_rng(8))
    assert encode_classifier(a) == encode_classifier(b)


def test_cross_entropy_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    p = init_mlp([3, 5, 4], rng)
    p = p.with_arrays(a if a.ndim == 2 else rng.normal(0, 0.3, a.shape) for a in p.arrays())
    x, t = rng.normal(size=(7, 3)), rng.integers(0, 4, 7)
    _, grads = cross_entropy(p, x, t)
    numeric = central_diff(lambda arrs: cross_entropy(p.with_arrays(arrs), x, t)[0], p.arrays(), h=1e-6)
    assert max_rel_err(grads, numeric) < 1e-6


def test_cross_entropy_value_by_hand():
    p = MlpParams([np.zeros((2, 1))], [np.array([1.0, 0.0])], ["identity"])
    loss, _ = cross_entropy(p, np.zeros((1, 1)), np.array([1]))
    assert abs(loss - (math.log(math.e + 1.0))) < 1e-12


# --- prediction ------------------------------------------------------------------


def test_forced_logits_pick_first_label():
    assert predict(fixed_logits([2.0, 1.0], (4, 9)), [[0.0]]).tolist() == [4]


def test_ties_go_to_lower_id():
    assert predict(fixed_logits([1.0, 1.0], (4, 9)), [[0.0]]).tolist() == [4]


def test_constant_shift_does_not_change_prediction():
    rng = np.random.default_rng(0)
    p = init_mlp([3, 4, 5], rng)
    model = ClassifierModel(p, (0, 1, 2, 3, 4))
    shifted = ClassifierModel(p.with_arrays(p.arrays()[:-1] + [p.biases[-1] + 17.0]), model.labels)
    x = rng.normal(size=(50, 3))
    assert np.array_equal(predict(model, x), predict(shifted, x))


def test_prediction_matches_brute_force_softmax():
    rng = np.random.default_rng(1)
    model = ClassifierModel(init_mlp([3, 6, 4], rng), (2, 5, 7, 8))
    x = rng.normal(size=(100, 3))
    logits = x
    for w, b, act in zip(model.params.weights, model.params.biases, model.params.activations):
        logits = logits @ w.T + b
        if act == "leaky_relu":
            logits = np.where(logits > 0, logits, 0.2 * logits)
    for row, pred in zip(logits, predict(model, x)):
        probs = [math.exp(v) / sum(math.exp(u) for u in row) for v in row]
        assert pred == model.labels[max(range(4), key=lambda i: (probs[i], -i))]


def test_predict_dim_mismatch():
    with pytest.raises(ShapeError):
        predict(fixed_logits([1.0, 0.0], (0, 1)), np.zeros((1, 2)))


def test_z3ds_model_never_emits_seen_ids():
    world = planar_world(samples_per_class=50)
    fs, _, cat = make_world(world)
    labels = TaskMode.Z3DS.label_space(world.split(), cat)
    model = train_classifier(fs.restrict(labels), ClassifierConfig(epochs=1, batch=32, lr=1e-3, hidden=[4]),
                             np.random.default_rng(0))
    assert set(predict(model, fs.features).tolist()) <= set(labels)


def test_label_space_must_match_output_width():
    with pytest.raises(ShapeError):
        ClassifierModel(init_mlp([2, 3], np.random.default_rng(0)), (0, 1))
    with pytest.raises(ValueError):
        ClassifierModel(init_mlp([2, 2], np.random.default_rng(0)), (1, 0))


# --- checkpoint ------------------------------------------------------------------


def test_checkpoint_round_trip():
    model = ClassifierModel(init_mlp([3, 4, 2], np.random.default_rng(0)), (3, 7))
    data = encode_classifier(model, "f" * 64)
    back, tag = decode_classifier(data)
    assert data[:4] == b"SCPC" and tag == "f" * 64
    assert back.labels == (3, 7) and back.params.equals(model.params)


@pytest.mark.parametrize("mangle", [lambda d: b"SCPG" + d[4:], lambda d: d[:-1], lambda d: d[:10]])
def test_checkpoint_corruption(mangle):
    model = ClassifierModel(init_mlp([3, 2], np.random.default_rng(0)), (0, 1))
    with pytest.raises(FormatError):
        decode_classifier(mangle(encode_classifier(model)))


# --- V2S baseline ----------------------------------------------------------------


def test_identity_projection_is_nearest_center_on_equal_norm_means():
    world = simplex_world(samples_per_class=100)
    fs, _, _ = make_world(world)
    ident = V2SModel(MlpParams([np.eye(16)], [np.zeros(16)], ["identity"]))
    labels = range(world.n_classes)
    pred = v2s_predict(ident, fs.features, world.means, labels)
    sq = ((fs.features[:, None, :] - world.means[None]) ** 2).sum(-1)
    assert np.array_equal(pred, np.argmin(sq, axis=1))


def test_single_candidate_always_returned():
    rng = np.random.default_rng(0)
    assert set(cosine_nearest(rng.normal(size=(20, 3)), rng.normal(size=(5, 3)), [3]).tolist()) == {3}


def test_v2s_above_chance_on_unseen_classes():
    world = planar_world(samples_per_class=300)
    fs, _, cat = make_world(world)
    split = world.split()
    seen = fs.restrict(split.seen_ids(cat))
    emb = world.means
    model = v2s_baseline_train(seen, emb, ClassifierConfig(epochs=20, batch=64, lr=1e-3, hidden=[32]),
                               np.random.default_rng(0))
    test = draw_test_set(world, 300).restrict(world.unseen)
    acc = (v2s_predict(model, test.features, emb, world.unseen) == test.labels).mean()
    assert acc > 0.5
