import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semcond.datamodel import ClassCatalog, LabeledFeatureSet, SemanticTable
from semcond.errors import FormatError
from semcond.mixup import ClassCenters, class_centers, closest_classes, similarity_matrix, synthesize_mixup


def labeled(features, labels, n_classes=None):
    labels = np.asarray(labels)
    n = n_classes or int(labels.max()) + 1
    return LabeledFeatureSet(np.asarray(features, float), labels, ClassCatalog(tuple(f"c{i}" for i in range(n))))


def table_for(fs, vectors):
    vectors = np.asarray(vectors, float)
    return SemanticTable({name: vectors[i] for i, name in enumerate(fs.catalog.names)}, vectors.shape[1])


def random_world(seed, n=60, b=3, c=4, d=2):
    rng = np.random.default_rng(seed)
    labels = np.concatenate([np.arange(c), rng.integers(0, c, n - c)])
    fs = labeled(rng.normal(size=(n, b)) + 3 * labels[:, None], labels, c)
    return fs, table_for(fs, rng.normal(size=(c, d)))


# --- centers, distances, neighbours ----------------------------------------------


def test_one_sample_per_class_centers_are_the_samples():
    fs = labeled([[1.0, 2.0], [3.0, 4.0]], [0, 1])
    np.testing.assert_array_equal(class_centers(fs).centers, fs.features)


def test_center_of_two_points():
    fs = labeled([[0.0, 0.0], [2.0, 2.0], [9.0, 9.0]], [0, 0, 1])
    assert class_centers(fs).center(0).tolist() == [1.0, 1.0]


def test_absent_classes_are_omitted():
    fs = labeled([[0.0], [1.0]], [0, 2], n_classes=3)
    c = class_centers(fs)
    assert c.ids == (0, 2) and c.counts.tolist() == [1, 1]


def test_centers_match_brute_force():
    fs, _ = random_world(0)
    c = class_centers(fs)
    for cid, center in zip(c.ids, c.centers):
        rows = [x for x, y in zip(fs.features, fs.labels) if y == cid]
        brute = [sum(r[k] for r in rows) / len(rows) for k in range(fs.feature_dim)]
        np.testing.assert_allclose(center, brute, atol=1e-12)


def test_three_four_five():
    A = similarity_matrix(ClassCenters((0, 1), np.array([[0.0, 0.0], [3.0, 4.0]]), np.ones(2)))
    assert A.distances[0, 1] == 5.0


def test_distances_match_brute_force():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(4, 3))
    A = similarity_matrix(ClassCenters((0, 1, 2, 3), pts, np.ones(4)))
    for i, j in itertools.product(range(4), repeat=2):
        brute = sum((pts[i, k] - pts[j, k]) ** 2 for k in range(3)) ** 0.5
        assert abs(A.distances[i, j] - brute) < 1e-12
    assert np.array_equal(A.distances, A.distances.T)
    assert not np.diag(A.distances).any()


def test_similarity_needs_two_classes():
    with pytest.raises(ValueError):
        similarity_matrix(ClassCenters((0,), np.zeros((1, 2)), np.ones(1)))


def colinear():
    return similarity_matrix(ClassCenters((0, 1, 2), np.array([[0.0], [1.0], [10.0]]), np.ones(3)))


def test_closest_on_a_line():
    assert closest_classes(colinear(), 0, 1) == [1]


def test_all_others_when_neighbors_is_c_minus_1():
    assert closest_classes(colinear(), 2, 2) == [1, 0]


def test_ties_go_to_lower_id():
    A = similarity_matrix(ClassCenters((0, 1, 2), np.array([[0.0], [-1.0], [1.0]]), np.ones(3)))
    assert closest_classes(A, 0, 1) == [1]


@pytest.mark.parametrize("neighbors", [0, 3])
def test_neighbors_out_of_range(neighbors):
    with pytest.raises(ValueError):
        closest_classes(colinear(), 0, neighbors)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 6), st.data())
def test_closest_matches_brute_sort(seed, c, data):
    rng = np.random.default_rng(seed)
    # integer coordinates make ties common
    pts = rng.integers(-2, 3, size=(c, 2)).astype(float)
    A = similarity_matrix(ClassCenters(tuple(range(c)), pts, np.ones(c)))
    cls = data.draw(st.integers(0, c - 1))
    k = data.draw(st.integers(1, c - 1))
    brute = sorted((j for j in range(c) if j != cls), key=lambda j: (np.hypot(*(pts[cls] - pts[j])), j))
    assert closest_classes(A, cls, k) == brute[:k]


# --- synthesis -------------------------------------------------------------------


def test_gamma_zero_is_empty():
    fs, table = random_world(0)
    out = synthesize_mixup(fs, table, 2, 0.0, np.random.default_rng(0))
    assert len(out) == 0 and out.features.shape == (0, 3) and out.semantics.shape == (0, 2)


@pytest.mark.parametrize("gamma, expected", [(0.5, 30), (0.1, 6), (1.0, 60), (0.99, 59)])
def test_output_count_is_floor_gamma_n(gamma, expected):
    fs, table = random_world(0)
    assert len(synthesize_mixup(fs, table, 2, gamma, np.random.default_rng(0))) == expected


def test_beta_one_returns_source_pair():
    fs, table = random_world(2)
    out = synthesize_mixup(fs, table, 3, 0.5, np.random.default_rng(0), beta=1.0)
    src = out.sources[:, 0]
    emb = np.stack([table[n] for n in fs.catalog.names])
    np.testing.assert_array_equal(out.features, fs.features[src])
    np.testing.assert_array_equal(out.semantics, emb[fs.labels[src]])


def test_midpoint_example():
    fs = labeled([[2.0, 0.0], [0.0, 2.0]], [0, 1])
    table = table_for(fs, [[1.0, 0.0], [0.0, 1.0]])
    out = synthesize_mixup(fs, table, 1, 1.0, np.random.default_rng(0), beta=0.5)
    for x, e in zip(out.features, out.semantics):
        assert x.tolist() == [1.0, 1.0] and e.tolist() == [0.5, 0.5]


@pytest.mark.parametrize("seed", range(5))
def test_outputs_lie_in_endpoint_boxes(seed):
    fs, table = random_world(seed)
    out = synthesize_mixup(fs, table, 2, 1.0, np.random.default_rng(seed))
    emb = np.stack([table[n] for n in fs.catalog.names])
    a, b = out.sources[:, 0], out.sources[:, 1]
    for emitted, lo_src, hi_src in [
        (out.features, fs.features[a], fs.features[b]),
        (out.semantics, emb[fs.labels[a]], emb[fs.labels[b]]),
    ]:
        lo, hi = np.minimum(lo_src, hi_src), np.maximum(lo_src, hi_src)
        assert np.all(emitted >= lo - 1e-12) and np.all(emitted <= hi + 1e-12)
    # the same beta mixes feature and semantic
    bcol = out.betas[:, None]
    np.testing.assert_allclose(out.semantics, bcol * emb[fs.labels[a]] + (1 - bcol) * emb[fs.labels[b]])


def test_partners_come_from_closest_classes():
    fs, table = random_world(3)
    out = synthesize_mixup(fs, table, 1, 1.0, np.random.default_rng(0))
    A = similarity_matrix(class_centers(fs))
    for a, b in out.sources:
        assert fs.labels[b] == closest_classes(A, fs.labels[a], 1)[0]
    assert np.array_equal(out.groups, fs.labels[out.sources[:, 0]])


def test_mixup_is_seeded():
    fs, table = random_world(4)
    a = synthesize_mixup(fs, table, 2, 0.5, np.random.default_rng(9))
    b = synthesize_mixup(fs, table, 2, 0.5, np.random.default_rng(9))
    assert np.array_equal(a.features, b.features) and np.array_equal(a.betas, b.betas)


def test_unresolvable_semantic():
    fs, _ = random_world(0)
    table = SemanticTable({"c0": np.zeros(2)}, 2)
    with pytest.raises(FormatError):
        synthesize_mixup(fs, table, 2, 0.5, np.random.default_rng(0))


def test_negative_gamma():
    fs, table = random_world(0)
    with pytest.raises(ValueError):
        synthesize_mixup(fs, table, 2, -0.1, np.random.default_rng(0))
