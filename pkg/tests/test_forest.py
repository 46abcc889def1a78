import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kiln_atlas.forest import (CLASS_NAMES, Forest, ForestConfig, LabeledPixelSet, LabelSchema,
                               bootstrap_rows, classify_tile, evaluate, load_forest, predict_pixel,
                               read_training_csv, save_forest, split_train_test, train_forest,
                               tree_seeds, write_training_csv)
from kiln_atlas.raster import GeoRef, RasterTile
from synth import CENTROIDS, blobs, min_separation_sigmas

SMALL = ForestConfig(n_trees=25, rng_seed=5)


@pytest.fixture(scope="module")
def two_class():
    data = blobs(classes=(1, 4), per_class=1000, seed=1)
    train, test = split_train_test(data, 0.8, 7)
    return train, test, train_forest(train, SMALL)


def test_schema_indices():
    s = LabelSchema()
    assert list(s.indices) == list(range(1, 11))
    assert s.name(1) == "Brick Kilns" and s.name(10) == "Rocky Terrain"
    assert len(CLASS_NAMES) == 10


def test_pixel_set_validation():
    with pytest.raises(ValueError):
        LabeledPixelSet(np.array([[0, 0, 256]]), np.array([1]))
    with pytest.raises(ValueError):
        LabeledPixelSet(np.array([[0, 0, 0]]), np.array([11]))


def test_config_validation():
    with pytest.raises(ValueError):
        ForestConfig(n_trees=0)
    with pytest.raises(ValueError):
        ForestConfig(train_fraction=1.0)


def test_split_examples():
    data = blobs(classes=(1, 2), per_class=5)
    train, test = split_train_test(data, 0.8, 7)
    assert (len(train), len(test)) == (8, 2)

    def rows(d):
        return [tuple(r) for r in np.column_stack([d.rgb, d.labels]).tolist()]

    assert sorted(rows(train) + rows(test)) == sorted(rows(data))
    again = split_train_test(data, 0.8, 7)
    assert np.array_equal(again[0].rgb, train.rgb) and np.array_equal(again[1].labels, test.labels)
    t, s = split_train_test(data, 0.999, 1)
    assert (len(t), len(s)) == (9, 1)
    with pytest.raises(ValueError):
        split_train_test(LabeledPixelSet(np.zeros((0, 3)), np.zeros(0)), 0.8, 1)


def test_separable_two_class(two_class):
    assert min_separation_sigmas() >= 10
    _, test, forest = two_class
    acc = (forest.predict(test.rgb) == test.labels).mean()
    assert acc >= 0.99


def test_training_is_deterministic(two_class):
    train, _, forest = two_class
    again = train_forest(train, SMALL)
    assert json.dumps(again.to_json()) == json.dumps(forest.to_json())


def test_worker_count_does_not_change_forest(two_class):
    train, _, forest = two_class
    parallel = train_forest(train, SMALL, workers=2)
    assert json.dumps(parallel.to_json()) == json.dumps(forest.to_json())


def test_identical_rows_give_majority_leaves():
    data = LabeledPixelSet(np.full((7, 3), 100), np.array([2, 2, 2, 2, 3, 3, 3]))
    forest = train_forest(data, ForestConfig(n_trees=9, rng_seed=1))
    assert all(t.n_nodes == 1 for t in forest.trees)
    assert forest.predict([[100, 100, 100]])[0] in (2, 3)
    cls, votes = predict_pixel(forest, [100, 100, 100])
    assert cls == int(np.argmax(votes)) + 1


def test_single_class_is_degenerate():
    data = LabeledPixelSet(np.array([[1, 2, 3], [4, 5, 6]]), np.array([6, 6]))
    forest = train_forest(data, SMALL)
    assert forest.degenerate and len(forest.trees) == 1
    assert predict_pixel(forest, [200, 0, 0])[0] == 6


def test_predict_pixel_on_centroid(two_class):
    _, _, forest = two_class
    cls, votes = predict_pixel(forest, CENTROIDS[0])
    assert cls == 1 and votes[0] > 0.9
    assert votes.sum() == pytest.approx(1.0, abs=1e-9)


def test_vote_ties_break_to_lowest_class():
    # hand-built single-leaf tree with an even split between classes 3 and 5
    from kiln_atlas.forest import Tree

    value = np.zeros((1, 10), dtype=np.int64)
    value[0, 2] = value[0, 4] = 4
    tree = Tree(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]), value)
    assert predict_pixel(Forest([tree]), [0, 0, 0])[0] == 3


def test_structure_invariants():
    data = blobs(per_class=60, sigma=30, seed=4)  # overlapping: deep trees
    cfg = ForestConfig(n_trees=6, max_depth=6, min_samples_leaf=3, rng_seed=2)
    forest = train_forest(data, cfg)
    for tree in forest.trees:
        assert tree.depth() <= 6
        leaves = tree.feature < 0
        assert (tree.value[leaves].sum(1) >= 3).all()
        inner = ~leaves
        assert (tree.value[inner] == tree.value[tree.left[inner]] + tree.value[tree.right[inner]]).all()


def test_max_features_clamp_recorded(two_class):
    meta = two_class[2].metadata
    assert meta["max_features_requested"] == 10 and meta["max_features_used"] == 3


def test_bootstrap_coverage():
    data = blobs(classes=(1, 2), per_class=100, seed=9)
    cfg = ForestConfig(n_trees=500, max_depth=1, rng_seed=4)
    forest = train_forest(data, cfg)
    seen = np.zeros(len(data), dtype=bool)
    for s in tree_seeds(cfg):
        seen[bootstrap_rows(s, len(data))] = True
    assert seen.mean() >= 0.99
    assert forest.metadata["bootstrap_coverage"] == seen.mean()


def _tile(color, w=12, h=12):
    px = np.empty((h, w, 3), dtype=np.uint8)
    px[:] = color
    return RasterTile(GeoRef(31, 74, w, h, -9e-5, 1e-4), px, "t")


def test_classify_tile(two_class):
    _, _, forest = two_class
    mask = classify_tile(forest, _tile(CENTROIDS[3]))
    assert not mask.bits.any()
    px = np.array(_tile(CENTROIDS[3]).pixels)
    px[3:8, 4:9] = CENTROIDS[0]
    tile = RasterTile(GeoRef(31, 74, 12, 12, -9e-5, 1e-4), px, "t")
    mask = classify_tile(forest, tile)
    assert mask.bits[3:8, 4:9].sum() >= 24
    assert mask.bits.sum() == mask.bits[3:8, 4:9].sum()
    assert mask.georef == tile.georef


def test_model_json_round_trip(tmp_path, two_class):
    _, test, forest = two_class
    path = tmp_path / "m.json"
    save_forest(forest, path)
    back = load_forest(path)
    assert np.array_equal(back.predict_proba(test.rgb), forest.predict_proba(test.rgb))
    assert back.schema == forest.schema and back.config == forest.config
    save_forest(back, tmp_path / "m2.json")
    assert path.read_bytes() == (tmp_path / "m2.json").read_bytes()


def test_training_csv_round_trip(tmp_path):
    data = blobs(classes=(1, 2, 3), per_class=4)
    write_training_csv(data, tmp_path / "d.csv")
    back = read_training_csv(tmp_path / "d.csv")
    assert np.array_equal(back.rgb, data.rgb) and np.array_equal(back.labels, data.labels)
    (tmp_path / "bad.csv").write_text("r,g,b,class\n1,2,3,1\n1,2,x,1\n")
    with pytest.raises(ValueError, match=":3:"):
        read_training_csv(tmp_path / "bad.csv")


# --- evaluation ----------------------------------------------------------------

def test_evaluate_perfect():
    y = [1, 2, 3, 3, 1]
    rep = evaluate(y, y)
    for c in (1, 2, 3):
        assert rep.precision[c] == rep.recall[c] == rep.f1[c] == 1
    assert rep.precision[4] is None and rep.confusion[3] is None
    assert rep.accuracy == 1


def test_evaluate_hand_counted():
    rep = evaluate([1, 2, 2, 2], [1, 1, 2, 2])
    assert rep.precision[1] == 1 and rep.recall[1] == 0.5
    assert rep.precision[2] == pytest.approx(2 / 3) and rep.recall[2] == 1
    assert rep.confusion[0][:2] == [0.5, 0.5]
    assert rep.confusion[1][:2] == [0.0, 1.0]


def test_evaluate_length_mismatch():
    with pytest.raises(ValueError):
        evaluate([1, 2], [1])


@given(st.lists(st.tuples(st.integers(1, 10), st.integers(1, 10)), min_size=1, max_size=80),
       st.randoms(use_true_random=False))
def test_evaluate_permutation_equivariant(pairs, rnd):
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    a = evaluate([p for p, _ in pairs], [t for _, t in pairs]).to_json()
    b = evaluate([p for p, _ in shuffled], [t for _, t in shuffled]).to_json()
    assert a == b


@given(st.lists(st.tuples(st.integers(1, 10), st.integers(1, 10)), min_size=1, max_size=80))
def test_confusion_rows_normalised(pairs):
    rep = evaluate([p for p, _ in pairs], [t for _, t in pairs])
    for row in rep.confusion:
        if row is not None:
            assert sum(row) == pytest.approx(1.0)
