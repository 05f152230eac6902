import numpy as np
import pytest

from pedboost.booster import (
    BoostParams,
    clamp_scores,
    default_init,
    dump_model,
    extract_features,
    extract_features_batch,
    fit,
    load_model,
    logistic_loss,
    predict,
    prob_to_score,
    read_model,
    save_model,
    sigmoid,
)
from pedboost.pedigree import FEMALE, MALE, Individual, Pedigree, PhenotypeRecord


def _random_problem(rng, n=150, f=3):
    x = rng.random((n, f))
    y = (rng.random(n) < sigmoid(3 * (x[:, 0] - 0.5))).astype(float)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    return x, y


def test_params_validation():
    with pytest.raises(ValueError):
        BoostParams(iterations=-1)
    with pytest.raises(ValueError):
        BoostParams(bag_fraction=0.0)
    with pytest.raises(ValueError):
        BoostParams(shrinkage=1.5)
    BoostParams(shrinkage=0.0)  # zero shrinkage allowed: the no-update limit


def test_default_init_values():
    assert default_init(np.array([0, 1, 0, 1])) == 0.0
    assert np.isclose(default_init(np.array([1, 0, 0, 0, 0])), np.log(0.25))
    with pytest.raises(ValueError):
        default_init(np.ones(4))


def test_zero_iterations_returns_sigmoid_of_init():
    rng = np.random.default_rng(0)
    x, y = _random_problem(rng)
    init = rng.normal(0, 2, len(y))
    model = fit(x, y, init, BoostParams(iterations=0))
    assert np.array_equal(predict(model, x, init), sigmoid(init))


def test_zero_shrinkage_is_identity():
    rng = np.random.default_rng(1)
    x, y = _random_problem(rng)
    init = np.full(len(y), default_init(y))
    model = fit(x, y, init, BoostParams(iterations=20, shrinkage=0.0, bag_fraction=1.0))
    assert np.array_equal(predict(model, x, init), sigmoid(init))


def test_two_sample_single_split_fixture():
    """One perfectly separating feature: the hand-computed Newton tree."""
    x = np.array([[0.0], [1.0]])
    y = np.array([0.0, 1.0])
    params = BoostParams(iterations=1, max_depth=1, shrinkage=0.1,
                         bag_fraction=1.0, min_child_weight=0.0)
    model = fit(x, y, np.zeros(2), params)
    tree = model.trees[0]
    # at init 0: p = 1/2, g = (1/2, -1/2), h = (1/4, 1/4); w = -g/h = (-2, +2)
    assert tree.feature[0] == 0
    assert tree.threshold[0] == 0.5
    assert abs(tree.weight[tree.left[0]] - (-2.0)) < 1e-12
    assert abs(tree.weight[tree.right[0]] - 2.0) < 1e-12
    assert np.allclose(predict(model, x, np.zeros(2)), sigmoid(np.array([-0.2, 0.2])), atol=1e-15)


def test_constant_feature_all_positive_labels_newton_sequence():
    """With one constant feature every tree is a single leaf w = 1/p."""
    n = 8
    x = np.zeros((n, 1))
    y = np.ones(n)
    nu = 0.1
    model = fit(x, y, np.zeros(n), BoostParams(iterations=3, bag_fraction=1.0, shrinkage=nu))
    score = 0.0
    for tree in model.trees:
        assert tree.feature == [-1]
        p = sigmoid(np.array([score]))[0]
        assert abs(tree.weight[0] - 1.0 / p) < 1e-12
        score += nu * tree.weight[0]
    losses = [logistic_loss(y, np.zeros(n))]
    s = np.zeros(n)
    for tree in model.trees:
        s = s + nu * tree.raw(x)
        losses.append(logistic_loss(y, s))
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_training_loss_nonincreasing_without_bagging():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        x, y = _random_problem(rng)
        init = np.full(len(y), default_init(y))
        params = BoostParams(iterations=50, bag_fraction=1.0, rng_seed=seed)
        model = fit(x, y, init, params)
        scores = clamp_scores(init).copy()
        prev = logistic_loss(y, scores)
        for tree in model.trees:
            scores = scores + params.shrinkage * tree.raw(x)
            cur = logistic_loss(y, scores)
            assert cur <= prev + 1e-12
            prev = cur


def test_sample_order_invariance_without_bagging():
    rng = np.random.default_rng(3)
    x, y = _random_problem(rng)
    init = rng.normal(size=len(y))
    params = BoostParams(iterations=10, bag_fraction=1.0)
    base = fit(x, y, init, params)
    perm = rng.permutation(len(y))
    permuted = fit(x[perm], y[perm], init[perm], params)
    assert dump_model(base) == dump_model(permuted)
    probe = rng.random((20, x.shape[1]))
    assert np.array_equal(predict(base, probe, np.zeros(20)),
                          predict(permuted, probe, np.zeros(20)))


def test_init_shift_equivariance_at_zero_iterations():
    rng = np.random.default_rng(4)
    x, y = _random_problem(rng)
    init = rng.normal(0, 1, len(y))
    kappa = 1.75
    a = predict(fit(x, y, init, BoostParams(iterations=0)), x, init)
    b = predict(fit(x, y, init + kappa, BoostParams(iterations=0)), x, init + kappa)
    logit = lambda p: np.log(p / (1 - p))
    assert np.allclose(logit(b) - logit(a), kappa, atol=1e-9)


def test_bagging_is_seed_deterministic():
    rng = np.random.default_rng(5)
    x, y = _random_problem(rng, n=300)
    init = np.full(len(y), default_init(y))
    m1 = fit(x, y, init, BoostParams(iterations=20, rng_seed=9))
    m2 = fit(x, y, init, BoostParams(iterations=20, rng_seed=9))
    m3 = fit(x, y, init, BoostParams(iterations=20, rng_seed=10))
    assert dump_model(m1) == dump_model(m2)
    assert dump_model(m1) != dump_model(m3)


def test_depth_limit_and_interactions():
    rng = np.random.default_rng(6)
    x = rng.random((400, 2))
    y = ((x[:, 0] > 0.5) ^ (x[:, 1] > 0.5)).astype(float)  # depth-2 signal
    init = np.full(len(y), default_init(y))
    model = fit(x, y, init, BoostParams(iterations=40, bag_fraction=1.0))
    for tree in model.trees:
        # depth 2: at most 3 splits and 4 leaves
        assert sum(1 for f in tree.feature if f >= 0) <= 3
        assert len(tree.feature) <= 7
    preds = predict(model, x, init)
    assert np.mean((preds > 0.5) == (y == 1)) > 0.95


def test_input_validation():
    x = np.ones((3, 1))
    with pytest.raises(ValueError, match="binary"):
        fit(x, np.array([0.0, 0.5, 1.0]), np.zeros(3), BoostParams(iterations=1))
    with pytest.raises(ValueError, match="equal length"):
        fit(x, np.array([0.0, 1.0]), np.zeros(2), BoostParams(iterations=1))
    with pytest.raises(ValueError, match="empty"):
        fit(np.ones((0, 1)), np.zeros(0), np.zeros(0), BoostParams(iterations=1))
    with pytest.raises(ValueError, match="finite"):
        fit(x, np.array([0.0, 1, 1]), np.array([np.inf, 0, 0]), BoostParams(iterations=1))
    model = fit(x, np.array([0.0, 1, 1]), np.zeros(3), BoostParams(iterations=1))
    with pytest.raises(ValueError, match="features"):
        predict(model, np.ones((2, 4)), np.zeros(2))


def test_prob_to_score_handles_extremes():
    scores = prob_to_score(np.array([0.0, 0.5, 1.0]))
    assert scores[0] == -15.0 and scores[2] == 15.0 and scores[1] == 0.0


def test_serialization_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    x, y = _random_problem(rng)
    init = np.full(len(y), default_init(y))
    model = fit(x, y, init, BoostParams(iterations=15), feature_names=("a", "b", "c"))
    text = dump_model(model)
    again = load_model(text)
    assert dump_model(again) == text
    assert np.array_equal(predict(model, x, init), predict(again, x, init))
    path = tmp_path / "model.txt"
    save_model(model, path)
    assert dump_model(read_model(path)) == text


def test_load_model_rejects_garbage():
    with pytest.raises(ValueError):
        load_model("not a model\n")


# -- feature extraction -------------------------------------------------------


def _family_with_cancers():
    members = [Individual("c", FEMALE, mother_id="m", father_id="f", current_age=40)]
    members.append(Individual("m", FEMALE, current_age=70,
                              phenotypes={"crc": PhenotypeRecord(True, 50)}))
    members.append(Individual("f", MALE, current_age=72,
                              phenotypes={"crc": PhenotypeRecord(True, 60)}))
    for i, sex in enumerate([FEMALE] * 5 + [MALE] * 3):
        phenos = {"ec": PhenotypeRecord(True, 45)} if sex == FEMALE and i < 3 else {}
        members.append(Individual(f"s{i}", sex, mother_id="m", father_id="f",
                                  current_age=45, phenotypes=phenos))
    return Pedigree(members, "c")


def test_extract_features_ratios():
    ped = _family_with_cancers()
    z = extract_features(ped, ["crc", "ec"], {"ec": FEMALE})
    assert np.isclose(z[0], 2 / 11)      # 2 of 11 members with crc
    assert np.isclose(z[1], 3 / 7)       # 3 of 7 females with ec
    z_no_c = extract_features(ped, ["crc"], include_counselee=False)
    assert np.isclose(z_no_c[0], 2 / 10)


def test_extract_features_empty_and_missing():
    solo = Pedigree([Individual("1", MALE, current_age=40)], "1")
    z = extract_features(solo, ["crc", "ec"], {"ec": FEMALE})
    assert z[0] == 0.0 and z[1] == 0.0   # no eligible females: defined as 0


def test_extract_features_batch(small_families):
    peds = [f.pedigree for f in small_families[:10]]
    z = extract_features_batch(peds, ["colorectal", "endometrial"], {"endometrial": FEMALE})
    assert z.shape == (10, 2)
    assert np.all(z >= 0) and np.all(z <= 1)
