import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mimo_poison.attacks import (
    AttackConfig,
    DistanceParams,
    LowProFoolParams,
    PoisonedSet,
    distance_based_attack,
    fgsm_inputs,
    fgsm_perturb,
    lowprofool_perturb,
    lowprofool_step,
    poison,
    victim_count,
)
from mimo_poison.dataset import FEATURES, INPUT_FEATURES, Record, RecordSet
from mimo_poison.errors import ConfigError, NoCandidateError
from mimo_poison.regression import LinearModel, evaluate, fit_least_squares, predict

LOS = INPUT_FEATURES.index("los")


def unit_model(w, p=11):
    weights = np.zeros(p)
    weights[: len(w)] = w
    return LinearModel(weights, 0.0, np.zeros(p), np.ones(p), np.full(p, 2.0))


def rec(values, pathloss=0.0, los=0):
    x = np.zeros(11)
    x[: len(values)] = values
    x[LOS] = los
    full = np.insert(x, FEATURES.index("pathloss"), pathloss)
    return Record.from_array(full)


@pytest.fixture(scope="module")
def fitted(small_dataset):
    return fit_least_squares(small_dataset)


def test_plain_zero_residual_unchanged():
    m = unit_model([1.0, -2.0])
    r = rec([1.0, 1.0], pathloss=-1.0)
    assert fgsm_perturb(m, r, 0.5, variant="plain") == r


def test_maximize_hand_example():
    m = unit_model([1.0, -2.0])
    r = rec([0.3, 0.7], pathloss=5.0)
    out = fgsm_perturb(m, r, 0.5, scaling="absolute", variant="maximize")
    d = out.inputs() - r.inputs()
    assert d[0] == pytest.approx(0.5) and d[1] == pytest.approx(-0.5)
    assert np.all(d[2:] == 0)
    assert predict(m, out) - predict(m, r) == pytest.approx(1.5)


def test_fluctuation_direction_flips():
    m = unit_model([1.0, 3.0])
    r = rec([0.0, 0.0])
    up = fgsm_perturb(m, r, 0.1, variant="fluctuation", direction=1)
    down = fgsm_perturb(m, r, 0.1, variant="fluctuation", direction=-1)
    assert predict(m, up) > predict(m, r) > predict(m, down)


def test_plain_increases_loss(fitted, small_dataset):
    X, y = small_dataset.inputs[:200], small_dataset.target[:200]
    X2 = fgsm_inputs(fitted, X, y, 0.05, "absolute", "plain")
    before = (fitted.predict_inputs(X) - y) ** 2
    after = (fitted.predict_inputs(X2) - y) ** 2
    # los re-rounding can undo a step, never reverse the others
    assert np.mean(after >= before) > 0.95
    assert after.mean() > before.mean()


def test_replace_form():
    m = unit_model([1.0, -2.0])
    out = fgsm_inputs(m, np.full((1, 11), 7.0), [0.0], 0.5, "absolute", "maximize", additive=False)
    assert out[0, 0] == 0.5 and out[0, 1] == -0.5


@given(st.integers(0, 2**32 - 1), st.floats(1e-4, 2.0))
@settings(max_examples=50, deadline=None)
def test_maximize_never_lowers_prediction(seed, eps):
    rng = np.random.default_rng(seed)
    m = LinearModel(rng.normal(size=11), 3.0, rng.normal(size=11), rng.uniform(0.5, 2, 11), np.ones(11))
    m.weights[LOS] = 0.0  # rounding of the binary feature is tested separately
    X = m.destandardize(rng.normal(size=(20, 11)))
    X[:, LOS] = rng.integers(0, 2, 20)
    out = fgsm_inputs(m, X, np.zeros(20), eps, "absolute", "maximize")
    assert np.all(m.predict_inputs(out) >= m.predict_inputs(X) - 1e-9)


@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1.0), st.sampled_from(["plain", "fluctuation", "maximize"]))
@settings(max_examples=50, deadline=None)
def test_linf_equals_epsilon_absolute(seed, eps, variant):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=11)
    w[LOS] = 0.0
    m = LinearModel(w, 0.0, np.zeros(11), np.ones(11), np.ones(11))
    X = rng.normal(size=(5, 11))
    X[:, LOS] = 0
    out = fgsm_inputs(m, X, rng.normal(size=5) * 10, eps, "absolute", variant, flips=np.ones(5))
    d = np.abs(m.standardize(out) - m.standardize(X))
    active = np.arange(11) != LOS
    np.testing.assert_allclose(d[:, active].max(axis=1), eps, rtol=1e-9)


def test_feature_scaled_uses_range():
    m = unit_model([1.0, 1.0])
    m.range_std[:2] = [2.0, 10.0]
    out = fgsm_inputs(m, np.zeros((1, 11)), [0.0], 0.1, "feature_scaled", "maximize")
    assert out[0, 0] == pytest.approx(0.2) and out[0, 1] == pytest.approx(1.0)


def test_los_rerounded():
    m = unit_model([0.0] * LOS + [1.0])
    out = fgsm_inputs(m, np.zeros((2, 11)), [0.0, 0.0], 0.7, "absolute", "maximize")
    assert out[:, LOS].tolist() == [1.0, 1.0]
    out = fgsm_inputs(m, np.zeros((1, 11)), [0.0], 0.3, "absolute", "maximize")
    assert out[0, LOS] == 0.0


def test_maximize_victim_mse_non_decreasing_in_epsilon(fitted, small_dataset):
    prev = -np.inf
    for eps in [0.001, 0.003, 0.01, 0.03, 0.1, 0.3]:
        ps = poison(small_dataset, fitted, AttackConfig(epsilon=eps, fraction=1.0))
        mse = evaluate(fitted, ps.records).mse
        assert mse >= prev
        prev = mse


# distance attack

def _pool(values_and_targets):
    rows = [rec(v, pathloss=t).to_array() for v, t in values_and_targets]
    return RecordSet(np.array(rows))


def test_distance_attack_example():
    pool = _pool([([0.0, 0.0], 10.0), ([5.0, 5.0], 50.0)])
    victim = rec([0.1, 0.0], pathloss=12.0)
    m = unit_model([1.0, 1.0])
    out = distance_based_attack(victim, pool, 20.0, model=m)
    assert out.inputs()[:2].tolist() == [5.0, 5.0]
    assert out.pathloss == 12.0


def test_distance_attack_delta_zero_nearest():
    pool = _pool([([0.0, 0.0], 10.0), ([5.0, 5.0], 50.0)])
    out = distance_based_attack(rec([4.0, 4.0], pathloss=10.0), pool, 0.0, model=unit_model([1, 1]))
    assert out.inputs()[:2].tolist() == [5.0, 5.0]


def test_distance_attack_no_candidate():
    pool = _pool([([1.0, 1.0], 30.0)])
    with pytest.raises(NoCandidateError):
        distance_based_attack(rec([1.0, 1.0], pathloss=30.0), pool, 5.0)


def test_distance_poison_skips(small_dataset, fitted):
    ps = poison(small_dataset, fitted, AttackConfig.from_dict({"method": "distance", "fraction": 0.5,
                                                              "distance": {"delta": 1e6}}))
    assert ps.n_poisoned == 0
    assert len(ps.skipped) == victim_count(0.5, len(small_dataset))


# lowprofool

def test_lowprofool_zero_steps_unchanged():
    m = unit_model([1.0, 2.0])
    r = rec([0.5, 0.5])
    assert lowprofool_perturb(m, r, LowProFoolParams(steps=0)) == r


def test_lowprofool_unpenalized_example():
    m = LinearModel(np.array([2.0]), 0.0, np.zeros(1), np.ones(1), np.ones(1))
    r = lowprofool_step(m, LowProFoolParams(steps=5, step_size=0.1, trade_off=0.0))
    assert r[0] == pytest.approx(1.0)
    assert float(m.weights @ r) == pytest.approx(2.0)


def test_lowprofool_penalty_shrinks_weighted_component():
    m = LinearModel(np.array([1.0, 1.0]), 0.0, np.zeros(2), np.ones(2), np.ones(2))
    free = lowprofool_step(m, LowProFoolParams(steps=50, step_size=0.05, trade_off=0.0, feature_weights=(0, 10)))
    pen = lowprofool_step(m, LowProFoolParams(steps=50, step_size=0.05, trade_off=1.0, feature_weights=(0, 10)))
    assert abs(pen[1]) <= abs(free[1])
    assert pen[0] == pytest.approx(free[0])


def test_lowprofool_raises_prediction(fitted, small_dataset):
    ps = poison(small_dataset, fitted, AttackConfig(method="lowprofool", fraction=1.0,
                                                    lowprofool=LowProFoolParams(steps=20, step_size=0.01, trade_off=0.1)))
    assert np.mean(fitted.predict_inputs(ps.records.inputs)) > np.mean(fitted.predict_inputs(small_dataset.inputs))


# poison

def test_victim_count_rule():
    assert victim_count(0.6, 10) == 6
    assert victim_count(0.99999, 21_169) == 21_169
    assert victim_count(0.0, 50) == 0
    assert victim_count(0.25, 2) == 1  # halves round up


def test_poison_fraction_zero_identity(small_dataset, fitted):
    ps = poison(small_dataset, fitted, AttackConfig(fraction=0.0))
    assert ps.records.data.tobytes() == small_dataset.data.tobytes()
    assert ps.n_poisoned == 0


@pytest.mark.parametrize("method", ["fgsm", "lowprofool", "distance"])
def test_poison_contract(small_dataset, fitted, method):
    cfg = AttackConfig(method=method, fraction=0.6, distance=DistanceParams(delta=2.0))
    a = poison(small_dataset, fitted, cfg)
    b = poison(small_dataset, fitted, cfg)
    assert a.records.data.tobytes() == b.records.data.tobytes()
    assert np.array_equal(a.labels, b.labels)
    assert a.n_poisoned == victim_count(0.6, len(small_dataset)) - len(a.skipped)
    t = FEATURES.index("pathloss")
    assert a.records.data[:, t].tobytes() == small_dataset.data[:, t].tobytes()
    unchanged = np.all(a.records.data == small_dataset.data, axis=1)
    assert np.all(unchanged[a.labels == 0])


def test_poison_seed_changes_victims(small_dataset, fitted):
    a = poison(small_dataset, fitted, AttackConfig(fraction=0.3, seed=1))
    b = poison(small_dataset, fitted, AttackConfig(fraction=0.3, seed=2))
    assert not np.array_equal(a.labels, b.labels)


def test_poisoned_set_csv_round_trip(tmp_path, small_dataset, fitted):
    ps = poison(small_dataset, fitted, AttackConfig(fraction=0.4))
    ps.save(tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text().splitlines()[0].endswith(",is_poisoned")
    back = PoisonedSet.load(tmp_path / "p.csv")
    assert back.records == ps.records and np.array_equal(back.labels, ps.labels)


@pytest.mark.parametrize("bad", [
    {"epsilon": 0.0}, {"epsilon": -1.0}, {"epsilon": float("inf")}, {"fraction": 1.5},
    {"method": "pgd"}, {"scaling": "log"}, {"fgsm_variant": "sideways"},
    {"lowprofool": {"steps": -1}}, {"unknown": 1},
])
def test_attack_config_validation(bad):
    with pytest.raises(ConfigError):
        AttackConfig.from_dict(bad)


def test_attack_config_round_trip():
    cfg = AttackConfig(method="lowprofool", lowprofool=LowProFoolParams(feature_weights=tuple(range(11))))
    assert AttackConfig.from_dict(cfg.to_dict()) == cfg
