import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hts.data.synth import synthesize_dataset
from hts.data.transforms import normalize_batch
from hts.model.config import toy, vitb32
from hts.model.network import Model
from hts.model.params import SchemaError
from hts.numeric.rng import make_rng
from hts.numeric.tensor import ContractError, GradTape, Tensor
from hts.training.callbacks import (
    EarlyStopState,
    PlateauState,
    early_stop_update,
    plateau_update,
    restore_best,
)
from hts.training.checkpoint import (
    CheckpointFormatError,
    load_checkpoint,
    save_checkpoint,
)
from hts.training.loop import TrainConfig, TrainingDiverged, fit, train_epoch
from hts.training.losses import (
    LossConfig,
    binary_cross_entropy,
    smoothed_cross_entropy,
    smoothed_targets,
    task_loss,
)
from hts.training.radam import RAdamState, radam_step, rectification, sma_length

# ---------------------------------------------------------------- losses


def test_uniform_prediction_gives_log_k():
    probs = Tensor(np.full((5, 8), 1 / 8))
    assert abs(smoothed_cross_entropy(probs, np.arange(5), 0.0).item() - math.log(8)) <= 1e-9


def test_smoothed_targets_values():
    t = smoothed_targets([2], 8, 0.2)[0]
    assert t[2] == 0.825
    assert all(t[i] == 0.025 for i in range(8) if i != 2)
    assert t.sum() == 1.0


@given(st.floats(0.0, 0.9), st.integers(2, 12), st.data())
def test_smoothed_rows_sum_to_one(alpha, k, data):
    labels = data.draw(st.lists(st.integers(0, k - 1), min_size=1, max_size=6))
    t = smoothed_targets(labels, k, alpha)
    np.testing.assert_allclose(t.sum(axis=1), 1.0, atol=1e-15)
    assert np.all(np.argmax(t, axis=1) == labels) or alpha >= (k - 1) / k


def test_smoothed_loss_minimum_is_target_entropy():
    t = smoothed_targets([0], 8, 0.2)
    loss = smoothed_cross_entropy(Tensor(t), [0], 0.2).item()
    assert loss == pytest.approx(-(0.825 * math.log(0.825) + 7 * 0.025 * math.log(0.025)), rel=1e-12)
    assert loss == pytest.approx(0.804, abs=1e-3)


def test_binary_loss_values():
    assert binary_cross_entropy(Tensor(np.full((4, 1), 0.5)), [0, 1, 1, 0]).item() == pytest.approx(math.log(2))
    p = Tensor(np.array([[0.9], [0.2]]))
    want = -(math.log(0.9) + math.log(0.8)) / 2
    assert binary_cross_entropy(p, [1, 0]).item() == pytest.approx(want, rel=1e-12)
    smoothed = binary_cross_entropy(p, [1, 0], 0.2).item()
    y = np.array([0.9, 0.1])
    want = -np.mean(y * np.log([0.9, 0.2]) + (1 - y) * np.log([0.1, 0.8]))
    assert smoothed == pytest.approx(want, rel=1e-12)


def test_loss_clamps_zero_probability():
    loss = smoothed_cross_entropy(Tensor(np.array([[0.0, 1.0]])), [0]).item()
    assert loss == pytest.approx(-math.log(1e-12))


def test_loss_rejects_bad_labels():
    with pytest.raises(ContractError):
        smoothed_cross_entropy(Tensor(np.full((1, 8), 0.125)), [8])
    with pytest.raises(ContractError):
        binary_cross_entropy(Tensor(np.full((1, 1), 0.5)), [2])


def test_loss_config_defaults_per_task():
    assert LossConfig.for_task("age8") == LossConfig("categorical", 0.2)
    assert LossConfig.for_task("gender2") == LossConfig("binary", 0.0)
    assert LossConfig.for_task("gender2", 0.1).smoothing == 0.1


def test_loss_gradient_matches_closed_form(rng):
    logits = rng.standard_normal((3, 8))
    x = Tensor(logits, requires_grad=True)
    from hts.numeric import ops as T
    with GradTape() as tape:
        loss = task_loss(T.softmax(x), [1, 4, 7], LossConfig("categorical", 0.2))
    g = tape.backward(loss)[x]
    p = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    np.testing.assert_allclose(g, (p - smoothed_targets([1, 4, 7], 8, 0.2)) / 3, atol=1e-12)


# ---------------------------------------------------------------- RAdam

RHO_INF = 1998.9999999999982
R5, R6, R7 = 0.017311503166379556, 0.025821112801865216, 0.032738814410059470
# 100 steps on sum a_i (w_i - c_i)^2 from w = (0, 0.5, -1), lr 0.01, computed at 40 digits
THETA_100 = (0.2112173118148525551, -0.11406913154302917362, -0.82962048340688442166)
A = (1.0, 2.5, 0.3)
C = (1.0, -2.0, 0.5)


def oracle_radam(theta, steps, lr=0.01, b1=0.9, b2=0.999, eps=1e-8):
    """Per-coordinate scalar RAdam in plain floats."""
    theta = list(theta)
    m = [0.0] * len(theta)
    v = [0.0] * len(theta)
    rho_inf = 2.0 / (1.0 - b2) - 1.0
    for t in range(1, steps + 1):
        rho = rho_inf - 2.0 * t * b2 ** t / (1.0 - b2 ** t)
        for i in range(len(theta)):
            g = 2.0 * A[i] * (theta[i] - C[i])
            m[i] = b1 * m[i] + (1.0 - b1) * g
            v[i] = b2 * v[i] + (1.0 - b2) * g * g
            m_hat = m[i] / (1.0 - b1 ** t)
            if rho > 4.0:
                r = math.sqrt((rho - 4) * (rho - 2) * rho_inf / ((rho_inf - 4) * (rho_inf - 2) * rho))
                theta[i] -= lr * r * m_hat / (math.sqrt(v[i] / (1.0 - b2 ** t)) + eps)
            else:
                theta[i] -= lr * m_hat
    return theta


def run_radam(theta, steps, lr=0.01, rectify=True):
    a, c = np.array(A), np.array(C)
    state = RAdamState(lr=lr)
    p = {"w": np.array(theta, dtype=np.float64)}
    rs = []
    for _ in range(steps):
        rs.append(radam_step(state, p, {"w": 2 * a * (p["w"] - c)}, rectify=rectify))
    return p["w"], rs


def test_sma_constants():
    assert RAdamState().rho_inf == RHO_INF
    assert sma_length(1, 0.999) == pytest.approx(1.0, abs=1e-12)
    assert all(sma_length(t, 0.999) <= 4 for t in range(1, 5))
    assert sma_length(5, 0.999) > 4
    for t, r in ((5, R5), (6, R6), (7, R7)):
        assert rectification(sma_length(t, 0.999), RHO_INF) == pytest.approx(r, abs=1e-10)


def test_radam_matches_scalar_oracle_100_steps():
    got, rs = run_radam((0.0, 0.5, -1.0), 100)
    want = oracle_radam((0.0, 0.5, -1.0), 100)
    assert np.max(np.abs(got - want)) <= 1e-10
    assert np.max(np.abs(got - np.array(THETA_100))) <= 1e-10
    assert rs[:4] == [None] * 4
    assert rs[4] == pytest.approx(R5, abs=1e-10)


def test_radam_early_steps_are_momentum_only():
    got, _ = run_radam((0.0, 0.5, -1.0), 1)
    g = 2 * np.array(A) * (np.array([0.0, 0.5, -1.0]) - np.array(C))
    np.testing.assert_allclose(got, np.array([0.0, 0.5, -1.0]) - 0.01 * g, rtol=1e-15)


def test_radam_converges_on_quadratic():
    got, _ = run_radam((0.0, 0.5, -1.0), 2000, lr=0.01)
    assert np.linalg.norm(got - np.array(C)) <= 1e-3


def test_unrectified_equals_adam():
    a, c = np.array(A), np.array(C)
    got, _ = run_radam((0.0, 0.5, -1.0), 30, rectify=False)
    w = np.array([0.0, 0.5, -1.0])
    m = np.zeros(3)
    v = np.zeros(3)
    for t in range(1, 31):
        g = 2 * a * (w - c)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w = w - 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(got, w, rtol=1e-13)


def test_radam_rejects_mismatched_gradient():
    with pytest.raises(ValueError):
        radam_step(RAdamState(), {"w": np.zeros(3)}, {"w": np.zeros(2)})


# ---------------------------------------------------------------- callbacks


def test_plateau_schedule_on_non_improving_run():
    state = PlateauState(lr=1e-4, factor=0.2, floor=1e-6, patience=2)
    lrs = []
    for _ in range(10):
        state = plateau_update(state, 0.5)
        lrs.append(state.lr)
    distinct = [lrs[0]] + [b for a, b in zip(lrs, lrs[1:]) if b != a]
    assert distinct == [1e-4, 1e-4 * 0.2, 1e-4 * 0.2 * 0.2, 1e-6]
    assert distinct[1:3] == pytest.approx([2e-5, 4e-6], rel=1e-12)
    assert lrs == [1e-4, 1e-4, 2e-5, 2e-5, distinct[2], distinct[2], 1e-6, 1e-6, 1e-6, 1e-6]


def test_plateau_improvement_needs_min_delta():
    state = plateau_update(PlateauState(patience=1), 0.5)
    state = plateau_update(state, 0.50005)
    assert state.lr == pytest.approx(2e-5)
    state = plateau_update(state, 0.6)
    assert state.best == 0.6 and state.stale == 0


def test_early_stop_after_exactly_five_stale_epochs():
    state = EarlyStopState(patience=5)
    params = {"w": np.zeros(1)}
    history = []
    for epoch, metric in enumerate([0.1, 0.2, 0.3] + [0.3] * 10, start=1):
        params["w"][0] = epoch
        state = early_stop_update(state, metric, params, epoch)
        history.append(state.stopped)
        if state.stopped:
            break
    assert epoch == 8 and state.best_epoch == 3 and history.count(True) == 1
    restore_best(state, params)
    assert params["w"][0] == 3


def test_callbacks_reject_non_finite_metric():
    with pytest.raises(ValueError):
        plateau_update(PlateauState(), float("nan"))


# ---------------------------------------------------------------- loop


@pytest.fixture(scope="module")
def small_data():
    ds = synthesize_dataset(24, 8, 32, seed=3)
    return ds.images, ds.labels("age8")


def make_model(seed=0, dtype=np.float32):
    return Model.create(toy(), make_rng(seed), dtype)


def test_early_stopping_restores_best_weights_bitwise(small_data):
    x, y = small_data
    model = make_model()
    snapshots = {}

    def grab(rec):
        snapshots[rec.epoch] = {k: v.copy() for k, v in {**model.params, **model.buffers}.items()}

    ramp = {1: 0.1, 2: 0.2, 3: 0.3}
    cfg = TrainConfig(lr=1e-3, batch_size=8, max_epochs=20)
    result = fit(model, x, y, x[:8], y[:8], cfg, on_epoch=grab, val_metric=lambda e, a: ramp.get(e, 0.3))
    assert result.stopped_early and len(result.history) == 8 and result.best_epoch == 3
    best = snapshots[3]
    assert not all(np.array_equal(best[k], snapshots[8][k]) for k in model.params)
    for k, v in {**model.params, **model.buffers}.items():
        assert v.tobytes() == best[k].tobytes(), k


def test_constant_metric_stops_before_max_epochs(small_data):
    x, y = small_data
    cfg = TrainConfig(lr=1e-3, batch_size=8, max_epochs=50)
    result = fit(make_model(), x, y, x[:8], y[:8], cfg, val_metric=lambda e, a: 0.5)
    assert result.stopped_early and len(result.history) == 6
    assert result.lr_schedule == [1e-3, 1e-3, 1e-3, 2e-4, 2e-4, pytest.approx(4e-5)]


def test_zero_lr_leaves_parameters_unchanged(small_data, tmp_path):
    x, y = small_data
    model = make_model()
    before = {k: v.copy() for k, v in model.params.items()}
    cfg = TrainConfig(lr=0.0, batch_size=32, max_epochs=3)
    result = fit(model, x, y, x[:8], y[:8], cfg, checkpoint_path=tmp_path / "c.htsc")
    for k in before:
        assert model.params[k].tobytes() == before[k].tobytes()
    losses = [r.train_loss for r in result.history]
    assert max(losses) - min(losses) < 1e-5
    saved = load_checkpoint(tmp_path / "c.htsc")
    assert all(saved.params[k].tobytes() == before[k].tobytes() for k in before)


def test_training_is_deterministic(small_data):
    x, y = small_data
    from hts.data.transforms import AugmentConfig
    cfg = TrainConfig(lr=1e-3, batch_size=8, max_epochs=2, augment=AugmentConfig(seed=4))
    a, b = make_model(), make_model()
    ha = fit(a, x, y, x[:8], y[:8], cfg).history
    hb = fit(b, x, y, x[:8], y[:8], cfg).history
    assert [r.train_loss for r in ha] == [r.train_loss for r in hb]
    assert all(a.params[k].tobytes() == b.params[k].tobytes() for k in a.params)


def test_nan_input_aborts_with_diagnostics(small_data):
    x, y = small_data
    x = x.copy()
    x[0, 0, 0, 0] = np.nan
    model = make_model()
    cfg = TrainConfig(lr=1e-3, batch_size=32)
    with pytest.raises(TrainingDiverged) as err:
        train_epoch(model, x, y, LossConfig.for_task("age8"), RAdamState(lr=1e-3), cfg, 1)
    assert err.value.batch == 0


def test_training_lowers_loss(small_data):
    x, y = small_data
    model = make_model()
    cfg = TrainConfig(lr=3e-3, batch_size=8, max_epochs=8, plateau_patience=5, early_stop_patience=10)
    hist = fit(model, x, y, np.zeros((0, 32, 32, 3)), np.zeros(0, int), cfg).history
    assert hist[-1].train_loss < hist[0].train_loss


# ---------------------------------------------------------------- checkpoints


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("task", ["age8", "gender2"])
def test_checkpoint_round_trip_bitwise(tmp_path, dtype, task):
    model = Model.create(toy(task), make_rng(1), dtype)
    model.buffers["sequencer.bn1.running_mean"][:] = np.linspace(0, 1, 16)
    save_checkpoint(model, tmp_path / "m.htsc")
    back = load_checkpoint(tmp_path / "m.htsc")
    assert back.spec == model.spec
    for src, dst in ((model.params, back.params), (model.buffers, back.buffers)):
        assert set(src) == set(dst)
        for k in src:
            assert dst[k].dtype == src[k].dtype and dst[k].tobytes() == src[k].tobytes()


def test_checkpoint_bytes_are_deterministic(tmp_path):
    save_checkpoint(make_model(), tmp_path / "a.htsc")
    save_checkpoint(make_model(), tmp_path / "b.htsc")
    assert (tmp_path / "a.htsc").read_bytes() == (tmp_path / "b.htsc").read_bytes()


@pytest.fixture(scope="module")
def checkpoint_bytes(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "m.htsc"
    save_checkpoint(make_model(), path)
    return path.read_bytes()


@pytest.mark.parametrize("mutate", [
    pytest.param(lambda b: b"XXXX" + b[4:], id="magic"),
    pytest.param(lambda b: b[:4] + b"\x02\x00" + b[6:], id="version"),
    pytest.param(lambda b: b[:6] + b"\xff\xff\xff\x00" + b[10:], id="header-length"),
    pytest.param(lambda b: b[:len(b) // 2], id="truncated"),
    pytest.param(lambda b: b[:-3], id="short-tail"),
    pytest.param(lambda b: b + b"\x00", id="trailing"),
    pytest.param(lambda b: b"", id="empty"),
])
def test_corrupt_checkpoint_rejected(tmp_path, checkpoint_bytes, mutate):
    path = tmp_path / "bad.htsc"
    path.write_bytes(mutate(checkpoint_bytes))
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(path)


@given(st.integers(0, 10 ** 9))
def test_random_truncation_rejected(checkpoint_bytes, tmp_path_factory, cut):
    cut = cut % len(checkpoint_bytes)
    path = tmp_path_factory.mktemp("cut") / "t.htsc"
    path.write_bytes(checkpoint_bytes[:cut])
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(path)


def test_failed_save_keeps_previous_file(tmp_path):
    path = tmp_path / "m.htsc"
    save_checkpoint(make_model(), path)
    before = path.read_bytes()
    broken = make_model()
    broken.params["head.bias"] = np.zeros(8, dtype=np.int32)
    with pytest.raises(TypeError):
        save_checkpoint(broken, path)
    assert path.read_bytes() == before
    assert [p.name for p in tmp_path.iterdir()] == ["m.htsc"]


def test_schema_mismatch_between_presets(tmp_path):
    save_checkpoint(make_model(), tmp_path / "toy.htsc")
    with pytest.raises(SchemaError):
        load_checkpoint(tmp_path / "toy.htsc", expect=vitb32())
    with pytest.raises(SchemaError):
        load_checkpoint(tmp_path / "toy.htsc", expect=toy("gender2"))


def test_evaluation_after_load_is_identical(tmp_path, small_data):
    x, _ = small_data
    model = make_model()
    save_checkpoint(model, tmp_path / "m.htsc")
    back = load_checkpoint(tmp_path / "m.htsc")
    xn = normalize_batch(x[:4])
    assert back.predict_proba(xn).tobytes() == model.predict_proba(xn).tobytes()
