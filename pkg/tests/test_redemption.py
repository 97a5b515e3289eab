import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from iwsn_trust.errors import InsufficientDataError, InsufficientEvidenceError, ShapeError
from iwsn_trust.fuzzy import EvidenceLog
from iwsn_trust.redemption import (
    RedemptionConfig,
    RedemptionModel,
    attack_vector_from_fused,
    build_attack_vector,
    fuse,
    load_redemption,
    mask_last,
    predict_cooperation,
    restore,
    save_redemption,
    train_redemption,
)


def brute_force(fused, l_w2):
    return [sum(fused[j : j + l_w2]) / l_w2 for j in range(len(fused) - l_w2 + 1)]


@pytest.fixture(scope="module")
def constant_model():
    data = np.full((320, 7), 0.25)
    return train_redemption(data, RedemptionConfig(), np.random.default_rng(11))


# attack vectors


def test_hand_counted_vector():
    v = attack_vector_from_fused([1, 0, 0, 1, 0, 0, 0, 0, 1, 0], 4)
    np.testing.assert_allclose(v, [0.5, 0.25, 0.25, 0.25, 0, 0.25, 0.25])


def test_all_zero_and_all_one():
    np.testing.assert_array_equal(attack_vector_from_fused([0] * 10, 4), np.zeros(7))
    np.testing.assert_array_equal(attack_vector_from_fused([1] * 10, 4), np.ones(7))


def test_exhaustive_against_brute_force():
    for bits in itertools.product((0, 1), repeat=10):
        np.testing.assert_allclose(attack_vector_from_fused(bits, 4), brute_force(bits, 4))


def test_build_from_log_uses_latest_bits():
    old = [1] * 5
    recent = [1, 0, 0, 1, 0, 0, 0, 0, 1, 0]
    log = EvidenceLog.from_bits(old + recent, [0] * 15, [0] * 15)
    np.testing.assert_allclose(build_attack_vector(log, 10, 4), [0.5, 0.25, 0.25, 0.25, 0, 0.25, 0.25])


def test_fusion_is_or_over_latest_window():
    log = EvidenceLog.from_bits([1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0])
    np.testing.assert_array_equal(fuse(log, 4), [1, 1, 1, 0])


def test_insufficient_evidence():
    with pytest.raises(InsufficientEvidenceError):
        build_attack_vector(EvidenceLog.from_bits([0] * 9, [0] * 9, [0] * 9), 10, 4)
    with pytest.raises(InsufficientEvidenceError):
        attack_vector_from_fused([0, 1], 4)


@given(st.lists(st.integers(0, 1), min_size=4, max_size=30), st.integers(1, 4))
def test_entries_are_quarter_steps(bits, l_w2):
    v = attack_vector_from_fused(bits, l_w2)
    assert len(v) == len(bits) - l_w2 + 1
    np.testing.assert_allclose(v * l_w2, np.round(v * l_w2))
    assert np.all((v >= 0) & (v <= 1))


# masking


@given(st.lists(st.floats(0, 1), min_size=7, max_size=7), st.floats(0, 1), st.lists(st.floats(0, 1), min_size=7, max_size=7))
def test_restore_changes_only_last_digit(v, mask, generated):
    v = np.array([v])
    masked = mask_last(v, np.array([mask]))
    np.testing.assert_array_equal(masked[:, :-1], v[:, :-1])
    assert masked[0, -1] == mask
    restored = restore(masked, np.array([generated]))
    np.testing.assert_array_equal(restored[:, :-1], v[:, :-1])
    assert restored[0, -1] == generated[-1]


# model


def test_architecture(rng):
    m = RedemptionModel.create(RedemptionConfig(), rng)
    assert [l.n_out for l in m.encoder.layers] == [16, 8, 4]
    assert [l.n_out for l in m.decoder.layers] == [8, 16, 7]
    assert [l.n_out for l in m.disc.layers] == [16, 8, 1]
    assert m.decoder.layers[-1].activation == "sigmoid"


def test_constant_dataset_prediction(constant_model):
    rng = np.random.default_rng(0)
    preds = constant_model.predict_last(np.full((20, 7), 0.25), rng)
    assert np.all(np.abs(preds - 0.25) < 0.1)


def test_cooperation_is_complement(constant_model, monkeypatch):
    rng = np.random.default_rng(0)
    for p_hat, expected in [(0.0, 1.0), (1.0, 0.0), (0.25, 0.75)]:
        monkeypatch.setattr(constant_model, "predict_last", lambda v, r, p=p_hat: np.array([p]))
        assert predict_cooperation(constant_model, np.zeros(7), rng) == pytest.approx(expected)


@given(st.lists(st.floats(0, 1), min_size=7, max_size=7), st.integers(0, 1000))
def test_cooperation_in_unit_interval(vector, seed):
    model = RedemptionModel.create(RedemptionConfig(), np.random.default_rng(seed))
    c = predict_cooperation(model, np.array(vector), np.random.default_rng(seed))
    assert 0.0 <= c <= 1.0


def test_wrong_width_rejected(rng):
    model = RedemptionModel.create(RedemptionConfig(), rng)
    with pytest.raises(ShapeError):
        model.predict_last(np.zeros(6), rng)


def test_initial_training_needs_ten_batches(rng):
    with pytest.raises(InsufficientDataError):
        train_redemption(np.zeros((319, 7)), rng=rng)
    with pytest.raises(InsufficientDataError):
        train_redemption(np.zeros((159, 7)), rng=rng, initial=False)
    train_redemption(np.zeros((160, 7)), rng=rng, epochs=1, initial=False)


def test_training_is_deterministic():
    data = np.random.default_rng(5).integers(0, 5, size=(320, 7)) / 4
    a = train_redemption(data, rng=np.random.default_rng(9), epochs=3)
    b = train_redemption(data, rng=np.random.default_rng(9), epochs=3)
    assert a.history == b.history
    for name, net in a.networks().items():
        for pa, pb in zip(net.state(), b.networks()[name].state()):
            np.testing.assert_array_equal(pa, pb)


def test_checkpoint_round_trip(tmp_path, constant_model):
    path = tmp_path / "redemption.npz"
    save_redemption(path, constant_model)
    loaded = load_redemption(path)
    x = np.full((3, 7), 0.25)
    mask = np.full(3, 0.5)
    np.testing.assert_array_equal(loaded.generate(mask_last(x, mask)), constant_model.generate(mask_last(x, mask)))
