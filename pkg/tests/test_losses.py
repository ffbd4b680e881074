# Unless explicitly stated otherwise all files in this repository are licensed
# under the Apache License 2.0.

"""Tests for the generator framework's loss terms"""

import numpy as np
import pytest

from seriesforge import losses
from seriesforge.losses import autoencoder_total_loss
from seriesforge.losses import generator_total_loss
from seriesforge.losses import lsgan_discriminator_loss
from seriesforge.losses import lsgan_generator_loss
from seriesforge.losses import moment_loss
from seriesforge.losses import reconstruction_loss
from seriesforge.losses import supervised_loss
from seriesforge.losses import ts_feature_loss
from seriesforge.numkit import ShapeError
from seriesforge.numkit import Tensor
from seriesforge.numkit import grad_check


def _column(values):
    """A batch of scalar series with one timestep each."""
    return np.asarray(values, dtype=np.float64).reshape(-1, 1, 1)


def _random_batch(shape, seed):
    return np.random.default_rng(seed).uniform(0.0, 1.0, shape)


def test_reconstruction_loss():
    x = _random_batch((4, 5, 3), 0)
    assert reconstruction_loss(x, x).item() == 0.0
    assert reconstruction_loss(np.zeros((1, 1, 2)), np.array([[[3.0, 4.0]]])).item() == pytest.approx(25.0)


def test_reconstruction_loss_shape_mismatch():
    with pytest.raises(ShapeError):
        reconstruction_loss(np.zeros((2, 3, 1)), np.zeros((2, 4, 1)))


def test_supervised_loss_by_hand():
    h = np.array([1.0, 2.0, 5.0]).reshape(1, 3, 1)
    s_out = np.array([4.0, 0.0, 0.0]).reshape(1, 3, 1)
    assert supervised_loss(h, s_out).item() == pytest.approx(1.0)


def test_supervised_loss_exact_prediction():
    h = _random_batch((3, 6, 2), 1)
    s_out = np.zeros_like(h)
    s_out[:, :-2] = h[:, 2:]
    s_out[:, -2:] = 7.0
    assert supervised_loss(h, s_out).item() == 0.0
    constant = np.full((2, 5, 2), 0.4)
    assert supervised_loss(constant, constant).item() == 0.0


def test_supervised_loss_requires_three_steps():
    with pytest.raises(ValueError):
        supervised_loss(np.zeros((2, 2, 1)), np.zeros((2, 2, 1)))


def test_moment_loss_by_hand():
    assert moment_loss(_column([0.0, 2.0]), _column([1.0, 1.0])).item() == pytest.approx(1.0)
    assert moment_loss(_column([0.0, 2.0]), _column([1.0, 3.0])).item() == pytest.approx(1.0)


def test_moment_loss_is_permutation_invariant():
    x = _random_batch((8, 4, 3), 2)
    assert moment_loss(x, x[::-1]).item() == pytest.approx(0.0, abs=1e-12)


def test_moment_loss_accepts_different_batch_sizes():
    assert moment_loss(_random_batch((8, 4, 3), 3), _random_batch((5, 4, 3), 4)).item() > 0.0
    with pytest.raises(ShapeError):
        moment_loss(np.zeros((2, 4, 3)), np.zeros((2, 4, 2)))


def test_ts_feature_loss_by_hand():
    assert ts_feature_loss(_column([1.0, 3.0]), _column([2.0, 2.0])).item() == pytest.approx(1.0)
    codes = _random_batch((6, 3, 2), 5)
    assert ts_feature_loss(codes, codes).item() == 0.0


REFERENCE = _random_batch((5, 3, 2), 6)
OTHER_BATCH = _random_batch((7, 3, 2), 7)

GRADIENT_CASES = {
    "reconstruction": lambda x: reconstruction_loss(Tensor(REFERENCE), x),
    "supervised_target": lambda h: supervised_loss(h, Tensor(REFERENCE)),
    "supervised_prediction": lambda s: supervised_loss(Tensor(REFERENCE), s),
    "moment": lambda x: moment_loss(Tensor(OTHER_BATCH), x),
    "ts_feature": lambda h: ts_feature_loss(Tensor(OTHER_BATCH), h),
    "lsgan_discriminator_real": lambda y: lsgan_discriminator_loss(y, Tensor(REFERENCE)),
    "lsgan_discriminator_fake": lambda y: lsgan_discriminator_loss([Tensor(REFERENCE), y], y * 0.5),
    "lsgan_generator": lambda y: lsgan_generator_loss([y, Tensor(REFERENCE)]),
}


@pytest.mark.parametrize("case", sorted(GRADIENT_CASES))
def test_loss_gradients(case):
    for seed in range(10):
        point = _random_batch((5, 3, 2), 10 + seed)
        assert grad_check(GRADIENT_CASES[case], point) < 1e-4


@pytest.mark.parametrize(
    "y_real,y_fake,expected",
    [
        (1.0, 0.0, 0.0),
        (0.5, 0.5, 0.5),
        (0.0, 1.0, 2.0),
    ],
)
def test_lsgan_discriminator_loss(y_real, y_fake, expected):
    real = np.full((4, 3, 1), y_real)
    fake = np.full((4, 3, 1), y_fake)
    assert lsgan_discriminator_loss(real, fake).item() == pytest.approx(expected)


def test_lsgan_generator_loss():
    assert lsgan_generator_loss(np.ones((3, 2, 1))).item() == 0.0
    assert lsgan_generator_loss(np.zeros((3, 2, 1))).item() == pytest.approx(1.0)
    assert lsgan_generator_loss(_column([0.0, 2.0])).item() == pytest.approx(1.0)


def test_lsgan_losses_at_chance():
    half = np.full((4, 3, 1), 0.5)
    total = lsgan_discriminator_loss(half, half).item() + lsgan_generator_loss(half).item()
    assert total == pytest.approx(0.75)


def test_lsgan_pools_sources_with_equal_weight():
    ones, zeros = np.ones((4, 3, 1)), np.zeros((2, 3, 1))
    assert lsgan_generator_loss([ones, zeros]).item() == pytest.approx(0.5)
    assert lsgan_discriminator_loss([ones, zeros], [zeros, zeros]).item() == pytest.approx(0.5)
    with pytest.raises(ValueError):
        lsgan_generator_loss([])


def test_generator_total_loss():
    components = dict(zip(losses.GENERATOR_TERMS, (0.1, 0.2, 0.3, 0.05, 0.15)))
    assert generator_total_loss(components).item() == pytest.approx(0.8)
    zeros = dict.fromkeys(losses.GENERATOR_TERMS, 0.0)
    assert generator_total_loss(zeros).item() == 0.0


def test_generator_total_loss_zero_weight_drops_term():
    components = dict(zip(losses.GENERATOR_TERMS, (0.1, 0.2, 0.3, 0.05, 0.15)))
    weights = {losses.SUPERVISED: 0.0}
    base = generator_total_loss(components, weights).item()
    components[losses.SUPERVISED] = float("nan")
    assert generator_total_loss(components, weights).item() == pytest.approx(base)
    assert base == pytest.approx(0.5)


def test_generator_total_loss_missing_term():
    with pytest.raises(ValueError):
        generator_total_loss({losses.MOMENT: 0.1})


def test_autoencoder_total_loss():
    assert autoencoder_total_loss(0.4, 0.1).item() == pytest.approx(0.5)
    weights = {losses.JOINT_ADVERSARIAL: 0.0}
    assert autoencoder_total_loss(0.4, 0.1, weights).item() == pytest.approx(0.4)
