# Unless explicitly stated otherwise all files in this repository are licensed
# under the Apache License 2.0.

"""Loss functions of the generator framework.

All losses take (N, T, D) tensors and return a differentiable scalar tensor.
"E[sum_t ...]" is realized as a mean over samples of a sum over timestamps;
norms inside it are squared L2 norms. Batch statistics use the population
estimator (divide by N).
"""
import typing

from .numkit import ShapeError
from .numkit import Tensor
from .numkit import as_tensor


if typing.TYPE_CHECKING:
    from typing import Dict  # noqa: F401
    from typing import Optional  # noqa: F401
    from typing import Sequence  # noqa: F401
    from typing import Union  # noqa: F401

    Scores = Union[Tensor, Sequence[Tensor]]


LATENT_ADVERSARIAL = "latent_adv"
FEATURE_ADVERSARIAL = "feature_adv"
SUPERVISED = "supervised"
MOMENT = "moment"
TS_FEATURE = "ts"
GENERATOR_TERMS = (LATENT_ADVERSARIAL, FEATURE_ADVERSARIAL, SUPERVISED, MOMENT, TS_FEATURE)

RECONSTRUCTION = "reconstruction"
JOINT_ADVERSARIAL = "joint_adv"
AUTOENCODER_TERMS = (RECONSTRUCTION, JOINT_ADVERSARIAL)


def _same_shape(kind, left, right):
    # type: (str, Tensor, Tensor) -> None
    if left.shape != right.shape:
        raise ShapeError(kind, [left.shape, right.shape])


def _same_tail(kind, left, right):
    # type: (str, Tensor, Tensor) -> None
    if left.ndim != 3 or right.ndim != 3 or left.shape[1:] != right.shape[1:]:
        raise ShapeError(kind, [left.shape, right.shape])


def reconstruction_loss(x, x_ae):
    # type: (Tensor, Tensor) -> Tensor
    """Mean over samples of the summed per-timestep squared error."""
    x, x_ae = as_tensor(x), as_tensor(x_ae)
    _same_shape("reconstruction_loss", x, x_ae)
    return (x - x_ae).square().sum(axes=(1, 2)).mean()


def supervised_loss(h, s_out):
    # type: (Tensor, Tensor) -> Tensor
    """Error of predicting the embedding two steps ahead.

    ``s_out[:, t]`` predicts ``h[:, t + 2]``; the last two predictions have no
    target and are ignored. The squared error is summed over latent
    dimensions and averaged over samples and valid positions.
    """
    h, s_out = as_tensor(h), as_tensor(s_out)
    _same_shape("supervised_loss", h, s_out)
    if h.ndim != 3 or h.shape[1] < 3:
        raise ValueError("supervised_loss requires at least 3 timestamps, got shape %r" % (h.shape,))
    target = h.slice_time(start=2)
    prediction = s_out.slice_time(stop=-2)
    return (target - prediction).square().sum(axes=2).mean()


def batch_moments(x):
    # type: (Tensor) -> typing.Tuple[Tensor, Tensor]
    """Per-(timestamp, feature) batch mean and population variance."""
    mean = x.mean(axes=0)
    centered = x - mean.broadcast_to(x.shape)
    return mean, centered.square().mean(axes=0)


def moment_loss(x, x_syn):
    # type: (Tensor, Tensor) -> Tensor
    """Absolute differences of batch means plus those of batch variances,
    summed over timestamps and features. The batch sizes may differ."""
    x, x_syn = as_tensor(x), as_tensor(x_syn)
    _same_tail("moment_loss", x, x_syn)
    mean_real, var_real = batch_moments(x)
    mean_syn, var_syn = batch_moments(x_syn)
    return (mean_real - mean_syn).abs().sum() + (var_real - var_syn).abs().sum()


def ts_feature_loss(h_real, h_syn):
    # type: (Tensor, Tensor) -> Tensor
    """Squared differences of batch means and batch standard deviations of
    loss-function encoder codes, summed over code timesteps and dimensions."""
    h_real, h_syn = as_tensor(h_real), as_tensor(h_syn)
    _same_tail("ts_feature_loss", h_real, h_syn)
    mean_real, var_real = batch_moments(h_real)
    mean_syn, var_syn = batch_moments(h_syn)
    mean_term = (mean_real - mean_syn).square().sum()
    std_term = (var_real.sqrt() - var_syn.sqrt()).square().sum()
    return mean_term + std_term


def _pooled(scores, transform):
    # type: (Scores, typing.Callable[[Tensor], Tensor]) -> Tensor
    if isinstance(scores, Tensor):
        return transform(scores).mean()
    scores = list(scores)
    if not scores:
        raise ValueError("At least one score batch is required")
    total = transform(as_tensor(scores[0])).mean()
    for extra in scores[1:]:
        total = total + transform(as_tensor(extra)).mean()
    return total / len(scores)


def lsgan_discriminator_loss(y_real, y_fake):
    # type: (Scores, Scores) -> Tensor
    """mean((y_real - 1)^2) + mean(y_fake^2).

    Either side may be a list of score batches; the sources of one side are
    averaged with equal weight.
    """
    return _pooled(y_real, lambda y: (y - 1.0).square()) + _pooled(y_fake, lambda y: y.square())


def lsgan_generator_loss(y_fake):
    # type: (Scores) -> Tensor
    """mean((y_fake - 1)^2), averaged over the fake sources."""
    return _pooled(y_fake, lambda y: (y - 1.0).square())


def weighted_sum(components, weights, names):
    # type: (Dict[str, Union[Tensor, float]], Optional[Dict[str, float]], Sequence[str]) -> Tensor
    missing = [name for name in names if name not in components]
    if missing:
        raise ValueError("Missing loss components %r" % missing)
    weights = weights or {}
    total = None  # type: Optional[Tensor]
    for name in names:
        weight = float(weights.get(name, 1.0))
        if weight == 0.0:
            continue
        term = as_tensor(components[name]) * weight
        total = term if total is None else total + term
    return total if total is not None else Tensor(0.0)


def generator_total_loss(components, weights=None):
    # type: (Dict[str, Union[Tensor, float]], Optional[Dict[str, float]]) -> Tensor
    """Weighted sum of the five generator terms (unit weights by default).

    A zero weight drops its term entirely, so the result does not depend on
    that component's value.
    """
    return weighted_sum(components, weights, GENERATOR_TERMS)


def autoencoder_total_loss(l_r, l_adv, weights=None):
    # type: (Union[Tensor, float], Union[Tensor, float], Optional[Dict[str, float]]) -> Tensor
    """Reconstruction plus the feature discriminator's adversarial term."""
    return weighted_sum({RECONSTRUCTION: l_r, JOINT_ADVERSARIAL: l_adv}, weights, AUTOENCODER_TERMS)
