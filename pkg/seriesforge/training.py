# Unless explicitly stated otherwise all files in this repository are licensed
# under the Apache License 2.0.

"""The four-phase training schedule.

1. the loss-function autoencoder (ê, r̂) learns to compress the time axis,
2. the latent autoencoder (e, r) learns to embed sequences, against the
   feature discriminator,
3. the supervisor s learns to predict embeddings two steps ahead,
4. generator, supervisor, latent autoencoder and both discriminators train
   jointly. ê and r̂ stay frozen from here on.

Phase 4 periodically scores the model with a quick discriminative classifier
combined with the moment errors of the loss-function codes, and keeps the
best-scoring parameters (see ``EarlyStopState``).
"""
import json
import logging
import math
import typing

import numpy as np

from . import losses
from .data import SeriesBatch
from .data import sample_noise
from .data import scaler_apply
from .data import scaler_fit
from .data import scaler_invert
from .metrics import ScorerBudget
from .metrics import discriminative_score
from .nets import DEFAULT_HIDDEN_DIM
from .nets import DEFAULT_NUM_LAYERS
from .nets import DEFAULT_TIME_STRIDE
from .nets import FEATURE_DISCRIMINATOR
from .nets import GENERATOR
from .nets import LATENT_DECODER
from .nets import LATENT_DISCRIMINATOR
from .nets import LATENT_ENCODER
from .nets import LOSSFN_DECODER
from .nets import LOSSFN_ENCODER
from .nets import SUPERVISOR
from .nets import NetworkBundle
from .numkit import Graph
from .numkit import Rng
from .numkit import Tensor
from .numkit import backward
from .optim import DEFAULT_BETA1
from .optim import DEFAULT_BETA2
from .optim import AdamState
from .optim import adam_step
from .pb.proto import CheckpointError
from .pb.proto import decode_checkpoint
from .pb.proto import encode_checkpoint


if typing.TYPE_CHECKING:
    from typing import Any  # noqa: F401
    from typing import Callable  # noqa: F401
    from typing import Dict  # noqa: F401
    from typing import List  # noqa: F401
    from typing import Optional  # noqa: F401
    from typing import Sequence  # noqa: F401
    from typing import Tuple  # noqa: F401

    from .data import ScalerParams  # noqa: F401


logger = logging.getLogger(__name__)

PHASE_NAMES = {
    1: "lossfn_autoencoder",
    2: "latent_autoencoder",
    3: "supervisor",
    4: "joint",
}

DEFAULT_SEED = 0
DEFAULT_BATCH_SIZE = 128
DEFAULT_PHASE_STEPS = 1000
DEFAULT_CHECK_INTERVAL = 500
DEFAULT_START_FRACTION = 0.5
DEFAULT_QUICK_STEPS = 200
DEFAULT_QUICK_BATCH_SIZE = 64
DEFAULT_EARLY_STOP_SAMPLES = 1000
DEFAULT_LOG_INTERVAL = 100
MAX_QUICK_STEPS = 200

LR_GROUPS = ("lossfn", "autoencoder", "supervisor", "generator", "discriminator")
DEFAULT_LEARNING_RATES = {group: 1e-3 for group in LR_GROUPS}

LOSS_TERMS = losses.GENERATOR_TERMS + losses.AUTOENCODER_TERMS

_GENERATION_CHUNK = 1024
# child key of the evaluation streams; network initializers use keys below it
_EVALUATION_STREAM = 1 << 20


class NonFiniteLossError(FloatingPointError):
    """Raised when a training step produces a NaN or infinite loss.

    Attributes:
        phase (int): the training phase, 1 to 4
        term (str): the loss term that went non-finite
        value (float): its value
    """

    def __init__(self, phase, term, value):
        # type: (int, str, float) -> None
        self.phase = phase
        self.term = term
        self.value = value
        super(NonFiniteLossError, self).__init__(
            "Non-finite %s loss (%r) in phase %d (%s)" % (term, value, phase, PHASE_NAMES.get(phase, "?"))
        )


class TrainConfig(object):
    """Hyperparameters of a training run.

    Step counts are minibatch iterations. ``noise_dim`` and ``latent_dim``
    default to ``max(1, F // 2)`` for F features. ``seq_len`` is checked
    against the data when set.
    """

    def __init__(
        self,
        seed=DEFAULT_SEED,
        seq_len=None,
        batch_size=DEFAULT_BATCH_SIZE,
        noise_dim=None,
        latent_dim=None,
        hidden_dim=DEFAULT_HIDDEN_DIM,
        num_layers=DEFAULT_NUM_LAYERS,
        code_stride=DEFAULT_TIME_STRIDE,
        phase1_steps=DEFAULT_PHASE_STEPS,
        phase2_steps=DEFAULT_PHASE_STEPS,
        phase3_steps=DEFAULT_PHASE_STEPS,
        phase4_steps=DEFAULT_PHASE_STEPS,
        learning_rates=None,
        beta1=DEFAULT_BETA1,
        beta2=DEFAULT_BETA2,
        loss_weights=None,
        use_supervised_loss=True,
        use_feature_discriminator=True,
        use_ts_loss=True,
        use_early_stopping=True,
        check_interval=DEFAULT_CHECK_INTERVAL,
        start_fraction=DEFAULT_START_FRACTION,
        quick_steps=DEFAULT_QUICK_STEPS,
        quick_batch_size=DEFAULT_QUICK_BATCH_SIZE,
        early_stop_samples=DEFAULT_EARLY_STOP_SAMPLES,
        disc_steps=1,
        log_interval=DEFAULT_LOG_INTERVAL,
    ):
        # type: (...) -> None
        self.seed = int(seed)
        self.seq_len = None if seq_len is None else int(seq_len)
        self.batch_size = int(batch_size)
        self.noise_dim = None if noise_dim is None else int(noise_dim)
        self.latent_dim = None if latent_dim is None else int(latent_dim)
        self.hidden_dim = int(hidden_dim)
        self.num_layers = int(num_layers)
        self.code_stride = int(code_stride)
        self.phase1_steps = int(phase1_steps)
        self.phase2_steps = int(phase2_steps)
        self.phase3_steps = int(phase3_steps)
        self.phase4_steps = int(phase4_steps)
        self.learning_rates = dict(DEFAULT_LEARNING_RATES)
        self.learning_rates.update(learning_rates or {})
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.loss_weights = {term: 1.0 for term in LOSS_TERMS}
        self.loss_weights.update(loss_weights or {})
        self.use_supervised_loss = bool(use_supervised_loss)
        self.use_feature_discriminator = bool(use_feature_discriminator)
        self.use_ts_loss = bool(use_ts_loss)
        self.use_early_stopping = bool(use_early_stopping)
        self.check_interval = int(check_interval)
        self.start_fraction = float(start_fraction)
        self.quick_steps = int(quick_steps)
        self.quick_batch_size = int(quick_batch_size)
        self.early_stop_samples = int(early_stop_samples)
        self.disc_steps = int(disc_steps)
        self.log_interval = int(log_interval)
        self.validate()

    def __repr__(self):
        # type: () -> str
        return "TrainConfig(%s)" % ", ".join("%s=%r" % item for item in sorted(self.to_dict().items()))

    def __eq__(self, other):
        # type: (Any) -> bool
        return isinstance(other, TrainConfig) and self.to_dict() == other.to_dict()

    def __ne__(self, other):
        # type: (Any) -> bool
        return not self == other

    def validate(self):
        # type: () -> None
        positive = [
            "batch_size",
            "hidden_dim",
            "num_layers",
            "code_stride",
            "check_interval",
            "quick_batch_size",
            "early_stop_samples",
            "disc_steps",
            "log_interval",
        ]
        counts = ["phase1_steps", "phase2_steps", "phase3_steps", "phase4_steps", "quick_steps"]
        for field in positive:
            if getattr(self, field) < 1:
                raise ValueError("%s must be positive, got %r" % (field, getattr(self, field)))
        for field in counts:
            if getattr(self, field) < 0:
                raise ValueError("%s must be non-negative, got %r" % (field, getattr(self, field)))
        for field in ("seq_len", "noise_dim", "latent_dim"):
            value = getattr(self, field)
            if value is not None and value < 1:
                raise ValueError("%s must be positive, got %r" % (field, value))
        if self.quick_steps > MAX_QUICK_STEPS:
            raise ValueError("quick_steps must be at most %d, got %r" % (MAX_QUICK_STEPS, self.quick_steps))
        if not 0.0 < self.start_fraction <= 1.0:
            raise ValueError("start_fraction must lie in (0, 1], got %r" % self.start_fraction)
        unknown = set(self.learning_rates) - set(LR_GROUPS)
        if unknown:
            raise ValueError("Unknown learning rate groups %r" % sorted(unknown))
        for group, lr in self.learning_rates.items():
            if not lr >= 0.0:
                raise ValueError("Learning rate of %r must be non-negative, got %r" % (group, lr))
        unknown = set(self.loss_weights) - set(LOSS_TERMS)
        if unknown:
            raise ValueError("Unknown loss terms %r" % sorted(unknown))
        for term, weight in self.loss_weights.items():
            if not weight >= 0.0:
                raise ValueError("Weight of %r must be non-negative, got %r" % (term, weight))
        # AdamState checks the betas
        AdamState(beta1=self.beta1, beta2=self.beta2)

    def steps(self, phase):
        # type: (int) -> int
        return getattr(self, "phase%d_steps" % phase)

    def to_dict(self):
        # type: () -> Dict[str, Any]
        return {
            "seed": self.seed,
            "seq_len": self.seq_len,
            "batch_size": self.batch_size,
            "noise_dim": self.noise_dim,
            "latent_dim": self.latent_dim,
            "hidden_dim": self.hidden_dim,
            "num_layers": self.num_layers,
            "code_stride": self.code_stride,
            "phase1_steps": self.phase1_steps,
            "phase2_steps": self.phase2_steps,
            "phase3_steps": self.phase3_steps,
            "phase4_steps": self.phase4_steps,
            "learning_rates": dict(self.learning_rates),
            "beta1": self.beta1,
            "beta2": self.beta2,
            "loss_weights": dict(self.loss_weights),
            "use_supervised_loss": self.use_supervised_loss,
            "use_feature_discriminator": self.use_feature_discriminator,
            "use_ts_loss": self.use_ts_loss,
            "use_early_stopping": self.use_early_stopping,
            "check_interval": self.check_interval,
            "start_fraction": self.start_fraction,
            "quick_steps": self.quick_steps,
            "quick_batch_size": self.quick_batch_size,
            "early_stop_samples": self.early_stop_samples,
            "disc_steps": self.disc_steps,
            "log_interval": self.log_interval,
        }

    @classmethod
    def from_dict(cls, values):
        # type: (Dict[str, Any]) -> TrainConfig
        unknown = set(values) - set(cls().to_dict())
        if unknown:
            raise ValueError("Unknown training settings %r" % sorted(unknown))
        return cls(**values)

    def quick_budget(self):
        # type: () -> ScorerBudget
        """The reduced scorer budget of early-stop evaluations."""
        return ScorerBudget(steps=self.quick_steps, batch_size=self.quick_batch_size, num_layers=1)


class EarlyStopState(object):
    """Bookkeeping of the periodic model selection of phase 4.

    score = disScore + p1 * (mseMean + mseSTD), where p1 is fixed at the first
    evaluation so that both parts weigh the same there. A model is saved when
    its score is at most the best score so far.
    """

    def __init__(self):
        # type: () -> None
        self.p1 = None  # type: Optional[float]
        self.total_error = None  # type: Optional[float]
        self.best_epoch = None  # type: Optional[int]
        self.best_synthetic = None  # type: Optional[SeriesBatch]
        self.best_snapshot = None  # type: Optional[Dict[str, np.ndarray]]
        self.log = []  # type: List[Dict[str, Any]]
        self.warnings = []  # type: List[str]

    def __repr__(self):
        # type: () -> str
        return "EarlyStopState(p1=%r, total_error=%r, best_epoch=%r, evaluations=%d)" % (
            self.p1,
            self.total_error,
            self.best_epoch,
            len(self.log),
        )

    def record(self, epoch, dis_score, mse_mean, mse_std, synthetic=None, snapshot=None):
        # type: (int, float, float, float, Optional[SeriesBatch], Optional[Dict[str, np.ndarray]]) -> Dict[str, Any]
        """Score one evaluation, save it if it is the best so far and return
        its log record."""
        mse = mse_mean + mse_std
        if self.p1 is None:
            if mse == 0.0:
                message = "epoch %d: mseMean + mseSTD is 0, p1 set to 0" % epoch
                logger.warning(message)
                self.warnings.append(message)
                self.p1 = 0.0
            else:
                self.p1 = dis_score / mse

        score = dis_score + self.p1 * mse
        saved = self.total_error is None or score <= self.total_error
        if saved:
            self.total_error = score
            self.best_epoch = epoch
            self.best_synthetic = synthetic
            self.best_snapshot = snapshot

        entry = {
            "epoch": int(epoch),
            "disScore": float(dis_score),
            "mseMean": float(mse_mean),
            "mseSTD": float(mse_std),
            "p1": float(self.p1),
            "score": float(score),
            "saved": bool(saved),
        }
        self.log.append(entry)
        logger.info(
            "early stop evaluation epoch=%d disScore=%.6f mseMean=%.6f mseSTD=%.6f score=%.6f saved=%s",
            epoch,
            dis_score,
            mse_mean,
            mse_std,
            score,
            saved,
        )
        return entry

    def write_log(self, path):
        # type: (str) -> None
        """Write the evaluation log as JSON lines with sorted keys."""
        with open(path, "w") as fp:
            for entry in self.log:
                fp.write(json.dumps(entry, sort_keys=True) + "\n")


def code_moment_errors(real_codes, synthetic_codes):
    # type: (np.ndarray, np.ndarray) -> Tuple[float, float]
    """Return (mseMean, mseSTD) between the per-position batch moments of two
    code batches; mseSTD is the square root of the variance MSE."""
    mse_mean = float(np.mean((real_codes.mean(axis=0) - synthetic_codes.mean(axis=0)) ** 2))
    mse_var = float(np.mean((real_codes.var(axis=0) - synthetic_codes.var(axis=0)) ** 2))
    return mse_mean, math.sqrt(mse_var)


def early_stop_evaluate(epoch, real, synthetic, lossfn_encoder, state, config, snapshot=None):
    # type: (int, SeriesBatch, SeriesBatch, Any, EarlyStopState, TrainConfig, Optional[Dict[str, np.ndarray]]) -> EarlyStopState
    """Evaluate the current model and update ``state``.

    The discriminative part is a quick classifier with a fixed internal seed;
    the moment part compares loss-function encoder codes of both batches.
    """
    dis_score = discriminative_score(real, synthetic, config.quick_budget(), Rng(config.seed))
    real_codes = lossfn_encoder(Tensor(real.values)).numpy()
    synthetic_codes = lossfn_encoder(Tensor(synthetic.values)).numpy()
    mse_mean, mse_std = code_moment_errors(real_codes, synthetic_codes)
    state.record(epoch, dis_score, mse_mean, mse_std, synthetic=synthetic, snapshot=snapshot)
    return state


class Checkpoint(object):
    """Everything needed to restore a trained model.

    Args:
        params (dict): "role/name" -> array
        config (TrainConfig): the run's configuration
        scaler (ScalerParams): the fitted scaler, if any
        feature_dim (int): number of features F
        phase (int): number of completed phases
        epoch (int): phase-4 epoch of the stored parameters
        rng_state (dict): state of the trainer's random stream
    """

    def __init__(self, params, config, scaler, feature_dim, phase, epoch, rng_state):
        # type: (Dict[str, np.ndarray], TrainConfig, Optional[ScalerParams], int, int, int, Dict[str, Any]) -> None
        self.params = params
        self.config = config
        self.scaler = scaler
        self.feature_dim = int(feature_dim)
        self.phase = int(phase)
        self.epoch = int(epoch)
        self.rng_state = rng_state

    def __repr__(self):
        # type: () -> str
        return "Checkpoint(feature_dim=%r, phase=%r, epoch=%r, params=%d)" % (
            self.feature_dim,
            self.phase,
            self.epoch,
            len(self.params),
        )


def save_checkpoint(checkpoint, path):
    # type: (Checkpoint, str) -> None
    with open(path, "wb") as fp:
        fp.write(encode_checkpoint(checkpoint))


def load_checkpoint(path):
    # type: (str) -> Checkpoint
    """Read a checkpoint; raises CheckpointError on a damaged file."""
    with open(path, "rb") as fp:
        return decode_checkpoint(fp.read())


class SeriesGAN(object):
    """Trainer and sampler of the generator framework.

    Args:
        config (TrainConfig): hyperparameters
        n_features (int): number of features F of the data
    """

    def __init__(self, config, n_features):
        # type: (TrainConfig, int) -> None
        config.validate()
        self.config = config
        self.rng = Rng(config.seed)
        specs = NetworkBundle.specs(
            n_features,
            latent_dim=config.latent_dim,
            noise_dim=config.noise_dim,
            hidden_dim=config.hidden_dim,
            num_layers=config.num_layers,
            time_stride=config.code_stride,
        )
        self.networks = NetworkBundle.create(specs, self.rng)
        lr = config.learning_rates
        self.optimizers = {
            "lossfn": AdamState(lr["lossfn"], config.beta1, config.beta2),
            "autoencoder": AdamState(lr["autoencoder"], config.beta1, config.beta2),
            "supervisor": AdamState(lr["supervisor"], config.beta1, config.beta2),
            "generator": AdamState(lr["generator"], config.beta1, config.beta2),
            FEATURE_DISCRIMINATOR: AdamState(lr["discriminator"], config.beta1, config.beta2),
            LATENT_DISCRIMINATOR: AdamState(lr["discriminator"], config.beta1, config.beta2),
        }
        self.scaler = None  # type: Optional[ScalerParams]
        self.phase = 0
        self.epoch = 0
        self.traces = {}  # type: Dict[str, List[float]]
        self.early_stop = EarlyStopState()
        self.best_synthetic = None  # type: Optional[SeriesBatch]

    def __repr__(self):
        # type: () -> str
        return "SeriesGAN(n_features=%r, phase=%r, epoch=%r)" % (self.networks.n_features, self.phase, self.epoch)

    @property
    def n_features(self):
        # type: () -> int
        return self.networks.n_features

    # helpers

    def _check_data(self, data):
        # type: (SeriesBatch) -> np.ndarray
        if not data.scaled:
            raise ValueError("Training requires a scaled batch")
        if data.n_features != self.n_features:
            raise ValueError("Model has %d features, batch has %d" % (self.n_features, data.n_features))
        if self.config.seq_len is None:
            self.config.seq_len = data.seq_len
        elif data.seq_len != self.config.seq_len:
            raise ValueError("Configured seq_len %r, batch has %r" % (self.config.seq_len, data.seq_len))
        return data.values

    def _require_phase(self, phase):
        # type: (int) -> None
        if self.phase != phase - 1:
            raise RuntimeError(
                "Phase %d (%s) requires exactly %d completed phases, got %d"
                % (phase, PHASE_NAMES[phase], phase - 1, self.phase)
            )

    def _minibatch(self, values):
        # type: (np.ndarray) -> np.ndarray
        order = self.rng.permutation(values.shape[0])
        return values[order[: self.config.batch_size]]

    def _noise(self, n, steps):
        # type: (int, int) -> np.ndarray
        return sample_noise(n, steps, self.networks.noise_dim, self.rng)

    def _step(self, phase, group, roles, objective):
        # type: (int, str, Sequence[str], Callable[[Dict[str, Dict[str, Tensor]]], Tuple[Tensor, Dict[str, Any]]]) -> float
        """One Adam step on the parameters of ``roles`` minimizing ``objective``."""
        params = {}
        for role in roles:
            for name, value in self.networks[role].params.items():
                params["%s/%s" % (role, name)] = value
        with Graph() as graph:
            weights = {role: graph.leaves(self.networks[role].params, role + "/") for role in roles}
            loss, parts = objective(weights)
            grads = graph.named(backward(graph, loss))

        value = loss.item()
        if not math.isfinite(value):
            term = "total"
            for name, part in sorted(parts.items()):
                part_value = part.item() if isinstance(part, Tensor) else float(part)
                if not math.isfinite(part_value):
                    term = name
                    value = part_value
                    break
            raise NonFiniteLossError(phase, term, value)
        adam_step(params, grads, self.optimizers[group])
        return value

    def _trace(self, name, value, step, total):
        # type: (str, float, int, int) -> None
        self.traces.setdefault(name, []).append(value)
        if step % self.config.log_interval == 0 or step == total:
            logger.debug("%s step %d/%d loss=%.6f", name, step, total, value)

    def _autoencoder_step(self, phase, x):
        # type: (int, np.ndarray) -> float
        weights = dict(self.config.loss_weights)
        if not self.config.use_feature_discriminator:
            weights[losses.JOINT_ADVERSARIAL] = 0.0
        e, r, d = self.networks[LATENT_ENCODER], self.networks[LATENT_DECODER], self.networks[FEATURE_DISCRIMINATOR]
        recorded = {}  # type: Dict[str, float]

        def objective(w):
            x_ae = r(e(x, w[LATENT_ENCODER]), w[LATENT_DECODER])
            l_r = losses.reconstruction_loss(x, x_ae)
            l_adv = losses.lsgan_generator_loss(d(x_ae)) if weights[losses.JOINT_ADVERSARIAL] else Tensor(0.0)
            recorded[losses.RECONSTRUCTION] = l_r.item()
            parts = {losses.RECONSTRUCTION: l_r, losses.JOINT_ADVERSARIAL: l_adv}
            return losses.autoencoder_total_loss(l_r, l_adv, weights), parts

        self._step(phase, "autoencoder", (LATENT_ENCODER, LATENT_DECODER), objective)
        return recorded[losses.RECONSTRUCTION]

    # phases

    def phase1_train_lossfn_autoencoder(self, data):
        # type: (SeriesBatch) -> List[float]
        """Train ê and r̂ on the reconstruction loss; returns the loss trace."""
        self._require_phase(1)
        values = self._check_data(data)
        steps = self.config.phase1_steps
        logger.info("phase 1 (%s): %d steps", PHASE_NAMES[1], steps)
        encoder, decoder = self.networks[LOSSFN_ENCODER], self.networks[LOSSFN_DECODER]

        def objective(w):
            x_ae = decoder(encoder(x, w[LOSSFN_ENCODER]), w[LOSSFN_DECODER])
            l_r = losses.reconstruction_loss(x, x_ae)
            return l_r, {losses.RECONSTRUCTION: l_r}

        trace = self.traces.setdefault("phase1", [])
        for step in range(1, steps + 1):
            x = self._minibatch(values)
            value = self._step(1, "lossfn", (LOSSFN_ENCODER, LOSSFN_DECODER), objective)
            self._trace("phase1", value, step, steps)
        self.phase = 1
        logger.info("phase 1 done, final loss %r", trace[-1] if trace else None)
        return list(trace)

    def phase2_train_latent_autoencoder(self, data):
        # type: (SeriesBatch) -> List[float]
        """Alternate feature-discriminator and latent-autoencoder steps;
        returns the reconstruction loss trace."""
        self._require_phase(2)
        values = self._check_data(data)
        steps = self.config.phase2_steps
        logger.info("phase 2 (%s): %d steps", PHASE_NAMES[2], steps)
        e, r = self.networks[LATENT_ENCODER], self.networks[LATENT_DECODER]
        d = self.networks[FEATURE_DISCRIMINATOR]

        trace = self.traces.setdefault("phase2", [])
        for step in range(1, steps + 1):
            x = self._minibatch(values)
            if self.config.use_feature_discriminator:
                x_ae = r(e(x))
                for _ in range(self.config.disc_steps):
                    value = self._step(
                        2,
                        FEATURE_DISCRIMINATOR,
                        (FEATURE_DISCRIMINATOR,),
                        lambda w: _discriminator_objective(d, w[FEATURE_DISCRIMINATOR], [x], [x_ae]),
                    )
                self.traces.setdefault("phase2_discriminator", []).append(value)
            self._trace("phase2", self._autoencoder_step(2, x), step, steps)
        self.phase = 2
        logger.info("phase 2 done, final reconstruction loss %r", trace[-1] if trace else None)
        return list(trace)

    def phase3_train_supervisor(self, data):
        # type: (SeriesBatch) -> List[float]
        """Train s to predict real embeddings two steps ahead; e stays fixed."""
        self._require_phase(3)
        values = self._check_data(data)
        if values.shape[1] < 3:
            raise ValueError("The supervisor needs sequences of at least 3 steps, got %d" % values.shape[1])
        steps = self.config.phase3_steps
        logger.info("phase 3 (%s): %d steps", PHASE_NAMES[3], steps)
        e, s = self.networks[LATENT_ENCODER], self.networks[SUPERVISOR]

        def objective(w):
            l_s = losses.supervised_loss(h_ae, s(h_ae, w[SUPERVISOR]))
            return l_s, {losses.SUPERVISED: l_s}

        trace = self.traces.setdefault("phase3", [])
        for step in range(1, steps + 1):
            h_ae = e(self._minibatch(values))
            self._trace("phase3", self._step(3, "supervisor", (SUPERVISOR,), objective), step, steps)
        self.phase = 3
        logger.info("phase 3 done, final supervised loss %r", trace[-1] if trace else None)
        return list(trace)

    def phase4_joint_train(self, data):
        # type: (SeriesBatch) -> Checkpoint
        """Joint adversarial training with periodic model selection.

        Returns the checkpoint of the kept model: the best evaluated one when
        early stopping is enabled and at least one evaluation ran, else the
        final-epoch state.
        """
        self._require_phase(4)
        values = self._check_data(data)
        cfg = self.config
        steps = cfg.phase4_steps
        start_epoch = int(math.floor(cfg.start_fraction * steps))
        logger.info(
            "phase 4 (%s): %d steps, early stopping %s from epoch %d every %d",
            PHASE_NAMES[4],
            steps,
            "on" if cfg.use_early_stopping else "off",
            start_epoch,
            cfg.check_interval,
        )
        weights = self._generator_weights()
        nets = self.networks
        e, r = nets[LATENT_ENCODER], nets[LATENT_DECODER]
        g, s = nets[GENERATOR], nets[SUPERVISOR]
        d_feature, d_latent = nets[FEATURE_DISCRIMINATOR], nets[LATENT_DISCRIMINATOR]
        lossfn_encoder = nets[LOSSFN_ENCODER]
        self.early_stop = EarlyStopState()

        trace = self.traces.setdefault("phase4", [])
        for epoch in range(1, steps + 1):
            x = self._minibatch(values)
            z = self._noise(x.shape[0], x.shape[1])

            for _ in range(cfg.disc_steps):
                h_ae = e(x)
                h_g = g(z)
                h_s = s(h_g)
                if cfg.use_feature_discriminator:
                    real = [x, r(h_ae)]
                    fake = [r(h_g), r(h_s)]
                    self._step(
                        4,
                        FEATURE_DISCRIMINATOR,
                        (FEATURE_DISCRIMINATOR,),
                        lambda w: _discriminator_objective(d_feature, w[FEATURE_DISCRIMINATOR], real, fake),
                    )
                self._step(
                    4,
                    LATENT_DISCRIMINATOR,
                    (LATENT_DISCRIMINATOR,),
                    lambda w: _discriminator_objective(d_latent, w[LATENT_DISCRIMINATOR], [h_ae], [h_g, h_s]),
                )

            def generator_objective(w):
                h_g = g(z, w[GENERATOR])
                h_s = s(h_g, w[SUPERVISOR])
                x_tilde = r(h_s)
                parts = {
                    losses.LATENT_ADVERSARIAL: losses.lsgan_generator_loss([d_latent(h_g), d_latent(h_s)]),
                    losses.MOMENT: losses.moment_loss(x, x_tilde),
                }  # type: Dict[str, Any]
                if weights[losses.FEATURE_ADVERSARIAL]:
                    parts[losses.FEATURE_ADVERSARIAL] = losses.lsgan_generator_loss(
                        [d_feature(r(h_g)), d_feature(x_tilde)]
                    )
                if weights[losses.SUPERVISED]:
                    parts[losses.SUPERVISED] = losses.supervised_loss(h_g, h_s)
                if weights[losses.TS_FEATURE]:
                    parts[losses.TS_FEATURE] = losses.ts_feature_loss(lossfn_encoder(x), lossfn_encoder(x_tilde))
                components = {term: parts.get(term, 0.0) for term in losses.GENERATOR_TERMS}
                return losses.generator_total_loss(components, weights), parts

            value = self._step(4, "generator", (GENERATOR, SUPERVISOR), generator_objective)
            self._autoencoder_step(4, x)
            self.epoch = epoch
            self._trace("phase4", value, epoch, steps)

            if cfg.use_early_stopping and epoch >= start_epoch and epoch % cfg.check_interval == 0:
                real_eval, synthetic_eval = self._evaluation_sets(values, epoch)
                early_stop_evaluate(
                    epoch,
                    real_eval,
                    synthetic_eval,
                    lossfn_encoder,
                    self.early_stop,
                    cfg,
                    snapshot=nets.snapshot(),
                )

        self.phase = 4
        if cfg.use_early_stopping and self.early_stop.best_snapshot is not None:
            nets.load_arrays(self.early_stop.best_snapshot)
            self.epoch = self.early_stop.best_epoch or self.epoch
            self.best_synthetic = self.early_stop.best_synthetic
            logger.info(
                "phase 4 done, kept epoch %r with score %r", self.early_stop.best_epoch, self.early_stop.total_error
            )
        else:
            self.best_synthetic = self.generate(
                min(values.shape[0], cfg.early_stop_samples), rng=self._evaluation_rng(self.epoch), unscale=False
            )
            logger.info("phase 4 done, kept the final epoch, final generator loss %r", trace[-1] if trace else None)
        return self.to_checkpoint()

    def _generator_weights(self):
        # type: () -> Dict[str, float]
        weights = dict(self.config.loss_weights)
        if not self.config.use_supervised_loss:
            weights[losses.SUPERVISED] = 0.0
        if not self.config.use_feature_discriminator:
            weights[losses.FEATURE_ADVERSARIAL] = 0.0
        if not self.config.use_ts_loss:
            weights[losses.TS_FEATURE] = 0.0
        return weights

    def _evaluation_rng(self, epoch):
        # type: (int) -> Rng
        """A stream for evaluation draws that leaves the training stream untouched."""
        return self.rng.child(_EVALUATION_STREAM + epoch)

    def _evaluation_sets(self, values, epoch):
        # type: (np.ndarray, int) -> Tuple[SeriesBatch, SeriesBatch]
        rng = self._evaluation_rng(epoch)
        n = min(values.shape[0], self.config.early_stop_samples)
        real = SeriesBatch(values[rng.permutation(values.shape[0])[:n]], scaled=True)
        return real, self.generate(n, rng=rng, unscale=False)

    # sampling and persistence

    def generate(self, count, rng=None, unscale=True):
        # type: (int, Optional[Rng], bool) -> SeriesBatch
        """Draw ``count`` samples through generator, supervisor and decoder.

        With ``unscale`` and a fitted scaler, values are mapped back to the
        original feature ranges.
        """
        if count < 1:
            raise ValueError("count must be positive, got %r" % count)
        if self.config.seq_len is None:
            raise ValueError("The model's seq_len is unknown, fit it first")
        rng = rng if rng is not None else self.rng
        g, s, r = self.networks[GENERATOR], self.networks[SUPERVISOR], self.networks[LATENT_DECODER]
        chunks = []
        for start in range(0, count, _GENERATION_CHUNK):
            n = min(_GENERATION_CHUNK, count - start)
            z = sample_noise(n, self.config.seq_len, self.networks.noise_dim, rng)
            chunks.append(r(s(g(z))).numpy())
        batch = SeriesBatch(np.clip(np.concatenate(chunks), 0.0, 1.0), scaled=True)
        if unscale and self.scaler is not None:
            return scaler_invert(batch, self.scaler)
        return batch

    def fit(self, batch):
        # type: (SeriesBatch) -> Checkpoint
        """Scale ``batch`` (unless already scaled) and run the four phases."""
        if batch.scaled:
            data = batch
        else:
            self.scaler = scaler_fit(batch)
            data = scaler_apply(batch, self.scaler)
        self.phase1_train_lossfn_autoencoder(data)
        self.phase2_train_latent_autoencoder(data)
        self.phase3_train_supervisor(data)
        return self.phase4_joint_train(data)

    def to_checkpoint(self):
        # type: () -> Checkpoint
        return Checkpoint(
            params=self.networks.snapshot(),
            config=self.config,
            scaler=self.scaler,
            feature_dim=self.n_features,
            phase=self.phase,
            epoch=self.epoch,
            rng_state=self.rng.state,
        )

    @classmethod
    def from_checkpoint(cls, checkpoint):
        # type: (Checkpoint) -> SeriesGAN
        model = cls(checkpoint.config, checkpoint.feature_dim)
        try:
            model.networks.load_arrays(checkpoint.params)
        except ValueError as e:
            raise CheckpointError("Checkpoint parameters do not fit the configured networks: %s" % e)
        model.scaler = checkpoint.scaler
        model.phase = checkpoint.phase
        model.epoch = checkpoint.epoch
        model.rng.state = checkpoint.rng_state
        return model


def _discriminator_objective(network, weights, real, fake):
    # type: (Any, Dict[str, Tensor], List[Any], List[Any]) -> Tuple[Tensor, Dict[str, Any]]
    loss = losses.lsgan_discriminator_loss(
        [network(sample, weights) for sample in real],
        [network(sample, weights) for sample in fake],
    )
    return loss, {network.spec.role: loss}
