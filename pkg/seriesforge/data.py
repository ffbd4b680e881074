# Unless explicitly stated otherwise all files in this repository are licensed
# under the Apache License 2.0.

"""Dataset construction and ingestion.

Series batches are (N samples, T timestamps, F features) float64 arrays. On
disk they use a long CSV layout with one row per (sample, timestamp):

    sample_id,t,f1,...,fF

rows ordered sample-major then time-ascending.
"""
import logging
import math
import typing

import numpy as np
import pandas as pd

from .numkit import Rng


if typing.TYPE_CHECKING:
    from typing import Any  # noqa: F401
    from typing import Dict  # noqa: F401
    from typing import List  # noqa: F401
    from typing import Optional  # noqa: F401
    from typing import Sequence  # noqa: F401
    from typing import Tuple  # noqa: F401


logger = logging.getLogger(__name__)

SAMPLE_COLUMN = "sample_id"
TIME_COLUMN = "t"

DEFAULT_SINE_DIMS = 5
DEFAULT_SEQ_LEN = 24
DEFAULT_SINE_SAMPLES = 10000
DEFAULT_FREQUENCY_RANGE = (0.0, 1.0)
DEFAULT_PHASE_RANGE = (-math.pi, math.pi)


class SeriesBatch(object):
    """A batch of equal-length multivariate sequences.

    Args:
        values (array-like): (N, T, F) values
        scaled (bool): whether the values were min-max scaled into [0, 1]
    """

    def __init__(self, values, scaled=False):
        # type: (Any, bool) -> None
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 3 or min(values.shape) < 1:
            raise ValueError("A series batch must have shape (N, T, F) with N, T, F >= 1, got %r" % (values.shape,))
        if scaled and (np.any(values < 0.0) or np.any(values > 1.0)):
            raise ValueError("Scaled batch has values outside [0, 1]")
        self.values = values
        self.scaled = scaled

    def __repr__(self):
        # type: () -> str
        return "SeriesBatch(shape=%r, scaled=%r)" % (self.values.shape, self.scaled)

    def __len__(self):
        # type: () -> int
        return self.values.shape[0]

    def __getitem__(self, index):
        # type: (Any) -> SeriesBatch
        values = self.values[index]
        if values.ndim == 2:
            values = values[np.newaxis]
        return SeriesBatch(values, scaled=self.scaled)

    @property
    def shape(self):
        # type: () -> Tuple[int, int, int]
        return self.values.shape  # type: ignore[return-value]

    @property
    def n_samples(self):
        # type: () -> int
        return self.values.shape[0]

    @property
    def seq_len(self):
        # type: () -> int
        return self.values.shape[1]

    @property
    def n_features(self):
        # type: () -> int
        return self.values.shape[2]


class SineConfig(object):
    """Parameters of the multivariate sines dataset.

    Each (sample, dimension) pair draws its own frequency and phase.
    """

    def __init__(
        self,
        n_samples=DEFAULT_SINE_SAMPLES,
        seq_len=DEFAULT_SEQ_LEN,
        dims=DEFAULT_SINE_DIMS,
        frequency_range=DEFAULT_FREQUENCY_RANGE,
        phase_range=DEFAULT_PHASE_RANGE,
        seed=0,
    ):
        # type: (int, int, int, Sequence[float], Sequence[float], int) -> None
        self.n_samples = int(n_samples)
        self.seq_len = int(seq_len)
        self.dims = int(dims)
        self.frequency_range = tuple(float(v) for v in frequency_range)
        self.phase_range = tuple(float(v) for v in phase_range)
        self.seed = int(seed)
        self.validate()

    def validate(self):
        # type: () -> None
        for field in ("n_samples", "seq_len", "dims"):
            if getattr(self, field) < 1:
                raise ValueError("%s must be positive, got %r" % (field, getattr(self, field)))
        for field in ("frequency_range", "phase_range"):
            bounds = getattr(self, field)
            if len(bounds) != 2 or bounds[0] > bounds[1]:
                raise ValueError("%s must be an increasing (min, max) pair, got %r" % (field, bounds))

    def to_dict(self):
        # type: () -> Dict[str, Any]
        return {
            "n_samples": self.n_samples,
            "seq_len": self.seq_len,
            "dims": self.dims,
            "frequency_range": list(self.frequency_range),
            "phase_range": list(self.phase_range),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, values):
        # type: (Dict[str, Any]) -> SineConfig
        unknown = set(values) - set(cls().to_dict())
        if unknown:
            raise ValueError("Unknown sines settings %r" % sorted(unknown))
        return cls(**values)


def sine_trace(frequency, phase, seq_len):
    # type: (float, float, int) -> np.ndarray
    t = np.arange(seq_len, dtype=np.float64)
    return np.sin(2.0 * np.pi * frequency * t + phase)


def generate_sines(config):
    # type: (SineConfig) -> SeriesBatch
    """x_i(t) = sin(2 pi eta t + theta) at t = 0..T-1, with eta and theta drawn
    per sample and per dimension."""
    config.validate()
    rng = Rng(config.seed)
    shape = (config.n_samples, config.dims)
    frequency = rng.uniform(config.frequency_range[0], config.frequency_range[1], shape)
    phase = rng.uniform(config.phase_range[0], config.phase_range[1], shape)
    t = np.arange(config.seq_len, dtype=np.float64)
    values = np.sin(
        2.0 * np.pi * frequency[:, np.newaxis, :] * t[np.newaxis, :, np.newaxis]
        + phase[:, np.newaxis, :]
    )
    return SeriesBatch(values)


def load_csv(path):
    # type: (str) -> SeriesBatch
    """Read a long-format CSV file into a batch.

    Samples are ordered by first appearance of their sample_id; every sample
    must cover t = 0..T-1 contiguously with the same T.
    """
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    columns = [str(c).strip() for c in frame.columns]
    if len(columns) < 3 or columns[0] != SAMPLE_COLUMN or columns[1] != TIME_COLUMN:
        raise ValueError(
            "%s: expected a header 'sample_id,t,f1,...', got %r" % (path, ",".join(columns))
        )
    frame.columns = columns
    if frame.empty:
        raise ValueError("%s: no data rows" % path)

    numeric = {}
    for column in columns[1:]:
        text = frame[column].str.strip()
        parsed = pd.to_numeric(text, errors="coerce")
        bad = np.flatnonzero(parsed.isna().to_numpy())
        if bad.size:
            row = int(bad[0])
            raise ValueError(
                "%s: row %d: non-numeric value %r in column %r"
                % (path, row + 2, frame[column].iloc[row], column)
            )
        # exact decimal conversion, so exported files read back bit for bit
        numeric[column] = text.to_numpy(dtype=object).astype(np.float64)

    sample_ids = frame[SAMPLE_COLUMN].str.strip().to_numpy()
    order = pd.unique(sample_ids)
    times = numeric[TIME_COLUMN]
    features = np.column_stack([numeric[c] for c in columns[2:]])

    samples = []  # type: List[np.ndarray]
    seq_len = None  # type: Optional[int]
    for sample_id in order:
        rows = np.flatnonzero(sample_ids == sample_id)
        expected = np.arange(rows.size, dtype=np.float64)
        if not np.array_equal(times[rows], expected) or np.any(np.diff(rows) != 1):
            raise ValueError(
                "%s: sample %r does not cover t = 0..%d contiguously" % (path, sample_id, rows.size - 1)
            )
        if seq_len is None:
            seq_len = rows.size
        elif rows.size != seq_len:
            raise ValueError(
                "%s: ragged sample %r has %d timestamps, expected %d"
                % (path, sample_id, rows.size, seq_len)
            )
        samples.append(features[rows])

    logger.debug("loaded %d samples of length %r from %s", len(samples), seq_len, path)
    return SeriesBatch(np.stack(samples))


def export_csv(batch, path):
    # type: (SeriesBatch, str) -> None
    """Write ``batch`` in the long CSV layout, sample ids 0..N-1."""
    n, steps, features = batch.shape
    frame = pd.DataFrame(batch.values.reshape(n * steps, features), columns=["f%d" % (i + 1) for i in range(features)])
    frame.insert(0, TIME_COLUMN, np.tile(np.arange(steps), n))
    frame.insert(0, SAMPLE_COLUMN, np.repeat(np.arange(n), steps))
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


class ScalerParams(object):
    """Per-feature minimum and maximum observed on the training set."""

    def __init__(self, minimum, maximum):
        # type: (Any, Any) -> None
        self.min = np.asarray(minimum, dtype=np.float64)
        self.max = np.asarray(maximum, dtype=np.float64)
        if self.min.shape != self.max.shape or self.min.ndim != 1:
            raise ValueError("Scaler bounds must be two vectors of equal length")
        if np.any(self.max < self.min):
            raise ValueError("Scaler max must be >= min")

    def __repr__(self):
        # type: () -> str
        return "ScalerParams(min=%r, max=%r)" % (self.min.tolist(), self.max.tolist())

    @property
    def degenerate(self):
        # type: () -> np.ndarray
        return self.max == self.min


def scaler_fit(batch):
    # type: (SeriesBatch) -> ScalerParams
    values = batch.values.reshape(-1, batch.n_features)
    return ScalerParams(values.min(axis=0), values.max(axis=0))


def scaler_apply(batch, params, clip=True):
    # type: (SeriesBatch, ScalerParams, bool) -> SeriesBatch
    """Map every feature affinely onto [0, 1].

    With ``clip``, values outside the fitted range are clipped and constant
    features map to 0.5. Without it, out-of-range values keep their distance
    from the range, and the result is flagged as scaled only when every value
    lands in [0, 1].
    """
    if batch.scaled:
        raise ValueError("Batch is already scaled")
    if batch.n_features != params.min.size:
        raise ValueError(
            "Scaler fitted on %d features, batch has %d" % (params.min.size, batch.n_features)
        )
    span = np.where(params.degenerate, 1.0, params.max - params.min)
    scaled = (batch.values - params.min) / span
    if clip:
        return SeriesBatch(np.where(params.degenerate, 0.5, np.clip(scaled, 0.0, 1.0)), scaled=True)
    scaled = np.where(params.degenerate, scaled + 0.5, scaled)
    return SeriesBatch(scaled, scaled=bool(np.all((scaled >= 0.0) & (scaled <= 1.0))))


def scaler_invert(batch, params):
    # type: (SeriesBatch, ScalerParams) -> SeriesBatch
    if not batch.scaled:
        raise ValueError("scaler_invert requires a scaled batch")
    if batch.n_features != params.min.size:
        raise ValueError(
            "Scaler fitted on %d features, batch has %d" % (params.min.size, batch.n_features)
        )
    values = batch.values * (params.max - params.min) + params.min
    return SeriesBatch(values)


def window(series, seq_len, stride=1):
    # type: (Any, int, int) -> SeriesBatch
    """Cut an (L, F) series into N = (L - T) // stride + 1 contiguous windows."""
    series = np.asarray(series, dtype=np.float64)
    if series.ndim == 1:
        series = series[:, np.newaxis]
    if series.ndim != 2:
        raise ValueError("window expects an (L, F) series, got shape %r" % (series.shape,))
    if stride < 1:
        raise ValueError("stride must be positive, got %r" % stride)
    if seq_len < 1 or series.shape[0] < seq_len:
        raise ValueError("Series of length %d is shorter than the window %r" % (series.shape[0], seq_len))
    starts = range(0, series.shape[0] - seq_len + 1, stride)
    return SeriesBatch(np.stack([series[s : s + seq_len] for s in starts]))


def split(batch, train_fraction, rng):
    # type: (SeriesBatch, float, Rng) -> Tuple[SeriesBatch, SeriesBatch]
    """Shuffle the samples and split them into train and test batches."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1), got %r" % train_fraction)
    n_train = int(round(batch.n_samples * train_fraction))
    if n_train < 1 or n_train >= batch.n_samples:
        raise ValueError("Cannot split %d samples with fraction %r" % (batch.n_samples, train_fraction))
    order = rng.permutation(batch.n_samples)
    return batch[order[:n_train]], batch[order[n_train:]]


def sample_noise(n, seq_len, dim, rng):
    # type: (int, int, int, Rng) -> np.ndarray
    """I.i.d. Uniform[0, 1) noise of shape (n, seq_len, dim)."""
    if n < 1 or seq_len < 1 or dim < 1:
        raise ValueError("Noise dimensions must be positive, got %r" % ((n, seq_len, dim),))
    return rng.uniform(0.0, 1.0, (n, seq_len, dim))
