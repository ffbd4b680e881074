# Unless explicitly stated otherwise all files in this repository are licensed
# under the Apache License 2.0.

"""Quality metrics of synthetic series.

- discriminative score: |accuracy - 0.5| of a post-hoc classifier telling
  real from synthetic sequences, 0 is best,
- predictive score: MAE on real data of a next-step forecaster trained on
  synthetic data, lower is better,
- PCA and t-SNE embeddings of the flattened samples for visual inspection.

Post-hoc models are single-layer GRU networks trained with Adam.
"""
from concurrent.futures import ThreadPoolExecutor
import json
import logging
import math
import os
import typing

import numpy as np
import pandas as pd

from .data import SeriesBatch
from .nets import LINEAR
from .nets import SIGMOID
from .nets import Network
from .nets import NetworkSpec
from .numkit import Graph
from .numkit import Rng
from .numkit import Tensor
from .numkit import backward
from .optim import DEFAULT_LR
from .optim import AdamState
from .optim import adam_step


if typing.TYPE_CHECKING:
    from typing import Any  # noqa: F401
    from typing import Callable  # noqa: F401
    from typing import Dict  # noqa: F401
    from typing import List  # noqa: F401
    from typing import Optional  # noqa: F401
    from typing import Sequence  # noqa: F401
    from typing import Tuple  # noqa: F401


logger = logging.getLogger(__name__)

DEFAULT_SCORER_STEPS = 500
DEFAULT_SCORER_BATCH_SIZE = 64
DEFAULT_SCORER_LAYERS = 1
MIN_SCORER_HIDDEN = 8
MAX_SCORER_HIDDEN = 64
MIN_SAMPLES_PER_SET = 10
TEST_FRACTION = 0.2

DEFAULT_PERPLEXITY = 30.0
DEFAULT_TSNE_ITERATIONS = 300
DEFAULT_TSNE_LEARNING_RATE = 200.0
EARLY_EXAGGERATION = 4.0
EXAGGERATION_ITERATIONS = 50
INITIAL_MOMENTUM = 0.5
FINAL_MOMENTUM = 0.8
MIN_GAIN = 0.01

DEFAULT_REPLICATIONS = 8
THREADS_ENV = "SERIESFORGE_THREADS"

REAL = "real"
SYNTHETIC = "synthetic"


class ScorerBudget(object):
    """Size and training budget of a post-hoc scorer.

    ``hidden_dim`` defaults to T * F // 4 clamped to [8, 64].
    """

    def __init__(
        self,
        steps=DEFAULT_SCORER_STEPS,
        batch_size=DEFAULT_SCORER_BATCH_SIZE,
        hidden_dim=None,
        num_layers=DEFAULT_SCORER_LAYERS,
        lr=DEFAULT_LR,
    ):
        # type: (int, int, Optional[int], int, float) -> None
        self.steps = int(steps)
        self.batch_size = int(batch_size)
        self.hidden_dim = None if hidden_dim is None else int(hidden_dim)
        self.num_layers = int(num_layers)
        self.lr = float(lr)
        self.validate()

    def __repr__(self):
        # type: () -> str
        return "ScorerBudget(steps=%r, batch_size=%r, hidden_dim=%r, num_layers=%r, lr=%r)" % (
            self.steps,
            self.batch_size,
            self.hidden_dim,
            self.num_layers,
            self.lr,
        )

    def validate(self):
        # type: () -> None
        if self.steps < 0:
            raise ValueError("steps must be non-negative, got %r" % self.steps)
        for field in ("batch_size", "num_layers"):
            if getattr(self, field) < 1:
                raise ValueError("%s must be positive, got %r" % (field, getattr(self, field)))
        if self.hidden_dim is not None and self.hidden_dim < 1:
            raise ValueError("hidden_dim must be positive, got %r" % self.hidden_dim)
        if self.lr < 0:
            raise ValueError("lr must be non-negative, got %r" % self.lr)

    def hidden_for(self, seq_len, n_features):
        # type: (int, int) -> int
        if self.hidden_dim is not None:
            return self.hidden_dim
        return min(MAX_SCORER_HIDDEN, max(MIN_SCORER_HIDDEN, seq_len * n_features // 4))

    def to_dict(self):
        # type: () -> Dict[str, Any]
        return {
            "steps": self.steps,
            "batch_size": self.batch_size,
            "hidden_dim": self.hidden_dim,
            "num_layers": self.num_layers,
            "lr": self.lr,
        }

    @classmethod
    def from_dict(cls, values):
        # type: (Dict[str, Any]) -> ScorerBudget
        unknown = set(values) - set(cls().to_dict())
        if unknown:
            raise ValueError("Unknown scorer settings %r" % sorted(unknown))
        return cls(**values)


def _check_pair(real, synthetic):
    # type: (SeriesBatch, SeriesBatch) -> None
    if real.shape[1:] != synthetic.shape[1:]:
        raise ValueError(
            "Real and synthetic batches differ in (T, F): %r vs %r" % (real.shape[1:], synthetic.shape[1:])
        )


def _scorer(role, input_dim, output_dim, activation, seq_len, budget, rng):
    # type: (str, int, int, str, int, ScorerBudget, Rng) -> Network
    spec = NetworkSpec(
        role,
        input_dim,
        budget.hidden_for(seq_len, input_dim),
        budget.num_layers,
        output_dim,
        activation=activation,
    )
    network = Network.create(spec, rng)
    network.params["dense.W"][...] = 0.0
    return network


def _train(network, budget, n_samples, objective, rng):
    # type: (Network, ScorerBudget, int, Callable[[np.ndarray, Dict[str, Tensor]], Tensor], Rng) -> None
    state = AdamState(lr=budget.lr)
    for _ in range(budget.steps):
        index = rng.permutation(n_samples)[: budget.batch_size]
        with Graph() as graph:
            weights = graph.leaves(network.params)
            loss = objective(index, weights)
            grads = graph.named(backward(graph, loss))
        adam_step(network.params, grads, state)


def stratified_split(labels, test_fraction, rng):
    # type: (np.ndarray, float, Rng) -> Tuple[np.ndarray, np.ndarray]
    """Shuffle once, then hold out the first ``test_fraction`` of every class.

    The split depends on the partition of the samples into classes only, not
    on the class values.
    """
    order = rng.permutation(labels.size)
    train, test = [], []  # type: List[np.ndarray], List[np.ndarray]
    for value in np.unique(labels):
        members = order[labels[order] == value]
        n_test = max(1, int(round(test_fraction * members.size)))
        test.append(members[:n_test])
        train.append(members[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def classifier_score(values, labels, budget, rng):
    # type: (np.ndarray, np.ndarray, ScorerBudget, Rng) -> float
    """Train a sequence classifier on 80% of ``values`` and return
    |test accuracy - 0.5| on the held-out 20%.

    Label 1 is predicted when the logit of the last step is positive.
    """
    labels = np.asarray(labels, dtype=np.float64)
    train, test = stratified_split(labels, TEST_FRACTION, rng)
    n, steps, features = values.shape
    network = _scorer("discriminative_scorer", features, 1, LINEAR, steps, budget, rng.child(0))
    targets = labels.reshape(-1, 1)

    def objective(index, weights):
        rows = train[index]
        logits = network(values[rows], weights).select_time(steps - 1)
        y = Tensor(targets[rows])
        # binary cross-entropy on logits
        return (logits.softplus() - logits * y).mean()

    _train(network, budget, train.size, objective, rng)
    logits = network(values[test]).select_time(steps - 1).numpy()[:, 0]
    accuracy = float(np.mean((logits > 0.0) == (labels[test] == 1.0)))
    return abs(accuracy - 0.5)


def discriminative_score(real, synthetic, budget=None, rng=None):
    # type: (SeriesBatch, SeriesBatch, Optional[ScorerBudget], Optional[Rng]) -> float
    """Post-hoc separability of real (label 1) and synthetic (label 0) sets,
    in [0, 0.5]."""
    _check_pair(real, synthetic)
    for name, batch in ((REAL, real), (SYNTHETIC, synthetic)):
        if batch.n_samples < MIN_SAMPLES_PER_SET:
            raise ValueError(
                "The %s set needs at least %d samples, got %d" % (name, MIN_SAMPLES_PER_SET, batch.n_samples)
            )
    budget = budget or ScorerBudget()
    rng = rng or Rng(0)
    values = np.concatenate([real.values, synthetic.values])
    labels = np.concatenate([np.ones(real.n_samples), np.zeros(synthetic.n_samples)])
    return classifier_score(values, labels, budget, rng)


def predictive_score(real, synthetic, budget=None, rng=None):
    # type: (SeriesBatch, SeriesBatch, Optional[ScorerBudget], Optional[Rng]) -> float
    """Train a next-step forecaster on ``synthetic`` and return its mean
    absolute error on ``real``.

    The forecaster reads steps 1..T-1 of every feature and predicts steps
    2..T of every feature through a sigmoid output.
    """
    _check_pair(real, synthetic)
    steps, features = real.seq_len, real.n_features
    if steps < 2:
        raise ValueError("The predictive score needs at least 2 timestamps, got %d" % steps)
    budget = budget or ScorerBudget()
    rng = rng or Rng(0)
    network = _scorer("predictive_scorer", features, features, SIGMOID, steps - 1, budget, rng.child(0))
    inputs, targets = synthetic.values[:, :-1], synthetic.values[:, 1:]

    def objective(index, weights):
        prediction = network(inputs[index], weights)
        return (prediction - Tensor(targets[index])).abs().mean()

    _train(network, budget, synthetic.n_samples, objective, rng)
    prediction = network(real.values[:, :-1]).numpy()
    return float(np.mean(np.abs(prediction - real.values[:, 1:])))


def predictive_baseline(real, budget=None, rng=None):
    # type: (SeriesBatch, Optional[ScorerBudget], Optional[Rng]) -> float
    """Train-on-real counterpart of ``predictive_score``: train on 80% of
    ``real`` and test on the rest."""
    rng = rng or Rng(0)
    if real.n_samples < 2:
        raise ValueError("The baseline needs at least 2 real samples, got %d" % real.n_samples)
    order = rng.permutation(real.n_samples)
    n_test = max(1, int(round(TEST_FRACTION * real.n_samples)))
    return predictive_score(real[order[:n_test]], real[order[n_test:]], budget, rng)


class Embedding(object):
    """Two-dimensional coordinates of pooled real and synthetic samples.

    Attributes:
        method (str): "pca" or "tsne"
        coords (np.ndarray): (N, 2) coordinates
        labels (np.ndarray): "real" or "synthetic" per row
        details (dict): method-specific diagnostics
    """

    def __init__(self, method, coords, labels, details=None):
        # type: (str, np.ndarray, np.ndarray, Optional[Dict[str, Any]]) -> None
        self.method = method
        self.coords = coords
        self.labels = labels
        self.details = details or {}

    def __repr__(self):
        # type: () -> str
        return "Embedding(method=%r, n=%d)" % (self.method, self.coords.shape[0])

    def to_frame(self):
        # type: () -> pd.DataFrame
        return pd.DataFrame(
            {
                "method": self.method,
                "label": self.labels,
                "c1": self.coords[:, 0],
                "c2": self.coords[:, 1],
            },
            columns=["method", "label", "c1", "c2"],
        )

    def write_csv(self, path):
        # type: (str) -> None
        self.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def _pooled(real, synthetic):
    # type: (SeriesBatch, SeriesBatch) -> Tuple[np.ndarray, np.ndarray]
    _check_pair(real, synthetic)
    flat = np.concatenate(
        [real.values.reshape(real.n_samples, -1), synthetic.values.reshape(synthetic.n_samples, -1)]
    )
    labels = np.array([REAL] * real.n_samples + [SYNTHETIC] * synthetic.n_samples)
    return flat, labels


def principal_components(flat, n_components=2):
    # type: (np.ndarray, int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]
    """Return (mean, components, eigenvalues) of the sample covariance.

    Components are columns ordered by descending eigenvalue, each with its
    largest-magnitude loading positive.
    """
    n, dim = flat.shape
    if n < 3:
        raise ValueError("PCA needs at least 3 samples, got %d" % n)
    if dim < n_components:
        raise ValueError("PCA to %d components needs as many dimensions, got %d" % (n_components, dim))
    mean = flat.mean(axis=0)
    centered = flat - mean
    covariance = centered.T @ centered / (n - 1)
    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    eigenvectors = eigenvectors[:, order]
    if eigenvalues[0] <= np.finfo(np.float64).eps * max(1.0, float(np.abs(flat).max())):
        raise ValueError("Degenerate covariance: all samples are identical")
    components = eigenvectors[:, :n_components]
    pivots = np.argmax(np.abs(components), axis=0)
    signs = np.sign(components[pivots, np.arange(n_components)])
    components = components * np.where(signs == 0, 1.0, signs)
    return mean, components, eigenvalues


def pca_project(real, synthetic):
    # type: (SeriesBatch, SeriesBatch) -> Embedding
    """Project the flattened samples onto the top two principal axes of the
    pooled set."""
    flat, labels = _pooled(real, synthetic)
    mean, components, eigenvalues = principal_components(flat)
    coords = (flat - mean) @ components
    total = float(eigenvalues.sum())
    return Embedding(
        "pca",
        coords,
        labels,
        {
            "mean": mean,
            "components": components,
            "eigenvalues": eigenvalues,
            "explained_variance_ratio": eigenvalues[:2] / total,
        },
    )


def _squared_distances(flat):
    # type: (np.ndarray) -> np.ndarray
    norms = np.sum(np.square(flat), axis=1)
    return np.maximum(norms[:, np.newaxis] + norms[np.newaxis, :] - 2.0 * flat @ flat.T, 0.0)


def input_affinities(flat, perplexity, tol=1e-5, max_search=50):
    # type: (np.ndarray, float, float, int) -> np.ndarray
    """Symmetrized Gaussian affinities, each row's precision binary-searched
    so that its entropy matches log(perplexity)."""
    n = flat.shape[0]
    distances = _squared_distances(flat)
    target = math.log(perplexity)
    conditional = np.zeros((n, n))
    for i in range(n):
        row = np.delete(distances[i], i)
        # center distances for numerical range; entropy is unaffected
        row = row - row.min()
        beta, beta_min, beta_max = 1.0, 0.0, np.inf
        for _ in range(max_search):
            kernel = np.exp(-row * beta)
            total = kernel.sum()
            entropy = math.log(total) + beta * float(np.sum(row * kernel)) / total
            diff = entropy - target
            if abs(diff) < tol:
                break
            if diff > 0:
                beta_min = beta
                beta = beta * 2.0 if beta_max == np.inf else (beta + beta_max) / 2.0
            else:
                beta_max = beta
                beta = (beta + beta_min) / 2.0
        conditional[i, np.arange(n) != i] = kernel / total
    joint = (conditional + conditional.T) / (2.0 * n)
    return np.maximum(joint, 1e-12)


def _output_affinities(coords):
    # type: (np.ndarray) -> Tuple[np.ndarray, np.ndarray]
    kernel = 1.0 / (1.0 + _squared_distances(coords))
    np.fill_diagonal(kernel, 0.0)
    return np.maximum(kernel / kernel.sum(), 1e-12), kernel


def _kl(p, q):
    # type: (np.ndarray, np.ndarray) -> float
    return float(np.sum(p * np.log(p / q)))


def tsne_project(
    real,
    synthetic,
    perplexity=DEFAULT_PERPLEXITY,
    iterations=DEFAULT_TSNE_ITERATIONS,
    rng=None,
    learning_rate=DEFAULT_TSNE_LEARNING_RATE,
):
    # type: (SeriesBatch, SeriesBatch, float, int, Optional[Rng], float) -> Embedding
    """Exact t-SNE of the flattened samples.

    Gradient descent with momentum and per-coordinate gains; affinities are
    exaggerated 4x during the first 50 iterations. ``details["kl"][k]`` is
    the KL divergence after k + 1 iterations.
    """
    flat, labels = _pooled(real, synthetic)
    n = flat.shape[0]
    if perplexity <= 0:
        raise ValueError("perplexity must be positive, got %r" % perplexity)
    if n < 3 * perplexity:
        raise ValueError(
            "t-SNE with perplexity %r needs at least %d samples, got %d" % (perplexity, math.ceil(3 * perplexity), n)
        )
    if iterations < 1:
        raise ValueError("iterations must be positive, got %r" % iterations)
    rng = rng or Rng(0)

    p = input_affinities(flat, perplexity)
    coords = rng.normal(0.0, 1e-4, (n, 2))
    velocity = np.zeros_like(coords)
    gains = np.ones_like(coords)
    history = []  # type: List[float]

    for i in range(iterations):
        q, kernel = _output_affinities(coords)
        if i:
            history.append(_kl(p, q))
        exaggerated = i < EXAGGERATION_ITERATIONS
        target = p * EARLY_EXAGGERATION if exaggerated else p
        weights = (target - q) * kernel
        grad = 4.0 * (np.diag(weights.sum(axis=1)) - weights) @ coords

        same_sign = (grad > 0) == (velocity > 0)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        gains = np.maximum(gains, MIN_GAIN)
        momentum = INITIAL_MOMENTUM if exaggerated else FINAL_MOMENTUM
        velocity = momentum * velocity - learning_rate * gains * grad
        coords = coords + velocity
        coords = coords - coords.mean(axis=0)

    history.append(_kl(p, _output_affinities(coords)[0]))
    return Embedding("tsne", coords, labels, {"kl": history, "perplexity": perplexity})


class MetricSummary(object):
    """Mean and sample standard deviation of a metric over replications."""

    def __init__(self, values):
        # type: (Sequence[float]) -> None
        self.values = [float(v) for v in values]
        if not self.values:
            raise ValueError("At least one replication is required")
        self.mean = float(np.mean(self.values))
        self.std = float(np.std(self.values, ddof=1)) if len(self.values) > 1 else 0.0

    def __repr__(self):
        # type: () -> str
        return "MetricSummary(mean=%r, std=%r, n=%d)" % (self.mean, self.std, len(self.values))

    def to_dict(self):
        # type: () -> Dict[str, Any]
        return {"mean": self.mean, "std": self.std, "values": list(self.values)}


class EvalReport(object):
    """Replicated metric summaries plus optional embeddings."""

    def __init__(self, seeds, discriminative, predictive, baseline=None, embeddings=None, config=None):
        # type: (Sequence[int], MetricSummary, MetricSummary, Optional[MetricSummary], Optional[List[Embedding]], Optional[Dict[str, Any]]) -> None
        self.seeds = list(seeds)
        self.discriminative = discriminative
        self.predictive = predictive
        self.baseline = baseline
        self.embeddings = embeddings or []
        self.config = config or {}

    def __repr__(self):
        # type: () -> str
        return "EvalReport(replications=%d, discriminative=%r, predictive=%r)" % (
            len(self.seeds),
            self.discriminative,
            self.predictive,
        )

    @property
    def replications(self):
        # type: () -> int
        return len(self.seeds)

    def to_dict(self):
        # type: () -> Dict[str, Any]
        report = {
            "replications": self.replications,
            "seeds": list(self.seeds),
            "discriminative": self.discriminative.to_dict(),
            "predictive": self.predictive.to_dict(),
            "config": self.config,
        }  # type: Dict[str, Any]
        if self.baseline is not None:
            report["predictive_baseline"] = self.baseline.to_dict()
        for embedding in self.embeddings:
            entry = {"n": int(embedding.coords.shape[0])}  # type: Dict[str, Any]
            if embedding.method == "pca":
                entry["explained_variance_ratio"] = embedding.details["explained_variance_ratio"].tolist()
                entry["eigenvalues"] = embedding.details["eigenvalues"].tolist()
            elif embedding.method == "tsne":
                entry["kl"] = list(embedding.details["kl"])
                entry["perplexity"] = embedding.details["perplexity"]
            report.setdefault("embeddings", {})[embedding.method] = entry
        return report

    def write_json(self, path):
        # type: (str) -> None
        with open(path, "w") as fp:
            json.dump(self.to_dict(), fp, indent=2, sort_keys=True)
            fp.write("\n")


def default_workers():
    # type: () -> int
    """Thread pool size, capped by the SERIESFORGE_THREADS variable."""
    workers = os.cpu_count() or 1
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            workers = min(workers, int(cap))
        except ValueError:
            raise ValueError("%s must be an integer, got %r" % (THREADS_ENV, cap))
    return max(1, workers)


def score_replication(real, synthetic, seed, budget=None, include_baseline=True):
    # type: (SeriesBatch, SeriesBatch, int, Optional[ScorerBudget], bool) -> Dict[str, float]
    rng = Rng(seed)
    scores = {
        "discriminative": discriminative_score(real, synthetic, budget, rng.child(0)),
        "predictive": predictive_score(real, synthetic, budget, rng.child(1)),
    }
    if include_baseline:
        scores["baseline"] = predictive_baseline(real, budget, rng.child(2))
    logger.debug("replication seed=%d scores=%r", seed, scores)
    return scores


def run_replications(
    real,
    synthesize,
    replications=DEFAULT_REPLICATIONS,
    base_seed=0,
    budget=None,
    max_workers=None,
    include_baseline=True,
    seeds=None,
):
    # type: (SeriesBatch, Callable[[int], SeriesBatch], int, int, Optional[ScorerBudget], Optional[int], bool, Optional[Sequence[int]]) -> EvalReport
    """Score ``replications`` independent synthetic sets.

    ``synthesize(seed)`` produces the synthetic batch of one replication.
    Replication k uses seed ``base_seed + k`` unless ``seeds`` is given.
    Replications run concurrently, each with its own random streams.
    """
    if seeds is None:
        if replications < 1:
            raise ValueError("replications must be positive, got %r" % replications)
        seeds = [base_seed + k for k in range(replications)]
    seeds = list(seeds)
    if not seeds:
        raise ValueError("At least one replication is required")

    def replicate(seed):
        return score_replication(real, synthesize(seed), seed, budget, include_baseline)

    workers = min(len(seeds), max_workers or default_workers())
    with ThreadPoolExecutor(max_workers=workers) as executor:
        results = list(executor.map(replicate, seeds))

    baseline = MetricSummary([r["baseline"] for r in results]) if include_baseline else None
    report = EvalReport(
        seeds,
        MetricSummary([r["discriminative"] for r in results]),
        MetricSummary([r["predictive"] for r in results]),
        baseline=baseline,
        config={"budget": (budget or ScorerBudget()).to_dict(), "include_baseline": include_baseline},
    )
    logger.info(
        "%d replications: discriminative %.4f +- %.4f, predictive %.4f +- %.4f",
        len(seeds),
        report.discriminative.mean,
        report.discriminative.std,
        report.predictive.mean,
        report.predictive.std,
    )
    return report
