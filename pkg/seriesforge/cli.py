# Unless explicitly stated otherwise all files in this repository are licensed
# under the Apache License 2.0.

"""Command-line entry point.

    seriesforge sines    [--config PATH] [--seed N] [--out DIR]
    seriesforge train    [--config PATH] [--seed N] [--out DIR] [--ablate NAME ...]
    seriesforge generate [--config PATH] [--seed N] [--out DIR] [--checkpoint PATH] [--count N]
    seriesforge evaluate [--config PATH] [--seed N] [--out DIR] --real CSV --synthetic CSV

Exit codes: 0 success, 2 invalid configuration or inputs, 3 training failure,
4 damaged checkpoint.
"""
import argparse
import json
import logging
import os
import sys
import typing

import numpy as np

from . import metrics
from .data import SineConfig
from .data import export_csv
from .data import generate_sines
from .data import load_csv
from .data import scaler_apply
from .data import scaler_fit
from .data import scaler_invert
from .data import window
from .numkit import Rng
from .pb.proto import CheckpointError
from .training import NonFiniteLossError
from .training import SeriesGAN
from .training import TrainConfig
from .training import load_checkpoint
from .training import save_checkpoint


if typing.TYPE_CHECKING:
    from typing import Any  # noqa: F401
    from typing import Dict  # noqa: F401
    from typing import List  # noqa: F401
    from typing import Optional  # noqa: F401
    from typing import Sequence  # noqa: F401
    from typing import Tuple  # noqa: F401

    from .data import SeriesBatch  # noqa: F401


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_TRAINING = 3
EXIT_CHECKPOINT = 4

DEFAULT_OUTPUT_DIR = "seriesforge-out"
DEFAULT_GENERATE_COUNT = 1000
DEFAULT_EMBEDDING_SAMPLES = 1000

SINES_FILE = "sines.csv"
CHECKPOINT_FILE = "checkpoint.sfck"
EARLY_STOP_LOG_FILE = "early_stop_log.jsonl"
SYNTHETIC_FILE = "synthetic.csv"
GENERATED_FILE = "generated.csv"
REPORT_FILE = "report.json"
EMBEDDING_FILE = "embedding_%s.csv"

ABLATIONS = {
    "supervised": "use_supervised_loss",
    "dual-disc": "use_feature_discriminator",
    "ts-loss": "use_ts_loss",
    "early-stop": "use_early_stopping",
}
_ABLATION_ALIASES = {
    "supervised-loss": "supervised",
    "dual-discriminator": "dual-disc",
    "dual-discriminators": "dual-disc",
    "ts": "ts-loss",
    "early-stopping": "early-stop",
}


class EvaluationConfig(object):
    """Settings of the ``evaluate`` command."""

    def __init__(
        self,
        replications=metrics.DEFAULT_REPLICATIONS,
        steps=metrics.DEFAULT_SCORER_STEPS,
        batch_size=metrics.DEFAULT_SCORER_BATCH_SIZE,
        perplexity=metrics.DEFAULT_PERPLEXITY,
        tsne_iterations=metrics.DEFAULT_TSNE_ITERATIONS,
        embedding_samples=DEFAULT_EMBEDDING_SAMPLES,
    ):
        # type: (int, int, int, float, int, int) -> None
        self.replications = int(replications)
        self.steps = int(steps)
        self.batch_size = int(batch_size)
        self.perplexity = float(perplexity)
        self.tsne_iterations = int(tsne_iterations)
        self.embedding_samples = int(embedding_samples)
        self.validate()

    def validate(self):
        # type: () -> None
        for field in ("replications", "batch_size", "tsne_iterations", "embedding_samples"):
            if getattr(self, field) < 1:
                raise ValueError("evaluation %s must be positive, got %r" % (field, getattr(self, field)))
        if self.steps < 0:
            raise ValueError("evaluation steps must be non-negative, got %r" % self.steps)
        if self.perplexity <= 0:
            raise ValueError("perplexity must be positive, got %r" % self.perplexity)

    def budget(self):
        # type: () -> metrics.ScorerBudget
        return metrics.ScorerBudget(steps=self.steps, batch_size=self.batch_size)

    def to_dict(self):
        # type: () -> Dict[str, Any]
        return {
            "replications": self.replications,
            "steps": self.steps,
            "batch_size": self.batch_size,
            "perplexity": self.perplexity,
            "tsne_iterations": self.tsne_iterations,
            "embedding_samples": self.embedding_samples,
        }

    @classmethod
    def from_dict(cls, values):
        # type: (Dict[str, Any]) -> EvaluationConfig
        unknown = set(values) - set(cls().to_dict())
        if unknown:
            raise ValueError("Unknown evaluation settings %r" % sorted(unknown))
        return cls(**values)


class RunConfig(object):
    """A complete run: data source, training, evaluation and outputs.

    Exactly one data source is set: ``sines`` or ``csv_path`` (optionally
    cut into windows of ``window`` = (length, stride) when the file holds a
    single long series). The run seed is propagated to every component.
    """

    def __init__(
        self,
        seed=0,
        output_dir=DEFAULT_OUTPUT_DIR,
        sines=None,
        csv_path=None,
        window=None,
        train=None,
        evaluation=None,
        generate_count=DEFAULT_GENERATE_COUNT,
    ):
        # type: (int, str, Optional[SineConfig], Optional[str], Optional[Tuple[int, int]], Optional[TrainConfig], Optional[EvaluationConfig], int) -> None
        self.seed = int(seed)
        self.output_dir = output_dir
        self.sines = sines if sines is not None or csv_path is not None else SineConfig()
        self.csv_path = csv_path
        self.window = window
        self.train = train or TrainConfig()
        self.evaluation = evaluation or EvaluationConfig()
        self.generate_count = int(generate_count)
        self.validate()

    def validate(self):
        # type: () -> None
        if (self.sines is None) == (self.csv_path is None):
            raise ValueError("Exactly one data source (sines or csv) must be configured")
        if self.window is not None:
            if self.csv_path is None:
                raise ValueError("Windowing applies to csv data only")
            length, stride = self.window
            if length < 1 or stride < 1:
                raise ValueError("Window length and stride must be positive, got %r" % (self.window,))
        if self.generate_count < 1:
            raise ValueError("generate_count must be positive, got %r" % self.generate_count)
        self.seed_components()

    def seed_components(self):
        # type: () -> None
        self.train.seed = self.seed
        if self.sines is not None:
            self.sines.seed = self.seed

    def data_dict(self):
        # type: () -> Dict[str, Any]
        if self.sines is not None:
            sines = self.sines.to_dict()
            del sines["seed"]
            return {"sines": sines}
        window_dict = None
        if self.window is not None:
            window_dict = {"length": self.window[0], "stride": self.window[1]}
        return {"csv": {"path": self.csv_path, "window": window_dict}}

    def to_dict(self):
        # type: () -> Dict[str, Any]
        train = self.train.to_dict()
        del train["seed"]
        return {
            "seed": self.seed,
            "output_dir": self.output_dir,
            "data": self.data_dict(),
            "train": train,
            "evaluation": self.evaluation.to_dict(),
            "generate_count": self.generate_count,
        }

    @classmethod
    def from_dict(cls, values):
        # type: (Dict[str, Any]) -> RunConfig
        known = {"seed", "output_dir", "data", "train", "evaluation", "generate_count"}
        unknown = set(values) - known
        if unknown:
            raise ValueError("Unknown run settings %r" % sorted(unknown))

        kwargs = {}  # type: Dict[str, Any]
        for key in ("seed", "output_dir", "generate_count"):
            if key in values:
                kwargs[key] = values[key]
        data = values.get("data") or {"sines": {}}
        if len(data) != 1 or next(iter(data)) not in ("sines", "csv"):
            raise ValueError("data must hold exactly one of 'sines' or 'csv', got %r" % sorted(data))
        if "sines" in data:
            kwargs["sines"] = SineConfig.from_dict(data["sines"] or {})
        else:
            source = dict(data["csv"] or {})
            if "path" not in source:
                raise ValueError("csv data source needs a 'path'")
            unknown = set(source) - {"path", "window"}
            if unknown:
                raise ValueError("Unknown csv settings %r" % sorted(unknown))
            kwargs["csv_path"] = source["path"]
            spec = source.get("window")
            if spec is not None:
                if not isinstance(spec, dict) or "length" not in spec:
                    raise ValueError("csv window needs a 'length', got %r" % (spec,))
                kwargs["window"] = (int(spec["length"]), int(spec.get("stride", 1)))
        if "train" in values:
            kwargs["train"] = TrainConfig.from_dict(values["train"] or {})
        if "evaluation" in values:
            kwargs["evaluation"] = EvaluationConfig.from_dict(values["evaluation"] or {})
        return cls(**kwargs)

    @classmethod
    def load(cls, path):
        # type: (Optional[str]) -> RunConfig
        if path is None:
            return cls()
        with open(path, "r") as fp:
            values = json.load(fp)
        if not isinstance(values, dict):
            raise ValueError("%s: the configuration must be a JSON object" % path)
        return cls.from_dict(values)


def ablation(value):
    # type: (str) -> str
    """Normalize an --ablate value: ``no-ts-loss``, ``ts`` and ``ts-loss``
    all name the same toggle."""
    name = value.strip().lower().replace("_", "-")
    if name.startswith("no-"):
        name = name[3:]
    name = _ABLATION_ALIASES.get(name, name)
    if name not in ABLATIONS:
        raise argparse.ArgumentTypeError(
            "unknown ablation %r, choose from %s" % (value, ", ".join(sorted(ABLATIONS)))
        )
    return name


def build_parser():
    # type: () -> argparse.ArgumentParser
    parser = argparse.ArgumentParser(prog="seriesforge", description="Synthetic time series generation")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", metavar="DIR", help="override the output directory")
    common.add_argument("-v", "--verbose", action="store_true", help="log per-step losses")

    commands = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands.required = True
    commands.add_parser("sines", parents=[common], help="write a Sines dataset")
    train = commands.add_parser("train", parents=[common], help="run the four training phases")
    train.add_argument(
        "--ablate",
        action="append",
        type=ablation,
        default=[],
        metavar="NAME",
        help="disable one of %s (repeatable)" % ", ".join(sorted(ABLATIONS)),
    )
    generate = commands.add_parser("generate", parents=[common], help="sample from a checkpoint")
    generate.add_argument("--checkpoint", metavar="PATH", help="checkpoint file (default: OUT/%s)" % CHECKPOINT_FILE)
    generate.add_argument("--count", type=int, help="number of samples")
    evaluate = commands.add_parser("evaluate", parents=[common], help="score synthetic against real data")
    evaluate.add_argument("--real", metavar="CSV", required=True)
    evaluate.add_argument("--synthetic", metavar="CSV", required=True)
    return parser


def resolve_config(args):
    # type: (argparse.Namespace) -> RunConfig
    config = RunConfig.load(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.output_dir = args.out
    for name in getattr(args, "ablate", []):
        setattr(config.train, ABLATIONS[name], False)
    if getattr(args, "count", None) is not None:
        config.generate_count = args.count
    config.validate()
    config.train.validate()
    return config


def _output_path(config, name):
    # type: (RunConfig, str) -> str
    if not os.path.isdir(config.output_dir):
        os.makedirs(config.output_dir)
    return os.path.join(config.output_dir, name)


def load_dataset(config):
    # type: (RunConfig) -> SeriesBatch
    if config.sines is not None:
        return generate_sines(config.sines)
    batch = load_csv(typing.cast(str, config.csv_path))
    if config.window is not None:
        if batch.n_samples != 1:
            raise ValueError(
                "%s: windowing needs a single long series, got %d samples" % (config.csv_path, batch.n_samples)
            )
        length, stride = config.window
        batch = window(batch.values[0], length, stride)
    return batch


def cmd_sines(config):
    # type: (RunConfig) -> int
    if config.sines is None:
        raise ValueError("The sines command needs a sines data source")
    batch = generate_sines(config.sines)
    path = _output_path(config, SINES_FILE)
    export_csv(batch, path)
    n, steps, features = batch.shape
    print("N=%d T=%d F=%d" % (n, steps, features))
    logger.info("wrote %s", path)
    return EXIT_OK


def cmd_train(config):
    # type: (RunConfig) -> int
    batch = load_dataset(config)
    if config.train.seq_len is None:
        config.train.seq_len = batch.seq_len
    logger.info("training on %d samples, T=%d, F=%d", batch.n_samples, batch.seq_len, batch.n_features)
    model = SeriesGAN(config.train, batch.n_features)
    checkpoint = model.fit(batch)

    checkpoint_path = _output_path(config, CHECKPOINT_FILE)
    save_checkpoint(checkpoint, checkpoint_path)
    log_path = _output_path(config, EARLY_STOP_LOG_FILE)
    model.early_stop.write_log(log_path)
    synthetic_path = _output_path(config, SYNTHETIC_FILE)
    synthetic = model.best_synthetic
    if synthetic is not None and model.scaler is not None:
        synthetic = scaler_invert(synthetic, model.scaler)
    export_csv(synthetic, synthetic_path)
    logger.info("wrote %s, %s and %s", checkpoint_path, log_path, synthetic_path)
    return EXIT_OK


def cmd_generate(config, checkpoint_path=None):
    # type: (RunConfig, Optional[str]) -> int
    checkpoint_path = checkpoint_path or os.path.join(config.output_dir, CHECKPOINT_FILE)
    model = SeriesGAN.from_checkpoint(load_checkpoint(checkpoint_path))
    batch = model.generate(config.generate_count, Rng(config.seed))
    path = _output_path(config, GENERATED_FILE)
    export_csv(batch, path)
    logger.info("wrote %d samples to %s", batch.n_samples, path)
    return EXIT_OK


def _subsample(batch, limit, rng):
    # type: (SeriesBatch, int, Rng) -> SeriesBatch
    if batch.n_samples <= limit:
        return batch
    return batch[np.sort(rng.permutation(batch.n_samples)[:limit])]


def scale_for_evaluation(real, synthetic):
    # type: (SeriesBatch, SeriesBatch) -> Tuple[SeriesBatch, SeriesBatch]
    """Scale both sets with the scaler fitted on ``real``.

    Synthetic values outside the real range are kept, so the scores see them.
    """
    scaler = scaler_fit(real)
    synthetic = scaler_apply(synthetic, scaler, clip=False)
    if not synthetic.scaled:
        logger.warning("synthetic values fall outside the range of the real data")
    return scaler_apply(real, scaler), synthetic


def cmd_evaluate(config, real_path, synthetic_path):
    # type: (RunConfig, str, str) -> int
    real = load_csv(real_path)
    synthetic = load_csv(synthetic_path)
    if real.shape[1:] != synthetic.shape[1:]:
        raise ValueError(
            "%s and %s differ in (T, F): %r vs %r" % (real_path, synthetic_path, real.shape[1:], synthetic.shape[1:])
        )
    real, synthetic = scale_for_evaluation(real, synthetic)
    settings = config.evaluation

    report = metrics.run_replications(
        real,
        lambda seed: synthetic,
        replications=settings.replications,
        base_seed=config.seed,
        budget=settings.budget(),
    )

    rng = Rng(config.seed)
    real_sub = _subsample(real, settings.embedding_samples, rng.child(0))
    synthetic_sub = _subsample(synthetic, settings.embedding_samples, rng.child(1))
    perplexity = settings.perplexity
    pooled = real_sub.n_samples + synthetic_sub.n_samples
    if pooled < 3 * perplexity:
        logger.warning("perplexity %r too large for %d samples, using %r", perplexity, pooled, pooled / 3.0)
        perplexity = pooled / 3.0
    report.embeddings = [
        metrics.pca_project(real_sub, synthetic_sub),
        metrics.tsne_project(real_sub, synthetic_sub, perplexity, settings.tsne_iterations, rng.child(2)),
    ]
    report.config = dict(report.config, evaluation=settings.to_dict(), seed=config.seed)

    report_path = _output_path(config, REPORT_FILE)
    report.write_json(report_path)
    for embedding in report.embeddings:
        embedding.write_csv(_output_path(config, EMBEDDING_FILE % embedding.method))
    logger.info("wrote %s", report_path)
    return EXIT_OK


def run(args):
    # type: (argparse.Namespace) -> int
    config = resolve_config(args)
    if args.command == "sines":
        return cmd_sines(config)
    if args.command == "train":
        return cmd_train(config)
    if args.command == "generate":
        return cmd_generate(config, args.checkpoint)
    return cmd_evaluate(config, args.real, args.synthetic)


def main(argv=None):
    # type: (Optional[Sequence[str]]) -> int
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return run(args)
    except NonFiniteLossError as e:
        logger.error("training failed in phase %d: %s", e.phase, e)
        return EXIT_TRAINING
    except CheckpointError as e:
        logger.error("damaged checkpoint: %s", e)
        return EXIT_CHECKPOINT
    except (ValueError, OSError) as e:
        logger.error("%s", e)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
