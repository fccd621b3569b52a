"""
Training and evaluation pipeline

Self-supervised pretraining, frozen linear probes, end-to-end fine-tuning,
and the sweeps built from them (batch sizes, label fractions, modality
pairs, temperatures). Every run is fully determined by its TrainConfig seed
and the dataset content.
"""

import itertools
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.metrics import f1_score

from .batching import WindowedDataset, iterate_batches, split_dataset, stratified_subsample
from .constants import (
    ALL_METHODS, CROSS_MODAL_METHODS, DEFAULT_BATCH_SIZE, EARLY_STOP_PATIENCE,
    LEARNING_RATE, MAX_EPOCHS, NUM_SEEDS, PAIR_METHODS, SSL_METHODS, TAU_GRID,
)
from .encoder import EncoderConfig, EncoderParams, encode, encode_concat, init_params
from .errors import ConfigurationError, InputError
from .losses import LossHyper, OpCounter, required_modalities, ssl_loss
from .optim import AdamState, adam_step
from .progress_tracker import MetricsSink, ProgressTracker, RunMetrics
from .run_manager import RunManager, RunTask
from .tensor import DiffTensor, GradientTape, dense, softmax_cross_entropy

logger = logging.getLogger(__name__)

ENCODE_CHUNK = 256


@dataclass
class TrainConfig:
    """Everything that determines one training run besides the data."""

    method: str = "cocoa"
    batch_size: int = DEFAULT_BATCH_SIZE
    max_epochs: int = MAX_EPOCHS
    lr: float = LEARNING_RATE
    early_stop_patience: int = EARLY_STOP_PATIENCE
    hyper: LossHyper = field(default_factory=LossHyper)
    seed: int = 0
    num_seeds: int = NUM_SEEDS
    modalities: Optional[List[str]] = None
    encoder: Dict[str, object] = field(default_factory=dict)
    split: Optional[Dict[str, float]] = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.method not in ALL_METHODS:
            raise ConfigurationError(f"unknown method '{self.method}'; expected one of {ALL_METHODS}")
        if self.batch_size < 2:
            raise ConfigurationError(f"batch_size must be at least 2, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ConfigurationError(f"max_epochs must be at least 1, got {self.max_epochs}")
        if self.early_stop_patience < 1:
            raise ConfigurationError(f"early_stop_patience must be at least 1, got {self.early_stop_patience}")
        if not self.lr > 0:
            raise ConfigurationError(f"lr must be positive, got {self.lr}")
        if self.num_seeds < 1:
            raise ConfigurationError(f"num_seeds must be at least 1, got {self.num_seeds}")
        unknown = set(self.encoder) - {"kernel_sizes", "filter_counts", "projection_dim", "fusion_dim"}
        if unknown:
            raise ConfigurationError(f"unknown encoder overrides: {sorted(unknown)}")

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    @property
    def seeds(self) -> List[int]:
        return list(range(self.seed, self.seed + self.num_seeds))


@dataclass
class DataSplits:
    train: WindowedDataset
    val: WindowedDataset
    test: WindowedDataset

    @classmethod
    def from_dataset(cls, dataset: WindowedDataset, seed: int,
                     fractions: Optional[Dict[str, float]] = None) -> "DataSplits":
        return cls(*split_dataset(dataset, fractions, rng_seed=seed))

    def select_modalities(self, names: Optional[Sequence[str]]) -> "DataSplits":
        if not names:
            return self
        return DataSplits(self.train.select_modalities(names), self.val.select_modalities(names),
                          self.test.select_modalities(names))


DataLike = Union[WindowedDataset, DataSplits]


@dataclass
class Classifier:
    """Single dense layer followed by softmax."""

    weight: DiffTensor
    bias: DiffTensor

    @classmethod
    def init(cls, input_dim: int, num_classes: int, seed: int) -> "Classifier":
        rng = np.random.default_rng(seed)
        bound = np.sqrt(6.0 / input_dim)
        return cls(DiffTensor(rng.uniform(-bound, bound, size=(input_dim, num_classes)), requires_grad=True),
                   DiffTensor(np.zeros(num_classes), requires_grad=True))

    def params(self) -> List[DiffTensor]:
        return [self.weight, self.bias]

    def logits(self, features) -> DiffTensor:
        return dense(features, self.weight, self.bias)

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(DiffTensor(features)).data, axis=1)

    def copy(self) -> "Classifier":
        return Classifier(DiffTensor(self.weight.data, requires_grad=True),
                          DiffTensor(self.bias.data, requires_grad=True))


@dataclass
class PretrainResult:
    params: EncoderParams
    metrics: List[RunMetrics]
    best_epoch: int
    best_val_loss: float
    evaluations_per_step: int


@dataclass
class ClassifierResult:
    classifier: Classifier
    encoders: EncoderParams
    metrics: List[RunMetrics]
    val_f1: Optional[float]
    test_f1: float


def _as_splits(data: DataLike, config: TrainConfig) -> DataSplits:
    splits = data if isinstance(data, DataSplits) else DataSplits.from_dataset(data, config.seed, config.split)
    return splits.select_modalities(config.modalities)


def _emit(sink: Optional[MetricsSink], metrics: RunMetrics, collected: List[RunMetrics]) -> None:
    collected.append(metrics)
    if sink is not None:
        sink.emit(metrics)


def check_method_modalities(method: str, num_modalities: int) -> None:
    low, high = required_modalities(method)
    if num_modalities < low or (high is not None and num_modalities > high):
        expected = f"exactly {low}" if low == high else f"at least {low}"
        raise ConfigurationError(
            f"method '{method}' needs {expected} modalities, dataset provides {num_modalities}")


def random_encoders(dataset: WindowedDataset, config: TrainConfig, seed: Optional[int] = None) -> EncoderParams:
    encoder_config = EncoderConfig.for_dataset(dataset, **config.encoder)
    return init_params(encoder_config, seed=config.seed if seed is None else seed)


def _batch_loss(params: EncoderParams, batch, config: TrainConfig, counter: Optional[OpCounter] = None) -> float:
    z = encode(params, batch)
    return ssl_loss(config.method, z, config.hyper, counter).item()


def validation_loss(params: EncoderParams, dataset: WindowedDataset, config: TrainConfig) -> Optional[float]:
    """Mean SSL loss over fixed-seed batches; None when no batch fits."""
    frozen = params.freeze()
    size = min(config.batch_size, dataset.num_windows)
    if size < 2:
        return None
    losses = [_batch_loss(frozen, batch, config) for batch in iterate_batches(dataset, size, config.seed)]
    return float(np.mean(losses)) if losses else None


def pretrain(data: DataLike, config: TrainConfig, sink: Optional[MetricsSink] = None,
             run_id: Optional[str] = None) -> PretrainResult:
    """
    Train the encoders on unlabeled windows with a self-supervised loss.

    Args:
        data: A dataset (split by ``config.seed``) or prepared splits
        config (TrainConfig): Method, batch size, epochs and hyper-parameters
        sink (Optional[MetricsSink]): Receives one record per epoch
        run_id (Optional[str]): Identifier written into the metrics

    Returns:
        PretrainResult: Parameters of the epoch with the lowest validation
        loss (training loss when the validation split is too small)
    """
    if config.method not in SSL_METHODS:
        raise ConfigurationError(f"pretrain needs a self-supervised method, got '{config.method}'")
    splits = _as_splits(data, config)
    train = splits.train
    check_method_modalities(config.method, train.num_modalities)
    run_id = run_id or f"pretrain-{config.method}-b{config.batch_size}-s{config.seed}"

    params = random_encoders(train, config)
    trainable = params.trainable()
    state = AdamState.for_params(trainable, lr=config.lr)
    rng = np.random.default_rng(config.seed)

    metrics: List[RunMetrics] = []
    best_params, best_epoch, best_monitor = params.copy(), 0, np.inf
    stale = 0
    per_step = 0
    for epoch in range(1, config.max_epochs + 1):
        started = time.perf_counter()
        losses, evaluations = [], 0
        for batch in iterate_batches(train, config.batch_size, rng):
            counter = OpCounter()
            with GradientTape() as tape:
                loss = ssl_loss(config.method, encode(params, batch), config.hyper, counter)
            grads = tape.backward(loss, trainable)
            adam_step(state, trainable, grads)
            losses.append(loss.item())
            evaluations += counter.similarity_evaluations
            per_step = counter.similarity_evaluations
        if not losses:
            raise ConfigurationError(
                f"batch_size {config.batch_size} is larger than the {train.num_windows} usable training windows")

        train_loss = float(np.mean(losses))
        val_loss = validation_loss(params, splits.val, config)
        monitor = train_loss if val_loss is None else val_loss
        _emit(sink, RunMetrics(
            run_id=run_id, method=config.method, epoch=epoch, stage="pretrain",
            train_loss=train_loss, val_loss=val_loss, similarity_evaluations=evaluations,
            batches=len(losses), batch_size=config.batch_size, seed=config.seed,
            wall_seconds=time.perf_counter() - started), metrics)
        logger.debug("%s epoch %d: train %.5f, val %s", run_id, epoch, train_loss, val_loss)

        if not np.isfinite(monitor):
            logger.warning("%s: non-finite loss at epoch %d, stopping", run_id, epoch)
            break
        if monitor < best_monitor:
            best_monitor, best_epoch, best_params = monitor, epoch, params.copy()
            stale = 0
        else:
            stale += 1
            if stale >= config.early_stop_patience:
                logger.info("%s: early stop at epoch %d (best epoch %d)", run_id, epoch, best_epoch)
                break

    return PretrainResult(best_params, metrics, best_epoch, float(best_monitor), per_step)


def embed(params: EncoderParams, dataset: WindowedDataset, chunk: int = ENCODE_CHUNK) -> np.ndarray:
    """Concatenated fused embeddings of every window, encoded in chunks without a tape."""
    frozen = params.freeze()
    blocks = [encode_concat(frozen, dataset.batch(np.arange(start, min(start + chunk, dataset.num_windows)))).data
              for start in range(0, dataset.num_windows, chunk)]
    if not blocks:
        return np.zeros((0, frozen.config.num_modalities * frozen.config.fusion_dim))
    return np.concatenate(blocks, axis=0)


def evaluate_macro_f1(predictions: Sequence[int], labels: Sequence[int], num_classes: int) -> float:
    """
    Unweighted mean of per-class F1 over ``range(num_classes)``.

    A class absent from both predictions and labels scores 0 and is logged.
    """
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise InputError(f"{len(predictions)} predictions for {len(labels)} labels")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise InputError(f"labels must lie in [0, {num_classes})")
    absent = sorted(set(range(num_classes)) - set(labels.tolist()) - set(predictions.tolist()))
    if absent:
        logger.warning("Classes %s appear in neither predictions nor labels; they score F1=0", absent)
    return float(f1_score(labels, predictions, labels=list(range(num_classes)),
                          average="macro", zero_division=0))


def _require_labels(*datasets: WindowedDataset) -> None:
    for dataset in datasets:
        if dataset.labels is None:
            raise InputError("classification needs labelled windows")


def _minibatches(n: int, batch_size: int, rng: np.random.Generator) -> List[np.ndarray]:
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def _score(splits_part: WindowedDataset, predict) -> Optional[float]:
    if splits_part.num_windows == 0:
        return None
    return evaluate_macro_f1(predict(splits_part), splits_part.labels, len(splits_part.classes))


def linear_probe(encoders: EncoderParams, data: DataLike, config: TrainConfig,
                 sink: Optional[MetricsSink] = None, run_id: Optional[str] = None) -> ClassifierResult:
    """
    Train a softmax classifier on frozen encoder embeddings.

    The encoders are copied without gradients and never updated; early
    stopping follows validation macro-F1 and the test macro-F1 of the best
    epoch is reported.
    """
    splits = _as_splits(data, config)
    _require_labels(splits.train, splits.val, splits.test)
    run_id = run_id or f"probe-{config.method}-b{config.batch_size}-s{config.seed}"
    frozen = encoders.freeze()
    features = {name: embed(frozen, part) for name, part in
                (("train", splits.train), ("val", splits.val), ("test", splits.test))}
    num_classes = len(splits.train.classes)

    classifier = Classifier.init(features["train"].shape[1], num_classes, config.seed + 1)
    state = AdamState.for_params(classifier.params(), lr=config.lr)
    rng = np.random.default_rng(config.seed + 1)

    def score(head: Classifier, name: str, part: WindowedDataset) -> Optional[float]:
        if part.num_windows == 0:
            return None
        return evaluate_macro_f1(head.predict(features[name]), part.labels, num_classes)

    metrics: List[RunMetrics] = []
    best, best_f1, best_epoch, stale = classifier.copy(), -np.inf, 0, 0
    for epoch in range(1, config.max_epochs + 1):
        started = time.perf_counter()
        losses = []
        for rows in _minibatches(splits.train.num_windows, config.batch_size, rng):
            with GradientTape() as tape:
                loss = softmax_cross_entropy(classifier.logits(DiffTensor(features["train"][rows])),
                                             splits.train.labels[rows])
            adam_step(state, classifier.params(), tape.backward(loss, classifier.params()))
            losses.append(loss.item())

        val_f1 = score(classifier, "val", splits.val)
        monitor = val_f1 if val_f1 is not None else score(classifier, "train", splits.train)
        _emit(sink, RunMetrics(
            run_id=run_id, method=config.method, epoch=epoch, stage="probe",
            train_loss=float(np.mean(losses)), macro_f1=monitor, batches=len(losses),
            batch_size=config.batch_size, seed=config.seed,
            wall_seconds=time.perf_counter() - started), metrics)
        if monitor > best_f1:
            best, best_f1, best_epoch, stale = classifier.copy(), monitor, epoch, 0
        else:
            stale += 1
            if stale >= config.early_stop_patience:
                break

    test_f1 = score(best, "test", splits.test)
    logger.info("%s: best epoch %d, val F1 %.4f, test F1 %s", run_id, best_epoch, best_f1, test_f1)
    return ClassifierResult(best, encoders, metrics, float(best_f1),
                            float("nan") if test_f1 is None else test_f1)


def finetune(encoders: Optional[EncoderParams], data: DataLike, config: TrainConfig,
             label_fraction: float = 1.0, sink: Optional[MetricsSink] = None,
             run_id: Optional[str] = None) -> ClassifierResult:
    """
    Train encoders and classifier jointly on a stratified share of the labels.

    ``encoders=None`` or ``config.method == 'supervised'`` starts from
    randomly initialised encoders (the end-to-end supervised baseline).
    """
    splits = _as_splits(data, config)
    _require_labels(splits.train, splits.val, splits.test)
    train = stratified_subsample(splits.train, label_fraction, config.seed)
    run_id = run_id or f"finetune-{config.method}-f{label_fraction:g}-s{config.seed}"

    if encoders is None or config.method == "supervised":
        params = random_encoders(train, config)
    else:
        params = encoders.copy()
    num_classes = len(train.classes)
    classifier = Classifier.init(params.config.num_modalities * params.config.fusion_dim,
                                 num_classes, config.seed + 1)
    trainable = params.trainable() + classifier.params()
    state = AdamState.for_params(trainable, lr=config.lr)
    rng = np.random.default_rng(config.seed + 2)

    def predict_with(encoder_params, head):
        return lambda part: head.predict(embed(encoder_params, part))

    metrics: List[RunMetrics] = []
    best = (params.copy(), classifier.copy())
    best_f1, best_epoch, stale = -np.inf, 0, 0
    for epoch in range(1, config.max_epochs + 1):
        started = time.perf_counter()
        losses = []
        for rows in _minibatches(train.num_windows, config.batch_size, rng):
            batch = train.batch(rows)
            with GradientTape() as tape:
                loss = softmax_cross_entropy(classifier.logits(encode_concat(params, batch)), batch.labels)
            adam_step(state, trainable, tape.backward(loss, trainable))
            losses.append(loss.item())

        predict = predict_with(params, classifier)
        val_f1 = _score(splits.val, predict)
        monitor = val_f1 if val_f1 is not None else _score(train, predict)
        _emit(sink, RunMetrics(
            run_id=run_id, method=config.method, epoch=epoch, stage="finetune",
            train_loss=float(np.mean(losses)), macro_f1=monitor, batches=len(losses),
            batch_size=config.batch_size, seed=config.seed, label_fraction=label_fraction,
            wall_seconds=time.perf_counter() - started), metrics)
        if monitor > best_f1:
            best, best_f1, best_epoch, stale = (params.copy(), classifier.copy()), monitor, epoch, 0
        else:
            stale += 1
            if stale >= config.early_stop_patience:
                break

    best_params, best_classifier = best
    test_f1 = _score(splits.test, predict_with(best_params, best_classifier))
    logger.info("%s: best epoch %d, val F1 %.4f, test F1 %s", run_id, best_epoch, best_f1, test_f1)
    return ClassifierResult(best_classifier, best_params, metrics, float(best_f1),
                            float("nan") if test_f1 is None else test_f1)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def _summary(run_id: str, config: TrainConfig, stage: str, macro_f1: float,
             evaluations: int = 0, batches: int = 0, label_fraction: Optional[float] = None,
             wall_seconds: float = 0.0, val_loss: Optional[float] = None) -> RunMetrics:
    return RunMetrics(run_id=run_id, method=config.method, epoch=0, kind="summary", stage=stage,
                      val_loss=val_loss, macro_f1=macro_f1, similarity_evaluations=evaluations,
                      batches=batches, batch_size=config.batch_size, seed=config.seed,
                      label_fraction=label_fraction, wall_seconds=wall_seconds)


def pretrain_and_probe(data: DataLike, config: TrainConfig, sink: Optional[MetricsSink] = None,
                       run_id: Optional[str] = None) -> Tuple[ClassifierResult, Optional[PretrainResult]]:
    """Frozen-probe score of ``config.method``; 'supervised' probes random encoders."""
    splits = _as_splits(data, config)
    run_id = run_id or f"{config.method}-b{config.batch_size}-s{config.seed}"
    if config.method == "supervised":
        encoders = random_encoders(splits.train, config)
        return linear_probe(encoders, splits, config, sink, run_id), None
    pretrained = pretrain(splits, config, sink, run_id)
    return linear_probe(pretrained.params, splits, config, sink, run_id), pretrained


def _probe_row(data: DataLike, config: TrainConfig, sink: Optional[MetricsSink], run_id: str) -> RunMetrics:
    """One summary row; pairwise methods on more than two modalities average every pair."""
    started = time.perf_counter()
    splits = _as_splits(data, config)
    if config.method in PAIR_METHODS and splits.train.num_modalities > 2 and not config.modalities:
        report = modality_pair_runs(splits, config.with_(num_seeds=1), sink=sink, include_all=False)
        row = _summary(run_id, config, "probe", report.pair_mean,
                       report.rows[0].similarity_evaluations, report.rows[0].batches,
                       wall_seconds=time.perf_counter() - started)
    else:
        probe, pretrained = pretrain_and_probe(splits, config, sink, run_id)
        row = _summary(run_id, config, "probe", probe.test_f1,
                       pretrained.evaluations_per_step if pretrained else 0,
                       pretrained.metrics[-1].batches if pretrained else 0,
                       wall_seconds=time.perf_counter() - started,
                       val_loss=pretrained.best_val_loss if pretrained else None)
    if sink is not None:
        sink.emit(row)
    return row


def _run_tasks(tasks: List[RunTask], jobs: int, tracker: Optional[ProgressTracker]) -> list:
    return RunManager(jobs=jobs, progress_tracker=tracker).run_all(tasks)


def batch_sweep(data: DataLike, methods: Sequence[str], batch_sizes: Sequence[int], config: TrainConfig,
                sink: Optional[MetricsSink] = None, jobs: int = 1,
                tracker: Optional[ProgressTracker] = None) -> List[RunMetrics]:
    """
    Pretrain and probe every (method, batch size, seed) combination.

    Returns summary rows sorted by (method, batch size, seed); each row
    carries the per-step similarity evaluation count of its method.
    """
    for method in methods:
        if method not in ALL_METHODS:
            raise ConfigurationError(f"unknown method '{method}'")
    grid = sorted(set(itertools.product(methods, batch_sizes, config.seeds)))
    tasks = []
    for method, batch_size, seed in grid:
        run_config = config.with_(method=method, batch_size=int(batch_size), seed=seed)
        run_id = f"{method}-b{batch_size}-s{seed}"
        tasks.append(RunTask(run_id, f"{method}, batch {batch_size}, seed {seed}",
                             lambda c=run_config, r=run_id: _probe_row(data, c, sink, r)))
    rows = _run_tasks(tasks, jobs, tracker)
    return sorted(rows, key=lambda r: (r.method, r.batch_size, r.seed))


def best_batch_sizes(rows: Sequence[RunMetrics]) -> Dict[str, Tuple[int, float]]:
    """Per method, the batch size with the highest mean macro-F1 (ties to the smaller size)."""
    scores: Dict[Tuple[str, int], List[float]] = {}
    for row in rows:
        scores.setdefault((row.method, row.batch_size), []).append(row.macro_f1)
    best: Dict[str, Tuple[int, float]] = {}
    for (method, batch_size), values in sorted(scores.items()):
        mean = float(np.mean(values))
        if method not in best or mean > best[method][1]:
            best[method] = (batch_size, mean)
    return best


@dataclass
class CurvePoint:
    label_fraction: float
    mean_f1: float
    std_f1: float
    num_seeds: int


@dataclass
class LabelCurve:
    method: str
    rows: List[RunMetrics]
    points: List[CurvePoint]


def label_curve(data: DataLike, method: str, fractions: Sequence[float], config: TrainConfig,
                sink: Optional[MetricsSink] = None, jobs: int = 1,
                tracker: Optional[ProgressTracker] = None) -> LabelCurve:
    """
    Fine-tune at every label fraction over ``config.num_seeds`` seeds.

    Encoders are pretrained once per seed and shared by all fractions of
    that seed. Points report mean and population std of test macro-F1.
    """
    fractions = sorted(float(f) for f in fractions)
    for fraction in fractions:
        if not 0.0 < fraction <= 1.0:
            raise ConfigurationError(f"label fractions must lie in (0, 1], got {fraction}")

    def seed_run(seed: int) -> List[RunMetrics]:
        run_config = config.with_(method=method, seed=seed)
        splits = _as_splits(data, run_config)
        encoders = None
        if method != "supervised":
            encoders = pretrain(splits, run_config, sink, f"{method}-s{seed}").params
        rows = []
        for fraction in fractions:
            run_id = f"{method}-f{fraction:g}-s{seed}"
            started = time.perf_counter()
            result = finetune(encoders, splits, run_config, fraction, sink, run_id)
            row = _summary(run_id, run_config, "finetune", result.test_f1, label_fraction=fraction,
                           wall_seconds=time.perf_counter() - started)
            if sink is not None:
                sink.emit(row)
            rows.append(row)
        return rows

    tasks = [RunTask(f"{method}-s{seed}", f"{method} label curve, seed {seed}",
                     lambda s=seed: seed_run(s)) for seed in config.seeds]
    rows = [row for seed_rows in _run_tasks(tasks, jobs, tracker) for row in seed_rows]
    rows.sort(key=lambda r: (r.label_fraction, r.seed))
    points = []
    for fraction in fractions:
        values = [r.macro_f1 for r in rows if r.label_fraction == fraction]
        points.append(CurvePoint(fraction, float(np.mean(values)), float(np.std(values)), len(values)))
    return LabelCurve(method, rows, points)


@dataclass
class ModalityPairReport:
    rows: List[RunMetrics]
    pair_scores: Dict[Tuple[str, str], float]
    pair_mean: float
    all_mean: Optional[float]


def modality_pair_runs(data: DataLike, config: TrainConfig, sink: Optional[MetricsSink] = None,
                       jobs: int = 1, tracker: Optional[ProgressTracker] = None,
                       include_all: bool = True) -> ModalityPairReport:
    """
    Pretrain and probe on every two-modality combination, averaged over seeds.

    With ``include_all`` and a cross-modal method, the all-modality run is
    scored too, for comparison against the pair mean.
    """
    splits = data if isinstance(data, DataSplits) else None
    names = (splits.train if splits else data).modality_names
    if len(names) < 2:
        raise ConfigurationError("modality pair runs need at least two modalities")
    subsets: List[Tuple[str, ...]] = list(itertools.combinations(names, 2))
    if include_all and config.method in CROSS_MODAL_METHODS and len(names) > 2:
        subsets.append(tuple(names))

    tasks = []
    for subset in subsets:
        for seed in config.seeds:
            run_config = config.with_(modalities=list(subset), seed=seed)
            run_id = f"{config.method}-{'+'.join(subset)}-s{seed}"
            tasks.append(RunTask(run_id, f"{config.method} on {', '.join(subset)}, seed {seed}",
                                 lambda c=run_config, r=run_id: _probe_row(data, c, sink, r)))
    rows = _run_tasks(tasks, jobs, tracker)

    scores: Dict[Tuple[str, ...], List[float]] = {}
    for (subset, _), row in zip(itertools.product(subsets, config.seeds), rows):
        scores.setdefault(subset, []).append(row.macro_f1)
    pair_scores = {s: float(np.mean(v)) for s, v in scores.items() if len(s) == 2}
    all_scores = [v for s, v in scores.items() if len(s) > 2]
    return ModalityPairReport(
        rows=rows,
        pair_scores=pair_scores,
        pair_mean=float(np.mean(list(pair_scores.values()))),
        all_mean=float(np.mean(all_scores[0])) if all_scores else None,
    )


@dataclass
class TauSweepReport:
    rows: List[RunMetrics]
    mean_val_f1: Dict[float, float]
    mean_test_f1: Dict[float, float]
    best_tau: float


def tau_sweep(data: DataLike, config: TrainConfig, taus: Sequence[float] = TAU_GRID,
              sink: Optional[MetricsSink] = None, jobs: int = 1,
              tracker: Optional[ProgressTracker] = None) -> TauSweepReport:
    """Grid search over the temperature; the best tau has the highest mean validation macro-F1."""
    if config.method not in SSL_METHODS:
        raise ConfigurationError(f"tau sweep needs a self-supervised method, got '{config.method}'")
    grid = list(itertools.product(sorted(float(t) for t in taus), config.seeds))

    def run(tau: float, seed: int):
        run_config = config.with_(hyper=replace(config.hyper, tau=tau), seed=seed)
        run_id = f"{config.method}-t{tau:g}-s{seed}"
        probe, pretrained = pretrain_and_probe(data, run_config, sink, run_id)
        row = _summary(run_id, run_config, "probe", probe.test_f1, pretrained.evaluations_per_step,
                       pretrained.metrics[-1].batches, val_loss=pretrained.best_val_loss)
        if sink is not None:
            sink.emit(row)
        return tau, probe.val_f1, row

    tasks = [RunTask(f"{config.method}-t{tau:g}-s{seed}", f"tau {tau:g}, seed {seed}",
                     lambda t=tau, s=seed: run(t, s)) for tau, seed in grid]
    outcomes = _run_tasks(tasks, jobs, tracker)
    val_scores: Dict[float, List[float]] = {}
    test_scores: Dict[float, List[float]] = {}
    for tau, val_f1, row in outcomes:
        val_scores.setdefault(tau, []).append(np.nan if val_f1 is None else val_f1)
        test_scores.setdefault(tau, []).append(row.macro_f1)
    mean_val = {tau: float(np.mean(v)) for tau, v in val_scores.items()}
    mean_test = {tau: float(np.mean(v)) for tau, v in test_scores.items()}
    # an empty validation split selects on the test score
    selection = mean_val if all(np.isfinite(list(mean_val.values()))) else mean_test
    best_tau = max(sorted(selection), key=lambda tau: selection[tau])
    return TauSweepReport([row for _, _, row in outcomes], mean_val, mean_test, best_tau)
