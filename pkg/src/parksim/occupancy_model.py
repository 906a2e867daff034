"""Block availability prediction from partial meter payments.

A small feed-forward network (4 inputs, two hidden layers of 30 ReLU units,
2-way softmax output) maps payment-derived and block-level features to the
probability that at least one curbside spot is free. Training runs repeated
random train/validation splits of survey-derived availability labels and
reports validation cross-entropy and accuracy; a single-layer logistic
model trained under the identical protocol serves as the baseline.

Feature order is fixed: active paid sessions at the query time, paid
sessions started in the preceding 3 hours, block length in meters, and
drive time across the block divided by its length (congestion). Inputs are
standardized with statistics taken from each split's training portion only.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from datetime import date, datetime, time, timedelta
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, NumericError
from .road_graph import RoadGraph

FEATURE_NAMES = ("active_sessions", "popularity_3h", "block_length_m",
                 "congestion_s_per_m")
N_FEATURES = 4
HIDDEN = 30
N_CLASSES = 2  # output unit 0: no free spot, unit 1: spot available
POPULARITY_WINDOW = timedelta(hours=3)
MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class PaymentRecord:
    block_id: str
    start: datetime
    duration_s: float


@dataclass(frozen=True)
class OccupancySample:
    block_id: str
    time: datetime
    available: int  # 1 if at least one spot on the block was free


@dataclass(frozen=True)
class FeatureVector:
    active_sessions: float
    popularity_3h: float
    block_length_m: float
    congestion_s_per_m: float

    def as_array(self) -> np.ndarray:
        return np.array([self.active_sessions, self.popularity_3h,
                         self.block_length_m, self.congestion_s_per_m])


@dataclass
class MlpModel:
    """4 -> 30 -> 30 -> 2 network plus the feature standardization used
    at training time. 1,142 trainable parameters in total."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    feature_mean: np.ndarray
    feature_std: np.ndarray

    PARAM_FIELDS = ("w1", "b1", "w2", "b2", "w3", "b3")

    @property
    def parameter_count(self) -> int:
        return sum(getattr(self, f).size for f in self.PARAM_FIELDS)


@dataclass
class LogisticModel:
    """Single affine layer 4 -> 2 with softmax: logistic regression on the
    same standardized features."""

    w: np.ndarray
    b: np.ndarray
    feature_mean: np.ndarray
    feature_std: np.ndarray

    PARAM_FIELDS = ("w", "b")

    @property
    def parameter_count(self) -> int:
        return sum(getattr(self, f).size for f in self.PARAM_FIELDS)


@dataclass(frozen=True)
class TrainConfig:
    splits: int = 10
    validation_fraction: float = 0.20
    epochs: int = 150
    learning_rate: float = 0.01
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.splits < 1 or self.batch_size < 1 or self.epochs < 0:
            raise DataError("splits and batch_size must be >= 1, epochs >= 0")
        if not 0.0 < self.validation_fraction < 1.0:
            raise DataError("validation_fraction must be in (0, 1)")
        if not self.learning_rate > 0:
            raise DataError("learning_rate must be positive")


@dataclass(frozen=True)
class SplitScore:
    cross_entropy: float
    accuracy: float


@dataclass(frozen=True)
class EvalReport:
    mean_val_cross_entropy: float
    mean_val_accuracy: float
    per_split: tuple[SplitScore, ...]


# -- features ----------------------------------------------------------------

def extract_features(payments: Iterable[PaymentRecord], block_id: str,
                     t: datetime, g: RoadGraph) -> FeatureVector:
    """Features for one block at one time.

    A session is active over the half-open interval [start, start +
    duration); popularity counts sessions by start time in [t - 3h, t).
    """
    edge = g.edge(block_id)
    records = [p for p in payments if p.block_id == block_id]
    return _features_for_block(records, edge, t)


def _features_for_block(records: Sequence[PaymentRecord], edge, t: datetime) -> FeatureVector:
    active = 0
    recent = 0
    window_start = t - POPULARITY_WINDOW
    for p in records:
        if p.start <= t < p.start + timedelta(seconds=p.duration_s):
            active += 1
        if window_start <= p.start < t:
            recent += 1
    congestion = edge.drive_time_s[t.hour] / edge.length_m
    return FeatureVector(float(active), float(recent), edge.length_m, congestion)


def _group_payments(payments: Iterable[PaymentRecord]) -> dict[str, list[PaymentRecord]]:
    by_block: dict[str, list[PaymentRecord]] = {}
    for p in payments:
        by_block.setdefault(p.block_id, []).append(p)
    return by_block


def build_dataset(samples: Sequence[OccupancySample],
                  payments: Iterable[PaymentRecord],
                  g: RoadGraph) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix and label vector for a collection of samples."""
    by_block = _group_payments(payments)
    rows = np.empty((len(samples), N_FEATURES))
    labels = np.empty(len(samples), dtype=np.int64)
    for i, s in enumerate(samples):
        fv = _features_for_block(by_block.get(s.block_id, ()), g.edge(s.block_id), s.time)
        rows[i] = fv.as_array()
        labels[i] = s.available
    return rows, labels


# -- forward / loss / gradient -------------------------------------------------

def _standardize(model, X: np.ndarray) -> np.ndarray:
    return (X - model.feature_mean) / model.feature_std


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _mlp_logits(model: MlpModel, X: np.ndarray):
    a0 = _standardize(model, X)
    z1 = a0 @ model.w1 + model.b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ model.w2 + model.b2
    a2 = np.maximum(z2, 0.0)
    z3 = a2 @ model.w3 + model.b3
    return z3, (a0, z1, a1, z2, a2)

def _logits(model, X: np.ndarray):
    if isinstance(model, MlpModel):
        return _mlp_logits(model, X)
    a0 = _standardize(model, X)
    return a0 @ model.w + model.b, (a0,)


def forward(model, x) -> tuple[float, float]:
    """Probability pair (p_available, p_full) for a single feature vector."""
    arr = x.as_array() if isinstance(x, FeatureVector) else np.asarray(x, dtype=float)
    if arr.shape != (N_FEATURES,):
        raise DataError(f"expected {N_FEATURES} features, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericError("non-finite feature input")
    logits, _ = _logits(model, arr[None, :])
    p = _softmax(logits)[0]
    return float(p[1]), float(p[0])


def loss(model, features, labels) -> float:
    """Mean cross-entropy (nats) of the true labels under the model."""
    X, y = _as_batch(features, labels)
    logits, _ = _logits(model, X)
    return float(_cross_entropy(logits, y))


def _as_batch(features, labels) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("batch must be a nonempty 2-D feature array")
    if y.shape != (X.shape[0],):
        raise DataError("labels must match the batch length")
    return X, y


def _cross_entropy(logits: np.ndarray, y: np.ndarray) -> float:
    # stable log-softmax; no clipping, so gradients stay exact
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    true_logit = shifted[np.arange(len(y)), y]
    return float(np.mean(log_norm - true_logit))


def gradient(model, features, labels) -> dict[str, np.ndarray]:
    """Exact gradient of the mean cross-entropy for every parameter.

    ReLU takes derivative 0 at 0. Keys match the model's parameter fields.
    """
    X, y = _as_batch(features, labels)
    n = len(y)
    logits, cache = _logits(model, X)
    delta = _softmax(logits)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    if isinstance(model, MlpModel):
        a0, z1, a1, z2, a2 = cache
        grads = {"w3": a2.T @ delta, "b3": delta.sum(axis=0)}
        d2 = (delta @ model.w3.T) * (z2 > 0.0)
        grads["w2"] = a1.T @ d2
        grads["b2"] = d2.sum(axis=0)
        d1 = (d2 @ model.w2.T) * (z1 > 0.0)
        grads["w1"] = a0.T @ d1
        grads["b1"] = d1.sum(axis=0)
        return grads
    (a0,) = cache
    return {"w": a0.T @ delta, "b": delta.sum(axis=0)}


# -- training ------------------------------------------------------------------

def _glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _init_model(kind: str, rng: np.random.Generator,
                mean: np.ndarray, std: np.ndarray):
    if kind == "mlp":
        return MlpModel(
            w1=_glorot_uniform(rng, N_FEATURES, HIDDEN), b1=np.zeros(HIDDEN),
            w2=_glorot_uniform(rng, HIDDEN, HIDDEN), b2=np.zeros(HIDDEN),
            w3=_glorot_uniform(rng, HIDDEN, N_CLASSES), b3=np.zeros(N_CLASSES),
            feature_mean=mean, feature_std=std,
        )
    # the logistic loss is convex, so there is no symmetry to break;
    # zero init also makes an untrained baseline output exactly (0.5, 0.5)
    return LogisticModel(
        w=np.zeros((N_FEATURES, N_CLASSES)), b=np.zeros(N_CLASSES),
        feature_mean=mean, feature_std=std,
    )


def _accuracy(model, X: np.ndarray, y: np.ndarray) -> float:
    logits, _ = _logits(model, X)
    p_available = _softmax(logits)[:, 1]
    predicted = (p_available > 0.5).astype(np.int64)
    return float(np.mean(predicted == y))


def _fit_split(X: np.ndarray, y: np.ndarray, cfg: TrainConfig,
               split_index: int, kind: str):
    """Train one fresh model on one seeded 80/20 split.

    The per-split generator drives, in order: the split permutation, weight
    initialization, and the per-epoch shuffles, which makes runs with the
    same seed bit-reproducible. The split permutation is drawn first so the
    network and the baseline see identical splits.
    """
    rng = np.random.default_rng(cfg.seed + split_index)
    n = len(y)
    perm = rng.permutation(n)
    n_val = max(1, int(round(n * cfg.validation_fraction)))
    if n_val >= n:
        raise DataError("validation fraction leaves no training data")
    val_idx, train_idx = perm[:n_val], perm[n_val:]

    X_train, y_train = X[train_idx], y[train_idx]
    mean = X_train.mean(axis=0)
    std = X_train.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)  # constant features pass through
    model = _init_model(kind, rng, mean, std)

    n_train = len(y_train)
    for _ in range(cfg.epochs):
        order = rng.permutation(n_train)
        for start in range(0, n_train, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            grads = gradient(model, X_train[batch], y_train[batch])
            for name, grad in grads.items():
                param = getattr(model, name)
                param -= cfg.learning_rate * grad

    X_val, y_val = X[val_idx], y[val_idx]
    score = SplitScore(cross_entropy=loss(model, X_val, y_val),
                       accuracy=_accuracy(model, X_val, y_val))
    return model, score


def _train_protocol(X: np.ndarray, y: np.ndarray, cfg: TrainConfig, kind: str):
    if len(y) < 50:
        raise DataError(f"need at least 50 samples, got {len(y)}")
    if len(np.unique(y)) < 2:
        raise DataError("training data contains a single class")
    best_model = None
    best_ce = math.inf
    scores = []
    for i in range(cfg.splits):
        model, score = _fit_split(X, y, cfg, i, kind)
        scores.append(score)
        if score.cross_entropy < best_ce:
            best_ce = score.cross_entropy
            best_model = model
    report = EvalReport(
        mean_val_cross_entropy=float(np.mean([s.cross_entropy for s in scores])),
        mean_val_accuracy=float(np.mean([s.accuracy for s in scores])),
        per_split=tuple(scores),
    )
    return best_model, report


def train(samples: Sequence[OccupancySample], payments: Iterable[PaymentRecord],
          g: RoadGraph, cfg: TrainConfig) -> tuple[MlpModel, EvalReport]:
    """Train the network over repeated splits; return the best model (by
    validation cross-entropy) and the aggregate report."""
    X, y = build_dataset(samples, payments, g)
    return _train_protocol(X, y, cfg, "mlp")


def train_baseline(samples: Sequence[OccupancySample],
                   payments: Iterable[PaymentRecord],
                   g: RoadGraph, cfg: TrainConfig) -> tuple[LogisticModel, EvalReport]:
    """Logistic-regression baseline under the identical split protocol."""
    X, y = build_dataset(samples, payments, g)
    return _train_protocol(X, y, cfg, "logistic")


# -- prediction ------------------------------------------------------------------

def predict_block_probabilities(model, payments: Iterable[PaymentRecord],
                                g: RoadGraph, hour: int,
                                on_date: date) -> dict[str, float]:
    """Availability probability for every block at (date, hour:30).

    Blocks without meters get probability 0: there is nowhere to park, and
    the search simulator still needs an entry to traverse them.
    """
    if not 0 <= hour < 24:
        raise DataError(f"hour must be in 0..23, got {hour!r}")
    t = datetime.combine(on_date, time(hour, 30))
    by_block = _group_payments(payments)
    table: dict[str, float] = {}
    for eid in sorted(g.edges):
        edge = g.edges[eid]
        if edge.meter_count == 0:
            table[eid] = 0.0
            continue
        fv = _features_for_block(by_block.get(eid, ()), edge, t)
        table[eid] = forward(model, fv)[0]
    return table


# -- model persistence ------------------------------------------------------------

def save_model(model, path: str | os.PathLike) -> None:
    """Write model weights as JSON (row-major arrays plus feature norm)."""
    kind = "mlp" if isinstance(model, MlpModel) else "logistic"
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": kind,
        "shapes": {f: list(getattr(model, f).shape) for f in model.PARAM_FIELDS},
        "weights": {f: getattr(model, f).reshape(-1).tolist()
                    for f in model.PARAM_FIELDS},
        "feature_norm": {"mean": model.feature_mean.tolist(),
                         "std": model.feature_std.tolist()},
    }
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(json.dumps(payload, sort_keys=True))
    os.replace(tmp, path)


def load_model(path: str | os.PathLike):
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    if raw.get("format_version") != MODEL_FORMAT_VERSION:
        raise DataError(f"unsupported model format version {raw.get('format_version')!r}")
    kind = raw.get("kind")
    if kind not in ("mlp", "logistic"):
        raise DataError(f"unknown model kind {kind!r}")
    norm = raw["feature_norm"]
    mean = np.asarray(norm["mean"], dtype=float)
    std = np.asarray(norm["std"], dtype=float)

    def arr(name: str) -> np.ndarray:
        shape = tuple(raw["shapes"][name])
        values = np.asarray(raw["weights"][name], dtype=float)
        if values.size != int(np.prod(shape)):
            raise DataError(f"model weight {name!r} does not match its shape")
        return values.reshape(shape)

    try:
        if kind == "mlp":
            model = MlpModel(w1=arr("w1"), b1=arr("b1"), w2=arr("w2"), b2=arr("b2"),
                             w3=arr("w3"), b3=arr("b3"),
                             feature_mean=mean, feature_std=std)
            expected = {"w1": (N_FEATURES, HIDDEN), "w2": (HIDDEN, HIDDEN),
                        "w3": (HIDDEN, N_CLASSES)}
        else:
            model = LogisticModel(w=arr("w"), b=arr("b"),
                                  feature_mean=mean, feature_std=std)
            expected = {"w": (N_FEATURES, N_CLASSES)}
    except KeyError as exc:
        raise DataError(f"model file missing field: {exc}") from exc
    for name, shape in expected.items():
        if getattr(model, name).shape != shape:
            raise DataError(f"model weight {name!r} has unexpected shape")
    for f in model.PARAM_FIELDS:
        if not np.all(np.isfinite(getattr(model, f))):
            raise NumericError(f"model weight {f!r} contains non-finite values")
    return model
