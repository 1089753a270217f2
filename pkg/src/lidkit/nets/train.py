"""Training loop: seeded mini-batches, Adam, per-epoch validation, early
stopping on the selection metric, best-epoch checkpointing."""

import copy
from dataclasses import dataclass, field

import numpy as np

from .. import formats, metrics
from ..errors import NumericError
from ..seeding import rng_for
from .loss import cross_entropy, softmax
from .models import CLASSIFIER_KINDS, ClassifierConfig, SequenceBatch, build_model
from .optim import adam_step, init_adam_state

SELECTION_METRICS = ("val_loss", "val_bac")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 20
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int = 3
    metric: str = "val_bac"
    seed: int = 0

    def __post_init__(self):
        if min(self.batch_size, self.max_epochs, self.patience) < 1:
            raise ValueError("batch_size, max_epochs, patience must be positive")
        if self.lr <= 0 or self.adam_eps <= 0:
            raise ValueError("lr and adam_eps must be positive")
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")
        if self.metric not in SELECTION_METRICS:
            raise ValueError(f"selection metric must be one of {SELECTION_METRICS}")


@dataclass
class SequenceDataset:
    """Variable-length frame sequences with labels (0 english, 1 mandarin)."""

    ids: list[str]
    features: list[np.ndarray]
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if not (len(self.ids) == len(self.features) == len(self.labels)):
            raise ValueError("ids, features, labels must have equal length")

    def __len__(self):
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.features[0].shape[1]


@dataclass
class PooledDataset:
    """Fixed-size vectors with labels."""

    ids: list[str]
    x: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)

    def __len__(self):
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.x.shape[1]


@dataclass
class PredictionSet:
    """Per-segment truth, argmax prediction, and mandarin posterior."""

    ids: list[str]
    y_true: np.ndarray
    y_pred: np.ndarray
    scores: np.ndarray


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float
    val_bac: float


@dataclass
class TrainReport:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss,val_acc,val_bac"]
        for e in self.epochs:
            lines.append(
                f"{e.epoch},{e.train_loss:.6f},{e.val_loss:.6f},"
                f"{e.val_acc:.6f},{e.val_bac:.6f}"
            )
        return "\n".join(lines) + "\n"


@dataclass
class Checkpoint:
    config: ClassifierConfig
    params: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray]
    scaler_mean: np.ndarray
    scaler_std: np.ndarray
    epoch: int
    metric_value: float


def fit_scaler(ds) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension mean/std over all training frames (rows for pooled)."""
    if isinstance(ds, SequenceDataset):
        stacked = np.concatenate(ds.features, axis=0)
    else:
        stacked = ds.x
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    std = np.where(std < 1e-8, 1.0, std)
    return mean, std


def _make_batch(ds: SequenceDataset, idxs, mean, std) -> SequenceBatch:
    feats = [(ds.features[i] - mean) / std for i in idxs]
    lengths = np.array([f.shape[0] for f in feats], dtype=np.int64)
    t_max = int(lengths.max())
    data = np.zeros((len(idxs), t_max, feats[0].shape[1]))
    for row, f in enumerate(feats):
        data[row, : f.shape[0]] = f
    return SequenceBatch(data, lengths, ds.labels[list(idxs)])


def _forward_eval(model, ds, mean, std, batch_size=128):
    """Eval-mode logits over a dataset, in dataset order."""
    chunks = []
    n = len(ds)
    for lo in range(0, n, batch_size):
        idxs = range(lo, min(lo + batch_size, n))
        if model.consumes == "sequence":
            batch = _make_batch(ds, idxs, mean, std)
            logits, _ = model.forward(batch, train=False)
        else:
            x = (ds.x[list(idxs)] - mean) / std
            logits, _ = model.forward(x, train=False)
        chunks.append(logits)
    return np.concatenate(chunks, axis=0)


def _val_stats(model, ds, mean, std):
    logits = _forward_eval(model, ds, mean, std)
    loss, _ = cross_entropy(logits, ds.labels)
    preds = logits.argmax(axis=1)
    acc = float(np.mean(preds == ds.labels))
    pset = PredictionSet(ds.ids, ds.labels, preds, softmax(logits)[:, 1])
    bac = metrics.balanced_accuracy(metrics.confusion(pset))
    return loss, acc, bac


def train(cfg_c: ClassifierConfig, cfg_t: TrainConfig, train_ds, val_ds):
    """Train with early stopping; returns the best-epoch checkpoint and the
    per-epoch report."""
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise ValueError("train and val sets must be nonempty")

    if cfg_c.kind == "prior_only":
        model = build_model(cfg_c)
        model.fit(train_ds.labels)
        chk = Checkpoint(
            config=cfg_c,
            params={},
            buffers=copy.deepcopy(model.buffers),
            scaler_mean=np.zeros(1),
            scaler_std=np.ones(1),
            epoch=0,
            metric_value=float(model.buffers["prior"]),
        )
        return chk, TrainReport(epochs=[], best_epoch=0, stopped_early=False)

    mean, std = fit_scaler(train_ds)
    model = build_model(cfg_c)
    state = init_adam_state(model.params)
    drop_rng = rng_for(cfg_t.seed, "dropout")
    maximize = cfg_t.metric == "val_bac"

    report = TrainReport()
    best_value = None
    best_snapshot = None
    bad_epochs = 0
    step = 0
    n = len(train_ds)

    for epoch in range(1, cfg_t.max_epochs + 1):
        order = rng_for(cfg_t.seed, f"shuffle:e{epoch}").permutation(n)
        losses = []
        sizes = []
        for lo in range(0, n, cfg_t.batch_size):
            idxs = order[lo : lo + cfg_t.batch_size]
            if len(idxs) == 1 and n > 1:
                continue  # batch statistics are undefined on a single item
            if model.consumes == "sequence":
                batch = _make_batch(train_ds, idxs, mean, std)
                logits, cache = model.forward(batch, train=True, rng=drop_rng)
                labels = batch.labels
            else:
                x = (train_ds.x[idxs] - mean) / std
                labels = train_ds.labels[idxs]
                logits, cache = model.forward(x, train=True, rng=drop_rng)
            loss, dlogits = cross_entropy(logits, labels)
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite training loss at epoch {epoch}, batch {lo // cfg_t.batch_size}"
                )
            grads = model.backward(cache, dlogits)
            step += 1
            model.params, state = adam_step(
                model.params, grads, state, step,
                lr=cfg_t.lr, beta1=cfg_t.beta1, beta2=cfg_t.beta2, eps=cfg_t.adam_eps,
            )
            losses.append(loss)
            sizes.append(len(idxs))

        train_loss = float(np.average(losses, weights=sizes))
        val_loss, val_acc, val_bac = _val_stats(model, val_ds, mean, std)
        report.epochs.append(EpochStats(epoch, train_loss, val_loss, val_acc, val_bac))

        value = val_bac if maximize else val_loss
        improved = best_value is None or (
            value > best_value if maximize else value < best_value
        )
        if improved:
            best_value = value
            report.best_epoch = epoch
            best_snapshot = (
                copy.deepcopy(model.params),
                copy.deepcopy(model.buffers),
            )
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg_t.patience:
                report.stopped_early = True
                break

    chk = Checkpoint(
        config=cfg_c,
        params=best_snapshot[0],
        buffers=best_snapshot[1],
        scaler_mean=mean,
        scaler_std=std,
        epoch=report.best_epoch,
        metric_value=float(best_value),
    )
    return chk, report


def predict(chk: Checkpoint, ds) -> PredictionSet:
    """Eval-mode predictions; score is the mandarin posterior."""
    if chk.config.kind == "prior_only":
        model = build_model(chk.config)
        model.buffers = copy.deepcopy(chk.buffers)
        scores, preds = model.predict_scores(len(ds))
        return PredictionSet(list(ds.ids), ds.labels.copy(), preds, scores)

    model = build_model(chk.config)
    model.params = copy.deepcopy(chk.params)
    model.buffers = copy.deepcopy(chk.buffers)
    expected = "sequence" if isinstance(ds, SequenceDataset) else "pooled"
    if model.consumes != expected:
        raise ValueError(
            f"checkpoint kind {chk.config.kind!r} consumes {model.consumes} data, "
            f"got {expected}"
        )
    logits = _forward_eval(model, ds, chk.scaler_mean, chk.scaler_std)
    probs = softmax(logits)
    return PredictionSet(
        list(ds.ids), ds.labels.copy(), logits.argmax(axis=1), probs[:, 1]
    )


def save_checkpoint(chk: Checkpoint, path) -> None:
    cfg = chk.config
    tensors = {
        "config/kind": np.array(float(CLASSIFIER_KINDS.index(cfg.kind))),
        "config/input_dim": np.array(float(cfg.input_dim)),
        "config/hidden": np.array(float(cfg.hidden)),
        "config/dropout": np.array(float(cfg.dropout)),
        "config/conv_channels": np.array(cfg.conv_channels, dtype=np.float64),
        "config/tf_layers": np.array(float(cfg.tf_layers)),
        "config/tf_heads": np.array(float(cfg.tf_heads)),
        "config/seed": np.array(float(cfg.seed)),
        "meta/epoch": np.array(float(chk.epoch)),
        "meta/metric_value": np.array(chk.metric_value),
        "scaler/mean": chk.scaler_mean,
        "scaler/std": chk.scaler_std,
    }
    for k, v in chk.params.items():
        tensors[f"param/{k}"] = v
    for k, v in chk.buffers.items():
        tensors[f"buffer/{k}"] = v
    formats.write_tensors(path, tensors)


def load_checkpoint(path) -> Checkpoint:
    tensors = formats.read_tensors(path)
    cfg = ClassifierConfig(
        kind=CLASSIFIER_KINDS[int(tensors["config/kind"])],
        input_dim=int(tensors["config/input_dim"]),
        hidden=int(tensors["config/hidden"]),
        dropout=float(tensors["config/dropout"]),
        conv_channels=tuple(int(c) for c in tensors["config/conv_channels"]),
        tf_layers=int(tensors["config/tf_layers"]),
        tf_heads=int(tensors["config/tf_heads"]),
        seed=int(tensors["config/seed"]),
    )
    params = {
        k.removeprefix("param/"): v for k, v in tensors.items() if k.startswith("param/")
    }
    buffers = {
        k.removeprefix("buffer/"): v
        for k, v in tensors.items()
        if k.startswith("buffer/")
    }
    return Checkpoint(
        config=cfg,
        params=params,
        buffers=buffers,
        scaler_mean=tensors["scaler/mean"],
        scaler_std=tensors["scaler/std"],
        epoch=int(tensors["meta/epoch"]),
        metric_value=float(tensors["meta/metric_value"]),
    )
