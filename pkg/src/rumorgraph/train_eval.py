"""Training protocol and evaluation metrics.

Training shuffles per epoch with a seeded generator, averages cross-entropy
over each batch, takes one AdamW step per batch, and early-stops when the
validation loss has gone `patience` consecutive epochs without a strict
improvement. The returned parameters are the best-validation-loss snapshot.
Everything is a pure function of (config, seed, data): rerunning is
bitwise-identical.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import numerics as nm
from .fileio import DataError, atomic_write, make_header
from .graph import FeaturedGraph
from .model import ModelConfig, ModelParams, forward, init_params
from .numerics import Tape, Tensor


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    lr: float = 0.01
    weight_decay: float = 0.01
    batch_size: int = 16
    max_epochs: int = 500
    patience: int = 50
    split: tuple[float, float, float] = (0.7, 0.2, 0.1)
    seed: int = 0
    loss_reduction: str = "mean"  # "mean" | "sum"

    def __post_init__(self):
        if self.patience < 1:
            raise DataError("patience must be >= 1")
        if self.batch_size < 1:
            raise DataError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise DataError("max_epochs must be >= 1")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise DataError(f"split must sum to 1, got {self.split}")
        if self.loss_reduction not in ("mean", "sum"):
            raise DataError(f"unknown loss_reduction {self.loss_reduction!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split"] = list(self.split)
        return d


def cross_entropy(logits: Tensor, label: int, tape: Tape | None = None) -> Tensor:
    """-log softmax(logits)[label] in log-sum-exp form; gradient is
    softmax(logits) - onehot(label)."""
    if logits.data.shape[0] != 1:
        raise nm.ShapeError(f"cross_entropy expects (1, k) logits, got {logits.data.shape}")
    k = logits.data.shape[1]
    if not 0 <= label < k:
        raise DataError(f"label {label} outside [0, {k})")
    z = logits.data[0]
    loss = nm.log_sum_exp(z) - float(z[label])
    out = Tensor([[loss]])
    out.requires_grad = logits.requires_grad
    if tape is not None and out.requires_grad:
        def backward(g):
            p = np.exp(z - z.max())
            p /= p.sum()
            p[label] -= 1.0
            return (g[0, 0] * p.reshape(1, -1),)
        tape.record(out, (logits,), backward)
    return out


def split_dataset(graphs: list, config: TrainConfig) -> tuple[list, list, list]:
    """Seeded shuffle, then floor-sized val/test with the remainder in train
    (10 items at 0.7/0.2/0.1 -> 7/2/1). Needs at least 10 items."""
    if len(graphs) < 10:
        raise DataError(f"need at least 10 graphs to split, got {len(graphs)}")
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(graphs))
    n = len(graphs)
    n_val = int(math.floor(config.split[1] * n))
    n_test = int(math.floor(config.split[2] * n))
    n_train = n - n_val - n_test
    shuffled = [graphs[i] for i in order]
    return (shuffled[:n_train], shuffled[n_train:n_train + n_val],
            shuffled[n_train + n_val:])


class EarlyStopper:
    """Strict-improvement patience counter over per-epoch losses."""

    def __init__(self, patience: int):
        if patience < 1:
            raise DataError("patience must be >= 1")
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.streak = 0

    def update(self, epoch: int, loss: float) -> bool:
        """Record this epoch's loss; True means stop after this epoch."""
        if loss < self.best:
            self.best = loss
            self.best_epoch = epoch
            self.streak = 0
            return False
        self.streak += 1
        return self.streak >= self.patience


@dataclass
class EpochStats:
    epoch: int  # 1-based
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainLog:
    epochs: list[EpochStats]
    best_epoch: int

    def to_dict(self) -> dict:
        return {"best_epoch": self.best_epoch,
                "epochs": [e.to_dict() for e in self.epochs]}


def _require_labeled(graphs: list[FeaturedGraph], where: str) -> None:
    for fg in graphs:
        if fg.label is None:
            raise DataError(f"{where}: graph {fg.graph.graph_id} has no label")


def _eval_loss_acc(params: ModelParams, graphs: list[FeaturedGraph]) -> tuple[float, float]:
    total = 0.0
    correct = 0
    for fg in graphs:
        logits = forward(fg, params, mode="eval").logits
        total += cross_entropy(logits, fg.label).item()
        if int(np.argmax(logits.data[0])) == fg.label:
            correct += 1
    return total / len(graphs), correct / len(graphs)


def train(config: TrainConfig, train_graphs: list[FeaturedGraph],
          val_graphs: list[FeaturedGraph],
          baseline: bool = False) -> tuple[ModelParams, TrainLog]:
    """Run the full protocol; returns the best-val-loss parameter snapshot
    and the per-epoch log."""
    if not train_graphs:
        raise DataError("empty training set")
    if not val_graphs:
        raise DataError("empty validation set")
    _require_labeled(train_graphs, "train")
    _require_labeled(val_graphs, "val")
    for fg in train_graphs + val_graphs:
        if not 0 <= fg.label < config.model.classes:
            raise DataError(f"graph {fg.graph.graph_id}: label {fg.label} outside "
                            f"[0, {config.model.classes})")

    params = init_params(config.model, seed=config.seed, baseline=baseline)
    state = nm.AdamWState(lr=config.lr, weight_decay=config.weight_decay)
    named = params.named_tensors()
    rng = np.random.default_rng(config.seed)
    stopper = EarlyStopper(config.patience)
    log: list[EpochStats] = []
    best_params = params.copy()

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_graphs))
        loss_sum = 0.0
        correct = 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            tape = Tape()
            losses = []
            for gi in batch:
                fg = train_graphs[gi]
                seed = int(rng.integers(0, 2**62))
                try:
                    result = forward(fg, params, mode="train", seed=seed, tape=tape)
                    losses.append(cross_entropy(result.logits, fg.label, tape))
                except nm.NonFiniteError as exc:
                    raise nm.NonFiniteError(
                        f"epoch {epoch}, graph {fg.graph.graph_id}: {exc}") from exc
                if int(np.argmax(result.logits.data[0])) == fg.label:
                    correct += 1
            if config.loss_reduction == "mean":
                batch_loss = nm.mean_scalars(losses, tape)
            else:
                batch_loss = nm.sum_scalars(losses, tape)
            loss_sum += sum(l.item() for l in losses)
            grads_by_tensor = tape.backward(batch_loss)
            grads = {name: grads_by_tensor[t] for name, t in named.items()
                     if t in grads_by_tensor}
            nm.adamw_step(named, grads, state)

        train_loss = loss_sum / len(train_graphs)
        train_acc = correct / len(train_graphs)
        val_loss, val_acc = _eval_loss_acc(params, val_graphs)
        log.append(EpochStats(epoch=epoch, train_loss=train_loss, train_acc=train_acc,
                              val_loss=val_loss, val_acc=val_acc))
        improved = val_loss < stopper.best
        stop = stopper.update(epoch, val_loss)
        if improved:
            best_params = params.copy()
        if stop:
            break

    return best_params, TrainLog(epochs=log, best_epoch=stopper.best_epoch)


# ---------------------------------------------------------------------------
# metrics

@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MetricsReport:
    accuracy: float
    micro_f1: float
    macro_f1: float
    per_class: list[ClassMetrics]
    confusion: list[list[int]]  # rows = true class, cols = predicted
    n_samples: int

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "micro_f1": self.micro_f1,
                "macro_f1": self.macro_f1, "n_samples": self.n_samples,
                "per_class": [c.to_dict() for c in self.per_class],
                "confusion": self.confusion}


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def compute_metrics(y_true, y_pred, n_classes: int) -> MetricsReport:
    """Confusion-matrix metrics. Per-class precision/recall/F1 define 0/0 as
    0; macro-F1 averages over all classes including absent ones; micro-F1
    pools TP/FP/FN (and equals accuracy for single-label classification)."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise DataError("y_true and y_pred must be equal-length vectors")
    if y_true.size == 0:
        raise DataError("no samples to score")
    if y_true.min() < 0 or y_true.max() >= n_classes or \
       y_pred.min() < 0 or y_pred.max() >= n_classes:
        raise DataError(f"labels outside [0, {n_classes})")
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(conf, (y_true, y_pred), 1)
    per_class = []
    tp_total = 0
    fp_total = 0
    fn_total = 0
    for c in range(n_classes):
        tp = int(conf[c, c])
        fp = int(conf[:, c].sum() - tp)
        fn = int(conf[c, :].sum() - tp)
        precision = _safe_div(tp, tp + fp)
        recall = _safe_div(tp, tp + fn)
        f1 = _safe_div(2 * tp, 2 * tp + fp + fn)
        per_class.append(ClassMetrics(precision=precision, recall=recall, f1=f1,
                                      support=int(conf[c, :].sum())))
        tp_total += tp
        fp_total += fp
        fn_total += fn
    accuracy = float(np.trace(conf)) / y_true.size
    micro = _safe_div(2 * tp_total, 2 * tp_total + fp_total + fn_total)
    macro = sum(c.f1 for c in per_class) / n_classes
    return MetricsReport(accuracy=accuracy, micro_f1=micro, macro_f1=macro,
                         per_class=per_class, confusion=conf.tolist(),
                         n_samples=int(y_true.size))


def evaluate(params: ModelParams, graphs: list[FeaturedGraph]) -> MetricsReport:
    """Eval-mode predictions scored against graph labels; argmax ties go to
    the lowest class index."""
    if not graphs:
        raise DataError("no graphs to evaluate")
    _require_labeled(graphs, "evaluate")
    y_true = [fg.label for fg in graphs]
    y_pred = []
    for fg in graphs:
        logits = forward(fg, params, mode="eval").logits
        y_pred.append(int(np.argmax(logits.data[0])))
    return compute_metrics(y_true, y_pred, params.config.classes)


# ---------------------------------------------------------------------------
# train log file

TRAINLOG_FORMAT = "train-log"


def write_trainlog(path, log: TrainLog, config: dict | None = None) -> None:
    import json as _json
    payload = make_header(TRAINLOG_FORMAT, config)
    payload.update(log.to_dict())
    with atomic_write(path) as fh:
        fh.write(_json.dumps(payload, indent=2) + "\n")


def read_trainlog(path) -> tuple[dict, TrainLog]:
    import json as _json
    from pathlib import Path
    p = Path(path)
    if not p.is_file():
        raise DataError(f"missing file: {p}")
    try:
        payload = _json.loads(p.read_text())
    except _json.JSONDecodeError as exc:
        raise DataError(f"{p}: invalid JSON: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != TRAINLOG_FORMAT:
        raise DataError(f"{p}: not a train log")
    try:
        epochs = [EpochStats(**e) for e in payload["epochs"]]
        log = TrainLog(epochs=epochs, best_epoch=int(payload["best_epoch"]))
    except (KeyError, TypeError) as exc:
        raise DataError(f"{p}: malformed train log: {exc}") from exc
    return payload, log


# ---------------------------------------------------------------------------
# curves

CURVES_FORMAT = "training-curves"
_CURVE_COLUMNS = ["epoch", "train_loss", "train_acc", "val_loss", "val_acc", "is_best"]


def export_curves(log: TrainLog, path, config: dict | None = None) -> None:
    """Plot-ready CSV, one row per epoch, exactly one is_best=1 row; floats
    carry full precision so a parse reproduces the log."""
    import json as _json
    with atomic_write(path) as fh:
        fh.write("# " + _json.dumps(make_header(CURVES_FORMAT, config)) + "\n")
        fh.write(",".join(_CURVE_COLUMNS) + "\n")
        for e in log.epochs:
            best = 1 if e.epoch == log.best_epoch else 0
            fh.write(f"{e.epoch},{e.train_loss!r},{e.train_acc!r},"
                     f"{e.val_loss!r},{e.val_acc!r},{best}\n")


def read_curves(path) -> TrainLog:
    import json as _json
    from pathlib import Path
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("# "):
        raise DataError(f"{path}: missing curves header")
    header = _json.loads(lines[0][2:])
    if header.get("format") != CURVES_FORMAT:
        raise DataError(f"{path}: unexpected format {header.get('format')!r}")
    if lines[1].split(",") != _CURVE_COLUMNS:
        raise DataError(f"{path}: unexpected columns {lines[1]!r}")
    epochs = []
    best_epoch = 0
    for ln in lines[2:]:
        cells = ln.split(",")
        if len(cells) != len(_CURVE_COLUMNS):
            raise DataError(f"{path}: bad row {ln!r}")
        e = EpochStats(epoch=int(cells[0]), train_loss=float(cells[1]),
                       train_acc=float(cells[2]), val_loss=float(cells[3]),
                       val_acc=float(cells[4]))
        if cells[5] == "1":
            best_epoch = e.epoch
        epochs.append(e)
    return TrainLog(epochs=epochs, best_epoch=best_epoch)
