"""Two-stage training (binary gate, then multi-label transfer head) and metrics.

Stage 1 trains a softmax(2) gate on "any bug label set vs none"; stage 2
reuses the trained feature stack, freezes it, and fits a fresh sigmoid head
on the bug-positive samples with optional inverse-frequency label weights.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .encoder import EncodingConfig, encode_bytecode
from .errors import (
    DivergenceDetectedError,
    EmptySplitError,
    EmptyTrainSetError,
    FreezeIndexInvalidError,
    HeadArityMismatchError,
    ModelIncompatibleError,
)
from .ingest import ContractRecord, DatasetManifest
from .nn import (
    Conv,
    Dense,
    NetworkConfig,
    Parameters,
    SGDOptimizer,
    backward,
    forward,
    init_params,
    loss as compute_loss,
    predict_labels,
)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    learning_rate: float
    batch_size: int = 32
    seed: int = 0
    stage: str = "binary"  # "binary" or "multilabel"
    freeze: tuple[int, ...] = ()
    threshold: float = 0.5
    label_weighting: str = "none"  # "none" or "inverse_frequency"
    momentum: float = 0.9
    weight_decay: float = 0.0
    # stop once train accuracy reaches this value ("within N epochs" runs)
    stop_at_train_accuracy: Optional[float] = None
    # multilabel stage trains on bug-positive samples only unless set
    include_negatives: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.stage not in ("binary", "multilabel"):
            raise ValueError(f"unknown stage {self.stage!r}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    mean_loss: float
    train_accuracy: float
    train_precision: float
    train_recall: float
    val_accuracy: Optional[float]
    wall_ms: float


@dataclass
class TrainingLog:
    epochs: list[EpochRecord] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["epoch", "loss", "acc", "prec", "rec", "wall_ms"])
        for e in self.epochs:
            w.writerow(
                [e.epoch, e.mean_loss, e.train_accuracy, e.train_precision,
                 e.train_recall, round(e.wall_ms, 3)]
            )
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps([e.__dict__ for e in self.epochs])


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    loss: float
    tp: int
    fp: int
    fn: int
    tn: int
    subset_accuracy: Optional[float] = None
    per_label: Optional[tuple[dict, ...]] = None


@dataclass(frozen=True)
class TrainedModel:
    net: NetworkConfig
    params: Parameters
    encoding_hash: str


# --- encoding helpers ---------------------------------------------------------


def encode_records(
    records: Sequence[ContractRecord], encoding: EncodingConfig
) -> np.ndarray:
    if not records:
        c, h, w = 3, encoding.target_size[0], encoding.target_size[1]
        return np.zeros((0, c, h, w))
    return np.stack([encode_bytecode(r.bytecode, encoding) for r in records])


def _targets_for_stage(records: Sequence[ContractRecord], stage: str):
    if stage == "binary":
        return np.array([1 if r.is_buggy else 0 for r in records], dtype=np.int64)
    return np.array([r.labels for r in records], dtype=np.float64)


# --- confusion counts ----------------------------------------------------------


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 1.0


def _counts(pred: np.ndarray, truth: np.ndarray) -> tuple[int, int, int, int]:
    tp = int(np.sum((pred == 1) & (truth == 1)))
    fp = int(np.sum((pred == 1) & (truth == 0)))
    fn = int(np.sum((pred == 0) & (truth == 1)))
    tn = int(np.sum((pred == 0) & (truth == 0)))
    return tp, fp, fn, tn


def metrics_from_predictions(
    pred, truth, loss_value: float = float("nan"), head: str = "softmax"
) -> Metrics:
    """Confusion-matrix metrics; multilabel gets micro averages + subset accuracy."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if head == "softmax":
        tp, fp, fn, tn = _counts(pred, truth)
        return Metrics(
            accuracy=(tp + tn) / max(len(truth), 1),
            precision=_safe_div(tp, tp + fp),
            recall=_safe_div(tp, tp + fn),
            loss=loss_value,
            tp=tp, fp=fp, fn=fn, tn=tn,
        )
    per_label = []
    for j in range(truth.shape[1]):
        tp, fp, fn, tn = _counts(pred[:, j], truth[:, j])
        per_label.append({"tp": tp, "fp": fp, "fn": fn, "tn": tn})
    tp = sum(d["tp"] for d in per_label)
    fp = sum(d["fp"] for d in per_label)
    fn = sum(d["fn"] for d in per_label)
    tn = sum(d["tn"] for d in per_label)
    subset = float(np.mean(np.all(pred == truth, axis=1))) if len(truth) else 1.0
    return Metrics(
        accuracy=(tp + tn) / max(tp + fp + fn + tn, 1),
        precision=_safe_div(tp, tp + fp),
        recall=_safe_div(tp, tp + fn),
        loss=loss_value,
        tp=tp, fp=fp, fn=fn, tn=tn,
        subset_accuracy=subset,
        per_label=tuple(per_label),
    )


# --- label weighting -----------------------------------------------------------


WEIGHT_CLAMP = (1.0, 100.0)


def label_weights(manifest: DatasetManifest, mode: str = "inverse_frequency") -> np.ndarray:
    """Per-label positive-term weights: N_neg / max(N_pos, 1), clamped to [1, 100]."""
    arity = len(manifest.vocabulary)
    if mode == "none":
        return np.ones(arity)
    labels = np.array([r.labels for r in manifest.records], dtype=np.int64)
    n_pos = labels.sum(axis=0)
    n_neg = len(labels) - n_pos
    w = n_neg / np.maximum(n_pos, 1)
    return np.clip(w, *WEIGHT_CLAMP)


# --- core fit loop -------------------------------------------------------------


def _param_layer_indices(net: NetworkConfig) -> list[int]:
    return [i for i, l in enumerate(net.layers) if isinstance(l, (Conv, Dense))]


def _validate_freeze(net: NetworkConfig, freeze: Sequence[int]) -> frozenset[int]:
    bad = set(freeze) - set(_param_layer_indices(net))
    if bad:
        raise FreezeIndexInvalidError(f"indices {sorted(bad)} are not parameterized layers")
    return frozenset(freeze)


def _head_only_split(net: NetworkConfig, freeze: frozenset[int]) -> Optional[int]:
    """If only the final dense layer trains, return its index for prefix caching."""
    param_layers = _param_layer_indices(net)
    if not param_layers or not isinstance(net.layers[param_layers[-1]], Dense):
        return None
    head_idx = param_layers[-1]
    if head_idx != len(net.layers) - 1:
        return None
    if set(param_layers[:-1]) == set(freeze):
        return head_idx
    return None


def _prefix_forward(net: NetworkConfig, params: Parameters, x: np.ndarray, upto: int):
    """Activations fed into layer `upto`, chunked to bound memory."""
    outs = []
    for start in range(0, len(x), 64):
        _, cache = forward(net, params, x[start : start + 64])
        outs.append(cache.layer_inputs[upto])
    return np.concatenate(outs) if outs else x


def _fit(
    x: np.ndarray,
    targets: np.ndarray,
    net: NetworkConfig,
    params: Parameters,
    cfg: TrainConfig,
    weights: Optional[np.ndarray],
    x_val: Optional[np.ndarray] = None,
    targets_val: Optional[np.ndarray] = None,
) -> tuple[Parameters, TrainingLog]:
    freeze = _validate_freeze(net, cfg.freeze)
    head = net.head[0]

    # When everything but the head dense layer is frozen, precompute the
    # frozen features once and train the head as a tiny standalone net.
    head_idx = _head_only_split(net, freeze)
    if head_idx is not None and len(freeze) > 0:
        feats = _prefix_forward(net, params, x, head_idx)
        head_net = NetworkConfig(
            name=net.name + "/head",
            input_shape=tuple(feats.shape[1:]),
            layers=(net.layers[head_idx],),
            head=net.head,
        )
        head_params = Parameters({0: params.tensors[head_idx]})
        feats_val = (
            _prefix_forward(net, params, x_val, head_idx) if x_val is not None else None
        )
        head_params, log = _fit(
            feats, targets, head_net, head_params, replace(cfg, freeze=()), weights,
            feats_val, targets_val,
        )
        params.tensors[head_idx] = head_params.tensors[0]
        return params, log

    rng = np.random.default_rng(cfg.seed)
    opt = SGDOptimizer(cfg.learning_rate, cfg.momentum, cfg.weight_decay)
    log = TrainingLog()
    n = len(x)
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        losses = []
        preds = np.zeros_like(targets)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            out, cache = forward(net, params, x[idx])
            batch_loss = compute_loss(out, targets[idx], head, weights)
            if not np.isfinite(batch_loss):
                raise DivergenceDetectedError(f"non-finite loss at epoch {epoch}")
            losses.append(batch_loss)
            preds[idx] = predict_labels(out, head, cfg.threshold)
            grads = backward(net, params, cache, targets[idx], weights)
            opt.step(params, grads, freeze)
        m = metrics_from_predictions(preds, targets, float(np.mean(losses)), head)
        val_acc = None
        if x_val is not None and len(x_val):
            out_val, _ = forward(net, params, x_val)
            vm = metrics_from_predictions(
                predict_labels(out_val, head, cfg.threshold), targets_val,
                compute_loss(out_val, targets_val, head, weights), head,
            )
            val_acc = vm.accuracy
        log.epochs.append(
            EpochRecord(
                epoch=epoch,
                mean_loss=m.loss,
                train_accuracy=m.accuracy,
                train_precision=m.precision,
                train_recall=m.recall,
                val_accuracy=val_acc,
                wall_ms=(time.perf_counter() - t0) * 1000.0,
            )
        )
        if (
            cfg.stop_at_train_accuracy is not None
            and m.accuracy >= cfg.stop_at_train_accuracy
        ):
            break
    return params, log


# --- public API -----------------------------------------------------------------


def train(
    manifest: DatasetManifest,
    net: NetworkConfig,
    cfg: TrainConfig,
    encoding: EncodingConfig = EncodingConfig(),
    eval_val: bool = False,
) -> tuple[Parameters, TrainingLog]:
    """Train from scratch on the manifest's train split; deterministic given seed."""
    records = list(manifest.subset("train"))
    if cfg.stage == "multilabel" and not cfg.include_negatives:
        records = [r for r in records if r.is_buggy]
    if not records:
        raise EmptyTrainSetError("train split is empty")
    x = encode_records(records, encoding)
    targets = _targets_for_stage(records, cfg.stage)
    weights = None
    if cfg.stage == "multilabel" and cfg.label_weighting == "inverse_frequency":
        weights = label_weights(manifest)
    x_val = targets_val = None
    if eval_val:
        val_records = list(manifest.subset("val"))
        if val_records:
            x_val = encode_records(val_records, encoding)
            targets_val = _targets_for_stage(val_records, cfg.stage)
    params = init_params(net, cfg.seed)
    return _fit(x, targets, net, params, cfg, weights, x_val, targets_val)


def transfer_learn(
    base: Parameters,
    net: NetworkConfig,
    new_head_labels: int,
    freeze: Sequence[int],
    manifest: DatasetManifest,
    cfg: TrainConfig,
    encoding: EncodingConfig = EncodingConfig(),
) -> tuple[NetworkConfig, Parameters, TrainingLog]:
    """Swap the head for a fresh sigmoid(num_labels) dense layer and retrain.

    Frozen layer tensors are carried over from `base` and stay bit-identical.
    """
    if new_head_labels < 1:
        raise HeadArityMismatchError("new head needs at least one label")
    if not isinstance(net.layers[-1], Dense):
        raise HeadArityMismatchError("network must end in a dense head layer")
    head_idx = len(net.layers) - 1
    new_net = NetworkConfig(
        name=net.name + "-multilabel",
        input_shape=net.input_shape,
        layers=net.layers[:-1] + (Dense(new_head_labels),),
        head=("sigmoid", new_head_labels),
    )
    freeze_set = _validate_freeze(new_net, freeze)
    if head_idx in freeze_set:
        raise FreezeIndexInvalidError("the new head layer cannot be frozen")

    params = init_params(new_net, cfg.seed + 1)  # fresh head init
    for i in range(head_idx):
        if i in base.tensors:
            params.tensors[i] = {k: v.copy() for k, v in base.tensors[i].items()}

    records = list(manifest.subset("train"))
    if not cfg.include_negatives:
        records = [r for r in records if r.is_buggy]
    if not records:
        raise EmptyTrainSetError("no bug-positive samples in the train split")
    x = encode_records(records, encoding)
    targets = _targets_for_stage(records, "multilabel")
    weights = None
    if cfg.label_weighting == "inverse_frequency":
        weights = label_weights(manifest)
    fit_cfg = replace(cfg, stage="multilabel", freeze=tuple(freeze_set))
    params, log = _fit(x, targets, new_net, params, fit_cfg, weights)
    return new_net, params, log


def evaluate(
    params: Parameters,
    net: NetworkConfig,
    manifest: DatasetManifest,
    split_name: str = "test",
    threshold: float = 0.5,
    encoding: EncodingConfig = EncodingConfig(),
    weights: Optional[np.ndarray] = None,
) -> Metrics:
    records = list(manifest.subset(split_name))
    if not records:
        raise EmptySplitError(f"split {split_name!r} is empty")
    x = encode_records(records, encoding)
    stage = "binary" if net.head[0] == "softmax" else "multilabel"
    targets = _targets_for_stage(records, stage)
    out, _ = forward(net, params, x)
    pred = predict_labels(out, net.head[0], threshold)
    return metrics_from_predictions(
        pred, targets, compute_loss(out, targets, net.head[0], weights), net.head[0]
    )


def two_stage_infer(
    binary_model: TrainedModel,
    multilabel_model: TrainedModel,
    image_tensor: np.ndarray,
    threshold: float = 0.5,
) -> tuple[float, np.ndarray]:
    """Gate on bug probability, then report per-label sigmoid confidences.

    Below-threshold inputs skip stage 2 entirely and report all-zero
    confidences.
    """
    if binary_model.encoding_hash != multilabel_model.encoding_hash:
        raise ModelIncompatibleError("stage models were trained with different encoders")
    out, _ = forward(binary_model.net, binary_model.params, image_tensor)
    is_buggy = float(out[0, 1])
    num_labels = multilabel_model.net.head[1]
    if is_buggy < threshold:
        return is_buggy, np.zeros(num_labels)
    confidences, _ = forward(multilabel_model.net, multilabel_model.params, image_tensor)
    return is_buggy, confidences[0]
