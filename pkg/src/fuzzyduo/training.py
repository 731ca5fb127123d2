"""Exact backpropagation, gradient checking, and mini-batch training.

Gradients are derived by hand through the whole model: cross-entropy,
linear classifier, mean pooling, signed log compression, the softmax over
rule firing strengths, and the membership parameters via the log-domain
partials from :mod:`fuzzyduo.membership`. The Modified-Laplace |q - m|
kink uses the subgradient 0 at q == m; the finite-difference checker
skips entries whose query sits within 1e-4 of such a kink, where central
differences are meaningless.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset
from .inference import RuleBank
from .membership import MfFamily, gaussian_log_grads, modified_laplace_log_grads
from .model import (
    DuoModelParams,
    FuzzyFilterParams,
    ModelShape,
    _check_trial,
    _FilterCache,
    _forward_batch,
)
from .validation import (
    DimensionError,
    DivergenceError,
    InvalidInputError,
    InvalidLabelError,
    InvalidParameterError,
)

HISTORY_HEADER = "epoch,mean_loss,accuracy"

_KINK_RADIUS = 1e-4


@dataclass
class GradientSet:
    """Loss gradients, one array per parameter tensor, shape-matched."""

    spatial_centers: np.ndarray
    spatial_width_raw: np.ndarray
    spatial_w_query: np.ndarray
    spatial_w_value: np.ndarray
    temporal_centers: np.ndarray
    temporal_width_raw: np.ndarray
    temporal_w_query: np.ndarray
    temporal_w_value: np.ndarray
    classifier_weights: np.ndarray
    classifier_bias: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        return [
            self.spatial_centers, self.spatial_width_raw,
            self.spatial_w_query, self.spatial_w_value,
            self.temporal_centers, self.temporal_width_raw,
            self.temporal_w_query, self.temporal_w_value,
            self.classifier_weights, self.classifier_bias,
        ]


@dataclass(frozen=True)
class TrainConfig:
    """Mini-batch training hyperparameters."""

    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise InvalidParameterError("epochs must be >= 0")
        if self.batch_size < 1:
            raise InvalidParameterError("batch_size must be >= 1")
        if not (self.learning_rate > 0):
            raise InvalidParameterError("learning_rate must be > 0")
        if self.optimizer not in ("sgd", "adam"):
            raise InvalidParameterError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        b1, b2 = self.adam_betas
        if not (0.0 <= b1 < 1.0 and 0.0 <= b2 < 1.0):
            raise InvalidParameterError("adam betas must lie in [0, 1)")
        if not (self.adam_eps > 0):
            raise InvalidParameterError("adam_eps must be > 0")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    mean_loss: float
    accuracy: float


def _param_arrays(params: DuoModelParams) -> list[np.ndarray]:
    """Parameter tensors in the canonical order shared with GradientSet.arrays."""
    return [
        params.spatial.bank.centers, params.spatial.bank.width_raw,
        params.spatial.w_query, params.spatial.w_value,
        params.temporal.bank.centers, params.temporal.bank.width_raw,
        params.temporal.w_query, params.temporal.w_value,
        params.classifier_weights, params.classifier_bias,
    ]


def clone_params(params: DuoModelParams) -> DuoModelParams:
    """Deep copy so training never mutates the caller's parameters."""
    def copy_filter(f: FuzzyFilterParams) -> FuzzyFilterParams:
        return FuzzyFilterParams(
            bank=RuleBank(
                centers=f.bank.centers.copy(),
                width_raw=f.bank.width_raw.copy(),
                family=f.bank.family,
                tie_widths_across_rules=f.bank.tie_widths_across_rules,
            ),
            w_query=f.w_query.copy(),
            w_value=f.w_value.copy(),
        )

    return DuoModelParams(
        spatial=copy_filter(params.spatial),
        temporal=copy_filter(params.temporal),
        classifier_weights=params.classifier_weights.copy(),
        classifier_bias=params.classifier_bias.copy(),
    )


def init_params(shape: ModelShape, seed: int) -> DuoModelParams:
    """Deterministic initialization.

    Centers are uniform in [-1, 1] (inputs are expected standardized),
    raw widths start at 0 (effective width 1), projections are uniform in
    [-sqrt(3/D), sqrt(3/D)], and the classifier starts at zero so early
    updates shape it before the filters move.
    """
    rng = np.random.default_rng(seed)

    def make_filter(rules: int, dim: int) -> FuzzyFilterParams:
        centers = rng.uniform(-1.0, 1.0, size=(rules, dim))
        bound = np.sqrt(6.0 / (2.0 * dim))
        w_query = rng.uniform(-bound, bound, size=(rules, dim, dim))
        w_value = rng.uniform(-bound, bound, size=(rules, dim, dim))
        bank = RuleBank(
            centers=centers,
            width_raw=np.zeros((rules, dim)),
            family=shape.family,
            tie_widths_across_rules=shape.tie_widths,
        )
        return FuzzyFilterParams(bank=bank, w_query=w_query, w_value=w_value)

    spatial = make_filter(shape.rules_spatial, shape.num_channels)
    temporal = make_filter(shape.rules_temporal, shape.num_timesteps)
    width = shape.feature_width
    return DuoModelParams(
        spatial=spatial,
        temporal=temporal,
        classifier_weights=np.zeros((shape.num_classes, width)),
        classifier_bias=np.zeros(shape.num_classes),
    )


# --------------------------------------------------------------------------
# Backward pass
# --------------------------------------------------------------------------


def _filter_backward(
    p: FuzzyFilterParams, cache: _FilterCache, d_pooled: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (centers, width_raw, w_query, w_value) for one filter."""
    num_slices = cache.slices.shape[1]
    strengths = cache.strengths
    d_out = (d_pooled[:, np.newaxis, :, :] / num_slices) / (1.0 + np.abs(cache.outputs))
    d_values = d_out * strengths[..., np.newaxis]
    d_strengths = (d_out * cache.values).sum(axis=-1)
    # softmax backward over the rule axis
    d_logs = strengths * (d_strengths - (d_strengths * strengths).sum(axis=-1, keepdims=True))

    widths = p.bank.widths
    if p.bank.family is MfFamily.MODIFIED_LAPLACE:
        g_center, g_width = modified_laplace_log_grads(cache.diff, 0.0, widths)
    else:
        g_center, g_width = gaussian_log_grads(cache.diff, 0.0, widths)
    d_centers = (d_logs[..., np.newaxis] * g_center).sum(axis=(0, 1))
    d_width_raw = (d_logs[..., np.newaxis] * g_width).sum(axis=(0, 1)) * widths
    d_query = -d_logs[..., np.newaxis] * g_center

    rules, dim = p.num_rules, p.num_features
    x_flat = cache.slices.reshape(-1, dim)
    d_w_query = (d_query.reshape(-1, rules * dim).T @ x_flat).reshape(rules, dim, dim)
    d_w_value = (d_values.reshape(-1, rules * dim).T @ x_flat).reshape(rules, dim, dim)
    return d_centers, d_width_raw, d_w_query, d_w_value


def _batch_loss_grads(
    trials: np.ndarray, labels: np.ndarray, params: DuoModelParams
) -> tuple[float, GradientSet]:
    """Mean cross-entropy over the batch and its exact gradient."""
    batch = trials.shape[0]
    logits, features, cache_s, cache_t = _forward_batch(trials, params)
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1)
    losses = np.log(total) - shifted[np.arange(batch), labels]
    probs = exp / total[:, np.newaxis]
    d_logits = probs
    d_logits[np.arange(batch), labels] -= 1.0

    d_weights = d_logits.T @ features
    d_bias = d_logits.sum(axis=0)
    d_features = d_logits @ params.classifier_weights
    split = params.spatial.num_rules * params.spatial.num_features
    d_pooled_s = d_features[:, :split].reshape(batch, params.spatial.num_rules, -1)
    d_pooled_t = d_features[:, split:].reshape(batch, params.temporal.num_rules, -1)

    gs = _filter_backward(params.spatial, cache_s, d_pooled_s)
    gt = _filter_backward(params.temporal, cache_t, d_pooled_t)
    grads = GradientSet(
        spatial_centers=gs[0], spatial_width_raw=gs[1],
        spatial_w_query=gs[2], spatial_w_value=gs[3],
        temporal_centers=gt[0], temporal_width_raw=gt[1],
        temporal_w_query=gt[2], temporal_w_value=gt[3],
        classifier_weights=d_weights, classifier_bias=d_bias,
    )
    for arr in grads.arrays():
        arr /= batch
    return float(losses.mean()), grads


def backward(trial, label: int, params: DuoModelParams) -> tuple[float, GradientSet]:
    """Loss and exact analytic gradients for a single labeled trial."""
    trial = _check_trial(trial, params)
    label = int(label)
    if not (0 <= label < params.num_classes):
        raise InvalidLabelError(f"label {label} out of range for {params.num_classes} classes")
    return _batch_loss_grads(trial[np.newaxis], np.array([label]), params)


def finite_diff_check(trial, label: int, params: DuoModelParams, step: float) -> float:
    """Largest relative disagreement between analytic and central-difference gradients.

    Entries whose magnitudes are both below 1e-8 are ignored, as are
    Modified-Laplace parameters whose query coordinate sits within 1e-4 of
    its center for some slice (the kink makes difference quotients invalid
    there). Perturbed entries are restored exactly.
    """
    if step == 0 or not (1e-8 <= step <= 1e-3):
        raise InvalidParameterError(f"step must lie in [1e-8, 1e-3], got {step}")
    trial = _check_trial(trial, params)
    params = clone_params(params)
    _, grads = backward(trial, label, params)

    _, _, cache_s, cache_t = _forward_batch(trial[np.newaxis], params)
    hot_s = _kink_mask(params.spatial, cache_s)
    hot_t = _kink_mask(params.temporal, cache_t)
    # (grad array, param array, per-entry skip mask or None)
    entries = [
        (grads.spatial_centers, params.spatial.bank.centers, hot_s),
        (grads.spatial_width_raw, params.spatial.bank.width_raw, hot_s),
        (grads.spatial_w_query, params.spatial.w_query, _expand_to_rows(hot_s)),
        (grads.spatial_w_value, params.spatial.w_value, None),
        (grads.temporal_centers, params.temporal.bank.centers, hot_t),
        (grads.temporal_width_raw, params.temporal.bank.width_raw, hot_t),
        (grads.temporal_w_query, params.temporal.w_query, _expand_to_rows(hot_t)),
        (grads.temporal_w_value, params.temporal.w_value, None),
        (grads.classifier_weights, params.classifier_weights, None),
        (grads.classifier_bias, params.classifier_bias, None),
    ]
    max_rel = 0.0
    for grad_arr, param_arr, skip in entries:
        flat_param = param_arr.reshape(-1)
        flat_grad = grad_arr.reshape(-1)
        flat_skip = None if skip is None else skip.reshape(-1)
        for idx in range(flat_param.shape[0]):
            if flat_skip is not None and flat_skip[idx]:
                continue
            original = flat_param[idx]
            flat_param[idx] = original + step
            loss_plus = _loss_only(trial, label, params)
            flat_param[idx] = original - step
            loss_minus = _loss_only(trial, label, params)
            flat_param[idx] = original
            numeric = (loss_plus - loss_minus) / (2.0 * step)
            analytic = flat_grad[idx]
            denom = abs(analytic) + abs(numeric)
            if denom > 1e-8:
                max_rel = max(max_rel, abs(analytic - numeric) / denom)
    return max_rel


def _loss_only(trial: np.ndarray, label: int, params: DuoModelParams) -> float:
    logits, _, _, _ = _forward_batch(trial[np.newaxis], params)
    shifted = logits[0] - logits[0].max()
    return float(np.log(np.exp(shifted).sum()) - shifted[label])


def _kink_mask(p: FuzzyFilterParams, cache: _FilterCache) -> np.ndarray | None:
    """(R, D) mask of Modified-Laplace entries too close to a |q - m| kink."""
    if p.bank.family is not MfFamily.MODIFIED_LAPLACE:
        return None
    return np.abs(cache.diff).min(axis=(0, 1)) < _KINK_RADIUS


def _expand_to_rows(hot: np.ndarray | None) -> np.ndarray | None:
    """Query-projection row (r, d, :) feeds query coordinate (r, d)."""
    if hot is None:
        return None
    return np.repeat(hot[:, :, np.newaxis], hot.shape[1], axis=2)


# --------------------------------------------------------------------------
# Optimization loop
# --------------------------------------------------------------------------


def _apply_tied_widths(params: DuoModelParams, grads: GradientSet) -> None:
    """Sum width gradients across rules so tied rows move together."""
    for f, g in (
        (params.spatial, grads.spatial_width_raw),
        (params.temporal, grads.temporal_width_raw),
    ):
        if f.bank.tie_widths_across_rules:
            g[:] = g.sum(axis=0, keepdims=True)


def fit(
    dataset: Dataset, config: TrainConfig, params: DuoModelParams
) -> tuple[DuoModelParams, list[EpochStats]]:
    """Mini-batch gradient descent; returns trained parameters and per-epoch stats.

    Fully deterministic for a fixed (dataset order, config, params): batch
    gradients are means, shuffling uses the config seed, and each epoch's
    history row is a full post-update pass over the training set.
    """
    if len(dataset) == 0:
        raise InvalidInputError("cannot fit on an empty dataset")
    signals = dataset.signals()
    labels = dataset.labels()
    if signals.shape[1:] != (params.num_channels, params.num_timesteps):
        raise DimensionError(
            f"dataset trials {signals.shape[1:]} do not match model "
            f"({params.num_channels}, {params.num_timesteps})"
        )
    if labels.max() >= params.num_classes:
        raise InvalidLabelError(f"label {labels.max()} out of range for {params.num_classes} classes")

    params = clone_params(params)
    tensors = _param_arrays(params)
    rng = np.random.default_rng(config.seed)
    beta1, beta2 = config.adam_betas
    moment1 = [np.zeros_like(t) for t in tensors]
    moment2 = [np.zeros_like(t) for t in tensors]
    adam_step = 0

    history: list[EpochStats] = []
    n = signals.shape[0]
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            loss, grads = _batch_loss_grads(signals[batch], labels[batch], params)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            _apply_tied_widths(params, grads)
            if config.optimizer == "sgd":
                for tensor, grad in zip(tensors, grads.arrays()):
                    tensor -= config.learning_rate * grad
            else:
                adam_step += 1
                correction1 = 1.0 - beta1**adam_step
                correction2 = 1.0 - beta2**adam_step
                for tensor, grad, m1, m2 in zip(tensors, grads.arrays(), moment1, moment2):
                    m1 *= beta1
                    m1 += (1.0 - beta1) * grad
                    m2 *= beta2
                    m2 += (1.0 - beta2) * grad * grad
                    tensor -= config.learning_rate * (m1 / correction1) / (
                        np.sqrt(m2 / correction2) + config.adam_eps
                    )
        accuracy, mean_loss = evaluate(dataset, params)
        history.append(EpochStats(epoch=epoch, mean_loss=mean_loss, accuracy=accuracy))
    return params, history


def evaluate(dataset: Dataset, params: DuoModelParams, chunk_size: int = 256) -> tuple[float, float]:
    """(accuracy, mean cross-entropy) of the model over a dataset."""
    if len(dataset) == 0:
        raise InvalidInputError("cannot evaluate an empty dataset")
    signals = dataset.signals()
    labels = dataset.labels()
    if signals.shape[1:] != (params.num_channels, params.num_timesteps):
        raise DimensionError(
            f"dataset trials {signals.shape[1:]} do not match model "
            f"({params.num_channels}, {params.num_timesteps})"
        )
    if labels.max() >= params.num_classes:
        raise InvalidLabelError(f"label {labels.max()} out of range for {params.num_classes} classes")
    total_loss = 0.0
    correct = 0
    for start in range(0, signals.shape[0], chunk_size):
        chunk = signals[start : start + chunk_size]
        chunk_labels = labels[start : start + chunk_size]
        logits, _, _, _ = _forward_batch(chunk, params)
        shifted = logits - logits.max(axis=1, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=1))
        total_loss += float((lse - shifted[np.arange(chunk.shape[0]), chunk_labels]).sum())
        correct += int((logits.argmax(axis=1) == chunk_labels).sum())
    n = signals.shape[0]
    return correct / n, total_loss / n


def write_history_csv(history: list[EpochStats], path) -> None:
    lines = [HISTORY_HEADER]
    lines += [f"{row.epoch},{row.mean_loss!r},{row.accuracy!r}" for row in history]
    Path(path).write_text("\n".join(lines) + "\n")


def load_history_csv(path) -> list[EpochStats]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != HISTORY_HEADER:
        raise InvalidInputError(f"{path}: expected header {HISTORY_HEADER!r}")
    out = []
    for line in lines[1:]:
        if not line.strip():
            continue
        epoch, loss, acc = line.split(",")
        out.append(EpochStats(epoch=int(epoch), mean_loss=float(loss), accuracy=float(acc)))
    return out
