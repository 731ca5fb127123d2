"""Dual-filter fuzzy model: forward pass, loss, prediction, serialization.

One fuzzy filter holds a rule bank plus per-rule query and value
projections. For an input slice x, rule r's membership degrees are
evaluated at the query projection ``w_query[r] @ x``, normalized across
rules by softmax over log firing strengths, and scale the value projection
``w_value[r] @ x``. The spatial filter consumes the channel vector at each
timestep and pools over time; the temporal filter consumes each channel's
time-course and pools over channels. Pooled outputs pass through a
sign-preserving log compression, are flattened (spatial block first), and
feed a single linear classifier trained with cross-entropy.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .data import ChannelStats
from .inference import RuleBank
from .membership import MfFamily
from .validation import (
    DatasetFormatError,
    DimensionError,
    InvalidInputError,
    InvalidLabelError,
    as_matrix,
    as_vector,
)

MODEL_FORMAT_VERSION = 1
_MODEL_MAGIC = b"FUZZYDUO"


@dataclass
class FuzzyFilterParams:
    """One filter: rule bank plus per-rule query/value projection matrices."""

    bank: RuleBank
    w_query: np.ndarray  # (R, D, D)
    w_value: np.ndarray  # (R, D, D)

    def __post_init__(self):
        self.w_query = np.asarray(self.w_query, dtype=np.float64)
        self.w_value = np.asarray(self.w_value, dtype=np.float64)
        r, d = self.bank.num_rules, self.bank.num_features
        expected = (r, d, d)
        if self.w_query.shape != expected or self.w_value.shape != expected:
            raise DimensionError(
                f"projections must have shape {expected}, got "
                f"w_query {self.w_query.shape}, w_value {self.w_value.shape}"
            )
        if not (np.all(np.isfinite(self.w_query)) and np.all(np.isfinite(self.w_value))):
            raise InvalidInputError("projection matrices contain non-finite entries")

    @property
    def num_rules(self) -> int:
        return self.bank.num_rules

    @property
    def num_features(self) -> int:
        return self.bank.num_features


@dataclass(frozen=True)
class ModelShape:
    """Static architecture description used to allocate parameters."""

    num_channels: int
    num_timesteps: int
    num_classes: int
    rules_spatial: int = 5
    rules_temporal: int = 5
    family: MfFamily = MfFamily.MODIFIED_LAPLACE
    tie_widths: bool = False

    def __post_init__(self):
        for name in ("num_channels", "num_timesteps", "rules_spatial", "rules_temporal"):
            if getattr(self, name) < 1:
                raise InvalidInputError(f"{name} must be >= 1")
        if self.num_classes < 2:
            raise InvalidInputError("num_classes must be >= 2")

    @property
    def feature_width(self) -> int:
        return self.rules_spatial * self.num_channels + self.rules_temporal * self.num_timesteps


@dataclass
class DuoModelParams:
    """Full trainable parameter set: two filters plus the linear classifier."""

    spatial: FuzzyFilterParams
    temporal: FuzzyFilterParams
    classifier_weights: np.ndarray  # (M, R_s*C + R_t*T)
    classifier_bias: np.ndarray  # (M,)

    def __post_init__(self):
        self.classifier_weights = as_matrix(self.classifier_weights, "classifier_weights")
        self.classifier_bias = as_vector(self.classifier_bias, "classifier_bias")
        width = (
            self.spatial.num_rules * self.spatial.num_features
            + self.temporal.num_rules * self.temporal.num_features
        )
        m = self.classifier_bias.shape[0]
        if m < 2:
            raise InvalidInputError("classifier must have at least 2 classes")
        if self.classifier_weights.shape != (m, width):
            raise DimensionError(
                f"classifier_weights must have shape {(m, width)}, got {self.classifier_weights.shape}"
            )

    @property
    def num_channels(self) -> int:
        return self.spatial.num_features

    @property
    def num_timesteps(self) -> int:
        return self.temporal.num_features

    @property
    def num_classes(self) -> int:
        return self.classifier_bias.shape[0]

    @property
    def shape(self) -> ModelShape:
        return ModelShape(
            num_channels=self.num_channels,
            num_timesteps=self.num_timesteps,
            num_classes=self.num_classes,
            rules_spatial=self.spatial.num_rules,
            rules_temporal=self.temporal.num_rules,
            family=self.spatial.bank.family,
            tie_widths=self.spatial.bank.tie_widths_across_rules,
        )


def signed_log1p(y):
    """Sign-preserving log compression sign(y) * ln(1 + |y|).

    Odd, strictly monotone, slope 1 at the origin, with derivative
    1 / (1 + |y|) everywhere; keeps filter outputs bounded for the
    classifier without losing sign information.
    """
    y = np.asarray(y, dtype=np.float64)
    return np.sign(y) * np.log1p(np.abs(y))


# --------------------------------------------------------------------------
# Batched forward internals. Slices are stacked along leading axes so one
# trial and a whole batch round identically; the public single-trial
# operations below are thin views over these.
# --------------------------------------------------------------------------


@dataclass
class _FilterCache:
    slices: np.ndarray  # (B, K, D)
    diff: np.ndarray  # (B, K, R, D) query minus center
    strengths: np.ndarray  # (B, K, R) normalized firing strengths
    values: np.ndarray  # (B, K, R, D) value projections
    outputs: np.ndarray  # (B, K, R, D) strengths * values, pre-compression


def _project(w: np.ndarray, slices: np.ndarray) -> np.ndarray:
    """Apply R per-rule (D, D) maps to (..., D) slices -> (..., R, D)."""
    r, d, _ = w.shape
    flat = slices.reshape(-1, d)
    out = flat @ w.reshape(r * d, d).T
    return out.reshape(*slices.shape[:-1], r, d)


def _apply_filter(p: FuzzyFilterParams, slices: np.ndarray) -> tuple[np.ndarray, _FilterCache]:
    """Run one filter over (B, K, D) slices; returns pooled (B, R, D) and cache."""
    q = _project(p.w_query, slices)
    diff = q - p.bank.centers
    widths = p.bank.widths
    if p.bank.family is MfFamily.MODIFIED_LAPLACE:
        log_strengths = -(widths * np.abs(diff)).sum(axis=-1)
    else:
        log_strengths = -(diff * diff / (2.0 * widths * widths)).sum(axis=-1)
    shifted = log_strengths - log_strengths.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    strengths = e / e.sum(axis=-1, keepdims=True)
    values = _project(p.w_value, slices)
    outputs = strengths[..., np.newaxis] * values
    pooled = signed_log1p(outputs).mean(axis=1)
    return pooled, _FilterCache(slices, diff, strengths, values, outputs)


def _forward_batch(
    trials: np.ndarray, params: DuoModelParams
) -> tuple[np.ndarray, np.ndarray, _FilterCache, _FilterCache]:
    """Logits for a (B, C, T) batch, plus features and per-filter caches."""
    b = trials.shape[0]
    spatial_slices = np.ascontiguousarray(trials.transpose(0, 2, 1))  # (B, T, C)
    pooled_s, cache_s = _apply_filter(params.spatial, spatial_slices)
    pooled_t, cache_t = _apply_filter(params.temporal, trials)  # rows are slices
    features = np.concatenate([pooled_s.reshape(b, -1), pooled_t.reshape(b, -1)], axis=1)
    logits = features @ params.classifier_weights.T + params.classifier_bias
    return logits, features, cache_s, cache_t


def _check_trial(trial, params: DuoModelParams) -> np.ndarray:
    trial = as_matrix(trial, "trial")
    expected = (params.num_channels, params.num_timesteps)
    if trial.shape != expected:
        raise DimensionError(f"trial shape {trial.shape} does not match model {expected}")
    return trial


# --------------------------------------------------------------------------
# Public single-input operations
# --------------------------------------------------------------------------


def filter_forward(x, p: FuzzyFilterParams) -> np.ndarray:
    """One filter on one slice: row r is strength_r * (w_value[r] @ x), shape (R, D)."""
    x = as_vector(x, "x")
    if x.shape[0] != p.num_features:
        raise DimensionError(f"input length {x.shape[0]} != filter dimension {p.num_features}")
    _, cache = _apply_filter(p, x[np.newaxis, np.newaxis, :])
    return cache.outputs[0, 0]


def spatial_forward(trial, p: FuzzyFilterParams) -> np.ndarray:
    """Filter every per-timestep channel vector, compress, and mean-pool over time."""
    trial = as_matrix(trial, "trial")
    if trial.shape[0] != p.num_features:
        raise DimensionError(f"trial has {trial.shape[0]} channels, filter expects {p.num_features}")
    pooled, _ = _apply_filter(p, np.ascontiguousarray(trial.T)[np.newaxis])
    return pooled[0]


def temporal_forward(trial, p: FuzzyFilterParams) -> np.ndarray:
    """Filter every channel's time-course, compress, and mean-pool over channels."""
    trial = as_matrix(trial, "trial")
    if trial.shape[1] != p.num_features:
        raise DimensionError(f"trial has {trial.shape[1]} timesteps, filter expects {p.num_features}")
    pooled, _ = _apply_filter(p, trial[np.newaxis])
    return pooled[0]


def model_forward(trial, params: DuoModelParams) -> np.ndarray:
    """Logits for one trial: both filters, flatten (spatial first), linear classifier."""
    trial = _check_trial(trial, params)
    logits, _, _, _ = _forward_batch(trial[np.newaxis], params)
    return logits[0]


def cross_entropy(logits, label: int) -> float:
    """Negative log softmax probability of ``label``, via max-subtracted log-sum-exp."""
    logits = as_vector(logits, "logits")
    m = logits.shape[0]
    label = int(label)
    if not (0 <= label < m):
        raise InvalidLabelError(f"label {label} out of range for {m} classes")
    shifted = logits - logits.max()
    return float(np.log(np.exp(shifted).sum()) - shifted[label])


def predict(trial, params: DuoModelParams) -> int:
    """Class with the largest logit; ties resolve to the lowest class index."""
    return int(np.argmax(model_forward(trial, params)))


# --------------------------------------------------------------------------
# Serialization: one self-describing binary file. Layout is magic, format
# version, length-prefixed JSON header, then raw little-endian float64
# tensors in a fixed order. Byte-for-byte deterministic for equal inputs.
# --------------------------------------------------------------------------


def _tensor_order(params: DuoModelParams) -> list[np.ndarray]:
    return [
        params.spatial.bank.centers,
        params.spatial.bank.width_raw,
        params.spatial.w_query,
        params.spatial.w_value,
        params.temporal.bank.centers,
        params.temporal.bank.width_raw,
        params.temporal.w_query,
        params.temporal.w_value,
        params.classifier_weights,
        params.classifier_bias,
    ]


def save_model(path, params: DuoModelParams, channel_stats: ChannelStats | None = None) -> None:
    """Write model parameters (and optional standardization stats) to one file."""
    shape = params.shape
    header = {
        "family": shape.family.value,
        "tie_widths": shape.tie_widths,
        "rules_spatial": shape.rules_spatial,
        "rules_temporal": shape.rules_temporal,
        "num_channels": shape.num_channels,
        "num_timesteps": shape.num_timesteps,
        "num_classes": shape.num_classes,
        "has_channel_stats": channel_stats is not None,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    tensors = _tensor_order(params)
    if channel_stats is not None:
        tensors = tensors + [channel_stats.mean, channel_stats.sd]
    with open(path, "wb") as fh:
        fh.write(_MODEL_MAGIC)
        fh.write(struct.pack("<I", MODEL_FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for tensor in tensors:
            fh.write(np.ascontiguousarray(tensor, dtype="<f8").tobytes())


def load_model(path) -> tuple[DuoModelParams, ChannelStats | None]:
    """Read a model file written by :func:`save_model`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[: len(_MODEL_MAGIC)] != _MODEL_MAGIC:
        raise DatasetFormatError(f"{path}: not a model file (bad magic)")
    offset = len(_MODEL_MAGIC)
    (version,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    if version != MODEL_FORMAT_VERSION:
        raise DatasetFormatError(f"{path}: unsupported model format_version {version}")
    (header_len,) = struct.unpack_from("<Q", raw, offset)
    offset += 8
    try:
        header = json.loads(raw[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DatasetFormatError(f"{path}: corrupt header: {exc}") from exc
    offset += header_len

    family = MfFamily.from_tag(header["family"])
    tie = bool(header["tie_widths"])
    r_s, r_t = int(header["rules_spatial"]), int(header["rules_temporal"])
    c, t, m = int(header["num_channels"]), int(header["num_timesteps"]), int(header["num_classes"])
    width = r_s * c + r_t * t
    shapes = [
        (r_s, c), (r_s, c), (r_s, c, c), (r_s, c, c),
        (r_t, t), (r_t, t), (r_t, t, t), (r_t, t, t),
        (m, width), (m,),
    ]
    if header.get("has_channel_stats"):
        shapes += [(c,), (c,)]
    arrays = []
    for shp in shapes:
        count = int(np.prod(shp))
        end = offset + count * 8
        if end > len(raw):
            raise DatasetFormatError(f"{path}: truncated tensor data")
        arrays.append(np.frombuffer(raw[offset:end], dtype="<f8").reshape(shp).copy())
        offset = end
    if offset != len(raw):
        raise DatasetFormatError(f"{path}: {len(raw) - offset} trailing bytes")

    spatial = FuzzyFilterParams(
        bank=RuleBank(centers=arrays[0], width_raw=arrays[1], family=family, tie_widths_across_rules=tie),
        w_query=arrays[2],
        w_value=arrays[3],
    )
    temporal = FuzzyFilterParams(
        bank=RuleBank(centers=arrays[4], width_raw=arrays[5], family=family, tie_widths_across_rules=tie),
        w_query=arrays[6],
        w_value=arrays[7],
    )
    params = DuoModelParams(
        spatial=spatial,
        temporal=temporal,
        classifier_weights=arrays[8],
        classifier_bias=arrays[9],
    )
    stats = None
    if header.get("has_channel_stats"):
        stats = ChannelStats(mean=arrays[10], sd=arrays[11])
    return params, stats
