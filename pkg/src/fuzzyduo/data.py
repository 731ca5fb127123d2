"""Dataset container, synthetic generator, standardization, splits, and disk format.

The on-disk format is a directory: a flat ``manifest.txt`` (key=value), one
CSV file per trial (channels as rows, timesteps as columns), and a
``labels.csv`` mapping trial ids to class labels. Values are written with
repr-level precision so a save/load round trip reproduces every float
exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .validation import (
    DatasetFormatError,
    DimensionError,
    InvalidInputError,
    as_matrix,
)

DATASET_FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.txt"
LABELS_NAME = "labels.csv"

# sd below this is treated as a constant channel: center only, no scaling
_SD_FLOOR = 1e-12


@dataclass
class Trial:
    """One channels-by-time signal with its class label."""

    signal: np.ndarray
    label: int

    def __post_init__(self):
        self.signal = as_matrix(self.signal, "signal")
        self.label = int(self.label)
        if self.label < 0:
            raise InvalidInputError(f"label must be >= 0, got {self.label}")

    @property
    def num_channels(self) -> int:
        return self.signal.shape[0]

    @property
    def num_timesteps(self) -> int:
        return self.signal.shape[1]


@dataclass
class Dataset:
    """A labeled collection of equally shaped trials."""

    trials: list[Trial]
    num_classes: int
    channel_names: list[str]
    sampling_rate_hz: float

    def __post_init__(self):
        self.num_classes = int(self.num_classes)
        if self.num_classes < 2:
            raise InvalidInputError("num_classes must be >= 2")
        if self.sampling_rate_hz <= 0:
            raise InvalidInputError("sampling_rate_hz must be > 0")
        shapes = {t.signal.shape for t in self.trials}
        if len(shapes) > 1:
            raise DimensionError(f"trials have inconsistent shapes: {sorted(shapes)}")
        for t in self.trials:
            if t.label >= self.num_classes:
                raise InvalidInputError(f"label {t.label} out of range for {self.num_classes} classes")
        if self.trials and len(self.channel_names) != self.trials[0].num_channels:
            raise DimensionError(
                f"{len(self.channel_names)} channel names for {self.trials[0].num_channels} channels"
            )

    def __len__(self) -> int:
        return len(self.trials)

    @property
    def num_channels(self) -> int:
        return self.trials[0].num_channels

    @property
    def num_timesteps(self) -> int:
        return self.trials[0].num_timesteps

    def labels(self) -> np.ndarray:
        return np.array([t.label for t in self.trials], dtype=np.int64)

    def signals(self) -> np.ndarray:
        """All trials stacked into one (n_trials, channels, timesteps) array."""
        return np.stack([t.signal for t in self.trials], axis=0)


@dataclass
class ChannelStats:
    """Per-channel mean and standard deviation used for z-scoring."""

    mean: np.ndarray
    sd: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.sd = np.asarray(self.sd, dtype=np.float64)
        if self.mean.shape != self.sd.shape or self.mean.ndim != 1:
            raise DimensionError("mean and sd must be 1-d arrays of equal length")


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for the deterministic two-class synthetic benchmark.

    Every channel carries Gaussian noise; trials of class k additionally
    carry a sinusoidal burst on that class's channel set during the burst
    window. The two channel sets must be disjoint so the classes differ in
    where (not whether) the burst occurs.
    """

    num_channels: int = 8
    num_timesteps: int = 64
    trials_per_class: int = 200
    num_classes: int = 2
    signal_amplitude: float = 1.0
    noise_sigma: float = 0.5
    class0_channels: tuple[int, ...] = (0, 1, 2)
    class1_channels: tuple[int, ...] = (3, 4, 5)
    burst_window: tuple[int, int] = (16, 48)
    base_frequency_hz: float = 4.0
    sampling_rate_hz: float = 32.0
    seed: int = 42

    def __post_init__(self):
        if self.num_classes != 2:
            raise InvalidInputError("synthetic generator supports exactly 2 classes")
        if not self.class0_channels or not self.class1_channels:
            raise InvalidInputError("class channel sets must be non-empty")
        if set(self.class0_channels) & set(self.class1_channels):
            raise InvalidInputError("class channel sets must be disjoint")
        all_channels = set(self.class0_channels) | set(self.class1_channels)
        if min(all_channels) < 0 or max(all_channels) >= self.num_channels:
            raise InvalidInputError("class channel indices out of range")
        t0, t1 = self.burst_window
        if not (0 <= t0 < t1 <= self.num_timesteps):
            raise InvalidInputError(f"burst window {self.burst_window} not within [0, {self.num_timesteps})")
        if self.trials_per_class < 1:
            raise InvalidInputError("trials_per_class must be >= 1")
        if self.noise_sigma < 0 or self.signal_amplitude < 0:
            raise InvalidInputError("noise_sigma and signal_amplitude must be >= 0")
        if self.sampling_rate_hz <= 0:
            raise InvalidInputError("sampling_rate_hz must be > 0")


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Build the synthetic dataset described by ``spec``, bit-reproducibly.

    Class balance is exact; all randomness comes from one generator seeded
    with ``spec.seed``, drawn in a fixed order (class 0 trials, then class 1).
    """
    rng = np.random.default_rng(spec.seed)
    t0, t1 = spec.burst_window
    t_idx = np.arange(t0, t1)
    burst = spec.signal_amplitude * np.sin(
        2.0 * np.pi * spec.base_frequency_hz * t_idx / spec.sampling_rate_hz
    )
    class_channels = {0: list(spec.class0_channels), 1: list(spec.class1_channels)}
    trials = []
    for label in (0, 1):
        for _ in range(spec.trials_per_class):
            signal = rng.normal(0.0, spec.noise_sigma, size=(spec.num_channels, spec.num_timesteps))
            signal[np.ix_(class_channels[label], t_idx)] += burst
            trials.append(Trial(signal=signal, label=label))
    names = [f"ch{i + 1}" for i in range(spec.num_channels)]
    return Dataset(
        trials=trials,
        num_classes=2,
        channel_names=names,
        sampling_rate_hz=spec.sampling_rate_hz,
    )


def standardize(dataset: Dataset, stats: ChannelStats | None = None) -> tuple[Dataset, ChannelStats]:
    """Z-score every channel, returning the transformed dataset and the stats used.

    Without ``stats``, per-channel mean and sd are computed over all trials
    and timesteps of ``dataset``. Channels with sd below 1e-12 are centered
    but not scaled.
    """
    if not dataset.trials:
        raise InvalidInputError("cannot standardize an empty dataset")
    if stats is None:
        stacked = dataset.signals()  # (n, C, T)
        mean = stacked.mean(axis=(0, 2))
        sd = stacked.std(axis=(0, 2))
        stats = ChannelStats(mean=mean, sd=sd)
    if stats.mean.shape[0] != dataset.num_channels:
        raise DimensionError(
            f"stats cover {stats.mean.shape[0]} channels, dataset has {dataset.num_channels}"
        )
    divisor = np.where(stats.sd < _SD_FLOOR, 1.0, stats.sd)
    new_trials = [
        replace(t, signal=(t.signal - stats.mean[:, np.newaxis]) / divisor[:, np.newaxis])
        for t in dataset.trials
    ]
    return replace(dataset, trials=new_trials), stats


def stratified_split(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Split per class: floor(n_class * fraction) trials to test, rest to train.

    Within each class the assignment is a seeded shuffle; the two halves
    partition the dataset exactly.
    """
    if not (0.0 < test_fraction < 1.0):
        raise InvalidInputError(f"test_fraction must be in (0, 1), got {test_fraction}")
    labels = dataset.labels()
    rng = np.random.default_rng(seed)
    train_idx: list[int] = []
    test_idx: list[int] = []
    for cls in range(dataset.num_classes):
        members = np.flatnonzero(labels == cls)
        if members.shape[0] < 2:
            raise InvalidInputError(f"class {cls} has {members.shape[0]} trials; need >= 2 to split")
        order = rng.permutation(members)
        n_test = int(np.floor(members.shape[0] * test_fraction))
        test_idx.extend(order[:n_test].tolist())
        train_idx.extend(order[n_test:].tolist())
    train = replace(dataset, trials=[dataset.trials[i] for i in train_idx])
    test = replace(dataset, trials=[dataset.trials[i] for i in test_idx])
    return train, test


def _format_value(v: float) -> str:
    return repr(float(v))


def save_dataset(dataset: Dataset, path) -> None:
    """Write a dataset directory: manifest, per-trial CSVs, labels file."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = [
        f"format_version={DATASET_FORMAT_VERSION}",
        f"num_classes={dataset.num_classes}",
        f"channels={dataset.num_channels}",
        f"timesteps={dataset.num_timesteps}",
        f"sampling_rate_hz={_format_value(dataset.sampling_rate_hz)}",
        "channel_names=" + ",".join(dataset.channel_names),
    ]
    (root / MANIFEST_NAME).write_text("\n".join(manifest) + "\n")
    label_lines = ["trial_id,label"]
    for i, trial in enumerate(dataset.trials):
        rows = [",".join(_format_value(v) for v in row) for row in trial.signal]
        (root / f"trial_{i:06d}.csv").write_text("\n".join(rows) + "\n")
        label_lines.append(f"{i},{trial.label}")
    (root / LABELS_NAME).write_text("\n".join(label_lines) + "\n")


def _parse_manifest(path: Path) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DatasetFormatError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        entries[key.strip()] = value.strip()
    return entries


def load_dataset(path) -> Dataset:
    """Load a dataset directory written by :func:`save_dataset`."""
    root = Path(path)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise DatasetFormatError(f"missing manifest: {manifest_path}")
    manifest = _parse_manifest(manifest_path)
    required = ["format_version", "num_classes", "channels", "timesteps", "sampling_rate_hz", "channel_names"]
    for key in required:
        if key not in manifest:
            raise DatasetFormatError(f"{manifest_path}: missing key {key!r}")
    if int(manifest["format_version"]) != DATASET_FORMAT_VERSION:
        raise DatasetFormatError(
            f"{manifest_path}: unsupported format_version {manifest['format_version']}"
        )
    num_classes = int(manifest["num_classes"])
    channels = int(manifest["channels"])
    timesteps = int(manifest["timesteps"])
    channel_names = manifest["channel_names"].split(",") if manifest["channel_names"] else []

    labels_path = root / LABELS_NAME
    if not labels_path.is_file():
        raise DatasetFormatError(f"missing labels file: {labels_path}")
    label_lines = labels_path.read_text().splitlines()
    if not label_lines or label_lines[0].strip() != "trial_id,label":
        raise DatasetFormatError(f"{labels_path}:1: expected header 'trial_id,label'")
    trials = []
    for lineno, line in enumerate(label_lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise DatasetFormatError(f"{labels_path}:{lineno}: expected 'trial_id,label', got {line!r}")
        try:
            trial_id, label = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise DatasetFormatError(f"{labels_path}:{lineno}: {exc}") from exc
        if not (0 <= label < num_classes):
            raise DatasetFormatError(f"{labels_path}:{lineno}: unknown label {label}")
        trial_path = root / f"trial_{trial_id:06d}.csv"
        if not trial_path.is_file():
            raise DatasetFormatError(f"missing trial file: {trial_path}")
        signal = _read_trial_csv(trial_path, channels, timesteps)
        trials.append(Trial(signal=signal, label=label))
    return Dataset(
        trials=trials,
        num_classes=num_classes,
        channel_names=channel_names,
        sampling_rate_hz=float(manifest["sampling_rate_hz"]),
    )


def _read_trial_csv(path: Path, channels: int, timesteps: int) -> np.ndarray:
    lines = [line for line in path.read_text().splitlines() if line.strip()]
    if len(lines) != channels:
        raise DatasetFormatError(f"{path}: expected {channels} rows, found {len(lines)}")
    signal = np.empty((channels, timesteps), dtype=np.float64)
    for i, line in enumerate(lines):
        parts = line.split(",")
        if len(parts) != timesteps:
            raise DatasetFormatError(
                f"{path}:{i + 1}: expected {timesteps} columns, found {len(parts)}"
            )
        try:
            signal[i] = [float(p) for p in parts]
        except ValueError as exc:
            raise DatasetFormatError(f"{path}:{i + 1}: {exc}") from exc
    return signal
