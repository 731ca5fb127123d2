"""Command-line interface.

Subcommands: gen-data, train, eval, explain, curves, compare. Every
command is deterministic given its flags, files, and seeds. Exit codes:
0 success, 2 usage or validation error, 3 runtime or numeric failure.

Train/compare read a flat key=value config file; unknown keys are
rejected. ``fuzzyduo train`` writes the model file, the training-history
CSV, a summary, and the raw train/test split directories so every number
it prints can be reproduced from disk.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .data import (
    Dataset,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    save_dataset,
    standardize,
    stratified_split,
)
from .interpret import (
    cohens_d_paired,
    explain_trial,
    fdr_bh,
    paired_t_test,
    render_report_table,
    sample_mf_curves,
    write_curves_csv,
    write_report,
)
from .membership import MfFamily
from .model import ModelShape, load_model, save_model
from .training import TrainConfig, evaluate, fit, init_params, write_history_csv
from .validation import (
    DatasetFormatError,
    DegenerateVarianceError,
    DivergenceError,
    FuzzyDuoError,
    InvalidInputError,
)

SUMMARY_FORMAT_VERSION = 1


@dataclass(frozen=True)
class RunConfig:
    """Everything a training run needs beyond the dataset itself."""

    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    shuffle: bool = True
    rules_spatial: int = 5
    rules_temporal: int = 5
    family: str = "modified_laplace"
    tie_widths: bool = False
    test_fraction: float = 0.2
    standardize: bool = True

    def train_config(self, seed: int | None = None) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            optimizer=self.optimizer,
            adam_betas=(self.adam_beta1, self.adam_beta2),
            adam_eps=self.adam_eps,
            seed=self.seed if seed is None else seed,
            shuffle=self.shuffle,
        )

    def model_shape(self, dataset: Dataset, family: str | None = None) -> ModelShape:
        return ModelShape(
            num_channels=dataset.num_channels,
            num_timesteps=dataset.num_timesteps,
            num_classes=dataset.num_classes,
            rules_spatial=self.rules_spatial,
            rules_temporal=self.rules_temporal,
            family=MfFamily.from_tag(self.family if family is None else family),
            tie_widths=self.tie_widths,
        )


def _parse_bool(value: str, key: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise DatasetFormatError(f"config key {key}: expected true/false, got {value!r}")


def _parse_kv_file(path: Path) -> dict[str, str]:
    if not path.is_file():
        raise DatasetFormatError(f"missing config file: {path}")
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


def load_run_config(path) -> RunConfig:
    entries = _parse_kv_file(Path(path))
    known = {f.name: f.type for f in fields(RunConfig)}
    kwargs = {}
    for key, value in entries.items():
        if key not in known:
            raise DatasetFormatError(f"{path}: unknown config key {key!r}")
        if known[key] == "bool":
            kwargs[key] = _parse_bool(value, key)
        elif known[key] == "int":
            kwargs[key] = int(value)
        elif known[key] == "float":
            kwargs[key] = float(value)
        else:
            kwargs[key] = value
    return RunConfig(**kwargs)


def write_run_config(config: RunConfig, path) -> None:
    lines = []
    for f in fields(RunConfig):
        value = getattr(config, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name}={value}")
    Path(path).write_text("\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# Command implementations
# --------------------------------------------------------------------------


def _parse_channel_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.split(",") if p.strip() != "")
    except ValueError as exc:
        raise InvalidInputError(f"bad channel list {text!r}: {exc}") from exc


def _synthetic_spec_from_args(args) -> SyntheticSpec:
    values = {}
    if args.spec_file is not None:
        entries = _parse_kv_file(Path(args.spec_file))
        casts = {
            "channels": ("num_channels", int),
            "timesteps": ("num_timesteps", int),
            "trials_per_class": ("trials_per_class", int),
            "amplitude": ("signal_amplitude", float),
            "noise_sigma": ("noise_sigma", float),
            "class0_channels": ("class0_channels", _parse_channel_list),
            "class1_channels": ("class1_channels", _parse_channel_list),
            "burst_start": ("burst_start", int),
            "burst_end": ("burst_end", int),
            "base_frequency_hz": ("base_frequency_hz", float),
            "sampling_rate_hz": ("sampling_rate_hz", float),
            "seed": ("seed", int),
        }
        for key, raw in entries.items():
            if key not in casts:
                raise DatasetFormatError(f"{args.spec_file}: unknown spec key {key!r}")
            name, cast = casts[key]
            values[name] = cast(raw)
    flag_map = {
        "num_channels": args.channels,
        "num_timesteps": args.timesteps,
        "trials_per_class": args.trials_per_class,
        "signal_amplitude": args.amplitude,
        "noise_sigma": args.noise_sigma,
        "base_frequency_hz": args.base_frequency,
        "sampling_rate_hz": args.sampling_rate,
        "seed": args.seed,
    }
    for name, flag in flag_map.items():
        if flag is not None:
            values[name] = flag
    if args.class0_channels is not None:
        values["class0_channels"] = _parse_channel_list(args.class0_channels)
    if args.class1_channels is not None:
        values["class1_channels"] = _parse_channel_list(args.class1_channels)
    if args.burst is not None:
        t0, _, t1 = args.burst.partition(":")
        values["burst_start"], values["burst_end"] = int(t0), int(t1)
    start = values.pop("burst_start", None)
    end = values.pop("burst_end", None)
    defaults = SyntheticSpec()
    window = (
        defaults.burst_window[0] if start is None else start,
        defaults.burst_window[1] if end is None else end,
    )
    return replace(defaults, burst_window=window, **values)


def cmd_gen_data(args) -> int:
    spec = _synthetic_spec_from_args(args)
    dataset = generate_synthetic(spec)
    save_dataset(dataset, args.out)
    print(
        f"generated {len(dataset)} trials, {dataset.num_channels} channels, "
        f"{dataset.num_timesteps} steps, {dataset.num_classes} classes"
    )
    return 0


def _prepare_split(dataset: Dataset, config: RunConfig, seed: int):
    """Split, then z-score with training-set statistics."""
    train_raw, test_raw = stratified_split(dataset, config.test_fraction, seed)
    if config.standardize:
        train, stats = standardize(train_raw)
        test, _ = standardize(test_raw, stats)
    else:
        train, test, stats = train_raw, test_raw, None
    return train_raw, test_raw, train, test, stats


def cmd_train(args) -> int:
    config = load_run_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    dataset = load_dataset(args.data)
    train_raw, test_raw, train, test, stats = _prepare_split(dataset, config, config.seed)
    params = init_params(config.model_shape(dataset), config.seed)
    trained, history = fit(train, config.train_config(), params)
    test_accuracy, test_loss = evaluate(test, trained)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(out / "model.bin", trained, channel_stats=stats)
    write_history_csv(history, out / "history.csv")
    save_dataset(train_raw, out / "train_split")
    save_dataset(test_raw, out / "test_split")
    summary = [
        f"format_version={SUMMARY_FORMAT_VERSION}",
        f"final_test_accuracy={test_accuracy!r}",
        f"final_test_mean_loss={test_loss!r}",
        f"train_trials={len(train)}",
        f"test_trials={len(test)}",
        f"epochs={config.epochs}",
        f"seed={config.seed}",
        f"family={config.family}",
    ]
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    print(f"trained {config.epochs} epochs; test accuracy={test_accuracy:.6f} mean_loss={test_loss:.6f}")
    return 0


def cmd_eval(args) -> int:
    params, stats = load_model(args.model)
    dataset = load_dataset(args.data)
    if stats is not None:
        dataset, _ = standardize(dataset, stats)
    accuracy, mean_loss = evaluate(dataset, params)
    print(f"accuracy={accuracy:.6f} mean_loss={mean_loss:.6f}")
    return 0


def cmd_explain(args) -> int:
    params, stats = load_model(args.model)
    dataset = load_dataset(args.data)
    if stats is not None:
        dataset, _ = standardize(dataset, stats)
    if not (0 <= args.trial < len(dataset)):
        raise InvalidInputError(f"trial id {args.trial} out of range for {len(dataset)} trials")
    max_features = max(params.num_channels, params.num_timesteps)
    if args.k > max_features:
        print(
            f"warning: k={args.k} exceeds the feature count; clipping per filter",
            file=sys.stderr,
        )
    trial = dataset.trials[args.trial]
    report = explain_trial(
        trial.signal, params, k=args.k, trial_id=args.trial, true_label=trial.label
    )
    json_path, table_path = write_report(report, args.out)
    print(render_report_table(report), end="")
    print(f"wrote {json_path} and {table_path}", file=sys.stderr)
    return 0


def cmd_curves(args) -> int:
    params, _ = load_model(args.model)
    p = params.spatial if args.filter == "spatial" else params.temporal
    curves = sample_mf_curves(p.bank, args.feature, args.x_min, args.x_max, args.points)
    write_curves_csv(curves, args.out)
    print(f"wrote {args.points} grid points x {p.num_rules} rules to {args.out}")
    return 0


def cmd_compare(args) -> int:
    if args.n_seeds < 2:
        raise InvalidInputError(f"n_seeds must be >= 2, got {args.n_seeds}")
    config = load_run_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    dataset = load_dataset(args.data)
    families = (args.family_a, args.family_b)
    seeds = [config.seed + i for i in range(args.n_seeds)]
    arm_accuracies: list[list[float]] = [[], []]
    for seed in seeds:
        _, _, train, test, _ = _prepare_split(dataset, config, seed)
        for arm, family in enumerate(families):
            params = init_params(config.model_shape(dataset, family=family), seed)
            trained, _ = fit(train, config.train_config(seed=seed), params)
            accuracy, _ = evaluate(test, trained)
            arm_accuracies[arm].append(accuracy)

    acc_a = np.array(arm_accuracies[0])
    acc_b = np.array(arm_accuracies[1])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "per_seed_accuracy.csv"
    lines = [f"# format_version=1 family_a={families[0]} family_b={families[1]}"]
    lines.append("seed,accuracy_a,accuracy_b")
    lines += [f"{s},{a!r},{b!r}" for s, a, b in zip(seeds, acc_a, acc_b)]
    csv_path.write_text("\n".join(lines) + "\n")

    t, df, p = paired_t_test(acc_a, acc_b)
    p_adj = float(fdr_bh([p])[0])
    d = cohens_d_paired(acc_a, acc_b)
    mean_a, sd_a = float(acc_a.mean()), float(acc_a.std(ddof=1))
    mean_b, sd_b = float(acc_b.mean()), float(acc_b.std(ddof=1))
    print(f"{families[0]}: {100 * mean_a:.2f}% +/- {100 * sd_a:.2f}%")
    print(f"{families[1]}: {100 * mean_b:.2f}% +/- {100 * sd_b:.2f}%")
    print(f"paired t-test: t({df}) = {t:.2f}, p = {p:.4g}, adjusted p = {p_adj:.4g}, Cohen's d = {d:.2f}")
    print(
        f"stats: t={t!r} df={df} p={p!r} p_adj={p_adj!r} d={d!r} "
        f"mean_a={mean_a!r} sd_a={sd_a!r} mean_b={mean_b!r} sd_b={sd_b!r}"
    )
    print(f"per-seed accuracies written to {csv_path}", file=sys.stderr)
    return 0


# --------------------------------------------------------------------------
# Argument parsing and dispatch
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fuzzyduo",
        description="Dual-filter fuzzy neural network: data generation, training, "
        "evaluation, explanation, and membership-family comparison.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic dataset directory")
    g.add_argument("--out", required=True, help="output dataset directory")
    g.add_argument("--spec-file", default=None, help="key=value synthetic spec file")
    g.add_argument("--channels", type=int, default=None)
    g.add_argument("--timesteps", type=int, default=None)
    g.add_argument("--trials-per-class", type=int, default=None)
    g.add_argument("--amplitude", type=float, default=None)
    g.add_argument("--noise-sigma", type=float, default=None)
    g.add_argument("--class0-channels", default=None, help="comma-separated channel indices")
    g.add_argument("--class1-channels", default=None, help="comma-separated channel indices")
    g.add_argument("--burst", default=None, help="burst window as start:end (end exclusive)")
    g.add_argument("--base-frequency", type=float, default=None)
    g.add_argument("--sampling-rate", type=float, default=None)
    g.add_argument("--seed", type=int, default=None)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model on a dataset directory")
    t.add_argument("--config", required=True, help="key=value run config file")
    t.add_argument("--data", required=True, help="dataset directory")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--seed", type=int, default=None, help="override the config seed")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a model file on a dataset directory")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("explain", help="per-rule explanation report for one trial")
    x.add_argument("--model", required=True)
    x.add_argument("--data", required=True)
    x.add_argument("--trial", type=int, required=True, help="0-based trial index")
    x.add_argument("--k", type=int, default=3, help="top features per rule")
    x.add_argument("--out", default=".", help="directory for report files")
    x.set_defaults(func=cmd_explain)

    c = sub.add_parser("curves", help="export membership-function curves as CSV")
    c.add_argument("--model", required=True)
    c.add_argument("--filter", choices=("spatial", "temporal"), default="spatial")
    c.add_argument("--feature", type=int, default=0, help="0-based feature index")
    c.add_argument("--x-min", type=float, default=-3.0)
    c.add_argument("--x-max", type=float, default=3.0)
    c.add_argument("--points", type=int, default=201)
    c.add_argument("--out", required=True, help="output CSV path")
    c.set_defaults(func=cmd_curves)

    p = sub.add_parser("compare", help="paired comparison of two membership families")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--n-seeds", type=int, required=True)
    p.add_argument("--family-a", default="modified_laplace")
    p.add_argument("--family-b", default="gaussian")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", required=True, help="directory for the per-seed CSV")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DivergenceError, DegenerateVarianceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (FuzzyDuoError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
