"""Per-trial explanation reports, membership curves, query-space histograms,
and the paired-comparison statistics toolkit.

Reports use 1-indexed feature/channel numbers; everything internal stays
0-indexed. The boundary is the serializers in this module.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import betainc

from .data import Dataset
from .inference import RuleBank
from .membership import MfFamily
from .model import DuoModelParams, FuzzyFilterParams, _check_trial, _forward_batch
from .validation import (
    DegenerateVarianceError,
    DimensionError,
    InvalidInputError,
    as_vector,
)

REPORT_FORMAT_VERSION = 1


@dataclass
class FilterExplanation:
    """Interpretability data for one filter on one trial.

    ``firing_strengths`` are the per-rule normalized strengths averaged
    over the pooled axis (they still sum to 1). ``memberships[r, d]`` is
    rule r's membership degree of query coordinate d, likewise averaged.
    ``top_features`` lists, per rule, the k strongest (feature, degree)
    pairs with 1-indexed features, sorted descending with ties going to
    the lower feature index.
    """

    firing_strengths: np.ndarray
    memberships: np.ndarray
    top_features: list[list[tuple[int, float]]]


@dataclass
class ExplanationReport:
    trial_id: int
    predicted_label: int
    true_label: int | None
    spatial: FilterExplanation
    temporal: FilterExplanation

    def filters(self) -> dict[str, FilterExplanation]:
        return {"spatial": self.spatial, "temporal": self.temporal}


@dataclass
class CurveSamples:
    """Membership values of every rule sampled on an ascending grid."""

    grid: np.ndarray
    values: np.ndarray  # (num_rules, len(grid))


def _explain_filter(p: FuzzyFilterParams, cache, k: int) -> FilterExplanation:
    strengths = cache.strengths.mean(axis=(0, 1))
    widths = p.bank.widths
    if p.bank.family is MfFamily.MODIFIED_LAPLACE:
        mu = np.exp(-widths * np.abs(cache.diff))
    else:
        mu = np.exp(-(cache.diff**2) / (2.0 * widths * widths))
    memberships = mu.mean(axis=(0, 1))
    k = min(k, p.num_features)
    top = []
    for r in range(p.num_rules):
        order = np.lexsort((np.arange(p.num_features), -memberships[r]))
        top.append([(int(d) + 1, float(memberships[r, d])) for d in order[:k]])
    return FilterExplanation(firing_strengths=strengths, memberships=memberships, top_features=top)


def explain_trial(
    trial,
    params: DuoModelParams,
    k: int = 3,
    trial_id: int = 0,
    true_label: int | None = None,
) -> ExplanationReport:
    """Per-rule firing strengths and top-k feature memberships for one trial."""
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    trial = _check_trial(trial, params)
    logits, _, cache_s, cache_t = _forward_batch(trial[np.newaxis], params)
    return ExplanationReport(
        trial_id=int(trial_id),
        predicted_label=int(np.argmax(logits[0])),
        true_label=None if true_label is None else int(true_label),
        spatial=_explain_filter(params.spatial, cache_s, k),
        temporal=_explain_filter(params.temporal, cache_t, k),
    )


def render_report_table(report: ExplanationReport) -> str:
    """Aligned plain-text table, one section per filter: rule | top1 | top2 | ..."""
    lines = [f"Trial {report.trial_id}: predicted={report.predicted_label}"
             + ("" if report.true_label is None else f" true={report.true_label}")]
    for name, fexp in report.filters().items():
        k = max(len(row) for row in fexp.top_features)
        header = ["Rule"] + [f"Top{i + 1}" for i in range(k)]
        rows = []
        for r, row in enumerate(fexp.top_features):
            cells = [str(r + 1)] + [f"{feat}: {val:.2f}" for feat, val in row]
            cells += [""] * (len(header) - len(cells))
            rows.append(cells)
        widths = [max(len(header[i]), *(len(row[i]) for row in rows)) for i in range(len(header))]
        lines.append("")
        lines.append(f"Filter: {name}")
        lines.append(" | ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip())
        for cells in rows:
            lines.append(" | ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip())
    return "\n".join(lines) + "\n"


def report_to_json(report: ExplanationReport) -> str:
    """Machine-readable report: one record per rule per filter."""
    doc = {
        "format_version": REPORT_FORMAT_VERSION,
        "trial_id": report.trial_id,
        "predicted_label": report.predicted_label,
        "true_label": report.true_label,
        "filters": {},
    }
    for name, fexp in report.filters().items():
        doc["filters"][name] = [
            {
                "rule": r + 1,
                "firing_strength": float(fexp.firing_strengths[r]),
                "memberships": [float(v) for v in fexp.memberships[r]],
                "top_features": [{"feature": f, "membership": v} for f, v in fexp.top_features[r]],
            }
            for r in range(fexp.firing_strengths.shape[0])
        ]
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_report(report: ExplanationReport, out_dir) -> tuple[Path, Path]:
    """Write report.json and report_table.txt; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / f"report_trial_{report.trial_id:06d}.json"
    table_path = out / f"report_trial_{report.trial_id:06d}.txt"
    json_path.write_text(report_to_json(report))
    table_path.write_text(render_report_table(report))
    return json_path, table_path


def sample_mf_curves(
    bank: RuleBank, feature: int, x_min: float, x_max: float, n_points: int
) -> CurveSamples:
    """Evaluate every rule's membership function for one feature on a uniform grid."""
    if n_points < 2:
        raise InvalidInputError(f"n_points must be >= 2, got {n_points}")
    if not (np.isfinite(x_min) and np.isfinite(x_max) and x_min < x_max):
        raise InvalidInputError(f"need finite x_min < x_max, got [{x_min}, {x_max}]")
    if not (0 <= feature < bank.num_features):
        raise InvalidInputError(f"feature {feature} out of range for {bank.num_features} features")
    grid = np.linspace(x_min, x_max, n_points)
    centers = bank.centers[:, feature][:, np.newaxis]
    widths = bank.widths[:, feature][:, np.newaxis]
    if bank.family is MfFamily.MODIFIED_LAPLACE:
        values = np.exp(-widths * np.abs(grid[np.newaxis, :] - centers))
    else:
        d = grid[np.newaxis, :] - centers
        values = np.exp(-(d * d) / (2.0 * widths * widths))
    return CurveSamples(grid=grid, values=values)


def write_curves_csv(curves: CurveSamples, path) -> None:
    rules = curves.values.shape[0]
    lines = ["x," + ",".join(f"rule_{r + 1}" for r in range(rules))]
    for i, x in enumerate(curves.grid):
        lines.append(repr(float(x)) + "," + ",".join(repr(float(v)) for v in curves.values[:, i]))
    Path(path).write_text("\n".join(lines) + "\n")


def _pooled_slices(dataset: Dataset, params: DuoModelParams, filter_name: str) -> tuple[FuzzyFilterParams, np.ndarray]:
    signals = dataset.signals()
    if filter_name == "spatial":
        return params.spatial, signals.transpose(0, 2, 1).reshape(-1, params.num_channels)
    if filter_name == "temporal":
        return params.temporal, signals.reshape(-1, params.num_timesteps)
    raise InvalidInputError(f"filter must be 'spatial' or 'temporal', got {filter_name!r}")


def query_histogram(
    dataset: Dataset,
    params: DuoModelParams,
    filter_name: str,
    rule: int,
    feature: int,
    n_bins: int,
    curve_points: int = 201,
) -> tuple[np.ndarray, np.ndarray, CurveSamples]:
    """Histogram of one query-space coordinate over every pooled slice in the dataset.

    Each slice is projected through the chosen rule's query matrix;
    coordinate ``feature`` is histogrammed, then every rule's membership
    curve for that feature is sampled on the histogram's range so the two
    can be overlaid. Returns (bin_edges, counts, curves).
    """
    if len(dataset) == 0:
        raise InvalidInputError("cannot histogram an empty dataset")
    if n_bins < 1:
        raise InvalidInputError(f"n_bins must be >= 1, got {n_bins}")
    p, slices = _pooled_slices(dataset, params, filter_name)
    if not (0 <= rule < p.num_rules):
        raise InvalidInputError(f"rule {rule} out of range for {p.num_rules} rules")
    if not (0 <= feature < p.num_features):
        raise InvalidInputError(f"feature {feature} out of range for {p.num_features} features")
    projected = slices @ p.w_query[rule, feature, :]
    counts, edges = np.histogram(projected, bins=n_bins)
    curves = sample_mf_curves(p.bank, feature, float(edges[0]), float(edges[-1]), curve_points)
    return edges, counts, curves


def write_histogram_csv(edges: np.ndarray, counts: np.ndarray, path) -> None:
    lines = ["bin_left,bin_right,count"]
    for i, c in enumerate(counts):
        lines.append(f"{float(edges[i])!r},{float(edges[i + 1])!r},{int(c)}")
    Path(path).write_text("\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# Paired-comparison statistics
# --------------------------------------------------------------------------


def _paired_diff(a, b) -> np.ndarray:
    a = as_vector(a, "a")
    b = as_vector(b, "b")
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[0] < 2:
        raise InvalidInputError("need at least 2 paired observations")
    diff = a - b
    if not diff.std(ddof=1) > 0:
        raise DegenerateVarianceError("paired differences have zero variance")
    return diff


def paired_t_test(a, b) -> tuple[float, int, float]:
    """Two-sided paired t-test: (t statistic, degrees of freedom, p-value).

    p comes from the regularized incomplete beta form of the t survival
    function, accurate to well below 1e-6 for the df sizes used here.
    """
    diff = _paired_diff(a, b)
    n = diff.shape[0]
    sd = diff.std(ddof=1)
    t = float(diff.mean() / (sd / np.sqrt(n)))
    df = n - 1
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return t, df, p


def cohens_d_paired(a, b) -> float:
    """Paired effect size: mean of differences over their sample sd."""
    diff = _paired_diff(a, b)
    return float(diff.mean() / diff.std(ddof=1))


def fdr_bh(p_values) -> np.ndarray:
    """Benjamini-Hochberg adjusted p-values, returned in the input order."""
    p = as_vector(p_values, "p_values")
    if np.any((p < 0) | (p > 1)):
        raise InvalidInputError("p-values must lie in [0, 1]")
    m = p.shape[0]
    if m == 0:
        return p.copy()
    order = np.argsort(p, kind="stable")
    ranked = p[order] * m / np.arange(1, m + 1)
    adjusted = np.minimum(1.0, np.minimum.accumulate(ranked[::-1])[::-1])
    out = np.empty_like(adjusted)
    out[order] = adjusted
    return out
