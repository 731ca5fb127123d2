"""Rule banks, firing strengths, and zero-order TSK aggregation.

A rule's firing strength is the product of its per-feature membership
degrees. Products of many values in (0, 1] underflow quickly, so firing
strengths are carried as log values and normalized across rules with a
max-subtracted softmax, which is exact in exact arithmetic and immune to
underflow in floating point.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .membership import MfFamily, log_gaussian, log_modified_laplace
from .validation import DimensionError, InvalidInputError, as_matrix, as_vector


@dataclass
class RuleBank:
    """Per-rule, per-feature membership centers and raw width parameters.

    ``centers`` and ``width_raw`` are (num_rules, num_features) arrays; the
    effective widths are ``exp(width_raw)``. With
    ``tie_widths_across_rules`` set, all width rows are kept identical
    (one width per feature, shared by every rule).
    """

    centers: np.ndarray
    width_raw: np.ndarray
    family: MfFamily
    tie_widths_across_rules: bool = False

    def __post_init__(self):
        self.centers = as_matrix(self.centers, "centers")
        self.width_raw = as_matrix(self.width_raw, "width_raw")
        if self.centers.shape != self.width_raw.shape:
            raise DimensionError(
                f"centers shape {self.centers.shape} != width_raw shape {self.width_raw.shape}"
            )
        if self.centers.shape[0] < 1 or self.centers.shape[1] < 1:
            raise InvalidInputError("rule bank needs at least one rule and one feature")
        if self.tie_widths_across_rules and not np.all(self.width_raw == self.width_raw[:1]):
            raise InvalidInputError("tie_widths_across_rules set but width rows differ")

    @property
    def num_rules(self) -> int:
        return self.centers.shape[0]

    @property
    def num_features(self) -> int:
        return self.centers.shape[1]

    @property
    def widths(self) -> np.ndarray:
        """Effective per-rule, per-feature widths, exp(width_raw)."""
        return np.exp(self.width_raw)


@dataclass
class FiringStrengths:
    """Log firing strengths of every rule and their softmax normalization."""

    log_strengths: np.ndarray
    normalized: np.ndarray = field(init=False)

    def __post_init__(self):
        self.log_strengths = as_vector(self.log_strengths, "log_strengths")
        self.normalized = normalized_firing_strengths(self.log_strengths)


def log_firing_strengths(x, bank: RuleBank) -> np.ndarray:
    """Log of each rule's product-of-memberships firing strength at x.

    Entry r is the sum over features of the log membership of ``x[d]`` in
    rule r's fuzzy set; always <= 0.
    """
    x = as_vector(x, "x")
    if x.shape[0] != bank.num_features:
        raise DimensionError(
            f"input length {x.shape[0]} != rule bank feature count {bank.num_features}"
        )
    if bank.family is MfFamily.MODIFIED_LAPLACE:
        logs = log_modified_laplace(x[np.newaxis, :], bank.centers, bank.widths)
    else:
        logs = log_gaussian(x[np.newaxis, :], bank.centers, bank.widths)
    return logs.sum(axis=1)


def normalized_firing_strengths(log_strengths) -> np.ndarray:
    """Softmax of log firing strengths, computed with max-subtraction.

    Equals each rule's firing strength divided by the sum over all rules,
    but stays finite even when every raw product would underflow.
    """
    log_strengths = as_vector(log_strengths, "log_strengths")
    if log_strengths.shape[0] == 0:
        raise InvalidInputError("log_strengths is empty")
    shifted = log_strengths - log_strengths.max()
    e = np.exp(shifted)
    return e / e.sum()


def tsk_aggregate(normalized, consequents) -> float:
    """Weighted sum of zero-order rule consequents by normalized strengths."""
    normalized = as_vector(normalized, "normalized")
    consequents = as_vector(consequents, "consequents")
    if normalized.shape != consequents.shape:
        raise DimensionError(
            f"normalized length {normalized.shape[0]} != consequents length {consequents.shape[0]}"
        )
    if abs(normalized.sum() - 1.0) > 1e-6:
        raise InvalidInputError("normalized strengths must sum to 1")
    return float(normalized @ consequents)
