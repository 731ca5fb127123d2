"""Membership functions and their analytic parameter derivatives.

Two families are supported:

* Modified-Laplace: ``exp(-decay * |x - center|)`` with decay > 0.
* Gaussian: ``exp(-(x - center)^2 / (2 * width^2))`` with width > 0.

Both peak at exactly 1 when ``x == center`` and stay in (0, 1] elsewhere
(up to float underflow far from the center). All functions broadcast over
numpy arrays. Rule firing strengths are composed in log space elsewhere,
so the ``log_*`` variants here are the ones used on hot paths.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .validation import InvalidParameterError


class MfFamily(enum.Enum):
    """Which membership-function family a rule bank uses."""

    MODIFIED_LAPLACE = "modified_laplace"
    GAUSSIAN = "gaussian"

    @classmethod
    def from_tag(cls, tag: str) -> "MfFamily":
        for member in cls:
            if member.value == tag:
                return member
        valid = ", ".join(m.value for m in cls)
        raise InvalidParameterError(f"unknown membership family {tag!r}; expected one of: {valid}")


@dataclass(frozen=True)
class MfParams:
    """Center and unconstrained width parameter of one membership function.

    The effective width (decay for Modified-Laplace, sigma for Gaussian) is
    ``exp(width_raw)``, which keeps it strictly positive under additive
    gradient updates.
    """

    center: float
    width_raw: float
    family: MfFamily

    def __post_init__(self):
        if not np.isfinite(self.center):
            raise InvalidParameterError(f"center must be finite, got {self.center}")
        if not np.isfinite(self.width_raw):
            raise InvalidParameterError(f"width_raw must be finite, got {self.width_raw}")

    @property
    def width(self) -> float:
        return float(np.exp(self.width_raw))


def _check_inputs(x, center, width_param, width_name: str) -> None:
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(center))):
        raise InvalidParameterError("x and center must be finite")
    if not np.all(np.isfinite(width_param)) or np.any(np.asarray(width_param) <= 0.0):
        raise InvalidParameterError(f"{width_name} must be finite and > 0")


def modified_laplace(x, center, decay):
    """exp(-decay * |x - center|); equals 1 iff x == center."""
    _check_inputs(x, center, decay, "decay")
    return np.exp(-decay * np.abs(np.asarray(x, dtype=np.float64) - center))


def gaussian(x, center, width):
    """exp(-(x - center)^2 / (2 * width^2)); equals 1 iff x == center."""
    _check_inputs(x, center, width, "width")
    d = np.asarray(x, dtype=np.float64) - center
    return np.exp(-(d * d) / (2.0 * width * width))


def modified_laplace_grad_decay(x, center, decay):
    """Derivative of the Modified-Laplace value w.r.t. decay: -|x-c| * mf. Always <= 0."""
    _check_inputs(x, center, decay, "decay")
    dist = np.abs(np.asarray(x, dtype=np.float64) - center)
    return -dist * np.exp(-decay * dist)


def gaussian_grad_width(x, center, width):
    """Derivative of the Gaussian value w.r.t. width: mf * (x-c)^2 / width^3. Always >= 0."""
    _check_inputs(x, center, width, "width")
    d = np.asarray(x, dtype=np.float64) - center
    return np.exp(-(d * d) / (2.0 * width * width)) * d * d / width**3


def modified_laplace_grad_center(x, center, decay):
    """Derivative of the Modified-Laplace value w.r.t. center.

    Equals ``decay * sign(x - center) * mf``. At the kink ``x == center``
    the subgradient 0 is returned.
    """
    _check_inputs(x, center, decay, "decay")
    d = np.asarray(x, dtype=np.float64) - center
    return decay * np.sign(d) * np.exp(-decay * np.abs(d))


def log_modified_laplace(x, center, decay):
    """log of the Modified-Laplace value: -decay * |x - center|."""
    _check_inputs(x, center, decay, "decay")
    return -decay * np.abs(np.asarray(x, dtype=np.float64) - center)


def log_gaussian(x, center, width):
    """log of the Gaussian value: -(x - center)^2 / (2 * width^2)."""
    _check_inputs(x, center, width, "width")
    d = np.asarray(x, dtype=np.float64) - center
    return -(d * d) / (2.0 * width * width)


def modified_laplace_log_grads(x, center, decay):
    """Partials of log mf w.r.t. (center, decay): (decay*sign(x-c), -|x-c|).

    Unlike the value-space derivatives these never underflow, which is what
    backpropagation needs when |x - center| is large.
    """
    d = np.asarray(x, dtype=np.float64) - center
    return decay * np.sign(d), -np.abs(d)


def gaussian_log_grads(x, center, width):
    """Partials of log mf w.r.t. (center, width): ((x-c)/w^2, (x-c)^2/w^3)."""
    d = np.asarray(x, dtype=np.float64) - center
    return d / (width * width), d * d / width**3
