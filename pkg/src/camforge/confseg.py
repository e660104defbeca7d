"""Confidence-mask segmentation and the gated supervision loss between two maps.

The confidence mask of a score map is the absolute deviation of each pixel
from the map mean; binarizing that mask at its own mean marks the pixels
whose value is decisively above or below average.  Because both statistics
come from the sample itself, no threshold hyper-parameter is introduced,
and the mask is invariant to positive-affine rescaling of the map.

The confident pixels then gate an L1 penalty that pulls a second score map
toward the first one, leaving unconfident regions free to disagree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cam_core import BinaryMap, ScoreMap
from .errors import CamforgeError

_MOD = "confseg"


@dataclass(frozen=True, eq=False)
class ConfidenceMask:
    """Per-pixel confidence of a score map and its binarization.

    ``mu1`` is the mean of the source map, ``mask`` holds |s - mu1|, ``mu2``
    is the mean of that deviation mask, and ``binary`` marks the pixels with
    mask strictly above mu2.
    """

    mu1: float
    mask: ScoreMap
    mu2: float
    binary: BinaryMap


@dataclass(frozen=True)
class FixedThresholds:
    """The pair of plain value thresholds equivalent to a ConfidenceMask.

    A pixel is confident exactly when its raw value is above ``xi1``
    (foreground) or below ``xi2`` (background).
    """

    xi1: float
    xi2: float


@dataclass(frozen=True)
class AlphaSchedule:
    """Linear ramp of the supervision weight from 0 to 1 over training.

    alpha(e) = min(1, e / (ramp_fraction * total_epochs)), so the weight
    reaches 1 after ``ramp_fraction`` of the run and stays there.
    """

    total_epochs: int
    ramp_fraction: float = 1.0

    def __post_init__(self):
        if self.total_epochs < 1:
            raise CamforgeError(_MOD, "bad_schedule", f"total_epochs must be >= 1, got {self.total_epochs}")
        if not 0.0 < self.ramp_fraction <= 1.0:
            raise CamforgeError(_MOD, "bad_schedule", f"ramp_fraction must be in (0, 1], got {self.ramp_fraction}")

    def alpha(self, epoch: int) -> float:
        if epoch < 0:
            raise CamforgeError(_MOD, "bad_epoch", f"epoch must be >= 0, got {epoch}")
        return min(1.0, epoch / (self.ramp_fraction * self.total_epochs))


def confidence_mask(score: ScoreMap) -> ConfidenceMask:
    """Build the deviation mask of ``score`` and binarize it at its own mean."""
    data = score.data
    mu1 = float(data.mean())
    deviation = np.abs(data - mu1)
    mu2 = float(deviation.mean())
    binary = BinaryMap((deviation > mu2).astype(np.uint8))
    return ConfidenceMask(mu1=mu1, mask=ScoreMap(deviation), mu2=mu2, binary=binary)


def fixed_thresholds(cm: ConfidenceMask) -> FixedThresholds:
    """Fold the two means into equivalent fore/background value thresholds."""
    return FixedThresholds(xi1=cm.mu1 + cm.mu2, xi2=cm.mu1 - cm.mu2)


def inner_loss(
    s_f: ScoreMap,
    s_l: ScoreMap,
    binary: BinaryMap,
    detach_target: bool = False,
) -> tuple[float, ScoreMap, ScoreMap]:
    """Confidence-gated L1 distance between two score maps, with gradients.

    loss = sum over pixels of |s_f - s_l| * binary.  The binary gate is a
    constant (no gradient flows through the thresholding that produced it),
    grad_f = sign(s_f - s_l) * binary with sign(0) = 0, and grad_l = -grad_f
    unless ``detach_target`` zeroes the gradient toward the supervising map.
    """
    if s_f.dims != s_l.dims or s_f.dims != binary.dims:
        raise CamforgeError(
            _MOD, "dim_mismatch",
            f"maps and gate must share dims, got {s_f.dims}, {s_l.dims}, {binary.dims}")
    gate = binary.bits.astype(np.float64)
    diff = s_f.data - s_l.data
    loss = float((np.abs(diff) * gate).sum())
    grad_f = np.sign(diff) * gate
    grad_l = np.zeros_like(grad_f) if detach_target else -grad_f
    return loss, ScoreMap(grad_f), ScoreMap(grad_l)


def combined_loss(cls_loss: float, inner: float, epoch: int, schedule: AlphaSchedule) -> float:
    """Classification loss plus the ramped supervision term."""
    return cls_loss + schedule.alpha(epoch) * inner
