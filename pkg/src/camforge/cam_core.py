"""Core activation-map types and the numeric primitives shared by all modules.

Tensors are small dense float64 grids.  Every value object validates its
invariants at construction (shape, finiteness) and freezes its buffer, so
instances are safe to share across threads.  All operations here are pure
functions; losses return their closed-form gradient next to the value
instead of relying on an autodiff tape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CamforgeError

_MOD = "cam_core"


def _frozen_f64(values, ndim: int, what: str) -> np.ndarray:
    """Copy ``values`` into a read-only C-order float64 array of rank ``ndim``."""
    arr = np.array(values, dtype=np.float64, order="C", copy=True)
    if arr.ndim != ndim:
        raise CamforgeError(_MOD, "bad_dims", f"{what} must be {ndim}-D, got {arr.ndim}-D")
    if arr.size == 0 or min(arr.shape) < 1:
        raise CamforgeError(_MOD, "bad_dims", f"{what} dims must all be >= 1, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise CamforgeError(_MOD, "not_finite", f"{what} contains NaN or Inf")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Tensor3:
    """A (channels, height, width) grid of finite float64 values, row-major."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen_f64(self.data, 3, "Tensor3"))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


# A class activation map is just a (classes, H, W) stack; the alias marks intent.
ClassActivationMap = Tensor3


@dataclass(frozen=True, eq=False)
class ScoreMap:
    """A single (height, width) activation slice, finite float64, row-major."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen_f64(self.data, 2, "ScoreMap"))

    @property
    def dims(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class BinaryMap:
    """A (height, width) grid of {0,1} bits, row-major."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.array(self.bits, order="C", copy=True)
        if arr.ndim != 2 or arr.size == 0:
            raise CamforgeError(_MOD, "bad_dims", f"BinaryMap must be 2-D and non-empty, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            vals = np.unique(arr)
            if not np.isin(vals, (0, 1)).all():
                raise CamforgeError(_MOD, "not_binary", "BinaryMap values must be 0 or 1")
            arr = arr.astype(np.uint8)
        elif not np.isin(np.unique(arr), (0, 1)).all():
            raise CamforgeError(_MOD, "not_binary", "BinaryMap values must be 0 or 1")
        arr.flags.writeable = False
        object.__setattr__(self, "bits", arr)

    @property
    def dims(self) -> tuple[int, int]:
        return self.bits.shape

    def count(self) -> int:
        """Number of set pixels."""
        return int(self.bits.sum())


@dataclass(frozen=True, eq=False)
class Logits:
    """Per-class scores with optional class names."""

    values: np.ndarray
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_f64(self.values, 1, "Logits"))
        if self.labels is not None:
            labels = tuple(self.labels)
            if len(labels) != len(self.values):
                raise CamforgeError(_MOD, "bad_dims", "labels length must match logit count")
            object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True, eq=False)
class LabelledSample:
    """An image, its class index, and the activation stack produced for it.

    Image values must lie in [0, 1] so that activation-weighted products stay
    interpretable as soft selections of image content.
    """

    image: Tensor3
    class_index: int
    cam: ClassActivationMap

    def __post_init__(self):
        if not 0 <= self.class_index < self.cam.channels:
            raise CamforgeError(
                _MOD, "class_out_of_range",
                f"class_index {self.class_index} not in [0, {self.cam.channels})")
        lo = float(self.image.data.min())
        hi = float(self.image.data.max())
        if lo < 0.0 or hi > 1.0:
            raise CamforgeError(_MOD, "bad_image_range", f"image values must lie in [0, 1], got [{lo}, {hi}]")


def global_average_pool(cam: Tensor3) -> Logits:
    """Spatial mean of each channel: logit[c] = sum(channel c) / (H * W)."""
    means = cam.data.reshape(cam.channels, -1).mean(axis=1)
    return Logits(means)


def slice_class(cam: Tensor3, c: int) -> ScoreMap:
    """Copy out channel ``c`` as a ScoreMap; never aliases the source stack."""
    if not 0 <= c < cam.channels:
        raise CamforgeError(_MOD, "class_out_of_range", f"class index {c} not in [0, {cam.channels})")
    return ScoreMap(cam.data[c])


def softmax_cross_entropy(logits: Logits, target: int) -> tuple[float, np.ndarray]:
    """Negative log softmax probability of ``target``, with its gradient.

    Computed with max-subtraction for stability.  The gradient w.r.t. the
    logits is softmax(logits) - onehot(target).
    """
    v = logits.values
    if not 0 <= target < len(v):
        raise CamforgeError(_MOD, "bad_target", f"target {target} not in [0, {len(v)})")
    shifted = v - v.max()
    log_norm = float(np.log(np.exp(shifted).sum()))
    loss = log_norm - float(shifted[target])
    grad = np.exp(shifted - log_norm)
    grad[target] -= 1.0
    return loss, grad


def minmax_normalize(s: ScoreMap) -> ScoreMap:
    """Rescale to [0, 1]; a constant map becomes all zeros.

    The all-zeros choice for constant maps keeps (1 - s) weighting maximal
    for featureless inputs.
    """
    lo = float(s.data.min())
    hi = float(s.data.max())
    if hi == lo:
        return ScoreMap(np.zeros_like(s.data))
    return ScoreMap((s.data - lo) / (hi - lo))
