"""Batch-level metric regularizer over foreground/background embeddings.

Each sample contributes three embedded vectors: its activation-weighted
foreground, the complement-weighted background, and the background further
gated by the confidence mask.  Over every unordered pair of samples the
loss divides the quantities that should shrink (same-class foreground
distance, background-vs-confident-background drift) by the ones that should
grow (different-class foreground distance, foreground/background
separation):

    loss = sum over pairs {m, n} of
        [gamma * (back_m + back_n) + same(m,n) * d(F_m, F_n)]
        / [delta * diff(m,n) * d(F_m, F_n) + (cam_m + cam_n) / 2 + epsilon]

where cam_m = ||F_m - B_m||, back_m = ||B_m - MaskB_m||, same/diff are the
class-equality indicators, and epsilon keeps the denominator positive.
Analytic gradients are returned for every vector; the norm subgradient at
coincident vectors is taken as zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cam_core import LabelledSample, Tensor3, minmax_normalize, slice_class
from .confseg import confidence_mask
from .errors import CamforgeError
from .resample import resize_bilinear, resize_nearest

_MOD = "coaug"

DEFAULT_EMBED_DIM = 64
DEFAULT_EPSILON = 1e-8
DEFAULT_BATCH_SIZE = 48
DEFAULT_MAX_CATEGORIES = 12
_POOL = 8  # embedder pools each channel to a _POOL x _POOL grid


class LinearEmbedder:
    """Deterministic linear embedding of a tensor into a fixed-dim vector.

    Each channel is mean-pooled onto an 8x8 grid (cover-all cells, unequal
    sizes allowed), the pools are flattened, and a seeded Gaussian matrix
    with entries ~ N(0, 1/fan_in) projects them to ``dim`` outputs.  The
    same seed and input always produce bit-identical vectors, and the map
    is linear, so the input gradient for a cotangent is exact.
    """

    def __init__(self, seed: int = 0, dim: int = DEFAULT_EMBED_DIM):
        if dim < 1:
            raise CamforgeError(_MOD, "bad_param", f"embedding dim must be >= 1, got {dim}")
        self.seed = int(seed)
        self.dim = int(dim)
        self._matrices: dict[int, np.ndarray] = {}

    def _matrix(self, channels: int) -> np.ndarray:
        mat = self._matrices.get(channels)
        if mat is None:
            fan_in = channels * _POOL * _POOL
            rng = np.random.default_rng([self.seed, channels])
            mat = rng.standard_normal((self.dim, fan_in)) / math.sqrt(fan_in)
            mat.flags.writeable = False
            self._matrices[channels] = mat
        return mat

    @staticmethod
    def _cell_bounds(size: int) -> list[tuple[int, int]]:
        return [(math.floor(i * size / _POOL), max(math.ceil((i + 1) * size / _POOL), math.floor(i * size / _POOL) + 1))
                for i in range(_POOL)]

    def _pool(self, x: Tensor3) -> np.ndarray:
        c, h, w = x.dims
        rows = self._cell_bounds(h)
        cols = self._cell_bounds(w)
        pooled = np.empty((c, _POOL, _POOL))
        for i, (r0, r1) in enumerate(rows):
            for j, (c0, c1) in enumerate(cols):
                pooled[:, i, j] = x.data[:, r0:r1, c0:c1].mean(axis=(1, 2))
        return pooled.reshape(c * _POOL * _POOL)

    def embed(self, x: Tensor3) -> np.ndarray:
        return self._matrix(x.channels) @ self._pool(x)

    def input_gradient(self, x: Tensor3, cotangent: np.ndarray) -> Tensor3:
        """Gradient of <cotangent, embed(x)> with respect to ``x``."""
        cotangent = np.asarray(cotangent, dtype=np.float64)
        if cotangent.shape != (self.dim,):
            raise CamforgeError(_MOD, "dim_mismatch", f"cotangent must have shape ({self.dim},)")
        c, h, w = x.dims
        pooled_grad = (self._matrix(c).T @ cotangent).reshape(c, _POOL, _POOL)
        grad = np.zeros((c, h, w))
        for i, (r0, r1) in enumerate(self._cell_bounds(h)):
            for j, (c0, c1) in enumerate(self._cell_bounds(w)):
                grad[:, r0:r1, c0:c1] += pooled_grad[:, i, j, None, None] / ((r1 - r0) * (c1 - c0))
        return Tensor3(grad)


def embed_default(x: Tensor3, seed: int = 0, dim: int = DEFAULT_EMBED_DIM) -> np.ndarray:
    """One-shot embedding with a fresh default embedder."""
    return LinearEmbedder(seed=seed, dim=dim).embed(x)


def _apply_weights(
    fg_weight: np.ndarray, confident: np.ndarray, image: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Weight an image stack by a [0,1] foreground map and a {0,1} gate."""
    fg = fg_weight[None, :, :] * image
    bg = (1.0 - fg_weight)[None, :, :] * image
    maskbg = ((1.0 - fg_weight) * confident)[None, :, :] * image
    return fg, bg, maskbg


def weight_sample(sample: LabelledSample) -> tuple[Tensor3, Tensor3, Tensor3]:
    """Split a sample into foreground, background, and confident-background inputs.

    The sample's class slice is min-max normalized and bilinearly resized to
    the image grid to give the foreground weight; the confidence binarization
    of the same slice is nearest-resized (preserving binarity) to gate the
    confident-background input.  2-D weights broadcast over image channels.
    """
    score = slice_class(sample.cam, sample.class_index)
    h, w = sample.image.height, sample.image.width
    fg_weight = resize_bilinear(minmax_normalize(score).data, h, w)
    confident = resize_nearest(confidence_mask(score).binary.bits, h, w).astype(np.float64)
    fg, bg, maskbg = _apply_weights(fg_weight, confident, sample.image.data)
    return Tensor3(fg), Tensor3(bg), Tensor3(maskbg)


def pair_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Euclidean distance between two equally sized vectors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise CamforgeError(_MOD, "dim_mismatch", f"vector shapes differ: {u.shape} vs {v.shape}")
    return float(np.linalg.norm(u - v))


@dataclass(frozen=True, eq=False)
class EmbeddingBatch:
    """Per-sample embedding triples with class labels and loss scale knobs."""

    foreground: np.ndarray
    background: np.ndarray
    masked_background: np.ndarray
    labels: np.ndarray
    gamma: float = 1.0
    delta: float = 1.0
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        fg = np.array(self.foreground, dtype=np.float64, copy=True)
        bg = np.array(self.background, dtype=np.float64, copy=True)
        mb = np.array(self.masked_background, dtype=np.float64, copy=True)
        labels = np.array(self.labels, dtype=np.int64, copy=True)
        if fg.ndim != 2 or fg.shape[0] < 1:
            raise CamforgeError(_MOD, "dim_mismatch", f"foreground must be (n, d) with n >= 1, got {fg.shape}")
        if bg.shape != fg.shape or mb.shape != fg.shape:
            raise CamforgeError(_MOD, "dim_mismatch", "foreground/background/masked_background shapes must match")
        if labels.shape != (fg.shape[0],):
            raise CamforgeError(_MOD, "dim_mismatch", "labels must be one per sample")
        if not (np.isfinite(fg).all() and np.isfinite(bg).all() and np.isfinite(mb).all()):
            raise CamforgeError(_MOD, "not_finite", "embedding vectors must be finite")
        if self.gamma < 0 or self.delta < 0 or self.epsilon <= 0:
            raise CamforgeError(_MOD, "bad_param", "need gamma >= 0, delta >= 0, epsilon > 0")
        for name, arr in (("foreground", fg), ("background", bg), ("masked_background", mb), ("labels", labels)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.foreground.shape[0]


@dataclass(frozen=True, eq=False)
class BatchGradients:
    """Cotangents of the batch loss for every embedded vector."""

    foreground: np.ndarray
    background: np.ndarray
    masked_background: np.ndarray


def _row_norms(vectors: np.ndarray) -> np.ndarray:
    return np.sqrt((vectors * vectors).sum(axis=1))


def _safe_unit(vectors: np.ndarray, norms: np.ndarray) -> np.ndarray:
    # zero direction at coincident vectors: the norm subgradient is taken as 0
    out = np.zeros_like(vectors)
    nz = norms > 0
    out[nz] = vectors[nz] / norms[nz, None]
    return out


def coaug_loss(batch: EmbeddingBatch, mean_over_pairs: bool = True) -> tuple[float, BatchGradients]:
    """Batch metric loss and its gradients w.r.t. every vector.

    The loss sums the pair ratio described in the module docstring over all
    unordered pairs; with ``mean_over_pairs`` (default) it is divided by the
    pair count so its magnitude is stable in the batch size.  The loss value
    is reduced with exact summation, making it bit-identical under any
    permutation of the batch.  A single-sample batch has loss 0 and zero
    gradients.
    """
    fg, bg, mb = batch.foreground, batch.background, batch.masked_background
    n = len(batch)
    grads = BatchGradients(np.zeros_like(fg), np.zeros_like(bg), np.zeros_like(mb))
    if n == 1:
        return 0.0, grads

    cam_sep = _row_norms(fg - bg)          # per-sample foreground/background separation
    back_drift = _row_norms(bg - mb)       # per-sample background vs confident background
    cam_unit = _safe_unit(fg - bg, cam_sep)
    back_unit = _safe_unit(bg - mb, back_drift)

    iu, ju = np.triu_indices(n, k=1)
    fg_diff = fg[iu] - fg[ju]
    fg_dist = _row_norms(fg_diff)
    fg_unit = _safe_unit(fg_diff, fg_dist)
    same = (batch.labels[iu] == batch.labels[ju]).astype(np.float64)
    diff = 1.0 - same

    num = batch.gamma * (back_drift[iu] + back_drift[ju]) + same * fg_dist
    den = batch.delta * diff * fg_dist + 0.5 * (cam_sep[iu] + cam_sep[ju]) + batch.epsilon

    scale = 1.0 / len(iu) if mean_over_pairs else 1.0
    loss = math.fsum(num / den) * scale

    d_num = scale / den                    # d term / d numerator-part
    d_den = -scale * num / (den * den)     # d term / d denominator-part

    # foreground pair distance appears in the numerator (same) and denominator (diff)
    pair_coef = (same * d_num + batch.delta * diff * d_den)[:, None] * fg_unit
    np.add.at(grads.foreground, iu, pair_coef)
    np.add.at(grads.foreground, ju, -pair_coef)

    # foreground/background separation of each member enters the denominator at weight 1/2
    half_den = 0.5 * d_den
    for idx in (iu, ju):
        np.add.at(grads.foreground, idx, half_den[:, None] * cam_unit[idx])
        np.add.at(grads.background, idx, -half_den[:, None] * cam_unit[idx])

    # background drift of each member enters the numerator at weight gamma
    gd = batch.gamma * d_num
    for idx in (iu, ju):
        np.add.at(grads.background, idx, gd[:, None] * back_unit[idx])
        np.add.at(grads.masked_background, idx, -gd[:, None] * back_unit[idx])

    return loss, grads


def make_batch(
    samples,
    max_categories: int = DEFAULT_MAX_CATEGORIES,
    batch_size: int = DEFAULT_BATCH_SIZE,
    seed: int = 0,
) -> list[int]:
    """Seeded batch sampler bounding the number of distinct classes.

    Returns ``batch_size`` dataset indices drawn from at most
    ``max_categories`` distinct classes; every class present in the batch
    gets at least two slots so same-class pairs exist, falling back to
    sampling with replacement when a class has too few samples.
    """
    if batch_size < 2:
        raise CamforgeError(_MOD, "batch_too_small", f"batch_size must be >= 2, got {batch_size}")
    if max_categories < 1:
        raise CamforgeError(_MOD, "bad_param", f"max_categories must be >= 1, got {max_categories}")
    labels = [int(getattr(s, "class_index", s)) for s in samples]
    if not labels:
        raise CamforgeError(_MOD, "bad_param", "dataset must be nonempty")

    by_class: dict[int, list[int]] = {}
    for idx, lab in enumerate(labels):
        by_class.setdefault(lab, []).append(idx)

    rng = np.random.default_rng(seed)
    classes = sorted(by_class)
    order = [classes[i] for i in rng.permutation(len(classes))]
    # prefer classes that can supply a same-class pair without replacement
    ranked = [c for c in order if len(by_class[c]) >= 2] + [c for c in order if len(by_class[c]) < 2]
    k = min(max_categories, len(classes), batch_size // 2)
    chosen = ranked[:k]

    quota = {c: 2 for c in chosen}
    extra = batch_size - 2 * k
    if extra > 0:
        for c in rng.choice(np.array(chosen), size=extra, replace=True):
            quota[int(c)] += 1

    picked: list[int] = []
    for c in chosen:
        pool = by_class[c]
        need = quota[c]
        if len(pool) >= need:
            take = rng.choice(len(pool), size=need, replace=False)
        else:
            take = np.concatenate([np.arange(len(pool)), rng.choice(len(pool), size=need - len(pool), replace=True)])
        picked.extend(pool[i] for i in take)

    arr = np.array(picked)
    rng.shuffle(arr)
    return [int(i) for i in arr]
