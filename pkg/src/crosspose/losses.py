"""Forward-only contrastive and segmentation loss diagnostics.

These are evaluation-time reimplementations of the training objectives,
for checking feature quality and mask quality on frozen data; nothing
here is differentiable or tied to a tensor framework.

Matched features from the two views form index-aligned sets. The
positive term penalizes matched pairs whose cosine distance exceeds a
margin. The hardest-negative term works per side: for each sampled
feature, candidate negatives are features of the same view at least
``exclusion_radius`` pixels away, and the term penalizes the closest
such candidate for sitting inside the ``negative_margin``. Both sides
are averaged with weight 1/(2C) over the C matches.

Cosine distance is ``(1 - cos) / 2`` throughout, so all margins live in
[0, 1].
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyMatchSet, ZeroVector
from .matcher import ZERO_NORM_TOL

logger = logging.getLogger(__name__)

DICE_SMOOTH = 1e-6


@dataclass(frozen=True)
class LossParams:
    positive_margin: float = 0.2
    negative_margin: float = 0.9
    exclusion_radius: float = 5.0  # pixels
    weight_positive: float = 0.5
    weight_negative: float = 0.5
    weight_mask: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.positive_margin <= 1.0:
            raise ValueError("positive_margin must lie in [0, 1]")
        if not 0.0 <= self.negative_margin <= 1.0:
            raise ValueError("negative_margin must lie in [0, 1]")
        if self.positive_margin >= self.negative_margin:
            raise ValueError("positive_margin must be below negative_margin")
        if self.exclusion_radius < 0:
            raise ValueError("exclusion_radius must be non-negative")
        for name in ("weight_positive", "weight_negative", "weight_mask"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class FeatureSet:
    """Sampled feature vectors with their pixel coordinates.

    ``features`` is (C, D); ``coords`` is (C, 2) in ``(u, v)`` pixels.
    Two FeatureSets from matched views align index-wise: row i of each
    is one matched pair.
    """

    features: np.ndarray
    coords: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        c = np.asarray(self.coords, dtype=np.float64)
        if f.ndim != 2:
            raise ValueError(f"features must be (C, D), got {f.shape}")
        if c.shape != (len(f), 2):
            raise ValueError(f"coords must be ({len(f)}, 2), got {c.shape}")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(c))):
            raise ValueError("feature set contains non-finite values")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "coords", c)

    def __len__(self) -> int:
        return len(self.features)


def _normalized(features: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(features, axis=1)
    if np.any(norms < ZERO_NORM_TOL):
        raise ZeroVector(f"{what} contains (near-)zero feature vectors")
    return features / norms[:, None]


def _pairwise_cosine_distance(unit: np.ndarray) -> np.ndarray:
    return np.clip((1.0 - unit @ unit.T) / 2.0, 0.0, 1.0)


def _require_aligned(anchor: FeatureSet, query: FeatureSet):
    if len(anchor) == 0 or len(query) == 0:
        raise EmptyMatchSet("loss requested over zero matches")
    if len(anchor) != len(query):
        raise ValueError(
            f"feature sets must align index-wise: {len(anchor)} vs {len(query)}"
        )
    if anchor.features.shape[1] != query.features.shape[1]:
        raise ValueError("feature dimensions differ between views")


def positive_loss(
    anchor: FeatureSet, query: FeatureSet, params: LossParams = LossParams()
) -> float:
    """Mean hinge on matched-pair distance above the positive margin."""
    _require_aligned(anchor, query)
    ua = _normalized(anchor.features, "anchor set")
    uq = _normalized(query.features, "query set")
    dist = np.clip((1.0 - np.einsum("ij,ij->i", ua, uq)) / 2.0, 0.0, 1.0)
    return float(np.mean(np.maximum(dist - params.positive_margin, 0.0)))


def hardest_negative_indices(
    fset: FeatureSet, exclusion_radius: float = 5.0
) -> tuple[np.ndarray, np.ndarray]:
    """Per feature, its closest same-view candidate negative.

    Candidates for row i are rows k != i whose pixel distance from row i
    is at least ``exclusion_radius``. Returns ``(indices, distances)``
    with index -1 and distance NaN where no candidate exists; distance
    ties resolve to the lowest index.
    """
    if len(fset) == 0:
        raise EmptyMatchSet("no features to search negatives in")
    unit = _normalized(fset.features, "feature set")
    dist = _pairwise_cosine_distance(unit)
    sep = np.linalg.norm(
        fset.coords[:, None, :] - fset.coords[None, :, :], axis=-1
    )
    blocked = sep < exclusion_radius
    np.fill_diagonal(blocked, True)
    dist = np.where(blocked, np.inf, dist)
    indices = np.argmin(dist, axis=1)
    best = dist[np.arange(len(fset)), indices]
    none = ~np.isfinite(best)
    indices[none] = -1
    best[none] = np.nan
    return indices, best


def hardest_negative_loss(
    anchor: FeatureSet, query: FeatureSet, params: LossParams = LossParams()
) -> float:
    """Two-sided hardest-negative hinge, averaged with weight 1/(2C).

    Features whose candidate set is empty contribute nothing; how many
    were skipped is logged at debug level.
    """
    _require_aligned(anchor, query)
    c = len(anchor)
    total = 0.0
    skipped = 0
    for fset in (anchor, query):
        _, best = hardest_negative_indices(fset, params.exclusion_radius)
        missing = np.isnan(best)
        skipped += int(np.count_nonzero(missing))
        hinge = np.maximum(params.negative_margin - best[~missing], 0.0)
        total += float(np.sum(hinge))
    if skipped:
        logger.debug(
            "hardest-negative loss: %d feature(s) had no candidate beyond "
            "the exclusion radius and contributed 0",
            skipped,
        )
    return total / (2.0 * c)


def feature_loss(
    positive: float, negative: float, params: LossParams = LossParams()
) -> float:
    """Weighted sum of the two contrastive terms."""
    return params.weight_negative * negative + params.weight_positive * positive


def dice_loss(pred, gt_mask) -> float:
    """Soft Dice loss between mask activations and a binary mask.

    ``pred`` holds activations in [0, 1]. The denominator carries a
    small smoothing constant, so two empty masks score 1.0 (no overlap
    evidence), while a perfect non-empty prediction scores ~0.
    """
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt_mask)
    if p.shape != g.shape:
        raise DimensionMismatch(f"shapes differ: {p.shape} vs {g.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise ValueError("activations must be finite and lie in [0, 1]")
    g = g.astype(np.float64)
    overlap = float(np.sum(p * g))
    mass = float(np.sum(p) + np.sum(g))
    return 1.0 - 2.0 * overlap / (mass + DICE_SMOOTH)


def total_loss(
    mask_loss: float, feature_loss_value: float, params: LossParams = LossParams()
) -> float:
    """Mask term plus feature term: the full training-time objective."""
    return params.weight_mask * mask_loss + feature_loss_value
