"""Contrastive feature losses and the mask loss.

Evaluates the positive, hardest-negative, and dice terms on descriptor
sets of varying quality, showing how each term reacts as features decay
from perfect to random.
"""

import numpy as np

from crosspose import (
    FeatureSet,
    dice_loss,
    feature_loss,
    hardest_negative_loss,
    positive_loss,
    total_loss,
)


def _unit(rows):
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def main():
    rng = np.random.default_rng(4)
    count, dim = 120, 32
    coords = np.column_stack([
        rng.uniform(0, 300, size=count), rng.uniform(0, 300, size=count),
    ])
    anchor = _unit(rng.normal(size=(count, dim)))

    # Blend the matched query features from exact copies toward noise:
    # the positive term wakes up, the hardest-negative term relaxes.
    print(f"{'corruption':>10s} {'positive':>9s} {'hardest-neg':>12s} "
          f"{'feature':>8s}")
    for blend in (0.0, 0.25, 0.5, 1.0):
        noise = _unit(rng.normal(size=(count, dim)))
        query = _unit((1.0 - blend) * anchor + blend * noise)
        a = FeatureSet(anchor, coords)
        q = FeatureSet(query, coords)
        pos = positive_loss(a, q)
        neg = hardest_negative_loss(a, q)
        print(f"{blend:10.2f} {pos:9.4f} {neg:12.4f} "
              f"{feature_loss(pos, neg):8.4f}")
    print("perfect matches cost exactly zero positive loss\n")

    # The dice term grades soft mask predictions; the total bundles both.
    gt = np.zeros((64, 64), dtype=bool)
    gt[20:44, 16:48] = True
    for sharpness, label in ((12.0, "sharp"), (2.0, "blurry")):
        rows = np.arange(64.0)
        dist_r = np.minimum(rows[:, None] - 19.5, 43.5 - rows[:, None])
        dist_c = np.minimum(rows[None, :] - 15.5, 47.5 - rows[None, :])
        logits = sharpness * np.minimum(dist_r, dist_c)
        pred = 1.0 / (1.0 + np.exp(-np.clip(logits, -30, 30)))
        print(f"{label:6s} mask prediction: dice {dice_loss(pred, gt):.4f}")

    a = FeatureSet(anchor, coords)
    pos = positive_loss(a, a)
    neg = hardest_negative_loss(a, a)
    mask_term = dice_loss(gt.astype(float), gt)
    print(f"total = mask + feature: "
          f"{total_loss(mask_term, feature_loss(pos, neg)):.6f} "
          f"on perfect inputs")


if __name__ == "__main__":
    main()
