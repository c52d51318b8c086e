"""Masked nearest-neighbor matching of dense feature grids.

Features live on an ``(H, W, D)`` grid per view. Matching considers only
cells selected by a mask at grid resolution, pairs each anchor cell with
its nearest query cell in cosine distance, drops pairs above a distance
threshold, and keeps at most ``max_matches`` pairs globally (the lowest
distances win). Matched cells are later lifted to image pixels through
the center-of-cell convention and back-projected to 3D with the depth
maps; cells that land on depth holes are dropped at that stage.

The cosine distance used everywhere is ``(1 - cos) / 2``, which maps
aligned vectors to 0 and opposed vectors to 1 and is invariant to
positive rescaling of either argument.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyMask, ZeroVector
from .geometry import CameraIntrinsics, as_depth, as_mask

# Cosine distance is undefined below this norm.
ZERO_NORM_TOL = 1e-12

# Anchor cells are matched in blocks of this many rows to bound the
# similarity-matrix footprint on full 192x192 grids.
_CHUNK = 1024

DEFAULT_GRID_SIZE = 192
DEFAULT_FEATURE_DIM = 32


@dataclass(frozen=True)
class MatchParams:
    """Thresholds for feature matching.

    ``max_distance`` rejects weak matches (cosine distance above it);
    ``max_matches`` caps how many pairs survive, keeping the lowest
    distances.
    """

    max_distance: float = 0.25
    max_matches: int = 500

    def __post_init__(self):
        if not 0.0 <= self.max_distance <= 1.0:
            raise ValueError("max_distance must lie in [0, 1]")
        if self.max_matches < 1:
            raise ValueError("max_matches must be at least 1")


@dataclass(frozen=True)
class MatchSet:
    """Index-aligned matches between an anchor and a query view.

    ``anchor_cells``/``query_cells`` are (M, 2) integer ``(u, v)``
    coordinates on the feature grid. After :func:`lift_matches` the
    image-resolution pixels and back-projected 3D points are populated;
    all arrays stay aligned index-wise.
    """

    anchor_cells: np.ndarray
    query_cells: np.ndarray
    distances: np.ndarray
    anchor_pixels: np.ndarray | None = None
    query_pixels: np.ndarray | None = None
    anchor_points: np.ndarray | None = None
    query_points: np.ndarray | None = None

    def __post_init__(self):
        a = np.asarray(self.anchor_cells, dtype=np.int64).reshape(-1, 2)
        q = np.asarray(self.query_cells, dtype=np.int64).reshape(-1, 2)
        d = np.asarray(self.distances, dtype=np.float64).reshape(-1)
        if not (len(a) == len(q) == len(d)):
            raise ValueError("anchor cells, query cells, and distances must align")
        object.__setattr__(self, "anchor_cells", a)
        object.__setattr__(self, "query_cells", q)
        object.__setattr__(self, "distances", d)
        for name in ("anchor_pixels", "query_pixels"):
            val = getattr(self, name)
            if val is not None:
                val = np.asarray(val, dtype=np.int64).reshape(-1, 2)
                if len(val) != len(a):
                    raise ValueError(f"{name} must align with the match count")
                object.__setattr__(self, name, val)
        for name in ("anchor_points", "query_points"):
            val = getattr(self, name)
            if val is not None:
                val = np.asarray(val, dtype=np.float64).reshape(-1, 3)
                if len(val) != len(a):
                    raise ValueError(f"{name} must align with the match count")
                object.__setattr__(self, name, val)

    def __len__(self) -> int:
        return len(self.anchor_cells)

    @property
    def has_points(self) -> bool:
        return self.anchor_points is not None and self.query_points is not None

    @classmethod
    def from_points(cls, anchor_points, query_points, distances=None) -> "MatchSet":
        """Wrap bare 3D correspondences (e.g. synthetic ones) as a MatchSet."""
        pa = np.asarray(anchor_points, dtype=np.float64).reshape(-1, 3)
        pq = np.asarray(query_points, dtype=np.float64).reshape(-1, 3)
        if len(pa) != len(pq):
            raise ValueError("anchor/query point counts differ")
        d = np.zeros(len(pa)) if distances is None else distances
        zeros = np.zeros((len(pa), 2), dtype=np.int64)
        return cls(
            anchor_cells=zeros,
            query_cells=zeros.copy(),
            distances=d,
            anchor_points=pa,
            query_points=pq,
        )


def feature_distance(f1, f2) -> float:
    """Cosine distance ``(1 - cos) / 2`` between two feature vectors."""
    a = np.asarray(f1, dtype=np.float64).reshape(-1)
    b = np.asarray(f2, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ValueError(f"feature dimensions differ: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na < ZERO_NORM_TOL or nb < ZERO_NORM_TOL:
        raise ZeroVector("cosine distance is undefined for (near-)zero vectors")
    cos = np.dot(a / na, b / nb)
    return float(min(1.0, max(0.0, (1.0 - cos) / 2.0)))


def downsample_mask(mask, grid_shape: tuple[int, int]) -> np.ndarray:
    """Resample a mask to the feature-grid resolution by nearest neighbor.

    Each grid cell samples the image pixel under its center, mirroring
    the center-of-cell pixel mapping used when lifting matches.
    """
    m = as_mask(mask)
    gh, gw = grid_shape
    if gh < 1 or gw < 1:
        raise ValueError("grid shape must be positive")
    if m.shape == (gh, gw):
        return m.copy()
    h, w = m.shape
    rows = np.floor((np.arange(gh) + 0.5) * h / gh).astype(np.int64)
    cols = np.floor((np.arange(gw) + 0.5) * w / gw).astype(np.int64)
    rows = np.clip(rows, 0, h - 1)
    cols = np.clip(cols, 0, w - 1)
    return m[np.ix_(rows, cols)]


def _validate_features(feat, name: str) -> np.ndarray:
    arr = np.asarray(feat, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"{name} must have shape (H, W, D), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def match_features(
    feat_a,
    feat_q,
    mask_a,
    mask_q,
    params: MatchParams = MatchParams(),
) -> MatchSet:
    """Match masked anchor cells to their nearest masked query cells.

    Masks must already be at feature-grid resolution (see
    :func:`downsample_mask`). Every kept pair has distance at most
    ``params.max_distance``; if more pairs qualify than
    ``params.max_matches``, exactly the lowest-distance pairs survive,
    with ties broken by lowest anchor cell index. Output is ordered by
    anchor cell in row-major scan order, so results are deterministic.
    """
    fa = _validate_features(feat_a, "anchor features")
    fq = _validate_features(feat_q, "query features")
    if fa.shape[2] != fq.shape[2]:
        raise ValueError("feature dimensions differ between views")
    ma = as_mask(mask_a, fa.shape[:2])
    mq = as_mask(mask_q, fq.shape[:2])

    lin_a = np.nonzero(ma.ravel())[0]
    lin_q = np.nonzero(mq.ravel())[0]
    if len(lin_a) == 0:
        raise EmptyMask("anchor mask selects no feature cells")
    if len(lin_q) == 0:
        raise EmptyMask("query mask selects no feature cells")

    va = fa.reshape(-1, fa.shape[2])[lin_a]
    vq = fq.reshape(-1, fq.shape[2])[lin_q]
    norm_a = np.linalg.norm(va, axis=1)
    norm_q = np.linalg.norm(vq, axis=1)
    if np.any(norm_a < ZERO_NORM_TOL) or np.any(norm_q < ZERO_NORM_TOL):
        raise ZeroVector("masked cells contain (near-)zero feature vectors")
    va = va / norm_a[:, None]
    vq = vq / norm_q[:, None]

    best_idx = np.empty(len(va), dtype=np.int64)
    best_sim = np.empty(len(va))
    for start in range(0, len(va), _CHUNK):
        sims = va[start : start + _CHUNK] @ vq.T
        # argmax returns the first maximum, i.e. the lowest query cell index.
        best = np.argmax(sims, axis=1)
        best_idx[start : start + _CHUNK] = best
        best_sim[start : start + _CHUNK] = sims[np.arange(len(best)), best]

    dist = np.clip((1.0 - best_sim) / 2.0, 0.0, 1.0)
    keep = dist <= params.max_distance
    kept_a = lin_a[keep]
    kept_q = lin_q[best_idx[keep]]
    kept_d = dist[keep]

    if len(kept_d) > params.max_matches:
        order = np.lexsort((kept_a, kept_d))[: params.max_matches]
        order = order[np.argsort(kept_a[order], kind="stable")]
        kept_a = kept_a[order]
        kept_q = kept_q[order]
        kept_d = kept_d[order]

    wa = fa.shape[1]
    wq = fq.shape[1]
    return MatchSet(
        anchor_cells=np.column_stack([kept_a % wa, kept_a // wa]),
        query_cells=np.column_stack([kept_q % wq, kept_q // wq]),
        distances=kept_d,
    )


def _cells_to_pixels(cells: np.ndarray, grid_shape, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Map grid cells to image pixels under the center-of-cell convention."""
    gh, gw = grid_shape
    u = np.floor((cells[:, 0] + 0.5) * intrinsics.width / gw).astype(np.int64)
    v = np.floor((cells[:, 1] + 0.5) * intrinsics.height / gh).astype(np.int64)
    u = np.clip(u, 0, intrinsics.width - 1)
    v = np.clip(v, 0, intrinsics.height - 1)
    return np.column_stack([u, v])


def lift_matches(
    matches: MatchSet,
    depth_a,
    depth_q,
    cam_a: CameraIntrinsics,
    cam_q: CameraIntrinsics,
    grid_shape_a: tuple[int, int] | None = None,
    grid_shape_q: tuple[int, int] | None = None,
) -> MatchSet:
    """Back-project matched cells to 3D through the two depth maps.

    Grid shapes default to the largest cell coordinate plus one only when
    the matches already live at image resolution; pass them explicitly
    for coarser grids. Pairs whose pixel has no valid depth on either
    side are dropped; the returned set keeps 2D and 3D arrays aligned.
    """
    da = as_depth(depth_a, cam_a)
    dq = as_depth(depth_q, cam_q)
    ga = grid_shape_a if grid_shape_a is not None else (cam_a.height, cam_a.width)
    gq = grid_shape_q if grid_shape_q is not None else (cam_q.height, cam_q.width)

    pix_a = _cells_to_pixels(matches.anchor_cells, ga, cam_a)
    pix_q = _cells_to_pixels(matches.query_cells, gq, cam_q)
    za = da[pix_a[:, 1], pix_a[:, 0]]
    zq = dq[pix_q[:, 1], pix_q[:, 0]]
    keep = (za > 0) & (zq > 0)

    pix_a, pix_q = pix_a[keep], pix_q[keep]
    za, zq = za[keep], zq[keep]
    pts_a = np.column_stack(
        [
            za * (pix_a[:, 0] - cam_a.cx) / cam_a.fx,
            za * (pix_a[:, 1] - cam_a.cy) / cam_a.fy,
            za,
        ]
    )
    pts_q = np.column_stack(
        [
            zq * (pix_q[:, 0] - cam_q.cx) / cam_q.fx,
            zq * (pix_q[:, 1] - cam_q.cy) / cam_q.fy,
            zq,
        ]
    )
    return MatchSet(
        anchor_cells=matches.anchor_cells[keep],
        query_cells=matches.query_cells[keep],
        distances=matches.distances[keep],
        anchor_pixels=pix_a,
        query_pixels=pix_q,
        anchor_points=pts_a,
        query_points=pts_q,
    )
