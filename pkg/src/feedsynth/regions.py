"""Region-feature file I/O and the pure image-encoder math.

The object-detection network that produces region features is out of
scope: features arrive precomputed in a newline-delimited JSON file, one
image per line::

    {"image_ref": ..., "boxes": [[x1,y1,x2,y2], ...],
     "features": [[...], ...], "global": [...]}   # "global" optional

What lives here is the testable math around it: IoU, the anchor
objectiveness labeling, and the region-proposal training loss.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np


class AnchorLabel(enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    NOT_NEGATIVE = "not_negative"


@dataclass(frozen=True)
class BoundingBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        for name in ("x1", "y1", "x2", "y2"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise ValueError(f"degenerate box: ({self.x1}, {self.y1}, {self.x2}, {self.y2})")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass
class RegionFeatureSet:
    """Per-image bounding boxes, per-region feature vectors, optional global vector."""

    image_ref: str
    boxes: list[BoundingBox]
    features: np.ndarray
    global_vec: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float32)
        if self.features.ndim != 2 or self.features.shape[0] == 0:
            raise ValueError(f"features must be a non-empty [n x d] matrix, got {self.features.shape}")
        if len(self.boxes) != self.features.shape[0]:
            raise ValueError(
                f"{len(self.boxes)} boxes but {self.features.shape[0]} feature rows "
                f"for image {self.image_ref!r}"
            )
        if not np.all(np.isfinite(self.features)):
            raise ValueError(f"non-finite feature values for image {self.image_ref!r}")
        if self.global_vec is not None:
            self.global_vec = np.ascontiguousarray(self.global_vec, dtype=np.float32)
            if self.global_vec.shape != (self.features.shape[1],):
                raise ValueError(
                    f"global vector has dim {self.global_vec.shape}, features have "
                    f"dim {self.features.shape[1]}"
                )
            if not np.all(np.isfinite(self.global_vec)):
                raise ValueError(f"non-finite global vector for image {self.image_ref!r}")

    @property
    def n_regions(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; 0 when the union has zero area."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    inter = max(0.0, ix) * max(0.0, iy)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def objectiveness_label(value: float) -> AnchorLabel:
    """Anchor label from IoU, first matching rule wins.

    Rules in order: IoU > 0.7 -> Positive; 0.5 <= IoU < 0.7 -> Positive;
    IoU < 0.3 -> Negative; 0.3 <= IoU <= 0.5 -> NotNegative.

    Two quirks of the rule list are resolved here by evaluation order:
    at exactly 0.5 both the Positive and NotNegative ranges apply, and
    the Positive rule wins because it is listed first; at exactly 0.7
    none of the four ranges applies, and the value is labeled Positive
    (closing the gap upward, consistent with both neighbours).
    """
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"IoU must lie in [0, 1], got {value}")
    if value > 0.7:
        return AnchorLabel.POSITIVE
    if 0.5 <= value < 0.7:
        return AnchorLabel.POSITIVE
    if value < 0.3:
        return AnchorLabel.NEGATIVE
    if value <= 0.5:
        return AnchorLabel.NOT_NEGATIVE
    return AnchorLabel.POSITIVE  # exactly 0.7


def smooth_l1(diff: np.ndarray) -> np.ndarray:
    """Elementwise smooth-L1: quadratic inside |d| < 1, linear outside."""
    a = np.abs(diff)
    return np.where(a < 1.0, 0.5 * diff * diff, a - 0.5)


def rpn_loss(
    p,
    p_star,
    t,
    t_star,
    lam: float = 10.0,
    n_cls: int = 256,
    n_reg: int | None = None,
) -> float:
    """Region-proposal loss: normalized classification plus box regression.

    ``p`` are predicted objectness probabilities, ``p_star`` the {0,1}
    ground truth, ``t``/``t_star`` the [n x 4] predicted and ground-truth
    box coordinates. Classification is binary cross-entropy, regression
    is smooth-L1 counted only on positive anchors and weighted by
    ``lam``. NotNegative anchors must be excluded by the caller; they
    do not contribute. ``n_reg`` defaults to the number of anchors.
    """
    p = np.asarray(p, dtype=np.float64)
    ps = np.asarray(p_star, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    ts = np.asarray(t_star, dtype=np.float64)
    n = p.shape[0]
    if n == 0:
        raise ValueError("rpn_loss needs at least one anchor")
    if ps.shape != (n,) or t.shape != (n, 4) or ts.shape != (n, 4):
        raise ValueError(
            f"inconsistent anchor arrays: p {p.shape}, p* {ps.shape}, t {t.shape}, t* {ts.shape}"
        )
    if not np.isin(ps, (0.0, 1.0)).all():
        raise ValueError("p_star entries must be 0 or 1")
    if (p < 0).any() or (p > 1).any():
        raise ValueError("probabilities must lie in [0, 1]")
    if n_reg is None:
        n_reg = n
    clipped = np.clip(p, 1e-12, 1.0 - 1e-12)
    cls_terms = -(ps * np.log(clipped) + (1.0 - ps) * np.log(1.0 - clipped))
    reg_terms = ps * smooth_l1(t - ts).sum(axis=1)
    return float(cls_terms.sum() / n_cls + lam * reg_terms.sum() / n_reg)


def global_vector(rfs: RegionFeatureSet) -> np.ndarray:
    """The image-level feature: the stored global vector, else the region mean."""
    if rfs.global_vec is not None:
        return rfs.global_vec
    return rfs.features.mean(axis=0)


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------

def load_region_features(path) -> dict[str, RegionFeatureSet]:
    """Read a region-feature file; feature dim must be uniform across it."""
    out: dict[str, RegionFeatureSet] = {}
    dim: int | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {line_no}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict) or not {"image_ref", "boxes", "features"} <= set(obj):
                raise ValueError(f"line {line_no}: record needs image_ref, boxes, features")
            extra = set(obj) - {"image_ref", "boxes", "features", "global"}
            if extra:
                raise ValueError(f"line {line_no}: unknown keys {sorted(extra)}")
            try:
                rfs = RegionFeatureSet(
                    image_ref=obj["image_ref"],
                    boxes=[BoundingBox(*map(float, b)) for b in obj["boxes"]],
                    features=np.asarray(obj["features"], dtype=np.float32),
                    global_vec=(
                        np.asarray(obj["global"], dtype=np.float32)
                        if obj.get("global") is not None
                        else None
                    ),
                )
            except (TypeError, ValueError) as exc:
                raise ValueError(f"line {line_no}: {exc}") from exc
            if rfs.image_ref in out:
                raise ValueError(f"line {line_no}: duplicate image_ref {rfs.image_ref!r}")
            if dim is None:
                dim = rfs.feature_dim
            elif rfs.feature_dim != dim:
                raise ValueError(
                    f"line {line_no}: feature dim {rfs.feature_dim} differs from {dim} seen earlier"
                )
            out[rfs.image_ref] = rfs
    return out


def write_region_features(sets, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rfs in sets:
            obj = {
                "image_ref": rfs.image_ref,
                "boxes": [list(b.as_tuple()) for b in rfs.boxes],
                "features": [[float(v) for v in row] for row in rfs.features],
            }
            if rfs.global_vec is not None:
                obj["global"] = [float(v) for v in rfs.global_vec]
            fh.write(json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n")
