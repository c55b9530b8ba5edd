"""Document corruption sampling for joint OCR / context-inference training.

Annotated text regions of a document image are stochastically assigned a
corruption level and corrupted in place: low keeps the text readable
(blur plus mild noise), moderate drowns the glyphs in heavy noise, high
masks the region entirely. Targets always carry the original text, so a
single objective covers text recognition, noisy inference, and pure
context reconstruction. Pixels outside targeted regions are never
touched.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError

LEVEL_NONE = "none"
LEVEL_LOW = "low"
LEVEL_MODERATE = "moderate"
LEVEL_HIGH = "high"
LEVEL_KINDS = (LEVEL_NONE, LEVEL_LOW, LEVEL_MODERATE, LEVEL_HIGH)

DEFAULT_SIGMA_LOW = 8.0
DEFAULT_SIGMA_MODERATE = 60.0
DEFAULT_FILL = 128

# Uniform thirds over the three corrupting levels.
DEFAULT_DISTRIBUTION = {
    LEVEL_LOW: 1.0 / 3.0,
    LEVEL_MODERATE: 1.0 / 3.0,
    LEVEL_HIGH: 1.0 / 3.0,
}


@dataclass(frozen=True)
class TextRegion:
    region_id: str
    bbox: tuple[int, int, int, int]  # (x, y, w, h) in pixels
    text: str

    def __post_init__(self):
        x, y, w, h = self.bbox
        if w < 1 or h < 1 or x < 0 or y < 0:
            raise InputError(f"bad bbox {self.bbox} for region {self.region_id!r}")
        if not self.text:
            raise InputError(f"region {self.region_id!r} has empty text")


@dataclass(frozen=True)
class CorruptionLevel:
    kind: str
    sigma: float | None = None
    fill: int | None = None

    def __post_init__(self):
        if self.kind not in LEVEL_KINDS:
            raise ConfigError(f"unknown corruption kind {self.kind!r}")
        if self.kind == LEVEL_NONE and (self.sigma is not None or self.fill is not None):
            raise ConfigError("kind 'none' carries no parameters")
        if self.kind in (LEVEL_LOW, LEVEL_MODERATE):
            if self.sigma is None or self.sigma <= 0:
                raise ConfigError(f"kind {self.kind!r} needs a positive sigma")
            if self.fill is not None:
                raise ConfigError(f"kind {self.kind!r} carries no fill value")
        if self.kind == LEVEL_HIGH:
            if self.fill is None or not 0 <= self.fill <= 255:
                raise ConfigError("kind 'high' needs a fill value in [0, 255]")
            if self.sigma is not None:
                raise ConfigError("kind 'high' carries no sigma")

    @classmethod
    def for_kind(
        cls,
        kind: str,
        sigma_low: float = DEFAULT_SIGMA_LOW,
        sigma_moderate: float = DEFAULT_SIGMA_MODERATE,
        fill: int = DEFAULT_FILL,
    ) -> "CorruptionLevel":
        if kind == LEVEL_LOW:
            return cls(kind, sigma=sigma_low)
        if kind == LEVEL_MODERATE:
            return cls(kind, sigma=sigma_moderate)
        if kind == LEVEL_HIGH:
            return cls(kind, fill=fill)
        return cls(kind)


@dataclass(frozen=True)
class CorruptionTarget:
    region_id: str
    level: str
    text: str


@dataclass(frozen=True)
class CorruptionSample:
    image: np.ndarray
    targets: list[CorruptionTarget]
    seed: int


@dataclass(frozen=True)
class DocumentAnnotation:
    image_path: str
    regions: list[TextRegion] = field(default_factory=list)


def assign_levels(
    regions: list[TextRegion],
    seed: int,
    distribution: dict[str, float] | None = None,
) -> dict[str, CorruptionLevel]:
    """Independent seeded level draw per region.

    distribution maps {low, moderate, high} to probabilities that must
    be non-negative and sum to 1 within 1e-9.
    """
    dist = DEFAULT_DISTRIBUTION if distribution is None else distribution
    order = (LEVEL_LOW, LEVEL_MODERATE, LEVEL_HIGH)
    if set(dist) != set(order):
        raise ConfigError(f"distribution keys must be {order}, got {sorted(dist)}")
    probs = [dist[k] for k in order]
    if min(probs) < 0 or abs(sum(probs) - 1.0) > 1e-9:
        raise ConfigError(f"probabilities must be non-negative and sum to 1: {dist}")
    rng = random.Random(seed)
    out: dict[str, CorruptionLevel] = {}
    for region in regions:
        if region.region_id in out:
            raise InputError(f"duplicate region id {region.region_id!r}")
        u = rng.random()
        acc = 0.0
        kind = order[-1]
        for name, p in zip(order, probs):
            acc += p
            if u < acc:
                kind = name
                break
        out[region.region_id] = CorruptionLevel.for_kind(kind)
    return out


def _box_blur3(patch: np.ndarray) -> np.ndarray:
    pad_width = [(1, 1), (1, 1)] + [(0, 0)] * (patch.ndim - 2)
    padded = np.pad(patch.astype(np.float64), pad_width, mode="edge")
    acc = np.zeros(patch.shape, dtype=np.float64)
    for dy in (0, 1, 2):
        for dx in (0, 1, 2):
            acc += padded[dy : dy + patch.shape[0], dx : dx + patch.shape[1]]
    return acc / 9.0


def corrupt_region(
    image: np.ndarray,
    region: TextRegion,
    level: CorruptionLevel,
    seed: int,
) -> np.ndarray:
    """Corrupted copy of the image; pixels outside the bbox are
    bit-identical to the input for every level.

    low: 3x3 box blur of the region content plus additive Gaussian
    noise (noise is added after the blur so sigma alone sets the
    severity). moderate: heavy Gaussian noise, clipped. high: constant
    fill.
    """
    if image.dtype != np.uint8 or image.ndim not in (2, 3):
        raise InputError("expected a uint8 (H, W) or (H, W, C) image")
    x, y, w, h = region.bbox
    img_h, img_w = image.shape[:2]
    if x + w > img_w or y + h > img_h:
        raise InputError(
            f"bbox {region.bbox} exceeds image bounds {img_w}x{img_h}"
        )
    out = image.copy()
    if level.kind == LEVEL_NONE:
        return out
    patch = out[y : y + h, x : x + w]
    if level.kind == LEVEL_HIGH:
        patch[...] = level.fill
        return out
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, level.sigma, size=patch.shape)
    base = _box_blur3(patch) if level.kind == LEVEL_LOW else patch.astype(np.float64)
    patch[...] = np.clip(np.rint(base + noise), 0, 255).astype(np.uint8)
    return out


def emit_sample(
    image: np.ndarray,
    regions: list[TextRegion],
    seed: int,
    distribution: dict[str, float] | None = None,
    target_fraction: float = 0.5,
) -> CorruptionSample:
    """Pick a seeded subset of regions, corrupt each at drawn level, and
    return the corrupted image with its (region, level, text) targets.

    round(target_fraction * count) regions are targeted (at least one);
    corruptions apply in region_id order, so the later id wins on
    overlaps. Target text is the original annotation text regardless of
    level. The whole pipeline is deterministic given the seed.
    """
    if not regions:
        raise InputError("no regions to corrupt")
    if not 0 < target_fraction <= 1:
        raise ConfigError(f"target_fraction must be in (0, 1], got {target_fraction}")
    if len({r.region_id for r in regions}) != len(regions):
        raise InputError("duplicate region ids in annotation")
    master = random.Random(seed)
    k = min(len(regions), max(1, round(target_fraction * len(regions))))
    chosen = master.sample(range(len(regions)), k)
    selected = sorted((regions[i] for i in chosen), key=lambda r: r.region_id)
    levels = assign_levels(selected, master.getrandbits(32), distribution)
    out = image
    targets = []
    for region in selected:
        level = levels[region.region_id]
        out = corrupt_region(out, region, level, master.getrandbits(32))
        targets.append(
            CorruptionTarget(region_id=region.region_id, level=level.kind, text=region.text)
        )
    return CorruptionSample(image=out, targets=targets, seed=seed)


def load_annotations(path) -> list[DocumentAnnotation]:
    """Read JSON-lines document annotations.

    One document per line:
    {"image": "path", "regions": [{"id": str, "bbox": [x, y, w, h], "text": str}]}
    """
    docs = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                regions = [
                    TextRegion(
                        region_id=str(r["id"]),
                        bbox=tuple(int(v) for v in r["bbox"]),
                        text=r["text"],
                    )
                    for r in record["regions"]
                ]
                docs.append(
                    DocumentAnnotation(image_path=record["image"], regions=regions)
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise InputError(f"bad annotation on line {line_no}: {exc}") from exc
    return docs
