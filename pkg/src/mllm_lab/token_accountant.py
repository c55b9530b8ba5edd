"""Token-budget arithmetic for packaged visual encoding.

Packaged resampling spends Q tokens per package of frames, so a video
costs ceil(frames / package_size) * Q tokens. Baselines spend a fixed
token count per frame. Ratios are kept as exact rationals so report
fields stay internally consistent without float rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import ConfigError, InputError
from .partitioner import ENCODER_SIDE

# Tokens per frame spent by flat per-frame encoders at 448x448. The two
# presets bracket the common range for this input size.
BASELINE_SCHEMES = {
    "per_frame_128": 128,
    "per_frame_256": 256,
}

DEFAULT_PATCH_SIDE = 14


@dataclass(frozen=True)
class TokenBudgetReport:
    frames: int
    package_size: int
    queries: int
    packages: int
    our_tokens: int
    baseline_tokens: dict[str, int]
    tokens_per_frame: Fraction
    compression_vs_patches: Fraction
    compression_vs_baseline: dict[str, Fraction]

    def to_dict(self) -> dict:
        """JSON-ready view; exact rationals become floats."""
        return {
            "frames": self.frames,
            "package_size": self.package_size,
            "queries": self.queries,
            "packages": self.packages,
            "our_tokens": self.our_tokens,
            "baseline_tokens": dict(self.baseline_tokens),
            "tokens_per_frame": float(self.tokens_per_frame),
            "compression_vs_patches": float(self.compression_vs_patches),
            "compression_vs_baseline": {
                k: float(v) for k, v in self.compression_vs_baseline.items()
            },
        }


def _require_positive(**counts: int):
    for name, value in counts.items():
        if value < 1:
            raise InputError(f"{name} must be >= 1, got {value}")


def budget(frames: int, package_size: int, queries: int) -> int:
    """Visual tokens spent: ceil(frames / package_size) * queries."""
    _require_positive(frames=frames, package_size=package_size, queries=queries)
    return math.ceil(frames / package_size) * queries


def baseline_budget(frames: int, scheme: str) -> int:
    """Tokens a flat per-frame scheme spends on the same frames."""
    _require_positive(frames=frames)
    if scheme not in BASELINE_SCHEMES:
        raise ConfigError(
            f"unknown baseline scheme {scheme!r}; "
            f"expected one of {sorted(BASELINE_SCHEMES)}"
        )
    return frames * BASELINE_SCHEMES[scheme]


def compression_report(
    frames: int,
    package_size: int,
    queries: int,
    patch_side: int = DEFAULT_PATCH_SIDE,
) -> TokenBudgetReport:
    """Full budget report with compression ratios vs patches and baselines.

    patch_side must divide the 448 encoder side; the patch baseline is
    (448 / patch_side)^2 raw patches per frame.
    """
    _require_positive(frames=frames, package_size=package_size, queries=queries)
    if patch_side < 1 or ENCODER_SIDE % patch_side != 0:
        raise ConfigError(f"patch_side must divide {ENCODER_SIDE}, got {patch_side}")
    our_tokens = budget(frames, package_size, queries)
    patches = frames * (ENCODER_SIDE // patch_side) ** 2
    baseline_tokens = {s: baseline_budget(frames, s) for s in BASELINE_SCHEMES}
    return TokenBudgetReport(
        frames=frames,
        package_size=package_size,
        queries=queries,
        packages=math.ceil(frames / package_size),
        our_tokens=our_tokens,
        baseline_tokens=baseline_tokens,
        tokens_per_frame=Fraction(our_tokens, frames),
        compression_vs_patches=Fraction(patches, our_tokens),
        compression_vs_baseline={
            s: Fraction(t, our_tokens) for s, t in baseline_tokens.items()
        },
    )
