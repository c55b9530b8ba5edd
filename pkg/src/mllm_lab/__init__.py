"""mllm_lab: desk-scale mechanics of an efficient multimodal LLM.

Subsystems: float64 numerics with a finite-difference harness
(`numerics`), image grid partitioning (`partitioner`), video frame
sampling and packaging (`video_packer`), the cross-attention token
resampler (`resampler3d`), token-budget arithmetic
(`token_accountant`), document corruption sampling (`corruption`), and
hybrid short/long-mode GRPO with a toy task (`hybrid_rl`).
"""

__version__ = "0.1.0"

from . import (
    corruption,
    errors,
    hybrid_rl,
    numerics,
    partitioner,
    resampler3d,
    tensorio,
    token_accountant,
    video_packer,
)

__all__ = [
    "__version__",
    "corruption",
    "errors",
    "hybrid_rl",
    "numerics",
    "partitioner",
    "resampler3d",
    "tensorio",
    "token_accountant",
    "video_packer",
]
