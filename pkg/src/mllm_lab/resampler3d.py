"""Cross-attention token resampler over frame packages.

A fixed set of Q learnable queries attends over the flattened patch
features of a package of up to T_max frames and always emits exactly Q
output tokens, whatever the package size or patch count. Keys carry 2D
spatial and 1D temporal sinusoidal position tables; a single image is
just a package of one frame.

The same forward graph is differentiated by hand (loss = squared output
norm) so the whole pipeline can be verified against central differences
without an autodiff framework.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, InputError
from .numerics import DenseArray, attention, finite_diff_grad, matmul


@dataclass(frozen=True)
class ResamplerConfig:
    feature_dim: int
    model_dim: int
    patch_grid: tuple[int, int]
    num_queries: int = 64
    max_package: int = 6
    num_heads: int = 1  # reserved; only single-head is implemented

    def __post_init__(self):
        if min(self.feature_dim, self.model_dim, self.num_queries, self.max_package) < 1:
            raise ConfigError("all resampler dimensions must be >= 1")
        if len(self.patch_grid) != 2 or min(self.patch_grid) < 1:
            raise ConfigError(f"bad patch grid {self.patch_grid}")
        if self.num_heads != 1:
            raise ConfigError("only single-head attention is implemented")

    @property
    def patches_per_frame(self) -> int:
        return self.patch_grid[0] * self.patch_grid[1]


@dataclass(frozen=True)
class ResamplerWeights:
    queries: DenseArray      # (Q, d) learnable query tokens
    w_q: DenseArray          # (d, d) query projection
    w_k: DenseArray          # (d_in, d) key projection
    w_v: DenseArray          # (d_in, d) value projection
    w_out: DenseArray        # (d, d) output projection
    spatial_pe: DenseArray   # (rows*cols, d), row-major patch order
    temporal_pe: DenseArray  # (T_max, d)


def sinusoid_table(n_positions: int, dim: int) -> np.ndarray:
    """1D sinusoidal table: interleaved sin/cos over dim/2 frequencies.

    Every row has the same norm sqrt(dim/2) since sin^2 + cos^2 = 1 per
    frequency pair.
    """
    if dim % 2 != 0:
        raise ConfigError(f"sinusoid dim must be even, got {dim}")
    pos = np.arange(n_positions, dtype=np.float64)[:, None]
    freq = np.exp(-math.log(10000.0) * np.arange(dim // 2, dtype=np.float64) * 2 / dim)
    angles = pos * freq[None, :]
    table = np.empty((n_positions, dim), dtype=np.float64)
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles)
    return table


def sinusoid_table_2d(rows: int, cols: int, dim: int) -> np.ndarray:
    """2D table for a rows x cols grid: row code in the first dim/2
    channels, column code in the rest. Patch order is row-major."""
    if dim % 4 != 0:
        raise ConfigError(f"2D sinusoid dim must be divisible by 4, got {dim}")
    row_code = sinusoid_table(rows, dim // 2)
    col_code = sinusoid_table(cols, dim // 2)
    table = np.empty((rows * cols, dim), dtype=np.float64)
    table[:, : dim // 2] = np.repeat(row_code, cols, axis=0)
    table[:, dim // 2 :] = np.tile(col_code, (rows, 1))
    return table


def init_weights(cfg: ResamplerConfig, seed: int) -> ResamplerWeights:
    """Scaled-uniform projections (+-1/sqrt(fan_in)) and fixed sinusoid
    position tables. Bit-identical for a given seed."""
    if cfg.model_dim % 4 != 0:
        raise ConfigError(
            f"model_dim must be divisible by 4 for the 2D position table, "
            f"got {cfg.model_dim}"
        )
    rng = np.random.default_rng(seed)

    def uniform(rows, cols, fan_in):
        bound = 1.0 / math.sqrt(fan_in)
        return DenseArray(rng.uniform(-bound, bound, size=(rows, cols)))

    d_in, d = cfg.feature_dim, cfg.model_dim
    rows, cols = cfg.patch_grid
    return ResamplerWeights(
        queries=uniform(cfg.num_queries, d, d),
        w_q=uniform(d, d, d),
        w_k=uniform(d_in, d, d_in),
        w_v=uniform(d_in, d, d_in),
        w_out=uniform(d, d, d),
        spatial_pe=DenseArray(sinusoid_table_2d(rows, cols, d)),
        temporal_pe=DenseArray(sinusoid_table(cfg.max_package, d)),
    )


def _check_package(features: DenseArray, t0: int, cfg: ResamplerConfig):
    if features.ndim != 3:
        raise DimensionError(
            f"expected (T, N, d_in) features, got shape {features.shape}"
        )
    t, n, d_in = features.shape
    if t > cfg.max_package:
        raise ConfigError(f"package of {t} frames exceeds max_package {cfg.max_package}")
    if n != cfg.patches_per_frame:
        raise DimensionError(
            f"got {n} patches per frame, config grid implies {cfg.patches_per_frame}"
        )
    if d_in != cfg.feature_dim:
        raise DimensionError(
            f"feature dim {d_in} does not match config {cfg.feature_dim}"
        )
    if t0 < 0 or t0 + t > cfg.max_package:
        raise ConfigError(
            f"temporal offset {t0} with {t} frames exceeds the "
            f"{cfg.max_package}-entry temporal table"
        )
    return t, n, d_in


def _positioned_keys(
    f2: np.ndarray, t: int, n: int, t0: int, w: ResamplerWeights
) -> np.ndarray:
    # key row (t*N + n) gets spatial code of patch n and temporal code
    # of within-package position t0 + t
    k = f2 @ w.w_k.to_numpy()
    k = k + np.tile(w.spatial_pe.to_numpy(), (t, 1))
    k = k + np.repeat(w.temporal_pe.to_numpy()[t0 : t0 + t], n, axis=0)
    return k


def resample_package(
    features: DenseArray,
    t0: int,
    w: ResamplerWeights,
    cfg: ResamplerConfig,
) -> DenseArray:
    """Compress (T, N, d_in) frame features into exactly Q tokens of
    width d via cross-attention from the learnable queries.

    Keys are feature projections plus position codes; values and
    queries are plain projections. Output length never depends on T or
    N, which is the whole point.
    """
    t, n, _ = _check_package(features, t0, cfg)
    f2 = features.to_numpy().reshape(t * n, cfg.feature_dim)
    keys = DenseArray(_positioned_keys(f2, t, n, t0, w))
    values = DenseArray(f2 @ w.w_v.to_numpy())
    queries = matmul(w.queries, w.w_q)
    return matmul(attention(queries, keys, values), w.w_out)


def encode_video(
    packages: list[DenseArray],
    w: ResamplerWeights,
    cfg: ResamplerConfig,
) -> DenseArray:
    """Concatenate the resampled tokens of every package in order:
    P packages produce exactly P * Q tokens."""
    if not packages:
        raise InputError("no packages to encode")
    parts = [resample_package(p, 0, w, cfg).to_numpy() for p in packages]
    return DenseArray(np.concatenate(parts, axis=0))


# --- hand-derived gradients of loss = ||output||^2 ------------------------

_WEIGHT_FIELDS = (
    "queries", "w_q", "w_k", "w_v", "w_out", "spatial_pe", "temporal_pe",
)


def squared_norm_loss(
    features: DenseArray, t0: int, w: ResamplerWeights, cfg: ResamplerConfig
) -> float:
    out = resample_package(features, t0, w, cfg).to_numpy()
    return float(np.sum(out * out))


def squared_norm_loss_grads(
    features: DenseArray, t0: int, w: ResamplerWeights, cfg: ResamplerConfig
) -> dict[str, np.ndarray]:
    """Analytic gradients of the squared output norm for every weight
    array, chained by hand through the attention softmax."""
    t, n, _ = _check_package(features, t0, cfg)
    d = cfg.model_dim
    f2 = features.to_numpy().reshape(t * n, cfg.feature_dim)
    queries_np = w.queries.to_numpy()
    w_q = w.w_q.to_numpy()
    w_k = w.w_k.to_numpy()
    w_v = w.w_v.to_numpy()
    w_out = w.w_out.to_numpy()

    # forward, keeping intermediates
    k = _positioned_keys(f2, t, n, t0, w)
    v = f2 @ w_v
    q = queries_np @ w_q
    scale = 1.0 / math.sqrt(d)
    scores = q @ k.T * scale
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    a = e / e.sum(axis=1, keepdims=True)      # attention weights, (Q, T*N)
    o_pre = a @ v
    out = o_pre @ w_out

    # backward
    d_out = 2.0 * out
    d_w_out = o_pre.T @ d_out
    d_o_pre = d_out @ w_out.T
    d_a = d_o_pre @ v.T
    d_v = a.T @ d_o_pre
    # softmax rows: dS_i = a_i * (dA_i - <dA_i, a_i>)
    d_scores = a * (d_a - np.sum(d_a * a, axis=1, keepdims=True))
    d_q = d_scores @ k * scale
    d_k = d_scores.T @ q * scale
    d_queries = d_q @ w_q.T
    d_w_q = queries_np.T @ d_q
    d_w_k = f2.T @ d_k
    d_w_v = f2.T @ d_v
    # position tables enter keys additively
    d_k_3d = d_k.reshape(t, n, d)
    d_spatial = d_k_3d.sum(axis=0)
    d_temporal = np.zeros_like(w.temporal_pe.to_numpy())
    d_temporal[t0 : t0 + t] = d_k_3d.sum(axis=1)

    return {
        "queries": d_queries,
        "w_q": d_w_q,
        "w_k": d_w_k,
        "w_v": d_w_v,
        "w_out": d_w_out,
        "spatial_pe": d_spatial,
        "temporal_pe": d_temporal,
    }


def grad_check_report(
    cfg: ResamplerConfig, seed: int = 0, eps: float = 1e-5
) -> dict[str, float]:
    """Relative error between analytic and central-difference gradients
    for each weight array, on a random small instance."""
    if cfg.num_queries > 4 or cfg.patches_per_frame > 8 or cfg.max_package > 3:
        raise ConfigError(
            "grad check is restricted to small instances "
            "(Q <= 4, patches <= 8, max_package <= 3)"
        )
    w = init_weights(cfg, seed)
    rng = np.random.default_rng([seed, 0xFD])
    t = cfg.max_package
    features = DenseArray(
        rng.standard_normal((t, cfg.patches_per_frame, cfg.feature_dim))
    )
    analytic = squared_norm_loss_grads(features, 0, w, cfg)
    report = {}
    for field in _WEIGHT_FIELDS:
        def loss_of(x: DenseArray, _field=field) -> float:
            return squared_norm_loss(
                features, 0, dataclasses.replace(w, **{_field: x}), cfg
            )

        numeric = finite_diff_grad(loss_of, getattr(w, field), eps=eps).to_numpy()
        diff = np.max(np.abs(analytic[field] - numeric))
        denom = max(
            np.max(np.abs(analytic[field])), np.max(np.abs(numeric)), 1e-6
        )
        report[field] = float(diff / denom)
    return report


def grad_check(cfg: ResamplerConfig, seed: int = 0, eps: float = 1e-5) -> float:
    """Worst relative gradient error across all weight arrays."""
    return max(grad_check_report(cfg, seed=seed, eps=eps).values())
