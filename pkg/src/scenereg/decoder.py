"""
Multi-object pose decoder forward pass

Each block runs per-object self-attention over the pose tokens, then
self-attention over the pose tokens of all objects flattened into one
sequence, then cross-attention from the flattened pose tokens to the
flattened shape tokens. The final tokens of each object are decoded by a
shared linear layer into an additive pose residual (dq, dt, dsigma).

Projections follow the ``y = x @ W.T`` convention, so a single token maps
to ``W @ x``.
"""

import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from .errors import ContainerFormatError, QuaternionDegenerate, ScaleNonPositive, ShapeMismatch
from .pose import Pose7DoF
from .rng import SeedLike, make_rng

logger = logging.getLogger(__name__)

DECODE_WIDTH = 8
MODW_MAGIC = b"MODW v1\n"
FLAG_TOKENS = 1
FLAG_WEIGHTS = 2

PathLike = Union[str, Path]


@dataclass(frozen=True, eq=False)
class AttentionWeights:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray

    def __post_init__(self):
        for name in ("wq", "wk", "wv", "wo"):
            value = np.asarray(getattr(self, name), dtype=np.float64)
            if value.ndim != 2 or value.shape[0] != value.shape[1]:
                raise ShapeMismatch(f"{name} must be a square matrix, got {value.shape}")
            object.__setattr__(self, name, value)
        if not (self.wq.shape == self.wk.shape == self.wv.shape == self.wo.shape):
            raise ShapeMismatch("Attention projections differ in size")

    @property
    def channels(self) -> int:
        return self.wq.shape[0]

    def matrices(self) -> Tuple[np.ndarray, ...]:
        return self.wq, self.wk, self.wv, self.wo


@dataclass(frozen=True, eq=False)
class BlockWeights:
    self_attention: AttentionWeights
    multi_self_attention: AttentionWeights
    cross_attention: AttentionWeights

    def layers(self) -> Tuple[AttentionWeights, ...]:
        return self.self_attention, self.multi_self_attention, self.cross_attention


@dataclass(frozen=True, eq=False)
class ModWeights:
    """K attention blocks plus the shared ``(F_p * C) -> 8`` decode layer"""

    heads: int
    blocks: List[BlockWeights]
    decode_weight: np.ndarray
    decode_bias: np.ndarray = field(default=None)

    def __post_init__(self):
        if not self.blocks:
            raise ShapeMismatch("At least one block is required")
        channels = self.blocks[0].self_attention.channels
        for block in self.blocks:
            if any(layer.channels != channels for layer in block.layers()):
                raise ShapeMismatch("All attention layers must share the channel count")
        if self.heads < 1 or channels % self.heads:
            raise ShapeMismatch(f"Channels {channels} not divisible by {self.heads} heads")
        weight = np.asarray(self.decode_weight, dtype=np.float64)
        if weight.ndim != 2 or weight.shape[0] != DECODE_WIDTH or weight.shape[1] % channels:
            raise ShapeMismatch(f"Decode weight must be ({DECODE_WIDTH}, F_p * {channels}), got {weight.shape}")
        bias = np.zeros(DECODE_WIDTH) if self.decode_bias is None else np.asarray(self.decode_bias, dtype=np.float64)
        if bias.shape != (DECODE_WIDTH,):
            raise ShapeMismatch(f"Decode bias must have {DECODE_WIDTH} entries, got {bias.shape}")
        object.__setattr__(self, "decode_weight", weight)
        object.__setattr__(self, "decode_bias", bias)

    @property
    def block_count(self) -> int:
        return len(self.blocks)

    @property
    def channels(self) -> int:
        return self.blocks[0].self_attention.channels

    @property
    def pose_length(self) -> int:
        return self.decode_weight.shape[1] // self.channels


@dataclass(frozen=True, eq=False)
class TokenSet:
    """Pose tokens (N, F_p, C) and shape tokens (N, F_s, C)"""

    pose_tokens: np.ndarray
    shape_tokens: np.ndarray

    def __post_init__(self):
        pose = np.asarray(self.pose_tokens, dtype=np.float64)
        shape = np.asarray(self.shape_tokens, dtype=np.float64)
        if pose.ndim != 3 or shape.ndim != 3 or min(pose.shape + shape.shape) < 1:
            raise ShapeMismatch(f"Token tensors must be non-empty (N, L, C), got {pose.shape} and {shape.shape}")
        if pose.shape[0] != shape.shape[0] or pose.shape[2] != shape.shape[2]:
            raise ShapeMismatch(f"Pose tokens {pose.shape} and shape tokens {shape.shape} disagree")
        if not (np.all(np.isfinite(pose)) and np.all(np.isfinite(shape))):
            raise ShapeMismatch("Tokens contain non-finite values")
        object.__setattr__(self, "pose_tokens", pose)
        object.__setattr__(self, "shape_tokens", shape)

    @property
    def objects(self) -> int:
        return self.pose_tokens.shape[0]

    def permuted(self, order) -> "TokenSet":
        return TokenSet(self.pose_tokens[order], self.shape_tokens[order])


@dataclass(frozen=True)
class ResidualPose:
    dq: np.ndarray
    dt: np.ndarray
    dsigma: float

    def to_dict(self) -> dict:
        return {"dq": [float(v) for v in self.dq], "dt": [float(v) for v in self.dt], "dsigma": float(self.dsigma)}


# Attention -----------------------------------------------------------------


def softmax(scores: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = scores - scores.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=axis, keepdims=True)


def attention(queries, keys, w: AttentionWeights, heads: int, return_weights: bool = False):
    """
    Multi-head scaled dot-product attention

    Args:
        queries: (B, Lq, C)
        keys: (B, Lk, C), used for both keys and values
        w: Projection matrices
        heads: Number of heads H; C must be divisible by H
        return_weights: Also return the (B, H, Lq, Lk) attention matrices

    Returns:
        (B, Lq, C) outputs, optionally with the attention matrices
    """
    queries = np.asarray(queries, dtype=np.float64)
    keys = np.asarray(keys, dtype=np.float64)
    if queries.ndim != 3 or keys.ndim != 3 or queries.shape[0] != keys.shape[0]:
        raise ShapeMismatch(f"Expected (B, L, C) inputs, got {queries.shape} and {keys.shape}")
    batch, lq, channels = queries.shape
    lk = keys.shape[1]
    if channels != w.channels or keys.shape[2] != channels:
        raise ShapeMismatch(f"Inputs have {channels} channels, projections expect {w.channels}")
    if channels % heads:
        raise ShapeMismatch(f"Channels {channels} not divisible by {heads} heads")
    dh = channels // heads

    def to_heads(a, length):
        return a.reshape(batch, length, heads, dh).transpose(0, 2, 1, 3)

    q = to_heads(queries @ w.wq.T, lq)
    k = to_heads(keys @ w.wk.T, lk)
    v = to_heads(keys @ w.wv.T, lk)
    weights = softmax(q @ k.transpose(0, 1, 3, 2) / np.sqrt(dh))
    out = (weights @ v).transpose(0, 2, 1, 3).reshape(batch, lq, channels) @ w.wo.T
    if return_weights:
        return out, weights
    return out


def self_attention(x, w: AttentionWeights, heads: int) -> np.ndarray:
    """Attention along the sequence axis of each batch entry independently"""
    return attention(x, x, w, heads)


def multi_object_self_attention(pose_tokens, w: AttentionWeights, heads: int) -> np.ndarray:
    """Self-attention over all objects' pose tokens flattened into one sequence"""
    pose_tokens = np.asarray(pose_tokens, dtype=np.float64)
    n, length, channels = pose_tokens.shape
    flat = pose_tokens.reshape(1, n * length, channels)
    return self_attention(flat, w, heads).reshape(n, length, channels)


def multi_object_cross_attention(pose_tokens, shape_tokens, w: AttentionWeights, heads: int) -> np.ndarray:
    """Flattened pose tokens attend to flattened shape tokens of every object"""
    pose_tokens = np.asarray(pose_tokens, dtype=np.float64)
    shape_tokens = np.asarray(shape_tokens, dtype=np.float64)
    n, length, channels = pose_tokens.shape
    if shape_tokens.ndim != 3 or shape_tokens.shape[0] != n:
        raise ShapeMismatch(f"Shape tokens {shape_tokens.shape} do not cover {n} objects")
    queries = pose_tokens.reshape(1, n * length, channels)
    keys = shape_tokens.reshape(1, -1, shape_tokens.shape[2])
    return attention(queries, keys, w, heads).reshape(n, length, channels)


def mod_block(pose_tokens, shape_tokens, block: BlockWeights, heads: int) -> np.ndarray:
    x = self_attention(pose_tokens, block.self_attention, heads)
    x = multi_object_self_attention(x, block.multi_self_attention, heads)
    return multi_object_cross_attention(x, shape_tokens, block.cross_attention, heads)


def decode(pose_tokens, weights: ModWeights) -> np.ndarray:
    """Shared linear layer from each object's flattened tokens to 8 residual values"""
    pose_tokens = np.asarray(pose_tokens, dtype=np.float64)
    flat = pose_tokens.reshape(pose_tokens.shape[0], -1)
    if flat.shape[1] != weights.decode_weight.shape[1]:
        raise ShapeMismatch(
            f"Decode layer expects {weights.decode_weight.shape[1]} inputs per object, got {flat.shape[1]}"
        )
    return flat @ weights.decode_weight.T + weights.decode_bias


def mod_forward(tokens: TokenSet, weights: ModWeights) -> List[ResidualPose]:
    """Run every block and decode one residual per object, in input order"""
    if tokens.pose_tokens.shape[1:] != (weights.pose_length, weights.channels):
        raise ShapeMismatch(
            f"Pose tokens {tokens.pose_tokens.shape[1:]} do not match weights "
            f"({weights.pose_length}, {weights.channels})"
        )
    x = tokens.pose_tokens
    for index, block in enumerate(weights.blocks):
        x = mod_block(x, tokens.shape_tokens, block, weights.heads)
        logger.debug("Block %d output norm %.6g", index, float(np.linalg.norm(x)))
    raw = decode(x, weights)
    return [ResidualPose(row[:4].copy(), row[4:7].copy(), float(row[7])) for row in raw]


def apply_residual(pose: Pose7DoF, residual: ResidualPose) -> Pose7DoF:
    """
    Add a residual to a pose and renormalize the quaternion

    Raises:
        ScaleNonPositive: If the refined scale is not positive
        QuaternionDegenerate: If q + dq is (numerically) zero
    """
    q = np.asarray(pose.q) + np.asarray(residual.dq, dtype=np.float64)
    norm = float(np.linalg.norm(q))
    if norm < 1e-6:
        raise QuaternionDegenerate(f"Refined quaternion norm {norm:.3g} is too small")
    sigma = pose.sigma + float(residual.dsigma)
    if sigma <= 0:
        raise ScaleNonPositive(f"Refined scale {sigma:.6g} is not positive")
    return Pose7DoF(q / norm, np.asarray(pose.t) + np.asarray(residual.dt, dtype=np.float64), sigma)


# Construction ----------------------------------------------------------------


def init_weights(blocks: int, heads: int, channels: int, pose_length: int, seed: SeedLike = 0) -> ModWeights:
    """Seeded Gaussian weights with standard deviation 1/sqrt(C); zero decode bias"""
    rng = make_rng(seed)
    std = 1.0 / np.sqrt(channels)

    def layer():
        return AttentionWeights(*(rng.normal(0.0, std, (channels, channels)) for _ in range(4)))

    block_list = [BlockWeights(layer(), layer(), layer()) for _ in range(blocks)]
    decode_weight = rng.normal(0.0, std, (DECODE_WIDTH, pose_length * channels))
    return ModWeights(heads, block_list, decode_weight, np.zeros(DECODE_WIDTH))


def random_tokens(objects: int, pose_length: int, shape_length: int, channels: int, seed: SeedLike = 0) -> TokenSet:
    rng = make_rng(seed)
    return TokenSet(
        rng.standard_normal((objects, pose_length, channels)),
        rng.standard_normal((objects, shape_length, channels)),
    )


# MODW container ----------------------------------------------------------------

_DIMS = struct.Struct("<6q")
_FLAGS = struct.Struct("<q")


def write_modw(path: PathLike, tokens: Optional[TokenSet] = None, weights: Optional[ModWeights] = None) -> None:
    """
    Write tokens and/or weights to a MODW v1 container

    Layout: magic, six int64 dims (K, H, C, F_p, F_s, N), an int64 flag word
    (1 = tokens, 2 = weights), then float64 little-endian values: pose tokens,
    shape tokens, then per block the q/k/v/o matrices of the per-object,
    multi-object and cross layers, the decode weight and the decode bias.
    """
    if tokens is None and weights is None:
        raise ValueError("Nothing to write")
    if tokens is not None and weights is not None:
        if tokens.pose_tokens.shape[1:] != (weights.pose_length, weights.channels):
            raise ShapeMismatch("Tokens and weights disagree on F_p or C")

    k = weights.block_count if weights is not None else 0
    h = weights.heads if weights is not None else 0
    c = weights.channels if weights is not None else tokens.pose_tokens.shape[2]
    f_p = weights.pose_length if weights is not None else tokens.pose_tokens.shape[1]
    f_s = tokens.shape_tokens.shape[1] if tokens is not None else 0
    n = tokens.objects if tokens is not None else 0
    flags = (FLAG_TOKENS if tokens is not None else 0) | (FLAG_WEIGHTS if weights is not None else 0)

    parts = [MODW_MAGIC, _DIMS.pack(k, h, c, f_p, f_s, n), _FLAGS.pack(flags)]
    arrays = []
    if tokens is not None:
        arrays += [tokens.pose_tokens, tokens.shape_tokens]
    if weights is not None:
        for block in weights.blocks:
            for layer in block.layers():
                arrays += list(layer.matrices())
        arrays += [weights.decode_weight, weights.decode_bias]
    parts += [np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays]
    Path(path).write_bytes(b"".join(parts))


def read_modw(path: PathLike) -> Tuple[Optional[TokenSet], Optional[ModWeights]]:
    """
    Read a MODW v1 container

    Raises:
        ContainerFormatError: On a bad magic, invalid dims, truncation or trailing bytes
    """
    data = Path(path).read_bytes()
    if not data.startswith(MODW_MAGIC):
        raise ContainerFormatError("Missing MODW v1 magic", 0)
    offset = len(MODW_MAGIC)
    if len(data) < offset + _DIMS.size + _FLAGS.size:
        raise ContainerFormatError("Truncated header", len(data))
    k, h, c, f_p, f_s, n = _DIMS.unpack_from(data, offset)
    offset += _DIMS.size
    (flags,) = _FLAGS.unpack_from(data, offset)
    if flags & ~(FLAG_TOKENS | FLAG_WEIGHTS) or not flags:
        raise ContainerFormatError(f"Unknown flag word {flags}", offset)
    offset += _FLAGS.size
    has_tokens = bool(flags & FLAG_TOKENS)
    has_weights = bool(flags & FLAG_WEIGHTS)
    if min(k, h, c, f_p, f_s, n) < 0 or c < 1 or f_p < 1:
        raise ContainerFormatError(f"Invalid dims {(k, h, c, f_p, f_s, n)}", len(MODW_MAGIC))
    if has_tokens and (n < 1 or f_s < 1):
        raise ContainerFormatError("Token section needs N >= 1 and F_s >= 1", len(MODW_MAGIC))
    if has_weights and (k < 1 or h < 1 or c % h):
        raise ContainerFormatError("Weight section needs K >= 1 and C divisible by H", len(MODW_MAGIC))

    def take(shape):
        nonlocal offset
        size = math.prod(shape) * 8
        if size > len(data) - offset:
            raise ContainerFormatError(f"Truncated payload, expected {size} more bytes", offset)
        values = np.frombuffer(data, dtype="<f8", count=size // 8, offset=offset).astype(np.float64).reshape(shape)
        offset += size
        return values

    tokens = None
    weights = None
    if has_tokens:
        tokens = TokenSet(take((n, f_p, c)), take((n, f_s, c)))
    if has_weights:
        blocks = []
        for _ in range(k):
            layers = [AttentionWeights(*(take((c, c)) for _ in range(4))) for _ in range(3)]
            blocks.append(BlockWeights(*layers))
        decode_weight = take((DECODE_WIDTH, f_p * c))
        decode_bias = take((DECODE_WIDTH,))
        weights = ModWeights(h, blocks, decode_weight, decode_bias)
    if offset != len(data):
        raise ContainerFormatError(f"{len(data) - offset} trailing bytes", offset)
    return tokens, weights
