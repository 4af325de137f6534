"""Neural building blocks: multi-head attention, positional encoding,
position attention, 1-D convolution with max pooling, and dense layers.

Each forward function returns live tensors for training plus the raw
attention weights / pooling indices that the explanation machinery consumes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SequenceTooShortError, ShapeError
from .tensor import Tensor, concat, layer_norm


def init_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> Tensor:
    """Seeded uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


@dataclass
class DenseLayer:
    """Affine map x @ weight + bias."""

    weight: Tensor  # [in x out]
    bias: Tensor  # [out]

    @classmethod
    def create(cls, in_dim: int, out_dim: int, rng: np.random.Generator) -> "DenseLayer":
        return cls(
            weight=init_uniform(rng, (in_dim, out_dim), in_dim),
            bias=init_uniform(rng, (out_dim,), in_dim),
        )

    def apply(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.weight.shape[0]:
            raise ShapeError(
                f"dense layer expects width {self.weight.shape[0]}, got input shape {x.shape}"
            )
        return x @ self.weight + self.bias


@dataclass
class MhaBlock:
    """One multi-head self-attention block with residual + layer norm.

    An optional position-wise feed-forward sublayer (also residual + norm)
    can be enabled at construction; it is off by default.
    """

    num_heads: int
    model_dim: int
    w_q: list[Tensor]  # per head, [d_m x d_k]
    w_k: list[Tensor]
    w_v: list[Tensor]
    w_o: Tensor  # [d_m x d_m]
    ln_gain: Tensor  # [d_m]
    ln_bias: Tensor  # [d_m]
    feed_forward: "FeedForward | None" = None
    use_residual_norm: bool = True

    @classmethod
    def create(
        cls,
        num_heads: int,
        model_dim: int,
        rng: np.random.Generator,
        feed_forward: bool = False,
        use_residual_norm: bool = True,
    ) -> "MhaBlock":
        if num_heads < 1:
            raise ConfigError(f"num_heads must be positive, got {num_heads}")
        if model_dim % num_heads != 0:
            raise ConfigError(
                f"model_dim {model_dim} is not divisible by num_heads {num_heads}"
            )
        d_k = model_dim // num_heads
        return cls(
            num_heads=num_heads,
            model_dim=model_dim,
            w_q=[init_uniform(rng, (model_dim, d_k), model_dim) for _ in range(num_heads)],
            w_k=[init_uniform(rng, (model_dim, d_k), model_dim) for _ in range(num_heads)],
            w_v=[init_uniform(rng, (model_dim, d_k), model_dim) for _ in range(num_heads)],
            w_o=init_uniform(rng, (model_dim, model_dim), model_dim),
            ln_gain=Tensor(np.ones(model_dim), requires_grad=True),
            ln_bias=Tensor(np.zeros(model_dim), requires_grad=True),
            feed_forward=FeedForward.create(model_dim, rng) if feed_forward else None,
            use_residual_norm=use_residual_norm,
        )


@dataclass
class FeedForward:
    """Position-wise two-layer ReLU network with its own residual + norm."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    ln_gain: Tensor
    ln_bias: Tensor

    @classmethod
    def create(cls, model_dim: int, rng: np.random.Generator, hidden: int | None = None) -> "FeedForward":
        hidden = hidden or 2 * model_dim
        return cls(
            w1=init_uniform(rng, (model_dim, hidden), model_dim),
            b1=init_uniform(rng, (hidden,), model_dim),
            w2=init_uniform(rng, (hidden, model_dim), hidden),
            b2=init_uniform(rng, (model_dim,), hidden),
            ln_gain=Tensor(np.ones(model_dim), requires_grad=True),
            ln_bias=Tensor(np.zeros(model_dim), requires_grad=True),
        )


@dataclass
class PositionAttention:
    """Learned context vector scoring sequence positions."""

    context: Tensor  # [d_m]

    @classmethod
    def create(cls, model_dim: int, rng: np.random.Generator) -> "PositionAttention":
        return cls(context=init_uniform(rng, (model_dim,), model_dim))


@dataclass
class Conv1dLayer:
    """1-D convolution filters acting as n-gram detectors over row windows."""

    num_filters: int
    kernel_width: int
    filters: Tensor  # [num_filters x kernel_width x d_m]
    biases: Tensor  # [num_filters]

    @classmethod
    def create(
        cls, num_filters: int, kernel_width: int, model_dim: int, rng: np.random.Generator
    ) -> "Conv1dLayer":
        fan_in = kernel_width * model_dim
        return cls(
            num_filters=num_filters,
            kernel_width=kernel_width,
            filters=init_uniform(rng, (num_filters, kernel_width, model_dim), fan_in),
            biases=init_uniform(rng, (num_filters,), fan_in),
        )


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor) -> tuple[Tensor, np.ndarray]:
    """softmax(q k^T / sqrt(d_k)) v, returning the output and the weight matrix."""
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(f"query/key width mismatch: {q.shape} vs {k.shape}")
    if k.shape[0] != v.shape[0]:
        raise ShapeError(f"key/value length mismatch: {k.shape} vs {v.shape}")
    d_k = q.shape[-1]
    weights = ((q @ k.T) * (1.0 / np.sqrt(d_k))).softmax()
    return weights @ v, weights.data.copy()


def _mha_attention(x: Tensor, block: MhaBlock) -> tuple[Tensor, list[np.ndarray]]:
    """Per-head attention on projected inputs, concatenated and re-projected."""
    head_outputs = []
    head_weights = []
    for h in range(block.num_heads):
        out, w = scaled_dot_attention(
            x @ block.w_q[h], x @ block.w_k[h], x @ block.w_v[h]
        )
        head_outputs.append(out)
        head_weights.append(w)
    merged = head_outputs[0] if len(head_outputs) == 1 else concat(head_outputs, axis=1)
    return merged @ block.w_o, head_weights


def mha_forward(x: Tensor, block: MhaBlock) -> tuple[Tensor, list[np.ndarray]]:
    """One attention block: heads, output projection, residual, layer norm."""
    if x.shape[-1] != block.model_dim:
        raise ShapeError(
            f"attention block expects width {block.model_dim}, got input shape {x.shape}"
        )
    attended, head_weights = _mha_attention(x, block)
    if not block.use_residual_norm:
        return attended, head_weights
    out = layer_norm(x + attended, block.ln_gain, block.ln_bias)
    ff = block.feed_forward
    if ff is not None:
        hidden = ((out @ ff.w1 + ff.b1).relu() @ ff.w2) + ff.b2
        out = layer_norm(out + hidden, ff.ln_gain, ff.ln_bias)
    return out, head_weights


def mha_stack(x: Tensor, blocks: list[MhaBlock]) -> tuple[Tensor, list[list[np.ndarray]]]:
    """Sequential attention blocks; attention weights retained per layer."""
    if not blocks:
        raise ConfigError("attention stack requires at least one layer")
    all_weights = []
    for block in blocks:
        x, head_weights = mha_forward(x, block)
        all_weights.append(head_weights)
    return x, all_weights


def sinusoid_table(length: int, dim: int) -> np.ndarray:
    """Sinusoidal position table: sin on even columns, cos on odd columns.

    Both members of a (2i, 2i+1) column pair share the frequency
    1/10000^(2i/dim).
    """
    positions = np.arange(length, dtype=np.float64)[:, None]
    pair_index = (np.arange(dim, dtype=np.float64) // 2) * 2.0
    angles = positions / np.power(10000.0, pair_index / dim)
    table = np.empty((length, dim))
    table[:, 0::2] = np.sin(angles[:, 0::2])
    table[:, 1::2] = np.cos(angles[:, 1::2])
    return table


def positional_encode(u: Tensor) -> Tensor:
    """Add the (input-independent) sinusoidal encoding to each row."""
    n, d = u.shape
    return u + Tensor(sinusoid_table(n, d))


def _attention_weights(scores: Tensor) -> tuple[Tensor, Tensor]:
    """Softmax weights over a score vector, plus the same weights times n.

    The rescaled vector is computed as exp/mean(exp) rather than n*softmax so
    that uniform scores yield exactly 1.0 per position (no 1/n roundoff).
    """
    shifted = scores.data - scores.data.max()
    exp = np.exp(shifted)
    total = exp.sum()
    alpha = exp / total
    rescaled = exp / (total / scores.data.size)

    def alpha_rule(g):
        scores._accumulate(alpha * (g - float((g * alpha).sum())))

    def rescaled_rule(g):
        scores._accumulate(rescaled * (g - float((g * alpha).sum())))

    return (
        Tensor._record(alpha, (scores,), alpha_rule),
        Tensor._record(rescaled, (scores,), rescaled_rule),
    )


def position_attention(x: Tensor, layer: PositionAttention) -> tuple[Tensor, Tensor]:
    """Score positions against the context vector; rescale rows by n * weight.

    Returns (weights, scaled rows). The n-rescale makes uniform attention the
    exact identity, so a zero context vector leaves the input unchanged.
    """
    n = x.shape[0]
    weights, rescaled = _attention_weights(x @ layer.context)
    scaled = x * rescaled.reshape(n, 1)
    return weights, scaled


def conv1d_maxpool(
    x: Tensor, layer: Conv1dLayer
) -> tuple[Tensor, list[tuple[int, int]]]:
    """Max over all valid windows of each filter's response.

    Returns the pooled feature vector [num_filters] and, per filter, the
    window start index that produced the max (lowest index on ties).
    """
    n = x.shape[0]
    k = layer.kernel_width
    if n < k:
        raise SequenceTooShortError(
            f"sequence of {n} rows is shorter than kernel width {k}"
        )
    d = x.shape[1]
    stacked = x.windows(k)  # [n-k+1 x k*d]
    flat_filters = layer.filters.reshape(layer.num_filters, k * d).T
    scores = stacked @ flat_filters + layer.biases  # [n-k+1 x num_filters]
    features, argmax = scores.max(axis=0)
    captures = [(j, int(argmax[j])) for j in range(layer.num_filters)]
    return features, captures


def classify_head(features: Tensor, head: DenseLayer) -> Tensor:
    """Dense layer followed by softmax over the two classes."""
    return head.apply(features).softmax()
