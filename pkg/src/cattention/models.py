"""The model graphs: a tag-count leg, an embedding leg, and a unified network
that joins both legs with a final attention layer.

Six variants share one structure: the three convolutional models pool leg
sequences with a 1-D CNN + max pool, and the three "attention-*" ablations
replace that penultimate CNN with a flat dense layer. Forward passes return
live probability tensors for training plus a detached trace of every
attention distribution and pooling capture for explanation.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ShapeError
from .features import PENN_TREEBANK_TAGS
from .layers import (
    Conv1dLayer,
    DenseLayer,
    MhaBlock,
    PositionAttention,
    classify_head,
    conv1d_maxpool,
    mha_stack,
    position_attention,
    positional_encode,
)
from .tensor import Tensor, concat

VARIANTS = (
    "c-attention-ft",
    "c-attention-embedding",
    "c-attention-unified",
    "attention-ft",
    "attention-embedding",
    "attention-unified",
)

N_TAGS = len(PENN_TREEBANK_TAGS)

CHECKPOINT_FORMAT = "cattention-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    """All architecture hyperparameters, with the published setup as defaults
    where one exists (6 attention layers, 17-utterance budget) and small
    desk-scale choices elsewhere."""

    variant: str = "c-attention-unified"
    num_heads: int = 2
    model_dim: int = 32
    mha_layers: int = 6
    num_filters: int = 16
    kernel_width: int = 3
    utterance_budget: int = 17
    embedding_dim: int = 64
    feed_forward: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(
                f"unknown model variant {self.variant!r}; expected one of {VARIANTS}"
            )
        for name in ("num_heads", "model_dim", "mha_layers", "num_filters",
                     "kernel_width", "utterance_budget", "embedding_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.model_dim % self.num_heads != 0:
            raise ConfigError(
                f"model_dim {self.model_dim} is not divisible by num_heads {self.num_heads}"
            )

    @property
    def uses_pos(self) -> bool:
        return self.variant.endswith("-ft") or self.variant.endswith("-unified")

    @property
    def uses_emb(self) -> bool:
        return self.variant.endswith("-embedding") or self.variant.endswith("-unified")

    @property
    def convolutional(self) -> bool:
        return self.variant.startswith("c-attention")


@dataclass
class LegOutput:
    """Detached per-leg trace: pooled features, the position-attention
    distribution, every attention block's head weights, and the max-pool
    capture windows (empty for dense-penultimate variants)."""

    feature_vector: np.ndarray
    position_weights: np.ndarray
    mha_weights: list[list[np.ndarray]]
    captures: list[tuple[int, int]]
    kernel_width: int | None = None


@dataclass
class UnifiedTrace:
    pos_leg: LegOutput
    emb_leg: LegOutput
    leg_weights: np.ndarray  # [pos weight, emb weight]
    probabilities: np.ndarray


class Leg:
    """Input projection -> (optional positional encoding) -> attention stack
    -> position attention -> pooled feature vector."""

    def __init__(
        self,
        input_width: int,
        seq_len: int,
        config: ModelConfig,
        rng: np.random.Generator,
        positional: bool,
        with_head: bool,
    ):
        if config.convolutional and config.kernel_width > seq_len:
            raise ConfigError(
                f"kernel_width {config.kernel_width} exceeds sequence length {seq_len}"
            )
        self.seq_len = seq_len
        self.positional = positional
        self.input_proj = DenseLayer.create(input_width, config.model_dim, rng)
        self.blocks = [
            MhaBlock.create(
                config.num_heads, config.model_dim, rng, feed_forward=config.feed_forward
            )
            for _ in range(config.mha_layers)
        ]
        self.attention = PositionAttention.create(config.model_dim, rng)
        if config.convolutional:
            self.conv = Conv1dLayer.create(
                config.num_filters, config.kernel_width, config.model_dim, rng
            )
            self.penultimate = None
        else:
            self.conv = None
            self.penultimate = DenseLayer.create(
                seq_len * config.model_dim, config.num_filters, rng
            )
        self.head = DenseLayer.create(config.num_filters, 2, rng) if with_head else None

    def features(self, x: Tensor) -> tuple[Tensor, LegOutput]:
        h = self.input_proj.apply(x)
        if self.positional:
            h = positional_encode(h)
        h, mha_weights = mha_stack(h, self.blocks)
        weights, scaled = position_attention(h, self.attention)
        if self.conv is not None:
            feats, captures = conv1d_maxpool(scaled, self.conv)
            kernel = self.conv.kernel_width
        else:
            feats = self.penultimate.apply(scaled.reshape(self.seq_len * scaled.shape[1]))
            captures = []
            kernel = None
        trace = LegOutput(
            feature_vector=feats.data.copy(),
            position_weights=weights.data.copy(),
            mha_weights=mha_weights,
            captures=captures,
            kernel_width=kernel,
        )
        return feats, trace

    def named_parameters(self, prefix: str) -> list[tuple[str, Tensor]]:
        out = [
            (f"{prefix}.input_proj.weight", self.input_proj.weight),
            (f"{prefix}.input_proj.bias", self.input_proj.bias),
        ]
        for i, block in enumerate(self.blocks):
            for h in range(block.num_heads):
                out.append((f"{prefix}.block{i}.head{h}.w_q", block.w_q[h]))
                out.append((f"{prefix}.block{i}.head{h}.w_k", block.w_k[h]))
                out.append((f"{prefix}.block{i}.head{h}.w_v", block.w_v[h]))
            out.append((f"{prefix}.block{i}.w_o", block.w_o))
            out.append((f"{prefix}.block{i}.ln_gain", block.ln_gain))
            out.append((f"{prefix}.block{i}.ln_bias", block.ln_bias))
            if block.feed_forward is not None:
                ff = block.feed_forward
                out.extend(
                    (f"{prefix}.block{i}.ff.{name}", tensor)
                    for name, tensor in [
                        ("w1", ff.w1), ("b1", ff.b1), ("w2", ff.w2), ("b2", ff.b2),
                        ("ln_gain", ff.ln_gain), ("ln_bias", ff.ln_bias),
                    ]
                )
        out.append((f"{prefix}.attention.context", self.attention.context))
        if self.conv is not None:
            out.append((f"{prefix}.conv.filters", self.conv.filters))
            out.append((f"{prefix}.conv.biases", self.conv.biases))
        else:
            out.append((f"{prefix}.penultimate.weight", self.penultimate.weight))
            out.append((f"{prefix}.penultimate.bias", self.penultimate.bias))
        if self.head is not None:
            out.append((f"{prefix}.head.weight", self.head.weight))
            out.append((f"{prefix}.head.bias", self.head.bias))
        return out


class CAttentionModel:
    """One of the six variants, with seeded parameter initialization."""

    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        unified = config.uses_pos and config.uses_emb
        self.pos_leg = (
            Leg(
                input_width=config.utterance_budget,
                seq_len=N_TAGS,
                config=config,
                rng=rng,
                positional=False,
                with_head=not unified,
            )
            if config.uses_pos
            else None
        )
        self.emb_leg = (
            Leg(
                input_width=config.embedding_dim,
                seq_len=config.utterance_budget,
                config=config,
                rng=rng,
                positional=True,
                with_head=not unified,
            )
            if config.uses_emb
            else None
        )
        if unified:
            self.leg_attention = PositionAttention.create(config.num_filters, rng)
            self.output = DenseLayer.create(config.num_filters, 2, rng)
        else:
            self.leg_attention = None
            self.output = None

    @property
    def unified(self) -> bool:
        return self.leg_attention is not None

    def forward(
        self, pos_matrix: np.ndarray | None = None, emb_matrix: np.ndarray | None = None
    ) -> tuple[Tensor, LegOutput | UnifiedTrace]:
        if self.unified:
            return forward_unified(pos_matrix, emb_matrix, self)
        if self.config.uses_pos:
            return forward_ft(pos_matrix, self)
        return forward_embedding(emb_matrix, self)

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        if self.pos_leg is not None:
            out.extend(self.pos_leg.named_parameters("pos_leg"))
        if self.emb_leg is not None:
            out.extend(self.emb_leg.named_parameters("emb_leg"))
        if self.unified:
            out.append(("leg_attention.context", self.leg_attention.context))
            out.append(("output.weight", self.output.weight))
            out.append(("output.bias", self.output.bias))
        return out

    def parameters(self) -> list[Tensor]:
        return [tensor for _, tensor in self.named_parameters()]

    def parameter_state(self) -> dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self.named_parameters()}

    def load_parameter_state(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        if set(state) != set(params):
            missing = sorted(set(params) - set(state))
            extra = sorted(set(state) - set(params))
            raise ConfigError(f"parameter name mismatch: missing {missing}, extra {extra}")
        for name, values in state.items():
            tensor = params[name]
            values = np.asarray(values, dtype=np.float64)
            if values.shape != tensor.data.shape:
                raise ShapeError(
                    f"parameter {name} has shape {values.shape}, expected {tensor.data.shape}"
                )
            tensor.data = values.copy()


def _check_pos_shape(pos_matrix: np.ndarray, config: ModelConfig) -> np.ndarray:
    pos_matrix = np.asarray(pos_matrix, dtype=np.float64)
    expected = (N_TAGS, config.utterance_budget)
    if pos_matrix.shape != expected:
        raise ShapeError(f"tag-count matrix has shape {pos_matrix.shape}, expected {expected}")
    return pos_matrix


def _check_emb_shape(emb_matrix: np.ndarray, config: ModelConfig) -> np.ndarray:
    emb_matrix = np.asarray(emb_matrix, dtype=np.float64)
    expected = (config.utterance_budget, config.embedding_dim)
    if emb_matrix.shape != expected:
        raise ShapeError(f"embedding matrix has shape {emb_matrix.shape}, expected {expected}")
    return emb_matrix


def forward_ft(pos_matrix: np.ndarray, model: CAttentionModel) -> tuple[Tensor, LegOutput]:
    """Classify from the tag-count matrix alone."""
    feats, trace = model.pos_leg.features(Tensor(_check_pos_shape(pos_matrix, model.config)))
    return classify_head(feats, model.pos_leg.head), trace


def forward_embedding(
    emb_matrix: np.ndarray, model: CAttentionModel
) -> tuple[Tensor, LegOutput]:
    """Classify from the utterance-embedding matrix alone."""
    feats, trace = model.emb_leg.features(Tensor(_check_emb_shape(emb_matrix, model.config)))
    return classify_head(feats, model.emb_leg.head), trace


def forward_unified(
    pos_matrix: np.ndarray, emb_matrix: np.ndarray, model: CAttentionModel
) -> tuple[Tensor, UnifiedTrace]:
    """Run both legs to their pooled features, weight the legs with a
    2-position attention layer, and classify the weighted combination."""
    m = model.config.num_filters
    v_pos, pos_trace = model.pos_leg.features(Tensor(_check_pos_shape(pos_matrix, model.config)))
    v_emb, emb_trace = model.emb_leg.features(Tensor(_check_emb_shape(emb_matrix, model.config)))
    stacked = concat([v_pos.reshape(1, m), v_emb.reshape(1, m)], axis=0)
    leg_weights, scaled = position_attention(stacked, model.leg_attention)
    # mean of the n-rescaled rows == sum of weight_i * row_i
    combined = scaled.mean(axis=0)
    probs = classify_head(combined, model.output)
    trace = UnifiedTrace(
        pos_leg=pos_trace,
        emb_leg=emb_trace,
        leg_weights=leg_weights.data.copy(),
        probabilities=probs.data.copy(),
    )
    return probs, trace


# -- checkpoints ---------------------------------------------------------------


def save_checkpoint(
    model: CAttentionModel, path: str | Path, metadata: dict | None = None
) -> None:
    """Write config + parameters as canonical JSON (value-exact round trip)."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "metadata": metadata or {},
        "parameters": {
            name: {"shape": list(tensor.data.shape), "values": tensor.data.reshape(-1).tolist()}
            for name, tensor in model.named_parameters()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_checkpoint(path: str | Path) -> tuple[CAttentionModel, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"{path} is not a model checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {doc.get('version')!r}")
    model = CAttentionModel(ModelConfig(**doc["config"]))
    state = {
        name: np.asarray(entry["values"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in doc["parameters"].items()
    }
    model.load_parameter_state(state)
    return model, doc.get("metadata", {})
