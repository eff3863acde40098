"""Audio source decoder: two-way token/visual transformer and mask head.

Each layer runs, in order: token self-attention, a residual cross-attention
of tokens over the visual field (producing the context state), the token
MLP with its correlation adapter applied residually, the key state as the
exact sum of context and adapted MLP output, and a residual cross-attention
of the visual field over that key state. Norms follow each residual stage;
the recorded context/key/visual intermediates are the pre-norm sums so the
residual structure stays exact.

The final visual output, reshaped back to (d_v, H, W), is the mask
embedding: two stride-2 transposed convolutions upscale it 4x, and the mask
logit at each pixel is the inner product of the upscaled channel vector
with the MLP-projected mask query token.

Tuning strategies select which decoder parameters train and which adapters
participate in the forward pass; adapters are zero-initialized, so an
inactive adapter and an active untrained one produce identical outputs.
"""

from __future__ import annotations

from enum import Enum

from .nn import MLP, Attention, BottleneckAdapter, LayerNorm, Module
from .sap import MASK_QUERY_SLOT, N_PROMPT_TOKENS
from .tensor import Parameter, ShapeError, Tensor, conv_transpose2d, gelu, matmul

import numpy as np


class TuningStrategy(str, Enum):
    FREEZE = "freeze"
    FINE_TUNE = "finetune"
    AV_ADAPTER = "av_adapter"
    VA_ADAPTER = "va_adapter"
    COLA = "cola"
    COLA_AV_VA = "cola_av_va"

    @property
    def active_adapters(self) -> frozenset:
        return _ACTIVE_ADAPTERS[self]


_ACTIVE_ADAPTERS = {
    TuningStrategy.FREEZE: frozenset(),
    TuningStrategy.FINE_TUNE: frozenset(),
    TuningStrategy.AV_ADAPTER: frozenset({"av"}),
    TuningStrategy.VA_ADAPTER: frozenset({"va"}),
    TuningStrategy.COLA: frozenset({"cola"}),
    TuningStrategy.COLA_AV_VA: frozenset({"cola", "av", "va"}),
}


class FusionMode(str, Enum):
    AUDIO_PROMPT = "audio_prompt"
    AV_FUSION = "av_fusion"


def cross_modal_attention(attn: Attention, query_set: Tensor, kv_set: Tensor) -> Tensor:
    """Multi-head attention of one modality's tokens over the other's."""
    return attn(query_set, kv_set)


def mask_embedding_feedback(mask_embedding: Tensor, feature_field: Tensor) -> Tensor:
    """Add the decoder's mask embedding back onto the visual field."""
    if mask_embedding.shape != feature_field.shape:
        raise ShapeError(
            f"mask embedding shape {mask_embedding.shape} does not match "
            f"visual field {feature_field.shape}"
        )
    return feature_field + mask_embedding


class DecoderLayer(Module):
    def __init__(self, dim, n_heads, mlp_ratio, cola_rank, adapter_rank, rng):
        self.self_attn = Attention(dim, n_heads, rng)
        self.ln_self = LayerNorm(dim)
        self.cma_av = Attention(dim, n_heads, rng)
        self.av_adapter = BottleneckAdapter(dim, adapter_rank, rng)
        self.ln_av = LayerNorm(dim)
        self.mlp = MLP([dim, dim * mlp_ratio, dim], rng, activation="gelu")
        self.cola = BottleneckAdapter(dim, cola_rank, rng)
        self.ln_mlp = LayerNorm(dim)
        self.cma_va = Attention(dim, n_heads, rng)
        self.va_adapter = BottleneckAdapter(dim, adapter_rank, rng)
        self.ln_va = LayerNorm(dim)

    def cola_forward(self, h: Tensor) -> Tensor:
        """Correlation-adapter correction term for the token MLP output."""
        return self.cola.delta(h)

    def __call__(self, tokens: Tensor, visual: Tensor, active: frozenset):
        """One two-way pass. Returns (tokens', visual', intermediates)."""
        t = self.ln_self(tokens + self.self_attn(tokens, tokens))

        av_out = self.cma_av(t, visual)
        if "av" in active:
            av_out = av_out + self.av_adapter.delta(av_out)
        context = t + av_out

        m = self.mlp(self.ln_av(context))
        updated = (self.cola_forward(m) + m) if "cola" in active else m

        key_state = context + updated
        tokens_next = self.ln_mlp(key_state)

        va_out = self.cma_va(visual, key_state)
        if "va" in active:
            va_out = va_out + self.va_adapter.delta(va_out)
        visual_out = visual + va_out
        visual_next = self.ln_va(visual_out)

        intermediates = {
            "tokens_after_self": t,
            "context": context,
            "updated_tokens": updated,
            "key_state": key_state,
            "visual_out": visual_out,
        }
        return tokens_next, visual_next, intermediates


class AudioSourceDecoder(Module):
    """Stack of two-way layers plus the upscale/mask-prediction head."""

    def __init__(self, d_v, grid, n_layers, n_heads, mlp_ratio, cola_rank, adapter_rank, rng):
        if d_v % 8 != 0:
            raise ShapeError(f"d_v {d_v} must be divisible by 8 for the upscaling path")
        self.d_v = d_v
        self.grid = grid
        self.pos_embed = Parameter(rng.normal(0.0, 0.02, size=(grid * grid, d_v)))
        self.layers = [
            DecoderLayer(d_v, n_heads, mlp_ratio, cola_rank, adapter_rank, rng)
            for _ in range(n_layers)
        ]
        c1, c2 = d_v // 4, d_v // 8
        k = 1.0 / np.sqrt(d_v * 4.0)
        self.up1_kernel = Parameter(rng.uniform(-k, k, size=(d_v, c1, 2, 2)))
        self.up1_bias = Parameter(np.zeros((c1, 1, 1)))
        k2 = 1.0 / np.sqrt(c1 * 4.0)
        self.up2_kernel = Parameter(rng.uniform(-k2, k2, size=(c1, c2, 2, 2)))
        self.up2_bias = Parameter(np.zeros((c2, 1, 1)))
        self.mask_mlp = MLP([d_v, d_v, c2], rng, activation="gelu")

    def run_layers(self, prompt_tokens: Tensor, feature_field: Tensor, active: frozenset):
        """Thread tokens and the flattened visual field through all layers."""
        if prompt_tokens.shape != (N_PROMPT_TOKENS, self.d_v):
            raise ShapeError(
                f"prompt tokens shape {prompt_tokens.shape} != ({N_PROMPT_TOKENS}, {self.d_v})"
            )
        hw = self.grid * self.grid
        visual = feature_field.reshape(self.d_v, hw).transpose(1, 0) + self.pos_embed
        tokens = prompt_tokens
        records = []
        for layer in self.layers:
            tokens, visual, inter = layer(tokens, visual, active)
            records.append(inter)
        mask_embedding = visual.transpose(1, 0).reshape(self.d_v, self.grid, self.grid)
        return tokens, mask_embedding, records

    def upscale_mask_embedding(self, mask_embedding: Tensor) -> Tensor:
        """(d_v, H, W) -> (d_v/8, 4H, 4W) via two stride-2 transposed convs."""
        h = conv_transpose2d(mask_embedding, self.up1_kernel) + self.up1_bias
        h = gelu(h)
        return conv_transpose2d(h, self.up2_kernel) + self.up2_bias

    def predict_mask(self, upscaled: Tensor, tokens: Tensor) -> Tensor:
        """Per-pixel inner product of upscaled channels with the mask query."""
        c, h4, w4 = upscaled.shape
        query = self.mask_mlp(tokens[MASK_QUERY_SLOT]).reshape(1, c)
        logits = matmul(query, upscaled.reshape(c, h4 * w4))
        return logits.reshape(h4, w4)

    def __call__(self, prompt_tokens: Tensor, feature_field: Tensor, active: frozenset):
        """Full decode: returns (mask logits 4Hx4W, mask embedding, records)."""
        tokens, mask_embedding, records = self.run_layers(
            prompt_tokens, feature_field, active
        )
        upscaled = self.upscale_mask_embedding(mask_embedding)
        logits = self.predict_mask(upscaled, tokens)
        return logits, mask_embedding, records
