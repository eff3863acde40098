"""Visual and audio encoders.

The visual side is a small patch transformer producing a feature field of
shape (d_v, H, W) per frame, with optional zero-initialized bottleneck
adapters after each MLP sublayer so the backbone can stay frozen while the
adapters learn. The audio side is a two-layer MLP mapping the synthetic
per-frame audio vector to the shared audio feature dimension d_m.
"""

from __future__ import annotations

import numpy as np

from .config import ConfigError, EncoderConfig
from .nn import MLP, Attention, BottleneckAdapter, LayerNorm, Linear, Module
from .tensor import ContractError, Tensor


def global_average_pool(feature_field: Tensor) -> Tensor:
    """Spatial mean of a (d, H, W) field, one value per channel."""
    return feature_field.mean(axis=(1, 2))


class TransformerBlock(Module):
    """Pre-norm attention + MLP block with an adapter on the MLP output."""

    def __init__(self, dim, n_heads, mlp_ratio, adapter_dim, rng):
        self.ln1 = LayerNorm(dim)
        self.attn = Attention(dim, n_heads, rng)
        self.ln2 = LayerNorm(dim)
        self.mlp = MLP([dim, dim * mlp_ratio, dim], rng, activation="gelu")
        self.adapter = BottleneckAdapter(dim, adapter_dim, rng)

    def __call__(self, x: Tensor, adapters_enabled: bool) -> Tensor:
        h = self.ln1(x)
        x = x + self.attn(h, h)
        m = self.mlp(self.ln2(x))
        if adapters_enabled:
            m = self.adapter(m)
        return x + m


class VisualEncoder(Module):
    """Patch transformer over a single frame, output field (d_v, H, W)."""

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        if cfg.image_size % cfg.patch_size != 0:
            raise ConfigError(
                f"image_size {cfg.image_size} not divisible by patch_size {cfg.patch_size}"
            )
        self.cfg = cfg
        grid = cfg.grid
        patch_dim = 3 * cfg.patch_size * cfg.patch_size
        self.patch_embed = Linear(patch_dim, cfg.d_v, rng)
        from .tensor import Parameter

        self.pos_embed = Parameter(rng.normal(0.0, 0.02, size=(grid * grid, cfg.d_v)))
        self.blocks = [
            TransformerBlock(cfg.d_v, cfg.n_heads, cfg.mlp_ratio, cfg.adapter_dim, rng)
            for _ in range(cfg.n_layers)
        ]
        self.ln_out = LayerNorm(cfg.d_v)

    def _patchify(self, frame: Tensor) -> Tensor:
        p = self.cfg.patch_size
        grid = self.cfg.grid
        x = frame.reshape(3, grid, p, grid, p)
        x = x.transpose(1, 3, 0, 2, 4)
        return x.reshape(grid * grid, 3 * p * p)

    def encode_image(self, frame: Tensor) -> Tensor:
        """One frame (3, H_img, W_img) in [0,1] -> feature field (d_v, H, W)."""
        if frame.shape != (3, self.cfg.image_size, self.cfg.image_size):
            raise ContractError(
                f"frame shape {frame.shape} does not match configured "
                f"(3, {self.cfg.image_size}, {self.cfg.image_size})"
            )
        tokens = self.patch_embed(self._patchify(frame)) + self.pos_embed
        for block in self.blocks:
            tokens = block(tokens, self.cfg.adapters_enabled)
        tokens = self.ln_out(tokens)
        grid = self.cfg.grid
        return tokens.transpose(1, 0).reshape(self.cfg.d_v, grid, grid)

    def encode_frames(self, frames) -> list[Tensor]:
        """Frame-wise encoding of a (T, 3, H_img, W_img) clip."""
        out = []
        for t in range(frames.shape[0]):
            frame = frames[t] if isinstance(frames, Tensor) else Tensor(frames[t])
            out.append(self.encode_image(frame))
        return out


class AudioEncoder(Module):
    """Two-layer MLP from the raw audio vector to the d_m feature space."""

    def __init__(self, d_in, hidden, d_m, rng):
        self.d_in = d_in
        self.mlp = MLP([d_in, hidden, d_m], rng, activation="gelu")

    def encode_clip(self, clip) -> Tensor:
        """(T, d_in) audio rows -> (T, d_m) features, row i per frame i."""
        x = clip if isinstance(clip, Tensor) else Tensor(clip)
        if x.ndim != 2 or x.shape[1] != self.d_in:
            raise ContractError(
                f"audio clip shape {x.shape} does not match (T, {self.d_in})"
            )
        return self.mlp(x)

    def encode_frame(self, audio) -> Tensor:
        x = audio if isinstance(audio, Tensor) else Tensor(audio)
        if x.shape != (self.d_in,):
            raise ContractError(f"audio vector shape {x.shape} != ({self.d_in},)")
        return self.mlp(x)
