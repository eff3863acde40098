"""Semantic-aware audio prompt construction.

The prompt fed to the decoder is a 6-token matrix with fixed slot roles.
Its source vector concatenates three segments in a fixed order: visual cues
(a pooled, MLP-projected summary of the frame), a learnable noise vector,
and the audio feature. A single affine projection maps that vector to the
six token slots. Disabling the prompt enrichment shrinks the projection
input to the bare audio feature; it never zero-pads.
"""

from __future__ import annotations

import numpy as np

from .config import EncoderConfig, SapConfig
from .encoders import global_average_pool
from .nn import MLP, Linear, Module
from .tensor import Parameter, ShapeError, Tensor, concat

N_PROMPT_TOKENS = 6
IOU_SLOT = 0
QUERY_SLOTS = (1, 2, 3, 4)
PROMPT_SLOT = 5
MASK_QUERY_SLOT = 1  # the query token the mask head reads


def assemble_sap(visual_cues: Tensor, noise: Tensor, audio: Tensor) -> Tensor:
    """Concatenate [cues; noise; audio] into the prompt source vector."""
    for label, seg in (("visual_cues", visual_cues), ("noise", noise), ("audio", audio)):
        if seg.ndim != 1:
            raise ShapeError(f"sap segment {label} must be 1D, got shape {seg.shape}")
    if visual_cues.shape != audio.shape:
        raise ShapeError(
            f"sap segment visual_cues has dim {visual_cues.shape[0]} but audio has "
            f"dim {audio.shape[0]}; they must share d_m"
        )
    return concat([visual_cues, noise, audio], axis=0)


class AudioPrompter(Module):
    """Builds prompt tokens (6, d_v) from a frame's features and audio."""

    def __init__(self, enc_cfg: EncoderConfig, sap_cfg: SapConfig, rng):
        self.d_v = enc_cfg.d_v
        self.d_m = enc_cfg.d_m
        self.d_n = sap_cfg.d_n
        self.enabled = sap_cfg.enabled
        self.cue_mlp = MLP([enc_cfg.d_v, enc_cfg.d_v, enc_cfg.d_m], rng, activation="gelu")
        if sap_cfg.noise_init == "zeros":
            noise = np.zeros(sap_cfg.d_n)
        else:
            noise = rng.uniform(-0.02, 0.02, size=sap_cfg.d_n)
        self.noise = Parameter(noise)
        in_dim = 2 * enc_cfg.d_m + sap_cfg.d_n if self.enabled else enc_cfg.d_m
        self.proj = Linear(in_dim, N_PROMPT_TOKENS * enc_cfg.d_v, rng)

    def build_visual_cues(self, feature_field: Tensor) -> Tensor:
        """Pooled frame summary projected to the audio dimension d_m."""
        return self.cue_mlp(global_average_pool(feature_field))

    def prompt_source(self, feature_field: Tensor, audio_feature: Tensor) -> Tensor:
        if not self.enabled:
            return audio_feature
        cues = self.build_visual_cues(feature_field)
        return assemble_sap(cues, self.noise, audio_feature)

    def project_prompt(self, source: Tensor) -> Tensor:
        """Affine map of the prompt source to the fixed 6-slot token matrix."""
        expected = 2 * self.d_m + self.d_n if self.enabled else self.d_m
        if source.shape != (expected,):
            raise ShapeError(
                f"prompt source has shape {source.shape}, expected ({expected},)"
            )
        return self.proj(source).reshape(N_PROMPT_TOKENS, self.d_v)

    def prompt_tokens(self, feature_field: Tensor, audio_feature: Tensor) -> Tensor:
        return self.project_prompt(self.prompt_source(feature_field, audio_feature))
