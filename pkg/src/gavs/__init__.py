"""Audio-prompted sounding-object segmentation on synthetic scenes.

A prompt token set built from audio (plus visual cues and learnable noise)
steers a small promptable segmentation model: a patch-transformer visual
encoder feeding a two-way token/visual decoder with bottleneck-adapter
tuning, trained with a pixel BCE plus a cross-modal triplet objective, and
evaluated under zero-/few-shot class splits.
"""

__version__ = "0.1.0"

from .tensor import Parameter, Tensor, no_grad, set_check_finite

__all__ = ["Parameter", "Tensor", "no_grad", "set_check_finite", "__version__"]
