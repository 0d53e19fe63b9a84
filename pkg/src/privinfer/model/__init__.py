"""Toy transformer: plaintext reference and three-party inference."""

from .config import TOY, ModelConfig
from .params import LayerParams, ModelParams, PublicParams, gen_toy_model, sinusoidal_positions
from .plaintext import (MASK_VALUE, KVCache, calibrate, causal_mask, forward_step,
                        greedy_generate, plaintext_forward)
from .rounds import generation_rounds, layer_rounds
from .secure import (CONTEXT, SCORES, SecureModel, secure_embed, secure_generate, secure_layer_forward, secure_prepare,
                     secure_step, stage_layer, stage_step)

__all__ = [
    "CONTEXT", "KVCache", "LayerParams", "MASK_VALUE", "ModelConfig",
    "ModelParams", "PublicParams", "SCORES", "SecureModel", "TOY", "calibrate", "causal_mask",
    "forward_step", "gen_toy_model", "generation_rounds", "greedy_generate", "layer_rounds",
    "plaintext_forward", "secure_embed", "secure_generate", "secure_layer_forward",
    "secure_prepare", "secure_step", "sinusoidal_positions", "stage_layer", "stage_step",
]
