"""Toy transformer weights.

Private weights (embedding, dense layers and their biases) stay with P0.
Layer-norm affine weights and positional embeddings are public.
"""

from dataclasses import dataclass

import numpy as np

from .config import ModelConfig

WEIGHT_STD = 0.02


@dataclass
class LayerParams:
    w_qkv: np.ndarray
    b_qkv: np.ndarray
    w_o: np.ndarray
    b_o: np.ndarray
    w_1: np.ndarray
    b_1: np.ndarray
    w_2: np.ndarray
    b_2: np.ndarray

    def dense(self):
        """Fixed-operand weights by site name."""
        return {"qkv": self.w_qkv, "o": self.w_o, "ffn1": self.w_1, "ffn2": self.w_2}

    def bias(self):
        return {"qkv": self.b_qkv, "o": self.b_o, "ffn1": self.b_1, "ffn2": self.b_2}


@dataclass
class PublicParams:
    """What P1 is allowed to see of the model."""

    pos: np.ndarray          # (max_seq, d)
    ln1_gamma: np.ndarray    # (L, d)
    ln1_beta: np.ndarray
    ln2_gamma: np.ndarray
    ln2_beta: np.ndarray

    def pack(self):
        return np.concatenate([self.pos.ravel(), self.ln1_gamma.ravel(), self.ln1_beta.ravel(),
                               self.ln2_gamma.ravel(), self.ln2_beta.ravel()])

    @classmethod
    def unpack(cls, flat, cfg: ModelConfig):
        flat = np.asarray(flat, dtype=np.float32)
        n_pos = cfg.max_seq * cfg.d_model
        ln = cfg.n_layers * cfg.d_model
        parts = np.split(flat, [n_pos, n_pos + ln, n_pos + 2 * ln, n_pos + 3 * ln])
        shape = (cfg.n_layers, cfg.d_model)
        return cls(parts[0].reshape(cfg.max_seq, cfg.d_model), *(p.reshape(shape) for p in parts[1:]))


@dataclass
class ModelParams:
    config: ModelConfig
    embedding: np.ndarray    # (N, d); also the output projection
    layers: list
    public: PublicParams


def sinusoidal_positions(n_pos, d):
    pos = np.arange(n_pos)[:, None]
    i = np.arange(d // 2)[None, :]
    angle = pos / np.power(10000.0, 2 * i / d)
    out = np.zeros((n_pos, d))
    out[:, 0::2] = np.sin(angle)
    out[:, 1::2] = np.cos(angle[:, : d - d // 2])
    return out.astype(np.float32)


def gen_toy_model(config: ModelConfig, seed=None) -> ModelParams:
    """Gaussian(0, 0.02) weights and biases, unit LN scale, zero LN shift."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    d, f, L = config.d_model, config.d_ffn, config.n_layers

    def w(*shape):
        return rng.standard_normal(shape, dtype=np.float32) * np.float32(WEIGHT_STD)

    emb = w(config.n_vocab, d)
    layers = [LayerParams(w(d, 3 * d), w(3 * d), w(d, d), w(d), w(d, f), w(f), w(f, d), w(d))
              for _ in range(L)]
    ones, zeros = np.ones((L, d), np.float32), np.zeros((L, d), np.float32)
    public = PublicParams(sinusoidal_positions(config.max_seq, d), ones, zeros, ones.copy(), zeros.copy())
    return ModelParams(config, emb, layers, public)
